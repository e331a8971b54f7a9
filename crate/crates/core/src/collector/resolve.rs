use std::collections::HashMap;

use serde_json::Value;

use super::{endpoints, fetch_all_pages, str_field, AppIdentity, CollectError, GraphError, GraphTransport, RetryPolicy};

#[derive(Debug, Clone)]
struct SpInfo {
    app_id: String,
    display_name: String,
    publisher: Option<String>,
}

impl SpInfo {
    fn from_value(sp: &Value) -> Option<Self> {
        Some(Self {
            app_id: str_field(sp, "appId")?,
            display_name: str_field(sp, "displayName").unwrap_or_default(),
            publisher: str_field(sp, "publisherName"),
        })
    }
}

/// Maps service principal ids to application identities and decides tenant
/// ownership. Everything learned is kept for the rest of the run.
#[derive(Debug, Default)]
pub struct ExternalAppResolver {
    sps: HashMap<String, SpInfo>,
    owned: HashMap<String, bool>,
    resolved: HashMap<String, AppIdentity>,
}

impl ExternalAppResolver {
    pub fn new() -> Self {
        Self::default()
    }

    /// Record an app id already known to be registered in this tenant.
    pub fn mark_tenant_owned(&mut self, app_id: &str) {
        self.owned.insert(app_id.to_lowercase(), true);
    }

    /// Remember a service principal seen in a listing so resolving it does
    /// not need its own request.
    pub fn seed_from_listing(&mut self, sp: &Value) {
        if let (Some(id), Some(info)) = (str_field(sp, "id"), SpInfo::from_value(sp)) {
            self.sps.entry(id.to_lowercase()).or_insert(info);
        }
    }

    pub fn cached(&self) -> usize {
        self.resolved.len()
    }

    pub fn resolve(
        &mut self,
        sp_id: &str,
        transport: &dyn GraphTransport,
        retry: &RetryPolicy,
    ) -> Result<AppIdentity, CollectError> {
        let key = sp_id.to_lowercase();
        if let Some(hit) = self.resolved.get(&key) {
            return Ok(hit.clone());
        }
        let info = match self.sps.get(&key) {
            Some(i) => i.clone(),
            None => {
                let url = endpoints::service_principal(sp_id);
                let sp = match transport.get(&url) {
                    Ok(v) => v,
                    Err(GraphError::Status { status: 404, .. }) => {
                        return Err(CollectError::UnknownServicePrincipal(sp_id.to_string()))
                    }
                    Err(source) => return Err(CollectError::Fetch { url, source }),
                };
                let info = SpInfo::from_value(&sp)
                    .ok_or_else(|| CollectError::UnknownServicePrincipal(sp_id.to_string()))?;
                self.sps.insert(key.clone(), info.clone());
                info
            }
        };
        let app_key = info.app_id.to_lowercase();
        let tenant_owned = match self.owned.get(&app_key) {
            Some(&b) => b,
            None => {
                let hits = fetch_all_pages(transport, &endpoints::applications_by_app_id(&info.app_id), retry)?;
                let owned = !hits.items.is_empty();
                self.owned.insert(app_key, owned);
                owned
            }
        };
        let identity = AppIdentity {
            service_principal_id: sp_id.to_string(),
            app_id: info.app_id,
            display_name: info.display_name,
            publisher_domain: info.publisher,
            tenant_owned,
        };
        self.resolved.insert(key, identity.clone());
        Ok(identity)
    }
}
