//! Consent collection from Microsoft Graph.

mod resolve;
mod transport;

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::thread;
use std::time::Duration;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;
use tracing::{debug, info, warn};

pub use resolve::ExternalAppResolver;
pub use transport::{
    redact, relative_url, GraphError, GraphTransport, HttpGraphTransport, MemoryTransport,
    RecordingTransport, ReplayTransport, GRAPH_BASE,
};

use crate::clock::Clock;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CollectError {
    #[error("fetching {url}: {source}")]
    Fetch {
        url: String,
        #[source]
        source: GraphError,
    },
    #[error("unknown service principal {0}")]
    UnknownServicePrincipal(String),
    #[error("unexpected Graph payload from {url}: {reason}")]
    Shape { url: String, reason: String },
}

/// Split a raw scope string on whitespace and commas, drop duplicates
/// (case-insensitively, first spelling wins) and sort case-insensitively.
pub fn normalize_scopes(raw: &str) -> Vec<String> {
    normalize_names(raw.split(|c: char| c.is_whitespace() || c == ','))
}

/// [`normalize_scopes`] over names that are already split.
pub fn normalize_names<I, S>(names: I) -> Vec<String>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let mut seen = HashSet::new();
    let mut out: Vec<String> = names
        .into_iter()
        .map(|s| s.as_ref().trim().to_string())
        .filter(|s| !s.is_empty() && seen.insert(s.to_lowercase()))
        .collect();
    out.sort_by(|a, b| a.to_lowercase().cmp(&b.to_lowercase()).then_with(|| a.cmp(b)));
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AppType {
    Internal,
    External,
}

impl AppType {
    pub fn as_str(self) -> &'static str {
        match self {
            AppType::Internal => "internal",
            AppType::External => "external",
        }
    }
}

impl fmt::Display for AppType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AppIdentity {
    pub service_principal_id: String,
    pub app_id: String,
    pub display_name: String,
    /// Publisher domain for tenant apps; the service principal's publisher
    /// name for external ones.
    pub publisher_domain: Option<String>,
    pub tenant_owned: bool,
}

/// Observed authorization state of one application.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AppConsentSnapshot {
    pub identity: AppIdentity,
    pub app_type: AppType,
    pub declared: Vec<String>,
    pub delegated_scopes: Vec<String>,
    pub app_roles: Vec<String>,
    pub consenting_users: Vec<String>,
    pub collected_at: DateTime<Utc>,
    /// Some Graph call for this app failed; sets may be partial.
    #[serde(default)]
    pub incomplete: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub errors: Vec<String>,
    /// Permission GUIDs that no resource schema could name.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub unresolved: Vec<String>,
}

impl AppConsentSnapshot {
    /// Granted permissions: delegated scopes plus app roles.
    pub fn permissions(&self) -> Vec<String> {
        normalize_names(self.delegated_scopes.iter().chain(&self.app_roles))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 5,
            base_delay: Duration::from_millis(500),
            max_delay: Duration::from_secs(60),
        }
    }
}

impl RetryPolicy {
    /// No sleeping; for tests and replay.
    pub fn immediate() -> Self {
        Self {
            base_delay: Duration::ZERO,
            max_delay: Duration::ZERO,
            ..Self::default()
        }
    }

    fn delay(&self, attempt: u32, hint: Option<Duration>) -> Duration {
        let exp = self.base_delay.saturating_mul(1u32 << attempt.min(16));
        hint.unwrap_or_default().max(exp).min(self.max_delay)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FetchOutcome {
    pub items: Vec<Value>,
    pub pages: usize,
    /// Pauses taken after transient failures.
    pub backoffs: Vec<Duration>,
}

/// Follow `@odata.nextLink` from `url`, concatenating every page's `value`.
pub fn fetch_all_pages(
    transport: &dyn GraphTransport,
    url: &str,
    retry: &RetryPolicy,
) -> Result<FetchOutcome, CollectError> {
    let mut out = FetchOutcome::default();
    let mut next = Some(url.to_string());
    while let Some(current) = next.take() {
        let mut attempt = 0;
        let page = loop {
            match transport.get(&current) {
                Ok(page) => break page,
                Err(e) if e.is_transient() && attempt < retry.max_retries => {
                    let hint = match &e {
                        GraphError::Throttled { retry_after } => *retry_after,
                        _ => None,
                    };
                    let pause = retry.delay(attempt, hint);
                    warn!(url = %current, attempt, ?pause, error = %e, "retrying Graph request");
                    out.backoffs.push(pause);
                    if !pause.is_zero() {
                        thread::sleep(pause);
                    }
                    attempt += 1;
                }
                Err(source) => {
                    return Err(CollectError::Fetch {
                        url: current,
                        source,
                    })
                }
            }
        };
        out.pages += 1;
        match page.get("value") {
            Some(Value::Array(items)) => out.items.extend(items.iter().cloned()),
            Some(_) => {
                return Err(CollectError::Shape {
                    url: current,
                    reason: "`value` is not an array".into(),
                })
            }
            None => {}
        }
        next = page
            .get("@odata.nextLink")
            .and_then(Value::as_str)
            .map(str::to_string);
    }
    Ok(out)
}

/// Graph paths used during collection.
pub mod endpoints {
    pub const INTERNAL_APPS: &str = "/applications?$filter=signInAudience eq 'AzureADMyOrg'";
    pub const SERVICE_PRINCIPALS: &str = "/servicePrincipals";
    pub const USERS: &str = "/users?$select=id,userPrincipalName";

    pub fn user_grants(user_id: &str) -> String {
        format!("/users/{user_id}/oauth2PermissionGrants")
    }

    pub fn client_grants(sp_id: &str) -> String {
        format!("/oauth2PermissionGrants?$filter=clientId eq '{sp_id}'")
    }

    pub fn app_role_assignments(sp_id: &str) -> String {
        format!("/servicePrincipals/{sp_id}/appRoleAssignments")
    }

    pub fn service_principal(sp_id: &str) -> String {
        format!("/servicePrincipals/{sp_id}")
    }

    pub fn service_principal_by_app_id(app_id: &str) -> String {
        format!("/servicePrincipals?$filter=appId eq '{app_id}'")
    }

    pub fn applications_by_app_id(app_id: &str) -> String {
        format!("/applications?$filter=appId eq '{app_id}'")
    }
}

fn str_field(v: &Value, key: &str) -> Option<String> {
    v.get(key).and_then(Value::as_str).map(str::to_string)
}

const DEFAULT_ACCESS_ROLE: &str = "00000000-0000-0000-0000-000000000000";

/// Scope and role names published by one resource service principal.
#[derive(Debug, Clone, Default)]
struct ResourceSchema {
    scopes: HashMap<String, String>,
    roles: HashMap<String, String>,
}

impl ResourceSchema {
    fn from_sp(sp: &Value) -> Self {
        let table = |key: &str| -> HashMap<String, String> {
            sp.get(key)
                .and_then(Value::as_array)
                .into_iter()
                .flatten()
                .filter_map(|e| Some((str_field(e, "id")?.to_lowercase(), str_field(e, "value")?)))
                .collect()
        };
        Self {
            scopes: table("oauth2PermissionScopes"),
            roles: table("appRoles"),
        }
    }
}

/// Per-app accumulation before a snapshot is frozen.
#[derive(Default)]
struct Gathered {
    declared: Vec<String>,
    delegated: Vec<String>,
    roles: Vec<String>,
    users: BTreeSet<String>,
    errors: Vec<String>,
    unresolved: BTreeSet<String>,
}

impl Gathered {
    fn freeze(self, identity: AppIdentity, app_type: AppType, at: DateTime<Utc>) -> AppConsentSnapshot {
        AppConsentSnapshot {
            identity,
            app_type,
            declared: normalize_names(&self.declared),
            delegated_scopes: normalize_names(&self.delegated),
            app_roles: normalize_names(&self.roles),
            consenting_users: self.users.into_iter().collect(),
            collected_at: at,
            incomplete: !self.errors.is_empty(),
            errors: self.errors,
            unresolved: self.unresolved.into_iter().collect(),
        }
    }
}

/// Drives one collection pass against a transport.
pub struct Collector<'a> {
    transport: &'a dyn GraphTransport,
    clock: &'a dyn Clock,
    retry: RetryPolicy,
    /// Service principals by object id, filled on first use.
    sps: Option<Vec<Value>>,
    sp_index: HashMap<String, usize>,
    sp_by_app: HashMap<String, usize>,
    resolver: ExternalAppResolver,
}

impl<'a> Collector<'a> {
    pub fn new(transport: &'a dyn GraphTransport, clock: &'a dyn Clock, retry: RetryPolicy) -> Self {
        Self {
            transport,
            clock,
            retry,
            sps: None,
            sp_index: HashMap::new(),
            sp_by_app: HashMap::new(),
            resolver: ExternalAppResolver::new(),
        }
    }

    pub fn resolver(&self) -> &ExternalAppResolver {
        &self.resolver
    }

    fn fetch(&self, url: &str) -> Result<Vec<Value>, CollectError> {
        fetch_all_pages(self.transport, url, &self.retry).map(|o| o.items)
    }

    fn service_principals(&mut self) -> Result<&[Value], CollectError> {
        if self.sps.is_none() {
            let list = self.fetch(endpoints::SERVICE_PRINCIPALS)?;
            for (i, sp) in list.iter().enumerate() {
                if let Some(id) = str_field(sp, "id") {
                    self.sp_index.insert(id.to_lowercase(), i);
                }
                if let Some(app) = str_field(sp, "appId") {
                    self.sp_by_app.insert(app.to_lowercase(), i);
                }
            }
            self.sps = Some(list);
        }
        Ok(self.sps.as_deref().unwrap_or_default())
    }

    fn sp_for_app(&mut self, app_id: &str) -> Result<Option<Value>, CollectError> {
        self.service_principals()?;
        let sps = self.sps.as_ref().expect("loaded");
        if let Some(&i) = self.sp_by_app.get(&app_id.to_lowercase()) {
            return Ok(Some(sps[i].clone()));
        }
        // Resource apps from other tenants may be missing from the listing.
        let found = self.fetch(&endpoints::service_principal_by_app_id(app_id))?;
        Ok(found.into_iter().next())
    }

    fn sp_by_id(&mut self, sp_id: &str) -> Result<Option<Value>, CollectError> {
        self.service_principals()?;
        let sps = self.sps.as_ref().expect("loaded");
        if let Some(&i) = self.sp_index.get(&sp_id.to_lowercase()) {
            return Ok(Some(sps[i].clone()));
        }
        match self.transport.get(&endpoints::service_principal(sp_id)) {
            Ok(v) => Ok(Some(v)),
            Err(GraphError::Status { status: 404, .. }) => Ok(None),
            Err(source) => Err(CollectError::Fetch {
                url: endpoints::service_principal(sp_id),
                source,
            }),
        }
    }

    fn schema_for_sp(&mut self, sp_id: &str, cache: &mut HashMap<String, ResourceSchema>) -> Result<ResourceSchema, CollectError> {
        let key = sp_id.to_lowercase();
        if let Some(s) = cache.get(&key) {
            return Ok(s.clone());
        }
        let schema = self
            .sp_by_id(sp_id)?
            .map(|sp| ResourceSchema::from_sp(&sp))
            .unwrap_or_default();
        cache.insert(key, schema.clone());
        Ok(schema)
    }

    fn add_grants(grants: &[Value], into: &mut Gathered, seen: &mut HashSet<String>) {
        for g in grants {
            if let Some(id) = str_field(g, "id") {
                if !seen.insert(id) {
                    continue;
                }
            }
            into.delegated
                .extend(normalize_scopes(g.get("scope").and_then(Value::as_str).unwrap_or("")));
        }
    }

    fn add_role_assignments(
        &mut self,
        sp_id: &str,
        into: &mut Gathered,
        schemas: &mut HashMap<String, ResourceSchema>,
    ) -> Result<(), CollectError> {
        for a in self.fetch(&endpoints::app_role_assignments(sp_id))? {
            let Some(role_id) = str_field(&a, "appRoleId") else { continue };
            if role_id == DEFAULT_ACCESS_ROLE {
                continue;
            }
            let resource = str_field(&a, "resourceId").unwrap_or_default();
            let schema = self.schema_for_sp(&resource, schemas)?;
            match schema.roles.get(&role_id.to_lowercase()) {
                Some(name) => into.roles.push(name.clone()),
                None => {
                    into.unresolved.insert(role_id.clone());
                    into.roles.push(role_id);
                }
            }
        }
        Ok(())
    }

    fn declared_permissions(
        &mut self,
        app: &Value,
        into: &mut Gathered,
        by_app: &mut HashMap<String, ResourceSchema>,
    ) -> Result<(), CollectError> {
        let Some(rra) = app.get("requiredResourceAccess").and_then(Value::as_array) else {
            return Ok(());
        };
        for resource in rra {
            let resource_app = str_field(resource, "resourceAppId").unwrap_or_default();
            let key = resource_app.to_lowercase();
            if !by_app.contains_key(&key) {
                let schema = self
                    .sp_for_app(&resource_app)?
                    .map(|sp| ResourceSchema::from_sp(&sp))
                    .unwrap_or_default();
                by_app.insert(key.clone(), schema);
            }
            let schema = &by_app[&key];
            for access in resource.get("resourceAccess").and_then(Value::as_array).into_iter().flatten() {
                let Some(id) = str_field(access, "id") else { continue };
                let table = match access.get("type").and_then(Value::as_str) {
                    Some("Role") => &schema.roles,
                    _ => &schema.scopes,
                };
                match table.get(&id.to_lowercase()) {
                    Some(name) => into.declared.push(name.clone()),
                    None => {
                        into.unresolved.insert(id.clone());
                        into.declared.push(id);
                    }
                }
            }
        }
        Ok(())
    }

    /// Tenant-owned single-tenant applications and what they hold.
    pub fn collect_internal_consents(&mut self) -> Result<Vec<AppConsentSnapshot>, CollectError> {
        let apps = self.fetch(endpoints::INTERNAL_APPS)?;
        self.service_principals()?;
        let now = self.clock.now();
        let mut by_app = HashMap::new();
        let mut by_sp = HashMap::new();
        let mut out = Vec::with_capacity(apps.len());
        for app in &apps {
            let app_id = str_field(app, "appId").unwrap_or_default();
            if app_id.is_empty() {
                warn!("application without appId skipped");
                continue;
            }
            self.resolver.mark_tenant_owned(&app_id);
            let mut g = Gathered::default();
            if let Err(e) = self.declared_permissions(app, &mut g, &mut by_app) {
                g.errors.push(e.to_string());
            }
            let sp = match self.sp_for_app(&app_id) {
                Ok(sp) => sp,
                Err(e) => {
                    g.errors.push(e.to_string());
                    None
                }
            };
            let sp_id = sp.as_ref().and_then(|s| str_field(s, "id")).unwrap_or_default();
            if !sp_id.is_empty() {
                match self.fetch(&endpoints::client_grants(&sp_id)) {
                    Ok(grants) => {
                        for gr in &grants {
                            if gr.get("consentType").and_then(Value::as_str) == Some("Principal") {
                                if let Some(u) = str_field(gr, "principalId") {
                                    g.users.insert(u);
                                }
                            }
                        }
                        Self::add_grants(&grants, &mut g, &mut HashSet::new());
                    }
                    Err(e) => g.errors.push(e.to_string()),
                }
                if let Err(e) = self.add_role_assignments(&sp_id, &mut g, &mut by_sp) {
                    g.errors.push(e.to_string());
                }
            }
            let identity = AppIdentity {
                service_principal_id: if sp_id.is_empty() {
                    str_field(app, "id").unwrap_or_default()
                } else {
                    sp_id
                },
                app_id,
                display_name: str_field(app, "displayName").unwrap_or_default(),
                publisher_domain: str_field(app, "publisherDomain"),
                tenant_owned: true,
            };
            if !g.errors.is_empty() {
                warn!(app_id = %identity.app_id, errors = ?g.errors, "internal app collected partially");
            }
            out.push(g.freeze(identity, AppType::Internal, now));
        }
        info!(count = out.len(), "internal applications collected");
        Ok(out)
    }

    /// Every non-tenant-owned service principal, grants or not.
    pub fn collect_external_consents(&mut self) -> Result<Vec<AppConsentSnapshot>, CollectError> {
        let sps = self.service_principals()?.to_vec();
        for sp in &sps {
            self.resolver.seed_from_listing(sp);
        }
        let mut externals = Vec::new();
        for sp in &sps {
            let Some(sp_id) = str_field(sp, "id") else { continue };
            let identity = self.resolver.resolve(&sp_id, self.transport, &self.retry)?;
            if !identity.tenant_owned {
                externals.push(identity);
            }
        }

        let users = self.fetch(endpoints::USERS)?;
        let wanted: HashSet<String> = externals
            .iter()
            .map(|i| i.service_principal_id.to_lowercase())
            .collect();
        let mut per_user: HashMap<String, Vec<(String, Value)>> = HashMap::new();
        let mut user_errors = Vec::new();
        for user in &users {
            let Some(uid) = str_field(user, "id") else { continue };
            match self.fetch(&endpoints::user_grants(&uid)) {
                Ok(grants) => {
                    for g in grants {
                        let client = str_field(&g, "clientId").unwrap_or_default().to_lowercase();
                        if wanted.contains(&client) {
                            per_user.entry(client).or_default().push((uid.clone(), g));
                        }
                    }
                }
                Err(e) => user_errors.push(e.to_string()),
            }
        }

        let now = self.clock.now();
        let mut schemas = HashMap::new();
        let mut out = Vec::with_capacity(externals.len());
        for identity in externals {
            let mut g = Gathered {
                errors: user_errors.clone(),
                ..Default::default()
            };
            let mut seen = HashSet::new();
            let key = identity.service_principal_id.to_lowercase();
            if let Some(list) = per_user.get(&key) {
                let grants: Vec<Value> = list.iter().map(|(_, g)| g.clone()).collect();
                g.users.extend(list.iter().map(|(u, _)| u.clone()));
                Self::add_grants(&grants, &mut g, &mut seen);
            }
            match self.fetch(&endpoints::client_grants(&identity.service_principal_id)) {
                Ok(grants) => Self::add_grants(&grants, &mut g, &mut seen),
                Err(e) => g.errors.push(e.to_string()),
            }
            if let Err(e) = self.add_role_assignments(&identity.service_principal_id, &mut g, &mut schemas) {
                g.errors.push(e.to_string());
            }
            debug!(app_id = %identity.app_id, "external app collected");
            out.push(g.freeze(identity, AppType::External, now));
        }
        info!(count = out.len(), users = users.len(), "external applications collected");
        Ok(out)
    }

    /// Internal apps followed by external ones.
    pub fn collect_all(&mut self) -> Result<Vec<AppConsentSnapshot>, CollectError> {
        let mut all = self.collect_internal_consents()?;
        all.extend(self.collect_external_consents()?);
        Ok(all)
    }
}

/// Graph application permissions the collector needs, with the endpoint
/// that proves each one.
pub const REQUIRED_GRAPH_PERMISSIONS: [(&str, &str); 4] = [
    ("User.Read.All", "/users?$top=1&$select=id"),
    ("DelegatedPermissionGrant.Read.All", "/oauth2PermissionGrants?$top=1"),
    ("Directory.Read.All", "/servicePrincipals?$top=1&$select=id"),
    ("Application.Read.All", "/applications?$top=1&$select=id"),
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PermissionDiagnostic {
    pub permission: &'static str,
    pub probe: &'static str,
    pub problem: String,
}

/// Probe one endpoint per required permission; an empty result means the
/// credentials look sufficient. User.Read is not probed: app-only tokens
/// have no signed-in user to read.
pub fn preflight_permissions(transport: &dyn GraphTransport) -> Vec<PermissionDiagnostic> {
    REQUIRED_GRAPH_PERMISSIONS
        .iter()
        .filter_map(|(permission, probe)| {
            let problem = match transport.get(probe) {
                Ok(_) => return None,
                Err(GraphError::Status { status: 401 | 403, .. }) => {
                    format!("access denied; grant the {permission} application permission and admin-consent it")
                }
                Err(e) => e.to_string(),
            };
            Some(PermissionDiagnostic {
                permission,
                probe,
                problem,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use serde_json::json;

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize_scopes("Mail.Read Mail.Read offline_access"), vec!["Mail.Read", "offline_access"]);
        assert!(normalize_scopes("").is_empty());
        assert_eq!(normalize_scopes("User.Read, Mail.Read"), vec!["Mail.Read", "User.Read"]);
        assert_eq!(normalize_scopes(" openid\tmail.read,Mail.Read "), vec!["mail.read", "openid"]);
    }

    proptest! {
        #[test]
        fn normalize_is_idempotent(raw in "[A-Za-z._ ,\t]{0,60}") {
            let once = normalize_scopes(&raw);
            prop_assert_eq!(normalize_scopes(&once.join(" ")), once.clone());
            prop_assert_eq!(normalize_names(&once), once);
        }
    }

    #[test]
    fn pages_follow_next_links() {
        let mem = MemoryTransport::new();
        mem.route("/users", json!({"value": [1, 2], "@odata.nextLink": format!("{GRAPH_BASE}/users?$skiptoken=a")}));
        mem.route("/users?$skiptoken=a", json!({"value": [3], "@odata.nextLink": "/users?$skiptoken=b"}));
        mem.route("/users?$skiptoken=b", json!({"value": [4, 5]}));
        let out = fetch_all_pages(&mem, "/users", &RetryPolicy::immediate()).unwrap();
        assert_eq!(out.items, vec![json!(1), json!(2), json!(3), json!(4), json!(5)]);
        assert_eq!(out.pages, 3);
        assert!(out.backoffs.is_empty());
    }

    #[test]
    fn throttle_is_retried_once() {
        let mem = MemoryTransport::new();
        mem.push("/users", Err(GraphError::Throttled { retry_after: Some(Duration::from_secs(2)) }));
        mem.route("/users", json!({"value": ["a"]}));
        let policy = RetryPolicy {
            max_delay: Duration::ZERO,
            ..RetryPolicy::immediate()
        };
        let out = fetch_all_pages(&mem, "/users", &policy).unwrap();
        assert_eq!(out.items, vec![json!("a")]);
        assert_eq!(out.backoffs.len(), 1);
    }

    #[test]
    fn retry_budget_and_hard_errors() {
        let mem = MemoryTransport::new();
        mem.push("/x", Err(GraphError::Status { status: 503, body: String::new() }));
        let err = fetch_all_pages(&mem, "/x", &RetryPolicy::immediate()).unwrap_err();
        assert!(err.to_string().contains("/x"));
        assert_eq!(mem.calls_to("/x"), 6);

        mem.push("/y", Err(GraphError::Status { status: 403, body: "denied".into() }));
        assert!(fetch_all_pages(&mem, "/y", &RetryPolicy::immediate()).is_err());
        assert_eq!(mem.calls_to("/y"), 1);
    }

    #[test]
    fn backoff_grows_and_respects_hints() {
        let p = RetryPolicy::default();
        assert_eq!(p.delay(0, None), Duration::from_millis(500));
        assert_eq!(p.delay(2, None), Duration::from_secs(2));
        assert_eq!(p.delay(0, Some(Duration::from_secs(7))), Duration::from_secs(7));
        assert_eq!(p.delay(20, None), Duration::from_secs(60));
    }

    #[test]
    fn preflight_names_missing_permission() {
        let mem = MemoryTransport::new();
        for (_, probe) in REQUIRED_GRAPH_PERMISSIONS {
            mem.route(probe, json!({"value": []}));
        }
        assert!(preflight_permissions(&mem).is_empty());
        let mem2 = MemoryTransport::new();
        for (perm, probe) in REQUIRED_GRAPH_PERMISSIONS {
            if perm == "User.Read.All" {
                mem2.push(probe, Err(GraphError::Status { status: 403, body: "Authorization_RequestDenied".into() }));
            } else {
                mem2.route(probe, json!({"value": []}));
            }
        }
        let diags = preflight_permissions(&mem2);
        assert_eq!(diags.len(), 1);
        assert_eq!(diags[0].permission, "User.Read.All");
        assert!(diags[0].problem.contains("User.Read.All"));
    }
}
