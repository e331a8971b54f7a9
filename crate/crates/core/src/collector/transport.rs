use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde_json::Value;
use thiserror::Error;

pub const GRAPH_BASE: &str = "https://graph.microsoft.com/v1.0";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("throttled (retry after {retry_after:?})")]
    Throttled { retry_after: Option<Duration> },
    #[error("HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("network: {0}")]
    Network(String),
    #[error("authentication: {0}")]
    Auth(String),
    #[error("no recorded response for {0}")]
    NotRecorded(String),
    #[error("invalid JSON page: {0}")]
    Json(String),
}

impl GraphError {
    /// Worth another try after a pause.
    pub fn is_transient(&self) -> bool {
        match self {
            GraphError::Throttled { .. } | GraphError::Network(_) => true,
            GraphError::Status { status, .. } => *status >= 500,
            _ => false,
        }
    }
}

/// One JSON page per request. Implementations handle authentication.
pub trait GraphTransport: Send + Sync {
    fn get(&self, url: &str) -> Result<Value, GraphError>;
}

/// Strip the Graph base so absolute continuation links and relative paths
/// share one key space.
pub fn relative_url(url: &str) -> &str {
    url.strip_prefix(GRAPH_BASE).unwrap_or(url)
}

struct Token {
    value: String,
    expires: Instant,
}

/// Live Graph access using the client-credentials flow.
pub struct HttpGraphTransport {
    client: reqwest::blocking::Client,
    tenant_id: String,
    client_id: String,
    client_secret: String,
    authority: String,
    token: Mutex<Option<Token>>,
}

impl HttpGraphTransport {
    pub const TENANT_ENV: &'static str = "GRAPH_TENANT_ID";
    pub const CLIENT_ENV: &'static str = "GRAPH_CLIENT_ID";
    pub const SECRET_ENV: &'static str = "GRAPH_CLIENT_SECRET";

    pub fn new(tenant_id: &str, client_id: &str, client_secret: &str) -> Result<Self, GraphError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(60))
            .build()
            .map_err(|e| GraphError::Network(e.to_string()))?;
        Ok(Self {
            client,
            tenant_id: tenant_id.into(),
            client_id: client_id.into(),
            client_secret: client_secret.into(),
            authority: "https://login.microsoftonline.com".into(),
            token: Mutex::new(None),
        })
    }

    pub fn from_env() -> Result<Self, GraphError> {
        let var = |k: &str| {
            std::env::var(k)
                .ok()
                .filter(|v| !v.is_empty())
                .ok_or_else(|| GraphError::Auth(format!("{k} is not set")))
        };
        Self::new(&var(Self::TENANT_ENV)?, &var(Self::CLIENT_ENV)?, &var(Self::SECRET_ENV)?)
    }

    pub fn client_secret(&self) -> &str {
        &self.client_secret
    }

    fn bearer(&self) -> Result<String, GraphError> {
        let mut guard = self.token.lock().expect("token lock");
        if let Some(t) = guard.as_ref() {
            if t.expires > Instant::now() {
                return Ok(t.value.clone());
            }
        }
        let url = format!("{}/{}/oauth2/v2.0/token", self.authority, self.tenant_id);
        let resp = self
            .client
            .post(url)
            .form(&[
                ("client_id", self.client_id.as_str()),
                ("client_secret", self.client_secret.as_str()),
                ("scope", "https://graph.microsoft.com/.default"),
                ("grant_type", "client_credentials"),
            ])
            .send()
            .map_err(|e| GraphError::Network(e.to_string()))?;
        let status = resp.status();
        let body: Value = resp.json().map_err(|e| GraphError::Auth(e.to_string()))?;
        if !status.is_success() {
            let msg = body["error_description"].as_str().unwrap_or("token request failed");
            return Err(GraphError::Auth(msg.to_string()));
        }
        let value = body["access_token"]
            .as_str()
            .ok_or_else(|| GraphError::Auth("no access_token in response".into()))?
            .to_string();
        let ttl = body["expires_in"].as_u64().unwrap_or(3600).saturating_sub(120);
        *guard = Some(Token {
            value: value.clone(),
            expires: Instant::now() + Duration::from_secs(ttl),
        });
        Ok(value)
    }
}

impl GraphTransport for HttpGraphTransport {
    fn get(&self, url: &str) -> Result<Value, GraphError> {
        let full = if url.starts_with("http") {
            url.to_string()
        } else {
            format!("{GRAPH_BASE}{url}")
        };
        let resp = self
            .client
            .get(full)
            .bearer_auth(self.bearer()?)
            .header("ConsistencyLevel", "eventual")
            .send()
            .map_err(|e| GraphError::Network(e.to_string()))?;
        let status = resp.status().as_u16();
        if status == 429 || status == 503 {
            let retry_after = resp
                .headers()
                .get("retry-after")
                .and_then(|v| v.to_str().ok())
                .and_then(|v| v.trim().parse::<u64>().ok())
                .map(Duration::from_secs);
            return Err(GraphError::Throttled { retry_after });
        }
        let text = resp.text().map_err(|e| GraphError::Network(e.to_string()))?;
        if !(200..300).contains(&status) {
            return Err(GraphError::Status { status, body: text });
        }
        serde_json::from_str(&text).map_err(|e| GraphError::Json(e.to_string()))
    }
}

/// Serves pages recorded on disk. `manifest.json` maps request URLs
/// (relative to the Graph base) to file names in the same directory.
pub struct ReplayTransport {
    dir: PathBuf,
    manifest: BTreeMap<String, String>,
    calls: AtomicUsize,
}

impl ReplayTransport {
    pub fn open(dir: &Path) -> Result<Self, GraphError> {
        let text = fs::read_to_string(dir.join("manifest.json"))
            .map_err(|e| GraphError::NotRecorded(format!("{}: {e}", dir.display())))?;
        let manifest = serde_json::from_str(&text).map_err(|e| GraphError::Json(e.to_string()))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            manifest,
            calls: AtomicUsize::new(0),
        })
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl GraphTransport for ReplayTransport {
    fn get(&self, url: &str) -> Result<Value, GraphError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let key = relative_url(url);
        let file = self
            .manifest
            .get(key)
            .ok_or_else(|| GraphError::NotRecorded(key.to_string()))?;
        let text = fs::read_to_string(self.dir.join(file))
            .map_err(|e| GraphError::NotRecorded(format!("{file}: {e}")))?;
        serde_json::from_str(&text).map_err(|e| GraphError::Json(format!("{file}: {e}")))
    }
}

const REDACTED: &str = "[REDACTED]";

fn is_secret_key(key: &str) -> bool {
    let k = key.to_ascii_lowercase();
    ["secret", "password", "token", "keycredentials", "credential"]
        .iter()
        .any(|s| k.contains(s))
        && !k.starts_with("@odata")
}

/// Blank out credential-looking fields and any literal occurrence of `secrets`.
pub fn redact(value: &mut Value, secrets: &[String]) {
    match value {
        Value::Object(map) => {
            for (k, v) in map.iter_mut() {
                if is_secret_key(k) && !v.is_null() {
                    *v = Value::String(REDACTED.into());
                } else {
                    redact(v, secrets);
                }
            }
        }
        Value::Array(items) => items.iter_mut().for_each(|v| redact(v, secrets)),
        Value::String(s) => {
            for secret in secrets.iter().filter(|s| !s.is_empty()) {
                if s.contains(secret.as_str()) {
                    *s = s.replace(secret.as_str(), REDACTED);
                }
            }
        }
        _ => {}
    }
}

/// Passes requests through and writes every successful page as a replay
/// fixture.
pub struct RecordingTransport<T> {
    inner: T,
    dir: PathBuf,
    secrets: Vec<String>,
    manifest: Mutex<BTreeMap<String, String>>,
}

impl<T: GraphTransport> RecordingTransport<T> {
    pub fn new(inner: T, dir: &Path, secrets: Vec<String>) -> Result<Self, GraphError> {
        fs::create_dir_all(dir).map_err(|e| GraphError::Network(e.to_string()))?;
        let manifest = fs::read_to_string(dir.join("manifest.json"))
            .ok()
            .and_then(|t| serde_json::from_str(&t).ok())
            .unwrap_or_default();
        Ok(Self {
            inner,
            dir: dir.to_path_buf(),
            secrets,
            manifest: Mutex::new(manifest),
        })
    }

    fn write(&self, url: &str, page: &Value) -> std::io::Result<()> {
        let mut page = page.clone();
        redact(&mut page, &self.secrets);
        let mut manifest = self.manifest.lock().expect("manifest lock");
        let key = relative_url(url).to_string();
        let file = match manifest.get(&key) {
            Some(f) => f.clone(),
            None => format!("page-{:04}.json", manifest.len() + 1),
        };
        fs::write(self.dir.join(&file), serde_json::to_string_pretty(&page)? + "\n")?;
        manifest.insert(key, file);
        fs::write(
            self.dir.join("manifest.json"),
            serde_json::to_string_pretty(&*manifest)? + "\n",
        )
    }
}

impl<T: GraphTransport> GraphTransport for RecordingTransport<T> {
    fn get(&self, url: &str) -> Result<Value, GraphError> {
        let page = self.inner.get(url)?;
        self.write(url, &page)
            .map_err(|e| GraphError::Network(format!("recording {url}: {e}")))?;
        Ok(page)
    }
}

/// Scripted in-process transport. Each URL holds a queue of responses; the
/// final one repeats once the queue is down to it.
#[derive(Default)]
pub struct MemoryTransport {
    routes: Mutex<HashMap<String, VecDeque<Result<Value, GraphError>>>>,
    log: Mutex<Vec<String>>,
}

impl MemoryTransport {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn route(&self, url: &str, page: Value) -> &Self {
        self.push(url, Ok(page))
    }

    pub fn push(&self, url: &str, response: Result<Value, GraphError>) -> &Self {
        self.routes
            .lock()
            .expect("routes lock")
            .entry(relative_url(url).to_string())
            .or_default()
            .push_back(response);
        self
    }

    pub fn calls(&self) -> usize {
        self.log.lock().expect("log lock").len()
    }

    pub fn calls_to(&self, url: &str) -> usize {
        let key = relative_url(url);
        self.log.lock().expect("log lock").iter().filter(|u| *u == key).count()
    }

    pub fn requested(&self) -> Vec<String> {
        self.log.lock().expect("log lock").clone()
    }
}

impl GraphTransport for MemoryTransport {
    fn get(&self, url: &str) -> Result<Value, GraphError> {
        let key = relative_url(url).to_string();
        self.log.lock().expect("log lock").push(key.clone());
        let mut routes = self.routes.lock().expect("routes lock");
        let queue = routes
            .get_mut(&key)
            .ok_or_else(|| GraphError::NotRecorded(key.clone()))?;
        if queue.len() > 1 {
            queue.pop_front().expect("non-empty")
        } else {
            queue
                .front()
                .cloned()
                .ok_or(GraphError::NotRecorded(key))?
        }
    }
}
