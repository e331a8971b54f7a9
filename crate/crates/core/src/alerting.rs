//! Alert decisions, webhook rendering and delivery.

use std::fmt;
use std::io::Write;
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tracing::{info, warn};

use crate::collector::{AppConsentSnapshot, AppIdentity, AppType};
use crate::riskmath::aggregate::by_risk_desc;
use crate::riskmath::{RiskAssessment, ScoredPermission, SpikeAlert, SpikeConfig, SpikeDecision, Tier};
use crate::statestore::{ChangeKind, ChangeType};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlertType {
    New,
    TierIncrease,
    PermAdded,
    SpikePresent,
    SpikeMultiple,
}

impl AlertType {
    pub const ALL: [AlertType; 5] = [
        AlertType::New,
        AlertType::TierIncrease,
        AlertType::PermAdded,
        AlertType::SpikePresent,
        AlertType::SpikeMultiple,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AlertType::New => "new",
            AlertType::TierIncrease => "tier_increase",
            AlertType::PermAdded => "perm_added",
            AlertType::SpikePresent => "spike_present",
            AlertType::SpikeMultiple => "spike_multiple",
        }
    }

    /// Higher wins when only one alert per app is allowed.
    fn priority(self) -> u8 {
        match self {
            AlertType::SpikeMultiple => 4,
            AlertType::SpikePresent => 3,
            AlertType::TierIncrease => 2,
            AlertType::New => 1,
            AlertType::PermAdded => 0,
        }
    }
}

impl fmt::Display for AlertType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AlertConfig {
    /// Gate for `new` and `perm_added`.
    pub min_alert_tier: Tier,
    pub alert_once_per_app: bool,
    pub top_k: usize,
    pub excerpt_chars: usize,
}

impl Default for AlertConfig {
    fn default() -> Self {
        Self {
            min_alert_tier: Tier::High,
            alert_once_per_app: true,
            top_k: 5,
            excerpt_chars: 300,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TopPermission {
    pub name: String,
    pub score: u8,
    pub reasoning: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct AlertDeltas {
    pub added: Vec<String>,
    pub removed: Vec<String>,
    pub previous_tier: Option<Tier>,
    pub spike_added: Vec<String>,
    pub spike_count: usize,
    pub spike_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Alert {
    pub alert_type: AlertType,
    pub identity: AppIdentity,
    pub app_type: AppType,
    pub tier: Tier,
    pub r_app: f64,
    pub top_permissions: Vec<TopPermission>,
    pub modifiers: Vec<String>,
    pub deltas: AlertDeltas,
}

/// Cut to at most `max` characters, marking the cut.
pub fn excerpt(text: &str, max: usize) -> String {
    let text = text.trim();
    if text.chars().count() <= max {
        return text.to_string();
    }
    let keep = max.saturating_sub(3);
    let mut out: String = text.chars().take(keep).collect();
    out.truncate(out.trim_end().len());
    out.push_str("...");
    out
}

/// Highest `s` first, then case-insensitive name; at most `k`.
pub fn top_permissions(scored: &[ScoredPermission], k: usize, excerpt_chars: usize) -> Vec<TopPermission> {
    let mut sorted: Vec<&ScoredPermission> = scored.iter().collect();
    sorted.sort_by(|a, b| by_risk_desc(a, b).then_with(|| a.name.cmp(&b.name)));
    sorted
        .into_iter()
        .take(k)
        .map(|p| TopPermission {
            name: p.name.clone(),
            score: p.s,
            reasoning: p.reasoning.as_deref().map(|r| excerpt(r, excerpt_chars)),
        })
        .collect()
}

/// Alerts for one app in one cycle.
pub fn decide_alerts(
    snapshot: &AppConsentSnapshot,
    change: &ChangeKind,
    assessment: &RiskAssessment,
    spike: &SpikeDecision,
    config: &AlertConfig,
    spike_config: &SpikeConfig,
) -> Vec<Alert> {
    let gated = assessment.tier >= config.min_alert_tier;
    let mut types = Vec::new();
    match spike.alert {
        SpikeAlert::None => {}
        SpikeAlert::FirstSpike => types.push(AlertType::SpikePresent),
        SpikeAlert::MultiOrRatioSpike => types.push(AlertType::SpikeMultiple),
    }
    if !spike_config.bypass_tier_threshold && !gated {
        types.clear();
    }
    if let Some(prev) = change.previous_tier {
        if change.kind != ChangeType::New && assessment.tier > prev {
            types.push(AlertType::TierIncrease);
        }
    }
    if change.kind == ChangeType::New && gated {
        types.push(AlertType::New);
    }
    if change.kind == ChangeType::Changed && !change.added.is_empty() && gated {
        types.push(AlertType::PermAdded);
    }
    types.sort_by_key(|t| std::cmp::Reverse(t.priority()));
    if config.alert_once_per_app {
        types.truncate(1);
    }

    let deltas = AlertDeltas {
        added: change.added.clone(),
        removed: change.removed.clone(),
        previous_tier: change.previous_tier,
        spike_added: spike.added.clone(),
        spike_count: spike.count_spike,
        spike_ratio: spike.spike_ratio,
    };
    types
        .into_iter()
        .map(|alert_type| Alert {
            alert_type,
            identity: snapshot.identity.clone(),
            app_type: snapshot.app_type,
            tier: assessment.tier,
            r_app: assessment.r_app,
            top_permissions: top_permissions(&assessment.scored, config.top_k, config.excerpt_chars),
            modifiers: assessment.modifiers.iter().map(ToString::to_string).collect(),
            deltas: deltas.clone(),
        })
        .collect()
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn mrkdwn(text: String) -> Value {
    json!({"type": "mrkdwn", "text": text})
}

fn headline(alert: &Alert) -> &'static str {
    match alert.alert_type {
        AlertType::New => "New application",
        AlertType::TierIncrease => "Risk tier increased",
        AlertType::PermAdded => "Permissions added",
        AlertType::SpikePresent => "Critical permission spike",
        AlertType::SpikeMultiple => "Multiple critical permissions",
    }
}

fn delta_lines(alert: &Alert) -> Vec<String> {
    let d = &alert.deltas;
    let list = |xs: &[String]| {
        xs.iter()
            .map(|x| format!("`{}`", escape(x)))
            .collect::<Vec<_>>()
            .join(", ")
    };
    let mut lines = Vec::new();
    match alert.alert_type {
        AlertType::New => lines.push("First time this application has been seen in the tenant.".to_string()),
        AlertType::TierIncrease => {
            if let Some(prev) = d.previous_tier {
                lines.push(format!("Tier: {prev} -> {}", alert.tier));
            }
        }
        AlertType::SpikePresent | AlertType::SpikeMultiple => {
            lines.push(format!(
                "Spike permissions: {} ({:.0}% of granted)",
                d.spike_count,
                d.spike_ratio * 100.0
            ));
            if !d.spike_added.is_empty() {
                lines.push(format!("New spike permissions: {}", list(&d.spike_added)));
            }
        }
        AlertType::PermAdded => {}
    }
    if alert.alert_type != AlertType::New {
        if !d.added.is_empty() {
            lines.push(format!("Added: {}", list(&d.added)));
        }
        if !d.removed.is_empty() {
            lines.push(format!("Removed: {}", list(&d.removed)));
        }
    }
    if lines.is_empty() {
        lines.push("No permission changes.".into());
    }
    lines
}

/// Incoming-webhook body with a `blocks` array. Equal alerts give
/// byte-identical output.
pub fn render_webhook_payload(alert: &Alert, k: usize) -> Value {
    let id = &alert.identity;
    let mut name: String = id.display_name.chars().take(100).collect();
    if name.is_empty() {
        name = id.app_id.clone();
    }
    let header = format!("{}: {} ({})", headline(alert), name, alert.tier.as_str().to_uppercase());

    let perms = if alert.top_permissions.is_empty() {
        "_No granted permissions._".to_string()
    } else {
        alert
            .top_permissions
            .iter()
            .take(k)
            .map(|p| {
                let mut line = format!("• `{}` (score {})", escape(&p.name), p.score);
                if let Some(r) = &p.reasoning {
                    line.push_str(&format!(": {}", escape(r)));
                }
                line
            })
            .collect::<Vec<_>>()
            .join("\n")
    };
    let modifiers = if alert.modifiers.is_empty() {
        "none".to_string()
    } else {
        alert.modifiers.iter().map(|m| escape(m)).collect::<Vec<_>>().join("; ")
    };

    json!({
        "text": format!("[{}] {} ({})", alert.alert_type, name, alert.tier),
        "blocks": [
            {"type": "header", "text": {"type": "plain_text", "text": header}},
            {"type": "section", "fields": [
                mrkdwn(format!("*Application*\n{}", escape(&name))),
                mrkdwn(format!("*Publisher*\n{}", escape(id.publisher_domain.as_deref().unwrap_or("unknown")))),
                mrkdwn(format!("*App ID*\n`{}`", escape(&id.app_id))),
                mrkdwn(format!("*Type*\n{}", alert.app_type)),
            ]},
            {"type": "section", "fields": [
                mrkdwn(format!("*Risk tier*\n{}", alert.tier)),
                mrkdwn(format!("*Total score*\n{:.2}", alert.r_app)),
            ]},
            {"type": "section", "text": mrkdwn(format!("*Top risky permissions*\n{perms}"))},
            {"type": "section", "text": mrkdwn(format!("*Changes*\n{}", delta_lines(alert).join("\n")))},
            {"type": "context", "elements": [mrkdwn(format!("*Modifiers:* {modifiers}"))]},
            {"type": "context", "elements": [mrkdwn(format!("alert_type: {}", alert.alert_type))]},
        ]
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum WebhookError {
    /// Worth retrying: throttling, 5xx, network.
    Transient(String),
    Permanent(String),
}

pub trait WebhookTransport: Send + Sync {
    fn post(&self, url: &str, body: &str) -> Result<(), WebhookError>;
}

pub struct HttpWebhook {
    client: reqwest::blocking::Client,
}

impl HttpWebhook {
    pub const URL_ENV: &'static str = "SLACK_WEBHOOK_URL";

    pub fn new() -> Result<Self, String> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(30))
            .build()
            .map_err(|e| e.to_string())?;
        Ok(Self { client })
    }
}

impl WebhookTransport for HttpWebhook {
    fn post(&self, url: &str, body: &str) -> Result<(), WebhookError> {
        let resp = self
            .client
            .post(url)
            .header("content-type", "application/json")
            .body(body.to_string())
            .send()
            .map_err(|e| WebhookError::Transient(e.to_string()))?;
        let status = resp.status();
        if status.is_success() {
            return Ok(());
        }
        let text = resp.text().unwrap_or_default();
        let msg = format!("HTTP {status}: {}", text.chars().take(200).collect::<String>());
        if status.as_u16() == 429 || status.is_server_error() {
            Err(WebhookError::Transient(msg))
        } else {
            Err(WebhookError::Permanent(msg))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeliveryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
}

impl Default for DeliveryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 4,
            base_delay: Duration::from_secs(1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DeliveryResult {
    pub delivered: bool,
    pub attempts: u32,
    pub error: Option<String>,
}

/// POST with bounded retries. Never panics; failures come back in the result.
pub fn deliver(payload: &Value, url: &str, transport: &dyn WebhookTransport, policy: &DeliveryPolicy) -> DeliveryResult {
    let body = payload.to_string();
    let mut attempts = 0;
    loop {
        attempts += 1;
        match transport.post(url, &body) {
            Ok(()) => {
                return DeliveryResult {
                    delivered: true,
                    attempts,
                    error: None,
                }
            }
            Err(WebhookError::Transient(e)) if attempts < policy.max_attempts.max(1) => {
                let pause = policy.base_delay.saturating_mul(1 << (attempts - 1).min(10));
                warn!(attempts, error = %e, "webhook delivery failed, retrying");
                if !pause.is_zero() {
                    thread::sleep(pause);
                }
            }
            Err(WebhookError::Transient(e) | WebhookError::Permanent(e)) => {
                warn!(attempts, error = %e, "webhook delivery abandoned");
                return DeliveryResult {
                    delivered: false,
                    attempts,
                    error: Some(e),
                };
            }
        }
    }
}

/// Where rendered alerts go.
pub trait AlertSink {
    fn send(&self, alert: &Alert, payload: &Value) -> DeliveryResult;
}

pub struct WebhookSink<T> {
    pub url: String,
    pub transport: T,
    pub policy: DeliveryPolicy,
}

impl<T: WebhookTransport> AlertSink for WebhookSink<T> {
    fn send(&self, alert: &Alert, payload: &Value) -> DeliveryResult {
        let r = deliver(payload, &self.url, &self.transport, &self.policy);
        info!(alert_type = %alert.alert_type, app_id = %alert.identity.app_id, delivered = r.delivered, "alert sent");
        r
    }
}

/// Writes one JSON payload per line instead of delivering.
pub struct DryRunSink<W: Write + Send> {
    out: Mutex<W>,
}

impl<W: Write + Send> DryRunSink<W> {
    pub fn new(out: W) -> Self {
        Self { out: Mutex::new(out) }
    }

    pub fn into_inner(self) -> W {
        self.out.into_inner().expect("sink lock")
    }
}

impl<W: Write + Send> AlertSink for DryRunSink<W> {
    fn send(&self, _alert: &Alert, payload: &Value) -> DeliveryResult {
        let mut out = self.out.lock().expect("sink lock");
        let res = writeln!(out, "{payload}").and_then(|_| out.flush());
        DeliveryResult {
            delivered: res.is_ok(),
            attempts: 1,
            error: res.err().map(|e| e.to_string()),
        }
    }
}

/// Used when no webhook is configured: the alert only reaches the log.
pub struct LogSink;

impl AlertSink for LogSink {
    fn send(&self, alert: &Alert, payload: &Value) -> DeliveryResult {
        warn!(
            alert_type = %alert.alert_type,
            app_id = %alert.identity.app_id,
            payload = %payload,
            "no webhook configured, alert logged only"
        );
        DeliveryResult {
            delivered: false,
            attempts: 0,
            error: Some("no webhook configured".into()),
        }
    }
}

/// Keeps every alert in memory.
#[derive(Default)]
pub struct MemorySink {
    pub sent: Mutex<Vec<(Alert, Value)>>,
}

impl AlertSink for MemorySink {
    fn send(&self, alert: &Alert, payload: &Value) -> DeliveryResult {
        self.sent.lock().expect("sink lock").push((alert.clone(), payload.clone()));
        DeliveryResult {
            delivered: true,
            attempts: 1,
            error: None,
        }
    }
}
