//! One scan cycle: collect, score, aggregate, spike, persist, alert.

use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::{info, warn};

use crate::alerting::{decide_alerts, render_webhook_payload, AlertSink, AlertType};
use crate::clock::Clock;
use crate::collector::{AppConsentSnapshot, CollectError, Collector, GraphTransport};
use crate::config::{Config, ConfigError};
use crate::riskmath::{aggregate, evaluate_spikes, RiskAssessment, RuleSet, ScoredPermission};
use crate::scorer::{PromptVersion, RiskCache, ScoreTable, ScorerError};
use crate::statestore::{ChangeType, StateStore, StoreError};

#[derive(Debug, Error)]
pub enum ScanError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("collection failed: {0}")]
    Collect(#[from] CollectError),
    #[error("state store: {0}")]
    Store(#[from] StoreError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AlertRecord {
    pub app_id: String,
    pub display_name: String,
    pub alert_type: AlertType,
    pub delivered: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanSummary {
    pub run_time: DateTime<Utc>,
    pub total: usize,
    pub new: usize,
    pub changed: usize,
    /// Apps left untouched because part of their consent data failed to load.
    pub skipped_incomplete: usize,
    /// Granted permissions scored with the unknown-permission fallback.
    pub defaulted_permissions: usize,
    pub alerts: Vec<AlertRecord>,
}

impl ScanSummary {
    pub fn alerts_emitted(&self) -> usize {
        self.alerts.len()
    }

    pub fn alerts_delivered(&self) -> usize {
        self.alerts.iter().filter(|a| a.delivered).count()
    }
}

/// Cached model score where present, otherwise the configured fallback.
pub fn score_snapshot(
    snapshot: &AppConsentSnapshot,
    scores: &ScoreTable,
    rules: &RuleSet,
    unknown_score: u8,
) -> Vec<ScoredPermission> {
    snapshot
        .permissions()
        .into_iter()
        .map(|name| match scores.get(&name) {
            Some((r, reasoning)) => {
                ScoredPermission::classify(name.as_str(), r, rules).with_reasoning(reasoning.map(str::to_string))
            }
            None => ScoredPermission::classify(name.as_str(), unknown_score, rules).defaulted(),
        })
        .collect()
}

pub struct ScanCycle<'a> {
    pub config: &'a Config,
    pub transport: &'a dyn GraphTransport,
    pub clock: &'a dyn Clock,
    pub scores: &'a ScoreTable,
    pub sink: &'a dyn AlertSink,
}

impl ScanCycle<'_> {
    pub fn run(&self, store: &mut StateStore) -> Result<ScanSummary, ScanError> {
        let cfg = self.config;
        let rules = cfg.rule_set()?;
        let params = cfg.risk.params();
        let now = self.clock.now();

        let snapshots = Collector::new(self.transport, self.clock, cfg.graph.retry_policy()).collect_all()?;
        if self.scores.is_empty() {
            warn!(
                model = %cfg.score_model_key(),
                fallback = cfg.risk.unknown_permission_score,
                "risk cache has no scores for this model; every permission uses the fallback score"
            );
        }

        let mut summary = ScanSummary {
            run_time: now,
            total: 0,
            new: 0,
            changed: 0,
            skipped_incomplete: 0,
            defaulted_permissions: 0,
            alerts: Vec::new(),
        };
        let mut pending = Vec::new();
        for snapshot in &snapshots {
            if snapshot.incomplete {
                warn!(app_id = %snapshot.identity.app_id, errors = ?snapshot.errors, "incomplete consent data, app left unchanged");
                summary.skipped_incomplete += 1;
                continue;
            }
            let scored = score_snapshot(snapshot, self.scores, &rules, cfg.risk.unknown_permission_score);
            summary.defaulted_permissions += scored.iter().filter(|p| !p.from_cache).count();
            let assessment: RiskAssessment = if scored.is_empty() {
                RiskAssessment::no_permissions()
            } else {
                aggregate(&scored, &params)
            };
            let previous = store.load_spike_state(&snapshot.identity.app_id)?;
            let spike = evaluate_spikes(&previous, &assessment.scored, now, &cfg.spike);
            let change = store.commit_app(snapshot, &assessment, &spike.new_state, now)?;
            summary.total += 1;
            match change.kind {
                ChangeType::New => summary.new += 1,
                ChangeType::Changed => summary.changed += 1,
                ChangeType::Unchanged => {}
            }
            info!(
                app_id = %snapshot.identity.app_id,
                tier = %assessment.tier,
                r_app = assessment.r_app,
                change = ?change.kind,
                spikes = spike.count_spike,
                "application assessed"
            );
            let alerts = decide_alerts(snapshot, &change, &assessment, &spike, &cfg.alerts.decision, &cfg.spike);
            pending.extend(alerts);
        }
        store.record_run(summary.total, summary.new, summary.changed, now)?;

        for alert in pending {
            let payload = render_webhook_payload(&alert, cfg.alerts.decision.top_k);
            let result = self.sink.send(&alert, &payload);
            if !result.delivered {
                warn!(app_id = %alert.identity.app_id, alert_type = %alert.alert_type, error = ?result.error, "alert not delivered");
            }
            summary.alerts.push(AlertRecord {
                app_id: alert.identity.app_id.clone(),
                display_name: alert.identity.display_name.clone(),
                alert_type: alert.alert_type,
                delivered: result.delivered,
            });
        }
        info!(
            total = summary.total,
            new = summary.new,
            changed = summary.changed,
            alerts = summary.alerts_emitted(),
            delivered = summary.alerts_delivered(),
            "scan cycle finished"
        );
        Ok(summary)
    }
}

/// Convenience wrapper around [`ScanCycle::run`].
pub fn run_scan_cycle(
    config: &Config,
    transport: &dyn GraphTransport,
    clock: &dyn Clock,
    scores: &ScoreTable,
    sink: &dyn AlertSink,
    store: &mut StateStore,
) -> Result<ScanSummary, ScanError> {
    ScanCycle {
        config,
        transport,
        clock,
        scores,
        sink,
    }
    .run(store)
}

/// One precomputed score, as exchanged in score files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreFileEntry {
    pub permission: String,
    pub risk_score: u8,
    #[serde(default)]
    pub reasoning: Option<String>,
}

#[derive(Debug, Error)]
pub enum ImportError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path} is not a score list: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Cache(#[from] ScorerError),
}

/// Load a JSON list of scores into the cache under `model`.
pub fn import_score_file(
    cache: &RiskCache,
    path: &Path,
    model: &str,
    version: Option<PromptVersion>,
) -> Result<usize, ImportError> {
    let text = std::fs::read_to_string(path).map_err(|source| ImportError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let entries: Vec<ScoreFileEntry> = serde_json::from_str(&text).map_err(|source| ImportError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    for e in &entries {
        cache.upsert(&e.permission, model, e.risk_score, e.reasoning.as_deref(), version, None)?;
    }
    Ok(entries.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::collector::{AppIdentity, AppType};

    #[test]
    fn unknown_permissions_use_fallback() {
        let mut table = ScoreTable::default();
        table.insert("Mail.Read", 3, Some("reads mail".into()));
        let snap = AppConsentSnapshot {
            identity: AppIdentity {
                service_principal_id: "sp".into(),
                app_id: "app".into(),
                display_name: "App".into(),
                publisher_domain: None,
                tenant_owned: false,
            },
            app_type: AppType::External,
            declared: vec![],
            delegated_scopes: vec!["mail.read".into()],
            app_roles: vec!["Tasks.Read".into()],
            consenting_users: vec![],
            collected_at: Utc::now(),
            incomplete: false,
            errors: vec![],
            unresolved: vec![],
        };
        let scored = score_snapshot(&snap, &table, &RuleSet::default(), 3);
        let task = scored.iter().find(|p| p.name == "Tasks.Read").unwrap();
        assert_eq!((task.r, task.from_cache), (3, false));
        let mail = scored.iter().find(|p| p.name == "mail.read").unwrap();
        assert_eq!((mail.r, mail.from_cache), (3, true));
        assert_eq!(mail.reasoning.as_deref(), Some("reads mail"));
    }
}
