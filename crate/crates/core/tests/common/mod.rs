#![allow(dead_code)]

use std::path::PathBuf;

use chrono::{TimeZone, Utc};
use grantscope::alerting::{decide_alerts, Alert, AlertConfig, AlertType};
use grantscope::collector::{AppConsentSnapshot, AppIdentity, AppType};
use grantscope::riskmath::{
    aggregate, evaluate_spikes, RiskParams, RuleSet, ScoredPermission, SpikeConfig, SpikeState, Tier,
};
use grantscope::statestore::{ChangeKind, ChangeType};

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn golden_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

fn snapshot(name: &str, publisher: &str, app_type: AppType) -> AppConsentSnapshot {
    AppConsentSnapshot {
        identity: AppIdentity {
            service_principal_id: "3f2b8c1e-5d4a-4e7b-9c61-0a1b2c3d4e5f".into(),
            app_id: "c7d9e2a4-1b3f-4a6c-8e5d-9f0a1b2c3d4e".into(),
            display_name: name.into(),
            publisher_domain: Some(publisher.into()),
            tenant_owned: app_type == AppType::Internal,
        },
        app_type,
        declared: vec![],
        delegated_scopes: vec![],
        app_roles: vec![],
        consenting_users: vec![],
        collected_at: Utc.with_ymd_and_hms(2025, 11, 3, 8, 0, 0).unwrap(),
        incomplete: false,
        errors: vec![],
        unresolved: vec![],
    }
}

fn scored(perms: &[(&str, u8, &str)]) -> Vec<ScoredPermission> {
    let rules = RuleSet::default();
    perms
        .iter()
        .map(|(n, r, why)| ScoredPermission::classify(*n, *r, &rules).with_reasoning(Some(why.to_string())))
        .collect()
}

/// One representative alert per type, built through the real decision path.
pub fn sample_alert(kind: AlertType) -> Alert {
    let spike_cfg = SpikeConfig::default();
    let now = Utc.with_ymd_and_hms(2025, 11, 3, 8, 0, 0).unwrap();
    let (snap, perms, change, prev_spikes): (_, Vec<(&str, u8, &str)>, _, SpikeState) = match kind {
        AlertType::New => (
            snapshot("Scheduler Pro", "schedulerpro.example", AppType::External),
            vec![
                ("Mail.Read", 3, "Reads the full content of every message in the signed-in user's mailbox."),
                ("Calendars.Read", 2, "Reads calendar entries; exposes meeting subjects and attendees."),
                ("Sites.Read.All", 4, "Reads documents and lists in all site collections."),
                ("offline_access", 1, "Keeps a refresh token so access continues without the user."),
                ("openid", 1, "Sign-in only."),
            ],
            ChangeKind::new_app(),
            SpikeState::default(),
        ),
        AlertType::TierIncrease => (
            snapshot("HR Portal", "contoso.example", AppType::Internal),
            vec![
                ("User.Read", 1, "Reads the signed-in user's basic profile."),
                ("Calendars.Read", 2, "Reads calendar entries; exposes meeting subjects and attendees."),
                ("Mail.Read", 3, "Reads the full content of every message in the signed-in user's mailbox."),
            ],
            ChangeKind {
                kind: ChangeType::Changed,
                added: vec!["Calendars.Read".into(), "Mail.Read".into()],
                removed: vec![],
                previous_tier: Some(Tier::Low),
            },
            SpikeState::default(),
        ),
        AlertType::PermAdded => (
            snapshot("Mailer Bot", "contoso.example", AppType::Internal),
            vec![
                ("Mail.Read", 3, "Reads the full content of every message in the signed-in user's mailbox."),
                ("Mail.Send", 4, "Sends mail as any user; usable for internal phishing."),
                ("offline_access", 1, "Keeps a refresh token so access continues without the user."),
            ],
            ChangeKind {
                kind: ChangeType::Changed,
                added: vec!["Mail.Send".into()],
                removed: vec!["User.Read".into()],
                previous_tier: Some(Tier::Critical),
            },
            SpikeState::default(),
        ),
        AlertType::SpikePresent => (
            snapshot("Notes Helper", "noteshelper.example", AppType::External),
            vec![
                ("Notes.ReadWrite.All", 4, "Reads and writes every notebook the user can reach, including shared ones <all of them>."),
                ("User.Read", 1, "Reads the signed-in user's basic profile."),
                ("openid", 1, "Sign-in only."),
                ("profile", 1, "Basic profile claims."),
            ],
            ChangeKind {
                kind: ChangeType::Changed,
                added: vec!["Notes.ReadWrite.All".into()],
                removed: vec![],
                previous_tier: Some(Tier::Critical),
            },
            SpikeState::default(),
        ),
        AlertType::SpikeMultiple => (
            snapshot("Northwind Directory Sync", "northwind.example", AppType::External),
            vec![
                ("Directory.ReadWrite.All", 4, "Full write access to the directory; can modify users, groups and devices."),
                ("RoleManagement.ReadWrite.Directory", 5, "Can assign any directory role, including Global Administrator. A direct path to tenant takeover that needs no further consent from anyone."),
                ("User.Read.All", 3, "Reads every user profile in the tenant."),
            ],
            ChangeKind {
                kind: ChangeType::Changed,
                added: vec!["RoleManagement.ReadWrite.Directory".into()],
                removed: vec![],
                previous_tier: Some(Tier::Critical),
            },
            SpikeState {
                last_spike_ts: Some(now - chrono::TimeDelta::hours(2)),
                last_spike_sig: Some("directory.readwrite.all".into()),
            },
        ),
    };
    let assessment = aggregate(&scored(&perms), &RiskParams::default());
    let spike = evaluate_spikes(&prev_spikes, &assessment.scored, now, &spike_cfg);
    let config = AlertConfig::default();
    let alerts = decide_alerts(&snap, &change, &assessment, &spike, &config, &spike_cfg);
    assert_eq!(alerts.len(), 1, "{kind}: {alerts:?}");
    let alert = alerts.into_iter().next().unwrap();
    assert_eq!(alert.alert_type, kind);
    alert
}

pub fn golden_path(kind: AlertType) -> PathBuf {
    golden_dir().join(format!("{}.json", kind.as_str()))
}

pub fn render_golden(kind: AlertType) -> String {
    let payload = grantscope::alerting::render_webhook_payload(&sample_alert(kind), 5);
    let mut text = serde_json::to_string_pretty(&payload).unwrap();
    text.push('\n');
    text
}

pub mod tenant {
    use std::path::Path;

    use grantscope::collector::{relative_url, GraphError, GraphTransport, ReplayTransport};
    use grantscope::pipeline::import_score_file;
    use grantscope::scorer::{RiskCache, ScoreTable};
    use rusqlite::Connection;
    use serde_json::{json, Value};

    pub const SCORE_MODEL: &str = "fixture-model";
    pub const NOTES_HELPER_ROLES: &str =
        "/servicePrincipals/5c0ffee0-0000-4000-8000-000000000006/appRoleAssignments";

    pub fn replay() -> ReplayTransport {
        ReplayTransport::open(&super::fixtures().join("tenant")).expect("replay fixture")
    }

    pub fn scores() -> ScoreTable {
        let cache = RiskCache::open_in_memory().unwrap();
        import_score_file(&cache, &super::fixtures().join("risk-scores.json"), SCORE_MODEL, None).unwrap();
        cache.score_table(SCORE_MODEL).unwrap()
    }

    /// Replay with selected URLs answered from memory.
    pub struct Overlay {
        pub inner: ReplayTransport,
        pub pages: Vec<(String, Value)>,
    }

    impl GraphTransport for Overlay {
        fn get(&self, url: &str) -> Result<Value, GraphError> {
            let rel = relative_url(url);
            match self.pages.iter().find(|(u, _)| u == rel) {
                Some((_, v)) => Ok(v.clone()),
                None => self.inner.get(url),
            }
        }
    }

    /// The fixture tenant after Notes Helper is granted RoleManagement.ReadWrite.Directory.
    pub fn notes_helper_escalated() -> Overlay {
        Overlay {
            inner: replay(),
            pages: vec![(
                NOTES_HELPER_ROLES.to_string(),
                json!({"value": [{
                    "id": "ara-06-RoleManagement.ReadWrite.Directory",
                    "principalId": "5c0ffee0-0000-4000-8000-000000000006",
                    "principalType": "ServicePrincipal",
                    "resourceId": "9a1f0d44-7b1e-4c52-9f36-1d2e3a4b5c01",
                    "appRoleId": "9e3f62cf-ca93-4989-b6ce-bf83c28f9fe8",
                    "resourceDisplayName": "Microsoft Graph"
                }]}),
            )],
        }
    }

    /// Application and spike-state rows without `last_seen`. Run history is
    /// append-only and checked separately.
    pub fn dump_state(db: &Path) -> Vec<String> {
        let conn = Connection::open(db).unwrap();
        let mut out = Vec::new();
        for (table, cols) in [
            (
                "applications",
                "app_id, display_name, publisher_domain, type, total_risk, risk_level, permissions",
            ),
            ("last_alerts", "app_id, last_spike_ts, last_spike_sig"),
        ] {
            let mut stmt = conn
                .prepare(&format!("SELECT {cols} FROM {table} ORDER BY 1"))
                .unwrap();
            let n = stmt.column_count();
            let rows = stmt
                .query_map([], |r| {
                    let vals: Vec<String> = (0..n)
                        .map(|i| format!("{:?}", r.get_ref(i).unwrap()))
                        .collect();
                    Ok(format!("{table}: {}", vals.join(" | ")))
                })
                .unwrap();
            out.extend(rows.map(Result::unwrap));
        }
        out
    }
}
