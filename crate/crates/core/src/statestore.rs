//! Durable scan state: application profiles, run history and spike memory.

use std::collections::HashSet;
use std::fs::{File, OpenOptions};
use std::path::{Path, PathBuf};

use chrono::{DateTime, NaiveDateTime, SecondsFormat, Utc};
use rusqlite::{params, Connection, OptionalExtension, Transaction};
use serde::Serialize;
use thiserror::Error;
use tracing::warn;

use crate::collector::{normalize_names, AppConsentSnapshot};
use crate::riskmath::{RiskAssessment, SpikeState, Tier};

const SCHEMA: &str = "
CREATE TABLE IF NOT EXISTS applications (
    id INTEGER PRIMARY KEY AUTOINCREMENT,
    app_id TEXT NOT NULL UNIQUE,
    display_name TEXT,
    publisher_domain TEXT,
    type TEXT,
    total_risk REAL,
    risk_level TEXT,
    permissions TEXT,
    last_seen TIMESTAMP DEFAULT CURRENT_TIMESTAMP
);
CREATE TABLE IF NOT EXISTS run_metadata (
    id INTEGER PRIMARY KEY AUTOINCREMENT,
    run_time TIMESTAMP DEFAULT CURRENT_TIMESTAMP,
    total_apps INTEGER,
    new_apps INTEGER,
    changed_apps INTEGER
);
CREATE TABLE IF NOT EXISTS last_alerts (
    app_id TEXT NOT NULL PRIMARY KEY,
    last_spike_ts TEXT,
    last_spike_sig TEXT
);
CREATE INDEX IF NOT EXISTS idx_apps_last_seen ON applications(last_seen);
CREATE UNIQUE INDEX IF NOT EXISTS idx_apps_appid ON applications(app_id);
";

const TS_FORMAT: &str = "%Y-%m-%d %H:%M:%S";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("state store: {0}")]
    Sql(#[from] rusqlite::Error),
    #[error("state store {0} is locked by another scan")]
    Locked(PathBuf),
    #[error("state lock {path}: {source}")]
    LockIo {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("stored permissions for {app_id} are not a JSON array: {reason}")]
    CorruptPermissions { app_id: String, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ChangeType {
    New,
    Changed,
    Unchanged,
}

/// What moved for one application since the previous run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ChangeKind {
    pub kind: ChangeType,
    pub added: Vec<String>,
    pub removed: Vec<String>,
    pub previous_tier: Option<Tier>,
}

impl ChangeKind {
    pub fn new_app() -> Self {
        Self {
            kind: ChangeType::New,
            added: Vec::new(),
            removed: Vec::new(),
            previous_tier: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ApplicationRow {
    pub app_id: String,
    pub display_name: Option<String>,
    pub publisher_domain: Option<String>,
    pub app_type: Option<String>,
    pub total_risk: Option<f64>,
    pub risk_level: Option<String>,
    pub permissions: Vec<String>,
    pub last_seen: Option<NaiveDateTime>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RunMetadataRow {
    pub id: i64,
    pub run_time: Option<NaiveDateTime>,
    pub total_apps: i64,
    pub new_apps: i64,
    pub changed_apps: i64,
}

/// `added = current \ previous`, `removed = previous \ current`, compared
/// without case. Each side keeps its own spelling and order.
pub fn diff_permissions<S: AsRef<str>>(previous: &[S], current: &[S]) -> (Vec<String>, Vec<String>) {
    let prev: HashSet<String> = previous.iter().map(|s| s.as_ref().to_lowercase()).collect();
    let cur: HashSet<String> = current.iter().map(|s| s.as_ref().to_lowercase()).collect();
    let added = current
        .iter()
        .filter(|s| !prev.contains(&s.as_ref().to_lowercase()))
        .map(|s| s.as_ref().to_string())
        .collect();
    let removed = previous
        .iter()
        .filter(|s| !cur.contains(&s.as_ref().to_lowercase()))
        .map(|s| s.as_ref().to_string())
        .collect();
    (added, removed)
}

fn fmt_ts(at: DateTime<Utc>) -> String {
    at.naive_utc().format(TS_FORMAT).to_string()
}

fn parse_ts(s: Option<String>) -> Option<NaiveDateTime> {
    s.and_then(|s| NaiveDateTime::parse_from_str(&s, TS_FORMAT).ok())
}

pub struct StateStore {
    conn: Connection,
    _lock: Option<File>,
}

impl StateStore {
    /// Open (or create) the store and take the single-writer lock.
    pub fn open(path: &Path) -> Result<Self, StoreError> {
        let lock_path = path.with_extension("lock");
        let lock = OpenOptions::new()
            .create(true)
            .truncate(false)
            .write(true)
            .open(&lock_path)
            .map_err(|source| StoreError::LockIo {
                path: lock_path.clone(),
                source,
            })?;
        match lock.try_lock() {
            Ok(()) => {}
            Err(std::fs::TryLockError::WouldBlock) => return Err(StoreError::Locked(path.to_path_buf())),
            Err(std::fs::TryLockError::Error(source)) => {
                return Err(StoreError::LockIo {
                    path: lock_path,
                    source,
                })
            }
        }
        let conn = Connection::open(path)?;
        conn.busy_timeout(std::time::Duration::from_secs(10))?;
        conn.execute_batch(SCHEMA)?;
        Ok(Self {
            conn,
            _lock: Some(lock),
        })
    }

    /// Read-only access that skips the writer lock.
    pub fn open_read_only(path: &Path) -> Result<Self, StoreError> {
        let conn = Connection::open_with_flags(path, rusqlite::OpenFlags::SQLITE_OPEN_READ_ONLY)?;
        Ok(Self { conn, _lock: None })
    }

    pub fn open_in_memory() -> Result<Self, StoreError> {
        let conn = Connection::open_in_memory()?;
        conn.execute_batch(SCHEMA)?;
        Ok(Self { conn, _lock: None })
    }

    pub fn connection(&self) -> &Connection {
        &self.conn
    }

    fn previous(tx: &Connection, app_id: &str) -> Result<Option<(Vec<String>, Option<Tier>)>, StoreError> {
        let row: Option<(Option<String>, Option<String>)> = tx
            .query_row(
                "SELECT permissions, risk_level FROM applications WHERE app_id = ?1",
                [app_id],
                |r| Ok((r.get(0)?, r.get(1)?)),
            )
            .optional()?;
        let Some((perms, level)) = row else { return Ok(None) };
        let perms = match perms {
            None => Vec::new(),
            Some(text) => serde_json::from_str::<Vec<String>>(&text).map_err(|e| StoreError::CorruptPermissions {
                app_id: app_id.to_string(),
                reason: e.to_string(),
            })?,
        };
        let tier = level.as_deref().and_then(|l| match l.parse::<Tier>() {
            Ok(t) => Some(t),
            Err(_) => {
                warn!(app_id, level = l, "ignoring unreadable stored risk level");
                None
            }
        });
        Ok(Some((perms, tier)))
    }

    fn upsert_in(
        tx: &Transaction<'_>,
        snapshot: &AppConsentSnapshot,
        assessment: &RiskAssessment,
        now: DateTime<Utc>,
    ) -> Result<ChangeKind, StoreError> {
        let id = &snapshot.identity;
        let current = normalize_names(assessment.scored.iter().map(|p| p.name.as_str()));
        let change = match Self::previous(tx, &id.app_id)? {
            None => ChangeKind::new_app(),
            Some((prev_perms, prev_tier)) => {
                let (added, removed) = diff_permissions(&prev_perms, &current);
                let same = added.is_empty() && removed.is_empty() && prev_tier == Some(assessment.tier);
                ChangeKind {
                    kind: if same { ChangeType::Unchanged } else { ChangeType::Changed },
                    added,
                    removed,
                    previous_tier: prev_tier,
                }
            }
        };
        tx.execute(
            "INSERT INTO applications
                 (app_id, display_name, publisher_domain, type, total_risk, risk_level, permissions, last_seen)
             VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7, ?8)
             ON CONFLICT(app_id) DO UPDATE SET
                 display_name = excluded.display_name,
                 publisher_domain = excluded.publisher_domain,
                 type = excluded.type,
                 total_risk = excluded.total_risk,
                 risk_level = excluded.risk_level,
                 permissions = excluded.permissions,
                 last_seen = excluded.last_seen",
            params![
                id.app_id,
                id.display_name,
                id.publisher_domain,
                snapshot.app_type.as_str(),
                assessment.r_app,
                assessment.tier.as_str(),
                serde_json::to_string(&current).expect("strings serialize"),
                fmt_ts(now),
            ],
        )?;
        Ok(change)
    }

    fn save_spike_in(conn: &Connection, app_id: &str, state: &SpikeState) -> Result<(), StoreError> {
        conn.execute(
            "INSERT INTO last_alerts (app_id, last_spike_ts, last_spike_sig) VALUES (?1, ?2, ?3)
             ON CONFLICT(app_id) DO UPDATE SET
                 last_spike_ts = excluded.last_spike_ts,
                 last_spike_sig = excluded.last_spike_sig",
            params![
                app_id,
                state.last_spike_ts.map(|t| t.to_rfc3339_opts(SecondsFormat::Secs, true)),
                state.last_spike_sig,
            ],
        )?;
        Ok(())
    }

    /// Insert or update the application row and report the delta.
    pub fn upsert_application(
        &mut self,
        snapshot: &AppConsentSnapshot,
        assessment: &RiskAssessment,
        now: DateTime<Utc>,
    ) -> Result<ChangeKind, StoreError> {
        let tx = self.conn.transaction()?;
        let change = Self::upsert_in(&tx, snapshot, assessment, now)?;
        tx.commit()?;
        Ok(change)
    }

    /// Application row and spike state in one transaction.
    pub fn commit_app(
        &mut self,
        snapshot: &AppConsentSnapshot,
        assessment: &RiskAssessment,
        spike: &SpikeState,
        now: DateTime<Utc>,
    ) -> Result<ChangeKind, StoreError> {
        let tx = self.conn.transaction()?;
        let change = Self::upsert_in(&tx, snapshot, assessment, now)?;
        let stored = Self::load_spike_in(&tx, &snapshot.identity.app_id)?;
        if stored != *spike {
            Self::save_spike_in(&tx, &snapshot.identity.app_id, spike)?;
        }
        tx.commit()?;
        Ok(change)
    }

    /// Delta against the stored row without writing anything.
    pub fn peek_change(&self, snapshot: &AppConsentSnapshot, assessment: &RiskAssessment) -> Result<ChangeKind, StoreError> {
        let current = normalize_names(assessment.scored.iter().map(|p| p.name.as_str()));
        Ok(match Self::previous(&self.conn, &snapshot.identity.app_id)? {
            None => ChangeKind::new_app(),
            Some((prev, tier)) => {
                let (added, removed) = diff_permissions(&prev, &current);
                let same = added.is_empty() && removed.is_empty() && tier == Some(assessment.tier);
                ChangeKind {
                    kind: if same { ChangeType::Unchanged } else { ChangeType::Changed },
                    added,
                    removed,
                    previous_tier: tier,
                }
            }
        })
    }

    pub fn record_run(&mut self, total: usize, new: usize, changed: usize, now: DateTime<Utc>) -> Result<(), StoreError> {
        self.conn.execute(
            "INSERT INTO run_metadata (run_time, total_apps, new_apps, changed_apps) VALUES (?1, ?2, ?3, ?4)",
            params![fmt_ts(now), total as i64, new as i64, changed as i64],
        )?;
        Ok(())
    }

    pub fn runs(&self) -> Result<Vec<RunMetadataRow>, StoreError> {
        let mut stmt = self.conn.prepare(
            "SELECT id, run_time, total_apps, new_apps, changed_apps FROM run_metadata ORDER BY run_time, id",
        )?;
        let rows = stmt.query_map([], |r| {
            Ok(RunMetadataRow {
                id: r.get(0)?,
                run_time: parse_ts(r.get(1)?),
                total_apps: r.get::<_, Option<i64>>(2)?.unwrap_or(0),
                new_apps: r.get::<_, Option<i64>>(3)?.unwrap_or(0),
                changed_apps: r.get::<_, Option<i64>>(4)?.unwrap_or(0),
            })
        })?;
        Ok(rows.collect::<Result<_, _>>()?)
    }

    fn load_spike_in(conn: &Connection, app_id: &str) -> Result<SpikeState, StoreError> {
        let row: Option<(Option<String>, Option<String>)> = conn
            .query_row(
                "SELECT last_spike_ts, last_spike_sig FROM last_alerts WHERE app_id = ?1",
                [app_id],
                |r| Ok((r.get(0)?, r.get(1)?)),
            )
            .optional()?;
        let Some((ts, sig)) = row else {
            return Ok(SpikeState::default());
        };
        let ts = ts.and_then(|t| match DateTime::parse_from_rfc3339(&t) {
            Ok(d) => Some(d.with_timezone(&Utc)),
            Err(_) => {
                warn!(app_id, ts = t, "ignoring unreadable spike timestamp");
                None
            }
        });
        Ok(SpikeState {
            last_spike_ts: ts,
            last_spike_sig: sig.filter(|s| !s.is_empty()),
        })
    }

    pub fn load_spike_state(&self, app_id: &str) -> Result<SpikeState, StoreError> {
        Self::load_spike_in(&self.conn, app_id)
    }

    pub fn save_spike_state(&mut self, app_id: &str, state: &SpikeState) -> Result<(), StoreError> {
        Self::save_spike_in(&self.conn, app_id, state)
    }

    pub fn applications(&self) -> Result<Vec<ApplicationRow>, StoreError> {
        let mut stmt = self.conn.prepare(
            "SELECT app_id, display_name, publisher_domain, type, total_risk, risk_level, permissions, last_seen
             FROM applications ORDER BY app_id",
        )?;
        let rows = stmt.query_map([], |r| {
            Ok((
                ApplicationRow {
                    app_id: r.get(0)?,
                    display_name: r.get(1)?,
                    publisher_domain: r.get(2)?,
                    app_type: r.get(3)?,
                    total_risk: r.get(4)?,
                    risk_level: r.get(5)?,
                    permissions: Vec::new(),
                    last_seen: parse_ts(r.get(7)?),
                },
                r.get::<_, Option<String>>(6)?,
            ))
        })?;
        rows.map(|row| {
            let (mut app, perms) = row?;
            if let Some(text) = perms {
                app.permissions = serde_json::from_str(&text).map_err(|e| StoreError::CorruptPermissions {
                    app_id: app.app_id.clone(),
                    reason: e.to_string(),
                })?;
            }
            Ok(app)
        })
        .collect()
    }
}
