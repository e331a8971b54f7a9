use std::collections::HashMap;
use std::path::Path;

use chrono::NaiveDateTime;
use rusqlite::{params, Connection, OptionalExtension, Row};
use serde::Serialize;

use super::{PromptVersion, ScorerError};

const SCHEMA: &str = "
CREATE TABLE IF NOT EXISTS permission_analysis (
    id INTEGER PRIMARY KEY AUTOINCREMENT,
    permission_name TEXT NOT NULL COLLATE NOCASE,
    risk_score INTEGER NOT NULL CHECK (risk_score BETWEEN 1 AND 5),
    model_name TEXT NOT NULL,
    reasoning TEXT NULL,
    created_at TIMESTAMP DEFAULT CURRENT_TIMESTAMP,
    prompt_version TEXT NULL,
    raw_output TEXT NULL,
    UNIQUE(permission_name, model_name)
);
CREATE TABLE IF NOT EXISTS scoring_skips (
    permission_name TEXT NOT NULL COLLATE NOCASE,
    model_name TEXT NOT NULL,
    attempts INTEGER NOT NULL,
    last_error TEXT NOT NULL,
    recorded_at TIMESTAMP DEFAULT CURRENT_TIMESTAMP,
    PRIMARY KEY (permission_name, model_name)
);
";

const TS_FORMAT: &str = "%Y-%m-%d %H:%M:%S";

/// One cached verdict.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PermissionRiskEntry {
    pub permission_name: String,
    pub risk_score: u8,
    pub model_name: String,
    pub reasoning: Option<String>,
    pub created_at: Option<NaiveDateTime>,
    pub prompt_version: Option<PromptVersion>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub raw_output: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SkipRecord {
    pub permission_name: String,
    pub model_name: String,
    pub attempts: u32,
    pub last_error: String,
}

/// Cache key for a model scored under a prompt version. v0 keeps the bare
/// model name so existing datasets load unchanged.
pub fn cache_model_key(model: &str, version: PromptVersion) -> String {
    match version {
        PromptVersion::V0 => model.to_string(),
        PromptVersion::V1 => format!("{model}@v1"),
    }
}

/// SQLite-backed permission risk cache.
pub struct RiskCache {
    conn: Connection,
}

fn entry_from_row(row: &Row<'_>) -> rusqlite::Result<PermissionRiskEntry> {
    let created: Option<String> = row.get("created_at")?;
    let version: Option<String> = row.get("prompt_version")?;
    Ok(PermissionRiskEntry {
        permission_name: row.get("permission_name")?,
        risk_score: row.get("risk_score")?,
        model_name: row.get("model_name")?,
        reasoning: row.get("reasoning")?,
        created_at: created.and_then(|s| NaiveDateTime::parse_from_str(&s, TS_FORMAT).ok()),
        prompt_version: version.and_then(|v| v.parse().ok()),
        raw_output: row.get("raw_output")?,
    })
}

impl RiskCache {
    pub fn open(path: &Path) -> Result<Self, ScorerError> {
        Self::init(Connection::open(path)?)
    }

    pub fn open_in_memory() -> Result<Self, ScorerError> {
        Self::init(Connection::open_in_memory()?)
    }

    fn init(conn: Connection) -> Result<Self, ScorerError> {
        conn.busy_timeout(std::time::Duration::from_secs(10))?;
        // WAL is unavailable for in-memory databases; that is fine.
        let _ = conn.pragma_update(None, "journal_mode", "WAL");
        conn.execute_batch(SCHEMA)?;
        Ok(Self { conn })
    }

    pub fn connection(&self) -> &Connection {
        &self.conn
    }

    /// Case-insensitive on the permission, exact on the model.
    pub fn lookup(&self, permission: &str, model: &str) -> Result<Option<PermissionRiskEntry>, ScorerError> {
        Ok(self
            .conn
            .query_row(
                "SELECT * FROM permission_analysis WHERE permission_name = ?1 AND model_name = ?2",
                params![permission, model],
                entry_from_row,
            )
            .optional()?)
    }

    /// Insert or replace the verdict for `(permission, model)`.
    pub fn upsert(
        &self,
        permission: &str,
        model: &str,
        risk_score: u8,
        reasoning: Option<&str>,
        version: Option<PromptVersion>,
        raw_output: Option<&str>,
    ) -> Result<PermissionRiskEntry, ScorerError> {
        if !(1..=5).contains(&risk_score) {
            return Err(ScorerError::InvalidScore(risk_score));
        }
        self.conn.execute(
            "INSERT INTO permission_analysis
                 (permission_name, risk_score, model_name, reasoning, prompt_version, raw_output)
             VALUES (?1, ?2, ?3, ?4, ?5, ?6)
             ON CONFLICT(permission_name, model_name) DO UPDATE SET
                 risk_score = excluded.risk_score,
                 reasoning = excluded.reasoning,
                 prompt_version = excluded.prompt_version,
                 raw_output = excluded.raw_output,
                 created_at = CURRENT_TIMESTAMP",
            params![permission, risk_score, model, reasoning, version.map(|v| v.as_str()), raw_output],
        )?;
        self.conn.execute(
            "DELETE FROM scoring_skips WHERE permission_name = ?1 AND model_name = ?2",
            params![permission, model],
        )?;
        Ok(self
            .lookup(permission, model)?
            .expect("row just written"))
    }

    pub fn record_skip(&self, permission: &str, model: &str, attempts: u32, error: &str) -> Result<(), ScorerError> {
        self.conn.execute(
            "INSERT INTO scoring_skips (permission_name, model_name, attempts, last_error)
             VALUES (?1, ?2, ?3, ?4)
             ON CONFLICT(permission_name, model_name) DO UPDATE SET
                 attempts = excluded.attempts,
                 last_error = excluded.last_error,
                 recorded_at = CURRENT_TIMESTAMP",
            params![permission, model, attempts, error],
        )?;
        Ok(())
    }

    pub fn skips(&self, model: &str) -> Result<Vec<SkipRecord>, ScorerError> {
        let mut stmt = self.conn.prepare(
            "SELECT permission_name, model_name, attempts, last_error FROM scoring_skips
             WHERE model_name = ?1 ORDER BY permission_name",
        )?;
        let rows = stmt.query_map([model], |r| {
            Ok(SkipRecord {
                permission_name: r.get(0)?,
                model_name: r.get(1)?,
                attempts: r.get(2)?,
                last_error: r.get(3)?,
            })
        })?;
        Ok(rows.collect::<Result<_, _>>()?)
    }

    /// All entries, optionally restricted to one model, ordered by model then id.
    pub fn entries(&self, model: Option<&str>) -> Result<Vec<PermissionRiskEntry>, ScorerError> {
        let mut stmt = self.conn.prepare(
            "SELECT * FROM permission_analysis
             WHERE ?1 IS NULL OR model_name = ?1
             ORDER BY model_name, id",
        )?;
        let rows = stmt.query_map([model], entry_from_row)?;
        Ok(rows.collect::<Result<_, _>>()?)
    }

    pub fn models(&self) -> Result<Vec<String>, ScorerError> {
        let mut stmt = self
            .conn
            .prepare("SELECT DISTINCT model_name FROM permission_analysis ORDER BY model_name")?;
        let rows = stmt.query_map([], |r| r.get(0))?;
        Ok(rows.collect::<Result<_, _>>()?)
    }

    /// In-memory view of one model's scores keyed by lowercased name.
    pub fn score_table(&self, model: &str) -> Result<ScoreTable, ScorerError> {
        let mut map = HashMap::new();
        for e in self.entries(Some(model))? {
            map.insert(e.permission_name.to_lowercase(), (e.risk_score, e.reasoning));
        }
        Ok(ScoreTable { map })
    }
}

/// Read-only snapshot of a score source used during aggregation.
#[derive(Debug, Clone, Default)]
pub struct ScoreTable {
    map: HashMap<String, (u8, Option<String>)>,
}

impl ScoreTable {
    pub fn get(&self, permission: &str) -> Option<(u8, Option<&str>)> {
        self.map
            .get(&permission.to_lowercase())
            .map(|(s, r)| (*s, r.as_deref()))
    }

    pub fn insert(&mut self, permission: &str, score: u8, reasoning: Option<String>) {
        self.map.insert(permission.to_lowercase(), (score, reasoning));
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lookup_folds_permission_case_only() {
        let cache = RiskCache::open_in_memory().unwrap();
        cache.upsert("Mail.Read", "modelA", 3, Some("reads mail"), Some(PromptVersion::V0), None).unwrap();
        let hit = cache.lookup("mail.read", "modelA").unwrap().unwrap();
        assert_eq!(hit.permission_name, "Mail.Read");
        assert_eq!(hit.risk_score, 3);
        assert!(hit.created_at.is_some());
        assert!(cache.lookup("Mail.Send", "modelA").unwrap().is_none());
        assert!(cache.lookup("Mail.Read", "modelB").unwrap().is_none());
        assert!(cache.lookup("Mail.Read", "MODELA").unwrap().is_none());
    }

    #[test]
    fn unique_on_folded_name_and_model() {
        let cache = RiskCache::open_in_memory().unwrap();
        cache.upsert("Mail.Read", "m", 3, None, None, None).unwrap();
        cache.upsert("MAIL.READ", "m", 4, None, None, None).unwrap();
        cache.upsert("Mail.Read", "other", 2, None, None, None).unwrap();
        assert_eq!(cache.entries(Some("m")).unwrap().len(), 1);
        assert_eq!(cache.lookup("mail.read", "m").unwrap().unwrap().risk_score, 4);
        let raw = cache.connection().execute(
            "INSERT INTO permission_analysis (permission_name, risk_score, model_name) VALUES ('mail.READ', 1, 'm')",
            [],
        );
        assert!(raw.is_err());
    }

    #[test]
    fn out_of_range_scores_are_refused() {
        let cache = RiskCache::open_in_memory().unwrap();
        assert!(cache.upsert("X", "m", 0, None, None, None).is_err());
        let raw = cache.connection().execute(
            "INSERT INTO permission_analysis (permission_name, risk_score, model_name) VALUES ('X', 9, 'm')",
            [],
        );
        assert!(raw.is_err());
    }

    #[test]
    fn table_columns_match_layout() {
        let cache = RiskCache::open_in_memory().unwrap();
        let mut stmt = cache.connection().prepare("PRAGMA table_info(permission_analysis)").unwrap();
        let cols: Vec<(String, String, bool, Option<String>)> = stmt
            .query_map([], |r| Ok((r.get(1)?, r.get(2)?, r.get::<_, i64>(3)? == 1, r.get(4)?)))
            .unwrap()
            .collect::<Result<_, _>>()
            .unwrap();
        let head: Vec<_> = cols.iter().take(6).map(|c| (c.0.as_str(), c.1.as_str(), c.2)).collect();
        assert_eq!(
            head,
            vec![
                ("id", "INTEGER", false),
                ("permission_name", "TEXT", true),
                ("risk_score", "INTEGER", true),
                ("model_name", "TEXT", true),
                ("reasoning", "TEXT", false),
                ("created_at", "TIMESTAMP", false),
            ]
        );
        assert_eq!(cols[5].3.as_deref(), Some("CURRENT_TIMESTAMP"));
    }

    #[test]
    fn skips_clear_on_success() {
        let cache = RiskCache::open_in_memory().unwrap();
        cache.record_skip("Bad.Perm", "m", 3, "garbage").unwrap();
        assert_eq!(cache.skips("m").unwrap().len(), 1);
        cache.upsert("bad.perm", "m", 2, None, None, None).unwrap();
        assert!(cache.skips("m").unwrap().is_empty());
    }

    #[test]
    fn model_keys() {
        assert_eq!(cache_model_key("gpt-oss-120b", PromptVersion::V0), "gpt-oss-120b");
        assert_eq!(cache_model_key("gpt-oss-120b", PromptVersion::V1), "gpt-oss-120b@v1");
    }
}
