//! LLM-backed permission risk scoring with a persistent cache.

mod cache;
mod endpoint;
mod prompt;
mod response;

use std::collections::HashSet;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;

use serde::Serialize;
use thiserror::Error;
use tracing::{debug, info, warn};

pub use cache::{cache_model_key, PermissionRiskEntry, RiskCache, ScoreTable, SkipRecord};
pub use endpoint::{ChatEndpoint, HttpChatEndpoint, SamplingParams, TransportError};
pub use prompt::{build_prompt, PromptVersion};
pub use response::{parse_model_response, ResponseError, RiskVerdict};

use crate::corpus::PermissionRecord;

pub const DEFAULT_MAX_ATTEMPTS: u32 = 3;

#[derive(Debug, Error)]
pub enum ScorerError {
    #[error("scoring {permission} failed after {attempts} attempts: {last_error}")]
    ScoringFailed {
        permission: String,
        attempts: u32,
        last_error: ResponseError,
    },
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error("risk cache: {0}")]
    Cache(#[from] rusqlite::Error),
    #[error("risk score {0} outside 1..=5")]
    InvalidScore(u8),
}

/// Which model and prompt a batch targets, and how hard to try.
#[derive(Debug, Clone)]
pub struct ScoringJob {
    pub model: String,
    pub version: PromptVersion,
    pub max_attempts: u32,
}

impl ScoringJob {
    pub fn new(model: impl Into<String>, version: PromptVersion) -> Self {
        Self {
            model: model.into(),
            version,
            max_attempts: DEFAULT_MAX_ATTEMPTS,
        }
    }

    pub fn cache_key(&self) -> String {
        cache_model_key(&self.model, self.version)
    }
}

struct Attempted {
    verdict: RiskVerdict,
    raw: String,
}

/// Query the endpoint until a usable verdict arrives or attempts run out.
/// Returns the number of calls made alongside the result.
fn query_with_retries(
    record: &PermissionRecord,
    job: &ScoringJob,
    endpoint: &dyn ChatEndpoint,
) -> (usize, Result<Attempted, ScorerError>) {
    let prompt = build_prompt(record, job.version);
    let mut last = None;
    for attempt in 1..=job.max_attempts.max(1) {
        let raw = match endpoint.complete(&job.model, &prompt) {
            Ok(raw) => raw,
            Err(e) => return (attempt as usize, Err(e.into())),
        };
        match parse_model_response(&raw) {
            Ok(verdict) => return (attempt as usize, Ok(Attempted { verdict, raw })),
            Err(e) => {
                debug!(permission = %record.permission, attempt, error = %e, "unusable model output");
                last = Some(e);
            }
        }
    }
    let attempts = job.max_attempts.max(1);
    (
        attempts as usize,
        Err(ScorerError::ScoringFailed {
            permission: record.permission.clone(),
            attempts,
            last_error: last.expect("at least one attempt"),
        }),
    )
}

fn persist(
    record: &PermissionRecord,
    job: &ScoringJob,
    cache: &RiskCache,
    outcome: Result<Attempted, ScorerError>,
) -> Result<PermissionRiskEntry, ScorerError> {
    match outcome {
        Ok(a) => cache.upsert(
            &record.permission,
            &job.cache_key(),
            a.verdict.risk_score,
            Some(&a.verdict.reasoning),
            Some(job.version),
            Some(&a.raw),
        ),
        Err(ScorerError::ScoringFailed {
            permission,
            attempts,
            last_error,
        }) => {
            cache.record_skip(&permission, &job.cache_key(), attempts, &last_error.to_string())?;
            Err(ScorerError::ScoringFailed {
                permission,
                attempts,
                last_error,
            })
        }
        Err(e) => Err(e),
    }
}

/// Cache hit on `(permission, model)` or absent.
pub fn cache_lookup(
    permission: &str,
    model: &str,
    cache: &RiskCache,
) -> Result<Option<PermissionRiskEntry>, ScorerError> {
    cache.lookup(permission, model)
}

/// Score one permission, going to the endpoint only on a cache miss.
pub fn score_permission(
    record: &PermissionRecord,
    job: &ScoringJob,
    endpoint: &dyn ChatEndpoint,
    cache: &RiskCache,
) -> Result<PermissionRiskEntry, ScorerError> {
    if let Some(hit) = cache.lookup(&record.permission, &job.cache_key())? {
        return Ok(hit);
    }
    let (_, outcome) = query_with_retries(record, job, endpoint);
    persist(record, job, cache, outcome)
}

#[derive(Debug, Clone)]
pub struct BatchOptions {
    /// Maximum in-flight endpoint requests.
    pub concurrency: usize,
    /// Skip permissions already on the skip list for this model.
    pub resume: bool,
}

impl Default for BatchOptions {
    fn default() -> Self {
        Self {
            concurrency: 4,
            resume: false,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct BatchReport {
    pub total: usize,
    pub cache_hits: usize,
    pub scored: usize,
    pub previously_skipped: usize,
    pub endpoint_calls: usize,
    pub failed: Vec<String>,
    pub transport_errors: Vec<(String, String)>,
}

/// Score every record not yet cached for `job`. Endpoint calls run on up to
/// `concurrency` threads; all cache writes happen on the calling thread.
pub fn score_batch(
    records: &[PermissionRecord],
    job: &ScoringJob,
    endpoint: &dyn ChatEndpoint,
    cache: &RiskCache,
    opts: &BatchOptions,
) -> Result<BatchReport, ScorerError> {
    let key = job.cache_key();
    let mut report = BatchReport {
        total: records.len(),
        ..Default::default()
    };
    let skipped: HashSet<String> = if opts.resume {
        cache
            .skips(&key)?
            .into_iter()
            .map(|s| s.permission_name.to_lowercase())
            .collect()
    } else {
        HashSet::new()
    };

    let mut pending = Vec::new();
    for r in records {
        if cache.lookup(&r.permission, &key)?.is_some() {
            report.cache_hits += 1;
        } else if skipped.contains(&r.permission.to_lowercase()) {
            report.previously_skipped += 1;
        } else {
            pending.push(r);
        }
    }
    info!(model = %key, pending = pending.len(), hits = report.cache_hits, "scoring batch");
    if pending.is_empty() {
        return Ok(report);
    }

    let next = AtomicUsize::new(0);
    let workers = opts.concurrency.clamp(1, pending.len());
    std::thread::scope(|scope| -> Result<(), ScorerError> {
        let (tx, rx) = mpsc::channel();
        for _ in 0..workers {
            let tx = tx.clone();
            let pending = &pending;
            let next = &next;
            scope.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(record) = pending.get(i) else { break };
                let result = query_with_retries(record, job, endpoint);
                if tx.send((*record, result)).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        for (record, (calls, outcome)) in rx {
            report.endpoint_calls += calls;
            match persist(record, job, cache, outcome) {
                Ok(_) => report.scored += 1,
                Err(ScorerError::ScoringFailed { permission, .. }) => {
                    warn!(%permission, "discarded after retries");
                    report.failed.push(permission);
                }
                Err(ScorerError::Transport(e)) => {
                    warn!(permission = %record.permission, error = %e, "transport failure");
                    report.transport_errors.push((record.permission.clone(), e.0));
                }
                Err(e) => {
                    // Stop handing out work; the cache itself is broken.
                    next.store(usize::MAX / 2, Ordering::Relaxed);
                    return Err(e);
                }
            }
        }
        Ok(())
    })?;
    report.failed.sort();
    report.transport_errors.sort();
    Ok(report)
}
