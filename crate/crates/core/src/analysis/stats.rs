use std::collections::BTreeMap;

use serde::Serialize;
use tracing::warn;

use super::round_half_up;
use crate::scorer::PermissionRiskEntry;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PermissionStats {
    pub permission_name: String,
    pub mean: f64,
    /// Sample standard deviation (n - 1); 0 when `count == 1`.
    pub std: f64,
    pub var: f64,
    pub min: u8,
    pub max: u8,
    pub count: usize,
    /// Set when `count == 1` and the dispersion is 0 by convention.
    pub single_sample: bool,
}

/// Stats for one permission's scores; `None` (with a warning) on an empty group.
pub fn stats_for(permission: &str, scores: &[u8]) -> Option<PermissionStats> {
    if scores.is_empty() {
        warn!(permission, "no scores, skipping");
        return None;
    }
    let n = scores.len() as f64;
    let mean = scores.iter().map(|&s| f64::from(s)).sum::<f64>() / n;
    let var = if scores.len() > 1 {
        scores.iter().map(|&s| (f64::from(s) - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    Some(PermissionStats {
        permission_name: permission.to_string(),
        mean: round_half_up(mean, 2),
        std: round_half_up(var.sqrt(), 2),
        var: round_half_up(var, 2),
        min: *scores.iter().min()?,
        max: *scores.iter().max()?,
        count: scores.len(),
        single_sample: scores.len() == 1,
    })
}

/// One row per permission (case-insensitive grouping), ordered by name.
/// Each entry contributes one score, typically one per model.
pub fn per_permission_stats(entries: &[PermissionRiskEntry]) -> Vec<PermissionStats> {
    let mut groups: BTreeMap<String, (String, Vec<u8>)> = BTreeMap::new();
    for e in entries {
        groups
            .entry(e.permission_name.to_lowercase())
            .or_insert_with(|| (e.permission_name.clone(), Vec::new()))
            .1
            .push(e.risk_score);
    }
    groups
        .into_values()
        .filter_map(|(name, scores)| stats_for(&name, &scores))
        .collect()
}
