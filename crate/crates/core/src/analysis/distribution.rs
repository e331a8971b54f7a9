use regex::Regex;
use serde::Serialize;

use super::round_half_up;
use crate::scorer::PermissionRiskEntry;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistributionReport {
    pub filter: Option<String>,
    pub total: usize,
    /// Index 0 is score 1.
    pub counts: [usize; 5],
    /// Share of `total` per score, one decimal.
    pub percentages: [f64; 5],
}

impl DistributionReport {
    pub fn from_counts(counts: [usize; 5], filter: Option<String>) -> Self {
        let total: usize = counts.iter().sum();
        let percentages = counts.map(|c| {
            if total == 0 {
                0.0
            } else {
                round_half_up(c as f64 * 100.0 / total as f64, 1)
            }
        });
        Self {
            filter,
            total,
            counts,
            percentages,
        }
    }
}

/// Score histogram over entries whose names match `filter` (unanchored).
pub fn distribution_report(entries: &[PermissionRiskEntry], filter: Option<&Regex>) -> DistributionReport {
    let mut counts = [0usize; 5];
    for e in entries {
        if filter.is_some_and(|re| !re.is_match(&e.permission_name)) {
            continue;
        }
        if let Some(slot) = (e.risk_score as usize).checked_sub(1).and_then(|i| counts.get_mut(i)) {
            *slot += 1;
        }
    }
    DistributionReport::from_counts(counts, filter.map(|re| re.as_str().to_string()))
}
