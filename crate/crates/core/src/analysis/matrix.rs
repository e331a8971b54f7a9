use std::collections::BTreeMap;

use serde::Serialize;

use super::AnalysisError;
use crate::scorer::PermissionRiskEntry;

/// Counts indexed by (row score - 1, column score - 1).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ScoreGrid(pub [[usize; 5]; 5]);

impl ScoreGrid {
    fn add(&mut self, row: u8, col: u8) {
        self.0[usize::from(row) - 1][usize::from(col) - 1] += 1;
    }

    pub fn get(&self, row: u8, col: u8) -> usize {
        self.0[usize::from(row) - 1][usize::from(col) - 1]
    }

    pub fn total(&self) -> usize {
        self.0.iter().flatten().sum()
    }

    pub fn diagonal(&self) -> usize {
        (0..5).map(|i| self.0[i][i]).sum()
    }

    pub fn transpose(&self) -> Self {
        let mut out = [[0; 5]; 5];
        for (i, row) in self.0.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                out[j][i] = v;
            }
        }
        Self(out)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AgreementMatrix {
    pub left: String,
    pub right: String,
    pub grid: ScoreGrid,
    /// `|left - right|` -> count; zero bins omitted.
    pub diff_histogram: BTreeMap<u8, usize>,
}

impl AgreementMatrix {
    pub fn shared(&self) -> usize {
        self.grid.total()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TransitionMatrix {
    pub model: String,
    pub grid: ScoreGrid,
    pub higher: usize,
    pub lower: usize,
    pub same: usize,
}

fn by_permission(entries: &[PermissionRiskEntry]) -> Result<BTreeMap<String, u8>, AnalysisError> {
    entries
        .iter()
        .map(|e| {
            if (1..=5).contains(&e.risk_score) {
                Ok((e.permission_name.to_lowercase(), e.risk_score))
            } else {
                Err(AnalysisError::ScoreOutOfRange {
                    permission: e.permission_name.clone(),
                    score: e.risk_score,
                })
            }
        })
        .collect()
}

fn paired(
    left: &[PermissionRiskEntry],
    right: &[PermissionRiskEntry],
    left_label: &str,
    right_label: &str,
) -> Result<Vec<(u8, u8)>, AnalysisError> {
    let l = by_permission(left)?;
    let r = by_permission(right)?;
    let pairs: Vec<_> = l
        .iter()
        .filter_map(|(name, &a)| r.get(name).map(|&b| (a, b)))
        .collect();
    if pairs.is_empty() {
        return Err(AnalysisError::EmptyIntersection {
            left: left_label.into(),
            right: right_label.into(),
        });
    }
    Ok(pairs)
}

fn label(entries: &[PermissionRiskEntry]) -> String {
    entries.first().map(|e| e.model_name.clone()).unwrap_or_default()
}

/// Cross-model confusion over the permissions both sides scored.
pub fn agreement_matrix(
    left: &[PermissionRiskEntry],
    right: &[PermissionRiskEntry],
) -> Result<AgreementMatrix, AnalysisError> {
    let (left_label, right_label) = (label(left), label(right));
    let pairs = paired(left, right, &left_label, &right_label)?;
    let mut grid = ScoreGrid::default();
    let mut diff_histogram = BTreeMap::new();
    for (a, b) in pairs {
        grid.add(a, b);
        *diff_histogram.entry(a.abs_diff(b)).or_insert(0) += 1;
    }
    Ok(AgreementMatrix {
        left: left_label,
        right: right_label,
        grid,
        diff_histogram,
    })
}

/// Old-prompt score to new-prompt score for one model.
pub fn transition_matrix(
    old: &[PermissionRiskEntry],
    new: &[PermissionRiskEntry],
    model: &str,
) -> Result<TransitionMatrix, AnalysisError> {
    let pairs = paired(old, new, &format!("{model} (old)"), &format!("{model} (new)"))?;
    let mut out = TransitionMatrix {
        model: model.into(),
        grid: ScoreGrid::default(),
        higher: 0,
        lower: 0,
        same: 0,
    };
    for (a, b) in pairs {
        out.grid.add(a, b);
        match b.cmp(&a) {
            std::cmp::Ordering::Greater => out.higher += 1,
            std::cmp::Ordering::Less => out.lower += 1,
            std::cmp::Ordering::Equal => out.same += 1,
        }
    }
    Ok(out)
}
