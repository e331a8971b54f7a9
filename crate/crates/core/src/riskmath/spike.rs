use std::collections::BTreeSet;

use chrono::{DateTime, TimeDelta, Utc};
use serde::{Deserialize, Serialize};

use super::{RiskMathError, ScoredPermission};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpikeConfig {
    /// A permission is a spike when `s >= theta`.
    pub theta: u8,
    pub ratio_threshold: f64,
    pub cooldown_secs: i64,
    /// Spike alerts ignore the minimum alert tier.
    pub bypass_tier_threshold: bool,
}

impl Default for SpikeConfig {
    fn default() -> Self {
        Self {
            theta: 5,
            ratio_threshold: 0.25,
            cooldown_secs: 24 * 3600,
            bypass_tier_threshold: true,
        }
    }
}

impl SpikeConfig {
    pub fn cooldown(&self) -> TimeDelta {
        TimeDelta::seconds(self.cooldown_secs)
    }

    pub fn validate(&self) -> Result<(), RiskMathError> {
        if !(1..=5).contains(&self.theta) {
            return Err(RiskMathError::Spike(format!("theta {} not in 1..=5", self.theta)));
        }
        if !(self.ratio_threshold > 0.0 && self.ratio_threshold <= 1.0) {
            return Err(RiskMathError::Spike(format!(
                "ratio_threshold {} not in (0, 1]",
                self.ratio_threshold
            )));
        }
        if self.cooldown_secs <= 0 {
            return Err(RiskMathError::Spike("cooldown must be positive".into()));
        }
        Ok(())
    }
}

/// Per-application spike memory carried between scans.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpikeState {
    pub last_spike_ts: Option<DateTime<Utc>>,
    pub last_spike_sig: Option<String>,
}

impl SpikeState {
    fn members(&self) -> BTreeSet<String> {
        self.last_spike_sig
            .as_deref()
            .unwrap_or("")
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(str::to_lowercase)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpikeAlert {
    None,
    FirstSpike,
    MultiOrRatioSpike,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpikeDecision {
    pub count_spike: usize,
    pub spike_ratio: f64,
    pub alert: SpikeAlert,
    /// Current spike set, case-folded and sorted.
    pub spike_set: Vec<String>,
    /// Spikes not present in the previous signature.
    pub added: Vec<String>,
    /// Spikes that disappeared since the previous signature.
    pub removed: Vec<String>,
    /// An alert condition held but the cooldown window swallowed it.
    pub suppressed: bool,
    pub new_state: SpikeState,
}

/// Sorted, case-folded, comma-joined names.
pub fn spike_signature<S: AsRef<str>>(names: &[S]) -> String {
    let set: BTreeSet<String> = names.iter().map(|n| n.as_ref().to_lowercase()).collect();
    set.into_iter().collect::<Vec<_>>().join(",")
}

pub fn evaluate_spikes(
    prev: &SpikeState,
    scored: &[ScoredPermission],
    now: DateTime<Utc>,
    config: &SpikeConfig,
) -> SpikeDecision {
    let current: BTreeSet<String> = scored
        .iter()
        .filter(|p| p.s >= config.theta)
        .map(|p| p.name.to_lowercase())
        .collect();
    let previous = prev.members();

    let count_spike = current.len();
    let spike_ratio = if scored.is_empty() {
        0.0
    } else {
        count_spike as f64 / scored.len() as f64
    };
    let grew = current.len() > previous.len() && current.is_superset(&previous);

    let candidate = if previous.is_empty() && count_spike >= 1 {
        if count_spike >= 2 {
            SpikeAlert::MultiOrRatioSpike
        } else {
            SpikeAlert::FirstSpike
        }
    } else if (count_spike >= 2 || spike_ratio >= config.ratio_threshold) && grew {
        SpikeAlert::MultiOrRatioSpike
    } else {
        SpikeAlert::None
    };

    // A strictly larger spike set is new information and skips the cooldown.
    let in_cooldown = prev
        .last_spike_ts
        .is_some_and(|ts| now - ts < config.cooldown());
    let suppressed = candidate != SpikeAlert::None && in_cooldown && !grew;
    let alert = if suppressed { SpikeAlert::None } else { candidate };

    let signature = (!current.is_empty())
        .then(|| current.iter().cloned().collect::<Vec<_>>().join(","));
    let new_state = if alert != SpikeAlert::None {
        SpikeState {
            last_spike_ts: Some(now),
            last_spike_sig: signature,
        }
    } else if current != previous {
        SpikeState {
            last_spike_ts: prev.last_spike_ts,
            last_spike_sig: signature,
        }
    } else {
        prev.clone()
    };

    SpikeDecision {
        count_spike,
        spike_ratio,
        alert,
        added: current.difference(&previous).cloned().collect(),
        removed: previous.difference(&current).cloned().collect(),
        spike_set: current.into_iter().collect(),
        suppressed,
        new_state,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    fn perm(name: &str, s: u8) -> ScoredPermission {
        ScoredPermission::new(name, s, 0, None)
    }

    fn t0() -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2025, 11, 1, 9, 0, 0).unwrap()
    }

    #[test]
    fn signature_is_sorted_and_folded() {
        assert_eq!(spike_signature(&["b.X", "A.y", "a.Y"]), "a.y,b.x");
        assert_eq!(spike_signature::<&str>(&[]), "");
    }

    #[test]
    fn first_spike_then_cooldown() {
        let cfg = SpikeConfig::default();
        let scored = vec![perm("RoleManagement.ReadWrite.Directory", 5), perm("User.Read", 1)];
        let first = evaluate_spikes(&SpikeState::default(), &scored, t0(), &cfg);
        assert_eq!(first.alert, SpikeAlert::FirstSpike);
        assert_eq!(first.count_spike, 1);
        assert_eq!(first.spike_ratio, 0.5);
        assert_eq!(
            first.new_state,
            SpikeState {
                last_spike_ts: Some(t0()),
                last_spike_sig: Some("rolemanagement.readwrite.directory".into()),
            }
        );

        let later = evaluate_spikes(&first.new_state, &scored, t0() + TimeDelta::hours(1), &cfg);
        assert_eq!(later.alert, SpikeAlert::None);
        assert_eq!(later.new_state, first.new_state);
    }

    #[test]
    fn growth_overrides_cooldown() {
        let cfg = SpikeConfig::default();
        let a = evaluate_spikes(&SpikeState::default(), &[perm("A.ReadWrite.All", 5)], t0(), &cfg);
        let b = evaluate_spikes(
            &a.new_state,
            &[perm("A.ReadWrite.All", 5), perm("B.ReadWrite.All", 5)],
            t0() + TimeDelta::hours(2),
            &cfg,
        );
        assert_eq!(b.alert, SpikeAlert::MultiOrRatioSpike);
        assert_eq!(b.added, vec!["b.readwrite.all"]);
        assert_eq!(b.new_state.last_spike_ts, Some(t0() + TimeDelta::hours(2)));
    }

    #[test]
    fn ratio_without_growth_is_quiet() {
        let cfg = SpikeConfig::default();
        let prev = SpikeState {
            last_spike_ts: Some(t0() - TimeDelta::days(3)),
            last_spike_sig: Some("a.readwrite.all".into()),
        };
        let scored = vec![perm("A.ReadWrite.All", 5), perm("B", 1), perm("C", 2), perm("D", 3)];
        let d = evaluate_spikes(&prev, &scored, t0(), &cfg);
        assert_eq!(d.alert, SpikeAlert::None);
        assert_eq!(d.spike_ratio, 0.25);
        assert_eq!(d.new_state, prev);
    }

    #[test]
    fn shrink_updates_signature_keeps_timestamp() {
        let cfg = SpikeConfig::default();
        let prev = SpikeState {
            last_spike_ts: Some(t0()),
            last_spike_sig: Some("a.readwrite.all,b.readwrite.all".into()),
        };
        let d = evaluate_spikes(&prev, &[perm("A.ReadWrite.All", 5)], t0() + TimeDelta::hours(1), &cfg);
        assert_eq!(d.alert, SpikeAlert::None);
        assert_eq!(d.removed, vec!["b.readwrite.all"]);
        assert_eq!(d.new_state.last_spike_ts, Some(t0()));
        assert_eq!(d.new_state.last_spike_sig.as_deref(), Some("a.readwrite.all"));
    }

    #[test]
    fn reemergence_counts_as_growth() {
        let cfg = SpikeConfig::default();
        let spiky = [perm("A.ReadWrite.All", 5)];
        let d1 = evaluate_spikes(&SpikeState::default(), &spiky, t0(), &cfg);
        let d2 = evaluate_spikes(&d1.new_state, &[perm("User.Read", 1)], t0() + TimeDelta::hours(1), &cfg);
        assert_eq!(d2.new_state.last_spike_sig, None);
        let d3 = evaluate_spikes(&d2.new_state, &spiky, t0() + TimeDelta::hours(2), &cfg);
        assert_eq!(d3.alert, SpikeAlert::FirstSpike);
        assert!(!d3.suppressed);
    }

    #[test]
    fn swap_inside_window_is_suppressed() {
        let cfg = SpikeConfig::default();
        let prev = SpikeState {
            last_spike_ts: Some(t0()),
            last_spike_sig: Some("a".into()),
        };
        let d = evaluate_spikes(&prev, &[perm("B", 5)], t0() + TimeDelta::hours(1), &cfg);
        assert_eq!(d.alert, SpikeAlert::None);
        assert_eq!(d.new_state.last_spike_sig.as_deref(), Some("b"));
        assert_eq!(d.new_state.last_spike_ts, Some(t0()));
    }

    #[test]
    fn two_fresh_spikes_are_multiple() {
        let d = evaluate_spikes(
            &SpikeState::default(),
            &[perm("A", 5), perm("B", 5), perm("C", 1)],
            t0(),
            &SpikeConfig::default(),
        );
        assert_eq!(d.alert, SpikeAlert::MultiOrRatioSpike);
    }

    #[test]
    fn empty_permission_set() {
        let d = evaluate_spikes(&SpikeState::default(), &[], t0(), &SpikeConfig::default());
        assert_eq!(d.count_spike, 0);
        assert_eq!(d.spike_ratio, 0.0);
        assert_eq!(d.alert, SpikeAlert::None);
    }

    #[test]
    fn config_validation() {
        assert!(SpikeConfig::default().validate().is_ok());
        let bad = SpikeConfig {
            theta: 6,
            ..SpikeConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = SpikeConfig {
            ratio_threshold: 0.0,
            ..SpikeConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
