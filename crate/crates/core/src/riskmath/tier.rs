use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::RiskMathError;

/// Categorical application risk, ordered `Low < Medium < High < Critical`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tier {
    Low,
    Medium,
    High,
    Critical,
}

impl Tier {
    pub const ALL: [Tier; 4] = [Tier::Low, Tier::Medium, Tier::High, Tier::Critical];

    pub fn as_str(self) -> &'static str {
        match self {
            Tier::Low => "low",
            Tier::Medium => "medium",
            Tier::High => "high",
            Tier::Critical => "critical",
        }
    }

    /// One step up; critical saturates.
    pub fn bump(self) -> Tier {
        match self {
            Tier::Low => Tier::Medium,
            Tier::Medium => Tier::High,
            Tier::High | Tier::Critical => Tier::Critical,
        }
    }
}

impl fmt::Display for Tier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Tier {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "low" => Ok(Tier::Low),
            "medium" => Ok(Tier::Medium),
            "high" => Ok(Tier::High),
            "critical" => Ok(Tier::Critical),
            other => Err(format!("unknown risk tier `{other}`")),
        }
    }
}

/// Lower edges (inclusive) of the medium, high and critical tiers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TierThresholds {
    pub critical_min: f64,
    pub high_min: f64,
    pub medium_min: f64,
}

impl Default for TierThresholds {
    fn default() -> Self {
        Self {
            critical_min: 4.5,
            high_min: 3.5,
            medium_min: 2.0,
        }
    }
}

impl TierThresholds {
    pub fn validate(&self) -> Result<(), RiskMathError> {
        let ok = self.critical_min > self.high_min
            && self.high_min > self.medium_min
            && self.medium_min > 0.0
            && self.critical_min.is_finite();
        if ok {
            Ok(())
        } else {
            Err(RiskMathError::Thresholds(format!(
                "need critical_min > high_min > medium_min > 0, got {} / {} / {}",
                self.critical_min, self.high_min, self.medium_min
            )))
        }
    }
}

/// Numeric stand-in `m(T)` for each tier, used when reporting `r_app`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TierRepresentatives {
    pub critical: f64,
    pub high: f64,
    pub medium: f64,
    pub low: f64,
}

impl Default for TierRepresentatives {
    fn default() -> Self {
        Self {
            critical: 5.0,
            high: 4.0,
            medium: 2.5,
            low: 1.5,
        }
    }
}

impl TierRepresentatives {
    pub fn get(&self, tier: Tier) -> f64 {
        match tier {
            Tier::Critical => self.critical,
            Tier::High => self.high,
            Tier::Medium => self.medium,
            Tier::Low => self.low,
        }
    }
}

pub fn map_tier(b: f64, thresholds: &TierThresholds) -> Tier {
    if b >= thresholds.critical_min {
        Tier::Critical
    } else if b >= thresholds.high_min {
        Tier::High
    } else if b >= thresholds.medium_min {
        Tier::Medium
    } else {
        Tier::Low
    }
}
