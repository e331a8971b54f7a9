use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize, Serializer};

use super::{map_tier, power_mean, median, RiskMathError, RuleSet, Tier, TierRepresentatives, TierThresholds};

/// Scope whose presence triggers the persistence bump.
pub const SYNERGY_SCOPE: &str = "offline_access";
/// Minimum floor-adjusted score that must accompany [`SYNERGY_SCOPE`].
pub const SYNERGY_MIN_SCORE: u8 = 3;

/// One granted permission after structural adjustment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredPermission {
    pub name: String,
    /// Base risk from the score source (1..=5).
    pub r: u8,
    /// Structural floor, 0 when no floor rule matched.
    pub f: u8,
    pub c: Option<u8>,
    /// Floor-adjusted score `max(r, f)`.
    pub s: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reasoning: Option<String>,
    /// False when `r` is the unknown-permission default.
    #[serde(default = "yes")]
    pub from_cache: bool,
}

fn yes() -> bool {
    true
}

impl ScoredPermission {
    pub fn new(name: impl Into<String>, r: u8, f: u8, c: Option<u8>) -> Self {
        let r = r.clamp(1, 5);
        Self {
            name: name.into(),
            r,
            f,
            c,
            s: r.max(f),
            reasoning: None,
            from_cache: true,
        }
    }

    /// Classify `name` with `rules` and build the adjusted score.
    pub fn classify(name: impl Into<String>, r: u8, rules: &RuleSet) -> Self {
        let name = name.into();
        let class = rules.classify(&name);
        Self::new(name, r, class.floor, class.cap)
    }

    pub fn with_reasoning(mut self, reasoning: Option<String>) -> Self {
        self.reasoning = reasoning;
        self
    }

    pub fn defaulted(mut self) -> Self {
        self.from_cache = false;
        self
    }

    fn sort_key(&self) -> (String, &str, u8, u8, Option<u8>) {
        (self.name.to_lowercase(), &self.name, self.r, self.f, self.c)
    }
}

/// A rule that changed or annotated the assessment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Modifier {
    Floor { value: u8, permission: String },
    Cap { value: u8, permission: String },
    Synergy,
    Tempering { from: Tier, to: Tier },
}

impl fmt::Display for Modifier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Modifier::Floor { value, permission } => write!(f, "floor={value}: {permission}"),
            Modifier::Cap { value, permission } => write!(f, "cap={value}: {permission}"),
            Modifier::Synergy => write!(f, "synergy: {SYNERGY_SCOPE}+≥{SYNERGY_MIN_SCORE}"),
            Modifier::Tempering { from, to } => write!(f, "cap_tempering: {from}→{to}"),
        }
    }
}

impl Serialize for Modifier {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

/// Tunables for [`aggregate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RiskParams {
    /// Order of the generalized mean.
    pub exponent: f64,
    pub thresholds: TierThresholds,
    pub representatives: TierRepresentatives,
}

impl Default for RiskParams {
    fn default() -> Self {
        Self {
            exponent: 3.0,
            thresholds: TierThresholds::default(),
            representatives: TierRepresentatives::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RiskAssessment {
    /// Input permissions in canonical (case-insensitive name) order.
    pub scored: Vec<ScoredPermission>,
    pub b: f64,
    /// Tier straight from the thresholds, before synergy and tempering.
    pub base_tier: Tier,
    pub tier: Tier,
    pub r_app: f64,
    pub modifiers: Vec<Modifier>,
}

impl RiskAssessment {
    /// Result for an application holding no grants at all.
    pub fn no_permissions() -> Self {
        Self {
            scored: Vec::new(),
            b: 0.0,
            base_tier: Tier::Low,
            tier: Tier::Low,
            r_app: 0.0,
            modifiers: Vec::new(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.scored.is_empty()
    }

    pub fn max_floor(&self) -> u8 {
        self.scored.iter().map(|p| p.f).max().unwrap_or(0)
    }
}

/// `max(median(S), max(S), M_p(S), max_floor)`.
pub fn base_score(scores: &[f64], max_floor: u8, p: f64) -> Result<f64, RiskMathError> {
    if scores.is_empty() {
        return Err(RiskMathError::EmptyInput("base_score"));
    }
    let med = median(scores)?;
    let top = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mean = power_mean(scores, p)?;
    Ok(med.max(top).max(mean).max(f64::from(max_floor)))
}

/// Bump one tier when `offline_access` is granted next to anything scored
/// at least [`SYNERGY_MIN_SCORE`]. `names` and `scores` are aligned.
pub fn apply_synergy<S: AsRef<str>>(tier: Tier, names: &[S], scores: &[u8]) -> Tier {
    let has_offline = names
        .iter()
        .any(|n| n.as_ref().eq_ignore_ascii_case(SYNERGY_SCOPE));
    if has_offline && scores.iter().any(|&x| x >= SYNERGY_MIN_SCORE) {
        tier.bump()
    } else {
        tier
    }
}

/// Pull high/critical down to medium when a cap matched and no floor of 4+
/// was triggered.
pub fn apply_cap_tempering(tier: Tier, any_cap_applied: bool, max_floor: u8) -> Tier {
    if any_cap_applied && max_floor < 4 && tier >= Tier::High {
        Tier::Medium
    } else {
        tier
    }
}

/// Full application risk: base score, tier, synergy, tempering, `r_app`.
pub fn aggregate(scored: &[ScoredPermission], params: &RiskParams) -> RiskAssessment {
    if scored.is_empty() {
        return RiskAssessment::no_permissions();
    }
    let mut scored = scored.to_vec();
    scored.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));

    let s_int: Vec<u8> = scored.iter().map(|p| p.s).collect();
    let s: Vec<f64> = s_int.iter().map(|&x| f64::from(x)).collect();
    let max_floor = scored.iter().map(|p| p.f).max().unwrap_or(0);
    let b = base_score(&s, max_floor, params.exponent).expect("non-empty, positive scores");

    let base_tier = map_tier(b, &params.thresholds);
    let names: Vec<&str> = scored.iter().map(|p| p.name.as_str()).collect();
    let after_synergy = apply_synergy(base_tier, &names, &s_int);
    let any_cap = scored.iter().any(|p| p.c.is_some());
    let tier = apply_cap_tempering(after_synergy, any_cap, max_floor);

    let mut modifiers = Vec::new();
    for p in scored.iter().filter(|p| p.f > 0) {
        modifiers.push(Modifier::Floor {
            value: p.f,
            permission: p.name.clone(),
        });
    }
    for p in &scored {
        if let Some(value) = p.c {
            modifiers.push(Modifier::Cap {
                value,
                permission: p.name.clone(),
            });
        }
    }
    if after_synergy != base_tier {
        modifiers.push(Modifier::Synergy);
    }
    if tier != after_synergy {
        modifiers.push(Modifier::Tempering {
            from: after_synergy,
            to: tier,
        });
    }

    let r_app = b.max(params.representatives.get(tier));
    RiskAssessment {
        scored,
        b,
        base_tier,
        tier,
        r_app,
        modifiers,
    }
}

/// Highest `s` first, ties broken by case-insensitive name.
pub(crate) fn by_risk_desc(a: &ScoredPermission, b: &ScoredPermission) -> Ordering {
    b.s.cmp(&a.s)
        .then_with(|| a.name.to_lowercase().cmp(&b.name.to_lowercase()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn classified(items: &[(&str, u8)]) -> Vec<ScoredPermission> {
        let rules = RuleSet::default();
        items
            .iter()
            .map(|(n, r)| ScoredPermission::classify(*n, *r, &rules))
            .collect()
    }

    #[test]
    fn base_score_examples() {
        assert_eq!(base_score(&[2.0], 0, 3.0).unwrap(), 2.0);
        assert_eq!(base_score(&[3.0, 1.0], 0, 3.0).unwrap(), 3.0);
        assert_eq!(base_score(&[5.0, 1.0, 1.0], 5, 3.0).unwrap(), 5.0);
        assert!(base_score(&[], 0, 3.0).is_err());
    }

    #[test]
    fn synergy_examples() {
        assert_eq!(
            apply_synergy(Tier::Medium, &["Mail.Read", "offline_access"], &[3, 1]),
            Tier::High
        );
        assert_eq!(apply_synergy(Tier::Medium, &["Mail.Read"], &[3]), Tier::Medium);
        assert_eq!(
            apply_synergy(Tier::Critical, &["X.ReadWrite.All", "offline_access"], &[5, 1]),
            Tier::Critical
        );
        assert_eq!(
            apply_synergy(Tier::Low, &["offline_access", "openid"], &[1, 1]),
            Tier::Low
        );
        assert_eq!(
            apply_synergy(Tier::Medium, &["Mail.Read", "OFFLINE_ACCESS"], &[3, 1]),
            Tier::High
        );
    }

    #[test]
    fn tempering_examples() {
        assert_eq!(apply_cap_tempering(Tier::High, true, 0), Tier::Medium);
        assert_eq!(apply_cap_tempering(Tier::Critical, true, 5), Tier::Critical);
        assert_eq!(apply_cap_tempering(Tier::Medium, true, 0), Tier::Medium);
        assert_eq!(apply_cap_tempering(Tier::Critical, false, 0), Tier::Critical);
        assert_eq!(apply_cap_tempering(Tier::Critical, true, 3), Tier::Medium);
    }

    #[test]
    fn oidc_pair_is_low() {
        let a = aggregate(&classified(&[("openid", 1), ("offline_access", 1)]), &RiskParams::default());
        assert_eq!(a.b, 1.0);
        assert_eq!(a.tier, Tier::Low);
        assert_eq!(a.r_app, 1.5);
        assert!(a.modifiers.is_empty());
    }

    #[test]
    fn mail_read_with_offline_access_bumps() {
        let a = aggregate(&classified(&[("Mail.Read", 3), ("offline_access", 1)]), &RiskParams::default());
        assert_eq!(a.b, 3.0);
        assert_eq!(a.base_tier, Tier::Medium);
        assert_eq!(a.tier, Tier::High);
        assert_eq!(a.r_app, 4.0);
        assert_eq!(a.modifiers, vec![Modifier::Synergy]);
        assert_eq!(a.modifiers[0].to_string(), "synergy: offline_access+≥3");
    }

    #[test]
    fn floor_dominates() {
        let a = aggregate(&classified(&[("Directory.ReadWrite.All", 4)]), &RiskParams::default());
        assert_eq!(a.scored[0].s, 5);
        assert_eq!(a.b, 5.0);
        assert_eq!(a.tier, Tier::Critical);
        assert_eq!(a.r_app, 5.0);
        assert_eq!(a.modifiers[0].to_string(), "floor=5: Directory.ReadWrite.All");
    }

    #[test]
    fn cap_tempers_tier_but_not_r_app() {
        let a = aggregate(&classified(&[("Files.ReadWrite.AppFolder", 4)]), &RiskParams::default());
        assert_eq!(a.b, 4.0);
        assert_eq!(a.base_tier, Tier::High);
        assert_eq!(a.tier, Tier::Medium);
        assert_eq!(a.r_app, 4.0);
        assert_eq!(
            a.modifiers.iter().map(ToString::to_string).collect::<Vec<_>>(),
            vec!["cap=2: Files.ReadWrite.AppFolder", "cap_tempering: high→medium"]
        );
    }

    #[test]
    fn empty_set_has_designated_result() {
        let a = aggregate(&[], &RiskParams::default());
        assert_eq!(a, RiskAssessment::no_permissions());
        assert_eq!(a.r_app, 0.0);
        assert_eq!(a.tier, Tier::Low);
    }

    #[test]
    fn input_order_does_not_matter() {
        let mut items = classified(&[("Mail.Read", 3), ("offline_access", 1), ("Chat.Read.All", 2)]);
        let first = aggregate(&items, &RiskParams::default());
        items.reverse();
        assert_eq!(aggregate(&items, &RiskParams::default()), first);
    }
}
