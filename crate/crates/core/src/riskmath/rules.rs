use std::sync::LazyLock;

use regex::{Regex, RegexBuilder};
use serde::{Deserialize, Serialize};

use super::RiskMathError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RuleKind {
    Floor,
    Cap,
}

/// A name pattern that pins a permission's score from below (floor) or marks
/// it as constrained (cap). Patterns are matched case-insensitively against
/// the whole permission name.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructuralRule {
    pub pattern: String,
    pub kind: RuleKind,
    pub value: u8,
}

impl StructuralRule {
    pub fn floor(pattern: &str, value: u8) -> Self {
        Self {
            pattern: pattern.to_string(),
            kind: RuleKind::Floor,
            value,
        }
    }

    pub fn cap(pattern: &str) -> Self {
        Self {
            pattern: pattern.to_string(),
            kind: RuleKind::Cap,
            value: 2,
        }
    }

    fn check(&self) -> Result<(), RiskMathError> {
        let ok = match self.kind {
            RuleKind::Floor => matches!(self.value, 4 | 5),
            RuleKind::Cap => self.value == 2,
        };
        if ok {
            Ok(())
        } else {
            Err(RiskMathError::Rule {
                pattern: self.pattern.clone(),
                reason: format!(
                    "{:?} value {} not allowed (floors are 4 or 5, caps are 2)",
                    self.kind, self.value
                ),
            })
        }
    }
}

/// Outcome of running a permission name through a [`RuleSet`].
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Classification {
    /// Highest matching floor, 0 when none matched.
    pub floor: u8,
    pub cap: Option<u8>,
}

#[derive(Debug, Clone)]
pub struct RuleSet {
    rules: Vec<(StructuralRule, Regex)>,
}

impl RuleSet {
    /// The shipped rule list: exactly the enumerated floor and cap families.
    pub fn default_rules() -> Vec<StructuralRule> {
        vec![
            StructuralRule::floor(r".+\.ReadWrite\.All", 5),
            StructuralRule::floor(r"RoleManagement\.ReadWrite\..+", 5),
            StructuralRule::floor(r"Application\.ReadWrite\.All", 5),
            StructuralRule::floor(r"ServicePrincipal\.ReadWrite\.All", 5),
            StructuralRule::floor(r"AppRoleAssignment\.ReadWrite\.All", 5),
            StructuralRule::floor(r"SecurityActions\.ReadWrite\.All", 5),
            StructuralRule::floor(r".*Policy.*ReadWrite.*", 5),
            StructuralRule::floor(r".+\.Read\.All", 4),
            StructuralRule::floor(r"Mail\.Send(\..+)?", 4),
            StructuralRule::floor(r"Chat(Message)?\.Send(\..+)?", 4),
            StructuralRule::cap(r"Files\.ReadWrite\.AppFolder"),
            StructuralRule::cap(r".*createdByApp.*"),
        ]
    }

    pub fn new(rules: Vec<StructuralRule>) -> Result<Self, RiskMathError> {
        let compiled = rules
            .into_iter()
            .map(|rule| {
                rule.check()?;
                let re = RegexBuilder::new(&format!("^(?:{})$", rule.pattern))
                    .case_insensitive(true)
                    .build()
                    .map_err(|e| RiskMathError::Rule {
                        pattern: rule.pattern.clone(),
                        reason: e.to_string(),
                    })?;
                Ok((rule, re))
            })
            .collect::<Result<Vec<_>, RiskMathError>>()?;
        Ok(Self { rules: compiled })
    }

    /// Default rules followed by operator-supplied extensions.
    pub fn with_extensions(extra: &[StructuralRule]) -> Result<Self, RiskMathError> {
        let mut rules = Self::default_rules();
        rules.extend_from_slice(extra);
        Self::new(rules)
    }

    pub fn rules(&self) -> impl Iterator<Item = &StructuralRule> {
        self.rules.iter().map(|(r, _)| r)
    }

    pub fn classify(&self, name: &str) -> Classification {
        let mut out = Classification::default();
        for (rule, re) in &self.rules {
            if !re.is_match(name) {
                continue;
            }
            match rule.kind {
                RuleKind::Floor => out.floor = out.floor.max(rule.value),
                RuleKind::Cap => {
                    out.cap = Some(out.cap.map_or(rule.value, |c| c.min(rule.value)));
                }
            }
        }
        out
    }
}

impl Default for RuleSet {
    fn default() -> Self {
        Self::new(Self::default_rules()).expect("built-in rules compile")
    }
}

static DEFAULT_RULES: LazyLock<RuleSet> = LazyLock::new(RuleSet::default);

/// `(floor, cap)` for `name` under the built-in rule list.
pub fn classify_structural(name: &str) -> (u8, Option<u8>) {
    let c = DEFAULT_RULES.classify(name);
    (c.floor, c.cap)
}
