use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::PermissionRecord;

const V0_TEMPLATE: &str = include_str!("../../assets/prompts/v0.txt");
const V1_TEMPLATE: &str = include_str!("../../assets/prompts/v1.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptVersion {
    V0,
    V1,
}

impl PromptVersion {
    pub const ALL: [PromptVersion; 2] = [PromptVersion::V0, PromptVersion::V1];

    pub fn as_str(self) -> &'static str {
        match self {
            PromptVersion::V0 => "v0",
            PromptVersion::V1 => "v1",
        }
    }

    /// Fixed instruction text placed ahead of every record.
    pub fn preamble(self) -> &'static str {
        match self {
            PromptVersion::V0 => V0_TEMPLATE,
            PromptVersion::V1 => V1_TEMPLATE,
        }
    }
}

impl fmt::Display for PromptVersion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PromptVersion {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "v0" | "0" => Ok(PromptVersion::V0),
            "v1" | "1" => Ok(PromptVersion::V1),
            other => Err(format!("unknown prompt version `{other}` (expected v0 or v1)")),
        }
    }
}

/// Preamble followed by the record as pretty JSON. The record is always the
/// tail so every request for one version shares the same prefix.
pub fn build_prompt(record: &PermissionRecord, version: PromptVersion) -> String {
    let payload = serde_json::to_string_pretty(record).expect("record serializes");
    let preamble = version.preamble();
    let mut out = String::with_capacity(preamble.len() + payload.len() + 1);
    out.push_str(preamble);
    if !preamble.ends_with('\n') {
        out.push('\n');
    }
    out.push_str(&payload);
    out
}
