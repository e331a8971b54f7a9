//! Deterministic inputs shared by the benches.

use grantscope::riskmath::{RuleSet, ScoredPermission};

const NAMES: [&str; 12] = [
    "User.Read",
    "Mail.Read",
    "offline_access",
    "Directory.ReadWrite.All",
    "Files.ReadWrite.AppFolder",
    "Sites.Read.All",
    "Calendars.Read",
    "Mail.Send",
    "Notes.ReadWrite.CreatedByApp",
    "RoleManagement.ReadWrite.Directory",
    "openid",
    "Policy.ReadWrite.ConditionalAccess",
];

/// `count` classified permissions with scores cycling through 1..=5.
pub fn permission_set(count: usize, rules: &RuleSet) -> Vec<ScoredPermission> {
    (0..count)
        .map(|i| {
            let name = if i < NAMES.len() {
                NAMES[i].to_string()
            } else {
                format!("{}.{i}", NAMES[i % NAMES.len()])
            };
            ScoredPermission::classify(name, (i % 5 + 1) as u8, rules)
        })
        .collect()
}

pub fn reasoning_text(words: usize, seed: usize) -> String {
    const VOCAB: [&str; 16] = [
        "allows", "read", "access", "to", "all", "mail", "files", "the", "tenant", "users", "write", "directory",
        "roles", "grants", "persistent", "tokens",
    ];
    (0..words)
        .map(|i| VOCAB[(i * 7 + seed * 3 + i / 5) % VOCAB.len()])
        .collect::<Vec<_>>()
        .join(" ")
}
