//! Microsoft Graph permission catalog: parsing the reference markdown into
//! [`PermissionRecord`]s and checking the result.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::warn;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("section `{section}` (line {line}): {reason}")]
    Parse {
        section: String,
        line: usize,
        reason: String,
    },
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("corpus json: {0}")]
    Json(#[from] serde_json::Error),
}

/// One Graph permission as documented, with both of its variants.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PermissionRecord {
    pub permission: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub application_guid: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delegated_guid: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub display_application: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub display_delegated: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description_application: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description_delegated: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub admin_consent_application: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub admin_consent_delegated: Option<bool>,
}

impl PermissionRecord {
    pub fn new(permission: impl Into<String>) -> Self {
        Self {
            permission: permission.into(),
            application_guid: None,
            delegated_guid: None,
            display_application: None,
            display_delegated: None,
            description_application: None,
            description_delegated: None,
            admin_consent_application: None,
            admin_consent_delegated: None,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct ParsedReference {
    pub records: Vec<PermissionRecord>,
    pub warnings: Vec<String>,
}

#[derive(Clone, Copy)]
enum Variant {
    Application,
    Delegated,
}

#[derive(Clone, Copy)]
enum Field {
    Identifier,
    DisplayText,
    Description,
    AdminConsent,
}

fn field_for(label: &str) -> Option<Field> {
    match label.to_ascii_lowercase().replace([' ', '_'], "").as_str() {
        "identifier" | "id" => Some(Field::Identifier),
        "displaytext" | "displayname" => Some(Field::DisplayText),
        "description" => Some(Field::Description),
        "adminconsentrequired" | "adminconsent" => Some(Field::AdminConsent),
        _ => None,
    }
}

/// Split a markdown table row, honouring `\|` escapes.
fn split_row(line: &str) -> Vec<String> {
    let body = line.trim();
    let body = body.strip_prefix('|').unwrap_or(body);
    let mut cells = Vec::new();
    let mut cur = String::new();
    let mut chars = body.chars().peekable();
    while let Some(c) = chars.next() {
        match c {
            '\\' if chars.peek() == Some(&'|') => {
                cur.push('|');
                chars.next();
            }
            '|' => cells.push(std::mem::take(&mut cur).trim().to_string()),
            _ => cur.push(c),
        }
    }
    if !cur.trim().is_empty() {
        cells.push(cur.trim().to_string());
    }
    cells
}

fn is_separator(cells: &[String]) -> bool {
    !cells.is_empty()
        && cells
            .iter()
            .all(|c| !c.is_empty() && c.chars().all(|ch| matches!(ch, '-' | ':' | ' ')))
}

fn present(cell: &str) -> Option<String> {
    let v = cell.trim();
    (!v.is_empty() && v != "-").then(|| v.to_string())
}

fn looks_like_permission(heading: &str) -> bool {
    !heading.is_empty()
        && heading
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-'))
}

struct Section<'a> {
    title: String,
    line: usize,
    body: Vec<(usize, &'a str)>,
}

fn sections(doc: &str) -> Vec<Section<'_>> {
    let mut out: Vec<Section<'_>> = Vec::new();
    for (i, line) in doc.lines().enumerate() {
        let t = line.trim_start();
        if let Some(rest) = t.strip_prefix("### ") {
            out.push(Section {
                title: rest.trim().trim_matches('`').to_string(),
                line: i + 1,
                body: Vec::new(),
            });
        } else if t.starts_with('#') && t.trim_start_matches('#').starts_with(' ') {
            // Any other heading level closes the current permission section.
            out.push(Section {
                title: String::new(),
                line: i + 1,
                body: Vec::new(),
            });
        } else if let Some(s) = out.last_mut() {
            s.body.push((i + 1, line));
        }
    }
    out.retain(|s| looks_like_permission(&s.title));
    out
}

fn parse_section(sec: &Section<'_>, warnings: &mut Vec<String>) -> Result<PermissionRecord, CorpusError> {
    let fail = |line: usize, reason: String| CorpusError::Parse {
        section: sec.title.clone(),
        line,
        reason,
    };
    let rows: Vec<(usize, Vec<String>)> = sec
        .body
        .iter()
        .filter(|(_, l)| l.trim_start().starts_with('|'))
        .map(|(n, l)| (*n, split_row(l)))
        .collect();
    let Some((header_line, header)) = rows.first() else {
        return Err(fail(sec.line, "no permission table".into()));
    };
    if !header
        .first()
        .is_some_and(|c| c.eq_ignore_ascii_case("category"))
    {
        return Err(fail(
            *header_line,
            format!("table header must start with `Category`, found {:?}", header.first()),
        ));
    }

    let mut columns: Vec<Option<Variant>> = vec![None];
    for cell in &header[1..] {
        let v = match cell.to_ascii_lowercase().as_str() {
            "application" => Some(Variant::Application),
            "delegated" => Some(Variant::Delegated),
            _ => {
                warnings.push(format!("{}: ignoring column `{cell}`", sec.title));
                None
            }
        };
        columns.push(v);
    }
    if columns.iter().all(Option::is_none) {
        return Err(fail(*header_line, "no Application or Delegated column".into()));
    }

    let mut rec = PermissionRecord::new(sec.title.clone());
    let mut saw_field = false;
    for (line, cells) in rows.iter().skip(1) {
        if is_separator(cells) {
            continue;
        }
        let Some(label) = cells.first() else { continue };
        let Some(field) = field_for(label) else {
            warnings.push(format!("{}: ignoring row `{label}`", sec.title));
            continue;
        };
        saw_field = true;
        for (idx, variant) in columns.iter().enumerate().skip(1) {
            let Some(variant) = variant else { continue };
            let value = cells.get(idx).and_then(|c| present(c));
            match field {
                Field::AdminConsent => {
                    let flag = match value.as_deref().map(str::to_ascii_lowercase).as_deref() {
                        None => None,
                        Some("yes" | "true") => Some(true),
                        Some("no" | "false") => Some(false),
                        Some(other) => {
                            return Err(fail(*line, format!("admin consent value `{other}` is not yes/no")));
                        }
                    };
                    match variant {
                        Variant::Application => rec.admin_consent_application = flag,
                        Variant::Delegated => rec.admin_consent_delegated = flag,
                    }
                }
                _ => {
                    let slot = match (field, variant) {
                        (Field::Identifier, Variant::Application) => &mut rec.application_guid,
                        (Field::Identifier, Variant::Delegated) => &mut rec.delegated_guid,
                        (Field::DisplayText, Variant::Application) => &mut rec.display_application,
                        (Field::DisplayText, Variant::Delegated) => &mut rec.display_delegated,
                        (Field::Description, Variant::Application) => &mut rec.description_application,
                        (Field::Description, Variant::Delegated) => &mut rec.description_delegated,
                        (Field::AdminConsent, _) => unreachable!(),
                    };
                    *slot = value;
                }
            }
        }
    }
    if !saw_field {
        return Err(fail(*header_line, "permission table has no recognised rows".into()));
    }
    Ok(rec)
}

/// Parse the reference document, collecting non-fatal warnings.
pub fn parse_reference_detailed(doc: &str) -> Result<ParsedReference, CorpusError> {
    let mut out = ParsedReference::default();
    let mut seen = HashSet::new();
    for sec in sections(doc) {
        let rec = parse_section(&sec, &mut out.warnings)?;
        if !seen.insert(rec.permission.to_lowercase()) {
            out.warnings
                .push(format!("duplicate section `{}` ignored", rec.permission));
            continue;
        }
        out.records.push(rec);
    }
    for w in &out.warnings {
        warn!(target: "corpus", "{w}");
    }
    Ok(out)
}

/// One record per unique permission, in document order.
pub fn parse_permission_reference(doc: &str) -> Result<Vec<PermissionRecord>, CorpusError> {
    parse_reference_detailed(doc).map(|p| p.records)
}

pub fn load_reference(path: &Path) -> Result<Vec<PermissionRecord>, CorpusError> {
    let doc = std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_permission_reference(&doc)
}

/// Canonical corpus file: a pretty-printed JSON array.
pub fn to_canonical_json(records: &[PermissionRecord]) -> String {
    serde_json::to_string_pretty(records).expect("records always serialize")
}

pub fn from_canonical_json(text: &str) -> Result<Vec<PermissionRecord>, CorpusError> {
    Ok(serde_json::from_str(text)?)
}

pub fn load_corpus(path: &Path) -> Result<Vec<PermissionRecord>, CorpusError> {
    let text = std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    from_canonical_json(&text)
}

/// Render records back into the reference layout.
pub fn render_reference(records: &[PermissionRecord]) -> String {
    fn cell(v: &Option<String>) -> String {
        v.as_deref().map_or("-".into(), |s| s.replace('|', "\\|"))
    }
    fn flag(v: Option<bool>) -> &'static str {
        match v {
            Some(true) => "Yes",
            Some(false) => "No",
            None => "-",
        }
    }
    let mut out = String::new();
    for r in records {
        let _ = writeln!(out, "### {}\n", r.permission);
        out.push_str("| Category | Application | Delegated |\n|--|--|--|\n");
        let _ = writeln!(out, "| Identifier | {} | {} |", cell(&r.application_guid), cell(&r.delegated_guid));
        let _ = writeln!(out, "| DisplayText | {} | {} |", cell(&r.display_application), cell(&r.display_delegated));
        let _ = writeln!(
            out,
            "| Description | {} | {} |",
            cell(&r.description_application),
            cell(&r.description_delegated)
        );
        let _ = writeln!(
            out,
            "| AdminConsentRequired | {} | {} |\n\n---\n",
            flag(r.admin_consent_application),
            flag(r.admin_consent_delegated)
        );
    }
    out
}

/// Canonical 8-4-4-4-12 hex form.
pub fn is_canonical_guid(s: &str) -> bool {
    let groups: Vec<&str> = s.split('-').collect();
    groups.len() == 5
        && groups
            .iter()
            .zip([8, 4, 4, 4, 12])
            .all(|(g, n)| g.len() == n && g.chars().all(|c| c.is_ascii_hexdigit()))
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct MalformedGuid {
    pub permission: String,
    pub value: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub record_count: usize,
    /// Names that collide with an earlier record after case folding.
    pub duplicates: Vec<String>,
    pub malformed_guids: Vec<MalformedGuid>,
    pub missing_guids: Vec<String>,
    pub empty_names: usize,
}

impl ValidationReport {
    pub fn is_accepted(&self) -> bool {
        self.duplicates.is_empty()
            && self.malformed_guids.is_empty()
            && self.missing_guids.is_empty()
            && self.empty_names == 0
    }
}

pub fn validate_corpus(records: &[PermissionRecord]) -> ValidationReport {
    let mut report = ValidationReport {
        record_count: records.len(),
        ..Default::default()
    };
    let mut seen = HashSet::new();
    for r in records {
        if r.permission.trim().is_empty() {
            report.empty_names += 1;
        } else if !seen.insert(r.permission.to_lowercase()) {
            report.duplicates.push(r.permission.clone());
        }
        if r.application_guid.is_none() && r.delegated_guid.is_none() {
            report.missing_guids.push(r.permission.clone());
        }
        for g in [&r.application_guid, &r.delegated_guid].into_iter().flatten() {
            if !is_canonical_guid(g) {
                report.malformed_guids.push(MalformedGuid {
                    permission: r.permission.clone(),
                    value: g.clone(),
                });
            }
        }
    }
    report
}
