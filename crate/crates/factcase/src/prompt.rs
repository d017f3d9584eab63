//! Prompt construction and structured output parsing.
//!
//! Each agent role gets a four-part template (role assignment, output
//! formation, task instruction, input wrapper) rendered into a
//! (system, user) text pair. Model output comes back through
//! [`parse_agent_output`], which extracts the `LABEL:` / `WINNER:` marker
//! lines the output-formation part demands.
//!
//! Rendering and parsing are pure; templates are immutable after load.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use crate::model::{Channel, Verdict};

/// The five agent roles of the pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AgentRole {
    OrdinaryAnalyst,
    SpecialAnalyst,
    Reflector,
    Advisor,
    Judger,
}

impl AgentRole {
    pub const ALL: [AgentRole; 5] = [
        AgentRole::OrdinaryAnalyst,
        AgentRole::SpecialAnalyst,
        AgentRole::Reflector,
        AgentRole::Advisor,
        AgentRole::Judger,
    ];

    /// Template file stem for this role.
    pub fn as_str(self) -> &'static str {
        match self {
            AgentRole::OrdinaryAnalyst => "ordinary_analyst",
            AgentRole::SpecialAnalyst => "special_analyst",
            AgentRole::Reflector => "reflector",
            AgentRole::Advisor => "advisor",
            AgentRole::Judger => "judger",
        }
    }
}

impl fmt::Display for AgentRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A four-part prompt template with `{{slot}}` placeholders.
#[derive(Debug, Clone)]
pub struct PromptTemplate {
    pub role_assignment: String,
    pub output_formation: String,
    pub task_instruction: String,
    pub input_wrapper: String,
}

const SECTION_NAMES: [&str; 4] = [
    "role_assignment",
    "output_formation",
    "task_instruction",
    "input_wrapper",
];

impl PromptTemplate {
    /// Parse the `[section]`-delimited template format. All four parts are
    /// required and must be nonempty.
    pub fn parse(text: &str) -> Result<PromptTemplate, PromptError> {
        let mut sections: BTreeMap<String, String> = BTreeMap::new();
        let mut current: Option<String> = None;
        for line in text.lines() {
            let trimmed = line.trim();
            if trimmed.starts_with('[') && trimmed.ends_with(']') {
                let name = trimmed[1..trimmed.len() - 1].trim().to_string();
                if !SECTION_NAMES.contains(&name.as_str()) {
                    return Err(PromptError::BadTemplate(format!(
                        "unknown section [{name}]"
                    )));
                }
                current = Some(name.clone());
                sections.entry(name).or_default();
                continue;
            }
            if let Some(name) = &current {
                let buf = sections.get_mut(name).expect("section exists");
                if !buf.is_empty() {
                    buf.push('\n');
                }
                buf.push_str(line);
            } else if !trimmed.is_empty() {
                return Err(PromptError::BadTemplate(format!(
                    "text before first section header: {trimmed:?}"
                )));
            }
        }
        let mut take = |name: &str| -> Result<String, PromptError> {
            let value = sections.remove(name).map(|s| s.trim().to_string());
            match value {
                Some(v) if !v.is_empty() => Ok(v),
                _ => Err(PromptError::BadTemplate(format!(
                    "missing or empty section [{name}]"
                ))),
            }
        };
        Ok(PromptTemplate {
            role_assignment: take("role_assignment")?,
            output_formation: take("output_formation")?,
            task_instruction: take("task_instruction")?,
            input_wrapper: take("input_wrapper")?,
        })
    }

    /// Slot names referenced anywhere in the four parts.
    pub fn referenced_slots(&self) -> Vec<String> {
        let mut out = Vec::new();
        for part in [
            &self.role_assignment,
            &self.output_formation,
            &self.task_instruction,
            &self.input_wrapper,
        ] {
            scan_slots(part, &mut out);
        }
        out.sort();
        out.dedup();
        out
    }
}

fn scan_slots(text: &str, out: &mut Vec<String>) {
    let mut rest = text;
    while let Some(start) = rest.find("{{") {
        let after = &rest[start + 2..];
        match after.find("}}") {
            Some(end) => {
                out.push(after[..end].trim().to_string());
                rest = &after[end + 2..];
            }
            None => break,
        }
    }
}

/// Marker appended when the evidence slot exceeds its character budget.
pub const TRUNCATION_MARKER: &str = "\n[evidence truncated]";

/// Slot name subject to the character budget.
const EVIDENCE_SLOT: &str = "evidence";

pub const DEFAULT_EVIDENCE_CHAR_BUDGET: usize = 20_000;

/// The loaded template collection for all five roles plus the static
/// fallback advice used when no experiences are available.
pub struct TemplateSet {
    templates: BTreeMap<AgentRole, PromptTemplate>,
    fallback_advice: String,
    evidence_char_budget: usize,
}

impl TemplateSet {
    /// The templates compiled into the binary.
    pub fn builtin() -> TemplateSet {
        let mut templates = BTreeMap::new();
        for (role, text) in [
            (
                AgentRole::OrdinaryAnalyst,
                include_str!("../templates/ordinary_analyst.tmpl"),
            ),
            (
                AgentRole::SpecialAnalyst,
                include_str!("../templates/special_analyst.tmpl"),
            ),
            (
                AgentRole::Reflector,
                include_str!("../templates/reflector.tmpl"),
            ),
            (
                AgentRole::Advisor,
                include_str!("../templates/advisor.tmpl"),
            ),
            (AgentRole::Judger, include_str!("../templates/judger.tmpl")),
        ] {
            templates.insert(role, PromptTemplate::parse(text).expect("builtin template"));
        }
        TemplateSet {
            templates,
            fallback_advice: include_str!("../templates/advice_fallback.txt")
                .trim()
                .to_string(),
            evidence_char_budget: DEFAULT_EVIDENCE_CHAR_BUDGET,
        }
    }

    /// Load templates from a directory of `<role>.tmpl` files. Roles
    /// without a file keep the builtin template, so a directory can
    /// override selectively (e.g. per-language analyst prompts).
    pub fn load_dir(dir: &Path) -> Result<TemplateSet, PromptError> {
        let mut set = TemplateSet::builtin();
        if !dir.is_dir() {
            return Err(PromptError::BadTemplate(format!(
                "template directory {} does not exist",
                dir.display()
            )));
        }
        for role in AgentRole::ALL {
            let path = dir.join(format!("{}.tmpl", role.as_str()));
            if path.exists() {
                let text = std::fs::read_to_string(&path).map_err(|e| {
                    PromptError::BadTemplate(format!("cannot read {}: {e}", path.display()))
                })?;
                let template = PromptTemplate::parse(&text)
                    .map_err(|e| PromptError::BadTemplate(format!("{}: {e}", path.display())))?;
                set.templates.insert(role, template);
            }
        }
        let fallback = dir.join("advice_fallback.txt");
        if fallback.exists() {
            let text = std::fs::read_to_string(&fallback).map_err(|e| {
                PromptError::BadTemplate(format!("cannot read {}: {e}", fallback.display()))
            })?;
            let text = text.trim().to_string();
            if text.is_empty() {
                return Err(PromptError::BadTemplate(
                    "advice_fallback.txt is empty".into(),
                ));
            }
            set.fallback_advice = text;
        }
        Ok(set)
    }

    pub fn with_evidence_char_budget(mut self, budget: usize) -> TemplateSet {
        self.evidence_char_budget = budget;
        self
    }

    pub fn template(&self, role: AgentRole) -> Result<&PromptTemplate, PromptError> {
        self.templates
            .get(&role)
            .ok_or_else(|| PromptError::UnknownRole(role.to_string()))
    }

    /// Static criteria text used when the knowledge base yields nothing.
    pub fn fallback_advice(&self) -> &str {
        &self.fallback_advice
    }

    /// Render the role's template into a (system, user) pair. Slot values
    /// are inserted verbatim; the evidence slot is truncated to the
    /// configured character budget with [`TRUNCATION_MARKER`] appended.
    pub fn render(
        &self,
        role: AgentRole,
        slots: &BTreeMap<String, String>,
    ) -> Result<(String, String), PromptError> {
        let template = self.template(role)?;
        for name in template.referenced_slots() {
            if !slots.contains_key(&name) {
                return Err(PromptError::MissingSlot {
                    role: role.to_string(),
                    slot: name,
                });
            }
        }
        let fill = |part: &str| -> String {
            let mut text = part.to_string();
            for (name, value) in slots {
                let needle = format!("{{{{{name}}}}}");
                if !text.contains(&needle) {
                    continue;
                }
                let value = if name == EVIDENCE_SLOT {
                    truncate_chars(value, self.evidence_char_budget)
                } else {
                    value.clone()
                };
                text = text.replace(&needle, &value);
            }
            text
        };
        let system = fill(&template.role_assignment);
        let user = format!(
            "{}\n\n{}\n\n{}",
            fill(&template.output_formation),
            fill(&template.task_instruction),
            fill(&template.input_wrapper)
        );
        Ok((system, user))
    }
}

/// First `budget` characters of `text`, with a marker when anything was
/// cut. Boundaries are chars, not bytes, so multibyte text stays valid.
pub fn truncate_chars(text: &str, budget: usize) -> String {
    match text.char_indices().nth(budget) {
        None => text.to_string(),
        Some((byte_idx, _)) => format!("{}{TRUNCATION_MARKER}", &text[..byte_idx]),
    }
}

/// What kind of output the caller expects back from the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputKind {
    Analysis,
    Reflection,
    Advice,
    Judgment,
}

/// Structured fields extracted from raw model output.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedAgentOutput {
    pub kind: OutputKind,
    pub label: Option<Verdict>,
    pub body: String,
    pub winner: Option<Channel>,
}

/// Extract `LABEL:` / `WINNER:` marker lines (case-insensitive) and treat
/// the remainder as the body. Missing required markers, unknown tokens,
/// conflicting duplicates, or an empty body are parse errors carrying the
/// raw text.
pub fn parse_agent_output(
    raw: &str,
    expected: OutputKind,
) -> Result<ParsedAgentOutput, PromptError> {
    let fail = |message: String| PromptError::Parse {
        message,
        raw: raw.to_string(),
    };
    if raw.trim().is_empty() {
        return Err(fail("empty model output".into()));
    }
    let mut label: Option<Verdict> = None;
    let mut winner: Option<Channel> = None;
    let mut body_lines: Vec<&str> = Vec::new();
    for line in raw.lines() {
        let trimmed = line.trim_start();
        if let Some(rest) = strip_marker(trimmed, "LABEL:") {
            let parsed = Verdict::from_label_token(rest)
                .ok_or_else(|| fail(format!("unrecognized label token {rest:?}")))?;
            match label {
                Some(prev) if prev != parsed => {
                    return Err(fail(format!(
                        "conflicting labels: {prev} then {parsed}"
                    )));
                }
                _ => label = Some(parsed),
            }
        } else if let Some(rest) = strip_marker(trimmed, "WINNER:") {
            let token = rest.trim().trim_end_matches(['.', '!']).to_lowercase();
            let parsed = match token.as_str() {
                "ordinary" => Channel::Ordinary,
                "special" => Channel::Special,
                _ => return Err(fail(format!("unrecognized winner token {rest:?}"))),
            };
            match winner {
                Some(prev) if prev != parsed => {
                    return Err(fail(format!(
                        "conflicting winners: {prev} then {parsed}"
                    )));
                }
                _ => winner = Some(parsed),
            }
        } else {
            body_lines.push(line);
        }
    }
    let body = body_lines.join("\n").trim().to_string();
    if body.is_empty() {
        return Err(fail("output has no body text".into()));
    }
    match expected {
        OutputKind::Analysis if label.is_none() => {
            return Err(fail("analysis output is missing a LABEL: line".into()));
        }
        OutputKind::Judgment if winner.is_none() => {
            return Err(fail("judgment output is missing a WINNER: line".into()));
        }
        _ => {}
    }
    Ok(ParsedAgentOutput {
        kind: expected,
        label,
        winner,
        body,
    })
}

fn strip_marker<'a>(line: &'a str, marker: &str) -> Option<&'a str> {
    if line.len() >= marker.len() && line[..marker.len()].eq_ignore_ascii_case(marker) {
        Some(&line[marker.len()..])
    } else {
        None
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PromptError {
    #[error("no template registered for role {0}")]
    UnknownRole(String),
    #[error("template for {role} references slot {{{{{slot}}}}} but none was provided")]
    MissingSlot { role: String, slot: String },
    #[error("bad template: {0}")]
    BadTemplate(String),
    #[error("cannot parse model output: {message}; raw output was: {raw:?}")]
    Parse { message: String, raw: String },
}
