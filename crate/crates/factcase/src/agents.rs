//! The five agent behaviors: ordinary analyst, special analyst, reflector,
//! advisor, and judger.
//!
//! Each is a thin orchestration of template rendering, one or more gateway
//! calls, and output parsing, with the contracts enforced here: bounded
//! re-asks on malformed output, and label enforcement on the special
//! channel so the two channels always oppose when the judger needs them to.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::gateway::{ChatBackend, ChatRequest, GatewayError};
use crate::model::{
    Advice, Analysis, Channel, Evidence, ExperienceRecord, Judgment, NewsCase, Reflection, Verdict,
};
use crate::prompt::{parse_agent_output, AgentRole, OutputKind, PromptError, TemplateSet};

/// Live evidence retrieval for the analysts.
///
/// The pipeline substitutes dataset evidence for live search, so no
/// implementation ships; the trait exists for deployments that wire in a
/// real search client.
pub trait EvidenceSearch: Send + Sync {
    fn search(&self, query: &str) -> Result<Vec<Evidence>, AgentError>;
}

/// Bounds on agent behavior.
#[derive(Debug, Clone, Copy)]
pub struct AgentPolicy {
    /// Re-asks after the first attempt; total attempts = max_reasks + 1.
    pub max_reasks: u32,
    /// Override the special analyst's verdict to the imposed label when it
    /// refuses to comply after re-asks.
    pub enforce_special_label: bool,
}

impl Default for AgentPolicy {
    fn default() -> Self {
        AgentPolicy {
            max_reasks: 2,
            enforce_special_label: true,
        }
    }
}

/// Which text of a retrieved experience feeds the advisor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperienceMaterial {
    /// The reflector's diagnosis (the normal path).
    Reflections,
    /// The stored correct analysis, presented as a worked exemplar.
    ExemplarAnalyses,
}

/// Stateless bundle of everything needed to run one agent call.
#[derive(Clone)]
pub struct Agents {
    backend: Arc<dyn ChatBackend>,
    templates: Arc<TemplateSet>,
    policy: AgentPolicy,
    model_id: String,
}

const FORMAT_REMINDER: &str =
    "\n\nYour previous answer did not follow the required output format. Answer again, following the format exactly.";

const COMPLY_REMINDER: &str = "\n\nYour previous answer concluded with the wrong label. The verdict is established; your LABEL line must be exactly \"{label}\".";

impl Agents {
    pub fn new(
        backend: Arc<dyn ChatBackend>,
        templates: Arc<TemplateSet>,
        model_id: impl Into<String>,
    ) -> Self {
        Agents {
            backend,
            templates,
            policy: AgentPolicy::default(),
            model_id: model_id.into(),
        }
    }

    pub fn with_policy(mut self, policy: AgentPolicy) -> Self {
        self.policy = policy;
        self
    }

    pub fn policy(&self) -> AgentPolicy {
        self.policy
    }

    pub fn backend(&self) -> &Arc<dyn ChatBackend> {
        &self.backend
    }

    pub fn templates(&self) -> &TemplateSet {
        &self.templates
    }

    /// Render, call, parse; re-ask on parse failures up to the policy
    /// bound. Returns the parsed output plus its completion token count.
    fn ask(
        &self,
        role: AgentRole,
        slots: &BTreeMap<String, String>,
        expected: OutputKind,
    ) -> Result<(crate::prompt::ParsedAgentOutput, u32), AgentError> {
        let (system, user) = self.templates.render(role, slots)?;
        let mut last_err: Option<PromptError> = None;
        for attempt in 0..=self.policy.max_reasks {
            let user_text = if attempt == 0 {
                user.clone()
            } else {
                format!("{user}{FORMAT_REMINDER}")
            };
            let request = ChatRequest::new(&self.model_id, &system, user_text);
            let response = self.backend.complete(&request)?;
            match parse_agent_output(&response.text, expected) {
                Ok(parsed) => return Ok((parsed, response.usage.completion_tokens)),
                Err(e) => last_err = Some(e),
            }
        }
        Err(AgentError::Failed {
            role: role.to_string(),
            attempts: self.policy.max_reasks + 1,
            source: Box::new(last_err.expect("at least one attempt ran")),
        })
    }

    /// Unconstrained analysis of a news case.
    pub fn ordinary_analyze(&self, case: &NewsCase) -> Result<Analysis, AgentError> {
        case.validate().map_err(|e| AgentError::Precondition(e.to_string()))?;
        let slots = news_slots(case);
        let (parsed, tokens) = self.ask(AgentRole::OrdinaryAnalyst, &slots, OutputKind::Analysis)?;
        Ok(Analysis {
            channel: Channel::Ordinary,
            rationale: parsed.body,
            verdict: parsed.label.expect("analysis kind guarantees label"),
            model_id: self.model_id.clone(),
            token_count: tokens,
            noncompliant: false,
        })
    }

    /// Analysis with the verdict imposed ahead. The returned verdict always
    /// equals `imposed`; when the model keeps concluding otherwise after
    /// re-asks, the verdict is overridden and the analysis is flagged
    /// noncompliant.
    pub fn special_analyze(
        &self,
        case: &NewsCase,
        imposed: Verdict,
    ) -> Result<Analysis, AgentError> {
        case.validate().map_err(|e| AgentError::Precondition(e.to_string()))?;
        let mut slots = news_slots(case);
        slots.insert("imposed_label".into(), imposed.to_string());
        let (system, user) = self.templates.render(AgentRole::SpecialAnalyst, &slots)?;

        let mut last_parse_err: Option<PromptError> = None;
        let mut last_defiant: Option<(String, u32)> = None;
        for attempt in 0..=self.policy.max_reasks {
            let user_text = if attempt == 0 {
                user.clone()
            } else if last_parse_err.is_some() {
                format!("{user}{FORMAT_REMINDER}")
            } else {
                format!("{user}{}", COMPLY_REMINDER.replace("{label}", imposed.as_str()))
            };
            last_parse_err = None;
            let request = ChatRequest::new(&self.model_id, &system, user_text);
            let response = self.backend.complete(&request)?;
            match parse_agent_output(&response.text, OutputKind::Analysis) {
                Ok(parsed) => {
                    let label = parsed.label.expect("analysis kind guarantees label");
                    if label == imposed {
                        return Ok(Analysis {
                            channel: Channel::Special,
                            rationale: parsed.body,
                            verdict: imposed,
                            model_id: self.model_id.clone(),
                            token_count: response.usage.completion_tokens,
                            noncompliant: false,
                        });
                    }
                    if !self.policy.enforce_special_label {
                        return Ok(Analysis {
                            channel: Channel::Special,
                            rationale: parsed.body,
                            verdict: label,
                            model_id: self.model_id.clone(),
                            token_count: response.usage.completion_tokens,
                            noncompliant: true,
                        });
                    }
                    last_defiant = Some((parsed.body, response.usage.completion_tokens));
                }
                Err(e) => last_parse_err = Some(e),
            }
        }
        if let Some((rationale, tokens)) = last_defiant {
            // Exhausted re-asks with parseable but defiant output: keep the
            // imposed label and flag it.
            return Ok(Analysis {
                channel: Channel::Special,
                rationale,
                verdict: imposed,
                model_id: self.model_id.clone(),
                token_count: tokens,
                noncompliant: true,
            });
        }
        Err(AgentError::Failed {
            role: AgentRole::SpecialAnalyst.to_string(),
            attempts: self.policy.max_reasks + 1,
            source: Box::new(last_parse_err.expect("parse error recorded")),
        })
    }

    /// Diagnose the mistakes in a wrong analysis by comparison with a
    /// correct one.
    pub fn reflect(&self, wrong: &Analysis, correct: &Analysis) -> Result<Reflection, AgentError> {
        if wrong.verdict == correct.verdict {
            return Err(AgentError::Precondition(
                "reflection requires analyses with opposing verdicts".into(),
            ));
        }
        let mut slots = BTreeMap::new();
        slots.insert("wrong_analysis".into(), wrong.rationale.clone());
        slots.insert("wrong_label".into(), wrong.verdict.to_string());
        slots.insert("correct_analysis".into(), correct.rationale.clone());
        slots.insert("correct_label".into(), correct.verdict.to_string());
        let (parsed, _) = self.ask(AgentRole::Reflector, &slots, OutputKind::Reflection)?;
        Ok(split_reflection(&parsed.body))
    }

    /// Synthesize judging criteria from retrieved experiences. An empty
    /// experience list degrades to the static fallback advice without any
    /// model call.
    pub fn advise(
        &self,
        case: &NewsCase,
        experiences: &[&ExperienceRecord],
        material: ExperienceMaterial,
    ) -> Result<Advice, AgentError> {
        if experiences.is_empty() {
            return Ok(Advice {
                text: self.templates.fallback_advice().to_string(),
                source_case_ids: Vec::new(),
            });
        }
        let mut slots = BTreeMap::new();
        slots.insert("news".into(), case.text.clone());
        slots.insert(
            "experiences".into(),
            format_experiences(experiences, material),
        );
        let (parsed, _) = self.ask(AgentRole::Advisor, &slots, OutputKind::Advice)?;
        Ok(Advice {
            text: parsed.body,
            source_case_ids: experiences.iter().map(|r| r.id().to_string()).collect(),
        })
    }

    /// Pick the better of two opposing analyses under the given criteria.
    pub fn judge(
        &self,
        ordinary: &Analysis,
        special: &Analysis,
        criteria: &str,
    ) -> Result<Judgment, AgentError> {
        if ordinary.verdict == special.verdict {
            return Err(AgentError::Precondition(
                "judging requires analyses with opposing conclusions".into(),
            ));
        }
        let mut slots = BTreeMap::new();
        slots.insert("advice".into(), criteria.to_string());
        slots.insert("ordinary_analysis".into(), ordinary.rationale.clone());
        slots.insert("ordinary_label".into(), ordinary.verdict.to_string());
        slots.insert("special_analysis".into(), special.rationale.clone());
        slots.insert("special_label".into(), special.verdict.to_string());
        let (parsed, _) = self.ask(AgentRole::Judger, &slots, OutputKind::Judgment)?;
        Ok(Judgment {
            winner: parsed.winner.expect("judgment kind guarantees winner"),
            justification: parsed.body,
        })
    }
}

fn news_slots(case: &NewsCase) -> BTreeMap<String, String> {
    let mut slots = BTreeMap::new();
    slots.insert("news".into(), case.text.clone());
    slots.insert("evidence".into(), format_evidence(&case.evidence));
    slots
}

/// Render evidence snippets as a bulleted list for the analyst prompts.
pub fn format_evidence(evidence: &[Evidence]) -> String {
    if evidence.is_empty() {
        return "(no evidence provided)".to_string();
    }
    evidence
        .iter()
        .map(|e| format!("- [{}] {}", e.source, e.text))
        .collect::<Vec<_>>()
        .join("\n")
}

fn format_experiences(records: &[&ExperienceRecord], material: ExperienceMaterial) -> String {
    records
        .iter()
        .enumerate()
        .map(|(i, record)| {
            let text = match material {
                ExperienceMaterial::Reflections => record.reflection.diagnosis.as_str(),
                ExperienceMaterial::ExemplarAnalyses => record.correct_analysis.rationale.as_str(),
            };
            let heading = match material {
                ExperienceMaterial::Reflections => "Reflection",
                ExperienceMaterial::ExemplarAnalyses => "Exemplar analysis",
            };
            format!("Case {}: {}\n{heading}: {text}", i + 1, record.case.text)
        })
        .collect::<Vec<_>>()
        .join("\n\n")
}

/// Pull an optional `TAGS:` line out of the reflector body; the rest is
/// the diagnosis.
fn split_reflection(body: &str) -> Reflection {
    let mut diagnosis_lines = Vec::new();
    let mut tags = Vec::new();
    for line in body.lines() {
        let trimmed = line.trim_start();
        if trimmed.len() >= 5 && trimmed[..5].eq_ignore_ascii_case("TAGS:") {
            tags.extend(
                trimmed[5..]
                    .split(',')
                    .map(|t| t.trim().to_string())
                    .filter(|t| !t.is_empty()),
            );
        } else {
            diagnosis_lines.push(line);
        }
    }
    Reflection {
        diagnosis: diagnosis_lines.join("\n").trim().to_string(),
        error_tags: tags,
    }
}

#[derive(Debug, thiserror::Error)]
pub enum AgentError {
    #[error("{role} failed after {attempts} attempts: {source}")]
    Failed {
        role: String,
        attempts: u32,
        source: Box<PromptError>,
    },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
}
