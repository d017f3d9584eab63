//! Core domain types and the verdict algebra shared by every pipeline stage.
//!
//! Everything here is an immutable value object once constructed: safe to
//! clone, share, and send between workers.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::deploy::AblationConfig;

/// Binary authenticity verdict for a news item.
///
/// The label space is closed: datasets carrying a third "not enough info"
/// class have those rows dropped at ingestion, never mapped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    True,
    False,
}

impl Verdict {
    /// The opposite verdict. An involution with no fixed point.
    pub fn reverse(self) -> Verdict {
        match self {
            Verdict::True => Verdict::False,
            Verdict::False => Verdict::True,
        }
    }

    /// Map a label token to a verdict. Accepts `true`/`real` and
    /// `false`/`fake`, case-insensitively, with surrounding whitespace and
    /// trailing sentence punctuation ignored. Anything else is `None`.
    pub fn from_label_token(token: &str) -> Option<Verdict> {
        let tok = token.trim().trim_end_matches(['.', '!', ',']).to_lowercase();
        match tok.as_str() {
            "true" | "real" => Some(Verdict::True),
            "false" | "fake" => Some(Verdict::False),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::True => "true",
            Verdict::False => "false",
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Which analyst produced an analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    Ordinary,
    Special,
}

impl Channel {
    pub fn as_str(self) -> &'static str {
        match self {
            Channel::Ordinary => "ordinary",
            Channel::Special => "special",
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One evidence snippet attached to a news case.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Evidence {
    /// Where the snippet came from (site name, dataset column, ...).
    pub source: String,
    pub text: String,
}

/// A claim or article plus its evidence snippets and optional gold label.
///
/// The unit that flows through every stage of the pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewsCase {
    pub id: String,
    pub text: String,
    #[serde(default)]
    pub evidence: Vec<Evidence>,
    #[serde(default)]
    pub gold_label: Option<Verdict>,
    #[serde(default)]
    pub domain_tag: Option<String>,
}

impl NewsCase {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        NewsCase {
            id: id.into(),
            text: text.into(),
            evidence: Vec::new(),
            gold_label: None,
            domain_tag: None,
        }
    }

    /// Check the structural invariants: nonempty id and text.
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.id.trim().is_empty() {
            return Err(ModelError::InvalidCase("case id is empty".into()));
        }
        if self.text.trim().is_empty() {
            return Err(ModelError::InvalidCase(format!(
                "case {} has empty text",
                self.id
            )));
        }
        Ok(())
    }
}

/// One analyst's rationale plus its concluded verdict and channel tag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Analysis {
    pub channel: Channel,
    pub rationale: String,
    pub verdict: Verdict,
    pub model_id: String,
    pub token_count: u32,
    /// Set when the special channel had to override the model's conclusion
    /// to keep the imposed label after exhausting re-asks.
    #[serde(default)]
    pub noncompliant: bool,
}

/// The reflector's diagnosis of what went wrong in an incorrect analysis.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reflection {
    pub diagnosis: String,
    #[serde(default)]
    pub error_tags: Vec<String>,
}

/// A knowledge-base entry pairing a news case with its error diagnosis and
/// both analyses from the dual-channel run that exposed the error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperienceRecord {
    pub case: NewsCase,
    pub wrong_analysis: Analysis,
    pub correct_analysis: Analysis,
    pub reflection: Reflection,
    /// Unit-normalized embedding of `case.text`, dimension fixed per store.
    pub embedding: Vec<f64>,
    /// Monotone insertion counter assigned by the store; breaks retrieval
    /// ties deterministically.
    pub created_seq: u64,
}

impl ExperienceRecord {
    /// Records are identified by their case id.
    pub fn id(&self) -> &str {
        &self.case.id
    }

    /// Check the harvest-filter invariants: the wrong analysis missed the
    /// gold label and the correct analysis matched it.
    pub fn validate(&self) -> Result<(), ModelError> {
        self.case.validate()?;
        let gold = self.case.gold_label.ok_or_else(|| {
            ModelError::InvalidRecord(format!("experience {} has no gold label", self.case.id))
        })?;
        if self.wrong_analysis.verdict == gold {
            return Err(ModelError::InvalidRecord(format!(
                "experience {}: wrong_analysis verdict equals the gold label",
                self.case.id
            )));
        }
        if self.correct_analysis.verdict != gold {
            return Err(ModelError::InvalidRecord(format!(
                "experience {}: correct_analysis verdict differs from the gold label",
                self.case.id
            )));
        }
        if self.reflection.diagnosis.trim().is_empty() {
            return Err(ModelError::InvalidRecord(format!(
                "experience {}: empty reflection diagnosis",
                self.case.id
            )));
        }
        Ok(())
    }
}

/// Criteria text synthesized by the advisor from retrieved experiences.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Advice {
    pub text: String,
    /// Ids of the experience records the advice was drawn from.
    pub source_case_ids: Vec<String>,
}

/// The judger's pick between the two opposing analyses.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Judgment {
    pub winner: Channel,
    pub justification: String,
}

/// Full audit record of one deployment detection.
///
/// `special` and `judgment` are absent only when the dual channel was
/// ablated away; in every other trace both are present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionTrace {
    pub case: NewsCase,
    pub ordinary: Analysis,
    pub special: Option<Analysis>,
    pub retrieved_ids: Vec<String>,
    pub advice: Option<Advice>,
    pub judgment: Option<Judgment>,
    pub final_verdict: Verdict,
    pub ablation: AblationConfig,
}

/// Resolve the final verdict from the judger's pick.
///
/// Returns the ordinary analysis's verdict when the ordinary channel wins,
/// the special analysis's verdict otherwise.
pub fn final_verdict(
    judgment: &Judgment,
    ordinary: &Analysis,
    special: &Analysis,
) -> Result<Verdict, ModelError> {
    if ordinary.channel != Channel::Ordinary {
        return Err(ModelError::ChannelMismatch {
            expected: Channel::Ordinary,
            got: ordinary.channel,
        });
    }
    if special.channel != Channel::Special {
        return Err(ModelError::ChannelMismatch {
            expected: Channel::Special,
            got: special.channel,
        });
    }
    Ok(match judgment.winner {
        Channel::Ordinary => ordinary.verdict,
        Channel::Special => special.verdict,
    })
}

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("expected {expected} analysis, got {got}")]
    ChannelMismatch { expected: Channel, got: Channel },
    #[error("invalid news case: {0}")]
    InvalidCase(String),
    #[error("invalid experience record: {0}")]
    InvalidRecord(String),
}

#[cfg(test)]
mod tests {
    use super::*;

    fn analysis(channel: Channel, verdict: Verdict) -> Analysis {
        Analysis {
            channel,
            rationale: "r".into(),
            verdict,
            model_id: "m".into(),
            token_count: 1,
            noncompliant: false,
        }
    }

    #[test]
    fn reverse_flips_both_values() {
        assert_eq!(Verdict::False.reverse(), Verdict::True);
        assert_eq!(Verdict::True.reverse(), Verdict::False);
        assert_eq!(Verdict::True.reverse().reverse(), Verdict::True);
    }

    #[test]
    fn label_tokens_normalize() {
        assert_eq!(Verdict::from_label_token(" TRUE."), Some(Verdict::True));
        assert_eq!(Verdict::from_label_token("Real"), Some(Verdict::True));
        assert_eq!(Verdict::from_label_token("fake"), Some(Verdict::False));
        assert_eq!(Verdict::from_label_token("FALSE"), Some(Verdict::False));
        assert_eq!(Verdict::from_label_token("maybe"), None);
        assert_eq!(Verdict::from_label_token(""), None);
    }

    #[test]
    fn final_verdict_follows_winner() {
        let ord = analysis(Channel::Ordinary, Verdict::True);
        let spec = analysis(Channel::Special, Verdict::False);
        let pick = |winner| Judgment {
            winner,
            justification: "j".into(),
        };
        let v = final_verdict(&pick(Channel::Ordinary), &ord, &spec).unwrap();
        assert_eq!(v, Verdict::True);
        let v = final_verdict(&pick(Channel::Special), &ord, &spec).unwrap();
        assert_eq!(v, Verdict::False);
    }

    #[test]
    fn final_verdict_truth_table() {
        // All four (winner, ordinary verdict) combinations, with the special
        // verdict always the reverse of the ordinary one.
        let mut rows = Vec::new();
        for winner in [Channel::Ordinary, Channel::Special] {
            for ord_v in [Verdict::True, Verdict::False] {
                let ord = analysis(Channel::Ordinary, ord_v);
                let spec = analysis(Channel::Special, ord_v.reverse());
                let judgment = Judgment {
                    winner,
                    justification: "j".into(),
                };
                rows.push(final_verdict(&judgment, &ord, &spec).unwrap());
            }
        }
        // Hand enumeration: ordinary wins keep the ordinary verdict, special
        // wins take its reverse.
        assert_eq!(
            rows,
            vec![Verdict::True, Verdict::False, Verdict::False, Verdict::True]
        );
    }

    #[test]
    fn final_verdict_rejects_swapped_channels() {
        let ord = analysis(Channel::Special, Verdict::True);
        let spec = analysis(Channel::Special, Verdict::False);
        let judgment = Judgment {
            winner: Channel::Ordinary,
            justification: "j".into(),
        };
        assert!(matches!(
            final_verdict(&judgment, &ord, &spec),
            Err(ModelError::ChannelMismatch { .. })
        ));
    }

    #[test]
    fn experience_record_invariants() {
        let mut case = NewsCase::new("c1", "text");
        case.gold_label = Some(Verdict::False);
        let rec = ExperienceRecord {
            case: case.clone(),
            wrong_analysis: analysis(Channel::Ordinary, Verdict::True),
            correct_analysis: analysis(Channel::Special, Verdict::False),
            reflection: Reflection {
                diagnosis: "missed the key evidence".into(),
                error_tags: vec![],
            },
            embedding: vec![1.0, 0.0],
            created_seq: 1,
        };
        rec.validate().unwrap();

        let mut bad = rec.clone();
        bad.wrong_analysis.verdict = Verdict::False;
        assert!(bad.validate().is_err());

        let mut bad = rec.clone();
        bad.correct_analysis.verdict = Verdict::True;
        assert!(bad.validate().is_err());
    }
}
