//! Stage-2 runner: variant dual-channel detection with experience
//! retrieval, advice synthesis, and judger resolution.
//!
//! The gold label is unknown here, so the special channel's imposed label
//! is the reverse of the ordinary prediction; the judger then picks
//! between the two opposing analyses and its pick fixes the final verdict.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agents::{AgentError, Agents, ExperienceMaterial};
use crate::kb::{fnv1a64, CaseStore, EmbeddingProvider, KbError};
use crate::model::{final_verdict, DetectionTrace, ExperienceRecord, ModelError, NewsCase};

/// Deployment configuration switches, one per ablation variant, plus the
/// retrieval width.
///
/// Model calls per successful sample: 1 + re-asks with `no_dual_channel`;
/// otherwise 3 + re-asks (ordinary, special, judger) plus 1 when the
/// advisor actually runs (experiences retrieved and `no_advisor` off).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AblationConfig {
    /// Feed the advisor stored correct analyses as exemplars instead of
    /// reflections.
    #[serde(default)]
    pub no_reflector: bool,
    /// Skip the advisor; retrieved reflections go to the judger raw.
    #[serde(default)]
    pub no_advisor: bool,
    /// Single ordinary analyst; its verdict is final, judger skipped.
    #[serde(default)]
    pub no_dual_channel: bool,
    /// Retrieve uniformly random cases instead of nearest neighbors.
    #[serde(default)]
    pub random_case_retrieval: bool,
    /// Cases to retrieve per sample; 0 disables retrieval.
    #[serde(default = "default_n_cases")]
    pub n_cases: usize,
    #[serde(default)]
    pub rng_seed: u64,
}

fn default_n_cases() -> usize {
    1
}

impl Default for AblationConfig {
    fn default() -> Self {
        AblationConfig {
            no_reflector: false,
            no_advisor: false,
            no_dual_channel: false,
            random_case_retrieval: false,
            n_cases: 1,
            rng_seed: 0,
        }
    }
}

impl AblationConfig {
    /// Short human-readable tag for reports.
    pub fn variant_name(&self) -> &'static str {
        if self.no_reflector {
            "no_reflector"
        } else if self.no_advisor {
            "no_advisor"
        } else if self.no_dual_channel {
            "no_dual_channel"
        } else if self.random_case_retrieval {
            "random_case_retrieval"
        } else {
            "baseline"
        }
    }

    /// The baseline plus the four single-switch variants, in report order.
    pub fn study_variants(n_cases: usize, rng_seed: u64) -> Vec<AblationConfig> {
        let base = AblationConfig {
            n_cases,
            rng_seed,
            ..Default::default()
        };
        vec![
            base,
            AblationConfig {
                no_reflector: true,
                ..base
            },
            AblationConfig {
                no_advisor: true,
                ..base
            },
            AblationConfig {
                no_dual_channel: true,
                ..base
            },
            AblationConfig {
                random_case_retrieval: true,
                ..base
            },
        ]
    }
}

/// One line of the trace file: a full trace or a per-sample failure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum TraceRecord {
    Ok(Box<DetectionTrace>),
    Failed { case_id: String, error: String },
}

impl TraceRecord {
    pub fn case_id(&self) -> &str {
        match self {
            TraceRecord::Ok(trace) => &trace.case.id,
            TraceRecord::Failed { case_id, .. } => case_id,
        }
    }

    pub fn as_trace(&self) -> Option<&DetectionTrace> {
        match self {
            TraceRecord::Ok(trace) => Some(trace),
            TraceRecord::Failed { .. } => None,
        }
    }
}

/// Run the full deployment pipeline on one case.
pub fn detect(
    agents: &Agents,
    provider: &dyn EmbeddingProvider,
    store: &CaseStore,
    case: &NewsCase,
    ablation: &AblationConfig,
) -> Result<DetectionTrace, DeployError> {
    let ordinary = agents.ordinary_analyze(case)?;

    if ablation.no_dual_channel {
        return Ok(DetectionTrace {
            case: case.clone(),
            final_verdict: ordinary.verdict,
            ordinary,
            special: None,
            retrieved_ids: Vec::new(),
            advice: None,
            judgment: None,
            ablation: *ablation,
        });
    }

    let imposed = ordinary.verdict.reverse();
    let special = agents.special_analyze(case, imposed)?;

    let retrieved = retrieve(provider, store, case, ablation)?;
    let retrieved_ids: Vec<String> = retrieved.iter().map(|r| r.id().to_string()).collect();

    let material = if ablation.no_reflector {
        ExperienceMaterial::ExemplarAnalyses
    } else {
        ExperienceMaterial::Reflections
    };

    let (advice, criteria) = if ablation.no_advisor {
        // Raw retrieved material goes straight to the judger.
        let criteria = if retrieved.is_empty() {
            agents_fallback(agents)
        } else {
            retrieved
                .iter()
                .enumerate()
                .map(|(i, r)| {
                    let text = match material {
                        ExperienceMaterial::Reflections => r.reflection.diagnosis.as_str(),
                        ExperienceMaterial::ExemplarAnalyses => {
                            r.correct_analysis.rationale.as_str()
                        }
                    };
                    format!("Reflection {}: {text}", i + 1)
                })
                .collect::<Vec<_>>()
                .join("\n")
        };
        (None, criteria)
    } else {
        let advice = agents.advise(case, &retrieved, material)?;
        let criteria = advice.text.clone();
        (Some(advice), criteria)
    };

    let judgment = agents.judge(&ordinary, &special, &criteria)?;
    let verdict = final_verdict(&judgment, &ordinary, &special)?;

    Ok(DetectionTrace {
        case: case.clone(),
        ordinary,
        special: Some(special),
        retrieved_ids,
        advice,
        judgment: Some(judgment),
        final_verdict: verdict,
        ablation: *ablation,
    })
}

fn agents_fallback(agents: &Agents) -> String {
    // Degraded mode with an empty store: reuse the advisor's static
    // fallback criteria so the judger never sees an empty advice slot.
    agents.templates().fallback_advice().to_string()
}

fn retrieve<'s>(
    provider: &dyn EmbeddingProvider,
    store: &'s CaseStore,
    case: &NewsCase,
    ablation: &AblationConfig,
) -> Result<Vec<&'s ExperienceRecord>, DeployError> {
    if ablation.n_cases == 0 || store.is_empty() {
        return Ok(Vec::new());
    }
    if ablation.random_case_retrieval {
        // Per-sample stream derived from (seed, case id): reproducible for
        // a fixed seed regardless of batch order.
        let mut rng = ChaCha8Rng::seed_from_u64(ablation.rng_seed ^ fnv1a64(case.id.as_bytes()));
        let n = ablation.n_cases.min(store.len());
        let picked = rand::seq::index::sample(&mut rng, store.len(), n);
        return Ok(picked.iter().map(|i| &store.records()[i]).collect());
    }
    Ok(store.retrieve_top_n(provider, case, ablation.n_cases)?)
}

/// Apply [`detect`] to every case, isolating per-sample failures. Output
/// order follows dataset order regardless of worker completion order.
pub fn detect_batch(
    agents: &Agents,
    provider: &dyn EmbeddingProvider,
    store: &CaseStore,
    dataset: &[NewsCase],
    ablation: &AblationConfig,
    workers: usize,
) -> Vec<TraceRecord> {
    let run_one = |case: &NewsCase| -> TraceRecord {
        match detect(agents, provider, store, case, ablation) {
            Ok(trace) => TraceRecord::Ok(Box::new(trace)),
            Err(e) => TraceRecord::Failed {
                case_id: case.id.clone(),
                error: e.to_string(),
            },
        }
    };

    let workers = workers.max(1);
    if workers == 1 || dataset.len() <= 1 {
        return dataset.iter().map(run_one).collect();
    }

    let next = AtomicUsize::new(0);
    let (tx, rx) = mpsc::channel::<(usize, TraceRecord)>();
    let mut slots: Vec<Option<TraceRecord>> = Vec::new();
    slots.resize_with(dataset.len(), || None);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            let tx = tx.clone();
            let next = &next;
            scope.spawn(move || loop {
                let idx = next.fetch_add(1, Ordering::Relaxed);
                match dataset.get(idx) {
                    Some(case) => {
                        if tx.send((idx, run_one(case))).is_err() {
                            return;
                        }
                    }
                    None => return,
                }
            });
        }
        drop(tx);
        while let Ok((idx, record)) = rx.recv() {
            slots[idx] = Some(record);
        }
    });
    slots
        .into_iter()
        .map(|slot| slot.expect("every index filled"))
        .collect()
}

/// Write trace records as one JSON object per line.
pub fn write_traces(
    records: &[TraceRecord],
    path: &std::path::Path,
) -> Result<(), std::io::Error> {
    use std::io::Write;
    let file = std::fs::File::create(path)?;
    let mut writer = std::io::BufWriter::new(file);
    for record in records {
        serde_json::to_writer(&mut writer, record)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()
}

/// Read a trace file written by [`write_traces`].
pub fn read_traces(path: &std::path::Path) -> Result<Vec<TraceRecord>, DeployError> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        DeployError::Trace(format!("cannot read traces {}: {e}", path.display()))
    })?;
    text.lines()
        .enumerate()
        .filter(|(_, line)| !line.trim().is_empty())
        .map(|(idx, line)| {
            serde_json::from_str(line)
                .map_err(|e| DeployError::Trace(format!("bad trace at line {}: {e}", idx + 1)))
        })
        .collect()
}

#[derive(Debug, thiserror::Error)]
pub enum DeployError {
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Store(#[from] KbError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("{0}")]
    Trace(String),
}
