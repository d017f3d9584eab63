//! Stage-1 runner: dual-channel analysis over a labeled split, error
//! filtering, comparative reflection, and knowledge-base population.
//!
//! A sample produces an experience record exactly when the ordinary
//! analyst missed the gold label while the special analyst (given the gold
//! label) genuinely matched it. Everything else is counted and skipped.

use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agents::{AgentError, Agents};
use crate::kb::{CaseStore, EmbeddingProvider, KbError};
use crate::model::{ExperienceRecord, NewsCase};

/// Where one explored sample landed.
#[derive(Debug)]
pub enum SampleOutcome {
    /// Ordinary analyst already matched the gold label; nothing to learn.
    OrdinaryCorrect,
    /// Filter condition met and reflection succeeded: store this.
    Harvested(Box<ExperienceRecord>),
    /// Ordinary was wrong but the special channel did not genuinely reach
    /// the gold label, so there is no correct analysis to learn from.
    SpecialWrong,
    /// Filter condition met but the reflector call failed.
    ReflectionFailed(String),
}

/// Counters for one exploration run.
///
/// `total = ordinary_correct + filter_hits + skipped_special_wrong +
/// failures`, and `stored = filter_hits - reflection failures`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExplorationReport {
    pub total: u64,
    pub ordinary_correct: u64,
    /// Samples meeting the harvest condition, whether or not reflection
    /// then succeeded.
    pub filter_hits: u64,
    pub stored: u64,
    pub skipped_special_wrong: u64,
    /// Samples whose analyst calls failed before the filter could be
    /// evaluated.
    pub failures: u64,
}

impl ExplorationReport {
    pub fn consistent(&self) -> bool {
        self.total
            == self.ordinary_correct + self.filter_hits + self.skipped_special_wrong + self.failures
            && self.stored <= self.filter_hits
    }
}

impl std::fmt::Display for ExplorationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "exploration: {} samples", self.total)?;
        writeln!(f, "  ordinary correct      {}", self.ordinary_correct)?;
        writeln!(f, "  filter hits           {}", self.filter_hits)?;
        writeln!(f, "  stored                {}", self.stored)?;
        writeln!(f, "  special wrong         {}", self.skipped_special_wrong)?;
        write!(f, "  failures              {}", self.failures)
    }
}

/// Knobs for [`run_exploration`].
#[derive(Debug, Clone, Default)]
pub struct ExploreOptions {
    /// Worker threads; 1 gives a deterministic store byte-for-byte.
    pub workers: usize,
    /// Save the store to `checkpoint_path` every this many processed
    /// samples.
    pub checkpoint_every: Option<u64>,
    pub checkpoint_path: Option<PathBuf>,
    /// Shuffle processing order with this seed; `None` keeps dataset order.
    pub shuffle_seed: Option<u64>,
}

/// Run the dual channel on one labeled sample and classify the outcome.
pub fn explore_sample(
    agents: &Agents,
    provider: &dyn EmbeddingProvider,
    case: &NewsCase,
) -> Result<SampleOutcome, ExploreError> {
    let gold = case
        .gold_label
        .ok_or_else(|| ExploreError::UnlabeledSample(case.id.clone()))?;
    let ordinary = agents.ordinary_analyze(case)?;
    let special = agents.special_analyze(case, gold)?;
    if ordinary.verdict == gold {
        return Ok(SampleOutcome::OrdinaryCorrect);
    }
    // The special verdict is pinned to gold by enforcement, so the channel
    // only "really" matched the label when the model complied on its own.
    let special_genuine = special.verdict == gold && !special.noncompliant;
    if !special_genuine {
        return Ok(SampleOutcome::SpecialWrong);
    }
    match agents.reflect(&ordinary, &special) {
        Ok(reflection) => {
            let embedding = provider.embed(&case.text)?;
            Ok(SampleOutcome::Harvested(Box::new(ExperienceRecord {
                case: case.clone(),
                wrong_analysis: ordinary,
                correct_analysis: special,
                reflection,
                embedding,
                created_seq: 0, // assigned by the store
            })))
        }
        Err(e) => Ok(SampleOutcome::ReflectionFailed(e.to_string())),
    }
}

/// Process every sample of a labeled split once, appending harvested
/// experiences to the store. Per-sample agent failures are counted, not
/// fatal; storage failures abort.
pub fn run_exploration(
    agents: &Agents,
    provider: &dyn EmbeddingProvider,
    dataset: &[NewsCase],
    store: &mut CaseStore,
    options: &ExploreOptions,
) -> Result<ExplorationReport, ExploreError> {
    if dataset.is_empty() {
        return Err(ExploreError::EmptyDataset);
    }
    if let Some(unlabeled) = dataset.iter().find(|c| c.gold_label.is_none()) {
        return Err(ExploreError::UnlabeledSample(unlabeled.id.clone()));
    }
    let mut order: Vec<&NewsCase> = dataset.iter().collect();
    if let Some(seed) = options.shuffle_seed {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        order.shuffle(&mut rng);
    }

    let workers = options.workers.max(1);
    let mut report = ExplorationReport::default();
    let mut processed = 0u64;

    let handle_outcome = |store: &mut CaseStore,
                              report: &mut ExplorationReport,
                              outcome: Result<SampleOutcome, ExploreError>|
     -> Result<(), ExploreError> {
        report.total += 1;
        match outcome {
            Ok(SampleOutcome::OrdinaryCorrect) => report.ordinary_correct += 1,
            Ok(SampleOutcome::Harvested(record)) => {
                report.filter_hits += 1;
                store.add_case(*record)?;
                report.stored += 1;
            }
            Ok(SampleOutcome::SpecialWrong) => report.skipped_special_wrong += 1,
            Ok(SampleOutcome::ReflectionFailed(_)) => report.filter_hits += 1,
            Err(ExploreError::Agent(_)) => report.failures += 1,
            Err(fatal) => return Err(fatal),
        }
        Ok(())
    };

    if workers == 1 {
        for case in order {
            let outcome = explore_sample(agents, provider, case);
            handle_outcome(store, &mut report, outcome)?;
            processed += 1;
            checkpoint(store, options, processed)?;
        }
    } else {
        // Workers pull indices from a shared counter; harvested records
        // funnel through the channel to this thread, the single writer.
        // created_seq therefore follows completion order.
        let next = AtomicUsize::new(0);
        let (tx, rx) = mpsc::channel::<Result<SampleOutcome, ExploreError>>();
        let order_ref = &order;
        let result: Result<(), ExploreError> = std::thread::scope(|scope| {
            for _ in 0..workers {
                let tx = tx.clone();
                let next = &next;
                scope.spawn(move || loop {
                    let idx = next.fetch_add(1, Ordering::Relaxed);
                    match order_ref.get(idx) {
                        Some(case) => {
                            if tx.send(explore_sample(agents, provider, case)).is_err() {
                                return;
                            }
                        }
                        None => return,
                    }
                });
            }
            drop(tx);
            while let Ok(outcome) = rx.recv() {
                handle_outcome(store, &mut report, outcome)?;
                processed += 1;
                checkpoint(store, options, processed)?;
            }
            Ok(())
        });
        result?;
    }

    debug_assert!(report.consistent());
    Ok(report)
}

fn checkpoint(
    store: &CaseStore,
    options: &ExploreOptions,
    processed: u64,
) -> Result<(), ExploreError> {
    if let (Some(every), Some(path)) = (options.checkpoint_every, &options.checkpoint_path) {
        if every > 0 && processed.is_multiple_of(every) {
            store.save(path)?;
        }
    }
    Ok(())
}

#[derive(Debug, thiserror::Error)]
pub enum ExploreError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("sample {0} has no gold label")]
    UnlabeledSample(String),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Store(#[from] KbError),
}
