//! Command-line driver tying stages, stores, datasets, and configs
//! together.
//!
//! Exit codes: 0 ok, 2 usage/config errors, 3 data errors (datasets,
//! stores, traces), 4 backend failures.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use factcase::config::{ConfigError, EngineConfig};
use factcase::dataset::{self, DatasetError, DatasetManifest, Split};
use factcase::deploy::{self, AblationConfig};
use factcase::explore::{run_exploration, ExploreError, ExploreOptions};
use factcase::gateway::GatewayError;
use factcase::kb::{CaseStore, EmbeddingProvider, KbError};
use factcase::metrics::{self, MetricsError, MetricsReport};
use factcase::model::{Evidence, NewsCase, Verdict};

#[derive(Parser)]
#[command(
    name = "factcase",
    version,
    about = "Case-based dual-channel news verification engine"
)]
struct Cli {
    /// Engine config file (TOML).
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Validate config and inputs, print the resolved plan, make no model
    /// calls.
    #[arg(long, global = true)]
    dry_run: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the knowledge base from a labeled training split.
    Explore(ExploreArgs),
    /// Detect verdicts for a split using the knowledge base.
    Detect(DetectArgs),
    /// Score an existing trace file against gold labels.
    Evaluate(EvaluateArgs),
    /// Run the baseline plus all four ablation variants and compare.
    Ablate(AblateArgs),
    /// Run one hardcoded sample against the configured backend.
    Smoke,
    /// Inspect or compact a knowledge-base file.
    #[command(subcommand)]
    Kb(KbCommand),
}

#[derive(Args)]
struct DatasetArgs {
    /// Normalized JSONL split file, or a dataset manifest (.toml).
    #[arg(long, value_name = "FILE")]
    dataset: PathBuf,
    /// Split to pick when --dataset is a manifest.
    #[arg(long)]
    split: Option<String>,
}

#[derive(Args)]
struct ExploreArgs {
    #[command(flatten)]
    dataset: DatasetArgs,
    /// Store file; defaults to paths.store from the config.
    #[arg(long, value_name = "FILE")]
    store: Option<PathBuf>,
    /// Worker threads; defaults to engine.workers from the config.
    #[arg(long)]
    workers: Option<usize>,
    /// Save the store every N processed samples.
    #[arg(long, value_name = "N")]
    checkpoint_every: Option<u64>,
    /// Shuffle processing order with this seed.
    #[arg(long, value_name = "SEED")]
    shuffle_seed: Option<u64>,
    /// Report file; defaults to <reports>/exploration_report.json.
    #[arg(long, value_name = "FILE")]
    report: Option<PathBuf>,
}

#[derive(Args, Clone, Copy, Default)]
struct AblationArgs {
    #[arg(long)]
    no_reflector: bool,
    #[arg(long)]
    no_advisor: bool,
    #[arg(long)]
    no_dual_channel: bool,
    /// Retrieve uniformly random cases instead of nearest neighbors.
    #[arg(long)]
    random_retrieval: bool,
    /// Cases to retrieve per sample.
    #[arg(long, value_name = "K")]
    n_cases: Option<usize>,
    /// Seed for random retrieval.
    #[arg(long, value_name = "SEED")]
    seed: Option<u64>,
}

impl AblationArgs {
    fn apply(&self, base: AblationConfig) -> AblationConfig {
        AblationConfig {
            no_reflector: self.no_reflector || base.no_reflector,
            no_advisor: self.no_advisor || base.no_advisor,
            no_dual_channel: self.no_dual_channel || base.no_dual_channel,
            random_case_retrieval: self.random_retrieval || base.random_case_retrieval,
            n_cases: self.n_cases.unwrap_or(base.n_cases),
            rng_seed: self.seed.unwrap_or(base.rng_seed),
        }
    }
}

#[derive(Args)]
struct DetectArgs {
    #[command(flatten)]
    dataset: DatasetArgs,
    #[arg(long, value_name = "FILE")]
    store: Option<PathBuf>,
    /// Proceed with an empty knowledge base when the store file is absent.
    #[arg(long)]
    allow_empty_store: bool,
    #[command(flatten)]
    ablation: AblationArgs,
    #[arg(long)]
    workers: Option<usize>,
    /// Trace output file; defaults to paths.traces from the config.
    #[arg(long, value_name = "FILE")]
    traces: Option<PathBuf>,
    /// Metrics report stem; defaults to <reports>/detect_metrics.
    #[arg(long, value_name = "FILE")]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Trace file produced by detect.
    #[arg(long, value_name = "FILE")]
    traces: PathBuf,
    #[command(flatten)]
    dataset: DatasetArgs,
    /// Metrics report stem; defaults to <reports>/evaluate_metrics.
    #[arg(long, value_name = "FILE")]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct AblateArgs {
    #[command(flatten)]
    dataset: DatasetArgs,
    #[arg(long, value_name = "FILE")]
    store: Option<PathBuf>,
    #[arg(long)]
    allow_empty_store: bool,
    #[arg(long, value_name = "K")]
    n_cases: Option<usize>,
    #[arg(long, value_name = "SEED")]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory; defaults to paths.reports from the config.
    #[arg(long, value_name = "DIR")]
    out_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum KbCommand {
    /// Print store header and record statistics.
    Inspect {
        #[arg(long, value_name = "FILE")]
        store: PathBuf,
    },
    /// Rewrite a store file in canonical form.
    Compact {
        #[arg(long, value_name = "FILE")]
        store: PathBuf,
    },
}

struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> CliError {
        CliError {
            code: 2,
            message: message.into(),
        }
    }

    fn data(message: impl Into<String>) -> CliError {
        CliError {
            code: 3,
            message: message.into(),
        }
    }

    fn backend(message: impl Into<String>) -> CliError {
        CliError {
            code: 4,
            message: message.into(),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::usage(e.to_string())
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        match e {
            DatasetError::Io { .. } | DatasetError::Manifest(_) => CliError::usage(e.to_string()),
            _ => CliError::data(e.to_string()),
        }
    }
}

impl From<KbError> for CliError {
    fn from(e: KbError) -> Self {
        match e {
            KbError::Provider(_) => CliError::backend(e.to_string()),
            _ => CliError::data(e.to_string()),
        }
    }
}

impl From<ExploreError> for CliError {
    fn from(e: ExploreError) -> Self {
        match e {
            ExploreError::Agent(_) => CliError::backend(e.to_string()),
            ExploreError::Store(inner) => inner.into(),
            _ => CliError::data(e.to_string()),
        }
    }
}

impl From<deploy::DeployError> for CliError {
    fn from(e: deploy::DeployError) -> Self {
        match e {
            deploy::DeployError::Agent(_) => CliError::backend(e.to_string()),
            deploy::DeployError::Store(inner) => inner.into(),
            _ => CliError::data(e.to_string()),
        }
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        CliError::data(e.to_string())
    }
}

impl From<GatewayError> for CliError {
    fn from(e: GatewayError) -> Self {
        CliError::backend(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::data(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        // kb subcommands operate on the store file alone.
        Command::Kb(command) => cmd_kb(command),
        command => {
            let config = load_config(cli.config.as_deref())?;
            match command {
                Command::Explore(args) => cmd_explore(&config, args, cli.dry_run),
                Command::Detect(args) => cmd_detect(&config, args, cli.dry_run),
                Command::Evaluate(args) => cmd_evaluate(&config, args, cli.dry_run),
                Command::Ablate(args) => cmd_ablate(&config, args, cli.dry_run),
                Command::Smoke => cmd_smoke(&config, cli.dry_run),
                Command::Kb(_) => unreachable!("handled above"),
            }
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<EngineConfig, CliError> {
    let path = path.ok_or_else(|| CliError::usage("--config <FILE> is required"))?;
    if !path.exists() {
        return Err(CliError::usage(format!(
            "config file {} does not exist",
            path.display()
        )));
    }
    Ok(EngineConfig::load(path)?)
}

fn parse_split(args: &DatasetArgs, default: Split) -> Result<Split, CliError> {
    match &args.split {
        None => Ok(default),
        Some(s) => s
            .parse::<Split>()
            .map_err(|e| CliError::usage(e.to_string())),
    }
}

fn load_dataset(args: &DatasetArgs, default_split: Split) -> Result<Vec<NewsCase>, CliError> {
    if !args.dataset.exists() {
        return Err(CliError::usage(format!(
            "dataset path {} does not exist",
            args.dataset.display()
        )));
    }
    if args.dataset.extension().and_then(|e| e.to_str()) == Some("toml") {
        let manifest = DatasetManifest::load(&args.dataset)?;
        let split = parse_split(args, default_split)?;
        Ok(dataset::load_split(&manifest, split)?)
    } else {
        Ok(dataset::load_cases(&args.dataset, None, &[])?)
    }
}

fn ensure_parent(path: &Path) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    ensure_parent(path)?;
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    ensure_parent(path)?;
    std::fs::write(path, text)?;
    Ok(())
}

fn open_store(
    path: &Path,
    provider: &dyn EmbeddingProvider,
    allow_empty: bool,
) -> Result<CaseStore, CliError> {
    if path.exists() {
        Ok(CaseStore::load_for_provider(path, provider)?)
    } else if allow_empty {
        Ok(CaseStore::new(provider))
    } else {
        Err(CliError::data(format!(
            "store file {} does not exist (pass --allow-empty-store to run without one)",
            path.display()
        )))
    }
}

fn cmd_explore(config: &EngineConfig, args: ExploreArgs, dry_run: bool) -> Result<(), CliError> {
    let dataset = load_dataset(&args.dataset, Split::Train)?;
    let provider = config.build_provider()?;
    let store_path = args.store.unwrap_or_else(|| config.paths.store.clone());
    let report_path = args
        .report
        .unwrap_or_else(|| config.paths.reports.join("exploration_report.json"));
    let workers = args.workers.unwrap_or(config.engine.workers);

    let mut store = if store_path.exists() {
        CaseStore::load_for_provider(&store_path, provider.as_ref())?
    } else {
        CaseStore::new(provider.as_ref())
    };

    if dry_run {
        println!("plan: explore {} samples", dataset.len());
        println!("  store   {} ({} records)", store_path.display(), store.len());
        println!("  report  {}", report_path.display());
        println!("  workers {workers}");
        return Ok(());
    }

    let agents = config.build_agents()?;
    ensure_parent(&store_path)?;
    let options = ExploreOptions {
        workers,
        checkpoint_every: args.checkpoint_every,
        checkpoint_path: Some(store_path.clone()),
        shuffle_seed: args.shuffle_seed,
    };
    let report = run_exploration(&agents, provider.as_ref(), &dataset, &mut store, &options)?;
    store.save(&store_path)?;
    write_json(&report_path, &report)?;
    println!("{report}");
    println!("store: {} ({} records)", store_path.display(), store.len());
    Ok(())
}

fn cmd_detect(config: &EngineConfig, args: DetectArgs, dry_run: bool) -> Result<(), CliError> {
    let dataset = load_dataset(&args.dataset, Split::Test)?;
    let provider = config.build_provider()?;
    let store_path = args.store.unwrap_or_else(|| config.paths.store.clone());
    let traces_path = args.traces.unwrap_or_else(|| config.paths.traces.clone());
    let report_stem = args
        .report
        .unwrap_or_else(|| config.paths.reports.join("detect_metrics"));
    let workers = args.workers.unwrap_or(config.engine.workers);
    let ablation = args.ablation.apply(config.ablation);
    let store = open_store(&store_path, provider.as_ref(), args.allow_empty_store)?;

    if dry_run {
        println!(
            "plan: detect {} samples ({})",
            dataset.len(),
            ablation.variant_name()
        );
        println!("  store   {} ({} records)", store_path.display(), store.len());
        println!("  traces  {}", traces_path.display());
        println!("  report  {}", report_stem.display());
        println!("  workers {workers}");
        return Ok(());
    }

    let agents = config.build_agents()?;
    let records =
        deploy::detect_batch(&agents, provider.as_ref(), &store, &dataset, &ablation, workers);
    ensure_parent(&traces_path)?;
    deploy::write_traces(&records, &traces_path)?;
    let failed = records.iter().filter(|r| r.as_trace().is_none()).count();
    println!(
        "detect: {} samples, {} traced, {} failed -> {}",
        dataset.len(),
        dataset.len() - failed,
        failed,
        traces_path.display()
    );

    let golds = dataset::gold_labels(&dataset);
    let scored_have_golds = records
        .iter()
        .filter_map(|r| r.as_trace())
        .all(|t| golds.contains_key(&t.case.id));
    if !golds.is_empty() && scored_have_golds && records.iter().any(|r| r.as_trace().is_some()) {
        let report = metrics::evaluate(&records, &golds)?;
        write_json(Path::new(&format!("{}.json", report_stem.display())), &report)?;
        write_text(
            Path::new(&format!("{}.txt", report_stem.display())),
            &format!("{report}\n"),
        )?;
        println!("{report}");
    } else {
        println!("metrics skipped: dataset has no complete gold labels");
    }
    Ok(())
}

fn cmd_evaluate(config: &EngineConfig, args: EvaluateArgs, dry_run: bool) -> Result<(), CliError> {
    if !args.traces.exists() {
        return Err(CliError::usage(format!(
            "trace file {} does not exist",
            args.traces.display()
        )));
    }
    let dataset = load_dataset(&args.dataset, Split::Test)?;
    let report_stem = args
        .report
        .unwrap_or_else(|| config.paths.reports.join("evaluate_metrics"));
    let records = deploy::read_traces(&args.traces)?;
    if dry_run {
        println!(
            "plan: evaluate {} trace records against {} gold labels",
            records.len(),
            dataset.len()
        );
        return Ok(());
    }
    let golds = dataset::gold_labels(&dataset);
    let report = metrics::evaluate(&records, &golds)?;
    write_json(Path::new(&format!("{}.json", report_stem.display())), &report)?;
    write_text(
        Path::new(&format!("{}.txt", report_stem.display())),
        &format!("{report}\n"),
    )?;
    println!("{report}");
    Ok(())
}

#[derive(Serialize)]
struct VariantSummary {
    variant: String,
    metrics: MetricsReport,
    model_calls: u64,
    calls_per_sample: f64,
}

fn cmd_ablate(config: &EngineConfig, args: AblateArgs, dry_run: bool) -> Result<(), CliError> {
    let dataset = load_dataset(&args.dataset, Split::Test)?;
    let provider = config.build_provider()?;
    let store_path = args.store.unwrap_or_else(|| config.paths.store.clone());
    let out_dir = args.out_dir.unwrap_or_else(|| config.paths.reports.clone());
    let workers = args.workers.unwrap_or(config.engine.workers);
    let n_cases = args.n_cases.unwrap_or(config.ablation.n_cases);
    let seed = args.seed.unwrap_or(config.ablation.rng_seed);
    let store = open_store(&store_path, provider.as_ref(), args.allow_empty_store)?;
    let variants = AblationConfig::study_variants(n_cases, seed);

    if dry_run {
        println!(
            "plan: ablate {} samples x {} variants",
            dataset.len(),
            variants.len()
        );
        for variant in &variants {
            println!("  {}", variant.variant_name());
        }
        println!("  out dir {}", out_dir.display());
        return Ok(());
    }

    std::fs::create_dir_all(&out_dir)?;
    let golds = dataset::gold_labels(&dataset);
    let mut summaries = Vec::new();
    for variant in &variants {
        // Fresh backend per variant: scripted mocks start from a clean
        // queue and call counts are attributable.
        let agents = config.build_agents()?;
        let records =
            deploy::detect_batch(&agents, provider.as_ref(), &store, &dataset, variant, workers);
        let calls = agents.backend().calls_made();
        let name = variant.variant_name().to_string();
        deploy::write_traces(&records, &out_dir.join(format!("ablate_{name}_traces.jsonl")))?;
        let report = metrics::evaluate(&records, &golds)?;
        summaries.push(VariantSummary {
            variant: name,
            calls_per_sample: calls as f64 / dataset.len() as f64,
            model_calls: calls,
            metrics: report,
        });
    }

    let mut table = String::from(
        "variant                 ACC     F1      PR      RC      scored failed calls/sample\n",
    );
    for s in &summaries {
        table.push_str(&format!(
            "{:<22}  {:.4}  {:.4}  {:.4}  {:.4}  {:>6} {:>6} {:>12.2}\n",
            s.variant,
            s.metrics.accuracy,
            s.metrics.f1_macro,
            s.metrics.precision,
            s.metrics.recall,
            s.metrics.n_scored,
            s.metrics.n_failed,
            s.calls_per_sample
        ));
    }
    write_json(&out_dir.join("ablation_report.json"), &summaries)?;
    write_text(&out_dir.join("ablation_report.txt"), &table)?;
    print!("{table}");
    Ok(())
}

fn cmd_smoke(config: &EngineConfig, dry_run: bool) -> Result<(), CliError> {
    let case = NewsCase {
        id: "smoke-1".into(),
        text: "Drinking two liters of seawater a day is a safe way to stay hydrated".into(),
        evidence: vec![Evidence {
            source: "medical-guidance".into(),
            text: "Health authorities warn that drinking seawater dehydrates the body because \
                   its salt concentration exceeds what the kidneys can excrete"
                .into(),
        }],
        gold_label: Some(Verdict::False),
        domain_tag: Some("health".into()),
    };
    if dry_run {
        println!("plan: smoke-test one sample against the configured backend");
        return Ok(());
    }
    let provider = config.build_provider()?;
    let agents = config.build_agents()?;
    let store = CaseStore::new(provider.as_ref());
    let trace = deploy::detect(&agents, provider.as_ref(), &store, &case, &config.ablation)?;
    println!("smoke verdict: {} (gold: false)", trace.final_verdict);
    println!("ordinary said {}", trace.ordinary.verdict);
    if let Some(special) = &trace.special {
        println!(
            "special said  {}{}",
            special.verdict,
            if special.noncompliant { " (noncompliant)" } else { "" }
        );
    }
    if let Some(judgment) = &trace.judgment {
        println!("winner: {}", judgment.winner);
    }
    Ok(())
}

fn cmd_kb(command: KbCommand) -> Result<(), CliError> {
    match command {
        KbCommand::Inspect { store } => {
            let store_data = CaseStore::load(&store)?;
            println!("store    {}", store.display());
            println!("provider {}", store_data.provider_id());
            println!("dim      {}", store_data.dimension());
            println!("records  {}", store_data.len());
            let mut by_gold: BTreeMap<Verdict, usize> = BTreeMap::new();
            for record in store_data.records() {
                if let Some(gold) = record.case.gold_label {
                    *by_gold.entry(gold).or_default() += 1;
                }
            }
            for (verdict, count) in by_gold {
                println!("  gold {verdict}: {count}");
            }
            if let Some(last) = store_data.records().last() {
                println!("last id  {} (seq {})", last.id(), last.created_seq);
            }
            Ok(())
        }
        KbCommand::Compact { store } => {
            let store_data = CaseStore::load(&store)?;
            store_data.save(&store)?;
            println!(
                "compacted {} ({} records)",
                store.display(),
                store_data.len()
            );
            Ok(())
        }
    }
}
