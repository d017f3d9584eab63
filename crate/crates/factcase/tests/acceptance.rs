//! Acceptance suite: one test per criterion, each printing a PASS line
//! with its measured evidence. Everything runs against the deterministic
//! scripted backend; no live model is involved.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use factcase::agents::{AgentPolicy, Agents};
use factcase::dataset::{self, DatasetManifest, Split};
use factcase::deploy::{detect, detect_batch, AblationConfig};
use factcase::explore::{run_exploration, ExploreOptions};
use factcase::gateway::{ChatBackend, Matcher, MockBackend};
use factcase::kb::{CaseStore, EmbeddingProvider, StaticProvider};
use factcase::metrics::compute_metrics;
use factcase::model::{
    Analysis, Channel, ExperienceRecord, NewsCase, Reflection, Verdict,
};
use factcase::prompt::TemplateSet;

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn pass(criterion: u32, detail: &str) {
    println!("[PASS] criterion {criterion}: {detail}");
}

fn strict_agents(mock: Arc<MockBackend>) -> Agents {
    Agents::new(mock, Arc::new(TemplateSet::builtin()), "mock-model").with_policy(AgentPolicy {
        max_reasks: 0,
        enforce_special_label: true,
    })
}

fn labeled(id: &str, text: &str, gold: Verdict) -> NewsCase {
    let mut case = NewsCase::new(id, text);
    case.gold_label = Some(gold);
    case
}

fn experience(provider: &dyn EmbeddingProvider, id: &str, text: &str) -> ExperienceRecord {
    let mut case = NewsCase::new(id, text);
    case.gold_label = Some(Verdict::False);
    ExperienceRecord {
        case,
        wrong_analysis: Analysis {
            channel: Channel::Ordinary,
            rationale: format!("wrong analysis of {id}"),
            verdict: Verdict::True,
            model_id: "m".into(),
            token_count: 0,
            noncompliant: false,
        },
        correct_analysis: Analysis {
            channel: Channel::Special,
            rationale: format!("correct analysis of {id}"),
            verdict: Verdict::False,
            model_id: "m".into(),
            token_count: 0,
            noncompliant: false,
        },
        reflection: Reflection {
            diagnosis: format!("diagnosis for {id}"),
            error_tags: vec![],
        },
        embedding: provider.embed(text).unwrap(),
        created_seq: 0,
    }
}

/// Criterion 1: the judger-to-verdict mapping reproduces the full truth
/// table over (ordinary verdict x winner) with the special channel always
/// opposing.
#[test]
fn acceptance_1_final_verdict_truth_table() {
    let started = Instant::now();
    let provider = factcase::kb::HashedBagProvider::new(16);
    let mut store = CaseStore::new(&provider);
    store
        .add_case(experience(&provider, "exp1", "past case about utilities"))
        .unwrap();

    let mut results = Vec::new();
    for (ordinary_verdict, winner) in [
        (Verdict::True, Channel::Ordinary),
        (Verdict::True, Channel::Special),
        (Verdict::False, Channel::Ordinary),
        (Verdict::False, Channel::Special),
    ] {
        let mock = Arc::new(MockBackend::new());
        mock.script(
            Matcher::regex("already established[\\s\\S]*NEWS: fresh claim").unwrap(),
            format!(
                "LABEL: {}\nANALYSIS: special angle",
                ordinary_verdict.reverse()
            ),
        );
        mock.script(
            Matcher::substring("NEWS: fresh claim"),
            format!("LABEL: {ordinary_verdict}\nANALYSIS: ordinary angle"),
        );
        mock.script(Matcher::substring("PAST EXPERIENCES:"), "ADVICE: weigh the sources");
        mock.script(
            Matcher::substring("ordinary angle"),
            format!("WINNER: {winner}\nREASON: criteria"),
        );
        let agents = strict_agents(mock);
        let case = NewsCase::new("q", "fresh claim");
        let trace = detect(
            &agents,
            &provider,
            &store,
            &case,
            &AblationConfig::default(),
        )
        .unwrap();
        assert_eq!(
            trace.special.as_ref().unwrap().verdict,
            ordinary_verdict.reverse()
        );
        results.push(trace.final_verdict);
    }
    // Ordinary wins keep the ordinary verdict; special wins take its
    // reverse.
    assert_eq!(
        results,
        vec![Verdict::True, Verdict::False, Verdict::False, Verdict::True]
    );
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 1.0, "took {elapsed:?}");
    pass(1, &format!("4/4 truth-table rows exact in {elapsed:?}"));
}

/// Criterion 2: over the 2x2x2 lattice of (ordinary, special, gold)
/// scripted outcomes, an experience is stored in exactly the 2 cells where
/// the ordinary analyst missed the gold label and the special analyst
/// genuinely matched it.
#[test]
fn acceptance_2_exploration_filter_lattice() {
    let started = Instant::now();
    let provider = factcase::kb::HashedBagProvider::new(16);
    let mut stored_cells = Vec::new();
    for ordinary_says in [Verdict::True, Verdict::False] {
        for special_says in [Verdict::True, Verdict::False] {
            for gold in [Verdict::True, Verdict::False] {
                let mock = Arc::new(MockBackend::new());
                mock.script(
                    Matcher::regex("already established[\\s\\S]*NEWS: lattice claim").unwrap(),
                    format!("LABEL: {special_says}\nANALYSIS: special angle"),
                );
                mock.script(
                    Matcher::substring("NEWS: lattice claim"),
                    format!("LABEL: {ordinary_says}\nANALYSIS: ordinary angle"),
                );
                mock.script(
                    Matcher::substring("ordinary angle"),
                    "DIAGNOSIS: the ordinary analysis drew an unsupported conclusion",
                );
                let agents = strict_agents(mock);
                let dataset = vec![labeled("cell", "lattice claim", gold)];
                let mut store = CaseStore::new(&provider);
                let report = run_exploration(
                    &agents,
                    &provider,
                    &dataset,
                    &mut store,
                    &ExploreOptions::default(),
                )
                .unwrap();
                assert!(report.consistent());
                assert_eq!(report.stored as usize, store.len());
                if store.len() == 1 {
                    stored_cells.push((ordinary_says, special_says, gold));
                }
            }
        }
    }
    // Exactly the two harvest cells.
    assert_eq!(
        stored_cells,
        vec![
            (Verdict::True, Verdict::False, Verdict::False),
            (Verdict::False, Verdict::True, Verdict::True),
        ]
    );
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 1.0, "took {elapsed:?}");
    pass(
        2,
        &format!("2 of 8 lattice cells stored, exactly the harvest cells, in {elapsed:?}"),
    );
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut current = Vec::with_capacity(k);
    fn go(start: usize, n: usize, k: usize, current: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if current.len() == k {
            out.push(current.clone());
            return;
        }
        for i in start..n {
            current.push(i);
            go(i + 1, n, k, current, out);
            current.pop();
        }
    }
    go(0, n, k, &mut current, &mut out);
    out
}

fn random_unit_vector(rng: &mut ChaCha8Rng, dimension: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dimension).map(|_| rng.random_range(-1.0..1.0)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            return v.iter().map(|x| x / norm).collect();
        }
    }
}

/// Criterion 3: top-n retrieval equals exhaustive subset-sum maximization
/// over all size-n subsets, for 50 records, 100 queries, n in {1,2,3}.
#[test]
fn acceptance_3_retrieval_matches_subset_sum_oracle() {
    let started = Instant::now();
    let dimension = 16;
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut provider = StaticProvider::new(dimension);
    let mut store = CaseStore::new(&provider);
    let mut record_embeddings = Vec::new();
    for i in 0..50 {
        let embedding = random_unit_vector(&mut rng, dimension);
        record_embeddings.push(embedding.clone());
        let mut record = experience(
            &StaticProviderEmbedShim(embedding.clone()),
            &format!("rec{i}"),
            &format!("record text {i}"),
        );
        record.embedding = embedding;
        store.add_case(record).unwrap();
    }
    let mut checked = 0;
    for q in 0..100 {
        let query_text = format!("query {q}");
        let query_embedding = random_unit_vector(&mut rng, dimension);
        provider.insert(query_text.clone(), query_embedding.clone());
        let sims: Vec<f64> = record_embeddings
            .iter()
            .map(|e| factcase::kb::cosine_similarity(&query_embedding, e))
            .collect();
        for n in 1..=3usize {
            let retrieved = store
                .retrieve_top_n(&provider, &NewsCase::new("q", query_text.clone()), n)
                .unwrap();
            let got: std::collections::BTreeSet<String> =
                retrieved.iter().map(|r| r.id().to_string()).collect();

            // Brute-force argmax over all size-n subsets of the similarity
            // sum.
            let mut best_sum = f64::NEG_INFINITY;
            let mut best: Vec<usize> = Vec::new();
            for combo in combinations(50, n) {
                let sum: f64 = combo.iter().map(|&i| sims[i]).sum();
                if sum > best_sum {
                    best_sum = sum;
                    best = combo;
                }
            }
            let expected: std::collections::BTreeSet<String> =
                best.iter().map(|&i| format!("rec{i}")).collect();
            assert_eq!(got, expected, "query {q}, n={n}");
            checked += 1;
        }
    }
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 10.0, "took {elapsed:?}");
    pass(
        3,
        &format!("{checked} retrievals equal the subset-sum oracle in {elapsed:?}"),
    );
}

/// Embedding shim so `experience()` can be reused with a preset vector.
struct StaticProviderEmbedShim(Vec<f64>);

impl EmbeddingProvider for StaticProviderEmbedShim {
    fn provider_id(&self) -> &str {
        "shim"
    }
    fn dimension(&self) -> usize {
        self.0.len()
    }
    fn embed(&self, _text: &str) -> Result<Vec<f64>, factcase::kb::KbError> {
        Ok(self.0.clone())
    }
}

/// Criterion 4: metrics match a brute-force counting oracle on 1000 random
/// pairs to 1e-12, and the worked confusion example reproduces exactly.
#[test]
fn acceptance_4_metrics_match_counting_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let flip = |rng: &mut ChaCha8Rng| {
        if rng.random_bool(0.5) {
            Verdict::True
        } else {
            Verdict::False
        }
    };
    let pairs: Vec<(Verdict, Verdict)> =
        (0..1000).map(|_| (flip(&mut rng), flip(&mut rng))).collect();

    // Independent counting oracle: tally the four cells directly and apply
    // the ratio definitions, positive class = fake (False).
    let mut tp = 0u64;
    let mut fp = 0u64;
    let mut fn_ = 0u64;
    let mut tn = 0u64;
    for &(pred, gold) in &pairs {
        match (pred == Verdict::False, gold == Verdict::False) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    let div = |a: u64, b: u64| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let oracle_acc = div(tp + tn, tp + fp + fn_ + tn);
    let oracle_pr = div(tp, tp + fp);
    let oracle_rc = div(tp, tp + fn_);
    let f1_of = |p: f64, r: f64| if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    let oracle_f1_pos = f1_of(oracle_pr, oracle_rc);
    let oracle_pr_neg = div(tn, tn + fn_);
    let oracle_rc_neg = div(tn, tn + fp);
    let oracle_f1_macro = (oracle_f1_pos + f1_of(oracle_pr_neg, oracle_rc_neg)) / 2.0;

    let report = compute_metrics(&pairs).unwrap();
    assert!((report.accuracy - oracle_acc).abs() < 1e-12);
    assert!((report.precision - oracle_pr).abs() < 1e-12);
    assert!((report.recall - oracle_rc).abs() < 1e-12);
    assert!((report.f1_macro - oracle_f1_macro).abs() < 1e-12);

    // Worked example from counts {TP=3, FP=1, FN=2, TN=4}.
    let mut worked = Vec::new();
    worked.extend(std::iter::repeat_n((Verdict::False, Verdict::False), 3));
    worked.push((Verdict::False, Verdict::True));
    worked.extend(std::iter::repeat_n((Verdict::True, Verdict::False), 2));
    worked.extend(std::iter::repeat_n((Verdict::True, Verdict::True), 4));
    let report = compute_metrics(&worked).unwrap();
    assert_eq!(report.accuracy, 0.7);
    assert_eq!(report.precision, 0.75);
    assert_eq!(report.recall, 0.6);
    pass(
        4,
        "1000-pair oracle agreement within 1e-12; worked example {3,1,2,4} exact",
    );
}

/// Criterion 5: bundled fixture splits load with hand-counted expectations;
/// the published full splits reproduce the documented counts when present.
#[test]
fn acceptance_5_dataset_counts() {
    let datasets_dir = fixtures().join("datasets");
    // Hand counts: chef_mini has 10 rows of which 2 are NEI (dropped);
    // politifact_mini has 10 rows; snopes_mini has 9.
    let chef = DatasetManifest::load(&datasets_dir.join("chef_mini.toml")).unwrap();
    assert_eq!(dataset::load_split(&chef, Split::Train).unwrap().len(), 8);
    assert_eq!(dataset::load_split(&chef, Split::Test).unwrap().len(), 8);
    let politifact =
        DatasetManifest::load(&datasets_dir.join("politifact_mini.toml")).unwrap();
    assert_eq!(
        dataset::load_split(&politifact, Split::Test).unwrap().len(),
        10
    );
    let snopes = DatasetManifest::load(&datasets_dir.join("snopes_mini.toml")).unwrap();
    assert_eq!(dataset::load_split(&snopes, Split::Test).unwrap().len(), 9);

    // Gold labels survive the mapping.
    let cases = dataset::load_split(&chef, Split::Test).unwrap();
    assert!(cases.iter().all(|c| c.gold_label.is_some()));

    // Full published splits, when the operator has fetched them.
    let expected = [
        ("chef", 5754usize, 666usize, 666usize),
        ("politifact", 1919, 631, 650),
        ("snopes", 2604, 869, 868),
    ];
    match std::env::var("FACTCASE_DATA_DIR") {
        Ok(dir) => {
            for (name, train, val, test) in expected {
                let manifest =
                    DatasetManifest::load(&Path::new(&dir).join(format!("{name}.toml"))).unwrap();
                assert_eq!(dataset::load_split(&manifest, Split::Train).unwrap().len(), train);
                assert_eq!(dataset::load_split(&manifest, Split::Val).unwrap().len(), val);
                assert_eq!(dataset::load_split(&manifest, Split::Test).unwrap().len(), test);
            }
            pass(5, "fixture counts and full published split counts exact");
        }
        Err(_) => pass(
            5,
            "fixture counts exact (full splits skipped: FACTCASE_DATA_DIR unset)",
        ),
    }
}

fn write_engine_config(dir: &Path) -> PathBuf {
    let scripts = fixtures().join("scripts.jsonl");
    let config = format!(
        "[backend]\ntype = \"mock\"\nscripts = {scripts:?}\n\n[embedding]\nprovider = \"hashed\"\ndimension = 32\n\n[engine]\nworkers = 1\nmax_reasks = 0\n\n[paths]\nstore = \"kb.jsonl\"\ntraces = \"traces.jsonl\"\nreports = \"reports\"\n",
    );
    let path = dir.join("engine.toml");
    std::fs::write(&path, config).unwrap();
    path
}

fn run_binary(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_factcase"))
        .args(args)
        .output()
        .expect("binary runs")
}

/// Criterion 6: two identical explore-then-detect runs through the real
/// binary produce byte-identical store, trace, and report files.
#[test]
fn acceptance_6_end_to_end_determinism() {
    let explore_data = fixtures().join("explore6.jsonl");
    let detect_data = fixtures().join("detect4.jsonl");
    let run_once = || {
        let dir = tempfile::tempdir().unwrap();
        let config = write_engine_config(dir.path());
        let config_arg = config.to_str().unwrap().to_string();
        let out = run_binary(&[
            "explore",
            "--config",
            &config_arg,
            "--dataset",
            explore_data.to_str().unwrap(),
        ]);
        assert_eq!(out.status.code(), Some(0), "explore: {}", String::from_utf8_lossy(&out.stderr));
        let out = run_binary(&[
            "detect",
            "--config",
            &config_arg,
            "--dataset",
            detect_data.to_str().unwrap(),
        ]);
        assert_eq!(out.status.code(), Some(0), "detect: {}", String::from_utf8_lossy(&out.stderr));
        let read = |rel: &str| std::fs::read(dir.path().join(rel)).unwrap();
        (
            read("kb.jsonl"),
            read("traces.jsonl"),
            read("reports/exploration_report.json"),
            read("reports/detect_metrics.json"),
            read("reports/detect_metrics.txt"),
        )
    };
    let first = run_once();
    let second = run_once();
    assert_eq!(first.0, second.0, "store bytes differ");
    assert_eq!(first.1, second.1, "trace bytes differ");
    assert_eq!(first.2, second.2, "exploration report bytes differ");
    assert_eq!(first.3, second.3, "metrics json bytes differ");
    assert_eq!(first.4, second.4, "metrics text bytes differ");

    // The scripted fixture also pins the stage outcomes: 2 experiences
    // stored, 4/4 detect verdicts correct.
    let report: serde_json::Value =
        serde_json::from_slice(&first.2).unwrap();
    assert_eq!(report["stored"], 2);
    let metrics: serde_json::Value = serde_json::from_slice(&first.3).unwrap();
    assert_eq!(metrics["accuracy"], 1.0);
    pass(6, "store, traces, and reports byte-identical across two runs");
}

/// Criterion 7: the ablation driver emits the baseline plus all four
/// variants, and per-sample model-call counts match the documented
/// formula for every variant.
#[test]
fn acceptance_7_ablation_structure_and_call_counts() {
    // Library level: build the store once, then count calls per variant.
    let scripts = fixtures().join("scripts.jsonl");
    let provider = factcase::kb::HashedBagProvider::new(32);
    let explore_set = dataset::load_cases(&fixtures().join("explore6.jsonl"), None, &[]).unwrap();
    let detect_set = dataset::load_cases(&fixtures().join("detect4.jsonl"), None, &[]).unwrap();

    let fresh_agents = || {
        let mock = Arc::new(MockBackend::new());
        mock.load_scripts(&scripts).unwrap();
        (strict_agents(mock.clone()), mock)
    };

    let (agents, _) = fresh_agents();
    let mut store = CaseStore::new(&provider);
    run_exploration(
        &agents,
        &provider,
        &explore_set,
        &mut store,
        &ExploreOptions::default(),
    )
    .unwrap();
    assert_eq!(store.len(), 2);

    // Calls per sample: ordinary + special + judger = 3, advisor +1 when
    // it runs, single analyst when the dual channel is off.
    let expected: BTreeMap<&str, u64> = BTreeMap::from([
        ("baseline", 4u64),
        ("no_reflector", 4),
        ("no_advisor", 3),
        ("no_dual_channel", 1),
        ("random_case_retrieval", 4),
    ]);
    for variant in AblationConfig::study_variants(1, 11) {
        let (agents, mock) = fresh_agents();
        let records = detect_batch(&agents, &provider, &store, &detect_set, &variant, 1);
        assert!(records.iter().all(|r| r.as_trace().is_some()));
        let per_sample = mock.calls_made() / detect_set.len() as u64;
        assert_eq!(mock.calls_made() % detect_set.len() as u64, 0);
        assert_eq!(
            per_sample,
            expected[variant.variant_name()],
            "calls per sample for {}",
            variant.variant_name()
        );
    }

    // CLI level: cmd_ablate writes baseline + 4 variants.
    let dir = tempfile::tempdir().unwrap();
    let config = write_engine_config(dir.path());
    let config_arg = config.to_str().unwrap().to_string();
    let out = run_binary(&[
        "explore",
        "--config",
        &config_arg,
        "--dataset",
        fixtures().join("explore6.jsonl").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let out = run_binary(&[
        "ablate",
        "--config",
        &config_arg,
        "--dataset",
        fixtures().join("detect4.jsonl").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("reports/ablation_report.json")).unwrap())
            .unwrap();
    let rows = report.as_array().unwrap();
    assert_eq!(rows.len(), 5);
    let names: Vec<&str> = rows.iter().map(|r| r["variant"].as_str().unwrap()).collect();
    assert_eq!(
        names,
        vec![
            "baseline",
            "no_reflector",
            "no_advisor",
            "no_dual_channel",
            "random_case_retrieval"
        ]
    );
    for row in rows {
        let expected_calls = expected[row["variant"].as_str().unwrap()] as f64;
        assert_eq!(row["calls_per_sample"].as_f64().unwrap(), expected_calls);
    }
    pass(
        7,
        "baseline + 4 variants emitted; per-sample call counts match the formulas",
    );
}

/// Criterion 8: across 100 scripted noncompliance patterns the special
/// channel never surfaces a verdict differing from its imposed label, and
/// the noncompliance flag appears exactly when the model kept disagreeing
/// through every re-ask.
#[test]
fn acceptance_8_special_channel_contract() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let max_reasks = 2u32;
    let attempts_budget = max_reasks + 1;
    let mut flagged = 0;
    for i in 0..100 {
        let imposed = if rng.random_bool(0.5) {
            Verdict::True
        } else {
            Verdict::False
        };
        // Number of defiant answers before complying; > budget-1 means the
        // model never complies within the allowed attempts.
        let defiant_answers: u32 = rng.random_range(0..=attempts_budget);
        let mock = Arc::new(MockBackend::new());
        for _ in 0..defiant_answers.min(attempts_budget) {
            mock.script_once(
                Matcher::Any,
                format!("LABEL: {}\nANALYSIS: refusing the imposed view", imposed.reverse()),
            );
        }
        mock.script(
            Matcher::Any,
            format!("LABEL: {imposed}\nANALYSIS: yielding to the imposed view"),
        );
        let agents = Agents::new(
            mock.clone(),
            Arc::new(TemplateSet::builtin()),
            "mock-model",
        )
        .with_policy(AgentPolicy {
            max_reasks,
            enforce_special_label: true,
        });
        let case = NewsCase::new(format!("s{i}"), format!("pattern claim {i}"));
        let analysis = agents.special_analyze(&case, imposed).unwrap();

        assert_eq!(analysis.verdict, imposed, "pattern {i} surfaced a defiant verdict");
        let never_complied = defiant_answers >= attempts_budget;
        assert_eq!(
            analysis.noncompliant, never_complied,
            "pattern {i}: defiant_answers={defiant_answers}"
        );
        let expected_calls = defiant_answers.min(attempts_budget).saturating_add(
            if never_complied { 0 } else { 1 },
        );
        assert_eq!(mock.calls_made(), expected_calls as u64, "pattern {i}");
        if analysis.noncompliant {
            flagged += 1;
        }
    }
    assert!(flagged > 0, "patterns must include never-complying cases");
    assert!(flagged < 100, "patterns must include complying cases");
    pass(
        8,
        &format!("100 patterns: imposed label always kept, {flagged} flagged noncompliant"),
    );
}
