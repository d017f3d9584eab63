//! Persistent store of experience records with embedding-based top-n
//! retrieval.
//!
//! Retrieval is an exact full scan: cosine similarity against every stored
//! record, descending, ties broken by insertion order. Because the sum of
//! similarities over a size-n subset is maximized by the n individually
//! largest similarities, this equals the argmax-subset retrieval the
//! advisor needs.
//!
//! Concurrency: one writer (exploration appends), many readers (deployment
//! retrieval over an immutable store).

use std::collections::HashSet;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::model::{ExperienceRecord, NewsCase};

pub const STORE_SCHEMA_VERSION: u32 = 1;

/// Text-to-vector provider. Embeddings must be unit-normalized and
/// deterministic for a fixed provider.
pub trait EmbeddingProvider: Send + Sync {
    /// Stable identity; stores refuse to mix providers.
    fn provider_id(&self) -> &str;
    fn dimension(&self) -> usize;
    fn embed(&self, text: &str) -> Result<Vec<f64>, KbError>;
}

/// Deterministic hashed bag-of-tokens embedding.
///
/// Tokens are lowercased alphanumeric runs; CJK characters count as
/// single-character tokens so unsegmented text still spreads over buckets.
/// Each token hashes (FNV-1a) to a bucket, counts are accumulated and the
/// vector is L2-normalized. Hermetic and stable across platforms, which is
/// what retrieval tests need; live deployments point the engine at a real
/// sentence-embedding server instead.
pub struct HashedBagProvider {
    id: String,
    dimension: usize,
}

impl HashedBagProvider {
    pub fn new(dimension: usize) -> Self {
        assert!(dimension > 0, "embedding dimension must be positive");
        HashedBagProvider {
            id: format!("hashed-bow-{dimension}"),
            dimension,
        }
    }
}

impl Default for HashedBagProvider {
    fn default() -> Self {
        HashedBagProvider::new(256)
    }
}

pub(crate) fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

fn is_cjk(c: char) -> bool {
    matches!(c,
        '\u{4E00}'..='\u{9FFF}'
        | '\u{3400}'..='\u{4DBF}'
        | '\u{3040}'..='\u{30FF}'
        | '\u{AC00}'..='\u{D7AF}')
}

fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    for c in text.chars() {
        if is_cjk(c) {
            if !current.is_empty() {
                tokens.push(std::mem::take(&mut current));
            }
            tokens.push(c.to_string());
        } else if c.is_alphanumeric() {
            current.extend(c.to_lowercase());
        } else if !current.is_empty() {
            tokens.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

impl EmbeddingProvider for HashedBagProvider {
    fn provider_id(&self) -> &str {
        &self.id
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, KbError> {
        if text.trim().is_empty() {
            return Err(KbError::Provider("cannot embed empty text".into()));
        }
        let mut vector = vec![0f64; self.dimension];
        for token in tokenize(text) {
            let bucket = (fnv1a64(token.as_bytes()) % self.dimension as u64) as usize;
            vector[bucket] += 1.0;
        }
        Ok(normalize(vector))
    }
}

/// Fixture provider mapping exact texts to preset vectors. Lets tests pin
/// arbitrary geometry (known cosines, random unit vectors) without hashing.
#[derive(Default)]
pub struct StaticProvider {
    id: String,
    dimension: usize,
    vectors: std::collections::HashMap<String, Vec<f64>>,
}

impl StaticProvider {
    pub fn new(dimension: usize) -> Self {
        StaticProvider {
            id: format!("static-{dimension}"),
            dimension,
            vectors: Default::default(),
        }
    }

    /// Register a vector for a text; the vector is unit-normalized here.
    pub fn insert(&mut self, text: impl Into<String>, vector: Vec<f64>) {
        assert_eq!(vector.len(), self.dimension, "fixture vector dimension");
        self.vectors.insert(text.into(), normalize(vector));
    }
}

impl EmbeddingProvider for StaticProvider {
    fn provider_id(&self) -> &str {
        &self.id
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, KbError> {
        self.vectors
            .get(text)
            .cloned()
            .ok_or_else(|| KbError::Provider(format!("no fixture vector for text {text:?}")))
    }
}

/// Provider backed by an embeddings REST endpoint
/// (`POST {model, input: [text]}` returning `data[0].embedding`).
pub struct HttpEmbeddingProvider {
    id: String,
    dimension: usize,
    endpoint_url: String,
    model_id: String,
    agent: ureq::Agent,
}

#[derive(Serialize)]
struct EmbedWireRequest<'a> {
    model: &'a str,
    input: [&'a str; 1],
}

#[derive(Deserialize)]
struct EmbedWireResponse {
    data: Vec<EmbedWireItem>,
}

#[derive(Deserialize)]
struct EmbedWireItem {
    embedding: Vec<f64>,
}

impl HttpEmbeddingProvider {
    pub fn new(
        endpoint_url: impl Into<String>,
        model_id: impl Into<String>,
        dimension: usize,
        timeout: Duration,
    ) -> Self {
        let model_id = model_id.into();
        HttpEmbeddingProvider {
            id: format!("http-{model_id}"),
            dimension,
            endpoint_url: endpoint_url.into(),
            model_id,
            agent: ureq::Agent::config_builder()
                .timeout_global(Some(timeout))
                .build()
                .new_agent(),
        }
    }
}

impl EmbeddingProvider for HttpEmbeddingProvider {
    fn provider_id(&self) -> &str {
        &self.id
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, KbError> {
        let body = EmbedWireRequest {
            model: &self.model_id,
            input: [text],
        };
        let mut response = self
            .agent
            .post(&self.endpoint_url)
            .send_json(&body)
            .map_err(|e| KbError::Provider(format!("embedding request failed: {e}")))?;
        let wire: EmbedWireResponse = response
            .body_mut()
            .read_json()
            .map_err(|e| KbError::Provider(format!("bad embedding response: {e}")))?;
        let vector = wire
            .data
            .into_iter()
            .next()
            .map(|d| d.embedding)
            .ok_or_else(|| KbError::Provider("embedding response has no data".into()))?;
        if vector.len() != self.dimension {
            return Err(KbError::DimensionMismatch {
                expected: self.dimension,
                got: vector.len(),
            });
        }
        Ok(normalize(vector))
    }
}

fn normalize(mut vector: Vec<f64>) -> Vec<f64> {
    let norm = vector.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        // Degenerate input (no tokens hit any bucket): fall back to a fixed
        // unit vector so the result is still well-formed.
        vector[0] = 1.0;
        return vector;
    }
    for x in &mut vector {
        *x /= norm;
    }
    vector
}

/// Cosine similarity. Stored embeddings are unit vectors, but the full
/// formula keeps retrieval correct even for externally supplied vectors.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> f64 {
    let mut dot = 0f64;
    let mut na = 0f64;
    let mut nb = 0f64;
    for (x, y) in a.iter().zip(b.iter()) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot / (na.sqrt() * nb.sqrt())
}

#[derive(Debug, Serialize, Deserialize)]
struct StoreHeader {
    schema_version: u32,
    provider_id: String,
    dimension: usize,
}

/// On-disk record shape: the id is explicit even though it duplicates
/// `case.id`, so store files are self-describing line by line.
#[derive(Serialize, Deserialize)]
struct StoredRecord {
    id: String,
    created_seq: u64,
    case: crate::model::NewsCase,
    wrong_analysis: crate::model::Analysis,
    correct_analysis: crate::model::Analysis,
    reflection: crate::model::Reflection,
    embedding: Vec<f64>,
}

impl From<&ExperienceRecord> for StoredRecord {
    fn from(record: &ExperienceRecord) -> Self {
        StoredRecord {
            id: record.id().to_string(),
            created_seq: record.created_seq,
            case: record.case.clone(),
            wrong_analysis: record.wrong_analysis.clone(),
            correct_analysis: record.correct_analysis.clone(),
            reflection: record.reflection.clone(),
            embedding: record.embedding.clone(),
        }
    }
}

impl StoredRecord {
    fn into_record(self, lineno: usize) -> Result<ExperienceRecord, KbError> {
        if self.id != self.case.id {
            return Err(KbError::Corrupt {
                line: lineno,
                message: format!(
                    "record id {} does not match case id {}",
                    self.id, self.case.id
                ),
            });
        }
        Ok(ExperienceRecord {
            case: self.case,
            wrong_analysis: self.wrong_analysis,
            correct_analysis: self.correct_analysis,
            reflection: self.reflection,
            embedding: self.embedding,
            created_seq: self.created_seq,
        })
    }
}

/// Append-only store of experience records sharing one embedding space.
pub struct CaseStore {
    provider_id: String,
    dimension: usize,
    records: Vec<ExperienceRecord>,
    ids: HashSet<String>,
    next_seq: u64,
}

impl CaseStore {
    pub fn new(provider: &dyn EmbeddingProvider) -> Self {
        CaseStore {
            provider_id: provider.provider_id().to_string(),
            dimension: provider.dimension(),
            records: Vec::new(),
            ids: HashSet::new(),
            next_seq: 1,
        }
    }

    pub fn provider_id(&self) -> &str {
        &self.provider_id
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[ExperienceRecord] {
        &self.records
    }

    /// Append a record. The store assigns `created_seq`; the record must
    /// satisfy the experience invariants and carry an embedding of the
    /// store's dimension. Returns the record id.
    pub fn add_case(&mut self, mut record: ExperienceRecord) -> Result<String, KbError> {
        record
            .validate()
            .map_err(|e| KbError::InvalidRecord(e.to_string()))?;
        if record.embedding.len() != self.dimension {
            return Err(KbError::DimensionMismatch {
                expected: self.dimension,
                got: record.embedding.len(),
            });
        }
        if self.ids.contains(record.id()) {
            return Err(KbError::DuplicateId(record.id().to_string()));
        }
        record.created_seq = self.next_seq;
        self.next_seq += 1;
        self.ids.insert(record.id().to_string());
        self.records.push(record);
        Ok(self.records.last().expect("just pushed").id().to_string())
    }

    /// The n stored records most similar to the query case's text,
    /// descending by cosine similarity, ties broken by smaller
    /// `created_seq`. Returns `min(n, len)` records; an empty store is an
    /// error so callers must opt into degraded behavior explicitly.
    pub fn retrieve_top_n(
        &self,
        provider: &dyn EmbeddingProvider,
        query: &NewsCase,
        n: usize,
    ) -> Result<Vec<&ExperienceRecord>, KbError> {
        if n == 0 {
            return Err(KbError::InvalidArgument("retrieval requires n >= 1".into()));
        }
        if provider.provider_id() != self.provider_id {
            return Err(KbError::ProviderMismatch {
                store: self.provider_id.clone(),
                requested: provider.provider_id().to_string(),
            });
        }
        if self.records.is_empty() {
            return Err(KbError::EmptyStore);
        }
        let query_embedding = provider.embed(&query.text)?;
        let mut scored: Vec<(f64, &ExperienceRecord)> = self
            .records
            .iter()
            .map(|r| (cosine_similarity(&query_embedding, &r.embedding), r))
            .collect();
        scored.sort_by(|(sa, ra), (sb, rb)| {
            sb.partial_cmp(sa)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(ra.created_seq.cmp(&rb.created_seq))
        });
        Ok(scored.into_iter().take(n).map(|(_, r)| r).collect())
    }

    /// Write the store as a header line plus one JSON record per line.
    /// The file appears atomically via a temp-file rename.
    pub fn save(&self, path: &Path) -> Result<(), KbError> {
        let tmp = path.with_extension("tmp");
        {
            let file = std::fs::File::create(&tmp)?;
            let mut writer = std::io::BufWriter::new(file);
            let header = StoreHeader {
                schema_version: STORE_SCHEMA_VERSION,
                provider_id: self.provider_id.clone(),
                dimension: self.dimension,
            };
            serde_json::to_writer(&mut writer, &header)?;
            writer.write_all(b"\n")?;
            for record in &self.records {
                serde_json::to_writer(&mut writer, &StoredRecord::from(record))?;
                writer.write_all(b"\n")?;
            }
            writer.flush()?;
        }
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    /// Load a store file, validating the header, every record's invariants,
    /// id uniqueness, and embedding dimensions. Any defect fails the whole
    /// load; no partial store is returned.
    pub fn load(path: &Path) -> Result<CaseStore, KbError> {
        let file = std::fs::File::open(path)?;
        let mut lines = BufReader::new(file).lines();
        let header_line = lines.next().ok_or_else(|| KbError::Corrupt {
            line: 1,
            message: "empty store file".into(),
        })??;
        let header: StoreHeader =
            serde_json::from_str(&header_line).map_err(|e| KbError::Corrupt {
                line: 1,
                message: format!("bad header: {e}"),
            })?;
        if header.schema_version != STORE_SCHEMA_VERSION {
            return Err(KbError::SchemaMismatch {
                found: header.schema_version,
                expected: STORE_SCHEMA_VERSION,
            });
        }
        let mut store = CaseStore {
            provider_id: header.provider_id,
            dimension: header.dimension,
            records: Vec::new(),
            ids: HashSet::new(),
            next_seq: 1,
        };
        for (idx, line) in lines.enumerate() {
            let lineno = idx + 2;
            let line = line?;
            if line.trim().is_empty() {
                return Err(KbError::Corrupt {
                    line: lineno,
                    message: "blank line inside store".into(),
                });
            }
            let stored: StoredRecord =
                serde_json::from_str(&line).map_err(|e| KbError::Corrupt {
                    line: lineno,
                    message: e.to_string(),
                })?;
            let record = stored.into_record(lineno)?;
            record.validate().map_err(|e| KbError::Corrupt {
                line: lineno,
                message: e.to_string(),
            })?;
            if record.embedding.len() != store.dimension {
                return Err(KbError::Corrupt {
                    line: lineno,
                    message: format!(
                        "embedding dimension {} does not match header {}",
                        record.embedding.len(),
                        store.dimension
                    ),
                });
            }
            if record.created_seq < store.next_seq {
                return Err(KbError::Corrupt {
                    line: lineno,
                    message: format!(
                        "created_seq {} is not strictly increasing",
                        record.created_seq
                    ),
                });
            }
            if !store.ids.insert(record.id().to_string()) {
                return Err(KbError::Corrupt {
                    line: lineno,
                    message: format!("duplicate record id {}", record.id()),
                });
            }
            store.next_seq = record.created_seq + 1;
            store.records.push(record);
        }
        Ok(store)
    }

    /// Load and verify the store was built with the given provider.
    pub fn load_for_provider(
        path: &Path,
        provider: &dyn EmbeddingProvider,
    ) -> Result<CaseStore, KbError> {
        let store = CaseStore::load(path)?;
        if store.provider_id != provider.provider_id() {
            return Err(KbError::ProviderMismatch {
                store: store.provider_id,
                requested: provider.provider_id().to_string(),
            });
        }
        if store.dimension != provider.dimension() {
            return Err(KbError::DimensionMismatch {
                expected: provider.dimension(),
                got: store.dimension,
            });
        }
        Ok(store)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum KbError {
    #[error("embedding provider error: {0}")]
    Provider(String),
    #[error("{0}")]
    InvalidArgument(String),
    #[error("embedding dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("duplicate record id {0}")]
    DuplicateId(String),
    #[error("knowledge base is empty")]
    EmptyStore,
    #[error("store schema version {found} does not match supported version {expected}")]
    SchemaMismatch { found: u32, expected: u32 },
    #[error("store was built with provider {store}, not {requested}")]
    ProviderMismatch { store: String, requested: String },
    #[error("corrupt store at line {line}: {message}")]
    Corrupt { line: usize, message: String },
    #[error("invalid experience record: {0}")]
    InvalidRecord(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Analysis, Channel, Reflection, Verdict};

    fn make_record(id: &str, text: &str, embedding: Vec<f64>) -> ExperienceRecord {
        let mut case = NewsCase::new(id, text);
        case.gold_label = Some(Verdict::False);
        ExperienceRecord {
            case,
            wrong_analysis: Analysis {
                channel: Channel::Ordinary,
                rationale: "w".into(),
                verdict: Verdict::True,
                model_id: "m".into(),
                token_count: 0,
                noncompliant: false,
            },
            correct_analysis: Analysis {
                channel: Channel::Special,
                rationale: "c".into(),
                verdict: Verdict::False,
                model_id: "m".into(),
                token_count: 0,
                noncompliant: false,
            },
            reflection: Reflection {
                diagnosis: "d".into(),
                error_tags: vec![],
            },
            embedding,
            created_seq: 0,
        }
    }

    #[test]
    fn hashed_embeddings_are_unit_norm_and_deterministic() {
        let provider = HashedBagProvider::new(64);
        let v = provider.embed("a b a").unwrap();
        let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-9);
        assert_eq!(v, provider.embed("a b a").unwrap());
        assert!(
            (cosine_similarity(
                &provider.embed("flu vaccine claim").unwrap(),
                &provider.embed("flu vaccine claim").unwrap()
            ) - 1.0)
                .abs()
                < 1e-9
        );
    }

    #[test]
    fn hashed_provider_tokenizes_cjk_per_character() {
        let provider = HashedBagProvider::new(64);
        let a = provider.embed("疫苗导致疾病").unwrap();
        let b = provider.embed("疫苗 导致 疾病").unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn add_case_assigns_monotone_seq_and_rejects_defects() {
        let provider = HashedBagProvider::new(8);
        let mut store = CaseStore::new(&provider);
        for i in 0..100 {
            let text = format!("news number {i}");
            let embedding = provider.embed(&text).unwrap();
            store
                .add_case(make_record(&format!("id{i}"), &text, embedding))
                .unwrap();
        }
        assert_eq!(store.len(), 100);
        let seqs: Vec<u64> = store.records().iter().map(|r| r.created_seq).collect();
        assert_eq!(seqs, (1..=100).collect::<Vec<u64>>());

        // Wrong dimension.
        let err = store
            .add_case(make_record("bad-dim", "t", vec![1.0, 0.0]))
            .unwrap_err();
        assert!(matches!(err, KbError::DimensionMismatch { expected: 8, got: 2 }));

        // Duplicate id.
        let embedding = provider.embed("dup").unwrap();
        let err = store
            .add_case(make_record("id0", "dup", embedding))
            .unwrap_err();
        assert!(matches!(err, KbError::DuplicateId(_)));

        // Filter-condition violation.
        let mut broken = make_record("broken", "t", provider.embed("t").unwrap());
        broken.wrong_analysis.verdict = Verdict::False;
        assert!(matches!(
            store.add_case(broken),
            Err(KbError::InvalidRecord(_))
        ));
    }

    /// 2D fixture geometry: the first component IS the cosine against the
    /// query vector (1, 0).
    fn fixture_store() -> (StaticProvider, CaseStore) {
        let mut provider = StaticProvider::new(2);
        provider.insert("query", vec![1.0, 0.0]);
        let mut store = CaseStore::new(&provider);
        for (id, cos) in [("a", 0.9f64), ("b", 0.2), ("c", 0.5)] {
            let y = (1.0 - cos * cos).sqrt();
            store
                .add_case(make_record(id, &format!("text {id}"), vec![cos, y]))
                .unwrap();
        }
        (provider, store)
    }

    #[test]
    fn retrieve_top_n_orders_by_similarity() {
        let (provider, store) = fixture_store();
        let query = NewsCase::new("q", "query");
        let top1 = store.retrieve_top_n(&provider, &query, 1).unwrap();
        assert_eq!(top1[0].id(), "a");
        let top2 = store.retrieve_top_n(&provider, &query, 2).unwrap();
        assert_eq!(
            top2.iter().map(|r| r.id()).collect::<Vec<_>>(),
            vec!["a", "c"]
        );
        // n beyond the store size returns everything.
        let all = store.retrieve_top_n(&provider, &query, 10).unwrap();
        assert_eq!(all.len(), 3);
    }

    #[test]
    fn retrieval_ties_break_by_created_seq() {
        let mut provider = StaticProvider::new(2);
        provider.insert("query", vec![1.0, 0.0]);
        let mut store = CaseStore::new(&provider);
        // Identical embeddings: similarity ties across all three.
        for id in ["first", "second", "third"] {
            store
                .add_case(make_record(id, &format!("t {id}"), vec![0.6, 0.8]))
                .unwrap();
        }
        let query = NewsCase::new("q", "query");
        let top2 = store.retrieve_top_n(&provider, &query, 2).unwrap();
        assert_eq!(
            top2.iter().map(|r| r.id()).collect::<Vec<_>>(),
            vec!["first", "second"]
        );
    }

    #[test]
    fn empty_store_retrieval_is_an_error() {
        let provider = HashedBagProvider::new(8);
        let store = CaseStore::new(&provider);
        let err = store
            .retrieve_top_n(&provider, &NewsCase::new("q", "text"), 1)
            .unwrap_err();
        assert!(matches!(err, KbError::EmptyStore));
    }

    #[test]
    fn save_load_round_trip_is_byte_stable() {
        let provider = HashedBagProvider::new(16);
        let mut store = CaseStore::new(&provider);
        for i in 0..10 {
            let text = format!("stored news {i} 定理");
            let embedding = provider.embed(&text).unwrap();
            store
                .add_case(make_record(&format!("r{i}"), &text, embedding))
                .unwrap();
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("store.jsonl");
        store.save(&path).unwrap();
        let loaded = CaseStore::load(&path).unwrap();
        assert_eq!(loaded.len(), 10);
        assert_eq!(loaded.records(), store.records());

        let path2 = dir.path().join("store2.jsonl");
        loaded.save(&path2).unwrap();
        assert_eq!(
            std::fs::read(&path).unwrap(),
            std::fs::read(&path2).unwrap()
        );
    }

    #[test]
    fn load_rejects_provider_and_schema_mismatches() {
        let provider = HashedBagProvider::new(16);
        let mut store = CaseStore::new(&provider);
        let embedding = provider.embed("x").unwrap();
        store.add_case(make_record("r", "x", embedding)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("store.jsonl");
        store.save(&path).unwrap();

        let other = HashedBagProvider::new(32);
        assert!(matches!(
            CaseStore::load_for_provider(&path, &other),
            Err(KbError::ProviderMismatch { .. })
        ));

        // Doctor the header version.
        let text = std::fs::read_to_string(&path).unwrap();
        let doctored = text.replacen("\"schema_version\":1", "\"schema_version\":99", 1);
        std::fs::write(&path, doctored).unwrap();
        assert!(matches!(
            CaseStore::load(&path),
            Err(KbError::SchemaMismatch { found: 99, .. })
        ));
    }

    #[test]
    fn load_rejects_truncated_file() {
        let provider = HashedBagProvider::new(16);
        let mut store = CaseStore::new(&provider);
        for i in 0..3 {
            let text = format!("t{i}");
            let embedding = provider.embed(&text).unwrap();
            store
                .add_case(make_record(&format!("r{i}"), &text, embedding))
                .unwrap();
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("store.jsonl");
        store.save(&path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 40]).unwrap();
        assert!(matches!(
            CaseStore::load(&path),
            Err(KbError::Corrupt { .. })
        ));
    }
}
