//! Case-based, dual-channel news verification engine.
//!
//! The engine works in two stages. Exploration ([`explore`]) runs a
//! dual-channel analysis over a labeled training split — one unconstrained
//! analyst, one given the gold label ahead — harvests the samples where
//! only the informed channel got it right, has a reflector diagnose the
//! wrong analysis, and stores the resulting experiences in an
//! embedding-indexed knowledge base ([`kb`]). Deployment ([`deploy`])
//! analyzes unseen news with the same dual channel (the special channel
//! now argues the reverse of the ordinary prediction), retrieves similar
//! past experiences, turns them into judging criteria, and lets a judger
//! pick the better analysis; the pick fixes the verdict.
//!
//! Model access is uniform and pluggable ([`gateway`]), with a fully
//! scripted mock making every pipeline path deterministic under test.
//!
//! ```
//! use std::sync::Arc;
//! use factcase::agents::Agents;
//! use factcase::deploy::{detect, AblationConfig};
//! use factcase::gateway::{Matcher, MockBackend};
//! use factcase::kb::{CaseStore, HashedBagProvider};
//! use factcase::prompt::TemplateSet;
//! use factcase::{NewsCase, Verdict};
//!
//! let mock = Arc::new(MockBackend::new());
//! mock.script(
//!     Matcher::regex("already established[\\s\\S]*NEWS: the canal").unwrap(),
//!     "LABEL: false\nANALYSIS: the gauges read normal",
//! );
//! mock.script(
//!     Matcher::substring("NEWS: the canal"),
//!     "LABEL: true\nANALYSIS: flooding reported upstream",
//! );
//! mock.script(
//!     Matcher::substring("flooding reported"),
//!     "WINNER: special\nREASON: grounded in the gauge data",
//! );
//!
//! let agents = Agents::new(mock, Arc::new(TemplateSet::builtin()), "mock-model");
//! let provider = HashedBagProvider::new(64);
//! let store = CaseStore::new(&provider); // empty: advisor degrades to static criteria
//! let case = NewsCase::new("c1", "the canal flooded overnight");
//!
//! let trace = detect(&agents, &provider, &store, &case, &AblationConfig::default()).unwrap();
//! assert_eq!(trace.final_verdict, Verdict::False);
//! ```

pub mod agents;
pub mod config;
pub mod dataset;
pub mod deploy;
pub mod explore;
pub mod gateway;
pub mod kb;
pub mod metrics;
pub mod model;
pub mod prompt;

pub use model::{
    Advice, Analysis, Channel, DetectionTrace, Evidence, ExperienceRecord, Judgment, NewsCase,
    Reflection, Verdict,
};
