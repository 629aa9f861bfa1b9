//! FluxMem: a hierarchical, structure-adaptive conversational memory
//! engine.
//!
//! Three memory tiers cooperate under one facade: a strict-capacity
//! recency buffer (STIM), an episodic session store whose sessions are
//! organized under switchable structures — linear, entity graph, or
//! topic hierarchy (MTEM) — and a consolidated semantic store (LTSM).
//! A learned selector picks each session's structure from interaction
//! features, and a two-component Beta-mixture gate decides whether
//! evicted pages merge into existing sessions or open new ones.
//! Retrieval fuses BM25 and dense similarity via reciprocal rank
//! fusion.
//!
//! All default providers (embedder, extractor, responder) are
//! deterministic, so ingestion, querying and evaluation are exactly
//! reproducible offline.

pub mod bmm;
pub mod config;
pub mod embed;
pub mod engine;
pub mod error;
pub mod evalkit;
pub mod extraction;
pub mod ltsm;
pub mod metrics;
pub mod mtem;
pub mod page;
pub mod stim;
pub mod synth;
pub mod retrieval;
pub mod snapshot;
pub mod selector;
pub mod structure;
pub mod text;

pub use config::{EngineConfig, LtsmThresholds};
pub use engine::{AskOutcome, Census, Engine, EngineBuilder, IngestionTrace, StructurePolicy};
pub use embed::{cosine, embedder_from_env, Embedder, HashEmbedder, HttpEmbedder};
pub use error::{Error, Result};
pub use evalkit::{replay, BenchmarkCase, EvalReport, ReplayMode};
pub use extraction::{extractor_from_env, Extractor, HttpExtractor, RuleBasedExtractor};
pub use ltsm::{EntryId, EntryKind, LtsmEntry, LtsmStore};
pub use mtem::{EpisodicSession, MtemStore, SessionId};
pub use page::{make_page, Page, PageId, PageIdGen, Timestamp};
pub use retrieval::{fuse_context, responder_from_env, Bm25Index, FusedContext, HttpResponder, MockResponder, Responder};
pub use selector::{extract_features, FeatureVector, LabeledExample, SelectorModel, TrainConfig, TrainReport};
pub use snapshot::Snapshot;
pub use stim::StimBuffer;
pub use structure::{StructureIndex, StructureKind};
