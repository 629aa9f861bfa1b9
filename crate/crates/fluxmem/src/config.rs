//! Engine configuration. Every tunable constant lives here so snapshots
//! and reports can fingerprint the exact settings they were produced
//! under.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// LTSM eligibility thresholds (usage, recency, optional confidence).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LtsmThresholds {
    pub usage: f64,
    pub recency: f64,
    pub confidence: f64,
}

impl Default for LtsmThresholds {
    fn default() -> Self {
        Self { usage: 0.2, recency: 0.2, confidence: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineConfig {
    /// Short-term buffer capacity (pages).
    pub stim_capacity: usize,
    /// Episodic store capacity (sessions).
    pub mtem_capacity: usize,
    /// Semantic store capacity (entries).
    pub ltsm_capacity: usize,
    /// Utility weights over access frequency, interaction intensity and
    /// recency; must sum to 1.
    pub utility_weights: [f64; 3],
    pub ltsm_thresholds: LtsmThresholds,
    /// Posterior threshold of the fusion gate.
    pub bmm_threshold: f64,
    /// Minimum candidates retained by the gate.
    pub bmm_min_keep: usize,
    /// EM iteration budget.
    pub bmm_em_iters: usize,
    /// Margin keeping normalized scores away from 0 and 1.
    pub bmm_epsilon: f64,
    /// Raw-score floor below which an incoming page always opens a new
    /// session, regardless of gate retention.
    pub new_session_floor: f64,
    /// Reward weight on response quality.
    pub lambda_judge: f64,
    /// Reward weight on memory utilization.
    pub lambda_mem: f64,
    /// Reciprocal-rank-fusion constant.
    pub rrf_k: usize,
    pub embedding_dim: usize,
    /// Retrieval top-k per memory layer.
    pub top_k: usize,
    /// Recency half-life in seconds (defaults to 7 days).
    pub half_life_secs: f64,
    /// Normalizer for interaction intensity: a session with this many
    /// pages has intensity 1.
    pub max_session_pages: usize,
    /// Gating considers at most this many most-recently-updated sessions.
    pub candidate_window: usize,
    /// Cosine threshold for joining an existing topic during
    /// hierarchical clustering.
    pub hier_join_threshold: f64,
    /// Number of topics descended into during hierarchical retrieval.
    pub hier_top_topics: usize,
    /// Sessions at or above this utility become consolidation candidates.
    pub consolidation_utility: f64,
    /// Summary refresh looks at the session's last N pages.
    pub summary_window: usize,
    /// Re-run structure selection after this many appended pages.
    pub reselect_every: usize,
    /// Cosine at or above which an LTSM entry is treated as a duplicate.
    pub ltsm_dedup_threshold: f64,
    pub bm25_k1: f64,
    pub bm25_b: f64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            stim_capacity: 4,
            mtem_capacity: 2000,
            ltsm_capacity: 100,
            utility_weights: [1.0 / 3.0; 3],
            ltsm_thresholds: LtsmThresholds::default(),
            bmm_threshold: 0.5,
            bmm_min_keep: 1,
            bmm_em_iters: 50,
            bmm_epsilon: 1e-3,
            new_session_floor: 0.15,
            lambda_judge: 0.7,
            lambda_mem: 0.3,
            rrf_k: 60,
            embedding_dim: 384,
            top_k: 5,
            half_life_secs: 7.0 * 24.0 * 3600.0,
            max_session_pages: 16,
            candidate_window: 64,
            hier_join_threshold: 0.5,
            hier_top_topics: 2,
            consolidation_utility: 0.6,
            summary_window: 8,
            reselect_every: 8,
            ltsm_dedup_threshold: 0.9,
            bm25_k1: 1.2,
            bm25_b: 0.75,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.stim_capacity < 1 || self.mtem_capacity < 1 || self.ltsm_capacity < 1 {
            return Err(Error::InvalidConfig("capacities must be >= 1".into()));
        }
        let wsum: f64 = self.utility_weights.iter().sum();
        if self.utility_weights.iter().any(|w| *w < 0.0) || (wsum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig(
                "utility weights must be non-negative and sum to 1".into(),
            ));
        }
        if !(self.bmm_threshold > 0.0 && self.bmm_threshold < 1.0) {
            return Err(Error::InvalidConfig("bmm_threshold must lie in (0,1)".into()));
        }
        if !(self.bmm_epsilon > 0.0 && self.bmm_epsilon < 0.1) {
            return Err(Error::InvalidConfig("bmm_epsilon must lie in (0,0.1)".into()));
        }
        if self.bmm_min_keep < 1 || self.bmm_em_iters < 1 {
            return Err(Error::InvalidConfig("bmm_min_keep and bmm_em_iters must be >= 1".into()));
        }
        for (name, v) in [
            ("ltsm usage threshold", self.ltsm_thresholds.usage),
            ("ltsm recency threshold", self.ltsm_thresholds.recency),
            ("ltsm confidence threshold", self.ltsm_thresholds.confidence),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidConfig(format!("{name} must lie in [0,1]")));
            }
        }
        if self.lambda_judge < 0.0 || self.lambda_mem < 0.0 {
            return Err(Error::InvalidConfig("reward weights must be non-negative".into()));
        }
        if self.rrf_k < 1 || self.embedding_dim < 1 || self.top_k < 1 {
            return Err(Error::InvalidConfig("rrf_k, embedding_dim, top_k must be >= 1".into()));
        }
        Ok(())
    }

    /// Hex SHA-256 over the canonical JSON encoding; embedded in
    /// snapshots and reports for provenance.
    pub fn fingerprint(&self) -> String {
        use sha2::{Digest, Sha256};
        let json = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}
