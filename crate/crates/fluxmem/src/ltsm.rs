//! Long-term semantic memory: durable entries consolidated from
//! high-utility episodic sessions, kept compact by eligibility-based
//! pruning.

use serde::{Deserialize, Serialize};

use crate::config::LtsmThresholds;
use crate::embed::{cosine, Embedder};
use crate::error::Result;
use crate::extraction::Extractor;
use crate::mtem::SessionId;
use crate::page::{Page, Timestamp};

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
pub struct EntryId(pub u64);

impl std::fmt::Display for EntryId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "m{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntryKind {
    UserProfile,
    UserFact,
    GeneralKnowledge,
    Strategy,
}

impl std::fmt::Display for EntryKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            EntryKind::UserProfile => "user_profile",
            EntryKind::UserFact => "user_fact",
            EntryKind::GeneralKnowledge => "general_knowledge",
            EntryKind::Strategy => "strategy",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LtsmEntry {
    pub id: EntryId,
    pub kind: EntryKind,
    pub content: String,
    pub embedding: Vec<f64>,
    /// Usage count u(m); bumped on every retrieval hit.
    pub usage: u64,
    /// Timestamp of the last use; recency r(m) decays from it.
    pub last_use: Timestamp,
    /// Confidence c(m) in [0, 1].
    pub confidence: f64,
    pub source_session_id: SessionId,
}

impl LtsmEntry {
    /// Recency r(m) = exp(−age / half-life) ∈ [0, 1].
    pub fn recency(&self, now: Timestamp, half_life_secs: f64) -> f64 {
        let age = (now - self.last_use).max(0) as f64;
        (-age / half_life_secs).exp()
    }

    pub fn usage_norm(&self) -> f64 {
        self.usage as f64 / (1.0 + self.usage as f64)
    }
}

/// Eligibility test of the retention rule: û ≥ τ_u ∧ r ≥ τ_r ∧ c ≥ τ_c,
/// with û = u/(1+u). The confidence clause is vacuous at τ_c = 0.
pub fn eligible(usage: u64, recency: f64, confidence: f64, thresholds: &LtsmThresholds) -> bool {
    let usage_norm = usage as f64 / (1.0 + usage as f64);
    usage_norm >= thresholds.usage
        && recency >= thresholds.recency
        && confidence >= thresholds.confidence
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct LtsmStore {
    entries: Vec<LtsmEntry>,
    next_entry: u64,
}

impl LtsmStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[LtsmEntry] {
        &self.entries
    }

    /// Consolidate one session's durable knowledge. Near-duplicates
    /// (cosine at or above `dedup_threshold` against an existing entry)
    /// refresh that entry instead of inserting. Returns the newly
    /// inserted entries.
    pub fn consolidate(
        &mut self,
        source: SessionId,
        summary: &str,
        pages: &[Page],
        extractor: &dyn Extractor,
        embedder: &dyn Embedder,
        now: Timestamp,
        dedup_threshold: f64,
    ) -> Result<Vec<LtsmEntry>> {
        let drafts = extractor.extract_facts(summary, pages)?;
        let mut inserted = Vec::new();
        for draft in drafts {
            if draft.content.trim().is_empty() {
                continue;
            }
            let embedding = embedder.embed(&draft.content)?;
            let mut duplicate = None;
            for entry in self.entries.iter_mut() {
                if cosine(&entry.embedding, &embedding)? >= dedup_threshold {
                    duplicate = Some(entry);
                    break;
                }
            }
            if let Some(existing) = duplicate {
                existing.confidence = existing.confidence.max(draft.confidence);
                existing.last_use = now;
                continue;
            }
            let entry = LtsmEntry {
                id: EntryId(self.next_entry),
                kind: draft.kind,
                content: draft.content,
                embedding,
                usage: 0,
                last_use: now,
                confidence: draft.confidence,
                source_session_id: source,
            };
            self.next_entry += 1;
            self.entries.push(entry.clone());
            inserted.push(entry);
        }
        Ok(inserted)
    }

    /// Top-k entries by cosine; each hit's usage is bumped and its
    /// recency reset.
    pub fn retrieve(
        &mut self,
        query_embedding: &[f64],
        k: usize,
        now: Timestamp,
    ) -> Result<Vec<(LtsmEntry, f64)>> {
        let mut ranked: Vec<(usize, f64)> = self
            .entries
            .iter()
            .enumerate()
            .map(|(i, e)| Ok((i, cosine(query_embedding, &e.embedding)?)))
            .collect::<Result<_>>()?;
        ranked.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        ranked.truncate(k);
        let mut hits = Vec::with_capacity(ranked.len());
        for (idx, score) in ranked {
            let entry = &mut self.entries[idx];
            entry.usage += 1;
            entry.last_use = now;
            hits.push((entry.clone(), score));
        }
        Ok(hits)
    }

    /// Enforce capacity: ineligible entries go first (stalest first),
    /// then eligible entries with the lowest û + r + c.
    pub fn prune(
        &mut self,
        capacity: usize,
        now: Timestamp,
        half_life_secs: f64,
        thresholds: &LtsmThresholds,
    ) -> Vec<LtsmEntry> {
        if self.entries.len() <= capacity {
            return Vec::new();
        }
        let mut removed = Vec::new();
        let mut ineligible: Vec<usize> = (0..self.entries.len())
            .filter(|&i| {
                let e = &self.entries[i];
                !eligible(e.usage, e.recency(now, half_life_secs), e.confidence, thresholds)
            })
            .collect();
        ineligible.sort_by(|&a, &b| {
            let ea = &self.entries[a];
            let eb = &self.entries[b];
            ea.last_use.cmp(&eb.last_use).then(ea.id.cmp(&eb.id))
        });
        let mut doomed: Vec<usize> = Vec::new();
        let excess = self.entries.len() - capacity;
        doomed.extend(ineligible.into_iter().take(excess));
        if doomed.len() < excess {
            let mut rest: Vec<usize> =
                (0..self.entries.len()).filter(|i| !doomed.contains(i)).collect();
            rest.sort_by(|&a, &b| {
                let score = |e: &LtsmEntry| {
                    e.usage_norm() + e.recency(now, half_life_secs) + e.confidence
                };
                score(&self.entries[a])
                    .partial_cmp(&score(&self.entries[b]))
                    .unwrap()
                    .then(self.entries[a].id.cmp(&self.entries[b].id))
            });
            doomed.extend(rest.into_iter().take(excess - doomed.len()));
        }
        doomed.sort_unstable();
        for idx in doomed.into_iter().rev() {
            removed.push(self.entries.remove(idx));
        }
        removed.reverse();
        removed
    }
}
