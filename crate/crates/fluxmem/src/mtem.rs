//! Mid-term episodic memory: the session store. Evicted pages are
//! gated into existing sessions or open new ones; each session carries
//! a summary and a structure index used for retrieval.

use serde::{Deserialize, Serialize};

use crate::bmm::{FusionOutcome, FusionPolicy, GateDecision};
use crate::config::EngineConfig;
use crate::embed::{cosine, Embedder};
use crate::error::Result;
use crate::extraction::Extractor;
use crate::page::{Page, PageId, Timestamp};
use crate::structure::{build_index, score_pages, ScoreQuery, StructureIndex, StructureKind};

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
pub struct SessionId(pub u64);

impl std::fmt::Display for SessionId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "s{}", self.0)
    }
}

/// An episodic session: related pages plus summary and structure index.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpisodicSession {
    pub id: SessionId,
    pub pages: Vec<Page>,
    pub summary: String,
    pub summary_embedding: Vec<f64>,
    pub structure_kind: StructureKind,
    pub structure_index: StructureIndex,
    /// Access frequency c(s), bumped when retrieval surfaces this
    /// session's pages.
    pub access_count: u64,
    pub created_at: Timestamp,
    pub updated_at: Timestamp,
    /// Pages appended since the structure was last selected.
    pub pages_since_select: usize,
    /// Page count at the last consolidation into semantic memory.
    pub last_consolidated_len: usize,
}

impl EpisodicSession {
    /// Interaction intensity ℓ(s): page count normalized by the
    /// configured session-size scale, clipped to [0, 1].
    pub fn intensity(&self, max_session_pages: usize) -> f64 {
        (self.pages.len() as f64 / max_session_pages.max(1) as f64).min(1.0)
    }

    /// Recency d(s): exponential decay since the last update.
    pub fn recency(&self, now: Timestamp, half_life_secs: f64) -> f64 {
        let age = (now - self.updated_at).max(0) as f64;
        (-age / half_life_secs).exp()
    }

    /// Episodic utility U(s) = w1·ĉ + w2·ℓ + w3·d with ĉ = c/(1+c).
    pub fn utility(&self, cfg: &EngineConfig, now: Timestamp) -> f64 {
        let [w1, w2, w3] = cfg.utility_weights;
        let c_hat = self.access_count as f64 / (1.0 + self.access_count as f64);
        w1 * c_hat
            + w2 * self.intensity(cfg.max_session_pages)
            + w3 * self.recency(now, cfg.half_life_secs)
    }
}

/// When a structure selection happens.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectStage {
    /// A new session is being opened for the given page.
    Creation,
    /// A session accumulated enough new pages to be re-evaluated.
    Reselect,
}

/// Engine-supplied context for integration.
pub struct IntegrationCtx<'a> {
    pub embedder: &'a dyn Embedder,
    pub extractor: &'a dyn Extractor,
    pub select: &'a mut dyn FnMut(SelectStage, &[Page]) -> StructureKind,
    pub fusion: &'a FusionPolicy,
    pub config: &'a EngineConfig,
}

/// One gating decision and where the page ended up.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IntegrationRecord {
    pub page_id: PageId,
    /// Gated candidate sessions, most recently updated first.
    pub candidates: Vec<SessionId>,
    pub decision: GateDecision,
    pub session_id: SessionId,
    pub created_new: bool,
    pub structure: StructureKind,
}

/// Result of a prune pass.
#[derive(Debug, Clone, Default)]
pub struct PruneOutcome {
    /// Removed sessions paired with whether they were consolidation
    /// candidates at removal time.
    pub removed: Vec<(EpisodicSession, bool)>,
    /// Retained sessions flagged for consolidation.
    pub retained_candidates: Vec<SessionId>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct MtemStore {
    sessions: Vec<EpisodicSession>,
    next_session: u64,
}

impl MtemStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.sessions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sessions.is_empty()
    }

    pub fn sessions(&self) -> &[EpisodicSession] {
        &self.sessions
    }

    pub fn get(&self, id: SessionId) -> Option<&EpisodicSession> {
        self.sessions.iter().find(|s| s.id == id)
    }

    pub fn page_count(&self) -> usize {
        self.sessions.iter().map(|s| s.pages.len()).sum()
    }

    pub fn session_of_page(&self, page_id: PageId) -> Option<SessionId> {
        self.sessions
            .iter()
            .find(|s| s.pages.iter().any(|p| p.id == page_id))
            .map(|s| s.id)
    }

    pub fn find_page(&self, page_id: PageId) -> Option<&Page> {
        self.sessions.iter().find_map(|s| s.pages.iter().find(|p| p.id == page_id))
    }

    /// Candidate sessions for gating: the most recently updated first,
    /// capped at the configured window.
    fn candidate_indices(&self, window: usize) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.sessions.len()).collect();
        order.sort_by(|&a, &b| {
            let sa = &self.sessions[a];
            let sb = &self.sessions[b];
            sb.updated_at.cmp(&sa.updated_at).then(sb.id.cmp(&sa.id))
        });
        order.truncate(window);
        order
    }

    /// Integrate evicted pages, one gate decision each. Pages must
    /// arrive in timestamp order.
    pub fn integrate(
        &mut self,
        incoming: Vec<Page>,
        ctx: &mut IntegrationCtx<'_>,
    ) -> Result<Vec<IntegrationRecord>> {
        let mut records = Vec::with_capacity(incoming.len());
        for page in incoming {
            records.push(self.integrate_one(page, ctx)?);
        }
        Ok(records)
    }

    fn integrate_one(
        &mut self,
        page: Page,
        ctx: &mut IntegrationCtx<'_>,
    ) -> Result<IntegrationRecord> {
        let candidate_idx = self.candidate_indices(ctx.config.candidate_window);
        let candidates: Vec<SessionId> =
            candidate_idx.iter().map(|&i| self.sessions[i].id).collect();
        let mut scores = Vec::with_capacity(candidate_idx.len());
        for &i in &candidate_idx {
            scores.push(cosine(&page.embedding, &self.sessions[i].summary_embedding)?);
        }
        let decision = ctx.fusion.decide(&scores)?;
        let page_id = page.id;
        match decision.outcome {
            FusionOutcome::Merge { candidate } => {
                let idx = candidate_idx[candidate];
                let (session_id, structure) = self.append_to_session(idx, page, ctx)?;
                Ok(IntegrationRecord {
                    page_id,
                    candidates,
                    decision,
                    session_id,
                    created_new: false,
                    structure,
                })
            }
            FusionOutcome::NewSession => {
                let (session_id, structure) = self.open_session(page, ctx)?;
                Ok(IntegrationRecord {
                    page_id,
                    candidates,
                    decision,
                    session_id,
                    created_new: true,
                    structure,
                })
            }
        }
    }

    fn append_to_session(
        &mut self,
        idx: usize,
        mut page: Page,
        ctx: &mut IntegrationCtx<'_>,
    ) -> Result<(SessionId, StructureKind)> {
        let cfg = ctx.config;
        let session = &mut self.sessions[idx];
        page.continuity_link = session.pages.last().map(|p| p.id);
        session.updated_at = session.updated_at.max(page.timestamp);
        session.pages.push(page);
        session.pages_since_select += 1;
        if session.pages_since_select >= cfg.reselect_every {
            session.structure_kind = (ctx.select)(SelectStage::Reselect, &session.pages);
            session.pages_since_select = 0;
        }
        let window_start = session.pages.len().saturating_sub(cfg.summary_window);
        session.summary = ctx.extractor.summarize(&session.pages[window_start..])?;
        session.summary_embedding = ctx.embedder.embed(&session.summary)?;
        session.structure_index = build_index(
            &session.pages,
            session.structure_kind,
            ctx.extractor,
            cfg.hier_join_threshold,
        )?;
        Ok((session.id, session.structure_kind))
    }

    fn open_session(
        &mut self,
        page: Page,
        ctx: &mut IntegrationCtx<'_>,
    ) -> Result<(SessionId, StructureKind)> {
        let cfg = ctx.config;
        let id = SessionId(self.next_session);
        self.next_session += 1;
        let kind = (ctx.select)(SelectStage::Creation, std::slice::from_ref(&page));
        let pages = vec![page];
        let summary = ctx.extractor.summarize(&pages)?;
        let summary_embedding = ctx.embedder.embed(&summary)?;
        let structure_index =
            build_index(&pages, kind, ctx.extractor, cfg.hier_join_threshold)?;
        let timestamp = pages[0].timestamp;
        self.sessions.push(EpisodicSession {
            id,
            pages,
            summary,
            summary_embedding,
            structure_kind: kind,
            structure_index,
            access_count: 0,
            created_at: timestamp,
            updated_at: timestamp,
            pages_since_select: 0,
            last_consolidated_len: 0,
        });
        Ok((id, kind))
    }

    /// Structure-aware retrieval: score each session's pages under its
    /// own structure, merge globally, return the top `k`. Ties break by
    /// recency, then id. Pure (access counts are the engine's job).
    pub fn retrieve(&self, query: &ScoreQuery<'_>, k: usize) -> Result<Vec<(Page, f64)>> {
        let mut hits: Vec<(Page, f64)> = Vec::new();
        for session in &self.sessions {
            for (page_id, score) in
                score_pages(&session.pages, &session.structure_index, query)?
            {
                let page = session
                    .pages
                    .iter()
                    .find(|p| p.id == page_id)
                    .expect("index covers session pages");
                hits.push((page.clone(), score));
            }
        }
        hits.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .unwrap()
                .then(b.0.timestamp.cmp(&a.0.timestamp))
                .then(a.0.id.cmp(&b.0.id))
        });
        hits.truncate(k);
        Ok(hits)
    }

    /// Bump access frequency for the sessions owning the given pages.
    pub fn record_access(&mut self, page_ids: &[PageId]) {
        for session in &mut self.sessions {
            if session.pages.iter().any(|p| page_ids.contains(&p.id)) {
                session.access_count += 1;
            }
        }
    }

    /// Mark a session as consolidated at its current size.
    pub fn mark_consolidated(&mut self, id: SessionId) {
        if let Some(session) = self.sessions.iter_mut().find(|s| s.id == id) {
            session.last_consolidated_len = session.pages.len();
        }
    }

    /// Evict lowest-utility sessions down to `capacity` and flag
    /// consolidation candidates (utility at or above the configured
    /// bar) among both removed and retained sessions.
    pub fn prune(&mut self, capacity: usize, cfg: &EngineConfig, now: Timestamp) -> PruneOutcome {
        let mut outcome = PruneOutcome::default();
        if self.sessions.len() > capacity {
            let excess = self.sessions.len() - capacity;
            let utilities: Vec<f64> =
                self.sessions.iter().map(|s| s.utility(cfg, now)).collect();
            let mut order: Vec<usize> = (0..self.sessions.len()).collect();
            order.sort_by(|&a, &b| {
                let sa = &self.sessions[a];
                let sb = &self.sessions[b];
                utilities[a]
                    .partial_cmp(&utilities[b])
                    .unwrap()
                    .then(sa.updated_at.cmp(&sb.updated_at))
                    .then(sa.id.cmp(&sb.id))
            });
            let mut doomed: Vec<usize> = order.into_iter().take(excess).collect();
            doomed.sort_unstable();
            for idx in doomed.into_iter().rev() {
                let session = self.sessions.remove(idx);
                let candidate = session.utility(cfg, now) >= cfg.consolidation_utility;
                outcome.removed.push((session, candidate));
            }
            outcome.removed.reverse();
        }
        for session in &self.sessions {
            if session.utility(cfg, now) >= cfg.consolidation_utility {
                outcome.retained_candidates.push(session.id);
            }
        }
        outcome
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bmm::GateParams;
    use crate::embed::HashEmbedder;
    use crate::extraction::RuleBasedExtractor;
    use crate::page::{make_page, PageIdGen};

    fn test_config() -> EngineConfig {
        EngineConfig::default()
    }

    fn setup() -> (EngineConfig, HashEmbedder, RuleBasedExtractor, FusionPolicy) {
        let cfg = test_config();
        let embedder = HashEmbedder::new(cfg.embedding_dim);
        (cfg.clone(), embedder, RuleBasedExtractor, FusionPolicy::Bmm(GateParams::from(&cfg)))
    }

    fn integrate_texts(
        store: &mut MtemStore,
        texts: &[(&str, i64)],
    ) -> Vec<IntegrationRecord> {
        let (cfg, embedder, extractor, fusion) = setup();
        let mut ids = PageIdGen::new();
        let pages: Vec<Page> = texts
            .iter()
            .map(|(t, ts)| make_page(&mut ids, t, "", *ts, &embedder).unwrap())
            .collect();
        let mut select =
            |_stage: SelectStage, _pages: &[Page]| -> StructureKind { StructureKind::Linear };
        let mut ctx = IntegrationCtx {
            embedder: &embedder,
            extractor: &extractor,
            select: &mut select,
            fusion: &fusion,
            config: &cfg,
        };
        store.integrate(pages, &mut ctx).unwrap()
    }

    #[test]
    fn empty_store_opens_new_sessions() {
        let mut store = MtemStore::new();
        let records = integrate_texts(&mut store, &[("completely new topic", 10)]);
        assert_eq!(records.len(), 1);
        assert!(records[0].created_new);
        assert_eq!(store.len(), 1);
    }

    #[test]
    fn near_identical_page_merges() {
        let mut store = MtemStore::new();
        let records = integrate_texts(
            &mut store,
            &[
                ("the garden tomatoes are ripening nicely", 10),
                ("quantum chess tournaments start tuesday", 20),
                ("painting the fence bright orange soon", 30),
                ("the garden tomatoes are ripening nicely again", 40),
            ],
        );
        let last = records.last().unwrap();
        assert!(!last.created_new, "near-duplicate should merge: {last:?}");
        assert_eq!(last.session_id, records[0].session_id);
        // Merging never duplicates pages.
        assert_eq!(store.page_count(), 4);
    }

    #[test]
    fn consecutive_same_topic_pages_share_session() {
        let mut store = MtemStore::new();
        let records = integrate_texts(
            &mut store,
            &[
                ("hiking boots need replacing before the alps trip", 10),
                ("hiking boots for the alps trip arrived today", 20),
            ],
        );
        assert!(!records[1].created_new);
        assert_eq!(records[0].session_id, records[1].session_id);
    }

    #[test]
    fn utility_matches_formula() {
        let cfg = test_config();
        let mut store = MtemStore::new();
        integrate_texts(&mut store, &[("some page text", 0)]);
        let session = &store.sessions()[0];
        // c = 0, |pages| = 1, Δt = 0 → U = (0 + 1/16 + 1)/3.
        let expected = (0.0 + 1.0 / 16.0 + 1.0) / 3.0;
        assert!((session.utility(&cfg, 0) - expected).abs() < 1e-12);

        let mut aged = session.clone();
        aged.access_count = 1;
        aged.pages = vec![session.pages[0].clone(); cfg.max_session_pages];
        let full = (0.5 + 1.0 + 1.0) / 3.0;
        assert!((aged.utility(&cfg, 0) - full).abs() < 1e-12);
        // Δt → ∞ kills the recency term.
        assert!(aged.utility(&cfg, i64::MAX / 2) < full);
    }

    #[test]
    fn prune_removes_lowest_utility() {
        let (cfg, ..) = setup();
        let mut store = MtemStore::new();
        integrate_texts(
            &mut store,
            &[
                ("alpha bravo charlie one", 0),
                ("delta echo foxtrot two", 1_000_000),
                ("golf hotel india three", 2_000_000),
            ],
        );
        // Give the newest session high access so utilities differ.
        let newest = store.sessions()[2].id;
        store.sessions.iter_mut().find(|s| s.id == newest).unwrap().access_count = 5;
        let now = 2_000_000;
        let outcome = store.prune(2, &cfg, now);
        assert_eq!(outcome.removed.len(), 1);
        assert_eq!(store.len(), 2);
        // The oldest (lowest recency, zero access) goes first.
        assert_eq!(outcome.removed[0].0.pages[0].timestamp, 0);
    }

    #[test]
    fn prune_under_capacity_only_flags_candidates() {
        let (cfg, ..) = setup();
        let mut store = MtemStore::new();
        integrate_texts(&mut store, &[("alpha bravo charlie", 0)]);
        let outcome = store.prune(10, &cfg, 0);
        assert!(outcome.removed.is_empty());
        // Fresh session: U = (0 + 1/16 + 1)/3 ≈ 0.354 < 0.6 → no candidates.
        assert!(outcome.retained_candidates.is_empty());
        store.sessions[0].access_count = 10;
        let outcome = store.prune(10, &cfg, 0);
        assert_eq!(outcome.retained_candidates.len(), 1);
    }

    #[test]
    fn prune_tie_breaks_by_oldest_update() {
        let (cfg, ..) = setup();
        let mut store = MtemStore::new();
        integrate_texts(
            &mut store,
            &[("alpha bravo charlie one", 0), ("delta echo foxtrot two", 0)],
        );
        // Identical utilities; ages differ only through updated_at.
        store.sessions[0].updated_at = 0;
        store.sessions[1].updated_at = 5;
        let outcome = store.prune(1, &cfg, 10);
        assert_eq!(outcome.removed.len(), 1);
        assert_eq!(outcome.removed[0].0.updated_at, 0);
    }

    #[test]
    fn retrieve_caps_at_k_with_sorted_scores() {
        let (_, embedder, ..) = setup();
        let mut store = MtemStore::new();
        integrate_texts(
            &mut store,
            &[
                ("tomato garden advice needed", 10),
                ("tomato garden watering tips", 20),
                ("tomato garden harvest soon", 30),
            ],
        );
        let q = embedder.embed("tomato garden").unwrap();
        let query = ScoreQuery {
            embedding: &q,
            entities: &[],
            now: 30,
            half_life_secs: 604_800.0,
            top_topics: 2,
        };
        let hits = store.retrieve(&query, 2).unwrap();
        assert_eq!(hits.len(), 2);
        assert!(hits[0].1 >= hits[1].1);
        let empty = MtemStore::new();
        assert!(empty.retrieve(&query, 3).unwrap().is_empty());
    }

    #[test]
    fn record_access_bumps_owning_session() {
        let mut store = MtemStore::new();
        integrate_texts(&mut store, &[("tomato garden advice", 10)]);
        let page_id = store.sessions()[0].pages[0].id;
        store.record_access(&[page_id]);
        assert_eq!(store.sessions()[0].access_count, 1);
        store.record_access(&[PageId(999)]);
        assert_eq!(store.sessions()[0].access_count, 1);
    }
}
