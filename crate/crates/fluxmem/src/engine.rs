//! The engine facade: one conversation's memory as a single-writer
//! state machine. Observation runs the write pipeline (STIM eviction →
//! gated episodic integration → utility pruning → semantic
//! consolidation); asking runs query-time fusion and response.

use serde::{Deserialize, Serialize};

use crate::bmm::{FusionPolicy, GateParams};
use crate::config::EngineConfig;
use crate::embed::{Embedder, HashEmbedder};
use crate::error::{Error, Result};
use crate::extraction::{Extractor, RuleBasedExtractor};
use crate::ltsm::{EntryId, LtsmStore};
use crate::mtem::{IntegrationCtx, IntegrationRecord, MtemStore, SelectStage, SessionId};
use crate::page::{make_page, Page, PageId, PageIdGen, Timestamp};
use crate::retrieval::{fuse_context, FusedContext, MockResponder, Responder};
use crate::selector::{extract_features, FeatureVector, SelectorModel};
use crate::stim::StimBuffer;
use crate::structure::StructureKind;

/// Rolling window of recently observed pages used as the conversation
/// context for structure selection at session creation.
const RECENT_WINDOW: usize = 16;

/// How structures are assigned to new and growing sessions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum StructurePolicy {
    /// The learned selector.
    Model(SelectorModel),
    /// Force one structure everywhere.
    Fixed(StructureKind),
    /// The learned selector with one structure removed from its output
    /// space; the next-best probability wins instead.
    Ablate { model: SelectorModel, removed: StructureKind },
}

impl StructurePolicy {
    pub fn select(&self, features: &FeatureVector) -> StructureKind {
        match self {
            StructurePolicy::Model(model) => model.select_structure(features),
            StructurePolicy::Fixed(kind) => *kind,
            StructurePolicy::Ablate { model, removed } => {
                let mut probs = model.forward(features);
                probs[removed.index()] = f64::NEG_INFINITY;
                let mut best = 0;
                for (i, p) in probs.iter().enumerate() {
                    if *p > probs[best] {
                        best = i;
                    }
                }
                if best == removed.index() {
                    best = (0..3).find(|i| *i != removed.index()).unwrap();
                }
                StructureKind::from_index(best).unwrap()
            }
        }
    }
}

/// A session removed by pruning, as recorded in the trace.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PrunedSession {
    pub id: SessionId,
    pub pages: usize,
    pub was_candidate: bool,
}

/// Audit record of one observation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IngestionTrace {
    pub page_id: PageId,
    pub evicted: Vec<PageId>,
    /// Gate decisions and structure selections, one per evicted page.
    pub integrations: Vec<IntegrationRecord>,
    pub pruned_sessions: Vec<PrunedSession>,
    /// Semantic entries created by consolidation this turn.
    pub consolidated: Vec<EntryId>,
    pub ltsm_removed: Vec<EntryId>,
}

/// Audit record of one query.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AskTrace {
    pub query_entities: Vec<String>,
    /// Sessions whose pages surfaced in the episodic hits.
    pub accessed_sessions: Vec<SessionId>,
}

pub struct AskOutcome {
    pub answer: String,
    pub context: FusedContext,
    pub trace: AskTrace,
}

/// Layer occupancy for the page-conservation invariant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Census {
    pub observed: u64,
    pub stim: usize,
    pub mtem_pages: usize,
    pub pruned_pages: u64,
}

impl Census {
    pub fn conserved(&self) -> bool {
        self.observed == self.stim as u64 + self.mtem_pages as u64 + self.pruned_pages
    }
}

pub struct Engine {
    config: EngineConfig,
    stim: StimBuffer,
    mtem: MtemStore,
    ltsm: LtsmStore,
    structure_policy: StructurePolicy,
    fusion_policy: FusionPolicy,
    embedder: Box<dyn Embedder>,
    extractor: Box<dyn Extractor>,
    responder: Box<dyn Responder>,
    seed: u64,
    clock: Timestamp,
    ids: PageIdGen,
    recent: Vec<Page>,
    observed: u64,
    pruned_pages: u64,
}

pub struct EngineBuilder {
    config: EngineConfig,
    seed: u64,
    structure_policy: Option<StructurePolicy>,
    fusion_policy: Option<FusionPolicy>,
    embedder: Option<Box<dyn Embedder>>,
    extractor: Option<Box<dyn Extractor>>,
    responder: Option<Box<dyn Responder>>,
}

impl EngineBuilder {
    pub fn config(mut self, config: EngineConfig) -> Self {
        self.config = config;
        self
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn structure_policy(mut self, policy: StructurePolicy) -> Self {
        self.structure_policy = Some(policy);
        self
    }

    pub fn fusion_policy(mut self, policy: FusionPolicy) -> Self {
        self.fusion_policy = Some(policy);
        self
    }

    pub fn embedder(mut self, embedder: Box<dyn Embedder>) -> Self {
        self.embedder = Some(embedder);
        self
    }

    pub fn extractor(mut self, extractor: Box<dyn Extractor>) -> Self {
        self.extractor = Some(extractor);
        self
    }

    pub fn responder(mut self, responder: Box<dyn Responder>) -> Self {
        self.responder = Some(responder);
        self
    }

    pub fn build(self) -> Result<Engine> {
        self.config.validate()?;
        let embedder = self
            .embedder
            .unwrap_or_else(|| Box::new(HashEmbedder::new(self.config.embedding_dim)));
        if embedder.dim() != self.config.embedding_dim {
            return Err(Error::InvalidConfig(format!(
                "embedder dimension {} does not match config {}",
                embedder.dim(),
                self.config.embedding_dim
            )));
        }
        Ok(Engine {
            stim: StimBuffer::new(self.config.stim_capacity),
            mtem: MtemStore::new(),
            ltsm: LtsmStore::new(),
            structure_policy: self
                .structure_policy
                .unwrap_or_else(|| StructurePolicy::Model(SelectorModel::zeros())),
            fusion_policy: self
                .fusion_policy
                .unwrap_or_else(|| FusionPolicy::Bmm(GateParams::from(&self.config))),
            embedder,
            extractor: self.extractor.unwrap_or_else(|| Box::new(RuleBasedExtractor)),
            responder: self.responder.unwrap_or_else(|| Box::new(MockResponder)),
            seed: self.seed,
            clock: 0,
            ids: PageIdGen::new(),
            recent: Vec::new(),
            observed: 0,
            pruned_pages: 0,
            config: self.config,
        })
    }
}

impl Engine {
    pub fn builder() -> EngineBuilder {
        EngineBuilder {
            config: EngineConfig::default(),
            seed: 42,
            structure_policy: None,
            fusion_policy: None,
            embedder: None,
            extractor: None,
            responder: None,
        }
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn clock(&self) -> Timestamp {
        self.clock
    }

    pub fn stim(&self) -> &StimBuffer {
        &self.stim
    }

    pub fn mtem(&self) -> &MtemStore {
        &self.mtem
    }

    pub fn ltsm(&self) -> &LtsmStore {
        &self.ltsm
    }

    pub fn census(&self) -> Census {
        Census {
            observed: self.observed,
            stim: self.stim.len(),
            mtem_pages: self.mtem.page_count(),
            pruned_pages: self.pruned_pages,
        }
    }

    /// Ingest one exchange. Timestamps must be non-decreasing.
    pub fn observe(
        &mut self,
        user_text: &str,
        agent_text: &str,
        timestamp: Timestamp,
    ) -> Result<IngestionTrace> {
        if timestamp < self.clock {
            return Err(Error::NonMonotoneTimestamp { prev: self.clock, got: timestamp });
        }
        self.clock = timestamp;
        let page =
            make_page(&mut self.ids, user_text, agent_text, timestamp, self.embedder.as_ref())?;
        self.observed += 1;
        let page_id = page.id;

        self.recent.push(page.clone());
        if self.recent.len() > RECENT_WINDOW {
            self.recent.remove(0);
        }

        let evicted_pages = self.stim.push(page)?;
        let evicted: Vec<PageId> = evicted_pages.iter().map(|p| p.id).collect();

        let mut trace = IngestionTrace {
            page_id,
            evicted,
            integrations: Vec::new(),
            pruned_sessions: Vec::new(),
            consolidated: Vec::new(),
            ltsm_removed: Vec::new(),
        };
        if !evicted_pages.is_empty() {
            trace.integrations = self.integrate(evicted_pages)?;
            self.prune_and_consolidate(&mut trace)?;
        }
        Ok(trace)
    }

    fn integrate(&mut self, pages: Vec<Page>) -> Result<Vec<IntegrationRecord>> {
        let config = &self.config;
        let policy = &self.structure_policy;
        let extractor = self.extractor.as_ref();
        let recent = &self.recent;
        let mut select_error: Option<Error> = None;
        let mut select = |stage: SelectStage, session_pages: &[Page]| -> StructureKind {
            // Session creation judges the conversation context; growing
            // sessions are re-judged on their own recent content. Both
            // windows are capped so feature extraction stays bounded.
            let window: &[Page] = match stage {
                SelectStage::Creation if !recent.is_empty() => recent,
                _ => {
                    let start = session_pages.len().saturating_sub(RECENT_WINDOW);
                    &session_pages[start..]
                }
            };
            match extract_features(window, extractor, config.hier_join_threshold) {
                Ok(features) => policy.select(&features),
                Err(e) => {
                    select_error.get_or_insert(e);
                    StructureKind::Linear
                }
            }
        };
        let mut ctx = IntegrationCtx {
            embedder: self.embedder.as_ref(),
            extractor: self.extractor.as_ref(),
            select: &mut select,
            fusion: &self.fusion_policy,
            config: &self.config,
        };
        let records = self.mtem.integrate(pages, &mut ctx)?;
        if let Some(e) = select_error {
            return Err(e);
        }
        Ok(records)
    }

    fn prune_and_consolidate(&mut self, trace: &mut IngestionTrace) -> Result<()> {
        let outcome = self.mtem.prune(self.config.mtem_capacity, &self.config, self.clock);
        for (session, was_candidate) in &outcome.removed {
            self.pruned_pages += session.pages.len() as u64;
            trace.pruned_sessions.push(PrunedSession {
                id: session.id,
                pages: session.pages.len(),
                was_candidate: *was_candidate,
            });
            if *was_candidate {
                let inserted = self.ltsm.consolidate(
                    session.id,
                    &session.summary,
                    &session.pages,
                    self.extractor.as_ref(),
                    self.embedder.as_ref(),
                    self.clock,
                    self.config.ltsm_dedup_threshold,
                )?;
                trace.consolidated.extend(inserted.iter().map(|e| e.id));
            }
        }
        for id in outcome.retained_candidates {
            let session = self.mtem.get(id).expect("retained candidate exists");
            // Already-consolidated pages would only be deduplicated
            // again, so each pass covers the pages added since the
            // previous one.
            if session.pages.len() <= session.last_consolidated_len {
                continue;
            }
            let summary = session.summary.clone();
            let new_pages = session.pages[session.last_consolidated_len..].to_vec();
            let inserted = self.ltsm.consolidate(
                id,
                &summary,
                &new_pages,
                self.extractor.as_ref(),
                self.embedder.as_ref(),
                self.clock,
                self.config.ltsm_dedup_threshold,
            )?;
            trace.consolidated.extend(inserted.iter().map(|e| e.id));
            self.mtem.mark_consolidated(id);
        }
        let removed = self.ltsm.prune(
            self.config.ltsm_capacity,
            self.clock,
            self.config.half_life_secs,
            &self.config.ltsm_thresholds,
        );
        trace.ltsm_removed = removed.iter().map(|e| e.id).collect();
        Ok(())
    }

    /// Retrieve, fuse, and answer. Mutates only usage counters (LTSM
    /// usage/recency and MTEM access frequency).
    pub fn ask(&mut self, query: &str) -> Result<AskOutcome> {
        self.ask_inner(query, None)
    }

    /// Multiple-choice variant; the responder picks one of `choices`.
    pub fn ask_choice(&mut self, query: &str, choices: &[String]) -> Result<AskOutcome> {
        self.ask_inner(query, Some(choices))
    }

    fn ask_inner(&mut self, query: &str, choices: Option<&[String]>) -> Result<AskOutcome> {
        let query_embedding = self.embedder.embed(query)?;
        let query_entities = self.extractor.extract_entities(query)?;
        let context = fuse_context(
            query,
            &query_embedding,
            &query_entities,
            &self.stim,
            &self.mtem,
            &mut self.ltsm,
            &self.config,
            self.clock,
        )?;
        let answer = match choices {
            Some(choices) => self.responder.answer_choice(query, &context, choices)?,
            None => self.responder.answer(query, &context)?,
        };
        let hit_ids: Vec<PageId> = context.mtem_hits.iter().map(|(p, _)| p.id).collect();
        let mut accessed_sessions: Vec<SessionId> =
            hit_ids.iter().filter_map(|id| self.mtem.session_of_page(*id)).collect();
        accessed_sessions.sort_unstable();
        accessed_sessions.dedup();
        self.mtem.record_access(&hit_ids);
        Ok(AskOutcome { answer, context, trace: AskTrace { query_entities, accessed_sessions } })
    }

    pub(crate) fn parts(
        &self,
    ) -> (&EngineConfig, &StimBuffer, &MtemStore, &LtsmStore, &StructurePolicy) {
        (&self.config, &self.stim, &self.mtem, &self.ltsm, &self.structure_policy)
    }

    pub(crate) fn state(&self) -> (Timestamp, &PageIdGen, &[Page], u64, u64) {
        (self.clock, &self.ids, &self.recent, self.observed, self.pruned_pages)
    }

    pub(crate) fn restore(
        config: EngineConfig,
        stim: StimBuffer,
        mtem: MtemStore,
        ltsm: LtsmStore,
        structure_policy: StructurePolicy,
        fusion_policy: FusionPolicy,
        embedder: Box<dyn Embedder>,
        extractor: Box<dyn Extractor>,
        responder: Box<dyn Responder>,
        seed: u64,
        clock: Timestamp,
        ids: PageIdGen,
        recent: Vec<Page>,
        observed: u64,
        pruned_pages: u64,
    ) -> Self {
        Self {
            config,
            stim,
            mtem,
            ltsm,
            structure_policy,
            fusion_policy,
            embedder,
            extractor,
            responder,
            seed,
            clock,
            ids,
            recent,
            observed,
            pruned_pages,
        }
    }
}
