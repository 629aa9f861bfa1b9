//! Hybrid retrieval: BM25 lexical ranking, dense similarity, reciprocal
//! rank fusion, and the cross-layer context assembly handed to the
//! responder.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::config::EngineConfig;
use crate::embed::cosine;
use crate::error::Result;
use crate::extraction::{chat_completion, RESPONSE_PROMPT};
use crate::ltsm::{LtsmEntry, LtsmStore};
use crate::mtem::MtemStore;
use crate::page::{Page, PageId, Timestamp};
use crate::stim::StimBuffer;
use crate::structure::ScoreQuery;
use crate::text::{split_sentences, tokenize};

/// Okapi BM25 index over page texts.
#[derive(Debug, Clone, Default)]
pub struct Bm25Index {
    term_freqs: BTreeMap<PageId, BTreeMap<String, u32>>,
    doc_lens: BTreeMap<PageId, usize>,
    doc_freq: BTreeMap<String, u32>,
    total_len: usize,
    k1: f64,
    b: f64,
}

impl Bm25Index {
    pub fn new(k1: f64, b: f64) -> Self {
        Self { k1, b, ..Default::default() }
    }

    pub fn insert(&mut self, id: PageId, text: &str) {
        let tokens = tokenize(text);
        let mut freqs: BTreeMap<String, u32> = BTreeMap::new();
        for token in &tokens {
            *freqs.entry(token.clone()).or_insert(0) += 1;
        }
        for term in freqs.keys() {
            *self.doc_freq.entry(term.clone()).or_insert(0) += 1;
        }
        self.total_len += tokens.len();
        self.doc_lens.insert(id, tokens.len());
        self.term_freqs.insert(id, freqs);
    }

    pub fn len(&self) -> usize {
        self.term_freqs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.term_freqs.is_empty()
    }

    pub fn avg_doc_length(&self) -> f64 {
        if self.term_freqs.is_empty() {
            0.0
        } else {
            self.total_len as f64 / self.term_freqs.len() as f64
        }
    }

    /// Top-k documents by BM25 score, ties by ascending id; zero-score
    /// documents are excluded.
    pub fn rank(&self, query_tokens: &[String], k: usize) -> Vec<(PageId, f64)> {
        if self.term_freqs.is_empty() {
            return Vec::new();
        }
        let n = self.term_freqs.len() as f64;
        let avg_len = self.avg_doc_length();
        let mut scores: BTreeMap<PageId, f64> = BTreeMap::new();
        for term in query_tokens {
            let Some(&df) = self.doc_freq.get(term) else { continue };
            let idf = (n / (df as f64 + 0.5) + 1.0).ln();
            for (id, freqs) in &self.term_freqs {
                let Some(&tf) = freqs.get(term) else { continue };
                let tf = tf as f64;
                let dl = self.doc_lens[id] as f64;
                let norm = tf + self.k1 * (1.0 - self.b + self.b * dl / avg_len);
                *scores.entry(*id).or_insert(0.0) += idf * tf * (self.k1 + 1.0) / norm;
            }
        }
        let mut ranked: Vec<(PageId, f64)> =
            scores.into_iter().filter(|(_, s)| *s > 0.0).collect();
        ranked.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        ranked.truncate(k);
        ranked
    }
}

/// Top-k items by cosine against the query, ties by ascending id.
pub fn dense_rank<T: Ord + Copy>(
    items: &[(T, &[f64])],
    query_embedding: &[f64],
    k: usize,
) -> Result<Vec<(T, f64)>> {
    let mut ranked: Vec<(T, f64)> = items
        .iter()
        .map(|(id, emb)| Ok((*id, cosine(query_embedding, emb)?)))
        .collect::<Result<_>>()?;
    ranked.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    ranked.truncate(k);
    Ok(ranked)
}

/// Reciprocal rank fusion: score(d) = Σ 1/(k_rrf + rank_d) over the
/// rankings containing d, ranks starting at 1. Ties by ascending id.
pub fn rrf<T: Ord + Clone>(rankings: &[Vec<T>], k_rrf: usize) -> Vec<(T, f64)> {
    let mut terms: BTreeMap<T, Vec<f64>> = BTreeMap::new();
    for ranking in rankings {
        for (rank, id) in ranking.iter().enumerate() {
            terms.entry(id.clone()).or_default().push(1.0 / (k_rrf + rank + 1) as f64);
        }
    }
    // Summation order is canonicalized so the fused scores are exactly
    // invariant under permutation of the input rankings.
    let mut fused: Vec<(T, f64)> = terms
        .into_iter()
        .map(|(id, mut parts)| {
            parts.sort_by(|a, b| a.partial_cmp(b).unwrap());
            (id, parts.iter().sum())
        })
        .collect();
    fused.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    fused
}

/// Cross-layer retrieval result with its deterministic rendering.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FusedContext {
    pub query: String,
    pub stim_pages: Vec<Page>,
    pub mtem_hits: Vec<(Page, f64)>,
    pub ltsm_hits: Vec<(LtsmEntry, f64)>,
    pub rendered: String,
}

impl FusedContext {
    /// Page ids visible in the assembled context (recent + episodic).
    pub fn retrieved_page_ids(&self) -> Vec<PageId> {
        let mut ids: Vec<PageId> = self.stim_pages.iter().map(|p| p.id).collect();
        ids.extend(self.mtem_hits.iter().map(|(p, _)| p.id));
        ids
    }
}

fn page_line(page: &Page) -> String {
    format!("{}\tUSER: {}\tAGENT: {}", page.timestamp, page.user_text, page.agent_text)
}

/// The fixed context template. Blocks are omitted when their layer is
/// empty; lines are LF-separated with no trailing newline.
pub fn render_context(
    query: &str,
    stim_pages: &[Page],
    mtem_hits: &[(Page, f64)],
    ltsm_hits: &[(LtsmEntry, f64)],
) -> String {
    let mut lines: Vec<String> = Vec::new();
    if !stim_pages.is_empty() {
        lines.push("[RECENT]".to_string());
        lines.extend(stim_pages.iter().map(page_line));
    }
    if !mtem_hits.is_empty() {
        lines.push("[EPISODIC]".to_string());
        lines.extend(mtem_hits.iter().map(|(p, _)| page_line(p)));
    }
    if !ltsm_hits.is_empty() {
        lines.push("[SEMANTIC]".to_string());
        lines.extend(ltsm_hits.iter().map(|(e, _)| format!("{}: {}", e.kind, e.content)));
    }
    lines.push(format!("[QUERY] {query}"));
    lines.join("\n")
}

/// Assemble the memory-conditioned context: all STIM pages unfiltered,
/// episodic hits fused from the BM25 and structure-aware legs by RRF,
/// and semantic hits by cosine. The LTSM usage counters are bumped, so
/// this participates in the engine's single-writer discipline.
#[allow(clippy::too_many_arguments)]
pub fn fuse_context(
    query: &str,
    query_embedding: &[f64],
    query_entities: &[String],
    stim: &StimBuffer,
    mtem: &MtemStore,
    ltsm: &mut LtsmStore,
    config: &EngineConfig,
    now: Timestamp,
) -> Result<FusedContext> {
    let stim_pages = stim.contents();

    let mut bm25 = Bm25Index::new(config.bm25_k1, config.bm25_b);
    for session in mtem.sessions() {
        for page in &session.pages {
            bm25.insert(page.id, &page.text());
        }
    }
    let query_tokens = tokenize(query);
    let lexical: Vec<PageId> =
        bm25.rank(&query_tokens, config.top_k).into_iter().map(|(id, _)| id).collect();

    let score_query = ScoreQuery {
        embedding: query_embedding,
        entities: query_entities,
        now,
        half_life_secs: config.half_life_secs,
        top_topics: config.hier_top_topics,
    };
    let structural: Vec<PageId> = mtem
        .retrieve(&score_query, config.top_k)?
        .into_iter()
        .map(|(page, _)| page.id)
        .collect();

    let mut fused = rrf(&[lexical, structural], config.rrf_k);
    fused.truncate(config.top_k);
    let mtem_hits: Vec<(Page, f64)> = fused
        .into_iter()
        .map(|(id, score)| {
            let page = mtem.find_page(id).expect("fused ids come from the store");
            (page.clone(), score)
        })
        .collect();

    let ltsm_hits = ltsm.retrieve(query_embedding, config.top_k, now)?;

    let rendered = render_context(query, &stim_pages, &mtem_hits, &ltsm_hits);
    Ok(FusedContext { query: query.to_string(), stim_pages, mtem_hits, ltsm_hits, rendered })
}

/// Fixed abstain reply of the deterministic responder.
pub const ABSTAIN: &str = "I don't have enough information to answer that.";

pub trait Responder: Send + Sync {
    fn answer(&self, query: &str, context: &FusedContext) -> Result<String>;
    /// Multiple-choice answering; returns the chosen option text.
    fn answer_choice(
        &self,
        query: &str,
        context: &FusedContext,
        choices: &[String],
    ) -> Result<String>;
}

/// Extractive responder: returns the context sentence with maximal
/// distinct-token overlap against the query (ties: earliest position),
/// or the abstain string when nothing overlaps.
#[derive(Debug, Clone, Default)]
pub struct MockResponder;

fn context_texts(context: &FusedContext) -> Vec<&str> {
    let mut texts = Vec::new();
    for page in &context.stim_pages {
        texts.push(page.user_text.as_str());
        texts.push(page.agent_text.as_str());
    }
    for (page, _) in &context.mtem_hits {
        texts.push(page.user_text.as_str());
        texts.push(page.agent_text.as_str());
    }
    for (entry, _) in &context.ltsm_hits {
        texts.push(entry.content.as_str());
    }
    texts
}

fn distinct_overlap(tokens: &[String], other: &std::collections::BTreeSet<String>) -> usize {
    let set: std::collections::BTreeSet<&String> = tokens.iter().collect();
    set.iter().filter(|t| other.contains(**t)).count()
}

impl Responder for MockResponder {
    fn answer(&self, query: &str, context: &FusedContext) -> Result<String> {
        let query_tokens: std::collections::BTreeSet<String> =
            tokenize(query).into_iter().collect();
        let mut best: Option<(usize, String)> = None;
        for text in context_texts(context) {
            for sentence in split_sentences(text) {
                let overlap = distinct_overlap(&tokenize(sentence), &query_tokens);
                if overlap > 0 && best.as_ref().map_or(true, |(b, _)| overlap > *b) {
                    best = Some((overlap, sentence.to_string()));
                }
            }
        }
        Ok(best.map(|(_, s)| s).unwrap_or_else(|| ABSTAIN.to_string()))
    }

    fn answer_choice(
        &self,
        _query: &str,
        context: &FusedContext,
        choices: &[String],
    ) -> Result<String> {
        let context_tokens: std::collections::BTreeSet<String> = context_texts(context)
            .iter()
            .flat_map(|t| tokenize(t))
            .collect();
        let mut best = 0usize;
        let mut best_overlap = 0usize;
        for (i, choice) in choices.iter().enumerate() {
            let overlap = distinct_overlap(&tokenize(choice), &context_tokens);
            if overlap > best_overlap {
                best_overlap = overlap;
                best = i;
            }
        }
        Ok(choices.get(best).cloned().unwrap_or_else(|| ABSTAIN.to_string()))
    }
}

/// LLM-backed responder using the shipped response prompt.
pub struct HttpResponder {
    base_url: String,
    key: Option<String>,
    model: String,
}

impl HttpResponder {
    pub fn new(base_url: impl Into<String>, key: Option<String>, model: impl Into<String>) -> Self {
        Self { base_url: base_url.into(), key, model: model.into() }
    }

    pub fn from_env() -> Option<Self> {
        let base_url =
            std::env::var(crate::extraction::LLM_URL_VAR).ok().filter(|v| !v.is_empty())?;
        let key = std::env::var(crate::extraction::LLM_KEY_VAR).ok();
        let model = std::env::var(crate::extraction::LLM_MODEL_VAR)
            .unwrap_or_else(|_| "gpt-4.1".to_string());
        Some(Self::new(base_url, key, model))
    }

    fn ask(&self, prompt: &str, context: &FusedContext) -> Result<String> {
        chat_completion(&self.base_url, self.key.as_deref(), &self.model, prompt).map_err(
            |e| match e {
                // Attach the rendered context for debugging provider failures.
                crate::error::Error::ProviderUnreachable(msg) => {
                    crate::error::Error::ProviderUnreachable(format!(
                        "{msg}\n--- rendered context ---\n{}",
                        context.rendered
                    ))
                }
                other => other,
            },
        )
    }
}

impl Responder for HttpResponder {
    fn answer(&self, query: &str, context: &FusedContext) -> Result<String> {
        let prompt =
            RESPONSE_PROMPT.replace("{context}", &context.rendered).replace("{query}", query);
        self.ask(&prompt, context)
    }

    fn answer_choice(
        &self,
        query: &str,
        context: &FusedContext,
        choices: &[String],
    ) -> Result<String> {
        let listed = choices
            .iter()
            .enumerate()
            .map(|(i, c)| format!("{}. {c}", i + 1))
            .collect::<Vec<_>>()
            .join("\n");
        let question = format!("{query}\nChoose exactly one option and reply with its text:\n{listed}");
        let prompt = RESPONSE_PROMPT
            .replace("{context}", &context.rendered)
            .replace("{query}", &question);
        self.ask(&prompt, context)
    }
}

/// Select the responder from the environment: LLM-backed when
/// `FLUXMEM_LLM_BASE_URL` is set, otherwise the extractive mock.
pub fn responder_from_env() -> Box<dyn Responder> {
    match HttpResponder::from_env() {
        Some(responder) => Box::new(responder),
        None => Box::new(MockResponder),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn bm25_hand_case() {
        // Single doc "a b", query "a": idf = ln(1/1.5 + 1) = ln(5/3),
        // tf part = 2.2 / 2.2 = 1.
        let mut index = Bm25Index::new(1.2, 0.75);
        index.insert(PageId(0), "a b");
        let ranked = index.rank(&["a".to_string()], 5);
        assert_eq!(ranked.len(), 1);
        let expected = (5.0f64 / 3.0).ln();
        assert!((ranked[0].1 - expected).abs() < 1e-9, "got {}", ranked[0].1);
    }

    #[test]
    fn bm25_empty_and_missing_terms() {
        let index = Bm25Index::new(1.2, 0.75);
        assert!(index.rank(&["a".to_string()], 5).is_empty());
        let mut index = Bm25Index::new(1.2, 0.75);
        index.insert(PageId(0), "alpha beta");
        assert!(index.rank(&["gamma".to_string()], 5).is_empty());
    }

    #[test]
    fn bm25_identical_docs_rank_by_id() {
        let mut index = Bm25Index::new(1.2, 0.75);
        for i in 0..4 {
            index.insert(PageId(i), "same words everywhere");
        }
        let ranked = index.rank(&["same".to_string()], 10);
        let ids: Vec<u64> = ranked.iter().map(|(id, _)| id.0).collect();
        assert_eq!(ids, vec![0, 1, 2, 3]);
        assert!(ranked.windows(2).all(|w| (w[0].1 - w[1].1).abs() < 1e-12));
    }

    #[test]
    fn dense_rank_orders_by_cosine() {
        let q = [1.0, 0.0];
        let a = [1.0, 0.0];
        let b = [0.6, 0.8];
        let c = [0.0, 1.0];
        let items: Vec<(PageId, &[f64])> =
            vec![(PageId(2), &c), (PageId(1), &b), (PageId(0), &a)];
        let ranked = dense_rank(&items, &q, 3).unwrap();
        assert_eq!(ranked[0].0, PageId(0));
        assert!((ranked[0].1 - 1.0).abs() < 1e-12);
        assert_eq!(ranked[1].0, PageId(1));
        assert_eq!(ranked[2].0, PageId(2));
    }

    #[test]
    fn rrf_hand_values() {
        // d first in both of two rankings: 2/61.
        let fused = rrf(&[vec![PageId(7)], vec![PageId(7)]], 60);
        assert!((fused[0].1 - 2.0 / 61.0).abs() < 1e-12);

        // d rank 1 in one list only; e rank 2 in both: e wins.
        let fused = rrf(
            &[vec![PageId(0), PageId(1)], vec![PageId(2), PageId(1)]],
            60,
        );
        assert_eq!(fused[0].0, PageId(1));
        assert!((fused[0].1 - 2.0 / 62.0).abs() < 1e-12);

        // Single ranking: same order.
        let fused = rrf(&[vec![PageId(3), PageId(4), PageId(5)]], 60);
        let ids: Vec<PageId> = fused.iter().map(|(id, _)| *id).collect();
        assert_eq!(ids, vec![PageId(3), PageId(4), PageId(5)]);
    }

    #[test]
    fn abstain_constant_is_fixed() {
        assert_eq!(ABSTAIN, "I don't have enough information to answer that.");
    }

    proptest! {
        /// Permuting input rankings never changes RRF output.
        #[test]
        fn rrf_order_equivariant(
            a in prop::collection::vec(0..10u64, 0..6),
            b in prop::collection::vec(0..10u64, 0..6),
            c in prop::collection::vec(0..10u64, 0..6),
        ) {
            let dedup = |v: Vec<u64>| {
                let mut seen = Vec::new();
                for x in v {
                    if !seen.contains(&PageId(x)) { seen.push(PageId(x)); }
                }
                seen
            };
            let (a, b, c) = (dedup(a), dedup(b), dedup(c));
            let forward = rrf(&[a.clone(), b.clone(), c.clone()], 60);
            let shuffled = rrf(&[c, a, b], 60);
            prop_assert_eq!(forward, shuffled);
        }

        /// RRF on small instances equals a brute-force recomputation.
        #[test]
        fn rrf_matches_brute_force(
            a in prop::collection::vec(0..6u64, 0..6),
            b in prop::collection::vec(0..6u64, 0..6),
        ) {
            let dedup = |v: Vec<u64>| {
                let mut seen = Vec::new();
                for x in v {
                    if !seen.contains(&PageId(x)) { seen.push(PageId(x)); }
                }
                seen
            };
            let (a, b) = (dedup(a), dedup(b));
            let fused = rrf(&[a.clone(), b.clone()], 60);
            for (id, score) in &fused {
                let mut expected = 0.0;
                for ranking in [&a, &b] {
                    if let Some(pos) = ranking.iter().position(|x| x == id) {
                        expected += 1.0 / (60 + pos + 1) as f64;
                    }
                }
                prop_assert!((score - expected).abs() < 1e-15);
            }
            // Sorted by score descending with id tie-break.
            for w in fused.windows(2) {
                prop_assert!(w[0].1 > w[1].1 || (w[0].1 == w[1].1 && w[0].0 < w[1].0));
            }
        }
    }
}
