//! The three episodic memory structures — linear, entity graph, topic
//! hierarchy — with their builders and structure-specific page scoring.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::embed::cosine;
use crate::error::Result;
use crate::extraction::Extractor;
use crate::page::{Page, PageId, Timestamp};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum StructureKind {
    Linear,
    Graph,
    Hierarchical,
}

impl StructureKind {
    pub const ALL: [StructureKind; 3] =
        [StructureKind::Linear, StructureKind::Graph, StructureKind::Hierarchical];

    /// Class index used by the structure selector.
    pub fn index(self) -> usize {
        match self {
            StructureKind::Linear => 0,
            StructureKind::Graph => 1,
            StructureKind::Hierarchical => 2,
        }
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }
}

impl std::fmt::Display for StructureKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            StructureKind::Linear => "linear",
            StructureKind::Graph => "graph",
            StructureKind::Hierarchical => "hierarchical",
        };
        f.write_str(name)
    }
}

/// Co-occurrence edge between two entity nodes; `head < tail`
/// lexicographically so rebuilds are deterministic.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphEdge {
    pub head: String,
    pub tail: String,
    pub count: u32,
    pub relation: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topic {
    pub label: String,
    pub embedding: Vec<f64>,
    pub members: Vec<PageId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum StructureIndex {
    /// Page ids in chronological order.
    Linear { order: Vec<PageId> },
    Graph { nodes: BTreeMap<String, BTreeSet<PageId>>, edges: Vec<GraphEdge> },
    Hierarchical { topics: Vec<Topic> },
}

impl StructureIndex {
    pub fn kind(&self) -> StructureKind {
        match self {
            StructureIndex::Linear { .. } => StructureKind::Linear,
            StructureIndex::Graph { .. } => StructureKind::Graph,
            StructureIndex::Hierarchical { .. } => StructureKind::Hierarchical,
        }
    }

    /// All page ids covered by the index.
    pub fn coverage(&self) -> BTreeSet<PageId> {
        match self {
            StructureIndex::Linear { order } => order.iter().copied().collect(),
            StructureIndex::Graph { nodes, .. } => {
                nodes.values().flat_map(|ids| ids.iter().copied()).collect()
            }
            StructureIndex::Hierarchical { topics } => {
                topics.iter().flat_map(|t| t.members.iter().copied()).collect()
            }
        }
    }
}

fn chronological(pages: &[Page]) -> Vec<PageId> {
    let mut ids: Vec<(Timestamp, PageId)> = pages.iter().map(|p| (p.timestamp, p.id)).collect();
    ids.sort_unstable();
    ids.into_iter().map(|(_, id)| id).collect()
}

fn build_graph(pages: &[Page], extractor: &dyn Extractor) -> Result<StructureIndex> {
    let mut nodes: BTreeMap<String, BTreeSet<PageId>> = BTreeMap::new();
    let mut edges: BTreeMap<(String, String), (u32, Option<String>)> = BTreeMap::new();
    for page in pages {
        let text = page.text();
        let entities = extractor.extract_entities(&text)?;
        for entity in &entities {
            nodes.entry(entity.clone()).or_default().insert(page.id);
        }
        // One co-occurrence edge per entity pair in this page.
        for (i, a) in entities.iter().enumerate() {
            for b in entities.iter().skip(i + 1) {
                let key =
                    if a < b { (a.clone(), b.clone()) } else { (b.clone(), a.clone()) };
                edges.entry(key).or_insert((0, None)).0 += 1;
            }
        }
        for (head, relation, tail) in extractor.extract_relations(&text)? {
            let key = if head < tail { (head, tail) } else { (tail, head) };
            let entry = edges.entry(key).or_insert((0, None));
            entry.1.get_or_insert(relation);
        }
    }
    let edges = edges
        .into_iter()
        .map(|((head, tail), (count, relation))| GraphEdge { head, tail, count, relation })
        .collect();
    Ok(StructureIndex::Graph { nodes, edges })
}

/// Greedy topic clustering: a page joins the best-matching topic whose
/// centroid cosine reaches `join_threshold`, otherwise it seeds a new
/// topic. Centroids are running means, re-normalized for matching.
pub fn cluster_topics(pages: &[Page], join_threshold: f64) -> Vec<(Vec<f64>, Vec<usize>)> {
    let mut sums: Vec<Vec<f64>> = Vec::new();
    let mut members: Vec<Vec<usize>> = Vec::new();
    for (idx, page) in pages.iter().enumerate() {
        let mut best: Option<(usize, f64)> = None;
        for (t, sum) in sums.iter().enumerate() {
            let centroid = normalized(sum, members[t].len());
            let sim = cosine(&centroid, &page.embedding).unwrap_or(0.0);
            if sim >= join_threshold && best.map_or(true, |(_, s)| sim > s) {
                best = Some((t, sim));
            }
        }
        match best {
            Some((t, _)) => {
                for (acc, v) in sums[t].iter_mut().zip(&page.embedding) {
                    *acc += v;
                }
                members[t].push(idx);
            }
            None => {
                sums.push(page.embedding.clone());
                members.push(vec![idx]);
            }
        }
    }
    sums.into_iter()
        .zip(members)
        .map(|(sum, m)| (normalized(&sum, m.len()), m))
        .collect()
}

fn normalized(sum: &[f64], count: usize) -> Vec<f64> {
    let mut mean: Vec<f64> = sum.iter().map(|v| v / count.max(1) as f64).collect();
    let norm = mean.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        for v in mean.iter_mut() {
            *v /= norm;
        }
    }
    mean
}

fn build_hierarchical(
    pages: &[Page],
    extractor: &dyn Extractor,
    join_threshold: f64,
) -> Result<StructureIndex> {
    let clusters = cluster_topics(pages, join_threshold);
    let mut topics = Vec::with_capacity(clusters.len());
    for (embedding, member_idx) in clusters {
        let member_pages: Vec<Page> = member_idx.iter().map(|&i| pages[i].clone()).collect();
        let label = extractor.topic_label(&member_pages)?;
        topics.push(Topic {
            label,
            embedding,
            members: member_idx.into_iter().map(|i| pages[i].id).collect(),
        });
    }
    Ok(StructureIndex::Hierarchical { topics })
}

/// Build the index of `kind` over the session's pages.
pub fn build_index(
    pages: &[Page],
    kind: StructureKind,
    extractor: &dyn Extractor,
    join_threshold: f64,
) -> Result<StructureIndex> {
    match kind {
        StructureKind::Linear => Ok(StructureIndex::Linear { order: chronological(pages) }),
        StructureKind::Graph => build_graph(pages, extractor),
        StructureKind::Hierarchical => build_hierarchical(pages, extractor, join_threshold),
    }
}

/// Query context for structure-aware scoring.
pub struct ScoreQuery<'a> {
    pub embedding: &'a [f64],
    pub entities: &'a [String],
    pub now: Timestamp,
    pub half_life_secs: f64,
    pub top_topics: usize,
}

impl ScoreQuery<'_> {
    fn recency(&self, timestamp: Timestamp) -> f64 {
        let age = (self.now - timestamp).max(0) as f64;
        (-age / self.half_life_secs).exp()
    }
}

/// Score a session's pages under its structure.
///
/// Linear: cosine damped by recency. Graph: one-hop entity expansion
/// from the query entities; touched pages blend cosine with entity
/// match fraction, untouched pages fall back to plain cosine.
/// Hierarchical: coarse-to-fine — only pages in the best-matching
/// topics are scored, by cosine.
pub fn score_pages(
    pages: &[Page],
    index: &StructureIndex,
    query: &ScoreQuery<'_>,
) -> Result<Vec<(PageId, f64)>> {
    match index {
        StructureIndex::Linear { .. } => pages
            .iter()
            .map(|p| {
                Ok((p.id, cosine(query.embedding, &p.embedding)? * query.recency(p.timestamp)))
            })
            .collect(),
        StructureIndex::Graph { nodes, edges } => {
            let mut expanded: BTreeSet<&str> = BTreeSet::new();
            for entity in query.entities {
                if nodes.contains_key(entity.as_str()) {
                    expanded.insert(entity.as_str());
                    for edge in edges {
                        if edge.head == *entity {
                            expanded.insert(edge.tail.as_str());
                        } else if edge.tail == *entity {
                            expanded.insert(edge.head.as_str());
                        }
                    }
                }
            }
            let denom = expanded.len().max(1) as f64;
            pages
                .iter()
                .map(|p| {
                    let sim = cosine(query.embedding, &p.embedding)?;
                    let matched = expanded
                        .iter()
                        .filter(|e| nodes.get(**e).is_some_and(|ids| ids.contains(&p.id)))
                        .count();
                    let score = if matched > 0 {
                        0.5 * sim + 0.5 * matched as f64 / denom
                    } else {
                        sim
                    };
                    Ok((p.id, score))
                })
                .collect()
        }
        StructureIndex::Hierarchical { topics } => {
            let mut ranked: Vec<(usize, f64)> = topics
                .iter()
                .enumerate()
                .map(|(i, t)| Ok((i, cosine(query.embedding, &t.embedding)?)))
                .collect::<Result<_>>()?;
            ranked.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
            let selected: BTreeSet<PageId> = ranked
                .iter()
                .take(query.top_topics)
                .flat_map(|(i, _)| topics[*i].members.iter().copied())
                .collect();
            pages
                .iter()
                .filter(|p| selected.contains(&p.id))
                .map(|p| Ok((p.id, cosine(query.embedding, &p.embedding)?)))
                .collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::{Embedder, HashEmbedder};
    use crate::extraction::RuleBasedExtractor;
    use crate::page::{make_page, PageIdGen};

    fn page(ids: &mut PageIdGen, user: &str, ts: Timestamp) -> Page {
        let embedder = HashEmbedder::new(64);
        make_page(ids, user, "", ts, &embedder).unwrap()
    }

    #[test]
    fn linear_index_is_chronological() {
        let mut ids = PageIdGen::new();
        let pages =
            vec![page(&mut ids, "b", 20), page(&mut ids, "a", 10), page(&mut ids, "c", 30)];
        let index =
            build_index(&pages, StructureKind::Linear, &RuleBasedExtractor, 0.5).unwrap();
        match &index {
            StructureIndex::Linear { order } => {
                assert_eq!(order, &vec![pages[1].id, pages[0].id, pages[2].id]);
            }
            _ => panic!("expected linear"),
        }
        assert_eq!(index.coverage().len(), 3);
    }

    #[test]
    fn graph_index_shares_entity_nodes() {
        let mut ids = PageIdGen::new();
        let pages = vec![
            page(&mut ids, "Alice went hiking", 1),
            page(&mut ids, "Alice met Bob", 2),
        ];
        let index =
            build_index(&pages, StructureKind::Graph, &RuleBasedExtractor, 0.5).unwrap();
        match &index {
            StructureIndex::Graph { nodes, edges } => {
                let alice = nodes.get("alice").unwrap();
                assert!(alice.contains(&pages[0].id) && alice.contains(&pages[1].id));
                assert_eq!(edges.len(), 1);
                assert_eq!(edges[0].head, "alice");
                assert_eq!(edges[0].tail, "bob");
                assert_eq!(edges[0].relation.as_deref(), Some("related_to"));
            }
            _ => panic!("expected graph"),
        }
    }

    #[test]
    fn orthogonal_pages_split_topics() {
        let mut ids = PageIdGen::new();
        let pages = vec![
            page(&mut ids, "alpha beta gamma", 1),
            page(&mut ids, "delta epsilon zeta", 2),
        ];
        let index =
            build_index(&pages, StructureKind::Hierarchical, &RuleBasedExtractor, 0.5)
                .unwrap();
        match &index {
            StructureIndex::Hierarchical { topics } => assert_eq!(topics.len(), 2),
            _ => panic!("expected hierarchical"),
        }
    }

    #[test]
    fn similar_pages_share_topic() {
        let mut ids = PageIdGen::new();
        let pages = vec![
            page(&mut ids, "hiking trail maps are great", 1),
            page(&mut ids, "hiking trail maps are muddy", 2),
        ];
        let index =
            build_index(&pages, StructureKind::Hierarchical, &RuleBasedExtractor, 0.5)
                .unwrap();
        match &index {
            StructureIndex::Hierarchical { topics } => {
                assert_eq!(topics.len(), 1);
                assert_eq!(topics[0].members.len(), 2);
            }
            _ => panic!("expected hierarchical"),
        }
    }

    #[test]
    fn rebuild_is_idempotent() {
        let mut ids = PageIdGen::new();
        let pages = vec![
            page(&mut ids, "Alice met Bob in Paris", 1),
            page(&mut ids, "Bob liked the Louvre", 2),
        ];
        for kind in StructureKind::ALL {
            let a = build_index(&pages, kind, &RuleBasedExtractor, 0.5).unwrap();
            let b = build_index(&pages, kind, &RuleBasedExtractor, 0.5).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn linear_scoring_prefers_recent_on_equal_cosine() {
        let mut ids = PageIdGen::new();
        let old = page(&mut ids, "same words here", 0);
        let new = page(&mut ids, "same words here", 800_000);
        let pages = vec![old.clone(), new.clone()];
        let index =
            build_index(&pages, StructureKind::Linear, &RuleBasedExtractor, 0.5).unwrap();
        let embedder = HashEmbedder::new(64);
        let q = embedder.embed("same words here").unwrap();
        let query = ScoreQuery {
            embedding: &q,
            entities: &[],
            now: 800_000,
            half_life_secs: 604_800.0,
            top_topics: 2,
        };
        let scores = score_pages(&pages, &index, &query).unwrap();
        let old_score = scores.iter().find(|(id, _)| *id == old.id).unwrap().1;
        let new_score = scores.iter().find(|(id, _)| *id == new.id).unwrap().1;
        assert!(new_score > old_score);
        assert!((new_score - 1.0).abs() < 1e-9);
    }

    #[test]
    fn graph_scoring_expands_one_hop() {
        let mut ids = PageIdGen::new();
        // alice-bob edge comes from the first page; the second mentions
        // only bob but is still matched through expansion.
        let pages = vec![
            page(&mut ids, "Alice phoned Bob", 1),
            page(&mut ids, "Bob plays drums loudly", 2),
        ];
        let index =
            build_index(&pages, StructureKind::Graph, &RuleBasedExtractor, 0.5).unwrap();
        let embedder = HashEmbedder::new(64);
        let q = embedder.embed("what instrument").unwrap();
        let entities = vec!["alice".to_string()];
        let query = ScoreQuery {
            embedding: &q,
            entities: &entities,
            now: 2,
            half_life_secs: 604_800.0,
            top_topics: 2,
        };
        let scores = score_pages(&pages, &index, &query).unwrap();
        // Both pages touch the expanded set {alice, bob}: entity part
        // is 1/2 for the drum page (only bob matches).
        let drum = scores.iter().find(|(id, _)| *id == pages[1].id).unwrap().1;
        assert!(drum >= 0.25, "expected entity-expansion boost, got {drum}");
    }

    #[test]
    fn hierarchical_scoring_excludes_unselected_topics() {
        let mut ids = PageIdGen::new();
        let pages = vec![
            page(&mut ids, "rust compilers are fast", 1),
            page(&mut ids, "rust compilers are strict", 2),
            page(&mut ids, "gardening tulips in spring", 3),
            page(&mut ids, "baking sourdough bread today", 4),
        ];
        let index =
            build_index(&pages, StructureKind::Hierarchical, &RuleBasedExtractor, 0.5)
                .unwrap();
        let embedder = HashEmbedder::new(64);
        let q = embedder.embed("rust compilers").unwrap();
        let query = ScoreQuery {
            embedding: &q,
            entities: &[],
            now: 4,
            half_life_secs: 604_800.0,
            top_topics: 1,
        };
        let scores = score_pages(&pages, &index, &query).unwrap();
        let ids_scored: Vec<PageId> = scores.iter().map(|(id, _)| *id).collect();
        assert!(ids_scored.contains(&pages[0].id));
        assert!(ids_scored.contains(&pages[1].id));
        assert!(!ids_scored.contains(&pages[2].id));
        assert!(!ids_scored.contains(&pages[3].id));
    }
}
