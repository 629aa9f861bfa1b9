//! Interaction pages: one user/agent exchange with its embedding and
//! access-time metadata.

use serde::{Deserialize, Serialize};

use crate::embed::Embedder;
use crate::error::Result;

/// Seconds since epoch. All engine clocks are logical and derived from
/// transcript timestamps, never from the wall clock.
pub type Timestamp = i64;

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
pub struct PageId(pub u64);

impl std::fmt::Display for PageId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "p{}", self.0)
    }
}

/// One user↔agent exchange.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Page {
    pub id: PageId,
    pub user_text: String,
    pub agent_text: String,
    pub timestamp: Timestamp,
    pub embedding: Vec<f64>,
    pub last_access: Timestamp,
    /// Chronologically previous page in the same episodic session, if any.
    pub continuity_link: Option<PageId>,
}

impl Page {
    /// Combined text used for embedding and lexical indexing.
    pub fn text(&self) -> String {
        format!("{} {}", self.user_text, self.agent_text)
    }
}

/// Sequential page-id source; one per engine so ids are deterministic.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct PageIdGen {
    next: u64,
}

impl PageIdGen {
    pub fn new() -> Self {
        Self { next: 0 }
    }

    pub fn next_id(&mut self) -> PageId {
        let id = PageId(self.next);
        self.next += 1;
        id
    }
}

/// Build a page: embeds `user_text ⊕ " " ⊕ agent_text`, sets
/// `last_access` to the creation timestamp. Empty texts yield the
/// embedder's zero vector.
pub fn make_page(
    ids: &mut PageIdGen,
    user_text: &str,
    agent_text: &str,
    timestamp: Timestamp,
    embedder: &dyn Embedder,
) -> Result<Page> {
    let embedding = embedder.embed(&format!("{user_text} {agent_text}"))?;
    Ok(Page {
        id: ids.next_id(),
        user_text: user_text.to_string(),
        agent_text: agent_text.to_string(),
        timestamp,
        embedding,
        last_access: timestamp,
        continuity_link: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::HashEmbedder;

    #[test]
    fn make_page_sets_access_and_unit_embedding() {
        let embedder = HashEmbedder::new(64);
        let mut ids = PageIdGen::new();
        let page = make_page(&mut ids, "hi", "hello", 100, &embedder).unwrap();
        assert_eq!(page.last_access, 100);
        assert_eq!(page.timestamp, 100);
        let norm: f64 = page.embedding.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-6);
    }

    #[test]
    fn empty_texts_yield_zero_embedding() {
        let embedder = HashEmbedder::new(64);
        let mut ids = PageIdGen::new();
        let page = make_page(&mut ids, "", "", 0, &embedder).unwrap();
        assert!(page.embedding.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn same_texts_embed_identically() {
        let embedder = HashEmbedder::new(64);
        let mut ids = PageIdGen::new();
        let a = make_page(&mut ids, "the cat", "sat", 1, &embedder).unwrap();
        let b = make_page(&mut ids, "the cat", "sat", 2, &embedder).unwrap();
        assert_eq!(a.embedding, b.embedding);
        assert_ne!(a.id, b.id);
    }
}
