//! Short-term interaction memory: a strict-capacity recency buffer with
//! LRU eviction. Evicted pages feed episodic integration.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::page::{Page, PageId, Timestamp};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StimBuffer {
    pages: Vec<Page>,
    capacity: usize,
}

impl StimBuffer {
    pub fn new(capacity: usize) -> Self {
        Self { pages: Vec::new(), capacity }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.pages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pages.is_empty()
    }

    /// Insert a page (its `last_access` is reset to its timestamp).
    /// When the buffer exceeds capacity the least-recently-used pages
    /// are removed and returned in ascending `last_access` order, ties
    /// broken by ascending page id.
    pub fn push(&mut self, mut page: Page) -> Result<Vec<Page>> {
        if self.pages.iter().any(|p| p.id == page.id) {
            return Err(Error::DuplicatePage(page.id));
        }
        page.last_access = page.timestamp;
        self.pages.push(page);
        if self.pages.len() <= self.capacity {
            return Ok(Vec::new());
        }
        let excess = self.pages.len() - self.capacity;
        self.pages.sort_by_key(|p| (p.last_access, p.id));
        let evicted: Vec<Page> = self.pages.drain(..excess).collect();
        Ok(evicted)
    }

    /// Refresh a page's last access. `at == None` uses the logical
    /// clock `max(existing last_access) + 1`, keeping tests free of
    /// wall-clock nondeterminism.
    pub fn touch(&mut self, page_id: PageId, at: Option<Timestamp>) -> Result<()> {
        let clock = at.unwrap_or_else(|| {
            self.pages.iter().map(|p| p.last_access).max().unwrap_or(0) + 1
        });
        let page = self
            .pages
            .iter_mut()
            .find(|p| p.id == page_id)
            .ok_or(Error::UnknownPage(page_id))?;
        page.last_access = clock;
        Ok(())
    }

    /// Every buffered page in ascending timestamp order (ties by id).
    pub fn contents(&self) -> Vec<Page> {
        let mut pages = self.pages.clone();
        pages.sort_by_key(|p| (p.timestamp, p.id));
        pages
    }

    pub fn page_ids(&self) -> Vec<PageId> {
        self.contents().iter().map(|p| p.id).collect()
    }
}
