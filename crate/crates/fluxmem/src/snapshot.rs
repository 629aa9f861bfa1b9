//! Whole-engine snapshots: versioned JSON, byte-stable across
//! save/load/save, with optional gzip.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bmm::{FusionPolicy, GateParams};
use crate::config::EngineConfig;
use crate::embed::Embedder;
use crate::engine::{Engine, StructurePolicy};
use crate::error::{Error, Result};
use crate::extraction::Extractor;
use crate::ltsm::LtsmStore;
use crate::mtem::MtemStore;
use crate::page::{Page, PageIdGen, Timestamp};
use crate::retrieval::Responder;
use crate::selector::SelectorModel;
use crate::stim::StimBuffer;

pub const SNAPSHOT_FORMAT: &str = "fluxmem-snapshot/1";

/// Engine-internal counters that make ingestion resumable.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EngineState {
    pub clock: Timestamp,
    pub ids: PageIdGen,
    pub recent: Vec<Page>,
    pub observed: u64,
    pub pruned_pages: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Snapshot {
    pub format_version: String,
    /// Logical creation time (the engine clock, not the wall clock, so
    /// re-ingesting a transcript reproduces the snapshot bit-for-bit).
    pub created_at: Timestamp,
    pub seed: u64,
    pub config: EngineConfig,
    pub stim: StimBuffer,
    pub mtem: MtemStore,
    pub ltsm: LtsmStore,
    pub selector: Option<SelectorModel>,
    pub engine_state: EngineState,
}

impl Snapshot {
    pub fn to_json(&self) -> Result<String> {
        let mut json = serde_json::to_string_pretty(self)?;
        json.push('\n');
        Ok(json)
    }

    pub fn from_json(raw: &str) -> Result<Self> {
        let snapshot: Snapshot = serde_json::from_str(raw)?;
        if snapshot.format_version != SNAPSHOT_FORMAT {
            return Err(Error::SnapshotVersion(snapshot.format_version));
        }
        snapshot.config.validate()?;
        Ok(snapshot)
    }

    pub fn save(&self, path: &Path, gzip: bool) -> Result<()> {
        let json = self.to_json()?;
        if gzip {
            let file = std::fs::File::create(path)?;
            let mut encoder =
                flate2::write::GzEncoder::new(file, flate2::Compression::default());
            encoder.write_all(json.as_bytes())?;
            encoder.finish()?;
        } else {
            std::fs::write(path, json)?;
        }
        Ok(())
    }

    /// Load a snapshot; gzip is auto-detected from the magic bytes.
    pub fn load(path: &Path) -> Result<Self> {
        let raw = std::fs::read(path)?;
        let text = if raw.starts_with(&[0x1f, 0x8b]) {
            let mut decoder = flate2::read::GzDecoder::new(raw.as_slice());
            let mut out = String::new();
            decoder.read_to_string(&mut out)?;
            out
        } else {
            String::from_utf8(raw).map_err(|e| Error::Parse {
                line: 0,
                message: format!("snapshot is not utf-8: {e}"),
            })?
        };
        Self::from_json(&text)
    }
}

impl Engine {
    /// Capture the engine's complete persistent state.
    pub fn snapshot(&self) -> Snapshot {
        let (config, stim, mtem, ltsm, policy) = self.parts();
        let (clock, ids, recent, observed, pruned_pages) = self.state();
        let selector = match policy {
            StructurePolicy::Model(model) => Some(model.clone()),
            StructurePolicy::Ablate { model, .. } => Some(model.clone()),
            StructurePolicy::Fixed(_) => None,
        };
        Snapshot {
            format_version: SNAPSHOT_FORMAT.to_string(),
            created_at: clock,
            seed: self.seed(),
            config: config.clone(),
            stim: stim.clone(),
            mtem: mtem.clone(),
            ltsm: ltsm.clone(),
            selector,
            engine_state: EngineState {
                clock,
                ids: ids.clone(),
                recent: recent.to_vec(),
                observed,
                pruned_pages,
            },
        }
    }

    /// Rebuild an engine from a snapshot with the given providers.
    pub fn from_snapshot(
        snapshot: Snapshot,
        embedder: Box<dyn Embedder>,
        extractor: Box<dyn Extractor>,
        responder: Box<dyn Responder>,
    ) -> Result<Self> {
        snapshot.config.validate()?;
        if embedder.dim() != snapshot.config.embedding_dim {
            return Err(Error::InvalidConfig(format!(
                "embedder dimension {} does not match snapshot config {}",
                embedder.dim(),
                snapshot.config.embedding_dim
            )));
        }
        let policy = match snapshot.selector {
            Some(model) => StructurePolicy::Model(model),
            None => StructurePolicy::Model(SelectorModel::zeros()),
        };
        let fusion = FusionPolicy::Bmm(GateParams::from(&snapshot.config));
        Ok(Engine::restore(
            snapshot.config,
            snapshot.stim,
            snapshot.mtem,
            snapshot.ltsm,
            policy,
            fusion,
            embedder,
            extractor,
            responder,
            snapshot.seed,
            snapshot.engine_state.clock,
            snapshot.engine_state.ids,
            snapshot.engine_state.recent,
            snapshot.engine_state.observed,
            snapshot.engine_state.pruned_pages,
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::HashEmbedder;
    use crate::extraction::RuleBasedExtractor;
    use crate::retrieval::MockResponder;

    fn providers(dim: usize) -> (Box<dyn Embedder>, Box<dyn Extractor>, Box<dyn Responder>) {
        (
            Box::new(HashEmbedder::new(dim)),
            Box::new(RuleBasedExtractor),
            Box::new(MockResponder),
        )
    }

    fn populated_engine() -> Engine {
        let mut e = Engine::builder().build().unwrap();
        for i in 0..12 {
            e.observe(
                &format!("I visited market stall {i} with Ana."),
                "sounds fun",
                i * 450,
            )
            .unwrap();
        }
        e
    }

    #[test]
    fn roundtrip_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let path_a = dir.path().join("a.json");
        let path_b = dir.path().join("b.json");
        let engine = populated_engine();
        let snapshot = engine.snapshot();
        snapshot.save(&path_a, false).unwrap();
        let loaded = Snapshot::load(&path_a).unwrap();
        loaded.save(&path_b, false).unwrap();
        assert_eq!(std::fs::read(&path_a).unwrap(), std::fs::read(&path_b).unwrap());
    }

    #[test]
    fn gzip_roundtrip_matches_plain() {
        let dir = tempfile::tempdir().unwrap();
        let plain = dir.path().join("s.json");
        let zipped = dir.path().join("s.json.gz");
        let engine = populated_engine();
        engine.snapshot().save(&plain, false).unwrap();
        engine.snapshot().save(&zipped, true).unwrap();
        let a = Snapshot::load(&plain).unwrap();
        let b = Snapshot::load(&zipped).unwrap();
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
    }

    #[test]
    fn restored_engine_continues_identically() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.json");
        let mut original = populated_engine();
        original.snapshot().save(&path, false).unwrap();

        let snapshot = Snapshot::load(&path).unwrap();
        let (e1, x1, r1) = providers(snapshot.config.embedding_dim);
        let mut restored = Engine::from_snapshot(snapshot, e1, x1, r1).unwrap();

        original.observe("I also tried the cheese stall.", "nice", 6000).unwrap();
        restored.observe("I also tried the cheese stall.", "nice", 6000).unwrap();
        assert_eq!(
            original.snapshot().to_json().unwrap(),
            restored.snapshot().to_json().unwrap()
        );
    }

    #[test]
    fn version_mismatch_rejected() {
        let engine = populated_engine();
        let mut snapshot = engine.snapshot();
        snapshot.format_version = "fluxmem-snapshot/99".to_string();
        let json = serde_json::to_string(&snapshot).unwrap();
        assert!(matches!(
            Snapshot::from_json(&json),
            Err(Error::SnapshotVersion(_))
        ));
    }
}
