// Dev probe: dissect one topical conversation under fixed-hier.
use fluxmem::embed::{cosine, Embedder};
use fluxmem::engine::{Engine, StructurePolicy};
use fluxmem::structure::{ScoreQuery, StructureIndex, StructureKind};
use fluxmem::synth::benchmark_suite;
use fluxmem::{EngineConfig, HashEmbedder};

fn main() {
    let case = benchmark_suite().into_iter().find(|c| c.id == "h00").unwrap();
    let cfg = EngineConfig::default();
    let embedder = HashEmbedder::new(cfg.embedding_dim);
    let mut engine = Engine::builder()
        .structure_policy(StructurePolicy::Fixed(StructureKind::Hierarchical))
        .build()
        .unwrap();
    for (u, a, ts) in case.pages() {
        engine.observe(&u, &a, ts).unwrap();
    }
    let q = embedder.embed(&case.question).unwrap();
    println!("question: {}", case.question);
    println!("evidence ordinal: {:?}", case.gold_evidence_ids);
    println!("sessions: {}", engine.mtem().len());
    for session in engine.mtem().sessions() {
        println!(
            "-- session {} kind={} pages={:?} summary={:?}",
            session.id,
            session.structure_kind,
            session.pages.iter().map(|p| p.id.0).collect::<Vec<_>>(),
            &session.summary[..session.summary.len().min(60)],
        );
        if let StructureIndex::Hierarchical { topics } = &session.structure_index {
            for (i, t) in topics.iter().enumerate() {
                println!(
                    "   topic{i} label={} members={:?} qcos={:.3}",
                    t.label,
                    t.members.iter().map(|m| m.0).collect::<Vec<_>>(),
                    cosine(&q, &t.embedding).unwrap()
                );
            }
        }
    }
    // Page-level cosines vs the query.
    for session in engine.mtem().sessions() {
        for p in &session.pages {
            println!(
                "page {:>2} qcos={:.3} text={}",
                p.id.0,
                cosine(&q, &p.embedding).unwrap(),
                &p.user_text[..p.user_text.len().min(70)]
            );
        }
    }
    let query = ScoreQuery {
        embedding: &q,
        entities: &[],
        now: engine.clock(),
        half_life_secs: cfg.half_life_secs,
        top_topics: cfg.hier_top_topics,
    };
    let hits = engine.mtem().retrieve(&query, 8).unwrap();
    println!("structure-leg hits:");
    for (p, s) in hits {
        println!("  {:>2} {:.3} {}", p.id.0, s, &p.user_text[..p.user_text.len().min(70)]);
    }
}
