// Dev probe: 10k-page stress ingestion timing and invariants.
use fluxmem::engine::Engine;
use fluxmem::synth::stress_transcript;

fn main() {
    let start = std::time::Instant::now();
    let mut engine = Engine::builder().build().unwrap();
    for (i, (user, agent, ts)) in stress_transcript(10_000, 42).into_iter().enumerate() {
        engine.observe(&user, &agent, ts).unwrap();
        let census = engine.census();
        assert!(census.conserved(), "step {i}: {census:?}");
        assert!(engine.stim().len() <= 4);
        assert!(engine.mtem().len() <= 2000);
        assert!(engine.ltsm().len() <= 100);
    }
    println!(
        "10k pages in {:.1}s; sessions={} ltsm={} pruned={}",
        start.elapsed().as_secs_f64(),
        engine.mtem().len(),
        engine.ltsm().len(),
        engine.census().pruned_pages
    );
}
