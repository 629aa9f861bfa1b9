// Dev probe: per-mode mem_reward over the synthetic suite.
use fluxmem::bmm::{FusionPolicy, GateParams};
use fluxmem::engine::{Engine, StructurePolicy};
use fluxmem::evalkit::{label_dataset, replay, ReplayMode};
use fluxmem::extraction::RuleBasedExtractor;
use fluxmem::selector::{train, SelectorModel, TrainConfig};
use fluxmem::structure::StructureKind;
use fluxmem::synth::benchmark_suite;
use fluxmem::{EngineConfig, HashEmbedder};

fn main() {
    let suite = benchmark_suite();
    let cfg = EngineConfig::default();
    let embedder = HashEmbedder::new(cfg.embedding_dim);

    // Label the suite by running it under each fixed structure.
    let fixed_factory = |kind: StructureKind| {
        Engine::builder().structure_policy(StructurePolicy::Fixed(kind)).build()
    };
    let labeled = label_dataset(
        &suite,
        &fixed_factory,
        &embedder,
        &RuleBasedExtractor,
        cfg.hier_join_threshold,
        cfg.lambda_judge,
        cfg.lambda_mem,
    )
    .unwrap();
    let mut label_counts = [0usize; 3];
    for (ex, case) in labeled.iter().zip(&suite) {
        label_counts[ex.label.index()] += 1;
        if std::env::args().any(|a| a == "-v") {
            println!(
                "{}: label={:?} rewards={:?}",
                case.id, ex.label, ex.rewards
            );
        }
    }
    println!("labels: linear={} graph={} hier={}", label_counts[0], label_counts[1], label_counts[2]);

    let (model, report) = train(&labeled, &TrainConfig::default()).unwrap();
    println!(
        "selector: acc={:.3} train_loss={:.4} epochs={}",
        report.accuracy, report.train_loss, report.epochs_run
    );

    let factory = |mode: ReplayMode| {
        let bmm = FusionPolicy::Bmm(GateParams::from(&EngineConfig::default()));
        let (structure, fusion) = mode.policies(&model, bmm);
        Engine::builder().structure_policy(structure).fusion_policy(fusion).build()
    };
    for mode in ReplayMode::ALL {
        let report = replay(&suite, &factory, mode, 42).unwrap();
        let by_cat: Vec<String> = report
            .per_category
            .iter()
            .map(|(k, m)| format!("{k}={:.3}", m.mem_reward.unwrap_or(-1.0)))
            .collect();
        println!(
            "{mode:>14}: mem={:.3} acc={} f1={:.3} [{}]",
            report.overall.mem_reward.unwrap_or(-1.0),
            report
                .overall
                .accuracy
                .map(|a| format!("{a:.3}"))
                .unwrap_or_else(|| "-".into()),
            report.overall.f1,
            by_cat.join(" ")
        );
    }

    sweep(&model);
}

// (sweep probe appended during bring-up)
fn sweep(model: &SelectorModel) {
    let suite = benchmark_suite();
    for (tau, min_keep) in [(0.5, 1), (0.7, 1), (0.5, 3)] {
        let factory = |mode: ReplayMode| {
            let mut cfg = EngineConfig::default();
            cfg.bmm_threshold = tau;
            cfg.bmm_min_keep = min_keep;
            let bmm = FusionPolicy::Bmm(GateParams::from(&cfg));
            let (structure, fusion) = mode.policies(model, bmm);
            Engine::builder().config(cfg.clone()).structure_policy(structure).fusion_policy(fusion).build()
        };
        let report = replay(&suite, &factory, ReplayMode::Full, 42).unwrap();
        println!("tau={tau} m_min={min_keep}: mem={:?}", report.overall.mem_reward);
    }
}
