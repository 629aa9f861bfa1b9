//! fluxmem CLI: transcript ingestion, querying, selector labeling and
//! training, benchmark evaluation, and snapshot inspection.
//!
//! Exit codes: 0 success, 1 user/input error, 2 provider or
//! environment failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use fluxmem::bmm::{FusionPolicy, GateParams};
use fluxmem::embed::embedder_from_env;
use fluxmem::engine::{Engine, StructurePolicy};
use fluxmem::evalkit::{
    label_dataset, load_cases, load_examples, replay, save_cases, save_examples, sweep_gate,
    ReplayMode,
};
use fluxmem::extraction::extractor_from_env;
use fluxmem::retrieval::responder_from_env;
use fluxmem::selector::{train, SelectorModel, TrainConfig};
use fluxmem::snapshot::Snapshot;
use fluxmem::structure::StructureKind;
use fluxmem::synth::{benchmark_suite, selector_training_set, stress_transcript};
use fluxmem::{EngineConfig, Error};

#[derive(Parser)]
#[command(
    name = "fluxmem",
    version,
    about = "Hierarchical structure-adaptive conversational memory engine"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// Override config fields as dotted key=value pairs, e.g.
    /// --set bmm_threshold=0.6 --set ltsm_thresholds.usage=0.1
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Seed for weight init and any sampling.
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

#[derive(Subcommand)]
enum Command {
    /// Stream a transcript (JSONL of {user, agent, timestamp}) through
    /// the memory pipeline and write a snapshot.
    Ingest {
        #[arg(long)]
        transcript: PathBuf,
        #[arg(long)]
        snapshot: PathBuf,
        /// Selector model file; defaults to the untrained selector.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Gzip the snapshot.
        #[arg(long)]
        gzip: bool,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Answer a query against a snapshot.
    Query {
        #[arg(long)]
        snapshot: PathBuf,
        query: String,
        /// Print the rendered fused context.
        #[arg(long)]
        show_context: bool,
        /// Emit a machine-readable JSON record.
        #[arg(long)]
        json: bool,
        /// Persist usage-counter updates back to the snapshot.
        #[arg(long)]
        commit: bool,
    },
    /// Label conversations with their reward-optimal structure.
    Label {
        #[arg(long)]
        cases: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Train the structure selector on labeled examples.
    Train {
        #[arg(long)]
        examples: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 200)]
        epochs: usize,
        #[arg(long, default_value_t = 1e-2)]
        learning_rate: f64,
        #[arg(long, default_value_t = 16)]
        batch_size: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
    /// Replay benchmark cases and report metrics.
    Eval {
        #[arg(long)]
        cases: PathBuf,
        /// full | fixed-linear | fixed-graph | fixed-hier | no-bmm |
        /// ablate-linear | ablate-graph | ablate-hier
        #[arg(long, default_value = "full")]
        mode: String,
        /// Write the JSON report here.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Selector model for full/no-bmm/ablate modes.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Run the gate hyperparameter sweep instead of a single mode.
        #[arg(long)]
        sweep: bool,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Print layer statistics and per-session structure kinds.
    Inspect {
        #[arg(long)]
        snapshot: PathBuf,
    },
    /// Materialize the shipped synthetic datasets.
    Synth {
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Size of the selector training set.
        #[arg(long, default_value_t = 300)]
        selector_examples: usize,
        /// Also write a stress transcript with this many pages.
        #[arg(long)]
        stress_pages: Option<usize>,
    },
}

#[derive(Debug, Serialize, Deserialize)]
struct TranscriptLine {
    user: String,
    agent: String,
    timestamp: i64,
}

const QUERY_SCHEMA: &str = "fluxmem-query/1";

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::ProviderUnreachable(_) | Error::MalformedResponse { .. } => 2,
        _ => 1,
    }
}

/// Apply dotted-path overrides onto the default config.
fn config_from(args: &ConfigArgs) -> Result<EngineConfig, Error> {
    let mut value = serde_json::to_value(EngineConfig::default())?;
    for entry in &args.overrides {
        let (path, raw) = entry.split_once('=').ok_or_else(|| {
            Error::InvalidConfig(format!("--set expects KEY=VALUE, got {entry:?}"))
        })?;
        let mut slot = &mut value;
        for key in path.split('.') {
            slot = slot
                .get_mut(key)
                .ok_or_else(|| Error::InvalidConfig(format!("unknown config key: {path}")))?;
        }
        *slot = serde_json::from_str(raw)
            .unwrap_or_else(|_| serde_json::Value::String(raw.to_string()));
    }
    let config: EngineConfig =
        serde_json::from_value(value).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    config.validate()?;
    Ok(config)
}

fn build_engine(
    config: &EngineConfig,
    seed: u64,
    model: Option<SelectorModel>,
) -> Result<Engine, Error> {
    let mut builder = Engine::builder()
        .config(config.clone())
        .seed(seed)
        .embedder(embedder_from_env(config.embedding_dim))
        .extractor(extractor_from_env())
        .responder(responder_from_env());
    if let Some(model) = model {
        builder = builder.structure_policy(StructurePolicy::Model(model));
    }
    builder.build()
}

fn load_model(path: &Option<PathBuf>) -> Result<SelectorModel, Error> {
    match path {
        Some(path) => SelectorModel::load(path),
        None => Ok(SelectorModel::zeros()),
    }
}

fn cmd_ingest(
    transcript: &Path,
    snapshot_path: &Path,
    model: Option<PathBuf>,
    gzip: bool,
    config_args: &ConfigArgs,
) -> Result<(), Error> {
    let config = config_from(config_args)?;
    let model = load_model(&model)?;
    let mut engine = build_engine(&config, config_args.seed, Some(model))?;

    let raw = std::fs::read_to_string(transcript)?;
    for (idx, line) in raw.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parsed: TranscriptLine = serde_json::from_str(line).map_err(|e| Error::Parse {
            line: idx + 1,
            message: e.to_string(),
        })?;
        engine.observe(&parsed.user, &parsed.agent, parsed.timestamp)?;
    }
    engine.snapshot().save(snapshot_path, gzip)?;
    let census = engine.census();
    println!(
        "ingested {} pages: stim={} mtem_sessions={} mtem_pages={} ltsm={} pruned_pages={}",
        census.observed,
        census.stim,
        engine.mtem().len(),
        census.mtem_pages,
        engine.ltsm().len(),
        census.pruned_pages
    );
    println!("snapshot written to {}", snapshot_path.display());
    Ok(())
}

fn cmd_query(
    snapshot_path: &Path,
    query: &str,
    show_context: bool,
    json: bool,
    commit: bool,
) -> Result<(), Error> {
    let snapshot = Snapshot::load(snapshot_path)?;
    let dim = snapshot.config.embedding_dim;
    let mut engine = Engine::from_snapshot(
        snapshot,
        embedder_from_env(dim),
        extractor_from_env(),
        responder_from_env(),
    )?;
    let outcome = engine.ask(query)?;
    if json {
        let record = serde_json::json!({
            "schema_version": QUERY_SCHEMA,
            "query": query,
            "answer": outcome.answer,
            "query_entities": outcome.trace.query_entities,
            "stim_page_ids": engine.stim().page_ids().iter().map(|p| p.0).collect::<Vec<_>>(),
            "mtem_hits": outcome.context.mtem_hits.iter()
                .map(|(p, s)| serde_json::json!({"page_id": p.id.0, "score": s}))
                .collect::<Vec<_>>(),
            "ltsm_hits": outcome.context.ltsm_hits.iter()
                .map(|(e, s)| serde_json::json!({"entry_id": e.id.0, "kind": e.kind.to_string(), "score": s}))
                .collect::<Vec<_>>(),
        });
        println!("{}", serde_json::to_string_pretty(&record)?);
    } else {
        println!("{}", outcome.answer);
    }
    if show_context {
        eprintln!("--- context ---\n{}", outcome.context.rendered);
    }
    if commit {
        engine.snapshot().save(snapshot_path, false)?;
    }
    Ok(())
}

fn cmd_label(cases_path: &Path, out: &Path, config_args: &ConfigArgs) -> Result<(), Error> {
    let config = config_from(config_args)?;
    let cases = load_cases(cases_path)?;
    let seed = config_args.seed;
    let factory_config = config.clone();
    let factory = move |kind: StructureKind| -> Result<Engine, Error> {
        Engine::builder()
            .config(factory_config.clone())
            .seed(seed)
            .structure_policy(StructurePolicy::Fixed(kind))
            .build()
    };
    let embedder = embedder_from_env(config.embedding_dim);
    let extractor = extractor_from_env();
    let examples = label_dataset(
        &cases,
        &factory,
        embedder.as_ref(),
        extractor.as_ref(),
        config.hier_join_threshold,
        config.lambda_judge,
        config.lambda_mem,
    )?;
    save_examples(&examples, out)?;
    let mut counts = [0usize; 3];
    for ex in &examples {
        counts[ex.label.index()] += 1;
    }
    println!(
        "labeled {} cases: linear={} graph={} hierarchical={}",
        examples.len(),
        counts[0],
        counts[1],
        counts[2]
    );
    Ok(())
}

fn cmd_train(
    examples_path: &Path,
    out: &Path,
    epochs: usize,
    learning_rate: f64,
    batch_size: usize,
    seed: u64,
) -> Result<(), Error> {
    let examples = load_examples(examples_path)?;
    let config = TrainConfig { epochs, learning_rate, batch_size, seed, ..Default::default() };
    let (model, report) = train(&examples, &config)?;
    model.save(out)?;
    println!(
        "trained on {} examples: epochs={} train_loss={:.6} val_loss={} accuracy={:.4}",
        examples.len(),
        report.epochs_run,
        report.train_loss,
        report
            .val_loss
            .map(|v| format!("{v:.6}"))
            .unwrap_or_else(|| "-".into()),
        report.accuracy
    );
    println!("model written to {}", out.display());
    Ok(())
}

fn cmd_eval(
    cases_path: &Path,
    mode: &str,
    report_path: Option<PathBuf>,
    model_path: Option<PathBuf>,
    sweep: bool,
    config_args: &ConfigArgs,
) -> Result<(), Error> {
    let config = config_from(config_args)?;
    let cases = load_cases(cases_path)?;
    let model = load_model(&model_path)?;
    let seed = config_args.seed;

    if sweep {
        let base = GateParams::from(&config);
        let factory_config = config.clone();
        let factory_model = model.clone();
        let factory = move |params: GateParams| -> Result<Engine, Error> {
            Engine::builder()
                .config(factory_config.clone())
                .seed(seed)
                .structure_policy(StructurePolicy::Model(factory_model.clone()))
                .fusion_policy(FusionPolicy::Bmm(params))
                .build()
        };
        let points =
            sweep_gate(&cases, &factory, base, &[0.4, 0.5, 0.6, 0.7], &[1, 2, 3], seed)?;
        println!("tau    min_keep  mem_reward      f1     acc");
        for p in &points {
            println!(
                "{:<6} {:>8}  {:>10} {:7.3} {:>7}",
                p.tau,
                p.min_keep,
                p.mem_reward.map(|v| format!("{v:.3}")).unwrap_or_else(|| "-".into()),
                p.f1,
                p.accuracy.map(|v| format!("{v:.3}")).unwrap_or_else(|| "-".into()),
            );
        }
        if let Some(path) = report_path {
            let mut json = serde_json::to_string_pretty(&points)?;
            json.push('\n');
            std::fs::write(path, json)?;
        }
        return Ok(());
    }

    let mode: ReplayMode = mode.parse()?;
    let factory_config = config.clone();
    let factory = move |mode: ReplayMode| -> Result<Engine, Error> {
        let bmm = FusionPolicy::Bmm(GateParams::from(&factory_config));
        let (structure, fusion) = mode.policies(&model, bmm);
        Engine::builder()
            .config(factory_config.clone())
            .seed(seed)
            .structure_policy(structure)
            .fusion_policy(fusion)
            .build()
    };
    let report = replay(&cases, &factory, mode, seed)?;
    print!("{}", report.table());
    if let Some(path) = report_path {
        std::fs::write(&path, report.to_json()?)?;
        println!("report written to {}", path.display());
    }
    Ok(())
}

fn cmd_inspect(snapshot_path: &Path) -> Result<(), Error> {
    let snapshot = Snapshot::load(snapshot_path)?;
    println!("format: {}", snapshot.format_version);
    println!("created_at: {}", snapshot.created_at);
    println!("seed: {}", snapshot.seed);
    println!("config fingerprint: {}", snapshot.config.fingerprint());
    println!("stim: {}/{} pages", snapshot.stim.len(), snapshot.config.stim_capacity);
    println!("mtem: {} sessions, {} pages", snapshot.mtem.len(), snapshot.mtem.page_count());
    let mut kind_counts = [0usize; 3];
    for session in snapshot.mtem.sessions() {
        kind_counts[session.structure_kind.index()] += 1;
    }
    println!(
        "  structures: linear={} graph={} hierarchical={}",
        kind_counts[0], kind_counts[1], kind_counts[2]
    );
    for session in snapshot.mtem.sessions() {
        println!(
            "  {} kind={} pages={} access={} summary={:?}",
            session.id,
            session.structure_kind,
            session.pages.len(),
            session.access_count,
            preview(&session.summary)
        );
    }
    println!("ltsm: {} entries", snapshot.ltsm.len());
    for entry in snapshot.ltsm.entries() {
        println!(
            "  {} kind={} usage={} confidence={:.2} content={:?}",
            entry.id,
            entry.kind,
            entry.usage,
            entry.confidence,
            preview(&entry.content)
        );
    }
    Ok(())
}

fn preview(text: &str) -> &str {
    let end = text
        .char_indices()
        .take(48)
        .last()
        .map(|(i, c)| i + c.len_utf8())
        .unwrap_or(0);
    &text[..end]
}

fn cmd_synth(
    out_dir: &Path,
    seed: u64,
    selector_examples: usize,
    stress_pages: Option<usize>,
) -> Result<(), Error> {
    std::fs::create_dir_all(out_dir)?;
    let suite = benchmark_suite();
    let suite_path = out_dir.join("suite.jsonl");
    save_cases(&suite, &suite_path)?;
    println!("wrote {} cases to {}", suite.len(), suite_path.display());

    let examples = selector_training_set(selector_examples, seed);
    let examples_path = out_dir.join("selector_train.jsonl");
    save_examples(&examples, &examples_path)?;
    println!("wrote {} examples to {}", examples.len(), examples_path.display());

    if let Some(pages) = stress_pages {
        let transcript = stress_transcript(pages, seed);
        let mut out = String::new();
        for (user, agent, timestamp) in transcript {
            out.push_str(&serde_json::to_string(&TranscriptLine { user, agent, timestamp })?);
            out.push('\n');
        }
        let path = out_dir.join("stress_transcript.jsonl");
        std::fs::write(&path, out)?;
        println!("wrote {pages} transcript pages to {}", path.display());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Ingest { transcript, snapshot, model, gzip, config } => {
            cmd_ingest(&transcript, &snapshot, model, gzip, &config)
        }
        Command::Query { snapshot, query, show_context, json, commit } => {
            cmd_query(&snapshot, &query, show_context, json, commit)
        }
        Command::Label { cases, out, config } => cmd_label(&cases, &out, &config),
        Command::Train { examples, out, epochs, learning_rate, batch_size, seed } => {
            cmd_train(&examples, &out, epochs, learning_rate, batch_size, seed)
        }
        Command::Eval { cases, mode, report, model, sweep, config } => {
            cmd_eval(&cases, &mode, report, model, sweep, &config)
        }
        Command::Inspect { snapshot } => cmd_inspect(&snapshot),
        Command::Synth { out_dir, seed, selector_examples, stress_pages } => {
            cmd_synth(&out_dir, seed, selector_examples, stress_pages)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}
