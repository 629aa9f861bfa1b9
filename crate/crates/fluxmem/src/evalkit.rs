//! Benchmark ingestion, the replay/ablation harness, and report
//! aggregation. Cases are JSONL; reports are versioned JSON with a
//! config fingerprint so identical runs are byte-comparable.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::bmm::FusionPolicy;
use crate::embed::Embedder;
use crate::engine::{Engine, StructurePolicy};
use crate::error::{Error, Result};
use crate::extraction::Extractor;
use crate::metrics;
use crate::page::{make_page, PageId, PageIdGen, Timestamp};
use crate::selector::{
    compute_reward, extract_features, FeatureVector, LabeledExample, SelectorModel,
};
use crate::structure::StructureKind;

pub const REPORT_SCHEMA: &str = "fluxmem-report/1";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Turn {
    pub speaker: String,
    pub text: String,
    pub timestamp: Timestamp,
}

/// One benchmark conversation plus its probe question.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchmarkCase {
    pub id: String,
    #[serde(default)]
    pub category: String,
    /// Sessions of (speaker, text, timestamp) turns.
    pub conversation: Vec<Vec<Turn>>,
    pub question: String,
    pub gold_answer: String,
    /// Page ordinals (ingestion order, 0-based) holding the evidence.
    #[serde(default)]
    pub gold_evidence_ids: Vec<u64>,
    /// Present for multiple-choice cases.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub choices: Option<Vec<String>>,
}

impl BenchmarkCase {
    pub fn validate(&self) -> Result<()> {
        for session in &self.conversation {
            for pair in session.windows(2) {
                if pair[1].timestamp < pair[0].timestamp {
                    return Err(Error::NonMonotoneTimestamp {
                        prev: pair[0].timestamp,
                        got: pair[1].timestamp,
                    });
                }
            }
        }
        if let Some(choices) = &self.choices {
            if choices.is_empty() {
                return Err(Error::EmptyInput("choices"));
            }
        }
        Ok(())
    }

    /// Pair turns into (user, agent, timestamp) pages. A user turn and
    /// the following agent turn form one page stamped with the user
    /// turn's timestamp; unpaired turns become pages with one empty
    /// side.
    pub fn pages(&self) -> Vec<(String, String, Timestamp)> {
        let mut pages = Vec::new();
        let mut pending: Option<(String, Timestamp)> = None;
        for session in &self.conversation {
            for turn in session {
                let is_user = matches!(
                    turn.speaker.to_lowercase().as_str(),
                    "user" | "human" | "speaker_a"
                );
                if is_user {
                    if let Some((user, ts)) = pending.take() {
                        pages.push((user, String::new(), ts));
                    }
                    pending = Some((turn.text.clone(), turn.timestamp));
                } else {
                    match pending.take() {
                        Some((user, ts)) => pages.push((user, turn.text.clone(), ts)),
                        None => pages.push((String::new(), turn.text.clone(), turn.timestamp)),
                    }
                }
            }
        }
        if let Some((user, ts)) = pending {
            pages.push((user, String::new(), ts));
        }
        pages
    }
}

/// Parse JSONL cases, reporting the 1-based line of the first error.
pub fn parse_cases(text: &str) -> Result<Vec<BenchmarkCase>> {
    let mut cases = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let case: BenchmarkCase =
            serde_json::from_str(line).map_err(|e| Error::Parse {
                line: idx + 1,
                message: e.to_string(),
            })?;
        case.validate().map_err(|e| Error::Parse { line: idx + 1, message: e.to_string() })?;
        cases.push(case);
    }
    Ok(cases)
}

pub fn load_cases(path: &Path) -> Result<Vec<BenchmarkCase>> {
    parse_cases(&std::fs::read_to_string(path)?)
}

pub fn save_cases(cases: &[BenchmarkCase], path: &Path) -> Result<()> {
    let mut out = String::new();
    for case in cases {
        out.push_str(&serde_json::to_string(case)?);
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Replay configuration: the full adaptive system, a forced single
/// structure, the gate ablation, or a selector with one structure
/// removed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReplayMode {
    Full,
    FixedLinear,
    FixedGraph,
    FixedHier,
    NoBmm,
    AblateLinear,
    AblateGraph,
    AblateHier,
}

impl ReplayMode {
    pub const ALL: [ReplayMode; 8] = [
        ReplayMode::Full,
        ReplayMode::FixedLinear,
        ReplayMode::FixedGraph,
        ReplayMode::FixedHier,
        ReplayMode::NoBmm,
        ReplayMode::AblateLinear,
        ReplayMode::AblateGraph,
        ReplayMode::AblateHier,
    ];

    /// Structure and fusion policies realizing this mode. `NoBmm`
    /// replaces the gate with a fixed cosine threshold of 0.5.
    pub fn policies(
        &self,
        model: &SelectorModel,
        bmm: FusionPolicy,
    ) -> (StructurePolicy, FusionPolicy) {
        match self {
            ReplayMode::Full => (StructurePolicy::Model(model.clone()), bmm),
            ReplayMode::FixedLinear => {
                (StructurePolicy::Fixed(StructureKind::Linear), bmm)
            }
            ReplayMode::FixedGraph => (StructurePolicy::Fixed(StructureKind::Graph), bmm),
            ReplayMode::FixedHier => {
                (StructurePolicy::Fixed(StructureKind::Hierarchical), bmm)
            }
            ReplayMode::NoBmm => {
                (StructurePolicy::Model(model.clone()), FusionPolicy::CosineThreshold(0.5))
            }
            ReplayMode::AblateLinear => (
                StructurePolicy::Ablate {
                    model: model.clone(),
                    removed: StructureKind::Linear,
                },
                bmm,
            ),
            ReplayMode::AblateGraph => (
                StructurePolicy::Ablate { model: model.clone(), removed: StructureKind::Graph },
                bmm,
            ),
            ReplayMode::AblateHier => (
                StructurePolicy::Ablate {
                    model: model.clone(),
                    removed: StructureKind::Hierarchical,
                },
                bmm,
            ),
        }
    }
}

impl fmt::Display for ReplayMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            ReplayMode::Full => "full",
            ReplayMode::FixedLinear => "fixed-linear",
            ReplayMode::FixedGraph => "fixed-graph",
            ReplayMode::FixedHier => "fixed-hier",
            ReplayMode::NoBmm => "no-bmm",
            ReplayMode::AblateLinear => "ablate-linear",
            ReplayMode::AblateGraph => "ablate-graph",
            ReplayMode::AblateHier => "ablate-hier",
        };
        f.write_str(name)
    }
}

impl FromStr for ReplayMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ReplayMode::ALL
            .into_iter()
            .find(|m| m.to_string() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown replay mode: {s}")))
    }
}

/// Per-case metric values. `bertscore` is reserved and always null
/// (it needs a neural scoring model).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricSet {
    pub f1: f64,
    pub bleu1: f64,
    pub rouge1: f64,
    pub rouge2: f64,
    pub rouge_l: f64,
    pub accuracy: Option<f64>,
    pub mem_reward: Option<f64>,
    pub bertscore: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CaseRow {
    pub id: String,
    pub category: String,
    pub answer: String,
    pub metrics: Option<MetricSet>,
    pub error: Option<String>,
}

/// Mean of each metric over the rows where it is defined.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct MetricMeans {
    pub cases: usize,
    pub f1: f64,
    pub bleu1: f64,
    pub rouge1: f64,
    pub rouge2: f64,
    pub rouge_l: f64,
    pub accuracy: Option<f64>,
    pub mem_reward: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: String,
    pub mode: String,
    pub seed: u64,
    pub config_fingerprint: String,
    pub overall: MetricMeans,
    pub per_category: BTreeMap<String, MetricMeans>,
    pub rows: Vec<CaseRow>,
}

impl EvalReport {
    pub fn to_json(&self) -> Result<String> {
        let mut json = serde_json::to_string_pretty(self)?;
        json.push('\n');
        Ok(json)
    }

    /// Plain-text summary table for terminal output.
    pub fn table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "mode={} seed={} cases={}\n",
            self.mode, self.seed, self.overall.cases
        ));
        out.push_str(
            "category          cases     f1  bleu1     r1     r2     rl    acc    mem\n",
        );
        let fmt_opt = |v: Option<f64>| match v {
            Some(v) => format!("{v:6.3}"),
            None => "     -".to_string(),
        };
        let mut line = |name: &str, m: &MetricMeans| {
            out.push_str(&format!(
                "{name:<16} {:>6} {:6.3} {:6.3} {:6.3} {:6.3} {:6.3} {} {}\n",
                m.cases,
                m.f1,
                m.bleu1,
                m.rouge1,
                m.rouge2,
                m.rouge_l,
                fmt_opt(m.accuracy),
                fmt_opt(m.mem_reward),
            ));
        };
        for (category, means) in &self.per_category {
            line(category, means);
        }
        line("overall", &self.overall);
        out
    }
}

fn aggregate(rows: &[&CaseRow]) -> MetricMeans {
    let scored: Vec<&MetricSet> = rows.iter().filter_map(|r| r.metrics.as_ref()).collect();
    let n = scored.len();
    if n == 0 {
        return MetricMeans { cases: rows.len(), ..Default::default() };
    }
    let mean = |f: &dyn Fn(&MetricSet) -> f64| -> f64 {
        scored.iter().map(|m| f(m)).sum::<f64>() / n as f64
    };
    let mean_opt = |f: &dyn Fn(&MetricSet) -> Option<f64>| -> Option<f64> {
        let values: Vec<f64> = scored.iter().filter_map(|m| f(m)).collect();
        if values.is_empty() {
            None
        } else {
            Some(values.iter().sum::<f64>() / values.len() as f64)
        }
    };
    MetricMeans {
        cases: rows.len(),
        f1: mean(&|m| m.f1),
        bleu1: mean(&|m| m.bleu1),
        rouge1: mean(&|m| m.rouge1),
        rouge2: mean(&|m| m.rouge2),
        rouge_l: mean(&|m| m.rouge_l),
        accuracy: mean_opt(&|m| m.accuracy),
        mem_reward: mean_opt(&|m| m.mem_reward),
    }
}

/// Run one case through a fresh engine and score it.
fn run_case(case: &BenchmarkCase, engine: &mut Engine) -> Result<(String, MetricSet)> {
    for (user, agent, ts) in case.pages() {
        engine.observe(&user, &agent, ts)?;
    }
    let outcome = match &case.choices {
        Some(choices) => engine.ask_choice(&case.question, choices)?,
        None => engine.ask(&case.question)?,
    };
    let answer = outcome.answer;
    let retrieved = outcome.context.retrieved_page_ids();
    let accuracy = case.choices.as_ref().map(|_| {
        if answer.trim().to_lowercase() == case.gold_answer.trim().to_lowercase() {
            1.0
        } else {
            0.0
        }
    });
    let mem_reward = if case.gold_evidence_ids.is_empty() {
        None
    } else {
        let gold: Vec<PageId> = case.gold_evidence_ids.iter().map(|i| PageId(*i)).collect();
        Some(metrics::mem_reward(&retrieved, &gold))
    };
    let metric_set = MetricSet {
        f1: metrics::token_f1(&answer, &case.gold_answer),
        bleu1: metrics::bleu1(&answer, &case.gold_answer),
        rouge1: metrics::rouge_n(&answer, &case.gold_answer, 1).2,
        rouge2: metrics::rouge_n(&answer, &case.gold_answer, 2).2,
        rouge_l: metrics::rouge_l(&answer, &case.gold_answer).2,
        accuracy,
        mem_reward,
        bertscore: None,
    };
    Ok((answer, metric_set))
}

/// Replay every case against a fresh engine built by `factory` for the
/// given mode. Per-case failures land in the report rows, not in Err.
pub fn replay(
    cases: &[BenchmarkCase],
    factory: &dyn Fn(ReplayMode) -> Result<Engine>,
    mode: ReplayMode,
    seed: u64,
) -> Result<EvalReport> {
    let mut fingerprint = String::new();
    let mut rows: Vec<CaseRow> = Vec::with_capacity(cases.len());
    for case in cases {
        let row = match case.validate().and_then(|_| factory(mode)) {
            Ok(mut engine) => {
                if fingerprint.is_empty() {
                    fingerprint = engine.config().fingerprint();
                }
                match run_case(case, &mut engine) {
                    Ok((answer, metrics)) => CaseRow {
                        id: case.id.clone(),
                        category: case.category.clone(),
                        answer,
                        metrics: Some(metrics),
                        error: None,
                    },
                    Err(e) => CaseRow {
                        id: case.id.clone(),
                        category: case.category.clone(),
                        answer: String::new(),
                        metrics: None,
                        error: Some(e.to_string()),
                    },
                }
            }
            Err(e) => CaseRow {
                id: case.id.clone(),
                category: case.category.clone(),
                answer: String::new(),
                metrics: None,
                error: Some(e.to_string()),
            },
        };
        rows.push(row);
    }
    rows.sort_by(|a, b| a.id.cmp(&b.id));

    let mut categories: BTreeMap<String, Vec<&CaseRow>> = BTreeMap::new();
    for row in &rows {
        categories.entry(row.category.clone()).or_default().push(row);
    }
    let per_category: BTreeMap<String, MetricMeans> =
        categories.into_iter().map(|(k, v)| (k, aggregate(&v))).collect();
    let overall = aggregate(&rows.iter().collect::<Vec<_>>());
    Ok(EvalReport {
        schema_version: REPORT_SCHEMA.to_string(),
        mode: mode.to_string(),
        seed,
        config_fingerprint: fingerprint,
        overall,
        per_category,
        rows,
    })
}

/// One grid point of the gate hyperparameter sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepPoint {
    pub tau: f64,
    pub min_keep: usize,
    pub mem_reward: Option<f64>,
    pub f1: f64,
    pub accuracy: Option<f64>,
}

/// Sensitivity sweep over the gate's posterior threshold and minimum
/// retention: τ varies at the base min-keep, then min-keep varies at
/// the base τ.
pub fn sweep_gate(
    cases: &[BenchmarkCase],
    factory: &dyn Fn(crate::bmm::GateParams) -> Result<Engine>,
    base: crate::bmm::GateParams,
    taus: &[f64],
    min_keeps: &[usize],
    seed: u64,
) -> Result<Vec<SweepPoint>> {
    let mut grid: Vec<(f64, usize)> = Vec::new();
    for &tau in taus {
        grid.push((tau, base.min_keep));
    }
    for &min_keep in min_keeps {
        if !grid.contains(&(base.tau, min_keep)) {
            grid.push((base.tau, min_keep));
        }
    }
    let mut points = Vec::with_capacity(grid.len());
    for (tau, min_keep) in grid {
        let params = crate::bmm::GateParams { tau, min_keep, ..base.clone() };
        let point_factory =
            |_mode: ReplayMode| -> Result<Engine> { factory(params.clone()) };
        let report = replay(cases, &point_factory, ReplayMode::Full, seed)?;
        points.push(SweepPoint {
            tau,
            min_keep,
            mem_reward: report.overall.mem_reward,
            f1: report.overall.f1,
            accuracy: report.overall.accuracy,
        });
    }
    Ok(points)
}

/// Offline structure labeling: run each case once per forced structure,
/// score judge (token F1 against gold) and memory utilization (evidence
/// hit rate), and label with the reward-optimal structure.
pub fn label_dataset(
    cases: &[BenchmarkCase],
    factory: &dyn Fn(StructureKind) -> Result<Engine>,
    embedder: &dyn Embedder,
    extractor: &dyn Extractor,
    topic_join_threshold: f64,
    lambda_q: f64,
    lambda_m: f64,
) -> Result<Vec<LabeledExample>> {
    let mut examples = Vec::with_capacity(cases.len());
    for case in cases {
        case.validate()?;
        let features = case_features(case, embedder, extractor, topic_join_threshold)?;
        let mut rewards = [0.0; 3];
        for kind in StructureKind::ALL {
            let mut engine = factory(kind)?;
            let (answer, metric_set) = run_case(case, &mut engine)?;
            let judge = metrics::token_f1(&answer, &case.gold_answer);
            let mem = metric_set.mem_reward.unwrap_or(0.0);
            rewards[kind.index()] = compute_reward(judge, mem, lambda_q, lambda_m);
        }
        examples.push(LabeledExample::from_rewards(features, rewards));
    }
    Ok(examples)
}

/// Conversation-level features of a whole case.
pub fn case_features(
    case: &BenchmarkCase,
    embedder: &dyn Embedder,
    extractor: &dyn Extractor,
    topic_join_threshold: f64,
) -> Result<FeatureVector> {
    let mut ids = PageIdGen::new();
    let mut pages = Vec::new();
    for (user, agent, ts) in case.pages() {
        pages.push(make_page(&mut ids, &user, &agent, ts, embedder)?);
    }
    extract_features(&pages, extractor, topic_join_threshold)
}

/// JSONL round-trip for labeled examples.
pub fn save_examples(examples: &[LabeledExample], path: &Path) -> Result<()> {
    let mut out = String::new();
    for ex in examples {
        out.push_str(&serde_json::to_string(ex)?);
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn load_examples(path: &Path) -> Result<Vec<LabeledExample>> {
    let text = std::fs::read_to_string(path)?;
    let mut examples = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        examples.push(serde_json::from_str(line).map_err(|e| Error::Parse {
            line: idx + 1,
            message: e.to_string(),
        })?);
    }
    Ok(examples)
}
