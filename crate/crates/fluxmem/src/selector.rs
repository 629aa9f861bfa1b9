//! Context-aware structure selection: interaction-level features, a
//! small MLP classifier with softmax output, and its supervised
//! trainer. Gradients are hand-derived and validated against finite
//! differences.

use serde::{Deserialize, Serialize};

use crate::embed::cosine;
use crate::error::{Error, Result};
use crate::extraction::Extractor;
use crate::page::Page;
use crate::structure::{cluster_topics, StructureKind};
use crate::text::tokenize;

pub const FEATURE_DIM: usize = 12;
pub const HIDDEN_DIM: usize = 4;
pub const OUTPUT_DIM: usize = 3;

/// Feature order is part of the model-file contract.
pub const FEATURE_NAMES: [&str; FEATURE_DIM] = [
    "page_count",
    "avg_page_length",
    "entity_density",
    "relation_indicators",
    "topic_diversity",
    "topic_transitions",
    "is_qna_pattern",
    "is_decision_tree",
    "is_entity_centric",
    "time_span",
    "temporal_density",
    "semantic_complexity",
];

/// Tokens counted as explicit relational expressions.
pub const RELATION_CUES: [&str; 8] =
    ["because", "than", "compared", "refers", "depends", "before", "after", "between"];

/// Tokens counted as conditional cues for decision-tree-like flow.
pub const CONDITIONAL_CUES: [&str; 4] = ["if", "else", "option", "choose"];

/// Share of question-ending user turns required for the Q&A flag.
pub const QNA_THRESHOLD: f64 = 0.7;
/// Share of pages the modal entity must appear in for the
/// entity-centric flag.
pub const ENTITY_CENTRIC_THRESHOLD: f64 = 0.5;
/// Consecutive conditional user turns required for the decision-tree
/// flag.
pub const DECISION_TREE_RUN: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector(pub [f64; FEATURE_DIM]);

impl FeatureVector {
    pub fn as_array(&self) -> &[f64; FEATURE_DIM] {
        &self.0
    }
}

/// Interaction-level features over a window of pages.
pub fn extract_features(
    window: &[Page],
    extractor: &dyn Extractor,
    topic_join_threshold: f64,
) -> Result<FeatureVector> {
    if window.is_empty() {
        return Err(Error::EmptyInput("feature window"));
    }
    let n = window.len() as f64;

    let token_counts: Vec<usize> =
        window.iter().map(|p| tokenize(&p.text()).len()).collect();
    let avg_page_length = token_counts.iter().sum::<usize>() as f64 / n;

    let per_page_entities: Vec<Vec<String>> = window
        .iter()
        .map(|p| extractor.extract_entities(&p.text()))
        .collect::<Result<_>>()?;
    let entity_density =
        per_page_entities.iter().map(|e| e.len()).sum::<usize>() as f64 / n;

    let relation_indicators = window
        .iter()
        .map(|p| {
            tokenize(&p.text())
                .iter()
                .filter(|t| RELATION_CUES.contains(&t.as_str()))
                .count()
        })
        .sum::<usize>() as f64
        / n;

    let topic_diversity = cluster_topics(window, topic_join_threshold).len() as f64;

    let mut transitions = 0usize;
    for pair in window.windows(2) {
        if cosine(&pair[0].embedding, &pair[1].embedding)? < topic_join_threshold {
            transitions += 1;
        }
    }
    let topic_transitions = transitions as f64 / (window.len() - 1).max(1) as f64;

    let question_turns = window
        .iter()
        .filter(|p| p.user_text.trim_end().ends_with('?'))
        .count();
    let is_qna_pattern = if question_turns as f64 >= QNA_THRESHOLD * n { 1.0 } else { 0.0 };

    let mut conditional_run = 0usize;
    let mut longest_run = 0usize;
    for page in window {
        let has_cue = tokenize(&page.user_text)
            .iter()
            .any(|t| CONDITIONAL_CUES.contains(&t.as_str()));
        conditional_run = if has_cue { conditional_run + 1 } else { 0 };
        longest_run = longest_run.max(conditional_run);
    }
    let is_decision_tree = if longest_run >= DECISION_TREE_RUN { 1.0 } else { 0.0 };

    let mut entity_pages: std::collections::BTreeMap<&str, usize> = Default::default();
    for entities in &per_page_entities {
        for entity in entities {
            *entity_pages.entry(entity.as_str()).or_insert(0) += 1;
        }
    }
    let modal_pages = entity_pages.values().copied().max().unwrap_or(0);
    let is_entity_centric =
        if modal_pages as f64 >= ENTITY_CENTRIC_THRESHOLD * n { 1.0 } else { 0.0 };

    let min_ts = window.iter().map(|p| p.timestamp).min().unwrap();
    let max_ts = window.iter().map(|p| p.timestamp).max().unwrap();
    let time_span = (max_ts - min_ts) as f64 / 3600.0;
    let temporal_density = n / time_span.max(1.0 / 60.0);

    let mut dissimilarity = 0.0;
    let mut pairs = 0usize;
    for i in 0..window.len() {
        for j in (i + 1)..window.len() {
            dissimilarity += 1.0 - cosine(&window[i].embedding, &window[j].embedding)?;
            pairs += 1;
        }
    }
    let semantic_complexity = if pairs == 0 { 0.0 } else { dissimilarity / pairs as f64 };

    Ok(FeatureVector([
        n,
        avg_page_length,
        entity_density,
        relation_indicators,
        topic_diversity,
        topic_transitions,
        is_qna_pattern,
        is_decision_tree,
        is_entity_centric,
        time_span,
        temporal_density,
        semantic_complexity,
    ]))
}

/// The structure selector: standardizing scaler + 12→4→3 MLP with ReLU
/// hidden activation and softmax output. Weight matrices are row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectorModel {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
    pub scaler_mean: Vec<f64>,
    pub scaler_std: Vec<f64>,
}

impl Default for SelectorModel {
    fn default() -> Self {
        Self::zeros()
    }
}

const MODEL_FORMAT: &str = "fluxmem-selector/1";

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    input_dim: usize,
    hidden_dim: usize,
    output_dim: usize,
    feature_names: Vec<String>,
    model: SelectorModel,
}

impl SelectorModel {
    /// All-zero model: forward is the uniform distribution, so
    /// selection falls back to Linear by tie-break.
    pub fn zeros() -> Self {
        Self {
            w1: vec![0.0; HIDDEN_DIM * FEATURE_DIM],
            b1: vec![0.0; HIDDEN_DIM],
            w2: vec![0.0; OUTPUT_DIM * HIDDEN_DIM],
            b2: vec![0.0; OUTPUT_DIM],
            scaler_mean: vec![0.0; FEATURE_DIM],
            scaler_std: vec![1.0; FEATURE_DIM],
        }
    }

    fn check_shapes(&self) -> Result<()> {
        let expect = [
            (self.w1.len(), HIDDEN_DIM * FEATURE_DIM, "w1"),
            (self.b1.len(), HIDDEN_DIM, "b1"),
            (self.w2.len(), OUTPUT_DIM * HIDDEN_DIM, "w2"),
            (self.b2.len(), OUTPUT_DIM, "b2"),
            (self.scaler_mean.len(), FEATURE_DIM, "scaler_mean"),
            (self.scaler_std.len(), FEATURE_DIM, "scaler_std"),
        ];
        for (got, want, name) in expect {
            if got != want {
                return Err(Error::ShapeMismatch(format!("{name}: {got} != {want}")));
            }
        }
        if self.scaler_std.iter().any(|s| *s <= 0.0) {
            return Err(Error::ShapeMismatch("scaler_std must be strictly positive".into()));
        }
        Ok(())
    }

    fn normalize(&self, features: &FeatureVector) -> [f64; FEATURE_DIM] {
        let mut out = [0.0; FEATURE_DIM];
        for i in 0..FEATURE_DIM {
            out[i] = (features.0[i] - self.scaler_mean[i]) / self.scaler_std[i];
        }
        out
    }

    fn forward_cached(
        &self,
        features: &FeatureVector,
    ) -> ([f64; FEATURE_DIM], [f64; HIDDEN_DIM], [f64; OUTPUT_DIM]) {
        let x = self.normalize(features);
        let mut pre = [0.0; HIDDEN_DIM];
        for h in 0..HIDDEN_DIM {
            let mut acc = self.b1[h];
            for i in 0..FEATURE_DIM {
                acc += self.w1[h * FEATURE_DIM + i] * x[i];
            }
            pre[h] = acc;
        }
        let mut logits = [0.0; OUTPUT_DIM];
        for o in 0..OUTPUT_DIM {
            let mut acc = self.b2[o];
            for h in 0..HIDDEN_DIM {
                acc += self.w2[o * HIDDEN_DIM + h] * pre[h].max(0.0);
            }
            logits[o] = acc;
        }
        (x, pre, logits)
    }

    /// Class probabilities (softmax with max-subtraction).
    pub fn forward(&self, features: &FeatureVector) -> [f64; OUTPUT_DIM] {
        let (_, _, logits) = self.forward_cached(features);
        softmax(&logits)
    }

    /// Argmax structure; ties break Linear < Graph < Hierarchical.
    pub fn select_structure(&self, features: &FeatureVector) -> StructureKind {
        let probs = self.forward(features);
        let mut best = 0;
        for (i, p) in probs.iter().enumerate() {
            if *p > probs[best] {
                best = i;
            }
        }
        StructureKind::from_index(best).expect("index in range")
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        self.check_shapes()?;
        let file = ModelFile {
            format: MODEL_FORMAT.to_string(),
            input_dim: FEATURE_DIM,
            hidden_dim: HIDDEN_DIM,
            output_dim: OUTPUT_DIM,
            feature_names: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
            model: self.clone(),
        };
        let mut json = serde_json::to_string_pretty(&file)?;
        json.push('\n');
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path)?;
        let file: ModelFile = serde_json::from_str(&raw)?;
        if file.format != MODEL_FORMAT {
            return Err(Error::SnapshotVersion(file.format));
        }
        if file.input_dim != FEATURE_DIM
            || file.hidden_dim != HIDDEN_DIM
            || file.output_dim != OUTPUT_DIM
        {
            return Err(Error::ShapeMismatch(format!(
                "model dims {}x{}x{} do not match {FEATURE_DIM}x{HIDDEN_DIM}x{OUTPUT_DIM}",
                file.input_dim, file.hidden_dim, file.output_dim
            )));
        }
        file.model.check_shapes()?;
        Ok(file.model)
    }
}

fn softmax(logits: &[f64; OUTPUT_DIM]) -> [f64; OUTPUT_DIM] {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out = [0.0; OUTPUT_DIM];
    let mut total = 0.0;
    for (i, l) in logits.iter().enumerate() {
        out[i] = (l - max).exp();
        total += out[i];
    }
    for v in out.iter_mut() {
        *v /= total;
    }
    out
}

/// Interaction-derived reward r = λ_q·judge + λ_m·mem.
pub fn compute_reward(judge_score: f64, mem_score: f64, lambda_q: f64, lambda_m: f64) -> f64 {
    lambda_q * judge_score + lambda_m * mem_score
}

/// One supervised example: features, reward-optimal label, and the
/// per-structure rewards it was derived from.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LabeledExample {
    pub features: FeatureVector,
    pub label: StructureKind,
    pub rewards: [f64; OUTPUT_DIM],
}

impl LabeledExample {
    /// Label from rewards; ties break Linear < Graph < Hierarchical.
    pub fn from_rewards(features: FeatureVector, rewards: [f64; OUTPUT_DIM]) -> Self {
        let mut best = 0;
        for (i, r) in rewards.iter().enumerate() {
            if *r > rewards[best] {
                best = i;
            }
        }
        Self { features, label: StructureKind::from_index(best).unwrap(), rewards }
    }
}

/// Flat parameter gradients in the same layout as the model fields.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

impl Gradients {
    fn zeros() -> Self {
        Self {
            w1: vec![0.0; HIDDEN_DIM * FEATURE_DIM],
            b1: vec![0.0; HIDDEN_DIM],
            w2: vec![0.0; OUTPUT_DIM * HIDDEN_DIM],
            b2: vec![0.0; OUTPUT_DIM],
        }
    }

    fn add_scaled(&mut self, other: &Gradients, scale: f64) {
        for (a, b) in self.w1.iter_mut().zip(&other.w1) {
            *a += b * scale;
        }
        for (a, b) in self.b1.iter_mut().zip(&other.b1) {
            *a += b * scale;
        }
        for (a, b) in self.w2.iter_mut().zip(&other.w2) {
            *a += b * scale;
        }
        for (a, b) in self.b2.iter_mut().zip(&other.b2) {
            *a += b * scale;
        }
    }
}

/// Cross-entropy loss of one example.
pub fn loss(model: &SelectorModel, features: &FeatureVector, label: StructureKind) -> f64 {
    let probs = model.forward(features);
    -probs[label.index()].max(1e-300).ln()
}

/// Loss plus analytic gradients for one example (softmax + CE).
pub fn loss_and_grad(
    model: &SelectorModel,
    features: &FeatureVector,
    label: StructureKind,
) -> (f64, Gradients) {
    let (x, pre, logits) = model.forward_cached(features);
    let probs = softmax(&logits);
    let loss = -probs[label.index()].max(1e-300).ln();

    let mut dlogits = probs;
    dlogits[label.index()] -= 1.0;

    let mut grads = Gradients::zeros();
    let hidden: Vec<f64> = pre.iter().map(|v| v.max(0.0)).collect();
    for o in 0..OUTPUT_DIM {
        grads.b2[o] = dlogits[o];
        for h in 0..HIDDEN_DIM {
            grads.w2[o * HIDDEN_DIM + h] = dlogits[o] * hidden[h];
        }
    }
    for h in 0..HIDDEN_DIM {
        if pre[h] <= 0.0 {
            continue;
        }
        let mut dh = 0.0;
        for o in 0..OUTPUT_DIM {
            dh += model.w2[o * HIDDEN_DIM + h] * dlogits[o];
        }
        grads.b1[h] = dh;
        for i in 0..FEATURE_DIM {
            grads.w1[h * FEATURE_DIM + i] = dh * x[i];
        }
    }
    (loss, grads)
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
    /// Early stop after this many epochs without held-out improvement.
    pub patience: usize,
    /// Held-out fraction used for early stopping.
    pub val_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            learning_rate: 1e-2,
            batch_size: 16,
            seed: 42,
            patience: 20,
            val_fraction: 0.1,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs_run: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    /// Accuracy over the full provided dataset.
    pub accuracy: f64,
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(len: usize) -> Self {
        Self { m: vec![0.0; len], v: vec![0.0; len], t: 0 }
    }

    fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) {
        self.t += 1;
        let bc1 = 1.0 - Self::BETA1.powi(self.t);
        let bc2 = 1.0 - Self::BETA2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = Self::BETA1 * self.m[i] + (1.0 - Self::BETA1) * grads[i];
            self.v[i] = Self::BETA2 * self.v[i] + (1.0 - Self::BETA2) * grads[i] * grads[i];
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + Self::EPS);
        }
    }
}

fn mean_loss(model: &SelectorModel, data: &[LabeledExample], idx: &[usize]) -> f64 {
    if idx.is_empty() {
        return 0.0;
    }
    idx.iter().map(|&i| loss(model, &data[i].features, data[i].label)).sum::<f64>()
        / idx.len() as f64
}

/// Train by mini-batch Adam on mean cross-entropy. Deterministic for a
/// fixed (dataset, config): weight init, the validation split and every
/// shuffle come from one seeded stream.
pub fn train(
    dataset: &[LabeledExample],
    cfg: &TrainConfig,
) -> Result<(SelectorModel, TrainReport)> {
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};

    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cfg.seed);

    // Standardize over the provided dataset; std floored at 1e-8.
    let n = dataset.len() as f64;
    let mut mean = vec![0.0; FEATURE_DIM];
    for ex in dataset {
        for (m, x) in mean.iter_mut().zip(ex.features.0.iter()) {
            *m += x / n;
        }
    }
    let mut std = vec![0.0; FEATURE_DIM];
    for ex in dataset {
        for i in 0..FEATURE_DIM {
            std[i] += (ex.features.0[i] - mean[i]).powi(2) / n;
        }
    }
    for s in std.iter_mut() {
        *s = s.sqrt().max(1e-8);
    }

    let mut model = SelectorModel::zeros();
    model.scaler_mean = mean;
    model.scaler_std = std;
    for w in model
        .w1
        .iter_mut()
        .chain(model.b1.iter_mut())
        .chain(model.w2.iter_mut())
        .chain(model.b2.iter_mut())
    {
        *w = rng.random_range(-0.5..0.5);
    }

    let mut indices: Vec<usize> = (0..dataset.len()).collect();
    indices.shuffle(&mut rng);
    let val_len = (dataset.len() as f64 * cfg.val_fraction).floor() as usize;
    let (val_idx, train_idx) = indices.split_at(val_len);
    let val_idx = val_idx.to_vec();
    let mut train_idx = train_idx.to_vec();

    let mut adam_w1 = Adam::new(model.w1.len());
    let mut adam_b1 = Adam::new(model.b1.len());
    let mut adam_w2 = Adam::new(model.w2.len());
    let mut adam_b2 = Adam::new(model.b2.len());

    let mut best_monitor = f64::INFINITY;
    let mut stale_epochs = 0usize;
    let mut epochs_run = 0usize;

    for _epoch in 0..cfg.epochs {
        epochs_run += 1;
        train_idx.shuffle(&mut rng);
        for batch in train_idx.chunks(cfg.batch_size.max(1)) {
            let mut grads = Gradients::zeros();
            for &i in batch {
                let (_, g) = loss_and_grad(&model, &dataset[i].features, dataset[i].label);
                grads.add_scaled(&g, 1.0 / batch.len() as f64);
            }
            adam_w1.step(&mut model.w1, &grads.w1, cfg.learning_rate);
            adam_b1.step(&mut model.b1, &grads.b1, cfg.learning_rate);
            adam_w2.step(&mut model.w2, &grads.w2, cfg.learning_rate);
            adam_b2.step(&mut model.b2, &grads.b2, cfg.learning_rate);
        }
        // Monitor held-out loss; with no held-out split, fall back to
        // the training loss.
        let monitor = if val_idx.is_empty() {
            mean_loss(&model, dataset, &train_idx)
        } else {
            mean_loss(&model, dataset, &val_idx)
        };
        if monitor < best_monitor - 1e-12 {
            best_monitor = monitor;
            stale_epochs = 0;
        } else {
            stale_epochs += 1;
            if stale_epochs >= cfg.patience {
                break;
            }
        }
    }

    let correct = dataset
        .iter()
        .filter(|ex| model.select_structure(&ex.features) == ex.label)
        .count();
    let report = TrainReport {
        epochs_run,
        train_loss: mean_loss(&model, dataset, &train_idx),
        val_loss: if val_idx.is_empty() {
            None
        } else {
            Some(mean_loss(&model, dataset, &val_idx))
        },
        accuracy: correct as f64 / dataset.len() as f64,
    };
    Ok((model, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::HashEmbedder;
    use crate::extraction::RuleBasedExtractor;
    use crate::page::{make_page, PageIdGen, Timestamp};
    use rand::{Rng, SeedableRng};

    fn page(ids: &mut PageIdGen, user: &str, ts: Timestamp) -> Page {
        let embedder = HashEmbedder::new(128);
        make_page(ids, user, "", ts, &embedder).unwrap()
    }

    #[test]
    fn singleton_window_features() {
        let mut ids = PageIdGen::new();
        let window = vec![page(&mut ids, "just some plain words", 3600)];
        let f = extract_features(&window, &RuleBasedExtractor, 0.5).unwrap();
        assert_eq!(f.0[0], 1.0); // page_count
        assert_eq!(f.0[2], 0.0); // entity_density
        assert_eq!(f.0[4], 1.0); // topic_diversity
        assert_eq!(f.0[5], 0.0); // topic_transitions
        assert_eq!(f.0[9], 0.0); // time_span
        assert_eq!(f.0[11], 0.0); // semantic_complexity
        assert!(extract_features(&[], &RuleBasedExtractor, 0.5).is_err());
    }

    #[test]
    fn qna_flag_from_question_turns() {
        let mut ids = PageIdGen::new();
        let window: Vec<Page> = (0..4)
            .map(|i| page(&mut ids, &format!("is item {i} ready?"), i * 60))
            .collect();
        let f = extract_features(&window, &RuleBasedExtractor, 0.5).unwrap();
        assert_eq!(f.0[6], 1.0);
        // 2 of 4 question turns is below the 70% bar.
        let mixed = vec![
            page(&mut ids, "is it ready?", 0),
            page(&mut ids, "good to know", 60),
            page(&mut ids, "and the other?", 120),
            page(&mut ids, "thanks", 180),
        ];
        let f = extract_features(&mixed, &RuleBasedExtractor, 0.5).unwrap();
        assert_eq!(f.0[6], 0.0);
    }

    #[test]
    fn entity_centric_flag_from_modal_entity() {
        let mut ids = PageIdGen::new();
        let window = vec![
            page(&mut ids, "Alice fixed the roof", 0),
            page(&mut ids, "Alice bought paint", 60),
            page(&mut ids, "Alice called a plumber", 120),
            page(&mut ids, "the weekend was quiet", 180),
        ];
        let f = extract_features(&window, &RuleBasedExtractor, 0.5).unwrap();
        assert_eq!(f.0[8], 1.0, "3 of 4 pages mention alice");
        assert!(f.0[2] > 0.0);
    }

    #[test]
    fn decision_tree_flag_needs_consecutive_cues() {
        let mut ids = PageIdGen::new();
        let window = vec![
            page(&mut ids, "if it rains we stay", 0),
            page(&mut ids, "else we choose the park", 60),
            page(&mut ids, "which option fits best", 120),
        ];
        let f = extract_features(&window, &RuleBasedExtractor, 0.5).unwrap();
        assert_eq!(f.0[7], 1.0);
        let broken = vec![
            page(&mut ids, "if it rains we stay", 0),
            page(&mut ids, "sunny all week", 60),
            page(&mut ids, "choose the park then", 120),
        ];
        let f = extract_features(&broken, &RuleBasedExtractor, 0.5).unwrap();
        assert_eq!(f.0[7], 0.0);
    }

    #[test]
    fn forward_uniform_for_zero_model() {
        let model = SelectorModel::zeros();
        let f = FeatureVector([1.0; FEATURE_DIM]);
        let p = model.forward(&f);
        for v in p {
            assert!((v - 1.0 / 3.0).abs() < 1e-12);
        }
        assert_eq!(model.select_structure(&f), StructureKind::Linear);
    }

    #[test]
    fn forward_bias_dominates() {
        let mut model = SelectorModel::zeros();
        model.b2 = vec![10.0, 0.0, 0.0];
        let f = FeatureVector([0.5; FEATURE_DIM]);
        let p = model.forward(&f);
        assert!(p[0] > 0.9999, "got {p:?}");
        assert_eq!(model.select_structure(&f), StructureKind::Linear);
        let sum: f64 = p.iter().sum();
        assert!((sum - 1.0).abs() < 1e-9);
    }

    #[test]
    fn argmax_picks_graph() {
        let mut model = SelectorModel::zeros();
        model.b2 = vec![0.1, 0.7, 0.2];
        let f = FeatureVector([0.0; FEATURE_DIM]);
        assert_eq!(model.select_structure(&f), StructureKind::Graph);
    }

    #[test]
    fn reward_arithmetic() {
        assert_eq!(compute_reward(1.0, 1.0, 0.7, 0.3), 1.0);
        assert_eq!(compute_reward(0.0, 0.0, 0.7, 0.3), 0.0);
        assert!((compute_reward(0.8, 0.5, 0.7, 0.3) - 0.71).abs() < 1e-12);
    }

    #[test]
    fn label_from_rewards_tie_breaks_in_order() {
        let f = FeatureVector([0.0; FEATURE_DIM]);
        assert_eq!(
            LabeledExample::from_rewards(f, [0.9, 0.2, 0.1]).label,
            StructureKind::Linear
        );
        assert_eq!(
            LabeledExample::from_rewards(f, [0.5, 0.5, 0.5]).label,
            StructureKind::Linear
        );
        assert_eq!(
            LabeledExample::from_rewards(f, [0.1, 0.7, 0.2]).label,
            StructureKind::Graph
        );
    }

    fn random_model(rng: &mut impl Rng) -> SelectorModel {
        let mut model = SelectorModel::zeros();
        for w in model
            .w1
            .iter_mut()
            .chain(model.b1.iter_mut())
            .chain(model.w2.iter_mut())
            .chain(model.b2.iter_mut())
        {
            *w = rng.random_range(-0.5..0.5);
        }
        model
    }

    /// Central finite differences against the analytic gradients.
    #[test]
    fn gradient_check() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let worst = max_gradient_error(&mut rng, 20);
        assert!(worst < 1e-4, "max relative gradient error {worst}");
    }

    fn max_gradient_error(rng: &mut impl Rng, trials: usize) -> f64 {
        type Field = fn(&mut SelectorModel) -> &mut Vec<f64>;
        let fields: [Field; 4] =
            [|m| &mut m.w1, |m| &mut m.b1, |m| &mut m.w2, |m| &mut m.b2];
        let h = 1e-5;
        let mut worst = 0.0f64;
        for _ in 0..trials {
            let mut model = random_model(rng);
            let mut raw = [0.0; FEATURE_DIM];
            for v in raw.iter_mut() {
                *v = rng.random_range(-2.0..2.0);
            }
            let features = FeatureVector(raw);
            let label = StructureKind::from_index(rng.random_range(0..3)).unwrap();
            let (_, grads) = loss_and_grad(&model, &features, label);
            let analytic = [&grads.w1, &grads.b1, &grads.w2, &grads.b2];

            for (field, analytic) in fields.iter().zip(analytic) {
                for k in 0..analytic.len() {
                    let orig = field(&mut model)[k];
                    field(&mut model)[k] = orig + h;
                    let plus = loss(&model, &features, label);
                    field(&mut model)[k] = orig - h;
                    let minus = loss(&model, &features, label);
                    field(&mut model)[k] = orig;
                    let numeric = (plus - minus) / (2.0 * h);
                    let denom = analytic[k].abs().max(numeric.abs()).max(1e-6);
                    worst = worst.max((analytic[k] - numeric).abs() / denom);
                }
            }
        }
        worst
    }

    #[test]
    fn memorizes_single_example() {
        let example = LabeledExample {
            features: FeatureVector([1.0, 2.0, 0.0, 0.5, 3.0, 0.1, 1.0, 0.0, 0.0, 4.0, 0.2, 0.6]),
            label: StructureKind::Graph,
            rewards: [0.1, 0.9, 0.2],
        };
        let (model, report) = train(&[example.clone()], &TrainConfig::default()).unwrap();
        assert!(report.train_loss < 0.01, "loss {}", report.train_loss);
        assert_eq!(model.select_structure(&example.features), StructureKind::Graph);
        assert!(matches!(train(&[], &TrainConfig::default()), Err(Error::EmptyDataset)));
    }

    fn cluster_dataset(n: usize, seed: u64) -> Vec<LabeledExample> {
        // Small separable clusters along distinct feature dimensions.
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut data = Vec::new();
        for i in 0..n {
            let class = i % 3;
            let mut raw = [0.0; FEATURE_DIM];
            for v in raw.iter_mut() {
                *v = rng.random_range(-0.2..0.2);
            }
            match class {
                0 => {
                    raw[6] += 1.0;
                    raw[10] += 5.0;
                }
                1 => {
                    raw[2] += 3.0;
                    raw[8] += 1.0;
                }
                _ => {
                    raw[4] += 5.0;
                    raw[11] += 1.0;
                }
            }
            let mut rewards = [0.2, 0.2, 0.2];
            rewards[class] = 0.9;
            data.push(LabeledExample::from_rewards(FeatureVector(raw), rewards));
        }
        data
    }

    #[test]
    fn learns_separable_clusters() {
        let data = cluster_dataset(120, 3);
        let (_, report) = train(&data, &TrainConfig::default()).unwrap();
        assert!(report.accuracy >= 0.95, "accuracy {}", report.accuracy);
    }

    #[test]
    fn training_is_deterministic() {
        let data = cluster_dataset(60, 9);
        let (a, _) = train(&data, &TrainConfig::default()).unwrap();
        let (b, _) = train(&data, &TrainConfig::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn model_file_roundtrip_and_shape_check() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let model = random_model(&mut rng);
        model.save(&path).unwrap();
        let loaded = SelectorModel::load(&path).unwrap();
        assert_eq!(model, loaded);

        let mut bad: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        bad["model"]["w1"] = serde_json::json!([1.0, 2.0]);
        std::fs::write(&path, serde_json::to_string(&bad).unwrap()).unwrap();
        assert!(SelectorModel::load(&path).is_err());
    }
}
