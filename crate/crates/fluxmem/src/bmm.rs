//! Beta-mixture fusion gate: min-max score normalization, log-space EM
//! with responsibility-weighted moment updates, posterior gating, and
//! the full merge-vs-new-session decision.

use serde::{Deserialize, Serialize};

use crate::config::EngineConfig;
use crate::error::{Error, Result};

/// Clip range for Beta shape parameters.
pub const SHAPE_MIN: f64 = 0.01;
pub const SHAPE_MAX: f64 = 1e4;
/// Clamp range for the concentration κ = α + β recovered by moment
/// matching.
pub const KAPPA_MIN: f64 = 0.02;
pub const KAPPA_MAX: f64 = 2e4;
/// Floor for responsibility-weighted variances.
pub const VAR_FLOOR: f64 = 1e-6;
const PI_MIN: f64 = 1e-6;
/// Early stop when no parameter moves by more than this.
const PARAM_TOL: f64 = 1e-7;

/// Fitted two-component Beta mixture. Component 1 is the
/// high-compatibility regime: `mean_high() >= mean_low()` always holds
/// after fitting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaMixture {
    /// Mixture weight of component 1.
    pub pi: f64,
    pub alpha0: f64,
    pub beta0: f64,
    pub alpha1: f64,
    pub beta1: f64,
}

impl BetaMixture {
    pub fn mean_low(&self) -> f64 {
        self.alpha0 / (self.alpha0 + self.beta0)
    }

    pub fn mean_high(&self) -> f64 {
        self.alpha1 / (self.alpha1 + self.beta1)
    }
}

/// Per-iteration fitting diagnostics.
#[derive(Debug, Clone, Default)]
pub struct FitTrace {
    /// Observed-data log-likelihood; entry 0 is under the initial
    /// parameters, each further entry after an accepted update.
    pub log_likelihood: Vec<f64>,
    /// Whether any clamp or clip bound during the update producing
    /// `log_likelihood[t + 1]`.
    pub clamped: Vec<bool>,
    /// True when fitting stopped before exhausting the iteration budget.
    pub converged: bool,
}

/// Min-max normalization into (0, 1) with an `epsilon` margin; all
/// values map to 0.5 when the scores are constant.
pub fn normalize_scores(scores: &[f64], epsilon: f64) -> Result<Vec<f64>> {
    if scores.is_empty() {
        return Err(Error::EmptyInput("scores"));
    }
    let lo = scores.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if hi == lo {
        return Ok(vec![0.5; scores.len()]);
    }
    Ok(scores
        .iter()
        .map(|s| epsilon + (1.0 - 2.0 * epsilon) * (s - lo) / (hi - lo))
        .collect())
}

/// Natural log of the gamma function (Lanczos approximation, g = 7).
/// Absolute error stays well below 1e-8 for arguments >= 0.01.
pub fn ln_gamma(x: f64) -> f64 {
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_93,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_13,
        -176.615_029_162_140_59,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_571_6e-6,
        1.505_632_735_149_311_6e-7,
    ];
    const G: f64 = 7.0;
    if x < 0.5 {
        // Reflection: Γ(x)·Γ(1−x) = π / sin(πx).
        let pi = std::f64::consts::PI;
        return pi.ln() - (pi * x).sin().ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = COEF[0];
    for (i, c) in COEF.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

fn ln_beta_norm(alpha: f64, beta: f64) -> f64 {
    ln_gamma(alpha + beta) - ln_gamma(alpha) - ln_gamma(beta)
}

/// Log density of Beta(α, β) at `x`.
pub fn log_beta_pdf(x: f64, alpha: f64, beta: f64) -> Result<f64> {
    if !(x > 0.0 && x < 1.0) {
        return Err(Error::Domain { value: x, domain: "(0,1)" });
    }
    Ok((alpha - 1.0) * x.ln() + (beta - 1.0) * (1.0 - x).ln() + ln_beta_norm(alpha, beta))
}

/// Recover (α, β) from a mean/variance pair via κ = μ(1−μ)/σ² − 1.
/// Returns the shapes and whether any clamp bound.
fn moment_match(mu: f64, var: f64) -> (f64, f64, bool) {
    let mut clamped = false;
    let floored_var = var.max(VAR_FLOOR);
    if floored_var != var {
        clamped = true;
    }
    let kappa_raw = mu * (1.0 - mu) / floored_var - 1.0;
    let kappa = kappa_raw.clamp(KAPPA_MIN, KAPPA_MAX);
    if kappa != kappa_raw {
        clamped = true;
    }
    let alpha_raw = mu * kappa;
    let beta_raw = (1.0 - mu) * kappa;
    let alpha = alpha_raw.clamp(SHAPE_MIN, SHAPE_MAX);
    let beta = beta_raw.clamp(SHAPE_MIN, SHAPE_MAX);
    if alpha != alpha_raw || beta != beta_raw {
        clamped = true;
    }
    (alpha, beta, clamped)
}

/// Linear-interpolated empirical quantile of a sorted slice.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
    }
}

struct EmState {
    pi1: f64,
    alpha0: f64,
    beta0: f64,
    alpha1: f64,
    beta1: f64,
}

/// Log-likelihood and component-1 responsibilities under `state`.
fn e_step(state: &EmState, ln_x: &[f64], ln_1mx: &[f64]) -> (f64, Vec<f64>) {
    let c0 = ln_beta_norm(state.alpha0, state.beta0);
    let c1 = ln_beta_norm(state.alpha1, state.beta1);
    let lp0 = (1.0 - state.pi1).ln();
    let lp1 = state.pi1.ln();
    let mut ll = 0.0;
    let mut resp = Vec::with_capacity(ln_x.len());
    for (lx, l1x) in ln_x.iter().zip(ln_1mx.iter()) {
        let l0 = lp0 + c0 + (state.alpha0 - 1.0) * lx + (state.beta0 - 1.0) * l1x;
        let l1 = lp1 + c1 + (state.alpha1 - 1.0) * lx + (state.beta1 - 1.0) * l1x;
        let m = l0.max(l1);
        let lse = m + ((l0 - m).exp() + (l1 - m).exp()).ln();
        ll += lse;
        resp.push((l1 - lse).exp());
    }
    (ll, resp)
}

/// Fit a two-component Beta mixture by EM with quantile initialization
/// and responsibility-weighted moment updates. Iteration stops early
/// on parameter convergence or when a moment update would reduce the
/// observed-data log-likelihood (the moment M-step is not an exact
/// maximizer, so a decrease signals convergence).
pub fn fit_beta_mixture(x: &[f64], iters: usize) -> Result<BetaMixture> {
    fit_beta_mixture_traced(x, iters).map(|(m, _)| m)
}

pub fn fit_beta_mixture_traced(x: &[f64], iters: usize) -> Result<(BetaMixture, FitTrace)> {
    if x.len() < 2 {
        return Err(Error::InputTooSmall { need: 2, got: x.len() });
    }
    for &v in x {
        if !(v > 0.0 && v < 1.0) {
            return Err(Error::Domain { value: v, domain: "(0,1)" });
        }
    }
    let n = x.len() as f64;
    let lo = x.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if lo == hi {
        // Single-regime data: both components carry the matched moments.
        let (alpha, beta, _) = moment_match(lo, 0.0);
        let mixture =
            BetaMixture { pi: 0.5, alpha0: alpha, beta0: beta, alpha1: alpha, beta1: beta };
        return Ok((mixture, FitTrace { converged: true, ..Default::default() }));
    }

    let mut sorted = x.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let (alpha0, beta0, _) = moment_match(quantile(&sorted, 0.3), 0.01);
    let (alpha1, beta1, _) = moment_match(quantile(&sorted, 0.7), 0.01);
    let mut state = EmState { pi1: 0.5, alpha0, beta0, alpha1, beta1 };

    let ln_x: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ln_1mx: Vec<f64> = x.iter().map(|v| (1.0 - v).ln()).collect();

    let (mut ll, mut resp) = e_step(&state, &ln_x, &ln_1mx);
    let mut trace =
        FitTrace { log_likelihood: vec![ll], clamped: Vec::new(), converged: false };

    for _ in 0..iters {
        let n1: f64 = resp.iter().sum();
        let n0 = n - n1;
        if n0 < 1e-12 || n1 < 1e-12 {
            trace.converged = true;
            break;
        }
        let mu0 = resp.iter().zip(x).map(|(r, v)| (1.0 - r) * v).sum::<f64>() / n0;
        let mu1 = resp.iter().zip(x).map(|(r, v)| r * v).sum::<f64>() / n1;
        let var0 =
            resp.iter().zip(x).map(|(r, v)| (1.0 - r) * (v - mu0).powi(2)).sum::<f64>() / n0;
        let var1 = resp.iter().zip(x).map(|(r, v)| r * (v - mu1).powi(2)).sum::<f64>() / n1;
        let (a0, b0, clamp0) = moment_match(mu0, var0);
        let (a1, b1, clamp1) = moment_match(mu1, var1);
        let pi_raw = n1 / n;
        let pi1 = pi_raw.clamp(PI_MIN, 1.0 - PI_MIN);
        let candidate = EmState { pi1, alpha0: a0, beta0: b0, alpha1: a1, beta1: b1 };
        let (new_ll, new_resp) = e_step(&candidate, &ln_x, &ln_1mx);
        if new_ll < ll {
            trace.converged = true;
            break;
        }
        let delta = [
            (a0 - state.alpha0).abs(),
            (b0 - state.beta0).abs(),
            (a1 - state.alpha1).abs(),
            (b1 - state.beta1).abs(),
            (pi1 - state.pi1).abs(),
        ]
        .into_iter()
        .fold(0.0_f64, f64::max);
        state = candidate;
        ll = new_ll;
        resp = new_resp;
        trace.log_likelihood.push(ll);
        trace.clamped.push(clamp0 || clamp1 || pi1 != pi_raw);
        if delta < PARAM_TOL {
            trace.converged = true;
            break;
        }
    }

    // Relabel so component 1 is the high-compatibility regime.
    let mean0 = state.alpha0 / (state.alpha0 + state.beta0);
    let mean1 = state.alpha1 / (state.alpha1 + state.beta1);
    let mixture = if mean0 > mean1 {
        BetaMixture {
            pi: 1.0 - state.pi1,
            alpha0: state.alpha1,
            beta0: state.beta1,
            alpha1: state.alpha0,
            beta1: state.beta0,
        }
    } else {
        BetaMixture {
            pi: state.pi1,
            alpha0: state.alpha0,
            beta0: state.beta0,
            alpha1: state.alpha1,
            beta1: state.beta1,
        }
    };
    Ok((mixture, trace))
}

/// Posterior of the high-compatibility component at `x`.
pub fn gate(mixture: &BetaMixture, x: f64) -> Result<f64> {
    let l0 = (1.0 - mixture.pi).ln() + log_beta_pdf(x, mixture.alpha0, mixture.beta0)?;
    let l1 = mixture.pi.ln() + log_beta_pdf(x, mixture.alpha1, mixture.beta1)?;
    Ok(1.0 / (1.0 + (l0 - l1).exp()))
}

/// Posterior of the low-compatibility component at `x`.
pub fn posterior_low(mixture: &BetaMixture, x: f64) -> Result<f64> {
    let l0 = (1.0 - mixture.pi).ln() + log_beta_pdf(x, mixture.alpha0, mixture.beta0)?;
    let l1 = mixture.pi.ln() + log_beta_pdf(x, mixture.alpha1, mixture.beta1)?;
    Ok(1.0 / (1.0 + (l1 - l0).exp()))
}

/// Gate parameters, normally derived from [`EngineConfig`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateParams {
    pub tau: f64,
    pub min_keep: usize,
    pub em_iters: usize,
    pub epsilon: f64,
    /// Raw matching scores below this always open a new session.
    pub score_floor: f64,
}

impl From<&EngineConfig> for GateParams {
    fn from(cfg: &EngineConfig) -> Self {
        Self {
            tau: cfg.bmm_threshold,
            min_keep: cfg.bmm_min_keep,
            em_iters: cfg.bmm_em_iters,
            epsilon: cfg.bmm_epsilon,
            score_floor: cfg.new_session_floor,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FusionOutcome {
    /// Merge into the candidate at this index.
    Merge { candidate: usize },
    NewSession,
}

/// Outcome of one gating decision over a candidate score list.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GateDecision {
    /// Posterior gate value per candidate, in input order.
    pub gates: Vec<f64>,
    /// Indices retained by the threshold (or min-keep fallback),
    /// ascending.
    pub retained: Vec<usize>,
    /// Most compatible retained candidate, independent of the
    /// new-session floor.
    pub target: Option<usize>,
    pub outcome: FusionOutcome,
}

fn top_k_by(x: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[b].partial_cmp(&x[a]).unwrap().then(a.cmp(&b)));
    idx.truncate(k);
    idx.sort_unstable();
    idx
}

/// Full fusion decision: normalize, fit, gate, threshold with min-keep
/// fallback, then pick the most compatible retained candidate. The fit
/// is skipped for fewer than two candidates or constant scores, where
/// the top `min_keep` candidates are retained directly.
pub fn decide_fusion(scores: &[f64], params: &GateParams) -> Result<GateDecision> {
    if scores.is_empty() {
        return Ok(GateDecision {
            gates: Vec::new(),
            retained: Vec::new(),
            target: None,
            outcome: FusionOutcome::NewSession,
        });
    }
    let x = normalize_scores(scores, params.epsilon)?;
    let lo = scores.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let degenerate = scores.len() < 2 || lo == hi;

    let (gates, mut retained) = if degenerate {
        (vec![0.5; x.len()], top_k_by(&x, params.min_keep))
    } else {
        let mixture = fit_beta_mixture(&x, params.em_iters)?;
        let gates = x.iter().map(|&v| gate(&mixture, v)).collect::<Result<Vec<f64>>>()?;
        let retained: Vec<usize> =
            (0..x.len()).filter(|&i| gates[i] >= params.tau).collect();
        (gates, retained)
    };
    if retained.len() < params.min_keep {
        retained = top_k_by(&x, params.min_keep);
    }

    let mut target = retained[0];
    for &i in &retained[1..] {
        if x[i] > x[target] {
            target = i;
        }
    }
    let outcome = if scores[target] < params.score_floor {
        FusionOutcome::NewSession
    } else {
        FusionOutcome::Merge { candidate: target }
    };
    Ok(GateDecision { gates, retained, target: Some(target), outcome })
}

/// Fusion policy: the Beta-mixture gate, or a fixed cosine threshold
/// for the gate-ablated configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FusionPolicy {
    Bmm(GateParams),
    /// Merge into the best candidate when its raw score reaches the
    /// threshold, otherwise open a new session.
    CosineThreshold(f64),
}

impl FusionPolicy {
    pub fn decide(&self, scores: &[f64]) -> Result<GateDecision> {
        match self {
            FusionPolicy::Bmm(params) => decide_fusion(scores, params),
            FusionPolicy::CosineThreshold(threshold) => {
                if scores.is_empty() {
                    return Ok(GateDecision {
                        gates: Vec::new(),
                        retained: Vec::new(),
                        target: None,
                        outcome: FusionOutcome::NewSession,
                    });
                }
                let mut best = 0;
                for (i, s) in scores.iter().enumerate() {
                    if *s > scores[best] {
                        best = i;
                    }
                }
                let gates = scores.iter().map(|s| s.clamp(0.0, 1.0)).collect();
                if scores[best] >= *threshold {
                    Ok(GateDecision {
                        gates,
                        retained: vec![best],
                        target: Some(best),
                        outcome: FusionOutcome::Merge { candidate: best },
                    })
                } else {
                    Ok(GateDecision {
                        gates,
                        retained: Vec::new(),
                        target: None,
                        outcome: FusionOutcome::NewSession,
                    })
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn default_params() -> GateParams {
        GateParams::from(&EngineConfig::default())
    }

    #[test]
    fn normalize_constant_scores() {
        let out = normalize_scores(&[0.3, 0.3, 0.3], 1e-3).unwrap();
        assert_eq!(out, vec![0.5, 0.5, 0.5]);
    }

    #[test]
    fn normalize_formula() {
        let out = normalize_scores(&[0.0, 1.0], 0.01).unwrap();
        assert!((out[0] - 0.01).abs() < 1e-12);
        assert!((out[1] - 0.99).abs() < 1e-12);
        assert!(normalize_scores(&[], 0.01).is_err());
    }

    #[test]
    fn ln_gamma_reference_values() {
        // Frozen against a high-precision evaluation.
        let cases = [
            (0.01, 4.599_479_878_042_021_7),
            (0.02, 3.900_804_516_098_376),
            (0.5, 0.572_364_942_924_700_1),
            (1.0, 0.0),
            (1.5, -0.120_782_237_635_245_22),
            (2.0, 0.0),
            (5.0, 3.178_053_830_347_945_6),
            (10.5, 13.940_625_219_403_764),
            (1e4, 82_099.717_496_442_38),
        ];
        for (x, expected) in cases {
            assert!(
                (ln_gamma(x) - expected).abs() < 1e-8 * expected.abs().max(1.0),
                "ln_gamma({x}) = {} != {expected}",
                ln_gamma(x)
            );
        }
    }

    #[test]
    fn log_beta_pdf_known_points() {
        assert!(log_beta_pdf(0.5, 1.0, 1.0).unwrap().abs() < 1e-12);
        let expected = 1.5_f64.ln();
        assert!((log_beta_pdf(0.5, 2.0, 2.0).unwrap() - expected).abs() < 1e-10);
        assert!(log_beta_pdf(0.0, 2.0, 2.0).is_err());
        assert!(log_beta_pdf(1.0, 2.0, 2.0).is_err());
    }

    #[test]
    fn beta_pdf_integrates_to_one() {
        // Midpoint quadrature over 1e4 points for Beta(2, 5).
        let grid = 10_000;
        let total: f64 = (0..grid)
            .map(|i| {
                let x = (i as f64 + 0.5) / grid as f64;
                log_beta_pdf(x, 2.0, 5.0).unwrap().exp()
            })
            .sum::<f64>()
            / grid as f64;
        assert!((total - 1.0).abs() < 1e-3, "integral = {total}");
    }

    #[test]
    fn bimodal_fit_recovers_regimes() {
        let x = [0.01, 0.0854, 0.9146, 0.99];
        let (m, trace) = fit_beta_mixture_traced(&x, 50).unwrap();
        assert!(m.mean_high() > 0.8, "high mean {}", m.mean_high());
        assert!(m.mean_low() < 0.2, "low mean {}", m.mean_low());
        assert!((m.pi - 0.5).abs() < 0.1, "pi {}", m.pi);
        // Independent reference run of the same algorithm.
        assert!((m.mean_low() - 0.047_701_757).abs() < 1e-6);
        assert!((m.mean_high() - 0.952_298_243).abs() < 1e-6);
        for pair in trace.log_likelihood.windows(2) {
            assert!(pair[1] >= pair[0] - 1e-9);
        }
    }

    #[test]
    fn degenerate_fit_is_single_regime() {
        let x = [0.5; 8];
        let m = fit_beta_mixture(&x, 50).unwrap();
        assert!((m.mean_low() - 0.5).abs() < 1e-6);
        assert!((m.mean_high() - 0.5).abs() < 1e-6);
        assert_eq!(m.pi, 0.5);
    }

    #[test]
    fn fit_rejects_bad_input() {
        assert!(matches!(
            fit_beta_mixture(&[0.5], 50),
            Err(Error::InputTooSmall { .. })
        ));
        assert!(matches!(
            fit_beta_mixture(&[0.5, 1.2], 50),
            Err(Error::Domain { .. })
        ));
    }

    #[test]
    fn gate_symmetric_mixture() {
        let m = BetaMixture { pi: 0.5, alpha0: 2.0, beta0: 8.0, alpha1: 8.0, beta1: 2.0 };
        assert!((gate(&m, 0.5).unwrap() - 0.5).abs() < 1e-12);
        assert!(gate(&m, 0.9).unwrap() > 0.95);
    }

    #[test]
    fn gate_monotone_on_separated_mixture() {
        let m = BetaMixture { pi: 0.5, alpha0: 2.0, beta0: 8.0, alpha1: 8.0, beta1: 2.0 };
        let mut prev = 0.0;
        for i in 1..100 {
            let x = i as f64 / 100.0;
            let g = gate(&m, x).unwrap();
            assert!(g >= prev - 1e-12, "gate not monotone at {x}");
            prev = g;
        }
    }

    #[test]
    fn decide_fusion_spec_case() {
        let decision = decide_fusion(&[0.2, 0.25, 0.8, 0.85], &default_params()).unwrap();
        assert_eq!(decision.retained, vec![2, 3]);
        assert_eq!(decision.outcome, FusionOutcome::Merge { candidate: 3 });
    }

    #[test]
    fn decide_fusion_single_candidate() {
        let decision = decide_fusion(&[0.9], &default_params()).unwrap();
        assert_eq!(decision.retained, vec![0]);
        assert_eq!(decision.outcome, FusionOutcome::Merge { candidate: 0 });
    }

    #[test]
    fn decide_fusion_floor_forces_new_session() {
        let decision = decide_fusion(&[0.05, 0.06], &default_params()).unwrap();
        assert_eq!(decision.outcome, FusionOutcome::NewSession);
        assert_eq!(decision.target, Some(1));
    }

    #[test]
    fn decide_fusion_empty_scores() {
        let decision = decide_fusion(&[], &default_params()).unwrap();
        assert_eq!(decision.outcome, FusionOutcome::NewSession);
        assert!(decision.retained.is_empty());
    }

    #[test]
    fn cosine_threshold_policy() {
        let policy = FusionPolicy::CosineThreshold(0.5);
        let d = policy.decide(&[0.2, 0.7, 0.4]).unwrap();
        assert_eq!(d.outcome, FusionOutcome::Merge { candidate: 1 });
        let d = policy.decide(&[0.2, 0.3]).unwrap();
        assert_eq!(d.outcome, FusionOutcome::NewSession);
    }

    proptest! {
        #[test]
        fn normalized_strictly_inside_unit(scores in prop::collection::vec(-1e3..1e3f64, 1..40)) {
            let x = normalize_scores(&scores, 1e-3).unwrap();
            for v in x {
                prop_assert!(v > 0.0 && v < 1.0);
            }
        }

        #[test]
        fn gate_and_low_posterior_sum_to_one(
            x in 0.001..0.999f64,
            a0 in 0.05..50.0f64, b0 in 0.05..50.0f64,
            a1 in 0.05..50.0f64, b1 in 0.05..50.0f64,
            pi in 0.01..0.99f64,
        ) {
            let m = BetaMixture { pi, alpha0: a0, beta0: b0, alpha1: a1, beta1: b1 };
            let high = gate(&m, x).unwrap();
            let low = posterior_low(&m, x).unwrap();
            prop_assert!((high + low - 1.0).abs() < 1e-12);
        }

        #[test]
        fn min_keep_always_honored(
            scores in prop::collection::vec(0.0..1.0f64, 1..20),
            min_keep in 1..4usize,
        ) {
            let params = GateParams { min_keep, ..default_params() };
            let d = decide_fusion(&scores, &params).unwrap();
            prop_assert!(d.retained.len() >= min_keep.min(scores.len()));
        }

        #[test]
        fn fit_keeps_invariants(scores in prop::collection::vec(0.0..1.0f64, 2..64)) {
            let x = normalize_scores(&scores, 1e-3).unwrap();
            let (m, trace) = fit_beta_mixture_traced(&x, 50).unwrap();
            prop_assert!(m.pi >= 1e-6 && m.pi <= 1.0 - 1e-6);
            prop_assert!(m.mean_high() >= m.mean_low());
            for shape in [m.alpha0, m.beta0, m.alpha1, m.beta1] {
                prop_assert!((SHAPE_MIN..=SHAPE_MAX).contains(&shape));
            }
            for pair in trace.log_likelihood.windows(2) {
                prop_assert!(pair[1] >= pair[0] - 1e-6);
            }
        }

        #[test]
        fn affine_rescaling_preserves_retained_and_target(
            scores in prop::collection::vec(0.0..1.0f64, 2..20),
            a in 0.1..10.0f64,
            b in -5.0..5.0f64,
        ) {
            let params = default_params();
            let before = decide_fusion(&scores, &params).unwrap();
            let rescaled: Vec<f64> = scores.iter().map(|s| a * s + b).collect();
            let after = decide_fusion(&rescaled, &params).unwrap();
            prop_assert_eq!(before.retained, after.retained);
            prop_assert_eq!(before.target, after.target);
        }
    }
}
