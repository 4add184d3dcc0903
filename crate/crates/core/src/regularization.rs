//! KL/entropy-regularized utilities, closed-form Gibbs best responses, and
//! equilibrium computation by best-response fixed point.
//!
//! The regularized utility of each player adds `-tau * KL(pi || pi0)` and
//! `+c_h * H(pi)` to the expected payoff. Because the KL-regularized linear
//! objective has a Gibbs-form maximizer, best responses are available in
//! closed form; every exponential here is evaluated in log domain with a
//! max shift so that temperatures as small as 0.01 (weights spanning
//! hundreds of orders of magnitude) stay finite.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{
    detector_action_values, expected_utilities, generator_action_values, validate_rows,
    AdversarialGame, DetectorStrategy, GeneratorStrategy, JointStrategy,
};

/// How the detector's per-action Bernoulli KL/entropy terms aggregate into
/// a single scalar.
///
/// `Visitation` weights each action's term by `p(s) * pi(a|s)`, matching
/// the expectation structure of the payoff. `Uniform` weights by
/// `p(s) / n_actions(s)` instead.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectorRegWeighting {
    #[default]
    Visitation,
    Uniform,
}

/// Temperatures and reference policies for the regularized game.
#[derive(Debug, Clone)]
pub struct RegularizationConfig {
    pub tau: f64,
    pub c_h: f64,
    pub generator_reference: GeneratorStrategy,
    pub detector_reference: DetectorStrategy,
    pub detector_weighting: DetectorRegWeighting,
    /// Optional asymmetric temperatures for the detector; `None` means the
    /// shared `tau`/`c_h` apply to both players.
    pub detector_tau: Option<f64>,
    pub detector_c_h: Option<f64>,
}

impl RegularizationConfig {
    pub fn new(
        tau: f64,
        c_h: f64,
        generator_reference: GeneratorStrategy,
        detector_reference: DetectorStrategy,
    ) -> Result<Self> {
        let cfg = RegularizationConfig {
            tau,
            c_h,
            generator_reference,
            detector_reference,
            detector_weighting: DetectorRegWeighting::default(),
            detector_tau: None,
            detector_c_h: None,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Uniform generator reference and constant detector reference 0.5.
    pub fn uniform(game: &AdversarialGame, tau: f64, c_h: f64) -> Result<Self> {
        RegularizationConfig::new(
            tau,
            c_h,
            GeneratorStrategy::uniform(game),
            DetectorStrategy::constant(game, 0.5)?,
        )
    }

    pub fn with_detector_weighting(mut self, w: DetectorRegWeighting) -> Self {
        self.detector_weighting = w;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) || !self.tau.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "tau must be > 0, got {}",
                self.tau
            )));
        }
        if !(self.c_h >= 0.0) || !self.c_h.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "c_h must be >= 0, got {}",
                self.c_h
            )));
        }
        if let Some(t) = self.detector_tau {
            if !(t > 0.0) {
                return Err(Error::InvalidArgument("detector_tau must be > 0".into()));
            }
        }
        if let Some(c) = self.detector_c_h {
            if !(c >= 0.0) {
                return Err(Error::InvalidArgument("detector_c_h must be >= 0".into()));
            }
        }
        // Full support of references, checked in log domain: every log
        // probability must be finite.
        for (s, row) in self.generator_reference.rows.iter().enumerate() {
            for &p in row {
                if !p.ln().is_finite() {
                    return Err(Error::InvalidArgument(format!(
                        "generator reference row {s} lacks full support (entry {p})"
                    )));
                }
            }
        }
        for (s, row) in self.detector_reference.rows.iter().enumerate() {
            for &q in row {
                if !q.ln().is_finite() || !(1.0 - q).ln().is_finite() {
                    return Err(Error::InvalidArgument(format!(
                        "detector reference row {s} lacks full support (entry {q})"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn validate_for(&self, game: &AdversarialGame) -> Result<()> {
        self.validate()?;
        validate_rows("generator reference", &self.generator_reference.rows, game)?;
        validate_rows("detector reference", &self.detector_reference.rows, game)?;
        Ok(())
    }

    pub fn detector_tau(&self) -> f64 {
        self.detector_tau.unwrap_or(self.tau)
    }

    pub fn detector_c_h(&self) -> f64 {
        self.detector_c_h.unwrap_or(self.c_h)
    }

    /// Aggregation weight of the detector's regularization term for one
    /// action, given the context weight, action count, and pi(a|s).
    pub(crate) fn detector_reg_weight(&self, ctx_weight: f64, n_actions: usize, pi: f64) -> f64 {
        match self.detector_weighting {
            DetectorRegWeighting::Visitation => ctx_weight * pi,
            DetectorRegWeighting::Uniform => ctx_weight / n_actions as f64,
        }
    }
}

/// KL(p || q) with the convention 0 * log(0/q) = 0.
///
/// Returns an `InfiniteDivergence` error when q assigns zero mass to a
/// point where p does not.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::InvalidArgument(format!(
            "kl_divergence length mismatch: {} vs {}",
            p.len(),
            q.len()
        )));
    }
    let sum: f64 = p.iter().sum();
    if p.iter().any(|&x| x < 0.0) || (sum - 1.0).abs() > 1e-8 {
        return Err(Error::InvalidArgument(
            "kl_divergence: p is not on the probability simplex".into(),
        ));
    }
    let mut acc = 0.0;
    for (&pi, &qi) in p.iter().zip(q) {
        if pi > 0.0 {
            if qi <= 0.0 {
                return Err(Error::InfiniteDivergence(
                    "q assigns zero mass where p > 0".into(),
                ));
            }
            acc += pi * (pi.ln() - qi.ln());
        }
    }
    Ok(acc.max(0.0))
}

/// Shannon entropy -sum p log p with 0 log 0 = 0.
pub fn shannon_entropy(p: &[f64]) -> f64 {
    let mut acc = 0.0;
    for &pi in p {
        if pi > 0.0 {
            acc -= pi * pi.ln();
        }
    }
    acc.max(0.0)
}

/// Residual of the identity -KL(p||p0) = H(p) + sum_a p(a) log p0(a).
/// Exact arithmetic would give zero.
pub fn kl_entropy_identity_residual(p: &[f64], p0: &[f64]) -> f64 {
    let kl = kl_divergence(p, p0).unwrap_or(f64::INFINITY);
    let cross: f64 = p
        .iter()
        .zip(p0)
        .map(|(&pi, &qi)| if pi > 0.0 { pi * qi.ln() } else { 0.0 })
        .sum();
    (-kl - (shannon_entropy(p) + cross)).abs()
}

pub(crate) fn bernoulli_kl(q: f64, q0: f64) -> f64 {
    let mut acc = 0.0;
    if q > 0.0 {
        acc += q * (q.ln() - q0.ln());
    }
    if q < 1.0 {
        acc += (1.0 - q) * ((1.0 - q).ln() - (1.0 - q0).ln());
    }
    acc.max(0.0)
}

pub(crate) fn bernoulli_entropy(q: f64) -> f64 {
    let mut acc = 0.0;
    if q > 0.0 {
        acc -= q * q.ln();
    }
    if q < 1.0 {
        acc -= (1.0 - q) * (1.0 - q).ln();
    }
    acc.max(0.0)
}

/// Closed-form maximizer of a KL-regularized linear objective, kept in log
/// domain.
#[derive(Debug, Clone)]
pub struct GibbsSolution {
    pub distribution: Vec<f64>,
    /// Per-action log of the unnormalized weight.
    pub log_weights: Vec<f64>,
    /// log Z computed by max-shifted log-sum-exp.
    pub log_normalizer: f64,
}

impl GibbsSolution {
    /// Exact log probabilities; finite even when the linear-domain entries
    /// underflow.
    pub fn log_probabilities(&self) -> Vec<f64> {
        self.log_weights
            .iter()
            .map(|lw| lw - self.log_normalizer)
            .collect()
    }
}

/// Maximizer of sum pi(a) V(a) - temperature * KL(pi || p0) over the
/// simplex: pi*(a) proportional to p0(a) * exp(V(a)/temperature).
pub fn gibbs_best_response(
    values: &[f64],
    reference: &[f64],
    temperature: f64,
) -> Result<GibbsSolution> {
    if !(temperature > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "gibbs temperature must be > 0, got {temperature}"
        )));
    }
    regularized_best_response(values, reference, temperature, 0.0)
}

/// Maximizer of sum pi V - tau KL(pi||p0) + c_h H(pi).
///
/// Via the KL/entropy identity this is a Gibbs distribution at effective
/// temperature T = tau + c_h with tempered reference p0^(tau/T):
/// pi*(a) proportional to exp((V(a) + tau log p0(a)) / T).
pub fn regularized_best_response(
    values: &[f64],
    reference: &[f64],
    tau: f64,
    c_h: f64,
) -> Result<GibbsSolution> {
    if values.len() != reference.len() || values.is_empty() {
        return Err(Error::InvalidArgument(
            "values and reference must have equal nonzero length".into(),
        ));
    }
    if !(tau >= 0.0) || !(c_h >= 0.0) || !(tau + c_h > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "temperatures must satisfy tau >= 0, c_h >= 0, tau + c_h > 0 (got {tau}, {c_h})"
        )));
    }
    let t = tau + c_h;
    let mut log_w = Vec::with_capacity(values.len());
    for (&v, &p0) in values.iter().zip(reference) {
        if !v.is_finite() {
            return Err(Error::InvalidArgument("non-finite value in V".into()));
        }
        let lp0 = p0.ln();
        if !lp0.is_finite() {
            return Err(Error::InvalidArgument(
                "reference lacks full support".into(),
            ));
        }
        log_w.push((v + tau * lp0) / t);
    }
    let m = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = log_w.iter().map(|lw| (lw - m).exp()).sum();
    let log_normalizer = m + z.ln();
    let distribution = log_w.iter().map(|lw| (lw - log_normalizer).exp()).collect();
    Ok(GibbsSolution {
        distribution,
        log_weights: log_w,
        log_normalizer,
    })
}

/// Two-outcome Gibbs best response for one detector action.
///
/// `scale` multiplies the payoff values relative to the regularizer; under
/// visitation weighting the action's visitation weight cancels and the
/// scale is exactly 1.
fn detector_point_best_response(
    q0: f64,
    value_correct: f64,
    value_incorrect: f64,
    scale: f64,
    tau: f64,
    c_h: f64,
) -> Result<GibbsSolution> {
    regularized_best_response(
        &[scale * value_correct, scale * value_incorrect],
        &[q0, 1.0 - q0],
        tau,
        c_h,
    )
}

/// Per-action Gibbs best response of the detector against a fixed
/// generator. Actions with zero regularization weight keep their reference
/// probability.
pub fn detector_gibbs_best_response(
    game: &AdversarialGame,
    reg: &RegularizationConfig,
    generator: &GeneratorStrategy,
) -> Result<DetectorStrategy> {
    let (strategy, _) = detector_best_response_with_logs(game, reg, generator)?;
    Ok(strategy)
}

fn detector_best_response_with_logs(
    game: &AdversarialGame,
    reg: &RegularizationConfig,
    generator: &GeneratorStrategy,
) -> Result<(DetectorStrategy, Vec<Vec<(f64, f64)>>)> {
    reg.validate_for(game)?;
    validate_rows("generator", &generator.rows, game)?;
    let values = detector_action_values(game, generator)?;
    let tau = reg.detector_tau();
    let c_h = reg.detector_c_h();
    let mut rows = Vec::with_capacity(game.num_contexts());
    let mut logs = Vec::with_capacity(game.num_contexts());
    for (s, ctx) in game.contexts().iter().enumerate() {
        let n = ctx.actions.len();
        let mut row = Vec::with_capacity(n);
        let mut log_row = Vec::with_capacity(n);
        for (a, dv) in values[s].iter().enumerate() {
            let q0 = reg.detector_reference.prob_correct(s, a);
            let reg_w = reg.detector_reg_weight(ctx.weight, n, generator.prob(s, a));
            if reg_w <= 0.0 {
                // No payoff or regularization signal reaches this action.
                row.push(q0);
                log_row.push((q0.ln(), (1.0 - q0).ln()));
            } else {
                let scale = dv.weight / reg_w;
                let sol =
                    detector_point_best_response(q0, dv.value_correct, dv.value_incorrect, scale, tau, c_h)?;
                let lp = sol.log_probabilities();
                row.push(sol.distribution[0]);
                log_row.push((lp[0], lp[1]));
            }
        }
        rows.push(row);
        logs.push(log_row);
    }
    Ok((DetectorStrategy::new(rows)?, logs))
}

fn generator_best_response_with_logs(
    game: &AdversarialGame,
    reg: &RegularizationConfig,
    detector: &DetectorStrategy,
) -> Result<(GeneratorStrategy, Vec<Vec<f64>>)> {
    let values = generator_action_values(game, detector)?;
    let mut rows = Vec::with_capacity(game.num_contexts());
    let mut logs = Vec::with_capacity(game.num_contexts());
    for (s, v) in values.iter().enumerate() {
        let sol = regularized_best_response(v, &reg.generator_reference.rows[s], reg.tau, reg.c_h)?;
        logs.push(sol.log_probabilities());
        rows.push(sol.distribution);
    }
    Ok((GeneratorStrategy { rows }, logs))
}

/// Regularized utilities (U'_G, U'_R) of a joint strategy.
pub fn regularized_utilities(
    game: &AdversarialGame,
    reg: &RegularizationConfig,
    joint: &JointStrategy,
) -> Result<(f64, f64)> {
    reg.validate_for(game)?;
    joint.validate_for(game)?;
    let (u_g, u_r) = expected_utilities(game, joint)?;

    let mut gen_kl = 0.0;
    let mut gen_h = 0.0;
    for (s, ctx) in game.contexts().iter().enumerate() {
        gen_kl += ctx.weight
            * kl_divergence(&joint.generator.rows[s], &reg.generator_reference.rows[s])?;
        gen_h += ctx.weight * shannon_entropy(&joint.generator.rows[s]);
    }

    let mut det_kl = 0.0;
    let mut det_h = 0.0;
    for (s, ctx) in game.contexts().iter().enumerate() {
        let n = ctx.actions.len();
        for a in 0..n {
            let w = reg.detector_reg_weight(ctx.weight, n, joint.generator.prob(s, a));
            let q = joint.detector.prob_correct(s, a);
            let q0 = reg.detector_reference.prob_correct(s, a);
            det_kl += w * bernoulli_kl(q, q0);
            det_h += w * bernoulli_entropy(q);
        }
    }

    Ok((
        u_g - reg.tau * gen_kl + reg.c_h * gen_h,
        u_r - reg.detector_tau() * det_kl + reg.detector_c_h() * det_h,
    ))
}

/// Result of the best-response fixed-point solver.
#[derive(Debug, Clone)]
pub struct EquilibriumResult {
    pub joint: JointStrategy,
    /// Exact log probabilities of the returned generator rows.
    pub generator_log_probs: Vec<Vec<f64>>,
    /// Exact (log q, log(1-q)) of the returned detector entries.
    pub detector_log_probs: Vec<Vec<(f64, f64)>>,
    pub iterations: usize,
    /// Final sup-norm change of the joint strategy.
    pub residual: f64,
    pub converged: bool,
    /// Exploitability of the returned joint (the certificate recorded in
    /// the output).
    pub exploitability: f64,
}

/// Alternating exact Gibbs best responses (generator then detector) until
/// the sup-norm change of the joint strategy drops below `tol`.
///
/// Non-convergence within `max_iter` is not an error: the last iterate is
/// returned flagged as unconverged.
pub fn equilibrium_fixed_point(
    game: &AdversarialGame,
    reg: &RegularizationConfig,
    tol: f64,
    max_iter: usize,
) -> Result<EquilibriumResult> {
    equilibrium_fixed_point_damped(game, reg, tol, max_iter, 1.0)
}

/// Fixed-point iteration with averaging z <- (1-beta) z + beta BR(z);
/// beta = 1 is the pure best-response iteration.
pub fn equilibrium_fixed_point_damped(
    game: &AdversarialGame,
    reg: &RegularizationConfig,
    tol: f64,
    max_iter: usize,
    beta: f64,
) -> Result<EquilibriumResult> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument("tol must be > 0".into()));
    }
    if max_iter < 1 {
        return Err(Error::InvalidArgument("max_iter must be >= 1".into()));
    }
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::InvalidArgument("damping beta must be in (0, 1]".into()));
    }
    reg.validate_for(game)?;

    let mut generator = reg.generator_reference.clone();
    let mut detector = reg.detector_reference.clone();
    let mut gen_logs: Vec<Vec<f64>> = generator
        .rows
        .iter()
        .map(|r| r.iter().map(|p| p.ln()).collect())
        .collect();
    let mut det_logs: Vec<Vec<(f64, f64)>> = detector
        .rows
        .iter()
        .map(|r| r.iter().map(|&q| (q.ln(), (1.0 - q).ln())).collect())
        .collect();

    let mut residual = f64::INFINITY;
    let mut converged = false;
    let mut iterations = 0;
    for it in 1..=max_iter {
        iterations = it;
        let (gen_br, gen_br_logs) = generator_best_response_with_logs(game, reg, &detector)?;
        let (new_gen, new_gen_logs) = if beta >= 1.0 {
            (gen_br, gen_br_logs)
        } else {
            let rows: Vec<Vec<f64>> = generator
                .rows
                .iter()
                .zip(&gen_br.rows)
                .map(|(old, br)| {
                    old.iter()
                        .zip(br)
                        .map(|(o, b)| (1.0 - beta) * o + beta * b)
                        .collect()
                })
                .collect();
            let logs = rows
                .iter()
                .map(|r| r.iter().map(|p| p.ln()).collect())
                .collect();
            (GeneratorStrategy { rows }, logs)
        };

        let (det_br, det_br_logs) = detector_best_response_with_logs(game, reg, &new_gen)?;
        let (new_det, new_det_logs) = if beta >= 1.0 {
            (det_br, det_br_logs)
        } else {
            let rows: Vec<Vec<f64>> = detector
                .rows
                .iter()
                .zip(&det_br.rows)
                .map(|(old, br)| {
                    old.iter()
                        .zip(br)
                        .map(|(o, b)| (1.0 - beta) * o + beta * b)
                        .collect()
                })
                .collect();
            let logs = rows
                .iter()
                .map(|r| r.iter().map(|&q: &f64| (q.ln(), (1.0 - q).ln())).collect())
                .collect();
            (DetectorStrategy::new(rows)?, logs)
        };

        residual = 0.0f64;
        for (old, new) in generator.rows.iter().zip(&new_gen.rows) {
            for (o, n) in old.iter().zip(new) {
                residual = residual.max((o - n).abs());
            }
        }
        for (old, new) in detector.rows.iter().zip(&new_det.rows) {
            for (o, n) in old.iter().zip(new) {
                residual = residual.max((o - n).abs());
            }
        }
        generator = new_gen;
        detector = new_det;
        gen_logs = new_gen_logs;
        det_logs = new_det_logs;
        if residual < tol {
            converged = true;
            break;
        }
    }
    let joint = JointStrategy::new(generator, detector);
    let expl = exploitability(game, reg, &joint)?;
    Ok(EquilibriumResult {
        joint,
        generator_log_probs: gen_logs,
        detector_log_probs: det_logs,
        iterations,
        residual,
        converged,
        exploitability: expl,
    })
}

/// Report of the full-support check.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FullSupportReport {
    pub full_support: bool,
    pub min_log_probability: f64,
}

impl EquilibriumResult {
    /// Full-support check over the solver's exact log probabilities. This
    /// is the log-domain form: at tau = 0.01 a detector parameter of
    /// 1 - e^-200 rounds to 1.0 in linear floats, but its log-Bernoulli
    /// pair stays finite here.
    pub fn full_support_report(&self) -> FullSupportReport {
        let mut min_log = f64::INFINITY;
        for row in &self.generator_log_probs {
            for &l in row {
                min_log = min_log.min(l);
            }
        }
        for row in &self.detector_log_probs {
            for &(l1, l0) in row {
                min_log = min_log.min(l1).min(l0);
            }
        }
        FullSupportReport {
            full_support: min_log.is_finite(),
            min_log_probability: min_log,
        }
    }
}

/// True iff every generator log probability and every detector
/// log-Bernoulli parameter is finite. Performed in log domain: a
/// probability of e^-200 passes.
pub fn full_support_check(joint: &JointStrategy, game: &AdversarialGame) -> Result<FullSupportReport> {
    joint.validate_for(game)?;
    let mut min_log = f64::INFINITY;
    for row in &joint.generator.rows {
        for &p in row {
            min_log = min_log.min(p.ln());
        }
    }
    for row in &joint.detector.rows {
        for &q in row {
            min_log = min_log.min(q.ln()).min((1.0 - q).ln());
        }
    }
    Ok(FullSupportReport {
        full_support: min_log.is_finite(),
        min_log_probability: min_log,
    })
}

/// Generator-side regularized objective of one context, with the context
/// weight factored out.
fn generator_context_objective(pi: &[f64], v: &[f64], p0: &[f64], tau: f64, c_h: f64) -> f64 {
    let payoff: f64 = pi.iter().zip(v).map(|(p, v)| p * v).sum();
    let mut kl = 0.0;
    for (&p, &r) in pi.iter().zip(p0) {
        if p > 0.0 {
            kl += p * (p.ln() - r.ln());
        }
    }
    payoff - tau * kl + c_h * shannon_entropy(pi)
}

/// Detector-side regularized objective of one action.
fn detector_action_objective(
    q: f64,
    q0: f64,
    value_correct: f64,
    value_incorrect: f64,
    payoff_w: f64,
    reg_w: f64,
    tau: f64,
    c_h: f64,
) -> f64 {
    payoff_w * (q * value_correct + (1.0 - q) * value_incorrect)
        - reg_w * (tau * bernoulli_kl(q, q0) - c_h * bernoulli_entropy(q))
}

/// Stationarity certificate: the larger of the two players' closed-form
/// best-response improvements over the current regularized utility.
///
/// Zero (up to tolerance) certifies an approximate Nash equilibrium of the
/// regularized game.
pub fn exploitability(
    game: &AdversarialGame,
    reg: &RegularizationConfig,
    joint: &JointStrategy,
) -> Result<f64> {
    reg.validate_for(game)?;
    joint.validate_for(game)?;

    // Generator gain.
    let values = generator_action_values(game, &joint.detector)?;
    let mut gain_g = 0.0;
    for (s, ctx) in game.contexts().iter().enumerate() {
        let p0 = &reg.generator_reference.rows[s];
        let sol = regularized_best_response(&values[s], p0, reg.tau, reg.c_h)?;
        let best = generator_context_objective(&sol.distribution, &values[s], p0, reg.tau, reg.c_h);
        let cur =
            generator_context_objective(&joint.generator.rows[s], &values[s], p0, reg.tau, reg.c_h);
        gain_g += ctx.weight * (best - cur);
    }

    // Detector gain; separable per action.
    let dtau = reg.detector_tau();
    let dch = reg.detector_c_h();
    let dvals = detector_action_values(game, &joint.generator)?;
    let mut gain_r = 0.0;
    for (s, ctx) in game.contexts().iter().enumerate() {
        let n = ctx.actions.len();
        for (a, dv) in dvals[s].iter().enumerate() {
            let q0 = reg.detector_reference.prob_correct(s, a);
            let reg_w = reg.detector_reg_weight(ctx.weight, n, joint.generator.prob(s, a));
            let q_best = if reg_w <= 0.0 {
                if dv.weight <= 0.0 {
                    continue; // the action contributes nothing either way
                }
                if dv.value_correct > dv.value_incorrect {
                    1.0
                } else {
                    0.0
                }
            } else {
                let scale = dv.weight / reg_w;
                detector_point_best_response(q0, dv.value_correct, dv.value_incorrect, scale, dtau, dch)?
                    .distribution[0]
            };
            let q = joint.detector.prob_correct(s, a);
            gain_r += detector_action_objective(
                q_best,
                q0,
                dv.value_correct,
                dv.value_incorrect,
                dv.weight,
                reg_w,
                dtau,
                dch,
            ) - detector_action_objective(
                q,
                q0,
                dv.value_correct,
                dv.value_incorrect,
                dv.weight,
                reg_w,
                dtau,
                dch,
            );
        }
    }
    Ok(gain_g.max(gain_r).max(0.0))
}
