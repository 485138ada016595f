//! Double-loop primal-dual solver for discounted linear MDPs.
//!
//! The inner loop runs projected stochastic gradient descent on `θ`, the
//! outer loop takes one projected ascent step on the reparametrized dual
//! variable `β`, and the policy is a softmax over the running sum of the
//! `θ` averages (exponential weights).

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linmdp::{policy_values, state_average, FeatureBounds, LinearMDP, Policy, Setting};
use crate::numerics::project_ball_in_place;
use crate::rng::{stream_rng, Stream};
use crate::sampling::{Covariance, SampleSource, Transition};
use crate::solver::{
    attach_diagnostics, axpy, check_budget, check_exponent, dot, EstimatorContext, GapContext,
    Iterate, RoundDiag, RoundTerms, Workspace,
};
pub use crate::solver::{GapReport, Iterates, Oracle, SolverResult, TraceRow};

fn default_eval_every() -> usize {
    1
}

/// Step sizes, radii and loop lengths of one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    /// Outer iterations `T`.
    #[serde(rename = "T")]
    pub outer: usize,
    /// Samples per outer iteration `K` (`K - 1` inner steps plus one dual step).
    #[serde(rename = "K")]
    pub inner: usize,
    pub c: f64,
    pub alpha: f64,
    pub zeta: f64,
    pub eta: f64,
    pub d_theta: f64,
    pub d_beta: f64,
    #[serde(default = "default_eval_every")]
    pub eval_every: usize,
    /// Seeds the solver's own randomness; the harness overrides it per run.
    #[serde(default)]
    pub seed: u64,
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        validate_common(
            self.outer,
            self.inner,
            self.c,
            &[("alpha", self.alpha), ("zeta", self.zeta), ("eta", self.eta)],
            self.d_theta,
            self.d_beta,
            self.eval_every,
        )
    }

    /// Dataset records consumed by a run: `T·K`.
    pub fn samples_needed(&self) -> usize {
        self.outer * self.inner
    }
}

/// Shared configuration checks. Step sizes may be zero (a frozen variable),
/// but not negative.
pub(crate) fn validate_common(
    outer: usize,
    inner: usize,
    c: f64,
    steps: &[(&str, f64)],
    d_theta: f64,
    d_beta: f64,
    eval_every: usize,
) -> Result<()> {
    if outer == 0 || inner == 0 {
        return Err(Error::ConfigInvalid("T and K must be at least 1".into()));
    }
    check_exponent(c)?;
    for (name, v) in steps {
        if !(v.is_finite() && *v >= 0.0) {
            return Err(Error::ConfigInvalid(format!(
                "{name} must be finite and nonnegative, got {v}"
            )));
        }
    }
    for (name, r) in [("d_theta", d_theta), ("d_beta", d_beta)] {
        if !(r.is_finite() && r > 0.0) {
            return Err(Error::ConfigInvalid(format!("{name} must be positive, got {r}")));
        }
    }
    if eval_every == 0 {
        return Err(Error::ConfigInvalid("eval_every must be at least 1".into()));
    }
    Ok(())
}

/// What fixes the run length when tuning.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Budget {
    /// Target accuracy of the theoretical bound.
    Epsilon(f64),
    /// Fixed number of outer iterations `T`.
    Outer(usize),
    /// Total sample budget `n`; `T` and `K` are split in the tuned ratio.
    Samples(usize),
}

/// Problem constants that enter the tuned step sizes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TuneInput {
    pub bounds: FeatureBounds,
    pub gamma: f64,
    pub num_actions: usize,
    pub dim: usize,
    pub d_theta: f64,
    pub d_beta: f64,
    pub c: f64,
    /// `‖Λ‖₂`; replaced by `D_φ²` when unknown.
    pub lambda_norm: Option<f64>,
    /// `Tr(Λ)`; replaced by `D_φ²` when unknown.
    pub lambda_trace: Option<f64>,
    pub budget: Budget,
}

/// Tuned constants and the resulting configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tuning {
    pub g_theta_sq: f64,
    pub g_beta_sq: f64,
    /// `K / T` before rounding.
    pub ratio: f64,
    pub config: SolverConfig,
}

/// `‖Λ‖₂^{2c-1}` and `Tr(Λ^{2c-1})` for `c ∈ {1/2, 1}`.
pub(crate) fn lambda_factors(
    c: f64,
    d_phi: f64,
    dim: usize,
    norm: Option<f64>,
    trace: Option<f64>,
) -> (f64, f64) {
    if c == 1.0 {
        (norm.unwrap_or(d_phi * d_phi), trace.unwrap_or(d_phi * d_phi))
    } else {
        (1.0, dim as f64)
    }
}

/// `G²_θ = 3 D_φ² ((1-γ)² + (1+γ²) D_β² ‖Λ‖₂^{2c-1})`.
pub fn g_theta_sq(d_phi: f64, gamma: f64, d_beta: f64, norm_factor: f64) -> f64 {
    3.0 * d_phi * d_phi * ((1.0 - gamma).powi(2) + (1.0 + gamma * gamma) * d_beta * d_beta * norm_factor)
}

/// `G²_β = 3 (1 + (1+γ²) D_φ² D_θ²) Tr(Λ^{2c-1})`.
pub fn g_beta_sq(d_phi: f64, gamma: f64, d_theta: f64, trace_factor: f64) -> f64 {
    3.0 * (1.0 + (1.0 + gamma * gamma) * d_phi * d_phi * d_theta * d_theta) * trace_factor
}

pub(crate) fn policy_step(num_actions: usize, d_phi: f64, d_theta: f64, outer: usize) -> f64 {
    (2.0 * (num_actions as f64).ln()).sqrt() / (d_phi * d_theta * (outer as f64).sqrt())
}

/// Splits a budget into `(T, K)` given the tuned ratio `K / T` and the
/// constant `κ` with `bound = κ / √T`.
pub(crate) fn split_budget(budget: Budget, ratio: f64, kappa: f64, per_round_extra: usize) -> Result<(usize, usize)> {
    let (outer, inner) = match budget {
        Budget::Outer(t) => {
            if t == 0 {
                return Err(Error::ConfigInvalid("T must be at least 1".into()));
            }
            (t, (t as f64 * ratio).ceil().max(1.0) as usize)
        }
        Budget::Epsilon(eps) => {
            if !(eps > 0.0) {
                return Err(Error::ConfigInvalid(format!("epsilon must be positive, got {eps}")));
            }
            let t = (kappa / eps).powi(2).ceil().max(1.0) as usize;
            (t, (t as f64 * ratio).ceil().max(1.0) as usize)
        }
        Budget::Samples(n) => {
            if n <= per_round_extra {
                return Err(Error::ConfigInvalid(format!("sample budget {n} is too small")));
            }
            let t = ((n as f64 / ratio).sqrt().floor() as usize).max(1);
            let k = (n / t).saturating_sub(per_round_extra).max(1);
            // Keep T·(K + extra) within the budget.
            let t = t.min(n / (k + per_round_extra)).max(1);
            (t, k)
        }
    };
    Ok((outer, inner))
}

/// Step sizes and loop lengths from the theoretical guarantee.
pub fn tune(input: &TuneInput) -> Result<Tuning> {
    check_exponent(input.c)?;
    let d_phi = input.bounds.phi;
    let (nf, tf) = lambda_factors(input.c, d_phi, input.dim, input.lambda_norm, input.lambda_trace);
    let g_t = g_theta_sq(d_phi, input.gamma, input.d_beta, nf);
    let g_b = g_beta_sq(d_phi, input.gamma, input.d_theta, tf);
    let log_a = (input.num_actions as f64).ln();
    let (dt, db) = (input.d_theta, input.d_beta);
    let ratio = (2.0 * db * db * g_b + dt * dt * d_phi * d_phi * log_a) / (2.0 * dt * dt * g_t);
    let kappa = 2.0 * db * g_b.sqrt()
        + d_phi * dt * (2.0 * log_a).sqrt()
        + 2.0 * dt * g_t.sqrt() / ratio.sqrt();
    let (outer, inner) = split_budget(input.budget, ratio, kappa, 0)?;
    let config = SolverConfig {
        outer,
        inner,
        c: input.c,
        alpha: policy_step(input.num_actions, d_phi, dt, outer),
        zeta: 2.0 * db / (g_b.sqrt() * (outer as f64).sqrt()),
        eta: 2.0 * dt / (g_t.sqrt() * (inner as f64).sqrt()),
        d_theta: dt,
        d_beta: db,
        eval_every: 1,
        seed: 0,
    };
    Ok(Tuning {
        g_theta_sq: g_t,
        g_beta_sq: g_b,
        ratio,
        config,
    })
}

/// Closed-form upper bounds on the averaged regret terms.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegretBounds {
    pub theta: f64,
    pub beta: f64,
    pub pi: f64,
    /// Average setting only.
    pub rho: Option<f64>,
}

/// `2D_θ²/(ηK) + ηG²_θ/2`, `2D_β²/(ζT) + ζG²_β/2` and
/// `log|A|/(αT) + αD_φ²D_θ²/2`.
pub fn regret_bounds(config: &SolverConfig, tuning: &Tuning, d_phi: f64, num_actions: usize) -> RegretBounds {
    let (t, k) = (config.outer as f64, config.inner as f64);
    let (dt, db) = (config.d_theta, config.d_beta);
    RegretBounds {
        theta: 2.0 * dt * dt / (config.eta * k) + config.eta * tuning.g_theta_sq / 2.0,
        beta: 2.0 * db * db / (config.zeta * t) + config.zeta * tuning.g_beta_sq / 2.0,
        pi: (num_actions as f64).ln() / (config.alpha * t) + config.alpha * d_phi * d_phi * dt * dt / 2.0,
        rho: None,
    }
}

/// Stochastic gradient of the Lagrangian in `θ` from one record:
/// `Φᵀμ̃ - Λ^{c-1}φ(x,a)⟨φ(x,a), β⟩`, where `μ̃` puts mass `(1-γ)π(·|x⁰)` at
/// `x⁰` and `γ⟨φ(x,a), Λ^{c-1}β⟩π(·|x')` at `x'`.
pub fn grad_theta_estimate(
    ctx: &EstimatorContext<'_>,
    sample: &Transition,
    it: &Iterate<'_>,
    ws: &mut Workspace,
    out: &mut [f64],
) -> Result<()> {
    let x0 = sample
        .x0
        .ok_or_else(|| Error::ConfigInvalid("discounted records need an initial state".into()))?;
    let gamma = ctx.gamma();
    out.fill(0.0);
    ctx.policy_at(it.logits, it.alpha, x0, &mut ws.logits, &mut ws.probs);
    ctx.add_policy_features(&ws.probs, x0, 1.0 - gamma, out);
    let phi = ctx.phi(sample.x, sample.a);
    let weight = dot(phi, it.scaled_beta);
    if weight != 0.0 {
        ctx.policy_at(it.logits, it.alpha, sample.x_next, &mut ws.logits, &mut ws.probs);
        ctx.add_policy_features(&ws.probs, sample.x_next, gamma * weight, out);
    }
    axpy(-dot(phi, it.beta), ctx.scaled_phi(sample.x, sample.a), out);
    Ok(())
}

/// Stochastic gradient of the Lagrangian in `β` from one record:
/// `Λ^{c-1}φ(x,a) (r + γ v(x') - ⟨φ(x,a), θ⟩)`.
pub fn grad_beta_estimate(
    ctx: &EstimatorContext<'_>,
    sample: &Transition,
    it: &Iterate<'_>,
    ws: &mut Workspace,
    out: &mut [f64],
) {
    ctx.policy_at(it.logits, it.alpha, sample.x_next, &mut ws.logits, &mut ws.probs);
    let v_next = ctx.state_value(&ws.probs, sample.x_next, it.theta);
    let phi = ctx.phi(sample.x, sample.a);
    let delta = sample.r + ctx.gamma() * v_next - dot(phi, it.theta);
    out.fill(0.0);
    axpy(delta, ctx.scaled_phi(sample.x, sample.a), out);
}

/// Runs the solver. `lambda` is required for `c = 1/2` only; `oracle`
/// enables exact diagnostics in the trace.
pub fn run(
    mdp: &LinearMDP,
    source: &mut dyn SampleSource,
    config: &SolverConfig,
    lambda: Option<&Covariance>,
    oracle: Option<&Oracle<'_>>,
) -> Result<SolverResult> {
    config.validate()?;
    let ctx = EstimatorContext::new(mdp, config.c, lambda)?;
    check_budget(source, config.samples_needed())?;

    let d = mdp.dim();
    let (t_max, k_max) = (config.outer, config.inner);
    let mut ws = Workspace::new(mdp.num_actions());
    let mut grad = vec![0.0; d];
    let mut theta_prev = vec![0.0; d];
    let mut beta = vec![0.0; d];
    let mut acc = vec![0.0; d];

    let mut accumulators = Vec::with_capacity(t_max);
    let mut thetas = Vec::with_capacity(t_max);
    let mut betas = Vec::with_capacity(t_max);

    for _ in 0..t_max {
        let scaled_beta = ctx.precondition(&beta);
        let mut theta = theta_prev.clone();
        let mut sum = theta.clone();
        for _ in 1..k_max {
            let w = source.next_transition()?;
            let it = Iterate {
                logits: &acc,
                alpha: config.alpha,
                beta: &beta,
                scaled_beta: &scaled_beta,
                theta: &theta,
                rho: 0.0,
            };
            grad_theta_estimate(&ctx, &w, &it, &mut ws, &mut grad)?;
            axpy(-config.eta, &grad, &mut theta);
            project_ball_in_place(&mut theta, config.d_theta);
            axpy(1.0, &theta, &mut sum);
        }
        let mut theta_t: Vec<f64> = sum.iter().map(|v| v / k_max as f64).collect();
        project_ball_in_place(&mut theta_t, config.d_theta);

        let w = source.next_transition()?;
        let it = Iterate {
            logits: &acc,
            alpha: config.alpha,
            beta: &beta,
            scaled_beta: &scaled_beta,
            theta: &theta_t,
            rho: 0.0,
        };
        grad_beta_estimate(&ctx, &w, &it, &mut ws, &mut grad);

        accumulators.push(DVector::from_column_slice(&acc));
        thetas.push(DVector::from_column_slice(&theta_t));
        betas.push(DVector::from_column_slice(&beta));

        axpy(config.zeta, &grad, &mut beta);
        project_ball_in_place(&mut beta, config.d_beta);
        axpy(1.0, &theta_t, &mut acc);
        theta_prev = theta_t;
    }

    let output_index = stream_rng(config.seed, Stream::Solver).gen_range(0..t_max);
    let mut result = SolverResult {
        setting: Setting::Discounted,
        alpha: config.alpha,
        accumulators,
        thetas,
        betas,
        rhos: Vec::new(),
        output_index,
        samples_used: t_max * k_max,
        trace: Vec::new(),
        mixture_return: None,
        gap: None,
        lambda_approximate: lambda.is_some_and(|l| l.is_approximate()) && config.c != 1.0,
    };
    attach_diagnostics(&mut result, mdp, oracle, config.c, config.eval_every, k_max)?;
    Ok(result)
}

/// `v_{θ,π}(x) = Σ_a π(a|x) ⟨φ(x,a), θ⟩`.
pub fn linear_state_values(mdp: &LinearMDP, policy: &Policy, theta: &DVector<f64>) -> DVector<f64> {
    state_average(mdp, policy, &(mdp.features() * theta))
}

/// `μ_{β,π}(x,a) = π(a|x) [(1-γ)ν₀(x) + γ⟨ψ(x), Λ^c β⟩]`, given `Λ^c β`.
pub fn dual_occupancy(mdp: &LinearMDP, policy: &Policy, lam_c_beta: &DVector<f64>) -> DVector<f64> {
    let gamma = mdp.discount();
    let mass = mdp.init_dist() * (1.0 - gamma) + mdp.next_state_factor().transpose() * lam_c_beta * gamma;
    DVector::from_fn(mdp.num_pairs(), |i, _| {
        let (x, a) = (i / mdp.num_actions(), i % mdp.num_actions());
        policy.prob(x, a) * mass[x]
    })
}

/// `f(β, π; θ) = (1-γ)⟨ν₀, v_{θ,π}⟩ + ⟨Λ^c β, ω + γΨ v_{θ,π} - θ⟩`.
pub fn lagrangian(mdp: &LinearMDP, lam_c: &DMatrix<f64>, policy: &Policy, beta: &DVector<f64>, theta: &DVector<f64>) -> f64 {
    let gamma = mdp.discount();
    let v = linear_state_values(mdp, policy, theta);
    let residual = mdp.reward_factor() + mdp.next_state_factor() * &v * gamma - theta;
    (1.0 - gamma) * mdp.init_dist().dot(&v) + (lam_c * beta).dot(&residual)
}

/// Exact `θ`-gradient `Φᵀμ_{β,π} - Λ^c β`.
pub fn exact_grad_theta(mdp: &LinearMDP, lam_c: &DMatrix<f64>, policy: &Policy, beta: &DVector<f64>) -> DVector<f64> {
    let lam_c_beta = lam_c * beta;
    mdp.features().transpose() * dual_occupancy(mdp, policy, &lam_c_beta) - lam_c_beta
}

/// Exact `β`-gradient `Λ^c (ω + γΨ v_{θ,π} - θ)`.
pub fn exact_grad_beta(mdp: &LinearMDP, lam_c: &DMatrix<f64>, policy: &Policy, theta: &DVector<f64>) -> DVector<f64> {
    let v = linear_state_values(mdp, policy, theta);
    lam_c * (mdp.reward_factor() + mdp.next_state_factor() * v * mdp.discount() - theta)
}

/// `Σ_x ν*(x) Σ_a (π* - π)(a|x) ⟨φ(x,a), θ⟩`.
pub(crate) fn policy_regret_term(
    mdp: &LinearMDP,
    nu_star: &DVector<f64>,
    comparator: &Policy,
    policy: &Policy,
    theta: &DVector<f64>,
) -> f64 {
    let q = mdp.features() * theta;
    (0..mdp.num_states())
        .map(|x| {
            nu_star[x]
                * (0..mdp.num_actions())
                    .map(|a| (comparator.prob(x, a) - policy.prob(x, a)) * q[mdp.pair(x, a)])
                    .sum::<f64>()
        })
        .sum()
}

pub(crate) fn round_diagnostics(
    ctx: &GapContext,
    mdp: &LinearMDP,
    policy: &Policy,
    theta: &DVector<f64>,
    beta: &DVector<f64>,
) -> Result<RoundDiag> {
    let values = policy_values(mdp, policy, Setting::Discounted)?;
    let ret = (1.0 - mdp.discount()) * mdp.init_dist().dot(&values.v);
    let Some(beta_star) = &ctx.beta_star else {
        return Ok(RoundDiag { ret, terms: None });
    };
    let theta_star = &values.theta;
    let f_comparator = lagrangian(mdp, &ctx.lam_c, &ctx.comparator, beta_star, theta);
    let f_learner = lagrangian(mdp, &ctx.lam_c, policy, beta, theta_star);
    let g_theta = exact_grad_theta(mdp, &ctx.lam_c, policy, beta);
    let g_beta = exact_grad_beta(mdp, &ctx.lam_c, policy, theta);
    Ok(RoundDiag {
        ret,
        terms: Some(RoundTerms {
            f_comparator,
            f_learner,
            theta: (theta - theta_star).dot(&g_theta),
            beta: (beta_star - beta).dot(&g_beta),
            pi: policy_regret_term(mdp, &ctx.nu_star, &ctx.comparator, policy, theta),
            rho: 0.0,
        }),
    })
}

/// Exact duality gap of an iterate sequence against the comparator
/// (an optimal policy when `None`), with its three-term decomposition.
pub fn duality_gap_report(
    mdp: &LinearMDP,
    behavior: &Policy,
    iterates: &Iterates,
    comparator: Option<&Policy>,
    c: f64,
) -> Result<GapReport> {
    let ctx = GapContext::new(mdp, behavior, comparator, Setting::Discounted, c)?;
    if ctx.beta_star.is_none() {
        return Err(Error::NearSingular {
            eigenvalue: 0.0,
            floor: crate::numerics::EIG_FLOOR,
        });
    }
    let rounds = ctx.evaluate(mdp, iterates, crate::par::Execution::Parallel)?;
    ctx.report(&rounds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linmdp::tabular_to_linear;
    use crate::sampling::{draw_dataset, Source};

    fn cycle2() -> LinearMDP {
        tabular_to_linear(
            &[vec![vec![0.0, 1.0]], vec![vec![1.0, 0.0]]],
            &[vec![1.0], vec![0.0]],
            &[1.0, 0.0],
            0.5,
        )
        .unwrap()
    }

    fn iterate<'a>(logits: &'a [f64], beta: &'a [f64], theta: &'a [f64]) -> Iterate<'a> {
        Iterate {
            logits,
            alpha: 1.0,
            beta,
            scaled_beta: beta,
            theta,
            rho: 0.0,
        }
    }

    #[test]
    fn theta_estimate_hand_example() {
        let mdp = cycle2();
        let ctx = EstimatorContext::new(&mdp, 1.0, None).unwrap();
        let sample = Transition { x0: Some(0), x: 0, a: 0, r: 1.0, x_next: 1 };
        let mut ws = Workspace::new(1);
        let mut out = vec![0.0; 2];
        grad_theta_estimate(&ctx, &sample, &iterate(&[0.0, 0.0], &[1.0, 0.0], &[0.0, 0.0]), &mut ws, &mut out).unwrap();
        assert!((out[0] + 0.5).abs() < 1e-15 && (out[1] - 0.5).abs() < 1e-15);

        grad_theta_estimate(&ctx, &sample, &iterate(&[0.0, 0.0], &[0.0, 0.0], &[0.0, 0.0]), &mut ws, &mut out).unwrap();
        assert_eq!(out, vec![0.5, 0.0]);
    }

    #[test]
    fn beta_estimate_hand_example() {
        let mdp = cycle2();
        let ctx = EstimatorContext::new(&mdp, 1.0, None).unwrap();
        let sample = Transition { x0: Some(0), x: 0, a: 0, r: 1.0, x_next: 1 };
        let mut ws = Workspace::new(1);
        let mut out = vec![0.0; 2];
        grad_beta_estimate(&ctx, &sample, &iterate(&[0.0, 0.0], &[0.0, 0.0], &[1.0, 0.0]), &mut ws, &mut out);
        assert_eq!(out, vec![0.0, 0.0]);
        grad_beta_estimate(&ctx, &sample, &iterate(&[0.0, 0.0], &[0.0, 0.0], &[0.0, 0.0]), &mut ws, &mut out);
        assert_eq!(out, vec![1.0, 0.0]);
    }

    #[test]
    fn tuning_matches_hand_arithmetic() {
        assert!((g_theta_sq(1.0, 0.5, 1.0, 0.5) - 2.625).abs() < 1e-15);
        let (nf, tf) = lambda_factors(0.5, 3.0, 7, Some(0.2), Some(0.4));
        assert_eq!((nf, tf), (1.0, 7.0));
    }

    #[test]
    fn zero_step_run_keeps_initial_point() {
        let mdp = cycle2();
        let pi = Policy::uniform(2, 1);
        let data = draw_dataset(&mdp, &pi, 1, 0, Setting::Discounted, Source::default()).unwrap();
        let config = SolverConfig {
            outer: 1,
            inner: 1,
            c: 1.0,
            alpha: 0.0,
            zeta: 0.0,
            eta: 0.0,
            d_theta: 1.0,
            d_beta: 1.0,
            eval_every: 1,
            seed: 0,
        };
        let result = run(&mdp, &mut data.cursor(), &config, None, None).unwrap();
        assert_eq!(result.samples_used, 1);
        assert!(result.betas[0].iter().all(|&v| v == 0.0));
        assert!(result.thetas[0].iter().all(|&v| v == 0.0));
        assert_eq!(result.output_policy(&mdp), Policy::uniform(2, 1));
    }

    #[test]
    fn short_dataset_is_rejected_up_front() {
        let mdp = cycle2();
        let pi = Policy::uniform(2, 1);
        let data = draw_dataset(&mdp, &pi, 5, 0, Setting::Discounted, Source::default()).unwrap();
        let config = SolverConfig {
            outer: 2,
            inner: 3,
            c: 1.0,
            alpha: 0.1,
            zeta: 0.1,
            eta: 0.1,
            d_theta: 1.0,
            d_beta: 1.0,
            eval_every: 1,
            seed: 0,
        };
        let err = run(&mdp, &mut data.cursor(), &config, None, None).unwrap_err();
        assert!(matches!(err, Error::DatasetExhausted { needed: 6, available: 5 }));
    }
}
