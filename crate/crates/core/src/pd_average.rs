//! Primal-dual solver for average-reward linear MDPs.
//!
//! Compared to the discounted solver there is an extra scalar `ρ` (the
//! average-reward estimate, kept in `[0, 1]`), the inner loop consumes `K`
//! records and draws the next action itself, and the constant function is
//! represented in feature space by `ϱ` with `Φϱ = 1`.

use nalgebra::{DMatrix, DVector};
use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linmdp::{policy_values, LinearMDP, Policy, Setting};
use crate::numerics::{clamp_interval, project_ball_in_place};
use crate::pd_discounted::{
    lambda_factors, linear_state_values, policy_regret_term, policy_step, split_budget,
    validate_common, Budget, RegretBounds, TuneInput,
};
use crate::rng::{stream_rng, Stream};
use crate::sampling::{Covariance, SampleSource, Transition};
use crate::solver::{
    attach_diagnostics, axpy, check_budget, dot, EstimatorContext, GapContext, Iterate, RoundDiag,
    RoundTerms, Workspace,
};
pub use crate::solver::{GapReport, Iterates, Oracle, SolverResult, TraceRow};

const VARRHO_TOL: f64 = 1e-8;

fn default_eval_every() -> usize {
    1
}

/// Least-squares solution of `Φϱ = 1` and its worst-case residual.
#[derive(Clone, Debug, PartialEq)]
pub struct VarrhoVector {
    pub varrho: DVector<f64>,
    pub residual: f64,
}

/// Finds `ϱ` with `⟨φ(x,a), ϱ⟩ = 1` for every pair, failing with
/// `AssumptionViolated` when the constant function is not in the feature span.
pub fn solve_varrho(features: &DMatrix<f64>) -> Result<VarrhoVector> {
    let ones = DVector::from_element(features.nrows(), 1.0);
    let varrho = features
        .clone()
        .svd(true, true)
        .solve(&ones, 1e-12)
        .map_err(|_| Error::SingularSystem)?;
    let residual = (features * &varrho - ones).amax();
    if residual > VARRHO_TOL {
        return Err(Error::AssumptionViolated { residual });
    }
    Ok(VarrhoVector { varrho, residual })
}

/// Step sizes, radii and loop lengths of one average-reward run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AvgSolverConfig {
    #[serde(rename = "T")]
    pub outer: usize,
    /// Inner steps per outer iteration `K` (each consumes one record).
    #[serde(rename = "K")]
    pub inner: usize,
    pub c: f64,
    pub alpha: f64,
    pub zeta: f64,
    pub eta: f64,
    /// Step size of `ρ`.
    pub xi: f64,
    pub d_theta: f64,
    pub d_beta: f64,
    #[serde(default = "default_eval_every")]
    pub eval_every: usize,
    /// Seeds the solver's own randomness; the harness overrides it per run.
    #[serde(default)]
    pub seed: u64,
}

impl AvgSolverConfig {
    pub fn validate(&self) -> Result<()> {
        validate_common(
            self.outer,
            self.inner,
            self.c,
            &[
                ("alpha", self.alpha),
                ("zeta", self.zeta),
                ("eta", self.eta),
                ("xi", self.xi),
            ],
            self.d_theta,
            self.d_beta,
            self.eval_every,
        )
    }

    /// Dataset records consumed by a run: `T·(K + 1)`.
    pub fn samples_needed(&self) -> usize {
        self.outer * (self.inner + 1)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AvgTuning {
    pub g_beta_sq: f64,
    pub g_rho_sq: f64,
    pub g_theta_sq: f64,
    pub ratio: f64,
    pub config: AvgSolverConfig,
}

/// `G²_β = Tr(Λ^{2c-1}) (1 + 2D_θD_φ)²`.
pub fn g_beta_sq(d_phi: f64, d_theta: f64, trace_factor: f64) -> f64 {
    trace_factor * (1.0 + 2.0 * d_theta * d_phi).powi(2)
}

/// `G²_ρ = 2 (1 + D_β² ‖Λ‖₂^{2c-1})`.
pub fn g_rho_sq(d_beta: f64, norm_factor: f64) -> f64 {
    2.0 * (1.0 + d_beta * d_beta * norm_factor)
}

/// `G²_θ = 4 D_φ² D_β² ‖Λ‖₂^{2c-1}`.
pub fn g_theta_sq(d_phi: f64, d_beta: f64, norm_factor: f64) -> f64 {
    4.0 * d_phi * d_phi * d_beta * d_beta * norm_factor
}

/// Step sizes and loop lengths from the theoretical guarantee
/// (`input.gamma` is ignored).
pub fn tune(input: &TuneInput) -> Result<AvgTuning> {
    crate::solver::check_exponent(input.c)?;
    let d_phi = input.bounds.phi;
    let (nf, tf) = lambda_factors(input.c, d_phi, input.dim, input.lambda_norm, input.lambda_trace);
    let (dt, db) = (input.d_theta, input.d_beta);
    let g_b = g_beta_sq(d_phi, dt, tf);
    let g_r = g_rho_sq(db, nf);
    let g_t = g_theta_sq(d_phi, db, nf);
    let log_a = (input.num_actions as f64).ln();
    let ratio = (4.0 * db * db * g_b + 2.0 * dt * dt * d_phi * d_phi * log_a) / (g_r + 4.0 * dt * dt * g_t);
    let kappa = 2.0 * db * g_b.sqrt()
        + d_phi * dt * (2.0 * log_a).sqrt()
        + (g_r.sqrt() + 2.0 * dt * g_t.sqrt()) / ratio.sqrt();
    let (outer, inner) = split_budget(input.budget, ratio, kappa, 1)?;
    let config = AvgSolverConfig {
        outer,
        inner,
        c: input.c,
        alpha: policy_step(input.num_actions, d_phi, dt, outer),
        zeta: 2.0 * db / (g_b.sqrt() * (outer as f64).sqrt()),
        eta: 2.0 * dt / (g_t.sqrt() * (inner as f64).sqrt()),
        xi: 1.0 / (g_r.sqrt() * (inner as f64).sqrt()),
        d_theta: dt,
        d_beta: db,
        eval_every: 1,
        seed: 0,
    };
    Ok(AvgTuning {
        g_beta_sq: g_b,
        g_rho_sq: g_r,
        g_theta_sq: g_t,
        ratio,
        config,
    })
}

/// Closed-form bounds on the four averaged regret terms.
pub fn regret_bounds(config: &AvgSolverConfig, tuning: &AvgTuning, d_phi: f64, num_actions: usize) -> RegretBounds {
    let (t, k) = (config.outer as f64, config.inner as f64);
    let (dt, db) = (config.d_theta, config.d_beta);
    RegretBounds {
        theta: 2.0 * dt * dt / (config.eta * k) + config.eta * tuning.g_theta_sq / 2.0,
        beta: 2.0 * db * db / (config.zeta * t) + config.zeta * tuning.g_beta_sq / 2.0,
        pi: (num_actions as f64).ln() / (config.alpha * t) + config.alpha * d_phi * d_phi * dt * dt / 2.0,
        rho: Some(1.0 / (2.0 * config.xi * k) + config.xi * tuning.g_rho_sq / 2.0),
    }
}

/// Inner-loop estimators from one record and a next action `a'`:
/// returns `g̃_ρ = 1 - ⟨φ, Λ^{c-1}β⟩` and writes
/// `g̃_θ = (φ(x',a') - φ(x,a)) ⟨φ, Λ^{c-1}β⟩` into `out`.
pub fn inner_grads_avg(
    ctx: &EstimatorContext<'_>,
    sample: &Transition,
    next_action: usize,
    it: &Iterate<'_>,
    out: &mut [f64],
) -> f64 {
    let phi = ctx.phi(sample.x, sample.a);
    let weight = dot(phi, it.scaled_beta);
    out.fill(0.0);
    if weight != 0.0 {
        axpy(weight, ctx.phi(sample.x_next, next_action), out);
        axpy(-weight, phi, out);
    }
    1.0 - weight
}

/// Outer estimator `Λ^{c-1}φ (r + v(x') - ⟨θ, φ⟩ - ρ)`.
pub fn outer_grad_beta_avg(
    ctx: &EstimatorContext<'_>,
    sample: &Transition,
    it: &Iterate<'_>,
    ws: &mut Workspace,
    out: &mut [f64],
) {
    ctx.policy_at(it.logits, it.alpha, sample.x_next, &mut ws.logits, &mut ws.probs);
    let v_next = ctx.state_value(&ws.probs, sample.x_next, it.theta);
    let phi = ctx.phi(sample.x, sample.a);
    let delta = sample.r + v_next - dot(phi, it.theta) - it.rho;
    out.fill(0.0);
    axpy(delta, ctx.scaled_phi(sample.x, sample.a), out);
}

fn draw_action<R: Rng>(probs: &[f64], rng: &mut R) -> usize {
    WeightedIndex::new(probs.iter().copied())
        .map(|dist| dist.sample(rng))
        .unwrap_or(0)
}

/// Runs the average-reward solver. Next actions and the output index come
/// from the solver stream of `config.seed`.
pub fn run_average(
    mdp: &LinearMDP,
    source: &mut dyn SampleSource,
    config: &AvgSolverConfig,
    lambda: Option<&Covariance>,
    oracle: Option<&Oracle<'_>>,
) -> Result<SolverResult> {
    config.validate()?;
    let ctx = EstimatorContext::new(mdp, config.c, lambda)?;
    check_budget(source, config.samples_needed())?;

    let d = mdp.dim();
    let (t_max, k_max) = (config.outer, config.inner);
    let mut rng = stream_rng(config.seed, Stream::Solver);
    let mut ws = Workspace::new(mdp.num_actions());
    let mut grad = vec![0.0; d];
    let mut theta_prev = vec![0.0; d];
    let mut rho_prev = 0.0;
    let mut beta = vec![0.0; d];
    let mut acc = vec![0.0; d];

    let mut accumulators = Vec::with_capacity(t_max);
    let mut thetas = Vec::with_capacity(t_max);
    let mut betas = Vec::with_capacity(t_max);
    let mut rhos = Vec::with_capacity(t_max);

    for _ in 0..t_max {
        let scaled_beta = ctx.precondition(&beta);
        let mut theta = theta_prev.clone();
        let mut rho = rho_prev;
        let mut theta_sum = vec![0.0; d];
        let mut rho_sum = 0.0;
        for _ in 0..k_max {
            axpy(1.0, &theta, &mut theta_sum);
            rho_sum += rho;
            let w = source.next_transition()?;
            ctx.policy_at(&acc, config.alpha, w.x_next, &mut ws.logits, &mut ws.probs);
            let next_action = draw_action(&ws.probs, &mut rng);
            let it = Iterate {
                logits: &acc,
                alpha: config.alpha,
                beta: &beta,
                scaled_beta: &scaled_beta,
                theta: &theta,
                rho,
            };
            let g_rho = inner_grads_avg(&ctx, &w, next_action, &it, &mut grad);
            rho = clamp_interval(rho - config.xi * g_rho, 0.0, 1.0);
            axpy(-config.eta, &grad, &mut theta);
            project_ball_in_place(&mut theta, config.d_theta);
        }
        let mut theta_t: Vec<f64> = theta_sum.iter().map(|v| v / k_max as f64).collect();
        project_ball_in_place(&mut theta_t, config.d_theta);
        let rho_t = clamp_interval(rho_sum / k_max as f64, 0.0, 1.0);

        let w = source.next_transition()?;
        let it = Iterate {
            logits: &acc,
            alpha: config.alpha,
            beta: &beta,
            scaled_beta: &scaled_beta,
            theta: &theta_t,
            rho: rho_t,
        };
        outer_grad_beta_avg(&ctx, &w, &it, &mut ws, &mut grad);

        accumulators.push(DVector::from_column_slice(&acc));
        thetas.push(DVector::from_column_slice(&theta_t));
        betas.push(DVector::from_column_slice(&beta));
        rhos.push(rho_t);

        axpy(config.zeta, &grad, &mut beta);
        project_ball_in_place(&mut beta, config.d_beta);
        axpy(1.0, &theta_t, &mut acc);
        theta_prev = theta_t;
        rho_prev = rho_t;
    }

    let output_index = rng.gen_range(0..t_max);
    let mut result = SolverResult {
        setting: Setting::Average,
        alpha: config.alpha,
        accumulators,
        thetas,
        betas,
        rhos,
        output_index,
        samples_used: t_max * (k_max + 1),
        trace: Vec::new(),
        mixture_return: None,
        gap: None,
        lambda_approximate: lambda.is_some_and(|l| l.is_approximate()) && config.c != 1.0,
    };
    attach_diagnostics(&mut result, mdp, oracle, config.c, config.eval_every, k_max + 1)?;
    Ok(result)
}

/// `μ_{β,π}(x,a) = π(a|x) ⟨ψ(x), Λ^c β⟩`, given `Λ^c β`.
pub fn dual_occupancy(mdp: &LinearMDP, policy: &Policy, lam_c_beta: &DVector<f64>) -> DVector<f64> {
    let mass = mdp.next_state_factor().transpose() * lam_c_beta;
    DVector::from_fn(mdp.num_pairs(), |i, _| {
        let (x, a) = (i / mdp.num_actions(), i % mdp.num_actions());
        policy.prob(x, a) * mass[x]
    })
}

/// `f(β, π; ρ, θ) = ρ + ⟨Λ^c β, ω + Ψ v_{θ,π} - θ - ρϱ⟩`.
pub fn lagrangian(
    mdp: &LinearMDP,
    lam_c: &DMatrix<f64>,
    varrho: &DVector<f64>,
    policy: &Policy,
    beta: &DVector<f64>,
    rho: f64,
    theta: &DVector<f64>,
) -> f64 {
    let v = linear_state_values(mdp, policy, theta);
    let residual = mdp.reward_factor() + mdp.next_state_factor() * v - theta - varrho * rho;
    rho + (lam_c * beta).dot(&residual)
}

/// Exact `ρ`-gradient `1 - ⟨β, Λ^c ϱ⟩`.
pub fn exact_grad_rho(lam_c: &DMatrix<f64>, varrho: &DVector<f64>, beta: &DVector<f64>) -> f64 {
    1.0 - beta.dot(&(lam_c * varrho))
}

/// Exact `θ`-gradient `Φᵀμ_{β,π} - Λ^c β`.
pub fn exact_grad_theta(mdp: &LinearMDP, lam_c: &DMatrix<f64>, policy: &Policy, beta: &DVector<f64>) -> DVector<f64> {
    let lam_c_beta = lam_c * beta;
    mdp.features().transpose() * dual_occupancy(mdp, policy, &lam_c_beta) - lam_c_beta
}

/// Exact `β`-gradient `Λ^c (ω + Ψ v_{θ,π} - θ - ρϱ)`.
pub fn exact_grad_beta(
    mdp: &LinearMDP,
    lam_c: &DMatrix<f64>,
    varrho: &DVector<f64>,
    policy: &Policy,
    theta: &DVector<f64>,
    rho: f64,
) -> DVector<f64> {
    let v = linear_state_values(mdp, policy, theta);
    lam_c * (mdp.reward_factor() + mdp.next_state_factor() * v - theta - varrho * rho)
}

/// `θ^π` shifted along `ϱ` so that `min_{x,a} ⟨φ(x,a), θ⟩ = 0`, and `ρ^π`.
pub fn shifted_comparator(mdp: &LinearMDP, policy: &Policy, varrho: &DVector<f64>) -> Result<(DVector<f64>, f64)> {
    let values = policy_values(mdp, policy, Setting::Average)?;
    let shift = values.q.min();
    let rho = values.rho.expect("average setting reports a gain");
    Ok((values.theta - varrho * shift, rho))
}

pub(crate) fn round_diagnostics(
    ctx: &GapContext,
    mdp: &LinearMDP,
    policy: &Policy,
    theta: &DVector<f64>,
    beta: &DVector<f64>,
    rho: f64,
) -> Result<RoundDiag> {
    let varrho = ctx.varrho.as_ref().expect("average context carries varrho");
    let (theta_star, rho_star) = shifted_comparator(mdp, policy, varrho)?;
    let ret = rho_star;
    let Some(beta_star) = &ctx.beta_star else {
        return Ok(RoundDiag { ret, terms: None });
    };
    let f_comparator = lagrangian(mdp, &ctx.lam_c, varrho, &ctx.comparator, beta_star, rho, theta);
    let f_learner = lagrangian(mdp, &ctx.lam_c, varrho, policy, beta, rho_star, &theta_star);
    let g_rho = exact_grad_rho(&ctx.lam_c, varrho, beta);
    let g_theta = exact_grad_theta(mdp, &ctx.lam_c, policy, beta);
    let g_beta = exact_grad_beta(mdp, &ctx.lam_c, varrho, policy, theta, rho);
    Ok(RoundDiag {
        ret,
        terms: Some(RoundTerms {
            f_comparator,
            f_learner,
            theta: (theta - &theta_star).dot(&g_theta),
            beta: (beta_star - beta).dot(&g_beta),
            pi: policy_regret_term(mdp, &ctx.nu_star, &ctx.comparator, policy, theta),
            rho: (rho - rho_star) * g_rho,
        }),
    })
}

/// Exact duality gap of an iterate sequence with its four-term decomposition.
pub fn duality_gap_report_avg(
    mdp: &LinearMDP,
    behavior: &Policy,
    iterates: &Iterates,
    comparator: Option<&Policy>,
    c: f64,
) -> Result<GapReport> {
    let ctx = GapContext::new(mdp, behavior, comparator, Setting::Average, c)?;
    if ctx.beta_star.is_none() {
        return Err(Error::NearSingular {
            eigenvalue: 0.0,
            floor: crate::numerics::EIG_FLOOR,
        });
    }
    let rounds = ctx.evaluate(mdp, iterates, crate::par::Execution::Parallel)?;
    ctx.report(&rounds)
}

/// Tuning for the average setting with the same inputs as the discounted one.
pub fn tune_input(
    mdp: &LinearMDP,
    d_theta: f64,
    d_beta: f64,
    c: f64,
    lambda: Option<&Covariance>,
    budget: Budget,
) -> TuneInput {
    TuneInput {
        bounds: mdp.bounds(),
        gamma: mdp.discount(),
        num_actions: mdp.num_actions(),
        dim: mdp.dim(),
        d_theta,
        d_beta,
        c,
        lambda_norm: lambda.map(|l| l.spectral_norm()),
        lambda_trace: lambda.map(|l| l.trace()),
        budget,
    }
}
