//! Pieces shared by the discounted and average-reward solvers: policy
//! evaluation from the logit accumulator, preconditioned feature tables,
//! result types and the oracle-side duality-gap diagnostics.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linmdp::{occupancy, optimal_policy, FeatureTable, LinearMDP, Policy, Setting};
use crate::numerics::softmax_into;
use crate::par::{map_indices, Execution};
use crate::sampling::{Covariance, SampleSource};

/// Exponent `c` of the reparametrization `β = Λ^{-c} λ`.
pub(crate) fn check_exponent(c: f64) -> Result<()> {
    if c == 0.5 || c == 1.0 {
        Ok(())
    } else {
        Err(Error::ConfigInvalid(format!("c must be 1/2 or 1, got {c}")))
    }
}

/// Feature access for the gradient estimators.
///
/// Holds `Λ^{c-1} φ(x,a)` for every pair when `c ≠ 1`, so each estimator
/// costs `O(|A|·d)`. With `c = 1` the covariance is never touched.
#[derive(Clone, Debug)]
pub struct EstimatorContext<'a> {
    features: &'a FeatureTable,
    scaled: Option<FeatureTable>,
    precond: Option<DMatrix<f64>>,
    gamma: f64,
}

impl<'a> EstimatorContext<'a> {
    pub fn new(mdp: &'a LinearMDP, c: f64, lambda: Option<&Covariance>) -> Result<Self> {
        check_exponent(c)?;
        let (scaled, precond) = if c == 1.0 {
            (None, None)
        } else {
            let cov = lambda.ok_or_else(|| {
                Error::ConfigInvalid("c = 1/2 needs the feature covariance".into())
            })?;
            let precond = (*cov.power(c - 1.0)?).clone();
            let rows = mdp.features() * &precond;
            (
                Some(FeatureTable::from_matrix(&rows, mdp.num_states(), mdp.num_actions())),
                Some(precond),
            )
        };
        Ok(Self {
            features: mdp.feature_table(),
            scaled,
            precond,
            gamma: mdp.discount(),
        })
    }

    #[inline]
    pub fn phi(&self, x: usize, a: usize) -> &[f64] {
        self.features.phi(x, a)
    }

    /// `Λ^{c-1} φ(x,a)`.
    #[inline]
    pub fn scaled_phi(&self, x: usize, a: usize) -> &[f64] {
        match &self.scaled {
            Some(t) => t.phi(x, a),
            None => self.features.phi(x, a),
        }
    }

    /// `Λ^{c-1} v`.
    pub fn precondition(&self, v: &[f64]) -> Vec<f64> {
        match &self.precond {
            Some(m) => (m * DVector::from_column_slice(v)).as_slice().to_vec(),
            None => v.to_vec(),
        }
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn num_actions(&self) -> usize {
        self.features.num_actions()
    }

    pub fn dim(&self) -> usize {
        self.features.dim()
    }

    /// `π(·|x) = softmax(α ⟨φ(x,·), acc⟩)` written into `out`.
    pub fn policy_at(&self, acc: &[f64], alpha: f64, x: usize, scratch: &mut Vec<f64>, out: &mut [f64]) {
        let na = self.num_actions();
        scratch.clear();
        scratch.extend((0..na).map(|a| alpha * dot(self.phi(x, a), acc)));
        softmax_into(scratch, out);
    }

    /// `Σ_a π(a|x) φ(x,a)` added into `out` with weight `w`.
    pub fn add_policy_features(&self, probs: &[f64], x: usize, w: f64, out: &mut [f64]) {
        for (a, &p) in probs.iter().enumerate() {
            let coef = w * p;
            if coef != 0.0 {
                axpy(coef, self.phi(x, a), out);
            }
        }
    }

    /// `Σ_a π(a|x) ⟨φ(x,a), θ⟩`.
    pub fn state_value(&self, probs: &[f64], x: usize, theta: &[f64]) -> f64 {
        probs
            .iter()
            .enumerate()
            .map(|(a, &p)| p * dot(self.phi(x, a), theta))
            .sum()
    }
}

/// Per-run scratch buffers so the inner loops do not allocate.
#[derive(Clone, Debug, Default)]
pub struct Workspace {
    pub(crate) logits: Vec<f64>,
    pub(crate) probs: Vec<f64>,
}

impl Workspace {
    pub fn new(num_actions: usize) -> Self {
        Self {
            logits: Vec::with_capacity(num_actions),
            probs: vec![0.0; num_actions],
        }
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Solver iterate visible to the estimators at one round.
#[derive(Clone, Copy, Debug)]
pub struct Iterate<'a> {
    /// Logit accumulator `Σ_{s<t} θ_s`.
    pub logits: &'a [f64],
    pub alpha: f64,
    pub beta: &'a [f64],
    /// `Λ^{c-1} β`.
    pub scaled_beta: &'a [f64],
    pub theta: &'a [f64],
    pub rho: f64,
}

/// Full softmax policy table for a logit accumulator.
pub fn policy_from_accumulator(mdp: &LinearMDP, acc: &DVector<f64>, alpha: f64) -> Policy {
    let q = mdp.features() * acc * alpha;
    let (s, na) = (mdp.num_states(), mdp.num_actions());
    let mut probs = DMatrix::zeros(s, na);
    let mut row_out = vec![0.0; na];
    for x in 0..s {
        let row: Vec<f64> = (0..na).map(|a| q[mdp.pair(x, a)]).collect();
        softmax_into(&row, &mut row_out);
        for a in 0..na {
            probs[(x, a)] = row_out[a];
        }
    }
    Policy::from_probs_unchecked(probs)
}

pub(crate) fn check_budget(source: &dyn SampleSource, needed: usize) -> Result<()> {
    match source.remaining() {
        Some(available) if available < needed => Err(Error::DatasetExhausted { needed, available }),
        _ => Ok(()),
    }
}

/// Trace rows are emitted at `t = min(i·every, T)` for `i = 1, 2, …`.
pub(crate) fn trace_points(outer: usize, every: usize) -> Vec<usize> {
    let every = every.max(1);
    let mut points: Vec<usize> = (1..)
        .map(|i| i * every)
        .take_while(|&t| t < outer)
        .collect();
    points.push(outer);
    points
}

/// One diagnostic row; oracle columns are `None` without an oracle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: usize,
    pub samples: usize,
    pub exact_return: Option<f64>,
    pub subopt: Option<f64>,
    pub gap: Option<f64>,
    pub term_theta: Option<f64>,
    pub term_beta: Option<f64>,
    pub term_pi: Option<f64>,
    /// Average setting only.
    pub term_rho: Option<f64>,
    /// Average setting only.
    pub rho_t: Option<f64>,
}

/// Averaged duality gap, its regret decomposition and the suboptimality of
/// the mixture policy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub gap: f64,
    pub term_theta: f64,
    pub term_beta: f64,
    pub term_pi: f64,
    /// Average setting only.
    pub term_rho: Option<f64>,
    pub suboptimality: f64,
    pub comparator_return: f64,
    pub mixture_return: f64,
}

/// The sequence `(π_t, θ_t, β_t, ρ_t)` for `t = 1..T`.
#[derive(Clone, Debug)]
pub struct Iterates {
    pub policies: Vec<Policy>,
    pub thetas: Vec<DVector<f64>>,
    pub betas: Vec<DVector<f64>>,
    /// Empty in the discounted setting.
    pub rhos: Vec<f64>,
}

impl Iterates {
    pub fn len(&self) -> usize {
        self.policies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.policies.is_empty()
    }

    fn check(&self, setting: Setting) -> Result<()> {
        let t = self.policies.len();
        let rho_ok = match setting {
            Setting::Discounted => self.rhos.is_empty() || self.rhos.len() == t,
            Setting::Average => self.rhos.len() == t,
        };
        if t == 0 || self.thetas.len() != t || self.betas.len() != t || !rho_ok {
            return Err(Error::DimensionMismatch(
                "iterate sequences must be nonempty and of equal length".into(),
            ));
        }
        Ok(())
    }
}

/// Oracle access used only for diagnostics; the learner never reads it.
#[derive(Clone, Copy, Debug)]
pub struct Oracle<'a> {
    pub mdp: &'a LinearMDP,
    pub behavior: &'a Policy,
    /// Defaults to an optimal policy.
    pub comparator: Option<&'a Policy>,
    pub execution: Execution,
}

/// Per-round exact quantities.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct RoundDiag {
    pub ret: f64,
    pub terms: Option<RoundTerms>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct RoundTerms {
    /// `f` at the comparator dual point against the learner's primal iterate.
    pub f_comparator: f64,
    /// `f` at the learner's dual iterate against the comparator primal point.
    pub f_learner: f64,
    pub theta: f64,
    pub beta: f64,
    pub pi: f64,
    pub rho: f64,
}

/// Exact comparator quantities shared by every round.
pub(crate) struct GapContext {
    pub setting: Setting,
    pub lam_c: DMatrix<f64>,
    pub comparator: Policy,
    pub comparator_return: f64,
    pub nu_star: DVector<f64>,
    /// `β* = Λ^{-c} Φᵀ μ*`; `None` when `Λ` is too close to singular.
    pub beta_star: Option<DVector<f64>>,
    /// Feature-space anchor for the constant function (average setting).
    pub varrho: Option<DVector<f64>>,
}

impl GapContext {
    pub fn new(
        mdp: &LinearMDP,
        behavior: &Policy,
        comparator: Option<&Policy>,
        setting: Setting,
        c: f64,
    ) -> Result<Self> {
        check_exponent(c)?;
        let occ_b = occupancy(mdp, behavior, setting)?;
        let cov = Covariance::from_occupancy(mdp, &occ_b.mu)?;
        let comparator = match comparator {
            Some(p) => {
                p.check_shape(mdp)?;
                p.clone()
            }
            None => optimal_policy(mdp, setting, 1e-12)?.0,
        };
        let occ_star = occupancy(mdp, &comparator, setting)?;
        let comparator_return = occ_star.mu.dot(mdp.rewards());
        let lam_c = (*cov.power(c)?).clone();
        let m_star = mdp.features().transpose() * &occ_star.mu;
        let beta_star = match cov.power(-c) {
            Ok(inv) => Some(&*inv * m_star),
            Err(Error::NearSingular { .. }) => None,
            Err(e) => return Err(e),
        };
        let varrho = match setting {
            Setting::Discounted => None,
            Setting::Average => Some(crate::pd_average::solve_varrho(mdp.features())?.varrho),
        };
        Ok(Self {
            setting,
            lam_c,
            comparator,
            comparator_return,
            nu_star: occ_star.nu,
            beta_star,
            varrho,
        })
    }

    pub fn round(
        &self,
        mdp: &LinearMDP,
        policy: &Policy,
        theta: &DVector<f64>,
        beta: &DVector<f64>,
        rho: f64,
    ) -> Result<RoundDiag> {
        match self.setting {
            Setting::Discounted => crate::pd_discounted::round_diagnostics(self, mdp, policy, theta, beta),
            Setting::Average => crate::pd_average::round_diagnostics(self, mdp, policy, theta, beta, rho),
        }
    }

    pub fn evaluate(&self, mdp: &LinearMDP, iterates: &Iterates, exec: Execution) -> Result<Vec<RoundDiag>> {
        iterates.check(self.setting)?;
        map_indices(iterates.len(), exec, |t| {
            let rho = iterates.rhos.get(t).copied().unwrap_or(0.0);
            self.round(mdp, &iterates.policies[t], &iterates.thetas[t], &iterates.betas[t], rho)
        })
        .into_iter()
        .collect()
    }

    pub fn report(&self, rounds: &[RoundDiag]) -> Result<GapReport> {
        let n = rounds.len() as f64;
        let mixture_return = rounds.iter().map(|r| r.ret).sum::<f64>() / n;
        let terms: Vec<RoundTerms> = rounds
            .iter()
            .map(|r| r.terms)
            .collect::<Option<Vec<_>>>()
            .ok_or(Error::NearSingular {
                eigenvalue: 0.0,
                floor: crate::numerics::EIG_FLOOR,
            })?;
        let mean = |f: fn(&RoundTerms) -> f64| terms.iter().map(f).sum::<f64>() / n;
        Ok(GapReport {
            gap: mean(|r| r.f_comparator - r.f_learner),
            term_theta: mean(|r| r.theta),
            term_beta: mean(|r| r.beta),
            term_pi: mean(|r| r.pi),
            term_rho: match self.setting {
                Setting::Discounted => None,
                Setting::Average => Some(mean(|r| r.rho)),
            },
            suboptimality: self.comparator_return - mixture_return,
            comparator_return: self.comparator_return,
            mixture_return,
        })
    }
}

/// Trace rows with running averages of the per-round diagnostics.
pub(crate) fn build_trace(
    outer: usize,
    every: usize,
    samples_per_round: usize,
    rhos: &[f64],
    diagnostics: Option<(&GapContext, &[RoundDiag])>,
) -> Vec<TraceRow> {
    let mut prefix = vec![[0.0f64; 6]; outer + 1];
    let mut has_terms = true;
    if let Some((_, rounds)) = diagnostics {
        for (t, r) in rounds.iter().enumerate() {
            let mut row = prefix[t];
            row[0] += r.ret;
            match r.terms {
                Some(k) => {
                    row[1] += k.f_comparator - k.f_learner;
                    row[2] += k.theta;
                    row[3] += k.beta;
                    row[4] += k.pi;
                    row[5] += k.rho;
                }
                None => has_terms = false,
            }
            prefix[t + 1] = row;
        }
    }
    trace_points(outer, every)
        .into_iter()
        .map(|t| {
            let avg = |i: usize| prefix[t][i] / t as f64;
            let (ret, terms) = match diagnostics {
                Some((ctx, _)) => (Some((avg(0), ctx)), has_terms),
                None => (None, false),
            };
            let term = |i: usize| if terms { Some(avg(i)) } else { None };
            let average = !rhos.is_empty();
            TraceRow {
                t,
                samples: t * samples_per_round,
                exact_return: ret.map(|(v, _)| v),
                subopt: ret.map(|(v, ctx)| ctx.comparator_return - v),
                gap: term(1),
                term_theta: term(2),
                term_beta: term(3),
                term_pi: term(4),
                term_rho: if average { term(5) } else { None },
                rho_t: if average { Some(rhos[t - 1]) } else { None },
            }
        })
        .collect()
}

/// Iterates and diagnostics of one solver run.
#[derive(Clone, Debug)]
pub struct SolverResult {
    pub setting: Setting,
    pub alpha: f64,
    /// Policy parameters `Σ_{s<t} θ_s` for `t = 1..T`.
    pub accumulators: Vec<DVector<f64>>,
    pub thetas: Vec<DVector<f64>>,
    pub betas: Vec<DVector<f64>>,
    /// Averaged `ρ_t` (average setting only).
    pub rhos: Vec<f64>,
    /// Zero-based index `J - 1` of the returned policy.
    pub output_index: usize,
    pub samples_used: usize,
    pub trace: Vec<TraceRow>,
    /// Exact mixture return (with an oracle).
    pub mixture_return: Option<f64>,
    /// Exact duality-gap report (with an oracle and an invertible `Λ`).
    pub gap: Option<GapReport>,
    /// Whether the preconditioner came from an estimated covariance.
    pub lambda_approximate: bool,
}

impl SolverResult {
    pub fn policy(&self, mdp: &LinearMDP, t: usize) -> Policy {
        policy_from_accumulator(mdp, &self.accumulators[t], self.alpha)
    }

    pub fn policies(&self, mdp: &LinearMDP) -> Vec<Policy> {
        (0..self.accumulators.len()).map(|t| self.policy(mdp, t)).collect()
    }

    /// The randomly selected output policy `π_J`.
    pub fn output_policy(&self, mdp: &LinearMDP) -> Policy {
        self.policy(mdp, self.output_index)
    }

    pub fn iterates(&self, mdp: &LinearMDP) -> Iterates {
        Iterates {
            policies: self.policies(mdp),
            thetas: self.thetas.clone(),
            betas: self.betas.clone(),
            rhos: self.rhos.clone(),
        }
    }
}

/// Runs the oracle diagnostics for a finished run and fills in the trace.
#[allow(clippy::too_many_arguments)]
pub(crate) fn attach_diagnostics(
    result: &mut SolverResult,
    mdp: &LinearMDP,
    oracle: Option<&Oracle<'_>>,
    c: f64,
    eval_every: usize,
    samples_per_round: usize,
) -> Result<()> {
    let outer = result.accumulators.len();
    let Some(oracle) = oracle else {
        result.trace = build_trace(outer, eval_every, samples_per_round, &result.rhos, None);
        return Ok(());
    };
    let ctx = GapContext::new(oracle.mdp, oracle.behavior, oracle.comparator, result.setting, c)?;
    let iterates = Iterates {
        policies: map_indices(outer, oracle.execution, |t| result.policy(mdp, t)),
        thetas: result.thetas.clone(),
        betas: result.betas.clone(),
        rhos: result.rhos.clone(),
    };
    let rounds = ctx.evaluate(oracle.mdp, &iterates, oracle.execution)?;
    result.trace = build_trace(
        outer,
        eval_every,
        samples_per_round,
        &result.rhos,
        Some((&ctx, &rounds)),
    );
    let mixture = rounds.iter().map(|r| r.ret).sum::<f64>() / outer as f64;
    result.mixture_return = Some(mixture);
    result.gap = ctx.report(&rounds).ok();
    Ok(())
}
