use nalgebra::{DMatrix, DVector};

use super::{LinearMDP, Policy, Setting};
use crate::error::{Error, Result};

const POWER_ITERATIONS: usize = 100_000;
const POWER_TOL: f64 = 1e-10;
const BORDERED_RANK_TOL: f64 = 1e-9;
const REALIZABILITY_TOL: f64 = 1e-6;
const PI_MAX_ITERATIONS: usize = 10_000;

/// State-action and state occupancy of a policy.
#[derive(Clone, Debug, PartialEq)]
pub struct OccupancyMeasure {
    pub mu: DVector<f64>,
    pub nu: DVector<f64>,
    pub setting: Setting,
}

/// Exact value functions of a policy together with the linear parameter of `q`.
#[derive(Clone, Debug, PartialEq)]
pub struct ValueSolution {
    pub theta: DVector<f64>,
    pub q: DVector<f64>,
    pub v: DVector<f64>,
    /// Average reward; `None` in the discounted setting.
    pub rho: Option<f64>,
    pub q_span: f64,
}

/// `P_π(x, x') = Σ_a π(a|x) P(x'|x,a)`.
pub fn state_transitions(mdp: &LinearMDP, policy: &Policy) -> DMatrix<f64> {
    let s = mdp.num_states();
    let p = mdp.transitions();
    let mut out = DMatrix::zeros(s, s);
    for x in 0..s {
        for a in 0..mdp.num_actions() {
            let w = policy.prob(x, a);
            if w == 0.0 {
                continue;
            }
            let row = p.row(mdp.pair(x, a));
            for y in 0..s {
                out[(x, y)] += w * row[y];
            }
        }
    }
    out
}

/// `r_π(x) = Σ_a π(a|x) r(x,a)`.
pub fn state_rewards(mdp: &LinearMDP, policy: &Policy) -> DVector<f64> {
    DVector::from_fn(mdp.num_states(), |x, _| {
        (0..mdp.num_actions())
            .map(|a| policy.prob(x, a) * mdp.reward(x, a))
            .sum()
    })
}

fn spread(mdp: &LinearMDP, policy: &Policy, nu: &DVector<f64>) -> DVector<f64> {
    DVector::from_fn(mdp.num_pairs(), |i, _| {
        let (x, a) = (i / mdp.num_actions(), i % mdp.num_actions());
        policy.prob(x, a) * nu[x]
    })
}

/// `v(x) = Σ_a π(a|x) q(x,a)`.
pub(crate) fn state_average(mdp: &LinearMDP, policy: &Policy, q: &DVector<f64>) -> DVector<f64> {
    DVector::from_fn(mdp.num_states(), |x, _| {
        (0..mdp.num_actions())
            .map(|a| policy.prob(x, a) * q[mdp.pair(x, a)])
            .sum()
    })
}

fn span(values: &DVector<f64>) -> f64 {
    values.max() - values.min()
}

/// Normalized discounted occupancy `ν = (1-γ)(I - γP_πᵀ)⁻¹ν₀`, `μ = π·ν`.
pub fn discounted_occupancy(mdp: &LinearMDP, policy: &Policy) -> Result<OccupancyMeasure> {
    policy.check_shape(mdp)?;
    let gamma = mdp.discount();
    let s = mdp.num_states();
    let p_pi = state_transitions(mdp, policy);
    let system = DMatrix::identity(s, s) - p_pi.transpose() * gamma;
    let rhs = mdp.init_dist() * (1.0 - gamma);
    let nu = system.lu().solve(&rhs).ok_or(Error::SingularSystem)?;
    let nu = nu.map(|v| v.max(0.0));
    let mu = spread(mdp, policy, &nu);
    Ok(OccupancyMeasure {
        mu,
        nu,
        setting: Setting::Discounted,
    })
}

/// Stationary state distribution of the chain induced by `policy`.
///
/// Runs power iteration on the lazy chain `(I + P_π)/2` (same stationary
/// distributions, no periodicity) and then refines the candidate with the
/// bordered system `[(I - P_π)ᵀ; 1ᵀ] ν = [0; 1]`, whose rank also certifies
/// uniqueness. Fails with `NotUnichain` if either step does.
pub fn stationary_distribution(mdp: &LinearMDP, policy: &Policy) -> Result<DVector<f64>> {
    policy.check_shape(mdp)?;
    let s = mdp.num_states();
    let p_pi = state_transitions(mdp, policy);
    let p_t = p_pi.transpose();

    let mut nu = DVector::from_element(s, 1.0 / s as f64);
    let mut converged = false;
    for _ in 0..POWER_ITERATIONS {
        let next = (&nu + &p_t * &nu) * 0.5;
        let delta = (&next - &nu).lp_norm(1);
        nu = next;
        if delta < POWER_TOL {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NotUnichain);
    }

    let mut bordered = DMatrix::zeros(s + 1, s);
    bordered
        .view_mut((0, 0), (s, s))
        .copy_from(&(DMatrix::identity(s, s) - &p_t));
    bordered.row_mut(s).fill(1.0);
    let svd = bordered.svd(true, true);
    let min_sv = svd.singular_values.min();
    if !(min_sv > BORDERED_RANK_TOL) {
        return Err(Error::NotUnichain);
    }
    let mut rhs = DVector::zeros(s + 1);
    rhs[s] = 1.0;
    let refined = svd.solve(&rhs, 0.0).map_err(|_| Error::NotUnichain)?;
    if (&refined - &nu).lp_norm(1) > 1e-6 {
        return Err(Error::NotUnichain);
    }
    let refined = refined.map(|v| v.max(0.0));
    let total = refined.sum();
    Ok(refined / total)
}

/// Occupancy measure for either setting.
pub fn occupancy(mdp: &LinearMDP, policy: &Policy, setting: Setting) -> Result<OccupancyMeasure> {
    match setting {
        Setting::Discounted => discounted_occupancy(mdp, policy),
        Setting::Average => {
            let nu = stationary_distribution(mdp, policy)?;
            let mu = spread(mdp, policy, &nu);
            Ok(OccupancyMeasure {
                mu,
                nu,
                setting: Setting::Average,
            })
        }
    }
}

/// Gain, bias (normalized by `⟨ν, v⟩ = 0`) and stationary distribution.
pub(crate) fn gain_bias(
    mdp: &LinearMDP,
    policy: &Policy,
) -> Result<(f64, DVector<f64>, DVector<f64>)> {
    let s = mdp.num_states();
    let nu = stationary_distribution(mdp, policy)?;
    let r_pi = state_rewards(mdp, policy);
    let rho = nu.dot(&r_pi);
    let p_pi = state_transitions(mdp, policy);
    let ones = DVector::from_element(s, 1.0);
    let system = DMatrix::identity(s, s) - p_pi + &ones * nu.transpose();
    let rhs = r_pi - &ones * rho;
    let v = system.lu().solve(&rhs).ok_or(Error::SingularSystem)?;
    Ok((rho, v, nu))
}

/// Exact `q^π`, `v^π`, `θ^π` (and `ρ^π` in the average setting).
///
/// In the average setting `θ` is the least-squares fit of `Φθ = q`; a residual
/// above `1e-6` means the action values are not linear in the features.
pub fn policy_values(mdp: &LinearMDP, policy: &Policy, setting: Setting) -> Result<ValueSolution> {
    policy.check_shape(mdp)?;
    match setting {
        Setting::Discounted => {
            let gamma = mdp.discount();
            let s = mdp.num_states();
            let p_pi = state_transitions(mdp, policy);
            let system = DMatrix::identity(s, s) - p_pi * gamma;
            let v = system
                .lu()
                .solve(&state_rewards(mdp, policy))
                .ok_or(Error::SingularSystem)?;
            let q = mdp.rewards() + mdp.transitions() * &v * gamma;
            let theta = mdp.reward_factor() + mdp.next_state_factor() * &v * gamma;
            let q_span = span(&q);
            Ok(ValueSolution {
                theta,
                q,
                v,
                rho: None,
                q_span,
            })
        }
        Setting::Average => {
            let (rho, v, _) = gain_bias(mdp, policy)?;
            let ones = DVector::from_element(mdp.num_pairs(), 1.0);
            let q = mdp.rewards() - ones * rho + mdp.transitions() * &v;
            let theta = mdp.fit_features(&q);
            let residual = (mdp.features() * &theta - &q).amax();
            if residual > REALIZABILITY_TOL {
                return Err(Error::NotRealizable { residual });
            }
            let q_span = span(&q);
            Ok(ValueSolution {
                theta,
                q,
                v,
                rho: Some(rho),
                q_span,
            })
        }
    }
}

/// Normalized return: `(1-γ)⟨ν₀, v^π⟩` (discounted) or `ρ^π` (average).
pub fn policy_return(mdp: &LinearMDP, policy: &Policy, setting: Setting) -> Result<f64> {
    let occ = occupancy(mdp, policy, setting)?;
    Ok(occ.mu.dot(mdp.rewards()))
}

/// Mean return of a uniform mixture over `policies`.
pub fn mixture_return(mdp: &LinearMDP, policies: &[Policy], setting: Setting) -> Result<f64> {
    if policies.is_empty() {
        return Err(Error::ConfigInvalid("mixture of zero policies".into()));
    }
    let mut total = 0.0;
    for policy in policies {
        total += policy_return(mdp, policy, setting)?;
    }
    Ok(total / policies.len() as f64)
}

/// Optimal deterministic policy by policy iteration and its normalized return.
///
/// An action is switched only when it improves the current one by more than
/// `tol`, which guarantees termination.
pub fn optimal_policy(mdp: &LinearMDP, setting: Setting, tol: f64) -> Result<(Policy, f64)> {
    if !(tol > 0.0) {
        return Err(Error::ConfigInvalid(format!("tolerance must be positive, got {tol}")));
    }
    let na = mdp.num_actions();
    let mut actions = vec![0usize; mdp.num_states()];
    for _ in 0..PI_MAX_ITERATIONS {
        let policy = Policy::deterministic(&actions, na)?;
        let scores = match setting {
            Setting::Discounted => policy_values_discounted_q(mdp, &policy)?,
            Setting::Average => {
                let (_, v, _) = gain_bias(mdp, &policy)?;
                mdp.rewards() + mdp.transitions() * v
            }
        };
        let mut changed = false;
        for (x, current) in actions.iter_mut().enumerate() {
            let mut best = *current;
            let mut best_score = scores[mdp.pair(x, *current)];
            for a in 0..na {
                let score = scores[mdp.pair(x, a)];
                if score > best_score + tol {
                    best = a;
                    best_score = score;
                }
            }
            if best != *current {
                *current = best;
                changed = true;
            }
        }
        if !changed {
            let value = policy_return(mdp, &policy, setting)?;
            return Ok((policy, value));
        }
    }
    Err(Error::NoConvergence {
        iterations: PI_MAX_ITERATIONS,
    })
}

fn policy_values_discounted_q(mdp: &LinearMDP, policy: &Policy) -> Result<DVector<f64>> {
    Ok(policy_values(mdp, policy, Setting::Discounted)?.q)
}
