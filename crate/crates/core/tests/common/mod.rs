//! Reference computations for the integration tests.
//!
//! Everything here is computed from the raw factors `(Φ, Ψ, ω, ν₀, γ)` by
//! different routes than the library uses: fixed-point iteration instead of
//! linear solves, enumeration of deterministic policies instead of policy
//! iteration, eigendecompositions done by hand, explicit loops for the
//! gradients, and exhaustive enumeration of every sample outcome for
//! expectations of the stochastic estimators.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use lporl::linmdp::{random_linear_mdp, random_tabular_mdp, tabular_to_linear};
use lporl::pd_average::{inner_grads_avg, outer_grad_beta_avg};
use lporl::pd_discounted::{grad_beta_estimate, grad_theta_estimate};
use lporl::sampling::{Covariance, Transition};
use lporl::solver::{EstimatorContext, Iterate, Iterates, Workspace};
use lporl::{LinearMDP, Policy, Setting};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ 0x5e_ed0f_7e57)
}

/// Two states, one action, deterministic alternation, reward 1 in state 0.
pub fn cycle2(gamma: f64) -> LinearMDP {
    tabular_to_linear(
        &[vec![vec![0.0, 1.0]], vec![vec![1.0, 0.0]]],
        &[vec![1.0], vec![0.0]],
        &[1.0, 0.0],
        gamma,
    )
    .unwrap()
}

/// `count` random tabular MDPs with 2–6 states and 1–3 actions.
pub fn small_tabular(count: usize, seed: u64) -> Vec<LinearMDP> {
    let mut r = rng(seed);
    (0..count)
        .map(|i| {
            let s = r.gen_range(2..=6);
            let a = r.gen_range(1..=3);
            random_tabular_mdp(s, a, r.gen_range(0.5..0.95), seed * 1000 + i as u64).unwrap()
        })
        .collect()
}

/// `count` random linear MDPs with simplex features.
pub fn small_linear(count: usize, seed: u64) -> Vec<LinearMDP> {
    let mut r = rng(seed);
    (0..count)
        .map(|i| {
            let s = r.gen_range(3..=6);
            let a = r.gen_range(2..=3);
            let d = r.gen_range(2..=(s * a).min(6));
            random_linear_mdp(s, a, d, seed * 1000 + i as u64)
                .unwrap()
                .with_discount(r.gen_range(0.5..0.95))
                .unwrap()
        })
        .collect()
}

pub fn random_policy(s: usize, a: usize, r: &mut ChaCha8Rng) -> Policy {
    let probs = DMatrix::from_fn(s, a, |_, _| r.gen_range(0.05..1.0));
    let sums: Vec<f64> = probs.row_iter().map(|row| row.sum()).collect();
    Policy::new(DMatrix::from_fn(s, a, |x, b| probs[(x, b)] / sums[x])).unwrap()
}

pub fn random_vector(d: usize, scale: f64, r: &mut ChaCha8Rng) -> DVector<f64> {
    DVector::from_fn(d, |_, _| r.gen_range(-scale..scale))
}

fn pair(mdp: &LinearMDP, x: usize, a: usize) -> usize {
    x * mdp.num_actions() + a
}

fn phi(mdp: &LinearMDP, x: usize, a: usize) -> DVector<f64> {
    mdp.features().row(pair(mdp, x, a)).transpose()
}

/// `P(y | x, a) = ⟨φ(x,a), ψ(y)⟩`.
pub fn kernel(mdp: &LinearMDP, x: usize, a: usize, y: usize) -> f64 {
    phi(mdp, x, a).dot(&mdp.next_state_factor().column(y))
}

pub fn reward(mdp: &LinearMDP, x: usize, a: usize) -> f64 {
    phi(mdp, x, a).dot(mdp.reward_factor())
}

/// State chain under `policy`, built entry by entry.
pub fn state_chain(mdp: &LinearMDP, policy: &Policy) -> DMatrix<f64> {
    let s = mdp.num_states();
    DMatrix::from_fn(s, s, |x, y| {
        (0..mdp.num_actions()).map(|a| policy.prob(x, a) * kernel(mdp, x, a, y)).sum()
    })
}

/// Discounted state occupancy by iterating `ν ← (1-γ)ν₀ + γP_πᵀν`.
pub fn discounted_states(mdp: &LinearMDP, policy: &Policy) -> DVector<f64> {
    let p = state_chain(mdp, policy).transpose();
    let g = mdp.discount();
    let base = mdp.init_dist() * (1.0 - g);
    let mut nu = base.clone();
    for _ in 0..100_000 {
        let next = &base + &p * &nu * g;
        let done = (&next - &nu).amax() < 1e-15;
        nu = next;
        if done {
            break;
        }
    }
    nu
}

/// Stationary distribution by power iteration on the lazy chain.
pub fn stationary_states(mdp: &LinearMDP, policy: &Policy) -> DVector<f64> {
    let s = mdp.num_states();
    let lazy = (state_chain(mdp, policy) + DMatrix::identity(s, s)) * 0.5;
    let pt = lazy.transpose();
    let mut nu = DVector::from_element(s, 1.0 / s as f64);
    for _ in 0..1_000_000 {
        let next = &pt * &nu;
        let done = (&next - &nu).amax() < 1e-16;
        nu = next;
        if done {
            break;
        }
    }
    let total = nu.sum();
    nu / total
}

pub fn states(mdp: &LinearMDP, policy: &Policy, setting: Setting) -> DVector<f64> {
    match setting {
        Setting::Discounted => discounted_states(mdp, policy),
        Setting::Average => stationary_states(mdp, policy),
    }
}

pub fn pairs(mdp: &LinearMDP, policy: &Policy, nu: &DVector<f64>) -> DVector<f64> {
    DVector::from_fn(mdp.num_pairs(), |i, _| {
        let (x, a) = (i / mdp.num_actions(), i % mdp.num_actions());
        nu[x] * policy.prob(x, a)
    })
}

pub fn occupancy(mdp: &LinearMDP, policy: &Policy, setting: Setting) -> DVector<f64> {
    pairs(mdp, policy, &states(mdp, policy, setting))
}

/// Normalized return `Σ μ(x,a) r(x,a)`.
pub fn value(mdp: &LinearMDP, policy: &Policy, setting: Setting) -> f64 {
    let mu = occupancy(mdp, policy, setting);
    (0..mdp.num_pairs())
        .map(|i| mu[i] * reward(mdp, i / mdp.num_actions(), i % mdp.num_actions()))
        .sum()
}

/// Best return over all deterministic policies.
pub fn best_return(mdp: &LinearMDP, setting: Setting) -> f64 {
    let (s, a) = (mdp.num_states(), mdp.num_actions());
    let total = a.pow(s as u32);
    (0..total)
        .map(|code| {
            let mut c = code;
            let actions: Vec<usize> = (0..s)
                .map(|_| {
                    let b = c % a;
                    c /= a;
                    b
                })
                .collect();
            value(mdp, &Policy::deterministic(&actions, a).unwrap(), setting)
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

/// `Σ μ_B φφᵀ`.
pub fn covariance(mdp: &LinearMDP, mu_b: &DVector<f64>) -> DMatrix<f64> {
    let d = mdp.dim();
    let mut lam = DMatrix::zeros(d, d);
    for x in 0..mdp.num_states() {
        for a in 0..mdp.num_actions() {
            let f = phi(mdp, x, a);
            lam += &f * f.transpose() * mu_b[pair(mdp, x, a)];
        }
    }
    lam
}

/// `M^p` for symmetric positive definite `M` via its eigendecomposition.
pub fn spd_power(m: &DMatrix<f64>, p: f64) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(m.clone());
    let vals = eig.eigenvalues.map(|v| v.max(0.0).powf(p));
    &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose()
}

/// Softmax policy `π(a|x) ∝ exp(α⟨φ(x,a), acc⟩)`.
pub fn softmax_policy(mdp: &LinearMDP, acc: &DVector<f64>, alpha: f64) -> Policy {
    let (s, na) = (mdp.num_states(), mdp.num_actions());
    let mut probs = DMatrix::zeros(s, na);
    for x in 0..s {
        let logits: Vec<f64> = (0..na).map(|a| alpha * phi(mdp, x, a).dot(acc)).collect();
        let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = logits.iter().map(|l| (l - m).exp()).sum();
        for a in 0..na {
            probs[(x, a)] = (logits[a] - m).exp() / z;
        }
    }
    Policy::new(probs).unwrap()
}

/// `v(x) = Σ_a π(a|x) ⟨φ(x,a), θ⟩`.
pub fn linear_values(mdp: &LinearMDP, policy: &Policy, theta: &DVector<f64>) -> DVector<f64> {
    DVector::from_fn(mdp.num_states(), |x, _| {
        (0..mdp.num_actions()).map(|a| policy.prob(x, a) * phi(mdp, x, a).dot(theta)).sum()
    })
}

/// Gradients of the Lagrangian written out term by term.
pub struct ExactGrads {
    pub theta: DVector<f64>,
    pub beta: DVector<f64>,
    /// Average setting only.
    pub rho: f64,
}

pub fn exact_grads(
    mdp: &LinearMDP,
    setting: Setting,
    lam_c: &DMatrix<f64>,
    policy: &Policy,
    beta: &DVector<f64>,
    theta: &DVector<f64>,
    rho: f64,
) -> ExactGrads {
    let d = mdp.dim();
    let g = match setting {
        Setting::Discounted => mdp.discount(),
        Setting::Average => 1.0,
    };
    let lcb = lam_c * beta;
    let mut g_theta = -lcb.clone();
    for x in 0..mdp.num_states() {
        let inflow = mdp.next_state_factor().column(x).dot(&lcb);
        let mass = match setting {
            Setting::Discounted => (1.0 - g) * mdp.init_dist()[x] + g * inflow,
            Setting::Average => inflow,
        };
        for a in 0..mdp.num_actions() {
            g_theta += phi(mdp, x, a) * (policy.prob(x, a) * mass);
        }
    }
    let v = linear_values(mdp, policy, theta);
    let ones = DVector::from_element(d, 1.0);
    let mut residual = mdp.reward_factor() + mdp.next_state_factor() * v * g - theta;
    let mut g_rho = 0.0;
    if setting == Setting::Average {
        // Simplex and one-hot features both satisfy Φ·1 = 1.
        residual -= &ones * rho;
        g_rho = 1.0 - beta.dot(&(lam_c * &ones));
    }
    ExactGrads {
        theta: g_theta,
        beta: lam_c * residual,
        rho: g_rho,
    }
}

/// Expectation of the library's stochastic estimators over every
/// `(x⁰, (x,a), x', a')` outcome, weighted by its probability.
pub fn expected_estimates(
    mdp: &LinearMDP,
    setting: Setting,
    c: f64,
    mu_b: &DVector<f64>,
    acc: &DVector<f64>,
    alpha: f64,
    beta: &DVector<f64>,
    theta: &DVector<f64>,
    rho: f64,
) -> ExactGrads {
    let cov = Covariance::new(covariance(mdp, mu_b)).unwrap();
    let ctx = EstimatorContext::new(mdp, c, Some(&cov)).unwrap();
    let scaled = ctx.precondition(beta.as_slice());
    let it = Iterate {
        logits: acc.as_slice(),
        alpha,
        beta: beta.as_slice(),
        scaled_beta: &scaled,
        theta: theta.as_slice(),
        rho,
    };
    let policy = softmax_policy(mdp, acc, alpha);
    let d = mdp.dim();
    let (s, na) = (mdp.num_states(), mdp.num_actions());
    let mut ws = Workspace::new(na);
    let mut out = vec![0.0; d];
    let mut e_theta = DVector::zeros(d);
    let mut e_beta = DVector::zeros(d);
    let mut e_rho = 0.0;
    let x0s: Vec<Option<usize>> = match setting {
        Setting::Discounted => (0..s).map(Some).collect(),
        Setting::Average => vec![None],
    };
    for &x0 in &x0s {
        let w0 = x0.map_or(1.0, |x| mdp.init_dist()[x]);
        for x in 0..s {
            for a in 0..na {
                for y in 0..s {
                    let w = w0 * mu_b[pair(mdp, x, a)] * kernel(mdp, x, a, y);
                    if w == 0.0 {
                        continue;
                    }
                    let sample = Transition { x0, x, a, r: reward(mdp, x, a), x_next: y };
                    match setting {
                        Setting::Discounted => {
                            grad_theta_estimate(&ctx, &sample, &it, &mut ws, &mut out).unwrap();
                            e_theta += DVector::from_column_slice(&out) * w;
                            grad_beta_estimate(&ctx, &sample, &it, &mut ws, &mut out);
                            e_beta += DVector::from_column_slice(&out) * w;
                        }
                        Setting::Average => {
                            for b in 0..na {
                                let wb = w * policy.prob(y, b);
                                let g_rho = inner_grads_avg(&ctx, &sample, b, &it, &mut out);
                                e_rho += wb * g_rho;
                                e_theta += DVector::from_column_slice(&out) * wb;
                            }
                            outer_grad_beta_avg(&ctx, &sample, &it, &mut ws, &mut out);
                            e_beta += DVector::from_column_slice(&out) * w;
                        }
                    }
                }
            }
        }
    }
    ExactGrads {
        theta: e_theta,
        beta: e_beta,
        rho: e_rho,
    }
}

/// Largest deviation between estimator expectations and exact gradients
/// over random iterates on `mdp`, for both settings and `c ∈ {1/2, 1}`.
pub fn unbiasedness_error(mdp: &LinearMDP, seed: u64) -> f64 {
    let mut r = rng(seed);
    let (s, na, d) = (mdp.num_states(), mdp.num_actions(), mdp.dim());
    let mut worst: f64 = 0.0;
    for setting in [Setting::Discounted, Setting::Average] {
        let behavior = random_policy(s, na, &mut r);
        let mu_b = occupancy(mdp, &behavior, setting);
        let lam = covariance(mdp, &mu_b);
        for c in [0.5, 1.0] {
            for _ in 0..3 {
                let acc = random_vector(d, 2.0, &mut r);
                let alpha = r.gen_range(0.1..2.0);
                let beta = random_vector(d, 3.0, &mut r);
                let theta = random_vector(d, 3.0, &mut r);
                let rho = r.gen_range(0.0..1.0);
                let policy = softmax_policy(mdp, &acc, alpha);
                let exact = exact_grads(mdp, setting, &spd_power(&lam, c), &policy, &beta, &theta, rho);
                let est = expected_estimates(mdp, setting, c, &mu_b, &acc, alpha, &beta, &theta, rho);
                worst = worst
                    .max((exact.theta - est.theta).amax())
                    .max((exact.beta - est.beta).amax())
                    .max((exact.rho - est.rho).abs());
            }
        }
    }
    worst
}

/// Random iterate sequence of length `t` with `‖θ‖, ‖β‖` up to `scale`.
pub fn random_iterates(mdp: &LinearMDP, t: usize, scale: f64, r: &mut ChaCha8Rng) -> Iterates {
    let (s, na, d) = (mdp.num_states(), mdp.num_actions(), mdp.dim());
    Iterates {
        policies: (0..t).map(|_| random_policy(s, na, r)).collect(),
        thetas: (0..t).map(|_| random_vector(d, scale, r)).collect(),
        betas: (0..t).map(|_| random_vector(d, scale, r)).collect(),
        rhos: (0..t).map(|_| r.gen_range(0.0..1.0)).collect(),
    }
}

/// Mixture suboptimality of an iterate sequence from the reference oracle.
pub fn mixture_suboptimality(mdp: &LinearMDP, setting: Setting, iterates: &Iterates) -> f64 {
    let mean = iterates.policies.iter().map(|p| value(mdp, p, setting)).sum::<f64>()
        / iterates.policies.len() as f64;
    best_return(mdp, setting) - mean
}

/// Random symmetric matrix with eigenvalues in `[0.5, 5]`.
pub fn well_conditioned_spd(d: usize, r: &mut ChaCha8Rng) -> DMatrix<f64> {
    let q = DMatrix::from_fn(d, d, |_, _| r.gen_range(-1.0..1.0)).qr().q();
    let vals = DVector::from_fn(d, |_, _| r.gen_range(0.5..5.0));
    let m = &q * DMatrix::from_diagonal(&vals) * q.transpose();
    (&m + m.transpose()) * 0.5
}

/// Randomized checks of the numerical kernels; `Err` names the first
/// violated property.
pub fn numerics_suite(cases: usize, seed: u64) -> Result<(), String> {
    use lporl::numerics::{project_ball, psd_power, softmax_rows, BallDomain, EIG_FLOOR};
    let mut r = rng(seed);
    let exps = [-1.0, -0.5, 0.0, 0.5, 1.0];
    for case in 0..cases {
        let d = r.gen_range(1..=6);
        let m = well_conditioned_spd(d, &mut r);
        let a = exps[r.gen_range(0..exps.len())];
        let b = exps[r.gen_range(0..exps.len())];
        let pa = psd_power(&m, a, EIG_FLOOR).map_err(|e| e.to_string())?;
        let pb = psd_power(&m, b, EIG_FLOOR).map_err(|e| e.to_string())?;
        let pab = psd_power(&m, a + b, EIG_FLOOR).map_err(|e| e.to_string())?;
        let err = (&pa * &pb - &pab).amax();
        if err > 1e-7 {
            return Err(format!("case {case}: M^{a}·M^{b} vs M^{} differs by {err:e}", a + b));
        }
        let half = psd_power(&m, 0.5, EIG_FLOOR).map_err(|e| e.to_string())?;
        let err = (&half * &half - &m).amax();
        if err > 1e-8 {
            return Err(format!("case {case}: (M^1/2)² vs M differs by {err:e}"));
        }

        let radius = r.gen_range(0.1..3.0);
        let dom = BallDomain::new(radius).unwrap();
        let v = random_vector(d, 4.0, &mut r);
        let w = random_vector(d, 4.0, &mut r);
        let pv = project_ball(&v, &dom);
        if project_ball(&pv, &dom) != pv {
            return Err(format!("case {case}: projection is not idempotent"));
        }
        if pv.norm() > radius {
            return Err(format!("case {case}: projected norm {} exceeds {radius}", pv.norm()));
        }
        let pw = project_ball(&w, &dom);
        if (&pv - &pw).norm() > (&v - &w).norm() + 1e-12 {
            return Err(format!("case {case}: projection expanded a distance"));
        }
        let inside = project_ball(&(random_vector(d, 1.0, &mut r) * radius), &dom);
        if (&pv - &inside).norm() > (&v - &inside).norm() + 1e-12 {
            return Err(format!("case {case}: projection moved away from a point of the ball"));
        }

        let (s, na) = (r.gen_range(1..=5), r.gen_range(1..=5));
        let logits = DMatrix::from_fn(s, na, |_, _| r.gen_range(-20.0..20.0));
        let shift = r.gen_range(-100.0..100.0);
        let p = softmax_rows(&logits).map_err(|e| e.to_string())?;
        let q = softmax_rows(&logits.add_scalar(shift)).map_err(|e| e.to_string())?;
        for x in 0..s {
            let row_sum: f64 = (0..na).map(|b| p.prob(x, b)).sum();
            if (row_sum - 1.0).abs() > 1e-12 {
                return Err(format!("case {case}: softmax row sums to {row_sum}"));
            }
            for b in 0..na {
                if (p.prob(x, b) - q.prob(x, b)).abs() > 1e-12 {
                    return Err(format!("case {case}: softmax is not shift invariant"));
                }
            }
            let arg_logit = (0..na).max_by(|&i, &j| logits[(x, i)].total_cmp(&logits[(x, j)])).unwrap();
            let arg_prob = (0..na).max_by(|&i, &j| p.prob(x, i).total_cmp(&p.prob(x, j))).unwrap();
            if logits[(x, arg_prob)] != logits[(x, arg_logit)] {
                return Err(format!("case {case}: softmax argmax differs from logit argmax"));
            }
        }
    }
    Ok(())
}

/// Coverage ratios of `target` under `behavior`, from the tabular formulas.
pub struct TabularRatios {
    pub c_phi_half: f64,
    pub c_phi_one: f64,
    pub c_diamond: f64,
    pub chi_square: f64,
}

pub fn tabular_ratios(mu_star: &DVector<f64>, mu_b: &DVector<f64>) -> TabularRatios {
    let mut t = TabularRatios { c_phi_half: 0.0, c_phi_one: 0.0, c_diamond: 0.0, chi_square: 0.0 };
    for (&p, &q) in mu_star.iter().zip(mu_b.iter()) {
        t.c_phi_half += p * p / q;
        t.c_phi_one += (p / q).powi(2);
        t.c_diamond += p / q;
        t.chi_square += (p - q).powi(2) / q;
    }
    t
}

/// `Var_{μ*}(Λ^{-1/2}φ)` computed as `E‖Z‖² - ‖EZ‖²`.
pub fn whitened_variance(mdp: &LinearMDP, mu_star: &DVector<f64>, lam: &DMatrix<f64>) -> f64 {
    let w = spd_power(lam, -0.5);
    let mut second = 0.0;
    let mut mean = DVector::zeros(mdp.dim());
    for i in 0..mdp.num_pairs() {
        let z = &w * mdp.features().row(i).transpose();
        second += mu_star[i] * z.norm_squared();
        mean += z * mu_star[i];
    }
    second - mean.norm_squared()
}

/// Ordering, variance and `χ²` identities on random tabular instances with
/// random behavior and optimal target. Tolerances are relative to the size
/// of the ratios involved (`1e-9·max(1, C◇)`).
pub fn coverage_suite(count: usize, seed: u64) -> Result<(), String> {
    use lporl::coverage::coverage_report;
    use lporl::linmdp::optimal_policy;
    let mut r = rng(seed);
    for (i, mdp) in small_tabular(count, seed).iter().enumerate() {
        let setting = if i % 2 == 0 { Setting::Discounted } else { Setting::Average };
        let behavior = random_policy(mdp.num_states(), mdp.num_actions(), &mut r);
        let (target, _) = optimal_policy(mdp, setting, 1e-12).map_err(|e| e.to_string())?;
        let rep = coverage_report(mdp, &behavior, &target, setting).map_err(|e| format!("instance {i}: {e}"))?;
        let tol = 1e-9 * rep.c_diamond.max(1.0);
        let d = mdp.dim() as f64;
        if rep.c_dagger > rep.c_diamond + tol || rep.c_diamond > d * rep.c_dagger + tol {
            return Err(format!(
                "instance {i}: ordering fails (C† {}, C◇ {}, d {d})",
                rep.c_dagger, rep.c_diamond
            ));
        }
        let mu_b = occupancy(mdp, &behavior, setting);
        let mu_star = occupancy(mdp, &target, setting);
        let var = whitened_variance(mdp, &mu_star, &covariance(mdp, &mu_b));
        if (rep.c_phi_half + var - rep.c_diamond).abs() > tol {
            return Err(format!(
                "instance {i}: C_1/2 + Var = {} but C◇ = {}",
                rep.c_phi_half + var,
                rep.c_diamond
            ));
        }
        let tab = tabular_ratios(&mu_star, &mu_b);
        if (rep.c_phi_half - 1.0 - tab.chi_square).abs() > tol {
            return Err(format!(
                "instance {i}: C_1/2 = {} but 1 + χ² = {}",
                rep.c_phi_half,
                1.0 + tab.chi_square
            ));
        }
        let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1.0);
        let worst = rel(rep.c_phi_half, tab.c_phi_half)
            .max(rel(rep.c_phi_one, tab.c_phi_one))
            .max(rel(rep.c_diamond, tab.c_diamond));
        if worst > 1e-9 {
            return Err(format!("instance {i}: matrix and tabular ratios differ by {worst:e} (relative)"));
        }
        if !rep.flags.all_hold() {
            return Err(format!("instance {i}: report flags {:?}", rep.flags));
        }
    }
    Ok(())
}
