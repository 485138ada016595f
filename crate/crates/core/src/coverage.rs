//! Coverage ratios: how well the behavior data covers a target occupancy.
//!
//! All ratios are computed in feature space from a target occupancy `μ*`
//! over state-action pairs and the behavior covariance `Λ = E_{μ_B}[φφᵀ]`.
//! With one-hot features they reduce to the familiar tabular quantities
//! (`Σμ*²/μ_B`, `Σ(μ*/μ_B)²`, `Σμ*/μ_B`).
//!
//! Note on the tabular `χ²` identity: `1 + χ²(μ*‖μ_B) = Σμ*²/μ_B`, which is
//! the `c = 1/2` ratio. The `c = 1` ratio `Σ(μ*/μ_B)²` is generally larger
//! (e.g. `μ_B = (½, ½)`, `μ* = (1, 0)` gives 4 versus 2), so the report only
//! checks the identity for `c = 1/2`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linmdp::{occupancy, LinearMDP, Policy, Setting};
use crate::sampling::{draw_dataset, empirical_lambda, Covariance, Dataset, Source};

/// Tolerance used for the ordering and identity flags.
pub const CHECK_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub c_phi_half: f64,
    pub c_phi_one: f64,
    pub c_diamond: f64,
    pub c_dagger: f64,
    /// `None` when the target puts mass on a pair the behavior never visits.
    pub chi_square: Option<f64>,
    /// `C◇ - C_{φ,1/2}`.
    pub variance_term: f64,
    /// `Var_{μ*}(Λ^{-1/2}φ)` computed directly as `E‖Z‖² - ‖EZ‖²`.
    pub variance_direct: f64,
    pub dim: usize,
    pub one_hot: bool,
    /// Built from sample estimates rather than exact occupancies.
    pub approximate: bool,
    pub flags: OrderingFlags,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrderingFlags {
    /// `C† ≤ C◇`.
    pub dagger_le_diamond: bool,
    /// `C◇ ≤ d·C†`.
    pub diamond_le_dim_dagger: bool,
    /// `C_{φ,1/2} ≤ C◇`.
    pub half_le_diamond: bool,
    /// `C_{φ,1/2} + Var = C◇`.
    pub variance_identity: bool,
    /// `C_{φ,1/2} = 1 + χ²`; only checked for one-hot features.
    pub chi_square_identity: Option<bool>,
}

impl OrderingFlags {
    pub fn all_hold(&self) -> bool {
        self.dagger_le_diamond
            && self.diamond_le_dim_dagger
            && self.half_le_diamond
            && self.variance_identity
            && self.chi_square_identity.unwrap_or(true)
    }
}

fn check_len(mu: &DVector<f64>, features: &DMatrix<f64>) -> Result<()> {
    if mu.len() != features.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "occupancy has {} entries but features have {} rows",
            mu.len(),
            features.nrows()
        )));
    }
    Ok(())
}

/// `E_{μ*}[φφᵀ]`.
pub fn second_moment(mu_star: &DVector<f64>, features: &DMatrix<f64>) -> DMatrix<f64> {
    let weighted = DMatrix::from_fn(features.nrows(), features.ncols(), |i, j| mu_star[i] * features[(i, j)]);
    let m = features.transpose() * weighted;
    (&m + m.transpose()) * 0.5
}

/// `E_{μ*}[φ]ᵀ Λ^{-2c} E_{μ*}[φ]`.
pub fn generalized_ratio(mu_star: &DVector<f64>, lambda: &Covariance, features: &DMatrix<f64>, c: f64) -> Result<f64> {
    check_len(mu_star, features)?;
    let mean = features.transpose() * mu_star;
    let inv = lambda.power(-2.0 * c)?;
    Ok(mean.dot(&(inv.as_ref() * &mean)))
}

/// `E_{μ*}[φᵀΛ⁻¹φ] = Tr(M Λ⁻¹)`.
pub fn diamond_ratio(mu_star: &DVector<f64>, lambda: &Covariance, features: &DMatrix<f64>) -> Result<f64> {
    check_len(mu_star, features)?;
    let inv = lambda.power(-1.0)?;
    Ok((second_moment(mu_star, features) * inv.as_ref()).trace())
}

/// Largest eigenvalue of `Λ^{-1/2} M Λ^{-1/2}`.
pub fn dagger_ratio(mu_star: &DVector<f64>, lambda: &Covariance, features: &DMatrix<f64>) -> Result<f64> {
    check_len(mu_star, features)?;
    let w = lambda.power(-0.5)?;
    let whitened = w.as_ref() * second_moment(mu_star, features) * w.as_ref();
    let whitened = (&whitened + whitened.transpose()) * 0.5;
    Ok(SymmetricEigen::new(whitened).eigenvalues.max())
}

/// `Σ (μ* - μ_B)² / μ_B`.
pub fn chi_square(mu_star: &DVector<f64>, mu_b: &DVector<f64>) -> Result<f64> {
    if mu_star.len() != mu_b.len() {
        return Err(Error::DimensionMismatch(format!(
            "occupancies have {} and {} entries",
            mu_star.len(),
            mu_b.len()
        )));
    }
    let mut total = 0.0;
    for (index, (&p, &q)) in mu_star.iter().zip(mu_b.iter()).enumerate() {
        if q <= 0.0 {
            if p > 0.0 {
                return Err(Error::UnsupportedPoint { index });
            }
            continue;
        }
        total += (p - q).powi(2) / q;
    }
    Ok(total)
}

/// `Var_{μ*}(Λ^{-1/2}φ) = E‖Z‖² - ‖E Z‖²`.
pub fn whitened_variance(mu_star: &DVector<f64>, lambda: &Covariance, features: &DMatrix<f64>) -> Result<f64> {
    check_len(mu_star, features)?;
    let z = features * lambda.power(-0.5)?.as_ref();
    let mean_sq_norm: f64 = (0..z.nrows()).map(|i| mu_star[i] * z.row(i).norm_squared()).sum();
    let mean = z.transpose() * mu_star;
    Ok(mean_sq_norm - mean.norm_squared())
}

/// Whether every row of `features` is a standard basis vector and every basis
/// vector is used exactly once.
pub fn is_one_hot(features: &DMatrix<f64>) -> bool {
    if features.nrows() != features.ncols() {
        return false;
    }
    let rows_ok = features.row_iter().all(|row| {
        row.iter().filter(|&&v| v == 1.0).count() == 1 && row.iter().all(|&v| v == 0.0 || v == 1.0)
    });
    rows_ok && features.column_iter().all(|col| col.sum() == 1.0)
}

/// Report from an arbitrary target occupancy, behavior covariance and (if
/// known) behavior occupancy.
pub fn report_from_parts(
    mu_star: &DVector<f64>,
    mu_b: Option<&DVector<f64>>,
    lambda: &Covariance,
    features: &DMatrix<f64>,
    approximate: bool,
) -> Result<CoverageReport> {
    let c_phi_half = generalized_ratio(mu_star, lambda, features, 0.5)?;
    let c_phi_one = generalized_ratio(mu_star, lambda, features, 1.0)?;
    let c_diamond = diamond_ratio(mu_star, lambda, features)?;
    let c_dagger = dagger_ratio(mu_star, lambda, features)?;
    let variance_direct = whitened_variance(mu_star, lambda, features)?;
    let chi = match mu_b {
        Some(mu_b) => match chi_square(mu_star, mu_b) {
            Ok(v) => Some(v),
            Err(Error::UnsupportedPoint { .. }) => None,
            Err(e) => return Err(e),
        },
        None => None,
    };
    let dim = features.ncols();
    let one_hot = is_one_hot(features);
    let flags = OrderingFlags {
        dagger_le_diamond: c_dagger <= c_diamond + CHECK_TOL,
        diamond_le_dim_dagger: c_diamond <= dim as f64 * c_dagger + CHECK_TOL,
        half_le_diamond: c_phi_half <= c_diamond + CHECK_TOL,
        variance_identity: (c_phi_half + variance_direct - c_diamond).abs() <= CHECK_TOL,
        chi_square_identity: match (one_hot, chi) {
            (true, Some(chi)) => Some((c_phi_half - 1.0 - chi).abs() <= CHECK_TOL),
            _ => None,
        },
    };
    Ok(CoverageReport {
        c_phi_half,
        c_phi_one,
        c_diamond,
        c_dagger,
        chi_square: chi,
        variance_term: c_diamond - c_phi_half,
        variance_direct,
        dim,
        one_hot,
        approximate,
        flags,
    })
}

/// Coverage of `target` by data from `behavior`, from exact occupancies.
pub fn coverage_report(mdp: &LinearMDP, behavior: &Policy, target: &Policy, setting: Setting) -> Result<CoverageReport> {
    let mu_b = occupancy(mdp, behavior, setting)?.mu;
    let mu_star = occupancy(mdp, target, setting)?.mu;
    let lambda = Covariance::from_occupancy(mdp, &mu_b)?;
    report_from_parts(&mu_star, Some(&mu_b), &lambda, mdp.features(), false)
}

/// Empirical pair frequencies of a dataset.
pub fn empirical_occupancy(dataset: &Dataset, mdp: &LinearMDP) -> DVector<f64> {
    let mut mu = DVector::zeros(mdp.num_pairs());
    for w in &dataset.transitions {
        mu[mdp.pair(w.x, w.a)] += 1.0;
    }
    if !dataset.is_empty() {
        mu /= dataset.len() as f64;
    }
    mu
}

/// Demonstration-only variant: `Λ` and `μ_B` from `dataset`, `μ*` from
/// `target_samples` simulated target transitions. Marked approximate.
pub fn empirical_coverage_report(
    mdp: &LinearMDP,
    dataset: &Dataset,
    target: &Policy,
    target_samples: usize,
    seed: u64,
) -> Result<CoverageReport> {
    let lambda = empirical_lambda(dataset, mdp)?;
    let mu_b = empirical_occupancy(dataset, mdp);
    let target_data = draw_dataset(mdp, target, target_samples, seed, dataset.setting, Source::default())?;
    let mu_star = empirical_occupancy(&target_data, mdp);
    report_from_parts(&mu_star, Some(&mu_b), &lambda, mdp.features(), true)
}
