//! Linear MDP data model, validation, file format, and exact small-scale
//! oracles (occupancy measures, policy values, optimal policies).
//!
//! State-action pairs are flattened as `x * num_actions + a` everywhere.

mod generate;
mod io;
mod oracle;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use generate::{random_linear_mdp, random_tabular_mdp, tabular_to_linear};
pub use io::{LinearSpec, MdpFile, TabularSpec};
pub use oracle::{
    discounted_occupancy, mixture_return, occupancy, optimal_policy, policy_return,
    policy_values, state_rewards, state_transitions, stationary_distribution, OccupancyMeasure,
    ValueSolution,
};
pub(crate) use oracle::state_average;

const NEG_CLAMP: f64 = 1e-12;
const ROW_SUM_TOL: f64 = 1e-9;
const REWARD_TOL: f64 = 1e-9;
const INIT_SUM_TOL: f64 = 1e-12;
const RANK_TOL: f64 = 1e-10;

/// Discounted or average-reward criterion.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Setting {
    Discounted,
    Average,
}

impl std::fmt::Display for Setting {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Setting::Discounted => write!(f, "discounted"),
            Setting::Average => write!(f, "average"),
        }
    }
}

/// Norm bounds on the feature map, next-state factor and reward factor.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureBounds {
    /// max over pairs of `‖φ(x,a)‖₂`
    pub phi: f64,
    /// `‖Σ_x' ψ(x')‖₂`
    pub psi: f64,
    /// `‖ω‖₂`
    pub omega: f64,
}

/// Row-major copy of the feature matrix so that `φ(x,a)` is a contiguous slice.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureTable {
    data: Vec<f64>,
    num_states: usize,
    num_actions: usize,
    dim: usize,
}

impl FeatureTable {
    pub fn from_matrix(features: &DMatrix<f64>, num_states: usize, num_actions: usize) -> Self {
        let dim = features.ncols();
        let mut data = Vec::with_capacity(features.nrows() * dim);
        for row in features.row_iter() {
            data.extend(row.iter());
        }
        Self {
            data,
            num_states,
            num_actions,
            dim,
        }
    }

    #[inline]
    pub fn phi(&self, x: usize, a: usize) -> &[f64] {
        let start = (x * self.num_actions + a) * self.dim;
        &self.data[start..start + self.dim]
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn num_states(&self) -> usize {
        self.num_states
    }

    #[inline]
    pub fn num_actions(&self) -> usize {
        self.num_actions
    }
}

/// A linear MDP: `P = ΦΨ`, `r = Φω`.
#[derive(Clone, Debug)]
pub struct LinearMDP {
    num_states: usize,
    num_actions: usize,
    features: DMatrix<f64>,
    next_state_factor: DMatrix<f64>,
    reward_factor: DVector<f64>,
    init_dist: DVector<f64>,
    discount: f64,
    bounds: FeatureBounds,
    transitions: DMatrix<f64>,
    rewards: DVector<f64>,
    feature_pinv: DMatrix<f64>,
    table: FeatureTable,
}

impl LinearMDP {
    /// Builds and validates a linear MDP.
    ///
    /// Tiny negative transition entries (down to `-1e-12`) are clamped and
    /// the affected rows renormalized; anything larger is rejected.
    pub fn new(
        num_states: usize,
        num_actions: usize,
        features: DMatrix<f64>,
        next_state_factor: DMatrix<f64>,
        reward_factor: DVector<f64>,
        init_dist: DVector<f64>,
        discount: f64,
    ) -> Result<Self> {
        if num_states == 0 || num_actions == 0 {
            return Err(Error::DimensionMismatch(
                "state and action counts must be positive".into(),
            ));
        }
        let pairs = num_states * num_actions;
        let dim = features.ncols();
        if dim == 0 || features.nrows() != pairs {
            return Err(Error::DimensionMismatch(format!(
                "features must be {pairs} x d with d > 0, got {} x {dim}",
                features.nrows()
            )));
        }
        if next_state_factor.shape() != (dim, num_states) {
            return Err(Error::DimensionMismatch(format!(
                "next-state factor must be {dim} x {num_states}, got {:?}",
                next_state_factor.shape()
            )));
        }
        if reward_factor.len() != dim || init_dist.len() != num_states {
            return Err(Error::DimensionMismatch(
                "reward factor must have length d and initial distribution length |X|".into(),
            ));
        }
        if !(0.0..1.0).contains(&discount) {
            return Err(Error::ConfigInvalid(format!(
                "discount must lie in [0, 1), got {discount}"
            )));
        }
        let all_finite = features.iter().all(|v| v.is_finite())
            && next_state_factor.iter().all(|v| v.is_finite())
            && reward_factor.iter().all(|v| v.is_finite())
            && init_dist.iter().all(|v| v.is_finite());
        if !all_finite {
            return Err(Error::NonFinite);
        }

        check_distribution(init_dist.as_slice(), INIT_SUM_TOL, "initial distribution", 0)?;

        let mut transitions = &features * &next_state_factor;
        for (i, mut row) in transitions.row_iter_mut().enumerate() {
            if row.iter().any(|&v| v < -NEG_CLAMP) {
                return Err(Error::InvalidDistribution {
                    what: "transition row has a negative entry",
                    index: i,
                    sum: row.sum(),
                });
            }
            for v in row.iter_mut() {
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::InvalidDistribution {
                    what: "transition row does not sum to one",
                    index: i,
                    sum,
                });
            }
            row /= sum;
        }

        let mut rewards = &features * &reward_factor;
        for (i, r) in rewards.iter_mut().enumerate() {
            if *r < -REWARD_TOL || *r > 1.0 + REWARD_TOL {
                return Err(Error::RewardOutOfRange { index: i, value: *r });
            }
            *r = r.clamp(0.0, 1.0);
        }

        let svd = features.clone().svd(true, true);
        let min_sv = svd.singular_values.iter().cloned().fold(f64::INFINITY, f64::min);
        if !(min_sv > RANK_TOL) {
            return Err(Error::RankDeficient {
                min_singular_value: min_sv,
            });
        }
        let feature_pinv = svd
            .pseudo_inverse(0.0)
            .map_err(|_| Error::SingularSystem)?;

        let phi_bound = features
            .row_iter()
            .map(|row| row.norm())
            .fold(0.0_f64, f64::max);
        let psi_sum = next_state_factor.column_sum();
        let bounds = FeatureBounds {
            phi: phi_bound,
            psi: psi_sum.norm(),
            omega: reward_factor.norm(),
        };
        let table = FeatureTable::from_matrix(&features, num_states, num_actions);

        Ok(Self {
            num_states,
            num_actions,
            features,
            next_state_factor,
            reward_factor,
            init_dist,
            discount,
            bounds,
            transitions,
            rewards,
            feature_pinv,
            table,
        })
    }

    /// Returns the same MDP with a different discount factor.
    pub fn with_discount(mut self, discount: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&discount) {
            return Err(Error::ConfigInvalid(format!(
                "discount must lie in [0, 1), got {discount}"
            )));
        }
        self.discount = discount;
        Ok(self)
    }

    /// Re-checks every structural invariant.
    pub fn validate(&self) -> Result<()> {
        Self::new(
            self.num_states,
            self.num_actions,
            self.features.clone(),
            self.next_state_factor.clone(),
            self.reward_factor.clone(),
            self.init_dist.clone(),
            self.discount,
        )
        .map(|_| ())
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }
    pub fn num_actions(&self) -> usize {
        self.num_actions
    }
    pub fn num_pairs(&self) -> usize {
        self.num_states * self.num_actions
    }
    pub fn dim(&self) -> usize {
        self.features.ncols()
    }
    pub fn features(&self) -> &DMatrix<f64> {
        &self.features
    }
    pub fn next_state_factor(&self) -> &DMatrix<f64> {
        &self.next_state_factor
    }
    pub fn reward_factor(&self) -> &DVector<f64> {
        &self.reward_factor
    }
    pub fn init_dist(&self) -> &DVector<f64> {
        &self.init_dist
    }
    pub fn discount(&self) -> f64 {
        self.discount
    }
    pub fn bounds(&self) -> FeatureBounds {
        self.bounds
    }
    /// `P = ΦΨ`, one row per state-action pair.
    pub fn transitions(&self) -> &DMatrix<f64> {
        &self.transitions
    }
    /// `r = Φω`.
    pub fn rewards(&self) -> &DVector<f64> {
        &self.rewards
    }
    pub fn feature_table(&self) -> &FeatureTable {
        &self.table
    }

    #[inline]
    pub fn pair(&self, x: usize, a: usize) -> usize {
        x * self.num_actions + a
    }

    #[inline]
    pub fn reward(&self, x: usize, a: usize) -> f64 {
        self.rewards[self.pair(x, a)]
    }

    /// Least-squares solution of `Φθ = q` (exact when `q` is realizable).
    pub fn fit_features(&self, q: &DVector<f64>) -> DVector<f64> {
        &self.feature_pinv * q
    }

    /// Jin et al.-style bound `D_ω + D_ψ / (1 - γ)` on `‖θ^π‖₂` for the discounted setting.
    pub fn discounted_theta_bound(&self) -> f64 {
        self.bounds.omega + self.bounds.psi / (1.0 - self.discount)
    }
}

fn check_distribution(v: &[f64], tol: f64, what: &'static str, index: usize) -> Result<()> {
    let sum: f64 = v.iter().sum();
    if v.iter().any(|&p| p < 0.0) || (sum - 1.0).abs() > tol {
        return Err(Error::InvalidDistribution { what, index, sum });
    }
    Ok(())
}

/// A stationary Markov policy, one row of action probabilities per state.
#[derive(Clone, Debug, PartialEq)]
pub struct Policy {
    probs: DMatrix<f64>,
}

impl Policy {
    pub fn new(probs: DMatrix<f64>) -> Result<Self> {
        if probs.nrows() == 0 || probs.ncols() == 0 {
            return Err(Error::DimensionMismatch("empty policy table".into()));
        }
        for (x, row) in probs.row_iter().enumerate() {
            let sum: f64 = row.iter().sum();
            if row.iter().any(|p| !p.is_finite() || *p < 0.0) || (sum - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidDistribution {
                    what: "policy row",
                    index: x,
                    sum,
                });
            }
        }
        Ok(Self { probs })
    }

    pub fn uniform(num_states: usize, num_actions: usize) -> Self {
        Self {
            probs: DMatrix::from_element(num_states, num_actions, 1.0 / num_actions as f64),
        }
    }

    pub fn deterministic(actions: &[usize], num_actions: usize) -> Result<Self> {
        let mut probs = DMatrix::zeros(actions.len(), num_actions);
        for (x, &a) in actions.iter().enumerate() {
            if a >= num_actions {
                return Err(Error::DimensionMismatch(format!(
                    "action {a} out of range for state {x}"
                )));
            }
            probs[(x, a)] = 1.0;
        }
        Policy::new(probs)
    }

    /// `(1 - ε)·π + ε·uniform`.
    pub fn eps_mix(target: &Policy, eps: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&eps) {
            return Err(Error::ConfigInvalid(format!("eps must lie in [0, 1], got {eps}")));
        }
        let uniform = 1.0 / target.num_actions() as f64;
        let probs = target.probs.map(|p| (1.0 - eps) * p + eps * uniform);
        Ok(Self { probs })
    }

    pub fn num_states(&self) -> usize {
        self.probs.nrows()
    }
    pub fn num_actions(&self) -> usize {
        self.probs.ncols()
    }
    pub fn probs(&self) -> &DMatrix<f64> {
        &self.probs
    }

    #[inline]
    pub fn prob(&self, x: usize, a: usize) -> f64 {
        self.probs[(x, a)]
    }

    pub(crate) fn from_probs_unchecked(probs: DMatrix<f64>) -> Self {
        Self { probs }
    }

    /// Checks that this policy matches the MDP's state and action counts.
    pub fn check_shape(&self, mdp: &LinearMDP) -> Result<()> {
        if self.num_states() != mdp.num_states() || self.num_actions() != mdp.num_actions() {
            return Err(Error::DimensionMismatch(format!(
                "policy is {}x{}, MDP has {} states and {} actions",
                self.num_states(),
                self.num_actions(),
                mdp.num_states(),
                mdp.num_actions()
            )));
        }
        Ok(())
    }
}
