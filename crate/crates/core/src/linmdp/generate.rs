use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::LinearMDP;
use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};

const DEFAULT_DISCOUNT: f64 = 0.9;
const RANK_RETRIES: usize = 32;

/// Embeds a tabular MDP as a linear one with one-hot features (`d = |X|·|A|`).
///
/// `p[x][a]` is the next-state distribution and `r[x][a]` the reward.
pub fn tabular_to_linear(
    p: &[Vec<Vec<f64>>],
    r: &[Vec<f64>],
    nu0: &[f64],
    gamma: f64,
) -> Result<LinearMDP> {
    let num_states = p.len();
    if num_states == 0 || r.len() != num_states || nu0.len() != num_states {
        return Err(Error::DimensionMismatch(
            "transition table, reward table and initial distribution disagree on |X|".into(),
        ));
    }
    let num_actions = p[0].len();
    if num_actions == 0 {
        return Err(Error::DimensionMismatch("no actions".into()));
    }
    let pairs = num_states * num_actions;
    let mut psi = DMatrix::zeros(pairs, num_states);
    let mut omega = DVector::zeros(pairs);
    for x in 0..num_states {
        if p[x].len() != num_actions || r[x].len() != num_actions {
            return Err(Error::DimensionMismatch(format!(
                "state {x} does not have {num_actions} actions"
            )));
        }
        for a in 0..num_actions {
            let i = x * num_actions + a;
            let row = &p[x][a];
            if row.len() != num_states {
                return Err(Error::DimensionMismatch(format!(
                    "transition row ({x}, {a}) has length {}",
                    row.len()
                )));
            }
            let sum: f64 = row.iter().sum();
            if row.iter().any(|&v| v < 0.0) || (sum - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidDistribution {
                    what: "transition row",
                    index: i,
                    sum,
                });
            }
            for (y, &v) in row.iter().enumerate() {
                psi[(i, y)] = v;
            }
            omega[i] = r[x][a];
        }
    }
    LinearMDP::new(
        num_states,
        num_actions,
        DMatrix::identity(pairs, pairs),
        psi,
        omega,
        DVector::from_column_slice(nu0),
        gamma,
    )
}

fn dirichlet_ones<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    // Normalized unit exponentials are uniform on the simplex.
    let draws: Vec<f64> = (0..n).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
    let total: f64 = draws.iter().sum();
    draws.into_iter().map(|v| v / total).collect()
}

/// Random linear MDP built by soft state aggregation.
///
/// Feature rows lie on the `d`-simplex and each of the `d` latent
/// next-state distributions is a distribution over states, so `P = ΦΨ` is
/// row-stochastic and `r = Φω ∈ [0,1]` by convexity. The discount defaults to
/// 0.9; use [`LinearMDP::with_discount`] to change it.
pub fn random_linear_mdp(
    num_states: usize,
    num_actions: usize,
    dim: usize,
    seed: u64,
) -> Result<LinearMDP> {
    let pairs = num_states * num_actions;
    if num_states == 0 || num_actions == 0 || dim == 0 || dim > pairs {
        return Err(Error::DimensionMismatch(format!(
            "need 1 <= d <= |X||A| (got d = {dim}, |X||A| = {pairs})"
        )));
    }
    let mut rng = stream_rng(seed, Stream::Generator);
    let mut psi = DMatrix::zeros(dim, num_states);
    for k in 0..dim {
        for (y, v) in dirichlet_ones(&mut rng, num_states).into_iter().enumerate() {
            psi[(k, y)] = v;
        }
    }
    let omega = DVector::from_fn(dim, |_, _| rng.gen::<f64>());
    let nu0 = DVector::from_vec(dirichlet_ones(&mut rng, num_states));

    let mut last_sv = 0.0;
    for _ in 0..RANK_RETRIES {
        let mut phi = DMatrix::zeros(pairs, dim);
        for i in 0..pairs {
            for (k, v) in dirichlet_ones(&mut rng, dim).into_iter().enumerate() {
                phi[(i, k)] = v;
            }
        }
        match LinearMDP::new(
            num_states,
            num_actions,
            phi,
            psi.clone(),
            omega.clone(),
            nu0.clone(),
            DEFAULT_DISCOUNT,
        ) {
            Ok(mdp) => return Ok(mdp),
            Err(Error::RankDeficient { min_singular_value }) => last_sv = min_singular_value,
            Err(e) => return Err(e),
        }
    }
    Err(Error::RankDeficient {
        min_singular_value: last_sv,
    })
}

/// Random tabular MDP with Dirichlet transition rows, uniform rewards and a
/// Dirichlet initial distribution, embedded with one-hot features.
pub fn random_tabular_mdp(
    num_states: usize,
    num_actions: usize,
    gamma: f64,
    seed: u64,
) -> Result<LinearMDP> {
    if num_states == 0 || num_actions == 0 {
        return Err(Error::DimensionMismatch("empty state or action set".into()));
    }
    let mut rng = stream_rng(seed, Stream::Generator);
    let p: Vec<Vec<Vec<f64>>> = (0..num_states)
        .map(|_| {
            (0..num_actions)
                .map(|_| dirichlet_ones(&mut rng, num_states))
                .collect()
        })
        .collect();
    let r: Vec<Vec<f64>> = (0..num_states)
        .map(|_| (0..num_actions).map(|_| rng.gen::<f64>()).collect())
        .collect();
    let nu0 = dirichlet_ones(&mut rng, num_states);
    tabular_to_linear(&p, &r, &nu0, gamma)
}
