//! Offline data generation: behavior occupancy, feature covariance and
//! i.i.d. transition datasets.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::{Arc, RwLock};

use nalgebra::DMatrix;
use rand::distributions::{Distribution, WeightedIndex};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linmdp::{occupancy, optimal_policy, LinearMDP, OccupancyMeasure, Policy, Setting};
use crate::numerics::{psd_power, EIG_FLOOR};
use crate::rng::{stream_rng, Stream};

const SYMMETRY_TOL: f64 = 1e-12;

/// One offline record `(x⁰, x, a, r, x')`; `x0` is only present in the
/// discounted setting.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub x0: Option<usize>,
    pub x: usize,
    pub a: usize,
    pub r: f64,
    pub x_next: usize,
}

/// How `(x, a)` pairs are drawn.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Source {
    /// Categorical draw from the exact behavior occupancy.
    #[default]
    ExactCategorical,
    /// Simulated behavior rollouts: geometric stopping in the discounted
    /// setting, a burn-in of `burn_in` steps (default `10·|X|`) in the
    /// average setting.
    Rollout {
        #[serde(default)]
        burn_in: Option<usize>,
    },
}

/// Behavior policy recipes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BehaviorSpec {
    Uniform,
    /// `(1 - eps)·π* + eps·uniform`, with `π*` optimal for the run's setting.
    EpsMix { eps: f64 },
}

impl BehaviorSpec {
    pub fn build(&self, mdp: &LinearMDP, setting: Setting) -> Result<Policy> {
        match *self {
            BehaviorSpec::Uniform => Ok(Policy::uniform(mdp.num_states(), mdp.num_actions())),
            BehaviorSpec::EpsMix { eps } => {
                let (star, _) = optimal_policy(mdp, setting, 1e-12)?;
                Policy::eps_mix(&star, eps)
            }
        }
    }
}

/// Feature covariance `Λ` with a lazily filled cache of its powers.
#[derive(Debug)]
pub struct Covariance {
    lambda: DMatrix<f64>,
    eig_floor: f64,
    approximate: bool,
    powers: RwLock<BTreeMap<u64, Arc<DMatrix<f64>>>>,
}

impl Clone for Covariance {
    fn clone(&self) -> Self {
        Self {
            lambda: self.lambda.clone(),
            eig_floor: self.eig_floor,
            approximate: self.approximate,
            powers: RwLock::new(self.powers.read().expect("cache lock").clone()),
        }
    }
}

impl Covariance {
    pub fn new(lambda: DMatrix<f64>) -> Result<Self> {
        if !lambda.is_square() {
            return Err(Error::DimensionMismatch("covariance must be square".into()));
        }
        let asymmetry = (&lambda - lambda.transpose()).amax();
        if asymmetry > SYMMETRY_TOL {
            return Err(Error::NotSymmetric { asymmetry });
        }
        Ok(Self {
            lambda,
            eig_floor: EIG_FLOOR,
            approximate: false,
            powers: RwLock::new(BTreeMap::new()),
        })
    }

    /// `Σ_z μ(z) φ(z)φ(z)ᵀ = Φᵀ diag(μ) Φ`.
    pub fn from_occupancy(mdp: &LinearMDP, mu: &nalgebra::DVector<f64>) -> Result<Self> {
        let phi = mdp.features();
        let weighted = DMatrix::from_fn(phi.nrows(), phi.ncols(), |i, k| mu[i] * phi[(i, k)]);
        let lambda = phi.transpose() * weighted;
        Self::new((&lambda + lambda.transpose()).scale(0.5))
    }

    /// Marks the matrix as an estimate rather than the exact covariance.
    pub fn into_approximate(mut self) -> Self {
        self.approximate = true;
        self
    }

    pub fn is_approximate(&self) -> bool {
        self.approximate
    }

    pub fn lambda(&self) -> &DMatrix<f64> {
        &self.lambda
    }

    pub fn dim(&self) -> usize {
        self.lambda.nrows()
    }

    pub fn eig_floor(&self) -> f64 {
        self.eig_floor
    }

    pub fn trace(&self) -> f64 {
        self.lambda.trace()
    }

    /// Largest eigenvalue (`‖Λ‖₂` for a PSD matrix).
    pub fn spectral_norm(&self) -> f64 {
        self.lambda.symmetric_eigenvalues().max().max(0.0)
    }

    /// Smallest eigenvalue.
    pub fn min_eigenvalue(&self) -> f64 {
        self.lambda.symmetric_eigenvalues().min()
    }

    /// `Λ^p`, computed once per exponent.
    pub fn power(&self, p: f64) -> Result<Arc<DMatrix<f64>>> {
        let key = p.to_bits();
        if let Some(hit) = self.powers.read().expect("cache lock").get(&key) {
            return Ok(hit.clone());
        }
        let value = Arc::new(psd_power(&self.lambda, p, self.eig_floor)?);
        self.powers
            .write()
            .expect("cache lock")
            .insert(key, value.clone());
        Ok(value)
    }
}

/// Exact behavior occupancy (discounted or stationary) and its covariance.
pub fn behavior_occupancy(
    mdp: &LinearMDP,
    behavior: &Policy,
    setting: Setting,
) -> Result<(OccupancyMeasure, Covariance)> {
    let occ = occupancy(mdp, behavior, setting)?;
    let cov = Covariance::from_occupancy(mdp, &occ.mu)?;
    Ok((occ, cov))
}

/// `(1/n) Σ_t φ(x_t, a_t) φ(x_t, a_t)ᵀ`, flagged as approximate.
pub fn empirical_lambda(dataset: &Dataset, mdp: &LinearMDP) -> Result<Covariance> {
    if dataset.is_empty() {
        return Err(Error::ConfigInvalid("empty dataset".into()));
    }
    let d = mdp.dim();
    let table = mdp.feature_table();
    let mut lambda = DMatrix::zeros(d, d);
    for t in &dataset.transitions {
        let phi = table.phi(t.x, t.a);
        for i in 0..d {
            for j in 0..d {
                lambda[(i, j)] += phi[i] * phi[j];
            }
        }
    }
    lambda /= dataset.len() as f64;
    Ok(Covariance::new(lambda)?.into_approximate())
}

/// Provenance recorded next to a dataset file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetMeta {
    pub mdp_hash: String,
    pub behavior: BehaviorSpec,
    pub seed: u64,
    pub setting: Setting,
    pub source: Source,
    pub n: usize,
}

/// An ordered list of offline transitions.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub transitions: Vec<Transition>,
    pub setting: Setting,
    pub seed: u64,
    pub source: Source,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn cursor(&self) -> DatasetCursor<'_> {
        DatasetCursor {
            records: &self.transitions,
            pos: 0,
        }
    }

    /// Writes the CSV (`x0,x,a,r,x_next`) and returns nothing else; see
    /// [`Dataset::write_with_meta`] for the sidecar.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut writer = csv::Writer::from_writer(file);
        for t in &self.transitions {
            writer.serialize(t)?;
        }
        writer.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    /// Writes the CSV plus a `<path>.json` sidecar describing its provenance.
    pub fn write_with_meta(
        &self,
        path: impl AsRef<Path>,
        mdp: &LinearMDP,
        behavior: BehaviorSpec,
    ) -> Result<DatasetMeta> {
        let path = path.as_ref();
        self.write_csv(path)?;
        let meta = DatasetMeta {
            mdp_hash: mdp.content_hash(),
            behavior,
            seed: self.seed,
            setting: self.setting,
            source: self.source,
            n: self.len(),
        };
        let sidecar = sidecar_path(path);
        let text = serde_json::to_string_pretty(&meta)?;
        std::fs::write(&sidecar, text).map_err(|e| Error::io(&sidecar, e))?;
        Ok(meta)
    }

    /// Reads a CSV written by [`Dataset::write_csv`] with its sidecar.
    pub fn read(path: impl AsRef<Path>) -> Result<(Dataset, DatasetMeta)> {
        let path = path.as_ref();
        let sidecar = sidecar_path(path);
        let text = std::fs::read_to_string(&sidecar).map_err(|e| Error::io(&sidecar, e))?;
        let meta: DatasetMeta = serde_json::from_str(&text)?;
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut reader = csv::Reader::from_reader(file);
        let transitions = reader
            .deserialize()
            .collect::<std::result::Result<Vec<Transition>, _>>()?;
        if transitions.len() != meta.n {
            return Err(Error::ConfigInvalid(format!(
                "{} holds {} records but its sidecar says {}",
                path.display(),
                transitions.len(),
                meta.n
            )));
        }
        let dataset = Dataset {
            transitions,
            setting: meta.setting,
            seed: meta.seed,
            source: meta.source,
        };
        Ok((dataset, meta))
    }
}

fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".json");
    name.into()
}

/// Anything the solvers can pull transitions from.
pub trait SampleSource {
    fn next_transition(&mut self) -> Result<Transition>;

    /// Records still available; `None` for unbounded sources.
    fn remaining(&self) -> Option<usize>;
}

/// Sequential reader over a fixed dataset.
#[derive(Clone, Debug)]
pub struct DatasetCursor<'a> {
    records: &'a [Transition],
    pos: usize,
}

impl SampleSource for DatasetCursor<'_> {
    fn next_transition(&mut self) -> Result<Transition> {
        let t = self
            .records
            .get(self.pos)
            .copied()
            .ok_or(Error::DatasetExhausted {
                needed: self.pos + 1,
                available: self.records.len(),
            })?;
        self.pos += 1;
        Ok(t)
    }

    fn remaining(&self) -> Option<usize> {
        Some(self.records.len() - self.pos)
    }
}

enum PairSampler {
    Categorical(WeightedIndex<f64>),
    Rollout {
        behavior: Vec<WeightedIndex<f64>>,
        continue_prob: f64,
        burn_in: usize,
    },
}

/// Unbounded stream of i.i.d. transitions. Drawing `n` records from a fresh
/// sampler yields exactly the dataset returned by [`draw_dataset`].
pub struct TransitionSampler<'a> {
    mdp: &'a LinearMDP,
    setting: Setting,
    rng: ChaCha8Rng,
    init: WeightedIndex<f64>,
    next_state: Vec<WeightedIndex<f64>>,
    pairs: PairSampler,
}

fn weighted(weights: impl IntoIterator<Item = f64>) -> Result<WeightedIndex<f64>> {
    WeightedIndex::new(weights).map_err(|_| Error::InvalidDistribution {
        what: "sampling weights",
        index: 0,
        sum: f64::NAN,
    })
}

impl<'a> TransitionSampler<'a> {
    pub fn new(
        mdp: &'a LinearMDP,
        behavior: &Policy,
        seed: u64,
        setting: Setting,
        source: Source,
    ) -> Result<Self> {
        behavior.check_shape(mdp)?;
        let init = weighted(mdp.init_dist().iter().copied())?;
        let next_state = mdp
            .transitions()
            .row_iter()
            .map(|row| weighted(row.iter().copied()))
            .collect::<Result<Vec<_>>>()?;
        let pairs = match source {
            Source::ExactCategorical => {
                let occ = occupancy(mdp, behavior, setting)?;
                PairSampler::Categorical(weighted(occ.mu.iter().copied())?)
            }
            Source::Rollout { burn_in } => PairSampler::Rollout {
                behavior: (0..mdp.num_states())
                    .map(|x| weighted((0..mdp.num_actions()).map(|a| behavior.prob(x, a))))
                    .collect::<Result<Vec<_>>>()?,
                continue_prob: mdp.discount(),
                burn_in: burn_in.unwrap_or(10 * mdp.num_states()),
            },
        };
        Ok(Self {
            mdp,
            setting,
            rng: stream_rng(seed, Stream::Dataset),
            init,
            next_state,
            pairs,
        })
    }

    fn step(&mut self, x: usize, a: usize) -> usize {
        self.next_state[self.mdp.pair(x, a)].sample(&mut self.rng)
    }

    pub fn draw(&mut self) -> Transition {
        let x0 = match self.setting {
            Setting::Discounted => Some(self.init.sample(&mut self.rng)),
            Setting::Average => None,
        };
        let (x, a) = match &self.pairs {
            PairSampler::Categorical(dist) => {
                let i = dist.sample(&mut self.rng);
                (i / self.mdp.num_actions(), i % self.mdp.num_actions())
            }
            PairSampler::Rollout { .. } => self.rollout_pair(),
        };
        let x_next = self.step(x, a);
        Transition {
            x0,
            x,
            a,
            r: self.mdp.reward(x, a),
            x_next,
        }
    }

    fn rollout_pair(&mut self) -> (usize, usize) {
        let PairSampler::Rollout {
            behavior,
            continue_prob,
            burn_in,
        } = &self.pairs
        else {
            unreachable!("rollout_pair on a categorical sampler")
        };
        let mut x = self.init.sample(&mut self.rng);
        match self.setting {
            Setting::Discounted => loop {
                let a = behavior[x].sample(&mut self.rng);
                let stop = rand::Rng::gen::<f64>(&mut self.rng) >= *continue_prob;
                if stop {
                    return (x, a);
                }
                x = self.next_state[self.mdp.pair(x, a)].sample(&mut self.rng);
            },
            Setting::Average => {
                for _ in 0..*burn_in {
                    let a = behavior[x].sample(&mut self.rng);
                    x = self.next_state[self.mdp.pair(x, a)].sample(&mut self.rng);
                }
                (x, behavior[x].sample(&mut self.rng))
            }
        }
    }
}

impl SampleSource for TransitionSampler<'_> {
    fn next_transition(&mut self) -> Result<Transition> {
        Ok(self.draw())
    }

    fn remaining(&self) -> Option<usize> {
        None
    }
}

/// Draws `n` i.i.d. records from the behavior data distribution.
pub fn draw_dataset(
    mdp: &LinearMDP,
    behavior: &Policy,
    n: usize,
    seed: u64,
    setting: Setting,
    source: Source,
) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::ConfigInvalid("dataset size must be at least 1".into()));
    }
    let mut sampler = TransitionSampler::new(mdp, behavior, seed, setting, source)?;
    let transitions = (0..n).map(|_| sampler.draw()).collect();
    Ok(Dataset {
        transitions,
        setting,
        seed,
        source,
    })
}
