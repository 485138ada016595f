//! Experiment driver: JSON configs in, trace CSVs and summary JSONs out.
//!
//! A run builds the MDP, the behavior policy and its exact covariance,
//! streams samples into the solver, and attaches oracle diagnostics
//! (suboptimality, duality gap, coverage ratios). A sweep repeats this over a
//! grid of sample budgets, behavior mixtures and exponents, possibly in
//! parallel, and writes all outputs in a fixed order.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::coverage::{coverage_report, CoverageReport};
use crate::error::{Error, Result};
use crate::linmdp::{
    optimal_policy, policy_return, random_linear_mdp, random_tabular_mdp, LinearMDP, MdpFile, Policy,
    Setting,
};
use crate::par::{map_indices, with_thread_cap, Execution};
use crate::pd_average::{self, AvgSolverConfig};
use crate::pd_discounted::{self, Budget, RegretBounds, SolverConfig, TuneInput};
use crate::sampling::{behavior_occupancy, BehaviorSpec, Covariance, Source, TransitionSampler};
use crate::solver::{GapContext, GapReport, Oracle, SolverResult, TraceRow};

const SUMMARY_SUFFIX: &str = "summary.json";
const TRACE_SUFFIX: &str = "trace.csv";
const DEFAULT_RADIUS_SLACK: f64 = 1.05;

/// Where the MDP comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum MdpSource {
    Inline(MdpFile),
    File(PathBuf),
    Generate(GeneratorSpec),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GeneratorSpec {
    Tabular {
        states: usize,
        actions: usize,
        gamma: f64,
        seed: u64,
    },
    Linear {
        states: usize,
        actions: usize,
        dim: usize,
        seed: u64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        gamma: Option<f64>,
    },
}

impl MdpSource {
    pub fn build(&self) -> Result<LinearMDP> {
        match self {
            MdpSource::Inline(spec) => spec.clone().into_mdp(),
            MdpSource::File(path) => LinearMDP::load(path),
            MdpSource::Generate(GeneratorSpec::Tabular { states, actions, gamma, seed }) => {
                random_tabular_mdp(*states, *actions, *gamma, *seed)
            }
            MdpSource::Generate(GeneratorSpec::Linear { states, actions, dim, seed, gamma }) => {
                let mdp = random_linear_mdp(*states, *actions, *dim, *seed)?;
                match gamma {
                    Some(g) => mdp.with_discount(*g),
                    None => Ok(mdp),
                }
            }
        }
    }
}

/// A ball radius: a number, or a rule evaluated per run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Radius {
    Value(f64),
    Rule(RadiusRule),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RadiusRule {
    /// `D_ω + D_ψ/(1-γ)`; discounted setting only.
    Bound,
    /// `1.05×` the norm of the comparator's parameter, from the oracle.
    Oracle,
}

/// Inputs for theory-driven step sizes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AutoSolver {
    pub budget: Budget,
    #[serde(default = "default_c")]
    pub c: f64,
    /// Defaults to `bound` (discounted) or `oracle` (average).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_theta: Option<Radius>,
    /// Defaults to `oracle`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_beta: Option<Radius>,
    /// Defaults to about 100 trace rows per run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval_every: Option<usize>,
}

fn default_c() -> f64 {
    1.0
}

/// Either tuned or explicit solver parameters. Explicit parameters are a
/// `SolverConfig` (discounted) or `AvgSolverConfig` (average) object.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SolverSpec {
    Auto(AutoSolver),
    Manual(serde_json::Value),
}

/// Optional grid; each absent axis keeps the base configuration's value.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepGrid {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mdp: MdpSource,
    pub behavior: BehaviorSpec,
    pub setting: Setting,
    pub solver: SolverSpec,
    #[serde(default)]
    pub source: Source,
    pub seeds: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepGrid>,
    pub output_dir: PathBuf,
}

/// Explicit solver parameters of either setting.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SolverParams {
    Discounted(SolverConfig),
    Average(AvgSolverConfig),
}

impl SolverParams {
    fn parse(value: &serde_json::Value, setting: Setting) -> Result<Self> {
        Ok(match setting {
            Setting::Discounted => SolverParams::Discounted(serde_json::from_value(value.clone())?),
            Setting::Average => SolverParams::Average(serde_json::from_value(value.clone())?),
        })
    }

    pub fn c(&self) -> f64 {
        match self {
            SolverParams::Discounted(c) => c.c,
            SolverParams::Average(c) => c.c,
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            SolverParams::Discounted(c) => c.validate(),
            SolverParams::Average(c) => c.validate(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    /// Reads and validates a config file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Json(inner) => Error::ConfigInvalid(format!("{}: {inner}", path.display())),
            other => other,
        })
    }

    /// Schema checks that need no computation.
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::ConfigInvalid("seeds must list at least one seed".into()));
        }
        if let BehaviorSpec::EpsMix { eps } = self.behavior {
            check_eps(eps)?;
        }
        match &self.solver {
            SolverSpec::Auto(auto) => {
                crate::solver::check_exponent(auto.c)?;
                if auto.eval_every == Some(0) {
                    return Err(Error::ConfigInvalid("eval_every must be at least 1".into()));
                }
                for (name, r) in [("d_theta", auto.d_theta), ("d_beta", auto.d_beta)] {
                    match r {
                        Some(Radius::Value(v)) if !(v.is_finite() && v > 0.0) => {
                            return Err(Error::ConfigInvalid(format!("{name} must be positive, got {v}")));
                        }
                        Some(Radius::Rule(RadiusRule::Bound))
                            if name == "d_beta" || self.setting == Setting::Average =>
                        {
                            return Err(Error::ConfigInvalid(format!(
                                "{name}: the `bound` rule is only defined for d_theta in the discounted setting"
                            )));
                        }
                        _ => {}
                    }
                }
            }
            SolverSpec::Manual(value) => SolverParams::parse(value, self.setting)?.validate()?,
        }
        if let Some(grid) = &self.sweep {
            let axes = [
                grid.n.as_ref().map(Vec::len),
                grid.eps.as_ref().map(Vec::len),
                grid.c.as_ref().map(Vec::len),
            ];
            if axes.iter().all(Option::is_none) || axes.contains(&Some(0)) {
                return Err(Error::ConfigInvalid("sweep grid needs at least one nonempty axis".into()));
            }
            if grid.n.is_some() && matches!(self.solver, SolverSpec::Manual(_)) {
                return Err(Error::ConfigInvalid("a grid over n requires `auto` solver tuning".into()));
            }
            for &eps in grid.eps.iter().flatten() {
                check_eps(eps)?;
            }
            for &c in grid.c.iter().flatten() {
                crate::solver::check_exponent(c)?;
            }
        }
        if let MdpSource::File(path) = &self.mdp {
            if !path.exists() {
                return Err(Error::io(path, std::io::ErrorKind::NotFound.into()));
            }
        }
        Ok(())
    }

    /// Grid points in grid-major order (`n`, then `eps`, then `c`).
    pub fn grid_points(&self) -> Vec<GridPoint> {
        let grid = self.sweep.clone().unwrap_or_default();
        let ns: Vec<Option<usize>> = match grid.n {
            Some(v) => v.into_iter().map(Some).collect(),
            None => vec![None],
        };
        let epss: Vec<Option<f64>> = match grid.eps {
            Some(v) => v.into_iter().map(Some).collect(),
            None => vec![None],
        };
        let cs: Vec<Option<f64>> = match grid.c {
            Some(v) => v.into_iter().map(Some).collect(),
            None => vec![None],
        };
        let mut points = Vec::with_capacity(ns.len() * epss.len() * cs.len());
        for &n in &ns {
            for &eps in &epss {
                for &c in &cs {
                    points.push(GridPoint { n, eps, c });
                }
            }
        }
        points
    }

    /// Single-seed, grid-free configuration of one grid point.
    pub fn at_point(&self, point: &GridPoint, seed: u64) -> ExperimentConfig {
        let mut config = self.clone();
        config.sweep = None;
        config.seeds = vec![seed];
        if let Some(eps) = point.eps {
            config.behavior = BehaviorSpec::EpsMix { eps };
        }
        match &mut config.solver {
            SolverSpec::Auto(auto) => {
                if let Some(n) = point.n {
                    auto.budget = Budget::Samples(n);
                }
                if let Some(c) = point.c {
                    auto.c = c;
                }
            }
            SolverSpec::Manual(value) => {
                if let (Some(c), Some(obj)) = (point.c, value.as_object_mut()) {
                    obj.insert("c".into(), c.into());
                }
            }
        }
        config
    }
}

fn check_eps(eps: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&eps) {
        return Err(Error::ConfigInvalid(format!("eps must lie in [0, 1], got {eps}")));
    }
    Ok(())
}

/// Coordinates of one sweep point; `None` means "base configuration".
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub n: Option<usize>,
    pub eps: Option<f64>,
    pub c: Option<f64>,
}

impl GridPoint {
    /// File-name stem such as `n10000_eps0.5_seed3`.
    pub fn label(&self, seed: u64) -> String {
        let mut parts = Vec::new();
        if let Some(n) = self.n {
            parts.push(format!("n{n}"));
        }
        if let Some(eps) = self.eps {
            parts.push(format!("eps{eps}"));
        }
        if let Some(c) = self.c {
            parts.push(format!("c{c}"));
        }
        parts.push(format!("seed{seed}"));
        parts.join("_")
    }
}

/// `G` constants of the tuned rates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TuningConstants {
    pub g_theta_sq: f64,
    pub g_beta_sq: f64,
    pub g_rho_sq: Option<f64>,
    pub ratio: f64,
}

/// Everything reported about one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub label: String,
    pub seed: u64,
    pub setting: Setting,
    pub mdp_hash: String,
    pub solver: SolverParams,
    pub tuning: Option<TuningConstants>,
    pub samples_used: usize,
    pub optimal_return: f64,
    pub mixture_return: f64,
    pub suboptimality: f64,
    pub output_index: usize,
    pub output_return: f64,
    pub gap: Option<GapReport>,
    pub regret_bounds: Option<RegretBounds>,
    /// `‖β*‖`, the smallest feasible `D_β` for the comparator.
    pub beta_star_norm: Option<f64>,
    /// Largest span of `Φθ_t` over the run.
    pub theta_span_max: f64,
    pub coverage: Option<CoverageReport>,
    /// Set when the coverage ratios could not be computed.
    pub coverage_error: Option<String>,
    /// The configuration that reproduces this run.
    pub config: ExperimentConfig,
    /// Excluded from reproducibility comparisons.
    pub wall_clock_secs: f64,
}

impl RunSummary {
    /// Pretty JSON with the wall-clock field zeroed, for byte comparisons.
    pub fn to_json_without_clock(&self) -> Result<String> {
        let mut copy = self.clone();
        copy.wall_clock_secs = 0.0;
        Ok(serde_json::to_string_pretty(&copy)?)
    }
}

/// A finished run together with its trace.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub summary: RunSummary,
    pub trace: Vec<TraceRow>,
}

fn stage<T>(name: &'static str, config: &ExperimentConfig, r: Result<T>) -> Result<T> {
    r.map_err(|source| Error::Stage {
        stage: name,
        config: serde_json::to_string(config).unwrap_or_default(),
        source: Box::new(source),
    })
}

fn resolve_radius(
    radius: Radius,
    mdp: &LinearMDP,
    oracle_norm: impl FnOnce() -> Result<f64>,
) -> Result<f64> {
    match radius {
        Radius::Value(v) => Ok(v),
        Radius::Rule(RadiusRule::Bound) => Ok(mdp.discounted_theta_bound()),
        Radius::Rule(RadiusRule::Oracle) => Ok(DEFAULT_RADIUS_SLACK * oracle_norm()?.max(1e-3)),
    }
}

/// Norm of the comparator's `θ` (shifted in the average setting).
fn comparator_theta_norm(mdp: &LinearMDP, comparator: &Policy, setting: Setting) -> Result<f64> {
    match setting {
        Setting::Discounted => Ok(crate::linmdp::policy_values(mdp, comparator, setting)?.theta.norm()),
        Setting::Average => {
            let varrho = pd_average::solve_varrho(mdp.features())?.varrho;
            Ok(pd_average::shifted_comparator(mdp, comparator, &varrho)?.0.norm())
        }
    }
}

fn resolve_solver(
    config: &ExperimentConfig,
    mdp: &LinearMDP,
    cov: &Covariance,
    comparator: &Policy,
    beta_star_norm: Option<f64>,
    seed: u64,
) -> Result<(SolverParams, Option<TuningConstants>)> {
    let setting = config.setting;
    let auto = match &config.solver {
        SolverSpec::Manual(value) => {
            let mut params = SolverParams::parse(value, setting)?;
            match &mut params {
                SolverParams::Discounted(c) => c.seed = seed,
                SolverParams::Average(c) => c.seed = seed,
            }
            return Ok((params, None));
        }
        SolverSpec::Auto(auto) => auto,
    };
    let default_theta = match setting {
        Setting::Discounted => RadiusRule::Bound,
        Setting::Average => RadiusRule::Oracle,
    };
    let d_theta = resolve_radius(auto.d_theta.unwrap_or(Radius::Rule(default_theta)), mdp, || {
        comparator_theta_norm(mdp, comparator, setting)
    })?;
    let d_beta = resolve_radius(auto.d_beta.unwrap_or(Radius::Rule(RadiusRule::Oracle)), mdp, || {
        beta_star_norm.ok_or(Error::NearSingular {
            eigenvalue: cov.min_eigenvalue(),
            floor: crate::numerics::EIG_FLOOR,
        })
    })?;
    let input = TuneInput {
        bounds: mdp.bounds(),
        gamma: mdp.discount(),
        num_actions: mdp.num_actions(),
        dim: mdp.dim(),
        d_theta,
        d_beta,
        c: auto.c,
        lambda_norm: Some(cov.spectral_norm()),
        lambda_trace: Some(cov.trace()),
        budget: auto.budget,
    };
    let eval_every = |outer: usize| auto.eval_every.unwrap_or((outer / 100).max(1));
    Ok(match setting {
        Setting::Discounted => {
            let mut tuning = pd_discounted::tune(&input)?;
            tuning.config.seed = seed;
            tuning.config.eval_every = eval_every(tuning.config.outer);
            let constants = TuningConstants {
                g_theta_sq: tuning.g_theta_sq,
                g_beta_sq: tuning.g_beta_sq,
                g_rho_sq: None,
                ratio: tuning.ratio,
            };
            (SolverParams::Discounted(tuning.config), Some(constants))
        }
        Setting::Average => {
            let mut tuning = pd_average::tune(&input)?;
            tuning.config.seed = seed;
            tuning.config.eval_every = eval_every(tuning.config.outer);
            let constants = TuningConstants {
                g_theta_sq: tuning.g_theta_sq,
                g_beta_sq: tuning.g_beta_sq,
                g_rho_sq: Some(tuning.g_rho_sq),
                ratio: tuning.ratio,
            };
            (SolverParams::Average(tuning.config), Some(constants))
        }
    })
}

fn bounds_for(
    params: &SolverParams,
    constants: Option<&TuningConstants>,
    mdp: &LinearMDP,
) -> Option<RegretBounds> {
    let k = constants?;
    let d_phi = mdp.bounds().phi;
    let a = mdp.num_actions();
    match params {
        SolverParams::Discounted(cfg) => {
            let tuning = pd_discounted::Tuning {
                g_theta_sq: k.g_theta_sq,
                g_beta_sq: k.g_beta_sq,
                ratio: k.ratio,
                config: cfg.clone(),
            };
            Some(pd_discounted::regret_bounds(cfg, &tuning, d_phi, a))
        }
        SolverParams::Average(cfg) => {
            let tuning = pd_average::AvgTuning {
                g_beta_sq: k.g_beta_sq,
                g_rho_sq: k.g_rho_sq?,
                g_theta_sq: k.g_theta_sq,
                ratio: k.ratio,
                config: cfg.clone(),
            };
            Some(pd_average::regret_bounds(cfg, &tuning, d_phi, a))
        }
    }
}

fn theta_span_max(mdp: &LinearMDP, result: &SolverResult) -> f64 {
    result
        .thetas
        .iter()
        .map(|theta| {
            let q = mdp.features() * theta;
            q.max() - q.min()
        })
        .fold(0.0, f64::max)
}

/// Runs one configuration point with one seed. `exec` controls the oracle
/// diagnostics only; the solver itself is sequential.
pub fn run_single(config: &ExperimentConfig, point: &GridPoint, seed: u64, exec: Execution) -> Result<RunOutput> {
    let start = Instant::now();
    let config = config.at_point(point, seed);
    let setting = config.setting;
    let mdp = stage("mdp", &config, config.mdp.build())?;
    let behavior = stage("behavior", &config, config.behavior.build(&mdp, setting))?;
    let (_, cov) = stage("behavior", &config, behavior_occupancy(&mdp, &behavior, setting))?;
    let (comparator, optimal_return) = stage("oracle", &config, optimal_policy(&mdp, setting, 1e-12))?;

    let c = match &config.solver {
        SolverSpec::Auto(auto) => auto.c,
        SolverSpec::Manual(value) => stage("solver", &config, SolverParams::parse(value, setting))?.c(),
    };
    let gap_ctx = stage("oracle", &config, GapContext::new(&mdp, &behavior, Some(&comparator), setting, c))?;
    let beta_star_norm = gap_ctx.beta_star.as_ref().map(|b| b.norm());
    let (params, constants) = stage(
        "tuning",
        &config,
        resolve_solver(&config, &mdp, &cov, &comparator, beta_star_norm, seed),
    )?;

    let oracle = Oracle {
        mdp: &mdp,
        behavior: &behavior,
        comparator: Some(&comparator),
        execution: exec,
    };
    let mut sampler = stage(
        "dataset",
        &config,
        TransitionSampler::new(&mdp, &behavior, seed, setting, config.source),
    )?;
    let lambda = (c != 1.0).then_some(&cov);
    let result = stage(
        "solve",
        &config,
        match &params {
            SolverParams::Discounted(cfg) => pd_discounted::run(&mdp, &mut sampler, cfg, lambda, Some(&oracle)),
            SolverParams::Average(cfg) => pd_average::run_average(&mdp, &mut sampler, cfg, lambda, Some(&oracle)),
        },
    )?;
    let mixture_return = result
        .mixture_return
        .expect("oracle diagnostics always report the mixture return");
    let output_return = stage(
        "diagnostics",
        &config,
        policy_return(&mdp, &result.output_policy(&mdp), setting),
    )?;
    let (coverage, coverage_error) = match coverage_report(&mdp, &behavior, &comparator, setting) {
        Ok(report) => (Some(report), None),
        Err(e) => (None, Some(e.to_string())),
    };

    let summary = RunSummary {
        label: point.label(seed),
        seed,
        setting,
        mdp_hash: mdp.content_hash(),
        regret_bounds: bounds_for(&params, constants.as_ref(), &mdp),
        solver: params,
        tuning: constants,
        samples_used: result.samples_used,
        optimal_return,
        mixture_return,
        suboptimality: optimal_return - mixture_return,
        output_index: result.output_index,
        output_return,
        gap: result.gap.clone(),
        beta_star_norm,
        theta_span_max: theta_span_max(&mdp, &result),
        coverage,
        coverage_error,
        config,
        wall_clock_secs: start.elapsed().as_secs_f64(),
    };
    Ok(RunOutput {
        summary,
        trace: result.trace,
    })
}

/// Writes `<dir>/<label>.trace.csv` and `<dir>/<label>.summary.json`.
pub fn write_run(dir: &Path, output: &RunOutput) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let label = &output.summary.label;
    let trace_path = dir.join(format!("{label}.{TRACE_SUFFIX}"));
    let mut writer = csv::Writer::from_path(&trace_path)?;
    for row in &output.trace {
        writer.serialize(row)?;
    }
    writer.flush().map_err(|e| Error::io(&trace_path, e))?;
    let summary_path = dir.join(format!("{label}.{SUMMARY_SUFFIX}"));
    let json = serde_json::to_string_pretty(&output.summary)?;
    fs::write(&summary_path, json + "\n").map_err(|e| Error::io(&summary_path, e))
}

/// Runs the base configuration once per seed and writes the outputs.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<RunSummary>> {
    config.validate()?;
    let mut summaries = Vec::with_capacity(config.seeds.len());
    for &seed in &config.seeds {
        let output = run_single(config, &GridPoint::default(), seed, Execution::Parallel)?;
        write_run(&config.output_dir, &output)?;
        summaries.push(output.summary);
    }
    Ok(summaries)
}

/// A grid point that failed, with the error message.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepFailure {
    pub point: GridPoint,
    pub seed: u64,
    pub error: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepResult {
    pub summaries: Vec<RunSummary>,
    pub points: Vec<(GridPoint, u64)>,
    pub failures: Vec<SweepFailure>,
    pub aggregate: Vec<AggregateRow>,
}

/// One row of the aggregate CSV: a successful (point, seed) run plus the
/// per-point median and quartiles of the suboptimality.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub point: usize,
    pub n: Option<usize>,
    pub eps: Option<f64>,
    pub c: Option<f64>,
    pub seed: u64,
    pub samples_used: usize,
    pub suboptimality: f64,
    pub mixture_return: f64,
    pub gap: Option<f64>,
    pub c_phi_half: Option<f64>,
    pub c_phi_one: Option<f64>,
    pub median_suboptimality: f64,
    pub q1_suboptimality: f64,
    pub q3_suboptimality: f64,
    pub iqr_suboptimality: f64,
}

/// Quantile with linear interpolation between order statistics.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of an empty sample");
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn aggregate(points: &[GridPoint], summaries: &[(usize, RunSummary)]) -> Vec<AggregateRow> {
    let mut rows = Vec::with_capacity(summaries.len());
    for (index, point) in points.iter().enumerate() {
        let runs: Vec<&RunSummary> = summaries.iter().filter(|(i, _)| *i == index).map(|(_, s)| s).collect();
        if runs.is_empty() {
            continue;
        }
        let mut subopts: Vec<f64> = runs.iter().map(|s| s.suboptimality).collect();
        subopts.sort_by(f64::total_cmp);
        let (q1, median, q3) = (quantile(&subopts, 0.25), quantile(&subopts, 0.5), quantile(&subopts, 0.75));
        for s in runs {
            rows.push(AggregateRow {
                point: index,
                n: point.n,
                eps: point.eps,
                c: point.c,
                seed: s.seed,
                samples_used: s.samples_used,
                suboptimality: s.suboptimality,
                mixture_return: s.mixture_return,
                gap: s.gap.as_ref().map(|g| g.gap),
                c_phi_half: s.coverage.as_ref().map(|c| c.c_phi_half),
                c_phi_one: s.coverage.as_ref().map(|c| c.c_phi_one),
                median_suboptimality: median,
                q1_suboptimality: q1,
                q3_suboptimality: q3,
                iqr_suboptimality: q3 - q1,
            });
        }
    }
    rows
}

/// Runs every (grid point, seed) pair, concurrently when the `parallel`
/// feature is on (capped by `LPORL_THREADS`), and writes per-run outputs,
/// `sweep.csv` and `failures.json` in grid-major, seed-minor order.
pub fn sweep(config: &ExperimentConfig, exec: Execution) -> Result<SweepResult> {
    config.validate()?;
    let points = config.grid_points();
    let jobs: Vec<(usize, u64)> = (0..points.len())
        .flat_map(|p| config.seeds.iter().map(move |&s| (p, s)))
        .collect();
    let outcomes = with_thread_cap(|| {
        map_indices(jobs.len(), exec, |j| {
            let (p, seed) = jobs[j];
            run_single(config, &points[p], seed, Execution::Sequential)
        })
    });

    let dir = &config.output_dir;
    let mut summaries = Vec::new();
    let mut failures = Vec::new();
    for (&(p, seed), outcome) in jobs.iter().zip(outcomes) {
        match outcome {
            Ok(output) => {
                write_run(dir, &output)?;
                summaries.push((p, output.summary));
            }
            Err(e) => failures.push(SweepFailure {
                point: points[p],
                seed,
                error: e.to_string(),
            }),
        }
    }
    let rows = aggregate(&points, &summaries);
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let csv_path = dir.join("sweep.csv");
    let mut writer = csv::Writer::from_path(&csv_path)?;
    for row in &rows {
        writer.serialize(row)?;
    }
    writer.flush().map_err(|e| Error::io(&csv_path, e))?;
    let failures_path = dir.join("failures.json");
    fs::write(&failures_path, serde_json::to_string_pretty(&failures)? + "\n")
        .map_err(|e| Error::io(&failures_path, e))?;

    Ok(SweepResult {
        points: jobs.iter().map(|&(p, s)| (points[p], s)).collect(),
        summaries: summaries.into_iter().map(|(_, s)| s).collect(),
        failures,
        aggregate: rows,
    })
}

/// Re-runs the configuration embedded in a summary and reports whether the
/// suboptimality is reproduced exactly.
pub fn revalidate(summary: &RunSummary) -> Result<(bool, RunSummary)> {
    let seed = summary.seed;
    let rerun = run_single(&summary.config, &GridPoint::default(), seed, Execution::Parallel)?.summary;
    Ok((rerun.suboptimality == summary.suboptimality, rerun))
}
