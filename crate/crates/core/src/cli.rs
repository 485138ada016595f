//! Command-line interface.
//!
//! Exit codes: 0 on success, 1 when the input is invalid (bad flags, missing
//! or malformed files), 2 when a computation fails.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::coverage::coverage_report;
use crate::error::{Error, Result};
use crate::harness::{revalidate, run_experiment, sweep, ExperimentConfig, RunSummary};
use crate::linmdp::{optimal_policy, random_linear_mdp, random_tabular_mdp, LinearMDP, Policy, Setting};
use crate::par::Execution;
use crate::sampling::BehaviorSpec;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

const SCHEMA_HELP: &str = r#"Experiment config (JSON, unknown keys rejected):
  {
    "mdp":      {"file": "m.json"} | {"inline": <mdp>} |
                {"generate": {"kind": "tabular", "states": 5, "actions": 2, "gamma": 0.9, "seed": 11}} |
                {"generate": {"kind": "linear", "states": 5, "actions": 2, "dim": 10, "seed": 7}},
    "behavior": {"kind": "uniform"} | {"kind": "eps_mix", "eps": 0.1},
    "setting":  "discounted" | "average",
    "solver":   {"auto": {"budget": {"samples": 4000000} | {"epsilon": 0.1} | {"outer": 100},
                          "c": 1.0, "d_theta": 30.0 | "bound" | "oracle", "d_beta": "oracle", "eval_every": 10}} |
                {"manual": {"T": 10, "K": 100, "c": 1.0, "alpha": 0.1, "zeta": 0.1, "eta": 0.1,
                            "xi": 0.1 (average only), "d_theta": 10.0, "d_beta": 5.0}},
    "source":   {"kind": "exact_categorical"} | {"kind": "rollout", "burn_in": 50},   (optional)
    "seeds":    [0, 1, 2],
    "sweep":    {"n": [10000, 40000], "eps": [1.0, 0.5], "c": [0.5, 1.0]},          (optional)
    "output_dir": "out"
  }"#;

#[derive(Debug, Parser)]
#[command(name = "lporl", version, about = "Offline primal-dual RL for linear MDPs", after_help = SCHEMA_HELP)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a random MDP and write it as JSON.
    GenMdp {
        #[arg(long)]
        states: usize,
        #[arg(long)]
        actions: usize,
        /// Feature dimension; ignored with --tabular.
        #[arg(long, default_value_t = 0)]
        dim: usize,
        /// One-hot features, `dim = states × actions`.
        #[arg(long)]
        tabular: bool,
        #[arg(long, default_value_t = 0.9)]
        gamma: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run an experiment config once per seed.
    Solve {
        #[arg(long)]
        config: PathBuf,
        /// Replace the config's seed list with this seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Replace the config's output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every grid point × seed of a config.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Run grid points one after another.
        #[arg(long)]
        sequential: bool,
    },
    /// Coverage ratios of a target policy under a behavior policy.
    Coverage {
        #[arg(long)]
        mdp: PathBuf,
        /// `uniform` or `eps_mix:<eps>`.
        #[arg(long, default_value = "uniform")]
        behavior: String,
        #[arg(long, value_enum, default_value_t = Target::Optimal)]
        target: Target,
        #[arg(long, value_enum, default_value_t = SettingArg::Discounted)]
        setting: SettingArg,
        /// Also write the report to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-run a summary's embedded config and compare the suboptimality.
    Diagnose {
        #[arg(long)]
        summary: PathBuf,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Target {
    Optimal,
    Uniform,
    Behavior,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SettingArg {
    Discounted,
    Average,
}

impl From<SettingArg> for Setting {
    fn from(s: SettingArg) -> Self {
        match s {
            SettingArg::Discounted => Setting::Discounted,
            SettingArg::Average => Setting::Average,
        }
    }
}

/// Parses `uniform` or `eps_mix:<eps>`.
pub fn parse_behavior(text: &str) -> Result<BehaviorSpec> {
    match text.split_once(':') {
        None if text == "uniform" => Ok(BehaviorSpec::Uniform),
        Some(("eps_mix", eps)) => eps
            .parse()
            .map(|eps| BehaviorSpec::EpsMix { eps })
            .map_err(|_| Error::ConfigInvalid(format!("bad eps in behavior `{text}`"))),
        _ => Err(Error::ConfigInvalid(format!(
            "behavior must be `uniform` or `eps_mix:<eps>`, got `{text}`"
        ))),
    }
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn load_config(path: &Path, seed: Option<u64>, out: Option<PathBuf>) -> Result<ExperimentConfig> {
    let mut config = ExperimentConfig::load(path)?;
    if let Some(seed) = seed {
        config.seeds = vec![seed];
    }
    if let Some(out) = out {
        config.output_dir = out;
    }
    Ok(config)
}

#[derive(Serialize)]
struct Diagnosis {
    reproduced: bool,
    recorded_suboptimality: f64,
    suboptimality: f64,
    summary: RunSummary,
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::GenMdp { states, actions, dim, tabular, gamma, seed, out } => {
            let mdp = if tabular {
                random_tabular_mdp(states, actions, gamma, seed)?
            } else {
                if dim == 0 {
                    return Err(Error::ConfigInvalid("--dim is required without --tabular".into()));
                }
                random_linear_mdp(states, actions, dim, seed)?.with_discount(gamma)?
            };
            mdp.save(&out)?;
            eprintln!("wrote {} ({})", out.display(), mdp.content_hash());
        }
        Command::Solve { config, seed, out } => {
            let config = load_config(&config, seed, out)?;
            print_json(&run_experiment(&config)?)?;
        }
        Command::Sweep { config, seed, out, sequential } => {
            let config = load_config(&config, seed, out)?;
            let exec = if sequential { Execution::Sequential } else { Execution::Parallel };
            let result = sweep(&config, exec)?;
            eprintln!(
                "{} runs, {} failures; aggregate in {}",
                result.summaries.len(),
                result.failures.len(),
                config.output_dir.join("sweep.csv").display()
            );
            print_json(&result.aggregate)?;
        }
        Command::Coverage { mdp, behavior, target, setting, out } => {
            let setting = Setting::from(setting);
            let behavior_spec = parse_behavior(&behavior)?;
            let mdp = LinearMDP::load(&mdp)?;
            let behavior = behavior_spec.build(&mdp, setting)?;
            let target = match target {
                Target::Optimal => optimal_policy(&mdp, setting, 1e-12)?.0,
                Target::Uniform => Policy::uniform(mdp.num_states(), mdp.num_actions()),
                Target::Behavior => behavior.clone(),
            };
            let report = coverage_report(&mdp, &behavior, &target, setting)?;
            if let Some(out) = out {
                fs::write(&out, serde_json::to_string_pretty(&report)? + "\n").map_err(|e| Error::io(&out, e))?;
            }
            print_json(&report)?;
        }
        Command::Diagnose { summary } => {
            let text = fs::read_to_string(&summary).map_err(|e| Error::io(&summary, e))?;
            let recorded: RunSummary = serde_json::from_str(&text)?;
            let (reproduced, rerun) = revalidate(&recorded)?;
            print_json(&Diagnosis {
                reproduced,
                recorded_suboptimality: recorded.suboptimality,
                suboptimality: rerun.suboptimality,
                summary: rerun,
            })?;
        }
    }
    Ok(())
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => {
                    eprintln!("\n{SCHEMA_HELP}");
                    EXIT_VALIDATION
                }
            };
        }
    };
    match execute(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                EXIT_VALIDATION
            } else {
                EXIT_RUNTIME
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn behavior_strings() {
        assert_eq!(parse_behavior("uniform").unwrap(), BehaviorSpec::Uniform);
        assert_eq!(parse_behavior("eps_mix:0.25").unwrap(), BehaviorSpec::EpsMix { eps: 0.25 });
        assert!(parse_behavior("eps_mix:x").is_err());
        assert!(parse_behavior("greedy").is_err());
    }

    #[test]
    fn missing_config_is_a_validation_error() {
        assert_eq!(run(["lporl", "solve", "--config", "/nonexistent/bench.json"]), EXIT_VALIDATION);
        assert_eq!(run(["lporl", "frobnicate"]), EXIT_VALIDATION);
    }
}
