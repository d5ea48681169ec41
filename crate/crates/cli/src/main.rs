//! `extlab`: run single paths, ensembles, bound curves, coercivity estimates
//! and λ-convergence studies from a TOML experiment file.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use extinction_core::harness::{run_ensemble, Experiment, ExperimentConfig};
use extinction_core::operators::estimate_gamma;
use extinction_core::theory::bound_curve;
use extinction_core::Error;

#[derive(Parser)]
#[command(
    name = "extlab",
    version,
    about = "Finite-time extinction laboratory for stochastic fast diffusion"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one path and write trajectory.csv.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Stream index of the path.
        #[arg(long, default_value_t = 0)]
        path: u64,
    },
    /// Run the ensemble and write summary.json and tau.csv.
    Ensemble(Common),
    /// Write the extinction lower bound on `(0, t_final]` to bound.csv.
    Bound {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 200)]
        points: usize,
    },
    /// Estimate the coercivity constant and write gamma.json.
    Gamma(Common),
    /// Run the λ-convergence study and write convergence.csv.
    Convergence(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Overrides `master_seed`.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Exit with status 4 when the run's acceptance comparison fails.
    #[arg(long)]
    strict: bool,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig, Error> {
        let mut config = ExperimentConfig::from_path(&self.config)?;
        if let Some(seed) = self.seed {
            config.master_seed = seed;
        }
        Ok(config)
    }

    fn write(&self, name: &str, contents: &str) -> anyhow::Result<PathBuf> {
        fs::create_dir_all(&self.out).with_context(|| format!("cannot create {}", self.out.display()))?;
        let path = self.out.join(name);
        fs::write(&path, contents).with_context(|| format!("cannot write {}", path.display()))?;
        Ok(path)
    }
}

enum Outcome {
    Ok,
    ComparisonFailed,
}

fn run(cli: Cli) -> anyhow::Result<Outcome> {
    match cli.command {
        Command::Simulate { common, path } => {
            let experiment = Experiment::prepare(&common.load()?)?;
            let result = experiment.run_single(path)?;
            let file = common.write("trajectory.csv", &result.trajectory.to_csv())?;
            if let Some(f) = &result.failure {
                return Err(Error::AllPathsFailed(1))
                    .with_context(|| format!("path {path} failed at step {} (t = {}): {}", f.step, f.time, f.message));
            }
            match result.tau_hat {
                Some(tau) => println!("extinct at t = {tau}"),
                None => println!("not extinct by t = {}", result.config.t_final),
            }
            log::info!("wrote {}", file.display());
            Ok(Outcome::Ok)
        }
        Command::Ensemble(common) => {
            let summary = run_ensemble(&common.load()?, common.workers)?;
            common.write("summary.json", &summary.to_json())?;
            common.write("tau.csv", &summary.tau_csv())?;
            let sm_pass = summary.supermartingale_report.as_ref().is_none_or(|r| r.pass);
            println!(
                "extinct fraction {:.4}, bound comparison {}, supermartingale {}",
                summary.extinct_fraction,
                verdict(summary.bound_comparison.pass),
                summary
                    .supermartingale_report
                    .as_ref()
                    .map_or("skipped", |r| verdict(r.pass)),
            );
            Ok(if common.strict && !(summary.bound_comparison.pass && sm_pass) {
                Outcome::ComparisonFailed
            } else {
                Outcome::Ok
            })
        }
        Command::Bound { common, points } => {
            let config = common.load()?;
            let experiment = Experiment::prepare(&config)?;
            let inputs = experiment.bound_inputs(experiment.gamma()?);
            let curve = bound_curve(config.solver.t_final, points, &inputs)?;
            let mut csv = String::from("t,bound\n");
            for (t, b) in curve {
                csv.push_str(&format!("{t},{b}\n"));
            }
            common.write("bound.csv", &csv)?;
            Ok(Outcome::Ok)
        }
        Command::Gamma(common) => {
            let config = common.load()?;
            let est = estimate_gamma(
                config.grid,
                config.model.alpha(),
                config.gamma_starts,
                config.master_seed,
            )?;
            let json = serde_json::json!({
                "value": est.value,
                "alpha": est.alpha,
                "n_starts": est.n_starts,
                "minimizer": est.minimizer.values(),
            });
            common.write("gamma.json", &serde_json::to_string_pretty(&json)?)?;
            println!("gamma = {}", est.value);
            Ok(Outcome::Ok)
        }
        Command::Convergence(common) => {
            let experiment = Experiment::prepare(&common.load()?)?;
            let report = experiment.convergence()?;
            common.write("convergence.csv", &report.to_csv())?;
            Ok(if common.strict && !report.strictly_decreasing() {
                Outcome::ComparisonFailed
            } else {
                Outcome::Ok
            })
        }
    }
}

fn verdict(pass: bool) -> &'static str {
    if pass {
        "PASS"
    } else {
        "FAIL"
    }
}

/// 2 for bad input, 3 for numerical breakdown, 1 for anything else.
fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(e) if e.is_numerical() => 3,
        Some(Error::Io(_)) => 1,
        Some(_) => 2,
        None => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::ComparisonFailed) => {
            eprintln!("acceptance comparison failed");
            ExitCode::from(4)
        }
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
