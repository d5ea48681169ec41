//! Experiment configuration, seeded Monte Carlo ensembles and comparison of
//! the empirical extinction CDF with the theoretical lower bound.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{
    check_absorption, detect_extinction, ensemble_supermartingale_test, supermartingale_series, SupermartingaleReport,
    MIN_SUPERMARTINGALE_PATHS,
};
use crate::error::{invalid, Error, Result};
use crate::noise::NoiseSpec;
use crate::operators::{build_basis, estimate_gamma, norm_hm1, norm_lp, Field, GridSpec, SpectralBasis};
use crate::stepper::{convergence_study, run_path, ConvergenceReport, ModelParams, PathResult, SolverConfig};
use crate::theory::{extinction_bound, BoundInputs};

/// Absolute slack in [`compare_with_bound`].
pub const BOUND_SLACK: f64 = 0.02;
/// Largest tolerated fraction of failed paths.
pub const MAX_FAILED_FRACTION: f64 = 0.01;
/// Normal quantile for 95% intervals.
const Z95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum InitialShape {
    /// The `mode`-th discrete eigenfunction (1-based).
    Eigenmode { mode: usize },
    /// `cos²(π(x − center)/(2·width))` on `|x − center| < width`, zero elsewhere.
    Bump { center: f64, width: f64 },
    /// Nodal values, used as given.
    Custom { values: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialCondition {
    #[serde(flatten)]
    pub shape: InitialShape,
    #[serde(default)]
    pub target_hm1_norm: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceSettings {
    pub lambdas: Vec<f64>,
}

impl Default for ConvergenceSettings {
    fn default() -> Self {
        Self {
            lambdas: vec![1e-1, 5e-2, 2.5e-2, 1.25e-2],
        }
    }
}

fn default_gamma_starts() -> usize {
    32
}

/// Everything needed to reproduce an ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub grid: GridSpec,
    pub k_modes: usize,
    pub model: ModelParams,
    pub mu: Vec<f64>,
    pub solver: SolverConfig,
    pub initial: InitialCondition,
    pub n_paths: usize,
    pub master_seed: u64,
    pub checkpoints: Vec<f64>,
    /// Overrides the numerical estimate of the coercivity constant.
    #[serde(default)]
    pub gamma: Option<f64>,
    #[serde(default = "default_gamma_starts")]
    pub gamma_starts: usize,
    #[serde(default)]
    pub convergence: Option<ConvergenceSettings>,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("configuration is always representable as TOML")
    }

    pub fn validate(&self) -> Result<()> {
        let wrap = |e: Error| Error::Config(e.to_string());
        self.grid.validate().map_err(wrap)?;
        self.model.validate().map_err(wrap)?;
        self.solver.validate().map_err(wrap)?;
        if self.mu.len() != self.k_modes {
            return Err(Error::Config(format!(
                "k_modes = {} but mu has {} entries",
                self.k_modes,
                self.mu.len()
            )));
        }
        if self.k_modes > self.grid.n_interior {
            return Err(Error::Config("more noise modes than interior nodes".into()));
        }
        if self.mu.iter().any(|m| !m.is_finite()) {
            return Err(Error::Config("noise coefficients must be finite".into()));
        }
        if self.n_paths == 0 {
            return Err(Error::Config("n_paths must be at least 1".into()));
        }
        if self.checkpoints.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("checkpoints must be strictly increasing".into()));
        }
        let horizon = self.solver.t_final * (1.0 + 1e-12);
        if self.checkpoints.iter().any(|&t| !(t >= 0.0 && t <= horizon)) {
            return Err(Error::Config("checkpoints must lie in [0, t_final]".into()));
        }
        if let Some(g) = self.gamma {
            if !(g > 0.0 && g.is_finite()) {
                return Err(Error::Config(format!("gamma override must be positive, got {g}")));
            }
        }
        if self.gamma_starts == 0 {
            return Err(Error::Config("gamma_starts must be at least 1".into()));
        }
        match &self.initial.shape {
            InitialShape::Eigenmode { mode } if *mode == 0 || *mode > self.grid.n_interior => {
                return Err(Error::Config(format!("eigenmode index {mode} out of range")));
            }
            InitialShape::Bump { width, .. } if !(*width > 0.0) => {
                return Err(Error::Config("bump width must be positive".into()));
            }
            InitialShape::Custom { values } if values.len() != self.grid.n_interior => {
                return Err(Error::Config(format!(
                    "custom initial condition has {} values for {} nodes",
                    values.len(),
                    self.grid.n_interior
                )));
            }
            _ => {}
        }
        if !matches!(self.initial.shape, InitialShape::Custom { .. }) {
            match self.initial.target_hm1_norm {
                Some(t) if t > 0.0 && t.is_finite() => {}
                _ => return Err(Error::Config("target_hm1_norm must be a positive number".into())),
            }
        }
        if let Some(c) = &self.convergence {
            if c.lambdas.len() < 2 || c.lambdas.iter().any(|l| !(*l > 0.0)) {
                return Err(Error::Config("convergence needs at least two positive lambdas".into()));
            }
        }
        Ok(())
    }
}

/// Builds the initial state. Eigenmode and bump profiles are rescaled to
/// `|x|_{-1} = target_hm1_norm`; custom values are used as given.
pub fn make_initial(spec: &InitialCondition, grid: GridSpec, basis: &SpectralBasis) -> Result<Field> {
    let profile = match &spec.shape {
        InitialShape::Custom { values } => return Field::new(grid, values.clone()),
        InitialShape::Eigenmode { mode } => {
            if *mode == 0 || *mode > basis.len() {
                return Err(invalid(format!(
                    "eigenmode {mode} requested from a basis of {} modes",
                    basis.len()
                )));
            }
            basis.modes[mode - 1].clone()
        }
        InitialShape::Bump { center, width } => Field::from_fn(grid, |x| {
            let s = (x - center) / width;
            if s.abs() < 1.0 {
                (0.5 * std::f64::consts::PI * s).cos().powi(2)
            } else {
                0.0
            }
        })?,
    };
    let target = spec
        .target_hm1_norm
        .ok_or_else(|| invalid("target_hm1_norm is required for generated profiles"))?;
    if !(target > 0.0) {
        return Err(invalid(format!("target_hm1_norm must be positive, got {target}")));
    }
    let norm = norm_hm1(&profile);
    if norm == 0.0 {
        return Err(invalid("initial profile is identically zero"));
    }
    Ok(profile.scaled(target / norm))
}

/// Resolved pieces of an [`ExperimentConfig`].
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub basis: SpectralBasis,
    pub noise: NoiseSpec,
    pub x0: Field,
}

impl Experiment {
    pub fn prepare(config: &ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let needed = match config.initial.shape {
            InitialShape::Eigenmode { mode } => mode.max(config.k_modes),
            _ => config.k_modes,
        }
        .max(1);
        let basis = build_basis(config.grid, needed)?;
        let noise = NoiseSpec::new(config.mu.clone(), &basis)?;
        let x0 = make_initial(&config.initial, config.grid, &basis)?;
        Ok(Self {
            config: config.clone(),
            basis,
            noise,
            x0,
        })
    }

    /// The configured `γ`, or a multi-start estimate seeded by the master seed.
    pub fn gamma(&self) -> Result<f64> {
        match self.config.gamma {
            Some(g) => Ok(g),
            None => Ok(estimate_gamma(
                self.config.grid,
                self.config.model.alpha(),
                self.config.gamma_starts,
                self.config.master_seed,
            )?
            .value),
        }
    }

    pub fn bound_inputs(&self, gamma: f64) -> BoundInputs {
        BoundInputs {
            x_norm_hm1: norm_hm1(&self.x0),
            alpha: self.config.model.alpha(),
            rho: self.config.model.diffusion.rho,
            gamma,
            c_star: self.noise.c_star(),
        }
    }

    pub fn run_single(&self, path_index: u64) -> Result<PathResult> {
        run_path(
            &self.x0,
            &self.config.solver,
            &self.config.model,
            &self.noise,
            self.config.master_seed,
            path_index,
        )
    }

    pub fn convergence(&self) -> Result<ConvergenceReport> {
        let settings = self.config.convergence.clone().unwrap_or_default();
        convergence_study(
            &self.x0,
            &self.config.solver,
            &self.config.model,
            &self.noise,
            &settings.lambdas,
            self.config.master_seed,
            0,
        )
    }
}

/// Wilson score interval for `successes` out of `n` at normal quantile `z`.
pub fn wilson_interval(successes: usize, n: usize, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n_f = n as f64;
    let p = successes as f64 / n_f;
    let z2 = z * z;
    let denom = 1.0 + z2 / n_f;
    let center = (p + z2 / (2.0 * n_f)) / denom;
    let half = z * (p * (1.0 - p) / n_f + z2 / (4.0 * n_f * n_f)).sqrt() / denom;
    let lo = if successes == 0 { 0.0 } else { (center - half).max(0.0) };
    let hi = if successes == n { 1.0 } else { (center + half).min(1.0) };
    (lo, hi)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpsSensitivity {
    pub eps: f64,
    pub extinct_fraction: f64,
    pub mean_tau: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FailedPath {
    pub path_index: u64,
    pub step: u64,
    pub time: f64,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckpointVerdict {
    pub t: f64,
    pub empirical: f64,
    pub bound: f64,
    pub half_width: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundComparison {
    pub slack: f64,
    pub verdicts: Vec<CheckpointVerdict>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleSummary {
    pub checkpoints: Vec<f64>,
    pub empirical_cdf: Vec<f64>,
    pub wilson_lo: Vec<f64>,
    pub wilson_hi: Vec<f64>,
    pub theory_bound: Vec<f64>,
    pub supermartingale_report: Option<SupermartingaleReport>,
    pub extinct_fraction: f64,
    pub n_failed: usize,
    pub gamma_used: f64,
    pub c_star: f64,
    pub n_paths: usize,
    pub x0_norm_hm1: f64,
    pub positivity_violations: usize,
    pub absorption_violations: usize,
    /// Recorded states with `|u|_{L^{α+1}} < γ|u|_{-1}`.
    pub embedding_violations: usize,
    pub min_embedding_ratio: Option<f64>,
    pub eps_sensitivity: Vec<EpsSensitivity>,
    pub bound_comparison: BoundComparison,
    pub failures: Vec<FailedPath>,
    pub tau_hat: Vec<Option<f64>>,
    pub config: ExperimentConfig,
}

impl EnsembleSummary {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serializes")
    }

    /// `path_index,tau_hat,extinct,failed`, one row per path.
    pub fn tau_csv(&self) -> String {
        let mut out = String::from("path_index,tau_hat,extinct,failed\n");
        for (i, tau) in self.tau_hat.iter().enumerate() {
            let failed = self.failures.iter().any(|f| f.path_index == i as u64);
            let tau_str = tau.map(|t| t.to_string()).unwrap_or_default();
            out.push_str(&format!("{i},{tau_str},{},{failed}\n", tau.is_some()));
        }
        out
    }
}

/// Verdict per checkpoint: PASS iff
/// `empirical ≥ bound − wilson_half_width − BOUND_SLACK`.
pub fn compare_with_bound(summary: &EnsembleSummary, inputs: &BoundInputs) -> Result<BoundComparison> {
    let verdicts = summary
        .checkpoints
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let bound = bound_at(t, inputs)?;
            let half_width = 0.5 * (summary.wilson_hi[i] - summary.wilson_lo[i]);
            let empirical = summary.empirical_cdf[i];
            Ok(CheckpointVerdict {
                t,
                empirical,
                bound,
                half_width,
                pass: empirical >= bound - half_width - BOUND_SLACK,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let pass = verdicts.iter().all(|v| v.pass);
    Ok(BoundComparison {
        slack: BOUND_SLACK,
        verdicts,
        pass,
    })
}

/// [`extinction_bound`] extended to `t = 0`, where only a zero initial state
/// is certainly extinct.
fn bound_at(t: f64, inputs: &BoundInputs) -> Result<f64> {
    if t > 0.0 {
        extinction_bound(t, inputs)
    } else {
        inputs.validate()?;
        Ok(if inputs.x_norm_hm1 == 0.0 { 1.0 } else { 0.0 })
    }
}

/// Runs `n_paths` paths with streams `(master_seed, i)` on `workers` threads
/// and aggregates them in path order, so the summary does not depend on the
/// worker count.
pub fn run_ensemble(config: &ExperimentConfig, workers: usize) -> Result<EnsembleSummary> {
    let experiment = Experiment::prepare(config)?;
    let gamma = experiment.gamma()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| invalid(format!("cannot build worker pool: {e}")))?;
    let results: Vec<PathResult> = pool.install(|| {
        (0..config.n_paths as u64)
            .into_par_iter()
            .map(|i| experiment.run_single(i))
            .collect::<Result<Vec<_>>>()
    })?;
    summarize(&experiment, gamma, &results)
}

fn summarize(experiment: &Experiment, gamma: f64, results: &[PathResult]) -> Result<EnsembleSummary> {
    let config = &experiment.config;
    let n_total = results.len();
    let failures: Vec<FailedPath> = results
        .iter()
        .filter_map(|r| {
            r.failure.as_ref().map(|f| FailedPath {
                path_index: r.path_index,
                step: f.step,
                time: f.time,
                message: f.message.clone(),
            })
        })
        .collect();
    let n_failed = failures.len();
    if n_failed == n_total {
        return Err(Error::AllPathsFailed(n_total));
    }
    if n_failed as f64 > MAX_FAILED_FRACTION * n_total as f64 {
        return Err(Error::FailedPathCap {
            failed: n_failed,
            total: n_total,
        });
    }
    let ok: Vec<&PathResult> = results.iter().filter(|r| !r.failed()).collect();
    let n_ok = ok.len();

    let inputs = experiment.bound_inputs(gamma);
    let alpha = config.model.alpha();
    let eps = config.solver.extinction_eps;

    let mut empirical_cdf = Vec::new();
    let mut wilson_lo = Vec::new();
    let mut wilson_hi = Vec::new();
    let mut theory_bound = Vec::new();
    for &t in &config.checkpoints {
        let hits = ok
            .iter()
            .filter(|r| r.tau_hat.is_some_and(|tau| tau <= t * (1.0 + 1e-12)))
            .count();
        empirical_cdf.push(hits as f64 / n_ok as f64);
        let (lo, hi) = wilson_interval(hits, n_ok, Z95);
        wilson_lo.push(lo);
        wilson_hi.push(hi);
        theory_bound.push(bound_at(t, &inputs)?);
    }

    let supermartingale_report = if n_ok >= MIN_SUPERMARTINGALE_PATHS && config.checkpoints.len() >= 2 {
        let series = ok
            .iter()
            .map(|r| supermartingale_series(&r.trajectory, inputs.c_star, alpha))
            .collect::<Result<Vec<_>>>()?;
        Some(ensemble_supermartingale_test(&series, &config.checkpoints)?)
    } else {
        None
    };

    let x0_l2 = norm_lp(&experiment.x0, 2.0)?;
    let floor = -1e-8 * x0_l2.max(1.0);
    let positivity_violations = ok
        .iter()
        .filter(|r| r.trajectory.min_values.iter().any(|&m| m < floor))
        .count();
    let absorption_violations = ok
        .iter()
        .filter(|r| r.extinct && !check_absorption(&r.trajectory, eps))
        .count();

    let mut embedding_violations = 0;
    let mut min_embedding_ratio: Option<f64> = None;
    for r in &ok {
        let tr = &r.trajectory;
        for (lp, hm1) in tr.lp_norms.iter().zip(&tr.hm1_norms) {
            if *hm1 > 0.0 {
                let ratio = lp / hm1;
                min_embedding_ratio = Some(min_embedding_ratio.map_or(ratio, |m| m.min(ratio)));
                if ratio < gamma * (1.0 - 1e-12) {
                    embedding_violations += 1;
                }
            }
        }
    }
    if embedding_violations > 0 {
        log::warn!(
            "{embedding_violations} recorded states fall below the embedding constant {gamma} (smallest ratio {:?})",
            min_embedding_ratio
        );
    }

    let extinct_fraction = ok.iter().filter(|r| r.extinct).count() as f64 / n_ok as f64;
    let mut eps_sensitivity = vec![EpsSensitivity {
        eps,
        extinct_fraction,
        mean_tau: mean(ok.iter().filter_map(|r| r.tau_hat)),
    }];
    for factor in [10.0, 100.0] {
        let coarse = eps * factor;
        let taus: Vec<f64> = ok
            .iter()
            .filter_map(|r| detect_extinction(&r.trajectory, coarse))
            .collect();
        eps_sensitivity.push(EpsSensitivity {
            eps: coarse,
            extinct_fraction: taus.len() as f64 / n_ok as f64,
            mean_tau: mean(taus.iter().copied()),
        });
    }

    let mut summary = EnsembleSummary {
        checkpoints: config.checkpoints.clone(),
        empirical_cdf,
        wilson_lo,
        wilson_hi,
        theory_bound,
        supermartingale_report,
        extinct_fraction,
        n_failed,
        gamma_used: gamma,
        c_star: inputs.c_star,
        n_paths: n_total,
        x0_norm_hm1: inputs.x_norm_hm1,
        positivity_violations,
        absorption_violations,
        embedding_violations,
        min_embedding_ratio,
        eps_sensitivity,
        bound_comparison: BoundComparison {
            slack: BOUND_SLACK,
            verdicts: Vec::new(),
            pass: true,
        },
        failures,
        tau_hat: results
            .iter()
            .map(|r| if r.failed() { None } else { r.tau_hat })
            .collect(),
        config: config.clone(),
    };
    summary.bound_comparison = compare_with_bound(&summary, &inputs)?;
    Ok(summary)
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, count) = values.fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    (count > 0).then(|| sum / count as f64)
}
