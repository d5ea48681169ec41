//! Time integration of the regularized equation
//!
//! ```text
//! dX − Δ(Ψ_λ(X) + λX + Ψ̃(X)) dt = Σ_k μ_k X e_k dβ_k
//! ```
//!
//! by drift-implicit, noise-explicit Euler–Maruyama splitting: each step
//! forms `B = X + σ(X)ΔW` and then solves `Y − dt·Δ_h G(Y) = B` with
//! `G(r) = Ψ_λ(r) + λr + Ψ̃(r)`.
//!
//! The implicit equation is the optimality condition of the strictly convex
//! functional `E(Y) = ½|Y − B|²_{-1} + dt·h·Σ Φ(Y_i)`, `Φ' = G`, and the Newton
//! direction for the residual is a descent direction for `E`. Line search on
//! `E` makes the damped Newton iteration globally convergent.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::noise::{bridge_split, noise_into, NoiseSpec, PathStream, WienerIncrements};
use crate::nonlinearity::{aux_psi, psi0, yosida_eval, AuxiliaryLaw, DiffusionLaw, RegularizationParams};
use crate::operators::{
    dot_h, hm1_norm_slice, laplacian_into, lp_norm_slice, poisson_into, tridiagonal_solve, Field, GridSpec,
    SpectralBasis,
};

/// Subdivision depth after which a failing step marks the path as failed.
pub const MAX_HALVINGS: u32 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DriftMode {
    /// `G = Ψ_λ + λ·id + Ψ̃`.
    #[default]
    Yosida,
    /// `G = id`, a linear heat-equation harness for checking the solver
    /// against direct linear algebra.
    Linear,
}

/// Diffusion nonlinearity and its regularization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub diffusion: DiffusionLaw,
    pub auxiliary: AuxiliaryLaw,
    pub regularization: RegularizationParams,
    #[serde(default)]
    pub drift: DriftMode,
}

impl ModelParams {
    pub fn new(diffusion: DiffusionLaw, auxiliary: AuxiliaryLaw, regularization: RegularizationParams) -> Self {
        Self {
            diffusion,
            auxiliary,
            regularization,
            drift: DriftMode::Yosida,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.diffusion.validate()?;
        self.auxiliary.validate()?;
        self.regularization.validate()
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.regularization.lambda = lambda;
        self
    }

    pub fn alpha(&self) -> f64 {
        self.diffusion.alpha
    }

    /// `(G(r), G'(r), Φ(r))`.
    fn drift_eval(&self, r: f64) -> Result<(f64, f64, f64)> {
        match self.drift {
            DriftMode::Linear => Ok((r, 1.0, 0.5 * r * r)),
            DriftMode::Yosida => {
                let e = yosida_eval(r, &self.diffusion, &self.regularization)?;
                let linear = self.regularization.lambda + self.auxiliary.slope();
                Ok((
                    e.value + linear * r,
                    e.derivative + linear,
                    e.primitive + 0.5 * linear * r * r,
                ))
            }
        }
    }

    /// Unregularized drift integrand `ρ|r|^α sign r + Ψ̃(r)` of the weak
    /// formulation (`r` itself in linear mode).
    fn weak_integrand(&self, r: f64) -> f64 {
        match self.drift {
            DriftMode::Linear => r,
            DriftMode::Yosida => psi0(r, &self.diffusion) + aux_psi(r, &self.auxiliary),
        }
    }

    /// Lipschitz constant of `G`.
    fn drift_lipschitz(&self) -> f64 {
        match self.drift {
            DriftMode::Linear => 1.0,
            DriftMode::Yosida => 1.0 / self.regularization.lambda + self.regularization.lambda + self.auxiliary.slope(),
        }
    }
}

fn default_newton_tol() -> f64 {
    1e-10
}

fn default_newton_max_iter() -> usize {
    50
}

fn default_record_every() -> usize {
    1
}

fn default_extinction_eps() -> f64 {
    1e-6
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub dt: f64,
    pub t_final: f64,
    #[serde(default = "default_newton_tol")]
    pub newton_tol: f64,
    #[serde(default = "default_newton_max_iter")]
    pub newton_max_iter: usize,
    #[serde(default = "default_record_every")]
    pub record_every: usize,
    #[serde(default = "default_extinction_eps")]
    pub extinction_eps: f64,
    /// Keep states at recorded times and every step's increments.
    #[serde(default)]
    pub log_states: bool,
}

impl SolverConfig {
    pub fn new(dt: f64, t_final: f64) -> Result<Self> {
        let config = Self {
            dt,
            t_final,
            newton_tol: default_newton_tol(),
            newton_max_iter: default_newton_max_iter(),
            record_every: default_record_every(),
            extinction_eps: default_extinction_eps(),
            log_states: false,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(invalid(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_final.is_finite() && self.dt < self.t_final) {
            return Err(invalid(format!(
                "t_final ({}) must exceed dt ({})",
                self.t_final, self.dt
            )));
        }
        if !(self.newton_tol > 0.0) || self.newton_max_iter == 0 {
            return Err(invalid("Newton tolerance and iteration budget must be positive"));
        }
        if self.record_every == 0 {
            return Err(invalid("record_every must be at least 1"));
        }
        if !(self.extinction_eps > 0.0) {
            return Err(invalid("extinction_eps must be positive"));
        }
        Ok(())
    }

    pub fn n_steps(&self) -> u64 {
        let steps = self.t_final / self.dt;
        let rounded = steps.round();
        if (steps - rounded).abs() <= 1e-9 * steps {
            rounded as u64
        } else {
            steps.ceil() as u64
        }
    }
}

/// Recorded diagnostics of one path.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub hm1_norms: Vec<f64>,
    /// `L^{α+1}` norms.
    pub lp_norms: Vec<f64>,
    pub min_values: Vec<f64>,
    pub max_values: Vec<f64>,
    /// `e^{−C*(1−α)t} |X(t)|_{-1}^{1−α}`.
    pub supermartingale_values: Vec<f64>,
    /// States at the recorded times, when logging is enabled.
    pub states: Option<Vec<Vec<f64>>>,
    /// Wiener increments of every step, when logging is enabled.
    pub increments_log: Option<Vec<Vec<f64>>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Index of the last recorded time not after `t`.
    pub fn index_at(&self, t: f64) -> Option<usize> {
        let slack = 1e-9 * t.abs().max(1e-12);
        self.times.iter().rposition(|&s| s <= t + slack)
    }

    /// CSV with header `t,hm1_norm,lp_norm,min,max,supermartingale`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "t,hm1_norm,lp_norm,min,max,supermartingale")?;
        for i in 0..self.len() {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                self.times[i],
                self.hm1_norms[i],
                self.lp_norms[i],
                self.min_values[i],
                self.max_values[i],
                self.supermartingale_values[i]
            )?;
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("CSV output is ASCII")
    }
}

/// Where and why a path was abandoned.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathFailure {
    pub step: u64,
    pub time: f64,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct PathResult {
    pub tau_hat: Option<f64>,
    pub extinct: bool,
    pub trajectory: Trajectory,
    pub master_seed: u64,
    pub path_index: u64,
    pub config: SolverConfig,
    pub failure: Option<PathFailure>,
}

impl PathResult {
    pub fn failed(&self) -> bool {
        self.failure.is_some()
    }
}

// ---------------------------------------------------------------------------
// Implicit drift step.

struct DriftState {
    g: Vec<f64>,
    dg: Vec<f64>,
    phi_sum: f64,
}

impl DriftState {
    fn new(n: usize) -> Self {
        Self {
            g: vec![0.0; n],
            dg: vec![0.0; n],
            phi_sum: 0.0,
        }
    }

    fn evaluate(&mut self, y: &[f64], model: &ModelParams) -> Result<()> {
        let mut phi_sum = 0.0;
        for (i, &r) in y.iter().enumerate() {
            let (g, dg, phi) = model.drift_eval(r)?;
            self.g[i] = g;
            self.dg[i] = dg;
            phi_sum += phi;
        }
        self.phi_sum = phi_sum;
        Ok(())
    }
}

struct ImplicitSolver<'a> {
    h: f64,
    dt: f64,
    b: &'a [f64],
    scratch: Vec<f64>,
    diff: Vec<f64>,
}

impl ImplicitSolver<'_> {
    /// `F = Y − B − dt·Δ_h G(Y)`, returns `|F|_{L²}`.
    fn residual(&mut self, y: &[f64], state: &DriftState, f: &mut [f64]) -> f64 {
        laplacian_into(self.h, &state.g, &mut self.scratch);
        for (((fi, yi), bi), si) in f.iter_mut().zip(y).zip(self.b.iter()).zip(&self.scratch) {
            *fi = yi - bi - self.dt * si;
        }
        dot_h(self.h, f, f).sqrt()
    }

    fn energy(&mut self, y: &[f64], state: &DriftState) -> f64 {
        for ((d, yi), bi) in self.diff.iter_mut().zip(y).zip(self.b.iter()) {
            *d = yi - bi;
        }
        poisson_into(self.h, &self.diff, &mut self.scratch);
        0.5 * dot_h(self.h, &self.diff, &self.scratch) + self.dt * self.h * state.phi_sum
    }
}

/// Solves `Y − dt·Δ_h G(Y) = B` for the drift `G` of `model`.
///
/// Stops once `|residual|_{L²} ≤ tol·max(1, |B|_{L²})`. Damped Newton with a
/// tridiagonal Jacobian `I − dt·Δ_h diag(G'(Y))` is tried first; if the line
/// search stalls, plain fixed-point iteration takes over when it is a
/// contraction. Failure is reported as [`Error::ImplicitSolve`], which the
/// stepper answers by halving the step.
pub fn implicit_solve(b: &Field, dt: f64, model: &ModelParams, tol: f64, max_iter: usize) -> Result<Field> {
    if !(dt > 0.0) {
        return Err(invalid(format!("dt must be positive, got {dt}")));
    }
    let y = solve_drift(b.grid().spacing(), b.values(), dt, model, tol, max_iter)?;
    Ok(Field::from_raw(*b.grid(), y))
}

fn solve_drift(h: f64, b: &[f64], dt: f64, model: &ModelParams, tol: f64, max_iter: usize) -> Result<Vec<f64>> {
    let n = b.len();
    let target = tol * dot_h(h, b, b).sqrt().max(1.0);
    let mut solver = ImplicitSolver {
        h,
        dt,
        b,
        scratch: vec![0.0; n],
        diff: vec![0.0; n],
    };

    let mut y = b.to_vec();
    let mut state = DriftState::new(n);
    state.evaluate(&y, model)?;
    let mut f = vec![0.0; n];
    let mut res = solver.residual(&y, &state, &mut f);

    let coupling = dt / (h * h);
    let mut sub = vec![0.0; n];
    let mut diag = vec![0.0; n];
    let mut sup = vec![0.0; n];
    let mut rhs = vec![0.0; n];
    let mut dir = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut trial = vec![0.0; n];
    let mut trial_state = DriftState::new(n);
    let mut trial_f = vec![0.0; n];

    let mut iterations = 0;
    while res > target && iterations < max_iter {
        iterations += 1;
        for i in 0..n {
            diag[i] = 1.0 + 2.0 * coupling * state.dg[i];
            sub[i] = if i > 0 { -coupling * state.dg[i - 1] } else { 0.0 };
            sup[i] = if i + 1 < n { -coupling * state.dg[i + 1] } else { 0.0 };
            rhs[i] = -f[i];
        }
        tridiagonal_solve(&sub, &diag, &sup, &rhs, &mut dir);

        poisson_into(h, &f, &mut w);
        let slope = dot_h(h, &w, &dir);
        let e0 = solver.energy(&y, &state);

        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            for i in 0..n {
                trial[i] = y[i] + step * dir[i];
            }
            trial_state.evaluate(&trial, model)?;
            let e1 = solver.energy(&trial, &trial_state);
            let trial_res = solver.residual(&trial, &trial_state, &mut trial_f);
            let energy_ok = slope < 0.0 && e1 <= e0 + 1e-4 * step * slope + 1e-14 * e0.abs();
            let residual_ok = trial_res <= (1.0 - 1e-4 * step) * res;
            if energy_ok || residual_ok {
                accepted = true;
                res = trial_res;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
        std::mem::swap(&mut y, &mut trial);
        std::mem::swap(&mut state, &mut trial_state);
        std::mem::swap(&mut f, &mut trial_f);
    }
    if res <= target {
        return Ok(y);
    }

    // Y ← B + dt·Δ_h G(Y) contracts when 4·dt·Lip(G)/h² < 1.
    if 4.0 * coupling * model.drift_lipschitz() < 1.0 {
        for _ in 0..max_iter {
            laplacian_into(h, &state.g, &mut w);
            for i in 0..n {
                y[i] = b[i] + dt * w[i];
            }
            state.evaluate(&y, model)?;
            res = solver.residual(&y, &state, &mut f);
            if res <= target {
                return Ok(y);
            }
        }
    }
    Err(Error::ImplicitSolve {
        iterations,
        residual: res,
    })
}

// ---------------------------------------------------------------------------
// Stepping.

#[allow(clippy::too_many_arguments)]
fn advance(
    h: f64,
    x: &[f64],
    inc: &WienerIncrements,
    config: &SolverConfig,
    model: &ModelParams,
    noise: &NoiseSpec,
    bridge: &mut Option<rand_chacha::ChaCha8Rng>,
    stream: &PathStream,
    step_index: u64,
    depth: u32,
) -> Result<Vec<f64>> {
    let mut b = vec![0.0; x.len()];
    noise_into(x, inc, noise, &mut b);
    for (bi, xi) in b.iter_mut().zip(x) {
        *bi += xi;
    }
    match solve_drift(h, &b, inc.dt, model, config.newton_tol, config.newton_max_iter) {
        Ok(y) => Ok(y),
        Err(Error::ImplicitSolve { .. }) if depth < MAX_HALVINGS => {
            log::debug!("halving step {step_index} at depth {depth}");
            let rng = bridge.get_or_insert_with(|| stream.bridge_rng(step_index));
            let (first, second) = bridge_split(inc, rng);
            let mid = advance(
                h,
                x,
                &first,
                config,
                model,
                noise,
                bridge,
                stream,
                step_index,
                depth + 1,
            )?;
            advance(
                h,
                &mid,
                &second,
                config,
                model,
                noise,
                bridge,
                stream,
                step_index,
                depth + 1,
            )
        }
        Err(e) => Err(e),
    }
}

/// One splitting step from `x` with the stream's next increments. A step whose
/// implicit solve fails is subdivided along a Brownian bridge, at most
/// [`MAX_HALVINGS`] times.
pub fn step(
    x: &Field,
    config: &SolverConfig,
    model: &ModelParams,
    noise: &NoiseSpec,
    stream: &mut PathStream,
) -> Result<(Field, WienerIncrements)> {
    if x.grid() != &noise.basis().grid && noise.n_modes() > 0 {
        return Err(Error::GridMismatch);
    }
    let step_index = stream.position();
    let inc = stream.next_increments(config.dt, noise.n_modes());
    let mut bridge = None;
    let y = advance(
        x.grid().spacing(),
        x.values(),
        &inc,
        config,
        model,
        noise,
        &mut bridge,
        stream,
        step_index,
        0,
    )?;
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("stepped state"));
    }
    Ok((Field::from_raw(*x.grid(), y), inc))
}

struct Recorder {
    trajectory: Trajectory,
    decay: f64,
    exponent: f64,
    p: f64,
}

impl Recorder {
    fn new(model: &ModelParams, c_star: f64, log_states: bool) -> Self {
        let alpha = model.alpha();
        Self {
            trajectory: Trajectory {
                states: log_states.then(Vec::new),
                increments_log: log_states.then(Vec::new),
                ..Trajectory::default()
            },
            decay: c_star * (1.0 - alpha),
            exponent: 1.0 - alpha,
            p: 1.0 + alpha,
        }
    }

    fn record(&mut self, t: f64, h: f64, x: &[f64], hm1: f64) {
        let tr = &mut self.trajectory;
        tr.times.push(t);
        tr.hm1_norms.push(hm1);
        tr.lp_norms.push(lp_norm_slice(h, x, self.p));
        tr.min_values.push(x.iter().copied().fold(f64::INFINITY, f64::min));
        tr.max_values.push(x.iter().copied().fold(f64::NEG_INFINITY, f64::max));
        tr.supermartingale_values
            .push((-self.decay * t).exp() * hm1.powf(self.exponent));
        if let Some(states) = tr.states.as_mut() {
            states.push(x.to_vec());
        }
    }
}

/// Integrates one path with the stream `(master_seed, path_index)`.
pub fn run_path(
    x0: &Field,
    config: &SolverConfig,
    model: &ModelParams,
    noise: &NoiseSpec,
    master_seed: u64,
    path_index: u64,
) -> Result<PathResult> {
    run_path_with_stream(x0, config, model, noise, PathStream::new(master_seed, path_index))
}

/// Integrates from `x0` to `t_final`. Once `|X|_{-1} ≤ extinction_eps` the
/// state is set to exactly zero, and zero is a fixed point of the scheme, so
/// it stays there. Solver breakdown after all subdivisions marks the path as
/// failed instead of returning an error.
pub fn run_path_with_stream(
    x0: &Field,
    config: &SolverConfig,
    model: &ModelParams,
    noise: &NoiseSpec,
    mut stream: PathStream,
) -> Result<PathResult> {
    config.validate()?;
    model.validate()?;
    if noise.n_modes() > 0 && x0.grid() != &noise.basis().grid {
        return Err(Error::GridMismatch);
    }
    let grid: GridSpec = *x0.grid();
    let h = grid.spacing();
    let n = grid.n_interior;
    let mut scratch = vec![0.0; n];
    let mut recorder = Recorder::new(model, noise.c_star(), config.log_states);

    let mut x = x0.clone();
    let mut tau_hat = None;
    let mut hm1 = hm1_norm_slice(h, x.values(), &mut scratch);
    if hm1 <= config.extinction_eps {
        x = Field::zeros(grid);
        hm1 = 0.0;
        tau_hat = Some(0.0);
    }
    recorder.record(0.0, h, x.values(), hm1);

    let n_steps = config.n_steps();
    let mut failure = None;
    for k in 1..=n_steps {
        let t = (k as f64 * config.dt).min(config.t_final);
        let (next, inc) = match step(&x, config, model, noise, &mut stream) {
            Ok(out) => out,
            Err(e) => {
                log::warn!("path {} failed at step {k} (t = {t}): {e}", stream.path_index());
                failure = Some(PathFailure {
                    step: k,
                    time: t,
                    message: e.to_string(),
                });
                break;
            }
        };
        x = next;
        if let Some(log) = recorder.trajectory.increments_log.as_mut() {
            log.push(inc.dbeta);
        }
        hm1 = if tau_hat.is_some() {
            debug_assert!(x.is_zero());
            0.0
        } else {
            hm1_norm_slice(h, x.values(), &mut scratch)
        };
        if tau_hat.is_none() && hm1 <= config.extinction_eps {
            x = Field::zeros(grid);
            hm1 = 0.0;
            tau_hat = Some(t);
        }
        if k % config.record_every as u64 == 0 || k == n_steps {
            recorder.record(t, h, x.values(), hm1);
        }
    }

    Ok(PathResult {
        tau_hat,
        extinct: tau_hat.is_some(),
        trajectory: recorder.trajectory,
        master_seed: stream.master_seed(),
        path_index: stream.path_index(),
        config: *config,
        failure,
    })
}

// ---------------------------------------------------------------------------
// Diagnostics.

/// Largest defect, over recorded times, in the weak formulation tested
/// against `e_j` (1-based):
///
/// ```text
/// ⟨X(t), e_j⟩ − ⟨x, e_j⟩ − ∫_0^t ⟨Ψ₀(X) + Ψ̃(X), Δ_h e_j⟩ ds − Σ_k μ_k ∫_0^t ⟨X e_k, e_j⟩ dβ_k
/// ```
///
/// The drift integral uses the trapezoid rule and the unregularized `Ψ₀`,
/// so the defect contains the regularization error as well as the time
/// discretization error. The stochastic integral uses left endpoints. Needs
/// a path run with `log_states` and `record_every = 1`.
pub fn weak_form_residual(
    result: &PathResult,
    j: usize,
    basis: &SpectralBasis,
    model: &ModelParams,
    noise: &NoiseSpec,
) -> Result<f64> {
    let tr = &result.trajectory;
    let states = tr.states.as_ref().ok_or(Error::MissingLog("state"))?;
    let increments = tr.increments_log.as_ref().ok_or(Error::MissingLog("increment"))?;
    if increments.len() + 1 != states.len() {
        return Err(Error::MissingLog("per-step state"));
    }
    if j == 0 || j > basis.len() {
        return Err(invalid(format!("mode index {j} outside 1..={}", basis.len())));
    }
    let grid = basis.grid;
    let h = grid.spacing();
    let ej = basis.modes[j - 1].values();
    let mut lap_ej = vec![0.0; ej.len()];
    laplacian_into(h, ej, &mut lap_ej);

    // ⟨e_k e_j, ·⟩ weights for the stochastic sum.
    let weights: Vec<Vec<f64>> = noise
        .mu()
        .iter()
        .zip(&noise.basis().modes)
        .map(|(m, ek)| ek.values().iter().zip(ej).map(|(a, b)| m * a * b).collect())
        .collect();

    let drift_term = |x: &[f64]| -> f64 {
        h * x
            .iter()
            .zip(&lap_ej)
            .map(|(&v, l)| model.weak_integrand(v) * l)
            .sum::<f64>()
    };

    let x0 = &states[0];
    let start = dot_h(h, x0, ej);
    let mut drift_integral = 0.0;
    let mut noise_integral = 0.0;
    let mut prev_drift = drift_term(x0);
    let mut worst: f64 = 0.0;
    for m in 0..increments.len() {
        let dt = tr.times[m + 1] - tr.times[m];
        let xm = &states[m];
        for (w, d) in weights.iter().zip(&increments[m]) {
            noise_integral += d * dot_h(h, xm, w);
        }
        let next_drift = drift_term(&states[m + 1]);
        drift_integral += 0.5 * dt * (prev_drift + next_drift);
        prev_drift = next_drift;
        let defect = dot_h(h, &states[m + 1], ej) - start - drift_integral - noise_integral;
        worst = worst.max(defect.abs());
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub lambda_a: f64,
    pub lambda_b: f64,
    /// `sup_t |X_a(t) − X_b(t)|_{-1}` over recorded times.
    pub sup_hm1: f64,
    /// `(∫_0^T |X_a − X_b|²_{L²} dt)^{1/2}`, trapezoid in time.
    pub l2_l2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub lambdas: Vec<f64>,
    pub rows: Vec<ConvergenceRow>,
}

impl ConvergenceReport {
    /// Successive sup-in-time distances strictly decrease.
    pub fn strictly_decreasing(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].sup_hm1 < w[0].sup_hm1)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("lambda_a,lambda_b,sup_hm1,l2_l2\n");
        for r in &self.rows {
            out.push_str(&format!("{},{},{},{}\n", r.lambda_a, r.lambda_b, r.sup_hm1, r.l2_l2));
        }
        out
    }
}

/// Runs the same Brownian path for each regularization parameter and
/// tabulates distances between consecutive solutions.
pub fn convergence_study(
    x0: &Field,
    config: &SolverConfig,
    model: &ModelParams,
    noise: &NoiseSpec,
    lambdas: &[f64],
    master_seed: u64,
    path_index: u64,
) -> Result<ConvergenceReport> {
    if lambdas.len() < 2 {
        return Err(invalid("convergence study needs at least two lambdas"));
    }
    let mut logged = *config;
    logged.log_states = true;
    let h = x0.grid().spacing();

    let mut paths = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        let m = model.with_lambda(lambda);
        let result = run_path(x0, &logged, &m, noise, master_seed, path_index)?;
        if let Some(f) = &result.failure {
            log::error!("lambda = {lambda}: {}", f.message);
            return Err(Error::ImplicitSolve {
                iterations: 0,
                residual: f64::NAN,
            });
        }
        paths.push(result);
    }

    let mut scratch = vec![0.0; x0.len()];
    let mut diff = vec![0.0; x0.len()];
    let mut rows = Vec::with_capacity(lambdas.len() - 1);
    for (i, pair) in paths.windows(2).enumerate() {
        let (a, b) = (&pair[0].trajectory, &pair[1].trajectory);
        let sa = a.states.as_ref().expect("logging was enabled");
        let sb = b.states.as_ref().expect("logging was enabled");
        let mut sup: f64 = 0.0;
        let mut sq = Vec::with_capacity(sa.len());
        for (ua, ub) in sa.iter().zip(sb) {
            for k in 0..diff.len() {
                diff[k] = ua[k] - ub[k];
            }
            sup = sup.max(hm1_norm_slice(h, &diff, &mut scratch));
            sq.push(dot_h(h, &diff, &diff));
        }
        let integral: f64 = a
            .times
            .windows(2)
            .zip(sq.windows(2))
            .map(|(t, s)| 0.5 * (t[1] - t[0]) * (s[0] + s[1]))
            .sum();
        rows.push(ConvergenceRow {
            lambda_a: lambdas[i],
            lambda_b: lambdas[i + 1],
            sup_hm1: sup,
            l2_l2: integral.sqrt(),
        });
    }
    Ok(ConvergenceReport {
        lambdas: lambdas.to_vec(),
        rows,
    })
}
