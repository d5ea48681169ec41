//! One-dimensional Dirichlet discretization on `O = (0, L)`.
//!
//! Fields store the values at the `n` interior nodes `x_i = i·h`,
//! `h = L/(n+1)`; boundary values are implicitly zero. The discrete `L²`
//! inner product is `h·Σ u_i v_i`, under which the three-point Laplacian is
//! self-adjoint and its eigenvectors are exactly orthonormal.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

fn default_length() -> f64 {
    1.0
}

/// Uniform grid on `(0, length)` with `n_interior` unknowns.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub n_interior: usize,
    #[serde(default = "default_length")]
    pub length: f64,
}

impl GridSpec {
    pub fn new(n_interior: usize, length: f64) -> Result<Self> {
        let grid = Self { n_interior, length };
        grid.validate()?;
        Ok(grid)
    }

    /// Unit interval with `n_interior` unknowns.
    pub fn unit(n_interior: usize) -> Result<Self> {
        Self::new(n_interior, 1.0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_interior < 3 {
            return Err(invalid(format!(
                "grid needs at least 3 interior nodes, got {}",
                self.n_interior
            )));
        }
        if !(self.length.is_finite() && self.length > 0.0) {
            return Err(invalid(format!("grid length must be positive, got {}", self.length)));
        }
        Ok(())
    }

    pub fn spacing(&self) -> f64 {
        self.length / (self.n_interior + 1) as f64
    }

    /// Coordinates of the interior nodes.
    pub fn nodes(&self) -> Vec<f64> {
        let h = self.spacing();
        (1..=self.n_interior).map(|i| i as f64 * h).collect()
    }
}

/// Nodal values of a function vanishing on the boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    values: Vec<f64>,
    grid: GridSpec,
}

impl Field {
    pub fn new(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_interior {
            return Err(Error::ShapeMismatch {
                expected: grid.n_interior,
                got: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("field values"));
        }
        Ok(Self { values, grid })
    }

    pub fn zeros(grid: GridSpec) -> Self {
        Self {
            values: vec![0.0; grid.n_interior],
            grid,
        }
    }

    /// Samples `f` at the interior nodes.
    pub fn from_fn(grid: GridSpec, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(grid, grid.nodes().into_iter().map(f).collect())
    }

    /// Skips the finiteness scan; callers guarantee finite input.
    pub(crate) fn from_raw(grid: GridSpec, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.n_interior);
        Self { values, grid }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    pub fn scaled(&self, c: f64) -> Field {
        Field::from_raw(self.grid, self.values.iter().map(|v| c * v).collect())
    }

    /// `self + c·other`.
    pub fn add_scaled(&self, c: f64, other: &Field) -> Result<Field> {
        same_grid(self, other)?;
        Ok(Field::from_raw(
            self.grid,
            self.values.iter().zip(&other.values).map(|(a, b)| a + c * b).collect(),
        ))
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

fn same_grid(u: &Field, v: &Field) -> Result<()> {
    if u.grid != v.grid {
        return Err(Error::GridMismatch);
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Slice kernels shared with the stepper.

/// `out = Δ_h u` with homogeneous Dirichlet data.
pub(crate) fn laplacian_into(h: f64, u: &[f64], out: &mut [f64]) {
    let n = u.len();
    let inv_h2 = 1.0 / (h * h);
    for i in 0..n {
        let left = if i > 0 { u[i - 1] } else { 0.0 };
        let right = if i + 1 < n { u[i + 1] } else { 0.0 };
        out[i] = (left - 2.0 * u[i] + right) * inv_h2;
    }
}

/// Solves `−Δ_h u = f` by forward elimination on the constant
/// `(−1, 2, −1)/h²` stencil.
pub(crate) fn poisson_into(h: f64, f: &[f64], out: &mut [f64]) {
    let n = f.len();
    let h2 = h * h;
    // Normalized super-diagonal c'_i and modified rhs stored in `out`.
    let mut cprime = vec![0.0; n];
    let mut denom = 2.0;
    cprime[0] = -1.0 / denom;
    out[0] = f[0] * h2 / denom;
    for i in 1..n {
        denom = 2.0 + cprime[i - 1];
        cprime[i] = -1.0 / denom;
        out[i] = (f[i] * h2 + out[i - 1]) / denom;
    }
    for i in (0..n - 1).rev() {
        out[i] -= cprime[i] * out[i + 1];
    }
}

/// General tridiagonal solve (Thomas algorithm). `sub[0]` and `sup[n-1]` are
/// ignored. Requires a diagonally dominant (by rows or columns) matrix.
pub(crate) fn tridiagonal_solve(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &[f64], out: &mut [f64]) {
    let n = diag.len();
    let mut cprime = vec![0.0; n];
    let mut denom = diag[0];
    cprime[0] = sup[0] / denom;
    out[0] = rhs[0] / denom;
    for i in 1..n {
        denom = diag[i] - sub[i] * cprime[i - 1];
        cprime[i] = if i + 1 < n { sup[i] / denom } else { 0.0 };
        out[i] = (rhs[i] - sub[i] * out[i - 1]) / denom;
    }
    for i in (0..n - 1).rev() {
        out[i] -= cprime[i] * out[i + 1];
    }
}

pub(crate) fn dot_h(h: f64, u: &[f64], v: &[f64]) -> f64 {
    h * u.iter().zip(v).map(|(a, b)| a * b).sum::<f64>()
}

pub(crate) fn hm1_norm_slice(h: f64, u: &[f64], scratch: &mut [f64]) -> f64 {
    poisson_into(h, u, scratch);
    dot_h(h, u, scratch).max(0.0).sqrt()
}

pub(crate) fn lp_norm_slice(h: f64, u: &[f64], p: f64) -> f64 {
    if p == 2.0 {
        return dot_h(h, u, u).sqrt();
    }
    (h * u.iter().map(|v| v.abs().powf(p)).sum::<f64>()).powf(1.0 / p)
}

// ---------------------------------------------------------------------------
// Public operators.

/// Three-point Dirichlet Laplacian `(u_{i−1} − 2u_i + u_{i+1})/h²`.
pub fn apply_laplacian(u: &Field) -> Field {
    let mut out = vec![0.0; u.len()];
    laplacian_into(u.grid.spacing(), &u.values, &mut out);
    Field::from_raw(u.grid, out)
}

/// Returns `(−Δ_h)^{-1} f`.
pub fn solve_poisson(f: &Field) -> Field {
    let mut out = vec![0.0; f.len()];
    poisson_into(f.grid.spacing(), &f.values, &mut out);
    Field::from_raw(f.grid, out)
}

/// Discrete `L²` inner product `h·Σ u_i v_i`.
pub fn inner_l2(u: &Field, v: &Field) -> Result<f64> {
    same_grid(u, v)?;
    Ok(dot_h(u.grid.spacing(), &u.values, &v.values))
}

/// `⟨u, (−Δ_h)^{-1} v⟩`.
pub fn inner_hm1(u: &Field, v: &Field) -> Result<f64> {
    same_grid(u, v)?;
    let w = solve_poisson(v);
    Ok(dot_h(u.grid.spacing(), &u.values, &w.values))
}

pub fn norm_hm1(u: &Field) -> f64 {
    let mut scratch = vec![0.0; u.len()];
    hm1_norm_slice(u.grid.spacing(), &u.values, &mut scratch)
}

/// Quadrature `L^p` norm `(h·Σ|u_i|^p)^{1/p}`, `p ≥ 1`.
pub fn norm_lp(u: &Field, p: f64) -> Result<f64> {
    if !(p >= 1.0 && p.is_finite()) {
        return Err(invalid(format!("L^p exponent must be >= 1, got {p}")));
    }
    Ok(lp_norm_slice(u.grid.spacing(), &u.values, p))
}

/// Leading eigenpairs of the negative Dirichlet Laplacian.
#[derive(Debug, Clone)]
pub struct SpectralBasis {
    pub grid: GridSpec,
    /// Ascending, positive.
    pub eigenvalues: Vec<f64>,
    /// `L²`-orthonormal, each with a positive value at the first node.
    pub modes: Vec<Field>,
}

impl SpectralBasis {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// Keeps the first `k` pairs.
    pub fn truncated(&self, k: usize) -> Result<SpectralBasis> {
        if k > self.len() {
            return Err(Error::TooManyModes {
                requested: k,
                available: self.len(),
            });
        }
        Ok(SpectralBasis {
            grid: self.grid,
            eigenvalues: self.eigenvalues[..k].to_vec(),
            modes: self.modes[..k].to_vec(),
        })
    }
}

/// First `k` eigenpairs of `−Δ_h` from a symmetric eigensolve of the
/// tridiagonal matrix.
pub fn build_basis(grid: GridSpec, k: usize) -> Result<SpectralBasis> {
    grid.validate()?;
    let n = grid.n_interior;
    if k > n {
        return Err(Error::TooManyModes {
            requested: k,
            available: n,
        });
    }
    let h = grid.spacing();
    let inv_h2 = 1.0 / (h * h);
    let matrix = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            2.0 * inv_h2
        } else if i.abs_diff(j) == 1 {
            -inv_h2
        } else {
            0.0
        }
    });
    let eigen = matrix.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eigen.eigenvalues[a].total_cmp(&eigen.eigenvalues[b]));

    let norm = 1.0 / h.sqrt();
    let mut eigenvalues = Vec::with_capacity(k);
    let mut modes = Vec::with_capacity(k);
    for &idx in order.iter().take(k) {
        eigenvalues.push(eigen.eigenvalues[idx]);
        let column = eigen.eigenvectors.column(idx);
        let sign = if column[0] < 0.0 { -1.0 } else { 1.0 };
        modes.push(Field::from_raw(grid, column.iter().map(|v| sign * norm * v).collect()));
    }
    Ok(SpectralBasis {
        grid,
        eigenvalues,
        modes,
    })
}

/// Numerical estimate of the coercivity constant
/// `γ = inf_u |u|_{L^{α+1}} / |u|_{-1}` on the discrete space.
#[derive(Debug, Clone)]
pub struct GammaEstimate {
    pub value: f64,
    pub alpha: f64,
    pub n_starts: usize,
    /// Normalized to `|u|_{-1} = 1`.
    pub minimizer: Field,
}

/// The embedding quotient `|u|_{L^p} / |u|_{-1}`.
pub fn embedding_ratio(u: &Field, p: f64) -> Result<f64> {
    let den = norm_hm1(u);
    if den == 0.0 {
        return Err(invalid("embedding ratio of the zero field"));
    }
    Ok(norm_lp(u, p)? / den)
}

/// Estimates `γ` for `α ∈ (0,1)` as the best of: the first eigenmode, the
/// nodal hat functions, and projected-gradient descents from the first
/// eigenmode plus `n_starts` random smooth starts.
pub fn estimate_gamma(grid: GridSpec, alpha: f64, n_starts: usize, seed: u64) -> Result<GammaEstimate> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(invalid(format!("alpha must lie in (0,1), got {alpha}")));
    }
    let (value, minimizer) = minimize_embedding_ratio(grid, alpha + 1.0, n_starts, seed)?;
    Ok(GammaEstimate {
        value,
        alpha,
        n_starts,
        minimizer,
    })
}

/// Minimizes `|u|_{L^p} / |u|_{-1}` over nonzero fields; returns the smallest
/// value found and its minimizer normalized in `H^{-1}`. Any `p ≥ 1` is
/// accepted, which makes `p = 2` (where the answer is `sqrt(λ_1^h)`) available
/// as a validation case.
pub fn minimize_embedding_ratio(grid: GridSpec, p: f64, n_starts: usize, seed: u64) -> Result<(f64, Field)> {
    grid.validate()?;
    if !(p >= 1.0 && p.is_finite()) {
        return Err(invalid(format!("L^p exponent must be >= 1, got {p}")));
    }
    let n = grid.n_interior;
    let h = grid.spacing();
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut consider = |ratio: f64, u: &[f64]| {
        if best.as_ref().is_none_or(|(r, _)| ratio < *r) {
            best = Some((ratio, u.to_vec()));
        }
    };
    let mut scratch = vec![0.0; n];

    let e1: Vec<f64> = grid
        .nodes()
        .iter()
        .map(|x| (std::f64::consts::PI * x / grid.length).sin())
        .collect();
    consider(ratio_slice(h, &e1, p, &mut scratch), &e1);

    let mut hat = vec![0.0; n];
    for i in 0..n {
        hat[i] = 1.0;
        consider(ratio_slice(h, &hat, p, &mut scratch), &hat);
        hat[i] = 0.0;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = grid.nodes();
    for start in 0..=n_starts {
        let init: Vec<f64> = if start == 0 {
            e1.clone()
        } else {
            let coeffs: Vec<f64> = (1..=8).map(|k| rng.random_range(-1.0..1.0) / k as f64).collect();
            x.iter()
                .map(|&xi| {
                    coeffs
                        .iter()
                        .enumerate()
                        .map(|(k, c)| c * ((k + 1) as f64 * std::f64::consts::PI * xi / grid.length).sin())
                        .sum::<f64>()
                })
                .collect()
        };
        if init.iter().all(|v| *v == 0.0) {
            continue;
        }
        let (ratio, u) = descend(h, init, p);
        consider(ratio, &u);
    }

    let (value, mut u) = best.expect("at least one candidate is always evaluated");
    let norm = hm1_norm_slice(h, &u, &mut scratch);
    u.iter_mut().for_each(|v| *v /= norm);
    Ok((value, Field::from_raw(grid, u)))
}

fn ratio_slice(h: f64, u: &[f64], p: f64, scratch: &mut [f64]) -> f64 {
    lp_norm_slice(h, u, p) / hm1_norm_slice(h, u, scratch)
}

/// Value and `L²` gradient of the embedding quotient at `u`.
fn ratio_and_gradient(h: f64, u: &[f64], p: f64, w: &mut [f64], grad: &mut [f64]) -> f64 {
    let lp = lp_norm_slice(h, u, p);
    poisson_into(h, u, w);
    let hm1 = dot_h(h, u, w).sqrt();
    let ratio = lp / hm1;
    // d|u|_p = |u|_p^{1-p} |u|^{p-1} sign u,  d|u|_{-1} = (−Δ)^{-1}u / |u|_{-1}
    let lp_scale = lp.powf(1.0 - p);
    for i in 0..u.len() {
        let dlp = lp_scale * u[i].abs().powf(p - 1.0) * u[i].signum();
        grad[i] = (dlp - ratio * w[i] / hm1) / hm1;
    }
    ratio
}

/// Gradient descent with backtracking on the scale-invariant quotient,
/// projecting each iterate onto the nonnegative cone (which never increases
/// the quotient because the discrete Green's function is positive) and onto
/// the unit `H^{-1}` sphere.
fn descend(h: f64, mut u: Vec<f64>, p: f64) -> (f64, Vec<f64>) {
    let n = u.len();
    let mut w = vec![0.0; n];
    let mut grad = vec![0.0; n];
    let mut trial = vec![0.0; n];
    let mut trial_grad = vec![0.0; n];

    let project = |v: &mut [f64], w: &mut [f64]| {
        v.iter_mut().for_each(|x| *x = x.abs());
        let norm = hm1_norm_slice(h, v, w);
        v.iter_mut().for_each(|x| *x /= norm);
    };

    project(&mut u, &mut w);
    let mut ratio = ratio_and_gradient(h, &u, p, &mut w, &mut grad);
    let mut step = 1.0;
    let mut stalls = 0;
    for _ in 0..4000 {
        let gnorm2 = dot_h(h, &grad, &grad);
        if gnorm2 == 0.0 {
            break;
        }
        let mut accepted = false;
        for _ in 0..60 {
            for i in 0..n {
                trial[i] = u[i] - step * grad[i];
            }
            project(&mut trial, &mut w);
            let r = ratio_and_gradient(h, &trial, p, &mut w, &mut trial_grad);
            if r.is_finite() && r <= ratio - 1e-4 * step * gnorm2 {
                let gain = (ratio - r) / ratio;
                std::mem::swap(&mut u, &mut trial);
                std::mem::swap(&mut grad, &mut trial_grad);
                ratio = r;
                step *= 1.5;
                accepted = true;
                stalls = if gain < 1e-13 { stalls + 1 } else { 0 };
                break;
            }
            step *= 0.5;
        }
        if !accepted || stalls >= 20 {
            break;
        }
    }
    (ratio, u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn grid(n: usize) -> GridSpec {
        GridSpec::unit(n).unwrap()
    }

    fn closed_form_lambda(g: &GridSpec, k: usize) -> f64 {
        let h = g.spacing();
        4.0 / (h * h) * (k as f64 * PI * h / (2.0 * g.length)).sin().powi(2)
    }

    #[test]
    fn grid_rejects_small_or_bad() {
        assert!(GridSpec::unit(2).is_err());
        assert!(GridSpec::new(10, 0.0).is_err());
        assert!(GridSpec::new(10, f64::NAN).is_err());
        let g = GridSpec::new(9, 2.0).unwrap();
        assert!((g.spacing() * 10.0 - 2.0).abs() < 1e-15);
    }

    #[test]
    fn field_rejects_non_finite_and_wrong_length() {
        let g = grid(3);
        assert!(matches!(
            Field::new(g, vec![0.0, f64::NAN, 0.0]),
            Err(Error::NonFinite(_))
        ));
        assert!(matches!(Field::new(g, vec![0.0; 4]), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn stencil_on_three_nodes() {
        let g = grid(3);
        let u = Field::new(g, vec![0.0, 1.0, 0.0]).unwrap();
        assert_eq!(apply_laplacian(&u).values(), &[16.0, -32.0, 16.0]);
        assert!(apply_laplacian(&Field::zeros(g)).is_zero());
    }

    #[test]
    fn poisson_of_zero_is_zero() {
        assert!(solve_poisson(&Field::zeros(grid(7))).is_zero());
    }

    #[test]
    fn grid_mismatch_is_reported() {
        let a = Field::zeros(grid(5));
        let b = Field::zeros(grid(6));
        assert!(matches!(inner_hm1(&a, &b), Err(Error::GridMismatch)));
    }

    #[test]
    fn lp_norm_of_constant() {
        let g = grid(9);
        let u = Field::new(g, vec![-2.0; 9]).unwrap();
        let p = 1.5;
        let expected = 2.0 * (g.spacing() * 9.0).powf(1.0 / p);
        assert!((norm_lp(&u, p).unwrap() - expected).abs() < 1e-14);
        assert!(norm_lp(&u, 0.5).is_err());
        let l2 = (g.spacing() * 36.0).sqrt();
        assert!((norm_lp(&u, 2.0).unwrap() - l2).abs() < 1e-14);
    }

    #[test]
    fn basis_matches_closed_form_eigenvalues() {
        let g = grid(63);
        let basis = build_basis(g, 5).unwrap();
        for k in 0..5 {
            let exact = closed_form_lambda(&g, k + 1);
            assert!((basis.eigenvalues[k] - exact).abs() <= 1e-10 * exact);
        }
        assert!(matches!(build_basis(g, 64), Err(Error::TooManyModes { .. })));
    }

    #[test]
    fn poisson_inverts_eigenmodes() {
        let g = grid(31);
        let basis = build_basis(g, 3).unwrap();
        for (lam, e) in basis.eigenvalues.iter().zip(&basis.modes) {
            let u = solve_poisson(e);
            for (a, b) in u.values().iter().zip(e.values()) {
                assert!((a - b / lam).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn hm1_of_first_mode() {
        let g = grid(47);
        let basis = build_basis(g, 2).unwrap();
        let lam1 = closed_form_lambda(&g, 1);
        let (e1, e2) = (&basis.modes[0], &basis.modes[1]);
        assert!(inner_hm1(e1, e2).unwrap().abs() < 1e-13);
        assert!((inner_hm1(e1, e1).unwrap() - 1.0 / lam1).abs() < 1e-12);
        assert!((norm_hm1(e1) - lam1.sqrt().recip()).abs() < 1e-12);
        assert_eq!(norm_hm1(&Field::zeros(g)), 0.0);
        assert!((norm_hm1(&e1.scaled(-3.0)) - 3.0 * norm_hm1(e1)).abs() < 1e-13);
    }

    #[test]
    fn p2_ratio_minimum_is_sqrt_lambda1() {
        let g = grid(63);
        let (value, u) = minimize_embedding_ratio(g, 2.0, 4, 1).unwrap();
        let lam1 = closed_form_lambda(&g, 1);
        assert!(
            (value - lam1.sqrt()).abs() < 1e-6 * lam1.sqrt(),
            "{value} vs {}",
            lam1.sqrt()
        );
        let e1 = build_basis(g, 1).unwrap().modes.remove(0);
        let overlap = inner_l2(&u, &e1).unwrap() / norm_lp(&u, 2.0).unwrap();
        assert!((overlap.abs() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn ratio_is_scale_invariant() {
        let g = grid(15);
        let u = Field::from_fn(g, |x| x * (1.0 - x) + 0.1 * (7.0 * x).sin()).unwrap();
        let r = embedding_ratio(&u, 1.5).unwrap();
        for c in [-4.0, 0.01, 123.0] {
            assert!((embedding_ratio(&u.scaled(c), 1.5).unwrap() - r).abs() < 1e-12 * r);
        }
    }

    #[test]
    fn gamma_is_deterministic_and_below_first_mode() {
        let g = grid(63);
        let a = estimate_gamma(g, 0.5, 4, 11).unwrap();
        let b = estimate_gamma(g, 0.5, 4, 11).unwrap();
        assert_eq!(a.value, b.value);
        let e1 = build_basis(g, 1).unwrap().modes.remove(0);
        assert!(a.value <= embedding_ratio(&e1, 1.5).unwrap());
        let r = embedding_ratio(&a.minimizer, 1.5).unwrap();
        assert!((r - a.value).abs() < 1e-12 * r);
        assert!(estimate_gamma(g, 1.0, 4, 0).is_err());
    }
}
