//! Numerical laboratory for the fast-diffusion stochastic porous media
//! equation
//!
//! ```text
//! dX - Δ(ρ|X|^α sign X + Ψ̃(X)) dt = Σ_k μ_k X e_k dβ_k,   X = 0 on ∂O
//! ```
//!
//! on a one-dimensional Dirichlet interval. The drift is replaced by its
//! Yosida regularization `Ψ_λ + λ·id + Ψ̃`, integrated with a drift-implicit,
//! noise-explicit Euler–Maruyama scheme, and the resulting extinction times are
//! compared against the closed-form lower bound on `P(τ ≤ t)`.
//!
//! Module map:
//!
//! - [`operators`]: grid, discrete Laplacian, Poisson solves, eigenbasis,
//!   `L^p` and `H^{-1}` norms, embedding constant estimation.
//! - [`nonlinearity`]: the power law, its resolvent and Yosida approximation.
//! - [`noise`]: truncated multiplicative eigenbasis noise and counter-based streams.
//! - [`stepper`]: implicit drift solve, time stepping, single paths, weak-form
//!   residuals and the regularization convergence study.
//! - [`analysis`]: extinction detection, supermartingale and absorption checks.
//! - [`theory`]: closed-form extinction bounds.
//! - [`harness`]: experiment configuration, ensembles and bound comparison.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod error;
pub mod harness;
pub mod noise;
pub mod nonlinearity;
pub mod operators;
pub mod stepper;
pub mod theory;

pub use error::{Error, Result};
