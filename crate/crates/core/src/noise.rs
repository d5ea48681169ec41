//! Truncated multiplicative noise `σ(X)dW = Σ_{k≤K} μ_k X e_k dβ_k` and the
//! counter-based random streams that drive it.
//!
//! A stream is keyed by `(master_seed, path_index)`; the Wiener increment of
//! step `n` is drawn from the ChaCha8 block stream number `n` under that key,
//! so any step of any path can be regenerated without replaying the others.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{invalid, Error, Result};
use crate::operators::{Field, SpectralBasis};

/// Mode coefficients `μ_k` together with the eigenpairs they multiply.
#[derive(Debug, Clone)]
pub struct NoiseSpec {
    mu: Vec<f64>,
    basis: SpectralBasis,
    c_star: f64,
}

impl NoiseSpec {
    /// Uses the first `mu.len()` pairs of `basis`.
    pub fn new(mu: Vec<f64>, basis: &SpectralBasis) -> Result<Self> {
        if mu.iter().any(|m| !m.is_finite()) {
            return Err(Error::NonFinite("noise coefficients"));
        }
        let basis = basis.truncated(mu.len())?;
        let c_star = mu.iter().zip(&basis.eigenvalues).map(|(m, l)| m * m * l * l).sum();
        Ok(Self { mu, basis, c_star })
    }

    /// Noise-free spec on the given basis.
    pub fn silent(basis: &SpectralBasis) -> Self {
        Self {
            mu: Vec::new(),
            basis: SpectralBasis {
                grid: basis.grid,
                eigenvalues: Vec::new(),
                modes: Vec::new(),
            },
            c_star: 0.0,
        }
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn basis(&self) -> &SpectralBasis {
        &self.basis
    }

    pub fn n_modes(&self) -> usize {
        self.mu.len()
    }

    pub fn c_star(&self) -> f64 {
        self.c_star
    }

    pub fn is_silent(&self) -> bool {
        self.mu.iter().all(|&m| m == 0.0)
    }
}

/// `C* = Σ_k μ_k² (λ_k^h)²` over the discrete eigenvalues.
pub fn c_star(noise: &NoiseSpec) -> f64 {
    noise.c_star
}

/// One step's worth of Brownian increments, each `N(0, dt)`.
#[derive(Debug, Clone, PartialEq)]
pub struct WienerIncrements {
    pub dbeta: Vec<f64>,
    pub dt: f64,
}

impl WienerIncrements {
    pub fn zero(k: usize, dt: f64) -> Self {
        Self {
            dbeta: vec![0.0; k],
            dt,
        }
    }
}

const DOMAIN_INCREMENTS: u8 = 0x01;
const DOMAIN_BRIDGE: u8 = 0x02;

fn stream_key(master_seed: u64, path_index: u64, domain: u8) -> [u8; 32] {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&master_seed.to_le_bytes());
    key[8..16].copy_from_slice(&path_index.to_le_bytes());
    key[16] = domain;
    key
}

/// Counter-based stream for one path.
///
/// With `refinement = r` each increment is the sum of `2^r` finer increments
/// of size `dt/2^r`, drawn at fine counters `n·2^r .. (n+1)·2^r`. A run at step
/// `dt` with refinement `r` therefore sees exactly the Brownian path of a run
/// at step `dt/2^r` with refinement 0.
#[derive(Debug, Clone)]
pub struct PathStream {
    master_seed: u64,
    path_index: u64,
    refinement: u32,
    step: u64,
}

impl PathStream {
    pub fn new(master_seed: u64, path_index: u64) -> Self {
        Self {
            master_seed,
            path_index,
            refinement: 0,
            step: 0,
        }
    }

    pub fn with_refinement(mut self, refinement: u32) -> Self {
        self.refinement = refinement;
        self
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn path_index(&self) -> u64 {
        self.path_index
    }

    /// Index of the next step to be drawn.
    pub fn position(&self) -> u64 {
        self.step
    }

    pub fn next_increments(&mut self, dt: f64, k: usize) -> WienerIncrements {
        let inc = self.increments_at(self.step, dt, k);
        self.step += 1;
        inc
    }

    /// Increments of step `step` without moving the stream.
    pub fn increments_at(&self, step: u64, dt: f64, k: usize) -> WienerIncrements {
        let mut dbeta = vec![0.0; k];
        if k == 0 {
            return WienerIncrements { dbeta, dt };
        }
        let fine = 1u64 << self.refinement;
        let scale = (dt / fine as f64).sqrt();
        let key = stream_key(self.master_seed, self.path_index, DOMAIN_INCREMENTS);
        for sub in 0..fine {
            let mut rng = ChaCha8Rng::from_seed(key);
            rng.set_stream(step * fine + sub);
            for d in dbeta.iter_mut() {
                let z: f64 = StandardNormal.sample(&mut rng);
                *d += scale * z;
            }
        }
        WienerIncrements { dbeta, dt }
    }

    /// Generator for Brownian-bridge refinement of step `step`, used when a
    /// step has to be subdivided. Independent of the increment stream.
    pub fn bridge_rng(&self, step: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(stream_key(self.master_seed, self.path_index, DOMAIN_BRIDGE));
        rng.set_stream(step);
        rng
    }
}

/// Draws the next `k` increments of `stream`.
pub fn sample_increments(dt: f64, k: usize, stream: &mut PathStream) -> Result<WienerIncrements> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(invalid(format!("time step must be positive, got {dt}")));
    }
    Ok(stream.next_increments(dt, k))
}

/// Splits an increment over `dt` into two halves conditioned on their sum.
pub fn bridge_split(inc: &WienerIncrements, rng: &mut ChaCha8Rng) -> (WienerIncrements, WienerIncrements) {
    let half = 0.5 * inc.dt;
    let sd = (0.25 * inc.dt).sqrt();
    let mut first = Vec::with_capacity(inc.dbeta.len());
    let mut second = Vec::with_capacity(inc.dbeta.len());
    for &d in &inc.dbeta {
        let z: f64 = StandardNormal.sample(rng);
        let a = 0.5 * d + sd * z;
        first.push(a);
        second.push(d - a);
    }
    (
        WienerIncrements { dbeta: first, dt: half },
        WienerIncrements {
            dbeta: second,
            dt: half,
        },
    )
}

/// `X_i · Σ_k μ_k e_k(x_i) dβ_k`.
pub fn noise_field(x: &Field, inc: &WienerIncrements, noise: &NoiseSpec) -> Result<Field> {
    if x.grid() != &noise.basis.grid {
        return Err(Error::GridMismatch);
    }
    if inc.dbeta.len() != noise.n_modes() {
        return Err(Error::ShapeMismatch {
            expected: noise.n_modes(),
            got: inc.dbeta.len(),
        });
    }
    let mut out = vec![0.0; x.len()];
    noise_into(x.values(), inc, noise, &mut out);
    Ok(Field::from_raw(*x.grid(), out))
}

pub(crate) fn noise_into(x: &[f64], inc: &WienerIncrements, noise: &NoiseSpec, out: &mut [f64]) {
    out.iter_mut().for_each(|v| *v = 0.0);
    for ((m, e), d) in noise.mu.iter().zip(&noise.basis.modes).zip(&inc.dbeta) {
        let c = m * d;
        if c == 0.0 {
            continue;
        }
        for (o, ev) in out.iter_mut().zip(e.values()) {
            *o += c * ev;
        }
    }
    for (o, xv) in out.iter_mut().zip(x) {
        *o *= xv;
    }
}
