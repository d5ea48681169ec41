//! The fast-diffusion graph `Ψ₀(r) = ρ|r|^α sign r`, its resolvent
//! `(1 + λΨ₀)^{-1}`, the Yosida approximation `Ψ_λ` and the auxiliary
//! monotone term `Ψ̃`. All maps act on scalars; fields are handled nodewise
//! by the stepper.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// `Ψ₀(r) = ρ|r|^α sign r` with `ρ > 0`, `0 < α < 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiffusionLaw {
    pub rho: f64,
    pub alpha: f64,
}

impl DiffusionLaw {
    pub fn new(rho: f64, alpha: f64) -> Result<Self> {
        let law = Self { rho, alpha };
        law.validate()?;
        Ok(law)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rho.is_finite() && self.rho > 0.0) {
            return Err(invalid(format!("rho must be positive, got {}", self.rho)));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(invalid(format!("alpha must lie in (0,1), got {}", self.alpha)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AuxiliaryKind {
    Zero,
    Linear,
}

/// Auxiliary term `Ψ̃`: identically zero, or `slope·r`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuxiliaryLaw {
    pub kind: AuxiliaryKind,
    #[serde(default)]
    pub slope: f64,
}

impl AuxiliaryLaw {
    pub const ZERO: AuxiliaryLaw = AuxiliaryLaw {
        kind: AuxiliaryKind::Zero,
        slope: 0.0,
    };

    pub fn linear(slope: f64) -> Result<Self> {
        let law = Self {
            kind: AuxiliaryKind::Linear,
            slope,
        };
        law.validate()?;
        Ok(law)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.slope.is_finite() && self.slope >= 0.0) {
            return Err(invalid(format!(
                "auxiliary slope must be nonnegative, got {}",
                self.slope
            )));
        }
        Ok(())
    }

    /// Derivative of `Ψ̃` (constant for the supported kinds).
    pub fn slope(&self) -> f64 {
        match self.kind {
            AuxiliaryKind::Zero => 0.0,
            AuxiliaryKind::Linear => self.slope,
        }
    }
}

fn default_solver_tol() -> f64 {
    1e-12
}

fn default_max_iter() -> usize {
    200
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegularizationParams {
    pub lambda: f64,
    #[serde(default = "default_solver_tol")]
    pub solver_tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
}

impl RegularizationParams {
    pub fn new(lambda: f64) -> Result<Self> {
        let reg = Self {
            lambda,
            solver_tol: default_solver_tol(),
            max_iter: default_max_iter(),
        };
        reg.validate()?;
        Ok(reg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return Err(invalid(format!("lambda must be positive, got {}", self.lambda)));
        }
        if !(self.solver_tol > 0.0) || self.max_iter == 0 {
            return Err(invalid("resolvent tolerance and iteration budget must be positive"));
        }
        Ok(())
    }
}

/// `ρ|r|^α sign r`, with the value 0 selected at the origin.
pub fn psi0(r: f64, law: &DiffusionLaw) -> f64 {
    if r == 0.0 {
        0.0
    } else {
        law.rho * r.abs().powf(law.alpha) * r.signum()
    }
}

/// Solves `y + λΨ₀(y) = r`.
///
/// `f(y) = y + λρ y^α − r` is increasing and concave on `y > 0`, so Newton
/// iterates started below the root increase monotonically to it. The start
/// `r − λρ r^α` lies below the root whenever it is positive; otherwise the
/// upper bound `(r/λρ)^{1/α}` is used and bisection on `[0, upper]` guards
/// any step that leaves the bracket.
pub fn resolvent(r: f64, law: &DiffusionLaw, reg: &RegularizationParams) -> Result<f64> {
    if !r.is_finite() {
        return Err(Error::NonFinite("resolvent argument"));
    }
    if r == 0.0 {
        return Ok(0.0);
    }
    let target = r.abs();
    let y = positive_resolvent(target, law, reg)?;
    Ok(y.copysign(r))
}

fn positive_resolvent(r: f64, law: &DiffusionLaw, reg: &RegularizationParams) -> Result<f64> {
    let c = reg.lambda * law.rho;
    let alpha = law.alpha;
    let mut lo = 0.0_f64;
    let mut hi = r.min((r / c).powf(1.0 / alpha));
    let below = r - c * r.powf(alpha);
    let mut y = if below > 0.0 { below } else { hi };

    let mut residual = f64::INFINITY;
    for _ in 0..reg.max_iter {
        if y <= 0.0 {
            // only reachable after underflow of tiny arguments
            y = 0.5 * (lo + hi);
        }
        let ya = y.powf(alpha);
        let f = y + c * ya - r;
        residual = f;
        if f == 0.0 {
            break;
        }
        if f > 0.0 {
            hi = hi.min(y);
        } else {
            lo = lo.max(y);
        }
        let df = 1.0 + c * alpha * ya / y;
        let mut next = y - f / df;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        let moved = (next - y).abs();
        y = next;
        if moved <= 2.0 * f64::EPSILON * y || hi - lo <= 2.0 * f64::EPSILON * hi {
            residual = y + c * y.powf(alpha) - r;
            break;
        }
    }
    if residual.abs() > reg.solver_tol * r.max(1.0) {
        return Err(Error::ResolventBudget { r, residual });
    }
    Ok(y)
}

/// `Ψ_λ(r) = Ψ₀((1 + λΨ₀)^{-1} r)`.
pub fn yosida(r: f64, law: &DiffusionLaw, reg: &RegularizationParams) -> Result<f64> {
    let y = resolvent(r, law, reg)?;
    Ok(psi0(y, law))
}

/// The other expression for the Yosida approximation,
/// `(r − (1 + λΨ₀)^{-1} r) / λ`. Loses relative accuracy to cancellation when
/// `λ` is small; kept as a cross-check of [`yosida`].
pub fn yosida_difference_quotient(r: f64, law: &DiffusionLaw, reg: &RegularizationParams) -> Result<f64> {
    let y = resolvent(r, law, reg)?;
    Ok((r - y) / reg.lambda)
}

pub fn aux_psi(r: f64, law: &AuxiliaryLaw) -> f64 {
    match law.kind {
        AuxiliaryKind::Zero => 0.0,
        AuxiliaryKind::Linear => law.slope * r,
    }
}

/// Value, derivative and primitive of `Ψ_λ` at `r`, sharing one resolvent
/// solve.
///
/// The derivative comes from implicit differentiation,
/// `Ψ_λ'(r) = Ψ₀'(y)/(1 + λΨ₀'(y)) = 1/(|y|^{1−α}/(ρα) + λ)`, which equals the
/// Lipschitz bound `1/λ` at `y = 0`. The primitive is the Moreau envelope
/// `λΨ_λ(r)²/2 + ρ|y|^{1+α}/(1+α)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct YosidaEval {
    pub value: f64,
    pub derivative: f64,
    pub primitive: f64,
}

pub fn yosida_eval(r: f64, law: &DiffusionLaw, reg: &RegularizationParams) -> Result<YosidaEval> {
    let y = resolvent(r, law, reg)?;
    let ay = y.abs();
    if ay == 0.0 {
        return Ok(YosidaEval {
            value: 0.0,
            derivative: 1.0 / reg.lambda,
            primitive: 0.0,
        });
    }
    let ya = ay.powf(law.alpha);
    let value = law.rho * ya * y.signum();
    let derivative = 1.0 / (ay / ya / (law.rho * law.alpha) + reg.lambda);
    let primitive = 0.5 * reg.lambda * value * value + law.rho * ay * ya / (1.0 + law.alpha);
    Ok(YosidaEval {
        value,
        derivative,
        primitive,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn law(rho: f64, alpha: f64) -> DiffusionLaw {
        DiffusionLaw::new(rho, alpha).unwrap()
    }

    fn reg(lambda: f64) -> RegularizationParams {
        RegularizationParams::new(lambda).unwrap()
    }

    #[test]
    fn psi0_values() {
        assert_eq!(psi0(4.0, &law(2.0, 0.5)), 4.0);
        assert_eq!(psi0(0.0, &law(2.0, 0.5)), 0.0);
        assert_eq!(psi0(-9.0, &law(1.0, 0.5)), -3.0);
    }

    #[test]
    fn law_validation() {
        assert!(DiffusionLaw::new(0.0, 0.5).is_err());
        assert!(DiffusionLaw::new(1.0, 1.0).is_err());
        assert!(DiffusionLaw::new(1.0, 0.0).is_err());
        assert!(RegularizationParams::new(0.0).is_err());
        assert!(AuxiliaryLaw::linear(-1.0).is_err());
    }

    #[test]
    fn resolvent_closed_form() {
        let (l, g) = (law(1.0, 0.5), reg(1.0));
        assert!((resolvent(2.0, &l, &g).unwrap() - 1.0).abs() < 1e-15);
        assert!((resolvent(-2.0, &l, &g).unwrap() + 1.0).abs() < 1e-15);
        assert_eq!(resolvent(0.0, &l, &g).unwrap(), 0.0);
        assert!(resolvent(f64::NAN, &l, &g).is_err());
    }

    #[test]
    fn resolvent_budget_exhaustion_is_reported() {
        let l = law(1.0, 0.5);
        let g = RegularizationParams {
            lambda: 1.0,
            solver_tol: 1e-300,
            max_iter: 1,
        };
        assert!(matches!(resolvent(7.3, &l, &g), Err(Error::ResolventBudget { .. })));
    }

    #[test]
    fn resolvent_handles_tiny_and_huge_arguments() {
        let l = law(1.0, 0.3);
        let g = reg(1e-4);
        for r in [1e-300, 1e-30, 1e-12, 1e-8, 1e8] {
            let y = resolvent(r, &l, &g).unwrap();
            let residual = y + g.lambda * psi0(y, &l) - r;
            // the exact root of the smallest arguments underflows to zero
            assert!(
                residual.abs() <= 1e-14 * r || y < f64::MIN_POSITIVE,
                "r={r} residual={residual}"
            );
        }
    }

    #[test]
    fn yosida_values() {
        let (l, g) = (law(1.0, 0.5), reg(1.0));
        assert!((yosida(2.0, &l, &g).unwrap() - 1.0).abs() < 1e-15);
        assert!((yosida_difference_quotient(2.0, &l, &g).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(yosida(0.0, &l, &g).unwrap(), 0.0);
    }

    #[test]
    fn yosida_increases_to_psi0() {
        let l = law(1.0, 0.5);
        let values: Vec<f64> = [1e-1, 1e-2, 1e-3]
            .iter()
            .map(|&lam| yosida(1.0, &l, &reg(lam)).unwrap())
            .collect();
        assert!(values[0] < values[1] && values[1] < values[2] && values[2] < 1.0);
    }

    #[test]
    fn eval_matches_finite_differences() {
        let l = law(1.3, 0.4);
        let g = reg(0.05);
        for r in [-2.0, -0.3, 0.01, 0.7, 3.0] {
            let e = yosida_eval(r, &l, &g).unwrap();
            let d = 1e-6;
            let fd = (yosida(r + d, &l, &g).unwrap() - yosida(r - d, &l, &g).unwrap()) / (2.0 * d);
            assert!((fd - e.derivative).abs() < 1e-6 * e.derivative.max(1.0));
            let e_hi = yosida_eval(r + d, &l, &g).unwrap().primitive;
            let e_lo = yosida_eval(r - d, &l, &g).unwrap().primitive;
            assert!(((e_hi - e_lo) / (2.0 * d) - e.value).abs() < 1e-6);
        }
        let at_zero = yosida_eval(0.0, &l, &g).unwrap();
        assert_eq!(at_zero.derivative, 1.0 / g.lambda);
    }

    #[test]
    fn aux_values() {
        assert_eq!(aux_psi(5.0, &AuxiliaryLaw::ZERO), 0.0);
        assert!((aux_psi(2.0, &AuxiliaryLaw::linear(0.3).unwrap()) - 0.6).abs() < 1e-15);
    }
}
