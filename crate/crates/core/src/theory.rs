//! Closed-form extinction estimates for the fast-diffusion equation with
//! multiplicative eigenbasis noise.
//!
//! With `T_det = |x|_{-1}^{1−α} / ((1−α)ργ^{1+α})` the extinction time satisfies
//!
//! ```text
//! P(τ ≤ t) ≥ 1 − T_det / ∫_0^t e^{−(1−α)C* s} ds
//! ```
//!
//! and `τ ≤ T_det` surely when `C* = 0`. Here `γ` is the coercivity constant
//! `|u|_{L^{α+1}} ≥ γ|u|_{-1}`.

use serde::Serialize;

use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundInputs {
    pub x_norm_hm1: f64,
    pub alpha: f64,
    pub rho: f64,
    pub gamma: f64,
    pub c_star: f64,
}

impl BoundInputs {
    pub fn validate(&self) -> Result<()> {
        if !(self.x_norm_hm1 >= 0.0 && self.x_norm_hm1.is_finite()) {
            return Err(invalid("|x|_{-1} must be finite and nonnegative"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(invalid(format!("alpha must lie in (0,1), got {}", self.alpha)));
        }
        if !(self.rho > 0.0 && self.gamma > 0.0) {
            return Err(invalid("rho and gamma must be positive"));
        }
        if !(self.c_star >= 0.0 && self.c_star.is_finite()) {
            return Err(invalid("C* must be finite and nonnegative"));
        }
        Ok(())
    }

    /// `(1−α)ργ^{1+α}`, the dissipation rate of `|X|_{-1}^{1−α}`.
    fn dissipation(&self) -> f64 {
        (1.0 - self.alpha) * self.rho * self.gamma.powf(1.0 + self.alpha)
    }

    /// `T_det` irrespective of `C*`.
    pub fn time_scale(&self) -> f64 {
        self.x_norm_hm1.powf(1.0 - self.alpha) / self.dissipation()
    }
}

/// `∫_0^t e^{−(1−α)C* s} ds`.
pub fn integral_factor(t: f64, alpha: f64, c_star: f64) -> f64 {
    let rate = (1.0 - alpha) * c_star;
    if rate == 0.0 {
        t
    } else {
        // -expm1(-x) keeps precision for small rate·t
        -(-rate * t).exp_m1() / rate
    }
}

/// Lower bound on `P(τ ≤ t)`, clamped to `[0, 1]`.
pub fn extinction_bound(t: f64, inputs: &BoundInputs) -> Result<f64> {
    if !(t > 0.0) {
        return Err(invalid(format!("bound needs t > 0, got {t}")));
    }
    inputs.validate()?;
    let raw = 1.0 - inputs.time_scale() / integral_factor(t, inputs.alpha, inputs.c_star);
    Ok(raw.clamp(0.0, 1.0))
}

/// `T_det`, the sure extinction time without noise.
pub fn deterministic_extinction_time(inputs: &BoundInputs) -> Result<f64> {
    inputs.validate()?;
    if inputs.c_star != 0.0 {
        return Err(invalid(format!(
            "deterministic extinction time needs C* = 0, got {}",
            inputs.c_star
        )));
    }
    Ok(inputs.time_scale())
}

/// `C* = 0` or `|x|_{-1}^{1−α} < ργ^{1+α}/C*`, i.e. the bound stays
/// positive as `t → ∞`.
pub fn positive_probability_condition(inputs: &BoundInputs) -> Result<bool> {
    inputs.validate()?;
    if inputs.c_star == 0.0 {
        return Ok(true);
    }
    Ok(inputs.x_norm_hm1.powf(1.0 - inputs.alpha) < inputs.rho * inputs.gamma.powf(1.0 + inputs.alpha) / inputs.c_star)
}

/// `lim_{t→∞}` of [`extinction_bound`].
pub fn asymptotic_bound(inputs: &BoundInputs) -> Result<f64> {
    inputs.validate()?;
    if inputs.c_star == 0.0 {
        return Ok(1.0);
    }
    let raw = 1.0
        - inputs.c_star * inputs.x_norm_hm1.powf(1.0 - inputs.alpha)
            / (inputs.rho * inputs.gamma.powf(1.0 + inputs.alpha));
    Ok(raw.clamp(0.0, 1.0))
}

/// Bound evaluated on `n` equally spaced times in `(0, t_max]`.
pub fn bound_curve(t_max: f64, n: usize, inputs: &BoundInputs) -> Result<Vec<(f64, f64)>> {
    if n == 0 {
        return Err(invalid("bound curve needs at least one point"));
    }
    (1..=n)
        .map(|i| {
            let t = t_max * i as f64 / n as f64;
            Ok((t, extinction_bound(t, inputs)?))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inputs(x: f64, c_star: f64) -> BoundInputs {
        BoundInputs {
            x_norm_hm1: x,
            alpha: 0.5,
            rho: 1.0,
            gamma: 1.0,
            c_star,
        }
    }

    #[test]
    fn integral_factor_values() {
        assert_eq!(integral_factor(7.0, 0.5, 0.0), 7.0);
        assert!((integral_factor(1e9, 0.5, 1.0) - 2.0).abs() < 1e-12);
        assert!((integral_factor(1.0, 0.5, 2.0) - (1.0 - (-1.0f64).exp())).abs() < 1e-15);
        assert!((integral_factor(1.0, 0.5, 2.0) - 0.63212).abs() < 1e-5);
    }

    #[test]
    fn bound_edge_cases() {
        assert_eq!(extinction_bound(0.3, &inputs(0.0, 1.0)).unwrap(), 1.0);
        assert_eq!(extinction_bound(0.3, &inputs(1e6, 0.0)).unwrap(), 0.0);
        assert!(extinction_bound(0.0, &inputs(0.1, 0.0)).is_err());
        let i = inputs(0.3, 0.0);
        let t_det = deterministic_extinction_time(&i).unwrap();
        assert!((extinction_bound(2.0 * t_det, &i).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn deterministic_time() {
        assert_eq!(deterministic_extinction_time(&inputs(0.0, 0.0)).unwrap(), 0.0);
        assert!((deterministic_extinction_time(&inputs(0.25, 0.0)).unwrap() - 1.0).abs() < 1e-15);
        assert!(deterministic_extinction_time(&inputs(0.25, 1.0)).is_err());
        let a = deterministic_extinction_time(&inputs(0.2, 0.0)).unwrap();
        let b = deterministic_extinction_time(&inputs(0.6, 0.0)).unwrap();
        assert!((b / a - 3f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn positivity_condition() {
        assert!(positive_probability_condition(&inputs(100.0, 0.0)).unwrap());
        assert!(positive_probability_condition(&inputs(0.0, 5.0)).unwrap());
        let i = inputs(0.16, 2.0);
        assert!(positive_probability_condition(&i).unwrap());
        assert!((asymptotic_bound(&i).unwrap() - 0.2).abs() < 1e-14);
        assert!(!positive_probability_condition(&inputs(0.3, 2.0)).unwrap());
        assert_eq!(asymptotic_bound(&inputs(0.3, 2.0)).unwrap(), 0.0);
    }
}
