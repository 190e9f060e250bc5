//! Scalar comparison functions for the distance function on constant-curvature spaces.
//!
//! With `x = sqrt(b) r` the positive-curvature functions are
//!
//! * `a_b(r) = x cot x`, the lower bound for `Div_T(r grad r) / m`,
//! * `c_quad(b, r) = (1 - a_b(r)) / r^2 = b c(x)`, `c(x) = (1 - x cot x) / x^2`,
//! * `c_lin(b, r) = (1 - a_b(r)) / r = sqrt(b) x c(x)`.
//!
//! `1 - x cot x` cancels catastrophically near zero, so below [`SERIES_SWITCH`]
//! these are evaluated from the Taylor series of `cot`.
//!
//! For `b < 0` the functions `s_b(t) = sinh(k t)/k`, `c_b = s_b'` and
//! `phi = |b| / (c_b - 1)` (with `k = sqrt(|b|)`) drive the hyperbolic monotonicity
//! inequality.

use std::f64::consts::PI;

use crate::error::{GeomError, Result};

/// Arguments `x = sqrt(|b|) r` below this use the series branch.
pub const SERIES_SWITCH: f64 = 0.1;

/// Smallest `t` accepted by [`phi`]; below it callers must use limit forms.
pub const PHI_MIN_ARG: f64 = 1e-8;

/// Coefficients `c_k` of `1 - x cot x = sum_{k>=1} c_k x^{2k}`.
const ONE_MINUS_XCOTX: [f64; 8] = [
    1.0 / 3.0,
    1.0 / 45.0,
    2.0 / 945.0,
    1.0 / 4725.0,
    2.0 / 93555.0,
    1382.0 / 638512875.0,
    4.0 / 18243225.0,
    3617.0 / 162820783125.0,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    SeriesNearZero,
    ClosedForm,
}

/// A comparison-function value tagged with the evaluation branch that produced it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComparisonValue {
    pub value: f64,
    pub regime: Regime,
}

impl ComparisonValue {
    fn series(value: f64) -> Self {
        ComparisonValue { value, regime: Regime::SeriesNearZero }
    }

    fn closed(value: f64) -> Self {
        ComparisonValue { value, regime: Regime::ClosedForm }
    }
}

/// `(1 - x cot x) / x^2` by its series; `x^2 = y`.
fn c_series(y: f64) -> f64 {
    ONE_MINUS_XCOTX.iter().rev().fold(0.0, |acc, c| acc * y + c)
}

/// `(x coth x - 1) / x^2` by its (alternating) series.
fn ch_series(y: f64) -> f64 {
    ONE_MINUS_XCOTX.iter().enumerate().rev().fold(0.0, |acc, (k, c)| {
        let c = if k % 2 == 0 { *c } else { -*c };
        acc * y + c
    })
}

fn check_positive_arg(b: f64, r: f64) -> Result<f64> {
    if !b.is_finite() || b < 0.0 {
        return Err(GeomError::Domain(format!("curvature b = {b} must be finite and >= 0")));
    }
    if !r.is_finite() || r < 0.0 {
        return Err(GeomError::Domain(format!("radius r = {r} must be finite and >= 0")));
    }
    let x = b.sqrt() * r;
    if x >= PI {
        return Err(GeomError::Domain(format!("sqrt(b) r = {x} must be below pi")));
    }
    Ok(x)
}

/// `a_b(r) = sqrt(b) r cot(sqrt(b) r)`, continuous at `r = 0` with value 1.
///
/// `b = 0` is accepted and gives the flat value 1.
pub fn a_b(b: f64, r: f64) -> Result<ComparisonValue> {
    let x = check_positive_arg(b, r)?;
    if x < SERIES_SWITCH {
        Ok(ComparisonValue::series(1.0 - x * x * c_series(x * x)))
    } else {
        Ok(ComparisonValue::closed(x * x.cos() / x.sin()))
    }
}

/// `(1 - a_b(r)) / r^2`.
pub fn c_quad(b: f64, r: f64) -> Result<ComparisonValue> {
    let x = check_positive_arg(b, r)?;
    if x < SERIES_SWITCH {
        Ok(ComparisonValue::series(b * c_series(x * x)))
    } else {
        let one_minus = 1.0 - x * x.cos() / x.sin();
        Ok(ComparisonValue::closed(b * one_minus / (x * x)))
    }
}

/// `(1 - a_b(r)) / r`.
pub fn c_lin(b: f64, r: f64) -> Result<ComparisonValue> {
    let x = check_positive_arg(b, r)?;
    let k = b.sqrt();
    if x < SERIES_SWITCH {
        Ok(ComparisonValue::series(k * x * c_series(x * x)))
    } else {
        let one_minus = 1.0 - x * x.cos() / x.sin();
        Ok(ComparisonValue::closed(k * one_minus / x))
    }
}

/// `r ct_b(r)` for any sign of `b`: `x cot x`, `1`, or `x coth x`.
///
/// This is the exact value of `Div_T(r grad r)/m` for planes orthogonal to
/// `grad r` in the model space of curvature `b`.
pub fn radial_comparison(b: f64, r: f64) -> Result<f64> {
    if b > 0.0 {
        return a_b(b, r).map(|v| v.value);
    }
    if !r.is_finite() || r < 0.0 {
        return Err(GeomError::Domain(format!("radius r = {r} must be finite and >= 0")));
    }
    if b == 0.0 {
        return Ok(1.0);
    }
    let x = (-b).sqrt() * r;
    if x < SERIES_SWITCH {
        Ok(1.0 + x * x * ch_series(x * x))
    } else {
        Ok(x / x.tanh())
    }
}

/// `(1 - r ct_b(r)) / r` for any sign of `b` (negative when `b < 0`).
pub fn one_minus_comparison_over_r(b: f64, r: f64) -> Result<f64> {
    if b > 0.0 {
        return c_lin(b, r).map(|v| v.value);
    }
    if !r.is_finite() || r < 0.0 {
        return Err(GeomError::Domain(format!("radius r = {r} must be finite and >= 0")));
    }
    if b == 0.0 {
        return Ok(0.0);
    }
    let k = (-b).sqrt();
    let x = k * r;
    if x < SERIES_SWITCH {
        Ok(-k * x * ch_series(x * x))
    } else {
        Ok(k * (1.0 - x / x.tanh()) / x)
    }
}

fn check_negative(b: f64) -> Result<f64> {
    if !(b < 0.0) || !b.is_finite() {
        return Err(GeomError::Domain(format!("curvature b = {b} must be negative")));
    }
    Ok((-b).sqrt())
}

/// `s_b(t) = sinh(sqrt|b| t) / sqrt|b|` for `b < 0`.
pub fn s_b(b: f64, t: f64) -> Result<f64> {
    let k = check_negative(b)?;
    if !(t >= 0.0) {
        return Err(GeomError::Domain(format!("t = {t} must be >= 0")));
    }
    Ok((k * t).sinh() / k)
}

/// `c_b(t) = cosh(sqrt|b| t)`.
pub fn c_b(b: f64, t: f64) -> Result<f64> {
    let k = check_negative(b)?;
    if !(t >= 0.0) {
        return Err(GeomError::Domain(format!("t = {t} must be >= 0")));
    }
    Ok((k * t).cosh())
}

/// `c_b(t) - 1 = 2 sinh^2(k t / 2)`, free of cancellation.
fn c_b_minus_one(k: f64, t: f64) -> f64 {
    let s = (0.5 * k * t).sinh();
    2.0 * s * s
}

/// `phi(t) = |b| / (c_b(t) - 1)`.
pub fn phi(b: f64, t: f64) -> Result<f64> {
    let k = check_negative(b)?;
    if !(t >= PHI_MIN_ARG) {
        return Err(GeomError::Domain(format!(
            "phi evaluated at t = {t}; use the small-radius limit forms below {PHI_MIN_ARG:e}"
        )));
    }
    Ok(-b / c_b_minus_one(k, t))
}

/// Analytic derivative `phi'(t) = -|b| c_b'(t) / (c_b(t) - 1)^2`.
pub fn phi_prime(b: f64, t: f64) -> Result<f64> {
    let k = check_negative(b)?;
    if !(t >= PHI_MIN_ARG) {
        return Err(GeomError::Domain(format!("phi' evaluated at t = {t}")));
    }
    let d = c_b_minus_one(k, t);
    Ok(b * k * (k * t).sinh() / (d * d))
}

/// `t_b(r) = 2/r` for `b >= 0` and `2 sqrt|b| coth(sqrt|b| r / 2)` for `b < 0`.
pub fn t_b(b: f64, r: f64) -> Result<f64> {
    if !(r > 0.0) {
        return Err(GeomError::Domain(format!("t_b needs r > 0, got {r}")));
    }
    if b >= 0.0 {
        Ok(2.0 / r)
    } else {
        let k = (-b).sqrt();
        Ok(2.0 * k / (0.5 * k * r).tanh())
    }
}

/// Volume `alpha(m)` of the unit ball in `R^m`.
pub fn unit_ball_volume(m: usize) -> f64 {
    match m {
        0 => 1.0,
        1 => 2.0,
        _ => 2.0 * PI / m as f64 * unit_ball_volume(m - 2),
    }
}

/// `C(m) = 5^m 2^(1/m) / alpha(m)^(1/m)`.
pub fn sobolev_constant(m: usize) -> Result<f64> {
    if m == 0 {
        return Err(GeomError::Domain("sobolev constant needs m >= 1".into()));
    }
    let inv = 1.0 / m as f64;
    Ok(5f64.powi(m as i32) * 2f64.powf(inv) / unit_ball_volume(m).powf(inv))
}

/// Area bound `C(i, b) = min{rho0^2 / (2 + b rho0^2), pi^3 / (9 b)}` with
/// `rho0 = min{i, pi / (2 sqrt b)}`; `1/0 = inf`, `0 * inf = 0`.
pub fn area_bound_c(i: f64, b: f64) -> Result<f64> {
    if !(i > 0.0) {
        return Err(GeomError::Domain(format!("injectivity radius i = {i} must be > 0")));
    }
    if !(b >= 0.0) || !b.is_finite() {
        return Err(GeomError::Domain(format!("curvature bound b = {b} must be finite and >= 0")));
    }
    let rho0 = if b == 0.0 { i } else { i.min(PI / (2.0 * b.sqrt())) };
    let first = if rho0.is_infinite() {
        // b = 0 here
        f64::INFINITY
    } else {
        rho0 * rho0 / (2.0 + b * rho0 * rho0)
    };
    let second = if b == 0.0 { f64::INFINITY } else { PI.powi(3) / (9.0 * b) };
    Ok(first.min(second))
}

/// Hessian lower bound `(1 + sqrt(1 - 4b)) / (2r)` under `K_r <= b / r^2`, `0 < b <= 1/4`.
pub fn radial_hessian_lower_bound(b: f64, r: f64) -> Result<f64> {
    if !(b > 0.0 && b <= 0.25) {
        return Err(GeomError::Domain(format!("b = {b} must lie in (0, 1/4]")));
    }
    if !(r > 0.0) {
        return Err(GeomError::Domain(format!("r = {r} must be > 0")));
    }
    Ok((1.0 + (1.0 - 4.0 * b).max(0.0).sqrt()) / (2.0 * r))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn a_b_values() {
        assert_eq!(a_b(1.0, 0.0).unwrap().value, 1.0);
        let v = a_b(1.0, PI / 3.0).unwrap();
        assert!((v.value - PI / (3.0 * 3f64.sqrt())).abs() < 1e-14);
        assert_eq!(v.regime, Regime::ClosedForm);
        assert_eq!(a_b(4.0, 0.01).unwrap().regime, Regime::SeriesNearZero);
        assert!(a_b(1.0, PI).is_err());
        assert!(a_b(1.0, -0.1).is_err());
        assert_eq!(a_b(0.0, 12.0).unwrap().value, 1.0);
    }

    #[test]
    fn c_functions_endpoints() {
        let b: f64 = 2.5;
        let r = PI / (2.0 * b.sqrt());
        assert!((c_quad(b, r).unwrap().value - b * 4.0 / (PI * PI)).abs() < 1e-12);
        assert!((c_lin(b, r).unwrap().value - b.sqrt() * 2.0 / PI).abs() < 1e-12);
        assert!((c_quad(b, 0.0).unwrap().value - b / 3.0).abs() < 1e-15);
        assert_eq!(c_lin(b, 0.0).unwrap().value, 0.0);
    }

    #[test]
    fn negative_curvature_functions() {
        assert!((s_b(-1.0, 0.7).unwrap() - 0.7f64.sinh()).abs() < 1e-15);
        assert_eq!(c_b(-3.0, 0.0).unwrap(), 1.0);
        assert!(phi(-1.0, 1e-9).is_err());
        assert!(phi(1.0, 1.0).is_err());
        assert!(s_b(0.0, 1.0).is_err());
        let b = -0.8;
        for &t in &[0.01, 0.3, 1.0, 4.0] {
            let lead = 2.0 * phi(b, t).unwrap() * c_b(b, t).unwrap();
            let id = lead + phi_prime(b, t).unwrap() * s_b(b, t).unwrap();
            // the two terms cancel, so rounding scales with their size
            assert!((id - 0.8).abs() < 1e-10 * lead.max(1.0), "t = {t}: {id}");
        }
    }

    #[test]
    fn t_b_cases() {
        assert_eq!(t_b(0.0, 2.0).unwrap(), 1.0);
        assert!((t_b(-1.0, 60.0).unwrap() - 2.0).abs() < 1e-12);
        assert!(t_b(-1.0, 0.0).is_err());
        for &r in &[0.1, 1.0, 5.0] {
            assert!(t_b(-2.0, r).unwrap() >= 2.0 / r);
        }
    }

    #[test]
    fn constants() {
        assert!((sobolev_constant(1).unwrap() - 5.0).abs() < 1e-14);
        let c2 = 25.0 * 2f64.sqrt() / PI.sqrt();
        assert!((sobolev_constant(2).unwrap() - c2).abs() < 1e-12);
        assert!(sobolev_constant(0).is_err());
        assert!(area_bound_c(f64::INFINITY, 0.0).unwrap().is_infinite());
        assert_eq!(area_bound_c(1.0, 0.0).unwrap(), 0.5);
        let q = PI * PI / 4.0;
        let expect = (q / (2.0 + q)).min(PI.powi(3) / 9.0);
        assert!((area_bound_c(f64::INFINITY, 1.0).unwrap() - expect).abs() < 1e-15);
        assert!(area_bound_c(0.0, 1.0).is_err());
    }

    #[test]
    fn radial_hessian_bound() {
        assert!((radial_hessian_lower_bound(0.25, 2.0).unwrap() - 0.25).abs() < 1e-15);
        assert!((radial_hessian_lower_bound(3.0 / 16.0, 1.0).unwrap() - 0.75).abs() < 1e-15);
        assert!((radial_hessian_lower_bound(1e-12, 1.0).unwrap() - 1.0).abs() < 1e-11);
        assert!(radial_hessian_lower_bound(0.3, 1.0).is_err());
        assert!(radial_hessian_lower_bound(0.0, 1.0).is_err());
    }

    #[test]
    fn hyperbolic_comparison_is_at_least_flat() {
        for i in 0..200 {
            let r = i as f64 * 0.05;
            assert!(radial_comparison(-1.0, r).unwrap() >= 1.0);
            assert!(one_minus_comparison_over_r(-1.0, r).unwrap() <= 0.0);
        }
    }
}
