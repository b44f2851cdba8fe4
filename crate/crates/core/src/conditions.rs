//! Smallness conditions on g₀, β-thresholds, and the reduction to β = 1, c1 = 1.

use std::f64::consts::PI;

use serde::{Serialize, Serializer};

use crate::error::{GilError, Result};
use crate::potential::{NormReport, Potential};

/// max(c0/c1, c2/c1 − 1, 1).
pub fn cbar(c0: f64, c1: f64, c2: f64) -> Result<f64> {
    if !(c1 > 0.0) {
        return Err(GilError::InvalidConstants(format!("c1 must be > 0, got {c1}")));
    }
    if !(c0 >= 0.0) || !(c2 >= c1) {
        return Err(GilError::InvalidConstants(format!("need c0 >= 0 and c2 >= c1, got c0={c0}, c2={c2}, c1={c1}")));
    }
    Ok((c0 / c1).max(c2 / c1 - 1.0).max(1.0))
}

fn inf_as_string<S: Serializer>(x: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if x.is_finite() {
        s.serialize_f64(*x)
    } else if x.is_nan() {
        s.serialize_str("nan")
    } else if *x > 0.0 {
        s.serialize_str("inf")
    } else {
        s.serialize_str("-inf")
    }
}

/// Verdicts of the three alternative smallness conditions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Satisfied {
    pub fcond: bool,
    pub alt_9: bool,
    pub alt_11: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionReport {
    pub cbar: f64,
    pub lhs_fcond: f64,
    #[serde(serialize_with = "inf_as_string")]
    pub lhs_9: f64,
    #[serde(serialize_with = "inf_as_string")]
    pub lhs_11: f64,
    #[serde(serialize_with = "inf_as_string")]
    pub beta_max_fcond: f64,
    #[serde(serialize_with = "inf_as_string")]
    pub beta_max_9: f64,
    #[serde(serialize_with = "inf_as_string")]
    pub beta_max_11: f64,
    /// Verdicts using the quadrature values of the norms.
    pub satisfied: Satisfied,
    /// Verdicts after adding the quadrature error to every norm.
    pub satisfied_pessimistic: Satisfied,
}

fn fcond_lhs(beta: f64, d: usize, cbar: f64, c1: f64, l1_g0pp: f64) -> f64 {
    4.0 / PI * (12.0 * d as f64 * cbar).sqrt() * (beta * c1).sqrt() / c1 * l1_g0pp
}

fn alt9_lhs(beta: f64, d: usize, cbar: f64, c1: f64, l2_g0p: f64) -> f64 {
    50.0 / (2.0 * PI).sqrt() * d as f64 * cbar * (beta * c1).powf(0.75) / c1 * l2_g0p
}

fn alt11_lhs(beta: f64, d: usize, cbar: f64, c1: f64, l1_g0: f64) -> f64 {
    let c = 2500.0 / (2.0 * PI);
    c * (d * d) as f64 * cbar.powi(3) * (beta * c1).powf(1.5) / c1 * l1_g0
}

/// Largest β with lhs(β) = target, for lhs ∝ (βc1)^power.
fn beta_at(lhs_at_one_over_c1: f64, power: f64, target: f64, c1: f64) -> f64 {
    // lhs(β) = lhs(1/c1) · (βc1)^power
    if lhs_at_one_over_c1 == 0.0 {
        return f64::INFINITY;
    }
    if !lhs_at_one_over_c1.is_finite() {
        return 0.0;
    }
    (target / lhs_at_one_over_c1).powf(1.0 / power) / c1
}

fn validate(beta: f64, d: usize) -> Result<()> {
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(GilError::Precondition(format!("beta must be > 0, got {beta}")));
    }
    if d == 0 {
        return Err(GilError::Precondition("d must be >= 1".into()));
    }
    Ok(())
}

/// Evaluates all three smallness conditions at (β, d).
pub fn check_fcond(beta: f64, d: usize, p: &Potential, norms: &NormReport) -> Result<ConditionReport> {
    validate(beta, d)?;
    let c = p.constants();
    let cb = c.cbar()?;
    let (lhs_9, lhs_11) = check_alt(beta, d, p, norms)?;
    let lhs_fcond = fcond_lhs(beta, d, cb, c.c1, norms.l1_g0pp);

    let l2 = norms.l2_g0p.unwrap_or(f64::INFINITY);
    let l1 = norms.l1_g0.unwrap_or(f64::INFINITY);
    let eps = norms.quadrature_error;
    let satisfied = Satisfied { fcond: lhs_fcond <= 0.5, alt_9: lhs_9 <= 0.5, alt_11: lhs_11 <= 0.25 };
    let satisfied_pessimistic = Satisfied {
        fcond: fcond_lhs(beta, d, cb, c.c1, norms.l1_g0pp + eps) <= 0.5,
        alt_9: alt9_lhs(beta, d, cb, c.c1, l2 + eps) <= 0.5,
        alt_11: alt11_lhs(beta, d, cb, c.c1, l1 + eps) <= 0.25,
    };
    let unit = 1.0 / c.c1;
    Ok(ConditionReport {
        cbar: cb,
        lhs_fcond,
        lhs_9,
        lhs_11,
        beta_max_fcond: beta_at(fcond_lhs(unit, d, cb, c.c1, norms.l1_g0pp), 0.5, 0.5, c.c1),
        beta_max_9: beta_at(alt9_lhs(unit, d, cb, c.c1, l2), 0.75, 0.5, c.c1),
        beta_max_11: beta_at(alt11_lhs(unit, d, cb, c.c1, l1), 1.5, 0.25, c.c1),
        satisfied,
        satisfied_pessimistic,
    })
}

/// Left-hand sides of the L²(g₀') and L¹(g₀) variants. Divergent norms give +∞.
pub fn check_alt(beta: f64, d: usize, p: &Potential, norms: &NormReport) -> Result<(f64, f64)> {
    validate(beta, d)?;
    let c = p.constants();
    let cb = c.cbar()?;
    let l2 = norms.l2_g0p.unwrap_or(f64::INFINITY);
    let l1 = norms.l1_g0.unwrap_or(f64::INFINITY);
    // 0 · ∞ stays 0 for the Gaussian-like case
    let lhs9 = if l2 == 0.0 { 0.0 } else { alt9_lhs(beta, d, cb, c.c1, l2) };
    let lhs11 = if l1 == 0.0 { 0.0 } else { alt11_lhs(beta, d, cb, c.c1, l1) };
    Ok((lhs9, lhs11))
}

/// Rescales (V₀, g₀) at inverse temperature β to the β = 1, c1 = 1 problem:
/// Ṽ(s) = β·V(s/√(βc1)). Returns the scaled potential and √(βc1), the
/// factor that maps tilts and fields into the scaled variables.
pub fn scale_to_unit(p: &Potential, beta: f64) -> Result<(Potential, f64)> {
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(GilError::Precondition(format!("beta must be > 0, got {beta}")));
    }
    let c1 = p.constants().c1;
    let tilt_scale = (beta * c1).sqrt();
    Ok((p.rescaled(beta, 1.0 / tilt_scale), tilt_scale))
}
