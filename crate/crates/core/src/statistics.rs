//! Moments, the uncertainty relation and the entropic uncertainty relation
//! evaluated directly on optical tomograms.

use std::f64::consts::{E, FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tomography::OpticalTomogram;

pub const MAX_MOMENT_ORDER: u32 = 8;
pub const DEFAULT_TOLERANCE: f64 = 1e-6;
const TAIL_LIMIT: f64 = 1e-10;
const LOG_FLOOR: f64 = 1e-300;

/// Quadrature moments `<X^n>` at one phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub theta: f64,
    pub moments: Vec<(u32, f64)>,
    pub mean: f64,
    pub variance: f64,
}

/// Outcome of one inequality evaluation. `margin` is positive on the
/// satisfied side; `satisfied` is `margin >= -tolerance`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InequalityReport {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub satisfied: bool,
    pub margin: f64,
    pub tolerance: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl InequalityReport {
    /// Report for `lhs <= rhs`.
    pub fn at_most(name: &str, lhs: f64, rhs: f64, tolerance: f64) -> Self {
        Self::build(name, lhs, rhs, rhs - lhs, tolerance)
    }

    /// Report for `lhs >= rhs`.
    pub fn at_least(name: &str, lhs: f64, rhs: f64, tolerance: f64) -> Self {
        Self::build(name, lhs, rhs, lhs - rhs, tolerance)
    }

    fn build(name: &str, lhs: f64, rhs: f64, margin: f64, tolerance: f64) -> Self {
        Self { name: name.to_string(), lhs, rhs, satisfied: margin >= -tolerance, margin, tolerance, note: None }
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }
}

/// `\int w(X, theta) X^n dX` by the rectangle rule over the X cells.
pub fn tomographic_moment(opt: &OpticalTomogram, theta: f64, n: u32) -> Result<f64> {
    if n > MAX_MOMENT_ORDER {
        return Err(Error::OrderTooHigh(n));
    }
    let column = opt.column(theta)?;
    Ok(moment_of(opt, &column, n))
}

fn moment_of(opt: &OpticalTomogram, column: &[f64], n: u32) -> f64 {
    let xs = opt.x.points();
    let last = xs.len() - 1;
    let edge = (xs[0].abs().powi(n as i32) * column[0]).max(xs[last].abs().powi(n as i32) * column[last]);
    if edge > TAIL_LIMIT {
        log::warn!("moment of order {n}: boundary weight {edge:e} suggests truncated tails");
    }
    column.iter().zip(&xs).map(|(w, x)| w * x.powi(n as i32)).sum::<f64>() * opt.dx()
}

pub fn moment_report(opt: &OpticalTomogram, theta: f64, max_order: u32) -> Result<MomentReport> {
    if max_order > MAX_MOMENT_ORDER {
        return Err(Error::OrderTooHigh(max_order));
    }
    let column = opt.column(theta)?;
    let moments: Vec<(u32, f64)> = (0..=max_order).map(|n| (n, moment_of(opt, &column, n))).collect();
    let mean = moment_of(opt, &column, 1);
    let variance = moment_of(opt, &column, 2) - mean * mean;
    Ok(MomentReport { theta, moments, mean, variance })
}

fn variance(opt: &OpticalTomogram, theta: f64) -> Result<f64> {
    let j = opt.phase_index(theta).ok_or(Error::MissingPhase(theta))?;
    let column = opt.row(j);
    let mean = moment_of(opt, column, 1);
    Ok(moment_of(opt, column, 2) - mean * mean)
}

/// `Var(X | 0) Var(X | pi/2) >= 1/4` with the default tolerance.
pub fn heisenberg_check(opt: &OpticalTomogram) -> Result<InequalityReport> {
    heisenberg_check_with(opt, DEFAULT_TOLERANCE)
}

pub fn heisenberg_check_with(opt: &OpticalTomogram, tolerance: f64) -> Result<InequalityReport> {
    let lhs = variance(opt, 0.0)? * variance(opt, FRAC_PI_2)?;
    Ok(InequalityReport::at_least("heisenberg", lhs, 0.25, tolerance))
}

/// `\int w ln w dX` at one phase, with `0 ln 0 = 0`.
pub fn neg_entropy(opt: &OpticalTomogram, theta: f64) -> Result<f64> {
    let column = opt.column(theta)?;
    Ok(column.iter().filter(|&&w| w >= LOG_FLOOR).map(|w| w * w.ln()).sum::<f64>() * opt.dx())
}

/// `ln(pi e) + \int w ln w (theta) + \int w ln w (theta + pi/2) <= 0`.
pub fn entropic_check(opt: &OpticalTomogram, theta: f64) -> Result<InequalityReport> {
    entropic_check_with(opt, theta, DEFAULT_TOLERANCE)
}

pub fn entropic_check_with(opt: &OpticalTomogram, theta: f64, tolerance: f64) -> Result<InequalityReport> {
    let lhs = (PI * E).ln() + neg_entropy(opt, theta)? + neg_entropy(opt, theta + FRAC_PI_2)?;
    Ok(InequalityReport::at_most("entropic", lhs, 0.0, tolerance))
}
