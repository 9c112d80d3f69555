use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniformly spaced 1-D axis `min, min + step, ..., max` with `n` points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UniformGrid {
    pub min: f64,
    pub max: f64,
    pub n: usize,
}

impl UniformGrid {
    pub fn new(min: f64, max: f64, n: usize) -> Result<Self> {
        if !(min.is_finite() && max.is_finite()) || min >= max {
            return Err(Error::InvalidGrid(format!("need finite min < max, got [{min}, {max}]")));
        }
        if n < 2 {
            return Err(Error::InvalidGrid(format!("need at least 2 points, got {n}")));
        }
        Ok(Self { min, max, n })
    }

    /// Symmetric axis `[-half_width, half_width]` whose spacing does not exceed `max_step`.
    pub fn symmetric(half_width: f64, max_step: f64) -> Self {
        let n = (2.0 * half_width / max_step - 1e-9).ceil() as usize + 1;
        Self { min: -half_width, max: half_width, n }
    }

    pub fn step(&self) -> f64 {
        (self.max - self.min) / (self.n - 1) as f64
    }

    pub fn at(&self, i: usize) -> f64 {
        if i + 1 == self.n {
            self.max
        } else {
            self.min + i as f64 * self.step()
        }
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.at(i)).collect()
    }

    pub fn is_symmetric(&self) -> bool {
        (self.min + self.max).abs() <= 1e-12 * self.max.abs().max(1.0)
    }

    /// Fractional index of `x`.
    pub fn position(&self, x: f64) -> f64 {
        (x - self.min) / self.step()
    }

    /// Refined axis with half the spacing over the same range.
    pub fn refined(&self) -> Self {
        Self { min: self.min, max: self.max, n: 2 * self.n - 1 }
    }

    /// Index of the grid point equal to `x` within `tol`, if any.
    pub fn index_of(&self, x: f64, tol: f64) -> Option<usize> {
        let t = self.position(x);
        let i = t.round();
        if i < 0.0 || i > (self.n - 1) as f64 {
            return None;
        }
        let i = i as usize;
        ((self.at(i) - x).abs() <= tol).then_some(i)
    }
}

/// Six-point Lagrange stencil around fractional index `t`.
///
/// Returns the first node index and the six weights. Exact grid nodes
/// (within 1e-9 of an integer) produce a unit weight on that node.
pub(crate) fn lagrange6(t: f64) -> (isize, [f64; 6]) {
    let base = t.floor();
    let frac = t - base;
    let start = base as isize - 2;
    let mut w = [0.0; 6];
    if !(1e-9..=1.0 - 1e-9).contains(&frac) {
        let node = t.round() as isize;
        w[(node - start) as usize] = 1.0;
        return (start, w);
    }
    let nodes = [-2.0, -1.0, 0.0, 1.0, 2.0, 3.0];
    for j in 0..6 {
        let mut num = 1.0;
        let mut den = 1.0;
        for k in 0..6 {
            if k != j {
                num *= frac - nodes[k];
                den *= nodes[j] - nodes[k];
            }
        }
        w[j] = num / den;
    }
    (start, w)
}

/// Interpolate samples on `grid` at `x`; points outside the stencil range count as zero.
pub fn interpolate(grid: &UniformGrid, values: &[f64], x: f64) -> f64 {
    let t = grid.position(x);
    if t < -1.0 || t > grid.n as f64 {
        return 0.0;
    }
    let (start, w) = lagrange6(t);
    let mut acc = 0.0;
    for (j, wj) in w.iter().enumerate() {
        let idx = start + j as isize;
        if *wj != 0.0 && idx >= 0 && (idx as usize) < values.len() {
            acc += wj * values[idx as usize];
        }
    }
    acc
}
