//! Density matrix <-> Wigner function on rectangular phase-space grids.
//!
//! The forward map evaluates `W(q,p) = 2 Tr(rho D(2 alpha) I)` with
//! `alpha = (q + i p)/sqrt(2)` and the parity `I|n> = (-1)^n |n>`; the
//! inverse map integrates `rho = (1/pi) \int W(q,p) D(2 alpha) I dq dp`
//! by the rectangle rule on the grid.

use std::f64::consts::{PI, SQRT_2};
use std::io::Write;
use std::str::FromStr;

use nalgebra::DMatrix;
use ndarray::Array2;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::UniformGrid;
use crate::special::displacement_radial_into;
use crate::statekit::{ClassicalDensity, FockDensityMatrix};

pub const DEFAULT_HALF_WIDTH: f64 = 8.0;
pub const DEFAULT_POINTS: usize = 128;
/// Grid spacing of the default `[-8, 8]^2`, 128-point grid.
pub const DEFAULT_STEP: f64 = 2.0 * DEFAULT_HALF_WIDTH / (DEFAULT_POINTS as f64 - 1.0);

/// Boundary |W| (relative to max |W|) above which the grid is rejected.
const BOUNDARY_REL_LIMIT: f64 = 1e-6;
/// Absolute boundary level the adaptive grid aims for.
const ADEQUATE_BOUNDARY: f64 = 1e-9;

/// Rectangular phase-space grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub q_min: f64,
    pub q_max: f64,
    pub p_min: f64,
    pub p_max: f64,
    pub n_q: usize,
    pub n_p: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self::symmetric(DEFAULT_HALF_WIDTH, DEFAULT_POINTS)
    }
}

impl GridSpec {
    pub fn new(q_min: f64, q_max: f64, p_min: f64, p_max: f64, n_q: usize, n_p: usize) -> Result<Self> {
        let g = Self { q_min, q_max, p_min, p_max, n_q, n_p };
        g.validate()?;
        Ok(g)
    }

    pub fn symmetric(half_width: f64, n: usize) -> Self {
        Self { q_min: -half_width, q_max: half_width, p_min: -half_width, p_max: half_width, n_q: n, n_p: n }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.q_min, self.q_max, self.p_min, self.p_max].iter().all(|v| v.is_finite());
        if !finite || self.q_min >= self.q_max || self.p_min >= self.p_max {
            return Err(Error::InvalidGrid(format!("bad extents {self:?}")));
        }
        if self.n_q < 8 || self.n_p < 8 {
            return Err(Error::InvalidGrid(format!("need >= 8 points per axis, got {}x{}", self.n_q, self.n_p)));
        }
        Ok(())
    }

    pub fn q_axis(&self) -> UniformGrid {
        UniformGrid { min: self.q_min, max: self.q_max, n: self.n_q }
    }

    pub fn p_axis(&self) -> UniformGrid {
        UniformGrid { min: self.p_min, max: self.p_max, n: self.n_p }
    }

    pub fn dq(&self) -> f64 {
        self.q_axis().step()
    }

    pub fn dp(&self) -> f64 {
        self.p_axis().step()
    }

    /// Smallest symmetric grid (half-width a multiple of 0.5, at least 8,
    /// spacing no coarser than the default) on whose boundary the Wigner
    /// function of `rho` stays below 1e-9.
    pub fn adequate_for(rho: &FockDensityMatrix) -> Self {
        let mut half = DEFAULT_HALF_WIDTH;
        loop {
            let axis = UniformGrid::symmetric(half, DEFAULT_STEP);
            let edge = boundary_max(rho, &axis);
            if edge <= ADEQUATE_BOUNDARY || half >= 64.0 {
                return Self::symmetric(half, axis.n);
            }
            half += 0.5;
        }
    }

    pub fn refined(&self) -> Self {
        Self { n_q: 2 * self.n_q - 1, n_p: 2 * self.n_p - 1, ..*self }
    }
}

fn boundary_max(rho: &FockDensityMatrix, axis: &UniformGrid) -> f64 {
    let (lo, hi) = (axis.min, axis.max);
    axis.points()
        .iter()
        .flat_map(|&s| [(lo, s), (hi, s), (s, lo), (s, hi)])
        .map(|(q, p)| wigner_at(rho, q, p).abs())
        .fold(0.0, f64::max)
}

/// `"qmin,qmax,pmin,pmax,nq,np"`.
impl FromStr for GridSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        if parts.len() != 6 {
            return Err(Error::Parse(format!("grid spec needs 6 fields, got {s:?}")));
        }
        let f = |i: usize| parts[i].parse::<f64>().map_err(|e| Error::Parse(format!("{}: {e}", parts[i])));
        let u = |i: usize| parts[i].parse::<usize>().map_err(|e| Error::Parse(format!("{}: {e}", parts[i])));
        Self::new(f(0)?, f(1)?, f(2)?, f(3)?, u(4)?, u(5)?)
    }
}

/// Sampled Wigner function; `values[[i, j]] = W(q_i, p_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct WignerGrid {
    pub grid: GridSpec,
    pub values: Array2<f64>,
    /// Largest imaginary part seen before it was discarded.
    pub max_imag_residue: f64,
}

#[derive(Serialize, Deserialize)]
struct WignerJson {
    grid: GridSpec,
    values: Vec<f64>,
}

impl WignerGrid {
    /// Classical density scaled to the Wigner normalization, `2 pi f(q,p)`.
    pub fn from_classical(density: &ClassicalDensity, grid: GridSpec) -> Result<Self> {
        grid.validate()?;
        let (qa, pa) = (grid.q_axis(), grid.p_axis());
        let values = Array2::from_shape_fn((grid.n_q, grid.n_p), |(i, j)| 2.0 * PI * density.eval(qa.at(i), pa.at(j)));
        Ok(Self { grid, values, max_imag_residue: 0.0 })
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[[i, j]]
    }

    /// `\int W dq dp / 2pi`.
    pub fn normalization(&self) -> f64 {
        self.values.sum() * self.grid.dq() * self.grid.dp() / (2.0 * PI)
    }

    /// `\int W^2 dq dp / 2pi`, equal to the purity of the state.
    pub fn overlap_purity(&self) -> f64 {
        self.values.iter().map(|w| w * w).sum::<f64>() * self.grid.dq() * self.grid.dp() / (2.0 * PI)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn boundary_max(&self) -> f64 {
        let (nq, np) = (self.grid.n_q, self.grid.n_p);
        let mut m: f64 = 0.0;
        for i in 0..nq {
            m = m.max(self.values[[i, 0]].abs()).max(self.values[[i, np - 1]].abs());
        }
        for j in 0..np {
            m = m.max(self.values[[0, j]].abs()).max(self.values[[nq - 1, j]].abs());
        }
        m
    }

    /// Rows `q,p,w`, q-major.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "q,p,w")?;
        let (qa, pa) = (self.grid.q_axis(), self.grid.p_axis());
        for i in 0..self.grid.n_q {
            for j in 0..self.grid.n_p {
                writeln!(out, "{},{},{}", qa.at(i), pa.at(j), self.values[[i, j]])?;
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let doc = WignerJson { grid: self.grid, values: self.values.iter().copied().collect() };
        serde_json::to_string(&doc).expect("wigner grid serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: WignerJson = serde_json::from_str(text)?;
        doc.grid.validate()?;
        let values = Array2::from_shape_vec((doc.grid.n_q, doc.grid.n_p), doc.values)
            .map_err(|e| Error::Parse(e.to_string()))?;
        Ok(Self { grid: doc.grid, values, max_imag_residue: 0.0 })
    }
}

/// `W = 2 sum_{mn} rho_{mn} (-1)^m r_{nm} e^{i (n - m) phi}`, returned complex
/// so the caller can inspect the imaginary residue.
fn wigner_from_radial(rho: &DMatrix<Complex64>, radial: &[f64], phi: f64) -> Complex64 {
    let dim = rho.nrows();
    let phases: Vec<Complex64> =
        (0..2 * dim - 1).map(|k| Complex64::from_polar(1.0, (k as f64 - (dim as f64 - 1.0)) * phi)).collect();
    let mut total = Complex64::new(0.0, 0.0);
    for m in 0..dim {
        let sign = if m % 2 == 0 { 2.0 } else { -2.0 };
        for n in 0..dim {
            // <n|D|m> = r_{nm} e^{i (n - m) phi}
            let r = radial[n * dim + m];
            if r == 0.0 {
                continue;
            }
            total += rho[(m, n)] * phases[n + dim - 1 - m] * (sign * r);
        }
    }
    total
}

fn wigner_complex(rho: &FockDensityMatrix, q: f64, p: f64, scratch: &mut [f64]) -> Complex64 {
    let dim = rho.dim();
    let beta_abs = SQRT_2 * q.hypot(p);
    let phi = p.atan2(q);
    displacement_radial_into(beta_abs, dim, scratch);
    wigner_from_radial(rho.matrix(), scratch, phi)
}

/// Wigner function of `rho` at a single phase-space point.
pub fn wigner_at(rho: &FockDensityMatrix, q: f64, p: f64) -> f64 {
    let mut scratch = vec![0.0; rho.dim() * rho.dim()];
    wigner_complex(rho, q, p, &mut scratch).re
}

/// Forward map on a grid.
pub fn wigner_from_rho(rho: &FockDensityMatrix, grid: &GridSpec) -> Result<WignerGrid> {
    grid.validate()?;
    let dim = rho.dim();
    let (qa, pa) = (grid.q_axis(), grid.p_axis());

    let (mean, cov) = rho.phase_space_moments();
    let sigma = 0.5 * (cov[0][0] + cov[1][1]) + (0.25 * (cov[0][0] - cov[1][1]).powi(2) + cov[0][1].powi(2)).sqrt();
    let reach = 4.0 * sigma.max(0.0).sqrt();
    if mean[0] - reach < grid.q_min
        || mean[0] + reach > grid.q_max
        || mean[1] - reach < grid.p_min
        || mean[1] + reach > grid.p_max
    {
        log::warn!("grid covers less than 4 standard deviations around the state's mean");
    }

    let rows: Vec<(Vec<f64>, f64)> = (0..grid.n_q)
        .into_par_iter()
        .map(|i| {
            let mut scratch = vec![0.0; dim * dim];
            let q = qa.at(i);
            let mut imag: f64 = 0.0;
            let row = (0..grid.n_p)
                .map(|j| {
                    let w = wigner_complex(rho, q, pa.at(j), &mut scratch);
                    imag = imag.max(w.im.abs());
                    w.re
                })
                .collect();
            (row, imag)
        })
        .collect();

    let mut values = Array2::zeros((grid.n_q, grid.n_p));
    let mut max_imag: f64 = 0.0;
    for (i, (row, imag)) in rows.into_iter().enumerate() {
        max_imag = max_imag.max(imag);
        for (j, v) in row.into_iter().enumerate() {
            values[[i, j]] = v;
        }
    }
    if max_imag > 1e-10 {
        log::warn!("Wigner trace has imaginary residue {max_imag:e}; input may not be Hermitian");
    }
    let out = WignerGrid { grid: *grid, values, max_imag_residue: max_imag };
    let edge = out.boundary_max();
    let limit = BOUNDARY_REL_LIMIT * out.max_abs();
    if edge > limit {
        return Err(Error::GridTooSmall { boundary: edge, limit });
    }
    Ok(out)
}

/// `step * sqrt(2 dim) < pi`.
pub(crate) fn nyquist_guard(step: f64, dim: usize) -> Result<()> {
    if step * (2.0 * dim as f64).sqrt() >= PI {
        return Err(Error::NyquistViolation { step, dim });
    }
    Ok(())
}

/// Hermitize and renormalize the trace of a reconstructed matrix.
pub(crate) fn finish_reconstruction(raw: DMatrix<Complex64>) -> FockDensityMatrix {
    let herm = (&raw + raw.adjoint()).scale(0.5);
    let tr: f64 = herm.diagonal().iter().map(|z| z.re).sum();
    let rho = FockDensityMatrix::from_matrix_unchecked(herm.unscale(tr));
    let min_ev = rho.min_eigenvalue();
    if min_ev < -1e-10 {
        log::warn!("reconstructed density matrix has negative eigenvalue {min_ev:e}");
    }
    rho
}

/// Inverse map: density matrix of dimension `dim` from a sampled Wigner function.
pub fn rho_from_wigner(w: &WignerGrid, dim: usize) -> Result<FockDensityMatrix> {
    if dim == 0 {
        return Err(Error::InvalidParameter("dim must be positive".into()));
    }
    nyquist_guard(w.grid.dq().max(w.grid.dp()), dim)?;
    let norm = w.normalization();
    if (norm - 1.0).abs() > 1e-4 {
        return Err(Error::NormalizationError(norm));
    }
    let (qa, pa) = (w.grid.q_axis(), w.grid.p_axis());
    let cell = w.grid.dq() * w.grid.dp() / PI;

    let partials: Vec<Vec<Complex64>> = (0..w.grid.n_q)
        .into_par_iter()
        .map(|i| {
            let mut acc = vec![Complex64::new(0.0, 0.0); dim * dim];
            let mut radial = vec![0.0; dim * dim];
            let mut phases = vec![Complex64::new(0.0, 0.0); 2 * dim - 1];
            let q = qa.at(i);
            for j in 0..w.grid.n_p {
                let wv = w.values[[i, j]];
                if wv == 0.0 {
                    continue;
                }
                let p = pa.at(j);
                displacement_radial_into(SQRT_2 * q.hypot(p), dim, &mut radial);
                let phi = p.atan2(q);
                for (k, ph) in phases.iter_mut().enumerate() {
                    *ph = Complex64::from_polar(wv * cell, (k as f64 - (dim as f64 - 1.0)) * phi);
                }
                for m in 0..dim {
                    for n in 0..dim {
                        let r = radial[m * dim + n];
                        if r == 0.0 {
                            continue;
                        }
                        // <m|D I|n> = (-1)^n <m|D|n>
                        let signed = if n % 2 == 0 { r } else { -r };
                        acc[m * dim + n] += phases[m + dim - 1 - n] * signed;
                    }
                }
            }
            acc
        })
        .collect();

    let mut raw = DMatrix::from_element(dim, dim, Complex64::new(0.0, 0.0));
    for part in &partials {
        for m in 0..dim {
            for n in 0..dim {
                raw[(m, n)] += part[m * dim + n];
            }
        }
    }
    Ok(finish_reconstruction(raw))
}
