//! Optical and symplectic tomograms.
//!
//! `w(X, theta)` is the Radon transform of the Wigner function over the line
//! `X = q cos(theta) + p sin(theta)`, normalized so that each phase is a
//! probability density in `X`. Phases are stored on `[0, pi)`; other angles
//! follow from `w(X, theta + pi) = w(-X, theta)`.

use std::borrow::Cow;
use std::f64::consts::{FRAC_PI_2, PI, SQRT_2};
use std::io::{BufRead, Write};

use nalgebra::DMatrix;
use ndarray::Array2;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{interpolate, lagrange6, UniformGrid};
use crate::phasespace::{finish_reconstruction, nyquist_guard, GridSpec, WignerGrid, DEFAULT_HALF_WIDTH};
use crate::special::{displacement_radial_into, gauss_legendre, hermite_functions};
use crate::statekit::{ClassicalDensity, FockDensityMatrix};

pub const DEFAULT_ANGLES: usize = 64;
pub const DEFAULT_X_POINTS: usize = 256;
/// Spacing of the default `[-8, 8]`, 256-point quadrature axis.
pub const DEFAULT_X_STEP: f64 = 2.0 * DEFAULT_HALF_WIDTH / (DEFAULT_X_POINTS as f64 - 1.0);

const CLIP_REPORT: f64 = 1e-9;
const SUPPORT_LIMIT: f64 = 1e-8;
const PHASE_TOL: f64 = 1e-9;
const DAMPING_LIMIT: f64 = 1e-12;

/// Angle count and quadrature axis for a tomogram.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TomogramGrid {
    pub n_theta: usize,
    pub x: UniformGrid,
}

impl Default for TomogramGrid {
    fn default() -> Self {
        Self { n_theta: DEFAULT_ANGLES, x: UniformGrid::symmetric(DEFAULT_HALF_WIDTH, DEFAULT_X_STEP) }
    }
}

impl TomogramGrid {
    /// Matches [`GridSpec::adequate_for`] in extent and carries at least
    /// `dim` angles so the angular quadrature of the inverse map is exact.
    pub fn adequate_for(rho: &FockDensityMatrix) -> Self {
        let half = GridSpec::adequate_for(rho).q_max;
        let n_theta = DEFAULT_ANGLES.max(rho.dim().next_multiple_of(2));
        Self { n_theta, x: UniformGrid::symmetric(half, DEFAULT_X_STEP) }
    }

    pub fn thetas(&self) -> Vec<f64> {
        uniform_thetas(self.n_theta)
    }

    pub fn refined(&self) -> Self {
        Self { n_theta: 2 * self.n_theta, x: self.x.refined() }
    }
}

/// `k pi / n` for `k = 0..n`.
pub fn uniform_thetas(n: usize) -> Vec<f64> {
    (0..n).map(|k| k as f64 * PI / n as f64).collect()
}

/// Reduces an angle to `[0, pi)`; the flag says whether `X` must be reflected.
pub fn fold_angle(theta: f64) -> (f64, bool) {
    let turns = (theta / PI).floor();
    let mut folded = theta - turns * PI;
    let mut reflect = (turns as i64).rem_euclid(2) == 1;
    if folded >= PI - 1e-15 {
        folded = 0.0;
        reflect = !reflect;
    }
    (folded.max(0.0), reflect)
}

/// Sampled `w(X, theta)`; `values[[j, i]] = w(x_i, theta_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct OpticalTomogram {
    pub x: UniformGrid,
    pub thetas: Vec<f64>,
    pub values: Array2<f64>,
    /// `\sum |w| dX` over the negative samples that were set to zero.
    pub clipped_mass: f64,
}

#[derive(Serialize, Deserialize)]
struct TomogramJson {
    x: UniformGrid,
    thetas: Vec<f64>,
    values: Vec<f64>,
}

impl OpticalTomogram {
    /// Validates the axes and clips negative samples, recording the clipped mass.
    pub fn new(x: UniformGrid, thetas: Vec<f64>, mut values: Array2<f64>) -> Result<Self> {
        if values.dim() != (thetas.len(), x.n) {
            return Err(Error::InvalidGrid(format!(
                "values {:?} do not match {} phases x {} points",
                values.dim(),
                thetas.len(),
                x.n
            )));
        }
        if thetas.is_empty() || thetas.iter().any(|t| !(0.0..PI).contains(t)) {
            return Err(Error::InvalidGrid("phases must lie in [0, pi)".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite tomogram value".into()));
        }
        let dx = x.step();
        let mut clipped = 0.0;
        let mut worst: f64 = 0.0;
        values.mapv_inplace(|v| {
            if v < 0.0 {
                clipped -= v * dx;
                worst = worst.min(v);
                0.0
            } else {
                v
            }
        });
        if worst < -CLIP_REPORT {
            log::warn!("clipped negative tomogram values (min {worst:e}, mass {clipped:e})");
        }
        Ok(Self { x, thetas, values, clipped_mass: clipped })
    }

    pub fn dx(&self) -> f64 {
        self.x.step()
    }

    pub fn row(&self, j: usize) -> &[f64] {
        self.values.row(j).to_slice().expect("tomogram rows are contiguous")
    }

    /// `\sum_X w(X, theta_j) dX`.
    pub fn normalization(&self, j: usize) -> f64 {
        self.row(j).iter().sum::<f64>() * self.dx()
    }

    /// Whether the phases are exactly `k pi / n`, `k = 0..n`.
    pub fn has_uniform_phases(&self) -> bool {
        let n = self.thetas.len();
        self.thetas.iter().enumerate().all(|(k, t)| (t - k as f64 * PI / n as f64).abs() < PHASE_TOL)
    }

    pub fn phase_index(&self, theta: f64) -> Option<usize> {
        self.thetas.iter().position(|t| (t - theta).abs() < PHASE_TOL)
    }

    fn reflected(&self, row: &[f64]) -> Vec<f64> {
        if self.x.is_symmetric() {
            row.iter().rev().copied().collect()
        } else {
            self.x.points().iter().map(|&x| interpolate(&self.x, row, -x)).collect()
        }
    }

    /// The `X` profile at any angle: stored phases directly, `theta + pi` by
    /// reflection, other angles by interpolation on uniform phase grids.
    pub fn column(&self, theta: f64) -> Result<Cow<'_, [f64]>> {
        let (folded, reflect) = fold_angle(theta);
        if let Some(j) = self.phase_index(folded).or_else(|| {
            // an angle just below pi folds to 0 with reflection
            ((PI - folded) < PHASE_TOL).then(|| self.phase_index(0.0)).flatten()
        }) {
            let flip = reflect ^ ((PI - folded) < PHASE_TOL && folded > 1.0);
            return Ok(if flip { Cow::Owned(self.reflected(self.row(j))) } else { Cow::Borrowed(self.row(j)) });
        }
        if !self.has_uniform_phases() {
            return Err(Error::MissingPhase(theta));
        }
        let sign = if reflect { -1.0 } else { 1.0 };
        Ok(Cow::Owned(self.x.points().iter().map(|&x| self.interpolated(sign * x, folded)).collect()))
    }

    /// `w(X, theta)` for `theta` in `[0, pi)` on a uniform phase grid.
    fn interpolated(&self, x: f64, theta: f64) -> f64 {
        let n = self.thetas.len();
        let dtheta = PI / n as f64;
        let (start, weights) = lagrange6(theta / dtheta);
        let mut acc = 0.0;
        for (k, wk) in weights.iter().enumerate() {
            if *wk == 0.0 {
                continue;
            }
            let idx = start + k as isize;
            let wraps = idx.div_euclid(n as isize);
            let j = idx.rem_euclid(n as isize) as usize;
            let xx = if wraps.rem_euclid(2) == 1 { -x } else { x };
            acc += wk * interpolate(&self.x, self.row(j), xx);
        }
        acc
    }

    /// Point value at any `(X, theta)`.
    pub fn value_at(&self, x: f64, theta: f64) -> Result<f64> {
        let (folded, reflect) = fold_angle(theta);
        let xx = if reflect { -x } else { x };
        if let Some(j) = self.phase_index(folded) {
            return Ok(interpolate(&self.x, self.row(j), xx));
        }
        if !self.has_uniform_phases() {
            return Err(Error::MissingPhase(theta));
        }
        Ok(self.interpolated(xx, folded))
    }

    /// Rows `theta,X,w`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "theta,X,w")?;
        let xs = self.x.points();
        for (j, t) in self.thetas.iter().enumerate() {
            for (i, x) in xs.iter().enumerate() {
                writeln!(out, "{t},{x},{}", self.values[[j, i]])?;
            }
        }
        Ok(())
    }

    /// Parses `theta,X,w` rows. The `X` values must form one uniform axis
    /// shared by every phase.
    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(input);
        let headers = rdr.headers()?.clone();
        if headers.len() != 3 {
            return Err(Error::Parse(format!("expected columns theta,X,w, found {headers:?}")));
        }
        let mut rows: Vec<(f64, f64, f64)> = Vec::new();
        for rec in rdr.deserialize() {
            rows.push(rec?);
        }
        let thetas = sorted_unique(rows.iter().map(|r| r.0));
        let xs = sorted_unique(rows.iter().map(|r| r.1));
        if xs.len() < 2 {
            return Err(Error::Parse("tomogram needs at least two X values".into()));
        }
        let x = UniformGrid::new(xs[0], xs[xs.len() - 1], xs.len())?;
        let tol = 1e-9 * x.step().max(1.0);
        if xs.iter().enumerate().any(|(i, v)| (x.at(i) - v).abs() > tol) {
            return Err(Error::Parse("X values are not uniformly spaced".into()));
        }
        if rows.len() != thetas.len() * xs.len() {
            return Err(Error::Parse(format!("expected {} rows, found {}", thetas.len() * xs.len(), rows.len())));
        }
        let mut values = Array2::zeros((thetas.len(), xs.len()));
        for (t, xv, w) in rows {
            let j = thetas.iter().position(|v| *v == t).expect("theta collected above");
            let i = x.index_of(xv, tol).ok_or_else(|| Error::Parse(format!("X = {xv} off grid")))?;
            values[[j, i]] = w;
        }
        Self::new(x, thetas, values)
    }

    pub fn to_json(&self) -> String {
        let doc =
            TomogramJson { x: self.x, thetas: self.thetas.clone(), values: self.values.iter().copied().collect() };
        serde_json::to_string(&doc).expect("tomogram serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: TomogramJson = serde_json::from_str(text)?;
        let values =
            Array2::from_shape_vec((doc.thetas.len(), doc.x.n), doc.values).map_err(|e| Error::Parse(e.to_string()))?;
        Self::new(doc.x, doc.thetas, values)
    }
}

fn sorted_unique(values: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

/// How the line integrals of a sampled Wigner function are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RadonMethod {
    /// Projection-slice evaluation: the rectangle-rule Fourier transform of
    /// the grid along each direction, inverted over the grid's band. Exact
    /// for the band-limited interpolant of the samples.
    #[default]
    FourierSlice,
    /// Direct `ds` quadrature along each line with bilinear interpolation of
    /// the samples. Second-order in the grid spacing.
    LineBilinear,
}

/// Optical tomogram of a sampled Wigner function.
pub fn optical_tomogram(w: &WignerGrid, thetas: &[f64], x_grid: &UniformGrid) -> Result<OpticalTomogram> {
    optical_tomogram_with(w, thetas, x_grid, RadonMethod::default())
}

pub fn optical_tomogram_with(
    w: &WignerGrid,
    thetas: &[f64],
    x_grid: &UniformGrid,
    method: RadonMethod,
) -> Result<OpticalTomogram> {
    if thetas.iter().any(|t| !(0.0..PI).contains(t)) {
        return Err(Error::InvalidGrid("phases must lie in [0, pi)".into()));
    }
    let edge = w.boundary_max();
    if edge > SUPPORT_LIMIT {
        return Err(Error::SupportClipped(edge));
    }
    let rows: Vec<Vec<f64>> = match method {
        RadonMethod::FourierSlice => {
            let slicer = FourierSlice::new(w, x_grid);
            thetas.par_iter().map(|&t| slicer.profile(t, 1.0, &x_grid.points())).collect()
        }
        RadonMethod::LineBilinear => thetas.par_iter().map(|&t| line_integral_profile(w, t, x_grid)).collect(),
    };
    let mut values = Array2::zeros((thetas.len(), x_grid.n));
    for (j, row) in rows.into_iter().enumerate() {
        values.row_mut(j).assign(&ndarray::Array1::from(row));
    }
    OpticalTomogram::new(*x_grid, thetas.to_vec(), values)
}

/// Evaluates Radon profiles of a fixed Wigner grid along arbitrary directions.
pub(crate) struct FourierSlice<'a> {
    w: &'a WignerGrid,
    q: Vec<f64>,
    p: Vec<f64>,
    dk: f64,
    nk: usize,
}

impl<'a> FourierSlice<'a> {
    pub(crate) fn new(w: &'a WignerGrid, x_grid: &UniformGrid) -> Self {
        let g = &w.grid;
        let band = PI / g.dq().max(g.dp());
        let reach = g.q_min.abs().max(g.q_max.abs()).hypot(g.p_min.abs().max(g.p_max.abs()));
        let x_reach = x_grid.min.abs().max(x_grid.max.abs());
        // periodic images of the k-quadrature sit a full support width away
        let period = reach + x_reach + 1.0;
        let dk = 2.0 * PI / period;
        let nk = (band / dk).floor() as usize;
        Self { w, q: g.q_axis().points(), p: g.p_axis().points(), dk, nk }
    }

    /// `\int W(z) e^{-i k n.z} dz` by the rectangle rule, with `n = (cos, sin)`.
    fn transform(&self, k: f64, cos: f64, sin: f64) -> Complex64 {
        let g = &self.w.grid;
        let b: Vec<Complex64> = self.p.iter().map(|&p| Complex64::from_polar(1.0, -k * sin * p)).collect();
        let (b_re, b_im): (Vec<f64>, Vec<f64>) = b.iter().map(|z| (z.re, z.im)).unzip();
        let mut total = Complex64::new(0.0, 0.0);
        for (i, &q) in self.q.iter().enumerate() {
            let row = self.w.values.row(i);
            let row = row.as_slice().expect("contiguous rows");
            let mut re = 0.0;
            let mut im = 0.0;
            for l in 0..row.len() {
                re += row[l] * b_re[l];
                im += row[l] * b_im[l];
            }
            total += Complex64::from_polar(1.0, -k * cos * q) * Complex64::new(re, im);
        }
        total * g.dq() * g.dp()
    }

    /// `w(X, theta)` at the given points; with `scale != 1` evaluates the
    /// symplectic tomogram along direction `scale * (cos theta, sin theta)`.
    pub(crate) fn profile(&self, theta: f64, scale: f64, xs: &[f64]) -> Vec<f64> {
        let (sin, cos) = theta.sin_cos();
        let spectrum: Vec<Complex64> = (0..=self.nk).map(|j| self.transform(j as f64 * self.dk, cos, sin)).collect();
        let pref = self.dk / (4.0 * PI * PI);
        xs.iter()
            .map(|&x| {
                let y = x / scale;
                let mut acc = spectrum[0].re;
                for (j, f) in spectrum.iter().enumerate().skip(1) {
                    let weight = if j == self.nk { 1.0 } else { 2.0 };
                    acc += weight * (f * Complex64::from_polar(1.0, j as f64 * self.dk * y)).re;
                }
                pref * acc / scale
            })
            .collect()
    }
}

fn bilinear(w: &WignerGrid, q: f64, p: f64) -> f64 {
    let (qa, pa) = (w.grid.q_axis(), w.grid.p_axis());
    let tq = qa.position(q);
    let tp = pa.position(p);
    if tq < 0.0 || tp < 0.0 || tq > (qa.n - 1) as f64 || tp > (pa.n - 1) as f64 {
        return 0.0;
    }
    let i = (tq.floor() as usize).min(qa.n - 2);
    let j = (tp.floor() as usize).min(pa.n - 2);
    let (fq, fp) = (tq - i as f64, tp - j as f64);
    let v = &w.values;
    (1.0 - fq) * (1.0 - fp) * v[[i, j]]
        + fq * (1.0 - fp) * v[[i + 1, j]]
        + (1.0 - fq) * fp * v[[i, j + 1]]
        + fq * fp * v[[i + 1, j + 1]]
}

fn line_integral_profile(w: &WignerGrid, theta: f64, x_grid: &UniformGrid) -> Vec<f64> {
    let g = &w.grid;
    let reach = g.q_min.abs().max(g.q_max.abs()).hypot(g.p_min.abs().max(g.p_max.abs()));
    let ds = 0.5 * g.dq().min(g.dp());
    let ns = (2.0 * reach / ds).ceil() as usize + 1;
    let (sin, cos) = theta.sin_cos();
    x_grid
        .points()
        .iter()
        .map(|&x| {
            let mut acc = 0.0;
            for k in 0..ns {
                let s = -reach + k as f64 * ds;
                let weight = if k == 0 || k == ns - 1 { 0.5 } else { 1.0 };
                acc += weight * bilinear(w, x * cos - s * sin, x * sin + s * cos);
            }
            acc * ds / (2.0 * PI)
        })
        .collect()
}

/// Exact tomogram of a classical Gaussian: a normal density in `X` with mean
/// `n.m` and variance `n^T S n`, `n = (cos theta, sin theta)`.
pub fn classical_tomogram(f: &ClassicalDensity, thetas: &[f64], x_grid: &UniformGrid) -> Result<OpticalTomogram> {
    f.validate()?;
    let xs = x_grid.points();
    let mut values = Array2::zeros((thetas.len(), x_grid.n));
    for (j, &t) in thetas.iter().enumerate() {
        for (i, &x) in xs.iter().enumerate() {
            values[[j, i]] = classical_symplectic(f, x, t.cos(), t.sin());
        }
    }
    OpticalTomogram::new(*x_grid, thetas.to_vec(), values)
}

/// Symplectic tomogram of a classical Gaussian at `(X, mu, nu)`.
pub fn classical_symplectic(f: &ClassicalDensity, x: f64, mu: f64, nu: f64) -> f64 {
    let m = f.mean();
    let s = f.cov();
    let mean = mu * m[0] + nu * m[1];
    let var = mu * mu * s[0][0] + 2.0 * mu * nu * s[0][1] + nu * nu * s[1][1];
    (-(x - mean).powi(2) / (2.0 * var)).exp() / (2.0 * PI * var).sqrt()
}

/// Tomogram of a number-basis density matrix evaluated in closed form,
/// `w(X, theta) = sum_{mn} rho_{mn} psi_m(X) psi_n(X) e^{i (n - m) theta}`.
pub fn fock_tomogram(rho: &FockDensityMatrix, thetas: &[f64], x_grid: &UniformGrid) -> Result<OpticalTomogram> {
    let xs = x_grid.points();
    let cols: Vec<Vec<f64>> = xs
        .par_iter()
        .map(|&x| {
            let diag = fock_diagonals(rho, x);
            thetas.iter().map(|&t| combine_diagonals(&diag, t)).collect()
        })
        .collect();
    let mut values = Array2::zeros((thetas.len(), x_grid.n));
    for (i, col) in cols.into_iter().enumerate() {
        for (j, v) in col.into_iter().enumerate() {
            values[[j, i]] = v;
        }
    }
    OpticalTomogram::new(*x_grid, thetas.to_vec(), values)
}

/// Closed-form symplectic tomogram of `rho` at `(X, mu, nu)`.
pub fn fock_symplectic(rho: &FockDensityMatrix, x: f64, mu: f64, nu: f64) -> f64 {
    let lambda = mu.hypot(nu);
    let theta = nu.atan2(mu);
    combine_diagonals(&fock_diagonals(rho, x / lambda), theta) / lambda
}

/// `T_k(X) = sum_m rho_{m, m+k} psi_m psi_{m+k}` for `k >= 0`.
fn fock_diagonals(rho: &FockDensityMatrix, x: f64) -> Vec<Complex64> {
    let dim = rho.dim();
    let psi = hermite_functions(x, dim);
    (0..dim).map(|k| (0..dim - k).map(|m| rho.get(m, m + k) * (psi[m] * psi[m + k])).sum()).collect()
}

fn combine_diagonals(diag: &[Complex64], theta: f64) -> f64 {
    let mut acc = diag[0].re;
    for (k, t) in diag.iter().enumerate().skip(1) {
        acc += 2.0 * (t * Complex64::from_polar(1.0, k as f64 * theta)).re;
    }
    acc
}

/// Lazy symplectic view `w(X, mu, nu) = |lambda|^{-1} w(X/lambda, atan2(nu, mu))`
/// over an optical tomogram, `lambda = sqrt(mu^2 + nu^2)`.
#[derive(Debug, Clone, Copy)]
pub struct SymplecticTomogram<'a> {
    pub base: &'a OpticalTomogram,
}

impl<'a> SymplecticTomogram<'a> {
    pub fn new(base: &'a OpticalTomogram) -> Self {
        Self { base }
    }

    pub fn value(&self, x: f64, mu: f64, nu: f64) -> Result<f64> {
        symplectic_view(self.base, x, mu, nu)
    }

    /// `\int w(X, mu, nu) dX` on the base axis scaled by `lambda`.
    pub fn normalization(&self, mu: f64, nu: f64) -> Result<f64> {
        let lambda = mu.hypot(nu);
        let axis = UniformGrid { min: lambda * self.base.x.min, max: lambda * self.base.x.max, n: self.base.x.n };
        let mut acc = 0.0;
        for x in axis.points() {
            acc += self.value(x, mu, nu)?;
        }
        Ok(acc * axis.step())
    }
}

pub fn symplectic_view(opt: &OpticalTomogram, x: f64, mu: f64, nu: f64) -> Result<f64> {
    let lambda = mu.hypot(nu);
    if lambda == 0.0 {
        return Err(Error::DegenerateDirection);
    }
    Ok(opt.value_at(x / lambda, nu.atan2(mu))? / lambda)
}

/// Radial cutoff beyond which every `|<m|D(beta)|n>|`, `|beta| = r/sqrt(2)`,
/// stays below 1e-12.
fn damping_radius(dim: usize) -> f64 {
    let mut table = vec![0.0; dim * dim];
    let mut last_big = 0.0;
    let mut r = 0.0;
    while r < 400.0 {
        displacement_radial_into(r / SQRT_2, dim, &mut table);
        if table.iter().any(|v| v.abs() >= DAMPING_LIMIT) {
            last_big = r;
        } else if r > last_big + 4.0 {
            break;
        }
        r += 0.25;
    }
    last_big + 0.25
}

/// Density matrix from the symplectic tomogram,
/// `rho = (2 pi)^{-1} \int w(X, mu, nu) exp[i (X - mu q - nu p)] dX dmu dnu`,
/// evaluated in polar form `(mu, nu) = r (cos theta, sin theta)`. Homogeneity
/// turns the `X` integral into the characteristic function of the optical
/// tomogram at `r`; `exp[-i r X_theta] = D(-i r e^{i theta}/sqrt(2))`.
pub fn rho_from_symplectic(sym: &SymplecticTomogram<'_>, dim: usize) -> Result<FockDensityMatrix> {
    let opt = sym.base;
    if dim == 0 {
        return Err(Error::InvalidParameter("dim must be positive".into()));
    }
    if !opt.has_uniform_phases() {
        return Err(Error::InvalidGrid("inversion needs phases k*pi/n covering [0, pi)".into()));
    }
    let dx = opt.dx();
    nyquist_guard(dx, dim)?;
    let band = PI / dx;
    let mut r_max = damping_radius(dim);
    if r_max > band {
        log::warn!("radial damping bound r = {r_max:.2} exceeds the X-grid band {band:.2}; truncating");
        r_max = band;
    }

    let n_theta = opt.thetas.len();
    let dtheta = PI / n_theta as f64;
    let xs = opt.x.points();
    let n_r = 64 + 3 * dim;
    let (nodes, weights) = gauss_legendre(n_r, 0.0, r_max);
    let kmax = dim as isize - 1;

    let partials: Vec<Vec<Complex64>> = nodes
        .par_iter()
        .zip(weights.par_iter())
        .map(|(&r, &wr)| {
            let kernel: Vec<Complex64> = xs.iter().map(|&x| Complex64::from_polar(dx, r * x)).collect();
            // characteristic function on the half circle; the other half is its conjugate
            let chi: Vec<Complex64> =
                (0..n_theta).map(|j| opt.row(j).iter().zip(&kernel).map(|(w, e)| e * *w).sum()).collect();
            let coeff: Vec<Complex64> = (-kmax..=kmax)
                .map(|k| {
                    let mut c = Complex64::new(0.0, 0.0);
                    for (j, z) in chi.iter().enumerate() {
                        let ang = k as f64 * j as f64 * dtheta;
                        let e = Complex64::from_polar(1.0, ang);
                        // theta_j + pi: conj(chi) with phase e^{i k pi}
                        let flip = if k.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
                        c += e * (z + z.conj() * flip);
                    }
                    c * dtheta
                })
                .collect();
            let mut radial = vec![0.0; dim * dim];
            displacement_radial_into(r / SQRT_2, dim, &mut radial);
            let scale = wr * r / (2.0 * PI);
            let mut acc = vec![Complex64::new(0.0, 0.0); dim * dim];
            for m in 0..dim {
                for n in 0..dim {
                    let k = m as isize - n as isize;
                    // arg(beta) = theta - pi/2
                    let shift = Complex64::from_polar(1.0, -(k as f64) * FRAC_PI_2);
                    acc[m * dim + n] = coeff[(k + kmax) as usize] * shift * (radial[m * dim + n] * scale);
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phasespace::wigner_from_rho;
    use crate::statekit::{build_state, StateSpec};

    fn vacuum_tomogram() -> OpticalTomogram {
        let rho = build_state(&StateSpec::fock(0)).unwrap();
        let w = wigner_from_rho(&rho, &GridSpec::default()).unwrap();
        let g = TomogramGrid::default();
        optical_tomogram(&w, &g.thetas(), &g.x).unwrap()
    }

    #[test]
    fn fold_angle_conventions() {
        assert_eq!(fold_angle(0.3), (0.3, false));
        let (t, r) = fold_angle(0.3 + PI);
        assert!((t - 0.3).abs() < 1e-15 && r);
        let (t, r) = fold_angle(0.3 - PI);
        assert!((t - 0.3).abs() < 1e-15 && r);
        let (t, r) = fold_angle(PI);
        assert!(t == 0.0 && r);
    }

    #[test]
    fn vacuum_tomogram_is_gaussian() {
        let opt = vacuum_tomogram();
        for j in 0..opt.thetas.len() {
            for (i, x) in opt.x.points().iter().enumerate() {
                let exact = (-x * x).exp() / PI.sqrt();
                assert!((opt.values[[j, i]] - exact).abs() < 1e-12);
            }
            assert!((opt.normalization(j) - 1.0).abs() < 1e-12);
        }
        assert!((opt.value_at(0.0, 0.7).unwrap() - 1.0 / PI.sqrt()).abs() < 1e-7);
        let diff = opt.row(0).iter().zip(opt.row(32)).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(diff < 1e-15);
    }

    #[test]
    fn coherent_tomogram_mean_and_variance() {
        let rho = build_state(&StateSpec::coherent(std::f64::consts::FRAC_1_SQRT_2, 0.0)).unwrap();
        let w = wigner_from_rho(&rho, &GridSpec::default()).unwrap();
        let g = TomogramGrid::default();
        let opt = optical_tomogram(&w, &[0.0], &g.x).unwrap();
        let xs = g.x.points();
        let mean: f64 = opt.row(0).iter().zip(&xs).map(|(w, x)| w * x).sum::<f64>() * g.x.step();
        let second: f64 = opt.row(0).iter().zip(&xs).map(|(w, x)| w * x * x).sum::<f64>() * g.x.step();
        assert!((mean - 1.0).abs() < 1e-10);
        assert!((second - mean * mean - 0.5).abs() < 1e-10);
    }

    #[test]
    fn fourier_slice_matches_closed_form_fock_tomogram() {
        for spec in [StateSpec::fock(3), StateSpec::cat(1.5, 0.5, -1), StateSpec::coherent(0.7, -1.1)] {
            let rho = build_state(&spec).unwrap();
            let w = wigner_from_rho(&rho, &GridSpec::default()).unwrap();
            let g = TomogramGrid { n_theta: 12, ..TomogramGrid::default() };
            let radon = optical_tomogram(&w, &g.thetas(), &g.x).unwrap();
            let exact = fock_tomogram(&rho, &g.thetas(), &g.x).unwrap();
            let diff = (&radon.values - &exact.values).iter().fold(0.0f64, |m, v| m.max(v.abs()));
            assert!(diff < 1e-10, "{}: {diff}", spec.label());
        }
    }

    #[test]
    fn bilinear_line_integral_converges_at_second_order() {
        let rho = build_state(&StateSpec::fock(1)).unwrap();
        let x = UniformGrid::symmetric(4.0, 0.1);
        let exact = fock_tomogram(&rho, &[0.4], &x).unwrap();
        let err = |n: usize| {
            let w = wigner_from_rho(&rho, &GridSpec::symmetric(8.0, n)).unwrap();
            let t = optical_tomogram_with(&w, &[0.4], &x, RadonMethod::LineBilinear).unwrap();
            (&t.values - &exact.values).iter().fold(0.0f64, |m, v| m.max(v.abs()))
        };
        let (coarse, fine) = (err(65), err(129));
        assert!(coarse / fine > 3.0, "coarse {coarse}, fine {fine}");
    }

    #[test]
    fn classical_tomogram_cases() {
        let x = UniformGrid::symmetric(8.0, DEFAULT_X_STEP);
        let iso = ClassicalDensity::gaussian([0.0, 0.0], [[0.5, 0.0], [0.0, 0.5]]).unwrap();
        let t = classical_tomogram(&iso, &[0.0, 1.0, 2.5], &x).unwrap();
        for j in 0..3 {
            for (i, xv) in x.points().iter().enumerate() {
                assert!((t.values[[j, i]] - (-xv * xv).exp() / PI.sqrt()).abs() < 1e-15);
            }
        }
        let shifted = ClassicalDensity::gaussian([1.0, 0.0], [[1.0, 0.0], [0.0, 1.0]]).unwrap();
        let t = classical_tomogram(&shifted, &[FRAC_PI_2], &x).unwrap();
        let xs = x.points();
        let mean: f64 = t.row(0).iter().zip(&xs).map(|(w, x)| w * x).sum::<f64>() * x.step();
        let var: f64 = t.row(0).iter().zip(&xs).map(|(w, x)| w * x * x).sum::<f64>() * x.step() - mean * mean;
        assert!(mean.abs() < 1e-12 && (var - 1.0).abs() < 1e-9);
    }

    #[test]
    fn classical_quadrature_path_matches_analytic() {
        let f = ClassicalDensity::gaussian([0.4, -0.3], [[0.7, 0.2], [0.2, 0.5]]).unwrap();
        let w = WignerGrid::from_classical(&f, GridSpec::default()).unwrap();
        let g = TomogramGrid::default();
        let radon = optical_tomogram(&w, &g.thetas(), &g.x).unwrap();
        let exact = classical_tomogram(&f, &g.thetas(), &g.x).unwrap();
        let diff = (&radon.values - &exact.values).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(diff < 1e-6, "{diff}");
    }

    #[test]
    fn marginal_consistency_at_zero_phase() {
        let rho = build_state(&StateSpec::cat(1.2, 0.4, 1)).unwrap();
        let grid = GridSpec::default();
        let w = wigner_from_rho(&rho, &grid).unwrap();
        // X axis coincides with the q axis so the marginal is compared pointwise
        let opt = optical_tomogram(&w, &[0.0], &grid.q_axis()).unwrap();
        for i in 0..grid.n_q {
            let marginal: f64 = w.values.row(i).sum() * grid.dp() / (2.0 * PI);
            assert!((opt.values[[0, i]] - marginal).abs() < 1e-8);
        }
    }

    #[test]
    fn radon_is_linear_in_the_state() {
        let a = build_state(&StateSpec::fock(1)).unwrap();
        let b = build_state(&StateSpec::with_cutoff(
            crate::statekit::StateKind::Coherent { alpha: Complex64::new(0.5, 0.2) },
            20,
        ))
        .unwrap();
        let mix_m = {
            let mut m = b.matrix().scale(0.3);
            for i in 0..a.dim() {
                for j in 0..a.dim() {
                    m[(i, j)] += a.get(i, j) * 0.7;
                }
            }
            FockDensityMatrix::from_matrix(m).unwrap()
        };
        let grid = GridSpec::default();
        let tg = TomogramGrid { n_theta: 8, ..TomogramGrid::default() };
        let tom = |rho: &FockDensityMatrix| {
            optical_tomogram(&wigner_from_rho(rho, &grid).unwrap(), &tg.thetas(), &tg.x).unwrap().values
        };
        let lhs = tom(&mix_m);
        let rhs = tom(&a) * 0.7 + tom(&b) * 0.3;
        let diff = (&lhs - &rhs).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(diff < 1e-10, "{diff}");
    }

    #[test]
    fn symplectic_view_reductions_and_homogeneity() {
        let opt = vacuum_tomogram();
        for (i, x) in opt.x.points().iter().enumerate().step_by(17) {
            assert_eq!(symplectic_view(&opt, *x, 1.0, 0.0).unwrap(), opt.values[[0, i]]);
            assert_eq!(symplectic_view(&opt, *x, 0.0, 1.0).unwrap(), opt.values[[32, i]]);
        }
        let v = symplectic_view(&opt, 0.0, 2.0, 0.0).unwrap();
        assert!((v - 0.5 / PI.sqrt()).abs() < 1e-7);
        assert!(matches!(symplectic_view(&opt, 0.0, 0.0, 0.0), Err(Error::DegenerateDirection)));

        let rho = build_state(&StateSpec::squeezed(0.3, 0.4)).unwrap();
        let w = wigner_from_rho(&rho, &GridSpec::default()).unwrap();
        let g = TomogramGrid::default();
        let opt = optical_tomogram(&w, &g.thetas(), &g.x).unwrap();
        let sym = SymplecticTomogram::new(&opt);
        for &(x, mu, nu, lam) in &[(0.3, 0.8, 0.5, 1.7), (-1.0, -0.4, 0.9, 0.6), (0.5, 0.2, -1.1, 2.2)] {
            let a = sym.value(lam * x, lam * mu, lam * nu).unwrap();
            let b = sym.value(x, mu, nu).unwrap() / lam;
            assert!((a - b).abs() < 1e-6);
            let exact = fock_symplectic(&rho, x, mu, nu);
            assert!((sym.value(x, mu, nu).unwrap() - exact).abs() < 1e-6);
        }
        assert!((sym.normalization(0.6, -0.9).unwrap() - 1.0).abs() < 1e-5);
        for (j, t) in g.thetas().iter().enumerate() {
            for (i, x) in g.x.points().iter().enumerate().step_by(31) {
                let v = symplectic_view(&opt, *x, t.cos(), t.sin()).unwrap();
                assert!((v - opt.values[[j, i]]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn symplectic_inversion_round_trips() {
        for (spec, tol) in [(StateSpec::fock(0), 1e-4), (StateSpec::fock(1), 1e-3)] {
            let rho = build_state(&spec).unwrap();
            let w = wigner_from_rho(&rho, &GridSpec::default()).unwrap();
            let g = TomogramGrid::default();
            let opt = optical_tomogram(&w, &g.thetas(), &g.x).unwrap();
            let back = rho_from_symplectic(&SymplecticTomogram::new(&opt), rho.dim().max(4)).unwrap();
            let n = if spec == StateSpec::fock(0) { 0 } else { 1 };
            assert!((back.get(n, n).re - 1.0).abs() < tol, "{}", back.get(n, n));
        }
        let rho = build_state(&StateSpec::coherent(std::f64::consts::FRAC_1_SQRT_2, 0.0)).unwrap();
        let g = TomogramGrid::default();
        let opt = fock_tomogram(&rho, &g.thetas(), &g.x).unwrap();
        let back = rho_from_symplectic(&SymplecticTomogram::new(&opt), rho.dim()).unwrap();
        assert!(back.frobenius_distance(&rho) < 1e-3);
    }

    #[test]
    fn support_and_nyquist_errors() {
        let rho = build_state(&StateSpec::coherent(2.0, 2.0)).unwrap();
        let w = wigner_from_rho(&rho, &GridSpec::adequate_for(&rho)).unwrap();
        let mut cropped = w.clone();
        let n = w.grid.n_q;
        cropped.values.row_mut(n / 2 + 20).fill(0.5);
        assert!(matches!(
            optical_tomogram(&cropped, &[0.0], &UniformGrid::symmetric(8.0, 0.1)),
            Err(Error::SupportClipped(_))
        ));
        let opt = vacuum_tomogram();
        assert!(matches!(
            rho_from_symplectic(&SymplecticTomogram::new(&opt), 2000),
            Err(Error::NyquistViolation { .. })
        ));
    }

    #[test]
    fn csv_and_json_round_trip() {
        let rho = build_state(&StateSpec::fock(1)).unwrap();
        let opt = fock_tomogram(&rho, &uniform_thetas(4), &UniformGrid::symmetric(5.0, 0.25)).unwrap();
        let mut buf = Vec::new();
        opt.write_csv(&mut buf).unwrap();
        let back = OpticalTomogram::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.thetas, opt.thetas);
        let diff = (&back.values - &opt.values).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(diff < 1e-15);
        assert_eq!(OpticalTomogram::from_json(&opt.to_json()).unwrap().values, opt.values);
        assert!(OpticalTomogram::read_csv("theta,X,w\n0,0,1\n0,1,1\n0,3,1\n".as_bytes()).is_err());
    }

    #[test]
    fn column_folding_and_interpolation() {
        let rho = build_state(&StateSpec::coherent(0.8, 0.3)).unwrap();
        let g = TomogramGrid::default();
        let opt = fock_tomogram(&rho, &g.thetas(), &g.x).unwrap();
        let t = g.thetas()[5];
        let folded = opt.column(t + PI).unwrap();
        let direct = opt.row(5);
        let n = g.x.n;
        for i in 0..n {
            assert_eq!(folded[i], direct[n - 1 - i]);
        }
        let theta = 0.123;
        let interp = opt.column(theta).unwrap();
        let exact = fock_tomogram(&rho, &[theta], &g.x).unwrap();
        let diff = interp.iter().zip(exact.row(0)).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(diff < 1e-7, "{diff}");
        let sparse = OpticalTomogram::new(g.x, vec![0.0, 0.3], exact_pair(&rho, &g.x)).unwrap();
        assert!(matches!(sparse.column(0.5), Err(Error::MissingPhase(_))));
        assert!(sparse.column(0.3 + PI).is_ok());
    }

    fn exact_pair(rho: &FockDensityMatrix, x: &UniformGrid) -> Array2<f64> {
        fock_tomogram(rho, &[0.0, 0.3], x).unwrap().values
    }
}
