//! Tomogram dynamics under quadratic Hamiltonians `H = p^2/2 + U(q)`.
//!
//! Trajectories are propagated exactly through the linear phase-space flow;
//! the tomographic evolution equations are then checked as finite-difference
//! residuals on those trajectories.

use std::f64::consts::PI;

use ndarray::{Array2, Array3};
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::UniformGrid;
use crate::statekit::{ClassicalDensity, FockDensityMatrix};
use crate::tomography::{classical_symplectic, fock_symplectic, symplectic_view, OpticalTomogram, TomogramGrid};

/// Default time step of the three-frame central difference.
pub const DEFAULT_DT: f64 = 0.01;
/// Annulus of `(mu, nu)` directions on which the symplectic residual is taken.
pub const ANNULUS: (f64, f64) = (0.75, 1.25);
const X_MARGIN: usize = 4;
const MAX_THETA_STEP: f64 = PI / 16.0;
const MAX_X_STEP: f64 = 0.25;
const MAX_DT: f64 = 0.05;
const MAX_EDGE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum QuadraticHamiltonian {
    /// `U = 0`.
    Free,
    /// `U = omega^2 q^2 / 2`.
    Harmonic { omega: f64 },
}

impl QuadraticHamiltonian {
    pub fn harmonic(omega: f64) -> Result<Self> {
        if !(omega.is_finite() && omega > 0.0) {
            return Err(Error::InvalidParameter(format!("omega = {omega} must be finite and > 0")));
        }
        Ok(Self::Harmonic { omega })
    }

    /// Builds a Hamiltonian from a potential name. Only `free` and
    /// `harmonic` have exact tomographic flows.
    pub fn from_name(name: &str, omega: Option<f64>) -> Result<Self> {
        match name {
            "free" => Ok(Self::Free),
            "harmonic" => Self::harmonic(omega.ok_or_else(|| Error::InvalidParameter("harmonic needs omega".into()))?),
            other => Err(Error::UnsupportedHamiltonian(other.to_string())),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::Free => Ok(()),
            Self::Harmonic { omega } => Self::harmonic(omega).map(|_| ()),
        }
    }

    /// `omega^2`, the coefficient of `dU/dq = omega^2 q`.
    fn stiffness(&self) -> f64 {
        match *self {
            Self::Free => 0.0,
            Self::Harmonic { omega } => omega * omega,
        }
    }

    /// Flow matrix `S(t)` with `z(t) = S(t) z(0)`, `z = (q, p)`.
    pub fn flow(&self, t: f64) -> [[f64; 2]; 2] {
        match *self {
            Self::Free => [[1.0, t], [0.0, 1.0]],
            Self::Harmonic { omega } => {
                let (s, c) = (omega * t).sin_cos();
                [[c, s / omega], [-omega * s, c]]
            }
        }
    }

    /// Initial-time direction `S(t)^T n` probed by the direction `n` at time `t`.
    fn pulled_back(&self, t: f64, mu: f64, nu: f64) -> (f64, f64) {
        let s = self.flow(t);
        (s[0][0] * mu + s[1][0] * nu, s[0][1] * mu + s[1][1] * nu)
    }
}

/// Initial condition for [`propagate_quadratic`].
#[derive(Debug, Clone, Copy)]
pub enum InitialState<'a> {
    Quantum(&'a FockDensityMatrix),
    Classical(&'a ClassicalDensity),
}

impl InitialState<'_> {
    fn symplectic(&self, x: f64, mu: f64, nu: f64) -> f64 {
        match self {
            Self::Quantum(rho) => fock_symplectic(rho, x, mu, nu),
            Self::Classical(f) => classical_symplectic(f, x, mu, nu),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TomogramTrajectory {
    pub times: Vec<f64>,
    pub frames: Vec<OpticalTomogram>,
}

impl TomogramTrajectory {
    pub fn new(times: Vec<f64>, frames: Vec<OpticalTomogram>) -> Result<Self> {
        if times.len() != frames.len() {
            return Err(Error::InvalidParameter("one frame per time required".into()));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameter("times must be strictly increasing".into()));
        }
        Ok(Self { times, frames })
    }

    /// Largest `|\int w dX - 1|` over all frames and phases.
    pub fn max_normalization_drift(&self) -> f64 {
        self.frames
            .iter()
            .flat_map(|f| (0..f.thetas.len()).map(move |j| (f.normalization(j) - 1.0).abs()))
            .fold(0.0, f64::max)
    }

    /// The same frames with their time labels permuted; a negative control
    /// for the residual checks.
    pub fn time_shuffled(&self) -> Self {
        let mut frames = self.frames.clone();
        frames.rotate_left(1);
        frames.reverse();
        Self { times: self.times.clone(), frames }
    }
}

/// Exact tomograms at `times`. With `z(t) = S(t) z(0)` the tomogram at time
/// `t` is the initial symplectic tomogram along `S(t)^T n_theta`.
pub fn propagate_quadratic(
    state: InitialState<'_>,
    h: &QuadraticHamiltonian,
    times: &[f64],
    grid: &TomogramGrid,
) -> Result<TomogramTrajectory> {
    h.validate()?;
    if let InitialState::Classical(f) = state {
        f.validate()?;
    }
    let thetas = grid.thetas();
    let xs = grid.x.points();
    let frames = times
        .iter()
        .map(|&t| {
            let rows: Vec<Vec<f64>> = thetas
                .par_iter()
                .map(|&theta| {
                    let (mu, nu) = h.pulled_back(t, theta.cos(), theta.sin());
                    xs.iter().map(|&x| state.symplectic(x, mu, nu)).collect()
                })
                .collect();
            let mut values = Array2::zeros((thetas.len(), xs.len()));
            for (j, row) in rows.into_iter().enumerate() {
                values.row_mut(j).assign(&ndarray::Array1::from(row));
            }
            OpticalTomogram::new(grid.x, thetas.clone(), values)
        })
        .collect::<Result<Vec<_>>>()?;
    TomogramTrajectory::new(times.to_vec(), frames)
}

/// Three frames centred on `t0`.
pub fn stencil_times(t0: f64, dt: f64) -> [f64; 3] {
    [t0 - dt, t0, t0 + dt]
}

fn uniform_step(times: &[f64]) -> Result<f64> {
    if times.len() < 3 {
        return Err(Error::InvalidParameter("residuals need at least 3 frames".into()));
    }
    let dt = times[1] - times[0];
    if times.windows(2).any(|w| ((w[1] - w[0]) - dt).abs() > 1e-9 * dt.abs().max(1.0)) {
        return Err(Error::InvalidParameter("residuals need equally spaced times".into()));
    }
    if dt > MAX_DT {
        return Err(Error::GridTooCoarse(format!("time step {dt} exceeds {MAX_DT}")));
    }
    Ok(dt)
}

fn check_axis(x: &UniformGrid) -> Result<()> {
    if !x.is_symmetric() {
        return Err(Error::InvalidGrid("residuals need an X axis symmetric about 0".into()));
    }
    if x.step() > MAX_X_STEP {
        return Err(Error::GridTooCoarse(format!("X step {} exceeds {MAX_X_STEP}", x.step())));
    }
    if x.n < 4 * X_MARGIN {
        return Err(Error::GridTooCoarse(format!("{} X points", x.n)));
    }
    Ok(())
}

fn check_optical(traj: &TomogramTrajectory) -> Result<f64> {
    let dt = uniform_step(&traj.times)?;
    let first = &traj.frames[0];
    check_axis(&first.x)?;
    if !first.has_uniform_phases() {
        return Err(Error::InvalidGrid("residuals need phases k*pi/n".into()));
    }
    let step = PI / first.thetas.len() as f64;
    if step > MAX_THETA_STEP {
        return Err(Error::GridTooCoarse(format!("phase step {step:.4} exceeds pi/16")));
    }
    for f in &traj.frames {
        if f.x != first.x || f.thetas != first.thetas {
            return Err(Error::InvalidGrid("frames must share one grid".into()));
        }
        let peak = f.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let edge =
            f.values.column(0).iter().chain(f.values.column(f.x.n - 1).iter()).fold(0.0f64, |m, v| m.max(v.abs()));
        if edge > MAX_EDGE * peak {
            return Err(Error::GridTooCoarse(format!("tomogram tails reach the X boundary ({edge:e})")));
        }
    }
    Ok(dt)
}

/// Central difference along the last axis, zero at the two end points.
fn d_last(rows: &Array2<f64>, h: f64) -> Array2<f64> {
    let (nr, nc) = rows.dim();
    let mut out = Array2::zeros((nr, nc));
    for r in 0..nr {
        for i in 1..nc - 1 {
            out[[r, i]] = (rows[[r, i + 1]] - rows[[r, i - 1]]) / (2.0 * h);
        }
    }
    out
}

/// Central difference along the first axis, zero on the first and last rows.
fn d_first(rows: &Array2<f64>, h: f64) -> Array2<f64> {
    let (nr, nc) = rows.dim();
    let mut out = Array2::zeros((nr, nc));
    for r in 1..nr - 1 {
        for i in 0..nc {
            out[[r, i]] = (rows[[r + 1, i]] - rows[[r - 1, i]]) / (2.0 * h);
        }
    }
    out
}

/// `[d/dX]^{-1}` along the last axis: the antiderivative vanishing at the
/// left end. The zero-mean part is inverted spectrally (division by `i k`);
/// the mean is integrated as a linear ramp.
struct InverseDerivative {
    fwd: std::sync::Arc<dyn rustfft::Fft<f64>>,
    inv: std::sync::Arc<dyn rustfft::Fft<f64>>,
    n: usize,
    h: f64,
}

impl InverseDerivative {
    fn new(n: usize, h: f64) -> Self {
        let mut planner = FftPlanner::new();
        Self { fwd: planner.plan_fft_forward(n), inv: planner.plan_fft_inverse(n), n, h }
    }

    fn apply_row(&self, row: &[f64], out: &mut [f64]) {
        let n = self.n;
        let mut buf: Vec<Complex64> = row.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.fwd.process(&mut buf);
        let mean = buf[0].re / n as f64;
        let length = n as f64 * self.h;
        buf[0] = Complex64::new(0.0, 0.0);
        for (k, z) in buf.iter_mut().enumerate().skip(1) {
            let signed = if k < n.div_ceil(2) {
                k as f64
            } else if 2 * k == n {
                0.0
            } else {
                k as f64 - n as f64
            };
            if signed == 0.0 {
                *z = Complex64::new(0.0, 0.0);
            } else {
                let kappa = 2.0 * PI * signed / length;
                *z /= Complex64::new(0.0, kappa);
            }
        }
        self.inv.process(&mut buf);
        let base = buf[0].re / n as f64;
        for (i, (o, z)) in out.iter_mut().zip(&buf).enumerate() {
            *o = z.re / n as f64 - base + mean * i as f64 * self.h;
        }
    }

    fn apply(&self, rows: &Array2<f64>) -> Array2<f64> {
        let mut out = Array2::zeros(rows.dim());
        for (src, mut dst) in rows.rows().into_iter().zip(out.rows_mut()) {
            let src = src.to_vec();
            let mut tmp = vec![0.0; src.len()];
            self.apply_row(&src, &mut tmp);
            dst.assign(&ndarray::Array1::from(tmp));
        }
        out
    }
}

const GHOSTS: usize = 2;

/// Optical operators on a frame extended by ghost phases on both sides of
/// `[0, pi)`, filled from `w(X, theta + pi) = w(-X, theta)`.
struct PhaseStencil {
    thetas: Vec<f64>,
    xs: Vec<f64>,
    dtheta: f64,
    dx: f64,
    inv: InverseDerivative,
}

impl PhaseStencil {
    fn new(frame: &OpticalTomogram) -> Self {
        let n = frame.thetas.len();
        let dtheta = PI / n as f64;
        let thetas = (0..n + 2 * GHOSTS).map(|j| (j as f64 - GHOSTS as f64) * dtheta).collect();
        Self {
            thetas,
            xs: frame.x.points(),
            dtheta,
            dx: frame.x.step(),
            inv: InverseDerivative::new(frame.x.n, frame.x.step()),
        }
    }

    fn extend(&self, frame: &OpticalTomogram) -> Array2<f64> {
        let n = frame.thetas.len();
        let nx = frame.x.n;
        let mut ext = Array2::zeros((n + 2 * GHOSTS, nx));
        for r in 0..n + 2 * GHOSTS {
            let j = r as isize - GHOSTS as isize;
            let (src, flip) = if j < 0 {
                ((j + n as isize) as usize, true)
            } else if j >= n as isize {
                ((j - n as isize) as usize, true)
            } else {
                (j as usize, false)
            };
            for i in 0..nx {
                ext[[r, i]] = if flip { frame.values[[src, nx - 1 - i]] } else { frame.values[[src, i]] };
            }
        }
        ext
    }

    fn scale_rows(&self, a: &Array2<f64>, f: impl Fn(f64) -> f64) -> Array2<f64> {
        let mut out = a.clone();
        for (r, mut row) in out.rows_mut().into_iter().enumerate() {
            let k = f(self.thetas[r]);
            row.mapv_inplace(|v| v * k);
        }
        out
    }

    fn times_x(&self, a: &Array2<f64>) -> Array2<f64> {
        let mut out = a.clone();
        for mut row in out.rows_mut() {
            for (v, x) in row.iter_mut().zip(&self.xs) {
                *v *= x;
            }
        }
        out
    }

    /// `A g = sin(theta) d_theta [d_X]^{-1} g + X cos(theta) g`.
    fn op_a(&self, g: &Array2<f64>) -> Array2<f64> {
        let rotated = self.scale_rows(&d_first(&self.inv.apply(g), self.dtheta), f64::sin);
        rotated + self.scale_rows(&self.times_x(g), f64::cos)
    }

    /// `B g = (sin(theta)/2) d_X g`.
    fn op_b(&self, g: &Array2<f64>) -> Array2<f64> {
        self.scale_rows(&d_last(g, self.dx), |t| 0.5 * t.sin())
    }

    /// `cos^2 d_theta w - (1/2) sin(2 theta) (1 + X d_X) w`.
    fn kinetic(&self, w: &Array2<f64>) -> Array2<f64> {
        let a = self.scale_rows(&d_first(w, self.dtheta), |t| t.cos().powi(2));
        let b = w + &self.times_x(&d_last(w, self.dx));
        a - self.scale_rows(&b, |t| 0.5 * (2.0 * t).sin())
    }
}

#[derive(Clone, Copy)]
enum PotentialForm {
    /// `2 Im U{A + iB}` expanded symmetrically: `omega^2 (AB + BA)`.
    Quantum,
    /// `dU/dq{q -> A} sin(theta) d_X`: `omega^2 A (sin(theta) d_X)`.
    Classical,
}

fn optical_residual(traj: &TomogramTrajectory, h: &QuadraticHamiltonian, form: PotentialForm) -> Result<f64> {
    h.validate()?;
    let dt = check_optical(traj)?;
    let stencil = PhaseStencil::new(&traj.frames[0]);
    let k2 = h.stiffness();
    let n = traj.frames[0].thetas.len();
    let nx = traj.frames[0].x.n;
    let parts: Vec<(f64, f64)> = (1..traj.frames.len() - 1)
        .into_par_iter()
        .map(|k| {
            let w = stencil.extend(&traj.frames[k]);
            let mut rhs = stencil.kinetic(&w);
            if k2 != 0.0 {
                let pot = match form {
                    PotentialForm::Quantum => {
                        let ab = stencil.op_a(&stencil.op_b(&w));
                        let ba = stencil.op_b(&stencil.op_a(&w));
                        ab + ba
                    }
                    PotentialForm::Classical => {
                        let sdx = stencil.scale_rows(&d_last(&w, stencil.dx), f64::sin);
                        stencil.op_a(&sdx)
                    }
                };
                rhs = rhs + pot * k2;
            }
            let (prev, next) = (&traj.frames[k - 1].values, &traj.frames[k + 1].values);
            let mut num = 0.0;
            let mut den = 0.0;
            for j in 0..n {
                for i in X_MARGIN..nx - X_MARGIN {
                    let dwdt = (next[[j, i]] - prev[[j, i]]) / (2.0 * dt);
                    let r = dwdt - rhs[[j + GHOSTS, i]];
                    num += r * r;
                    den += w[[j + GHOSTS, i]].powi(2);
                }
            }
            (num, den)
        })
        .collect();
    let (num, den) = parts.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    Ok((num / den).sqrt())
}

/// Relative L2 residual of the quantum tomographic evolution equation,
/// with the potential term in its symmetrized quadratic expansion.
pub fn quantum_residual(traj: &TomogramTrajectory, h: &QuadraticHamiltonian) -> Result<f64> {
    optical_residual(traj, h, PotentialForm::Quantum)
}

/// Relative L2 residual of the classical Liouville equation for optical
/// tomograms.
pub fn classical_residual_optical(traj: &TomogramTrajectory, h: &QuadraticHamiltonian) -> Result<f64> {
    optical_residual(traj, h, PotentialForm::Classical)
}

/// Symplectic tomogram frames `M(X, mu, nu, t)` on a `(mu, nu)` grid,
/// `frames[k][[a, b, i]] = M(x_i, mu_a, nu_b, t_k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymplecticTrajectory {
    pub times: Vec<f64>,
    pub mu: UniformGrid,
    pub nu: UniformGrid,
    pub x: UniformGrid,
    pub frames: Vec<Array3<f64>>,
}

/// Default `(mu, nu)` axes: `[-1.5, 1.5]` with step 0.05.
pub fn default_direction_axes() -> (UniformGrid, UniformGrid) {
    let axis = UniformGrid { min: -1.5, max: 1.5, n: 61 };
    (axis, axis)
}

/// Samples each optical frame through [`symplectic_view`]. Only directions
/// in a band around [`ANNULUS`] (wide enough for the difference stencil)
/// are filled; the rest stay zero and are never read.
pub fn symplectic_trajectory(
    traj: &TomogramTrajectory,
    mu: &UniformGrid,
    nu: &UniformGrid,
) -> Result<SymplecticTrajectory> {
    let x = traj.frames[0].x;
    let xs = x.points();
    let pad = 2.0 * mu.step().max(nu.step());
    let (lo, hi) = (ANNULUS.0 - pad, ANNULUS.1 + pad);
    let frames = traj
        .frames
        .iter()
        .map(|frame| {
            let slabs: Vec<Result<Array2<f64>>> = (0..mu.n)
                .into_par_iter()
                .map(|a| {
                    let m = mu.at(a);
                    let mut slab = Array2::zeros((nu.n, x.n));
                    for b in 0..nu.n {
                        let v = nu.at(b);
                        let r = m.hypot(v);
                        if r < lo || r > hi {
                            continue;
                        }
                        for (i, &xi) in xs.iter().enumerate() {
                            slab[[b, i]] = symplectic_view(frame, xi, m, v)?;
                        }
                    }
                    Ok(slab)
                })
                .collect();
            let mut out = Array3::zeros((mu.n, nu.n, x.n));
            for (a, slab) in slabs.into_iter().enumerate() {
                out.index_axis_mut(ndarray::Axis(0), a).assign(&slab?);
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SymplecticTrajectory { times: traj.times.clone(), mu: *mu, nu: *nu, x, frames })
}

/// Relative L2 residual of the classical symplectic Liouville equation
/// `d_t M = mu d_nu M - omega^2 [d_X]^{-1} d_mu (nu d_X M)` over the
/// annulus `0.75 <= |(mu, nu)| <= 1.25`.
pub fn classical_residual_symplectic(traj: &SymplecticTrajectory, h: &QuadraticHamiltonian) -> Result<f64> {
    h.validate()?;
    let dt = uniform_step(&traj.times)?;
    check_axis(&traj.x)?;
    let (dmu, dnu) = (traj.mu.step(), traj.nu.step());
    if dmu.max(dnu) > 0.1 {
        return Err(Error::GridTooCoarse(format!("direction step {} exceeds 0.1", dmu.max(dnu))));
    }
    let k2 = h.stiffness();
    let nx = traj.x.n;
    let dx = traj.x.step();
    let inv = InverseDerivative::new(nx, dx);
    let (n_mu, n_nu) = (traj.mu.n, traj.nu.n);
    let inside = |a: usize, b: usize| {
        let r = traj.mu.at(a).hypot(traj.nu.at(b));
        a > 1 && b > 1 && a + 2 < n_mu && b + 2 < n_nu && (ANNULUS.0..=ANNULUS.1).contains(&r)
    };
    let parts: Vec<(f64, f64)> = (1..traj.frames.len() - 1)
        .map(|k| {
            let m = &traj.frames[k];
            let (prev, next) = (&traj.frames[k - 1], &traj.frames[k + 1]);
            let rows: Vec<(f64, f64)> = (0..n_mu)
                .into_par_iter()
                .map(|a| {
                    let mut num = 0.0;
                    let mut den = 0.0;
                    let x_slope = |aa: usize, b: usize| -> Vec<f64> {
                        let nu_b = traj.nu.at(b);
                        let mut d = vec![0.0; nx];
                        for i in 1..nx - 1 {
                            d[i] = nu_b * (m[[aa, b, i + 1]] - m[[aa, b, i - 1]]) / (2.0 * dx);
                        }
                        d
                    };
                    for b in 0..n_nu {
                        if !inside(a, b) {
                            continue;
                        }
                        let mu_a = traj.mu.at(a);
                        let mut potential = vec![0.0; nx];
                        if k2 != 0.0 {
                            let (up, down) = (x_slope(a + 1, b), x_slope(a - 1, b));
                            let d_mu: Vec<f64> = up.iter().zip(&down).map(|(u, d)| (u - d) / (2.0 * dmu)).collect();
                            inv.apply_row(&d_mu, &mut potential);
                        }
                        for i in X_MARGIN..nx - X_MARGIN {
                            let dmdt = (next[[a, b, i]] - prev[[a, b, i]]) / (2.0 * dt);
                            let advect = mu_a * (m[[a, b + 1, i]] - m[[a, b - 1, i]]) / (2.0 * dnu);
                            let r = dmdt - advect + k2 * potential[i];
                            num += r * r;
                            den += m[[a, b, i]].powi(2);
                        }
                    }
                    (num, den)
                })
                .collect();
            rows.iter().fold((0.0, 0.0), |(p, q), (x, y)| (p + x, q + y))
        })
        .collect();
    let (num, den) = parts.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    if den == 0.0 {
        return Err(Error::GridTooCoarse("no direction samples inside the annulus".into()));
    }
    Ok((num / den).sqrt())
}

/// Observed convergence order `log2(coarse / fine)`.
pub fn convergence_order(coarse: f64, fine: f64) -> f64 {
    (coarse / fine).log2()
}

/// Residual of the 2x-refined problem: every spatial grid is refined and
/// the time step halved.
pub fn refined_setup(grid: &TomogramGrid, t0: f64, dt: f64) -> (TomogramGrid, [f64; 3]) {
    (grid.refined(), stencil_times(t0, dt / 2.0))
}
