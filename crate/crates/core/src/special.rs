//! Special functions shared by the transforms: log-factorials, Hermite
//! functions, displacement-operator matrix elements and Gauss-Legendre rules.

use std::sync::OnceLock;

const LN_FACT_TABLE: usize = 1024;

fn ln_fact_table() -> &'static [f64] {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut t = vec![0.0; LN_FACT_TABLE];
        for k in 1..LN_FACT_TABLE {
            t[k] = t[k - 1] + (k as f64).ln();
        }
        t
    })
}

/// ln(n!).
pub fn ln_factorial(n: usize) -> f64 {
    let table = ln_fact_table();
    if n < LN_FACT_TABLE {
        return table[n];
    }
    let mut acc = table[LN_FACT_TABLE - 1];
    for k in LN_FACT_TABLE..=n {
        acc += (k as f64).ln();
    }
    acc
}

/// Normalized Hermite functions psi_0(x) .. psi_{count-1}(x), the
/// position-space wavefunctions of the number states.
pub fn hermite_functions(x: f64, count: usize) -> Vec<f64> {
    let mut psi = vec![0.0; count];
    if count == 0 {
        return psi;
    }
    psi[0] = std::f64::consts::PI.powf(-0.25) * (-0.5 * x * x).exp();
    if count > 1 {
        psi[1] = std::f64::consts::SQRT_2 * x * psi[0];
    }
    for n in 1..count.saturating_sub(1) {
        let nf = n as f64;
        psi[n + 1] = (2.0 / (nf + 1.0)).sqrt() * x * psi[n] - (nf / (nf + 1.0)).sqrt() * psi[n - 1];
    }
    psi
}

/// Radial part of the displacement-operator matrix elements.
///
/// Returns a row-major `dim x dim` table `r` with
/// `<m|D(beta)|n> = r[m*dim + n] * exp(i (m - n) arg(beta))`.
///
/// Uses the associated-Laguerre closed form. The recurrence runs on
/// `sqrt(n!/(n+k)!) L_n^(k)(|beta|^2)` with the prefactor
/// `|beta|^k exp(-|beta|^2/2)` folded into the seed through log-factorials,
/// so no intermediate factorial or power overflows at large `dim`.
pub fn displacement_radial(beta_abs: f64, dim: usize) -> Vec<f64> {
    let mut r = vec![0.0; dim * dim];
    displacement_radial_into(beta_abs, dim, &mut r);
    r
}

/// In-place variant of [`displacement_radial`]; `out` must hold `dim*dim`.
pub fn displacement_radial_into(beta_abs: f64, dim: usize, out: &mut [f64]) {
    debug_assert_eq!(out.len(), dim * dim);
    let x = beta_abs * beta_abs;
    let ln_b = beta_abs.ln();
    for k in 0..dim {
        let seed = if k == 0 {
            (-0.5 * x).exp()
        } else if beta_abs == 0.0 {
            0.0
        } else {
            (k as f64 * ln_b - 0.5 * x - 0.5 * ln_factorial(k)).exp()
        };
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        let kf = k as f64;
        let mut f_prev = 0.0;
        let mut f = seed;
        for n in 0..(dim - k) {
            let m = n + k;
            out[m * dim + n] = f;
            if k > 0 {
                out[n * dim + m] = sign * f;
            }
            let nf = n as f64;
            let next = if n == 0 {
                f * (1.0 + kf - x) / (kf + 1.0).sqrt()
            } else {
                ((2.0 * nf + 1.0 + kf - x) * f - (nf * (nf + kf)).sqrt() * f_prev)
                    / ((nf + 1.0) * (nf + kf + 1.0)).sqrt()
            };
            f_prev = f;
            f = next;
        }
    }
}

/// Gauss-Legendre nodes and weights on `[a, b]`.
pub fn gauss_legendre(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let half = 0.5 * (b - a);
    let mid = 0.5 * (b + a);
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let mut p0 = 1.0;
            let mut p1 = 0.0;
            for j in 0..n {
                let p2 = p1;
                p1 = p0;
                let jf = j as f64;
                p0 = ((2.0 * jf + 1.0) * z * p1 - jf * p2) / (jf + 1.0);
            }
            dp = nf * (z * p0 - p1) / (z * z - 1.0);
            let dz = p0 / dp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        nodes[i] = mid - half * z;
        nodes[n - 1 - i] = mid + half * z;
        weights[i] = half * w;
        weights[n - 1 - i] = half * w;
    }
    (nodes, weights)
}
