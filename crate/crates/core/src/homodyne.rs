//! Simulated homodyne detection: quadrature samples drawn from a tomogram,
//! histogram estimates of the tomogram, and inequality checks whose
//! tolerances follow the sampling error.

use std::f64::consts::{E, FRAC_PI_2, PI};
use std::io::{BufRead, Write};

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::UniformGrid;
use crate::inequalities::{four_probs, CutPoints, FourProbabilities};
use crate::statekit::StateSpec;
use crate::statistics::InequalityReport;
use crate::tomography::{fold_angle, OpticalTomogram};

pub const MIN_SAMPLES: usize = 100;
/// Tolerances are this many propagated standard errors.
pub const SIGMAS: f64 = 3.0;

/// Where a dataset came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    State(StateSpec),
    Tomogram,
    External,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseCount {
    pub theta: f64,
    pub count: usize,
}

/// JSON sidecar written next to the dataset CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub seed: Option<u64>,
    pub source: DataSource,
    pub counts: Vec<PhaseCount>,
}

/// Quadrature samples `(theta, X)`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureDataset {
    pub records: Vec<(f64, f64)>,
    pub seed: Option<u64>,
    pub source: DataSource,
}

impl QuadratureDataset {
    pub fn new(records: Vec<(f64, f64)>, seed: Option<u64>, source: DataSource) -> Result<Self> {
        for &(t, x) in &records {
            if !(0.0..PI).contains(&t) {
                return Err(Error::InvalidParameter(format!("theta = {t} outside [0, pi)")));
            }
            if !x.is_finite() {
                return Err(Error::InvalidParameter("non-finite quadrature sample".into()));
            }
        }
        Ok(Self { records, seed, source })
    }

    /// Distinct phases in ascending order.
    pub fn thetas(&self) -> Vec<f64> {
        let mut t: Vec<f64> = self.records.iter().map(|r| r.0).collect();
        t.sort_by(f64::total_cmp);
        t.dedup();
        t
    }

    pub fn samples_at(&self, theta: f64) -> Vec<f64> {
        self.records.iter().filter(|r| r.0 == theta).map(|r| r.1).collect()
    }

    pub fn meta(&self) -> DatasetMeta {
        let counts = self
            .thetas()
            .into_iter()
            .map(|theta| PhaseCount { theta, count: self.records.iter().filter(|r| r.0 == theta).count() })
            .collect();
        DatasetMeta { seed: self.seed, source: self.source.clone(), counts }
    }

    /// Every sample clamped into `[lo, hi]`. Squeezes the variance far below
    /// any quantum state; a negative control for the checkers.
    pub fn clipped(&self, lo: f64, hi: f64) -> Self {
        let records = self.records.iter().map(|&(t, x)| (t, x.clamp(lo, hi))).collect();
        Self { records, seed: self.seed, source: DataSource::External }
    }

    /// Rows `theta,X`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "theta,X")?;
        for (t, x) in &self.records {
            writeln!(out, "{t},{x}")?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(input: R, meta: Option<DatasetMeta>) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(input);
        if rdr.headers()?.len() != 2 {
            return Err(Error::Parse("dataset needs columns theta,X".into()));
        }
        let mut records = Vec::new();
        for rec in rdr.deserialize() {
            let row: (f64, f64) = rec?;
            records.push(row);
        }
        let (seed, source) = meta.map_or((None, DataSource::External), |m| (m.seed, m.source));
        Self::new(records, seed, source)
    }
}

/// Cell masses of a tomogram column, normalized to 1.
fn cell_cdf(column: &[f64]) -> Vec<f64> {
    let total: f64 = column.iter().sum();
    let mut acc = 0.0;
    column
        .iter()
        .map(|w| {
            acc += w / total;
            acc
        })
        .collect()
}

/// Draws `n_per_theta` samples at each phase by inverting the piecewise
/// linear CDF of the tomogram cells. The generator is ChaCha20 seeded from
/// `seed`, one stream per phase index, so output does not depend on thread
/// scheduling.
pub fn sample_quadratures(
    opt: &OpticalTomogram,
    thetas: &[f64],
    n_per_theta: usize,
    seed: u64,
) -> Result<QuadratureDataset> {
    if n_per_theta == 0 {
        return Err(Error::InvalidParameter("need at least one sample per phase".into()));
    }
    let h = opt.dx();
    let x = opt.x;
    let blocks: Vec<Result<Vec<(f64, f64)>>> = thetas
        .par_iter()
        .enumerate()
        .map(|(k, &theta)| {
            if !(0.0..PI).contains(&theta) {
                return Err(Error::InvalidParameter(format!("theta = {theta} outside [0, pi)")));
            }
            let column = opt.column(theta)?;
            if column.iter().sum::<f64>() <= 0.0 {
                return Err(Error::NormalizationError(0.0));
            }
            let cdf = cell_cdf(&column);
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            Ok((0..n_per_theta)
                .map(|_| {
                    let u: f64 = rng.random();
                    let i = cdf.partition_point(|&c| c <= u).min(cdf.len() - 1);
                    let below = if i == 0 { 0.0 } else { cdf[i - 1] };
                    let frac = if cdf[i] > below { (u - below) / (cdf[i] - below) } else { 0.5 };
                    (theta, x.at(i) - 0.5 * h + frac * h)
                })
                .collect())
        })
        .collect();
    let mut records = Vec::with_capacity(thetas.len() * n_per_theta);
    for block in blocks {
        records.extend(block?);
    }
    QuadratureDataset::new(records, Some(seed), DataSource::Tomogram)
}

/// Histogram tomogram with per-cell multinomial standard errors.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatedTomogram {
    pub tomogram: OpticalTomogram,
    pub std_err: Array2<f64>,
    pub cell_counts: Array2<u64>,
    pub counts: Vec<usize>,
}

/// Bins the samples of each phase on the cells of `x_grid`; samples beyond
/// the axis land in the end cells.
pub fn estimate_tomogram(data: &QuadratureDataset, x_grid: &UniformGrid) -> Result<EstimatedTomogram> {
    let thetas = data.thetas();
    if thetas.is_empty() {
        return Err(Error::InsufficientSamples { theta: 0.0, count: 0 });
    }
    let h = x_grid.step();
    let nx = x_grid.n;
    let mut cell_counts = Array2::<u64>::zeros((thetas.len(), nx));
    for &(t, x) in &data.records {
        let j = thetas.partition_point(|&v| v < t);
        let i = (x_grid.position(x).round().max(0.0) as usize).min(nx - 1);
        cell_counts[[j, i]] += 1;
    }
    let mut values = Array2::zeros((thetas.len(), nx));
    let mut std_err = Array2::zeros((thetas.len(), nx));
    let mut counts = Vec::with_capacity(thetas.len());
    for (j, &theta) in thetas.iter().enumerate() {
        let n: u64 = cell_counts.row(j).sum();
        if (n as usize) < MIN_SAMPLES {
            return Err(Error::InsufficientSamples { theta, count: n as usize });
        }
        let nf = n as f64;
        for i in 0..nx {
            let p = cell_counts[[j, i]] as f64 / nf;
            values[[j, i]] = p / h;
            std_err[[j, i]] = (p * (1.0 - p) / nf).sqrt() / h;
        }
        counts.push(n as usize);
    }
    let tomogram = OpticalTomogram::new(*x_grid, thetas, values)?;
    Ok(EstimatedTomogram { tomogram, std_err, cell_counts, counts })
}

impl EstimatedTomogram {
    fn phase(&self, theta: f64) -> Result<(usize, bool)> {
        let (folded, reflect) = fold_angle(theta);
        self.tomogram.phase_index(folded).map(|j| (j, reflect)).ok_or(Error::MissingPhase(theta))
    }

    /// Cell probabilities and sample size at a stored phase.
    fn cells(&self, j: usize) -> (Vec<f64>, f64) {
        let n = self.counts[j] as f64;
        (self.cell_counts.row(j).iter().map(|&c| c as f64 / n).collect(), n)
    }
}

/// `sqrt(Var_hat(sum_i p_i g_i) / n)` for multinomial cell frequencies.
fn delta_se(p: &[f64], g: &[f64], n: f64) -> f64 {
    let mean: f64 = p.iter().zip(g).map(|(p, g)| p * g).sum();
    let second: f64 = p.iter().zip(g).map(|(p, g)| p * g * g).sum();
    ((second - mean * mean).max(0.0) / n).sqrt()
}

fn log_or_zero(x: f64) -> f64 {
    if x > 0.0 {
        x.ln() + 1.0
    } else {
        0.0
    }
}

/// Gradients of both sides of the four-cut inequality.
fn four_cut_gradients(p: &FourProbabilities) -> ([f64; 4], [f64; 4]) {
    let q = p.p;
    let lhs = q.map(|v| -log_or_zero(v));
    let (r12, r34, c13, c24) =
        (log_or_zero(q[0] + q[1]), log_or_zero(q[2] + q[3]), log_or_zero(q[0] + q[2]), log_or_zero(q[1] + q[3]));
    let rhs = [-(r12 + c13), -(r12 + c24), -(r34 + c13), -(r34 + c24)];
    (lhs, rhs)
}

fn sample_variance_se(xs: &[f64], p: &[f64], n: f64) -> (f64, f64) {
    let mean: f64 = xs.iter().zip(p).map(|(x, p)| x * p).sum();
    let var: f64 = xs.iter().zip(p).map(|(x, p)| (x - mean).powi(2) * p).sum();
    let m4: f64 = xs.iter().zip(p).map(|(x, p)| (x - mean).powi(4) * p).sum();
    (var, ((m4 - var * var).max(0.0) / n).sqrt())
}

/// Subadditivity, uncertainty and entropic checks on a histogram estimate,
/// each with tolerance `3 (se_lhs + se_rhs)` from the delta method.
pub fn checked_inequalities(est: &EstimatedTomogram, cuts: &CutPoints, theta: f64) -> Result<Vec<InequalityReport>> {
    let (j_theta, _) = est.phase(theta)?;
    let (j_perp, _) = est.phase(theta + FRAC_PI_2)?;
    let opt = &est.tomogram;
    let h = opt.dx();
    let mut reports = Vec::with_capacity(3);

    let p = four_probs(opt, theta, cuts)?;
    let (g_lhs, g_rhs) = four_cut_gradients(&p);
    let n_theta = est.counts[j_theta] as f64;
    let se = delta_se(&p.p, &g_lhs, n_theta) + delta_se(&p.p, &g_rhs, n_theta);
    let r = crate::inequalities::subadditivity_check_with(&p, SIGMAS * se);
    reports.push(r);

    let (j0, _) = est.phase(0.0)?;
    let (j90, _) = est.phase(FRAC_PI_2)?;
    let xs = opt.x.points();
    let (p0, n0) = est.cells(j0);
    let (p90, n90) = est.cells(j90);
    let (v0, s0) = sample_variance_se(&xs, &p0, n0);
    let (v90, s90) = sample_variance_se(&xs, &p90, n90);
    let lhs = v0 * v90;
    let se = (v90 * s0).hypot(v0 * s90);
    reports.push(InequalityReport::at_least("heisenberg", lhs, 0.25, SIGMAS * se));

    // plug-in entropy with the Miller-Madow bias correction
    let mut lhs = (PI * E).ln();
    let mut var = 0.0;
    for j in [j_theta, j_perp] {
        let (cells, n) = est.cells(j);
        let g: Vec<f64> = cells.iter().map(|&q| if q > 0.0 { (q / h).ln() + 1.0 } else { 0.0 }).collect();
        let occupied = cells.iter().filter(|&&q| q > 0.0).count() as f64;
        let neg_entropy: f64 = cells.iter().filter(|&&q| q > 0.0).map(|&q| q * (q / h).ln()).sum();
        lhs += neg_entropy - (occupied - 1.0) / (2.0 * n);
        var += delta_se(&cells, &g, n).powi(2);
    }
    reports.push(InequalityReport::at_most("entropic", lhs, 0.0, SIGMAS * var.sqrt()));
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phasespace::{wigner_from_rho, GridSpec};
    use crate::statekit::build_state;
    use crate::tomography::{optical_tomogram, uniform_thetas, TomogramGrid};

    fn tomogram(spec: &StateSpec, n_theta: usize) -> OpticalTomogram {
        let rho = build_state(spec).unwrap();
        let w = wigner_from_rho(&rho, &GridSpec::adequate_for(&rho)).unwrap();
        let tg = TomogramGrid::adequate_for(&rho);
        optical_tomogram(&w, &uniform_thetas(n_theta), &tg.x).unwrap()
    }

    fn sup_error(est: &EstimatedTomogram, exact: &OpticalTomogram) -> f64 {
        (&est.tomogram.values - &exact.values).iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    #[test]
    fn vacuum_sample_moments() {
        let opt = tomogram(&StateSpec::fock(0), 16);
        let n = 100_000;
        let data = sample_quadratures(&opt, &[0.0], n, 7).unwrap();
        let xs = data.samples_at(0.0);
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
        assert!(mean.abs() < 3.0 * (0.5 / n as f64).sqrt(), "{mean}");
        // Var of the sample variance for N(0, 1/2): 2 sigma^4 / n
        assert!((var - 0.5).abs() < 3.0 * (2.0 * 0.25 / n as f64).sqrt(), "{var}");
    }

    #[test]
    fn sampling_is_deterministic_per_seed() {
        let opt = tomogram(&StateSpec::coherent(1.0, 0.5), 8);
        let a = sample_quadratures(&opt, &opt.thetas, 500, 99).unwrap();
        let b = sample_quadratures(&opt, &opt.thetas, 500, 99).unwrap();
        let c = sample_quadratures(&opt, &opt.thetas, 500, 100).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        let mut buf_a = Vec::new();
        let mut buf_b = Vec::new();
        a.write_csv(&mut buf_a).unwrap();
        b.write_csv(&mut buf_b).unwrap();
        assert_eq!(buf_a, buf_b);
    }

    #[test]
    fn estimate_examples() {
        let opt = tomogram(&StateSpec::fock(0), 16);
        let big = sample_quadratures(&opt, &[0.0], 1_000_000, 3).unwrap();
        let est = estimate_tomogram(&big, &opt.x).unwrap();
        let exact = OpticalTomogram::new(opt.x, vec![0.0], opt.values.slice(ndarray::s![0..1, ..]).to_owned()).unwrap();
        assert!(sup_error(&est, &exact) < 0.01, "{}", sup_error(&est, &exact));
        assert!((est.tomogram.normalization(0) - 1.0).abs() < 1e-12);

        let small = sample_quadratures(&opt, &[0.0], 100, 3).unwrap();
        let est = estimate_tomogram(&small, &opt.x).unwrap();
        assert!((est.tomogram.normalization(0) - 1.0).abs() < 1e-12);
        let worst_rel = est
            .tomogram
            .row(0)
            .iter()
            .zip(est.std_err.row(0))
            .filter(|(w, _)| **w > 0.0)
            .map(|(w, s)| s / w)
            .fold(0.0f64, f64::max);
        assert!(worst_rel > 0.1);
        let p = est.cell_counts[[0, 128]] as f64 / 100.0;
        assert!((est.std_err[[0, 128]] - (p * (1.0 - p) / 100.0).sqrt() / opt.dx()).abs() < 1e-15);

        let tiny = sample_quadratures(&opt, &[0.0], 99, 3).unwrap();
        assert!(matches!(estimate_tomogram(&tiny, &opt.x), Err(Error::InsufficientSamples { count: 99, .. })));
    }

    #[test]
    fn estimator_error_shrinks_with_sample_size() {
        let opt = tomogram(&StateSpec::fock(1), 16);
        let exact = OpticalTomogram::new(opt.x, vec![0.0], opt.values.slice(ndarray::s![0..1, ..]).to_owned()).unwrap();
        let errors: Vec<f64> = [100, 10_000, 1_000_000]
            .iter()
            .map(|&n| {
                sup_error(&estimate_tomogram(&sample_quadratures(&opt, &[0.0], n, 5).unwrap(), &opt.x).unwrap(), &exact)
            })
            .collect();
        assert!(errors[0] > errors[1] && errors[1] > errors[2], "{errors:?}");
    }

    #[test]
    fn vacuum_checks_pass_with_random_cuts() {
        let opt = tomogram(&StateSpec::fock(0), 16);
        let data = sample_quadratures(&opt, &opt.thetas, 100_000, 21).unwrap();
        let est = estimate_tomogram(&data, &opt.x).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(22);
        for _ in 0..20 {
            let mut c: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
            c.sort_by(f64::total_cmp);
            let cuts = CutPoints::new(c[0], c[1], c[2]).unwrap();
            let theta = opt.thetas[rng.random_range(0..16)];
            for r in checked_inequalities(&est, &cuts, theta).unwrap() {
                assert!(r.satisfied, "{r:?}");
            }
        }
    }

    #[test]
    fn fock_one_heisenberg_within_three_sigma() {
        let opt = tomogram(&StateSpec::fock(1), 16);
        let data = sample_quadratures(&opt, &opt.thetas, 100_000, 31).unwrap();
        let est = estimate_tomogram(&data, &opt.x).unwrap();
        let cuts = CutPoints::new(-1.0, 0.0, 1.0).unwrap();
        let reports = checked_inequalities(&est, &cuts, 0.0).unwrap();
        let heis = reports.iter().find(|r| r.name == "heisenberg").unwrap();
        assert!(heis.satisfied);
        assert!((heis.lhs - 2.25).abs() < heis.tolerance, "{} +- {}", heis.lhs, heis.tolerance / 3.0);
    }

    #[test]
    fn clipped_dataset_fails_heisenberg() {
        let opt = tomogram(&StateSpec::fock(0), 16);
        let data = sample_quadratures(&opt, &opt.thetas, 100_000, 41).unwrap().clipped(-0.1, 0.1);
        let est = estimate_tomogram(&data, &opt.x).unwrap();
        let reports = checked_inequalities(&est, &CutPoints::new(-0.1, 0.0, 0.1).unwrap(), 0.0).unwrap();
        let heis = reports.iter().find(|r| r.name == "heisenberg").unwrap();
        assert!(!heis.satisfied && heis.lhs < 0.01);
    }

    #[test]
    fn missing_perpendicular_phase() {
        let opt = tomogram(&StateSpec::fock(0), 16);
        let data = sample_quadratures(&opt, &[0.0, 0.3], 200, 1).unwrap();
        let est = estimate_tomogram(&data, &opt.x).unwrap();
        let cuts = CutPoints::new(-1.0, 0.0, 1.0).unwrap();
        assert!(matches!(checked_inequalities(&est, &cuts, 0.3), Err(Error::MissingPhase(_))));
    }

    #[test]
    fn dataset_csv_and_sidecar_round_trip() {
        let opt = tomogram(&StateSpec::fock(0), 4);
        let data = sample_quadratures(&opt, &opt.thetas, 150, 8).unwrap();
        let mut buf = Vec::new();
        data.write_csv(&mut buf).unwrap();
        let meta: DatasetMeta = serde_json::from_str(&serde_json::to_string(&data.meta()).unwrap()).unwrap();
        assert_eq!(meta.counts.len(), 4);
        assert!(meta.counts.iter().all(|c| c.count == 150));
        let back = QuadratureDataset::read_csv(buf.as_slice(), Some(meta)).unwrap();
        assert_eq!(back, data);
        assert!(QuadratureDataset::read_csv("theta,X\n4.0,0.1\n".as_bytes(), None).is_err());
        let src = serde_json::to_string(&DataSource::State(StateSpec::fock(2))).unwrap();
        assert_eq!(src, r#"{"state":{"kind":"fock","n":2}}"#);
    }
}
