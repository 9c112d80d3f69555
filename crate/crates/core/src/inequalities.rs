//! Four-cut entropic inequalities.
//!
//! Three ordered cuts split the quadrature line into four intervals. Reading
//! the interval masses as a 2x2 table `[[p1, p2], [p3, p4]]`, the joint
//! Shannon entropy is bounded by the sum of the row and column entropies.
//! The same form is evaluated on strip integrals of `W^2`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::UniformGrid;
use crate::phasespace::WignerGrid;
use crate::statistics::InequalityReport;
use crate::tomography::OpticalTomogram;

pub const SUBADDITIVITY_TOLERANCE: f64 = 1e-10;
const NORMALIZATION_FLAG: f64 = 1e-3;
const OPEN_BOUNDARY: f64 = 1e-8;

/// Ordered cuts `x1 <= x2 <= x3`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutPoints {
    x1: f64,
    x2: f64,
    x3: f64,
}

impl CutPoints {
    pub fn new(x1: f64, x2: f64, x3: f64) -> Result<Self> {
        if !(x1.is_finite() && x2.is_finite() && x3.is_finite()) {
            return Err(Error::InvalidParameter("cut points must be finite".into()));
        }
        if !(x1 <= x2 && x2 <= x3) {
            return Err(Error::InvalidParameter(format!("cuts must satisfy x1 <= x2 <= x3, got ({x1}, {x2}, {x3})")));
        }
        Ok(Self { x1, x2, x3 })
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.x1, self.x2, self.x3]
    }
}

impl std::str::FromStr for CutPoints {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<f64> = s
            .split(',')
            .map(|t| t.trim().parse::<f64>().map_err(|e| Error::Parse(format!("cut '{t}': {e}"))))
            .collect::<Result<_>>()?;
        match parts.as_slice() {
            [a, b, c] => Self::new(*a, *b, *c),
            _ => Err(Error::Parse(format!("expected three cuts x1,x2,x3, got '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FourProbabilities {
    pub p: [f64; 4],
}

impl FourProbabilities {
    pub fn new(p: [f64; 4]) -> Result<Self> {
        if p.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidParameter(format!("probabilities must be finite and >= 0, got {p:?}")));
        }
        Ok(Self { p })
    }

    pub fn sum(&self) -> f64 {
        self.p.iter().sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FourFunctionals {
    pub pi: [f64; 4],
}

impl FourFunctionals {
    pub fn sum(&self) -> f64 {
        self.pi.iter().sum()
    }
}

/// Masses of the four intervals for cell values `mass[i]` on the cells
/// `[x_i - h/2, x_i + h/2]`. A cut inside a cell takes the linear fraction
/// of that cell.
fn interval_masses(axis: &UniformGrid, mass: &[f64], cuts: &CutPoints) -> [f64; 4] {
    let h = axis.step();
    let below = |c: f64| -> f64 {
        let mut acc = 0.0;
        for (i, m) in mass.iter().enumerate() {
            let lo = axis.at(i) - 0.5 * h;
            let frac = ((c - lo) / h).clamp(0.0, 1.0);
            if frac == 0.0 {
                break;
            }
            acc += frac * m;
        }
        acc
    };
    let total: f64 = mass.iter().sum();
    let [c1, c2, c3] = cuts.as_array().map(below);
    [c1, c2 - c1, c3 - c2, total - c3].map(|v| v.max(0.0))
}

/// `p1..p4` from the tomogram at `theta`, normalized by the column's total mass.
pub fn four_probs(opt: &OpticalTomogram, theta: f64, cuts: &CutPoints) -> Result<FourProbabilities> {
    let column = opt.column(theta)?;
    let masses = interval_masses(&opt.x, &column, cuts);
    let total: f64 = masses.iter().sum();
    if total <= 0.0 {
        return Err(Error::NormalizationError(total));
    }
    FourProbabilities::new(masses.map(|m| m / total))
}

fn h(x: f64) -> f64 {
    if x > 0.0 {
        -x * x.ln()
    } else {
        0.0
    }
}

fn table_sides(p: &[f64; 4]) -> (f64, f64) {
    let lhs = p.iter().map(|&v| h(v)).sum();
    let rhs = h(p[0] + p[1]) + h(p[2] + p[3]) + h(p[0] + p[2]) + h(p[1] + p[3]);
    (lhs, rhs)
}

pub fn subadditivity_check(p: &FourProbabilities) -> InequalityReport {
    subadditivity_check_with(p, SUBADDITIVITY_TOLERANCE)
}

pub fn subadditivity_check_with(p: &FourProbabilities, tolerance: f64) -> InequalityReport {
    let (lhs, rhs) = table_sides(&p.p);
    InequalityReport::at_most("subadditivity", lhs, rhs, tolerance)
}

/// `Pi_i = \int\int_{strip i} W^2 dq dp / (2 pi)` over strips in `q`.
pub fn four_functionals(w: &WignerGrid, cuts: &CutPoints) -> Result<FourFunctionals> {
    let axis = w.grid.q_axis();
    let half = 0.5 * axis.step();
    let outside = cuts.as_array().iter().any(|&c| c < axis.min - half || c > axis.max + half);
    if outside {
        let edge = w.boundary_max();
        if edge > OPEN_BOUNDARY {
            return Err(Error::GridTooSmall { boundary: edge, limit: OPEN_BOUNDARY });
        }
    }
    let cell = w.grid.dq() * w.grid.dp() / (2.0 * std::f64::consts::PI);
    let rows: Vec<f64> = w.values.rows().into_iter().map(|r| r.iter().map(|v| v * v).sum::<f64>() * cell).collect();
    Ok(FourFunctionals { pi: interval_masses(&axis, &rows, cuts) })
}

/// Subadditivity form on `Pi_1..Pi_4`. Flags sums away from 1 (mixed
/// states) in the report note instead of renormalizing.
pub fn wigner_subadditivity_check(pi: &FourFunctionals) -> InequalityReport {
    wigner_subadditivity_check_with(pi, SUBADDITIVITY_TOLERANCE)
}

pub fn wigner_subadditivity_check_with(pi: &FourFunctionals, tolerance: f64) -> InequalityReport {
    let (lhs, rhs) = table_sides(&pi.pi);
    let report = InequalityReport::at_most("wigner_subadditivity", lhs, rhs, tolerance);
    let sum = pi.sum();
    if (sum - 1.0).abs() > NORMALIZATION_FLAG {
        log::warn!("four functionals sum to {sum}, not 1");
        report.with_note(format!("NotNormalized: sum of Pi = {sum}"))
    } else {
        report
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phasespace::{wigner_from_rho, GridSpec};
    use crate::statekit::{build_state, catalog, purity, StateSpec};
    use crate::tomography::{optical_tomogram, TomogramGrid};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{LN_2, PI};

    fn state_tomogram(spec: &StateSpec) -> OpticalTomogram {
        let rho = build_state(spec).unwrap();
        let w = wigner_from_rho(&rho, &GridSpec::adequate_for(&rho)).unwrap();
        let tg = TomogramGrid::adequate_for(&rho);
        optical_tomogram(&w, &tg.thetas(), &tg.x).unwrap()
    }

    fn cuts(a: f64, b: f64, c: f64) -> CutPoints {
        CutPoints::new(a, b, c).unwrap()
    }

    /// N(0, 1/2) CDF by Simpson's rule.
    fn vacuum_cdf(x: f64) -> f64 {
        let n = 20_000;
        let a = -12.0;
        let h = (x - a) / n as f64;
        let f = |t: f64| (-t * t).exp() / PI.sqrt();
        let mut s = f(a) + f(x);
        for i in 1..n {
            s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    }

    fn random_cuts(rng: &mut ChaCha8Rng) -> CutPoints {
        // sorted N(0, 4) triples
        let mut v: Vec<f64> = (0..3)
            .map(|_| {
                let u1: f64 = rng.random::<f64>().max(1e-300);
                let u2: f64 = rng.random();
                2.0 * (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
            })
            .collect();
        v.sort_by(f64::total_cmp);
        cuts(v[0], v[1], v[2])
    }

    #[test]
    fn cut_points_are_ordered() {
        assert!(CutPoints::new(1.0, 0.0, 2.0).is_err());
        assert!(CutPoints::new(0.0, 0.0, 0.0).is_ok());
        assert!(CutPoints::new(f64::NEG_INFINITY, 0.0, 1.0).is_err());
        assert_eq!("-1, 0,1".parse::<CutPoints>().unwrap(), cuts(-1.0, 0.0, 1.0));
        assert!("1,2".parse::<CutPoints>().is_err());
    }

    #[test]
    fn four_probs_examples() {
        let vac = state_tomogram(&StateSpec::fock(0));
        let p = four_probs(&vac, 0.0, &cuts(0.0, 0.0, 0.0)).unwrap();
        for (a, b) in p.p.iter().zip([0.5, 0.0, 0.0, 0.5]) {
            assert!((a - b).abs() < 1e-12);
        }
        // quartile of N(0, 1/2) by bisection on the Simpson CDF
        let (mut lo, mut hi) = (0.0, 2.0);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if vacuum_cdf(mid) < 0.75 {
                lo = mid
            } else {
                hi = mid
            }
        }
        let x0 = 0.5 * (lo + hi);
        let p = four_probs(&vac, 0.0, &cuts(-x0, 0.0, x0)).unwrap();
        for v in p.p {
            assert!((v - 0.25).abs() < 1e-3, "{:?}", p.p);
        }
        let p = four_probs(&vac, 0.0, &cuts(-30.0, 0.0, 1.0)).unwrap();
        assert!(p.p[0].abs() < 1e-10);
    }

    #[test]
    fn subadditivity_examples() {
        let r = subadditivity_check(&FourProbabilities::new([0.25; 4]).unwrap());
        assert!(r.satisfied && (r.lhs - 2.0 * LN_2).abs() < 1e-14 && r.margin.abs() < 1e-14);
        let r = subadditivity_check(&FourProbabilities::new([0.5, 0.0, 0.0, 0.5]).unwrap());
        assert!(r.satisfied && (r.lhs - LN_2).abs() < 1e-14 && (r.rhs - 2.0 * LN_2).abs() < 1e-14);
        assert!((r.margin - LN_2).abs() < 1e-14);
        let r = subadditivity_check(&FourProbabilities::new([0.7, 0.1, 0.1, 0.1]).unwrap());
        let lhs = -(0.7f64 * 0.7f64.ln() + 3.0 * 0.1 * 0.1f64.ln());
        let rhs = -2.0 * (0.8f64 * 0.8f64.ln() + 0.2 * 0.2f64.ln());
        assert!((r.lhs - 0.940448).abs() < 1e-6 && (r.rhs - 1.000805).abs() < 1e-6);
        assert!((r.lhs - lhs).abs() < 1e-14 && (r.rhs - rhs).abs() < 1e-14 && r.satisfied);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn simplex_points_satisfy_subadditivity(raw in prop::array::uniform4(0.0f64..1.0), zeros in prop::array::uniform4(any::<bool>())) {
            let mut v = raw;
            for (x, z) in v.iter_mut().zip(zeros) {
                if z { *x = 0.0; }
            }
            let s: f64 = v.iter().sum();
            prop_assume!(s > 1e-9);
            let p = FourProbabilities::new(v.map(|x| x / s)).unwrap();
            prop_assert!(subadditivity_check(&p).satisfied);
        }
    }

    #[test]
    fn catalog_tomograms_with_random_cuts() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for spec in catalog() {
            let opt = state_tomogram(&spec);
            let trials: Vec<CutPoints> = (0..100).map(|_| random_cuts(&mut rng)).collect();
            for &theta in &opt.thetas {
                for c in &trials {
                    let p = four_probs(&opt, theta, c).unwrap();
                    assert!((p.sum() - 1.0).abs() < 1e-8);
                    assert!(subadditivity_check(&p).satisfied, "{} {theta} {c:?}", spec.label());
                }
            }
        }
    }

    #[test]
    fn pure_catalog_wigner_functionals_with_random_cuts() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for spec in catalog().into_iter().filter(|s| s.is_pure()) {
            let rho = build_state(&spec).unwrap();
            let w = wigner_from_rho(&rho, &GridSpec::adequate_for(&rho)).unwrap();
            for _ in 0..100 {
                let pi = four_functionals(&w, &random_cuts(&mut rng)).unwrap();
                assert!((pi.sum() - 1.0).abs() < 1e-4, "{}", spec.label());
                let r = wigner_subadditivity_check(&pi);
                assert!(r.satisfied && r.note.is_none(), "{}", spec.label());
            }
        }
    }

    #[test]
    fn four_functionals_examples() {
        let grid = GridSpec::default();
        let vac = wigner_from_rho(&build_state(&StateSpec::fock(0)).unwrap(), &grid).unwrap();
        let pi = four_functionals(&vac, &cuts(0.0, 0.0, 0.0)).unwrap();
        for (a, b) in pi.pi.iter().zip([0.5, 0.0, 0.0, 0.5]) {
            assert!((a - b).abs() < 1e-4);
        }
        // midpoint-rule oracle: W_0^2 / 2pi = (2/pi) e^{-2(q^2+p^2)}, integrated over q < 0
        let h = 1e-3;
        let mut oracle = 0.0;
        let mut q: f64 = -10.0 + 0.5 * h;
        while q < 0.0 {
            oracle += (2.0 / PI) * (-2.0 * q * q).exp() * (PI / 2.0).sqrt() * h;
            q += h;
        }
        assert!((pi.pi[0] - oracle).abs() < 1e-6);

        let th = build_state(&StateSpec::thermal(0.5)).unwrap();
        let wt = wigner_from_rho(&th, &GridSpec::adequate_for(&th)).unwrap();
        let pi = four_functionals(&wt, &cuts(0.0, 0.0, 0.0)).unwrap();
        assert!((pi.pi[0] - 0.25).abs() < 1e-4 && (pi.pi[3] - 0.25).abs() < 1e-4);
        assert!((pi.sum() - purity(&th)).abs() < 1e-4);
        let r = wigner_subadditivity_check(&pi);
        assert!(r.note.as_deref().unwrap().starts_with("NotNormalized"));

        let one = wigner_from_rho(&build_state(&StateSpec::fock(1)).unwrap(), &grid).unwrap();
        let pi = four_functionals(&one, &cuts(-10.0, 0.0, 10.0)).unwrap();
        assert!(pi.pi[0].abs() < 1e-10 && pi.pi[3].abs() < 1e-10);
        assert!((pi.pi[1] - 0.5).abs() < 1e-4 && (pi.pi[2] - 0.5).abs() < 1e-4);
    }

    #[test]
    fn wigner_subadditivity_examples() {
        let r = wigner_subadditivity_check(&FourFunctionals { pi: [0.5, 0.0, 0.0, 0.5] });
        assert!(r.satisfied && (r.lhs - LN_2).abs() < 1e-14 && (r.rhs - 2.0 * LN_2).abs() < 1e-14);
        let r = wigner_subadditivity_check(&FourFunctionals { pi: [0.25; 4] });
        assert!(r.satisfied && r.margin.abs() < 1e-14);
        let rho = build_state(&StateSpec::cat(1.5, 0.0, 1)).unwrap();
        let w = wigner_from_rho(&rho, &GridSpec::adequate_for(&rho)).unwrap();
        let r = wigner_subadditivity_check(&four_functionals(&w, &cuts(-1.0, 0.0, 1.0)).unwrap());
        assert!(r.satisfied && r.note.is_none());
    }

    #[test]
    fn clipped_grid_rejects_outside_cuts() {
        let rho = build_state(&StateSpec::fock(0)).unwrap();
        let mut w = wigner_from_rho(&rho, &GridSpec::default()).unwrap();
        w.values[[0, 60]] = 1e-3;
        assert!(matches!(four_functionals(&w, &cuts(-9.0, 0.0, 1.0)), Err(Error::GridTooSmall { .. })));
        assert!(four_functionals(&w, &cuts(-1.0, 0.0, 1.0)).is_ok());
    }

    #[test]
    fn first_probability_is_monotone_in_first_cut() {
        let opt = state_tomogram(&StateSpec::cat(1.0, 0.0, 1));
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..100 {
            let c = random_cuts(&mut rng);
            let [x1, x2, x3] = c.as_array();
            let shift = rng.random_range(0.0..3.0);
            let moved = cuts(x1 - shift, x2, x3);
            let theta = opt.thetas[rng.random_range(0..opt.thetas.len())];
            let before = four_probs(&opt, theta, &c).unwrap().p[0];
            let after = four_probs(&opt, theta, &moved).unwrap().p[0];
            assert!(after <= before + 1e-15);
        }
    }

    #[test]
    fn product_table_gives_equality() {
        let opt = state_tomogram(&StateSpec::fock(0));
        let (x1, x3) = (-0.6, 0.6);
        let cross = |x2: f64| {
            let p = four_probs(&opt, 0.0, &cuts(x1, x2, x3)).unwrap().p;
            p[0] * p[3] - p[1] * p[2]
        };
        let (mut lo, mut hi) = (x1, 0.0);
        assert!(cross(lo) > 0.0 && cross(hi) < 0.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if cross(mid) > 0.0 {
                lo = mid
            } else {
                hi = mid
            }
        }
        let p = four_probs(&opt, 0.0, &cuts(x1, 0.5 * (lo + hi), x3)).unwrap();
        let r = subadditivity_check(&p);
        assert!(r.satisfied && r.margin < 1e-6, "{}", r.margin);
    }
}
