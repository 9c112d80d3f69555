//! State catalog: number-basis density matrices for Fock, coherent,
//! squeezed-vacuum, cat and thermal states, plus Gaussian classical
//! phase-space densities.
//!
//! Conventions: `q = (a + a^dag)/sqrt(2)`, `p = (a - a^dag)/(i sqrt(2))`, hbar = 1.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::io::{BufRead, Write};

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::ln_factorial;

/// Tail population beyond the cutoff that construction tolerates.
pub const MAX_TAIL: f64 = 1e-10;

const HERMITIAN_TOL: f64 = 1e-12;
const TRACE_TOL: f64 = 1e-8;
const PSD_TOL: f64 = -1e-10;

mod complex_pair {
    use num_complex::Complex64;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(z: &Complex64, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq([z.re, z.im])
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Complex64, D::Error> {
        let [re, im] = <[f64; 2]>::deserialize(d)?;
        Ok(Complex64::new(re, im))
    }
}

/// Which catalog state to build.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StateKind {
    Fock {
        n: usize,
    },
    Coherent {
        #[serde(with = "complex_pair")]
        alpha: Complex64,
    },
    SqueezedVacuum {
        r: f64,
        #[serde(default)]
        phi: f64,
    },
    Cat {
        #[serde(with = "complex_pair")]
        alpha: Complex64,
        parity: i8,
    },
    Thermal {
        nbar: f64,
    },
}

/// A catalog state plus its number-basis cutoff (the matrix dimension).
///
/// JSON form: `{"kind": "coherent", "alpha": [re, im], "cutoff": 16}`.
/// A missing cutoff means [`recommended_cutoff`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateSpec {
    #[serde(flatten)]
    pub kind: StateKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cutoff: Option<usize>,
}

impl StateSpec {
    pub fn new(kind: StateKind) -> Self {
        Self { kind, cutoff: None }
    }

    pub fn with_cutoff(kind: StateKind, cutoff: usize) -> Self {
        Self { kind, cutoff: Some(cutoff) }
    }

    pub fn fock(n: usize) -> Self {
        Self::new(StateKind::Fock { n })
    }

    pub fn coherent(re: f64, im: f64) -> Self {
        Self::new(StateKind::Coherent { alpha: Complex64::new(re, im) })
    }

    pub fn squeezed(r: f64, phi: f64) -> Self {
        Self::new(StateKind::SqueezedVacuum { r, phi })
    }

    pub fn cat(re: f64, im: f64, parity: i8) -> Self {
        Self::new(StateKind::Cat { alpha: Complex64::new(re, im), parity })
    }

    pub fn thermal(nbar: f64) -> Self {
        Self::new(StateKind::Thermal { nbar })
    }

    pub fn is_pure(&self) -> bool {
        !matches!(self.kind, StateKind::Thermal { nbar } if nbar > 0.0)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("state spec serializes")
    }

    pub fn label(&self) -> String {
        match self.kind {
            StateKind::Fock { n } => format!("fock({n})"),
            StateKind::Coherent { alpha } => format!("coherent({}{:+}i)", alpha.re, alpha.im),
            StateKind::SqueezedVacuum { r, phi } => format!("squeezed(r={r},phi={phi})"),
            StateKind::Cat { alpha, parity } => {
                format!("cat({}{:+}i,{})", alpha.re, alpha.im, if parity > 0 { "+" } else { "-" })
            }
            StateKind::Thermal { nbar } => format!("thermal({nbar})"),
        }
    }
}

/// The named states every property check runs over.
pub fn catalog() -> Vec<StateSpec> {
    vec![
        StateSpec::fock(0),
        StateSpec::fock(1),
        StateSpec::fock(2),
        StateSpec::fock(3),
        StateSpec::fock(4),
        StateSpec::coherent(FRAC_1_SQRT_2, 0.0),
        StateSpec::coherent(1.0, 0.5),
        StateSpec::coherent(2.0, 0.0),
        StateSpec::squeezed(0.5, 0.0),
        StateSpec::squeezed(0.5, PI / 3.0),
        StateSpec::squeezed(1.0, 0.0),
        StateSpec::cat(1.0, 0.0, 1),
        StateSpec::cat(1.5, 0.0, 1),
        StateSpec::cat(0.0, 1.5, -1),
        StateSpec::thermal(0.5),
        StateSpec::thermal(1.0),
    ]
}

fn check_finite(values: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("non-finite parameter in {values:?}")))
    }
}

fn validate_kind(kind: &StateKind) -> Result<()> {
    match *kind {
        StateKind::Fock { .. } => Ok(()),
        StateKind::Coherent { alpha } => check_finite(&[alpha.re, alpha.im]),
        StateKind::SqueezedVacuum { r, phi } => {
            check_finite(&[r, phi])?;
            if r < 0.0 {
                return Err(Error::InvalidParameter(format!("squeezing r = {r} must be >= 0")));
            }
            Ok(())
        }
        StateKind::Cat { alpha, parity } => {
            check_finite(&[alpha.re, alpha.im])?;
            if parity != 1 && parity != -1 {
                return Err(Error::InvalidParameter(format!("cat parity must be +1 or -1, got {parity}")));
            }
            if parity < 0 && alpha.norm_sqr() < 1e-6 {
                return Err(Error::InvalidParameter("odd cat with alpha ~ 0 has no norm".into()));
            }
            Ok(())
        }
        StateKind::Thermal { nbar } => {
            check_finite(&[nbar])?;
            if nbar < 0.0 {
                return Err(Error::InvalidParameter(format!("nbar = {nbar} must be >= 0")));
            }
            Ok(())
        }
    }
}

fn ln_poisson(mean_sq: f64, n: usize) -> f64 {
    if mean_sq == 0.0 {
        return if n == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    -mean_sq + n as f64 * mean_sq.ln() - ln_factorial(n)
}

/// Exact number-state population `<n|rho|n>` of the untruncated state.
pub fn population(kind: &StateKind, n: usize) -> f64 {
    match *kind {
        StateKind::Fock { n: k } => f64::from(u8::from(n == k)),
        StateKind::Coherent { alpha } => ln_poisson(alpha.norm_sqr(), n).exp(),
        StateKind::Cat { alpha, parity } => {
            let a2 = alpha.norm_sqr();
            let even = n.is_multiple_of(2);
            if even != (parity > 0) {
                return 0.0;
            }
            let norm = 2.0 * (1.0 + f64::from(parity) * (-2.0 * a2).exp());
            4.0 / norm * ln_poisson(a2, n).exp()
        }
        StateKind::SqueezedVacuum { r, .. } => {
            if n % 2 == 1 {
                return 0.0;
            }
            if r == 0.0 {
                return f64::from(u8::from(n == 0));
            }
            let k = n / 2;
            let kf = k as f64;
            (2.0 * kf * r.tanh().ln() + ln_factorial(2 * k)
                - 2.0 * kf * 2f64.ln()
                - 2.0 * ln_factorial(k)
                - r.cosh().ln())
            .exp()
        }
        StateKind::Thermal { nbar } => {
            if nbar == 0.0 {
                return f64::from(u8::from(n == 0));
            }
            (n as f64 * (nbar / (1.0 + nbar)).ln()).exp() / (1.0 + nbar)
        }
    }
}

/// Population beyond `cutoff` (levels `cutoff, cutoff+1, ...`).
pub fn tail_population(kind: &StateKind, cutoff: usize) -> f64 {
    if let StateKind::Thermal { nbar } = *kind {
        return if nbar == 0.0 { 0.0 } else { (nbar / (1.0 + nbar)).powf(cutoff as f64) };
    }
    if let StateKind::Fock { n } = *kind {
        return f64::from(u8::from(n >= cutoff));
    }
    let mean = match *kind {
        StateKind::Coherent { alpha } | StateKind::Cat { alpha, .. } => alpha.norm_sqr(),
        StateKind::SqueezedVacuum { r, .. } => r.sinh().powi(2),
        _ => unreachable!(),
    };
    let mut tail = 0.0;
    let mut n = cutoff;
    loop {
        let p = population(kind, n);
        tail += p;
        // populations are unimodal; stop once past the peak and negligible
        if n as f64 > 2.0 * mean + 4.0 && p < 1e-22 && population(kind, n + 1) < 1e-22 {
            break;
        }
        n += 1;
        if n > cutoff + 100_000 {
            break;
        }
    }
    tail
}

/// Smallest dimension meeting the tail bound, never below the rule-of-thumb
/// sizes `n+1`, `ceil(|alpha|^2 + 6|alpha| + 10)` and `ceil(10 e^{2r})`.
pub fn recommended_cutoff(kind: &StateKind) -> usize {
    let heuristic = match *kind {
        StateKind::Fock { n } => n + 1,
        StateKind::Coherent { alpha } | StateKind::Cat { alpha, .. } => {
            let a = alpha.norm();
            (a * a + 6.0 * a + 10.0).ceil() as usize
        }
        StateKind::SqueezedVacuum { r, .. } => (10.0 * (2.0 * r).exp()).ceil() as usize,
        StateKind::Thermal { nbar } => {
            if nbar == 0.0 {
                1
            } else {
                ((MAX_TAIL.ln() / (nbar / (1.0 + nbar)).ln()).ceil() as usize).max(1) + 1
            }
        }
    };
    let mut cutoff = heuristic.max(1);
    while tail_population(kind, cutoff) >= MAX_TAIL {
        cutoff += 1;
    }
    cutoff
}

/// Hermitian, unit-trace, positive semidefinite matrix in the number basis.
#[derive(Debug, Clone, PartialEq)]
pub struct FockDensityMatrix {
    elements: DMatrix<Complex64>,
}

impl FockDensityMatrix {
    /// Validates Hermiticity, trace and positivity.
    pub fn from_matrix(elements: DMatrix<Complex64>) -> Result<Self> {
        let rho = Self { elements };
        rho.validate()?;
        Ok(rho)
    }

    /// Wraps a matrix without checking positivity (used by the inverse
    /// transforms, which report rather than repair small violations).
    pub(crate) fn from_matrix_unchecked(elements: DMatrix<Complex64>) -> Self {
        Self { elements }
    }

    pub fn from_pure(amplitudes: &[Complex64]) -> Result<Self> {
        let dim = amplitudes.len();
        let m = DMatrix::from_fn(dim, dim, |i, j| amplitudes[i] * amplitudes[j].conj());
        Self::from_matrix(m)
    }

    pub fn dim(&self) -> usize {
        self.elements.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.elements
    }

    pub fn get(&self, m: usize, n: usize) -> Complex64 {
        self.elements[(m, n)]
    }

    pub fn trace(&self) -> f64 {
        self.elements.diagonal().iter().map(|z| z.re).sum()
    }

    pub fn hermiticity_error(&self) -> f64 {
        let d = self.dim();
        let mut worst: f64 = 0.0;
        for m in 0..d {
            for n in m..d {
                worst = worst.max((self.elements[(m, n)] - self.elements[(n, m)].conj()).norm());
            }
        }
        worst
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let herm = (&self.elements + self.elements.adjoint()).scale(0.5);
        herm.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim() == 0 || self.elements.ncols() != self.dim() {
            return Err(Error::InvalidState("matrix must be square and non-empty".into()));
        }
        if self.elements.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidState("non-finite element".into()));
        }
        let herm = self.hermiticity_error();
        if herm > HERMITIAN_TOL {
            return Err(Error::InvalidState(format!("not Hermitian (error {herm:e})")));
        }
        let tr = self.trace();
        if (tr - 1.0).abs() > TRACE_TOL {
            return Err(Error::InvalidState(format!("trace {tr} != 1")));
        }
        let min_ev = self.min_eigenvalue();
        if min_ev < PSD_TOL {
            return Err(Error::InvalidState(format!("negative eigenvalue {min_ev:e}")));
        }
        Ok(())
    }

    /// Frobenius distance, zero-padding the smaller matrix.
    pub fn frobenius_distance(&self, other: &Self) -> f64 {
        let d = self.dim().max(other.dim());
        let mut acc = 0.0;
        for m in 0..d {
            for n in 0..d {
                let a = if m < self.dim() && n < self.dim() { self.get(m, n) } else { Complex64::new(0.0, 0.0) };
                let b = if m < other.dim() && n < other.dim() { other.get(m, n) } else { Complex64::new(0.0, 0.0) };
                acc += (a - b).norm_sqr();
            }
        }
        acc.sqrt()
    }

    /// Matrix of the rotated quadrature `q cos(theta) + p sin(theta)` in dimension `dim`.
    fn quadrature_operator(theta: f64, dim: usize) -> DMatrix<Complex64> {
        let mut x = DMatrix::from_element(dim, dim, Complex64::new(0.0, 0.0));
        for n in 1..dim {
            let amp = (n as f64).sqrt() * FRAC_1_SQRT_2;
            // a|n> = sqrt(n)|n-1> carries e^{-i theta}, a^dag its conjugate
            x[(n - 1, n)] = Complex64::from_polar(amp, -theta);
            x[(n, n - 1)] = Complex64::from_polar(amp, theta);
        }
        x
    }

    /// `Tr(rho X_theta^k)` computed in a padded space so truncation does not bite.
    pub fn quadrature_moment(&self, theta: f64, k: u32) -> f64 {
        let big = self.dim() + k as usize + 1;
        let x = Self::quadrature_operator(theta, big);
        let mut power = DMatrix::<Complex64>::identity(big, big);
        for _ in 0..k {
            power = &power * &x;
        }
        let mut acc = Complex64::new(0.0, 0.0);
        for m in 0..self.dim() {
            for n in 0..self.dim() {
                acc += self.get(m, n) * power[(n, m)];
            }
        }
        acc.re
    }

    /// Means `(<q>, <p>)` and symmetrized covariance matrix.
    pub fn phase_space_moments(&self) -> ([f64; 2], [[f64; 2]; 2]) {
        let mq = self.quadrature_moment(0.0, 1);
        let mp = self.quadrature_moment(PI / 2.0, 1);
        let vq = self.quadrature_moment(0.0, 2) - mq * mq;
        let vp = self.quadrature_moment(PI / 2.0, 2) - mp * mp;
        // <X_{pi/4}^2> = (<q^2> + <p^2> + <qp + pq>)/2
        let x45 = self.quadrature_moment(PI / 4.0, 2);
        let sym = x45 - 0.5 * (vq + mq * mq + vp + mp * mp);
        let cqp = sym - mq * mp;
        ([mq, mp], [[vq, cqp], [cqp, vp]])
    }

    /// Writes rows `m,n,re,im` under a header line.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "m,n,re,im")?;
        for m in 0..self.dim() {
            for n in 0..self.dim() {
                let z = self.get(m, n);
                writeln!(out, "{m},{n},{},{}", z.re, z.im)?;
            }
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(input);
        let mut entries = Vec::new();
        let mut dim = 0;
        for rec in rdr.deserialize() {
            let (m, n, re, im): (usize, usize, f64, f64) = rec?;
            dim = dim.max(m + 1).max(n + 1);
            entries.push((m, n, Complex64::new(re, im)));
        }
        if entries.len() != dim * dim {
            return Err(Error::Parse(format!("expected {} entries, found {}", dim * dim, entries.len())));
        }
        let mut mat = DMatrix::from_element(dim, dim, Complex64::new(0.0, 0.0));
        for (m, n, z) in entries {
            mat[(m, n)] = z;
        }
        Self::from_matrix(mat)
    }
}

fn pure_amplitudes(kind: &StateKind, dim: usize) -> Vec<Complex64> {
    let zero = Complex64::new(0.0, 0.0);
    match *kind {
        StateKind::Fock { n } => (0..dim).map(|k| if k == n { Complex64::new(1.0, 0.0) } else { zero }).collect(),
        StateKind::Coherent { alpha } => coherent_amplitudes(alpha, dim),
        StateKind::Cat { alpha, parity } => {
            let norm = (2.0 * (1.0 + f64::from(parity) * (-2.0 * alpha.norm_sqr()).exp())).sqrt();
            coherent_amplitudes(alpha, dim)
                .into_iter()
                .enumerate()
                .map(|(k, c)| {
                    let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                    c * (1.0 + f64::from(parity) * sign) / norm
                })
                .collect()
        }
        StateKind::SqueezedVacuum { r, phi } => {
            let mut amps = vec![zero; dim];
            if r == 0.0 {
                amps[0] = Complex64::new(1.0, 0.0);
                return amps;
            }
            let t = r.tanh();
            for k in 0..dim.div_ceil(2) {
                let kf = k as f64;
                let ln_mag =
                    kf * t.ln() + 0.5 * ln_factorial(2 * k) - kf * 2f64.ln() - ln_factorial(k) - 0.5 * r.cosh().ln();
                // (-e^{i phi} tanh r)^k
                let phase = Complex64::from_polar(1.0, kf * (phi + PI));
                amps[2 * k] = phase * ln_mag.exp();
            }
            amps
        }
        StateKind::Thermal { .. } => unreachable!("thermal state is mixed"),
    }
}

fn coherent_amplitudes(alpha: Complex64, dim: usize) -> Vec<Complex64> {
    let a = alpha.norm();
    let arg = alpha.arg();
    (0..dim)
        .map(|k| {
            if a == 0.0 {
                return Complex64::new(f64::from(u8::from(k == 0)), 0.0);
            }
            let ln_mag = -0.5 * a * a + k as f64 * a.ln() - 0.5 * ln_factorial(k);
            Complex64::from_polar(ln_mag.exp(), k as f64 * arg)
        })
        .collect()
}

/// Builds the truncated density matrix of a catalog state.
pub fn build_state(spec: &StateSpec) -> Result<FockDensityMatrix> {
    validate_kind(&spec.kind)?;
    let cutoff = match spec.cutoff {
        Some(0) => return Err(Error::InvalidParameter("cutoff must be >= 1".into())),
        Some(c) => c,
        None => recommended_cutoff(&spec.kind),
    };
    let tail = tail_population(&spec.kind, cutoff);
    if tail >= MAX_TAIL {
        return Err(Error::CutoffTooSmall { cutoff, tail });
    }
    match spec.kind {
        StateKind::Thermal { .. } => {
            let diag: Vec<Complex64> = (0..cutoff).map(|n| Complex64::new(population(&spec.kind, n), 0.0)).collect();
            FockDensityMatrix::from_matrix(DMatrix::from_diagonal(&nalgebra::DVector::from_vec(diag)))
        }
        kind => FockDensityMatrix::from_pure(&pure_amplitudes(&kind, cutoff)),
    }
}

/// `Tr rho^2`.
pub fn purity(rho: &FockDensityMatrix) -> f64 {
    rho.matrix().iter().map(|z| z.norm_sqr()).sum()
}

/// Classical phase-space probability density.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ClassicalDensity {
    Gaussian { mean: [f64; 2], cov: [[f64; 2]; 2] },
}

impl ClassicalDensity {
    pub fn gaussian(mean: [f64; 2], cov: [[f64; 2]; 2]) -> Result<Self> {
        let d = Self::Gaussian { mean, cov };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        let Self::Gaussian { mean, cov } = self;
        check_finite(&[mean[0], mean[1], cov[0][0], cov[0][1], cov[1][0], cov[1][1]])?;
        if (cov[0][1] - cov[1][0]).abs() > 1e-12 {
            return Err(Error::InvalidParameter("covariance must be symmetric".into()));
        }
        let det = cov[0][0] * cov[1][1] - cov[0][1] * cov[1][0];
        if cov[0][0] <= 0.0 || det <= 0.0 {
            return Err(Error::InvalidParameter("covariance must be positive definite".into()));
        }
        Ok(())
    }

    pub fn mean(&self) -> [f64; 2] {
        let Self::Gaussian { mean, .. } = self;
        *mean
    }

    pub fn cov(&self) -> [[f64; 2]; 2] {
        let Self::Gaussian { cov, .. } = self;
        *cov
    }

    pub fn eval(&self, q: f64, p: f64) -> f64 {
        let Self::Gaussian { mean, cov } = self;
        let det = cov[0][0] * cov[1][1] - cov[0][1] * cov[1][0];
        let dq = q - mean[0];
        let dp = p - mean[1];
        let quad = (cov[1][1] * dq * dq - 2.0 * cov[0][1] * dq * dp + cov[0][0] * dp * dp) / det;
        (-0.5 * quad).exp() / (2.0 * PI * det.sqrt())
    }
}

/// Free-function form of [`ClassicalDensity::eval`].
pub fn eval_classical(density: &ClassicalDensity, q: f64, p: f64) -> f64 {
    density.eval(q, p)
}
