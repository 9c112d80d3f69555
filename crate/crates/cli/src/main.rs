use std::fs;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use tempfile::NamedTempFile;

use tomoprob::evolution::{
    classical_residual_optical, propagate_quadratic, quantum_residual, InitialState, QuadraticHamiltonian,
};
use tomoprob::grid::UniformGrid;
use tomoprob::homodyne::{
    checked_inequalities, estimate_tomogram, sample_quadratures, DataSource, DatasetMeta, QuadratureDataset,
};
use tomoprob::inequalities::{
    four_functionals, four_probs, subadditivity_check, subadditivity_check_with, wigner_subadditivity_check, CutPoints,
};
use tomoprob::phasespace::{rho_from_wigner, wigner_from_rho, GridSpec, WignerGrid};
use tomoprob::statekit::{build_state, purity, FockDensityMatrix, StateSpec};
use tomoprob::statistics::{
    entropic_check, entropic_check_with, heisenberg_check, heisenberg_check_with, InequalityReport,
};
use tomoprob::tomography::{
    optical_tomogram_with, rho_from_symplectic, uniform_thetas, OpticalTomogram, RadonMethod, SymplecticTomogram,
    TomogramGrid, DEFAULT_X_STEP,
};
use tomoprob::{Error, Result};

const ROUNDTRIP_WIGNER_LIMIT: f64 = 1e-3;
const ROUNDTRIP_TOMOGRAM_LIMIT: f64 = 5e-3;

/// Tomographic-probability toolkit: states, Wigner functions, tomograms,
/// inequality checks, evolution residuals and simulated homodyne data.
#[derive(Debug, Parser)]
#[command(name = "tomoprob", version)]
struct Cli {
    /// Directory for output artifacts.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Seed for sampling.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Tolerance override for deterministic checks.
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Phase-space grid "qmin,qmax,pmin,pmax,nq,np".
    #[arg(long, global = true, allow_hyphen_values = true)]
    grid: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build a density matrix; writes rho.csv and state.json.
    State {
        #[arg(long)]
        spec: PathBuf,
    },
    /// Wigner function on a grid; writes wigner.csv and wigner.json.
    Wigner(Source),
    /// Optical tomogram; writes tomogram.csv.
    Tomogram {
        #[command(flatten)]
        source: Source,
        #[arg(long)]
        angles: Option<usize>,
        #[arg(long, value_enum, default_value_t = Method::FourierSlice)]
        method: Method,
    },
    /// Uncertainty and entropic checks; writes check.json.
    Check {
        #[command(flatten)]
        input: CheckInput,
        #[arg(long, default_value_t = 0.0)]
        theta: f64,
    },
    /// Four-cut inequality checks; writes ineq.jsonl.
    Ineq {
        #[command(flatten)]
        input: CheckInput,
        #[arg(long, default_value_t = 0.0)]
        theta: f64,
        /// Cut triple "x1,x2,x3"; repeatable.
        #[arg(long, required = true, allow_hyphen_values = true)]
        cuts: Vec<CutPoints>,
    },
    /// Exact quadratic-Hamiltonian evolution; writes frame_NNN.csv and residual.json.
    Evolve {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long, conflicts_with = "harmonic")]
        free: bool,
        #[arg(long, value_name = "OMEGA")]
        harmonic: Option<f64>,
        /// Comma-separated times.
        #[arg(long, value_delimiter = ',', required = true, allow_hyphen_values = true)]
        times: Vec<f64>,
        #[arg(long)]
        angles: Option<usize>,
    },
    /// Simulated homodyne samples; writes dataset.csv and dataset.json.
    Simulate {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        #[arg(long, default_value_t = 16)]
        angles: usize,
        /// Clamp every sample into "lo,hi".
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        clip: Option<Vec<f64>>,
    },
    /// rho -> W -> rho and rho -> W -> tomogram -> rho errors; writes roundtrip.json.
    Roundtrip {
        #[arg(long)]
        spec: PathBuf,
    },
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
struct Source {
    /// StateSpec JSON.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Density matrix CSV "m,n,re,im".
    #[arg(long)]
    rho: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
struct CheckInput {
    /// StateSpec JSON.
    #[arg(long)]
    state: Option<PathBuf>,
    /// Tomogram CSV "theta,X,w" or dataset CSV "theta,X".
    #[arg(long)]
    tomogram: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Method {
    FourierSlice,
    LineBilinear,
}

impl From<Method> for RadonMethod {
    fn from(m: Method) -> Self {
        match m {
            Method::FourierSlice => RadonMethod::FourierSlice,
            Method::LineBilinear => RadonMethod::LineBilinear,
        }
    }
}

/// Artifacts are held in memory until the command succeeds.
struct Outcome {
    artifacts: Vec<(String, Vec<u8>)>,
    stdout: String,
    satisfied: bool,
}

impl Outcome {
    fn new(stdout: String) -> Self {
        Self { artifacts: Vec::new(), stdout, satisfied: true }
    }

    fn artifact(&mut self, name: impl Into<String>, bytes: Vec<u8>) {
        self.artifacts.push((name.into(), bytes));
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

fn read_spec(path: &Path) -> Result<StateSpec> {
    StateSpec::from_json(&read_text(path)?)
}

fn read_rho(path: &Path) -> Result<FockDensityMatrix> {
    let file = fs::File::open(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    FockDensityMatrix::read_csv(BufReader::new(file))
}

fn parse_grid(text: &str) -> Result<GridSpec> {
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    if parts.len() != 6 {
        return Err(Error::Parse(format!("grid needs qmin,qmax,pmin,pmax,nq,np, got {text:?}")));
    }
    let f = |s: &str| s.parse::<f64>().map_err(|_| Error::Parse(format!("bad grid bound {s:?}")));
    let n = |s: &str| s.parse::<usize>().map_err(|_| Error::Parse(format!("bad grid size {s:?}")));
    GridSpec::new(f(parts[0])?, f(parts[1])?, f(parts[2])?, f(parts[3])?, n(parts[4])?, n(parts[5])?)
}

fn json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    s.into_bytes()
}

enum Tabular {
    Tomogram(OpticalTomogram),
    Dataset(QuadratureDataset),
}

fn read_tabular(path: &Path) -> Result<Tabular> {
    let text = read_text(path)?;
    let header = text.lines().next().unwrap_or_default().trim();
    match header {
        "theta,X,w" => Ok(Tabular::Tomogram(OpticalTomogram::read_csv(text.as_bytes())?)),
        "theta,X" => {
            let sidecar = path.with_extension("json");
            let meta: Option<DatasetMeta> =
                if sidecar.is_file() { Some(serde_json::from_str(&read_text(&sidecar)?)?) } else { None };
            Ok(Tabular::Dataset(QuadratureDataset::read_csv(text.as_bytes(), meta)?))
        }
        other => Err(Error::Parse(format!("unrecognized CSV header {other:?}"))),
    }
}

struct Ctx {
    grid: Option<GridSpec>,
    tol: Option<f64>,
    seed: u64,
}

impl Ctx {
    fn wigner_grid(&self, rho: &FockDensityMatrix) -> GridSpec {
        self.grid.unwrap_or_else(|| GridSpec::adequate_for(rho))
    }

    fn tomogram_grid(&self, rho: &FockDensityMatrix, angles: Option<usize>) -> TomogramGrid {
        let mut tg = TomogramGrid::adequate_for(rho);
        if let Some(g) = self.grid {
            let half = [g.q_min, g.q_max, g.p_min, g.p_max].iter().fold(0.0f64, |m, v| m.max(v.abs()));
            tg.x = UniformGrid::symmetric(half, DEFAULT_X_STEP);
        }
        if let Some(n) = angles {
            tg.n_theta = n;
        }
        tg
    }

    fn state_tomogram(
        &self,
        rho: &FockDensityMatrix,
        angles: Option<usize>,
        method: RadonMethod,
    ) -> Result<(WignerGrid, OpticalTomogram)> {
        let w = wigner_from_rho(rho, &self.wigner_grid(rho))?;
        let tg = self.tomogram_grid(rho, angles);
        let opt = optical_tomogram_with(&w, &tg.thetas(), &tg.x, method)?;
        Ok((w, opt))
    }
}

#[derive(Serialize)]
struct StateSummary {
    spec: StateSpec,
    label: String,
    dim: usize,
    trace: f64,
    purity: f64,
    min_eigenvalue: f64,
}

#[derive(Serialize)]
struct WignerSummary {
    grid: GridSpec,
    normalization: f64,
    overlap_purity: f64,
    max_abs: f64,
    boundary_max: f64,
}

#[derive(Serialize)]
struct ResidualReport {
    hamiltonian: QuadraticHamiltonian,
    times: Vec<f64>,
    quantum_residual: Option<f64>,
    classical_residual: Option<f64>,
    max_normalization_drift: f64,
}

#[derive(Serialize)]
struct RoundtripReport {
    spec: StateSpec,
    wigner_error: f64,
    tomogram_error: f64,
    wigner_limit: f64,
    tomogram_limit: f64,
    satisfied: bool,
}

fn load_source(src: &Source) -> Result<FockDensityMatrix> {
    match (&src.spec, &src.rho) {
        (Some(p), _) => build_state(&read_spec(p)?),
        (None, Some(p)) => read_rho(p),
        (None, None) => unreachable!("clap requires one source"),
    }
}

fn reports_outcome(reports: &[InequalityReport], name: &str, lines: bool) -> Outcome {
    let text = if lines {
        reports.iter().map(|r| serde_json::to_string(r).expect("report serializes") + "\n").collect()
    } else {
        String::from_utf8(json_bytes(&reports)).expect("utf8")
    };
    let mut out = Outcome::new(text.clone());
    out.satisfied = reports.iter().all(|r| r.satisfied);
    out.artifact(name, text.into_bytes());
    out
}

fn run(cmd: &Command, ctx: &Ctx) -> Result<Outcome> {
    match cmd {
        Command::State { spec } => {
            let spec = read_spec(spec)?;
            let rho = build_state(&spec)?;
            let summary = StateSummary {
                spec,
                label: spec.label(),
                dim: rho.dim(),
                trace: rho.trace(),
                purity: purity(&rho),
                min_eigenvalue: rho.min_eigenvalue(),
            };
            let bytes = json_bytes(&summary);
            let mut out = Outcome::new(String::from_utf8(bytes.clone()).expect("utf8"));
            let mut csv = Vec::new();
            rho.write_csv(&mut csv)?;
            out.artifact("rho.csv", csv);
            out.artifact("state.json", bytes);
            Ok(out)
        }
        Command::Wigner(src) => {
            let rho = load_source(src)?;
            let w = wigner_from_rho(&rho, &ctx.wigner_grid(&rho))?;
            let summary = WignerSummary {
                grid: w.grid,
                normalization: w.normalization(),
                overlap_purity: w.overlap_purity(),
                max_abs: w.max_abs(),
                boundary_max: w.boundary_max(),
            };
            let bytes = json_bytes(&summary);
            let mut out = Outcome::new(String::from_utf8(bytes.clone()).expect("utf8"));
            let mut csv = Vec::new();
            w.write_csv(&mut csv)?;
            out.artifact("wigner.csv", csv);
            out.artifact("wigner.json", bytes);
            Ok(out)
        }
        Command::Tomogram { source, angles, method } => {
            let rho = load_source(source)?;
            let (_, opt) = ctx.state_tomogram(&rho, *angles, (*method).into())?;
            let mut csv = Vec::new();
            opt.write_csv(&mut csv)?;
            let mut out = Outcome::new(String::new());
            out.artifact("tomogram.csv", csv);
            Ok(out)
        }
        Command::Check { input, theta } => {
            let opt = match check_source(input)? {
                Loaded::State(rho) => ctx.state_tomogram(&rho, None, RadonMethod::default())?.1,
                Loaded::Tabular(Tabular::Tomogram(opt)) => opt,
                Loaded::Tabular(Tabular::Dataset(data)) => {
                    let est = estimate_tomogram(&data, &ctx.dataset_axis())?;
                    let cuts = CutPoints::new(-1.0, 0.0, 1.0)?;
                    let reports: Vec<_> = checked_inequalities(&est, &cuts, *theta)?
                        .into_iter()
                        .filter(|r| r.name != "subadditivity")
                        .collect();
                    return Ok(reports_outcome(&reports, "check.json", false));
                }
            };
            let reports = match ctx.tol {
                Some(t) => vec![heisenberg_check_with(&opt, t)?, entropic_check_with(&opt, *theta, t)?],
                None => vec![heisenberg_check(&opt)?, entropic_check(&opt, *theta)?],
            };
            Ok(reports_outcome(&reports, "check.json", false))
        }
        Command::Ineq { input, theta, cuts } => {
            let mut reports = Vec::new();
            match check_source(input)? {
                Loaded::State(rho) => {
                    let (w, opt) = ctx.state_tomogram(&rho, None, RadonMethod::default())?;
                    for c in cuts {
                        reports.push(ctx.subadditivity(&opt, *theta, c)?);
                        if purity(&rho) > 1.0 - 1e-9 {
                            reports.push(wigner_subadditivity_check(&four_functionals(&w, c)?));
                        }
                    }
                }
                Loaded::Tabular(Tabular::Tomogram(opt)) => {
                    for c in cuts {
                        reports.push(ctx.subadditivity(&opt, *theta, c)?);
                    }
                }
                Loaded::Tabular(Tabular::Dataset(data)) => {
                    let est = estimate_tomogram(&data, &ctx.dataset_axis())?;
                    for c in cuts {
                        reports.extend(checked_inequalities(&est, c, *theta)?);
                    }
                }
            }
            Ok(reports_outcome(&reports, "ineq.jsonl", true))
        }
        Command::Evolve { spec, free, harmonic, times, angles } => {
            let spec = read_spec(spec)?;
            let h = match (free, harmonic) {
                (true, _) => QuadraticHamiltonian::Free,
                (false, Some(omega)) => QuadraticHamiltonian::harmonic(*omega)?,
                (false, None) => return Err(Error::UnsupportedHamiltonian("pass --free or --harmonic OMEGA".into())),
            };
            let rho = build_state(&spec)?;
            let grid = ctx.tomogram_grid(&rho, *angles);
            let traj = propagate_quadratic(InitialState::Quantum(&rho), &h, times, &grid)?;
            let (quantum, classical) = if times.len() >= 3 {
                (Some(quantum_residual(&traj, &h)?), Some(classical_residual_optical(&traj, &h)?))
            } else {
                (None, None)
            };
            let report = ResidualReport {
                hamiltonian: h,
                times: times.clone(),
                quantum_residual: quantum,
                classical_residual: classical,
                max_normalization_drift: traj.max_normalization_drift(),
            };
            let bytes = json_bytes(&report);
            let mut out = Outcome::new(String::from_utf8(bytes.clone()).expect("utf8"));
            for (k, frame) in traj.frames.iter().enumerate() {
                let mut csv = Vec::new();
                frame.write_csv(&mut csv)?;
                out.artifact(format!("frame_{k:03}.csv"), csv);
            }
            out.artifact("residual.json", bytes);
            Ok(out)
        }
        Command::Simulate { spec, samples, angles, clip } => {
            let spec = read_spec(spec)?;
            let clip = match clip.as_deref() {
                Some([lo, hi]) if lo < hi => Some((*lo, *hi)),
                Some(_) => return Err(Error::InvalidParameter("--clip needs lo < hi".into())),
                None => None,
            };
            let rho = build_state(&spec)?;
            let (_, opt) = ctx.state_tomogram(&rho, Some(*angles), RadonMethod::default())?;
            let mut data = sample_quadratures(&opt, &uniform_thetas(*angles), *samples, ctx.seed)?;
            data.source = DataSource::State(spec);
            if let Some((lo, hi)) = clip {
                data = data.clipped(lo, hi);
            }
            let meta = json_bytes(&data.meta());
            let mut csv = Vec::new();
            data.write_csv(&mut csv)?;
            let mut out = Outcome::new(String::from_utf8(meta.clone()).expect("utf8"));
            out.artifact("dataset.csv", csv);
            out.artifact("dataset.json", meta);
            Ok(out)
        }
        Command::Roundtrip { spec } => {
            let spec = read_spec(spec)?;
            let rho = build_state(&spec)?;
            let (w, opt) = ctx.state_tomogram(&rho, None, RadonMethod::default())?;
            let wigner_error = rho_from_wigner(&w, rho.dim())?.frobenius_distance(&rho);
            let tomogram_error =
                rho_from_symplectic(&SymplecticTomogram::new(&opt), rho.dim())?.frobenius_distance(&rho);
            let report = RoundtripReport {
                spec,
                wigner_error,
                tomogram_error,
                wigner_limit: ROUNDTRIP_WIGNER_LIMIT,
                tomogram_limit: ROUNDTRIP_TOMOGRAM_LIMIT,
                satisfied: wigner_error < ROUNDTRIP_WIGNER_LIMIT && tomogram_error < ROUNDTRIP_TOMOGRAM_LIMIT,
            };
            let bytes = json_bytes(&report);
            let mut out = Outcome::new(String::from_utf8(bytes.clone()).expect("utf8"));
            out.satisfied = report.satisfied;
            out.artifact("roundtrip.json", bytes);
            Ok(out)
        }
    }
}

enum Loaded {
    State(FockDensityMatrix),
    Tabular(Tabular),
}

fn check_source(input: &CheckInput) -> Result<Loaded> {
    match (&input.state, &input.tomogram) {
        (Some(p), _) => Ok(Loaded::State(build_state(&read_spec(p)?)?)),
        (None, Some(p)) => Ok(Loaded::Tabular(read_tabular(p)?)),
        (None, None) => unreachable!("clap requires one input"),
    }
}

impl Ctx {
    /// Histogram bins for measured data: the --grid q axis, else the default
    /// tomogram axis.
    fn dataset_axis(&self) -> UniformGrid {
        self.grid.map_or_else(|| TomogramGrid::default().x, |g| g.q_axis())
    }

    fn subadditivity(&self, opt: &OpticalTomogram, theta: f64, cuts: &CutPoints) -> Result<InequalityReport> {
        let p = four_probs(opt, theta, cuts)?;
        Ok(match self.tol {
            Some(t) => subadditivity_check_with(&p, t),
            None => subadditivity_check(&p),
        })
    }
}

fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> std::io::Result<()> {
    let mut tmp = NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(dir.join(name)).map_err(|e| e.error)?;
    Ok(())
}

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::CutoffTooSmall { .. } => "CutoffTooSmall",
        Error::InvalidParameter(_) => "InvalidParameter",
        Error::InvalidState(_) => "InvalidState",
        Error::GridTooSmall { .. } => "GridTooSmall",
        Error::InvalidGrid(_) => "InvalidGrid",
        Error::NyquistViolation { .. } => "NyquistViolation",
        Error::NormalizationError(_) => "NormalizationError",
        Error::SupportClipped(_) => "SupportClipped",
        Error::DegenerateDirection => "DegenerateDirection",
        Error::MissingPhase(_) => "MissingPhase",
        Error::OrderTooHigh(_) => "OrderTooHigh",
        Error::UnsupportedHamiltonian(_) => "UnsupportedHamiltonian",
        Error::GridTooCoarse(_) => "GridTooCoarse",
        Error::InsufficientSamples { .. } => "InsufficientSamples",
        Error::Parse(_) | Error::Csv(_) | Error::Json(_) => "Parse",
        Error::Io(_) => "Io",
    }
}

fn fail(kind: &str, message: String) -> ExitCode {
    let body = serde_json::json!({ "error": kind, "message": message });
    eprintln!("{body}");
    ExitCode::from(2)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail("Usage", e.render().to_string()),
    };
    let grid = match cli.grid.as_deref().map(parse_grid).transpose() {
        Ok(g) => g,
        Err(e) => return fail(error_kind(&e), e.to_string()),
    };
    if let Some(t) = cli.tol {
        if !(t.is_finite() && t >= 0.0) {
            return fail("InvalidParameter", format!("--tol must be finite and >= 0, got {t}"));
        }
    }
    if !cli.out.is_dir() {
        return fail("Io", format!("output directory {} does not exist", cli.out.display()));
    }
    let ctx = Ctx { grid, tol: cli.tol, seed: cli.seed };
    let outcome = match run(&cli.command, &ctx) {
        Ok(o) => o,
        Err(e) => return fail(error_kind(&e), e.to_string()),
    };
    for (name, bytes) in &outcome.artifacts {
        if let Err(e) = write_atomic(&cli.out, name, bytes) {
            return fail("Io", format!("{name}: {e}"));
        }
    }
    print!("{}", outcome.stdout);
    if outcome.satisfied {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}
