use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

use fixmpc::admm::{AdmmFormats, AdmmFx, AdmmTraceRow};
use fixmpc::bench::{self, BenchSettings, Method, TableOptions, Variant, ADMM_SAFETY};
use fixmpc::certify::{certify, eta_bound, fgm_overflow_bounds, ErrorSystem};
use fixmpc::fgm::{fgm_solve, write_trace, FgmFormats, FgmFx, FgmTraceRow};
use fixmpc::fxp::{FxFormat, OverflowPolicy};
use fixmpc::hwmodel::{self, Dims, Family, HwParams};
use fixmpc::model::{load_problem, validate, MpcProblem, Reference};
use fixmpc::transform::artifact::{AdmmArtifact, FgmArtifact};
use fixmpc::transform::{
    build_sparse, condense, normalize_fgm, normalize_fgm_exact, precompute_admm, scale_soft_constraints, solve_mpc,
    exact_penalty_check, AdmmOffline, CondensedQp, FgmOffline, OracleMode, PenaltyReport, SparseQp,
};
use fixmpc::{Error, Result};

/// Exact-arithmetic ADMM still quantizes the offline data for its checks.
const EXACT_ADMM_BITS: u32 = 40;

#[derive(Parser, Debug)]
#[command(name = "fixmpc", version, about = "Fixed-point first-order MPC: solve, certify, model hardware, benchmark")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(rename_all = "snake_case")]
enum Command {
    /// Check a problem file for consistency and convexity.
    Validate(ValidateArgs),
    /// Solve one MPC instance in double or fixed-point arithmetic.
    Solve(SolveArgs),
    /// Round-off stability, error bounds and overflow bounds of a solver.
    Certify(CertifyArgs),
    /// Cycle counts, sample times and resources over a parallelism grid.
    Hwmodel(HwArgs),
    /// Closed-loop cost table on the oscillating-masses benchmark.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum SolverArg {
    Fgm,
    Admm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum PolicyArg {
    Checked,
    Saturate,
    Wrap,
}

impl From<PolicyArg> for OverflowPolicy {
    fn from(p: PolicyArg) -> Self {
        match p {
            PolicyArg::Checked => OverflowPolicy::Checked,
            PolicyArg::Saturate => OverflowPolicy::Saturate,
            PolicyArg::Wrap => OverflowPolicy::Wrap,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum VariantArg {
    Input,
    Soft,
}

#[derive(Args, Debug, Serialize)]
struct ValidateArgs {
    problem: PathBuf,
}

/// Problem, solver and output options shared by `solve` and `certify`.
#[derive(Args, Debug, Serialize)]
struct SolverArgs {
    /// Problem JSON.
    problem: PathBuf,
    #[arg(long, value_enum)]
    method: SolverArg,
    /// Fraction bits; omit for double precision.
    #[arg(long = "frac-bits")]
    frac_bits: Option<u32>,
    /// Integer bits of every signal; derived from bounds when omitted.
    #[arg(long = "int-bits")]
    int_bits: Option<u32>,
    #[arg(long, default_value_t = 20)]
    iters: usize,
    /// ADMM penalty parameter (a power of two).
    #[arg(long, default_value_t = 2.0)]
    rho: f64,
    /// Overrides the problem's linear slack weight.
    #[arg(long)]
    sigma1: Option<f64>,
    /// Overrides the problem's quadratic slack weight.
    #[arg(long)]
    sigma2: Option<f64>,
    #[arg(long, value_enum, default_value_t = PolicyArg::Checked)]
    policy: PolicyArg,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct SolveArgs {
    #[command(flatten)]
    solver: SolverArgs,
    /// Initial state, comma separated (zeros when omitted).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    x0: Vec<f64>,
    #[arg(long = "x-ref", value_delimiter = ',', allow_hyphen_values = true)]
    x_ref: Vec<f64>,
    #[arg(long = "u-ref", value_delimiter = ',', allow_hyphen_values = true)]
    u_ref: Vec<f64>,
}

#[derive(Args, Debug, Serialize)]
struct CertifyArgs {
    #[command(flatten)]
    solver: SolverArgs,
    /// Half-width of the parameter box `(x, x_ref, u_ref)` for the FGM
    /// overflow bounds.
    #[arg(long = "x-bound", default_value_t = 1.0)]
    x_bound: f64,
    /// Asymptotic error target for a fraction-bit recommendation.
    #[arg(long = "target-eta")]
    target_eta: Option<f64>,
}

#[derive(Args, Debug, Serialize)]
struct HwArgs {
    #[arg(long, value_enum)]
    family: SolverArg,
    /// FGM problem size `N n_u`.
    #[arg(long = "Nnu")]
    n_nu: Option<usize>,
    /// ADMM problem size `n_A`.
    #[arg(long = "nA")]
    n_a: Option<usize>,
    #[arg(long, default_value_t = 0)]
    nx: usize,
    #[arg(long = "P", value_delimiter = ',', required = true)]
    p: Vec<usize>,
    /// Clock frequencies in Hz.
    #[arg(long, value_delimiter = ',', default_value = "400e6")]
    clock: Vec<f64>,
    #[arg(long)]
    iters: u64,
    /// Adds the warm-start shift cycle.
    #[arg(long = "warm-start")]
    warm_start: bool,
    #[arg(long = "l-a", default_value_t = 1)]
    l_a: u64,
    #[arg(long = "l-m", default_value_t = 1)]
    l_m: u64,
    /// Output CSV; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct BenchArgs {
    #[arg(long, value_enum)]
    variant: VariantArg,
    #[arg(long, value_enum)]
    method: SolverArg,
    /// Fraction-bit grid.
    #[arg(long, value_delimiter = ',', required = true)]
    b: Vec<u32>,
    /// Iteration grid.
    #[arg(long, value_delimiter = ',', required = true)]
    iters: Vec<usize>,
    #[arg(long, default_value_t = BenchSettings::default().steps)]
    steps: usize,
    /// Seed of the samples for the exact-penalty check.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Samples for the exact-penalty check (soft variant).
    #[arg(long = "penalty-samples", default_value_t = 20)]
    penalty_samples: usize,
    #[arg(long, default_value_t = BenchSettings::default().sigma1)]
    sigma1: f64,
    #[arg(long, default_value_t = BenchSettings::default().sigma2)]
    sigma2: f64,
    #[arg(long, default_value_t = BenchSettings::default().rho)]
    rho: f64,
    #[arg(long = "cold-start")]
    cold_start: bool,
    #[arg(long, value_enum, default_value_t = PolicyArg::Checked)]
    policy: PolicyArg,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

/// Exit status of a failed run.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_)
        | Error::Validation(_)
        | Error::Io(_)
        | Error::Dimension(_)
        | Error::Parameter(_)
        | Error::NotCondensable
        | Error::InvalidFormat(_)
        | Error::Layout(_) => 1,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn run(cmd: &Command) -> Result<()> {
    match cmd {
        Command::Validate(a) => run_validate(a),
        Command::Solve(a) => run_solve(cmd, a),
        Command::Certify(a) => run_certify(cmd, a),
        Command::Hwmodel(a) => run_hwmodel(cmd, a),
        Command::Bench(a) => run_bench(cmd, a),
    }
}

/// Collects output files and writes `manifest.json` next to them.
struct Outputs {
    dir: PathBuf,
    files: Vec<(String, String)>,
}

#[derive(Serialize)]
struct FileEntry<'a> {
    path: &'a str,
    sha256: &'a str,
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    config: &'a Command,
    seed: Option<u64>,
    files: Vec<FileEntry<'a>>,
}

/// `sha256("blob <len>\0" || content)`, the git object hash with SHA-256.
fn git_hash(content: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", content.len()).as_bytes());
    h.update(content);
    hex::encode(h.finalize())
}

impl Outputs {
    fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Outputs {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, content: &[u8]) -> Result<()> {
        if let Some(parent) = self.dir.join(name).parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(self.dir.join(name), content)?;
        self.files.push((name.to_string(), git_hash(content)));
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, v: &T) -> Result<()> {
        let mut s = serde_json::to_string_pretty(v)?;
        s.push('\n');
        self.write(name, s.as_bytes())
    }

    fn csv(&mut self, name: &str, f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
        let mut buf = Vec::new();
        f(&mut buf)?;
        self.write(name, &buf)
    }

    fn finish(self, config: &Command, seed: Option<u64>) -> Result<()> {
        let m = Manifest {
            tool: "fixmpc",
            version: env!("CARGO_PKG_VERSION"),
            config,
            seed,
            files: self
                .files
                .iter()
                .map(|(p, h)| FileEntry { path: p, sha256: h })
                .collect(),
        };
        let mut s = serde_json::to_string_pretty(&m)?;
        s.push('\n');
        fs::write(self.dir.join("manifest.json"), s)?;
        Ok(())
    }
}

fn run_validate(a: &ValidateArgs) -> Result<()> {
    let p = load_problem(&a.problem)?;
    let report = validate(&p);
    for c in &report.checks {
        println!("{:<14} {} (min eigenvalue {:.3e})", c.name, if c.pass { "ok" } else { "FAIL" }, c.min_eigenvalue);
    }
    report.into_result()?;
    println!("ok: nx = {}, nu = {}, N = {}, soft = {}", p.nx(), p.nu(), p.horizon, p.n_soft());
    Ok(())
}

fn load(a: &SolverArgs) -> Result<MpcProblem> {
    let mut p = load_problem(&a.problem)?;
    if let Some(s) = a.sigma1 {
        p.weights.sigma1 = s;
    }
    if let Some(s) = a.sigma2 {
        p.weights.sigma2 = s;
    }
    validate(&p).into_result()?;
    Ok(p)
}

fn vector_or_zero(name: &str, v: &[f64], n: usize) -> Result<Vec<f64>> {
    match v.len() {
        0 => Ok(vec![0.0; n]),
        l if l == n => Ok(v.to_vec()),
        l => Err(Error::Dimension(format!("{name} has {l} entries, expected {n}"))),
    }
}

fn uniform(int_bits: u32, frac_bits: u32) -> Result<FxFormat> {
    FxFormat::new(int_bits, frac_bits)
}

struct FgmSetup {
    q: CondensedQp,
    off: FgmOffline,
    fx: Option<FgmFx>,
    overflow: Option<fixmpc::certify::OverflowReport>,
}

/// Offline data and formats; the integer bits come from the overflow
/// bounds over `[p_lo, p_hi]` unless fixed by `--int-bits`.
fn fgm_setup(p: &MpcProblem, a: &SolverArgs, p_lo: &[f64], p_hi: &[f64]) -> Result<FgmSetup> {
    let q = condense(p)?;
    let Some(b) = a.frac_bits else {
        return Ok(FgmSetup {
            off: normalize_fgm_exact(&q),
            q,
            fx: None,
            overflow: None,
        });
    };
    let off = normalize_fgm(&q, b)?;
    let probe = FgmFx::new(&off, &q, FgmFormats::uniform(uniform(62 - b, b)?), a.policy.into())?;
    let overflow = fgm_overflow_bounds(&off, &probe, p_lo, p_hi)?;
    let formats = match a.int_bits {
        Some(i) => {
            let need = overflow.table().iter().map(|r| r.2).max().unwrap_or(1);
            if i < need {
                return Err(Error::Precision(format!(
                    "{i} integer bits given, the overflow bounds need {need}"
                )));
            }
            FgmFormats::uniform(uniform(i, b)?)
        }
        None => overflow.formats,
    };
    let fx = FgmFx::new(&off, &q, formats, a.policy.into())?;
    Ok(FgmSetup {
        q,
        off,
        fx: Some(fx),
        overflow: Some(overflow),
    })
}

struct AdmmSetup {
    /// Unscaled, for the offline artifact's `F`.
    s: SparseQp,
    off: AdmmOffline,
}

fn admm_setup(p: &MpcProblem, a: &SolverArgs) -> Result<AdmmSetup> {
    let raw = build_sparse(p)?;
    let s = if p.n_soft() > 0 && p.weights.sigma1 > 0.0 {
        scale_soft_constraints(&raw, p.weights.sigma1)?
    } else {
        raw
    };
    let off = precompute_admm(&s, a.rho, a.frac_bits.unwrap_or(EXACT_ADMM_BITS))?;
    Ok(AdmmSetup { s, off })
}

fn admm_artifact(st: &AdmmSetup, a: &SolverArgs) -> Result<AdmmArtifact> {
    AdmmArtifact::new(&st.off, &st.s.f, &st.s.scale, a.frac_bits.is_none())
}

fn norm2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

#[derive(Serialize)]
struct Solution {
    method: SolverArg,
    frac_bits: Option<u32>,
    iters: usize,
    /// First input, applied to the plant.
    u0: Vec<f64>,
    /// Full input sequence.
    u: Vec<f64>,
    /// Solver vector in original coordinates.
    z: Vec<f64>,
    objective: f64,
    oracle_objective: f64,
    /// `objective - oracle_objective`.
    residual: f64,
    /// `||z_fixed - z_exact||_2` after the last iteration, on the same data.
    eta_observed: Option<f64>,
    eta_bound: Option<f64>,
    int_bits: Option<u32>,
}

fn run_solve(cmd: &Command, a: &SolveArgs) -> Result<()> {
    let sa = &a.solver;
    let p = load(sa)?;
    let x0 = vector_or_zero("x0", &a.x0, p.nx())?;
    let r = Reference {
        x: vector_or_zero("x-ref", &a.x_ref, p.nx())?,
        u: vector_or_zero("u-ref", &a.u_ref, p.nu())?,
    };
    let oracle = solve_mpc(&p, &x0, &r, OracleMode::Penalty)?;
    let mut out = Outputs::new(&sa.out)?;
    let nu = p.nu();
    let solution = match sa.method {
        SolverArg::Fgm => {
            let param = condense(&p)?.param(&x0, &r);
            let st = fgm_setup(&p, sa, &param, &param)?;
            let lin = st.q.linear_term(&x0, &r);
            let f_star = st.q.objective(&oracle.u, &lin);
            let (iterates, twin) = match &st.fx {
                None => (fgm_solve(&st.off, &st.q, &param, sa.iters, None)?.iterates, None),
                Some(fx) => {
                    let run = fx.solve(&param, sa.iters, None)?;
                    let twin = fx.twin(&run, sa.iters);
                    (run.iterates, Some(twin.iterates))
                }
            };
            let bound = match sa.frac_bits {
                Some(b) => Some(eta_bound(&ErrorSystem::fgm(&st.off), b, st.q.n(), 0.0, sa.iters.max(1))?.eta_bar),
                None => None,
            };
            let rows: Vec<FgmTraceRow> = iterates
                .iter()
                .enumerate()
                .map(|(i, z)| {
                    let obj = st.q.objective(z, &lin);
                    FgmTraceRow {
                        iter: i,
                        objective: obj,
                        residual: obj - f_star,
                        eta_observed: twin.as_ref().map_or(0.0, |t| norm2(z, &t[i])),
                        eta_bound: bound.as_ref().map_or(0.0, |b| b[i.min(b.len() - 1)]),
                    }
                })
                .collect();
            out.csv("trace.csv", |w| write_trace(w, &rows))?;
            let (lo, hi) = st.fx.as_ref().map_or((st.q.z_min.clone(), st.q.z_max.clone()), |f| f.bounds());
            out.json("offline.json", &FgmArtifact::new(&st.off, &lo, &hi)?)?;
            let last = rows.last().expect("iterate 0 is always present");
            let z = iterates.last().expect("nonempty").clone();
            Solution {
                method: sa.method,
                frac_bits: sa.frac_bits,
                iters: sa.iters,
                u0: z[..nu].to_vec(),
                u: z.clone(),
                z,
                objective: last.objective,
                oracle_objective: f_star,
                residual: last.residual,
                eta_observed: twin.as_ref().map(|_| last.eta_observed),
                eta_bound: bound.as_ref().map(|_| last.eta_bound),
                int_bits: st.fx.as_ref().map(|f| f.formats.t.int_bits()),
            }
        }
        SolverArg::Admm => {
            let st = admm_setup(&p, sa)?;
            let s = &st.s;
            let h = s.h(&r);
            let bx = s.b(&x0);
            let f_star = s.objective(&s.point_from_inputs(&p, &x0, &oracle.u), &h);
            let (iterates, primal, twin, int_bits) = match sa.frac_bits {
                None => {
                    let run = fixmpc::admm::admm_solve(&st.off, s, &x0, &r, sa.iters, None, None)?;
                    (run.iterates, run.primal_residuals, None, None)
                }
                Some(b) => {
                    let formats = match sa.int_bits {
                        Some(i) => AdmmFormats::uniform(uniform(i, b)?),
                        None => {
                            let probe = AdmmFx::new(&st.off, s, AdmmFormats::wide(b)?, OverflowPolicy::Checked)?;
                            let m = probe.solve(h.as_slice(), bx.as_slice(), sa.iters, None, None)?.maxima;
                            AdmmFormats::from_maxima(&m, b, ADMM_SAFETY)?
                        }
                    };
                    let fx = AdmmFx::new(&st.off, s, formats, sa.policy.into())?;
                    let run = fx.solve(h.as_slice(), bx.as_slice(), sa.iters, None, None)?;
                    let twin = fx.twin(&run, sa.iters);
                    (run.iterates, run.primal_residuals, Some(twin.iterates), Some(formats.acc.int_bits()))
                }
            };
            let bound = match sa.frac_bits {
                Some(b) => Some(eta_bound(&ErrorSystem::admm(&st.off), b, s.n(), 0.0, sa.iters.max(1))?.eta_bar),
                None => None,
            };
            let rows: Vec<AdmmTraceRow> = iterates
                .iter()
                .enumerate()
                .map(|(i, z)| {
                    let obj = s.objective(z, &h);
                    AdmmTraceRow {
                        iter: i,
                        objective: obj,
                        residual: obj - f_star,
                        primal_residual: if i == 0 { f64::NAN } else { primal[i - 1] },
                        eta_observed: twin.as_ref().map_or(0.0, |t| norm2(z, &t[i])),
                        eta_bound: bound.as_ref().map_or(0.0, |b| b[i.min(b.len() - 1)]),
                    }
                })
                .collect();
            out.csv("trace.csv", |w| write_trace(w, &rows))?;
            out.json("offline.json", &admm_artifact(&st, sa)?)?;
            let last = rows.last().expect("iterate 0 is always present");
            let z = s.unscale(iterates.last().expect("nonempty"));
            let n_u = nu * p.horizon;
            Solution {
                method: sa.method,
                frac_bits: sa.frac_bits,
                iters: sa.iters,
                u0: z[..nu].to_vec(),
                u: z[..n_u].to_vec(),
                z,
                objective: last.objective,
                oracle_objective: f_star,
                residual: last.residual,
                eta_observed: twin.as_ref().map(|_| last.eta_observed),
                eta_bound: bound.as_ref().map(|_| last.eta_bound),
                int_bits,
            }
        }
    };
    out.json("solution.json", &solution)?;
    println!(
        "objective {:.9e} (oracle {:.9e}), u0 = {:?}",
        solution.objective, solution.oracle_objective, solution.u0
    );
    out.finish(cmd, None)
}

fn run_certify(cmd: &Command, a: &CertifyArgs) -> Result<()> {
    let sa = &a.solver;
    let b = sa
        .frac_bits
        .ok_or_else(|| Error::Config("certify needs --frac-bits".into()))?;
    if !(a.x_bound > 0.0) {
        return Err(Error::Config("--x-bound must be positive".into()));
    }
    let p = load(sa)?;
    let mut out = Outputs::new(&sa.out)?;
    let report = match sa.method {
        SolverArg::Fgm => {
            let np = p.nx() * 2 + p.nu();
            let (lo, hi) = (vec![-a.x_bound; np], vec![a.x_bound; np]);
            let st = fgm_setup(&p, sa, &lo, &hi)?;
            let (zl, zh) = st.fx.as_ref().expect("fixed point").bounds();
            out.json("offline.json", &FgmArtifact::new(&st.off, &zl, &zh)?)?;
            certify(&ErrorSystem::fgm(&st.off), b, st.q.n(), sa.iters, st.overflow, a.target_eta)?
        }
        SolverArg::Admm => {
            let st = admm_setup(&p, sa)?;
            out.json("offline_report.json", &st.off.report)?;
            out.json("offline.json", &admm_artifact(&st, sa)?)?;
            certify(&ErrorSystem::admm(&st.off), b, st.s.n(), sa.iters, None, a.target_eta)?
        }
    };
    out.json("report.json", &report)?;
    println!(
        "spectral radius {:.6}, stable {}, eta_bar[{}] = {:.3e}, asymptote {:.3e}",
        report.spectral_radius,
        report.schur.stable,
        sa.iters,
        report.eta_bar.last().copied().unwrap_or(0.0),
        report.asymptote
    );
    out.finish(cmd, None)?;
    if !report.schur.stable {
        return Err(Error::UnstableSystem(report.spectral_radius));
    }
    Ok(())
}

fn run_hwmodel(cmd: &Command, a: &HwArgs) -> Result<()> {
    let (family, n) = match (a.family, a.n_nu, a.n_a) {
        (SolverArg::Fgm, Some(n), None) => (Family::Fgm, n),
        (SolverArg::Admm, None, Some(n)) => (Family::Admm, n),
        (SolverArg::Fgm, _, _) => return Err(Error::Config("--family fgm needs --Nnu (and no --nA)".into())),
        (SolverArg::Admm, _, _) => return Err(Error::Config("--family admm needs --nA (and no --Nnu)".into())),
    };
    let template = HwParams {
        l_a: a.l_a,
        l_m: a.l_m,
        warm_start: a.warm_start,
        ..HwParams::new(1, 1.0, a.iters)
    };
    let rows = hwmodel::grid(family, Dims { n, nx: a.nx }, &a.p, &template, &a.clock)?;
    let mut buf = Vec::new();
    hwmodel::write_grid_csv(&mut buf, &rows, &a.clock)?;
    match &a.out {
        None => print!("{}", String::from_utf8_lossy(&buf)),
        Some(path) => {
            let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
            let name = path
                .file_name()
                .ok_or_else(|| Error::Config("--out must name a file".into()))?
                .to_string_lossy()
                .into_owned();
            let mut out = Outputs::new(dir)?;
            out.write(&name, &buf)?;
            out.finish(cmd, None)?;
        }
    }
    Ok(())
}

/// Exact-penalty checks on the oracle's closed-loop states and on random
/// samples.
#[derive(Serialize)]
struct PenaltySummary {
    closed_loop: PenaltyReport,
    random: PenaltyReport,
}

fn run_bench(cmd: &Command, a: &BenchArgs) -> Result<()> {
    let variant = match a.variant {
        VariantArg::Input => Variant::Input,
        VariantArg::Soft => Variant::Soft,
    };
    let method = match a.method {
        SolverArg::Fgm => Method::Fgm,
        SolverArg::Admm => Method::Admm,
    };
    let settings = BenchSettings {
        sigma1: a.sigma1,
        sigma2: a.sigma2,
        rho: a.rho,
        steps: a.steps,
    };
    let bm = bench::build_benchmark(variant, settings)?;
    // reject a variant/method mismatch before the sweep
    bench::Controller::new(&bm, bench::SolverConfig::double(method, 1), None)?;
    let opts = TableOptions {
        policy: a.policy.into(),
        warm_start: !a.cold_start,
        ..TableOptions::default()
    };
    let table = bench::cost_table(&bm, method, &a.b, &a.iters, opts)?;
    let mut out = Outputs::new(&a.out)?;
    out.csv("cost_table.csv", |w| table.write_csv(w))?;
    out.json("cost_table.json", &table)?;
    out.csv("traces/oracle.csv", |w| table.baseline.write_csv(w))?;
    for ((b, i), t) in &table.traces {
        out.csv(&format!("traces/b{b}_i{i}.csv"), |w| t.write_csv(w))?;
    }
    if variant == Variant::Soft {
        let check = |samples: &[(Vec<f64>, Reference)]| exact_penalty_check(&bm.problem, samples);
        let report = PenaltySummary {
            closed_loop: check(&bm.trace_samples(&table.baseline))?,
            random: check(&bm.random_samples(a.penalty_samples, a.seed))?,
        };
        out.json("penalty.json", &report)?;
    }
    print!("{}", String::from_utf8_lossy(&fs::read(a.out.join("cost_table.csv"))?));
    for f in &table.failures {
        eprintln!("failed cell: {f}");
    }
    out.finish(cmd, Some(a.seed))?;
    if !table.failures.is_empty() {
        return Err(Error::OracleFailure(format!("{} cells failed", table.failures.len())));
    }
    Ok(())
}
