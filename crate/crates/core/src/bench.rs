//! Oscillating-masses benchmark: plant, reference signal, closed-loop
//! simulation and the cost-degradation grid.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::admm::{admm_iterate, warm_start_shift, AdmmFormats, AdmmFx, AdmmMaxima, Padding};
use crate::certify::fgm_overflow_bounds;
use crate::error::{Error, Result};
use crate::fgm::{fgm_solve, shift_blocks, FgmFormats, FgmFx, FgmMaxima};
use crate::fxp::OverflowPolicy;
use crate::linalg::Mat;
use crate::model::{
    augment_for_rate_constraints, discretize_zoh, ConstraintSpec, CostWeights, LtiModel, MpcProblem, Reference,
    SoftBound,
};
use crate::transform::{
    build_sparse, condense, normalize_fgm, normalize_fgm_exact, precompute_admm, scale_soft_constraints,
    solve_mpc, AdmmOffline, CondensedQp, FgmOffline, OracleMode, SparseQp,
};

pub const MASSES: usize = 4;
pub const TS: f64 = 0.5;
pub const HORIZON: usize = 10;
pub const U_BOUND: f64 = 0.5;
pub const DU_BOUND: f64 = 0.1;
pub const POSITION_BOUND: f64 = 0.5;
pub const SEGMENT_STEPS: usize = 25;
/// Position setpoints of the reference segments.
pub const SEGMENTS: [[f64; MASSES]; 8] = [
    [0.25, 0.5, 0.5, 0.25],
    [-0.25, -0.25, -0.25, -0.25],
    [0.25, 0.25, 0.5, 0.25],
    [-0.25, -0.5, -0.25, -0.25],
    [0.25, 0.25, 0.25, 0.25],
    [-0.25, -0.5, -0.5, -0.25],
    [0.25, 0.5, 0.25, 0.25],
    [-0.25, -0.25, -0.5, -0.25],
];
/// Exact-arithmetic ADMM still needs a grid for the offline checks.
const EXACT_ADMM_BITS: u32 = 40;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Input box only; solved by FGM on the condensed problem.
    Input,
    /// Rate limits and soft position limits; solved by ADMM.
    Soft,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchSettings {
    pub sigma1: f64,
    pub sigma2: f64,
    pub rho: f64,
    pub steps: usize,
}

impl Default for BenchSettings {
    fn default() -> Self {
        BenchSettings {
            sigma1: 8.0,
            sigma2: 1.0,
            rho: 2.0,
            steps: SEGMENTS.len() * SEGMENT_STEPS,
        }
    }
}

/// Spring stiffness `tridiag(-1, 2, -1)` of masses chained between walls.
fn stiffness() -> Mat {
    Mat::from_fn(MASSES, MASSES, |i, j| match i.abs_diff(j) {
        0 => 2.0,
        1 => -1.0,
        _ => 0.0,
    })
}

/// Actuator `j` pushes mass `j` and pulls the element before it.
fn actuation() -> Mat {
    Mat::from_fn(MASSES, MASSES, |i, j| {
        if i == j {
            1.0
        } else if j == i + 1 {
            -1.0
        } else {
            0.0
        }
    })
}

/// Sampled plant with state `(positions, velocities)`.
pub fn plant() -> Result<LtiModel> {
    let m = MASSES;
    let mut ac = Mat::zeros(2 * m, 2 * m);
    ac.view_mut((0, m), (m, m)).fill_diagonal(1.0);
    ac.view_mut((m, 0), (m, m)).copy_from(&-stiffness());
    let mut bc = Mat::zeros(2 * m, m);
    bc.view_mut((m, 0), (m, m)).copy_from(&actuation());
    discretize_zoh(&ac, &bc, TS)
}

/// Input holding the masses at rest at `positions`.
pub fn steady_input(positions: &[f64]) -> Vec<f64> {
    let kp = stiffness() * crate::linalg::Vector::from_column_slice(positions);
    let mut u = vec![0.0; MASSES];
    for j in (0..MASSES).rev() {
        u[j] = kp[j] + if j + 1 < MASSES { u[j + 1] } else { 0.0 };
    }
    u
}

pub fn reference_for(positions: &[f64; MASSES]) -> Reference {
    let mut x = positions.to_vec();
    x.extend([0.0; MASSES]);
    Reference {
        x,
        u: steady_input(positions),
    }
}

/// Piecewise-constant setpoints, switching every [`SEGMENT_STEPS`] steps
/// and cycling through [`SEGMENTS`].
pub fn reference_signal(steps: usize) -> Vec<Reference> {
    (0..steps)
        .map(|k| reference_for(&SEGMENTS[(k / SEGMENT_STEPS) % SEGMENTS.len()]))
        .collect()
}

#[derive(Debug, Clone)]
pub struct Benchmark {
    pub variant: Variant,
    pub settings: BenchSettings,
    pub plant: LtiModel,
    /// Controller problem; for `Soft` its state is `(x, u_prev)`.
    pub problem: MpcProblem,
}

pub fn build_benchmark(variant: Variant, settings: BenchSettings) -> Result<Benchmark> {
    let plant = plant()?;
    let nx = plant.nx();
    let weights = CostWeights::new(Mat::identity(nx, nx), Mat::identity(MASSES, MASSES));
    let input = ConstraintSpec::input_box(vec![-U_BOUND; MASSES], vec![U_BOUND; MASSES], nx);
    let problem = match variant {
        Variant::Input => MpcProblem::new(plant.clone(), weights, input, HORIZON)?.validated()?,
        Variant::Soft => {
            let mut w = weights;
            w.sigma1 = settings.sigma1;
            w.sigma2 = settings.sigma2;
            let mut c = input;
            c.free = (MASSES..nx).collect();
            c.soft = (0..MASSES)
                .map(|index| SoftBound {
                    index,
                    center: 0.0,
                    radius: POSITION_BOUND,
                })
                .collect();
            let base = MpcProblem::new(plant.clone(), w, c, HORIZON)?;
            augment_for_rate_constraints(&base, &[-DU_BOUND; MASSES], &[DU_BOUND; MASSES])?
        }
    };
    Ok(Benchmark {
        variant,
        settings,
        plant,
        problem,
    })
}

impl Benchmark {
    pub fn controller_state(&self, x: &[f64], u_prev: &[f64]) -> Vec<f64> {
        match self.variant {
            Variant::Input => x.to_vec(),
            Variant::Soft => x.iter().chain(u_prev).copied().collect(),
        }
    }

    pub fn controller_reference(&self, r: &Reference) -> Reference {
        match self.variant {
            Variant::Input => r.clone(),
            Variant::Soft => r.augmented(),
        }
    }

    /// Plant input from the first controller input; rate-form inputs are
    /// integrated and saturated at the actuator limits.
    pub fn applied_input(&self, u_prev: &[f64], first: &[f64]) -> Vec<f64> {
        match self.variant {
            Variant::Input => first.to_vec(),
            Variant::Soft => u_prev
                .iter()
                .zip(first)
                .map(|(a, d)| (a + d).clamp(-U_BOUND, U_BOUND))
                .collect(),
        }
    }

    /// Stage cost on deviations from the reference, without slack terms.
    pub fn tracking_cost(&self, x: &[f64], u: &[f64], r: &Reference) -> f64 {
        let dx: Vec<f64> = x.iter().zip(&r.x).map(|(a, b)| a - b).collect();
        let du: Vec<f64> = u.iter().zip(&r.u).map(|(a, b)| a - b).collect();
        let nx = self.plant.nx();
        CostWeights::new(Mat::identity(nx, nx), Mat::identity(MASSES, MASSES)).stage_cost(&dx, &du)
    }

    /// Controller states and references visited by a closed-loop run.
    pub fn trace_samples(&self, trace: &SimulationTrace) -> Vec<(Vec<f64>, Reference)> {
        trace
            .records
            .iter()
            .map(|r| {
                let rf = Reference {
                    x: r.x_ref.clone(),
                    u: r.u_ref.clone(),
                };
                (r.controller_state.clone(), self.controller_reference(&rf))
            })
            .collect()
    }

    /// `count` controller states and references: plant states uniform in
    /// `[-0.5, 0.5]`, previous inputs uniform in the input box, references
    /// drawn from the segments.
    pub fn random_samples(&self, count: usize, seed: u64) -> Vec<(Vec<f64>, Reference)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count)
            .map(|_| {
                let x: Vec<f64> = (0..self.plant.nx()).map(|_| rng.gen_range(-0.5..0.5)).collect();
                let u: Vec<f64> = (0..MASSES).map(|_| rng.gen_range(-U_BOUND..U_BOUND)).collect();
                let r = reference_for(&SEGMENTS[rng.gen_range(0..SEGMENTS.len())]);
                (self.controller_state(&x, &u), self.controller_reference(&r))
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Oracle,
    Fgm,
    Admm,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub method: Method,
    /// `None` for double precision.
    pub frac_bits: Option<u32>,
    pub iters: usize,
    pub warm_start: bool,
    pub policy: OverflowPolicy,
}

impl SolverConfig {
    pub fn oracle() -> Self {
        SolverConfig {
            method: Method::Oracle,
            frac_bits: None,
            iters: 0,
            warm_start: false,
            policy: OverflowPolicy::Checked,
        }
    }

    pub fn double(method: Method, iters: usize) -> Self {
        SolverConfig {
            method,
            frac_bits: None,
            iters,
            warm_start: method != Method::Oracle,
            policy: OverflowPolicy::Checked,
        }
    }

    pub fn fixed(method: Method, frac_bits: u32, iters: usize) -> Self {
        SolverConfig {
            frac_bits: Some(frac_bits),
            ..Self::double(method, iters)
        }
    }
}

/// Offline FGM data for the input-constrained benchmark.
pub fn fgm_offline(bench: &Benchmark, frac_bits: Option<u32>) -> Result<(CondensedQp, FgmOffline)> {
    let q = condense(&bench.problem)?;
    let off = match frac_bits {
        Some(b) => normalize_fgm(&q, b)?,
        None => normalize_fgm_exact(&q),
    };
    Ok((q, off))
}

/// Offline ADMM data for the soft-constrained benchmark, in coordinates
/// where the soft states and slacks are divided by `sigma1`.
pub fn admm_offline(bench: &Benchmark, frac_bits: Option<u32>) -> Result<(SparseQp, AdmmOffline)> {
    let s = scale_soft_constraints(&build_sparse(&bench.problem)?, bench.settings.sigma1)?;
    let off = precompute_admm(&s, bench.settings.rho, frac_bits.unwrap_or(EXACT_ADMM_BITS))?;
    Ok((s, off))
}

#[derive(Debug, Clone)]
enum Engine {
    Oracle,
    Fgm {
        q: CondensedQp,
        off: FgmOffline,
        fx: Option<FgmFx>,
    },
    Admm {
        s: SparseQp,
        off: AdmmOffline,
        fx: Option<AdmmFx>,
    },
}

/// Formats for a fixed-point controller.
#[derive(Debug, Clone, Copy)]
pub enum Formats {
    Fgm(FgmFormats),
    Admm(AdmmFormats),
}

/// A configured solver with its warm-start memory.
#[derive(Debug, Clone)]
pub struct Controller {
    pub config: SolverConfig,
    problem: MpcProblem,
    engine: Engine,
    warm: Option<(Vec<f64>, Vec<f64>)>,
    pub fgm_maxima: FgmMaxima,
    pub admm_maxima: AdmmMaxima,
}

impl Controller {
    /// `formats` is required exactly when `config.frac_bits` is set.
    pub fn new(bench: &Benchmark, config: SolverConfig, formats: Option<Formats>) -> Result<Self> {
        let engine = match (config.method, bench.variant) {
            (Method::Oracle, _) => Engine::Oracle,
            (Method::Fgm, Variant::Input) => {
                let (q, off) = fgm_offline(bench, config.frac_bits)?;
                let fx = match (config.frac_bits, formats) {
                    (None, _) => None,
                    (Some(_), Some(Formats::Fgm(f))) => Some(FgmFx::new(&off, &q, f, config.policy)?),
                    _ => return Err(Error::Config("fixed-point FGM needs FGM formats".into())),
                };
                Engine::Fgm { q, off, fx }
            }
            (Method::Admm, Variant::Soft) => {
                let (s, off) = admm_offline(bench, config.frac_bits)?;
                let fx = match (config.frac_bits, formats) {
                    (None, _) => None,
                    (Some(_), Some(Formats::Admm(f))) => Some(AdmmFx::new(&off, &s, f, config.policy)?),
                    _ => return Err(Error::Config("fixed-point ADMM needs ADMM formats".into())),
                };
                Engine::Admm { s, off, fx }
            }
            (m, v) => {
                return Err(Error::Config(format!("method {m:?} does not apply to the {v:?} benchmark")));
            }
        };
        Ok(Controller {
            config,
            problem: bench.problem.clone(),
            engine,
            warm: None,
            fgm_maxima: FgmMaxima::default(),
            admm_maxima: AdmmMaxima::default(),
        })
    }

    pub fn reset(&mut self) {
        self.warm = None;
    }

    /// First controller input at controller state `xc` and reference `rc`.
    pub fn control(&mut self, xc: &[f64], rc: &Reference) -> Result<Vec<f64>> {
        let nu = self.problem.nu();
        let iters = self.config.iters;
        match &self.engine {
            Engine::Oracle => Ok(solve_mpc(&self.problem, xc, rc, OracleMode::Penalty)?.u[..nu].to_vec()),
            Engine::Fgm { q, off, fx } => {
                let param = q.param(xc, rc);
                let z0 = if self.config.warm_start {
                    self.warm.as_ref().map(|(z, _)| z.as_slice())
                } else {
                    None
                };
                let z = match fx {
                    None => fgm_solve(off, q, &param, iters, z0)?.z,
                    Some(fx) => {
                        let run = fx.solve(&param, iters, z0)?;
                        self.fgm_maxima.merge(&run.maxima);
                        run.z
                    }
                };
                if self.config.warm_start {
                    self.warm = Some((shift_blocks(&z, nu)?, Vec::new()));
                }
                Ok(z[..nu].to_vec())
            }
            Engine::Admm { s, off, fx } => {
                let h = s.h(rc);
                let bx = s.b(xc);
                let warm = if self.config.warm_start { self.warm.as_ref() } else { None };
                let (z0, nu0) = match warm {
                    Some((z, v)) => (Some(z.as_slice()), Some(v.as_slice())),
                    None => (None, None),
                };
                let (z, nu_out) = match fx {
                    None => {
                        let n = s.n();
                        let zeros = vec![0.0; n];
                        let m12b = &off.m12 * &bx;
                        let run = admm_iterate(
                            &off.m11,
                            m12b.as_slice(),
                            off.rho,
                            h.as_slice(),
                            &s.layout.components,
                            iters,
                            z0.unwrap_or(&zeros),
                            nu0.unwrap_or(&zeros),
                        );
                        (run.z, run.nu)
                    }
                    Some(fx) => {
                        let run = fx.solve(h.as_slice(), bx.as_slice(), iters, z0, nu0)?;
                        self.admm_maxima.merge(&run.maxima);
                        (run.z, run.nu)
                    }
                };
                let u = s.unscale(&z[..nu])[..nu].to_vec();
                if self.config.warm_start {
                    self.warm = Some(warm_start_shift(&z, &nu_out, &s.layout, Padding::Repeat)?);
                }
                Ok(u)
            }
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StepRecord {
    pub step: usize,
    /// Plant state before the input is applied.
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub x_ref: Vec<f64>,
    pub u_ref: Vec<f64>,
    pub stage_cost: f64,
    /// Controller state `x` or `(x, u_prev)`.
    #[serde(skip)]
    pub controller_state: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulationTrace {
    pub records: Vec<StepRecord>,
    pub average_cost: f64,
    /// Steps with some input component at its limit.
    pub input_active_steps: usize,
    /// Steps with some position at or beyond its soft limit.
    pub soft_active_steps: usize,
    pub max_dynamics_residual: f64,
}

impl SimulationTrace {
    /// Per-step CSV: step, positions, inputs, position references, cost.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let mut header = vec!["step".to_string()];
        header.extend((1..=MASSES).map(|i| format!("p{i}")));
        header.extend((1..=MASSES).map(|i| format!("u{i}")));
        header.extend((1..=MASSES).map(|i| format!("p{i}_ref")));
        header.push("stage_cost".into());
        wr.write_record(&header)?;
        for r in &self.records {
            let mut rec = vec![r.step.to_string()];
            rec.extend(r.x[..MASSES].iter().map(|v| format!("{v:.9}")));
            rec.extend(r.u.iter().map(|v| format!("{v:.9}")));
            rec.extend(r.x_ref[..MASSES].iter().map(|v| format!("{v:.9}")));
            rec.push(format!("{:.9}", r.stage_cost));
            wr.write_record(&rec)?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// Runs the loop from rest over `refs`.
pub fn closed_loop_sim(bench: &Benchmark, ctrl: &mut Controller, refs: &[Reference]) -> Result<SimulationTrace> {
    ctrl.reset();
    let nx = bench.plant.nx();
    let mut x = vec![0.0; nx];
    let mut u_prev = vec![0.0; MASSES];
    let mut records = Vec::with_capacity(refs.len());
    let (mut input_active, mut soft_active) = (0, 0);
    let mut residual: f64 = 0.0;
    let a = bench.plant.a();
    let b = bench.plant.b();
    for (k, r) in refs.iter().enumerate() {
        let xc = bench.controller_state(&x, &u_prev);
        let first = ctrl.control(&xc, &bench.controller_reference(r))?;
        let u = bench.applied_input(&u_prev, &first);
        if u.iter().any(|v| v.abs() >= U_BOUND - 1e-6) {
            input_active += 1;
        }
        if x[..MASSES].iter().any(|p| p.abs() >= POSITION_BOUND - 1e-6) {
            soft_active += 1;
        }
        let cost = bench.tracking_cost(&x, &u, r);
        let next = bench.plant.step(&x, &u);
        let check = a * crate::linalg::Vector::from_column_slice(&x) + b * crate::linalg::Vector::from_column_slice(&u);
        residual = residual.max(next.iter().zip(check.iter()).fold(0.0, |m, (p, q)| m.max((p - q).abs())));
        records.push(StepRecord {
            step: k,
            x: x.clone(),
            u: u.clone(),
            x_ref: r.x.clone(),
            u_ref: r.u.clone(),
            stage_cost: cost,
            controller_state: xc,
        });
        x = next;
        u_prev = u;
    }
    let average_cost = records.iter().map(|r| r.stage_cost).sum::<f64>() / records.len().max(1) as f64;
    Ok(SimulationTrace {
        records,
        average_cost,
        input_active_steps: input_active,
        soft_active_steps: soft_active,
        max_dynamics_residual: residual,
    })
}

/// Parameter box `(x, x_ref, u_ref)` covering `trace` with a margin factor.
pub fn parameter_box(bench: &Benchmark, trace: &SimulationTrace, factor: f64) -> (Vec<f64>, Vec<f64>) {
    let mut hi: Vec<f64> = Vec::new();
    for r in &trace.records {
        let rc = bench.controller_reference(&Reference {
            x: r.x_ref.clone(),
            u: r.u_ref.clone(),
        });
        let p: Vec<f64> = r.controller_state.iter().chain(&rc.x).chain(&rc.u).map(|v| v.abs()).collect();
        if hi.is_empty() {
            hi = p;
        } else {
            for (h, v) in hi.iter_mut().zip(p) {
                *h = h.max(v);
            }
        }
    }
    let hi: Vec<f64> = hi.iter().map(|v| v * factor).collect();
    (hi.iter().map(|v| -v).collect(), hi)
}

/// FGM formats from the a-priori bounds over `param_box`.
pub fn fgm_formats(bench: &Benchmark, frac_bits: u32, param_box: &(Vec<f64>, Vec<f64>)) -> Result<FgmFormats> {
    let (q, off) = fgm_offline(bench, Some(frac_bits))?;
    let probe = FgmFx::new(&off, &q, FgmFormats::uniform(crate::fxp::FxFormat::new(62 - frac_bits, frac_bits)?), OverflowPolicy::Checked)?;
    Ok(fgm_overflow_bounds(&off, &probe, &param_box.0, &param_box.1)?.formats)
}

/// Signal maxima of a wide-format ADMM closed loop.
pub fn admm_calibrate(bench: &Benchmark, frac_bits: u32, iters: usize, refs: &[Reference]) -> Result<AdmmMaxima> {
    let mut c = Controller::new(
        bench,
        SolverConfig::fixed(Method::Admm, frac_bits, iters),
        Some(Formats::Admm(AdmmFormats::wide(frac_bits)?)),
    )?;
    closed_loop_sim(bench, &mut c, refs)?;
    Ok(c.admm_maxima)
}

/// Integer-bit safety factor over simulated ADMM maxima.
pub const ADMM_SAFETY: f64 = 2.0;

/// Relative closed-loop cost over a `(b, I_max)` grid.
#[derive(Debug, Clone, Serialize)]
pub struct CostComparison {
    pub method: Method,
    pub baseline_cost: f64,
    pub frac_bits: Vec<u32>,
    pub iters: Vec<usize>,
    /// `cost[i][j]` at `iters[i]`, `frac_bits[j]`; `None` where the run failed.
    pub cost: Vec<Vec<Option<f64>>>,
    /// `100 (J - J_ref) / J_ref`.
    pub percent: Vec<Vec<Option<f64>>>,
    pub failures: Vec<String>,
    /// Closed-loop trace of every successful cell, keyed by `(b, I_max)`.
    #[serde(skip)]
    pub traces: Vec<((u32, usize), SimulationTrace)>,
    #[serde(skip)]
    pub baseline: SimulationTrace,
}

impl CostComparison {
    pub fn cell(&self, b: u32, iters: usize) -> Option<f64> {
        let j = self.frac_bits.iter().position(|v| *v == b)?;
        let i = self.iters.iter().position(|v| *v == iters)?;
        self.percent[i][j]
    }

    /// Rows `I_max`, columns `b`, as in the usual table layout.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let mut header = vec!["iters".to_string()];
        header.extend(self.frac_bits.iter().map(|b| format!("b{b}")));
        wr.write_record(&header)?;
        for (i, row) in self.percent.iter().enumerate() {
            let mut rec = vec![self.iters[i].to_string()];
            rec.extend(row.iter().map(|v| match v {
                Some(p) => format!("{p:.4}"),
                None => "nan".into(),
            }));
            wr.write_record(&rec)?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// Sweep parallelism: `FIXMPC_THREADS` if set, else rayon's default.
pub fn thread_pool() -> Result<rayon::ThreadPool> {
    let n = match std::env::var("FIXMPC_THREADS") {
        Ok(v) => v
            .parse::<usize>()
            .map_err(|_| Error::Config(format!("FIXMPC_THREADS = {v:?} is not a count")))?,
        Err(_) => 0,
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build()
        .map_err(|e| Error::Config(e.to_string()))
}

/// Options of [`cost_table`].
#[derive(Debug, Clone, Copy)]
pub struct TableOptions {
    pub policy: OverflowPolicy,
    pub warm_start: bool,
    /// Margin on the observed parameter envelope for the FGM bounds.
    pub envelope_factor: f64,
}

impl Default for TableOptions {
    fn default() -> Self {
        TableOptions {
            policy: OverflowPolicy::Checked,
            warm_start: true,
            envelope_factor: 1.5,
        }
    }
}

/// Runs the oracle baseline, allocates integer bits (a-priori bounds for
/// FGM, simulation for ADMM) and fills the grid in parallel.
pub fn cost_table(
    bench: &Benchmark,
    method: Method,
    frac_bits: &[u32],
    iters: &[usize],
    opts: TableOptions,
) -> Result<CostComparison> {
    if frac_bits.is_empty() || iters.is_empty() {
        return Err(Error::Config("empty grid".into()));
    }
    let refs = reference_signal(bench.settings.steps);
    let mut oracle = Controller::new(bench, SolverConfig::oracle(), None)?;
    let baseline = closed_loop_sim(bench, &mut oracle, &refs)?;
    let j_ref = baseline.average_cost;

    let admm_maxima = match method {
        Method::Admm => {
            let i_max = *iters.iter().max().unwrap_or(&1);
            let b_max = *frac_bits.iter().max().unwrap_or(&16);
            Some(admm_calibrate(bench, b_max, i_max, &refs)?)
        }
        _ => None,
    };
    let pbox = parameter_box(bench, &baseline, opts.envelope_factor);

    let cells: Vec<(usize, usize)> = (0..iters.len())
        .flat_map(|i| (0..frac_bits.len()).map(move |j| (i, j)))
        .collect();
    let pool = thread_pool()?;
    let results: Vec<Result<SimulationTrace>> = pool.install(|| {
        cells
            .par_iter()
            .map(|&(i, j)| {
                let b = frac_bits[j];
                let formats = match method {
                    Method::Fgm => Formats::Fgm(fgm_formats(bench, b, &pbox)?),
                    Method::Admm => Formats::Admm(AdmmFormats::from_maxima(
                        admm_maxima.as_ref().expect("calibrated"),
                        b,
                        ADMM_SAFETY,
                    )?),
                    Method::Oracle => return Err(Error::Config("the oracle is the baseline".into())),
                };
                let cfg = SolverConfig {
                    warm_start: opts.warm_start,
                    policy: opts.policy,
                    ..SolverConfig::fixed(method, b, iters[i])
                };
                let mut c = Controller::new(bench, cfg, Some(formats))?;
                closed_loop_sim(bench, &mut c, &refs)
            })
            .collect()
    });
    let mut cost = vec![vec![None; frac_bits.len()]; iters.len()];
    let mut percent = cost.clone();
    let mut failures = Vec::new();
    let mut traces = Vec::new();
    for (&(i, j), r) in cells.iter().zip(results) {
        match r {
            Ok(t) => {
                let c = t.average_cost;
                cost[i][j] = Some(c);
                percent[i][j] = Some(100.0 * (c - j_ref) / j_ref);
                traces.push(((frac_bits[j], iters[i]), t));
            }
            Err(e) => failures.push(format!("b = {}, iters = {}: {e}", frac_bits[j], iters[i])),
        }
    }
    Ok(CostComparison {
        method,
        baseline_cost: j_ref,
        frac_bits: frac_bits.to_vec(),
        iters: iters.to_vec(),
        cost,
        percent,
        failures,
        traces,
        baseline,
    })
}
