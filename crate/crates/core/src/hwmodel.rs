//! Cycle counts and resource usage of the parallel solver datapaths.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Fgm,
    Admm,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HwParams {
    /// Number of parallel dot-product units.
    pub p: usize,
    /// Adder latency in cycles.
    pub l_a: u64,
    /// Multiplier latency in cycles.
    pub l_m: u64,
    pub clock_hz: f64,
    pub iterations: u64,
    /// One extra cycle per iteration for the warm-start shift.
    pub warm_start: bool,
}

impl HwParams {
    pub fn new(p: usize, clock_hz: f64, iterations: u64) -> Self {
        HwParams {
            p,
            l_a: 1,
            l_m: 1,
            clock_hz,
            iterations,
            warm_start: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LatencyReport {
    pub cycles_per_iter: u64,
    pub total_cycles: u64,
    pub sample_time_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ResourceReport {
    pub multipliers: u64,
    pub adders: u64,
    pub memory_blocks: u64,
    pub memory_depth: u64,
}

fn ceil_div(a: usize, b: usize) -> u64 {
    a.div_ceil(b) as u64
}

fn ceil_log2(n: usize) -> u64 {
    if n <= 1 {
        0
    } else {
        (usize::BITS - (n - 1).leading_zeros()) as u64
    }
}

fn check(dim: usize, hw: &HwParams) -> Result<()> {
    if dim == 0 || hw.p == 0 || hw.p > dim {
        return Err(Error::Parameter(format!("parallelism {} must lie in 1..={dim}", hw.p)));
    }
    if !(hw.clock_hz > 0.0) {
        return Err(Error::Parameter("clock frequency must be positive".into()));
    }
    Ok(())
}

fn report(cycles: u64, hw: &HwParams) -> LatencyReport {
    let cycles = cycles + u64::from(hw.warm_start);
    let total = cycles * hw.iterations;
    LatencyReport {
        cycles_per_iter: cycles,
        total_cycles: total,
        sample_time_s: total as f64 / hw.clock_hz,
    }
}

/// FGM with `n_nu = N n_u` decision variables.
pub fn fgm_latency(n_nu: usize, hw: &HwParams) -> Result<LatencyReport> {
    check(n_nu, hw)?;
    let c = ceil_div(n_nu, hw.p) + hw.l_a * ceil_log2(n_nu) + 2 * hw.l_m + 3 * hw.l_a + 1;
    Ok(report(c, hw))
}

/// ADMM with `n_a` sparse decision variables.
pub fn admm_latency(n_a: usize, hw: &HwParams) -> Result<LatencyReport> {
    check(n_a, hw)?;
    let c = ceil_div(n_a, hw.p) + hw.l_a * ceil_log2(n_a) + hw.l_m + 6 * hw.l_a + 2;
    Ok(report(c, hw))
}

/// Dimensions entering the resource count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    /// `N n_u` for FGM, `n_A` for ADMM.
    pub n: usize,
    pub nx: usize,
}

pub fn resources(family: Family, dims: Dims, p: usize) -> Result<ResourceReport> {
    if p == 0 || p > dims.n {
        return Err(Error::Parameter(format!("parallelism {p} must lie in 1..={}", dims.n)));
    }
    let (pp, n) = (p as u64, dims.n as u64);
    Ok(match family {
        Family::Fgm => ResourceReport {
            multipliers: pp * (n + 2),
            adders: pp * (n + 3),
            memory_blocks: pp * (n + dims.nx as u64 + 4),
            memory_depth: ceil_div(dims.n, p),
        },
        Family::Admm => ResourceReport {
            multipliers: pp * n,
            adders: pp * (n + 15),
            memory_blocks: pp * (n + 8),
            memory_depth: ceil_div(dims.n, p),
        },
    })
}

/// Embedded multiplier counts of the devices considered, smallest first
/// within each family.
pub const VIRTEX6: &[(&str, u64)] = &[
    ("LX75", 288),
    ("LX130", 480),
    ("LX240", 768),
    ("LX550", 864),
    ("SX315", 1344),
    ("SX475", 2016),
];
pub const SPARTAN6: &[(&str, u64)] = &[("LX45", 58), ("LX75", 132), ("LX100", 180)];

/// Smallest device with at least `multipliers` multipliers.
pub fn suggest_chip(devices: &[(&'static str, u64)], multipliers: u64) -> Option<&'static str> {
    devices.iter().find(|(_, m)| *m >= multipliers).map(|(n, _)| *n)
}

/// One column of the performance grid.
#[derive(Debug, Clone, Serialize)]
pub struct GridRow {
    pub family: Family,
    pub p: usize,
    pub multipliers: u64,
    pub adders: u64,
    pub memory_blocks: u64,
    pub memory_depth: u64,
    pub cycles_per_iter: u64,
    /// Sample time in microseconds at each clock, in the order given.
    pub sample_time_us: Vec<f64>,
    pub virtex6_chip: Option<&'static str>,
    pub spartan6_chip: Option<&'static str>,
}

/// Sample times and resources over `ps` at every clock in `clocks_hz`.
pub fn grid(family: Family, dims: Dims, ps: &[usize], template: &HwParams, clocks_hz: &[f64]) -> Result<Vec<GridRow>> {
    ps.iter()
        .map(|&p| {
            let res = resources(family, dims, p)?;
            let mut times = Vec::with_capacity(clocks_hz.len());
            let mut cycles = 0;
            for &clk in clocks_hz {
                let hw = HwParams {
                    p,
                    clock_hz: clk,
                    ..*template
                };
                let lat = match family {
                    Family::Fgm => fgm_latency(dims.n, &hw)?,
                    Family::Admm => admm_latency(dims.n, &hw)?,
                };
                cycles = lat.cycles_per_iter;
                times.push(lat.sample_time_s * 1e6);
            }
            Ok(GridRow {
                family,
                p,
                multipliers: res.multipliers,
                adders: res.adders,
                memory_blocks: res.memory_blocks,
                memory_depth: res.memory_depth,
                cycles_per_iter: cycles,
                sample_time_us: times,
                virtex6_chip: suggest_chip(VIRTEX6, res.multipliers),
                spartan6_chip: suggest_chip(SPARTAN6, res.multipliers),
            })
        })
        .collect()
}

/// CSV with one row per `P`; sample-time columns are named after the
/// clocks in MHz.
pub fn write_grid_csv<W: std::io::Write>(w: W, rows: &[GridRow], clocks_hz: &[f64]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    let mut header: Vec<String> = ["family", "p", "multipliers", "adders", "memory_blocks", "memory_depth", "cycles_per_iter"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend(clocks_hz.iter().map(|c| format!("ts_us_{}mhz", c / 1e6)));
    header.extend(["virtex6_chip".to_string(), "spartan6_chip".to_string()]);
    wr.write_record(&header)?;
    for r in rows {
        let mut rec = vec![
            match r.family {
                Family::Fgm => "fgm".to_string(),
                Family::Admm => "admm".to_string(),
            },
            r.p.to_string(),
            r.multipliers.to_string(),
            r.adders.to_string(),
            r.memory_blocks.to_string(),
            r.memory_depth.to_string(),
            r.cycles_per_iter.to_string(),
        ];
        rec.extend(r.sample_time_us.iter().map(|t| format!("{t:.4}")));
        rec.push(r.virtex6_chip.unwrap_or("-").to_string());
        rec.push(r.spartan6_chip.unwrap_or("-").to_string());
        wr.write_record(&rec)?;
    }
    wr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fgm_examples() {
        let hw = HwParams::new(1, 400e6, 15);
        let r = fgm_latency(40, &hw).unwrap();
        assert_eq!(r.cycles_per_iter, 52);
        assert!((r.sample_time_s * 1e6 - 1.95).abs() < 1e-9);
        let r = fgm_latency(40, &HwParams { p: 4, ..hw }).unwrap();
        assert_eq!(r.cycles_per_iter, 22);
        let r = fgm_latency(40, &HwParams { clock_hz: 230e6, ..hw }).unwrap();
        assert!((r.sample_time_s * 1e6 - 3.3913).abs() < 1e-4);
        assert!(fgm_latency(40, &HwParams { p: 41, ..hw }).is_err());
        assert!(fgm_latency(40, &HwParams { p: 0, ..hw }).is_err());
    }

    #[test]
    fn admm_examples() {
        let hw = HwParams {
            warm_start: true,
            ..HwParams::new(1, 400e6, 40)
        };
        assert_eq!(admm_latency(216, &hw).unwrap().cycles_per_iter, 234);
        let r = admm_latency(216, &HwParams { p: 2, ..hw }).unwrap();
        assert_eq!((r.cycles_per_iter, r.total_cycles), (126, 5040));
        assert_eq!(admm_latency(216, &HwParams { p: 7, ..hw }).unwrap().cycles_per_iter, 49);
    }

    #[test]
    fn resource_examples() {
        let d = Dims { n: 40, nx: 8 };
        assert_eq!(resources(Family::Fgm, d, 1).unwrap().multipliers, 42);
        assert_eq!(resources(Family::Fgm, d, 32).unwrap().multipliers, 1344);
        assert_eq!(resources(Family::Fgm, d, 3).unwrap().memory_depth, 14);
        assert_eq!(resources(Family::Admm, Dims { n: 216, nx: 12 }, 5).unwrap().multipliers, 1080);
    }

    #[test]
    fn chips() {
        assert_eq!(suggest_chip(VIRTEX6, 42), Some("LX75"));
        assert_eq!(suggest_chip(VIRTEX6, 1344), Some("SX315"));
        assert_eq!(suggest_chip(SPARTAN6, 168), Some("LX100"));
        assert_eq!(suggest_chip(SPARTAN6, 336), None);
    }

    #[test]
    fn log2_ceiling() {
        assert_eq!(
            [1, 2, 3, 4, 5, 40, 216].map(ceil_log2),
            [0, 1, 2, 2, 3, 6, 8]
        );
    }
}
