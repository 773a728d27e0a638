//! Multicore scaling: memory-bus utilization, saturation performance,
//! topology effects and barrier overhead, plus fitting of the conflict
//! parameter `p0`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Read;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::format::trim;
use crate::hierarchy::{Component, Level};
use crate::kernel::KernelModel;
use crate::machine::MachineModel;
use crate::predictor::{evaluate_rule, predict_with, PredictOptions, Prediction};
use crate::traffic::Residence;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Placement {
    /// Fill one domain before the next.
    #[default]
    Close,
    /// Round-robin over domains.
    Spread,
}

impl std::str::FromStr for Placement {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "close" => Ok(Placement::Close),
            "spread" => Ok(Placement::Spread),
            other => Err(Error::InvalidInput(format!(
                "unknown placement `{other}` (expected close or spread)"
            ))),
        }
    }
}

/// Measured synchronization cost per thread count, interpolated linearly
/// and clamped at both ends.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BarrierTable {
    points: Vec<(usize, f64)>,
}

impl BarrierTable {
    pub fn new(mut points: Vec<(usize, f64)>) -> Result<Self> {
        if let Some(&(n, c)) = points.iter().find(|(n, c)| *n == 0 || !(*c >= 0.0)) {
            return Err(Error::InvalidInput(format!(
                "barrier entry ({n} threads, {c} cycles) is invalid"
            )));
        }
        points.sort_by_key(|p| p.0);
        if points.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::InvalidInput("duplicate thread count in barrier table".into()));
        }
        Ok(BarrierTable { points })
    }

    pub fn points(&self) -> &[(usize, f64)] {
        &self.points
    }

    /// Cycles per synchronization with `threads` threads.
    pub fn cost(&self, threads: usize) -> f64 {
        let p = &self.points;
        let Some(first) = p.first() else { return 0.0 };
        if threads <= first.0 {
            return first.1;
        }
        for w in p.windows(2) {
            let ((n0, c0), (n1, c1)) = (w[0], w[1]);
            if threads <= n1 {
                let t = (threads - n0) as f64 / (n1 - n0) as f64;
                return c0 + t * (c1 - c0);
            }
        }
        p.last().unwrap().1
    }
}

#[derive(Debug, Deserialize)]
struct BarrierRow {
    threads: usize,
    cycles: f64,
}

/// Reads a `threads,cycles` table.
pub fn read_barrier_csv<R: Read>(reader: R) -> Result<BarrierTable> {
    let mut rows = Vec::new();
    for row in csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader).deserialize() {
        let row: BarrierRow = row?;
        rows.push((row.threads, row.cycles));
    }
    BarrierTable::new(rows)
}

#[derive(Debug, Deserialize)]
struct MeasuredRow {
    cores: usize,
    performance_it_per_s: f64,
}

/// Reads a `cores,performance_it_per_s` table.
pub fn read_scaling_csv<R: Read>(reader: R) -> Result<Vec<(usize, f64)>> {
    let mut rows = Vec::new();
    for row in csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader).deserialize() {
        let row: MeasuredRow = row?;
        if row.cores == 0 || !(row.performance_it_per_s > 0.0) {
            return Err(Error::InvalidInput(format!(
                "measurement for {} cores must have positive performance",
                row.cores
            )));
        }
        rows.push((row.cores, row.performance_it_per_s));
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingOptions {
    /// Conflict parameter in cycles.
    pub p0: f64,
    pub barrier: BarrierTable,
    /// When set, all cores share one domain whose memory links run at
    /// this many bytes per cycle.
    pub contended_bandwidth: Option<f64>,
    pub placement: Placement,
    pub residence: Option<Residence>,
    pub execution: Execution,
}

impl Default for ScalingOptions {
    fn default() -> Self {
        ScalingOptions {
            p0: 0.0,
            barrier: BarrierTable::default(),
            contended_bandwidth: None,
            placement: Placement::Close,
            residence: None,
            execution: Execution::default(),
        }
    }
}

impl ScalingOptions {
    fn check(&self) -> Result<()> {
        if !(self.p0 >= 0.0) || !self.p0.is_finite() {
            return Err(Error::InvalidInput(format!("p0 must be >= 0, got {}", self.p0)));
        }
        if let Some(bw) = self.contended_bandwidth {
            if !(bw > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "contended bandwidth must be positive, got {bw}"
                )));
            }
        }
        Ok(())
    }
}

/// Utilization for `1..=n` active cores. `denominator(j, conflict)` is the
/// runtime of one of `j` active cores with `conflict` cycles added to its
/// memory terms.
pub fn utilization_series(
    n: usize,
    t_mem_data: f64,
    p0: f64,
    denominator: impl Fn(usize, f64) -> f64,
) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::with_capacity(n);
    for j in 1..=n {
        let conflict = match out.last() {
            Some(&prev) => prev * (j - 1) as f64 * p0,
            None => 0.0,
        };
        let u = j as f64 * t_mem_data / denominator(j, conflict);
        out.push(u.min(1.0));
    }
    out
}

/// Utilization with `n` active cores when all memory terms are serial.
pub fn utilization(n: usize, t_mem_data: f64, t_full: f64, p0: f64) -> f64 {
    utilization_series(n, t_mem_data, p0, |_, conflict| t_full + conflict)
        .last()
        .copied()
        .unwrap_or(0.0)
}

/// Work units per second at full memory-bus utilization.
pub fn p_sat(work_per_iter: f64, t_mem_data: f64, frequency_ghz: f64) -> f64 {
    work_per_iter / t_mem_data * frequency_ghz * 1e9
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingPoint {
    pub cores: usize,
    /// Largest memory-bus utilization over the active domains; `None` when
    /// the data stays in caches.
    pub utilization: Option<f64>,
    /// Cycles per iteration on each core, barrier overhead included.
    pub cycles: f64,
    /// Aggregate work units per second.
    pub performance: f64,
    pub saturated: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingCurve {
    pub kernel: String,
    pub machine: String,
    pub frequency_ghz: f64,
    pub work_per_iter: f64,
    /// Loop iterations of one kernel invocation.
    pub iterations: f64,
    /// Aggregate saturation performance over all domains that can be
    /// active; `None` for cache-resident data.
    pub p_sat: Option<f64>,
    pub points: Vec<ScalingPoint>,
}

impl ScalingCurve {
    pub fn point(&self, cores: usize) -> Option<&ScalingPoint> {
        self.points.iter().find(|p| p.cores == cores)
    }

    pub fn cores(&self) -> Vec<usize> {
        self.points.iter().map(|p| p.cores).collect()
    }

    pub fn render_csv(&self) -> String {
        let mut s = String::from("cores,u,perf_git_s\n");
        for p in &self.points {
            let u = p.utilization.map(trim).unwrap_or_default();
            let _ = writeln!(s, "{},{},{}", p.cores, u, trim(p.performance / 1e9));
        }
        s
    }

    pub fn render_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{} on {}", self.kernel, self.machine);
        if let Some(sat) = self.p_sat {
            let _ = writeln!(s, "P_sat {} GIt/s", trim(sat / 1e9));
        }
        let _ = writeln!(s, "{:>5}  {:>8}  {:>10}  {:>10}", "cores", "u", "cy/it", "GIt/s");
        for p in &self.points {
            let u = p.utilization.map(|u| format!("{u:.4}")).unwrap_or_else(|| "-".into());
            let mark = if p.saturated { " *" } else { "" };
            let _ = writeln!(
                s,
                "{:>5}  {:>8}  {:>10.4}  {:>10.4}{}",
                p.cores,
                u,
                p.cycles,
                p.performance / 1e9,
                mark
            );
        }
        s
    }
}

/// Active cores per domain, each counted from local index 0.
fn domain_counts(n: usize, domains: usize, per_domain: usize, placement: Placement) -> Vec<usize> {
    let mut counts = vec![0; domains];
    match placement {
        Placement::Close => {
            let mut left = n;
            for c in counts.iter_mut() {
                *c = left.min(per_domain);
                left -= *c;
            }
        }
        Placement::Spread => {
            for i in 0..n {
                counts[i % domains] += 1;
            }
        }
    }
    counts
}

/// Busy time of `c` when `occupancy[level]` cores share each group level it
/// touches.
fn scaled_value(p: &Prediction, m: &MachineModel, c: Component, occupancy: &dyn Fn(Level) -> usize) -> f64 {
    let Some(contrib) = p.contribution(c) else { return 0.0 };
    let Some(link) = c.link() else { return contrib.total() };
    if link.touches_memory() {
        return contrib.total();
    }
    let mut best = contrib.total();
    for g in &m.topology.shared_groups {
        let occ = occupancy(g.level);
        if occ <= 1 || !link.touches(g.level) {
            continue;
        }
        let factor = occ as f64;
        let mut t = factor * contrib.total();
        if let Some(cap) = g.bw_cap {
            t = t.max(factor * p.traffic.get(link).total() / cap + factor * contrib.penalty);
        }
        best = best.max(t);
    }
    best
}

fn group_runtime(p: &Prediction, m: &MachineModel, occupancy: &dyn Fn(Level) -> usize, conflict: f64) -> f64 {
    evaluate_rule(&p.rule, |c| scaled_value(p, m, c, occupancy), conflict)
}

fn group_size(m: &MachineModel, level: Level) -> usize {
    m.topology
        .shared_groups
        .iter()
        .filter(|g| g.level == level)
        .map(|g| g.size.max(1) as usize)
        .max()
        .unwrap_or(1)
}

/// Sum over the cores of one domain of their single-core rates, with each
/// group slowed by its occupancy.
fn cache_resident_rate(p: &Prediction, m: &MachineModel, active: usize) -> f64 {
    let levels: Vec<Level> = m.topology.shared_groups.iter().map(|g| g.level).collect();
    let mut total = 0.0;
    for core in 0..active {
        let occ = |level: Level| {
            if !levels.contains(&level) {
                return 1;
            }
            let size = group_size(m, level);
            let start = core / size * size;
            (active - start).min(size)
        };
        let t = group_runtime(p, m, &occ, 0.0);
        total += p.frequency_ghz * 1e9 * p.work_per_iter / t;
    }
    total
}

struct DomainPlan {
    domains: Vec<usize>,
    machine: MachineModel,
}

fn plan(m: &MachineModel, n: usize, opts: &ScalingOptions) -> Result<DomainPlan> {
    let total = m.total_cores();
    if n == 0 {
        return Err(Error::InvalidInput("core count must be at least 1".into()));
    }
    if n > total {
        return Err(Error::TooManyCores { requested: n, available: total });
    }
    Ok(match opts.contended_bandwidth {
        Some(bw) => DomainPlan {
            domains: vec![n],
            machine: m.with_memory_bandwidth(bw),
        },
        None => DomainPlan {
            domains: domain_counts(
                n,
                m.topology.numa_domains as usize,
                m.topology.cores_per_domain as usize,
                opts.placement,
            ),
            machine: m.clone(),
        },
    })
}

fn predict_point(k: &KernelModel, m: &MachineModel, n: usize, opts: &ScalingOptions) -> Result<ScalingPoint> {
    let DomainPlan { domains, machine } = plan(m, n, opts)?;
    let popts = PredictOptions {
        residence: opts.residence.clone(),
        threads: n,
        ..PredictOptions::default()
    };
    let p = predict_with(k, &machine, &popts)?;
    let freq = p.frequency_ghz * 1e9;

    let (mut performance, utilization, saturated) = if p.t_mem_data > 0.0 {
        let sat = p_sat(p.work_per_iter, p.t_mem_data, p.frequency_ghz);
        let mut perf = 0.0;
        let mut u_max: f64 = 0.0;
        let mut all_saturated = true;
        for &active in domains.iter().filter(|&&a| a > 0) {
            let series = utilization_series(active, p.t_mem_data, opts.p0, |j, conflict| {
                let occ = |level: Level| j.min(group_size(&machine, level));
                group_runtime(&p, &machine, &occ, conflict)
            });
            let u = *series.last().unwrap();
            perf += u * sat;
            u_max = u_max.max(u);
            all_saturated &= u >= 1.0;
        }
        (perf, Some(u_max), all_saturated)
    } else {
        let perf = domains
            .iter()
            .filter(|&&a| a > 0)
            .map(|&a| cache_resident_rate(&p, &machine, a))
            .sum();
        (perf, None, false)
    };

    let mut cycles = n as f64 * freq * p.work_per_iter / performance;
    let barrier = k.sync_per_outer_iter * opts.barrier.cost(n) / k.ni as f64;
    if n > 1 && barrier > 0.0 {
        cycles += barrier;
        performance = n as f64 * freq * p.work_per_iter / cycles;
    }

    Ok(ScalingPoint {
        cores: n,
        utilization,
        cycles,
        performance,
        saturated,
    })
}

/// Predicts performance for each entry of `cores`.
pub fn predict_multicore(
    k: &KernelModel,
    m: &MachineModel,
    cores: &[usize],
    opts: &ScalingOptions,
) -> Result<ScalingCurve> {
    opts.check()?;
    let points = opts.execution.try_map(cores, |&n| predict_point(k, m, n, opts))?;

    let base = predict_with(
        k,
        m,
        &PredictOptions {
            residence: opts.residence.clone(),
            ..PredictOptions::default()
        },
    )?;
    let p_sat = (base.t_mem_data > 0.0).then(|| {
        let (t_mem, domains) = match opts.contended_bandwidth {
            Some(bw) => {
                let contended = predict_with(
                    k,
                    &m.with_memory_bandwidth(bw),
                    &PredictOptions {
                        residence: opts.residence.clone(),
                        ..PredictOptions::default()
                    },
                );
                (contended.map_or(base.t_mem_data, |c| c.t_mem_data), 1.0)
            }
            None => (base.t_mem_data, m.topology.numa_domains as f64),
        };
        domains * p_sat(base.work_per_iter, t_mem, base.frequency_ghz)
    });

    Ok(ScalingCurve {
        kernel: k.name.clone(),
        machine: m.name.clone(),
        frequency_ghz: m.frequency_ghz,
        work_per_iter: k.work_per_iter,
        iterations: k.iterations() as f64,
        p_sat,
        points,
    })
}

fn relative_sq_error(curve: &ScalingCurve, measured: &BTreeMap<usize, f64>) -> f64 {
    curve
        .points
        .iter()
        .map(|p| {
            let meas = measured[&p.cores];
            ((p.performance - meas) / meas).powi(2)
        })
        .sum()
}

/// Fits `p0` to measured `(cores, it/s)` points by golden-section search
/// on [0, 100] cycles.
pub fn fit_p0(measured: &[(usize, f64)], k: &KernelModel, m: &MachineModel, opts: &ScalingOptions) -> Result<f64> {
    const LO: f64 = 0.0;
    const HI: f64 = 100.0;
    const TOL: f64 = 1e-3;

    let table: BTreeMap<usize, f64> = measured.iter().copied().collect();
    let cores: Vec<usize> = table.keys().copied().collect();
    let at = |p0: f64| -> Result<ScalingCurve> {
        predict_multicore(k, m, &cores, &ScalingOptions { p0, ..opts.clone() })
    };

    let base = at(0.0)?;
    if base.p_sat.is_none() {
        return Err(Error::InsufficientData(
            "kernel data stays in caches; p0 has no effect".into(),
        ));
    }
    let unsaturated = base.points.iter().filter(|p| !p.saturated).count();
    let informative = base
        .points
        .iter()
        .filter(|p| !p.saturated && table[&p.cores] > 0.0)
        .count();
    if unsaturated < 2 || informative < 2 {
        return Err(Error::InsufficientData(format!(
            "need at least 2 measured points below saturation, found {unsaturated}"
        )));
    }

    let cost = |p0: f64| at(p0).map(|c| relative_sq_error(&c, &table));
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (LO, HI);
    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    let (mut fc, mut fd) = (cost(c)?, cost(d)?);
    while b - a > TOL {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - ratio * (b - a);
            fc = cost(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + ratio * (b - a);
            fd = cost(d)?;
        }
    }
    let mid = (a + b) / 2.0;
    let mut best = (mid, cost(mid)?);
    for edge in [LO, HI] {
        let f = cost(edge)?;
        if f < best.1 {
            best = (edge, f);
        }
    }
    Ok(best.0)
}
