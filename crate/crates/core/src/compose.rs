//! Whole-application estimates from per-kernel curves, comparison against
//! measurements, and inference of link bandwidth and overlap from data.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::format::trim;
use crate::hierarchy::{Component, Level, LinkId};
use crate::kernel::KernelModel;
use crate::machine::MachineModel;
use crate::predictor::predict_single;
use crate::scaling::{predict_multicore, ScalingCurve, ScalingOptions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompositeEntry {
    pub kernel: String,
    /// Invocations per application iteration.
    pub weight: f64,
    /// Loop iterations per invocation; the kernel's own loop when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iterations: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompositeSpec {
    pub name: String,
    pub kernels: Vec<CompositeEntry>,
}

pub const BUILTIN_COMPOSITE_NAMES: [&str; 2] = ["pcg", "pcg_prose"];

pub fn builtin_composite_source(name: &str) -> Option<&'static str> {
    match name {
        "pcg" => Some(include_str!("../presets/composites/pcg.toml")),
        "pcg_prose" => Some(include_str!("../presets/composites/pcg_prose.toml")),
        _ => None,
    }
}

pub fn builtin_composite(name: &str) -> Result<CompositeSpec> {
    let text = builtin_composite_source(name).ok_or_else(|| Error::UnknownPreset(name.to_string()))?;
    parse_composite(text)
}

pub fn parse_composite(text: &str) -> Result<CompositeSpec> {
    let spec: CompositeSpec = toml::from_str(text).map_err(|e| Error::Schema {
        document: "composite".into(),
        message: e.to_string(),
    })?;
    spec.validate()?;
    Ok(spec)
}

impl CompositeSpec {
    pub fn validate(&self) -> Result<()> {
        let mut violations = Vec::new();
        if self.kernels.is_empty() {
            violations.push("at least one kernel is required".to_string());
        }
        for e in &self.kernels {
            if !(e.weight > 0.0) || !e.weight.is_finite() {
                violations.push(format!("weight of {} must be positive", e.kernel));
            }
            if let Some(it) = e.iterations {
                if !(it > 0.0) || !it.is_finite() {
                    violations.push(format!("iterations of {} must be positive", e.kernel));
                }
            }
        }
        if violations.is_empty() {
            Ok(())
        } else {
            Err(Error::Invalid {
                what: format!("composite {}", self.name),
                violations,
            })
        }
    }

    /// Distinct kernel ids in first-use order.
    pub fn kernel_ids(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for e in &self.kernels {
            if !out.contains(&e.kernel.as_str()) {
                out.push(&e.kernel);
            }
        }
        out
    }

    pub fn concat(&self, other: &CompositeSpec) -> CompositeSpec {
        CompositeSpec {
            name: format!("{}+{}", self.name, other.name),
            kernels: self.kernels.iter().chain(&other.kernels).cloned().collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompositePoint {
    pub cores: usize,
    /// Wall-clock seconds per application iteration.
    pub seconds: f64,
    /// Application iterations per second.
    pub performance: f64,
    /// Seconds per application iteration spent in each entry.
    pub per_entry: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompositeCurve {
    pub name: String,
    pub machine: String,
    pub entries: Vec<String>,
    pub points: Vec<CompositePoint>,
}

impl CompositeCurve {
    pub fn render_csv(&self) -> String {
        let mut s = String::from("cores,seconds_per_iter,perf_iter_s\n");
        for p in &self.points {
            let _ = writeln!(s, "{},{:e},{}", p.cores, p.seconds, trim(p.performance));
        }
        s
    }

    pub fn render_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{} on {}", self.name, self.machine);
        let _ = writeln!(s, "{:>5}  {:>14}  {:>12}", "cores", "ms/iter", "iter/s");
        for p in &self.points {
            let _ = writeln!(s, "{:>5}  {:>14.6}  {:>12.3}", p.cores, p.seconds * 1e3, p.performance);
        }
        s
    }
}

/// Combines per-kernel curves, keyed by kernel id, into the application
/// curve of `spec`.
pub fn compose(spec: &CompositeSpec, curves: &BTreeMap<String, ScalingCurve>) -> Result<CompositeCurve> {
    spec.validate()?;
    let mut selected = Vec::with_capacity(spec.kernels.len());
    for e in &spec.kernels {
        let curve = curves
            .get(&e.kernel)
            .ok_or_else(|| Error::InvalidInput(format!("no prediction for kernel `{}`", e.kernel)))?;
        selected.push((e, curve));
    }
    let (_, first) = selected[0];
    let grid = first.cores();
    for (e, curve) in &selected[1..] {
        if curve.cores() != grid || curve.machine != first.machine {
            return Err(Error::MismatchedGrid(spec.kernels[0].kernel.clone(), e.kernel.clone()));
        }
    }

    let points = grid
        .iter()
        .enumerate()
        .map(|(i, &cores)| {
            let per_entry: Vec<f64> = selected
                .iter()
                .map(|(e, c)| {
                    let iterations = e.iterations.unwrap_or(c.iterations);
                    e.weight * iterations * c.work_per_iter / c.points[i].performance
                })
                .collect();
            let seconds: f64 = per_entry.iter().sum();
            CompositePoint {
                cores,
                seconds,
                performance: 1.0 / seconds,
                per_entry,
            }
        })
        .collect();
    Ok(CompositeCurve {
        name: spec.name.clone(),
        machine: first.machine.clone(),
        entries: spec.kernels.iter().map(|e| e.kernel.clone()).collect(),
        points,
    })
}

/// Predicts every kernel of `spec` on `cores` and composes the result.
pub fn predict_composite(
    spec: &CompositeSpec,
    kernels: &BTreeMap<String, KernelModel>,
    m: &MachineModel,
    cores: &[usize],
    opts: &ScalingOptions,
) -> Result<CompositeCurve> {
    let ids = spec.kernel_ids();
    let inner = ScalingOptions {
        execution: Execution::Sequential,
        ..opts.clone()
    };
    let curves = opts.execution.try_map(&ids, |id| {
        let k = kernels
            .get(*id)
            .ok_or_else(|| Error::InvalidInput(format!("kernel `{id}` is not available")))?;
        predict_multicore(k, m, cores, &inner).map(|c| (id.to_string(), c))
    })?;
    compose(spec, &curves.into_iter().collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparedPoint {
    pub cores: usize,
    pub predicted: f64,
    pub measured: f64,
    pub relative_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub points: Vec<ComparedPoint>,
    pub mean_error: f64,
    pub max_error: f64,
}

impl ComparisonReport {
    pub fn render_csv(&self) -> String {
        let mut s = String::from("cores,predicted,measured,rel_error\n");
        for p in &self.points {
            let _ = writeln!(
                s,
                "{},{},{},{}",
                p.cores,
                trim(p.predicted),
                trim(p.measured),
                trim(p.relative_error)
            );
        }
        s
    }

    pub fn render_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:>5}  {:>14}  {:>14}  {:>8}", "cores", "predicted", "measured", "error");
        for p in &self.points {
            let _ = writeln!(
                s,
                "{:>5}  {:>14.6e}  {:>14.6e}  {:>7.2}%",
                p.cores,
                p.predicted,
                p.measured,
                p.relative_error * 100.0
            );
        }
        let _ = writeln!(
            s,
            "mean error {:.2}%, max error {:.2}%",
            self.mean_error * 100.0,
            self.max_error * 100.0
        );
        s
    }
}

/// Relative errors of `predicted` against `measured` at the core counts
/// present in both.
pub fn compare(predicted: &[(usize, f64)], measured: &[(usize, f64)]) -> Result<ComparisonReport> {
    let pred: BTreeMap<usize, f64> = predicted.iter().copied().collect();
    let mut points = Vec::new();
    for &(cores, meas) in measured {
        if let Some(&p) = pred.get(&cores) {
            if !(meas > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "measurement for {cores} cores must be positive"
                )));
            }
            points.push(ComparedPoint {
                cores,
                predicted: p,
                measured: meas,
                relative_error: (p - meas).abs() / meas,
            });
        }
    }
    if points.is_empty() {
        return Err(Error::NoOverlap);
    }
    points.sort_by_key(|p| p.cores);
    let mean_error = points.iter().map(|p| p.relative_error).sum::<f64>() / points.len() as f64;
    let max_error = points.iter().map(|p| p.relative_error).fold(0.0, f64::max);
    Ok(ComparisonReport {
        points,
        mean_error,
        max_error,
    })
}

pub fn compare_curve(curve: &ScalingCurve, measured: &[(usize, f64)]) -> Result<ComparisonReport> {
    let predicted: Vec<(usize, f64)> = curve.points.iter().map(|p| (p.cores, p.performance)).collect();
    compare(&predicted, measured)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OverlapChoice {
    Serial,
    Overlapping,
}

impl OverlapChoice {
    pub fn as_str(self) -> &'static str {
        match self {
            OverlapChoice::Serial => "no-overlap",
            OverlapChoice::Overlapping => "overlap",
        }
    }
}

impl std::str::FromStr for OverlapChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "no-overlap" | "serial" => Ok(OverlapChoice::Serial),
            "overlap" | "overlapping" => Ok(OverlapChoice::Overlapping),
            other => Err(Error::InvalidInput(format!(
                "unknown overlap choice `{other}` (expected overlap or no-overlap)"
            ))),
        }
    }
}

/// Single-core runtime measured with all data in one level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub residence: Level,
    pub cycles_per_it: f64,
}

/// Reads `residence,cycles_per_it` rows.
pub fn read_measurement_csv<R: Read>(reader: R) -> Result<Vec<Measurement>> {
    let mut out = Vec::new();
    for row in csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader).deserialize() {
        let row: Measurement = row?;
        if !(row.cycles_per_it > 0.0) {
            return Err(Error::InvalidInput(format!(
                "measured runtime in {} must be positive",
                row.residence
            )));
        }
        out.push(row);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    pub link: LinkId,
    /// Bytes per cycle in both directions.
    pub bandwidth: f64,
    pub overlap: OverlapChoice,
    /// Mean relative error against the measurements.
    pub score: f64,
    /// Predicted cycles per iteration for each measurement.
    pub predictions: Vec<f64>,
}

/// Copy of `m` with `link` at `bandwidth` and moved to the chosen side of
/// every overlap rule that lists it.
pub fn apply_hypothesis(m: &MachineModel, link: LinkId, bandwidth: f64, overlap: OverlapChoice) -> Result<MachineModel> {
    let mut out = m.clone();
    out.link_mut(link)
        .ok_or_else(|| Error::UnknownLink(link.to_string()))?
        .set_bandwidth(bandwidth);
    let component = Component::Link(link);
    for rule in &mut out.overlap.rules {
        let listed = rule.serial.contains(&component) || rule.overlap.contains(&component);
        if !listed {
            continue;
        }
        rule.serial.retain(|c| *c != component);
        rule.overlap.retain(|c| *c != component);
        match overlap {
            OverlapChoice::Serial => rule.serial.push(component),
            OverlapChoice::Overlapping => rule.overlap.push(component),
        }
    }
    Ok(out)
}

/// Scores every (bandwidth, overlap) candidate for `link` against the
/// measurements and returns them best first. Ties keep candidate order,
/// bandwidths outermost.
pub fn infer_parameters(
    k: &KernelModel,
    m_partial: &MachineModel,
    measurements: &[Measurement],
    link: LinkId,
    bandwidths: &[f64],
    overlaps: &[OverlapChoice],
    execution: Execution,
) -> Result<Vec<Hypothesis>> {
    if bandwidths.is_empty() || overlaps.is_empty() {
        return Err(Error::InvalidInput("candidate sets must not be empty".into()));
    }
    if let Some(bw) = bandwidths.iter().find(|b| !(**b > 0.0)) {
        return Err(Error::InvalidInput(format!("candidate bandwidth {bw} must be positive")));
    }
    if measurements.is_empty() {
        return Err(Error::InsufficientData("no measurements to score against".into()));
    }
    let grid: Vec<(f64, OverlapChoice)> = bandwidths
        .iter()
        .flat_map(|&b| overlaps.iter().map(move |&o| (b, o)))
        .collect();
    let mut ranked = execution.try_map(&grid, |&(bandwidth, overlap)| {
        let m = apply_hypothesis(m_partial, link, bandwidth, overlap)?;
        let mut predictions = Vec::with_capacity(measurements.len());
        let mut total = 0.0;
        for meas in measurements {
            let p = predict_single(k, &m, Some(meas.residence))?;
            total += (p.cycles - meas.cycles_per_it).abs() / meas.cycles_per_it;
            predictions.push(p.cycles);
        }
        Ok::<_, Error>(Hypothesis {
            link,
            bandwidth,
            overlap,
            score: total / measurements.len() as f64,
            predictions,
        })
    })?;
    ranked.sort_by(|a, b| a.score.total_cmp(&b.score));
    Ok(ranked)
}

pub fn render_hypotheses_csv(ranked: &[Hypothesis]) -> String {
    let mut s = String::from("rank,link,bandwidth,overlap,score\n");
    for (i, h) in ranked.iter().enumerate() {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            i + 1,
            h.link,
            trim(h.bandwidth),
            h.overlap.as_str(),
            trim(h.score)
        );
    }
    s
}

pub fn render_hypotheses_table(ranked: &[Hypothesis]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{:>4}  {:<6}  {:>9}  {:<10}  {:>8}", "rank", "link", "B/cy", "overlap", "error");
    for (i, h) in ranked.iter().enumerate() {
        let _ = writeln!(
            s,
            "{:>4}  {:<6}  {:>9}  {:<10}  {:>7.2}%",
            i + 1,
            h.link.as_str(),
            trim(h.bandwidth),
            h.overlap.as_str(),
            h.score * 100.0
        );
    }
    s
}
