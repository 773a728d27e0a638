//! Single-core runtime: in-core and transfer contributions, their
//! combination under the machine's overlap rules, and performance.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::format::trim;
use crate::hierarchy::{Component, Level, LinkId};
use crate::kernel::{dependency_cycles, KernelModel};
use crate::machine::{Duplex, MachineModel, MemoryLink, OverlapPolicy, OverlapRule, PenaltyDirection};
use crate::ops::OpClass;
use crate::traffic::{
    derive_traffic, locate_arrays, outermost, override_traffic, uniform_residence, LinkVolume,
    Residence, TrafficProfile,
};

/// Busy time of one contribution in cycles per iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Contribution {
    pub component: Component,
    /// Time spent moving (or computing on) data.
    pub data: f64,
    /// Latency penalty on top of `data`.
    pub penalty: f64,
}

impl Contribution {
    pub fn new(component: Component, data: f64) -> Self {
        Contribution {
            component,
            data,
            penalty: 0.0,
        }
    }

    pub fn total(&self) -> f64 {
        self.data + self.penalty
    }
}

/// Cycles in which at least one load or store retires.
pub fn t_regl1(k: &KernelModel, m: &MachineModel) -> f64 {
    let t = &m.throughput;
    let (ld, st) = (k.ops.load, k.ops.store);
    let mut out = 0.0f64;
    if ld > 0.0 {
        out = out.max(ld / t.load.ops_per_cycle);
    }
    if st > 0.0 {
        out = out.max(st / t.store.ops_per_cycle);
    }
    if let Some(ls) = &t.load_store {
        if ld + st > 0.0 {
            out = out.max((ld + st) / ls.ops_per_cycle);
        }
    }
    out
}

/// Cycles in which only arithmetic retires, bounded below by the
/// loop-carried dependency chain.
pub fn t_comp(k: &KernelModel, m: &MachineModel) -> Result<f64> {
    let rate = |class: OpClass| -> Result<f64> {
        let n = k.ops.get(class);
        if n == 0.0 {
            return Ok(0.0);
        }
        let w = m
            .throughput
            .get(class)
            .ok_or_else(|| Error::MissingThroughput(class.to_string()))?;
        Ok(n / w.ops_per_cycle)
    };

    let mut out = 0.0f64;
    let mut ported = Vec::new();
    for port in &m.ports {
        let mut sum = 0.0;
        for class in port.classes.iter().filter(|c| OpClass::ARITHMETIC.contains(c)) {
            sum += rate(*class)?;
            ported.push(*class);
        }
        out = out.max(sum);
    }
    for class in OpClass::ARITHMETIC.into_iter().filter(|c| !ported.contains(c)) {
        out = out.max(rate(class)?);
    }
    if let Some(total) = &m.throughput.total {
        out = out.max(k.ops.total() / total.ops_per_cycle);
    }
    out = out.max(dependency_cycles(&k.dep_chain, &m.latency)?);
    Ok(out)
}

/// Busy time of `link` for the given volumes.
pub fn t_link(v: LinkVolume, link: &MemoryLink) -> Contribution {
    let down = v.down / link.bw_down;
    let up = v.up / link.up_bandwidth();
    let data = match link.duplex {
        Duplex::Dual => down.max(up),
        Duplex::Single => down + up,
    };
    let bytes = match link.penalty_direction {
        PenaltyDirection::Down => v.down,
        PenaltyDirection::Up => v.up,
        PenaltyDirection::Both => v.down + v.up,
    };
    Contribution {
        component: Component::Link(link.id),
        data,
        penalty: link.penalty_cy_per_byte * bytes,
    }
}

/// Evaluates `rule` with `value` giving each member's busy time. `conflict`
/// is added once to the serial sum when it holds memory terms, and to each
/// overlapping memory term.
pub(crate) fn evaluate_rule(rule: &OverlapRule, value: impl Fn(Component) -> f64, conflict: f64) -> f64 {
    let serial_has_memory = rule.serial.iter().any(|c| c.touches_memory());
    let mut serial: f64 = rule.serial.iter().map(|c| value(*c)).sum();
    if serial_has_memory {
        serial += conflict;
    }
    rule.overlap
        .iter()
        .map(|c| value(*c) + if c.touches_memory() { conflict } else { 0.0 })
        .fold(serial, f64::max)
}

/// Checks that every nonzero contribution is covered by the rule.
fn covered<'a>(contribs: &[Contribution], policy: &'a OverlapPolicy, residence: Level) -> Result<&'a OverlapRule> {
    let rule = policy
        .rule_for(residence)
        .ok_or_else(|| Error::UncoveredResidence(residence.to_string()))?;
    for c in contribs {
        let listed = rule.serial.contains(&c.component) || rule.overlap.contains(&c.component);
        if c.total() > 0.0 && !listed {
            return Err(Error::UncoveredContribution {
                label: c.component.to_string(),
                residence: residence.to_string(),
            });
        }
    }
    Ok(rule)
}

/// Combined runtime: the largest of the overlapping contributions and the
/// sum of the serial ones.
pub fn combine(contribs: &[Contribution], policy: &OverlapPolicy, residence: Level) -> Result<f64> {
    let rule = covered(contribs, policy, residence)?;
    let values: BTreeMap<Component, f64> = contribs.iter().map(|c| (c.component, c.total())).collect();
    Ok(evaluate_rule(rule, |c| values.get(&c).copied().unwrap_or(0.0), 0.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub kernel: String,
    pub machine: String,
    pub residence: Residence,
    /// Outermost level data is streamed from; selects the overlap rule.
    pub level: Level,
    pub traffic: TrafficProfile,
    /// comp, RegL1, then one entry per link of the machine.
    pub contributions: Vec<Contribution>,
    pub rule: OverlapRule,
    /// Combined runtime in cycles per iteration.
    pub cycles: f64,
    /// Data time on links that touch memory.
    pub t_mem_data: f64,
    pub frequency_ghz: f64,
    pub work_per_iter: f64,
    pub flops_per_iter: Option<f64>,
}

impl Prediction {
    pub fn contribution(&self, c: Component) -> Option<&Contribution> {
        self.contributions.iter().find(|x| x.component == c)
    }

    pub fn link_time(&self, link: LinkId) -> f64 {
        self.contribution(Component::Link(link)).map_or(0.0, Contribution::total)
    }

    /// Work units per second.
    pub fn performance(&self) -> f64 {
        self.frequency_ghz * 1e9 * self.work_per_iter / self.cycles
    }

    /// Flop/s, when the kernel states its flops per iteration.
    pub fn flops_per_second(&self) -> Option<f64> {
        self.flops_per_iter
            .map(|f| f * self.frequency_ghz * 1e9 / self.cycles)
    }

    /// Memory traffic in bytes per second.
    pub fn memory_bandwidth(&self) -> f64 {
        let bytes: f64 = self.traffic.memory_links().map(|(_, v)| v.total()).sum();
        bytes * self.frequency_ghz * 1e9 / self.cycles
    }

    /// Rebuilds contributions from scratch; used after changing link rates.
    fn recombine(&mut self, m: &MachineModel) -> Result<()> {
        self.cycles = combine(&self.contributions, &m.overlap, self.level)?;
        Ok(())
    }

    pub fn render_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{} on {}, data in {}", self.kernel, self.machine, self.level);
        for c in &self.contributions {
            let _ = write!(s, "{:<6}{} cy/it", c.component.as_str(), trim(c.total()));
            if c.penalty > 0.0 {
                let _ = write!(s, " ({} transfer + {} penalty)", trim(c.data), trim(c.penalty));
            }
            s.push('\n');
        }
        let names = |v: &[Component]| -> String {
            v.iter().map(|c| c.as_str()).collect::<Vec<_>>().join(" + ")
        };
        let _ = writeln!(
            s,
            "serial: {}; overlapping: {}",
            names(&self.rule.serial),
            names(&self.rule.overlap)
        );
        let _ = writeln!(s, "P     {} GIt/s", trim(self.performance() / 1e9));
        let _ = writeln!(s, "T_{:<4}{} cy/it", self.level.as_str(), trim(self.cycles));
        s
    }

    pub fn render_csv(&self) -> String {
        let mut s = String::from("component,cycles_per_it\n");
        for c in &self.contributions {
            let _ = writeln!(s, "{},{}", c.component, trim(c.total()));
        }
        let _ = writeln!(s, "T_{},{}", self.level, trim(self.cycles));
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictOptions {
    /// Where each array lives; derived from the footprint when absent.
    pub residence: Option<Residence>,
    /// Threads sharing caches, for the layer condition.
    pub threads: usize,
    /// Measured volumes that replace derived ones.
    pub traffic_overrides: BTreeMap<LinkId, LinkVolume>,
}

impl Default for PredictOptions {
    fn default() -> Self {
        PredictOptions {
            residence: None,
            threads: 1,
            traffic_overrides: BTreeMap::new(),
        }
    }
}

impl PredictOptions {
    pub fn at(k: &KernelModel, level: Level) -> Self {
        PredictOptions {
            residence: Some(uniform_residence(k, level)),
            ..Self::default()
        }
    }
}

/// Predicts with all arrays at `residence`, or where they fit.
pub fn predict_single(k: &KernelModel, m: &MachineModel, residence: Option<Level>) -> Result<Prediction> {
    let opts = match residence {
        Some(level) => PredictOptions::at(k, level),
        None => PredictOptions::default(),
    };
    predict_with(k, m, &opts)
}

pub fn predict_with(k: &KernelModel, m: &MachineModel, opts: &PredictOptions) -> Result<Prediction> {
    let residence = opts.residence.clone().unwrap_or_else(|| locate_arrays(k, m));
    let level = outermost(&residence);
    let derived = derive_traffic(k, m, &residence, opts.threads.max(1))?;
    let traffic = override_traffic(&derived, &opts.traffic_overrides)?;

    let mut contributions = vec![
        Contribution::new(Component::Comp, t_comp(k, m)?),
        Contribution::new(Component::RegL1, t_regl1(k, m)),
    ];
    contributions.extend(m.links.iter().map(|l| t_link(traffic.get(l.id), l)));
    let rule = covered(&contributions, &m.overlap, level)?.clone();
    let t_mem_data = contributions
        .iter()
        .filter(|c| c.component.touches_memory())
        .map(|c| c.data)
        .sum();

    let mut p = Prediction {
        kernel: k.name.clone(),
        machine: m.name.clone(),
        residence,
        level,
        traffic,
        contributions,
        rule,
        cycles: 0.0,
        t_mem_data,
        frequency_ghz: m.frequency_ghz,
        work_per_iter: k.work_per_iter,
        flops_per_iter: k.flops_per_iter,
    };
    p.recombine(m)?;
    Ok(p)
}
