//! Machine models: in-core throughput and latency, the cache hierarchy with
//! its data-flow policies, link bandwidths, overlap rules and topology.
//!
//! A [`MachineModel`] is plain data. [`validate_machine`] checks it against
//! the model invariants; [`parse_machine`] reads the TOML document format and
//! validates in one step.

mod document;
mod presets;

use std::collections::{BTreeMap, BTreeSet};

pub use document::{parse_machine, parse_machine_unchecked, serialize_machine};
pub use presets::{builtin_machine, builtin_machine_source, builtin_machines, BUILTIN_MACHINE_NAMES};

use crate::error::{Error, Result};
use crate::hierarchy::{Component, Level, LinkId};
use crate::ops::OpClass;

/// Throughput of one operation class in operations per cycle.
///
/// When the raw instruction throughput and the SIMD width are both known,
/// the operation throughput must equal their product.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Throughput {
    pub ops_per_cycle: f64,
    pub instructions_per_cycle: Option<f64>,
    pub simd_width: Option<f64>,
}

impl Throughput {
    pub fn new(ops_per_cycle: f64) -> Self {
        Throughput {
            ops_per_cycle,
            instructions_per_cycle: None,
            simd_width: None,
        }
    }

    pub fn from_instructions(instructions_per_cycle: f64, simd_width: f64) -> Self {
        Throughput {
            ops_per_cycle: instructions_per_cycle * simd_width,
            instructions_per_cycle: Some(instructions_per_cycle),
            simd_width: Some(simd_width),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThroughputTable {
    pub add: Option<Throughput>,
    pub mul: Option<Throughput>,
    pub fma: Option<Throughput>,
    pub div: Option<Throughput>,
    pub load: Throughput,
    pub store: Throughput,
    /// Combined load+store limit (e.g. from a shortage of address units).
    pub load_store: Option<Throughput>,
    /// Overall retirement limit across all classes.
    pub total: Option<Throughput>,
}

impl ThroughputTable {
    pub fn get(&self, class: OpClass) -> Option<&Throughput> {
        match class {
            OpClass::Add => self.add.as_ref(),
            OpClass::Mul => self.mul.as_ref(),
            OpClass::Fma => self.fma.as_ref(),
            OpClass::Div => self.div.as_ref(),
            OpClass::Load => Some(&self.load),
            OpClass::Store => Some(&self.store),
        }
    }

    fn entries(&self) -> impl Iterator<Item = (&'static str, &Throughput)> {
        [
            ("add", self.add.as_ref()),
            ("mul", self.mul.as_ref()),
            ("fma", self.fma.as_ref()),
            ("div", self.div.as_ref()),
            ("load", Some(&self.load)),
            ("store", Some(&self.store)),
            ("load_store", self.load_store.as_ref()),
            ("total", self.total.as_ref()),
        ]
        .into_iter()
        .filter_map(|(n, t)| t.map(|t| (n, t)))
    }
}

/// Instruction latencies in cycles.
pub type LatencyTable = BTreeMap<OpClass, f64>;

/// Operation classes issued through one shared execution port.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PortConstraint {
    pub classes: Vec<OpClass>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CacheLevel {
    pub level: Level,
    pub capacity_bytes: u64,
    /// Cores sharing one instance of this cache.
    pub shared_by: u32,
    pub line_bytes: u32,
    pub write_through: bool,
    pub victim: bool,
    /// Whether a victim cache accepts clean lines from the level above, or
    /// only modified ones.
    pub victim_receives_clean: bool,
    /// Full-line stores skip the write-allocate fetch.
    pub write_allocate_evasion: bool,
    /// Whether aggregate bandwidth grows with the number of sharing cores.
    pub scalable: bool,
}

impl CacheLevel {
    pub fn new(level: Level, capacity_bytes: u64) -> Self {
        CacheLevel {
            level,
            capacity_bytes,
            shared_by: 1,
            line_bytes: 64,
            write_through: false,
            victim: false,
            victim_receives_clean: true,
            write_allocate_evasion: false,
            scalable: true,
        }
    }

    /// Whether a clean line evicted from the level above lands here.
    pub fn accepts_clean_victims(&self) -> bool {
        self.victim && self.victim_receives_clean
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Duplex {
    /// One bidirectional link: both directions share its busy time.
    Single,
    /// Two unidirectional links working concurrently.
    Dual,
}

/// Which traffic direction a latency penalty applies to. `Down` moves data
/// toward the core (fills), `Up` toward memory (evictions, write-backs).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PenaltyDirection {
    Down,
    Up,
    Both,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MemoryLink {
    pub id: LinkId,
    pub duplex: Duplex,
    /// Bytes per cycle toward the core.
    pub bw_down: f64,
    /// Bytes per cycle toward memory; required for dual links.
    pub bw_up: Option<f64>,
    pub penalty_cy_per_byte: f64,
    pub penalty_direction: PenaltyDirection,
}

impl MemoryLink {
    pub fn single(id: LinkId, bw: f64) -> Self {
        MemoryLink {
            id,
            duplex: Duplex::Single,
            bw_down: bw,
            bw_up: None,
            penalty_cy_per_byte: 0.0,
            penalty_direction: PenaltyDirection::Up,
        }
    }

    pub fn dual(id: LinkId, bw_down: f64, bw_up: f64) -> Self {
        MemoryLink {
            id,
            duplex: Duplex::Dual,
            bw_down,
            bw_up: Some(bw_up),
            penalty_cy_per_byte: 0.0,
            penalty_direction: PenaltyDirection::Up,
        }
    }

    pub fn up_bandwidth(&self) -> f64 {
        self.bw_up.unwrap_or(self.bw_down)
    }

    /// Sets every bandwidth of the link to `bw`.
    pub fn set_bandwidth(&mut self, bw: f64) {
        self.bw_down = bw;
        if self.bw_up.is_some() {
            self.bw_up = Some(bw);
        }
    }
}

/// Serial/overlap partition of the contributions for one residence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OverlapRule {
    pub when: Level,
    /// Contributions that add up.
    pub serial: Vec<Component>,
    /// Contributions that overlap with everything else.
    pub overlap: Vec<Component>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct OverlapPolicy {
    pub rules: Vec<OverlapRule>,
}

impl OverlapPolicy {
    pub fn rule_for(&self, residence: Level) -> Option<&OverlapRule> {
        self.rules.iter().find(|r| r.when == residence)
    }

    /// Replaces (or inserts) the rule for `rule.when`.
    pub fn set_rule(&mut self, rule: OverlapRule) {
        match self.rules.iter_mut().find(|r| r.when == rule.when) {
            Some(r) => *r = rule,
            None => {
                self.rules.push(rule);
                self.rules.sort_by_key(|r| r.when);
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MemoryAttach {
    /// Memory fills travel Mem -> L3 -> L2.
    ThroughL3,
    /// Memory fills go straight into L2; L3 only sees victims.
    DirectToL2,
}

/// Cores whose accesses to `level` share one non-scalable data path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SharedGroup {
    pub level: Level,
    pub size: u32,
    /// Aggregate bytes/cycle the group can move over the shared level.
    pub bw_cap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    pub numa_domains: u32,
    pub cores_per_domain: u32,
    /// Sustained memory bandwidth range of one domain in bytes/cycle.
    pub mem_bw_min: f64,
    pub mem_bw_max: f64,
    pub memory_attach: MemoryAttach,
    pub shared_groups: Vec<SharedGroup>,
}

impl Topology {
    pub fn total_cores(&self) -> usize {
        self.numa_domains as usize * self.cores_per_domain as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MachineModel {
    pub name: String,
    pub frequency_ghz: f64,
    pub throughput: ThroughputTable,
    pub latency: LatencyTable,
    pub ports: Vec<PortConstraint>,
    /// Cache levels, innermost first.
    pub caches: Vec<CacheLevel>,
    pub links: Vec<MemoryLink>,
    pub overlap: OverlapPolicy,
    pub topology: Topology,
}

impl MachineModel {
    pub fn cache(&self, level: Level) -> Option<&CacheLevel> {
        self.caches.iter().find(|c| c.level == level)
    }

    pub fn link(&self, id: LinkId) -> Option<&MemoryLink> {
        self.links.iter().find(|l| l.id == id)
    }

    pub fn link_mut(&mut self, id: LinkId) -> Option<&mut MemoryLink> {
        self.links.iter_mut().find(|l| l.id == id)
    }

    /// Outermost cache level.
    pub fn last_cache(&self) -> Level {
        self.caches.last().map_or(Level::L1, |c| c.level)
    }

    /// Cache levels followed by main memory.
    pub fn levels(&self) -> Vec<Level> {
        self.caches.iter().map(|c| c.level).chain([Level::Mem]).collect()
    }

    pub fn has_level(&self, level: Level) -> bool {
        level == Level::Mem || self.cache(level).is_some()
    }

    pub fn total_cores(&self) -> usize {
        self.topology.total_cores()
    }

    /// Usable capacity of one instance of `level`: half the nominal size.
    pub fn effective_capacity(&self, level: Level) -> Result<u64> {
        self.cache(level)
            .map(|c| c.capacity_bytes / 2)
            .ok_or_else(|| Error::UnknownLevel(level.to_string()))
    }

    /// Effective capacity available to each of `threads` threads running
    /// on consecutive cores.
    pub fn per_thread_capacity(&self, level: Level, threads: usize) -> Result<u64> {
        let cache = self
            .cache(level)
            .ok_or_else(|| Error::UnknownLevel(level.to_string()))?;
        let sharers = threads.clamp(1, cache.shared_by.max(1) as usize) as u64;
        Ok(cache.capacity_bytes / 2 / sharers)
    }

    pub fn memory_links(&self) -> impl Iterator<Item = &MemoryLink> {
        self.links.iter().filter(|l| l.id.touches_memory())
    }

    /// Copy of the model with every memory link running at `bw` bytes/cycle.
    pub fn with_memory_bandwidth(&self, bw: f64) -> MachineModel {
        let mut m = self.clone();
        for link in m.links.iter_mut().filter(|l| l.id.touches_memory()) {
            link.set_bandwidth(bw);
        }
        m
    }

    /// Links the model must define given its cache list and attach mode.
    pub fn expected_links(&self) -> Vec<LinkId> {
        let mut out = Vec::new();
        let levels = self.levels();
        for pair in levels.windows(2) {
            if let Some(id) = LinkId::between(pair[0], pair[1]) {
                out.push(id);
            }
        }
        if self.topology.memory_attach == MemoryAttach::DirectToL2 && self.last_cache() == Level::L3 {
            out.push(LinkId::L2Mem);
        }
        out.sort();
        out
    }

    /// Contributions that can be nonzero when data is served from `residence`.
    pub fn active_components(&self, residence: Level) -> Vec<Component> {
        let mut out = vec![Component::Comp, Component::RegL1];
        let write_through_l1 = self.cache(Level::L1).is_some_and(|c| c.write_through);
        for link in &self.links {
            let (inner, outer) = link.id.endpoints();
            let on_path = if residence == Level::Mem {
                true
            } else {
                outer <= residence && inner < residence
            };
            let write_through = link.id == LinkId::L1L2 && write_through_l1;
            if on_path || write_through {
                out.push(Component::Link(link.id));
            }
        }
        out
    }
}

/// Checks every model invariant; returns one human-readable reason per
/// violation (empty when the model is valid).
pub fn validate_machine(m: &MachineModel) -> Vec<String> {
    let mut v = Vec::new();

    if !(m.frequency_ghz > 0.0) {
        v.push(format!("frequency must be positive (got {})", m.frequency_ghz));
    }

    for (name, t) in m.throughput.entries() {
        if !(t.ops_per_cycle > 0.0) {
            v.push(format!("throughput must be positive: {name} = {}", t.ops_per_cycle));
        }
        if let (Some(tau), Some(w)) = (t.instructions_per_cycle, t.simd_width) {
            if tau * w != t.ops_per_cycle {
                v.push(format!(
                    "throughput {name}: {} ops/cy differs from simd width {w} x {tau} instructions/cy",
                    t.ops_per_cycle
                ));
            }
        }
    }
    if let Some(ls) = &m.throughput.load_store {
        let bound = m.throughput.load.ops_per_cycle + m.throughput.store.ops_per_cycle;
        if ls.ops_per_cycle > bound {
            v.push(format!(
                "load_store throughput {} exceeds load + store = {bound}",
                ls.ops_per_cycle
            ));
        }
    }

    for (class, lat) in &m.latency {
        if !(*lat >= 1.0) {
            v.push(format!("latency of {class} must be at least 1 cycle (got {lat})"));
        }
    }

    let mut seen_port_classes = BTreeSet::new();
    for port in &m.ports {
        for class in &port.classes {
            if !seen_port_classes.insert(*class) {
                v.push(format!("{class} appears in more than one port constraint"));
            }
        }
    }

    validate_caches(m, &mut v);
    validate_links(m, &mut v);
    validate_overlap(m, &mut v);
    validate_topology(m, &mut v);
    v
}

fn validate_caches(m: &MachineModel, v: &mut Vec<String>) {
    let expected = [Level::L1, Level::L2, Level::L3];
    if m.caches.len() < 2 || m.caches.len() > 3 {
        v.push(format!("expected two or three cache levels, found {}", m.caches.len()));
    }
    for (i, c) in m.caches.iter().enumerate() {
        if expected.get(i) != Some(&c.level) {
            v.push(format!("cache levels must be listed as L1, L2[, L3]; found {} at position {}", c.level, i + 1));
        }
        if c.capacity_bytes == 0 {
            v.push(format!("{} capacity must be positive", c.level));
        }
        if c.shared_by == 0 {
            v.push(format!("{} sharing degree must be at least 1", c.level));
        }
        if c.line_bytes == 0 {
            v.push(format!("{} line size must be positive", c.level));
        }
    }
}

fn validate_links(m: &MachineModel, v: &mut Vec<String>) {
    let expected = m.expected_links();
    let mut seen = BTreeSet::new();
    for link in &m.links {
        if !seen.insert(link.id) {
            v.push(format!("link {} is defined more than once", link.id));
        }
        if !expected.contains(&link.id) {
            if link.id == LinkId::L2Mem {
                v.push("link L2Mem requires memory_attach = direct_to_L2 and an L3".to_string());
            } else {
                v.push(format!("link {} does not connect adjacent levels of this machine", link.id));
            }
        }
        if !(link.bw_down > 0.0) || link.bw_up.is_some_and(|b| !(b > 0.0)) {
            v.push(format!("bandwidth of link {} must be positive", link.id));
        }
        match link.duplex {
            Duplex::Dual if link.bw_up.is_none() => {
                v.push(format!("dual link {} needs both bw_down and bw_up", link.id));
            }
            Duplex::Single if link.bw_up.is_some_and(|b| b != link.bw_down) => {
                v.push(format!("single link {} takes one bandwidth", link.id));
            }
            _ => {}
        }
        if !(link.penalty_cy_per_byte >= 0.0) {
            v.push(format!("penalty rate of link {} must be non-negative", link.id));
        }
        if link.id.touches_memory() {
            let t = &m.topology;
            for bw in [Some(link.bw_down), link.bw_up].into_iter().flatten() {
                if bw < t.mem_bw_min || bw > t.mem_bw_max {
                    v.push(format!(
                        "memory link {} bandwidth {bw} lies outside the sustained range [{}, {}]",
                        link.id, t.mem_bw_min, t.mem_bw_max
                    ));
                }
            }
        }
    }
    for id in expected {
        if !seen.contains(&id) {
            v.push(format!("missing link {id}"));
        }
    }
}

fn validate_overlap(m: &MachineModel, v: &mut Vec<String>) {
    let known: BTreeSet<Component> = [Component::Comp, Component::RegL1]
        .into_iter()
        .chain(m.links.iter().map(|l| Component::Link(l.id)))
        .collect();

    let mut seen_when = BTreeSet::new();
    for rule in &m.overlap.rules {
        if !seen_when.insert(rule.when) {
            v.push(format!("more than one overlap rule for {}", rule.when));
        }
        if !m.has_level(rule.when) {
            v.push(format!("overlap rule for {} but the machine has no such level", rule.when));
            continue;
        }
        let mut members = BTreeSet::new();
        for label in rule.serial.iter().chain(&rule.overlap) {
            if !known.contains(label) {
                v.push(format!(
                    "overlap rule for {} references {label}, which is not a link of this machine",
                    rule.when
                ));
                continue;
            }
            if !members.insert(*label) {
                v.push(format!("overlap rule for {} lists {label} twice", rule.when));
            }
        }
        if !rule.overlap.contains(&Component::Comp) {
            v.push(format!("overlap rule for {}: comp must be in the overlap set", rule.when));
        }
        let active: BTreeSet<Component> = m.active_components(rule.when).into_iter().collect();
        let missing: Vec<_> = active.difference(&members).map(|c| c.as_str()).collect();
        let extra: Vec<_> = members.difference(&active).map(|c| c.as_str()).collect();
        if !missing.is_empty() {
            v.push(format!("overlap rule for {} does not cover {}", rule.when, missing.join(", ")));
        }
        if !extra.is_empty() {
            v.push(format!(
                "overlap rule for {} lists {}, which cannot carry data at that residence",
                rule.when,
                extra.join(", ")
            ));
        }
    }
    for level in m.levels() {
        if m.overlap.rule_for(level).is_none() {
            v.push(format!("no overlap rule for data served from {level}"));
        }
    }
}

fn validate_topology(m: &MachineModel, v: &mut Vec<String>) {
    let t = &m.topology;
    if t.numa_domains == 0 || t.cores_per_domain == 0 {
        v.push("topology needs at least one domain with at least one core".to_string());
    }
    if !(t.mem_bw_min > 0.0) || !(t.mem_bw_min <= t.mem_bw_max) {
        v.push(format!(
            "sustained memory bandwidth range [{}, {}] must be positive and ordered",
            t.mem_bw_min, t.mem_bw_max
        ));
    }
    if t.memory_attach == MemoryAttach::DirectToL2 && m.last_cache() != Level::L3 {
        v.push("memory_attach = direct_to_L2 needs an L3 cache".to_string());
    }
    for g in &t.shared_groups {
        if m.cache(g.level).is_none() {
            v.push(format!("shared group refers to missing level {}", g.level));
        }
        if g.size == 0 || g.size > t.cores_per_domain {
            v.push(format!("shared group on {} must have 1..={} cores", g.level, t.cores_per_domain));
        }
        if g.bw_cap.is_some_and(|c| !(c > 0.0)) {
            v.push(format!("shared group on {}: bandwidth cap must be positive", g.level));
        }
    }
}

/// Returns the model or an [`Error::Invalid`] listing all violations.
pub fn ensure_valid(m: MachineModel) -> Result<MachineModel> {
    let violations = validate_machine(&m);
    if violations.is_empty() {
        Ok(m)
    } else {
        Err(Error::Invalid {
            what: format!("machine `{}`", m.name),
            violations,
        })
    }
}
