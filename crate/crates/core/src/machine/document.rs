//! TOML form of a machine model.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{
    ensure_valid, CacheLevel, Duplex, MachineModel, MemoryAttach, MemoryLink, OverlapPolicy,
    OverlapRule, PenaltyDirection, PortConstraint, SharedGroup, Throughput, ThroughputTable,
    Topology,
};
use crate::error::{Error, Result};
use crate::hierarchy::{Component, Level, LinkId};
use crate::num::Num;
use crate::ops::OpClass;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MachineDoc {
    name: String,
    frequency_ghz: Num,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    ports: Vec<Vec<OpClass>>,
    throughput: ThroughputDoc,
    #[serde(default)]
    latency: BTreeMap<OpClass, Num>,
    cache: BTreeMap<Level, CacheDoc>,
    link: BTreeMap<LinkId, LinkDoc>,
    overlap: OverlapDoc,
    topology: TopologyDoc,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ThroughputDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    add: Option<ThroughputEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mul: Option<ThroughputEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    fma: Option<ThroughputEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    div: Option<ThroughputEntry>,
    load: ThroughputEntry,
    store: ThroughputEntry,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    load_store: Option<ThroughputEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    total: Option<ThroughputEntry>,
}

/// Either a bare ops/cycle figure or the instruction throughput and SIMD
/// width it derives from.
#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum ThroughputEntry {
    Ops(Num),
    Detailed(DetailedThroughput),
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DetailedThroughput {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ops_per_cycle: Option<Num>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tau: Option<Num>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    simd_width: Option<Num>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CacheDoc {
    capacity_bytes: u64,
    #[serde(default = "one")]
    shared_by: u32,
    #[serde(default = "line")]
    line_bytes: u32,
    #[serde(default)]
    write_through: bool,
    #[serde(default)]
    victim: bool,
    #[serde(default = "yes")]
    victim_receives_clean: bool,
    #[serde(default)]
    write_allocate_evasion: bool,
    #[serde(default = "yes")]
    scalable: bool,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LinkDoc {
    #[serde(default = "single")]
    duplex: String,
    bw_down: Num,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    bw_up: Option<Num>,
    #[serde(default, skip_serializing_if = "Num::is_zero")]
    penalty_cy_per_byte: Num,
    #[serde(default = "up")]
    penalty_direction: String,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OverlapDoc {
    rules: Vec<RuleDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RuleDoc {
    when: Level,
    #[serde(default)]
    serial: Vec<Component>,
    #[serde(default)]
    overlap: Vec<Component>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TopologyDoc {
    numa_domains: u32,
    cores_per_domain: u32,
    mem_bw_min: Num,
    mem_bw_max: Num,
    #[serde(default = "through_l3")]
    memory_attach: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    shared_groups: Vec<GroupDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GroupDoc {
    level: Level,
    size: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    bw_cap: Option<Num>,
}

fn one() -> u32 {
    1
}
fn line() -> u32 {
    64
}
fn yes() -> bool {
    true
}
fn single() -> String {
    "single".into()
}
fn up() -> String {
    "up".into()
}
fn through_l3() -> String {
    "through_L3".into()
}

fn schema(message: impl Into<String>) -> Error {
    Error::Schema {
        document: "machine".into(),
        message: message.into(),
    }
}

impl ThroughputEntry {
    fn into_model(self, key: &str) -> Result<Throughput> {
        match self {
            ThroughputEntry::Ops(n) => Ok(Throughput::new(n.0)),
            ThroughputEntry::Detailed(d) => match (d.ops_per_cycle, d.tau, d.simd_width) {
                (ops, Some(tau), Some(w)) => Ok(Throughput {
                    ops_per_cycle: ops.map_or(tau.0 * w.0, |n| n.0),
                    instructions_per_cycle: Some(tau.0),
                    simd_width: Some(w.0),
                }),
                (Some(ops), None, None) => Ok(Throughput::new(ops.0)),
                _ => Err(schema(format!(
                    "throughput.{key}: give ops_per_cycle, or both tau and simd_width"
                ))),
            },
        }
    }

    fn from_model(t: &Throughput) -> Self {
        match (t.instructions_per_cycle, t.simd_width) {
            (Some(tau), Some(w)) => ThroughputEntry::Detailed(DetailedThroughput {
                ops_per_cycle: Some(Num(t.ops_per_cycle)),
                tau: Some(Num(tau)),
                simd_width: Some(Num(w)),
            }),
            _ => ThroughputEntry::Ops(Num(t.ops_per_cycle)),
        }
    }
}

fn parse_duplex(s: &str, link: LinkId) -> Result<Duplex> {
    match s {
        "single" => Ok(Duplex::Single),
        "dual" => Ok(Duplex::Dual),
        other => Err(schema(format!(
            "link.{link}.duplex: expected `single` or `dual`, got `{other}`"
        ))),
    }
}

fn parse_direction(s: &str, link: LinkId) -> Result<PenaltyDirection> {
    match s {
        "down" => Ok(PenaltyDirection::Down),
        "up" => Ok(PenaltyDirection::Up),
        "both" => Ok(PenaltyDirection::Both),
        other => Err(schema(format!(
            "link.{link}.penalty_direction: expected `down`, `up` or `both`, got `{other}`"
        ))),
    }
}

fn parse_attach(s: &str) -> Result<MemoryAttach> {
    match s {
        "through_L3" => Ok(MemoryAttach::ThroughL3),
        "direct_to_L2" => Ok(MemoryAttach::DirectToL2),
        other => Err(schema(format!(
            "topology.memory_attach: expected `through_L3` or `direct_to_L2`, got `{other}`"
        ))),
    }
}

impl MachineDoc {
    fn into_model(self) -> Result<MachineModel> {
        let t = self.throughput;
        let opt = |e: Option<ThroughputEntry>, key: &str| e.map(|e| e.into_model(key)).transpose();
        let throughput = ThroughputTable {
            add: opt(t.add, "add")?,
            mul: opt(t.mul, "mul")?,
            fma: opt(t.fma, "fma")?,
            div: opt(t.div, "div")?,
            load: t.load.into_model("load")?,
            store: t.store.into_model("store")?,
            load_store: opt(t.load_store, "load_store")?,
            total: opt(t.total, "total")?,
        };

        let mut caches = Vec::new();
        for (level, c) in self.cache {
            if level == Level::Mem {
                return Err(schema("cache.Mem: main memory is not a cache level"));
            }
            caches.push(CacheLevel {
                level,
                capacity_bytes: c.capacity_bytes,
                shared_by: c.shared_by,
                line_bytes: c.line_bytes,
                write_through: c.write_through,
                victim: c.victim,
                victim_receives_clean: c.victim_receives_clean,
                write_allocate_evasion: c.write_allocate_evasion,
                scalable: c.scalable,
            });
        }

        let mut links = Vec::new();
        for (id, l) in self.link {
            links.push(MemoryLink {
                id,
                duplex: parse_duplex(&l.duplex, id)?,
                bw_down: l.bw_down.0,
                bw_up: l.bw_up.map(|n| n.0),
                penalty_cy_per_byte: l.penalty_cy_per_byte.0,
                penalty_direction: parse_direction(&l.penalty_direction, id)?,
            });
        }

        let topo = self.topology;
        Ok(MachineModel {
            name: self.name,
            frequency_ghz: self.frequency_ghz.0,
            throughput,
            latency: self.latency.into_iter().map(|(k, v)| (k, v.0)).collect(),
            ports: self
                .ports
                .into_iter()
                .map(|classes| PortConstraint { classes })
                .collect(),
            caches,
            links,
            overlap: OverlapPolicy {
                rules: self
                    .overlap
                    .rules
                    .into_iter()
                    .map(|r| OverlapRule {
                        when: r.when,
                        serial: r.serial,
                        overlap: r.overlap,
                    })
                    .collect(),
            },
            topology: Topology {
                numa_domains: topo.numa_domains,
                cores_per_domain: topo.cores_per_domain,
                mem_bw_min: topo.mem_bw_min.0,
                mem_bw_max: topo.mem_bw_max.0,
                memory_attach: parse_attach(&topo.memory_attach)?,
                shared_groups: topo
                    .shared_groups
                    .into_iter()
                    .map(|g| SharedGroup {
                        level: g.level,
                        size: g.size,
                        bw_cap: g.bw_cap.map(|n| n.0),
                    })
                    .collect(),
            },
        })
    }

    fn from_model(m: &MachineModel) -> Self {
        let t = &m.throughput;
        let opt = |e: &Option<Throughput>| e.as_ref().map(ThroughputEntry::from_model);
        MachineDoc {
            name: m.name.clone(),
            frequency_ghz: Num(m.frequency_ghz),
            ports: m.ports.iter().map(|p| p.classes.clone()).collect(),
            throughput: ThroughputDoc {
                add: opt(&t.add),
                mul: opt(&t.mul),
                fma: opt(&t.fma),
                div: opt(&t.div),
                load: ThroughputEntry::from_model(&t.load),
                store: ThroughputEntry::from_model(&t.store),
                load_store: opt(&t.load_store),
                total: opt(&t.total),
            },
            latency: m.latency.iter().map(|(k, v)| (*k, Num(*v))).collect(),
            cache: m
                .caches
                .iter()
                .map(|c| {
                    (
                        c.level,
                        CacheDoc {
                            capacity_bytes: c.capacity_bytes,
                            shared_by: c.shared_by,
                            line_bytes: c.line_bytes,
                            write_through: c.write_through,
                            victim: c.victim,
                            victim_receives_clean: c.victim_receives_clean,
                            write_allocate_evasion: c.write_allocate_evasion,
                            scalable: c.scalable,
                        },
                    )
                })
                .collect(),
            link: m
                .links
                .iter()
                .map(|l| {
                    (
                        l.id,
                        LinkDoc {
                            duplex: match l.duplex {
                                Duplex::Single => "single",
                                Duplex::Dual => "dual",
                            }
                            .into(),
                            bw_down: Num(l.bw_down),
                            bw_up: l.bw_up.map(Num),
                            penalty_cy_per_byte: Num(l.penalty_cy_per_byte),
                            penalty_direction: match l.penalty_direction {
                                PenaltyDirection::Down => "down",
                                PenaltyDirection::Up => "up",
                                PenaltyDirection::Both => "both",
                            }
                            .into(),
                        },
                    )
                })
                .collect(),
            overlap: OverlapDoc {
                rules: m
                    .overlap
                    .rules
                    .iter()
                    .map(|r| RuleDoc {
                        when: r.when,
                        serial: r.serial.clone(),
                        overlap: r.overlap.clone(),
                    })
                    .collect(),
            },
            topology: TopologyDoc {
                numa_domains: m.topology.numa_domains,
                cores_per_domain: m.topology.cores_per_domain,
                mem_bw_min: Num(m.topology.mem_bw_min),
                mem_bw_max: Num(m.topology.mem_bw_max),
                memory_attach: match m.topology.memory_attach {
                    MemoryAttach::ThroughL3 => "through_L3",
                    MemoryAttach::DirectToL2 => "direct_to_L2",
                }
                .into(),
                shared_groups: m
                    .topology
                    .shared_groups
                    .iter()
                    .map(|g| GroupDoc {
                        level: g.level,
                        size: g.size,
                        bw_cap: g.bw_cap.map(Num),
                    })
                    .collect(),
            },
        }
    }
}

/// Parses a machine document without checking model invariants.
pub fn parse_machine_unchecked(text: &str) -> Result<MachineModel> {
    let doc: MachineDoc = toml::from_str(text).map_err(|e| schema(e.to_string()))?;
    doc.into_model()
}

/// Parses and validates a machine document.
pub fn parse_machine(text: &str) -> Result<MachineModel> {
    ensure_valid(parse_machine_unchecked(text)?)
}

pub fn serialize_machine(m: &MachineModel) -> String {
    toml::to_string(&MachineDoc::from_model(m)).expect("machine documents always serialize")
}
