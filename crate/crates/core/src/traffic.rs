//! Data volumes per loop iteration on every link of the hierarchy.
//!
//! Volumes are counted in elements, not cache lines, for dense arrays.
//! Each reference of an array is classified by the level that serves it
//! (the layer condition); fills, write-allocates, write-through stores and
//! evictions are then charged per iteration.

use std::collections::BTreeMap;
use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hierarchy::{Level, LinkId};
use crate::kernel::{ArrayAccess, KernelModel, Offset, ParallelAxis};
use crate::machine::{MachineModel, MemoryAttach};

/// Level each array is streamed from, keyed by array id.
pub type Residence = BTreeMap<String, Level>;

/// Places every array of `k` at `level`.
pub fn uniform_residence(k: &KernelModel, level: Level) -> Residence {
    k.arrays.iter().map(|a| (a.id.clone(), level)).collect()
}

/// Outermost level in a residence map (L1 when empty).
pub fn outermost(r: &Residence) -> Level {
    r.values().copied().max().unwrap_or(Level::L1)
}

/// Puts all arrays in the innermost cache whose effective capacity holds the
/// combined footprint, or in memory.
pub fn locate_arrays(k: &KernelModel, m: &MachineModel) -> Residence {
    let footprint = k.footprint_bytes();
    let level = m
        .caches
        .iter()
        .find(|c| c.capacity_bytes / 2 >= footprint)
        .map_or(Level::Mem, |c| c.level);
    uniform_residence(k, level)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceReuse {
    pub array: String,
    pub offset: Offset,
    pub is_write: bool,
    /// Bytes touched since the previous access to the same element; `None`
    /// for the leading reference, which sees the element first.
    pub reuse_distance_bytes: Option<u64>,
    pub serving: Level,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ReuseAnalysis {
    pub references: Vec<ReferenceReuse>,
}

impl ReuseAnalysis {
    /// References served from beyond `level`.
    pub fn misses(&self, level: Level) -> usize {
        self.references.iter().filter(|r| r.serving > level).count()
    }

    /// Misses at `level` on arrays that the kernel reads, counting
    /// write-allocates on those arrays.
    pub fn read_array_misses(&self, k: &KernelModel, level: Level) -> usize {
        self.references
            .iter()
            .filter(|r| r.serving > level)
            .filter(|r| k.array(&r.array).is_some_and(ArrayAccess::is_read))
            .count()
    }

    pub fn for_array<'a>(&'a self, id: &'a str) -> impl Iterator<Item = &'a ReferenceReuse> + 'a {
        self.references.iter().filter(move |r| r.array == id)
    }
}

fn check_residence(k: &KernelModel, m: &MachineModel, r: &Residence) -> Result<()> {
    for a in &k.arrays {
        let level = r.get(&a.id).ok_or_else(|| Error::InconsistentResidence {
            array: a.id.clone(),
            level: "(none)".into(),
        })?;
        if !m.has_level(*level) {
            return Err(Error::InconsistentResidence {
                array: a.id.clone(),
                level: level.to_string(),
            });
        }
    }
    Ok(())
}

/// Row length seen by one thread.
fn row_length(k: &KernelModel, threads: usize) -> i64 {
    match k.parallel_axis {
        ParallelAxis::Inner if threads > 1 => k.ni.div_ceil(threads as u64) as i64,
        _ => k.ni as i64,
    }
}

/// References of one array in the order they first touch a given element:
/// largest linear offset first, reads before writes at equal offsets.
fn ordered_refs(a: &ArrayAccess, ni: i64) -> Vec<(Offset, i64, bool)> {
    let mut refs: Vec<(Offset, i64, bool)> = a
        .read_offsets()
        .iter()
        .map(|&o| (o, false))
        .chain(a.write_offsets().iter().map(|&o| (o, true)))
        .map(|(o, w)| (o, o.0 * ni + o.1, w))
        .collect();
    refs.sort_by(|x, y| y.1.cmp(&x.1).then(x.2.cmp(&y.2)));
    refs
}

/// Distinct elements an array with the given linear offsets touches in a
/// window of `delta` iterations.
fn window_elements(offsets: &[i64], delta: i64) -> i64 {
    if delta <= 0 {
        return 0;
    }
    let mut d: Vec<i64> = offsets.to_vec();
    d.sort_unstable();
    d.dedup();
    delta + d.windows(2).map(|w| (w[1] - w[0]).min(delta)).sum::<i64>()
}

/// Serving level of every reference for `threads` threads sharing caches.
pub fn layer_condition(
    k: &KernelModel,
    m: &MachineModel,
    r: &Residence,
    threads: usize,
) -> Result<ReuseAnalysis> {
    check_residence(k, m, r)?;
    let ni = row_length(k, threads);
    let linear: Vec<(u64, Vec<i64>)> = k
        .arrays
        .iter()
        .map(|a| {
            let offs = a
                .read_offsets()
                .iter()
                .chain(a.write_offsets())
                .map(|o| o.0 * ni + o.1)
                .collect();
            (a.elem_bytes as u64, offs)
        })
        .collect();
    let distance = |delta: i64| -> u64 {
        linear
            .iter()
            .map(|(bytes, offs)| bytes * window_elements(offs, delta) as u64)
            .sum()
    };
    let capacities: Vec<(Level, u64)> = m
        .caches
        .iter()
        .map(|c| Ok((c.level, m.per_thread_capacity(c.level, threads)?)))
        .collect::<Result<_>>()?;

    let mut out = Vec::new();
    for a in &k.arrays {
        let residence = r[&a.id];
        let mut prev: Option<i64> = None;
        for (offset, d, is_write) in ordered_refs(a, ni) {
            let (reuse, serving) = match prev {
                None => (None, residence),
                Some(p) => {
                    let dist = distance(p - d);
                    let level = capacities
                        .iter()
                        .find(|(_, cap)| *cap >= dist)
                        .map_or(Level::Mem, |(l, _)| *l);
                    (Some(dist), level.min(residence))
                }
            };
            out.push(ReferenceReuse {
                array: a.id.clone(),
                offset,
                is_write,
                reuse_distance_bytes: reuse,
                serving,
            });
            prev = Some(d);
        }
    }
    Ok(ReuseAnalysis { references: out })
}

/// Bytes per iteration in both directions of one link. `down` moves toward
/// the core, `up` toward memory.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LinkVolume {
    pub down: f64,
    pub up: f64,
}

impl LinkVolume {
    pub fn total(&self) -> f64 {
        self.down + self.up
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrafficProfile {
    pub volumes: BTreeMap<LinkId, LinkVolume>,
}

impl TrafficProfile {
    pub fn get(&self, link: LinkId) -> LinkVolume {
        self.volumes.get(&link).copied().unwrap_or_default()
    }

    /// Links that carry memory traffic.
    pub fn memory_links(&self) -> impl Iterator<Item = (LinkId, LinkVolume)> + '_ {
        self.volumes
            .iter()
            .filter(|(l, _)| l.touches_memory())
            .map(|(l, v)| (*l, *v))
    }

    /// Bytes per iteration moving toward memory across all links.
    pub fn total_up(&self) -> f64 {
        self.volumes.values().map(|v| v.up).sum()
    }
}

struct Accumulator<'a> {
    m: &'a MachineModel,
    volumes: BTreeMap<LinkId, LinkVolume>,
}

impl Accumulator<'_> {
    fn add(&mut self, link: LinkId, up: bool, bytes: f64) {
        let v = self.volumes.entry(link).or_default();
        if up {
            v.up += bytes;
        } else {
            v.down += bytes;
        }
    }

    /// Level below `level` in the eviction chain.
    fn next_out(&self, level: Level) -> Level {
        self.m
            .caches
            .iter()
            .map(|c| c.level)
            .find(|l| *l > level)
            .unwrap_or(Level::Mem)
    }

    fn fill(&mut self, serving: Level, bytes: f64) {
        let direct = self.m.topology.memory_attach == MemoryAttach::DirectToL2
            && self.m.cache(Level::L3).is_some();
        if serving == Level::Mem && direct {
            self.add(LinkId::L2Mem, false, bytes);
            self.add(LinkId::L1L2, false, bytes);
            return;
        }
        let mut level = Level::L1;
        while level < serving {
            let next = self.next_out(level);
            if let Some(link) = LinkId::between(level, next) {
                self.add(link, false, bytes);
            }
            level = next;
        }
    }
}

/// Per-link volumes for `k` with data placed per `r`.
pub fn derive_traffic(
    k: &KernelModel,
    m: &MachineModel,
    r: &Residence,
    threads: usize,
) -> Result<TrafficProfile> {
    let analysis = layer_condition(k, m, r, threads)?;
    let mut acc = Accumulator {
        m,
        volumes: m.links.iter().map(|l| (l.id, LinkVolume::default())).collect(),
    };
    let line = m.cache(Level::L1).map_or(64, |c| c.line_bytes) as f64;
    let write_through_l1 = m.cache(Level::L1).is_some_and(|c| c.write_through);

    for a in &k.arrays {
        let elem = a.elem_bytes as f64;
        let fill_bytes = if a.dense { elem } else { line.max(elem) };
        let refs: Vec<&ReferenceReuse> = analysis.for_array(&a.id).collect();

        for rr in &refs {
            if rr.serving == Level::L1 {
                continue;
            }
            let evaded = rr.is_write
                && a.dense
                && m.caches
                    .iter()
                    .any(|c| c.level < rr.serving && c.write_allocate_evasion);
            if !evaded {
                acc.fill(rr.serving, fill_bytes);
            }
        }
        if write_through_l1 {
            for _ in refs.iter().filter(|rr| rr.is_write) {
                acc.add(LinkId::L1L2, true, elem);
            }
        }

        for cache in &m.caches {
            let level = cache.level;
            let mut intervals = 0usize;
            let mut dirty = 0usize;
            let mut current_dirty = false;
            let mut open = false;
            for rr in &refs {
                if rr.serving > level {
                    if open && current_dirty {
                        dirty += 1;
                    }
                    intervals += 1;
                    open = true;
                    current_dirty = false;
                }
                if rr.is_write && open {
                    current_dirty = true;
                }
            }
            if open && current_dirty {
                dirty += 1;
            }
            if cache.write_through {
                dirty = 0;
            }
            let clean = intervals - dirty;
            let next = acc.next_out(level);
            let Some(link) = LinkId::between(level, next) else {
                continue;
            };
            acc.add(link, true, dirty as f64 * fill_bytes);
            let accepts_clean = m.cache(next).is_some_and(|c| c.accepts_clean_victims());
            if accepts_clean {
                acc.add(link, true, clean as f64 * fill_bytes);
            }
        }
    }
    Ok(TrafficProfile {
        volumes: acc.volumes,
    })
}

/// Replaces the volumes of the listed links.
pub fn override_traffic(
    p: &TrafficProfile,
    overrides: &BTreeMap<LinkId, LinkVolume>,
) -> Result<TrafficProfile> {
    let mut out = p.clone();
    for (link, v) in overrides {
        match out.volumes.get_mut(link) {
            Some(slot) => *slot = *v,
            None => return Err(Error::UnknownLink(link.to_string())),
        }
    }
    Ok(out)
}

#[derive(Debug, Deserialize)]
struct VolumeRow {
    link: String,
    down_bytes_per_it: f64,
    up_bytes_per_it: f64,
}

/// Reads `link,down_bytes_per_it,up_bytes_per_it` rows.
pub fn read_volume_csv<R: Read>(reader: R) -> Result<BTreeMap<LinkId, LinkVolume>> {
    let mut out = BTreeMap::new();
    for row in csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader).deserialize() {
        let row: VolumeRow = row?;
        if !(row.down_bytes_per_it >= 0.0 && row.up_bytes_per_it >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "negative volume for link {}",
                row.link
            )));
        }
        out.insert(
            row.link.parse()?,
            LinkVolume {
                down: row.down_bytes_per_it,
                up: row.up_bytes_per_it,
            },
        );
    }
    Ok(out)
}
