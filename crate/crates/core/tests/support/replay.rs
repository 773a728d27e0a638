//! Brute-force traffic oracle: replays the address stream of a kernel through
//! fully associative LRU caches and counts the bytes crossing every link.
//!
//! Lines are one element wide. Every cache on the fill path installs the
//! line, including an L3 that memory fills bypass. Evictions move down one
//! level: modified lines always, clean lines only into a victim cache that
//! accepts them. Write-backs into a line that is already present do not
//! refresh its recency, and an outer cache never picks as victim a line
//! that an inner level still holds.

use std::collections::{BTreeMap, HashMap};

use ecm_core::hierarchy::{Level, LinkId};
use ecm_core::kernel::KernelModel;
use ecm_core::machine::{MachineModel, MemoryAttach};

type Key = (usize, i64);

struct Lru {
    capacity: usize,
    clock: u64,
    lines: HashMap<Key, (u64, bool)>,
    order: BTreeMap<u64, Key>,
}

impl Lru {
    fn new(capacity: usize) -> Self {
        Lru {
            capacity,
            clock: 0,
            lines: HashMap::new(),
            order: BTreeMap::new(),
        }
    }

    fn contains(&self, key: Key) -> bool {
        self.lines.contains_key(&key)
    }

    /// Inserts `key` as most recently used, or refreshes it when `refresh`
    /// is set. `dirty` is OR-ed into the line state.
    fn touch(&mut self, key: Key, dirty: bool, refresh: bool) {
        self.clock += 1;
        if let Some((stamp, d)) = self.lines.get_mut(&key) {
            *d |= dirty;
            if refresh {
                self.order.remove(stamp);
                *stamp = self.clock;
                self.order.insert(self.clock, key);
            }
            return;
        }
        self.lines.insert(key, (self.clock, dirty));
        self.order.insert(self.clock, key);
    }

    fn over_capacity(&self) -> bool {
        self.lines.len() > self.capacity
    }

    /// Removes the least recently used line for which `keep` is false.
    fn evict_where(&mut self, keep: impl Fn(&Key) -> bool) -> (Key, bool) {
        let (&stamp, &key) = self
            .order
            .iter()
            .find(|(_, k)| !keep(k))
            .expect("a cache larger than the levels above it always has a victim");
        self.order.remove(&stamp);
        let (_, d) = self.lines.remove(&key).unwrap();
        (key, d)
    }

    fn clean(&mut self, key: Key) {
        if let Some((_, d)) = self.lines.get_mut(&key) {
            *d = false;
        }
    }
}

struct LevelPolicy {
    write_through: bool,
    accepts_clean: bool,
}

struct Hierarchy {
    caches: Vec<Lru>,
    policy: Vec<LevelPolicy>,
    direct_to_l2: bool,
    elem_bytes: Vec<u64>,
    down: BTreeMap<LinkId, u64>,
    up: BTreeMap<LinkId, u64>,
}

fn level_of(i: usize) -> Level {
    Level::CACHES.get(i).copied().unwrap_or(Level::Mem)
}

impl Hierarchy {
    fn mem(&self) -> usize {
        self.caches.len()
    }

    fn link_out_of(&self, k: usize) -> LinkId {
        let outer = if k + 1 == self.mem() { Level::Mem } else { level_of(k + 1) };
        LinkId::between(level_of(k), outer).unwrap()
    }

    fn add(&mut self, link: LinkId, up: bool, bytes: u64) {
        let map = if up { &mut self.up } else { &mut self.down };
        *map.entry(link).or_default() += bytes;
    }

    fn fetch(&mut self, key: Key) {
        let bytes = self.elem_bytes[key.0];
        let s = (0..self.mem()).find(|&k| self.caches[k].contains(key)).unwrap_or(self.mem());
        if s == 0 {
            self.caches[0].touch(key, false, true);
            return;
        }
        if s == self.mem() && self.direct_to_l2 {
            self.add(LinkId::L2Mem, false, bytes);
            self.add(LinkId::L1L2, false, bytes);
        } else {
            for k in 0..s {
                let link = self.link_out_of(k);
                self.add(link, false, bytes);
            }
        }
        if s < self.mem() {
            self.caches[s].touch(key, false, true);
        }
        for k in (0..s).rev() {
            self.install(k, key, false, true);
        }
    }

    fn install(&mut self, k: usize, key: Key, dirty: bool, refresh: bool) {
        self.caches[k].touch(key, dirty, refresh);
        if self.caches[k].over_capacity() {
            let (inner, outer) = self.caches.split_at_mut(k);
            let (victim, d) = outer[0].evict_where(|v| inner.iter().any(|c| c.contains(*v)));
            self.evict(k, victim, d);
        }
    }

    fn evict(&mut self, k: usize, key: Key, dirty: bool) {
        let bytes = self.elem_bytes[key.0];
        let link = self.link_out_of(k);
        let next = k + 1;
        if next == self.mem() {
            if dirty {
                self.add(link, true, bytes);
            }
            return;
        }
        if dirty {
            self.add(link, true, bytes);
            self.install(next, key, true, false);
        } else if self.policy[next].accepts_clean {
            self.add(link, true, bytes);
            self.install(next, key, false, false);
        }
    }

    fn read(&mut self, key: Key) {
        self.fetch(key);
    }

    fn write(&mut self, key: Key) {
        self.fetch(key);
        if self.policy[0].write_through {
            let bytes = self.elem_bytes[key.0];
            self.caches[0].clean(key);
            self.add(LinkId::L1L2, true, bytes);
            self.install(1, key, true, false);
        } else {
            self.caches[0].touch(key, true, true);
        }
    }
}

/// Per-link (down, up) bytes per iteration.
pub type Volumes = BTreeMap<LinkId, (u64, u64)>;

/// Replays `sweeps` sweeps of `k` and returns the per-iteration volumes
/// measured over the second half of the last sweep, minus its tail, together with the
/// number of iterations in that window.
///
/// `capacity_elems` gives the number of elements each cache level holds.
pub fn replay(k: &KernelModel, m: &MachineModel, capacity_elems: &[usize], sweeps: usize) -> (Volumes, u64) {
    assert_eq!(capacity_elems.len(), m.caches.len());
    let mut h = Hierarchy {
        caches: capacity_elems.iter().map(|&c| Lru::new(c)).collect(),
        policy: m
            .caches
            .iter()
            .map(|c| LevelPolicy {
                write_through: c.write_through,
                accepts_clean: c.victim && c.victim_receives_clean,
            })
            .collect(),
        direct_to_l2: m.topology.memory_attach == MemoryAttach::DirectToL2 && m.caches.len() == 3,
        elem_bytes: k.arrays.iter().map(|a| a.elem_bytes as u64).collect(),
        down: BTreeMap::new(),
        up: BTreeMap::new(),
    };

    let ni = k.ni as i64;
    let linear = |(o, i): (i64, i64)| o * ni + i;
    let reads: Vec<(usize, i64)> = k
        .arrays
        .iter()
        .enumerate()
        .flat_map(|(a, arr)| arr.read_offsets().iter().map(move |&off| (a, off)))
        .map(|(a, off)| (a, linear(off)))
        .collect();
    let writes: Vec<(usize, i64)> = k
        .arrays
        .iter()
        .enumerate()
        .flat_map(|(a, arr)| arr.write_offsets().iter().map(move |&off| (a, off)))
        .map(|(a, off)| (a, linear(off)))
        .collect();

    let n = (k.ni * k.nj) as i64;
    let (start, end) = (n / 2, n - n / 8);
    let mut before = (BTreeMap::new(), BTreeMap::new());
    for sweep in 0..sweeps {
        let last = sweep + 1 == sweeps;
        for t in 0..n {
            if last && t == start {
                before = (h.down.clone(), h.up.clone());
            }
            if last && t == end {
                break;
            }
            for &(a, d) in &reads {
                h.read((a, t + d));
            }
            for &(a, d) in &writes {
                h.write((a, t + d));
            }
        }
    }

    let window = (end - start) as u64;
    let mut out = Volumes::new();
    for link in m.links.iter().map(|l| l.id) {
        let diff = |now: &BTreeMap<LinkId, u64>, then: &BTreeMap<LinkId, u64>| {
            now.get(&link).copied().unwrap_or(0) - then.get(&link).copied().unwrap_or(0)
        };
        out.insert(link, (diff(&h.down, &before.0), diff(&h.up, &before.1)));
    }
    (out, window)
}
