#![allow(dead_code)]

pub mod replay;

use ecm_core::hierarchy::Level;
use ecm_core::kernel::{builtin_kernels, KernelModel};
use ecm_core::machine::{builtin_machines, MachineModel};
use ecm_core::traffic::{derive_traffic, uniform_residence};

/// One oracle configuration: cache sizes in rows of `ni` elements, the
/// residence of all arrays and the number of rows per sweep.
pub struct Case {
    pub rows: [f64; 3],
    pub residence: Level,
    pub nj: u64,
}

pub fn cases() -> Vec<Case> {
    let mem = |l1, l2, l3| Case { rows: [l1, l2, l3], residence: Level::Mem, nj: 64 };
    vec![
        mem(1.5, 2.5, 3.5),
        mem(1.5, 3.5, 4.5),
        mem(2.5, 4.5, 8.5),
        mem(3.5, 6.5, 12.5),
        mem(4.5, 8.5, 16.5),
        Case { rows: [1.5, 2.5, 200.5], residence: Level::L3, nj: 32 },
        Case { rows: [2.5, 4.5, 200.5], residence: Level::L3, nj: 32 },
        Case { rows: [4.5, 8.5, 200.5], residence: Level::L3, nj: 32 },
        Case { rows: [1.5, 200.5, 400.5], residence: Level::L2, nj: 32 },
        Case { rows: [3.5, 200.5, 400.5], residence: Level::L2, nj: 32 },
        Case { rows: [4.5, 200.5, 400.5], residence: Level::L2, nj: 32 },
        Case { rows: [50.5, 100.5, 200.5], residence: Level::L1, nj: 8 },
    ]
}

/// Copy of `m` whose effective capacities hold the given number of rows.
pub fn resize(m: &MachineModel, k: &KernelModel, rows: &[f64; 3]) -> (MachineModel, Vec<usize>) {
    let mut m = m.clone();
    let mut elems = Vec::new();
    for (cache, r) in m.caches.iter_mut().zip(rows) {
        let e = (r * k.ni as f64) as usize;
        let bytes = e as u64 * 8;
        cache.capacity_bytes = 2 * bytes;
        elems.push(e);
    }
    (m, elems)
}

/// Compares derived volumes with the replay oracle for every machine and
/// kernel preset, returning one line per mismatch, plus the case count.
pub fn traffic_mismatches(row_lengths: &[u64]) -> (Vec<String>, usize) {
    let mut bad = Vec::new();
    let mut count = 0;
    for (mname, machine) in builtin_machines() {
        for (kname, kernel) in builtin_kernels() {
            for &ni in row_lengths {
                for case in cases() {
                    let k = kernel.with_loop(ni, case.nj);
                    let (m, elems) = resize(&machine, &k, &case.rows);
                    let r = uniform_residence(&k, case.residence);
                    let derived = derive_traffic(&k, &m, &r, 1).unwrap();
                    let (oracle, window) = replay::replay(&k, &m, &elems, 2);
                    count += 1;
                    for (link, (down, up)) in oracle {
                        let d = derived.get(link);
                        let want = (d.down * window as f64, d.up * window as f64);
                        if want != (down as f64, up as f64) {
                            bad.push(format!(
                                "{mname}/{kname} ni={ni} rows={:?} in {}: {link} derived {}/{} oracle {:.3}/{:.3}",
                                case.rows,
                                case.residence,
                                d.down,
                                d.up,
                                down as f64 / window as f64,
                                up as f64 / window as f64,
                            ));
                        }
                    }
                }
            }
        }
    }
    (bad, count)
}
