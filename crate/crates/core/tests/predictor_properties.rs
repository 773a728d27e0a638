use proptest::prelude::*;

use ecm_core::hierarchy::{Component, Level};
use ecm_core::kernel::{builtin_kernel, BUILTIN_KERNEL_NAMES};
use ecm_core::machine::{builtin_machine, MachineModel, Throughput, BUILTIN_MACHINE_NAMES};
use ecm_core::predictor::{predict_single, t_comp};

fn names() -> impl Strategy<Value = (&'static str, &'static str)> {
    (
        prop::sample::select(BUILTIN_MACHINE_NAMES.to_vec()),
        prop::sample::select(BUILTIN_KERNEL_NAMES.to_vec()),
    )
}

fn scale_throughput(m: &mut MachineModel, f: f64) {
    let t = &mut m.throughput;
    let scale = |x: &mut Throughput| x.ops_per_cycle *= f;
    for x in [&mut t.add, &mut t.mul, &mut t.fma, &mut t.div, &mut t.load_store, &mut t.total]
        .into_iter()
        .flatten()
    {
        scale(x);
    }
    scale(&mut t.load);
    scale(&mut t.store);
}

proptest! {
    #[test]
    fn runtime_lies_between_max_and_sum(
        (machine, kernel) in names(),
        level in prop::sample::select(Level::ALL.to_vec()),
        ni in 8u64..1_000_000,
    ) {
        let m = builtin_machine(machine).unwrap();
        let k = builtin_kernel(kernel).unwrap().with_loop(ni, 50);
        let p = predict_single(&k, &m, Some(level)).unwrap();
        let max = p.contributions.iter().map(|c| c.total()).fold(0.0, f64::max);
        let sum: f64 = p.contributions.iter().map(|c| c.total()).sum();
        prop_assert!(max <= p.cycles && p.cycles <= sum + 1e-12);
    }

    #[test]
    fn doubling_bandwidth_halves_transfer_times(
        (machine, kernel) in names(),
        level in prop::sample::select(Level::ALL.to_vec()),
    ) {
        let m = builtin_machine(machine).unwrap();
        let mut fast = m.clone();
        for l in &mut fast.links {
            l.bw_down *= 2.0;
            l.bw_up = l.bw_up.map(|b| b * 2.0);
        }
        let k = builtin_kernel(kernel).unwrap();
        let slow = predict_single(&k, &m, Some(level)).unwrap();
        let quick = predict_single(&k, &fast, Some(level)).unwrap();
        prop_assert!(quick.cycles <= slow.cycles);
        for (a, b) in slow.contributions.iter().zip(&quick.contributions) {
            if matches!(a.component, Component::Link(_)) {
                prop_assert_eq!(b.data, a.data / 2.0);
            }
        }
    }

    #[test]
    fn doubling_throughput_halves_compute_time(
        (machine, kernel) in names(),
        f in 1.5f64..4.0,
    ) {
        let m = builtin_machine(machine).unwrap();
        let mut k = builtin_kernel(kernel).unwrap();
        k.dep_chain.clear();
        let mut wide = m.clone();
        scale_throughput(&mut wide, f);
        let base = t_comp(&k, &m).unwrap();
        let scaled = t_comp(&k, &wide).unwrap();
        prop_assert!((scaled * f - base).abs() <= 1e-12 * base.max(1.0));
    }
}
