use proptest::prelude::*;

use ecm_core::hierarchy::{Level, LinkId};
use ecm_core::kernel::{builtin_kernel, BUILTIN_KERNEL_NAMES};
use ecm_core::machine::{builtin_machine, MemoryAttach, BUILTIN_MACHINE_NAMES};
use ecm_core::traffic::{derive_traffic, uniform_residence, TrafficProfile};

fn names() -> impl Strategy<Value = (&'static str, &'static str)> {
    (
        prop::sample::select(BUILTIN_MACHINE_NAMES.to_vec()),
        prop::sample::select(BUILTIN_KERNEL_NAMES.to_vec()),
    )
}

/// Bytes per iteration crossing the boundary just outside `level`, in
/// each direction.
fn across(t: &TrafficProfile, level: Level) -> (f64, f64) {
    LinkId::ALL
        .iter()
        .filter(|l| {
            let (inner, outer) = l.endpoints();
            inner <= level && outer > level
        })
        .map(|l| t.get(*l))
        .fold((0.0, 0.0), |(d, u), v| (d + v.down, u + v.up))
}

proptest! {
    #[test]
    fn longer_rows_never_reduce_traffic(
        (machine, kernel) in names(),
        a in 8u64..2_000_000,
        b in 8u64..2_000_000,
        threads in 1usize..8,
    ) {
        let m = builtin_machine(machine).unwrap();
        let (short, long) = (a.min(b), a.max(b));
        let k0 = builtin_kernel(kernel).unwrap();
        let r = uniform_residence(&k0, Level::Mem);
        let small = derive_traffic(&k0.with_loop(short, 100), &m, &r, threads).unwrap();
        let large = derive_traffic(&k0.with_loop(long, 100), &m, &r, threads).unwrap();
        for cut in Level::CACHES {
            let (d0, u0) = across(&small, cut);
            let (d1, u1) = across(&large, cut);
            prop_assert!(d1 >= d0 && u1 >= u0, "beyond {}", cut);
        }
    }

    #[test]
    fn fills_into_l1_cover_fills_into_l2(
        (machine, kernel) in names(),
        ni in 8u64..2_000_000,
        level in prop::sample::select(Level::ALL.to_vec()),
    ) {
        let m = builtin_machine(machine).unwrap();
        let k = builtin_kernel(kernel).unwrap().with_loop(ni, 100);
        let t = derive_traffic(&k, &m, &uniform_residence(&k, level), 1).unwrap();
        let into_l2 = t.get(LinkId::L2L3).down + t.get(LinkId::L2Mem).down;
        prop_assert!(t.get(LinkId::L1L2).down >= into_l2);
        if m.topology.memory_attach == MemoryAttach::ThroughL3 {
            prop_assert!(t.get(LinkId::L2L3).down >= t.get(LinkId::L3Mem).down);
        }
    }

    #[test]
    fn links_beyond_the_residence_are_idle(
        (machine, kernel) in names(),
        level in prop::sample::select(Level::CACHES.to_vec()),
    ) {
        let m = builtin_machine(machine).unwrap();
        let k = builtin_kernel(kernel).unwrap();
        let t = derive_traffic(&k, &m, &uniform_residence(&k, level), 1).unwrap();
        for link in LinkId::ALL {
            let (inner, outer) = link.endpoints();
            if outer > level {
                prop_assert_eq!(t.get(link).down, 0.0, "{}", link);
                let write_through = m.cache(inner).is_some_and(|c| c.write_through);
                if !write_through {
                    prop_assert_eq!(t.get(link).up, 0.0, "{}", link);
                }
            }
        }
    }
}
