use proptest::prelude::*;

use ecm_core::hierarchy::Level;
use ecm_core::kernel::{builtin_kernel, BUILTIN_KERNEL_NAMES};
use ecm_core::machine::{builtin_machine, BUILTIN_MACHINE_NAMES};
use ecm_core::scaling::{p_sat, predict_multicore, utilization, utilization_series, ScalingOptions};
use ecm_core::traffic::uniform_residence;

/// Kernels without row reuse, whose per-thread traffic is independent of
/// the thread count.
const STREAMING: [&str; 4] = ["daxpby", "dot", "norm", "stream_triad"];

fn times() -> impl Strategy<Value = (f64, f64)> {
    (0.01f64..10.0, 1.0f64..20.0).prop_map(|(t_mem, ratio)| (t_mem, t_mem * ratio))
}

proptest! {
    #[test]
    fn utilization_stays_in_unit_interval((t_mem, t_full) in times(), p0 in 0.0f64..100.0, n in 1usize..=64) {
        for u in utilization_series(n, t_mem, p0, |_, c| t_full + c) {
            prop_assert!(u > 0.0 && u <= 1.0);
        }
    }

    #[test]
    fn without_conflicts_utilization_grows_until_saturation((t_mem, t_full) in times(), n in 2usize..=64) {
        let u = utilization_series(n, t_mem, 0.0, |_, c| t_full + c);
        for w in u.windows(2) {
            prop_assert!(w[1] > w[0] || w[1] == 1.0);
        }
    }

    #[test]
    fn more_conflict_never_raises_utilization(
        (t_mem, t_full) in times(),
        p0 in 0.0f64..50.0,
        extra in 0.0f64..50.0,
        n in 2usize..=64,
    ) {
        let low = utilization(n, t_mem, t_full, p0);
        let high = utilization(n, t_mem, t_full, p0 + extra);
        prop_assert!(high <= low + 1e-12);
    }

    #[test]
    fn broken_layer_conditions_lower_saturation(kernel in prop::sample::select(BUILTIN_KERNEL_NAMES.to_vec())) {
        let m = builtin_machine("tx2").unwrap();
        let k = builtin_kernel(kernel).unwrap();
        let opts = ScalingOptions {
            residence: Some(uniform_residence(&k, Level::Mem)),
            ..ScalingOptions::default()
        };
        let c = predict_multicore(&k, &m, &[1, 32], &opts).unwrap();
        let (one, all) = (&c.points[0], &c.points[1]);
        prop_assert!(all.cycles >= one.cycles);
    }

    #[test]
    fn saturation_scales_with_work(w in 0.1f64..10.0, t_mem in 0.01f64..10.0, f in 0.5f64..5.0) {
        let a = p_sat(w, t_mem, f);
        let b = p_sat(2.0 * w, t_mem, f);
        prop_assert!((b - 2.0 * a).abs() <= 1e-9 * b);
    }

    #[test]
    fn performance_grows_with_cores_and_respects_bounds(
        machine in prop::sample::select(BUILTIN_MACHINE_NAMES.to_vec()),
        kernel in prop::sample::select(STREAMING.to_vec()),
        level in prop::sample::select(Level::ALL.to_vec()),
    ) {
        let m = builtin_machine(machine).unwrap();
        let k = builtin_kernel(kernel).unwrap();
        let opts = ScalingOptions {
            residence: Some(uniform_residence(&k, level)),
            ..ScalingOptions::default()
        };
        let cores: Vec<usize> = (1..=m.total_cores()).collect();
        let c = predict_multicore(&k, &m, &cores, &opts).unwrap();
        let p1 = c.points[0].performance;
        for w in c.points.windows(2) {
            prop_assert!(w[1].performance >= w[0].performance * (1.0 - 1e-12));
        }
        for p in &c.points {
            prop_assert!(p.performance <= p.cores as f64 * p1 * (1.0 + 1e-12));
            if let Some(sat) = c.p_sat {
                prop_assert!(p.performance <= sat * (1.0 + 1e-12));
            }
        }
        if let (Some(sat), Some(last)) = (c.p_sat, c.points.last()) {
            if last.saturated {
                prop_assert!((last.performance - sat).abs() <= 1e-9 * sat);
            }
        }
    }
}
