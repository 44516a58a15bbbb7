use fragstorm_core::fragsim::{cmj_project, extract_antichain, is_prefix_free, simulate, CmjOptions, SimulationSpec};
use fragstorm_core::rng::{replica_rng, replica_seed};
use fragstorm_core::spine::SubordinatorPath;
use fragstorm_core::{DislocationMeasure, MassPartition, SlowlyVaryingHandle};
use proptest::prelude::*;

fn measures() -> Vec<DislocationMeasure> {
    vec![
        DislocationMeasure::uniform_binary(1.0).unwrap(),
        DislocationMeasure::k_split(3, 2.0).unwrap(),
        DislocationMeasure::crumble_binary(0.5, SlowlyVaryingHandle::constant(1.0).unwrap()).unwrap(),
        DislocationMeasure::crumble_binary(0.3, SlowlyVaryingHandle::log_power(1.0, 0.5).unwrap()).unwrap(),
    ]
}

#[test]
fn phi_is_concave_and_nondecreasing() {
    for m in measures() {
        let qs: Vec<f64> = (0..=100).map(|i| i as f64 * 0.5).collect();
        let phi: Vec<f64> = qs.iter().map(|&q| m.laplace_exponent(q).unwrap()).collect();
        let dphi: Vec<f64> = qs.iter().map(|&q| m.laplace_exponent_derivative(q).unwrap()).collect();
        assert_eq!(phi[0], 0.0);
        for i in 1..qs.len() {
            assert!(dphi[i] >= 0.0);
            assert!(dphi[i] <= dphi[i - 1] + 1e-12, "{:?} q={}", m.kind(), qs[i]);
            assert!(phi[i] >= phi[i - 1]);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn partitions_sorted_and_conservative(raw in prop::collection::vec(0.01f64..1.0, 2..12)) {
        let s: f64 = raw.iter().sum();
        let p = MassPartition::new(raw.iter().map(|x| x / s).collect()).unwrap();
        prop_assert!(p.masses().windows(2).all(|w| w[0] >= w[1]));
        prop_assert!((p.masses().iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        prop_assert!(p.masses().iter().all(|&x| x > 0.0 && x <= 1.0));
    }

    #[test]
    fn crumble_tail_is_monotone(theta in 0.05f64..0.95, p in -1.0f64..1.0, d1 in 1e-6f64..0.49, f in 0.01f64..0.99) {
        // x/((e+x) log(e+x)) stays below 1/3, so |p| < 3θ keeps the tail decreasing.
        let p = 2.9 * theta * p;
        let m = DislocationMeasure::crumble_binary(theta, SlowlyVaryingHandle::log_power(1.0, p).unwrap()).unwrap();
        let d2 = d1 * f;
        prop_assert!(m.tail(d2).unwrap() > m.tail(d1).unwrap());
    }

    #[test]
    fn time_change_inverts_the_clock(seed in any::<u64>(), alpha in 0.2f64..2.0, t in 0.01f64..3.0) {
        let m = DislocationMeasure::uniform_binary(1.0).unwrap();
        let path = fragstorm_core::spine::simulate_path(&m, 0.0, 200.0, &mut replica_rng(seed, 0)).unwrap();
        let rho = path.time_change(t, alpha).unwrap();
        prop_assert!((path.clock_integral(rho, alpha) - t).abs() <= 1e-10 * t.max(1.0));
        let z1 = path.tagged_fragment_size(t, alpha).unwrap();
        let z2 = path.tagged_fragment_size(t * 1.5, alpha).unwrap();
        prop_assert!(z2 <= z1);
    }

    #[test]
    fn paths_are_nondecreasing(sizes in prop::collection::vec(0.0f64..2.0, 0..20)) {
        let times: Vec<f64> = (1..=sizes.len()).map(|i| i as f64 * 0.5).collect();
        let path = SubordinatorPath::new(0.0, 20.0, times, sizes).unwrap();
        let bp = path.breakpoints();
        prop_assert!(bp.windows(2).all(|w| w[0].1 <= w[1].1));
    }

    #[test]
    fn record_is_monotone_and_mass_conserved(seed in any::<u64>(), mi in 0usize..3) {
        let m = &measures()[mi];
        let spec = SimulationSpec::new(1.0, 20.0, 7.0).with_jump_floor(0.01);
        let pop = simulate(m, &spec, &mut replica_rng(seed, 0)).unwrap();
        prop_assert_eq!(pop.record()[0], (0.0, 0.0));
        prop_assert!(pop.record().windows(2).all(|w| w[0].1 <= w[1].1 && w[0].0 <= w[1].0));
        prop_assert!((pop.total_mass() - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn antichains_are_prefix_free(seed in any::<u64>(), h in 2.0f64..6.0, a in 0.05f64..0.69) {
        let m = DislocationMeasure::uniform_binary(1.0).unwrap();
        let opts = CmjOptions { height_cap: h + 1.0, ..CmjOptions::default() };
        let tree = cmj_project(&m, 1.0, 10_000, None, &opts, &mut replica_rng(seed, 0)).unwrap();
        let q = extract_antichain(&tree, h, a).unwrap();
        prop_assert!(is_prefix_free(&tree, &q));
        for &i in &q {
            let mut cur = tree.nodes()[i].parent;
            while let Some(p) = cur {
                prop_assert!(tree.nodes()[p].height <= h - a);
                cur = tree.nodes()[p].parent;
            }
        }
    }

    #[test]
    fn replica_seeds_are_deterministic(base in any::<u64>(), i in any::<u64>()) {
        prop_assert_eq!(replica_seed(base, i), replica_seed(base, i));
        prop_assert_ne!(replica_seed(base, i), replica_seed(base, i.wrapping_add(1)));
    }
}
