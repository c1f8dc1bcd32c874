use std::sync::Arc;

use proptest::prelude::*;

use rbrw_core::coupling::{run_coupled, validate_spec, Component, CouplingRunParams, CouplingSpec};
use rbrw_core::experiments::{classify_run, RunSummaries, Start, Thresholds};
use rbrw_core::graph::{AlphaWeights, Graph, Kernel, KernelKind, Region};
use rbrw_core::moments::MomentSystem;
use rbrw_core::profiles::RateProfile;
use rbrw_core::simulate::{run_replica, run_replicas, run_with_observer, Configuration, EventKind, SimParams};
use rbrw_core::spectral::{theta_estimate, theta_estimate_unguarded, tree_closed_forms, TreeRadial};

fn arb_graph() -> impl Strategy<Value = Graph> {
    prop_oneof![
        (1usize..=2, 3usize..=7).prop_map(|(d, l)| Graph::lattice_torus(d, l).unwrap()),
        (1usize..=2, 2usize..=7).prop_map(|(d, l)| Graph::lattice_box(d, l).unwrap()),
        (2usize..=3, 1usize..=4).prop_map(|(n, depth)| Graph::tree(n, depth).unwrap()),
    ]
}

fn arb_kernel() -> impl Strategy<Value = Kernel<f64>> {
    prop_oneof![
        arb_graph().prop_map(|g| Kernel::simple(Arc::new(g))),
        (2usize..=3, 2usize..=4, 0.01f64..0.99).prop_map(|(n, depth, u)| {
            let g = Arc::new(Graph::tree(n, depth).unwrap());
            let p = u / n as f64;
            Kernel::build(g, KernelKind::BiasedTree { p }).unwrap()
        }),
    ]
}

/// Nonincreasing table of length up to 6 and a tail below its last entry.
fn arb_profile() -> impl Strategy<Value = RateProfile<f64>> {
    (prop::collection::vec(0.0f64..3.0, 1..6), 0.0f64..1.0).prop_map(|(mut steps, tail_frac)| {
        let mut v = 4.0;
        let mut table = Vec::new();
        for s in steps.drain(..) {
            v = (v - s).max(0.0);
            table.push(v);
        }
        let tail = table.last().unwrap() * tail_frac;
        RateProfile::from_table(table, tail).unwrap()
    })
}

fn ball_of(k: &Kernel<f64>, r: usize) -> Region {
    Region::ball(k.graph(), k.graph().root(), r)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kernel_support_is_the_edge_set(k in arb_kernel()) {
        let g = k.graph();
        for x in 0..g.len() {
            for y in 0..g.len() {
                prop_assert_eq!(k.p(x, y) > 0.0, g.are_neighbors(x, y), "({}, {})", x, y);
            }
        }
    }

    #[test]
    fn row_sums_and_restriction(k in arb_kernel(), r in 0usize..4) {
        for x in 0..k.len() {
            prop_assert!(k.row_sum(x) <= 1.0 + 1e-12);
        }
        let lossy = k.lossy_vertices();
        for x in 0..k.len() {
            if !lossy.contains(&x) {
                prop_assert!((k.row_sum(x) - 1.0).abs() <= 1e-12);
            }
        }
        let region = ball_of(&k, r);
        let once = k.restrict(&region).unwrap();
        let twice = once.restrict(&region).unwrap();
        prop_assert_eq!(&once, &twice);
        for x in 0..k.len() {
            prop_assert!(once.row_sum(x) <= k.row_sum(x) + 1e-12);
            for y in 0..k.len() {
                let inside = region.contains(x) && region.contains(y);
                prop_assert_eq!(once.p(x, y), if inside { k.p(x, y) } else { 0.0 });
            }
        }
    }

    #[test]
    fn alpha_inequality_everywhere(k in arb_kernel(), r in 0usize..4) {
        let w = AlphaWeights::with_default_base(k.graph()).unwrap();
        prop_assert!(w.satisfied_by(&k), "ratio {}", w.kernel_ratio(&k));
        prop_assert!(w.satisfied_by(&k.restrict(&ball_of(&k, r)).unwrap()));
    }

    #[test]
    fn truncation_is_monotone(c in arb_profile(), n in 1u32..8) {
        let cn = c.truncate(n).unwrap();
        let cn1 = c.truncate(n + 1).unwrap();
        for j in 0..20 {
            prop_assert!(cn.rate(j) <= c.rate(j));
            prop_assert!(cn.rate(j) <= cn1.rate(j));
        }
        prop_assert_eq!(cn.rate(n), 0.0);
        prop_assert!(cn.occupancy_cap().is_some_and(|m| m <= n));
    }

    #[test]
    fn compatibility_matches_brute_force(a in arb_profile(), b in arb_profile(), k2 in 0u32..4) {
        let spec = CouplingSpec {
            components: vec![
                Component {
                    region: Region::all(3),
                    floor: 0,
                    gamma: 1.0,
                    profile: a.clone(),
                    initial: Configuration::zeros(3),
                },
                Component {
                    region: Region::all(3),
                    floor: k2,
                    gamma: 1.0,
                    profile: b.clone(),
                    initial: Configuration::constant(3, k2),
                },
            ],
        };
        let brute = (0..40).all(|m| a.rate(k2 + m) <= b.rate(k2 + m));
        prop_assert_eq!(validate_spec(&spec).is_empty(), brute);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn rho_is_at_most_theta(l in 3usize..8, d in 1usize..=2, n in 2usize..=3, u in 0.05f64..0.95) {
        // on a box every row near the wall is lossy, so compare raw iterates:
        // p^n(x, x) <= (1 P^n)(x) holds at every n
        let k = Kernel::<f64>::simple(Arc::new(Graph::lattice_box(d, l).unwrap()));
        let x = k.graph().root();
        let mut ret = vec![0.0; k.len()];
        ret[x] = 1.0;
        let mut w = vec![1.0; k.len()];
        for n in 1..=40 {
            ret = k.matrix().vec_mul(&ret);
            w = k.matrix().vec_mul(&w);
            prop_assert!(ret[x] <= w[x] + 1e-15, "box n={n}: {} > {}", ret[x], w[x]);
        }

        let tree = TreeRadial::new(n, u / n as f64).unwrap();
        let theta = tree.theta_estimate(200).unwrap().extrapolated;
        let rho = tree.rho_estimate(200).unwrap().extrapolated;
        prop_assert!(rho <= theta + 0.02, "tree: rho {rho} theta {theta}");
    }

    #[test]
    fn restriction_lowers_column_sum_iterates(l in 4usize..9, r in 1usize..3) {
        let k = Kernel::simple(Arc::new(Graph::lattice_torus(1, l).unwrap()));
        let sub = k.restrict(&ball_of(&k, r)).unwrap();
        let full = theta_estimate(&k, 20).unwrap();
        let part = theta_estimate_unguarded(&sub, 20).unwrap();
        for (a, b) in part.points.iter().zip(&full.points) {
            prop_assert!(a.value <= b.value + 1e-12);
        }
    }

    #[test]
    fn closed_forms_bracket_radial_theta(n in 2usize..=3, u in 0.0f64..=1.0) {
        let p = u / n as f64;
        let cf = tree_closed_forms(n, p).unwrap();
        prop_assert!(cf.theta_lo <= cf.theta_hi + 1e-12);
        let theta = TreeRadial::new(n, p).unwrap().theta_estimate(400).unwrap().extrapolated;
        prop_assert!(theta >= cf.theta_lo - 1e-3 && theta <= cf.theta_hi + 1e-3,
            "theta {theta} outside [{}, {}]", cf.theta_lo, cf.theta_hi);
        // continuity of rho at p = 1/2n
        let c = 0.5 / n as f64;
        let left = tree_closed_forms(n, c - 1e-9).unwrap().rho;
        let right = tree_closed_forms(n, c + 1e-9).unwrap().rho;
        prop_assert!((left - right).abs() < 1e-6);
    }

    #[test]
    fn simulation_is_deterministic_and_local(
        seed in any::<u64>(),
        c in arb_profile(),
        l in 4usize..10,
        r in 1usize..3,
        floor in 0u32..2,
    ) {
        let k = Kernel::simple(Arc::new(Graph::lattice_torus(1, l).unwrap()));
        let region = ball_of(&k, r);
        let mut eta0 = Configuration::<f64>::zeros(l);
        for x in region.iter() {
            for _ in 0..floor + 1 {
                eta0.increment(x);
            }
        }
        let params = SimParams {
            gamma: 1.0,
            floor,
            region: region.clone(),
            profile: c,
            t_end: 3.0,
            seed,
            sample_times: vec![1.0, 2.0, 3.0],
            frozen_exterior: false,
            max_events: Some(20_000),
        };
        let mut events = Vec::new();
        let a = run_with_observer(&k, &params, &eta0, 5, |ev, eta| {
            events.push(*ev);
            for x in 0..l {
                assert!(region.contains(x) || eta.get(x) == 0, "particle outside the region");
                if region.contains(x) {
                    assert!(eta.get(x) >= floor, "floor broken");
                }
            }
        })
        .unwrap();
        let b = run_replica(&k, &params, &eta0, 5).unwrap();
        prop_assert_eq!(&a, &b);
        for w in events.windows(2) {
            prop_assert!(w[0].time < w[1].time);
        }
        for ev in &events {
            prop_assert!(region.contains(ev.site));
            if ev.accepted && ev.kind == EventKind::Birth {
                let y = ev.target.unwrap();
                prop_assert!(region.contains(y) && k.graph().are_neighbors(ev.site, y));
            }
        }
    }

    #[test]
    fn valid_couplings_never_break_order(
        seed in any::<u64>(),
        c in arb_profile(),
        r1 in 1usize..3,
        extra in 0.0f64..2.0,
    ) {
        let l = 9;
        let k = Kernel::simple(Arc::new(Graph::lattice_torus(1, l).unwrap()));
        let inner = ball_of(&k, r1);
        let mut eta1 = Configuration::zeros(l);
        eta1.increment(k.graph().root());
        // the larger component breeds at least as fast everywhere
        let big = RateProfile::from_table(
            c.table().iter().map(|v| v + extra).collect(),
            c.tail() + extra,
        ).unwrap();
        let spec = CouplingSpec {
            components: vec![
                Component { region: inner, floor: 0, gamma: 1.0, profile: c.clone(), initial: eta1 },
                Component { region: Region::all(l), floor: 1, gamma: 1.0, profile: c, initial: Configuration::constant(l, 1) },
                Component { region: Region::all(l), floor: 1, gamma: 0.5, profile: big, initial: Configuration::constant(l, 2) },
            ],
        };
        prop_assert!(validate_spec(&spec).is_empty(), "{:?}", validate_spec(&spec));
        let run = CouplingRunParams { t_end: 4.0, seed, replica: 0, sample_times: vec![2.0, 4.0], max_events: Some(50_000) };
        let out = run_coupled(&k, &spec, &run).unwrap();
        prop_assert!(out.certificate.is_clean(), "{}", out.certificate);
        // a run cut off by the event budget records fewer snapshots
        for i in 0..out.trajectories[0].snapshots.len() {
            for h in 0..2 {
                let lo = &out.trajectories[h].snapshots[i];
                let hi = &out.trajectories[h + 1].snapshots[i];
                prop_assert!(lo.iter().zip(hi).all(|(a, b)| a <= b));
            }
        }
    }

    #[test]
    fn brw_dominates_rbrw(seed in any::<u64>(), c in arb_profile()) {
        let l = 10;
        let k = Kernel::simple(Arc::new(Graph::lattice_torus(1, l).unwrap()));
        let brw = RateProfile::constant(c.lambda()).unwrap();
        let start = Configuration::delta(l, 0);
        let comp = |profile: RateProfile<f64>| Component {
            region: Region::all(l),
            floor: 0,
            gamma: 1.0,
            profile,
            initial: start.clone(),
        };
        let spec = CouplingSpec { components: vec![comp(c), comp(brw)] };
        prop_assert!(validate_spec(&spec).is_empty());
        let run = CouplingRunParams { t_end: 3.0, seed, replica: 1, sample_times: vec![3.0], max_events: Some(50_000) };
        prop_assert!(run_coupled(&k, &spec, &run).unwrap().certificate.is_clean());
    }

    #[test]
    fn transient_reaches_steady_state(
        l in 2usize..6,
        lambda in 0.1f64..0.9,
        gamma in 0.5f64..2.0,
        floor in 0u32..3,
        r in 0usize..3,
    ) {
        let k = Kernel::simple(Arc::new(Graph::lattice_box(1, l).unwrap()));
        let region = ball_of(&k, r);
        let lambda = lambda * gamma;
        let sys = MomentSystem::new(&k, &region, lambda, gamma, floor).unwrap();
        prop_assume!(sys.stable());
        // slowest relaxation is the stability margin gamma - lambda
        let t = 40.0 / (gamma - lambda);
        let xi0 = vec![1.0; sys.len()];
        let path = sys.second_moment(&xi0, &[t / 2.0, t]).unwrap();
        let steady = sys.steady_state().unwrap();
        for x in 0..sys.len() {
            prop_assert!((path.m[1][x] - steady.m[x]).abs() <= 1e-8);
            prop_assert!(path.variance(0, x) >= -1e-8 && path.variance(1, x) >= -1e-8);
        }
        for (a, b) in path.c[1].iter().zip(&steady.c) {
            prop_assert!((a - b).abs() <= 1e-8 * b.abs().max(1.0), "C {a} vs steady {b}");
        }
    }

    #[test]
    fn classifier_is_deterministic(seed in any::<u64>()) {
        let l = 12;
        let k = Kernel::simple(Arc::new(Graph::lattice_torus(1, l).unwrap()));
        let params = SimParams::main_model(l, RateProfile::constant(1.5).unwrap(), 4.0, seed, vec![]).with_sample_grid(8);
        let trajs = run_replicas(&k, &params, &Configuration::delta(l, 0), 60).unwrap();
        let summ = RunSummaries::from_trajectories(&trajs, 0, Start::Delta(0));
        let a = classify_run(&summ, &Thresholds::default()).unwrap();
        let b = classify_run(&summ.clone(), &Thresholds::default()).unwrap();
        prop_assert_eq!(a, b);
    }
}
