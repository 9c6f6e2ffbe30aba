use proptest::prelude::*;

use navrec::attack::{random_attack, uniform_attack, AttackSpec};
use navrec::behavior::mnl_preferences;
use navrec::equilibrium::{beckmann_potential, project_simplex, solve_we, SolverConfig};
use navrec::network::{
    aggregate_edge_flow, enumerate_path_sets, DemandVector, Edge, EdgeLoad, OdPair,
};
use navrec::scenario::five_node_network;
use navrec::verify::random_instance;

fn edge() -> impl Strategy<Value = Edge> {
    (0.0..10.0, 0.0..5.0, 0.5..20.0, 1.0..5.0)
        .prop_map(|(a, b, k, z)| Edge::new("x", "u", "v", a, b, k, z))
}

fn five_node_sets() -> (navrec::network::Network, navrec::network::PathSets) {
    let net = five_node_network();
    let ods = [OdPair::new("1", "5"), OdPair::new("3", "5")];
    let sets = enumerate_path_sets(&net, &ods, 5).unwrap();
    (net, sets)
}

fn od_strategy(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0..1.0f64, n).prop_map(|v| {
        let s: f64 = v.iter().sum::<f64>().max(1e-9);
        v.iter().map(|x| x / s).collect()
    })
}

proptest! {
    #[test]
    fn latency_is_nondecreasing(e in edge(), f in 0.0..100.0, df in 0.0..100.0) {
        prop_assert!(e.cost(f + df).unwrap() >= e.cost(f).unwrap());
        prop_assert!(e.cost(0.0).unwrap() == e.a);
    }

    #[test]
    fn latency_slope_matches_finite_difference(e in edge(), f in 1.0..50.0) {
        let h = 1e-5;
        let fd = (e.cost(f + h).unwrap() - e.cost(f - h).unwrap()) / (2.0 * h);
        prop_assert!((fd - e.latency_slope(f)).abs() <= 1e-5 * (1.0 + fd.abs()));
    }

    #[test]
    fn potential_gradient_is_edge_cost(loads in prop::collection::vec(0.5..30.0f64, 6), i in 0usize..6) {
        let net = five_node_network();
        let h = 1e-5;
        let mut up = loads.clone();
        up[i] += h;
        let mut down = loads.clone();
        down[i] -= h;
        let fd = (beckmann_potential(&net, &EdgeLoad(up)) - beckmann_potential(&net, &EdgeLoad(down))) / (2.0 * h);
        let c = net.edges[i].cost(loads[i]).unwrap();
        prop_assert!((fd - c).abs() <= 1e-5 * (1.0 + c.abs()));
    }

    #[test]
    fn aggregation_is_linear(p in od_strategy(3), q in od_strategy(2), d1 in 0.0..50.0, d2 in 0.0..50.0) {
        let (net, sets) = five_node_sets();
        let (a, b) = (OdPair::new("1", "5"), OdPair::new("3", "5"));
        let agg = |w: f64, v: f64| aggregate_edge_flow(&net, &sets, [(&a, p.as_slice(), w), (&b, q.as_slice(), v)]).unwrap();
        let sum = agg(d1, d2);
        let parts = agg(d1, 0.0).plus(&agg(0.0, d2));
        for (x, y) in sum.as_slice().iter().zip(parts.as_slice()) {
            prop_assert!((x - y).abs() <= 1e-9 * (1.0 + x.abs()));
        }
        // No edge carries more than the total demand.
        prop_assert!(sum.max() <= d1 + d2 + 1e-9);
        prop_assert!(sum.as_slice().iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn logit_is_a_distribution(costs in prop::collection::vec(-100.0..100.0f64, 1..8), alpha in -10.0..10.0, beta in 0.0..20.0, shift in -50.0..50.0) {
        let p = mnl_preferences(&costs, alpha, beta).unwrap();
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        prop_assert!(p.iter().all(|&x| (0.0..=1.0).contains(&x)));
        let shifted: Vec<f64> = costs.iter().map(|c| c + shift).collect();
        let q = mnl_preferences(&shifted, alpha, beta).unwrap();
        for (x, y) in p.iter().zip(&q) {
            prop_assert!((x - y).abs() <= 1e-9);
        }
        // Cheaper paths are never less likely.
        for i in 0..costs.len() {
            for j in 0..costs.len() {
                if costs[i] < costs[j] {
                    prop_assert!(p[i] >= p[j]);
                }
            }
        }
    }

    #[test]
    fn projection_lands_on_simplex(v in prop::collection::vec(-50.0..50.0f64, 1..10), total in 0.1..100.0) {
        let x = project_simplex(&v, total);
        prop_assert!(x.iter().all(|&a| a >= 0.0));
        prop_assert!((x.iter().sum::<f64>() - total).abs() <= 1e-9 * total.max(1.0));
        // Optimality: x - v is constant on the support and no smaller off it.
        let support: Vec<f64> = x.iter().zip(&v).filter(|(a, _)| **a > 0.0).map(|(a, b)| a - b).collect();
        let theta = -support[0];
        for s in &support {
            prop_assert!((s + theta).abs() <= 1e-9 * (1.0 + theta.abs()));
        }
        for (a, b) in x.iter().zip(&v) {
            if *a == 0.0 {
                prop_assert!(*b <= theta + 1e-9 * (1.0 + theta.abs()));
            }
        }
        let again = project_simplex(&x, total);
        for (a, b) in x.iter().zip(&again) {
            prop_assert!((a - b).abs() <= 1e-9 * total.max(1.0));
        }
    }

    #[test]
    fn baseline_plans_spend_the_budget(budget in 0u64..200, k in 1usize..6, seed in any::<u64>()) {
        let pairs = ["1-2", "1-3", "1-4", "2-5", "3-4", "4-5"];
        let spec = AttackSpec {
            target_edge: "3-5".into(),
            gamma: 10.0,
            candidates: pairs[..k].iter().map(|s| OdPair::parse(s).unwrap()).collect(),
            budget: Some(budget),
        };
        let u = uniform_attack(&spec, budget).unwrap();
        prop_assert_eq!(u.total(), budget);
        let counts: Vec<u64> = spec.candidates.iter().map(|c| u.get(c)).collect();
        prop_assert!(counts.iter().max().unwrap() - counts.iter().min().unwrap() <= 1);
        let plans = random_attack(&spec, budget, seed, 3).unwrap();
        prop_assert_eq!(&plans, &random_attack(&spec, budget, seed, 3).unwrap());
        for p in &plans {
            prop_assert_eq!(p.total(), budget);
            prop_assert!(p.fake_demands.keys().all(|od| spec.candidates.contains(od)));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn equilibrium_conserves_demand(seed in 0u64..10_000) {
        let inst = random_instance(seed);
        let zero = EdgeLoad::zeros(inst.network.edge_count());
        let sol = solve_we(&inst.network, &inst.path_sets, &inst.demand, &zero, &SolverConfig::default()).unwrap();
        prop_assert!(sol.trace.converged);
        for (od, d) in inst.demand.iter() {
            let y = &sol.flows.path_flows[od];
            prop_assert!(y.iter().all(|&v| v >= 0.0));
            prop_assert!((y.iter().sum::<f64>() - d).abs() <= 1e-9 * d.max(1.0));
        }
        let total: f64 = inst.demand.total();
        prop_assert!(sol.flows.edge_loads.max() <= total + 1e-9);
    }

    #[test]
    fn scaling_demand_never_lowers_equilibrium_cost(seed in 0u64..10_000, factor in 1.0..3.0) {
        let inst = random_instance(seed);
        let zero = EdgeLoad::zeros(inst.network.edge_count());
        let cfg = SolverConfig { tolerance: 1e-10, ..SolverConfig::default() };
        let base = solve_we(&inst.network, &inst.path_sets, &inst.demand, &zero, &cfg).unwrap();
        let od = OdPair::new("1", "4");
        let bumped: DemandVector = inst
            .demand
            .iter()
            .map(|(o, d)| (o.clone(), if *o == od { d * factor } else { d }))
            .collect();
        let more = solve_we(&inst.network, &inst.path_sets, &bumped, &zero, &cfg).unwrap();
        prop_assert!(more.certificate.nu[&od] >= base.certificate.nu[&od] - 1e-6);
    }
}
