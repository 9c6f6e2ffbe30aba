use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::network::{
    loads_from_path_flows, path_cost_from_edge_costs, DemandVector, EdgeLoad, FlowLoadPair,
    Network, OdPair, PathFlows, PathSets,
};

use super::kernel::{self, Block};
use super::{ConvergenceTrace, KktCertificate, SolverConfig};

/// Flows below this fraction of the OD demand count as unused.
const USED_FRACTION: f64 = 1e-9;

fn is_used(y: f64, demand: f64) -> bool {
    y > USED_FRACTION * demand.max(1.0)
}

/// `sum_e integral_0^{f_e} c_e(z) dz` in closed form.
pub fn beckmann_potential(network: &Network, load: &EdgeLoad) -> f64 {
    network
        .edges
        .iter()
        .zip(load.as_slice())
        .map(|(e, &f)| e.latency_integral(f))
        .sum()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WeSolution {
    pub flows: FlowLoadPair,
    pub certificate: KktCertificate,
    pub trace: ConvergenceTrace,
}

/// Wardrop equilibrium for `demand` on top of a fixed `background` load.
///
/// Never fails on slow convergence: the returned trace carries the flag and final gap.
pub fn solve_we(
    network: &Network,
    path_sets: &PathSets,
    demand: &DemandVector,
    background: &EdgeLoad,
    config: &SolverConfig,
) -> Result<WeSolution> {
    config.validate()?;
    if background.len() != network.edge_count() {
        return Err(Error::DimensionMismatch(format!(
            "background covers {} edges, network has {}",
            background.len(),
            network.edge_count()
        )));
    }
    let mut ods: Vec<(&OdPair, f64)> = Vec::new();
    for (od, d) in demand.iter() {
        if !(d >= 0.0) || !d.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "demand {d} on {od} is not a nonnegative number"
            )));
        }
        match path_sets.get(od) {
            Some(paths) if !paths.is_empty() => ods.push((od, d)),
            _ if d > 0.0 => return Err(Error::UnreachableDemand(od.clone())),
            _ => {}
        }
    }
    let blocks: Vec<Block<'_>> = ods
        .iter()
        .map(|(od, d)| Block {
            paths: &path_sets[*od],
            demand: *d,
        })
        .collect();
    let y0: Vec<Vec<f64>> = blocks
        .iter()
        .map(|b| vec![b.demand / b.paths.len() as f64; b.paths.len()])
        .collect();

    let mut records = Vec::new();
    let result = kernel::minimize(
        network,
        &blocks,
        background.as_slice(),
        y0,
        &config.kernel(config.tolerance),
        Some(&mut records),
    );

    let path_flows: PathFlows = ods
        .iter()
        .map(|(od, _)| (*od).clone())
        .zip(result.y)
        .collect();
    let edge_loads = loads_from_path_flows(network, path_sets, &path_flows)?;
    let flows = FlowLoadPair {
        path_flows,
        edge_loads,
        background: background.clone(),
    };
    let certificate = certify(network, path_sets, &flows);
    Ok(WeSolution {
        flows,
        certificate,
        trace: ConvergenceTrace {
            records,
            converged: result.converged,
            iterations: result.iterations,
            final_gap: result.gap,
        },
    })
}

/// Multipliers at `flows`: `lambda_e = c_e(f_e + f^o_e)`, `nu_t` the cheapest used path
/// (cheapest path overall when nothing is used), `mu = C - nu`.
pub fn certify(network: &Network, path_sets: &PathSets, flows: &FlowLoadPair) -> KktCertificate {
    let lambda = network.edge_costs(&flows.total_load());
    let mut nu = BTreeMap::new();
    let mut mu = BTreeMap::new();
    for (od, ys) in &flows.path_flows {
        let Some(paths) = path_sets.get(od) else {
            continue;
        };
        let d: f64 = ys.iter().sum();
        let costs: Vec<f64> = paths
            .iter()
            .map(|p| path_cost_from_edge_costs(p, &lambda))
            .collect();
        let used_min = costs
            .iter()
            .zip(ys)
            .filter(|(_, &y)| is_used(y, d))
            .map(|(&c, _)| c)
            .fold(f64::INFINITY, f64::min);
        let nu_t = if used_min.is_finite() {
            used_min
        } else {
            costs.iter().copied().fold(f64::INFINITY, f64::min)
        };
        mu.insert(od.clone(), costs.iter().map(|c| c - nu_t).collect());
        nu.insert(od.clone(), nu_t);
    }
    KktCertificate { nu, lambda, mu }
}

/// Largest absolute violation of each optimality condition.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct KktReport {
    /// `|c_e(f_e) - lambda_e|`.
    pub edge: f64,
    /// `|-nu_t + sum_{e in s} lambda_e - mu_ts|`.
    pub path: f64,
    /// `|mu_ts * y_ts|`.
    pub complementarity: f64,
    /// `max(0, -mu_ts)`.
    pub dual_feasibility: f64,
    /// `|sum_s y_ts - d_t|`.
    pub conservation: f64,
    /// Used paths cost `nu_t`, unused paths cost at least `nu_t`.
    pub wardrop: f64,
}

impl KktReport {
    /// The three stationarity/complementarity families.
    pub fn max_core(&self) -> f64 {
        self.edge.max(self.path).max(self.complementarity)
    }

    pub fn max_all(&self) -> f64 {
        self.max_core()
            .max(self.dual_feasibility)
            .max(self.conservation)
            .max(self.wardrop)
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.max_all() <= tol
    }
}

pub fn kkt_residuals(
    network: &Network,
    path_sets: &PathSets,
    flows: &FlowLoadPair,
    certificate: &KktCertificate,
    demand: &DemandVector,
) -> Result<KktReport> {
    if certificate.lambda.len() != network.edge_count() {
        return Err(Error::DimensionMismatch(format!(
            "certificate prices {} edges, network has {}",
            certificate.lambda.len(),
            network.edge_count()
        )));
    }
    let edge_costs = network.edge_costs(&flows.total_load());
    let mut report = KktReport {
        edge: edge_costs
            .iter()
            .zip(&certificate.lambda)
            .map(|(c, l)| (c - l).abs())
            .fold(0.0, f64::max),
        ..KktReport::default()
    };
    for (od, d) in demand.iter() {
        let supplied: f64 = flows.path_flows.get(od).map_or(0.0, |y| y.iter().sum());
        report.conservation = report.conservation.max((supplied - d).abs());
    }
    for (od, ys) in &flows.path_flows {
        if demand.get(od) == 0.0 && !demand.0.contains_key(od) {
            report.conservation = report.conservation.max(ys.iter().sum::<f64>().abs());
        }
        let paths = path_sets
            .get(od)
            .ok_or_else(|| Error::DimensionMismatch(format!("no path set for OD {od}")))?;
        let nu = *certificate
            .nu
            .get(od)
            .ok_or_else(|| Error::DimensionMismatch(format!("certificate lacks nu for OD {od}")))?;
        let mu = certificate
            .mu
            .get(od)
            .ok_or_else(|| Error::DimensionMismatch(format!("certificate lacks mu for OD {od}")))?;
        if mu.len() != paths.len() || ys.len() != paths.len() {
            return Err(Error::DimensionMismatch(format!(
                "OD {od} vectors do not match its paths"
            )));
        }
        let d: f64 = ys.iter().sum();
        for ((p, &y), &m) in paths.iter().zip(ys).zip(mu) {
            let priced = path_cost_from_edge_costs(p, &certificate.lambda);
            report.path = report.path.max((-nu + priced - m).abs());
            report.complementarity = report.complementarity.max((m * y).abs());
            report.dual_feasibility = report.dual_feasibility.max(-m);
            let cost = path_cost_from_edge_costs(p, &edge_costs);
            let w = if is_used(y, d) {
                (cost - nu).abs()
            } else {
                (nu - cost).max(0.0)
            };
            report.wardrop = report.wardrop.max(w);
        }
    }
    Ok(report)
}

/// Per-OD recommendation `p_s = y_s / d_t`; ODs with zero demand are skipped.
pub fn recommendation_from_we(
    flows: &FlowLoadPair,
    demand: &DemandVector,
) -> BTreeMap<OdPair, Vec<f64>> {
    flows
        .path_flows
        .iter()
        .filter_map(|(od, ys)| {
            let d = demand.get(od);
            (d > 0.0).then(|| (od.clone(), ys.iter().map(|y| y / d).collect()))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{enumerate_path_sets, total_travel_time, Edge};
    use crate::scenario::{braess_network, five_node_network};

    fn tight() -> SolverConfig {
        SolverConfig {
            tolerance: 1e-9,
            ..SolverConfig::default()
        }
    }

    fn braess_we(net: &Network) -> (PathSets, WeSolution, OdPair) {
        let od = OdPair::new("A", "B");
        let sets = enumerate_path_sets(net, [&od], 5).unwrap();
        let demand = DemandVector::new().with(od.clone(), 30.0);
        let sol = solve_we(
            net,
            &sets,
            &demand,
            &EdgeLoad::zeros(net.edge_count()),
            &tight(),
        )
        .unwrap();
        (sets, sol, od)
    }

    fn flow_on(sets: &PathSets, sol: &WeSolution, od: &OdPair, label: &str) -> f64 {
        let i = sets[od].iter().position(|p| p.label() == label).unwrap();
        sol.flows.path_flows[od][i]
    }

    #[test]
    fn potential_examples() {
        let net = Network::new(
            vec!["u".into(), "v".into()],
            vec![Edge::new("u-v", "u", "v", 2.0, 0.8, 10.0, 2.0)],
        );
        assert_eq!(beckmann_potential(&net, &EdgeLoad::zeros(1)), 0.0);
        let want = 20.0 + 0.8 * 1000.0 / 300.0;
        assert!((beckmann_potential(&net, &EdgeLoad(vec![10.0])) - want).abs() < 1e-12);

        // Composite Simpson quadrature of the latency as an independent oracle.
        let e = &net.edges[0];
        let n = 1000;
        let h = 10.0 / n as f64;
        let mut s = e.latency(0.0) + e.latency(10.0);
        for i in 1..n {
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * e.latency(i as f64 * h);
        }
        assert!((s * h / 3.0 - want).abs() < 1e-9);
    }

    #[test]
    fn potential_is_additive_over_edges() {
        let net = five_node_network();
        let load = EdgeLoad(
            (0..net.edge_count())
                .map(|i| 1.5 * i as f64 + 0.3)
                .collect(),
        );
        let total = beckmann_potential(&net, &load);
        let parts: f64 = (0..net.edge_count())
            .map(|i| {
                let mut single = EdgeLoad::zeros(net.edge_count());
                single.0[i] = load.get(i);
                beckmann_potential(&net, &single)
            })
            .sum();
        assert!((total - parts).abs() < 1e-12 * total);
    }

    #[test]
    fn braess_thirty_users_split_evenly() {
        let net = braess_network(1e-6);
        let (sets, sol, od) = braess_we(&net);
        assert!(sol.trace.converged);
        for label in ["A-C-B", "A-C-D-B", "A-D-B"] {
            assert!(
                (flow_on(&sets, &sol, &od, label) - 10.0).abs() < 1e-3,
                "{label}"
            );
        }
        assert!((sol.certificate.nu[&od] - 4.0).abs() < 1e-5);
        let tt = total_travel_time(&net, &sets, &sol.flows).unwrap();
        assert!((tt - 120.0).abs() < 1e-3, "{tt}");
    }

    #[test]
    fn braess_without_shortcut_costs_105() {
        let mut net = braess_network(1e-6);
        let cd = net.edge_index("C-D").unwrap();
        net.edges[cd].a = 1e6;
        let (sets, sol, od) = braess_we(&net);
        assert!((flow_on(&sets, &sol, &od, "A-C-B") - 15.0).abs() < 1e-6);
        assert!((flow_on(&sets, &sol, &od, "A-D-B") - 15.0).abs() < 1e-6);
        assert!(flow_on(&sets, &sol, &od, "A-C-D-B").abs() < 1e-6);
        assert!((sol.certificate.nu[&od] - 3.5).abs() < 1e-6);
        let tt = total_travel_time(&net, &sets, &sol.flows).unwrap();
        assert!((tt - 105.0).abs() < 1e-4);
        let rec = recommendation_from_we(&sol.flows, &DemandVector::new().with(od.clone(), 30.0));
        let p = &rec[&od];
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_path_takes_all_demand() {
        let net = Network::new(
            vec!["a".into(), "b".into()],
            vec![Edge::new("a-b", "a", "b", 1.0, 2.0, 3.0, 2.0)],
        );
        let od = OdPair::new("a", "b");
        let sets = enumerate_path_sets(&net, [&od], 5).unwrap();
        let sol = solve_we(
            &net,
            &sets,
            &DemandVector::new().with(od.clone(), 7.0),
            &EdgeLoad::zeros(1),
            &tight(),
        )
        .unwrap();
        assert_eq!(sol.flows.path_flows[&od], vec![7.0]);
        assert_eq!(sol.flows.edge_loads.0, vec![7.0]);
    }

    #[test]
    fn recommendation_examples() {
        let od = OdPair::new("A", "B");
        let pair = |y: Vec<f64>| FlowLoadPair {
            path_flows: [(od.clone(), y)].into_iter().collect(),
            edge_loads: EdgeLoad::default(),
            background: EdgeLoad::default(),
        };
        let d30 = DemandVector::new().with(od.clone(), 30.0);
        let third = recommendation_from_we(&pair(vec![10.0; 3]), &d30);
        assert!(third[&od].iter().all(|p| (p - 1.0 / 3.0).abs() < 1e-15));
        let half = recommendation_from_we(&pair(vec![15.0, 0.0, 15.0]), &d30);
        assert_eq!(half[&od], vec![0.5, 0.0, 0.5]);
        let unit = recommendation_from_we(
            &pair(vec![0.25, 0.75]),
            &DemandVector::new().with(od.clone(), 1.0),
        );
        assert_eq!(unit[&od], vec![0.25, 0.75]);
        let none = recommendation_from_we(
            &pair(vec![0.0, 0.0]),
            &DemandVector::new().with(od.clone(), 0.0),
        );
        assert!(none.is_empty());
    }

    #[test]
    fn unreachable_demand_is_an_error() {
        let net = five_node_network();
        let sets = PathSets::new();
        let demand = DemandVector::new().with(OdPair::new("1", "5"), 3.0);
        assert!(matches!(
            solve_we(
                &net,
                &sets,
                &demand,
                &EdgeLoad::zeros(net.edge_count()),
                &tight()
            ),
            Err(Error::UnreachableDemand(_))
        ));
    }

    #[test]
    fn converged_output_certifies() {
        let net = five_node_network();
        let ods = [OdPair::new("1", "5"), OdPair::new("3", "5")];
        let sets = enumerate_path_sets(&net, &ods, 5).unwrap();
        let demand: DemandVector = ods.iter().map(|od| (od.clone(), 10.0)).collect();
        let sol = solve_we(
            &net,
            &sets,
            &demand,
            &EdgeLoad::zeros(net.edge_count()),
            &SolverConfig::default(),
        )
        .unwrap();
        let report = kkt_residuals(&net, &sets, &sol.flows, &sol.certificate, &demand).unwrap();
        assert!(report.passes(1e-5), "{report:?}");
    }

    #[test]
    fn moving_flow_breaks_complementarity() {
        let net = braess_network(1e-6);
        let mut cd = net.clone();
        let i = cd.edge_index("C-D").unwrap();
        cd.edges[i].a = 1e6;
        let (sets, sol, od) = braess_we(&cd);
        let demand = DemandVector::new().with(od.clone(), 30.0);
        let mut moved = sol.flows.clone();
        let from = sets[&od].iter().position(|p| p.label() == "A-C-B").unwrap();
        let to = sets[&od]
            .iter()
            .position(|p| p.label() == "A-C-D-B")
            .unwrap();
        moved.path_flows.get_mut(&od).unwrap()[from] -= 1.0;
        moved.path_flows.get_mut(&od).unwrap()[to] += 1.0;
        moved.edge_loads = loads_from_path_flows(&cd, &sets, &moved.path_flows).unwrap();
        let report = kkt_residuals(&cd, &sets, &moved, &sol.certificate, &demand).unwrap();
        assert!(report.complementarity > 1.0, "{report:?}");
    }

    #[test]
    fn zero_demand_is_vacuous() {
        let net = five_node_network();
        let sets = PathSets::new();
        let demand = DemandVector::new();
        let sol = solve_we(
            &net,
            &sets,
            &demand,
            &EdgeLoad::zeros(net.edge_count()),
            &tight(),
        )
        .unwrap();
        let report = kkt_residuals(&net, &sets, &sol.flows, &sol.certificate, &demand).unwrap();
        assert_eq!(report.max_all(), 0.0);
        assert_eq!(total_travel_time(&net, &sets, &sol.flows).unwrap(), 0.0);
    }

    #[test]
    fn potential_descends_along_iterates() {
        let net = five_node_network();
        let ods = [OdPair::new("1", "5"), OdPair::new("3", "5")];
        let sets = enumerate_path_sets(&net, &ods, 5).unwrap();
        let demand: DemandVector = ods.iter().map(|od| (od.clone(), 10.0)).collect();
        let sol = solve_we(
            &net,
            &sets,
            &demand,
            &EdgeLoad::zeros(net.edge_count()),
            &tight(),
        )
        .unwrap();
        assert!(!sol.trace.records.is_empty());
        for w in sol.trace.records.windows(2) {
            assert!(
                w[1].potential <= w[0].potential + 1e-12 * w[0].potential.abs().max(1.0),
                "{:?}",
                w
            );
        }
    }
}
