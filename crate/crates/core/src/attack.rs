//! Misinformed-demand attacks on a Wardrop-based recommender.
//!
//! The attacker registers fake trips `d^a` so that the recommender, solving for the aggregate
//! demand `d + d^a`, pushes true users onto a target edge. True users on OD `t` follow the
//! recommendation in proportion `d_t / (d_t + d^a_t)`.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::equilibrium::{solve_we, SolverConfig, WeSolution};
use crate::error::{Error, Result};
use crate::network::{
    aggregate_edge_flow, loads_from_path_flows, path_cost_from_edge_costs, DemandVector, EdgeLoad,
    FlowLoadPair, Network, OdPair, PathFlows, PathSets,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackSpec {
    /// Edge id or `tail-head`.
    pub target_edge: String,
    /// Required true-user flow on the target edge.
    pub gamma: f64,
    /// OD pairs the attacker may fabricate; empty means the default set.
    #[serde(default)]
    pub candidates: Vec<OdPair>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<u64>,
}

/// Integer fake demand per OD pair.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttackPlan {
    pub fake_demands: BTreeMap<OdPair, u64>,
}

impl AttackPlan {
    pub fn total(&self) -> u64 {
        self.fake_demands.values().sum()
    }

    pub fn get(&self, od: &OdPair) -> u64 {
        self.fake_demands.get(od).copied().unwrap_or(0)
    }

    fn from_counts(candidates: &[OdPair], counts: &[u64]) -> Self {
        Self {
            fake_demands: candidates
                .iter()
                .zip(counts)
                .filter(|(_, &c)| c > 0)
                .map(|(od, &c)| (od.clone(), c))
                .collect(),
        }
    }

    pub fn as_demand(&self) -> DemandVector {
        self.fake_demands
            .iter()
            .map(|(od, &c)| (od.clone(), c as f64))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AttackOutcome {
    pub plan: AttackPlan,
    /// Equilibrium the recommender computes for `d + d^a`.
    pub we_under_attack: FlowLoadPair,
    /// True users' share of those path flows.
    pub true_user_flows: PathFlows,
    /// True-user edge loads.
    pub true_user_loads: EdgeLoad,
    pub achieved_target_flow: f64,
    pub total_fake: u64,
    pub feasible: bool,
    /// True users' travel time on the real loads (true users plus background, no fakes).
    pub true_user_travel_time: f64,
    pub converged: bool,
}

/// `d' = d + d^a` over the union of OD pairs.
pub fn aggregate_demand(true_demand: &DemandVector, plan: &AttackPlan) -> DemandVector {
    let mut out = true_demand.clone();
    for (od, &c) in &plan.fake_demands {
        out = out.with(od.clone(), c as f64);
    }
    out
}

fn split_flows(
    we_flows: &PathFlows,
    true_demand: &DemandVector,
    fake: &BTreeMap<OdPair, f64>,
) -> Result<PathFlows> {
    we_flows
        .iter()
        .map(|(od, ys)| {
            let d = true_demand.get(od);
            let a = fake.get(od).copied().unwrap_or(0.0);
            let share = if d == 0.0 {
                0.0
            } else if d + a > 0.0 {
                d / (d + a)
            } else {
                return Err(Error::InvalidArgument(format!(
                    "OD {od} has flow but no demand"
                )));
            };
            Ok((od.clone(), ys.iter().map(|y| y * share).collect()))
        })
        .collect()
}

/// `y^u_ts = y'_ts * d_t / (d_t + d^a_t)`.
pub fn true_user_path_flow(
    we_flows: &PathFlows,
    true_demand: &DemandVector,
    plan: &AttackPlan,
) -> Result<PathFlows> {
    let fake = plan
        .fake_demands
        .iter()
        .map(|(od, &c)| (od.clone(), c as f64))
        .collect();
    split_flows(we_flows, true_demand, &fake)
}

/// Default candidate set: every `(o, d)` with `o` before `d` on some path of a true-user OD
/// that avoids the target edge.
pub fn default_candidates(
    path_sets: &PathSets,
    true_demand: &DemandVector,
    target: usize,
) -> Vec<OdPair> {
    let mut out = BTreeSet::new();
    for od in true_demand.ods() {
        for path in path_sets.get(od).into_iter().flatten() {
            if path.contains_edge(target) {
                continue;
            }
            for i in 0..path.nodes.len() {
                for j in i + 1..path.nodes.len() {
                    out.insert(OdPair::new(path.nodes[i].clone(), path.nodes[j].clone()));
                }
            }
        }
    }
    out.into_iter().collect()
}

/// Shared state for evaluating the recommender's response to fabricated demand.
struct Model<'a> {
    network: &'a Network,
    path_sets: &'a PathSets,
    true_demand: &'a DemandVector,
    background: &'a EdgeLoad,
    config: &'a SolverConfig,
    target: usize,
    candidates: &'a [OdPair],
}

impl Model<'_> {
    fn solve(&self, fake: &BTreeMap<OdPair, f64>) -> Result<(WeSolution, PathFlows)> {
        let mut demand = self.true_demand.clone();
        for (od, &a) in fake {
            if a > 0.0 {
                demand = demand.with(od.clone(), a);
            }
        }
        let we = solve_we(
            self.network,
            self.path_sets,
            &demand,
            self.background,
            self.config,
        )?;
        let split = split_flows(&we.flows.path_flows, self.true_demand, fake)?;
        Ok((we, split))
    }

    fn target_flow_of(&self, split: &PathFlows) -> f64 {
        split
            .iter()
            .map(|(od, ys)| {
                self.path_sets[od]
                    .iter()
                    .zip(ys)
                    .filter(|(p, _)| p.contains_edge(self.target))
                    .map(|(_, y)| y)
                    .sum::<f64>()
            })
            .sum()
    }

    fn fake_map(&self, x: &[f64]) -> BTreeMap<OdPair, f64> {
        self.candidates
            .iter()
            .cloned()
            .zip(x.iter().copied())
            .collect()
    }

    fn target_flow(&self, x: &[f64]) -> Result<f64> {
        let (_, split) = self.solve(&self.fake_map(x))?;
        Ok(self.target_flow_of(&split))
    }

    fn outcome(&self, plan: &AttackPlan, gamma: f64) -> Result<AttackOutcome> {
        let fake = plan
            .fake_demands
            .iter()
            .map(|(od, &c)| (od.clone(), c as f64))
            .collect();
        let (we, split) = self.solve(&fake)?;
        let achieved = self.target_flow_of(&split);
        let d_total = self.true_demand.total();
        assert!(
            achieved <= d_total * (1.0 + 1e-9) + 1e-9,
            "true-user flow {achieved} on one edge exceeds total true demand {d_total}"
        );
        let true_loads = loads_from_path_flows(self.network, self.path_sets, &split)?;
        let costs = self.network.edge_costs(&true_loads.plus(self.background));
        let travel: f64 = split
            .iter()
            .map(|(od, ys)| {
                self.path_sets[od]
                    .iter()
                    .zip(ys)
                    .map(|(p, y)| y * path_cost_from_edge_costs(p, &costs))
                    .sum::<f64>()
            })
            .sum();
        Ok(AttackOutcome {
            plan: plan.clone(),
            total_fake: plan.total(),
            feasible: achieved >= gamma,
            achieved_target_flow: achieved,
            converged: we.trace.converged,
            we_under_attack: we.flows,
            true_user_flows: split,
            true_user_loads: true_loads,
            true_user_travel_time: travel,
        })
    }
}

fn check_coverage(path_sets: &PathSets, ods: impl IntoIterator<Item = OdPair>) -> Result<()> {
    for od in ods {
        if path_sets.get(&od).is_none_or(|p| p.is_empty()) {
            return Err(Error::UnreachableDemand(od));
        }
    }
    Ok(())
}

/// Re-solves the equilibrium under `d + d^a` and reports what true users end up doing.
pub fn evaluate_attack(
    network: &Network,
    path_sets: &PathSets,
    true_demand: &DemandVector,
    background: &EdgeLoad,
    plan: &AttackPlan,
    target_edge: &str,
    gamma: f64,
    config: &SolverConfig,
) -> Result<AttackOutcome> {
    let target = network.resolve_edge(target_edge)?;
    check_coverage(path_sets, plan.fake_demands.keys().cloned())?;
    let model = Model {
        network,
        path_sets,
        true_demand,
        background,
        config,
        target,
        candidates: &[],
    };
    model.outcome(plan, gamma)
}

/// Evaluates several plans in parallel; results keep the input order.
pub fn evaluate_plans(
    network: &Network,
    path_sets: &PathSets,
    true_demand: &DemandVector,
    background: &EdgeLoad,
    plans: &[AttackPlan],
    target_edge: &str,
    gamma: f64,
    config: &SolverConfig,
) -> Result<Vec<AttackOutcome>> {
    plans
        .par_iter()
        .map(|plan| {
            evaluate_attack(
                network,
                path_sets,
                true_demand,
                background,
                plan,
                target_edge,
                gamma,
                config,
            )
        })
        .collect()
}

fn sorted_candidates(spec: &AttackSpec) -> Result<Vec<OdPair>> {
    let set: BTreeSet<OdPair> = spec.candidates.iter().cloned().collect();
    if set.is_empty() {
        return Err(Error::EmptyCandidates);
    }
    Ok(set.into_iter().collect())
}

/// `floor(B / K)` per candidate; the `B mod K` leftover units go one each to the first
/// candidates in sorted order.
pub fn uniform_attack(spec: &AttackSpec, budget: u64) -> Result<AttackPlan> {
    let candidates = sorted_candidates(spec)?;
    let k = candidates.len() as u64;
    let counts: Vec<u64> = (0..k)
        .map(|i| budget / k + u64::from(i < budget % k))
        .collect();
    Ok(AttackPlan::from_counts(&candidates, &counts))
}

/// `trials` independent equal-probability multinomial splits of `budget` over the candidates.
/// Trial `i` draws from ChaCha8 seeded with `seed` on stream `i`.
pub fn random_attack(
    spec: &AttackSpec,
    budget: u64,
    seed: u64,
    trials: usize,
) -> Result<Vec<AttackPlan>> {
    let candidates = sorted_candidates(spec)?;
    if trials == 0 {
        return Err(Error::InvalidArgument("trials must be at least 1".into()));
    }
    Ok((0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(trial as u64);
            let mut counts = vec![0u64; candidates.len()];
            for _ in 0..budget {
                counts[rng.gen_range(0..candidates.len())] += 1;
            }
            AttackPlan::from_counts(&candidates, &counts)
        })
        .collect())
}

/// Stream offset separating restart draws from random-attacker draws.
const RESTART_STREAM: u64 = 1 << 32;

/// Smallest integer plan found that lifts true-user flow on the target edge to `gamma`.
///
/// Each restart runs projected descent on the continuous relaxation with a quadratic penalty
/// on the target shortfall, gradients by forward differences of the re-solved equilibrium.
/// The relaxed point is rounded, repaired upward one unit at a time (largest target gain
/// first) until feasible, then trimmed while feasibility holds. Among restarts the plan with
/// the smallest total wins, then the larger achieved flow, then the earlier restart.
pub fn solve_attack(
    network: &Network,
    path_sets: &PathSets,
    true_demand: &DemandVector,
    background: &EdgeLoad,
    spec: &AttackSpec,
    config: &SolverConfig,
) -> Result<AttackOutcome> {
    config.validate()?;
    let d_total = true_demand.total();
    if !(spec.gamma >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "gamma must be nonnegative, got {}",
            spec.gamma
        )));
    }
    if spec.gamma > d_total {
        return Err(Error::GammaInfeasible {
            gamma: spec.gamma,
            total_demand: d_total,
        });
    }
    let target = network.resolve_edge(&spec.target_edge)?;
    let candidates = sorted_candidates(spec)?;
    check_coverage(
        path_sets,
        true_demand.ods().cloned().chain(candidates.iter().cloned()),
    )?;
    let model = Model {
        network,
        path_sets,
        true_demand,
        background,
        config,
        target,
        candidates: &candidates,
    };

    let baseline = model.outcome(&AttackPlan::default(), spec.gamma)?;
    if baseline.feasible {
        return Ok(baseline);
    }
    let cap = spec
        .budget
        .unwrap_or_else(|| (50.0 * d_total).ceil() as u64);

    let runs: Vec<Result<Option<(Vec<u64>, f64)>>> = (0..config.restarts.max(1))
        .into_par_iter()
        .map(|r| {
            let x0 = if r == 0 {
                vec![0.0; candidates.len()]
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
                rng.set_stream(RESTART_STREAM + r as u64);
                (0..candidates.len())
                    .map(|_| rng.gen_range(0.0..=d_total))
                    .collect()
            };
            let x = relax(&model, x0, spec.gamma)?;
            finish(&model, &x, spec.gamma, cap)
        })
        .collect();

    let mut best: Option<(Vec<u64>, f64)> = None;
    for run in runs {
        if let Some((counts, achieved)) = run? {
            let total: u64 = counts.iter().sum();
            let better = match &best {
                None => true,
                Some((b, a)) => {
                    let bt: u64 = b.iter().sum();
                    total < bt || (total == bt && achieved > *a)
                }
            };
            if better {
                best = Some((counts, achieved));
            }
        }
    }
    match best {
        Some((counts, _)) => {
            model.outcome(&AttackPlan::from_counts(&candidates, &counts), spec.gamma)
        }
        None => Err(Error::AttackInfeasible(format!(
            "no plan with at most {cap} fake trips reaches {} on {}",
            spec.gamma, spec.target_edge
        ))),
    }
}

fn penalized(x: &[f64], t: f64, gamma: f64, rho: f64) -> f64 {
    let short = (gamma - t).max(0.0);
    x.iter().sum::<f64>() + 0.5 * rho * short * short
}

fn relax(model: &Model<'_>, mut x: Vec<f64>, gamma: f64) -> Result<Vec<f64>> {
    let cfg = model.config;
    let h = cfg.fd_step;
    let mut rho = cfg.penalty_initial;
    let mut t = model.target_flow(&x)?;
    for _ in 0..cfg.penalty_stages {
        for _ in 0..cfg.outer_iter {
            let short = (gamma - t).max(0.0);
            let mut grad = vec![1.0; x.len()];
            if short > 0.0 {
                for k in 0..x.len() {
                    let mut xh = x.clone();
                    xh[k] += h;
                    let slope = (model.target_flow(&xh)? - t) / h;
                    grad[k] -= rho * short * slope;
                }
            }
            let f0 = penalized(&x, t, gamma, rho);
            let gmax = grad.iter().fold(0.0_f64, |m, g| m.max(g.abs()));
            if gmax == 0.0 {
                break;
            }
            let mut eta = model.true_demand.total().max(1.0) / (4.0 * gmax);
            let mut accepted = false;
            for _ in 0..12 {
                let cand: Vec<f64> = x
                    .iter()
                    .zip(&grad)
                    .map(|(xi, g)| (xi - eta * g).max(0.0))
                    .collect();
                let tc = model.target_flow(&cand)?;
                if penalized(&cand, tc, gamma, rho) < f0 {
                    x = cand;
                    t = tc;
                    accepted = true;
                    break;
                }
                eta *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        rho *= cfg.penalty_growth;
    }
    Ok(x)
}

/// Rounds, repairs to feasibility and trims. `None` if the cap is reached first.
fn finish(model: &Model<'_>, x: &[f64], gamma: f64, cap: u64) -> Result<Option<(Vec<u64>, f64)>> {
    let mut counts: Vec<u64> = x.iter().map(|v| v.round().max(0.0) as u64).collect();
    let to_f = |c: &[u64]| c.iter().map(|&v| v as f64).collect::<Vec<_>>();
    let mut t = model.target_flow(&to_f(&counts))?;

    while t < gamma {
        if counts.iter().sum::<u64>() >= cap {
            return Ok(None);
        }
        let mut best: Option<(usize, f64)> = None;
        for k in 0..counts.len() {
            let mut c = counts.clone();
            c[k] += 1;
            let tk = model.target_flow(&to_f(&c))?;
            if best.is_none_or(|(_, bt)| tk > bt) {
                best = Some((k, tk));
            }
        }
        let (k, tk) = best.expect("candidates nonempty");
        counts[k] += 1;
        t = tk;
    }

    loop {
        let mut best: Option<(usize, f64)> = None;
        for k in 0..counts.len() {
            if counts[k] == 0 {
                continue;
            }
            let mut c = counts.clone();
            c[k] -= 1;
            let tk = model.target_flow(&to_f(&c))?;
            if tk >= gamma && best.is_none_or(|(_, bt)| tk > bt) {
                best = Some((k, tk));
            }
        }
        match best {
            Some((k, tk)) => {
                counts[k] -= 1;
                t = tk;
            }
            None => break,
        }
    }
    Ok(Some((counts, t)))
}

/// Latency fields to substitute on one edge.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeOverride {
    /// Edge id or `tail-head`.
    pub edge: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zeta: Option<f64>,
}

/// Copy of `network` with the given latency parameters replaced.
pub fn cost_perturbation_attack(network: &Network, overrides: &[EdgeOverride]) -> Result<Network> {
    let mut out = network.clone();
    for o in overrides {
        let i = network.resolve_edge(&o.edge)?;
        let e = &mut out.edges[i];
        e.a = o.a.unwrap_or(e.a);
        e.b = o.b.unwrap_or(e.b);
        e.k = o.k.unwrap_or(e.k);
        e.zeta = o.zeta.unwrap_or(e.zeta);
    }
    let violations = crate::network::validate_network(&out);
    if !violations.is_empty() {
        return Err(Error::InvalidNetwork(violations));
    }
    Ok(out)
}

/// Slack allowed in the sensitivity inequalities.
pub const SENSITIVITY_SLACK: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DemandSensitivityReport {
    /// `(nu' - nu)^T (d' - d)`.
    pub cost_demand_product: f64,
    /// `mu'^T y + mu^T y'`.
    pub slack_product: f64,
    pub passes: bool,
}

fn union_demand(d: &DemandVector, other: &DemandVector) -> DemandVector {
    let mut out = d.clone();
    for od in other.ods() {
        out.0.entry(od.clone()).or_insert(0.0);
    }
    out
}

fn cross(mu: &BTreeMap<OdPair, Vec<f64>>, y: &PathFlows) -> f64 {
    y.iter()
        .filter_map(|(od, ys)| {
            mu.get(od)
                .map(|m| m.iter().zip(ys).map(|(a, b)| a * b).sum::<f64>())
        })
        .sum()
}

/// Checks `(nu' - nu)^T (d' - d) >= mu'^T y + mu^T y' >= 0` from two certified equilibria.
pub fn demand_sensitivity_check(
    network: &Network,
    path_sets: &PathSets,
    d: &DemandVector,
    d_prime: &DemandVector,
    config: &SolverConfig,
) -> Result<DemandSensitivityReport> {
    let d0 = union_demand(d, d_prime);
    let d1 = union_demand(d_prime, d);
    let zero = EdgeLoad::zeros(network.edge_count());
    let a = solve_we(network, path_sets, &d0, &zero, config)?;
    let b = solve_we(network, path_sets, &d1, &zero, config)?;
    let lhs: f64 = d0
        .iter()
        .map(|(od, v)| {
            let dn = b.certificate.nu.get(od).copied().unwrap_or(0.0)
                - a.certificate.nu.get(od).copied().unwrap_or(0.0);
            dn * (d1.get(od) - v)
        })
        .sum();
    let middle = cross(&b.certificate.mu, &a.flows.path_flows)
        + cross(&a.certificate.mu, &b.flows.path_flows);
    Ok(DemandSensitivityReport {
        cost_demand_product: lhs,
        slack_product: middle,
        passes: lhs >= middle - SENSITIVITY_SLACK && middle >= -SENSITIVITY_SLACK,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CostSensitivityReport {
    /// `(c'_e(f_e) - c_e(f_e)) (f'_e - f_e)` per edge.
    pub at_original: Vec<f64>,
    /// `(c'_e(f'_e) - c_e(f'_e)) (f'_e - f_e)` per edge.
    pub at_perturbed: Vec<f64>,
    pub passes: bool,
}

fn same_topology(a: &Network, b: &Network) -> Result<()> {
    if a.nodes != b.nodes {
        return Err(Error::TopologyMismatch("node lists differ".into()));
    }
    if a.edges.len() != b.edges.len() {
        return Err(Error::TopologyMismatch(format!(
            "{} vs {} edges",
            a.edges.len(),
            b.edges.len()
        )));
    }
    for (x, y) in a.edges.iter().zip(&b.edges) {
        if x.id != y.id || x.tail != y.tail || x.head != y.head {
            return Err(Error::TopologyMismatch(format!(
                "edge `{}` differs from `{}`",
                x.id, y.id
            )));
        }
    }
    Ok(())
}

/// Checks the per-edge sign conditions between equilibria under two latency sets.
pub fn cost_sensitivity_check(
    network: &Network,
    network_prime: &Network,
    path_sets: &PathSets,
    d: &DemandVector,
    config: &SolverConfig,
) -> Result<CostSensitivityReport> {
    same_topology(network, network_prime)?;
    let zero = EdgeLoad::zeros(network.edge_count());
    let f = solve_we(network, path_sets, d, &zero, config)?
        .flows
        .total_load();
    let fp = solve_we(network_prime, path_sets, d, &zero, config)?
        .flows
        .total_load();
    let mut at_original = Vec::with_capacity(network.edge_count());
    let mut at_perturbed = Vec::with_capacity(network.edge_count());
    for (i, (e, ep)) in network.edges.iter().zip(&network_prime.edges).enumerate() {
        let df = fp.get(i) - f.get(i);
        at_original.push((ep.latency(f.get(i)) - e.latency(f.get(i))) * df);
        at_perturbed.push((ep.latency(fp.get(i)) - e.latency(fp.get(i))) * df);
    }
    let passes = at_original
        .iter()
        .chain(&at_perturbed)
        .all(|&v| v <= SENSITIVITY_SLACK);
    Ok(CostSensitivityReport {
        at_original,
        at_perturbed,
        passes,
    })
}

/// Expected-load helper for fake demand shares, used by reports.
pub fn fake_user_loads(
    network: &Network,
    path_sets: &PathSets,
    outcome: &AttackOutcome,
) -> Result<EdgeLoad> {
    let fake: Vec<(OdPair, Vec<f64>)> = outcome
        .we_under_attack
        .path_flows
        .iter()
        .map(|(od, ys)| {
            let tu = outcome.true_user_flows.get(od);
            let rest = ys
                .iter()
                .enumerate()
                .map(|(i, y)| y - tu.map_or(0.0, |t| t[i]))
                .collect();
            (od.clone(), rest)
        })
        .collect();
    aggregate_edge_flow(
        network,
        path_sets,
        fake.iter().map(|(od, ys)| (od, ys.as_slice(), 1.0)),
    )
}
