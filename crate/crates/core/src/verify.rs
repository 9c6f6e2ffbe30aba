//! Property suite: conservation, logit normalization, equilibrium certificates, sensitivity
//! inequalities and potential descent, checked on the built-in scenarios and on seeded random
//! four-node instances.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::attack::{
    cost_perturbation_attack, cost_sensitivity_check, demand_sensitivity_check, uniform_attack,
    AttackSpec, EdgeOverride,
};
use crate::behavior::{background_flow, mnl_preferences, preference_profile};
use crate::equilibrium::{
    deviation_gap, kkt_residuals, od_equilibrium_costs, recommendation_from_we,
    solve_rs_with_background, solve_we, ConvergenceTrace, MixedStrategyProfile, SolverConfig,
};
use crate::error::Result;
use crate::network::{
    enumerate_path_sets, DemandVector, Edge, EdgeLoad, Network, OdPair, PathSets,
};
use crate::scenario::{builtin_scenario, AttackProfile, Scenario, BUILTIN_NAMES};

/// Number of random instances per sensitivity sweep.
pub const SWEEP_INSTANCES: usize = 50;

/// Solver tolerance used inside the sensitivity sweeps.
pub const SWEEP_TOLERANCE: f64 = 1e-10;

/// Relative round-off allowed between consecutive potential values.
pub const DESCENT_SLACK: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl CheckResult {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Self {
            name: name.to_string(),
            passed,
            detail,
        }
    }
}

/// A random instance: chain `1 -> 2 -> 3 -> 4` plus random extra edges, with demand from 1
/// to 4 and possibly a second OD pair.
#[derive(Clone, Debug)]
pub struct RandomInstance {
    pub network: Network,
    pub path_sets: PathSets,
    pub demand: DemandVector,
    pub rng: ChaCha8Rng,
}

pub fn random_instance(seed: u64) -> RandomInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ids: Vec<String> = (1..=4).map(|i| i.to_string()).collect();
    let mut edges = Vec::new();
    let edge = |rng: &mut ChaCha8Rng, t: &str, h: &str| {
        Edge::new(
            format!("{t}-{h}"),
            t,
            h,
            rng.gen_range(0.5..3.0),
            rng.gen_range(0.2..2.0),
            rng.gen_range(5.0..15.0),
            f64::from(rng.gen_range(1..=4u8)),
        )
    };
    for w in ids.windows(2) {
        edges.push(edge(&mut rng, &w[0], &w[1]));
    }
    for t in &ids {
        for h in &ids {
            let chain = t.parse::<u8>().unwrap() + 1 == h.parse::<u8>().unwrap();
            if t != h && !chain && rng.gen_bool(0.4) {
                edges.push(edge(&mut rng, t, h));
            }
        }
    }
    let network = Network::new(ids, edges);
    let mut demand = DemandVector::new().with(OdPair::new("1", "4"), rng.gen_range(5.0..20.0));
    let extra = [OdPair::new("1", "3"), OdPair::new("2", "4")];
    let pick = extra[rng.gen_range(0..extra.len())].clone();
    if rng.gen_bool(0.5) {
        demand = demand.with(pick, rng.gen_range(2.0..10.0));
    }
    let path_sets =
        enumerate_path_sets(&network, demand.ods(), 5).expect("chain connects every pair");
    RandomInstance {
        network,
        path_sets,
        demand,
        rng,
    }
}

fn sweep_config() -> SolverConfig {
    SolverConfig {
        tolerance: SWEEP_TOLERANCE,
        ..SolverConfig::default()
    }
}

fn potential_descends(trace: &ConvergenceTrace) -> bool {
    trace
        .records
        .windows(2)
        .all(|w| w[1].potential <= w[0].potential + DESCENT_SLACK * w[0].potential.abs().max(1.0))
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepOutcome {
    pub instances: usize,
    pub failures: Vec<u64>,
    /// Every solver trace in the sweep was nonincreasing in the potential.
    pub descent_ok: bool,
}

/// Demand sensitivity on `SWEEP_INSTANCES` random instances: each demand is rescaled by a
/// random factor in [0.5, 2] and, sometimes, an OD pair is added.
pub fn demand_sweep(seed: u64) -> Result<SweepOutcome> {
    let results: Vec<(u64, bool, bool)> = (0..SWEEP_INSTANCES as u64)
        .into_par_iter()
        .map(|i| {
            let mut inst = random_instance(seed.wrapping_mul(1_000_003).wrapping_add(i));
            let mut bumped = DemandVector::new();
            for (od, d) in inst.demand.iter() {
                bumped = bumped.with(od.clone(), d * inst.rng.gen_range(0.5..2.0));
            }
            let extra = OdPair::new("2", "4");
            if !bumped.0.contains_key(&extra) && inst.rng.gen_bool(0.3) {
                bumped = bumped.with(extra, inst.rng.gen_range(1.0..5.0));
            }
            let ods: Vec<OdPair> = inst.demand.ods().chain(bumped.ods()).cloned().collect();
            let sets = enumerate_path_sets(&inst.network, &ods, 5)?;
            let cfg = sweep_config();
            let report =
                demand_sensitivity_check(&inst.network, &sets, &inst.demand, &bumped, &cfg)?;
            let zero = EdgeLoad::zeros(inst.network.edge_count());
            let a = solve_we(&inst.network, &sets, &inst.demand, &zero, &cfg)?;
            let b = solve_we(&inst.network, &sets, &bumped, &zero, &cfg)?;
            Ok((
                i,
                report.passes,
                potential_descends(&a.trace) && potential_descends(&b.trace),
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepOutcome {
        instances: results.len(),
        failures: results.iter().filter(|r| !r.1).map(|r| r.0).collect(),
        descent_ok: results.iter().all(|r| r.2),
    })
}

/// Cost sensitivity on `SWEEP_INSTANCES` random instances, one random edge made dearer.
pub fn cost_sweep(seed: u64) -> Result<SweepOutcome> {
    let results: Vec<(u64, bool, bool)> = (0..SWEEP_INSTANCES as u64)
        .into_par_iter()
        .map(|i| {
            let mut inst =
                random_instance(seed.wrapping_mul(1_000_033).wrapping_add(i).wrapping_add(7));
            let e = inst.rng.gen_range(0..inst.network.edge_count());
            let old = inst.network.edges[e].clone();
            let bumped = cost_perturbation_attack(
                &inst.network,
                &[EdgeOverride {
                    edge: old.id.clone(),
                    a: Some(old.a * inst.rng.gen_range(1.5..5.0)),
                    b: Some(old.b * inst.rng.gen_range(1.0..5.0)),
                    ..EdgeOverride::default()
                }],
            )?;
            let cfg = sweep_config();
            let report = cost_sensitivity_check(
                &inst.network,
                &bumped,
                &inst.path_sets,
                &inst.demand,
                &cfg,
            )?;
            let zero = EdgeLoad::zeros(inst.network.edge_count());
            let a = solve_we(&inst.network, &inst.path_sets, &inst.demand, &zero, &cfg)?;
            let b = solve_we(&bumped, &inst.path_sets, &inst.demand, &zero, &cfg)?;
            Ok((
                i,
                report.passes,
                potential_descends(&a.trace) && potential_descends(&b.trace),
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepOutcome {
        instances: results.len(),
        failures: results.iter().filter(|r| !r.1).map(|r| r.0).collect(),
        descent_ok: results.iter().all(|r| r.2),
    })
}

/// Largest normalization error and largest shift-invariance error of the logit model over
/// seeded random cost vectors.
pub fn mnl_properties(seed: u64, samples: usize) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut norm, mut shift) = (0.0_f64, 0.0_f64);
    for _ in 0..samples {
        let n = rng.gen_range(1..8);
        let costs: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..50.0)).collect();
        let alpha = rng.gen_range(-5.0..5.0);
        let beta = rng.gen_range(0.0..5.0);
        let delta = rng.gen_range(-20.0..20.0);
        let p = mnl_preferences(&costs, alpha, beta).expect("nonempty finite costs");
        let shifted: Vec<f64> = costs.iter().map(|c| c + delta).collect();
        let q = mnl_preferences(&shifted, alpha, beta).expect("nonempty finite costs");
        norm = norm.max((p.iter().sum::<f64>() - 1.0).abs());
        shift = shift.max(
            p.iter()
                .zip(&q)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max),
        );
    }
    (norm, shift)
}

/// One game a scenario's recommender solves.
#[derive(Clone, Debug)]
pub struct Game {
    pub label: String,
    pub network: Network,
    pub path_sets: PathSets,
    /// Whole agents per OD pair (true and fabricated).
    pub agents: DemandVector,
    pub background: EdgeLoad,
}

/// The unattacked game of a scenario, plus the attacked game when it does not require an
/// attacker search (uniform fabrication, cost and driver overrides).
pub fn scenario_games(scenario: &Scenario) -> Result<Vec<Game>> {
    let net = &scenario.network;
    let users = scenario.user_demand();
    let mut ods: Vec<OdPair> = users.ods().cloned().collect();
    ods.extend(scenario.drivers.iter().map(|c| c.od.clone()));
    if let Some(a) = &scenario.attack {
        ods.extend(a.candidates.iter().cloned());
    }
    let sets = enumerate_path_sets(net, &ods, scenario.path_k)?;
    let prefs = preference_profile(net, &sets, &scenario.drivers)?;
    let background = background_flow(net, &sets, &scenario.drivers, &prefs)?;
    let mut games = vec![Game {
        label: format!("{}:baseline", scenario.name),
        network: net.clone(),
        path_sets: sets.clone(),
        agents: users.clone(),
        background: background.clone(),
    }];
    if let Some(a) = &scenario.attack {
        match a.profile {
            AttackProfile::Uniform if !a.candidates.is_empty() => {
                let spec = AttackSpec {
                    target_edge: a.target_edge.clone().unwrap_or_default(),
                    gamma: a.gamma,
                    candidates: a.candidates.clone(),
                    budget: a.budget,
                };
                let plan = uniform_attack(&spec, a.budget.unwrap_or(0))?;
                let mut agents = users.clone();
                for (od, d) in plan.as_demand().iter() {
                    agents = agents.with(od.clone(), d);
                }
                games.push(Game {
                    label: format!("{}:uniform", scenario.name),
                    network: net.clone(),
                    path_sets: sets.clone(),
                    agents,
                    background: background.clone(),
                });
            }
            AttackProfile::Cost => games.push(Game {
                label: format!("{}:cost", scenario.name),
                network: cost_perturbation_attack(net, &a.edge_overrides)?,
                path_sets: sets.clone(),
                agents: users.clone(),
                background: background.clone(),
            }),
            AttackProfile::DriverOverride => {
                let mut drivers = scenario.drivers.clone();
                for o in &a.driver_overrides {
                    let class = &mut drivers[o.class];
                    class.preference_override = Some(
                        sets[&class.od]
                            .iter()
                            .map(|p| o.preferences.get(&p.label()).copied().unwrap_or(0.0))
                            .collect(),
                    );
                }
                let prefs = preference_profile(net, &sets, &drivers)?;
                games.push(Game {
                    label: format!("{}:driver-override", scenario.name),
                    network: net.clone(),
                    path_sets: sets.clone(),
                    agents: users.clone(),
                    background: background_flow(net, &sets, &drivers, &prefs)?,
                });
            }
            _ => {}
        }
    }
    Ok(games)
}

#[derive(Clone, Debug, Serialize)]
pub struct CrossValidation {
    pub game: String,
    /// Largest deviation gap of the flow-derived recommendation, one agent per unit demand.
    pub we_max_gap: f64,
    /// Largest relative difference between the two solvers' OD costs.
    pub max_relative_cost_diff: f64,
    pub we_converged: bool,
    pub rs_converged: bool,
    /// Largest KKT residual of the flow solution.
    pub kkt_max: f64,
    /// Largest `|sum_s y_ts - d_t|`.
    pub conservation: f64,
    pub descent_ok: bool,
}

/// Solves a game both ways and compares.
pub fn cross_validate(game: &Game, config: &SolverConfig) -> Result<CrossValidation> {
    let we = solve_we(
        &game.network,
        &game.path_sets,
        &game.agents,
        &game.background,
        config,
    )?;
    let kkt = kkt_residuals(
        &game.network,
        &game.path_sets,
        &we.flows,
        &we.certificate,
        &game.agents,
    )?;
    let per_od = recommendation_from_we(&we.flows, &game.agents);
    let mut agents = Vec::new();
    for (od, d) in game.agents.iter() {
        agents.extend(std::iter::repeat_n(od.clone(), d.round() as usize));
    }
    let profile = MixedStrategyProfile::from_od_strategies(&agents, &per_od)?;
    let gaps = deviation_gap(&game.network, &game.path_sets, &profile, &game.background)?;
    let rs = solve_rs_with_background(
        &game.network,
        &game.path_sets,
        &agents,
        &game.background,
        config,
        None,
    )?;
    let rs_costs = od_equilibrium_costs(
        &game.network,
        &game.path_sets,
        &rs.profile,
        &game.background,
    )?;
    let diffs: BTreeMap<&OdPair, f64> = rs_costs
        .iter()
        .map(|(od, c)| {
            let w = we.certificate.nu[od];
            (od, (c - w).abs() / w.abs().max(1e-12))
        })
        .collect();
    Ok(CrossValidation {
        game: game.label.clone(),
        we_max_gap: gaps.iter().copied().fold(0.0, f64::max),
        max_relative_cost_diff: diffs.values().copied().fold(0.0, f64::max),
        we_converged: we.trace.converged,
        rs_converged: rs.trace.converged,
        kkt_max: kkt.max_core().max(kkt.dual_feasibility).max(kkt.wardrop),
        conservation: kkt.conservation,
        descent_ok: potential_descends(&we.trace),
    })
}

/// Runs every check. `seed` drives the random instances.
pub fn run_verification(seed: u64) -> Result<Vec<CheckResult>> {
    let mut out = Vec::new();
    let mut validations = Vec::new();
    for name in BUILTIN_NAMES {
        let s = builtin_scenario(name)?;
        for g in scenario_games(&s)? {
            validations.push((g, s.solver.clone()));
        }
    }
    let validations: Vec<CrossValidation> = validations
        .par_iter()
        .map(|(g, cfg)| cross_validate(g, cfg))
        .collect::<Result<_>>()?;

    let worst = |f: fn(&CrossValidation) -> f64| validations.iter().map(f).fold(0.0, f64::max);
    out.push(CheckResult::new(
        "flow conservation",
        worst(|v| v.conservation) <= 1e-9,
        format!("max |sum y - d| = {:.3e}", worst(|v| v.conservation)),
    ));
    let (norm, shift) = mnl_properties(seed, 1000);
    out.push(CheckResult::new(
        "logit normalization",
        norm <= 1e-9,
        format!("max |sum p - 1| = {norm:.3e}"),
    ));
    out.push(CheckResult::new(
        "logit cost-shift invariance",
        shift <= 1e-9,
        format!("max |p - p_shifted| = {shift:.3e}"),
    ));
    out.push(CheckResult::new(
        "deviation gap of flow-derived recommendations",
        worst(|v| v.we_max_gap) <= 1e-5,
        format!(
            "max gap = {:.3e} over {} games",
            worst(|v| v.we_max_gap),
            validations.len()
        ),
    ));
    out.push(CheckResult::new(
        "best-response and flow solvers agree",
        worst(|v| v.max_relative_cost_diff) <= 1e-4
            && validations.iter().all(|v| v.rs_converged && v.we_converged),
        format!(
            "max relative OD cost difference = {:.3e}",
            worst(|v| v.max_relative_cost_diff)
        ),
    ));
    out.push(CheckResult::new(
        "KKT residuals",
        worst(|v| v.kkt_max) <= 1e-5,
        format!("max residual = {:.3e}", worst(|v| v.kkt_max)),
    ));
    let demand = demand_sweep(seed)?;
    out.push(CheckResult::new(
        "demand sensitivity sweep",
        demand.failures.is_empty(),
        format!(
            "{} instances, failing: {:?}",
            demand.instances, demand.failures
        ),
    ));
    let cost = cost_sweep(seed)?;
    out.push(CheckResult::new(
        "cost sensitivity sweep",
        cost.failures.is_empty(),
        format!("{} instances, failing: {:?}", cost.instances, cost.failures),
    ));
    out.push(CheckResult::new(
        "potential descent",
        demand.descent_ok && cost.descent_ok && validations.iter().all(|v| v.descent_ok),
        "every accepted iterate is nonincreasing in the potential".into(),
    ));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_instances_are_reproducible() {
        let a = random_instance(11);
        let b = random_instance(11);
        assert_eq!(a.network, b.network);
        assert_eq!(a.demand, b.demand);
        assert!(crate::network::validate_network(&a.network).is_empty());
    }

    #[test]
    fn mnl_properties_hold() {
        let (norm, shift) = mnl_properties(3, 200);
        assert!(norm <= 1e-9 && shift <= 1e-9);
    }
}
