use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::attack::{
    cost_perturbation_attack, default_candidates, random_attack, solve_attack, uniform_attack,
    AttackPlan, AttackSpec,
};
use crate::behavior::{background_flow, preference_profile, DriverClass, PreferenceProfile};
use crate::equilibrium::{
    recommendation_from_we, solve_rs_with_background, solve_we, ConvergenceTrace, SolverConfig,
};
use crate::error::{Error, Result};
use crate::network::{
    aggregate_edge_flow, enumerate_path_sets, path_cost_from_edge_costs, DemandVector, EdgeLoad,
    Network, OdPair, PathSets,
};

use super::{validate_scenario, AttackProfile, Recommender, Scenario, ScenarioAttack};

/// An attacked run is a paradox when it beats its unattacked counterpart by more than this.
pub const PARADOX_MARGIN: f64 = 1e-6;

/// Probability below which a path counts as unused when reading off OD costs.
const USED_PROBABILITY: f64 = 1e-9;

/// What one recommender run does to the real network.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunOutcome {
    pub user_total: f64,
    pub driver_total: f64,
    pub combined_total: f64,
    /// True users' path-choice vector per OD pair.
    pub strategies: BTreeMap<OdPair, Vec<f64>>,
    /// Path costs on the real loads, aligned with `strategies`.
    pub path_costs: BTreeMap<OdPair, Vec<f64>>,
    /// Cost of the cheapest path true users use, per OD pair.
    pub od_costs: BTreeMap<OdPair, f64>,
    pub true_user_loads: EdgeLoad,
    pub driver_loads: EdgeLoad,
    /// Load the recommender attributes to fabricated users; never enters real costs.
    pub fake_loads: EdgeLoad,
    pub converged: bool,
    pub iterations: usize,
    pub final_gap: f64,
    #[serde(skip)]
    pub trace: ConvergenceTrace,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AttackSummary {
    pub profile: AttackProfile,
    pub target_edge: Option<String>,
    pub gamma: f64,
    /// One plan, or one per trial for the random attacker.
    pub plans: Vec<AttackPlan>,
    /// Mean total fake demand over plans.
    pub total_fake: f64,
    /// Mean true-user flow on the target edge.
    pub achieved_target_flow: Option<f64>,
    pub achieved_per_plan: Vec<f64>,
    pub feasible: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunReport {
    pub scenario: String,
    pub recommender: Recommender,
    pub edges: Vec<String>,
    pub path_labels: BTreeMap<OdPair, Vec<String>>,
    pub baseline: RunOutcome,
    pub attacked: Option<RunOutcome>,
    pub attack: Option<AttackSummary>,
}

struct Recommendation {
    per_od: BTreeMap<OdPair, Vec<f64>>,
    trace: ConvergenceTrace,
}

/// Every OD group picks one free-flow-shortest path; among tied choices the combination with
/// the highest user travel time is taken.
pub fn independent_routing(
    network: &Network,
    path_sets: &PathSets,
    demand: &DemandVector,
    background: &EdgeLoad,
) -> Result<BTreeMap<OdPair, Vec<f64>>> {
    let mut options: Vec<(&OdPair, f64, Vec<usize>)> = Vec::new();
    for (od, d) in demand.iter().filter(|(_, d)| *d > 0.0) {
        let paths = path_sets
            .get(od)
            .filter(|p| !p.is_empty())
            .ok_or_else(|| Error::UnreachableDemand(od.clone()))?;
        let ff: Vec<f64> = paths.iter().map(|p| p.free_flow_cost(network)).collect();
        let min = ff.iter().copied().fold(f64::INFINITY, f64::min);
        let tied = (0..paths.len())
            .filter(|&i| ff[i] - min <= 1e-9 * min.abs().max(1.0))
            .collect();
        options.push((od, d, tied));
    }
    let mut choice = vec![0usize; options.len()];
    let mut best: Option<(f64, Vec<usize>)> = None;
    loop {
        let mut load = background.clone();
        for ((od, d, tied), &c) in options.iter().zip(&choice) {
            for &e in &path_sets[*od][tied[c]].edges {
                load.0[e] += d;
            }
        }
        let costs = network.edge_costs(&load);
        let total: f64 = options
            .iter()
            .zip(&choice)
            .map(|((od, d, tied), &c)| {
                d * path_cost_from_edge_costs(&path_sets[*od][tied[c]], &costs)
            })
            .sum();
        if best.as_ref().is_none_or(|(b, _)| total > *b) {
            best = Some((total, choice.clone()));
        }
        // Odometer over the tie sets.
        let mut i = 0;
        while i < choice.len() {
            choice[i] += 1;
            if choice[i] < options[i].2.len() {
                break;
            }
            choice[i] = 0;
            i += 1;
        }
        if i == choice.len() {
            break;
        }
    }
    let picks = best.map(|(_, c)| c).unwrap_or_default();
    Ok(options
        .iter()
        .zip(&picks)
        .map(|((od, _, tied), &c)| {
            let mut p = vec![0.0; path_sets[*od].len()];
            p[tied[c]] = 1.0;
            ((*od).clone(), p)
        })
        .collect())
}

fn recommend(
    network: &Network,
    path_sets: &PathSets,
    demand: &DemandVector,
    background: &EdgeLoad,
    recommender: Recommender,
    config: &SolverConfig,
) -> Result<Recommendation> {
    match recommender {
        Recommender::We => {
            let sol = solve_we(network, path_sets, demand, background, config)?;
            Ok(Recommendation {
                per_od: recommendation_from_we(&sol.flows, demand),
                trace: sol.trace,
            })
        }
        Recommender::Rs => {
            let mut agents = Vec::new();
            for (od, d) in demand.iter() {
                if d.fract() != 0.0 {
                    return Err(Error::InvalidArgument(format!(
                        "best-response recommender needs whole agents, OD {od} has {d}"
                    )));
                }
                agents.extend(std::iter::repeat_n(od.clone(), d as usize));
            }
            let sol =
                solve_rs_with_background(network, path_sets, &agents, background, config, None)?;
            Ok(Recommendation {
                per_od: sol.profile.per_od(),
                trace: sol.trace,
            })
        }
        Recommender::Independent => Ok(Recommendation {
            per_od: independent_routing(network, path_sets, demand, background)?,
            trace: ConvergenceTrace {
                converged: true,
                ..ConvergenceTrace::default()
            },
        }),
    }
}

struct Context<'a> {
    network: &'a Network,
    path_sets: &'a PathSets,
    users: DemandVector,
}

impl Context<'_> {
    /// Real-world consequences of `rec` for true users, given drivers' actual behavior.
    fn assemble(
        &self,
        rec: Recommendation,
        drivers: &[DriverClass],
        prefs: &PreferenceProfile,
        fake: &DemandVector,
    ) -> Result<RunOutcome> {
        let net = self.network;
        let strategy = |od: &OdPair| {
            rec.per_od
                .get(od)
                .ok_or_else(|| Error::DimensionMismatch(format!("no recommendation for OD {od}")))
        };
        let mut true_groups = Vec::new();
        for (od, d) in self.users.iter().filter(|(_, d)| *d > 0.0) {
            true_groups.push((od, strategy(od)?.as_slice(), d));
        }
        let mut fake_groups = Vec::new();
        for (od, d) in fake.iter().filter(|(_, d)| *d > 0.0) {
            fake_groups.push((od, strategy(od)?.as_slice(), d));
        }
        let true_user_loads =
            aggregate_edge_flow(net, self.path_sets, true_groups.iter().copied())?;
        let fake_loads = aggregate_edge_flow(net, self.path_sets, fake_groups.iter().copied())?;
        let driver_loads = background_flow(net, self.path_sets, drivers, prefs)?;
        let costs = net.edge_costs(&true_user_loads.plus(&driver_loads));
        let path_costs_of = |od: &OdPair| -> Vec<f64> {
            self.path_sets[od]
                .iter()
                .map(|p| path_cost_from_edge_costs(p, &costs))
                .collect()
        };
        let expected = |p: &[f64], c: &[f64]| p.iter().zip(c).map(|(a, b)| a * b).sum::<f64>();

        let mut strategies = BTreeMap::new();
        let mut path_costs = BTreeMap::new();
        let mut od_costs = BTreeMap::new();
        let mut user_total = 0.0;
        for &(od, p, d) in &true_groups {
            let c = path_costs_of(od);
            user_total += d * expected(p, &c);
            let used = c
                .iter()
                .zip(p)
                .filter(|(_, &q)| q > USED_PROBABILITY)
                .map(|(&x, _)| x)
                .fold(f64::INFINITY, f64::min);
            od_costs.insert(od.clone(), used);
            strategies.insert(od.clone(), p.to_vec());
            path_costs.insert(od.clone(), c);
        }
        let driver_total: f64 = drivers
            .iter()
            .zip(prefs)
            .map(|(cl, p)| cl.count * expected(p, &path_costs_of(&cl.od)))
            .fold(0.0, |a, b| a + b);
        Ok(RunOutcome {
            user_total,
            driver_total,
            combined_total: user_total + driver_total,
            strategies,
            path_costs,
            od_costs,
            true_user_loads,
            driver_loads,
            fake_loads,
            converged: rec.trace.converged,
            iterations: rec.trace.iterations,
            final_gap: rec.trace.final_gap,
            trace: rec.trace,
        })
    }
}

fn mean_outcome(runs: &[RunOutcome]) -> RunOutcome {
    let n = runs.len() as f64;
    let mean_load = |f: fn(&RunOutcome) -> &EdgeLoad| {
        let mut acc = EdgeLoad::zeros(f(&runs[0]).len());
        for r in runs {
            acc = acc.plus(f(r));
        }
        acc.scaled(1.0 / n)
    };
    let mean_map = |f: fn(&RunOutcome) -> &BTreeMap<OdPair, Vec<f64>>| {
        let mut acc: BTreeMap<OdPair, Vec<f64>> = BTreeMap::new();
        for r in runs {
            for (od, v) in f(r) {
                let e = acc.entry(od.clone()).or_insert_with(|| vec![0.0; v.len()]);
                for (a, b) in e.iter_mut().zip(v) {
                    *a += b / n;
                }
            }
        }
        acc
    };
    let mut od_costs: BTreeMap<OdPair, f64> = BTreeMap::new();
    for r in runs {
        for (od, c) in &r.od_costs {
            *od_costs.entry(od.clone()).or_insert(0.0) += c / n;
        }
    }
    let user_total = runs.iter().map(|r| r.user_total).sum::<f64>() / n;
    let driver_total = runs.iter().map(|r| r.driver_total).sum::<f64>() / n;
    RunOutcome {
        user_total,
        driver_total,
        combined_total: user_total + driver_total,
        strategies: mean_map(|r| &r.strategies),
        path_costs: mean_map(|r| &r.path_costs),
        od_costs,
        true_user_loads: mean_load(|r| &r.true_user_loads),
        driver_loads: mean_load(|r| &r.driver_loads),
        fake_loads: mean_load(|r| &r.fake_loads),
        converged: runs.iter().all(|r| r.converged),
        iterations: runs.iter().map(|r| r.iterations).max().unwrap_or(0),
        final_gap: runs.iter().map(|r| r.final_gap).fold(0.0, f64::max),
        trace: runs[0].trace.clone(),
    }
}

fn override_drivers(
    scenario: &Scenario,
    attack: &ScenarioAttack,
    path_sets: &PathSets,
) -> Result<Vec<DriverClass>> {
    let mut drivers = scenario.drivers.clone();
    for o in &attack.driver_overrides {
        let class = drivers
            .get_mut(o.class)
            .ok_or_else(|| Error::InvalidArgument(format!("no driver class {}", o.class)))?;
        let paths = &path_sets[&class.od];
        for label in o.preferences.keys() {
            if !paths.iter().any(|p| &p.label() == label) {
                return Err(Error::InvalidArgument(format!(
                    "driver override names unknown path `{label}` for OD {}",
                    class.od
                )));
            }
        }
        let p = paths
            .iter()
            .map(|path| o.preferences.get(&path.label()).copied().unwrap_or(0.0))
            .collect();
        class.preference_override = Some(p);
    }
    Ok(drivers)
}

/// Runs the scenario's recommender, then (if configured) the attack and the recommender again.
pub fn run_pipeline(scenario: &Scenario) -> Result<RunReport> {
    let violations = validate_scenario(scenario);
    if !violations.is_empty() {
        return Err(Error::InvalidNetwork(violations));
    }
    let net = &scenario.network;
    let config = &scenario.solver;
    let users = scenario.user_demand();
    let base_ods: Vec<OdPair> = users
        .ods()
        .cloned()
        .chain(scenario.drivers.iter().map(|c| c.od.clone()))
        .collect();
    let mut path_sets = enumerate_path_sets(net, &base_ods, scenario.path_k)?;

    let attack = scenario.attack.as_ref();
    let target = match attack.and_then(|a| a.target_edge.as_deref()) {
        Some(t) => Some(net.resolve_edge(t)?),
        None => None,
    };
    let candidates: Vec<OdPair> = match (attack, target) {
        (Some(a), Some(t)) if a.profile.fabricates_demand() && a.candidates.is_empty() => {
            default_candidates(&path_sets, &users, t)
        }
        (Some(a), _) => a.candidates.clone(),
        _ => Vec::new(),
    };
    for od in &candidates {
        if !path_sets.contains_key(od) {
            path_sets.insert(
                od.clone(),
                crate::network::enumerate_paths(net, od, scenario.path_k)?,
            );
        }
    }

    let prefs = preference_profile(net, &path_sets, &scenario.drivers)?;
    let background = background_flow(net, &path_sets, &scenario.drivers, &prefs)?;
    let ctx = Context {
        network: net,
        path_sets: &path_sets,
        users: users.clone(),
    };
    let no_fake = DemandVector::new();

    let rec = recommend(
        net,
        &path_sets,
        &users,
        &background,
        scenario.recommender,
        config,
    )?;
    let baseline = ctx.assemble(rec, &scenario.drivers, &prefs, &no_fake)?;

    let mut attacked = None;
    let mut summary = None;
    if let Some(a) = attack {
        let fabricated = |plan: &AttackPlan| -> Result<RunOutcome> {
            let fake = plan.as_demand();
            let mut demand = users.clone();
            for (od, d) in fake.iter() {
                demand = demand.with(od.clone(), d);
            }
            let rec = recommend(
                net,
                &path_sets,
                &demand,
                &background,
                scenario.recommender,
                config,
            )?;
            ctx.assemble(rec, &scenario.drivers, &prefs, &fake)
        };
        let budget = || {
            a.budget.ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "attack profile `{}` needs a budget",
                    a.profile.as_str()
                ))
            })
        };
        let (outcome, plans) = match a.profile {
            AttackProfile::Optimal => {
                let spec = AttackSpec {
                    target_edge: a.target_edge.clone().unwrap_or_default(),
                    gamma: a.gamma,
                    candidates: candidates.clone(),
                    budget: None,
                };
                let found = solve_attack(net, &path_sets, &users, &background, &spec, config)?;
                (fabricated(&found.plan)?, vec![found.plan])
            }
            AttackProfile::Uniform => {
                let spec = AttackSpec {
                    target_edge: a.target_edge.clone().unwrap_or_default(),
                    gamma: a.gamma,
                    candidates: candidates.clone(),
                    budget: a.budget,
                };
                let plan = uniform_attack(&spec, budget()?)?;
                (fabricated(&plan)?, vec![plan])
            }
            AttackProfile::Random => {
                let spec = AttackSpec {
                    target_edge: a.target_edge.clone().unwrap_or_default(),
                    gamma: a.gamma,
                    candidates: candidates.clone(),
                    budget: a.budget,
                };
                let plans = random_attack(&spec, budget()?, config.seed, a.trials)?;
                let runs = plans
                    .par_iter()
                    .map(fabricated)
                    .collect::<Result<Vec<_>>>()?;
                (mean_outcome(&runs), plans)
            }
            AttackProfile::Cost => {
                let fake_net = cost_perturbation_attack(net, &a.edge_overrides)?;
                let rec = recommend(
                    &fake_net,
                    &path_sets,
                    &users,
                    &background,
                    scenario.recommender,
                    config,
                )?;
                (
                    ctx.assemble(rec, &scenario.drivers, &prefs, &no_fake)?,
                    vec![],
                )
            }
            AttackProfile::DriverOverride => {
                let drivers = override_drivers(scenario, a, &path_sets)?;
                let prefs2 = preference_profile(net, &path_sets, &drivers)?;
                let bg2 = background_flow(net, &path_sets, &drivers, &prefs2)?;
                let rec = recommend(net, &path_sets, &users, &bg2, scenario.recommender, config)?;
                (ctx.assemble(rec, &drivers, &prefs2, &no_fake)?, vec![])
            }
        };
        let achieved_per_plan: Vec<f64> = match (target, a.profile) {
            (Some(t), AttackProfile::Random) => plans
                .par_iter()
                .map(|p| fabricated(p).map(|o| o.true_user_loads.get(t)))
                .collect::<Result<Vec<_>>>()?,
            (Some(t), _) => vec![outcome.true_user_loads.get(t)],
            (None, _) => vec![],
        };
        let achieved = (!achieved_per_plan.is_empty())
            .then(|| achieved_per_plan.iter().sum::<f64>() / achieved_per_plan.len() as f64);
        let total_fake = if plans.is_empty() {
            0.0
        } else {
            plans.iter().map(|p| p.total() as f64).sum::<f64>() / plans.len() as f64
        };
        summary = Some(AttackSummary {
            profile: a.profile,
            target_edge: a.target_edge.clone(),
            gamma: a.gamma,
            plans,
            total_fake,
            feasible: achieved.map(|v| v >= a.gamma),
            achieved_target_flow: achieved,
            achieved_per_plan,
        });
        attacked = Some(outcome);
    }

    Ok(RunReport {
        scenario: scenario.name.clone(),
        recommender: scenario.recommender,
        edges: net.edges.iter().map(|e| e.id.clone()).collect(),
        path_labels: path_sets
            .iter()
            .map(|(od, ps)| (od.clone(), ps.iter().map(|p| p.label()).collect()))
            .collect(),
        baseline,
        attacked,
        attack: summary,
    })
}

impl RunReport {
    /// The run that a comparison reports: attacked if there is one.
    pub fn headline(&self) -> &RunOutcome {
        self.attacked.as_ref().unwrap_or(&self.baseline)
    }

    fn phases(&self) -> Vec<(&'static str, &RunOutcome)> {
        let mut v = vec![("baseline", &self.baseline)];
        if let Some(a) = &self.attacked {
            v.push(("attacked", a));
        }
        v
    }

    /// `phase,edge,true_user,driver,fake,real_total`.
    pub fn write_edge_loads_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["phase", "edge", "true_user", "driver", "fake", "real_total"])?;
        for (phase, o) in self.phases() {
            for (i, id) in self.edges.iter().enumerate() {
                let (t, d, f) = (
                    o.true_user_loads.get(i),
                    o.driver_loads.get(i),
                    o.fake_loads.get(i),
                );
                w.write_record([
                    phase.to_string(),
                    id.clone(),
                    fmt(t),
                    fmt(d),
                    fmt(f),
                    fmt(t + d),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// `phase,od,path,probability,cost`.
    pub fn write_strategies_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["phase", "od", "path", "probability", "cost"])?;
        for (phase, o) in self.phases() {
            for (od, p) in &o.strategies {
                let labels = &self.path_labels[od];
                for (i, q) in p.iter().enumerate() {
                    w.write_record([
                        phase.to_string(),
                        od.to_string(),
                        labels[i].clone(),
                        fmt(*q),
                        fmt(o.path_costs[od][i]),
                    ])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    /// `phase,iter,potential,max_gap,step`.
    pub fn write_convergence_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["phase", "iter", "potential", "max_gap", "step"])?;
        for (phase, o) in self.phases() {
            for r in &o.trace.records {
                w.write_record([
                    phase.to_string(),
                    r.iter.to_string(),
                    fmt(r.potential),
                    fmt(r.max_gap),
                    fmt(r.step),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Writes `report.json`, `edge_loads.csv`, `strategies.csv` and `convergence.csv`.
    pub fn write_artifacts(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("report.json"), self.to_json() + "\n")?;
        self.write_edge_loads_csv(fs::File::create(dir.join("edge_loads.csv"))?)?;
        self.write_strategies_csv(fs::File::create(dir.join("strategies.csv"))?)?;
        self.write_convergence_csv(fs::File::create(dir.join("convergence.csv"))?)?;
        Ok(())
    }

    /// Short human-readable account.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "scenario {} ({:?} recommender)",
            self.scenario, self.recommender
        );
        for (phase, o) in self.phases() {
            let _ = writeln!(
                s,
                "  {phase}: users {:.4}  drivers {:.4}  combined {:.4}{}",
                o.user_total,
                o.driver_total,
                o.combined_total,
                if o.converged { "" } else { "  (not converged)" }
            );
            for (od, p) in &o.strategies {
                let probs: Vec<String> = p.iter().map(|v| format!("{v:.4}")).collect();
                let _ = writeln!(
                    s,
                    "    {od}: [{}]  cost {:.4}",
                    probs.join(", "),
                    o.od_costs[od]
                );
            }
        }
        if let Some(a) = &self.attack {
            let _ = writeln!(
                s,
                "  attack {}: mean fake demand {:.2}",
                a.profile.as_str(),
                a.total_fake
            );
            if let (Some(t), Some(v)) = (&a.target_edge, a.achieved_target_flow) {
                let _ = writeln!(s, "    true-user flow on {t}: {v:.4} (gamma {})", a.gamma);
            }
        }
        s
    }
}

fn fmt(v: f64) -> String {
    format!("{v:.9}")
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub scenario: String,
    pub attack: Option<AttackProfile>,
    pub baseline_total: f64,
    pub combined_total: f64,
    pub delta: f64,
    pub paradox: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
}

impl Comparison {
    pub fn paradox_count(&self) -> usize {
        self.rows.iter().filter(|r| r.paradox).count()
    }

    /// `scenario,attack,baseline_total,combined_total,delta,paradox`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "scenario",
            "attack",
            "baseline_total",
            "combined_total",
            "delta",
            "paradox",
        ])?;
        for r in &self.rows {
            w.write_record([
                r.scenario.clone(),
                r.attack.map_or("none", |a| a.as_str()).to_string(),
                fmt(r.baseline_total),
                fmt(r.combined_total),
                fmt(r.delta),
                r.paradox.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// One row per report. A row is flagged when its attacked total is below its own unattacked
/// total by more than [`PARADOX_MARGIN`].
pub fn compare_reports(reports: &[RunReport]) -> Result<Comparison> {
    if reports.len() < 2 {
        return Err(Error::InvalidArgument(
            "a comparison needs at least two reports".into(),
        ));
    }
    Ok(Comparison {
        rows: reports
            .iter()
            .map(|r| {
                let base = r.baseline.combined_total;
                let head = r.headline().combined_total;
                ComparisonRow {
                    scenario: r.scenario.clone(),
                    attack: r.attack.as_ref().map(|a| a.profile),
                    baseline_total: base,
                    combined_total: head,
                    delta: head - base,
                    paradox: r.attacked.is_some() && head < base - PARADOX_MARGIN,
                }
            })
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::builtin_scenario;

    fn report(name: &str) -> RunReport {
        run_pipeline(&builtin_scenario(name).unwrap()).unwrap()
    }

    fn probs(o: &RunOutcome, labels: &[String], od: &OdPair) -> BTreeMap<String, f64> {
        labels
            .iter()
            .cloned()
            .zip(o.strategies[od].iter().copied())
            .collect()
    }

    #[test]
    fn braess_users_total() {
        let r = report("braess_users");
        assert!(
            (r.baseline.combined_total - 120.0).abs() < 1e-3,
            "{}",
            r.summary()
        );
        assert_eq!(r.baseline.driver_total, 0.0);
    }

    #[test]
    fn braess_users_attacked_avoids_shortcut() {
        let r = report("braess_users_attacked");
        let od = OdPair::new("A", "B");
        let a = r.attacked.as_ref().unwrap();
        let p = probs(a, &r.path_labels[&od], &od);
        assert!(
            (p["A-C-B"] - 0.5).abs() < 1e-3 && (p["A-D-B"] - 0.5).abs() < 1e-3,
            "{p:?}"
        );
        assert!((a.combined_total - 105.0).abs() < 1e-3);
        assert!(a.fake_loads.max() > 0.0);
    }

    #[test]
    fn braess_mixed_attacked_sends_users_over_shortcut() {
        let r = report("braess_mixed_attacked");
        let od = OdPair::new("A", "B");
        assert!(
            (r.baseline.combined_total - 145.0).abs() < 1e-2,
            "{}",
            r.summary()
        );
        let a = r.attacked.as_ref().unwrap();
        let p = probs(a, &r.path_labels[&od], &od);
        assert!((p["A-C-D-B"] - 1.0).abs() < 1e-3, "{p:?}");
        assert!((a.combined_total - 120.0).abs() < 1e-2);
        assert!((a.user_total + a.driver_total - a.combined_total).abs() < 1e-12);
    }

    #[test]
    fn comparison_flags() {
        let reports: Vec<RunReport> = [
            "braess_mixed",
            "braess_mixed_attacked",
            "braess_users",
            "braess_users_attacked",
        ]
        .iter()
        .map(|n| report(n))
        .collect();
        let cmp = compare_reports(&reports).unwrap();
        let totals: Vec<f64> = cmp.rows.iter().map(|r| r.combined_total).collect();
        for (t, want) in totals.iter().zip([145.0, 120.0, 120.0, 105.0]) {
            assert!((t - want).abs() < 1e-2, "{totals:?}");
        }
        assert_eq!(cmp.paradox_count(), 2);

        let same = compare_reports(&[reports[2].clone(), reports[2].clone()]).unwrap();
        assert!(same.rows.iter().all(|r| r.delta == 0.0 && !r.paradox));
        assert!(compare_reports(&reports[..1]).is_err());
    }

    #[test]
    fn worst_case_independent_routing() {
        let mut s = builtin_scenario("five_node").unwrap();
        s.recommender = Recommender::Independent;
        let r = run_pipeline(&s).unwrap();
        assert!(
            (r.baseline.combined_total - 236.0).abs() < 1e-9,
            "{}",
            r.summary()
        );
    }

    #[test]
    fn reports_are_reproducible() {
        let s = builtin_scenario("braess_mixed_attacked").unwrap();
        let csv = |r: &RunReport| {
            let mut buf = Vec::new();
            r.write_edge_loads_csv(&mut buf).unwrap();
            r.write_strategies_csv(&mut buf).unwrap();
            buf
        };
        assert_eq!(
            csv(&run_pipeline(&s).unwrap()),
            csv(&run_pipeline(&s).unwrap())
        );
    }
}
