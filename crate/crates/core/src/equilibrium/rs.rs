use std::collections::BTreeMap;

use serde::Serialize;

use crate::behavior::{background_flow, preference_profile, DriverClass};
use crate::error::{Error, Result};
use crate::network::{
    aggregate_edge_flow, path_cost_from_edge_costs, EdgeLoad, Network, OdPair, Path, PathSets,
};

use super::kernel::{self, block_gap, Block};
use super::{
    beckmann_potential, AgentStrategy, ConvergenceTrace, MixedStrategyProfile, SolverConfig,
    TraceRecord,
};

/// Share of a vector below which a path counts as unused when reading off OD costs.
const USED_PROBABILITY: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RsSolution {
    pub profile: MixedStrategyProfile,
    pub trace: ConvergenceTrace,
    /// Driver load the users played against.
    pub background: EdgeLoad,
    /// Deviation gap per agent at the returned profile.
    pub gaps: Vec<f64>,
}

fn profile_load(
    network: &Network,
    path_sets: &PathSets,
    profile: &MixedStrategyProfile,
) -> Result<EdgeLoad> {
    aggregate_edge_flow(
        network,
        path_sets,
        profile
            .agents
            .iter()
            .map(|a| (&a.od, a.probabilities.as_slice(), 1.0)),
    )
}

/// Best recommendation for one user given everyone else's load.
///
/// The user's vector is the flow of a unit-demand block; it minimizes the potential
/// `sum_e integral_{o_e}^{o_e + x_e} c_e`, where `o` is `others` and `x` the user's own
/// expected load, whose stationary points are exactly the vectors with zero deviation gap.
/// Returns the incumbent unchanged when its gap is already within tolerance. The flag reports
/// whether the inner solve met its tolerance.
pub fn user_best_response(
    network: &Network,
    paths: &[Path],
    incumbent: &[f64],
    others: &EdgeLoad,
    config: &SolverConfig,
) -> Result<(Vec<f64>, bool)> {
    if paths.is_empty() {
        return Err(Error::EmptyChoiceSet);
    }
    if incumbent.len() != paths.len() {
        return Err(Error::DimensionMismatch(format!(
            "incumbent has {} entries for {} paths",
            incumbent.len(),
            paths.len()
        )));
    }
    let block = [Block { paths, demand: 1.0 }];
    let result = kernel::minimize(
        network,
        &block,
        others.as_slice(),
        vec![incumbent.to_vec()],
        &config.kernel(config.tolerance),
        None,
    );
    let y = result.y.into_iter().next().expect("one block");
    Ok((y, result.converged))
}

/// `gap_u = sum_i p_ui C_ui - min_i C_ui` with costs at the profile's expected load plus
/// `background`. Nonnegative; zero for every agent exactly at an equilibrium.
pub fn deviation_gap(
    network: &Network,
    path_sets: &PathSets,
    profile: &MixedStrategyProfile,
    background: &EdgeLoad,
) -> Result<Vec<f64>> {
    let load = profile_load(network, path_sets, profile)?.plus(background);
    let edge_costs = network.edge_costs(&load);
    Ok(profile
        .agents
        .iter()
        .map(|a| {
            let costs: Vec<f64> = path_sets[&a.od]
                .iter()
                .map(|p| path_cost_from_edge_costs(p, &edge_costs))
                .collect();
            block_gap(&a.probabilities, &costs)
        })
        .collect())
}

/// Cost of the cheapest path in use per OD pair (cheapest overall if none is used).
pub fn od_equilibrium_costs(
    network: &Network,
    path_sets: &PathSets,
    profile: &MixedStrategyProfile,
    background: &EdgeLoad,
) -> Result<BTreeMap<OdPair, f64>> {
    let load = profile_load(network, path_sets, profile)?.plus(background);
    let edge_costs = network.edge_costs(&load);
    Ok(profile
        .per_od()
        .into_iter()
        .map(|(od, p)| {
            let costs: Vec<f64> = path_sets[&od]
                .iter()
                .map(|path| path_cost_from_edge_costs(path, &edge_costs))
                .collect();
            let used = costs
                .iter()
                .zip(&p)
                .filter(|(_, &q)| q > USED_PROBABILITY)
                .map(|(&c, _)| c)
                .fold(f64::INFINITY, f64::min);
            let nu = if used.is_finite() {
                used
            } else {
                costs.iter().copied().fold(f64::INFINITY, f64::min)
            };
            (od, nu)
        })
        .collect())
}

/// Round-robin best-response dynamics for `users` against drivers' logit background load.
pub fn solve_rs(
    network: &Network,
    path_sets: &PathSets,
    users: &[OdPair],
    drivers: &[DriverClass],
    config: &SolverConfig,
) -> Result<RsSolution> {
    let prefs = preference_profile(network, path_sets, drivers)?;
    let background = background_flow(network, path_sets, drivers, &prefs)?;
    solve_rs_with_background(network, path_sets, users, &background, config, None)
}

/// Best-response dynamics against a fixed background load.
///
/// Agent `n mod |U|` updates at step `n`. After every sweep, agents sharing an OD pair are
/// given their mean vector; this leaves expected loads unchanged. The run stops once a sweep
/// moves no vector by `tolerance` or more (sup norm) and every deviation gap is within
/// `tolerance`. On hitting the sweep cap, the profile with the smallest maximal gap seen is
/// returned with `converged = false`.
pub fn solve_rs_with_background(
    network: &Network,
    path_sets: &PathSets,
    users: &[OdPair],
    background: &EdgeLoad,
    config: &SolverConfig,
    initial: Option<&MixedStrategyProfile>,
) -> Result<RsSolution> {
    config.validate()?;
    if background.len() != network.edge_count() {
        return Err(Error::DimensionMismatch(format!(
            "background covers {} edges, network has {}",
            background.len(),
            network.edge_count()
        )));
    }
    let mut paths: Vec<&[Path]> = Vec::with_capacity(users.len());
    for od in users {
        match path_sets.get(od) {
            Some(p) if !p.is_empty() => paths.push(p),
            _ => return Err(Error::UnreachableDemand(od.clone())),
        }
    }
    let mut profile = match initial {
        Some(p) => {
            if p.agents.len() != users.len()
                || p.agents.iter().zip(users).any(|(a, od)| &a.od != od)
            {
                return Err(Error::DimensionMismatch(
                    "initial profile does not match users".into(),
                ));
            }
            p.clone()
        }
        None => MixedStrategyProfile {
            agents: users
                .iter()
                .zip(&paths)
                .map(|(od, p)| AgentStrategy {
                    od: od.clone(),
                    probabilities: vec![1.0 / p.len() as f64; p.len()],
                })
                .collect(),
        },
    };

    let inner = SolverConfig {
        tolerance: config.tolerance / 10.0,
        ..config.clone()
    };
    let tol = config.tolerance;
    let mut records = Vec::new();
    let mut user_load = profile_load(network, path_sets, &profile)?;
    let mut gaps = deviation_gap(network, path_sets, &profile, background)?;
    let mut max_gap = gaps.iter().copied().fold(0.0, f64::max);
    let mut best = (max_gap, profile.clone(), gaps.clone());
    let mut converged = users.is_empty();
    let mut sweeps = 0;

    while !converged && sweeps < config.max_iter {
        let start = profile.clone();
        let mut max_change: f64 = 0.0;
        for u in 0..users.len() {
            let own = &profile.agents[u].probabilities;
            let mut others = user_load.plus(background);
            for (p, &x) in paths[u].iter().zip(own) {
                for &e in &p.edges {
                    others.0[e] -= x;
                }
            }
            for v in &mut others.0 {
                *v = v.max(0.0);
            }
            let (next, _) = user_best_response(network, paths[u], own, &others, &inner)?;
            for ((p, &old), &new) in paths[u].iter().zip(own).zip(&next) {
                max_change = max_change.max((new - old).abs());
                for &e in &p.edges {
                    user_load.0[e] += new - old;
                }
            }
            profile.agents[u].probabilities = next;
        }
        symmetrize(&mut profile);
        for (a, b) in profile.agents.iter().zip(&start.agents) {
            for (x, y) in a.probabilities.iter().zip(&b.probabilities) {
                max_change = max_change.max((x - y).abs());
            }
        }
        user_load = profile_load(network, path_sets, &profile)?;
        gaps = deviation_gap(network, path_sets, &profile, background)?;
        max_gap = gaps.iter().copied().fold(0.0, f64::max);
        sweeps += 1;
        records.push(TraceRecord {
            iter: sweeps,
            potential: beckmann_potential(network, &user_load.plus(background)),
            max_gap,
            step: max_change,
        });
        if max_gap < best.0 {
            best = (max_gap, profile.clone(), gaps.clone());
        }
        converged = max_change < tol && max_gap <= tol;
    }

    if !converged {
        (max_gap, profile, gaps) = best;
    }
    Ok(RsSolution {
        profile,
        trace: ConvergenceTrace {
            records,
            converged,
            iterations: sweeps,
            final_gap: max_gap,
        },
        background: background.clone(),
        gaps,
    })
}

/// Replaces each agent's vector by the mean over agents with the same OD pair.
fn symmetrize(profile: &mut MixedStrategyProfile) {
    let means = profile.per_od();
    for a in &mut profile.agents {
        a.probabilities.clone_from(&means[&a.od]);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{enumerate_path_sets, Edge};
    use crate::scenario::{braess_network, five_node_network};

    fn index_of(sets: &PathSets, od: &OdPair, label: &str) -> usize {
        sets[od].iter().position(|p| p.label() == label).unwrap()
    }

    #[test]
    fn lone_user_takes_the_shortcut() {
        let net = braess_network(1e-6);
        let od = OdPair::new("A", "B");
        let sets = enumerate_path_sets(&net, [&od], 5).unwrap();
        let (p, ok) = user_best_response(
            &net,
            &sets[&od],
            &[1.0 / 3.0; 3],
            &EdgeLoad::zeros(net.edge_count()),
            &SolverConfig::default(),
        )
        .unwrap();
        assert!(ok);
        assert!(
            (p[index_of(&sets, &od, "A-C-D-B")] - 1.0).abs() < 1e-9,
            "{p:?}"
        );

        // Oracle: pure-path costs at unit demand.
        let pure = |label: &str| {
            let mut q = vec![0.0; 3];
            q[index_of(&sets, &od, label)] = 1.0;
            let prof = MixedStrategyProfile {
                agents: vec![AgentStrategy {
                    od: od.clone(),
                    probabilities: q,
                }],
            };
            let load = profile_load(&net, &sets, &prof).unwrap();
            crate::network::path_cost(&net, &sets[&od][index_of(&sets, &od, label)], &load).unwrap()
        };
        let shortcut = pure("A-C-D-B");
        assert!((shortcut - (0.2 + 1e-6)).abs() < 1e-12);
        assert!(shortcut < pure("A-C-B") && shortcut < pure("A-D-B"));
    }

    #[test]
    fn tie_returns_incumbent() {
        let net = Network::new(
            vec!["a".into(), "b".into(), "c".into()],
            vec![
                Edge::new("a-b", "a", "b", 1.0, 0.0, 1.0, 1.0),
                Edge::new("b-c", "b", "c", 1.0, 0.0, 1.0, 1.0),
                Edge::new("a-c", "a", "c", 2.0, 0.0, 1.0, 1.0),
            ],
        );
        let od = OdPair::new("a", "c");
        let sets = enumerate_path_sets(&net, [&od], 5).unwrap();
        let incumbent = [0.3, 0.7];
        let (p, ok) = user_best_response(
            &net,
            &sets[&od],
            &incumbent,
            &EdgeLoad::zeros(3),
            &SolverConfig::default(),
        )
        .unwrap();
        assert!(ok);
        assert_eq!(p, incumbent.to_vec());
    }

    #[test]
    fn single_path_single_sweep() {
        let net = Network::new(
            vec!["a".into(), "b".into()],
            vec![Edge::new("a-b", "a", "b", 1.0, 1.0, 1.0, 1.0)],
        );
        let od = OdPair::new("a", "b");
        let sets = enumerate_path_sets(&net, [&od], 5).unwrap();
        let sol = solve_rs(&net, &sets, &[od], &[], &SolverConfig::default()).unwrap();
        assert!(sol.trace.converged);
        assert_eq!(sol.trace.iterations, 1);
        assert_eq!(sol.profile.agents[0].probabilities, vec![1.0]);
    }

    #[test]
    fn five_node_best_response_dynamics() {
        let net = five_node_network();
        let ods = [OdPair::new("1", "5"), OdPair::new("3", "5")];
        let sets = enumerate_path_sets(&net, &ods, 5).unwrap();
        let users: Vec<OdPair> = ods
            .iter()
            .flat_map(|od| std::iter::repeat(od.clone()).take(10))
            .collect();
        let sol = solve_rs(&net, &sets, &users, &[], &SolverConfig::default()).unwrap();
        assert!(sol.trace.converged);
        assert!(sol.gaps.iter().all(|&g| g <= 1e-6));
        let nu = od_equilibrium_costs(&net, &sets, &sol.profile, &sol.background).unwrap();
        assert!((nu[&ods[0]] - 7.3).abs() / 7.3 < 0.03, "{nu:?}");
        assert!((nu[&ods[1]] - 5.3).abs() / 5.3 < 0.03, "{nu:?}");
    }

    #[test]
    fn all_on_one_route_has_positive_gap() {
        let net = braess_network(1e-6);
        let od = OdPair::new("A", "B");
        let sets = enumerate_path_sets(&net, [&od], 5).unwrap();
        let mut p = vec![0.0; 3];
        p[index_of(&sets, &od, "A-C-B")] = 1.0;
        let profile = MixedStrategyProfile {
            agents: vec![
                AgentStrategy {
                    od: od.clone(),
                    probabilities: p
                };
                30
            ],
        };
        let gaps =
            deviation_gap(&net, &sets, &profile, &EdgeLoad::zeros(net.edge_count())).unwrap();
        // A-C-B costs 3 + 2 = 5; A-D-B costs 2 + 0 = 2 with nobody on it.
        assert!(gaps.iter().all(|&g| (g - 3.0).abs() < 1e-9), "{gaps:?}");
        assert!(deviation_gap(
            &net,
            &sets,
            &MixedStrategyProfile::default(),
            &EdgeLoad::zeros(5)
        )
        .unwrap()
        .is_empty());
    }
}
