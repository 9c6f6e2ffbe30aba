use std::collections::BTreeMap;

use crate::attack::EdgeOverride;
use crate::behavior::DriverClass;
use crate::equilibrium::SolverConfig;
use crate::error::{Error, Result};
use crate::network::{Edge, Network, OdPair};

use super::{AttackProfile, DriverOverride, Recommender, Scenario, ScenarioAttack, UserGroup};

pub const BUILTIN_NAMES: [&str; 6] = [
    "five_node",
    "five_node_attacked",
    "braess_users",
    "braess_users_attacked",
    "braess_mixed",
    "braess_mixed_attacked",
];

/// Free-flow time of the Braess shortcut C-D.
pub const BRAESS_EPSILON: f64 = 1e-6;

/// Five-node grid with BPR latencies `t (1 + 0.4 (f / 10)^2)`.
///
/// Free-flow times are calibrated: 1-2-5 and 1-3-4-5 tie at 6, 3-5 costs 5, which puts the
/// unattacked equilibrium of 10 + 10 users at OD costs 7.32 (1-5) and 5.27 (3-5), total 125.9.
pub fn five_node_network() -> Network {
    let bpr = |t: &str, h: &str, time: f64| Edge::bpr(t, h, time, 0.4, 10.0, 2.0);
    Network::new(
        ["1", "2", "3", "4", "5"].map(String::from).to_vec(),
        vec![
            bpr("1", "2", 3.0),
            bpr("1", "3", 2.0),
            bpr("2", "5", 3.0),
            bpr("3", "4", 2.0),
            bpr("3", "5", 5.0),
            bpr("4", "5", 2.0),
        ],
    )
}

/// Braess network: A-C and D-B cost `f / 10`, C-B and A-D cost 2, shortcut C-D costs `eps`.
pub fn braess_network(eps: f64) -> Network {
    let e = |t: &str, h: &str, a: f64, b: f64| Edge::new(format!("{t}-{h}"), t, h, a, b, 10.0, 1.0);
    Network::new(
        ["A", "B", "C", "D"].map(String::from).to_vec(),
        vec![
            e("A", "C", 0.0, 1.0),
            e("C", "B", 2.0, 0.0),
            e("A", "D", 2.0, 0.0),
            e("D", "B", 0.0, 1.0),
            e("C", "D", eps, 0.0),
        ],
    )
}

fn group(o: &str, d: &str, count: u32) -> UserGroup {
    UserGroup {
        od: OdPair::new(o, d),
        count,
    }
}

fn scenario(
    name: &str,
    network: Network,
    users: Vec<UserGroup>,
    recommender: Recommender,
) -> Scenario {
    Scenario {
        name: name.to_string(),
        network,
        users,
        drivers: Vec::new(),
        recommender,
        attack: None,
        solver: SolverConfig::default(),
        path_k: 5,
    }
}

fn attack(profile: AttackProfile) -> ScenarioAttack {
    ScenarioAttack {
        profile,
        target_edge: None,
        gamma: 0.0,
        candidates: Vec::new(),
        budget: None,
        trials: 200,
        edge_overrides: Vec::new(),
        driver_overrides: Vec::new(),
    }
}

fn braess_drivers() -> Vec<DriverClass> {
    // A sharp logit on free-flow costs sends practically everyone over the shortcut.
    vec![DriverClass::logit(OdPair::new("A", "B"), 20.0, 0.0, 50.0)]
}

pub fn builtin_scenario(name: &str) -> Result<Scenario> {
    let five_users = || vec![group("1", "5", 10), group("3", "5", 10)];
    Ok(match name {
        "five_node" => scenario(name, five_node_network(), five_users(), Recommender::Rs),
        "five_node_attacked" => Scenario {
            attack: Some(ScenarioAttack {
                target_edge: Some("3-5".into()),
                gamma: 10.0,
                budget: Some(30),
                ..attack(AttackProfile::Optimal)
            }),
            ..scenario(name, five_node_network(), five_users(), Recommender::We)
        },
        "braess_users" => scenario(
            name,
            braess_network(BRAESS_EPSILON),
            vec![group("A", "B", 30)],
            Recommender::We,
        ),
        "braess_users_attacked" => Scenario {
            // Fake trips on the roads feeding the shortcut make A-C-D-B the dearest route.
            attack: Some(ScenarioAttack {
                target_edge: Some("A-D".into()),
                gamma: 15.0,
                candidates: vec![OdPair::new("A", "C"), OdPair::new("D", "B")],
                budget: Some(20),
                edge_overrides: vec![EdgeOverride {
                    edge: "C-D".into(),
                    a: Some(1e6),
                    ..EdgeOverride::default()
                }],
                ..attack(AttackProfile::Uniform)
            }),
            ..scenario(
                name,
                braess_network(BRAESS_EPSILON),
                vec![group("A", "B", 30)],
                Recommender::We,
            )
        },
        "braess_mixed" => Scenario {
            drivers: braess_drivers(),
            ..scenario(
                name,
                braess_network(BRAESS_EPSILON),
                vec![group("A", "B", 10)],
                Recommender::Rs,
            )
        },
        "braess_mixed_attacked" => Scenario {
            drivers: braess_drivers(),
            attack: Some(ScenarioAttack {
                driver_overrides: vec![DriverOverride {
                    class: 0,
                    preferences: BTreeMap::from([
                        ("A-C-B".to_string(), 0.5),
                        ("A-D-B".to_string(), 0.5),
                    ]),
                }],
                ..attack(AttackProfile::DriverOverride)
            }),
            ..scenario(
                name,
                braess_network(BRAESS_EPSILON),
                vec![group("A", "B", 10)],
                Recommender::Rs,
            )
        },
        other => return Err(Error::UnknownScenario(other.to_string())),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn braess_users_has_thirty_users_and_nothing_else() {
        let s = builtin_scenario("braess_users").unwrap();
        assert_eq!(s.users, vec![group("A", "B", 30)]);
        assert!(s.drivers.is_empty());
        assert!(s.attack.is_none());
    }

    #[test]
    fn braess_mixed_has_twenty_drivers_and_ten_users() {
        let s = builtin_scenario("braess_mixed").unwrap();
        assert_eq!(s.users, vec![group("A", "B", 10)]);
        assert_eq!(s.drivers.len(), 1);
        assert_eq!(s.drivers[0].count, 20.0);
    }

    #[test]
    fn five_node_attacked_targets_three_five() {
        let s = builtin_scenario("five_node_attacked").unwrap();
        let a = s.attack.unwrap();
        assert_eq!(a.target_edge.as_deref(), Some("3-5"));
        assert_eq!(a.gamma, 10.0);
        assert_eq!(a.profile, AttackProfile::Optimal);
    }

    #[test]
    fn unknown_name_is_rejected() {
        assert!(matches!(
            builtin_scenario("nope"),
            Err(Error::UnknownScenario(_))
        ));
    }

    #[test]
    fn every_builtin_is_valid() {
        for name in BUILTIN_NAMES {
            let s = builtin_scenario(name).unwrap();
            assert!(super::super::validate_scenario(&s).is_empty(), "{name}");
        }
    }
}
