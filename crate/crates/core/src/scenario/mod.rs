//! Scenario files, built-in benchmark instances and the end-to-end pipeline.

mod builtin;
mod io;
mod pipeline;
mod suite;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::attack::EdgeOverride;
use crate::behavior::DriverClass;
use crate::equilibrium::SolverConfig;
use crate::network::{Network, OdPair};

pub use builtin::{
    braess_network, builtin_scenario, five_node_network, BRAESS_EPSILON, BUILTIN_NAMES,
};
pub use io::{load_scenario, parse_scenario, save_scenario, scenario_to_json, validate_scenario};
pub use pipeline::{
    compare_reports, independent_routing, run_pipeline, AttackSummary, Comparison, ComparisonRow,
    RunOutcome, RunReport, PARADOX_MARGIN,
};
pub use suite::{run_suite, SuiteResult, SUITE_NAMES};

/// How recommendations are computed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Recommender {
    /// Wardrop equilibrium of the aggregate demand.
    We,
    /// Round-robin best-response dynamics.
    Rs,
    /// No coordination: each OD group drives one free-flow-shortest path, ties resolved
    /// toward the highest total travel time.
    Independent,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttackProfile {
    Optimal,
    Uniform,
    Random,
    Cost,
    DriverOverride,
}

impl AttackProfile {
    pub fn parse(s: &str) -> Option<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_string())).ok()
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Optimal => "optimal",
            Self::Uniform => "uniform",
            Self::Random => "random",
            Self::Cost => "cost",
            Self::DriverOverride => "driver-override",
        }
    }

    /// Profiles that fabricate demand.
    pub fn fabricates_demand(&self) -> bool {
        matches!(self, Self::Optimal | Self::Uniform | Self::Random)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserGroup {
    pub od: OdPair,
    pub count: u32,
}

/// New path-choice vector for one driver class, keyed by path label (`A-C-B`); missing
/// paths get probability zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriverOverride {
    /// Index into the scenario's driver classes.
    pub class: usize,
    pub preferences: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioAttack {
    pub profile: AttackProfile,
    /// Edge id or `tail-head`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_edge: Option<String>,
    #[serde(default)]
    pub gamma: f64,
    /// Empty means the default candidate set.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub candidates: Vec<OdPair>,
    /// Total fake demand for the uniform and random attackers.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<u64>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub edge_overrides: Vec<EdgeOverride>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub driver_overrides: Vec<DriverOverride>,
}

fn default_trials() -> usize {
    200
}

fn default_path_k() -> usize {
    5
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub network: Network,
    #[serde(default)]
    pub users: Vec<UserGroup>,
    #[serde(default)]
    pub drivers: Vec<DriverClass>,
    pub recommender: Recommender,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attack: Option<ScenarioAttack>,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default = "default_path_k")]
    pub path_k: usize,
}

impl Scenario {
    /// One OD entry per user, in group order.
    pub fn user_agents(&self) -> Vec<OdPair> {
        self.users
            .iter()
            .flat_map(|g| std::iter::repeat_n(g.od.clone(), g.count as usize))
            .collect()
    }

    pub fn user_demand(&self) -> crate::network::DemandVector {
        self.users
            .iter()
            .map(|g| (g.od.clone(), f64::from(g.count)))
            .collect()
    }
}
