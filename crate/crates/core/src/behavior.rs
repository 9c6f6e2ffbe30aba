//! Route choice of drivers who do not follow recommendations: a one-shot multinomial logit
//! over their paths, or an explicit preference vector, turned into a fixed background load.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{aggregate_edge_flow, EdgeLoad, Network, OdPair, PathSets};

const SIMPLEX_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriverClass {
    pub od: OdPair,
    /// Number of drivers.
    pub count: f64,
    #[serde(default)]
    pub alpha: f64,
    #[serde(default)]
    pub beta: f64,
    /// Explicit path-choice vector; takes precedence over the logit model.
    #[serde(rename = "override", default, skip_serializing_if = "Option::is_none")]
    pub preference_override: Option<Vec<f64>>,
    /// Perceived path costs fed to the logit model; free-flow costs when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_costs: Option<Vec<f64>>,
}

impl DriverClass {
    pub fn logit(od: OdPair, count: f64, alpha: f64, beta: f64) -> Self {
        Self {
            od,
            count,
            alpha,
            beta,
            preference_override: None,
            initial_costs: None,
        }
    }

    pub fn with_override(mut self, p: Vec<f64>) -> Self {
        self.preference_override = Some(p);
        self
    }
}

/// Path-choice vector per driver class, aligned with the class list.
pub type PreferenceProfile = Vec<Vec<f64>>;

/// Softmax of `V_i = -alpha - beta * C_i`, shifted by its maximum.
pub fn mnl_preferences(costs: &[f64], alpha: f64, beta: f64) -> Result<Vec<f64>> {
    if costs.is_empty() {
        return Err(Error::EmptyChoiceSet);
    }
    if let Some(c) = costs.iter().find(|c| !c.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "path cost {c} is not finite"
        )));
    }
    if !alpha.is_finite() || !beta.is_finite() {
        return Err(Error::InvalidArgument(
            "alpha and beta must be finite".into(),
        ));
    }
    let v: Vec<f64> = costs.iter().map(|c| -alpha - beta * c).collect();
    let vmax = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = v.iter().map(|x| (x - vmax).exp()).collect();
    let z: f64 = w.iter().sum();
    Ok(w.into_iter().map(|x| x / z).collect())
}

pub(crate) fn check_simplex(p: &[f64], len: usize, what: &str) -> Result<()> {
    if p.len() != len {
        return Err(Error::DimensionMismatch(format!(
            "{what} has {} entries for {len} paths",
            p.len()
        )));
    }
    if p.iter().any(|&x| !(x >= 0.0)) || (p.iter().sum::<f64>() - 1.0).abs() > SIMPLEX_TOL {
        return Err(Error::InvalidArgument(format!(
            "{what} is not a probability vector: {p:?}"
        )));
    }
    Ok(())
}

/// Choice vector of one class: the override if present, otherwise the logit model evaluated
/// once at the class's initial costs.
pub fn class_preferences(
    network: &Network,
    path_sets: &PathSets,
    class: &DriverClass,
) -> Result<Vec<f64>> {
    let paths = path_sets
        .get(&class.od)
        .ok_or_else(|| Error::UnreachableDemand(class.od.clone()))?;
    if let Some(p) = &class.preference_override {
        check_simplex(
            p,
            paths.len(),
            &format!("override for drivers on {}", class.od),
        )?;
        return Ok(p.clone());
    }
    let costs = match &class.initial_costs {
        Some(c) if c.len() != paths.len() => {
            return Err(Error::DimensionMismatch(format!(
                "initial costs for drivers on {} have {} entries for {} paths",
                class.od,
                c.len(),
                paths.len()
            )))
        }
        Some(c) => c.clone(),
        None => paths.iter().map(|p| p.free_flow_cost(network)).collect(),
    };
    mnl_preferences(&costs, class.alpha, class.beta)
}

pub fn preference_profile(
    network: &Network,
    path_sets: &PathSets,
    classes: &[DriverClass],
) -> Result<PreferenceProfile> {
    classes
        .iter()
        .map(|c| class_preferences(network, path_sets, c))
        .collect()
}

/// Expected driver load `f^o_e = sum_classes count * sum_i p_i 1{e in path_i}`.
pub fn background_flow(
    network: &Network,
    path_sets: &PathSets,
    classes: &[DriverClass],
    profile: &PreferenceProfile,
) -> Result<EdgeLoad> {
    if classes.len() != profile.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} driver classes but {} preference vectors",
            classes.len(),
            profile.len()
        )));
    }
    if let Some(c) = classes.iter().find(|c| !(c.count >= 0.0)) {
        return Err(Error::InvalidArgument(format!(
            "driver count {} on {} is negative",
            c.count, c.od
        )));
    }
    aggregate_edge_flow(
        network,
        path_sets,
        classes
            .iter()
            .zip(profile)
            .map(|(c, p)| (&c.od, p.as_slice(), c.count)),
    )
}
