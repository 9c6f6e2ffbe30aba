//! Incentive-compatible recommendations.
//!
//! Two solvers reach the same equilibrium from different directions: [`solve_we`] minimizes the
//! Beckmann potential over OD path flows, and [`solve_rs`] runs round-robin best-response
//! dynamics over individual users. Diagnostics ([`deviation_gap`], [`kkt_residuals`]) certify
//! the result independently of the solver that produced it.

mod kernel;
mod rs;
mod we;

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::OdPair;

pub use kernel::project_simplex;
pub use rs::{
    deviation_gap, od_equilibrium_costs, solve_rs, solve_rs_with_background, user_best_response,
    RsSolution,
};
pub use we::{
    beckmann_potential, certify, kkt_residuals, recommendation_from_we, solve_we, KktReport,
    WeSolution,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    /// Bound on the equilibrium gap.
    pub tolerance: f64,
    /// Iteration cap (gradient steps for the flow solver, sweeps for best response).
    pub max_iter: usize,
    /// Safeguard interval for the spectral step.
    pub step_min: f64,
    pub step_max: f64,
    /// Initial weight of the attacker's quadratic penalty on the target constraint.
    pub penalty_initial: f64,
    /// Factor applied to the penalty weight between stages.
    pub penalty_growth: f64,
    pub penalty_stages: usize,
    /// Projected-descent iterations per penalty stage.
    pub outer_iter: usize,
    /// Forward-difference step, in demand units, for the attacker's gradient.
    pub fd_step: f64,
    /// Independent starts of the attacker's descent.
    pub restarts: usize,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-6,
            max_iter: 100_000,
            step_min: 1e-10,
            step_max: 1e10,
            penalty_initial: 1.0,
            penalty_growth: 10.0,
            penalty_stages: 4,
            outer_iter: 30,
            fd_step: 0.1,
            restarts: 8,
            seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "tolerance must be positive, got {}",
                self.tolerance
            )));
        }
        if self.max_iter < 1 {
            return Err(Error::InvalidArgument("max_iter must be at least 1".into()));
        }
        if !(self.step_min > 0.0 && self.step_min <= self.step_max) {
            return Err(Error::InvalidArgument(
                "step bounds must satisfy 0 < min <= max".into(),
            ));
        }
        if !(self.fd_step > 0.0) {
            return Err(Error::InvalidArgument("fd_step must be positive".into()));
        }
        if !(self.penalty_initial > 0.0 && self.penalty_growth >= 1.0) {
            return Err(Error::InvalidArgument(
                "penalty_initial must be positive and penalty_growth at least 1".into(),
            ));
        }
        Ok(())
    }

    pub(crate) fn kernel(&self, tolerance: f64) -> kernel::KernelSettings {
        kernel::KernelSettings {
            tolerance,
            max_iter: self.max_iter,
            step_min: self.step_min,
            step_max: self.step_max,
        }
    }
}

/// Mixed strategy of one agent over the paths of its OD pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentStrategy {
    pub od: OdPair,
    pub probabilities: Vec<f64>,
}

/// One probability vector per agent.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MixedStrategyProfile {
    pub agents: Vec<AgentStrategy>,
}

impl MixedStrategyProfile {
    /// Gives every agent the vector of its OD pair.
    pub fn from_od_strategies(
        agents: &[OdPair],
        per_od: &BTreeMap<OdPair, Vec<f64>>,
    ) -> Result<Self> {
        agents
            .iter()
            .map(|od| {
                per_od
                    .get(od)
                    .map(|p| AgentStrategy {
                        od: od.clone(),
                        probabilities: p.clone(),
                    })
                    .ok_or_else(|| Error::DimensionMismatch(format!("no strategy for OD {od}")))
            })
            .collect::<Result<Vec<_>>>()
            .map(|agents| Self { agents })
    }

    /// Mean vector per OD pair.
    pub fn per_od(&self) -> BTreeMap<OdPair, Vec<f64>> {
        let mut sums: BTreeMap<OdPair, (Vec<f64>, usize)> = BTreeMap::new();
        for a in &self.agents {
            let entry = sums
                .entry(a.od.clone())
                .or_insert_with(|| (vec![0.0; a.probabilities.len()], 0));
            for (s, p) in entry.0.iter_mut().zip(&a.probabilities) {
                *s += p;
            }
            entry.1 += 1;
        }
        sums.into_iter()
            .map(|(od, (s, n))| (od, s.into_iter().map(|v| v / n as f64).collect()))
            .collect()
    }

    /// Expected path flows per OD: the sum of the agents' vectors.
    pub fn path_flows(&self) -> BTreeMap<OdPair, Vec<f64>> {
        let mut flows: BTreeMap<OdPair, Vec<f64>> = BTreeMap::new();
        for a in &self.agents {
            let entry = flows
                .entry(a.od.clone())
                .or_insert_with(|| vec![0.0; a.probabilities.len()]);
            for (s, p) in entry.iter_mut().zip(&a.probabilities) {
                *s += p;
            }
        }
        flows
    }

    pub fn len(&self) -> usize {
        self.agents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.agents.is_empty()
    }
}

/// Certificate of optimality for the Beckmann program: OD costs, edge prices, path slacks.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KktCertificate {
    pub nu: BTreeMap<OdPair, f64>,
    /// Indexed like `Network::edges`.
    pub lambda: Vec<f64>,
    pub mu: BTreeMap<OdPair, Vec<f64>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TraceRecord {
    pub iter: usize,
    pub potential: f64,
    pub max_gap: f64,
    pub step: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ConvergenceTrace {
    pub records: Vec<TraceRecord>,
    pub converged: bool,
    pub iterations: usize,
    pub final_gap: f64,
}

impl ConvergenceTrace {
    /// Writes `iter,potential,max_gap,step` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["iter", "potential", "max_gap", "step"])?;
        for r in &self.records {
            w.write_record([
                r.iter.to_string(),
                format!("{:.12e}", r.potential),
                format!("{:.12e}", r.max_gap),
                format!("{:.12e}", r.step),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Error unless the run met its tolerance.
    pub fn require_converged(&self) -> Result<()> {
        if self.converged {
            Ok(())
        } else {
            Err(Error::NonConvergence {
                iterations: self.iterations,
                gap: self.final_gap,
            })
        }
    }
}
