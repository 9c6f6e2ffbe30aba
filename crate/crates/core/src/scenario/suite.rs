//! Composite benchmark runs that regenerate whole tables at once.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};

use super::{
    builtin_scenario, compare_reports, run_pipeline, AttackProfile, Comparison, Recommender,
    RunReport,
};

pub const SUITE_NAMES: [&str; 2] = ["braess-all", "five-node-all"];

const BRAESS_ROWS: [&str; 4] = [
    "braess_mixed",
    "braess_mixed_attacked",
    "braess_users",
    "braess_users_attacked",
];

#[derive(Clone, Debug, Serialize)]
pub struct SuiteResult {
    pub name: String,
    pub reports: Vec<RunReport>,
    pub comparison: Comparison,
    /// Files written, relative to the output directory.
    pub files: Vec<PathBuf>,
}

/// Runs a composite suite; with `out`, writes its tables and per-run artifacts there.
pub fn run_suite(name: &str, seed: Option<u64>, out: Option<&Path>) -> Result<SuiteResult> {
    let mut files = Vec::new();
    let (reports, comparison) = match name {
        "braess-all" => {
            let reports = BRAESS_ROWS
                .iter()
                .map(|n| {
                    let mut s = builtin_scenario(n)?;
                    if let Some(seed) = seed {
                        s.solver.seed = seed;
                    }
                    run_pipeline(&s)
                })
                .collect::<Result<Vec<_>>>()?;
            let cmp = compare_reports(&reports)?;
            if let Some(dir) = out {
                fs::create_dir_all(dir)?;
                cmp.write_csv(fs::File::create(dir.join("braess_totals.csv"))?)?;
                files.push(PathBuf::from("braess_totals.csv"));
            }
            (reports, cmp)
        }
        "five-node-all" => {
            let mut base = builtin_scenario("five_node")?;
            let mut worst = base.clone();
            worst.name = "five_node_independent".into();
            worst.recommender = Recommender::Independent;
            let mut attacked = builtin_scenario("five_node_attacked")?;
            if let Some(seed) = seed {
                base.solver.seed = seed;
                attacked.solver.seed = seed;
            }
            let mut reports = vec![run_pipeline(&base)?, run_pipeline(&worst)?];
            for profile in [
                AttackProfile::Uniform,
                AttackProfile::Random,
                AttackProfile::Optimal,
            ] {
                let mut s = attacked.clone();
                s.name = format!("five_node_attacked_{}", profile.as_str());
                if let Some(a) = s.attack.as_mut() {
                    a.profile = profile;
                }
                reports.push(run_pipeline(&s)?);
            }
            let cmp = compare_reports(&reports[..2])?;
            if let Some(dir) = out {
                fs::create_dir_all(dir)?;
                cmp.write_csv(fs::File::create(dir.join("worst_case.csv"))?)?;
                write_edge_flow_table(
                    &reports[2..],
                    fs::File::create(dir.join("attacker_edge_flows.csv"))?,
                )?;
                write_strategy_table(
                    &reports[2..],
                    fs::File::create(dir.join("attacker_strategies.csv"))?,
                )?;
                write_attack_table(
                    &reports[2..],
                    fs::File::create(dir.join("attack_summary.csv"))?,
                )?;
                files.extend(
                    [
                        "worst_case.csv",
                        "attacker_edge_flows.csv",
                        "attacker_strategies.csv",
                        "attack_summary.csv",
                    ]
                    .map(PathBuf::from),
                );
            }
            (reports, cmp)
        }
        other => return Err(Error::UnknownScenario(other.to_string())),
    };
    if let Some(dir) = out {
        for r in &reports {
            r.write_artifacts(&dir.join(&r.scenario))?;
            files.push(PathBuf::from(&r.scenario));
        }
    }
    Ok(SuiteResult {
        name: name.to_string(),
        reports,
        comparison,
        files,
    })
}

fn attacker_columns(reports: &[RunReport]) -> Vec<(String, &RunReport)> {
    let mut cols = vec![("no_attack".to_string(), &reports[0])];
    for r in reports {
        let name = r
            .attack
            .as_ref()
            .map_or("none", |a| a.profile.as_str())
            .to_string();
        cols.push((name, r));
    }
    cols
}

/// True-user load per edge without attack and under each attacker (random: trial mean).
fn write_edge_flow_table<W: Write>(reports: &[RunReport], out: W) -> Result<()> {
    let cols = attacker_columns(reports);
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["edge".to_string()];
    header.extend(cols.iter().map(|(n, _)| n.clone()));
    w.write_record(&header)?;
    for (i, id) in reports[0].edges.iter().enumerate() {
        let mut row = vec![id.clone()];
        for (n, r) in &cols {
            let o = if n == "no_attack" {
                &r.baseline
            } else {
                r.headline()
            };
            row.push(format!("{:.9}", o.true_user_loads.get(i)));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// True users' recommendation per OD and path under each attacker.
fn write_strategy_table<W: Write>(reports: &[RunReport], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["attacker", "od", "path", "probability"])?;
    for (n, r) in attacker_columns(reports) {
        let o = if n == "no_attack" {
            &r.baseline
        } else {
            r.headline()
        };
        for (od, p) in &o.strategies {
            for (label, q) in r.path_labels[od].iter().zip(p) {
                w.write_record([n.clone(), od.to_string(), label.clone(), format!("{q:.9}")])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// `attacker,total_fake,achieved_target_flow,gamma,reaches_gamma`.
fn write_attack_table<W: Write>(reports: &[RunReport], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "attacker",
        "total_fake",
        "achieved_target_flow",
        "gamma",
        "reaches_gamma",
    ])?;
    if let Some(a) = reports[0].attack.as_ref() {
        let t = reports[0]
            .edges
            .iter()
            .position(|e| Some(e) == a.target_edge.as_ref());
        let flow = t.map_or(f64::NAN, |t| reports[0].baseline.true_user_loads.get(t));
        w.write_record([
            "no_attack".to_string(),
            "0".to_string(),
            format!("{flow:.9}"),
            a.gamma.to_string(),
            (flow >= a.gamma).to_string(),
        ])?;
    }
    for r in reports {
        if let Some(a) = &r.attack {
            let v = a.achieved_target_flow.unwrap_or(f64::NAN);
            w.write_record([
                a.profile.as_str().to_string(),
                format!("{:.3}", a.total_fake),
                format!("{v:.9}"),
                a.gamma.to_string(),
                (v >= a.gamma).to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
