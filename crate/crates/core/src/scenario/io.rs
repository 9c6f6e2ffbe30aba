use std::fs;
use std::path::Path;

use serde_json::error::Category;

use crate::error::{Error, Result};
use crate::network::{validate_network, Network, OdPair};

use super::Scenario;

/// Problem found in a parsed scenario, with the identifier used to locate it in the source.
struct Violation {
    anchor: Option<String>,
    message: String,
}

fn first_backticked(s: &str) -> Option<String> {
    let start = s.find('`')? + 1;
    let len = s[start..].find('`')?;
    Some(s[start..start + len].to_string())
}

fn check_od(network: &Network, od: &OdPair, what: &str, out: &mut Vec<Violation>) {
    for end in [&od.origin, &od.destination] {
        if !network.has_node(end) {
            out.push(Violation {
                anchor: Some(end.clone()),
                message: format!("{what} {od} references undeclared node `{end}`"),
            });
        }
    }
    if od.origin == od.destination {
        out.push(Violation {
            anchor: Some(od.origin.clone()),
            message: format!("{what} {od} has identical origin and destination"),
        });
    }
}

fn violations(s: &Scenario) -> Vec<Violation> {
    let mut out: Vec<Violation> = validate_network(&s.network)
        .into_iter()
        .map(|message| Violation {
            anchor: first_backticked(&message),
            message,
        })
        .collect();
    let net = &s.network;
    for g in &s.users {
        check_od(net, &g.od, "user group", &mut out);
    }
    for (i, c) in s.drivers.iter().enumerate() {
        check_od(net, &c.od, "driver class", &mut out);
        if !(c.count >= 0.0) || !c.count.is_finite() {
            out.push(Violation {
                anchor: None,
                message: format!("driver class {i} has invalid count {}", c.count),
            });
        }
        if !c.alpha.is_finite() || !c.beta.is_finite() {
            out.push(Violation {
                anchor: None,
                message: format!("driver class {i} has a non-finite logit parameter"),
            });
        }
    }
    if s.path_k == 0 {
        out.push(Violation {
            anchor: Some("path_k".into()),
            message: "path_k must be at least 1".into(),
        });
    }
    if let Err(e) = s.solver.validate() {
        out.push(Violation {
            anchor: Some("solver".into()),
            message: e.to_string(),
        });
    }
    if let Some(a) = &s.attack {
        if let Some(t) = &a.target_edge {
            if net.resolve_edge(t).is_err() {
                out.push(Violation {
                    anchor: Some(t.clone()),
                    message: format!("attack target `{t}` is not an edge"),
                });
            }
        } else if a.profile.fabricates_demand() {
            out.push(Violation {
                anchor: Some("attack".into()),
                message: format!(
                    "attack profile `{}` needs a target_edge",
                    a.profile.as_str()
                ),
            });
        }
        if !(a.gamma >= 0.0) || !a.gamma.is_finite() {
            out.push(Violation {
                anchor: Some("gamma".into()),
                message: format!("attack gamma {} must be a nonnegative number", a.gamma),
            });
        }
        for od in &a.candidates {
            check_od(net, od, "attack candidate", &mut out);
        }
        for o in &a.edge_overrides {
            if net.resolve_edge(&o.edge).is_err() {
                out.push(Violation {
                    anchor: Some(o.edge.clone()),
                    message: format!("edge override references unknown edge `{}`", o.edge),
                });
            }
        }
        for o in &a.driver_overrides {
            if o.class >= s.drivers.len() {
                out.push(Violation {
                    anchor: Some("driver_overrides".into()),
                    message: format!(
                        "driver override names class {} of {}",
                        o.class,
                        s.drivers.len()
                    ),
                });
            }
            if o.preferences.values().any(|p| !(*p >= 0.0)) {
                out.push(Violation {
                    anchor: Some("driver_overrides".into()),
                    message: format!(
                        "driver override for class {} has a negative probability",
                        o.class
                    ),
                });
            }
        }
    }
    out
}

/// Every problem with a scenario; empty iff it can be run.
pub fn validate_scenario(s: &Scenario) -> Vec<String> {
    violations(s).into_iter().map(|v| v.message).collect()
}

/// 1-based line of the first mention of `"anchor"`, preferring a line that also names `"id"`.
fn locate(text: &str, anchor: &str) -> usize {
    let quoted = format!("\"{anchor}\"");
    let lines: Vec<&str> = text.lines().collect();
    lines
        .iter()
        .position(|l| l.contains(&quoted) && l.contains("\"id\""))
        .or_else(|| lines.iter().position(|l| l.contains(&quoted)))
        .map_or(1, |i| i + 1)
}

/// Parses and validates scenario JSON. Unknown fields are rejected.
pub fn parse_scenario(text: &str) -> Result<Scenario> {
    let scenario: Scenario = serde_json::from_str(text).map_err(|e| match e.classify() {
        Category::Data => Error::Schema {
            line: e.line(),
            message: e.to_string(),
        },
        _ => Error::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        },
    })?;
    if let Some(v) = violations(&scenario).into_iter().next() {
        return Err(Error::Schema {
            line: v.anchor.as_deref().map_or(1, |a| locate(text, a)),
            message: v.message,
        });
    }
    Ok(scenario)
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario> {
    parse_scenario(&fs::read_to_string(path)?)
}

pub fn scenario_to_json(scenario: &Scenario) -> String {
    serde_json::to_string_pretty(scenario).expect("scenario serializes")
}

pub fn save_scenario(scenario: &Scenario, path: impl AsRef<Path>) -> Result<()> {
    let mut text = scenario_to_json(scenario);
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}
