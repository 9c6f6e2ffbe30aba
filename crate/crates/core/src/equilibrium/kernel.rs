//! Projected spectral-gradient minimization of the Beckmann potential over path flows.
//!
//! Variables are path flows grouped into blocks (one per OD pair, or one per agent), each
//! constrained to the scaled simplex `{y >= 0, sum y = demand}`. The gradient with respect to a
//! path flow is the path cost at the total load, so stationarity is exactly the Wardrop
//! condition within each block.

use crate::network::{Network, Path};

use super::TraceRecord;

pub(crate) struct Block<'a> {
    pub paths: &'a [Path],
    pub demand: f64,
}

pub(crate) struct KernelSettings {
    pub tolerance: f64,
    pub max_iter: usize,
    pub step_min: f64,
    pub step_max: f64,
}

pub(crate) struct KernelResult {
    pub y: Vec<Vec<f64>>,
    pub converged: bool,
    pub iterations: usize,
    /// Largest block excess cost `sum_s y_s (C_s - min C)` at the returned point.
    pub gap: f64,
}

/// Euclidean projection of `v` onto `{x >= 0, sum x = total}`.
pub fn project_simplex(v: &[f64], total: f64) -> Vec<f64> {
    if total <= 0.0 || v.is_empty() {
        return vec![0.0; v.len()];
    }
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (j, &uj) in u.iter().enumerate() {
        cumsum += uj;
        let t = (cumsum - total) / (j + 1) as f64;
        if uj - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|&x| (x - theta).max(0.0)).collect()
}

fn is_feasible(y: &[f64], total: f64) -> bool {
    y.iter().all(|&x| x >= 0.0) && (y.iter().sum::<f64>() - total).abs() <= 1e-12 * total.max(1.0)
}

struct Problem<'a> {
    network: &'a Network,
    blocks: &'a [Block<'a>],
    background: &'a [f64],
}

impl Problem<'_> {
    fn load(&self, y: &[Vec<f64>]) -> Vec<f64> {
        let mut f = self.background.to_vec();
        self.add_incidence(y, 1.0, &mut f);
        f
    }

    fn add_incidence(&self, y: &[Vec<f64>], scale: f64, out: &mut [f64]) {
        for (block, yb) in self.blocks.iter().zip(y) {
            for (p, &v) in block.paths.iter().zip(yb) {
                if v != 0.0 {
                    for &e in &p.edges {
                        out[e] += scale * v;
                    }
                }
            }
        }
    }

    fn path_costs(&self, load: &[f64]) -> Vec<Vec<f64>> {
        let ec: Vec<f64> = self
            .network
            .edges
            .iter()
            .zip(load)
            .map(|(e, &f)| e.latency(f))
            .collect();
        self.blocks
            .iter()
            .map(|b| {
                b.paths
                    .iter()
                    .map(|p| p.edges.iter().map(|&e| ec[e]).sum())
                    .collect()
            })
            .collect()
    }

    fn potential(&self, load: &[f64]) -> f64 {
        self.network
            .edges
            .iter()
            .zip(load)
            .map(|(e, &f)| e.latency_integral(f))
            .sum()
    }

    /// Derivative of the potential along `dload` at `load + t * dload`.
    fn directional(&self, load: &[f64], dload: &[f64], t: f64) -> f64 {
        self.network
            .edges
            .iter()
            .zip(load.iter().zip(dload))
            .filter(|(_, (_, &d))| d != 0.0)
            .map(|(e, (&f, &d))| e.latency(f + t * d) * d)
            .sum()
    }
}

pub(crate) fn block_gap(y: &[f64], costs: &[f64]) -> f64 {
    let cmin = costs.iter().copied().fold(f64::INFINITY, f64::min);
    y.iter()
        .zip(costs)
        .map(|(&v, &c)| v * (c - cmin))
        .sum::<f64>()
        .max(0.0)
}

fn max_gap(y: &[Vec<f64>], costs: &[Vec<f64>]) -> f64 {
    y.iter()
        .zip(costs)
        .map(|(yb, cb)| block_gap(yb, cb))
        .fold(0.0, f64::max)
}

fn dot(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.iter().zip(y).map(|(u, v)| u * v).sum::<f64>())
        .sum()
}

fn diff(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.iter().zip(y).map(|(u, v)| u - v).collect())
        .collect()
}

/// Minimizes the potential starting from `y0`. A feasible `y0` whose gap is already within
/// tolerance is returned unchanged.
pub(crate) fn minimize(
    network: &Network,
    blocks: &[Block<'_>],
    background: &[f64],
    y0: Vec<Vec<f64>>,
    settings: &KernelSettings,
    mut trace: Option<&mut Vec<TraceRecord>>,
) -> KernelResult {
    let problem = Problem {
        network,
        blocks,
        background,
    };
    let mut y: Vec<Vec<f64>> = blocks
        .iter()
        .zip(y0)
        .map(|(b, yb)| {
            if is_feasible(&yb, b.demand) {
                yb
            } else {
                project_simplex(&yb, b.demand)
            }
        })
        .collect();

    let mut load = problem.load(&y);
    let mut g = problem.path_costs(&load);
    let mut gap = max_gap(&y, &g);

    let spread = g
        .iter()
        .flatten()
        .fold(0.0_f64, |m, &c| m.max(c.abs()))
        .max(1e-12);
    let scale = blocks
        .iter()
        .map(|b| b.demand)
        .fold(0.0, f64::max)
        .max(1e-12);
    let mut alpha = (scale / spread).clamp(settings.step_min, settings.step_max);
    let mut stalls = 0;
    let mut iterations = 0;

    while gap > settings.tolerance && iterations < settings.max_iter {
        let trial: Vec<Vec<f64>> = blocks
            .iter()
            .zip(y.iter().zip(&g))
            .map(|(b, (yb, gb))| {
                // Projection is shift-invariant; centering on the cheapest path keeps large steps exact.
                let cmin = gb.iter().copied().fold(f64::INFINITY, f64::min);
                let v: Vec<f64> = yb
                    .iter()
                    .zip(gb)
                    .map(|(a, c)| a - alpha * (c - cmin))
                    .collect();
                project_simplex(&v, b.demand)
            })
            .collect();
        let d = diff(&trial, &y);
        let mut dload = vec![0.0; load.len()];
        problem.add_incidence(&d, 1.0, &mut dload);

        let slope0 = problem.directional(&load, &dload, 0.0);
        if !(slope0 < 0.0) {
            // No descent along this direction at the current step; widen once, then stop.
            stalls += 1;
            if stalls > 2 || alpha >= settings.step_max {
                break;
            }
            alpha = settings.step_max;
            continue;
        }
        stalls = 0;

        let lambda = if problem.directional(&load, &dload, 1.0) <= 0.0 {
            1.0
        } else {
            let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
            for _ in 0..100 {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                if problem.directional(&load, &dload, mid) <= 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            if lo > 0.0 {
                lo
            } else {
                hi
            }
        };

        let y_new: Vec<Vec<f64>> = blocks
            .iter()
            .zip(y.iter().zip(&d))
            .map(|(b, (yb, db))| {
                let v: Vec<f64> = yb
                    .iter()
                    .zip(db)
                    .map(|(a, s)| (a + lambda * s).max(0.0))
                    .collect();
                if is_feasible(&v, b.demand) {
                    v
                } else {
                    project_simplex(&v, b.demand)
                }
            })
            .collect();
        let load_new = problem.load(&y_new);
        let g_new = problem.path_costs(&load_new);

        let s = diff(&y_new, &y);
        let r = diff(&g_new, &g);
        let sr = dot(&s, &r);
        alpha = if sr > 0.0 {
            (dot(&s, &s) / sr).clamp(settings.step_min, settings.step_max)
        } else {
            settings.step_max
        };

        y = y_new;
        load = load_new;
        g = g_new;
        gap = max_gap(&y, &g);
        iterations += 1;
        if let Some(t) = trace.as_deref_mut() {
            t.push(TraceRecord {
                iter: iterations,
                potential: problem.potential(&load),
                max_gap: gap,
                step: sup_norm(&s),
            });
        }
    }

    KernelResult {
        converged: gap <= settings.tolerance,
        y,
        iterations,
        gap,
    }
}

fn sup_norm(s: &[Vec<f64>]) -> f64 {
    s.iter().flatten().fold(0.0, |m, v| m.max(v.abs()))
}
