//! Road network with congestion-dependent edge latencies, feasible-path enumeration and
//! flow/cost aggregation.
//!
//! Every edge carries the generalized latency `c(f) = a + b (f / k)^zeta`. The classic BPR
//! form `t (1 + eta (f / k)^zeta)` is the special case `a = t`, `b = t * eta`.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Origin-destination pair. Serialized as `"origin-destination"`; a two-element array
/// `["origin", "destination"]` is also accepted on input.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "OdRepr", into = "String")]
pub struct OdPair {
    pub origin: String,
    pub destination: String,
}

impl OdPair {
    pub fn new(origin: impl Into<String>, destination: impl Into<String>) -> Self {
        Self {
            origin: origin.into(),
            destination: destination.into(),
        }
    }

    /// Parses the `origin-destination` form used on the command line.
    pub fn parse(s: &str) -> Result<Self> {
        match s.split_once('-') {
            Some((o, d)) if !o.is_empty() && !d.is_empty() && !d.contains('-') => {
                Ok(Self::new(o.trim(), d.trim()))
            }
            _ => Err(Error::InvalidArgument(format!(
                "expected `origin-destination`, got `{s}`"
            ))),
        }
    }
}

impl From<(String, String)> for OdPair {
    fn from((origin, destination): (String, String)) -> Self {
        Self {
            origin,
            destination,
        }
    }
}

impl From<OdPair> for (String, String) {
    fn from(od: OdPair) -> Self {
        (od.origin, od.destination)
    }
}

impl From<OdPair> for String {
    fn from(od: OdPair) -> Self {
        od.to_string()
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum OdRepr {
    Joined(String),
    Pair(String, String),
}

impl TryFrom<OdRepr> for OdPair {
    type Error = Error;

    fn try_from(r: OdRepr) -> Result<Self> {
        match r {
            OdRepr::Joined(s) => Self::parse(&s),
            OdRepr::Pair(o, d) => Ok(Self::new(o, d)),
        }
    }
}

impl fmt::Display for OdPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.origin, self.destination)
    }
}

/// A directed road with latency `a + b (f / k)^zeta`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Edge {
    pub id: String,
    pub tail: String,
    pub head: String,
    /// Free-flow travel time.
    pub a: f64,
    /// Congestion coefficient.
    pub b: f64,
    /// Capacity, strictly positive.
    pub k: f64,
    /// Congestion exponent, at least 1.
    pub zeta: f64,
}

impl Edge {
    pub fn new(
        id: impl Into<String>,
        tail: impl Into<String>,
        head: impl Into<String>,
        a: f64,
        b: f64,
        k: f64,
        zeta: f64,
    ) -> Self {
        Self {
            id: id.into(),
            tail: tail.into(),
            head: head.into(),
            a,
            b,
            k,
            zeta,
        }
    }

    /// BPR edge `t (1 + eta (f / k)^zeta)`; the id is `tail-head`.
    pub fn bpr(tail: &str, head: &str, t: f64, eta: f64, k: f64, zeta: f64) -> Self {
        Self::new(format!("{tail}-{head}"), tail, head, t, t * eta, k, zeta)
    }

    /// Latency at `flow`. Negative flow is rejected.
    pub fn cost(&self, flow: f64) -> Result<f64> {
        if flow < 0.0 || flow.is_nan() {
            return Err(Error::NegativeFlow(flow));
        }
        Ok(self.latency(flow))
    }

    /// Latency without the sign check; tiny negative round-off is clamped to zero.
    #[inline]
    pub(crate) fn latency(&self, flow: f64) -> f64 {
        let x = flow.max(0.0) / self.k;
        self.a + self.b * x.powf(self.zeta)
    }

    /// Derivative of the latency with respect to flow.
    #[inline]
    pub fn latency_slope(&self, flow: f64) -> f64 {
        let x = flow.max(0.0) / self.k;
        self.b * self.zeta * x.powf(self.zeta - 1.0) / self.k
    }

    /// `integral_0^flow c(z) dz` in closed form.
    #[inline]
    pub(crate) fn latency_integral(&self, flow: f64) -> f64 {
        let f = flow.max(0.0);
        let x = f / self.k;
        self.a * f + self.b * f * x.powf(self.zeta) / (self.zeta + 1.0)
    }
}

/// Free-standing form of [`Edge::cost`].
pub fn edge_cost(edge: &Edge, flow: f64) -> Result<f64> {
    edge.cost(flow)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Network {
    pub nodes: Vec<String>,
    pub edges: Vec<Edge>,
}

impl Network {
    pub fn new(nodes: Vec<String>, edges: Vec<Edge>) -> Self {
        Self { nodes, edges }
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edge_index(&self, id: &str) -> Option<usize> {
        self.edges.iter().position(|e| e.id == id)
    }

    pub fn edge_between(&self, tail: &str, head: &str) -> Option<usize> {
        self.edges
            .iter()
            .position(|e| e.tail == tail && e.head == head)
    }

    /// Resolves either an edge id or a `tail-head` pair.
    pub fn resolve_edge(&self, key: &str) -> Result<usize> {
        if let Some(i) = self.edge_index(key) {
            return Ok(i);
        }
        if let Some((t, h)) = key.split_once('-') {
            if let Some(i) = self.edge_between(t.trim(), h.trim()) {
                return Ok(i);
            }
        }
        Err(Error::UnknownEdge(key.to_string()))
    }

    pub fn has_node(&self, id: &str) -> bool {
        self.nodes.iter().any(|n| n == id)
    }

    /// Edge costs at the given total load.
    pub fn edge_costs(&self, load: &EdgeLoad) -> Vec<f64> {
        self.edges
            .iter()
            .zip(load.as_slice())
            .map(|(e, &f)| e.latency(f))
            .collect()
    }
}

/// Lists every structural problem with the network; empty iff well-formed.
pub fn validate_network(network: &Network) -> Vec<String> {
    let mut violations = Vec::new();
    let mut seen_nodes = HashSet::new();
    for n in &network.nodes {
        if !seen_nodes.insert(n.as_str()) {
            violations.push(format!("duplicate node `{n}`"));
        }
        if n.is_empty() || n.contains('-') {
            violations.push(format!(
                "node id `{n}` must be nonempty and must not contain `-`"
            ));
        }
    }
    let mut seen_ids = HashSet::new();
    let mut seen_pairs = HashSet::new();
    for e in &network.edges {
        if !seen_ids.insert(e.id.as_str()) {
            violations.push(format!("duplicate edge id `{}`", e.id));
        }
        if !seen_pairs.insert((e.tail.as_str(), e.head.as_str())) {
            violations.push(format!(
                "duplicate edge `{}`: ({}, {}) already present",
                e.id, e.tail, e.head
            ));
        }
        for end in [&e.tail, &e.head] {
            if !seen_nodes.contains(end.as_str()) {
                violations.push(format!(
                    "edge `{}` references undeclared node `{end}`",
                    e.id
                ));
            }
        }
        if e.tail == e.head {
            violations.push(format!("edge `{}` is a self-loop", e.id));
        }
        if !(e.k > 0.0) || !e.k.is_finite() {
            violations.push(format!("edge `{}` has nonpositive capacity {}", e.id, e.k));
        }
        if !(e.a >= 0.0) || !e.a.is_finite() {
            violations.push(format!(
                "edge `{}` has negative free-flow time {}",
                e.id, e.a
            ));
        }
        if !(e.b >= 0.0) || !e.b.is_finite() {
            violations.push(format!(
                "edge `{}` has negative congestion coefficient {}",
                e.id, e.b
            ));
        }
        if !(e.zeta >= 1.0) || !e.zeta.is_finite() {
            violations.push(format!("edge `{}` has exponent {} below 1", e.id, e.zeta));
        }
    }
    violations
}

/// A simple path for one OD pair. `edges` holds indices into `Network::edges`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Path {
    pub od: OdPair,
    pub nodes: Vec<String>,
    pub edges: Vec<usize>,
}

impl Path {
    /// Node sequence joined by `-`, e.g. `1-3-5`.
    pub fn label(&self) -> String {
        self.nodes.join("-")
    }

    pub fn contains_edge(&self, edge: usize) -> bool {
        self.edges.contains(&edge)
    }

    pub fn free_flow_cost(&self, network: &Network) -> f64 {
        self.edges.iter().map(|&e| network.edges[e].a).sum()
    }

    /// Checks chaining, endpoints and simplicity against the network.
    pub fn is_valid(&self, network: &Network) -> bool {
        if self.nodes.len() != self.edges.len() + 1 || self.edges.is_empty() {
            return false;
        }
        if self.nodes.first() != Some(&self.od.origin)
            || self.nodes.last() != Some(&self.od.destination)
        {
            return false;
        }
        let distinct: HashSet<&String> = self.nodes.iter().collect();
        if distinct.len() != self.nodes.len() {
            return false;
        }
        self.edges.iter().enumerate().all(|(i, &e)| {
            network
                .edges
                .get(e)
                .is_some_and(|edge| edge.tail == self.nodes[i] && edge.head == self.nodes[i + 1])
        })
    }
}

/// Enumerated routes per OD pair, in ranking order.
pub type PathSets = BTreeMap<OdPair, Vec<Path>>;

/// Path flows per OD pair, aligned with the OD's entry in [`PathSets`].
pub type PathFlows = BTreeMap<OdPair, Vec<f64>>;

/// Nonnegative demand per OD pair.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DemandVector(pub BTreeMap<OdPair, f64>);

impl DemandVector {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, od: OdPair, demand: f64) -> Self {
        *self.0.entry(od).or_insert(0.0) += demand;
        self
    }

    pub fn get(&self, od: &OdPair) -> f64 {
        self.0.get(od).copied().unwrap_or(0.0)
    }

    pub fn total(&self) -> f64 {
        self.0.values().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&OdPair, f64)> {
        self.0.iter().map(|(k, &v)| (k, v))
    }

    pub fn ods(&self) -> impl Iterator<Item = &OdPair> {
        self.0.keys()
    }
}

impl FromIterator<(OdPair, f64)> for DemandVector {
    fn from_iter<I: IntoIterator<Item = (OdPair, f64)>>(iter: I) -> Self {
        iter.into_iter()
            .fold(Self::new(), |acc, (od, d)| acc.with(od, d))
    }
}

/// Flow per edge, indexed like `Network::edges`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EdgeLoad(pub Vec<f64>);

impl EdgeLoad {
    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, edge: usize) -> f64 {
        self.0[edge]
    }

    pub fn plus(&self, other: &EdgeLoad) -> EdgeLoad {
        EdgeLoad(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn scaled(&self, factor: f64) -> EdgeLoad {
        EdgeLoad(self.0.iter().map(|v| v * factor).collect())
    }

    pub fn max(&self) -> f64 {
        self.0.iter().copied().fold(0.0, f64::max)
    }

    fn add_path(&mut self, path: &Path, amount: f64) {
        for &e in &path.edges {
            self.0[e] += amount;
        }
    }
}

/// Path flows together with the edge loads they induce, plus the fixed background load
/// (non-user drivers) that also enters the edge costs.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FlowLoadPair {
    pub path_flows: PathFlows,
    pub edge_loads: EdgeLoad,
    pub background: EdgeLoad,
}

impl FlowLoadPair {
    /// Load used for costing: own flows plus background.
    pub fn total_load(&self) -> EdgeLoad {
        self.edge_loads.plus(&self.background)
    }

    pub fn demand(&self) -> DemandVector {
        self.path_flows
            .iter()
            .map(|(od, ys)| (od.clone(), ys.iter().sum()))
            .collect()
    }
}

/// Weighted incidence sum `f_e = sum weight * mass * 1{e in path}`.
///
/// Each group is an OD pair, a vector of masses over that OD's paths (probabilities or path
/// flows) and a multiplier (1 for path flows, the agent count for a shared mixed strategy).
pub fn aggregate_edge_flow<'a, I>(
    network: &Network,
    path_sets: &PathSets,
    groups: I,
) -> Result<EdgeLoad>
where
    I: IntoIterator<Item = (&'a OdPair, &'a [f64], f64)>,
{
    let mut load = EdgeLoad::zeros(network.edge_count());
    for (od, masses, weight) in groups {
        let paths = path_sets
            .get(od)
            .ok_or_else(|| Error::DimensionMismatch(format!("no path set for OD {od}")))?;
        if paths.len() != masses.len() {
            return Err(Error::DimensionMismatch(format!(
                "OD {od} has {} paths but {} entries",
                paths.len(),
                masses.len()
            )));
        }
        for (path, &m) in paths.iter().zip(masses) {
            if m != 0.0 {
                load.add_path(path, weight * m);
            }
        }
    }
    Ok(load)
}

/// Edge loads induced by a set of path flows.
pub fn loads_from_path_flows(
    network: &Network,
    path_sets: &PathSets,
    flows: &PathFlows,
) -> Result<EdgeLoad> {
    aggregate_edge_flow(
        network,
        path_sets,
        flows.iter().map(|(od, ys)| (od, ys.as_slice(), 1.0)),
    )
}

/// Sum of edge costs along `path` at `load`.
pub fn path_cost(network: &Network, path: &Path, load: &EdgeLoad) -> Result<f64> {
    if load.len() != network.edge_count() {
        return Err(Error::DimensionMismatch(format!(
            "load covers {} edges, network has {}",
            load.len(),
            network.edge_count()
        )));
    }
    path.edges
        .iter()
        .map(|&e| network.edges[e].cost(load.get(e)))
        .sum()
}

pub(crate) fn path_cost_from_edge_costs(path: &Path, edge_costs: &[f64]) -> f64 {
    path.edges.iter().map(|&e| edge_costs[e]).sum()
}

/// `sum_t sum_s y_ts * C_s` with costs evaluated at own flows plus background.
pub fn total_travel_time(
    network: &Network,
    path_sets: &PathSets,
    pair: &FlowLoadPair,
) -> Result<f64> {
    let costs = network.edge_costs(&pair.total_load());
    let mut total = 0.0;
    for (od, ys) in &pair.path_flows {
        let paths = path_sets
            .get(od)
            .ok_or_else(|| Error::DimensionMismatch(format!("no path set for OD {od}")))?;
        for (p, &y) in paths.iter().zip(ys) {
            total += y * path_cost_from_edge_costs(p, &costs);
        }
    }
    Ok(total)
}

// ---------------------------------------------------------------------------------------------
// k shortest simple paths
// ---------------------------------------------------------------------------------------------

/// Candidate route ordered by free-flow cost, then node sequence.
#[derive(Clone, Debug)]
struct Route {
    cost: f64,
    /// Node ranks; ranks order nodes by id so comparing ranks compares ids.
    nodes: Vec<usize>,
    edges: Vec<usize>,
}

impl PartialEq for Route {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Route {}
impl PartialOrd for Route {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Route {
    fn cmp(&self, other: &Self) -> Ordering {
        self.cost
            .total_cmp(&other.cost)
            .then_with(|| self.nodes.cmp(&other.nodes))
    }
}

struct Graph<'a> {
    network: &'a Network,
    /// `rank[i]` is the position of node `i` when node ids are sorted.
    rank: Vec<usize>,
    by_rank: Vec<usize>,
    /// Outgoing `(edge, head)` per node index.
    out: Vec<Vec<(usize, usize)>>,
}

impl<'a> Graph<'a> {
    fn new(network: &'a Network) -> Result<Self> {
        let index = |id: &str| {
            network
                .nodes
                .iter()
                .position(|n| n == id)
                .ok_or_else(|| Error::UnknownNode(id.to_string()))
        };
        let mut out = vec![Vec::new(); network.nodes.len()];
        for (i, e) in network.edges.iter().enumerate() {
            out[index(&e.tail)?].push((i, index(&e.head)?));
        }
        let mut by_rank: Vec<usize> = (0..network.nodes.len()).collect();
        by_rank.sort_by(|&x, &y| network.nodes[x].cmp(&network.nodes[y]));
        let mut rank = vec![0; by_rank.len()];
        for (r, &i) in by_rank.iter().enumerate() {
            rank[i] = r;
        }
        Ok(Self {
            network,
            rank,
            by_rank,
            out,
        })
    }

    fn node(&self, id: &str) -> Result<usize> {
        self.network
            .nodes
            .iter()
            .position(|n| n == id)
            .ok_or_else(|| Error::UnknownNode(id.to_string()))
    }

    /// Cheapest route from `src` to `dst`, lexicographically smallest among ties.
    fn shortest(
        &self,
        src: usize,
        dst: usize,
        blocked_nodes: &HashSet<usize>,
        blocked_edges: &HashSet<usize>,
    ) -> Option<Route> {
        let mut settled = vec![false; self.out.len()];
        let mut heap = BinaryHeap::new();
        heap.push(std::cmp::Reverse(Route {
            cost: 0.0,
            nodes: vec![self.rank[src]],
            edges: vec![],
        }));
        while let Some(std::cmp::Reverse(route)) = heap.pop() {
            let at = self.by_rank[*route.nodes.last().expect("route has a node")];
            if settled[at] {
                continue;
            }
            settled[at] = true;
            if at == dst {
                return Some(route);
            }
            for &(e, head) in &self.out[at] {
                if settled[head] || blocked_nodes.contains(&head) || blocked_edges.contains(&e) {
                    continue;
                }
                let mut next = route.clone();
                next.cost += self.network.edges[e].a;
                next.nodes.push(self.rank[head]);
                next.edges.push(e);
                heap.push(std::cmp::Reverse(next));
            }
        }
        None
    }

    fn recost(&self, route: &mut Route) {
        route.cost = route.edges.iter().map(|&e| self.network.edges[e].a).sum();
    }

    fn to_path(&self, od: &OdPair, route: &Route) -> Path {
        Path {
            od: od.clone(),
            nodes: route
                .nodes
                .iter()
                .map(|&r| self.network.nodes[self.by_rank[r]].clone())
                .collect(),
            edges: route.edges.clone(),
        }
    }
}

/// Up to `k` simple paths for `od`, ranked by free-flow cost with ties broken by the
/// lexicographic order of node ids (Yen's algorithm).
pub fn enumerate_paths(network: &Network, od: &OdPair, k: usize) -> Result<Vec<Path>> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    let graph = Graph::new(network)?;
    let src = graph.node(&od.origin)?;
    let dst = graph.node(&od.destination)?;
    if src == dst {
        return Err(Error::InvalidArgument(format!(
            "OD {od} has identical origin and destination"
        )));
    }
    let first = graph
        .shortest(src, dst, &HashSet::new(), &HashSet::new())
        .ok_or_else(|| Error::NoPath(od.clone()))?;

    let mut accepted: Vec<Route> = vec![first];
    let mut candidates: BTreeSet<Route> = BTreeSet::new();
    loop {
        let last = accepted.last().expect("nonempty").clone();
        for i in 0..last.edges.len() {
            let root_nodes = &last.nodes[..=i];
            let spur = graph.by_rank[last.nodes[i]];
            let blocked_edges: HashSet<usize> = accepted
                .iter()
                .filter(|p| p.nodes.len() > i + 1 && &p.nodes[..=i] == root_nodes)
                .map(|p| p.edges[i])
                .collect();
            let blocked_nodes: HashSet<usize> =
                root_nodes[..i].iter().map(|&r| graph.by_rank[r]).collect();
            if let Some(spur_route) = graph.shortest(spur, dst, &blocked_nodes, &blocked_edges) {
                let mut route = Route {
                    cost: 0.0,
                    nodes: root_nodes[..i].to_vec(),
                    edges: last.edges[..i].to_vec(),
                };
                route.nodes.extend_from_slice(&spur_route.nodes);
                route.edges.extend_from_slice(&spur_route.edges);
                graph.recost(&mut route);
                if !accepted.iter().any(|p| p.nodes == route.nodes) {
                    candidates.insert(route);
                }
            }
        }
        let Some(next) = candidates.pop_first() else {
            break;
        };
        // Keep extracting through every route tied with the k-th so the tie-break is exact.
        if accepted.len() >= k && next.cost > accepted[k - 1].cost {
            break;
        }
        accepted.push(next);
    }
    accepted.sort();
    accepted.truncate(k);
    Ok(accepted.iter().map(|r| graph.to_path(od, r)).collect())
}

/// Path sets for several OD pairs.
pub fn enumerate_path_sets<'a, I>(network: &Network, ods: I, k: usize) -> Result<PathSets>
where
    I: IntoIterator<Item = &'a OdPair>,
{
    let mut sets = PathSets::new();
    for od in ods {
        if !sets.contains_key(od) {
            sets.insert(od.clone(), enumerate_paths(network, od, k)?);
        }
    }
    Ok(sets)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{braess_network, five_node_network};

    fn labels(paths: &[Path]) -> Vec<String> {
        paths.iter().map(Path::label).collect()
    }

    #[test]
    fn five_node_network_is_well_formed() {
        assert!(validate_network(&five_node_network()).is_empty());
        assert!(validate_network(&braess_network(1e-6)).is_empty());
    }

    #[test]
    fn zero_capacity_is_reported() {
        let mut net = five_node_network();
        net.edges[0].k = 0.0;
        let report = validate_network(&net);
        assert_eq!(report.len(), 1);
        assert!(report[0].contains("capacity"), "{report:?}");
    }

    #[test]
    fn undeclared_endpoint_is_reported() {
        let mut net = five_node_network();
        net.edges
            .push(Edge::new("5-9", "5", "9", 1.0, 0.0, 1.0, 1.0));
        let report = validate_network(&net);
        assert!(
            report.iter().any(|v| v.contains("undeclared node `9`")),
            "{report:?}"
        );
    }

    #[test]
    fn duplicate_pair_is_reported() {
        let mut net = five_node_network();
        net.edges
            .push(Edge::new("dup", "1", "2", 1.0, 0.0, 1.0, 1.0));
        assert!(validate_network(&net)
            .iter()
            .any(|v| v.contains("duplicate edge")));
    }

    #[test]
    fn five_node_paths() {
        let net = five_node_network();
        let p15 = enumerate_paths(&net, &OdPair::new("1", "5"), 3).unwrap();
        let mut got = labels(&p15);
        got.sort();
        assert_eq!(got, vec!["1-2-5", "1-3-4-5", "1-3-5"]);
        // 1-2-5 and 1-3-4-5 tie at free-flow cost 6; node order decides.
        assert_eq!(labels(&p15), vec!["1-2-5", "1-3-4-5", "1-3-5"]);

        let p35 = enumerate_paths(&net, &OdPair::new("3", "5"), 2).unwrap();
        assert_eq!(labels(&p35), vec!["3-4-5", "3-5"]);
        for p in p15.iter().chain(&p35) {
            assert!(p.is_valid(&net));
        }
    }

    #[test]
    fn single_edge_network_has_one_path() {
        let net = Network::new(
            vec!["a".into(), "b".into()],
            vec![Edge::new("a-b", "a", "b", 1.0, 1.0, 1.0, 1.0)],
        );
        let paths = enumerate_paths(&net, &OdPair::new("a", "b"), 5).unwrap();
        assert_eq!(labels(&paths), vec!["a-b"]);
    }

    #[test]
    fn unreachable_destination_is_an_error() {
        let net = five_node_network();
        assert!(matches!(
            enumerate_paths(&net, &OdPair::new("5", "1"), 2),
            Err(Error::NoPath(_))
        ));
    }

    #[test]
    fn braess_paths_ranked_by_free_flow() {
        let net = braess_network(1e-6);
        let paths = enumerate_paths(&net, &OdPair::new("A", "B"), 5).unwrap();
        assert_eq!(labels(&paths), vec!["A-C-D-B", "A-C-B", "A-D-B"]);
    }

    #[test]
    fn yen_matches_brute_force_on_dense_graph() {
        // Complete digraph on 5 nodes with distinct-ish costs, including ties.
        let ids: Vec<String> = ["a", "b", "c", "d", "e"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let mut edges = Vec::new();
        for (i, t) in ids.iter().enumerate() {
            for (j, h) in ids.iter().enumerate() {
                if i != j {
                    let a = ((i * 7 + j * 3) % 4) as f64;
                    edges.push(Edge::new(format!("{t}-{h}"), t, h, a, 0.0, 1.0, 1.0));
                }
            }
        }
        let net = Network::new(ids.clone(), edges);
        let od = OdPair::new("a", "e");

        // Brute force: DFS over all simple paths, sorted by (cost, node sequence).
        fn dfs(
            net: &Network,
            at: &str,
            dst: &str,
            seen: &mut Vec<String>,
            out: &mut Vec<(f64, Vec<String>)>,
            cost: f64,
        ) {
            if at == dst {
                out.push((cost, seen.clone()));
                return;
            }
            for e in &net.edges {
                if e.tail == at && !seen.contains(&e.head) {
                    seen.push(e.head.clone());
                    dfs(net, &e.head, dst, seen, out, cost + e.a);
                    seen.pop();
                }
            }
        }
        let mut all = Vec::new();
        dfs(&net, "a", "e", &mut vec!["a".to_string()], &mut all, 0.0);
        all.sort_by(|x, y| x.0.total_cmp(&y.0).then_with(|| x.1.cmp(&y.1)));

        for k in [1, 3, 7, 12, 20] {
            let got = enumerate_paths(&net, &od, k).unwrap();
            let want: Vec<String> = all.iter().take(k).map(|(_, n)| n.join("-")).collect();
            assert_eq!(labels(&got), want, "k = {k}");
        }
    }

    #[test]
    fn edge_cost_examples() {
        let e = Edge::new("x", "u", "v", 2.0, 0.8, 10.0, 2.0);
        assert_eq!(e.cost(0.0).unwrap(), 2.0);
        assert!((e.cost(10.0).unwrap() - 2.8).abs() < 1e-12);
        let braess = Edge::new("A-C", "A", "C", 0.0, 1.0, 10.0, 1.0);
        assert!((braess.cost(15.0).unwrap() - 1.5).abs() < 1e-12);
        assert!(matches!(e.cost(-1.0), Err(Error::NegativeFlow(_))));
    }

    #[test]
    fn slope_matches_finite_difference() {
        let e = Edge::new("x", "u", "v", 2.0, 0.8, 10.0, 2.5);
        for f in [0.5, 3.0, 17.0] {
            let h = 1e-6;
            let fd = (e.latency(f + h) - e.latency(f - h)) / (2.0 * h);
            assert!((fd - e.latency_slope(f)).abs() < 1e-6 * fd.abs().max(1.0));
        }
    }

    #[test]
    fn aggregation_examples() {
        let net = five_node_network();
        let od = OdPair::new("1", "5");
        let sets = enumerate_path_sets(&net, [&od], 5).unwrap();
        // Probability 1 on 1-3-5 (third in ranking).
        let p = [0.0, 0.0, 1.0];
        let load = aggregate_edge_flow(&net, &sets, [(&od, &p[..], 1.0)]).unwrap();
        for (i, e) in net.edges.iter().enumerate() {
            let want = if e.id == "1-3" || e.id == "3-5" {
                1.0
            } else {
                0.0
            };
            assert_eq!(load.get(i), want, "{}", e.id);
        }
        let empty = aggregate_edge_flow(&net, &sets, std::iter::empty()).unwrap();
        assert!(empty.as_slice().iter().all(|&v| v == 0.0));

        let bad = [1.0];
        assert!(matches!(
            aggregate_edge_flow(&net, &sets, [(&od, &bad[..], 1.0)]),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn braess_uniform_aggregation() {
        let net = braess_network(1e-6);
        let od = OdPair::new("A", "B");
        let sets = enumerate_path_sets(&net, [&od], 5).unwrap();
        let third = [1.0 / 3.0; 3];
        let load = aggregate_edge_flow(&net, &sets, [(&od, &third[..], 30.0)]).unwrap();
        let at = |id: &str| load.get(net.edge_index(id).unwrap());
        for (id, want) in [
            ("A-C", 20.0),
            ("D-B", 20.0),
            ("C-B", 10.0),
            ("A-D", 10.0),
            ("C-D", 10.0),
        ] {
            assert!((at(id) - want).abs() < 1e-12, "{id}: {}", at(id));
        }
    }

    #[test]
    fn path_cost_examples() {
        let net = five_node_network();
        let sets =
            enumerate_path_sets(&net, [&OdPair::new("1", "5"), &OdPair::new("3", "5")], 5).unwrap();
        let mut load = EdgeLoad::zeros(net.edge_count());
        load.0[net.edge_index("3-4").unwrap()] = 20.0;
        load.0[net.edge_index("4-5").unwrap()] = 20.0;
        load.0[net.edge_index("1-3").unwrap()] = 10.0;
        let p345 = &sets[&OdPair::new("3", "5")][0];
        let p1345 = &sets[&OdPair::new("1", "5")][1];
        assert!((path_cost(&net, p345, &load).unwrap() - 10.4).abs() < 1e-12);
        assert!((path_cost(&net, p1345, &load).unwrap() - 13.2).abs() < 1e-12);
        let zero = EdgeLoad::zeros(net.edge_count());
        for p in sets.values().flatten() {
            assert_eq!(path_cost(&net, p, &zero).unwrap(), p.free_flow_cost(&net));
        }
        assert!(path_cost(&net, p345, &EdgeLoad::zeros(2)).is_err());
    }

    #[test]
    fn od_pair_parse_and_display() {
        let od = OdPair::parse("3-5").unwrap();
        assert_eq!(od, OdPair::new("3", "5"));
        assert_eq!(od.to_string(), "3-5");
        assert!(OdPair::parse("35").is_err());
        assert!(OdPair::parse("3-").is_err());
    }
}
