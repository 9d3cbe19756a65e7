//! Process graphs and their linear-Gaussian parameterisation.
//!
//! A [`ProcessGraph`] is an immutable DAG whose nodes are process parameters
//! (roots), intermediate quality attributes, or the final response. Each
//! non-root node is a linear function of its parents plus independent
//! Gaussian noise; [`Theta`] carries the means, conditional variances and
//! edge coefficients.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EdgeId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum NodeKind {
    /// Controllable root input.
    Cpp,
    /// Intermediate quality attribute.
    Cqa,
    /// Final quality attribute; behaves like a `Cqa` in every computation.
    Response,
}

impl NodeKind {
    pub fn is_root(self) -> bool {
        matches!(self, NodeKind::Cpp)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            NodeKind::Cpp => "cpp",
            NodeKind::Cqa => "cqa",
            NodeKind::Response => "response",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "cpp" | "CPP" => Some(NodeKind::Cpp),
            "cqa" | "CQA" => Some(NodeKind::Cqa),
            "response" | "RESPONSE" => Some(NodeKind::Response),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Edge {
    pub parent: NodeId,
    pub child: NodeId,
}

/// A random source of variation feeding the network.
///
/// `Cpp(k)` is the root value of node `k`, `Residual(k)` the noise term of a
/// non-root node `k`. `Boundary(k)` only appears in sub-graph analyses, where
/// a non-root node whose parents all lie outside the sub-graph acts as an
/// input in its own right.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum InputFactor {
    Cpp(NodeId),
    Residual(NodeId),
    Boundary(NodeId),
}

impl InputFactor {
    pub fn node(self) -> NodeId {
        match self {
            InputFactor::Cpp(n) | InputFactor::Residual(n) | InputFactor::Boundary(n) => n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GraphError {
    #[error("node name is empty")]
    EmptyName,
    #[error("duplicate node name `{0}`")]
    DuplicateName(String),
    #[error("edge references unknown node `{0}`")]
    UnknownName(String),
    #[error("duplicate edge {0} -> {1}")]
    DuplicateEdge(String, String),
    #[error("edge {parent} -> {child} points into a root parameter")]
    EdgeIntoCpp { parent: String, child: String },
    #[error("graph contains a cycle through {}", format_cycle(.0))]
    CycleDetected(Vec<(String, String)>),
}

fn format_cycle(edges: &[(String, String)]) -> String {
    let mut out = String::new();
    for (i, (a, b)) in edges.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        out.push_str(a);
        out.push_str("->");
        out.push_str(b);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProcessGraph {
    names: Vec<String>,
    kinds: Vec<NodeKind>,
    edges: Vec<Edge>,
    parents: Vec<Vec<EdgeId>>,
    children: Vec<Vec<EdgeId>>,
    topo: Vec<NodeId>,
    index: BTreeMap<String, NodeId>,
}

/// Validates a node/edge declaration and freezes it into a [`ProcessGraph`].
///
/// Topological order breaks ties by declaration order, so the order is a
/// pure function of the input.
pub fn build_graph<S: AsRef<str>>(
    nodes: &[(S, NodeKind)],
    edges: &[(S, S)],
) -> Result<ProcessGraph, GraphError> {
    let mut index = BTreeMap::new();
    let mut names = Vec::with_capacity(nodes.len());
    let mut kinds = Vec::with_capacity(nodes.len());
    for (i, (name, kind)) in nodes.iter().enumerate() {
        let name = name.as_ref();
        if name.is_empty() {
            return Err(GraphError::EmptyName);
        }
        if index.insert(name.to_string(), NodeId(i)).is_some() {
            return Err(GraphError::DuplicateName(name.to_string()));
        }
        names.push(name.to_string());
        kinds.push(*kind);
    }

    let lookup = |s: &str| {
        index
            .get(s)
            .copied()
            .ok_or_else(|| GraphError::UnknownName(s.to_string()))
    };
    let mut edge_list = Vec::with_capacity(edges.len());
    let mut seen = BTreeSet::new();
    for (p, c) in edges {
        let parent = lookup(p.as_ref())?;
        let child = lookup(c.as_ref())?;
        if !seen.insert((parent, child)) {
            return Err(GraphError::DuplicateEdge(
                p.as_ref().to_string(),
                c.as_ref().to_string(),
            ));
        }
        if kinds[child.0].is_root() {
            return Err(GraphError::EdgeIntoCpp {
                parent: p.as_ref().to_string(),
                child: c.as_ref().to_string(),
            });
        }
        edge_list.push(Edge { parent, child });
    }

    let n = names.len();
    let mut parents = vec![Vec::new(); n];
    let mut children = vec![Vec::new(); n];
    for (e, edge) in edge_list.iter().enumerate() {
        parents[edge.child.0].push(EdgeId(e));
        children[edge.parent.0].push(EdgeId(e));
    }

    let topo = topological_order(n, &edge_list, &parents, &children).map_err(|cycle| {
        GraphError::CycleDetected(
            cycle
                .into_iter()
                .map(|(a, b)| (names[a.0].clone(), names[b.0].clone()))
                .collect(),
        )
    })?;

    Ok(ProcessGraph {
        names,
        kinds,
        edges: edge_list,
        parents,
        children,
        topo,
        index,
    })
}

/// Kahn's algorithm with a min-heap on declaration index. On failure returns
/// the edges of one concrete cycle.
fn topological_order(
    n: usize,
    edges: &[Edge],
    parents: &[Vec<EdgeId>],
    children: &[Vec<EdgeId>],
) -> Result<Vec<NodeId>, Vec<(NodeId, NodeId)>> {
    let mut indegree: Vec<usize> = parents.iter().map(Vec::len).collect();
    let mut ready: BTreeSet<usize> = (0..n).filter(|&i| indegree[i] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(i) = ready.pop_first() {
        order.push(NodeId(i));
        for e in &children[i] {
            let c = edges[e.0].child.0;
            indegree[c] -= 1;
            if indegree[c] == 0 {
                ready.insert(c);
            }
        }
    }
    if order.len() == n {
        return Ok(order);
    }

    // Every unprocessed node still has an unprocessed parent, so walking
    // parent links inside that set must revisit a node.
    let start = (0..n).find(|&i| indegree[i] > 0).expect("unprocessed node");
    let mut position = vec![usize::MAX; n];
    let mut walk = Vec::new();
    let mut cur = start;
    while position[cur] == usize::MAX {
        position[cur] = walk.len();
        walk.push(cur);
        cur = parents[cur]
            .iter()
            .map(|e| edges[e.0].parent.0)
            .find(|&p| indegree[p] > 0)
            .expect("cyclic node has a cyclic parent");
    }
    let cycle_nodes = &walk[position[cur]..];
    // The walk follows child -> parent; reverse to report parent -> child.
    let mut cycle = Vec::with_capacity(cycle_nodes.len());
    for w in 0..cycle_nodes.len() {
        let child = cycle_nodes[w];
        let parent = if w + 1 < cycle_nodes.len() {
            cycle_nodes[w + 1]
        } else {
            cur
        };
        cycle.push((NodeId(parent), NodeId(child)));
    }
    cycle.reverse();
    Err(cycle)
}

impl ProcessGraph {
    pub fn node_count(&self) -> usize {
        self.names.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.names.len()).map(NodeId)
    }

    pub fn name(&self, node: NodeId) -> &str {
        &self.names[node.0]
    }

    pub fn kind(&self, node: NodeId) -> NodeKind {
        self.kinds[node.0]
    }

    pub fn node_id(&self, name: &str) -> Option<NodeId> {
        self.index.get(name).copied()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, id: EdgeId) -> Edge {
        self.edges[id.0]
    }

    pub fn find_edge(&self, parent: NodeId, child: NodeId) -> Option<EdgeId> {
        self.parents[child.0]
            .iter()
            .copied()
            .find(|e| self.edges[e.0].parent == parent)
    }

    /// Incoming edges of `node`, in declaration order.
    pub fn parent_edges(&self, node: NodeId) -> &[EdgeId] {
        &self.parents[node.0]
    }

    /// Outgoing edges of `node`, in declaration order.
    pub fn child_edges(&self, node: NodeId) -> &[EdgeId] {
        &self.children[node.0]
    }

    pub fn parents(&self, node: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        self.parents[node.0].iter().map(|e| self.edges[e.0].parent)
    }

    pub fn children(&self, node: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        self.children[node.0].iter().map(|e| self.edges[e.0].child)
    }

    pub fn topo_order(&self) -> &[NodeId] {
        &self.topo
    }

    /// Label used for a factor in reports: the node name for roots and
    /// boundary nodes, `e:<name>` for residuals.
    pub fn factor_label(&self, factor: InputFactor) -> String {
        match factor {
            InputFactor::Cpp(n) | InputFactor::Boundary(n) => self.names[n.0].clone(),
            InputFactor::Residual(n) => {
                let mut s = String::from("e:");
                s.push_str(&self.names[n.0]);
                s
            }
        }
    }

    pub fn parse_factor(&self, label: &str) -> Option<InputFactor> {
        if let Some(rest) = label.strip_prefix("e:") {
            let n = self.node_id(rest)?;
            return (!self.kind(n).is_root()).then_some(InputFactor::Residual(n));
        }
        let n = self.node_id(label)?;
        Some(if self.kind(n).is_root() {
            InputFactor::Cpp(n)
        } else {
            InputFactor::Boundary(n)
        })
    }

    /// Nodes that can reach `target` (including `target`).
    pub fn ancestors_inclusive(&self, target: NodeId) -> Vec<bool> {
        let mut mark = vec![false; self.node_count()];
        mark[target.0] = true;
        for &n in self.topo.iter().rev() {
            if mark[n.0] {
                for p in self.parents(n) {
                    mark[p.0] = true;
                }
            }
        }
        mark
    }

    /// Nodes reachable from `source` (including `source`).
    pub fn descendants_inclusive(&self, source: NodeId) -> Vec<bool> {
        let mut mark = vec![false; self.node_count()];
        mark[source.0] = true;
        for &n in &self.topo {
            if mark[n.0] {
                for c in self.children(n) {
                    mark[c.0] = true;
                }
            }
        }
        mark
    }
}

/// Roots in topological order, then one residual per non-root node in
/// topological order.
pub fn input_factors(graph: &ProcessGraph) -> Vec<InputFactor> {
    let topo = graph.topo_order();
    let roots = topo
        .iter()
        .filter(|n| graph.kind(**n).is_root())
        .map(|&n| InputFactor::Cpp(n));
    let residuals = topo
        .iter()
        .filter(|n| !graph.kind(**n).is_root())
        .map(|&n| InputFactor::Residual(n));
    roots.chain(residuals).collect()
}

/// Bayesian network parameters.
///
/// `mu` and `v2` are indexed by node, `beta` by edge. For a root node `v2` is
/// its marginal variance; for any other node it is the variance of its
/// residual.
#[derive(Debug, Clone, PartialEq)]
pub struct Theta {
    pub mu: Vec<f64>,
    pub v2: Vec<f64>,
    pub beta: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CoefficientId {
    Mu(NodeId),
    V2(NodeId),
    Beta(EdgeId),
}

impl CoefficientId {
    pub fn label(self, graph: &ProcessGraph) -> String {
        let mut s = String::new();
        match self {
            CoefficientId::Mu(n) => {
                s.push_str("mu:");
                s.push_str(graph.name(n));
            }
            CoefficientId::V2(n) => {
                s.push_str("v2:");
                s.push_str(graph.name(n));
            }
            CoefficientId::Beta(e) => {
                let edge = graph.edge(e);
                s.push_str("beta:");
                s.push_str(graph.name(edge.parent));
                s.push_str("->");
                s.push_str(graph.name(edge.child));
            }
        }
        s
    }

    pub fn parse(graph: &ProcessGraph, label: &str) -> Option<Self> {
        if let Some(rest) = label.strip_prefix("mu:") {
            return graph.node_id(rest).map(CoefficientId::Mu);
        }
        if let Some(rest) = label.strip_prefix("v2:") {
            return graph.node_id(rest).map(CoefficientId::V2);
        }
        let rest = label.strip_prefix("beta:")?;
        let (p, c) = rest.split_once("->")?;
        graph
            .find_edge(graph.node_id(p)?, graph.node_id(c)?)
            .map(CoefficientId::Beta)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ThetaIssue {
    LengthMismatch { field: &'static str, expected: usize, found: usize },
    NonPositiveVariance(NodeId),
    NonFinite(CoefficientId),
    MissingBeta(NodeId, NodeId),
    ExtraBeta(NodeId, NodeId),
}

impl fmt::Display for ThetaIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ThetaIssue::LengthMismatch { field, expected, found } => {
                write!(f, "{field}: expected {expected} entries, found {found}")
            }
            ThetaIssue::NonPositiveVariance(n) => write!(f, "v2 of node #{} is not positive", n.0),
            ThetaIssue::NonFinite(c) => write!(f, "non-finite coefficient {c:?}"),
            ThetaIssue::MissingBeta(p, c) => write!(f, "missing beta for edge #{} -> #{}", p.0, c.0),
            ThetaIssue::ExtraBeta(p, c) => write!(f, "beta given for non-edge #{} -> #{}", p.0, c.0),
        }
    }
}

impl Theta {
    /// Builds a parameter set from a beta map keyed by `(parent, child)`,
    /// reporting every missing or surplus key.
    pub fn from_beta_map(
        graph: &ProcessGraph,
        mu: Vec<f64>,
        v2: Vec<f64>,
        beta: &BTreeMap<(NodeId, NodeId), f64>,
    ) -> Result<Theta, Vec<ThetaIssue>> {
        let mut issues = Vec::new();
        let mut values = Vec::with_capacity(graph.edge_count());
        for edge in graph.edges() {
            match beta.get(&(edge.parent, edge.child)) {
                Some(&b) => values.push(b),
                None => {
                    issues.push(ThetaIssue::MissingBeta(edge.parent, edge.child));
                    values.push(f64::NAN);
                }
            }
        }
        for &(p, c) in beta.keys() {
            let known = p.0 < graph.node_count()
                && c.0 < graph.node_count()
                && graph.find_edge(p, c).is_some();
            if !known {
                issues.push(ThetaIssue::ExtraBeta(p, c));
            }
        }
        let theta = Theta { mu, v2, beta: values };
        if issues.is_empty() {
            validate_theta(graph, &theta)?;
            Ok(theta)
        } else {
            if let Err(rest) = validate_theta(graph, &theta) {
                issues.extend(
                    rest.into_iter()
                        .filter(|i| !matches!(i, ThetaIssue::NonFinite(CoefficientId::Beta(_)))),
                );
            }
            Err(issues)
        }
    }

    pub fn get(&self, id: CoefficientId) -> f64 {
        match id {
            CoefficientId::Mu(n) => self.mu[n.0],
            CoefficientId::V2(n) => self.v2[n.0],
            CoefficientId::Beta(e) => self.beta[e.0],
        }
    }

    pub fn set(&mut self, id: CoefficientId, value: f64) {
        match id {
            CoefficientId::Mu(n) => self.mu[n.0] = value,
            CoefficientId::V2(n) => self.v2[n.0] = value,
            CoefficientId::Beta(e) => self.beta[e.0] = value,
        }
    }
}

/// All coefficients in storage order: means, variances, then edge betas.
pub fn coefficient_ids(graph: &ProcessGraph) -> Vec<CoefficientId> {
    let n = graph.node_count();
    (0..n)
        .map(|i| CoefficientId::Mu(NodeId(i)))
        .chain((0..n).map(|i| CoefficientId::V2(NodeId(i))))
        .chain((0..graph.edge_count()).map(|e| CoefficientId::Beta(EdgeId(e))))
        .collect()
}

pub fn validate_theta(graph: &ProcessGraph, theta: &Theta) -> Result<(), Vec<ThetaIssue>> {
    let mut issues = Vec::new();
    let n = graph.node_count();
    for (field, len, expected) in [
        ("mu", theta.mu.len(), n),
        ("v2", theta.v2.len(), n),
        ("beta", theta.beta.len(), graph.edge_count()),
    ] {
        if len != expected {
            issues.push(ThetaIssue::LengthMismatch { field, expected, found: len });
        }
    }
    if issues.is_empty() {
        for i in 0..n {
            if !theta.mu[i].is_finite() {
                issues.push(ThetaIssue::NonFinite(CoefficientId::Mu(NodeId(i))));
            }
            let v = theta.v2[i];
            if !v.is_finite() {
                issues.push(ThetaIssue::NonFinite(CoefficientId::V2(NodeId(i))));
            } else if v <= 0.0 {
                issues.push(ThetaIssue::NonPositiveVariance(NodeId(i)));
            }
        }
        for (e, b) in theta.beta.iter().enumerate() {
            if !b.is_finite() {
                issues.push(ThetaIssue::NonFinite(CoefficientId::Beta(EdgeId(e))));
            }
        }
    }
    if issues.is_empty() {
        Ok(())
    } else {
        Err(issues)
    }
}
