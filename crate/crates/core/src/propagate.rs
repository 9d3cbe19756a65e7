//! Linear propagation of input variation through the network.
//!
//! Every node is an affine function of the input factors. The coefficient
//! of factor `W` in node `n` is the sum over directed paths from `W`'s node
//! to `n` of the products of edge betas; it is obtained here by dynamic
//! programming over the topological order rather than by path enumeration.

use alloc::vec;
use alloc::vec::Vec;

use crate::data::BatchDataset;
use crate::model::{input_factors, InputFactor, NodeId, ProcessGraph, Theta};
use crate::numeric::compensated_sum;
use crate::rng::{standard_normal, substream};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PropagateError {
    #[error("target node #{} is a root parameter; its only factor is itself", .0.0)]
    TargetIsCpp(NodeId),
}

/// Path weights of every input factor on one target node, in
/// [`input_factors`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaMap {
    pub target: NodeId,
    pub weights: Vec<(InputFactor, f64)>,
}

impl GammaMap {
    pub fn weight(&self, factor: InputFactor) -> Option<f64> {
        self.weights.iter().find(|(f, _)| *f == factor).map(|(_, w)| *w)
    }
}

/// Sensitivity of `target` to a unit shock entering at each node.
///
/// Entry `k` is the path weight from node `k` to `target`; it is zero for
/// nodes that cannot reach the target. A shock "entering" a root is a
/// deviation of its value, at any other node it is the residual.
pub fn adjoint_weights(graph: &ProcessGraph, theta: &Theta, target: NodeId) -> Vec<f64> {
    let mut adj = vec![0.0; graph.node_count()];
    adj[target.0] = 1.0;
    for &n in graph.topo_order().iter().rev() {
        if n == target {
            continue;
        }
        let mut acc = 0.0;
        for &e in graph.child_edges(n) {
            acc += theta.beta[e.0] * adj[graph.edge(e).child.0];
        }
        adj[n.0] = acc;
    }
    adj
}

pub fn gamma_weights(
    graph: &ProcessGraph,
    theta: &Theta,
    target: NodeId,
) -> Result<GammaMap, PropagateError> {
    if graph.kind(target).is_root() {
        return Err(PropagateError::TargetIsCpp(target));
    }
    let adj = adjoint_weights(graph, theta, target);
    let weights = input_factors(graph)
        .into_iter()
        .map(|f| (f, adj[f.node().0]))
        .collect();
    Ok(GammaMap { target, weights })
}

/// Dense path-weight matrix `g[k][n]`: effect on node `n` of a unit shock
/// entering at node `k`, filled in topological order.
pub fn gamma_matrix(graph: &ProcessGraph, theta: &Theta) -> Vec<Vec<f64>> {
    let n = graph.node_count();
    let mut g = vec![vec![0.0; n]; n];
    for &node in graph.topo_order() {
        g[node.0][node.0] = 1.0;
        for &e in graph.parent_edges(node) {
            let p = graph.edge(e).parent.0;
            let b = theta.beta[e.0];
            for row in g.iter_mut() {
                row[node.0] += b * row[p];
            }
        }
    }
    g
}

/// `target = intercept + sum_k gamma_k * W_k` with root factors centred at
/// their means and residuals already zero-mean.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearRepresentation {
    pub intercept: f64,
    pub gamma: GammaMap,
}

impl LinearRepresentation {
    /// `inputs[k]` is the factor value entering at node `k`: the deviation
    /// from the mean for a root, the residual otherwise.
    pub fn evaluate(&self, inputs: &[f64]) -> f64 {
        self.intercept
            + compensated_sum(self.gamma.weights.iter().map(|(f, w)| w * inputs[f.node().0]))
    }
}

pub fn linear_representation(
    graph: &ProcessGraph,
    theta: &Theta,
    target: NodeId,
) -> Result<LinearRepresentation, PropagateError> {
    Ok(LinearRepresentation {
        intercept: theta.mu[target.0],
        gamma: gamma_weights(graph, theta, target)?,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeMoments {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
}

pub fn node_moments(graph: &ProcessGraph, theta: &Theta) -> NodeMoments {
    let g = gamma_matrix(graph, theta);
    let n = graph.node_count();
    let variance = (0..n)
        .map(|t| compensated_sum((0..n).map(|k| g[k][t] * g[k][t] * theta.v2[k])))
        .collect();
    NodeMoments { mean: theta.mu.clone(), variance }
}

/// Variance of a single node via its adjoint; cheaper than
/// [`node_moments`] when only one node is needed.
pub fn node_variance(graph: &ProcessGraph, theta: &Theta, target: NodeId) -> f64 {
    let adj = adjoint_weights(graph, theta, target);
    compensated_sum(adj.iter().zip(&theta.v2).map(|(a, v)| a * a * v))
}

pub fn node_covariance(graph: &ProcessGraph, theta: &Theta, a: NodeId, b: NodeId) -> f64 {
    let ga = adjoint_weights(graph, theta, a);
    let gb = adjoint_weights(graph, theta, b);
    compensated_sum((0..graph.node_count()).map(|k| ga[k] * gb[k] * theta.v2[k]))
}

/// Covariance matrix of `nodes` (row-major).
pub fn covariance_of(graph: &ProcessGraph, theta: &Theta, nodes: &[NodeId]) -> Vec<f64> {
    let adj: Vec<Vec<f64>> = nodes.iter().map(|&n| adjoint_weights(graph, theta, n)).collect();
    let k = nodes.len();
    let mut cov = vec![0.0; k * k];
    for a in 0..k {
        for b in a..k {
            let c = compensated_sum(
                (0..graph.node_count()).map(|i| adj[a][i] * adj[b][i] * theta.v2[i]),
            );
            cov[a * k + b] = c;
            cov[b * k + a] = c;
        }
    }
    cov
}

/// Draws one batch in topological order. `inputs` receives the factor
/// value entering at each node (root deviation or residual).
pub fn sample_batch<R: rand::Rng + ?Sized>(
    graph: &ProcessGraph,
    theta: &Theta,
    rng: &mut R,
    values: &mut [f64],
    inputs: &mut [f64],
) {
    for &n in graph.topo_order() {
        let shock = libm::sqrt(theta.v2[n.0]) * standard_normal(rng);
        inputs[n.0] = shock;
        let mut x = theta.mu[n.0] + shock;
        for &e in graph.parent_edges(n) {
            let p = graph.edge(e).parent.0;
            x += theta.beta[e.0] * (values[p] - theta.mu[p]);
        }
        values[n.0] = x;
    }
}

/// `rows` complete batches. Row `r` uses stream `r` of `seed`, so any
/// prefix of the output is reproducible independently of the row count.
pub fn forward_sample(graph: &ProcessGraph, theta: &Theta, rows: usize, seed: u64) -> BatchDataset {
    forward_sample_range(graph, theta, 0..rows, seed)
}

pub fn forward_sample_range(
    graph: &ProcessGraph,
    theta: &Theta,
    rows: core::ops::Range<usize>,
    seed: u64,
) -> BatchDataset {
    let n = graph.node_count();
    let mut data = BatchDataset::new(n);
    let mut values = vec![0.0; n];
    let mut inputs = vec![0.0; n];
    for r in rows {
        let mut rng = substream(seed, r as u64);
        sample_batch(graph, theta, &mut rng, &mut values, &mut inputs);
        data.push_complete(&values).expect("sampled values are finite");
    }
    data
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_graph, NodeKind};

    fn five_node() -> (ProcessGraph, Theta) {
        let g = build_graph(
            &[
                ("X1", NodeKind::Cpp),
                ("X2", NodeKind::Cpp),
                ("X3", NodeKind::Cpp),
                ("X6", NodeKind::Cqa),
                ("X7", NodeKind::Response),
            ],
            &[("X1", "X6"), ("X2", "X6"), ("X6", "X7"), ("X3", "X7")],
        )
        .unwrap();
        let theta = Theta {
            mu: vec![1.0, 2.0, 3.0, 4.0, 5.0],
            v2: vec![0.5, 1.5, 2.0, 0.3, 0.7],
            beta: vec![0.8, -1.2, 1.7, 0.4],
        };
        (g, theta)
    }

    #[test]
    fn fermentation_gamma() {
        let (g, t) = five_node();
        let gm = gamma_weights(&g, &t, NodeId(4)).unwrap();
        let w: Vec<f64> = gm.weights.iter().map(|x| x.1).collect();
        assert_eq!(w, [0.8 * 1.7, -1.2 * 1.7, 0.4, 1.7, 1.0]);
    }

    #[test]
    fn covariance_parent_child() {
        let (g, t) = five_node();
        let m = node_moments(&g, &t);
        let c = node_covariance(&g, &t, NodeId(3), NodeId(4));
        assert!((c - 1.7 * m.variance[3]).abs() < 1e-14);
    }

    #[test]
    fn root_target_rejected() {
        let (g, t) = five_node();
        assert_eq!(gamma_weights(&g, &t, NodeId(0)), Err(PropagateError::TargetIsCpp(NodeId(0))));
    }

    #[test]
    fn degenerate_variance_pins_rows() {
        let (g, mut t) = five_node();
        t.v2 = vec![1e-12; 5];
        let d = forward_sample(&g, &t, 50, 3);
        for r in 0..d.len() {
            for (x, m) in d.row(r).iter().zip(&t.mu) {
                assert!((x - m).abs() < 1e-4);
            }
        }
    }

    #[test]
    fn rows_reproducible_by_prefix() {
        let (g, t) = five_node();
        let a = forward_sample(&g, &t, 10, 99);
        let b = forward_sample_range(&g, &t, 5..10, 99);
        assert_eq!(a.row(7), b.row(2));
    }
}
