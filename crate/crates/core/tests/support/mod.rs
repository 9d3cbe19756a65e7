//! Independent oracles shared by the integration tests: random networks,
//! path enumeration, quadratic subset costs, and a row-by-row log joint
//! density. Nothing here calls into the propagation, Shapley or inference
//! code it is used to check.

#![allow(dead_code)]

use bn_shapley_core::data::BatchDataset;
use bn_shapley_core::inference::Prior;
use bn_shapley_core::model::{build_graph, InputFactor, NodeId, NodeKind, ProcessGraph, Theta};
use bn_shapley_core::rng::substream;
use rand::Rng;

pub struct RandomNet {
    pub graph: ProcessGraph,
    pub theta: Theta,
}

/// A random DAG on `nodes` nodes (at least 2): some leading roots, the
/// rest attributes with random earlier parents; the last node is the
/// response and always has a parent.
pub fn random_network(seed: u64, nodes: usize) -> RandomNet {
    assert!(nodes >= 2);
    let mut rng = substream(seed, 1);
    let roots = rng.random_range(1..=(nodes - 1).min(3));
    let decl: Vec<(String, NodeKind)> = (0..nodes)
        .map(|i| {
            let kind = if i < roots {
                NodeKind::Cpp
            } else if i + 1 == nodes {
                NodeKind::Response
            } else {
                NodeKind::Cqa
            };
            (format!("N{i}"), kind)
        })
        .collect();
    let mut edges = Vec::new();
    for j in roots..nodes {
        let mut any = false;
        for i in 0..j {
            if rng.random_bool(0.5) {
                edges.push((format!("N{i}"), format!("N{j}")));
                any = true;
            }
        }
        if !any && j + 1 == nodes {
            edges.push((format!("N{}", j - 1), format!("N{j}")));
        }
    }
    let graph = build_graph(&decl, &edges).expect("forward edges form a DAG");
    let theta = Theta {
        mu: (0..nodes).map(|_| rng.random_range(-5.0..5.0)).collect(),
        v2: (0..nodes).map(|_| rng.random_range(0.1..2.0)).collect(),
        beta: (0..graph.edge_count()).map(|_| rng.random_range(-1.5..1.5)).collect(),
    };
    RandomNet { graph, theta }
}

/// Sum over all directed paths `from -> ... -> to` of the product of the
/// edge coefficients along the path.
pub fn path_gamma(graph: &ProcessGraph, theta: &Theta, from: NodeId, to: NodeId) -> f64 {
    if from == to {
        return 1.0;
    }
    graph
        .child_edges(from)
        .iter()
        .map(|&e| theta.beta[e.0] * path_gamma(graph, theta, graph.edge(e).child, to))
        .sum()
}

/// Factors of a whole network, CPPs first and then residuals, each group
/// in node index order.
pub fn factors_by_index(graph: &ProcessGraph) -> Vec<InputFactor> {
    let mut f: Vec<InputFactor> =
        graph.nodes().filter(|&n| graph.kind(n).is_root()).map(InputFactor::Cpp).collect();
    f.extend(graph.nodes().filter(|&n| !graph.kind(n).is_root()).map(InputFactor::Residual));
    f
}

/// `sum_{i, j in mask} gamma_i gamma_j cov_ij`.
pub fn quad_cost(gamma: &[f64], cov: &[f64], mask: u64) -> f64 {
    let k = gamma.len();
    let mut s = 0.0;
    for i in 0..k {
        if mask >> i & 1 == 0 {
            continue;
        }
        for j in 0..k {
            if mask >> j & 1 == 1 {
                s += gamma[i] * gamma[j] * cov[i * k + j];
            }
        }
    }
    s
}

/// A random symmetric positive-definite `k x k` matrix.
pub fn random_spd(seed: u64, k: usize) -> Vec<f64> {
    let mut rng = substream(seed, 2);
    let a: Vec<f64> = (0..k * k).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut c = vec![0.0; k * k];
    for i in 0..k {
        for j in 0..k {
            let mut s = 0.0;
            for l in 0..k {
                s += a[i * k + l] * a[j * k + l];
            }
            c[i * k + j] = s / k as f64 + if i == j { 0.05 } else { 0.0 };
        }
    }
    // Exact symmetry regardless of summation rounding.
    for i in 0..k {
        for j in 0..i {
            c[i * k + j] = c[j * k + i];
        }
    }
    c
}

fn ln_normal(x: f64, mean: f64, var: f64) -> f64 {
    -0.5 * (2.0 * std::f64::consts::PI * var).ln() - (x - mean) * (x - mean) / (2.0 * var)
}

fn ln_inv_gamma(x: f64, shape: f64, scale: f64) -> f64 {
    shape * scale.ln() - libm::lgamma(shape) - (shape + 1.0) * x.ln() - scale / x
}

/// Log prior plus log likelihood, each observed cell contributing its own
/// structural equation.
pub fn log_joint(graph: &ProcessGraph, prior: &Prior, data: &BatchDataset, theta: &Theta) -> f64 {
    let mut s = 0.0;
    for n in 0..graph.node_count() {
        s += ln_normal(theta.mu[n], prior.mu0[n], prior.sigma0_sq[n]);
        s += ln_inv_gamma(theta.v2[n], prior.kappa0[n] / 2.0, prior.lambda0[n] / 2.0);
    }
    for e in 0..graph.edge_count() {
        s += ln_normal(theta.beta[e], prior.theta0[e], prior.tau0_sq[e]);
    }
    for r in 0..data.len() {
        for node in graph.nodes() {
            let Some(x) = data.value(r, node) else { continue };
            let mut mean = theta.mu[node.0];
            for &e in graph.parent_edges(node) {
                let p = graph.edge(e).parent;
                let xp = data.value(r, p).expect("scopes are parent-closed");
                mean += theta.beta[e.0] * (xp - theta.mu[p.0]);
            }
            s += ln_normal(x, mean, theta.v2[node.0]);
        }
    }
    s
}

/// Node values from explicit factor values by direct substitution in
/// topological order (`inputs[k]` is the root deviation or the residual).
pub fn propagate_inputs(graph: &ProcessGraph, theta: &Theta, inputs: &[f64]) -> Vec<f64> {
    let mut x = vec![0.0; graph.node_count()];
    for &n in graph.topo_order() {
        let mut v = theta.mu[n.0] + inputs[n.0];
        for &e in graph.parent_edges(n) {
            let p = graph.edge(e).parent.0;
            v += theta.beta[e.0] * (x[p] - theta.mu[p]);
        }
        x[n.0] = v;
    }
    x
}

/// A random parent-closed scope: a random seed set closed under ancestors.
pub fn random_closed_scope(graph: &ProcessGraph, seed: u64) -> Vec<NodeId> {
    let mut rng = substream(seed, 3);
    let mut mark = vec![false; graph.node_count()];
    let anchor = NodeId(rng.random_range(0..graph.node_count()));
    for (i, &a) in graph.ancestors_inclusive(anchor).iter().enumerate() {
        mark[i] |= a;
    }
    graph.nodes().filter(|n| mark[n.0]).collect()
}

/// Complete-data conditionals written directly over rows.
pub mod complete_oracle {
    use bn_shapley_core::data::BatchDataset;
    use bn_shapley_core::inference::Prior;
    use bn_shapley_core::model::{EdgeId, NodeId, ProcessGraph, Theta};

    fn resid(g: &ProcessGraph, t: &Theta, row: &[f64], node: NodeId, skip: Option<EdgeId>) -> f64 {
        let mut r = row[node.0] - t.mu[node.0];
        for &e in g.parent_edges(node) {
            if Some(e) != skip {
                let p = g.edge(e).parent.0;
                r -= t.beta[e.0] * (row[p] - t.mu[p]);
            }
        }
        r
    }

    pub fn beta(g: &ProcessGraph, d: &BatchDataset, p: &Prior, t: &Theta, e: EdgeId) -> (f64, f64) {
        let edge = g.edge(e);
        let (mut sxy, mut sxx) = (0.0, 0.0);
        for r in 0..d.len() {
            let row = d.row(r);
            let x = row[edge.parent.0] - t.mu[edge.parent.0];
            sxy += x * resid(g, t, row, edge.child, Some(e));
            sxx += x * x;
        }
        let v = t.v2[edge.child.0];
        let tau = p.tau0_sq[e.0];
        let denom = tau * sxx + v;
        ((tau * sxy + v * p.theta0[e.0]) / denom, tau * v / denom)
    }

    pub fn v2(g: &ProcessGraph, d: &BatchDataset, p: &Prior, t: &Theta, n: NodeId) -> (f64, f64) {
        let ss: f64 = (0..d.len()).map(|r| resid(g, t, d.row(r), n, None).powi(2)).sum();
        ((p.kappa0[n.0] + d.len() as f64) / 2.0, (p.lambda0[n.0] + ss) / 2.0)
    }

    pub fn mu(g: &ProcessGraph, d: &BatchDataset, p: &Prior, t: &Theta, n: NodeId) -> (f64, f64) {
        let i = n.0;
        let rows = d.len() as f64;
        let mut precision = 1.0 / p.sigma0_sq[i] + rows / t.v2[i];
        let mut linear = p.mu0[i] / p.sigma0_sq[i];
        for r in 0..d.len() {
            // Own equation with mu_i moved to the left.
            linear += (resid(g, t, d.row(r), n, None) + t.mu[i]) / t.v2[i];
        }
        for &e in g.child_edges(n) {
            let j = g.edge(e).child;
            let b = t.beta[e.0];
            precision += rows * b * b / t.v2[j.0];
            for r in 0..d.len() {
                let row = d.row(r);
                // Child residual with the mu_i term removed.
                let without = resid(g, t, row, j, None) - b * t.mu[i];
                linear += -b * without / t.v2[j.0];
            }
        }
        (linear / precision, 1.0 / precision)
    }
}
