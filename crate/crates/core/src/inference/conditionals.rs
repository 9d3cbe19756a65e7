//! Full conditional posteriors of the conjugate model.
//!
//! Each conditional sums contributions over the scope groups that observe
//! the relevant node, so complete and partially observed batches share one
//! code path. A coefficient whose node no row observes gets its prior back.

use crate::inference::prior::Prior;
use crate::inference::stats::SufficientStats;
use crate::model::{EdgeId, NodeId, ProcessGraph, Theta};
use crate::numeric::CompensatedSum;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalConditional {
    pub mean: f64,
    pub variance: f64,
}

impl NormalConditional {
    pub fn ln_density(&self, x: f64) -> f64 {
        let d = x - self.mean;
        -0.5 * libm::log(2.0 * core::f64::consts::PI * self.variance) - d * d / (2.0 * self.variance)
    }
}

/// Inverse-gamma with density proportional to `x^(-shape - 1) exp(-scale / x)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InvGammaConditional {
    pub shape: f64,
    pub scale: f64,
}

impl InvGammaConditional {
    /// In the `(kappa, lambda)` parameterisation: shape `kappa / 2`, scale
    /// `lambda / 2`.
    pub fn from_kappa_lambda(kappa: f64, lambda: f64) -> Self {
        InvGammaConditional { shape: kappa / 2.0, scale: lambda / 2.0 }
    }

    pub fn ln_density(&self, x: f64) -> f64 {
        self.shape * libm::log(self.scale) - libm::lgamma(self.shape)
            - (self.shape + 1.0) * libm::log(x)
            - self.scale / x
    }
}

/// Conditional of the beta on `edge` given everything else.
pub fn cond_post_beta(
    graph: &ProcessGraph,
    stats: &SufficientStats,
    prior: &Prior,
    theta: &Theta,
    edge: EdgeId,
) -> NormalConditional {
    let e = graph.edge(edge);
    let (i, j) = (e.parent.0, e.child.0);
    let mut cross = CompensatedSum::default();
    let mut square = CompensatedSum::default();
    for g in stats.groups_observing(e.child) {
        cross.add(g.centred_cross(i, j, &theta.mu));
        for &other in graph.parent_edges(e.child) {
            if other != edge {
                let k = graph.edge(other).parent.0;
                cross.add(-theta.beta[other.0] * g.centred_cross(i, k, &theta.mu));
            }
        }
        square.add(g.centred_cross(i, i, &theta.mu));
    }
    let t0 = prior.tau0_sq[edge.0];
    let v = theta.v2[j];
    let denom = t0 * square.value() + v;
    NormalConditional {
        mean: (t0 * cross.value() + v * prior.theta0[edge.0]) / denom,
        variance: t0 * v / denom,
    }
}

/// Sum over one group of squared structural residuals of `node`.
fn residual_square_sum(
    graph: &ProcessGraph,
    group: &crate::inference::stats::ScopeStats,
    theta: &Theta,
    node: NodeId,
) -> f64 {
    let i = node.0;
    let mu = &theta.mu;
    let mut acc = CompensatedSum::default();
    acc.add(group.centred_cross(i, i, mu));
    let parents = graph.parent_edges(node);
    for (a, &ea) in parents.iter().enumerate() {
        let k = graph.edge(ea).parent.0;
        let bk = theta.beta[ea.0];
        acc.add(-2.0 * bk * group.centred_cross(i, k, mu));
        acc.add(bk * bk * group.centred_cross(k, k, mu));
        for &eb in &parents[a + 1..] {
            let l = graph.edge(eb).parent.0;
            acc.add(2.0 * bk * theta.beta[eb.0] * group.centred_cross(k, l, mu));
        }
    }
    // A sum of squares; only rounding can push it below zero.
    acc.value().max(0.0)
}

/// Conditional of the variance of `node` (marginal for a root, residual
/// otherwise) given everything else.
pub fn cond_post_v2(
    graph: &ProcessGraph,
    stats: &SufficientStats,
    prior: &Prior,
    theta: &Theta,
    node: NodeId,
) -> InvGammaConditional {
    let mut ss = CompensatedSum::default();
    for g in stats.groups_observing(node) {
        ss.add(residual_square_sum(graph, g, theta, node));
    }
    InvGammaConditional::from_kappa_lambda(
        prior.kappa0[node.0] + stats.counts[node.0] as f64,
        prior.lambda0[node.0] + ss.value(),
    )
}

/// Conditional of the mean of `node` given everything else. Rows observing
/// the node contribute through its own equation, rows observing a child
/// through the child's equation.
pub fn cond_post_mu(
    graph: &ProcessGraph,
    stats: &SufficientStats,
    prior: &Prior,
    theta: &Theta,
    node: NodeId,
) -> NormalConditional {
    let i = node.0;
    let mu = &theta.mu;
    let vi = theta.v2[i];
    let s0 = prior.sigma0_sq[i];

    let mut precision = CompensatedSum::default();
    precision.add(1.0 / s0);
    precision.add(stats.counts[i] as f64 / vi);
    let mut linear = CompensatedSum::default();
    linear.add(prior.mu0[i] / s0);

    // Own equation: a = x_i - sum_k beta_ki (x_k - mu_k).
    for g in stats.groups_observing(node) {
        let mut a = g.raw_sum(i);
        for &e in graph.parent_edges(node) {
            a -= theta.beta[e.0] * g.centred_sum(graph.edge(e).parent.0, mu);
        }
        linear.add(a / vi);
    }

    // Child equations: c = beta_ij x_i - (x_j - mu_j)
    //                      + sum_{k != i} beta_kj (x_k - mu_k).
    for &e in graph.child_edges(node) {
        let child = graph.edge(e).child;
        let j = child.0;
        let b = theta.beta[e.0];
        let vj = theta.v2[j];
        precision.add(stats.counts[j] as f64 * b * b / vj);
        for g in stats.groups_observing(child) {
            let mut c = b * g.raw_sum(i) - g.centred_sum(j, mu);
            for &other in graph.parent_edges(child) {
                if other != e {
                    c += theta.beta[other.0] * g.centred_sum(graph.edge(other).parent.0, mu);
                }
            }
            linear.add(b * c / vj);
        }
    }
    let variance = 1.0 / precision.value();
    NormalConditional { mean: variance * linear.value(), variance }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::BatchDataset;
    use crate::inference::prior::{prior_with, PriorSettings};
    use crate::model::{build_graph, NodeKind};
    use alloc::vec;

    #[test]
    fn beta_small_example() {
        let g = build_graph(&[("A", NodeKind::Cpp), ("B", NodeKind::Cqa)], &[("A", "B")]).unwrap();
        let mut d = BatchDataset::new(2);
        for (a, b) in [(1.0, 2.0), (1.0, 2.0), (-1.0, -2.0), (-1.0, -2.0)] {
            d.push_complete(&[a, b]).unwrap();
        }
        let stats = SufficientStats::from_dataset(&d);
        let settings = PriorSettings { tau0_sq: 1.0, ..PriorSettings::default() };
        let prior = prior_with(&g, None, settings).unwrap();
        let theta = Theta { mu: vec![0.0, 0.0], v2: vec![1.0, 1.0], beta: vec![0.0] };
        let post = cond_post_beta(&g, &stats, &prior, &theta, EdgeId(0));
        assert!((post.mean - 1.6).abs() < 1e-14);
        assert!((post.variance - 0.2).abs() < 1e-14);
    }

    #[test]
    fn mean_of_isolated_node() {
        let g = build_graph(&[("A", NodeKind::Cpp)], &[] as &[(&str, &str)]).unwrap();
        let mut d = BatchDataset::new(1);
        for x in [1.0, 3.0, 2.0, 2.0] {
            d.push_complete(&[x]).unwrap();
        }
        let stats = SufficientStats::from_dataset(&d);
        let settings = PriorSettings { sigma0_sq: 1.0, ..PriorSettings::default() };
        let prior = prior_with(&g, None, settings).unwrap();
        let theta = Theta { mu: vec![0.0], v2: vec![1.0], beta: vec![] };
        let post = cond_post_mu(&g, &stats, &prior, &theta, NodeId(0));
        assert!((post.mean - 1.6).abs() < 1e-14);
        assert!((post.variance - 0.2).abs() < 1e-14);
    }

    #[test]
    fn unobserved_node_returns_prior() {
        let g = build_graph(&[("A", NodeKind::Cpp), ("B", NodeKind::Cqa)], &[("A", "B")]).unwrap();
        let mut d = BatchDataset::new(2);
        d.push_partial(&g, &[Some(1.0), None]).unwrap();
        let stats = SufficientStats::from_dataset(&d);
        let prior = prior_with(&g, None, PriorSettings::default()).unwrap();
        let theta = Theta { mu: vec![0.0, 0.0], v2: vec![1.0, 1.0], beta: vec![0.5] };
        let b = cond_post_beta(&g, &stats, &prior, &theta, EdgeId(0));
        assert!((b.mean - prior.theta0[0]).abs() < 1e-15);
        assert!((b.variance - prior.tau0_sq[0]).abs() < 1e-6);
        let v = cond_post_v2(&g, &stats, &prior, &theta, NodeId(1));
        assert_eq!(v, InvGammaConditional::from_kappa_lambda(0.02, 0.02));
    }
}
