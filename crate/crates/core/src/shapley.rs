//! Shapley attribution of an output's variance to the input factors.
//!
//! In a linear network the remaining-variance cost of a coalition `J` is the
//! variance of `sum_{k in J} gamma_k W_k`, a quadratic form in the path
//! weights. Its Shapley value has the closed form
//! `Sh_k = gamma_k * sum_l gamma_l Cov(W_k, W_l)`, which [`sv_closed_form`]
//! evaluates directly; [`sv_bruteforce`] enumerates coalitions and serves as
//! the oracle.

use alloc::vec;
use alloc::vec::Vec;

use crate::data::BatchDataset;
use crate::model::{input_factors, InputFactor, NodeId, ProcessGraph, Theta};
use crate::numeric::{compensated_sum, symmetric_eigenvalues, CompensatedSum};
use crate::propagate::{adjoint_weights, covariance_of};

/// Largest factor count [`sv_bruteforce`] accepts.
pub const BRUTEFORCE_MAX_FACTORS: usize = 20;

/// Smallest eigenvalue tolerated by the positive-semidefinite check.
pub const PSD_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ShapleyError {
    #[error("output node #{} is a root parameter", .0.0)]
    OutputIsCpp(NodeId),
    #[error("factor {0:?} is not an input of this analysis")]
    UnknownFactor(InputFactor),
    #[error("{found} factors exceed the brute-force limit of {max}")]
    TooManyFactors { found: usize, max: usize },
    #[error("covariance matrix has dimension {found}, expected {expected}")]
    CovarianceDimension { expected: usize, found: usize },
    #[error(transparent)]
    Covariance(#[from] CovarianceError),
    #[error("output node #{} is not in the sub-graph", .0.0)]
    OutputNotInSubgraph(NodeId),
    #[error("node #{} has parents both inside and outside the sub-graph", .0.0)]
    PartialParents(NodeId),
    #[error("fewer than two rows observe every boundary node")]
    InsufficientData,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CovarianceError {
    #[error("expected {expected} entries, found {found}")]
    WrongSize { expected: usize, found: usize },
    #[error("entry ({0}, {1}) differs from its transpose")]
    NotSymmetric(usize, usize),
    #[error("diagonal entry {0} is not positive")]
    NonPositiveDiagonal(usize),
    #[error("smallest eigenvalue {0} is negative")]
    NotPositiveSemidefinite(f64),
}

/// Validated symmetric positive-semidefinite matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl CovarianceMatrix {
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self, CovarianceError> {
        if data.len() != dim * dim {
            return Err(CovarianceError::WrongSize { expected: dim * dim, found: data.len() });
        }
        let scale = data.iter().fold(0.0f64, |m, v| m.max(libm::fabs(*v)));
        for i in 0..dim {
            if !(data[i * dim + i] > 0.0) {
                return Err(CovarianceError::NonPositiveDiagonal(i));
            }
            for j in (i + 1)..dim {
                if libm::fabs(data[i * dim + j] - data[j * dim + i]) > 1e-12 * scale {
                    return Err(CovarianceError::NotSymmetric(i, j));
                }
            }
        }
        let min = symmetric_eigenvalues(&data, dim)[0];
        if min < -PSD_TOLERANCE {
            return Err(CovarianceError::NotPositiveSemidefinite(min));
        }
        Ok(CovarianceMatrix { dim, data })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

/// How the joint distribution of the input factors is specified.
#[derive(Debug, Clone, PartialEq)]
pub enum InputCovariance {
    /// Diagonal, from the factor variances in theta.
    Independent,
    /// Implied by the network. Full-graph factors are independent by
    /// construction; for sub-graphs the boundary nodes pick up their
    /// propagated covariance.
    ModelPropagated,
    /// Explicit matrix in [`input_factors`] order.
    UserSupplied(CovarianceMatrix),
}

/// Where the covariances used by a report came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CovarianceSource {
    Independent,
    ModelPropagated,
    UserSupplied,
    SampleEstimate,
}

impl CovarianceSource {
    pub fn as_str(self) -> &'static str {
        match self {
            CovarianceSource::Independent => "independent",
            CovarianceSource::ModelPropagated => "model",
            CovarianceSource::UserSupplied => "user",
            CovarianceSource::SampleEstimate => "sample",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "independent" => Some(CovarianceSource::Independent),
            "model" => Some(CovarianceSource::ModelPropagated),
            "user" => Some(CovarianceSource::UserSupplied),
            "sample" => Some(CovarianceSource::SampleEstimate),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvEntry {
    pub factor: InputFactor,
    pub shapley: f64,
    pub criticality: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvReport {
    pub output: NodeId,
    pub total_variance: f64,
    pub covariance: CovarianceSource,
    pub entries: Vec<SvEntry>,
}

impl SvReport {
    pub fn entry(&self, factor: InputFactor) -> Option<&SvEntry> {
        self.entries.iter().find(|e| e.factor == factor)
    }

    pub fn shapley_sum(&self) -> f64 {
        compensated_sum(self.entries.iter().map(|e| e.shapley))
    }
}

pub fn criticality(report: &SvReport, factor: InputFactor) -> Result<f64, ShapleyError> {
    report
        .entry(factor)
        .map(|e| e.criticality)
        .ok_or(ShapleyError::UnknownFactor(factor))
}

/// The variance game on one output: factors, their path weights and their
/// joint covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct VarianceGame {
    pub output: NodeId,
    pub factors: Vec<InputFactor>,
    pub gamma: Vec<f64>,
    /// Row-major `factors.len()` square matrix.
    pub covariance: Vec<f64>,
    pub source: CovarianceSource,
}

impl VarianceGame {
    pub fn full_graph(
        graph: &ProcessGraph,
        theta: &Theta,
        output: NodeId,
        cov: &InputCovariance,
    ) -> Result<Self, ShapleyError> {
        if graph.kind(output).is_root() {
            return Err(ShapleyError::OutputIsCpp(output));
        }
        let factors = input_factors(graph);
        let adj = adjoint_weights(graph, theta, output);
        let gamma: Vec<f64> = factors.iter().map(|f| adj[f.node().0]).collect();
        let k = factors.len();
        let (covariance, source) = match cov {
            InputCovariance::Independent | InputCovariance::ModelPropagated => {
                let mut c = vec![0.0; k * k];
                for (i, f) in factors.iter().enumerate() {
                    c[i * k + i] = theta.v2[f.node().0];
                }
                let source = if matches!(cov, InputCovariance::Independent) {
                    CovarianceSource::Independent
                } else {
                    CovarianceSource::ModelPropagated
                };
                (c, source)
            }
            InputCovariance::UserSupplied(m) => {
                if m.dim() != k {
                    return Err(ShapleyError::CovarianceDimension { expected: k, found: m.dim() });
                }
                (m.as_slice().to_vec(), CovarianceSource::UserSupplied)
            }
        };
        Ok(VarianceGame { output, factors, gamma, covariance, source })
    }

    /// The game restricted to `subgraph`. Roots inside it, nodes whose
    /// parents all lie outside it (the boundary) and residuals of the
    /// remaining nodes are the inputs; boundary nodes come first.
    pub fn subgraph(
        graph: &ProcessGraph,
        theta: &Theta,
        subgraph: &[NodeId],
        output: NodeId,
        boundary: BoundaryCovariance<'_>,
    ) -> Result<Self, ShapleyError> {
        let mut inside = vec![false; graph.node_count()];
        for &n in subgraph {
            inside[n.0] = true;
        }
        if !inside[output.0] {
            return Err(ShapleyError::OutputNotInSubgraph(output));
        }
        if graph.kind(output).is_root() {
            return Err(ShapleyError::OutputIsCpp(output));
        }
        let mut boundary_nodes = Vec::new();
        let mut roots = Vec::new();
        let mut internal = Vec::new();
        for &n in graph.topo_order() {
            if !inside[n.0] {
                continue;
            }
            if graph.kind(n).is_root() {
                roots.push(n);
                continue;
            }
            let inner = graph.parents(n).filter(|p| inside[p.0]).count();
            let all = graph.parent_edges(n).len();
            if inner == 0 {
                boundary_nodes.push(n);
            } else if inner == all {
                internal.push(n);
            } else {
                return Err(ShapleyError::PartialParents(n));
            }
        }

        // Path weights within the sub-graph only.
        let mut adj = vec![0.0; graph.node_count()];
        adj[output.0] = 1.0;
        for &n in graph.topo_order().iter().rev() {
            if n == output || !inside[n.0] {
                continue;
            }
            let mut acc = 0.0;
            for &e in graph.child_edges(n) {
                let c = graph.edge(e).child;
                if inside[c.0] {
                    acc += theta.beta[e.0] * adj[c.0];
                }
            }
            adj[n.0] = acc;
        }

        let factors: Vec<InputFactor> = boundary_nodes
            .iter()
            .map(|&n| InputFactor::Boundary(n))
            .chain(roots.iter().map(|&n| InputFactor::Cpp(n)))
            .chain(internal.iter().map(|&n| InputFactor::Residual(n)))
            .collect();
        let gamma: Vec<f64> = factors.iter().map(|f| adj[f.node().0]).collect();
        let k = factors.len();
        let nb = boundary_nodes.len();
        let mut covariance = vec![0.0; k * k];
        let (block, source) = match boundary {
            BoundaryCovariance::Independent => {
                let mut c = vec![0.0; nb * nb];
                let full = covariance_of(graph, theta, &boundary_nodes);
                for i in 0..nb {
                    c[i * nb + i] = full[i * nb + i];
                }
                (c, CovarianceSource::Independent)
            }
            BoundaryCovariance::ModelPropagated => (
                covariance_of(graph, theta, &boundary_nodes),
                CovarianceSource::ModelPropagated,
            ),
            BoundaryCovariance::Sample(data) => (
                data.sample_covariance(&boundary_nodes).ok_or(ShapleyError::InsufficientData)?,
                CovarianceSource::SampleEstimate,
            ),
        };
        for i in 0..nb {
            for j in 0..nb {
                covariance[i * k + j] = block[i * nb + j];
            }
        }
        for i in nb..k {
            covariance[i * k + i] = theta.v2[factors[i].node().0];
        }
        Ok(VarianceGame { output, factors, gamma, covariance, source })
    }

    pub fn len(&self) -> usize {
        self.factors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.factors.is_empty()
    }

    fn cov(&self, i: usize, j: usize) -> f64 {
        self.covariance[i * self.factors.len() + j]
    }

    pub fn index_of(&self, factor: InputFactor) -> Option<usize> {
        self.factors.iter().position(|f| *f == factor)
    }

    /// Remaining-variance cost of the coalition `members` (factor indices):
    /// squared terms plus twice the pairwise cross terms.
    pub fn cost(&self, members: &[usize]) -> f64 {
        let mut acc = CompensatedSum::default();
        for (a, &i) in members.iter().enumerate() {
            acc.add(self.gamma[i] * self.gamma[i] * self.cov(i, i));
            for &j in &members[a + 1..] {
                acc.add(2.0 * self.gamma[i] * self.gamma[j] * self.cov(i, j));
            }
        }
        acc.value()
    }

    /// Cost of the coalition encoded by bit `k` of `mask`.
    pub fn cost_mask(&self, mask: u64) -> f64 {
        let members: Vec<usize> = (0..self.len()).filter(|k| mask >> k & 1 == 1).collect();
        self.cost(&members)
    }

    pub fn total_variance(&self) -> f64 {
        let all: Vec<usize> = (0..self.len()).collect();
        self.cost(&all)
    }

    pub fn shapley(&self) -> Vec<f64> {
        (0..self.len())
            .map(|k| {
                let inner = compensated_sum((0..self.len()).map(|l| self.gamma[l] * self.cov(k, l)));
                self.gamma[k] * inner
            })
            .collect()
    }

    pub fn report(&self) -> SvReport {
        let sh = self.shapley();
        let total = self.total_variance();
        let entries = self
            .factors
            .iter()
            .zip(sh)
            .map(|(&factor, shapley)| SvEntry { factor, shapley, criticality: shapley / total })
            .collect();
        SvReport { output: self.output, total_variance: total, covariance: self.source, entries }
    }
}

/// Covariance treatment of sub-graph boundary nodes.
#[derive(Debug, Clone, Copy)]
pub enum BoundaryCovariance<'a> {
    /// Propagated variances only, cross terms dropped.
    Independent,
    ModelPropagated,
    /// Sample covariance of the boundary columns.
    Sample(&'a BatchDataset),
}

pub fn cost_remaining_variance(
    graph: &ProcessGraph,
    theta: &Theta,
    output: NodeId,
    subset: &[InputFactor],
    cov: &InputCovariance,
) -> Result<f64, ShapleyError> {
    let game = VarianceGame::full_graph(graph, theta, output, cov)?;
    let mut members = Vec::with_capacity(subset.len());
    for &f in subset {
        let i = game.index_of(f).ok_or(ShapleyError::UnknownFactor(f))?;
        if !members.contains(&i) {
            members.push(i);
        }
    }
    members.sort_unstable();
    Ok(game.cost(&members))
}

pub fn sv_closed_form(
    graph: &ProcessGraph,
    theta: &Theta,
    output: NodeId,
    cov: &InputCovariance,
) -> Result<SvReport, ShapleyError> {
    Ok(VarianceGame::full_graph(graph, theta, output, cov)?.report())
}

pub fn subgraph_analysis(
    graph: &ProcessGraph,
    theta: &Theta,
    subgraph: &[NodeId],
    output: NodeId,
    boundary: BoundaryCovariance<'_>,
) -> Result<SvReport, ShapleyError> {
    Ok(VarianceGame::subgraph(graph, theta, subgraph, output, boundary)?.report())
}

/// Which characteristic function the brute-force enumeration uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CostForm {
    /// The supplied cost `c(J)` as is.
    RemainingVariance,
    /// The dual `c(all) - c(complement of J)`; it has the same Shapley
    /// values, so comparing both forms checks the enumeration.
    Explained,
}

/// Shapley values by enumerating all `2^k` coalitions. `cost` receives a
/// bit mask (bit `i` set when factor `i` is in the coalition).
pub fn sv_bruteforce<F: Fn(u64) -> f64>(
    k: usize,
    cost: F,
    form: CostForm,
) -> Result<Vec<f64>, ShapleyError> {
    if k > BRUTEFORCE_MAX_FACTORS {
        return Err(ShapleyError::TooManyFactors { found: k, max: BRUTEFORCE_MAX_FACTORS });
    }
    let size = 1usize << k;
    let full_mask = (size - 1) as u64;
    let raw: Vec<f64> = (0..size as u64).map(&cost).collect();
    let table: Vec<f64> = match form {
        CostForm::RemainingVariance => raw,
        CostForm::Explained => {
            let full = raw[full_mask as usize];
            (0..size).map(|m| full - raw[(full_mask ^ m as u64) as usize]).collect()
        }
    };
    // weight(s) = s! (k - s - 1)! / k! = 1 / (k * C(k - 1, s)).
    let mut binom = vec![1.0f64; k.max(1)];
    for s in 1..k {
        binom[s] = binom[s - 1] * (k - s) as f64 / s as f64;
    }
    let weights: Vec<f64> = binom.iter().map(|b| 1.0 / (k as f64 * b)).collect();
    let mut out = Vec::with_capacity(k);
    for i in 0..k {
        let bit = 1u64 << i;
        let mut acc = CompensatedSum::default();
        for mask in 0..size as u64 {
            if mask & bit != 0 {
                continue;
            }
            let s = mask.count_ones() as usize;
            acc.add(weights[s] * (table[(mask | bit) as usize] - table[mask as usize]));
        }
        out.push(acc.value());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_graph, NodeKind};
    use crate::propagate::node_moments;

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
            mu: vec![0.0; 5],
            v2: vec![0.5, 1.5, 2.0, 0.3, 0.7],
            beta: vec![0.8, -1.2, 1.7, 0.4],
        };
        (g, theta)
    }

    #[test]
    fn single_root_term() {
        let (g, t) = five_node();
        let c = cost_remaining_variance(&g, &t, NodeId(4), &[InputFactor::Cpp(NodeId(0))], &InputCovariance::Independent)
            .unwrap();
        let expect = (0.8f64 * 1.7) * (0.8 * 1.7) * 0.5;
        assert!((c - expect).abs() < 1e-15);
    }

    #[test]
    fn single_factor_gets_everything() {
        let g = build_graph(&[("A", NodeKind::Cpp), ("B", NodeKind::Response)], &[("A", "B")]).unwrap();
        let t = Theta { mu: vec![0.0; 2], v2: vec![2.0, 1e-300], beta: vec![3.0] };
        let r = sv_closed_form(&g, &t, NodeId(1), &InputCovariance::Independent).unwrap();
        assert!((r.entries[0].criticality - 1.0).abs() < 1e-12);
    }

    #[test]
    fn correlated_pair_splits_cross_term() {
        let g = build_graph(
            &[("A", NodeKind::Cpp), ("B", NodeKind::Cpp), ("Y", NodeKind::Response)],
            &[("A", "Y"), ("B", "Y")],
        )
        .unwrap();
        let t = Theta { mu: vec![0.0; 3], v2: vec![1.0, 1.0, 1.0], beta: vec![1.0, 1.0] };
        // Factors: A, B, e:Y. Var(A) = Var(B) = 1, Cov = 0.5.
        let m = CovarianceMatrix::new(3, vec![1.0, 0.5, 0.0, 0.5, 1.0, 0.0, 0.0, 0.0, 1.0]).unwrap();
        let r = sv_closed_form(&g, &t, NodeId(2), &InputCovariance::UserSupplied(m)).unwrap();
        assert_eq!(r.entries[0].shapley, 1.5);
        assert_eq!(r.entries[1].shapley, 1.5);
    }

    #[test]
    fn covariance_validation() {
        assert!(matches!(
            CovarianceMatrix::new(2, vec![1.0, 2.0, 2.0, 1.0]),
            Err(CovarianceError::NotPositiveSemidefinite(_))
        ));
        assert!(matches!(
            CovarianceMatrix::new(2, vec![1.0, 0.2, 0.1, 1.0]),
            Err(CovarianceError::NotSymmetric(0, 1))
        ));
    }

    #[test]
    fn subgraph_inputs_and_boundary_share() {
        let (g, t) = five_node();
        let sub = [NodeId(2), NodeId(3), NodeId(4)];
        let r = subgraph_analysis(&g, &t, &sub, NodeId(4), BoundaryCovariance::ModelPropagated).unwrap();
        let labels: Vec<_> = r.entries.iter().map(|e| g.factor_label(e.factor)).collect();
        assert_eq!(labels, ["X6", "X3", "e:X7"]);
        let var6 = node_moments(&g, &t).variance[3];
        assert!((r.entries[0].shapley - 1.7 * 1.7 * var6).abs() < 1e-13);
        let full = node_moments(&g, &t).variance[4];
        assert!((r.total_variance - full).abs() < 1e-13);
    }

    #[test]
    fn subgraph_errors() {
        let (g, t) = five_node();
        assert_eq!(
            subgraph_analysis(&g, &t, &[NodeId(2), NodeId(3)], NodeId(4), BoundaryCovariance::ModelPropagated),
            Err(ShapleyError::OutputNotInSubgraph(NodeId(4)))
        );
        assert_eq!(
            subgraph_analysis(&g, &t, &[NodeId(0), NodeId(3), NodeId(4)], NodeId(4), BoundaryCovariance::ModelPropagated),
            Err(ShapleyError::PartialParents(NodeId(3)))
        );
    }

    #[test]
    fn bruteforce_limit() {
        assert!(matches!(
            sv_bruteforce(21, |_| 0.0, CostForm::RemainingVariance),
            Err(ShapleyError::TooManyFactors { found: 21, .. })
        ));
    }

    #[test]
    fn unknown_factor_for_criticality() {
        let (g, t) = five_node();
        let r = sv_closed_form(&g, &t, NodeId(3), &InputCovariance::Independent).unwrap();
        assert!(criticality(&r, InputFactor::Boundary(NodeId(3))).is_err());
    }
}
