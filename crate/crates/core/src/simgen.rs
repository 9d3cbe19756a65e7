//! Synthetic process networks and batch generation.
//!
//! The reference network is a 20-node monoclonal-antibody line with four
//! unit operations: main fermentation, centrifuge, chromatography and
//! filtration. Edge coefficients come from qualitative association levels,
//! root parameters from operating ranges.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::data::BatchDataset;
use crate::model::{build_graph, NodeId, NodeKind, ProcessGraph, Theta};
use crate::propagate::{gamma_matrix, sample_batch};
use crate::rng::substream;

/// Default feasibility margin for [`back_engineer_v`].
pub const FEASIBILITY_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("range `{0}` needs low < up")]
    InvalidRange(String),
    #[error("node {node}: target variance {target} is not above the propagated {propagated}")]
    InfeasibleTarget { node: String, target: f64, propagated: f64 },
    #[error("node {0} has no target variance")]
    MissingTarget(String),
    #[error("incomplete rows need a parent-closed scope")]
    ScopeNotParentClosed,
}

/// An operating range `low..up` for one quantity.
#[derive(Debug, Clone, PartialEq)]
pub struct RangeSpec {
    pub label: String,
    pub low: f64,
    pub up: f64,
}

impl RangeSpec {
    pub fn new(label: &str, low: f64, up: f64) -> Self {
        RangeSpec { label: label.to_string(), low, up }
    }
}

/// Mean at the midpoint, standard deviation a quarter of the width (the
/// range spans roughly four standard deviations).
pub fn range_to_cpp_params(range: &RangeSpec) -> Result<(f64, f64), SimError> {
    if !(range.low < range.up) || !range.low.is_finite() || !range.up.is_finite() {
        return Err(SimError::InvalidRange(range.label.clone()));
    }
    Ok(((range.low + range.up) / 2.0, (range.up - range.low) / 4.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AssociationLevel {
    High,
    Medium,
    Low,
}

impl AssociationLevel {
    pub fn coefficient(self) -> f64 {
        match self {
            AssociationLevel::High => 0.9,
            AssociationLevel::Medium => 0.6,
            AssociationLevel::Low => 0.3,
        }
    }
}

/// Residual variances that make each target node's total variance hit
/// `targets[node]`, visiting nodes in topological order.
///
/// `theta.v2` must hold the root variances; entries for other nodes are
/// overwritten. Targets for root nodes are ignored.
pub fn back_engineer_v(
    graph: &ProcessGraph,
    theta: &Theta,
    targets: &[Option<f64>],
    eps: f64,
) -> Result<Vec<f64>, SimError> {
    let g = gamma_matrix(graph, theta);
    let mut v2 = theta.v2.clone();
    for &n in graph.topo_order() {
        if graph.kind(n).is_root() {
            continue;
        }
        let target = targets[n.0].ok_or_else(|| SimError::MissingTarget(graph.name(n).to_string()))?;
        let propagated: f64 = (0..graph.node_count())
            .filter(|&k| k != n.0)
            .map(|k| g[k][n.0] * g[k][n.0] * v2[k])
            .sum();
        if target - propagated < eps {
            return Err(SimError::InfeasibleTarget {
                node: graph.name(n).to_string(),
                target,
                propagated,
            });
        }
        v2[n.0] = target - propagated;
    }
    Ok(v2)
}

/// How residual variances of the reference network are set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ResidualSpec {
    /// Same residual variance on every non-root node.
    Fixed(f64),
    /// Match each node's total variance to its range, via [`back_engineer_v`].
    FromRanges,
}

/// Operating ranges of the reference network.
///
/// `cpp` is indexed X1, X2, X3, X4, X8, X9, X12, X13, X17, X18 and `cqa`
/// X5, X6, X7, X10, X11, X14, X15, X16, X19, X20.
#[derive(Debug, Clone, PartialEq)]
pub struct MabsConfig {
    pub cpp: [RangeSpec; 10],
    pub cqa: [RangeSpec; 10],
    pub residual: ResidualSpec,
}

fn cqa_ranges() -> [RangeSpec; 10] {
    [
        RangeSpec::new("fermentation impurities (pl)", 3.0, 11.0),
        RangeSpec::new("fermentation protein content (g/L)", 1.0, 5.0),
        RangeSpec::new("fermentation bioburden (CFU/100mL)", 5.0, 15.0),
        RangeSpec::new("centrifuge impurities (pl)", 3.0, 11.0),
        RangeSpec::new("centrifuge protein content", 5.0, 15.0),
        RangeSpec::new("chromatography impurities (pl)", 3.0, 11.0),
        RangeSpec::new("chromatography protein content (g/L)", 1.0, 5.0),
        RangeSpec::new("chromatography bioburden (CFU/100mL)", 5.0, 15.0),
        RangeSpec::new("filtration impurities (pl)", 3.0, 11.0),
        RangeSpec::new("filtration protein content (g/L)", 1.0, 5.0),
    ]
}

impl MabsConfig {
    /// Calibrated default: temperatures, pooling window, sieve size and
    /// flow rate are read in rescaled units (x10 C, x10 min, x0.1 um,
    /// x10 mL/min), and every non-root node has residual variance 0.0034.
    /// With this setting the root criticalities on the final protein
    /// content are X4 59.5%, X13 24.0%, X1 4.7%, X18 3.7%.
    pub fn reference() -> Self {
        MabsConfig {
            cpp: [
                RangeSpec::new("fermentation agitation rate (m/s)", 1.1, 2.5),
                RangeSpec::new("fermentation pH", 6.8, 7.2),
                RangeSpec::new("fermentation temperature (x10 C)", 2.0, 3.0),
                RangeSpec::new("fermentation dissolved oxygen (%)", 2.5, 7.5),
                RangeSpec::new("centrifuge temperature (x10 C)", 2.0, 3.0),
                RangeSpec::new("centrifuge rotation speed (kRPM)", 3.0, 5.0),
                RangeSpec::new("chromatography pooling window (x10 min)", 1.0, 3.0),
                RangeSpec::new("chromatography temperature (C)", 2.0, 10.0),
                RangeSpec::new("filtration sieve size (x0.1 um)", 1.0, 5.0),
                RangeSpec::new("filtration flow rate (x10 mL/min)", 2.5, 10.0),
            ],
            cqa: cqa_ranges(),
            residual: ResidualSpec::Fixed(0.0034),
        }
    }

    /// The ranges in their printed units, fermentation parameters in table
    /// order (pH, temperature, oxygen, agitation), residual variances
    /// matched to the quality-attribute ranges. Back-engineering fails on
    /// this configuration; see [`build_mabs_network`].
    pub fn literal_table() -> Self {
        MabsConfig {
            cpp: [
                RangeSpec::new("fermentation pH", 6.8, 7.2),
                RangeSpec::new("fermentation temperature (C)", 20.0, 30.0),
                RangeSpec::new("fermentation dissolved oxygen (%)", 2.5, 7.5),
                RangeSpec::new("fermentation agitation rate (m/s)", 1.1, 2.5),
                RangeSpec::new("centrifuge temperature (C)", 20.0, 30.0),
                RangeSpec::new("centrifuge rotation speed (kRPM)", 3.0, 5.0),
                RangeSpec::new("chromatography pooling window (min)", 10.0, 30.0),
                RangeSpec::new("chromatography temperature (C)", 2.0, 10.0),
                RangeSpec::new("filtration sieve size (um)", 0.1, 0.5),
                RangeSpec::new("filtration flow rate (mL/min)", 25.0, 100.0),
            ],
            cqa: cqa_ranges(),
            residual: ResidualSpec::FromRanges,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MabsNetwork {
    pub graph: ProcessGraph,
    pub theta: Theta,
    /// Human-readable description of each node, by node index.
    pub labels: Vec<String>,
    /// Named parent-closed prefixes of the line, usable as incomplete-batch
    /// scopes, followed by named downstream sub-graphs for analysis.
    pub subgraphs: Vec<(String, Vec<NodeId>)>,
}

const CPP_NODES: [usize; 10] = [1, 2, 3, 4, 8, 9, 12, 13, 17, 18];
const CQA_NODES: [usize; 10] = [5, 6, 7, 10, 11, 14, 15, 16, 19, 20];

fn node_name(i: usize) -> String {
    let mut s = String::from("X");
    let mut digits = [0u8; 4];
    let mut k = 0;
    let mut v = i;
    loop {
        digits[k] = b'0' + (v % 10) as u8;
        k += 1;
        v /= 10;
        if v == 0 {
            break;
        }
    }
    for d in digits[..k].iter().rev() {
        s.push(*d as char);
    }
    s
}

/// Edges of the reference line as `(parent, child, level)` on 1-based
/// node numbers, unit by unit.
fn mabs_edges() -> Vec<(usize, usize, AssociationLevel)> {
    use AssociationLevel::{High, Low, Medium};
    let mut edges = Vec::with_capacity(44);
    for p in 1..=4 {
        edges.push((p, 5, High));
        edges.push((p, 6, High));
        edges.push((p, 7, Low));
    }
    for p in [5, 6, 7, 8, 9] {
        edges.push((p, 10, Medium));
        edges.push((p, 11, Medium));
    }
    for p in [10, 11, 12, 13] {
        edges.push((p, 14, High));
        edges.push((p, 15, Medium));
        edges.push((p, 16, High));
    }
    for p in [14, 15, 16, 17, 18] {
        edges.push((p, 19, Low));
        edges.push((p, 20, Medium));
    }
    edges
}

pub fn build_mabs_network(config: &MabsConfig) -> Result<MabsNetwork, SimError> {
    let nodes: Vec<(String, NodeKind)> = (1..=20)
        .map(|i| {
            let kind = if CPP_NODES.contains(&i) {
                NodeKind::Cpp
            } else if i == 20 {
                NodeKind::Response
            } else {
                NodeKind::Cqa
            };
            (node_name(i), kind)
        })
        .collect();
    let spec = mabs_edges();
    let edges: Vec<(String, String)> =
        spec.iter().map(|&(p, c, _)| (node_name(p), node_name(c))).collect();
    let graph = build_graph(&nodes, &edges).expect("reference network is a valid DAG");

    let mut mu = vec![0.0; 20];
    let mut v2 = vec![0.0; 20];
    let mut labels = vec![String::new(); 20];
    let mut targets = vec![None; 20];
    for (range, &i) in config.cpp.iter().zip(&CPP_NODES) {
        let (m, sd) = range_to_cpp_params(range)?;
        mu[i - 1] = m;
        v2[i - 1] = sd * sd;
        labels[i - 1] = range.label.clone();
    }
    for (range, &i) in config.cqa.iter().zip(&CQA_NODES) {
        let (m, sd) = range_to_cpp_params(range)?;
        mu[i - 1] = m;
        targets[i - 1] = Some(sd * sd);
        labels[i - 1] = range.label.clone();
    }
    let beta = spec.iter().map(|&(_, _, level)| level.coefficient()).collect();
    let mut theta = Theta { mu, v2, beta };
    match config.residual {
        ResidualSpec::Fixed(v) => {
            for &i in &CQA_NODES {
                theta.v2[i - 1] = v;
            }
        }
        ResidualSpec::FromRanges => {
            theta.v2 = back_engineer_v(&graph, &theta, &targets, FEASIBILITY_EPS)?;
        }
    }

    let ids = |set: &[usize]| set.iter().map(|&i| NodeId(i - 1)).collect::<Vec<_>>();
    let subgraphs = vec![
        ("fermentation".to_string(), ids(&[1, 2, 3, 4, 5, 6, 7])),
        ("through-centrifuge".to_string(), ids(&(1..=11).collect::<Vec<_>>())),
        ("through-chromatography".to_string(), ids(&(1..=16).collect::<Vec<_>>())),
        ("after-fermentation".to_string(), ids(&(5..=20).collect::<Vec<_>>())),
        ("after-centrifuge".to_string(), ids(&(10..=20).collect::<Vec<_>>())),
        ("after-chromatography".to_string(), ids(&(14..=20).collect::<Vec<_>>())),
    ];
    Ok(MabsNetwork { graph, theta, labels, subgraphs })
}

/// `complete` full batches followed by `incomplete` batches observed only
/// on `scope`. Row `r` always uses stream `r` of `seed`.
pub fn generate_batches(
    graph: &ProcessGraph,
    theta: &Theta,
    complete: usize,
    incomplete: usize,
    scope: Option<&[NodeId]>,
    seed: u64,
) -> Result<BatchDataset, SimError> {
    let n = graph.node_count();
    let mut mask = vec![false; n];
    if incomplete > 0 {
        let scope = scope.ok_or(SimError::ScopeNotParentClosed)?;
        for s in scope {
            mask[s.0] = true;
        }
        let closed = graph
            .nodes()
            .all(|node| !mask[node.0] || graph.parents(node).all(|p| mask[p.0]));
        if !closed || !mask.iter().any(|&m| m) {
            return Err(SimError::ScopeNotParentClosed);
        }
    }
    let mut data = BatchDataset::new(n);
    let mut values = vec![0.0; n];
    let mut inputs = vec![0.0; n];
    let mut partial = vec![None; n];
    for r in 0..complete + incomplete {
        let mut rng = substream(seed, r as u64);
        sample_batch(graph, theta, &mut rng, &mut values, &mut inputs);
        if r < complete {
            data.push_complete(&values).expect("finite sample");
        } else {
            for i in 0..n {
                partial[i] = mask[i].then_some(values[i]);
            }
            data.push_partial(graph, &partial).expect("scope checked above");
        }
    }
    Ok(data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::input_factors;
    use crate::propagate::node_moments;
    use crate::shapley::{sv_closed_form, InputCovariance};

    #[test]
    fn range_mapping() {
        assert_eq!(range_to_cpp_params(&RangeSpec::new("pH", 6.8, 7.2)).map(|p| p.0), Ok(7.0));
        let (_, sd) = range_to_cpp_params(&RangeSpec::new("pH", 6.8, 7.2)).unwrap();
        assert!((sd - 0.1).abs() < 1e-12);
        assert!(range_to_cpp_params(&RangeSpec::new("bad", 2.0, 1.0)).is_err());
    }

    #[test]
    fn reference_census() {
        let net = build_mabs_network(&MabsConfig::reference()).unwrap();
        assert_eq!(net.graph.node_count(), 20);
        assert_eq!(net.graph.edge_count(), 44);
        let roots = net.graph.nodes().filter(|&n| net.graph.kind(n).is_root()).count();
        assert_eq!(roots, 10);
        assert_eq!(input_factors(&net.graph).len(), 20);
    }

    #[test]
    fn oxygen_and_chromatography_temperature_dominate() {
        let net = build_mabs_network(&MabsConfig::reference()).unwrap();
        let out = net.graph.node_id("X20").unwrap();
        let r = sv_closed_form(&net.graph, &net.theta, out, &InputCovariance::Independent).unwrap();
        let mut ranked: Vec<_> = r.entries.iter().collect();
        ranked.sort_by(|a, b| b.criticality.total_cmp(&a.criticality));
        assert_eq!(net.graph.factor_label(ranked[0].factor), "X4");
        assert_eq!(net.graph.factor_label(ranked[1].factor), "X13");
    }

    #[test]
    fn printed_ranges_are_infeasible() {
        let err = build_mabs_network(&MabsConfig::literal_table()).unwrap_err();
        match err {
            SimError::InfeasibleTarget { node, .. } => assert_eq!(node, "X5"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn back_engineering_round_trip() {
        let net = build_mabs_network(&MabsConfig::reference()).unwrap();
        let var = node_moments(&net.graph, &net.theta).variance;
        let targets: Vec<Option<f64>> = var.iter().map(|v| Some(*v)).collect();
        let v2 = back_engineer_v(&net.graph, &net.theta, &targets, FEASIBILITY_EPS).unwrap();
        for (a, b) in v2.iter().zip(&net.theta.v2) {
            assert!((a - b).abs() < 1e-9 * (1.0 + b.abs()), "{a} vs {b}");
        }
    }

    #[test]
    fn tight_target_is_infeasible() {
        let net = build_mabs_network(&MabsConfig::reference()).unwrap();
        let var = node_moments(&net.graph, &net.theta).variance;
        let mut targets: Vec<Option<f64>> = var.iter().map(|v| Some(*v)).collect();
        // X5 exactly at its propagated variance: no room for a residual.
        targets[4] = Some(var[4] - net.theta.v2[4]);
        assert!(matches!(
            back_engineer_v(&net.graph, &net.theta, &targets, FEASIBILITY_EPS),
            Err(SimError::InfeasibleTarget { .. })
        ));
    }

    #[test]
    fn incomplete_rows_respect_scope() {
        let net = build_mabs_network(&MabsConfig::reference()).unwrap();
        let scope = &net.subgraphs[0].1;
        let d = generate_batches(&net.graph, &net.theta, 3, 4, Some(scope), 1).unwrap();
        assert_eq!(d.complete_count(), 3);
        assert_eq!(d.incomplete_count(), 4);
        assert_eq!(d.value(5, NodeId(7)), None);
        assert!(d.value(5, NodeId(6)).is_some());
        let bad = [NodeId(4)];
        assert_eq!(
            generate_batches(&net.graph, &net.theta, 0, 1, Some(&bad), 1),
            Err(SimError::ScopeNotParentClosed)
        );
    }
}
