//! JSON network documents.
//!
//! ```json
//! {
//!   "format_version": 1,
//!   "nodes": [{"name": "X1", "kind": "cpp", "mu": 7.0, "v2": 0.01}],
//!   "edges": [{"parent": "X1", "child": "X5", "beta": 0.9}],
//!   "subgraphs": [{"name": "fermentation", "nodes": ["X1", "X5"]}]
//! }
//! ```
//!
//! `mu`, `v2` and `beta` are optional; a [`Theta`] is attached only when
//! every one of them is present.

use std::collections::BTreeMap;
use std::path::Path;

use bn_shapley_core::model::{build_graph, validate_theta, NodeId, NodeKind, ProcessGraph, Theta};
use bn_shapley_core::simgen::{build_mabs_network, MabsConfig};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const NETWORK_FORMAT_VERSION: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeDoc {
    name: String,
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    v2: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EdgeDoc {
    parent: String,
    child: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    beta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SubgraphDoc {
    name: String,
    nodes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetworkDoc {
    format_version: u64,
    nodes: Vec<NodeDoc>,
    edges: Vec<EdgeDoc>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    subgraphs: Vec<SubgraphDoc>,
}

/// A loaded network: structure, optional parameters, labels and named
/// node subsets.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub graph: ProcessGraph,
    pub theta: Option<Theta>,
    pub labels: Vec<Option<String>>,
    pub subgraphs: Vec<(String, Vec<NodeId>)>,
}

impl Network {
    pub fn subgraph(&self, name: &str) -> Option<&[NodeId]> {
        self.subgraphs.iter().find(|(n, _)| n == name).map(|(_, s)| s.as_slice())
    }

    /// A named sub-graph, or a comma-separated node list.
    pub fn resolve_nodes(&self, spec: &str) -> Result<Vec<NodeId>> {
        if let Some(s) = self.subgraph(spec) {
            return Ok(s.to_vec());
        }
        spec.split(',')
            .map(|name| {
                let name = name.trim();
                self.graph
                    .node_id(name)
                    .ok_or_else(|| Error::Usage(format!("unknown node or sub-graph `{name}`")))
            })
            .collect()
    }

    pub fn require_theta(&self) -> Result<&Theta> {
        self.theta
            .as_ref()
            .ok_or_else(|| Error::Theta("the network does not declare every mu, v2 and beta".into()))
    }

    pub fn node(&self, name: &str) -> Result<NodeId> {
        self.graph.node_id(name).ok_or_else(|| Error::Usage(format!("unknown node `{name}`")))
    }
}

pub fn parse_network(text: &str) -> Result<Network> {
    let doc: NetworkDoc = serde_json::from_str(text).map_err(Error::json)?;
    if doc.format_version != NETWORK_FORMAT_VERSION {
        return Err(Error::UnsupportedVersion { found: doc.format_version, expected: NETWORK_FORMAT_VERSION });
    }
    let mut nodes = Vec::with_capacity(doc.nodes.len());
    for n in &doc.nodes {
        let kind = NodeKind::parse(&n.kind)
            .ok_or_else(|| Error::Theta(format!("node `{}` has unknown kind `{}`", n.name, n.kind)))?;
        nodes.push((n.name.as_str(), kind));
    }
    let edges: Vec<(&str, &str)> = doc.edges.iter().map(|e| (e.parent.as_str(), e.child.as_str())).collect();
    let graph = build_graph(&nodes, &edges)?;

    let mu: Option<Vec<f64>> = doc.nodes.iter().map(|n| n.mu).collect();
    let v2: Option<Vec<f64>> = doc.nodes.iter().map(|n| n.v2).collect();
    let beta: Option<Vec<f64>> = doc.edges.iter().map(|e| e.beta).collect();
    let theta = match (mu, v2, beta) {
        (Some(mu), Some(v2), Some(beta)) => {
            let mut map = BTreeMap::new();
            for (e, b) in doc.edges.iter().zip(beta) {
                let p = graph.node_id(&e.parent).expect("validated");
                let c = graph.node_id(&e.child).expect("validated");
                map.insert((p, c), b);
            }
            let theta = Theta::from_beta_map(&graph, mu, v2, &map).map_err(|issues| {
                Error::Theta(issues.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))
            })?;
            Some(theta)
        }
        _ => None,
    };

    let mut subgraphs = Vec::with_capacity(doc.subgraphs.len());
    for s in &doc.subgraphs {
        let ids = s
            .nodes
            .iter()
            .map(|name| {
                graph
                    .node_id(name)
                    .ok_or_else(|| Error::Theta(format!("sub-graph `{}` names unknown node `{name}`", s.name)))
            })
            .collect::<Result<Vec<_>>>()?;
        subgraphs.push((s.name.clone(), ids));
    }
    let labels = doc.nodes.iter().map(|n| n.label.clone()).collect();
    Ok(Network { graph, theta, labels, subgraphs })
}

pub fn load_network(path: &Path) -> Result<Network> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_network(&text)
}

pub fn network_to_json(net: &Network) -> String {
    let g = &net.graph;
    if let Some(theta) = &net.theta {
        debug_assert!(validate_theta(g, theta).is_ok());
    }
    let nodes = g
        .nodes()
        .map(|n| NodeDoc {
            name: g.name(n).to_string(),
            kind: g.kind(n).as_str().to_string(),
            label: net.labels.get(n.0).cloned().flatten(),
            mu: net.theta.as_ref().map(|t| t.mu[n.0]),
            v2: net.theta.as_ref().map(|t| t.v2[n.0]),
        })
        .collect();
    let edges = g
        .edges()
        .iter()
        .enumerate()
        .map(|(e, edge)| EdgeDoc {
            parent: g.name(edge.parent).to_string(),
            child: g.name(edge.child).to_string(),
            beta: net.theta.as_ref().map(|t| t.beta[e]),
        })
        .collect();
    let subgraphs = net
        .subgraphs
        .iter()
        .map(|(name, ids)| SubgraphDoc {
            name: name.clone(),
            nodes: ids.iter().map(|&n| g.name(n).to_string()).collect(),
        })
        .collect();
    let doc = NetworkDoc { format_version: NETWORK_FORMAT_VERSION, nodes, edges, subgraphs };
    let mut s = serde_json::to_string_pretty(&doc).expect("network serialises");
    s.push('\n');
    s
}

/// The reference 20-node line with its default parameters.
pub fn mabs_network() -> Network {
    let net = build_mabs_network(&MabsConfig::reference()).expect("reference configuration is feasible");
    Network {
        graph: net.graph,
        theta: Some(net.theta),
        labels: net.labels.into_iter().map(Some).collect(),
        subgraphs: net.subgraphs,
    }
}

/// Five-node example: three inputs, one intermediate attribute and the
/// output, with `X1, X2 -> X6 -> X7` and `X3 -> X7`.
pub fn five_node_network() -> Network {
    let nodes = [
        ("X1", NodeKind::Cpp),
        ("X2", NodeKind::Cpp),
        ("X3", NodeKind::Cpp),
        ("X6", NodeKind::Cqa),
        ("X7", NodeKind::Response),
    ];
    let edges = [("X1", "X6"), ("X2", "X6"), ("X3", "X7"), ("X6", "X7")];
    let graph = build_graph(&nodes, &edges).expect("valid example");
    let theta = Theta {
        mu: vec![1.0, 2.0, 0.0, 1.0, 3.0],
        v2: vec![0.5, 0.3, 0.2, 0.1, 0.05],
        beta: vec![0.8, -0.5, 1.2, 0.7],
    };
    Network { graph, theta: Some(theta), labels: vec![None; 5], subgraphs: Vec::new() }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let net = mabs_network();
        let back = parse_network(&network_to_json(&net)).unwrap();
        assert_eq!(back, net);
    }

    #[test]
    fn parse_error_has_position() {
        let err = parse_network("{\n  \"format_version\": 1,\n  \"nodes\": [,]\n}").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn partial_parameters_give_no_theta() {
        let text = r#"{"format_version": 1,
            "nodes": [{"name": "A", "kind": "cpp", "mu": 0, "v2": 1}, {"name": "B", "kind": "response"}],
            "edges": [{"parent": "A", "child": "B", "beta": 1}]}"#;
        let net = parse_network(text).unwrap();
        assert!(net.theta.is_none());
    }

    #[test]
    fn version_checked() {
        let text = r#"{"format_version": 7, "nodes": [], "edges": []}"#;
        assert!(matches!(parse_network(text), Err(Error::UnsupportedVersion { found: 7, .. })));
    }
}
