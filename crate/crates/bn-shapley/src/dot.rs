//! Graphviz rendering of an analysed network.
//!
//! Node fill runs from white (zero criticality) to black (the largest
//! criticality in the report). With a model-uncertainty report, each node's
//! outline darkens with the share of its `v2` coefficient and each edge with
//! the share of its `beta`; coefficients outside the report's path set are
//! drawn light gray. Nodes and edges are emitted in declaration order.

use std::fmt::Write as _;

use bn_shapley_core::model::{CoefficientId, InputFactor, ProcessGraph};
use bn_shapley_core::mu_sa::MuReport;
use bn_shapley_core::shapley::SvReport;

use crate::error::{Error, Result};

const OUTSIDE: &str = "#d3d3d3";

/// `t` in [0, 1] to a gray from white (0) to black (1).
fn gray(t: f64) -> String {
    let level = (255.0 * (1.0 - t.clamp(0.0, 1.0))).round() as u8;
    format!("#{level:02x}{level:02x}{level:02x}")
}

fn factor_in_graph(graph: &ProcessGraph, f: InputFactor) -> bool {
    let n = f.node();
    n.0 < graph.node_count()
        && match f {
            InputFactor::Cpp(_) => graph.kind(n).is_root(),
            InputFactor::Residual(_) | InputFactor::Boundary(_) => !graph.kind(n).is_root(),
        }
}

fn coefficient_in_graph(graph: &ProcessGraph, c: CoefficientId) -> bool {
    match c {
        CoefficientId::Mu(n) | CoefficientId::V2(n) => n.0 < graph.node_count(),
        CoefficientId::Beta(e) => e.0 < graph.edge_count(),
    }
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

pub fn export_dot(graph: &ProcessGraph, sv: Option<&SvReport>, mu: Option<&MuReport>) -> Result<String> {
    let n = graph.node_count();
    let mut node_crit: Vec<Option<f64>> = vec![None; n];
    if let Some(r) = sv {
        if r.output.0 >= n {
            return Err(Error::ReportGraphMismatch("report output is not a node of the network".into()));
        }
        for e in &r.entries {
            if !factor_in_graph(graph, e.factor) {
                return Err(Error::ReportGraphMismatch(format!(
                    "report factor {:?} does not belong to the network",
                    e.factor
                )));
            }
            *node_crit[e.factor.node().0].get_or_insert(0.0) += e.criticality;
        }
    }
    let max_crit = node_crit.iter().flatten().fold(0.0f64, |m, &c| m.max(c));

    let mut v2_share: Vec<Option<f64>> = vec![None; n];
    let mut beta_share: Vec<Option<f64>> = vec![None; graph.edge_count()];
    if let Some(m) = mu {
        if m.output.0 >= n || !factor_in_graph(graph, m.factor) {
            return Err(Error::ReportGraphMismatch("MU report does not reference this network".into()));
        }
        for c in &m.contributions {
            if !coefficient_in_graph(graph, c.coefficient) {
                return Err(Error::ReportGraphMismatch(format!(
                    "MU report coefficient {:?} does not belong to the network",
                    c.coefficient
                )));
            }
            let share = if m.full_variance != 0.0 { c.shapley / m.full_variance } else { 0.0 };
            match c.coefficient {
                CoefficientId::V2(node) => v2_share[node.0] = Some(share),
                CoefficientId::Beta(e) => beta_share[e.0] = Some(share),
                CoefficientId::Mu(_) => {}
            }
        }
    }
    let max_share = v2_share
        .iter()
        .chain(beta_share.iter())
        .flatten()
        .fold(0.0f64, |m, &s| m.max(s));
    let scaled = |s: f64| if max_share > 0.0 { s / max_share } else { 0.0 };

    let mut out = String::new();
    out.push_str("digraph process {\n");
    out.push_str("  rankdir=LR;\n");
    out.push_str("  node [shape=circle, style=filled, fontname=\"Helvetica\"];\n");
    for node in graph.nodes() {
        let name = escape(graph.name(node));
        let mut attrs = Vec::new();
        match node_crit[node.0] {
            Some(c) => {
                let t = if max_crit > 0.0 { c / max_crit } else { 0.0 };
                attrs.push(format!("label=\"{name}\\n{:.1}%\"", 100.0 * c));
                attrs.push(format!("fillcolor=\"{}\"", gray(t)));
                if t > 0.5 {
                    attrs.push("fontcolor=\"#ffffff\"".into());
                }
            }
            None => {
                attrs.push(format!("label=\"{name}\""));
                attrs.push("fillcolor=\"#ffffff\"".into());
            }
        }
        if mu.is_some() {
            match v2_share[node.0] {
                Some(s) => {
                    let t = scaled(s);
                    attrs.push(format!("color=\"{}\"", gray(0.2 + 0.8 * t)));
                    attrs.push(format!("penwidth={:.2}", 1.0 + 3.0 * t.max(0.0)));
                    attrs.push(format!("xlabel=\"v2 {:.1}%\"", 100.0 * s));
                }
                None => attrs.push(format!("color=\"{OUTSIDE}\"")),
            }
        }
        let _ = writeln!(out, "  \"{name}\" [{}];", attrs.join(", "));
    }
    for (e, edge) in graph.edges().iter().enumerate() {
        let p = escape(graph.name(edge.parent));
        let c = escape(graph.name(edge.child));
        let attrs = match (mu.is_some(), beta_share[e]) {
            (false, _) => String::new(),
            (true, Some(s)) => {
                let t = scaled(s);
                format!(
                    " [color=\"{}\", penwidth={:.2}, label=\"{:.1}%\"]",
                    gray(0.2 + 0.8 * t),
                    1.0 + 3.0 * t.max(0.0),
                    100.0 * s
                )
            }
            (true, None) => format!(" [color=\"{OUTSIDE}\"]"),
        };
        let _ = writeln!(out, "  \"{p}\" -> \"{c}\"{attrs};");
    }
    out.push_str("}\n");
    Ok(out)
}
