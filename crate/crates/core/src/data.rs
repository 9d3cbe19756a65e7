//! Batch observations over a process graph.
//!
//! Each row records one production batch. A row may observe only part of
//! the network, but its observed set (its scope) must be closed under
//! parents: whenever a node is observed, so are all of its parents.

use alloc::vec;
use alloc::vec::Vec;

use crate::model::{NodeId, ProcessGraph};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DataError {
    #[error("row has {found} values, graph has {expected} nodes")]
    WidthMismatch { expected: usize, found: usize },
    #[error("row {row}: value of node #{} is not finite", .node.0)]
    NonFinite { row: usize, node: NodeId },
    #[error("row {row}: node #{} is observed but one of its parents is not", .node.0)]
    ScopeNotParentClosed { row: usize, node: NodeId },
    #[error("row {row} observes no node")]
    EmptyRow { row: usize },
}

#[derive(Debug, Clone)]
pub struct BatchDataset {
    width: usize,
    values: Vec<f64>,
    row_scope: Vec<usize>,
    scopes: Vec<Vec<bool>>,
}

/// Row-by-row equality of scopes and observed values; the placeholders in
/// unobserved cells do not take part.
impl PartialEq for BatchDataset {
    fn eq(&self, other: &Self) -> bool {
        self.width == other.width
            && self.len() == other.len()
            && (0..self.len()).all(|r| {
                self.observed(r) == other.observed(r)
                    && self.row(r).iter().zip(other.row(r)).zip(self.observed(r)).all(|((a, b), &o)| !o || a == b)
            })
    }
}

impl BatchDataset {
    pub fn new(width: usize) -> Self {
        BatchDataset { width, values: Vec::new(), row_scope: Vec::new(), scopes: Vec::new() }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.row_scope.len()
    }

    pub fn is_empty(&self) -> bool {
        self.row_scope.is_empty()
    }

    fn scope_index(&mut self, mask: Vec<bool>) -> usize {
        match self.scopes.iter().position(|s| *s == mask) {
            Some(i) => i,
            None => {
                self.scopes.push(mask);
                self.scopes.len() - 1
            }
        }
    }

    pub fn push_complete(&mut self, values: &[f64]) -> Result<(), DataError> {
        if values.len() != self.width {
            return Err(DataError::WidthMismatch { expected: self.width, found: values.len() });
        }
        let row = self.len();
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(DataError::NonFinite { row, node: NodeId(i) });
        }
        let s = self.scope_index(vec![true; self.width]);
        self.values.extend_from_slice(values);
        self.row_scope.push(s);
        Ok(())
    }

    /// Appends a row where `None` marks an unobserved node.
    pub fn push_partial(
        &mut self,
        graph: &ProcessGraph,
        values: &[Option<f64>],
    ) -> Result<(), DataError> {
        if values.len() != self.width || graph.node_count() != self.width {
            return Err(DataError::WidthMismatch { expected: self.width, found: values.len() });
        }
        let row = self.len();
        let mask: Vec<bool> = values.iter().map(Option::is_some).collect();
        if !mask.iter().any(|&m| m) {
            return Err(DataError::EmptyRow { row });
        }
        for node in graph.nodes() {
            if let Some(v) = values[node.0] {
                if !v.is_finite() {
                    return Err(DataError::NonFinite { row, node });
                }
                if graph.parents(node).any(|p| !mask[p.0]) {
                    return Err(DataError::ScopeNotParentClosed { row, node });
                }
            }
        }
        let s = self.scope_index(mask);
        self.values.extend(values.iter().map(|v| v.unwrap_or(f64::NAN)));
        self.row_scope.push(s);
        Ok(())
    }

    /// Row values with `NaN` at unobserved nodes.
    pub fn row(&self, row: usize) -> &[f64] {
        &self.values[row * self.width..(row + 1) * self.width]
    }

    pub fn observed(&self, row: usize) -> &[bool] {
        &self.scopes[self.row_scope[row]]
    }

    pub fn value(&self, row: usize, node: NodeId) -> Option<f64> {
        self.observed(row)[node.0].then(|| self.row(row)[node.0])
    }

    pub fn is_complete(&self, row: usize) -> bool {
        self.observed(row).iter().all(|&o| o)
    }

    pub fn complete_count(&self) -> usize {
        (0..self.len()).filter(|&r| self.is_complete(r)).count()
    }

    pub fn incomplete_count(&self) -> usize {
        self.len() - self.complete_count()
    }

    /// Distinct scopes, each with the rows that carry it, in first-seen order.
    pub fn scope_groups(&self) -> Vec<(&[bool], Vec<usize>)> {
        let mut groups: Vec<Vec<usize>> = vec![Vec::new(); self.scopes.len()];
        for (r, &s) in self.row_scope.iter().enumerate() {
            groups[s].push(r);
        }
        self.scopes
            .iter()
            .zip(groups)
            .filter(|(_, rows)| !rows.is_empty())
            .map(|(s, rows)| (s.as_slice(), rows))
            .collect()
    }

    pub fn observation_count(&self, node: NodeId) -> usize {
        (0..self.len()).filter(|&r| self.observed(r)[node.0]).count()
    }

    pub fn column_mean(&self, node: NodeId) -> Option<f64> {
        let vals: Vec<f64> = (0..self.len()).filter_map(|r| self.value(r, node)).collect();
        (!vals.is_empty()).then(|| crate::numeric::mean_and_variance(&vals).0)
    }

    pub fn column_variance(&self, node: NodeId) -> Option<f64> {
        let vals: Vec<f64> = (0..self.len()).filter_map(|r| self.value(r, node)).collect();
        (vals.len() >= 2).then(|| crate::numeric::mean_and_variance(&vals).1)
    }

    /// Sample covariance (divisor n - 1) of `nodes` over the rows observing
    /// all of them, row-major. `None` with fewer than two such rows.
    pub fn sample_covariance(&self, nodes: &[NodeId]) -> Option<Vec<f64>> {
        let rows: Vec<usize> = (0..self.len())
            .filter(|&r| nodes.iter().all(|n| self.observed(r)[n.0]))
            .collect();
        if rows.len() < 2 {
            return None;
        }
        let k = nodes.len();
        let means: Vec<f64> = nodes
            .iter()
            .map(|n| {
                crate::numeric::compensated_sum(rows.iter().map(|&r| self.row(r)[n.0]))
                    / rows.len() as f64
            })
            .collect();
        let mut cov = vec![0.0; k * k];
        for a in 0..k {
            for b in a..k {
                let s = crate::numeric::compensated_sum(rows.iter().map(|&r| {
                    let x = self.row(r);
                    (x[nodes[a].0] - means[a]) * (x[nodes[b].0] - means[b])
                })) / (rows.len() - 1) as f64;
                cov[a * k + b] = s;
                cov[b * k + a] = s;
            }
        }
        Some(cov)
    }
}
