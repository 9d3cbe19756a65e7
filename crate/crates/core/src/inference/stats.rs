use alloc::vec;
use alloc::vec::Vec;

use crate::data::BatchDataset;
use crate::model::NodeId;

/// First and second moments of one group of rows sharing a scope.
///
/// Values are stored shifted by the group's column means so that centring
/// at an arbitrary `mu` loses little precision.
#[derive(Debug, Clone, PartialEq)]
pub struct ScopeStats {
    pub observed: Vec<bool>,
    pub count: f64,
    shift: Vec<f64>,
    sums: Vec<f64>,
    cross: Vec<f64>,
    width: usize,
}

impl ScopeStats {
    fn from_rows(data: &BatchDataset, observed: &[bool], rows: &[usize]) -> Self {
        let w = data.width();
        let count = rows.len() as f64;
        let mut shift = vec![0.0; w];
        for i in 0..w {
            if observed[i] {
                shift[i] = crate::numeric::compensated_sum(rows.iter().map(|&r| data.row(r)[i])) / count;
            }
        }
        let mut sums = vec![0.0; w];
        let mut cross = vec![0.0; w * w];
        let obs: Vec<usize> = (0..w).filter(|&i| observed[i]).collect();
        let mut centred = vec![0.0; w];
        for &r in rows {
            let x = data.row(r);
            for &i in &obs {
                centred[i] = x[i] - shift[i];
                sums[i] += centred[i];
            }
            for &i in &obs {
                for &j in &obs {
                    cross[i * w + j] += centred[i] * centred[j];
                }
            }
        }
        ScopeStats { observed: observed.to_vec(), count, shift, sums, cross, width: w }
    }

    /// `sum_r (x_i - mu_i)`.
    pub fn centred_sum(&self, i: usize, mu: &[f64]) -> f64 {
        self.sums[i] - self.count * (mu[i] - self.shift[i])
    }

    /// `sum_r x_i`.
    pub fn raw_sum(&self, i: usize) -> f64 {
        self.count * self.shift[i] + self.sums[i]
    }

    /// `sum_r (x_i - mu_i)(x_j - mu_j)`.
    pub fn centred_cross(&self, i: usize, j: usize, mu: &[f64]) -> f64 {
        let di = mu[i] - self.shift[i];
        let dj = mu[j] - self.shift[j];
        self.cross[i * self.width + j] - di * self.sums[j] - dj * self.sums[i]
            + self.count * di * dj
    }
}

/// Sufficient statistics of a dataset for the conjugate conditionals.
#[derive(Debug, Clone, PartialEq)]
pub struct SufficientStats {
    pub groups: Vec<ScopeStats>,
    /// For each node, the groups whose scope contains it.
    pub observing: Vec<Vec<usize>>,
    /// For each node, how many rows observe it.
    pub counts: Vec<usize>,
}

impl SufficientStats {
    pub fn from_dataset(data: &BatchDataset) -> Self {
        let groups: Vec<ScopeStats> = data
            .scope_groups()
            .into_iter()
            .map(|(scope, rows)| ScopeStats::from_rows(data, scope, &rows))
            .collect();
        let w = data.width();
        let observing: Vec<Vec<usize>> = (0..w)
            .map(|i| (0..groups.len()).filter(|&g| groups[g].observed[i]).collect())
            .collect();
        let counts = (0..w).map(|i| data.observation_count(NodeId(i))).collect();
        SufficientStats { groups, observing, counts }
    }

    pub fn width(&self) -> usize {
        self.counts.len()
    }

    pub fn groups_observing(&self, node: NodeId) -> impl Iterator<Item = &ScopeStats> {
        self.observing[node.0].iter().map(move |&g| &self.groups[g])
    }
}
