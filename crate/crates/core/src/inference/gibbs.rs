use alloc::vec::Vec;

use crate::data::BatchDataset;
use crate::numeric::solve_spd;
use crate::inference::conditionals::{cond_post_beta, cond_post_mu, cond_post_v2};
use crate::inference::prior::Prior;
use crate::inference::stats::SufficientStats;
use crate::model::{CoefficientId, EdgeId, NodeId, ProcessGraph, Theta};
use crate::rng::{inverse_gamma, normal, substream, StreamRng};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum InferenceError {
    #[error("dataset has no rows")]
    EmptyDataset,
    #[error("dataset has {found} columns, graph has {expected} nodes")]
    WidthMismatch { expected: usize, found: usize },
    #[error("invalid chain settings: {0}")]
    InvalidChain(&'static str),
    #[error("prior does not match the graph")]
    PriorMismatch,
}

/// Total sweeps `iterations`, of which the first `burn_in` are discarded;
/// afterwards every `thin`-th sweep is kept, starting with the first.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChainConfig {
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
}

impl ChainConfig {
    pub fn for_draws(draws: usize, burn_in: usize, thin: usize) -> Self {
        ChainConfig { iterations: burn_in + draws * thin, burn_in, thin }
    }

    pub fn draws(&self) -> usize {
        (self.iterations - self.burn_in) / self.thin
    }

    pub fn validate(&self) -> Result<(), InferenceError> {
        if self.thin == 0 {
            return Err(InferenceError::InvalidChain("thinning interval must be at least 1"));
        }
        if self.iterations <= self.burn_in {
            return Err(InferenceError::InvalidChain("iterations must exceed burn-in"));
        }
        if (self.iterations - self.burn_in) % self.thin != 0 {
            return Err(InferenceError::InvalidChain(
                "iterations minus burn-in must be a multiple of the thinning interval",
            ));
        }
        Ok(())
    }
}

impl Default for ChainConfig {
    fn default() -> Self {
        ChainConfig::for_draws(1000, 500, 10)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChainMeta {
    pub config: ChainConfig,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorDraws {
    pub meta: ChainMeta,
    pub draws: Vec<Theta>,
}

/// Deterministic starting point: prior means for mu, and for every node a
/// least-squares regression on its parents (centred at mu0) over the rows
/// observing it, giving beta and the residual variance. Nodes with too few
/// rows for the regression start at theta0 for beta and at their observed
/// variance (or 1) for v2.
pub fn initial_theta(graph: &ProcessGraph, prior: &Prior, stats: &SufficientStats) -> Theta {
    let mu = prior.mu0.clone();
    let mut beta = prior.theta0.clone();
    let mut v2 = alloc::vec![1.0; graph.node_count()];
    for node in graph.nodes() {
        let n_obs = stats.counts[node.0];
        let parents: Vec<usize> = graph.parents(node).map(|p| p.0).collect();
        let i = node.0;
        let centred = |a: usize, b: usize| -> f64 {
            stats.groups_observing(node).map(|g| g.centred_cross(a, b, &mu)).sum()
        };
        let var = if n_obs >= 2 { centred(i, i) / (n_obs - 1) as f64 } else { 0.0 };
        if var > 0.0 {
            v2[i] = var;
        }
        let k = parents.len();
        if k == 0 || n_obs <= k + 1 {
            continue;
        }
        let mut gram = alloc::vec![0.0; k * k];
        let mut rhs = alloc::vec![0.0; k];
        for a in 0..k {
            rhs[a] = centred(parents[a], i);
            for b in 0..k {
                gram[a * k + b] = centred(parents[a], parents[b]);
            }
        }
        if let Some(coef) = solve_spd(&gram, &rhs) {
            let mut rss = centred(i, i);
            for a in 0..k {
                rss -= coef[a] * rhs[a];
            }
            for (&e, c) in graph.parent_edges(node).iter().zip(&coef) {
                beta[e.0] = *c;
            }
            let resid = rss / (n_obs - k - 1) as f64;
            if resid > 0.0 {
                v2[i] = resid;
            }
        }
    }
    Theta { mu, v2, beta }
}

/// Mutable sampler state over a fixed dataset and prior.
pub struct GibbsState<'a> {
    graph: &'a ProcessGraph,
    stats: &'a SufficientStats,
    prior: &'a Prior,
    pub theta: Theta,
}

impl<'a> GibbsState<'a> {
    pub fn new(graph: &'a ProcessGraph, stats: &'a SufficientStats, prior: &'a Prior, theta: Theta) -> Self {
        GibbsState { graph, stats, prior, theta }
    }

    /// Redraws one coefficient from its full conditional.
    pub fn update(&mut self, coefficient: CoefficientId, rng: &mut StreamRng) {
        let value = match coefficient {
            CoefficientId::Beta(e) => {
                let c = cond_post_beta(self.graph, self.stats, self.prior, &self.theta, e);
                normal(rng, c.mean, c.variance)
            }
            CoefficientId::V2(n) => {
                let c = cond_post_v2(self.graph, self.stats, self.prior, &self.theta, n);
                inverse_gamma(rng, c.shape, c.scale)
            }
            CoefficientId::Mu(n) => {
                let c = cond_post_mu(self.graph, self.stats, self.prior, &self.theta, n);
                normal(rng, c.mean, c.variance)
            }
        };
        self.theta.set(coefficient, value);
    }

    /// One full sweep: every beta, then every v2, then every mu, each block
    /// in declaration order.
    pub fn sweep(&mut self, rng: &mut StreamRng) {
        for e in 0..self.graph.edge_count() {
            self.update(CoefficientId::Beta(EdgeId(e)), rng);
        }
        for n in 0..self.graph.node_count() {
            self.update(CoefficientId::V2(NodeId(n)), rng);
        }
        for n in 0..self.graph.node_count() {
            self.update(CoefficientId::Mu(NodeId(n)), rng);
        }
    }
}

pub fn gibbs_sample(
    graph: &ProcessGraph,
    prior: &Prior,
    data: &BatchDataset,
    config: ChainConfig,
    seed: u64,
) -> Result<PosteriorDraws, InferenceError> {
    config.validate()?;
    if data.is_empty() {
        return Err(InferenceError::EmptyDataset);
    }
    if data.width() != graph.node_count() {
        return Err(InferenceError::WidthMismatch { expected: graph.node_count(), found: data.width() });
    }
    if prior.mu0.len() != graph.node_count() || prior.theta0.len() != graph.edge_count() {
        return Err(InferenceError::PriorMismatch);
    }
    let stats = SufficientStats::from_dataset(data);
    let mut state = GibbsState::new(graph, &stats, prior, initial_theta(graph, prior, &stats));
    let mut rng = substream(seed, 0);
    let mut draws = Vec::with_capacity(config.draws());
    for t in 1..=config.iterations {
        state.sweep(&mut rng);
        if t > config.burn_in && (t - config.burn_in - 1) % config.thin == 0 {
            draws.push(state.theta.clone());
        }
    }
    Ok(PosteriorDraws { meta: ChainMeta { config, seed }, draws })
}
