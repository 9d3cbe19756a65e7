//! Sensitivity of Shapley-based criticality to model uncertainty.
//!
//! With theta uncertain, the Shapley value (or criticality) of a factor is
//! itself a random variable under the posterior. Its posterior variance is
//! split over the coefficients on the factor's paths to the output with a
//! second Shapley game, whose cost for a coefficient subset `J` is the
//! expected conditional variance given the coefficients outside `J`. That
//! cost is estimated by nested Gibbs chains and the Shapley values by
//! random permutations.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::data::BatchDataset;
use crate::inference::{GibbsState, Prior, SufficientStats};
use crate::model::{CoefficientId, EdgeId, InputFactor, NodeId, ProcessGraph, Theta};
use crate::numeric::mean_and_variance;
use crate::propagate::adjoint_weights;
use crate::rng::{derive_seed, substream};
use crate::shapley::{sv_closed_form, InputCovariance, SvReport};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MuSaError {
    #[error("need at least two posterior draws, got {0}")]
    TooFewDraws(usize),
    #[error("output node #{} is a root parameter", .0.0)]
    OutputIsCpp(NodeId),
    #[error("factor {0:?} is not a network input")]
    UnsupportedFactor(InputFactor),
    #[error("reports disagree on output or factors")]
    MismatchedReports,
    #[error("invalid setting: {0}")]
    InvalidConfig(&'static str),
    #[error("total posterior variance is zero")]
    ZeroTotalVariance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quantity {
    Shapley,
    Criticality,
}

impl Quantity {
    pub fn as_str(self) -> &'static str {
        match self {
            Quantity::Shapley => "shapley",
            Quantity::Criticality => "criticality",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "shapley" => Some(Quantity::Shapley),
            "criticality" => Some(Quantity::Criticality),
            _ => None,
        }
    }
}

/// Shapley value or criticality of `factor` on `output` at `theta`, with
/// independent inputs.
pub fn evaluate_quantity(
    graph: &ProcessGraph,
    theta: &Theta,
    factor: InputFactor,
    output: NodeId,
    quantity: Quantity,
) -> f64 {
    let adj = adjoint_weights(graph, theta, output);
    let k = factor.node().0;
    let sh = adj[k] * adj[k] * theta.v2[k];
    match quantity {
        Quantity::Shapley => sh,
        Quantity::Criticality => {
            let total: f64 = adj.iter().zip(&theta.v2).map(|(a, v)| a * a * v).sum();
            sh / total
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FactorSummary {
    pub factor: InputFactor,
    pub shapley_mean: f64,
    pub shapley_var: f64,
    pub criticality_mean: f64,
    pub criticality_var: f64,
}

/// Posterior mean and variance (divisor `B - 1`) of every factor's Shapley
/// value and criticality.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSvSummary {
    pub output: NodeId,
    pub draws: usize,
    pub entries: Vec<FactorSummary>,
}

impl PosteriorSvSummary {
    pub fn entry(&self, factor: InputFactor) -> Option<&FactorSummary> {
        self.entries.iter().find(|e| e.factor == factor)
    }
}

/// Summarises per-draw reports that share output and factor order.
pub fn summarize_reports(reports: &[SvReport]) -> Result<PosteriorSvSummary, MuSaError> {
    if reports.len() < 2 {
        return Err(MuSaError::TooFewDraws(reports.len()));
    }
    let first = &reports[0];
    let same = reports.iter().all(|r| {
        r.output == first.output
            && r.entries.len() == first.entries.len()
            && r.entries.iter().zip(&first.entries).all(|(a, b)| a.factor == b.factor)
    });
    if !same {
        return Err(MuSaError::MismatchedReports);
    }
    let entries = (0..first.entries.len())
        .map(|k| {
            let sh: Vec<f64> = reports.iter().map(|r| r.entries[k].shapley).collect();
            let cr: Vec<f64> = reports.iter().map(|r| r.entries[k].criticality).collect();
            let (sm, sv) = mean_and_variance(&sh);
            let (cm, cv) = mean_and_variance(&cr);
            FactorSummary {
                factor: first.entries[k].factor,
                shapley_mean: sm,
                shapley_var: sv,
                criticality_mean: cm,
                criticality_var: cv,
            }
        })
        .collect();
    Ok(PosteriorSvSummary { output: first.output, draws: reports.len(), entries })
}

pub fn posterior_sv_summary(
    graph: &ProcessGraph,
    draws: &[Theta],
    output: NodeId,
) -> Result<PosteriorSvSummary, MuSaError> {
    if graph.kind(output).is_root() {
        return Err(MuSaError::OutputIsCpp(output));
    }
    let reports: Vec<SvReport> = draws
        .iter()
        .map(|t| sv_closed_form(graph, t, output, &InputCovariance::Independent).expect("non-root output"))
        .collect();
    summarize_reports(&reports)
}

/// Coefficients through which the posterior of a factor's Shapley value
/// depends on theta: the factor's own variance and every beta on a directed
/// path from the factor's node to the output.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSet {
    pub coefficients: Vec<CoefficientId>,
    /// False when no directed path reaches the output; the set then holds
    /// only the variance.
    pub has_path: bool,
}

pub fn theta_path_set(graph: &ProcessGraph, factor: InputFactor, output: NodeId) -> PathSet {
    let source = factor.node();
    let from = graph.descendants_inclusive(source);
    let to = graph.ancestors_inclusive(output);
    let mut coefficients = vec![CoefficientId::V2(source)];
    for (e, edge) in graph.edges().iter().enumerate() {
        if from[edge.parent.0] && to[edge.child.0] {
            coefficients.push(CoefficientId::Beta(EdgeId(e)));
        }
    }
    PathSet { coefficients, has_path: from[output.0] }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MuSaConfig {
    /// Random permutations.
    pub permutations: usize,
    /// Posterior draws used as outer samples for each subset cost.
    pub outer_draws: usize,
    /// Draws kept from each inner chain.
    pub inner_draws: usize,
    /// Thinning of the inner chains.
    pub inner_thin: usize,
    pub seed: u64,
}

impl Default for MuSaConfig {
    fn default() -> Self {
        MuSaConfig { permutations: 500, outer_draws: 5, inner_draws: 20, inner_thin: 5, seed: 0 }
    }
}

impl MuSaConfig {
    pub fn validate(&self) -> Result<(), MuSaError> {
        if self.permutations == 0 {
            return Err(MuSaError::InvalidConfig("at least one permutation is needed"));
        }
        if self.outer_draws == 0 {
            return Err(MuSaError::InvalidConfig("at least one outer draw is needed"));
        }
        if self.inner_draws < 2 {
            return Err(MuSaError::InvalidConfig("inner chains need at least two kept draws"));
        }
        if self.inner_thin == 0 {
            return Err(MuSaError::InvalidConfig("inner thinning must be at least 1"));
        }
        Ok(())
    }

    /// Sweeps per inner chain.
    pub fn inner_sweeps(&self) -> usize {
        (self.inner_draws - 1) * self.inner_thin + 1
    }
}

const PERMUTATION_TAG: u64 = 0x7065_726d;
const COST_TAG: u64 = 0x636f_7374;

/// Everything needed to evaluate subset costs and walk permutations for one
/// factor/output pair. Costs depend only on the subset and the seed, so
/// walks may run in any order or in parallel.
pub struct MuSaProblem<'a> {
    graph: &'a ProcessGraph,
    prior: &'a Prior,
    stats: SufficientStats,
    factor: InputFactor,
    output: NodeId,
    quantity: Quantity,
    path: PathSet,
    outer: Vec<Theta>,
    posterior_draws: usize,
    full_variance: f64,
    config: MuSaConfig,
}

/// Prefix costs along one permutation of the path coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct PermutationWalk {
    /// Coefficient indices (into the path set) in visiting order.
    pub order: Vec<usize>,
    /// `costs[l]` is the cost of the first `l` coefficients; `costs[0]` is
    /// zero and the last entry is the pinned full-set variance.
    pub costs: Vec<f64>,
}

impl<'a> MuSaProblem<'a> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        graph: &'a ProcessGraph,
        prior: &'a Prior,
        data: &BatchDataset,
        draws: &[Theta],
        factor: InputFactor,
        output: NodeId,
        quantity: Quantity,
        config: MuSaConfig,
    ) -> Result<Self, MuSaError> {
        config.validate()?;
        if graph.kind(output).is_root() {
            return Err(MuSaError::OutputIsCpp(output));
        }
        if matches!(factor, InputFactor::Boundary(_))
            || factor.node().0 >= graph.node_count()
            || graph.kind(factor.node()).is_root() != matches!(factor, InputFactor::Cpp(_))
        {
            return Err(MuSaError::UnsupportedFactor(factor));
        }
        if draws.len() < 2 {
            return Err(MuSaError::TooFewDraws(draws.len()));
        }
        if config.outer_draws > draws.len() {
            return Err(MuSaError::InvalidConfig("more outer draws than posterior draws"));
        }
        let values: Vec<f64> = draws
            .iter()
            .map(|t| evaluate_quantity(graph, t, factor, output, quantity))
            .collect();
        let full_variance = mean_and_variance(&values).1;
        // Evenly spaced through the stored draws.
        let b = draws.len();
        let outer = (0..config.outer_draws)
            .map(|i| draws[(2 * i + 1) * b / (2 * config.outer_draws)].clone())
            .collect();
        Ok(MuSaProblem {
            graph,
            prior,
            stats: SufficientStats::from_dataset(data),
            factor,
            output,
            quantity,
            path: theta_path_set(graph, factor, output),
            outer,
            posterior_draws: b,
            full_variance,
            config,
        })
    }

    pub fn coefficients(&self) -> &[CoefficientId] {
        &self.path.coefficients
    }

    pub fn full_variance(&self) -> f64 {
        self.full_variance
    }

    /// Estimated expected conditional variance of the quantity when the
    /// coefficients `members` (sorted indices into the path set) are free
    /// and everything else is fixed at an outer draw.
    pub fn cost(&self, members: &[usize]) -> f64 {
        if members.is_empty() {
            return 0.0;
        }
        let mut key = Vec::with_capacity(members.len() + 1);
        key.push(COST_TAG);
        key.extend(members.iter().map(|&m| m as u64));
        let seed = derive_seed(self.config.seed, &key);

        // Betas first, then the variance, matching the full sampler's order.
        let mut scan: Vec<CoefficientId> = members
            .iter()
            .map(|&m| self.path.coefficients[m])
            .filter(|c| matches!(c, CoefficientId::Beta(_)))
            .collect();
        scan.extend(
            members
                .iter()
                .map(|&m| self.path.coefficients[m])
                .filter(|c| !matches!(c, CoefficientId::Beta(_))),
        );

        let sweeps = self.config.inner_sweeps();
        let mut total = 0.0;
        let mut kept = Vec::with_capacity(self.config.inner_draws);
        for (b, outer) in self.outer.iter().enumerate() {
            let mut rng = substream(seed, b as u64);
            let mut state = GibbsState::new(self.graph, &self.stats, self.prior, outer.clone());
            kept.clear();
            for t in 1..=sweeps {
                for &c in &scan {
                    state.update(c, &mut rng);
                }
                if (t - 1) % self.config.inner_thin == 0 {
                    kept.push(evaluate_quantity(
                        self.graph,
                        &state.theta,
                        self.factor,
                        self.output,
                        self.quantity,
                    ));
                }
            }
            total += mean_and_variance(&kept).1;
        }
        total / self.outer.len() as f64
    }

    /// Walks permutation number `index`.
    pub fn walk(&self, index: usize) -> PermutationWalk {
        let l = self.path.coefficients.len();
        let mut order: Vec<usize> = (0..l).collect();
        let mut rng = substream(derive_seed(self.config.seed, &[PERMUTATION_TAG, index as u64]), 0);
        order.shuffle(&mut rng);
        let mut costs = Vec::with_capacity(l + 1);
        costs.push(0.0);
        let mut prefix: Vec<usize> = Vec::with_capacity(l);
        for (pos, &c) in order.iter().enumerate() {
            let at = prefix.binary_search(&c).unwrap_or_else(|i| i);
            prefix.insert(at, c);
            if pos + 1 == l {
                costs.push(self.full_variance);
            } else {
                costs.push(self.cost(&prefix));
            }
        }
        PermutationWalk { order, costs }
    }

    /// Combines walks into a report. Increments are accumulated as exact
    /// integer multiples of a power-of-two unit, so per-coefficient totals
    /// telescope to the full-set variance with no rounding.
    pub fn assemble(&self, walks: &[PermutationWalk]) -> MuReport {
        let largest = walks
            .iter()
            .flat_map(|w| w.costs.iter())
            .fold(libm::fabs(self.full_variance), |m, c| m.max(libm::fabs(*c)));
        let anchor = if self.full_variance != 0.0 { self.full_variance } else { largest };
        let unit = if anchor != 0.0 && anchor.is_finite() {
            let (_, e) = libm::frexp(anchor);
            libm::ldexp(1.0, e - 53)
        } else {
            1.0
        };
        let to_ticks = |x: f64| -> i128 { libm::round(x / unit) as i128 };
        let l = self.path.coefficients.len();
        let mut ticks = vec![0i128; l];
        for w in walks {
            let mut prev = 0i128;
            for (pos, &c) in w.order.iter().enumerate() {
                let cur = to_ticks(w.costs[pos + 1]);
                ticks[c] += cur - prev;
                prev = cur;
            }
        }
        let n = walks.len() as f64;
        let contributions = self
            .path
            .coefficients
            .iter()
            .zip(&ticks)
            .map(|(&coefficient, &t)| MuContribution { coefficient, shapley: t as f64 * unit / n, ticks: t })
            .collect();
        MuReport {
            factor: self.factor,
            output: self.output,
            quantity: self.quantity,
            config: self.config,
            posterior_draws: self.posterior_draws,
            has_path: self.path.has_path,
            full_variance: self.full_variance,
            tick_unit: unit,
            full_ticks: to_ticks(self.full_variance),
            permutations: walks.len(),
            contributions,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MuContribution {
    pub coefficient: CoefficientId,
    /// Estimated Shapley value of the coefficient in the variance game.
    pub shapley: f64,
    /// Sum over permutations of the coefficient's increments, in ticks.
    pub ticks: i128,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MuReport {
    pub factor: InputFactor,
    pub output: NodeId,
    pub quantity: Quantity,
    pub config: MuSaConfig,
    pub posterior_draws: usize,
    pub has_path: bool,
    /// Posterior variance of the quantity over all draws.
    pub full_variance: f64,
    pub tick_unit: f64,
    pub full_ticks: i128,
    pub permutations: usize,
    pub contributions: Vec<MuContribution>,
}

impl MuReport {
    pub fn tick_total(&self) -> i128 {
        self.contributions.iter().map(|c| c.ticks).sum()
    }

    /// Sum of contributions, evaluated in integer ticks.
    pub fn telescoped_total(&self) -> f64 {
        let per_walk = self.tick_total() / self.permutations as i128;
        per_walk as f64 * self.tick_unit
    }

    pub fn contribution(&self, coefficient: CoefficientId) -> Option<&MuContribution> {
        self.contributions.iter().find(|c| c.coefficient == coefficient)
    }
}

/// Share of the posterior variance attributed to each coefficient. Shares
/// may be negative; they sum to one.
pub fn mu_proportions(report: &MuReport) -> Result<Vec<(CoefficientId, f64)>, MuSaError> {
    if report.full_variance == 0.0 {
        return Err(MuSaError::ZeroTotalVariance);
    }
    Ok(report
        .contributions
        .iter()
        .map(|c| (c.coefficient, c.shapley / report.full_variance))
        .collect())
}

/// Coefficient-level attribution of the posterior variance of `quantity`,
/// walking every permutation in order.
#[allow(clippy::too_many_arguments)]
pub fn appro_shapley_mu(
    graph: &ProcessGraph,
    prior: &Prior,
    data: &BatchDataset,
    draws: &[Theta],
    factor: InputFactor,
    output: NodeId,
    quantity: Quantity,
    config: MuSaConfig,
) -> Result<MuReport, MuSaError> {
    let problem = MuSaProblem::new(graph, prior, data, draws, factor, output, quantity, config)?;
    let walks: Vec<PermutationWalk> = (0..config.permutations).map(|i| problem.walk(i)).collect();
    Ok(problem.assemble(&walks))
}

/// Single subset cost, for callers that do not walk permutations.
pub fn nested_gibbs_cost(problem: &MuSaProblem<'_>, members: &[usize]) -> f64 {
    let mut sorted = members.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    problem.cost(&sorted)
}
