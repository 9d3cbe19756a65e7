//! JSON report documents.
//!
//! Every report sits in an envelope:
//!
//! ```json
//! {
//!   "format_version": 1,
//!   "kind": "sv-report",
//!   "provenance": { "network_sha256": "...", "chain": null, ... },
//!   "report": { ... }
//! }
//! ```
//!
//! `kind` is one of `sv-report`, `posterior-sv-summary` or `mu-report`.
//! Nodes, factors and coefficients are referred to by name, so loading
//! needs the network the report was produced from. Tick counts are
//! decimal strings because they can exceed 64 bits.

use bn_shapley_core::inference::{ChainConfig, ChainMeta, PriorSettings};
use bn_shapley_core::model::{CoefficientId, InputFactor, NodeId, ProcessGraph};
use bn_shapley_core::mu_sa::{FactorSummary, MuContribution, MuReport, MuSaConfig, PosteriorSvSummary, Quantity};
use bn_shapley_core::shapley::{CovarianceSource, SvEntry, SvReport};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const REPORT_FORMAT_VERSION: u64 = 1;

/// Inputs a report was computed from, sufficient to replay it.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Provenance {
    pub network_sha256: String,
    pub data_sha256: Option<String>,
    pub draws_sha256: Option<String>,
    /// Node names of the analysed sub-graph, when not the whole network.
    pub subgraph: Option<Vec<String>>,
    pub chain: Option<ChainMeta>,
    pub prior: Option<PriorSettings>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChainDoc {
    iterations: usize,
    burn_in: usize,
    thin: usize,
    seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PriorDoc {
    sigma0_sq: f64,
    tau0_sq: f64,
    kappa0: f64,
    lambda0: f64,
    theta0: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProvenanceDoc {
    network_sha256: String,
    data_sha256: Option<String>,
    draws_sha256: Option<String>,
    subgraph: Option<Vec<String>>,
    chain: Option<ChainDoc>,
    prior: Option<PriorDoc>,
}

impl From<&Provenance> for ProvenanceDoc {
    fn from(p: &Provenance) -> Self {
        ProvenanceDoc {
            network_sha256: p.network_sha256.clone(),
            data_sha256: p.data_sha256.clone(),
            draws_sha256: p.draws_sha256.clone(),
            subgraph: p.subgraph.clone(),
            chain: p.chain.map(|c| ChainDoc {
                iterations: c.config.iterations,
                burn_in: c.config.burn_in,
                thin: c.config.thin,
                seed: c.seed,
            }),
            prior: p.prior.map(|s| PriorDoc {
                sigma0_sq: s.sigma0_sq,
                tau0_sq: s.tau0_sq,
                kappa0: s.kappa0,
                lambda0: s.lambda0,
                theta0: s.theta0,
            }),
        }
    }
}

impl From<ProvenanceDoc> for Provenance {
    fn from(d: ProvenanceDoc) -> Self {
        Provenance {
            network_sha256: d.network_sha256,
            data_sha256: d.data_sha256,
            draws_sha256: d.draws_sha256,
            subgraph: d.subgraph,
            chain: d.chain.map(|c| ChainMeta {
                config: ChainConfig { iterations: c.iterations, burn_in: c.burn_in, thin: c.thin },
                seed: c.seed,
            }),
            prior: d.prior.map(|p| PriorSettings {
                sigma0_sq: p.sigma0_sq,
                tau0_sq: p.tau0_sq,
                kappa0: p.kappa0,
                lambda0: p.lambda0,
                theta0: p.theta0,
            }),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SvEntryDoc {
    factor: String,
    shapley: f64,
    criticality: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SvReportDoc {
    output: String,
    covariance: String,
    total_variance: f64,
    entries: Vec<SvEntryDoc>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SummaryEntryDoc {
    factor: String,
    shapley_mean: f64,
    shapley_var: f64,
    criticality_mean: f64,
    criticality_var: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SummaryDoc {
    output: String,
    draws: usize,
    entries: Vec<SummaryEntryDoc>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MuConfigDoc {
    permutations: usize,
    outer_draws: usize,
    inner_draws: usize,
    inner_thin: usize,
    seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MuContributionDoc {
    coefficient: String,
    shapley: f64,
    /// Informational; recomputed from `shapley` on load.
    proportion: Option<f64>,
    ticks: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MuReportDoc {
    factor: String,
    output: String,
    quantity: String,
    config: MuConfigDoc,
    posterior_draws: usize,
    has_path: bool,
    full_variance: f64,
    tick_unit: f64,
    full_ticks: String,
    permutations: usize,
    contributions: Vec<MuContributionDoc>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", content = "report", rename_all = "kebab-case")]
enum ReportBody {
    SvReport(SvReportDoc),
    PosteriorSvSummary(SummaryDoc),
    MuReport(MuReportDoc),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Envelope {
    format_version: u64,
    provenance: ProvenanceDoc,
    #[serde(flatten)]
    body: ReportBody,
}

/// A report of any kind, as loaded from disk.
#[derive(Debug, Clone, PartialEq)]
pub enum Report {
    Sv(SvReport),
    Summary(PosteriorSvSummary),
    Mu(MuReport),
}

impl Report {
    pub fn kind(&self) -> &'static str {
        match self {
            Report::Sv(_) => "sv-report",
            Report::Summary(_) => "posterior-sv-summary",
            Report::Mu(_) => "mu-report",
        }
    }
}

fn mismatch(what: &str, name: &str) -> Error {
    Error::ReportGraphMismatch(format!("{what} `{name}` is not in the network"))
}

fn node_by_name(graph: &ProcessGraph, name: &str) -> Result<NodeId> {
    graph.node_id(name).ok_or_else(|| mismatch("node", name))
}

fn factor_by_label(graph: &ProcessGraph, label: &str) -> Result<InputFactor> {
    graph.parse_factor(label).ok_or_else(|| mismatch("input factor", label))
}

fn ticks_from(s: &str) -> Result<i128> {
    s.parse().map_err(|_| Error::Parse { line: 0, column: 0, message: format!("`{s}` is not a tick count") })
}

fn sv_doc(graph: &ProcessGraph, r: &SvReport) -> SvReportDoc {
    SvReportDoc {
        output: graph.name(r.output).to_string(),
        covariance: r.covariance.as_str().to_string(),
        total_variance: r.total_variance,
        entries: r
            .entries
            .iter()
            .map(|e| SvEntryDoc { factor: graph.factor_label(e.factor), shapley: e.shapley, criticality: e.criticality })
            .collect(),
    }
}

fn summary_doc(graph: &ProcessGraph, s: &PosteriorSvSummary) -> SummaryDoc {
    SummaryDoc {
        output: graph.name(s.output).to_string(),
        draws: s.draws,
        entries: s
            .entries
            .iter()
            .map(|e| SummaryEntryDoc {
                factor: graph.factor_label(e.factor),
                shapley_mean: e.shapley_mean,
                shapley_var: e.shapley_var,
                criticality_mean: e.criticality_mean,
                criticality_var: e.criticality_var,
            })
            .collect(),
    }
}

fn mu_doc(graph: &ProcessGraph, r: &MuReport) -> MuReportDoc {
    let c = r.config;
    MuReportDoc {
        factor: graph.factor_label(r.factor),
        output: graph.name(r.output).to_string(),
        quantity: r.quantity.as_str().to_string(),
        config: MuConfigDoc {
            permutations: c.permutations,
            outer_draws: c.outer_draws,
            inner_draws: c.inner_draws,
            inner_thin: c.inner_thin,
            seed: c.seed,
        },
        posterior_draws: r.posterior_draws,
        has_path: r.has_path,
        full_variance: r.full_variance,
        tick_unit: r.tick_unit,
        full_ticks: r.full_ticks.to_string(),
        permutations: r.permutations,
        contributions: r
            .contributions
            .iter()
            .map(|m| MuContributionDoc {
                coefficient: m.coefficient.label(graph),
                shapley: m.shapley,
                proportion: (r.full_variance != 0.0).then(|| m.shapley / r.full_variance),
                ticks: m.ticks.to_string(),
            })
            .collect(),
    }
}

fn render(body: ReportBody, provenance: &Provenance) -> String {
    let env = Envelope { format_version: REPORT_FORMAT_VERSION, provenance: provenance.into(), body };
    let mut s = serde_json::to_string_pretty(&env).expect("report serialises");
    s.push('\n');
    s
}

pub fn sv_report_to_json(graph: &ProcessGraph, report: &SvReport, provenance: &Provenance) -> String {
    render(ReportBody::SvReport(sv_doc(graph, report)), provenance)
}

pub fn summary_to_json(graph: &ProcessGraph, summary: &PosteriorSvSummary, provenance: &Provenance) -> String {
    render(ReportBody::PosteriorSvSummary(summary_doc(graph, summary)), provenance)
}

pub fn mu_report_to_json(graph: &ProcessGraph, report: &MuReport, provenance: &Provenance) -> String {
    render(ReportBody::MuReport(mu_doc(graph, report)), provenance)
}

pub fn report_to_json(graph: &ProcessGraph, report: &Report, provenance: &Provenance) -> String {
    match report {
        Report::Sv(r) => sv_report_to_json(graph, r, provenance),
        Report::Summary(s) => summary_to_json(graph, s, provenance),
        Report::Mu(m) => mu_report_to_json(graph, m, provenance),
    }
}

pub fn parse_report(text: &str, graph: &ProcessGraph) -> Result<(Report, Provenance)> {
    // Check the version before the body so a future layout reports the
    // version, not a schema error.
    #[derive(Deserialize)]
    struct VersionOnly {
        format_version: u64,
    }
    let v: VersionOnly = serde_json::from_str(text).map_err(Error::json)?;
    if v.format_version != REPORT_FORMAT_VERSION {
        return Err(Error::UnsupportedVersion { found: v.format_version, expected: REPORT_FORMAT_VERSION });
    }
    let env: Envelope = serde_json::from_str(text).map_err(Error::json)?;
    let report = match env.body {
        ReportBody::SvReport(d) => {
            let covariance = CovarianceSource::parse(&d.covariance).ok_or_else(|| Error::Parse {
                line: 0,
                column: 0,
                message: format!("unknown covariance source `{}`", d.covariance),
            })?;
            let entries = d
                .entries
                .iter()
                .map(|e| {
                    Ok(SvEntry { factor: factor_by_label(graph, &e.factor)?, shapley: e.shapley, criticality: e.criticality })
                })
                .collect::<Result<_>>()?;
            Report::Sv(SvReport {
                output: node_by_name(graph, &d.output)?,
                total_variance: d.total_variance,
                covariance,
                entries,
            })
        }
        ReportBody::PosteriorSvSummary(d) => {
            let entries = d
                .entries
                .iter()
                .map(|e| {
                    Ok(FactorSummary {
                        factor: factor_by_label(graph, &e.factor)?,
                        shapley_mean: e.shapley_mean,
                        shapley_var: e.shapley_var,
                        criticality_mean: e.criticality_mean,
                        criticality_var: e.criticality_var,
                    })
                })
                .collect::<Result<_>>()?;
            Report::Summary(PosteriorSvSummary { output: node_by_name(graph, &d.output)?, draws: d.draws, entries })
        }
        ReportBody::MuReport(d) => {
            let quantity = Quantity::parse(&d.quantity).ok_or_else(|| Error::Parse {
                line: 0,
                column: 0,
                message: format!("unknown quantity `{}`", d.quantity),
            })?;
            let contributions = d
                .contributions
                .iter()
                .map(|c| {
                    Ok(MuContribution {
                        coefficient: CoefficientId::parse(graph, &c.coefficient)
                            .ok_or_else(|| mismatch("coefficient", &c.coefficient))?,
                        shapley: c.shapley,
                        ticks: ticks_from(&c.ticks)?,
                    })
                })
                .collect::<Result<_>>()?;
            Report::Mu(MuReport {
                factor: factor_by_label(graph, &d.factor)?,
                output: node_by_name(graph, &d.output)?,
                quantity,
                config: MuSaConfig {
                    permutations: d.config.permutations,
                    outer_draws: d.config.outer_draws,
                    inner_draws: d.config.inner_draws,
                    inner_thin: d.config.inner_thin,
                    seed: d.config.seed,
                },
                posterior_draws: d.posterior_draws,
                has_path: d.has_path,
                full_variance: d.full_variance,
                tick_unit: d.tick_unit,
                full_ticks: ticks_from(&d.full_ticks)?,
                permutations: d.permutations,
                contributions,
            })
        }
    };
    Ok((report, env.provenance.into()))
}

pub fn load_report(path: &std::path::Path, graph: &ProcessGraph) -> Result<(Report, Provenance)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_report(&text, graph)
}

/// Posterior means of a summary, shaped as a point report for display.
pub fn summary_means(summary: &PosteriorSvSummary) -> SvReport {
    let entries: Vec<SvEntry> = summary
        .entries
        .iter()
        .map(|e| SvEntry { factor: e.factor, shapley: e.shapley_mean, criticality: e.criticality_mean })
        .collect();
    SvReport {
        output: summary.output,
        total_variance: entries.iter().map(|e| e.shapley).sum(),
        covariance: CovarianceSource::Independent,
        entries,
    }
}
