//! Command-line surface. [`run`] parses arguments, executes one subcommand
//! and returns the process exit status; failures are printed to stderr as
//! `{"error": {"kind": ..., "message": ...}}`.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use bn_shapley_core::data::BatchDataset;
use bn_shapley_core::inference::{chain_diagnostics, gibbs_sample, prior_with, ChainConfig, PriorSettings};
use bn_shapley_core::model::{input_factors, InputFactor, NodeId, Theta};
use bn_shapley_core::mu_sa::{summarize_reports, MuSaConfig, MuSaProblem, Quantity};
use bn_shapley_core::shapley::{
    BoundaryCovariance, CovarianceMatrix, CovarianceSource, InputCovariance, SvReport, VarianceGame,
};
use bn_shapley_core::simgen::generate_batches;
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::atomic::write_atomic;
use crate::data_csv::{data_to_csv, read_data};
use crate::dot::export_dot;
use crate::draws_file::{draws_to_text, parse_draws, DrawsFile};
use crate::error::{Error, Result};
use crate::network_file::{five_node_network, mabs_network, network_to_json, parse_network, Network};
use crate::parallel::{thread_pool, walk_all};
use crate::report_file::{
    mu_report_to_json, parse_report, sha256_hex, summary_means, summary_to_json, sv_report_to_json, Provenance,
    Report,
};

#[derive(Debug, Parser)]
#[command(name = "bn-shapley", version, about = "Shapley-value risk and model-uncertainty analysis on linear-Gaussian process networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct NetworkArg {
    /// Network file (JSON). Defaults to the built-in 20-node mAbs line.
    #[arg(long)]
    network: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Builtin {
    Mabs,
    FiveNode,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum CovArg {
    Independent,
    Model,
    Data,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum QuantityArg {
    Shapley,
    Criticality,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a built-in network file.
    Network {
        #[arg(long, value_enum, default_value = "mabs")]
        builtin: Builtin,
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate batch records from a parameterised network.
    Simulate {
        #[command(flatten)]
        network: NetworkArg,
        /// Complete batches.
        #[arg(long, default_value_t = 30)]
        batches: usize,
        /// Additional batches observed only on `--subgraph`.
        #[arg(long, default_value_t = 0)]
        incomplete: usize,
        /// Scope of the incomplete batches: a named sub-graph or a
        /// comma-separated node list.
        #[arg(long)]
        subgraph: Option<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sample the parameter posterior from batch data.
    Fit {
        #[command(flatten)]
        network: NetworkArg,
        #[arg(long)]
        data: PathBuf,
        /// Total Gibbs sweeps, burn-in included.
        #[arg(long, default_value_t = 10_500)]
        iters: usize,
        #[arg(long, default_value_t = 500)]
        burnin: usize,
        #[arg(long, default_value_t = 10)]
        thin: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        sigma0_sq: Option<f64>,
        #[arg(long)]
        tau0_sq: Option<f64>,
        #[arg(long)]
        kappa0: Option<f64>,
        #[arg(long)]
        lambda0: Option<f64>,
        #[arg(long)]
        theta0: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Shapley values at the network's parameters, or their posterior
    /// summary over a draws file.
    Sv {
        #[command(flatten)]
        network: NetworkArg,
        #[arg(long)]
        draws: Option<PathBuf>,
        #[arg(long)]
        output_node: String,
        #[arg(long)]
        subgraph: Option<String>,
        #[arg(long, value_enum, default_value = "independent")]
        cov: CovArg,
        /// Batch data, required by `--cov data`.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Attribute the posterior variance of a Shapley value or criticality
    /// to individual coefficients.
    Musa {
        #[command(flatten)]
        network: NetworkArg,
        #[arg(long)]
        draws: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// A CPP name, or a CQA name (its residual) optionally written `e:NAME`.
        #[arg(long)]
        input_factor: String,
        #[arg(long)]
        output_node: String,
        #[arg(long, value_enum, default_value = "criticality")]
        quantity: QuantityArg,
        #[arg(long, default_value_t = 500)]
        npi: usize,
        #[arg(long, default_value_t = 5)]
        bo: usize,
        #[arg(long, default_value_t = 20)]
        bi: usize,
        /// Thinning of the inner chains.
        #[arg(long, default_value_t = 5)]
        inner_thin: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render reports onto the network as Graphviz DOT.
    Dot {
        #[command(flatten)]
        network: NetworkArg,
        /// Shapley report or posterior summary.
        #[arg(long)]
        sv: Option<PathBuf>,
        /// Model-uncertainty report.
        #[arg(long)]
        mu: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// The network and the digest of its serialised form.
fn load(arg: &NetworkArg) -> Result<(Network, String)> {
    match &arg.network {
        Some(path) => {
            let text = read_text(path)?;
            let net = parse_network(&text)?;
            Ok((net, sha256_hex(text.as_bytes())))
        }
        None => {
            let net = mabs_network();
            let digest = sha256_hex(network_to_json(&net).as_bytes());
            Ok((net, digest))
        }
    }
}

fn load_data(path: &Path, net: &Network) -> Result<(BatchDataset, String)> {
    let bytes = read_bytes(path)?;
    let data = read_data(bytes.as_slice(), &net.graph)?;
    Ok((data, sha256_hex(&bytes)))
}

fn load_draws(path: &Path, net: &Network) -> Result<(DrawsFile, String)> {
    let text = read_text(path)?;
    let file = parse_draws(&text, &net.graph)?;
    Ok((file, sha256_hex(text.as_bytes())))
}

fn parse_output(net: &Network, name: &str) -> Result<NodeId> {
    let id = net.node(name)?;
    if net.graph.kind(id).is_root() {
        return Err(Error::Usage(format!("output node `{name}` is a CPP; choose a CQA or response")));
    }
    Ok(id)
}

fn musa_factor(net: &Network, label: &str) -> Result<InputFactor> {
    let name = label.strip_prefix("e:").unwrap_or(label);
    let id = net.node(name)?;
    Ok(if net.graph.kind(id).is_root() {
        if label.starts_with("e:") {
            return Err(Error::Usage(format!("`{name}` is a CPP and has no residual")));
        }
        InputFactor::Cpp(id)
    } else {
        InputFactor::Residual(id)
    })
}

/// Full-graph covariance with CPP cross terms estimated from data; residual
/// factors keep their model variances.
fn sample_input_covariance(
    net: &Network,
    theta: &Theta,
    data: &BatchDataset,
) -> Result<CovarianceMatrix> {
    let factors = input_factors(&net.graph);
    let roots: Vec<NodeId> =
        factors.iter().filter(|f| matches!(f, InputFactor::Cpp(_))).map(|f| f.node()).collect();
    let sample = data
        .sample_covariance(&roots)
        .ok_or_else(|| Error::Usage("--cov data needs at least two rows observing every CPP".into()))?;
    let k = factors.len();
    let r = roots.len();
    let mut m = vec![0.0; k * k];
    for (i, f) in factors.iter().enumerate() {
        match f {
            InputFactor::Cpp(_) => {
                for j in 0..r {
                    m[i * k + j] = sample[i * r + j];
                }
            }
            _ => m[i * k + i] = theta.v2[f.node().0],
        }
    }
    CovarianceMatrix::new(k, m).map_err(|e| Error::Shapley(e.into()))
}

fn sv_at(
    net: &Network,
    theta: &Theta,
    output: NodeId,
    subgraph: Option<&[NodeId]>,
    cov: CovArg,
    data: Option<&BatchDataset>,
) -> Result<SvReport> {
    let g = &net.graph;
    let game = match subgraph {
        Some(nodes) => {
            let boundary = match cov {
                CovArg::Independent => BoundaryCovariance::Independent,
                CovArg::Model => BoundaryCovariance::ModelPropagated,
                CovArg::Data => BoundaryCovariance::Sample(data.expect("checked by caller")),
            };
            VarianceGame::subgraph(g, theta, nodes, output, boundary)?
        }
        None => match cov {
            CovArg::Independent => VarianceGame::full_graph(g, theta, output, &InputCovariance::Independent)?,
            CovArg::Model => VarianceGame::full_graph(g, theta, output, &InputCovariance::ModelPropagated)?,
            CovArg::Data => {
                let m = sample_input_covariance(net, theta, data.expect("checked by caller"))?;
                let mut game = VarianceGame::full_graph(g, theta, output, &InputCovariance::UserSupplied(m))?;
                game.source = CovarianceSource::SampleEstimate;
                game
            }
        },
    };
    Ok(game.report())
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Network { builtin, out } => {
            let net = match builtin {
                Builtin::Mabs => mabs_network(),
                Builtin::FiveNode => five_node_network(),
            };
            write_atomic(&out, network_to_json(&net).as_bytes())
        }
        Command::Simulate { network, batches, incomplete, subgraph, seed, out } => {
            let (net, _) = load(&network)?;
            let theta = net.require_theta()?;
            let scope = subgraph.as_deref().map(|s| net.resolve_nodes(s)).transpose()?;
            if incomplete > 0 && scope.is_none() {
                return Err(Error::Usage("--incomplete needs --subgraph".into()));
            }
            let data = generate_batches(&net.graph, theta, batches, incomplete, scope.as_deref(), seed)?;
            write_atomic(&out, data_to_csv(&data, &net.graph).as_bytes())
        }
        Command::Fit {
            network,
            data,
            iters,
            burnin,
            thin,
            seed,
            sigma0_sq,
            tau0_sq,
            kappa0,
            lambda0,
            theta0,
            out,
        } => {
            let (net, _) = load(&network)?;
            let (data, _) = load_data(&data, &net)?;
            let d = PriorSettings::default();
            let settings = PriorSettings {
                sigma0_sq: sigma0_sq.unwrap_or(d.sigma0_sq),
                tau0_sq: tau0_sq.unwrap_or(d.tau0_sq),
                kappa0: kappa0.unwrap_or(d.kappa0),
                lambda0: lambda0.unwrap_or(d.lambda0),
                theta0: theta0.unwrap_or(d.theta0),
            };
            let prior = prior_with(&net.graph, Some(&data), settings)?;
            let config = ChainConfig { iterations: iters, burn_in: burnin, thin };
            let draws = gibbs_sample(&net.graph, &prior, &data, config, seed)?;
            let min_ess = chain_diagnostics(&net.graph, &draws)
                .into_iter()
                .map(|(_, ess)| ess)
                .fold(f64::INFINITY, f64::min);
            let file = DrawsFile { draws, prior: settings };
            write_atomic(&out, draws_to_text(&file, &net.graph).as_bytes())?;
            println!(
                "{}",
                serde_json::json!({ "draws": file.draws.draws.len(), "min_effective_sample_size": min_ess })
            );
            Ok(())
        }
        Command::Sv { network, draws, output_node, subgraph, cov, data, out } => {
            let (net, network_sha256) = load(&network)?;
            let output = parse_output(&net, &output_node)?;
            let nodes = subgraph.as_deref().map(|s| net.resolve_nodes(s)).transpose()?;
            let data = data.as_deref().map(|p| load_data(p, &net)).transpose()?;
            if matches!(cov, CovArg::Data) && data.is_none() {
                return Err(Error::Usage("--cov data needs --data".into()));
            }
            let mut prov = Provenance {
                network_sha256,
                data_sha256: data.as_ref().map(|(_, h)| h.clone()),
                subgraph: nodes.as_ref().map(|ns| ns.iter().map(|&n| net.graph.name(n).to_string()).collect()),
                ..Provenance::default()
            };
            let data_ref = data.as_ref().map(|(d, _)| d);
            let text = match draws {
                None => {
                    let theta = net.require_theta()?;
                    let report = sv_at(&net, theta, output, nodes.as_deref(), cov, data_ref)?;
                    sv_report_to_json(&net.graph, &report, &prov)
                }
                Some(path) => {
                    let (file, digest) = load_draws(&path, &net)?;
                    prov.draws_sha256 = Some(digest);
                    prov.chain = Some(file.draws.meta);
                    prov.prior = Some(file.prior);
                    let reports = file
                        .draws
                        .draws
                        .iter()
                        .map(|t| sv_at(&net, t, output, nodes.as_deref(), cov, data_ref))
                        .collect::<Result<Vec<_>>>()?;
                    let summary = summarize_reports(&reports)?;
                    summary_to_json(&net.graph, &summary, &prov)
                }
            };
            write_atomic(&out, text.as_bytes())
        }
        Command::Musa {
            network,
            draws,
            data,
            input_factor,
            output_node,
            quantity,
            npi,
            bo,
            bi,
            inner_thin,
            seed,
            out,
        } => {
            let (net, network_sha256) = load(&network)?;
            let output = parse_output(&net, &output_node)?;
            let factor = musa_factor(&net, &input_factor)?;
            let (data, data_sha256) = load_data(&data, &net)?;
            let (file, draws_sha256) = load_draws(&draws, &net)?;
            let prior = prior_with(&net.graph, Some(&data), file.prior)?;
            let quantity = match quantity {
                QuantityArg::Shapley => Quantity::Shapley,
                QuantityArg::Criticality => Quantity::Criticality,
            };
            let config = MuSaConfig { permutations: npi, outer_draws: bo, inner_draws: bi, inner_thin, seed };
            let problem =
                MuSaProblem::new(&net.graph, &prior, &data, &file.draws.draws, factor, output, quantity, config)?;
            let walks = thread_pool().install(|| walk_all(&problem, config.permutations));
            let report = problem.assemble(&walks);
            let prov = Provenance {
                network_sha256,
                data_sha256: Some(data_sha256),
                draws_sha256: Some(draws_sha256),
                subgraph: None,
                chain: Some(file.draws.meta),
                prior: Some(file.prior),
            };
            write_atomic(&out, mu_report_to_json(&net.graph, &report, &prov).as_bytes())
        }
        Command::Dot { network, sv, mu, out } => {
            let (net, _) = load(&network)?;
            if sv.is_none() && mu.is_none() {
                return Err(Error::Usage("dot needs --sv, --mu or both".into()));
            }
            let sv_report = match sv {
                Some(path) => match parse_report(&read_text(&path)?, &net.graph)?.0 {
                    Report::Sv(r) => Some(r),
                    Report::Summary(s) => Some(summary_means(&s)),
                    Report::Mu(_) => return Err(Error::Usage("--sv expects a Shapley report".into())),
                },
                None => None,
            };
            let mu_report = match mu {
                Some(path) => match parse_report(&read_text(&path)?, &net.graph)?.0 {
                    Report::Mu(m) => Some(m),
                    other => {
                        return Err(Error::Usage(format!("--mu expects a mu-report, got {}", other.kind())));
                    }
                },
                None => None,
            };
            let text = export_dot(&net.graph, sv_report.as_ref(), mu_report.as_ref())?;
            write_atomic(&out, text.as_bytes())
        }
    }
}

fn report_error(kind: &str, message: &str) {
    eprintln!("{}", serde_json::json!({ "error": { "kind": kind, "message": message } }));
}

/// Runs the command line `args` (program name first) and returns the exit
/// status: 0 on success, 1 when the command fails, 2 on bad usage.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            report_error("usage", e.to_string().trim_end());
            return 2;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            report_error(e.kind(), &e.to_string());
            if matches!(e, Error::Usage(_)) {
                2
            } else {
                1
            }
        }
    }
}
