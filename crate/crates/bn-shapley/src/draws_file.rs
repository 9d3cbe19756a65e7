//! Posterior draws as columnar text.
//!
//! ```text
//! format_version=1
//! kind=posterior-draws
//! iterations=10500
//! burn_in=500
//! thin=10
//! seed=42
//! sigma0_sq=1000000.0
//! tau0_sq=1000000.0
//! kappa0=0.02
//! lambda0=0.02
//! theta0=0.0
//! count=1000
//! columns_sha256=<hex digest of the next line>
//! mu:X1,mu:X2,...,v2:X1,...,beta:X1->X5,...
//! 1.81,7.02,...
//! ```
//!
//! The digest ties the numeric block to the column layout; loading also
//! checks every column against the network.

use std::fmt::Write as _;

use bn_shapley_core::inference::{ChainConfig, ChainMeta, PosteriorDraws, PriorSettings};
use bn_shapley_core::model::{coefficient_ids, CoefficientId, ProcessGraph, Theta};

use crate::error::{Error, Result};
use crate::report_file::sha256_hex;

pub const DRAWS_FORMAT_VERSION: u64 = 1;

/// Draws together with the prior settings they were sampled under.
#[derive(Debug, Clone, PartialEq)]
pub struct DrawsFile {
    pub draws: PosteriorDraws,
    pub prior: PriorSettings,
}

fn column_header(graph: &ProcessGraph) -> String {
    coefficient_ids(graph).iter().map(|c| c.label(graph)).collect::<Vec<_>>().join(",")
}

pub fn draws_to_text(file: &DrawsFile, graph: &ProcessGraph) -> String {
    let meta = file.draws.meta;
    let p = file.prior;
    let header = column_header(graph);
    let mut out = String::new();
    let _ = writeln!(out, "format_version={DRAWS_FORMAT_VERSION}");
    let _ = writeln!(out, "kind=posterior-draws");
    let _ = writeln!(out, "iterations={}", meta.config.iterations);
    let _ = writeln!(out, "burn_in={}", meta.config.burn_in);
    let _ = writeln!(out, "thin={}", meta.config.thin);
    let _ = writeln!(out, "seed={}", meta.seed);
    let _ = writeln!(out, "sigma0_sq={:?}", p.sigma0_sq);
    let _ = writeln!(out, "tau0_sq={:?}", p.tau0_sq);
    let _ = writeln!(out, "kappa0={:?}", p.kappa0);
    let _ = writeln!(out, "lambda0={:?}", p.lambda0);
    let _ = writeln!(out, "theta0={:?}", p.theta0);
    let _ = writeln!(out, "count={}", file.draws.draws.len());
    let _ = writeln!(out, "columns_sha256={}", sha256_hex(header.as_bytes()));
    out.push_str(&header);
    out.push('\n');
    let ids = coefficient_ids(graph);
    for theta in &file.draws.draws {
        let mut first = true;
        for &id in &ids {
            if !first {
                out.push(',');
            }
            first = false;
            let _ = write!(out, "{:?}", theta.get(id));
        }
        out.push('\n');
    }
    out
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Lines<'a> {
    fn next_line(&mut self) -> Result<(usize, &'a str)> {
        self.inner
            .next()
            .map(|(i, l)| (i + 1, l))
            .ok_or(Error::Parse { line: 0, column: 0, message: "unexpected end of draws file".into() })
    }

    fn field(&mut self, key: &str) -> Result<(usize, &'a str)> {
        let (line, text) = self.next_line()?;
        let value = text
            .strip_prefix(key)
            .and_then(|r| r.strip_prefix('='))
            .ok_or_else(|| Error::Parse { line, column: 1, message: format!("expected `{key}=`") })?;
        Ok((line, value))
    }

    fn parsed<T: std::str::FromStr>(&mut self, key: &str) -> Result<T> {
        let (line, value) = self.field(key)?;
        value
            .parse()
            .map_err(|_| Error::Parse { line, column: key.len() + 2, message: format!("bad value for `{key}`") })
    }
}

pub fn parse_draws(text: &str, graph: &ProcessGraph) -> Result<DrawsFile> {
    let mut lines = Lines { inner: text.lines().enumerate() };
    let version: u64 = lines.parsed("format_version")?;
    if version != DRAWS_FORMAT_VERSION {
        return Err(Error::UnsupportedVersion { found: version, expected: DRAWS_FORMAT_VERSION });
    }
    let (line, kind) = lines.field("kind")?;
    if kind != "posterior-draws" {
        return Err(Error::Parse { line, column: 6, message: format!("unexpected kind `{kind}`") });
    }
    let config = ChainConfig {
        iterations: lines.parsed("iterations")?,
        burn_in: lines.parsed("burn_in")?,
        thin: lines.parsed("thin")?,
    };
    let seed: u64 = lines.parsed("seed")?;
    let prior = PriorSettings {
        sigma0_sq: lines.parsed("sigma0_sq")?,
        tau0_sq: lines.parsed("tau0_sq")?,
        kappa0: lines.parsed("kappa0")?,
        lambda0: lines.parsed("lambda0")?,
        theta0: lines.parsed("theta0")?,
    };
    let count: usize = lines.parsed("count")?;
    let (_, digest) = lines.field("columns_sha256")?;
    let (header_line, header) = lines.next_line()?;
    if sha256_hex(header.as_bytes()) != digest {
        return Err(Error::ChecksumMismatch);
    }
    let ids: Vec<CoefficientId> = header
        .split(',')
        .map(|label| {
            CoefficientId::parse(graph, label)
                .ok_or_else(|| Error::ReportGraphMismatch(format!("draws column `{label}` is not a coefficient of the network")))
        })
        .collect::<Result<_>>()?;
    if ids != coefficient_ids(graph) {
        return Err(Error::ReportGraphMismatch(format!(
            "draws columns (line {header_line}) do not match the network's coefficients"
        )));
    }

    let n = graph.node_count();
    let m = graph.edge_count();
    let mut draws = Vec::with_capacity(count);
    for (i, row) in lines.inner.by_ref() {
        if row.is_empty() {
            continue;
        }
        let mut theta = Theta { mu: vec![0.0; n], v2: vec![0.0; n], beta: vec![0.0; m] };
        let mut cells = 0;
        for (cell, &id) in row.split(',').zip(&ids) {
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                line: i + 1,
                column: 1,
                message: format!("`{cell}` is not a number"),
            })?;
            theta.set(id, v);
            cells += 1;
        }
        if cells != ids.len() || row.split(',').count() != ids.len() {
            return Err(Error::Parse { line: i + 1, column: 1, message: "wrong number of columns".into() });
        }
        draws.push(theta);
    }
    if draws.len() != count {
        return Err(Error::Parse {
            line: 0,
            column: 0,
            message: format!("header announces {count} draws, file has {}", draws.len()),
        });
    }
    Ok(DrawsFile { draws: PosteriorDraws { meta: ChainMeta { config, seed }, draws }, prior })
}
