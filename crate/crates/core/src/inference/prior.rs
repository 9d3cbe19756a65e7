use alloc::vec;
use alloc::vec::Vec;

use crate::data::BatchDataset;
use crate::model::{NodeId, ProcessGraph};

/// Conjugate prior hyperparameters.
///
/// Node means are normal `N(mu0, sigma0_sq)`, variances inverse-gamma with
/// shape `kappa0 / 2` and scale `lambda0 / 2`, edge betas `N(theta0, tau0_sq)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Prior {
    pub mu0: Vec<f64>,
    pub sigma0_sq: Vec<f64>,
    pub kappa0: Vec<f64>,
    pub lambda0: Vec<f64>,
    pub theta0: Vec<f64>,
    pub tau0_sq: Vec<f64>,
}

/// Scalar settings applied uniformly by [`prior_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriorSettings {
    pub sigma0_sq: f64,
    pub tau0_sq: f64,
    pub kappa0: f64,
    pub lambda0: f64,
    pub theta0: f64,
}

impl Default for PriorSettings {
    fn default() -> Self {
        PriorSettings { sigma0_sq: 1e6, tau0_sq: 1e6, kappa0: 0.02, lambda0: 0.02, theta0: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PriorError {
    #[error("hyperparameter `{0}` must be positive and finite")]
    NonPositive(&'static str),
    #[error("hyperparameter `{0}` must be finite")]
    NonFinite(&'static str),
}

impl PriorSettings {
    pub fn validate(&self) -> Result<(), PriorError> {
        for (name, v) in [
            ("sigma0_sq", self.sigma0_sq),
            ("tau0_sq", self.tau0_sq),
            ("kappa0", self.kappa0),
            ("lambda0", self.lambda0),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(PriorError::NonPositive(name));
            }
        }
        if !self.theta0.is_finite() {
            return Err(PriorError::NonFinite("theta0"));
        }
        Ok(())
    }
}

/// Vague default prior; `mu0` is each node's observed mean when data is
/// supplied (zero for nodes no row observes).
pub fn default_prior(graph: &ProcessGraph, data: Option<&BatchDataset>) -> Prior {
    prior_with(graph, data, PriorSettings::default()).expect("default settings are valid")
}

pub fn prior_with(
    graph: &ProcessGraph,
    data: Option<&BatchDataset>,
    settings: PriorSettings,
) -> Result<Prior, PriorError> {
    settings.validate()?;
    let n = graph.node_count();
    let mu0 = (0..n)
        .map(|i| data.and_then(|d| d.column_mean(NodeId(i))).unwrap_or(0.0))
        .collect();
    let m = graph.edge_count();
    Ok(Prior {
        mu0,
        sigma0_sq: vec![settings.sigma0_sq; n],
        kappa0: vec![settings.kappa0; n],
        lambda0: vec![settings.lambda0; n],
        theta0: vec![settings.theta0; m],
        tau0_sq: vec![settings.tau0_sq; m],
    })
}
