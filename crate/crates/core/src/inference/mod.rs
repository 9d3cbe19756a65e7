//! Bayesian estimation of theta from batch data.
//!
//! Priors are conjugate, so every coefficient has a closed-form conditional
//! posterior given the others; [`gibbs_sample`] cycles through them.

mod conditionals;
mod diagnostics;
mod gibbs;
mod prior;
mod stats;

pub use conditionals::{cond_post_beta, cond_post_mu, cond_post_v2, InvGammaConditional, NormalConditional};
pub use diagnostics::{chain_diagnostics, effective_sample_size};
pub use gibbs::{gibbs_sample, initial_theta, ChainConfig, ChainMeta, GibbsState, InferenceError, PosteriorDraws};
pub use prior::{default_prior, prior_with, Prior, PriorError, PriorSettings};
pub use stats::{ScopeStats, SufficientStats};
