use alloc::vec::Vec;

use crate::inference::gibbs::PosteriorDraws;
use crate::model::{coefficient_ids, CoefficientId, ProcessGraph};
use crate::numeric::mean_and_variance;

/// Effective sample size by Geyer's initial monotone sequence estimator.
pub fn effective_sample_size(series: &[f64]) -> f64 {
    let n = series.len();
    if n < 4 {
        return n as f64;
    }
    let (mean, var) = mean_and_variance(series);
    if !(var > 0.0) {
        return n as f64;
    }
    let gamma0 = var * (n - 1) as f64 / n as f64;
    let autocov = |lag: usize| -> f64 {
        let mut s = 0.0;
        for t in 0..n - lag {
            s += (series[t] - mean) * (series[t + lag] - mean);
        }
        s / n as f64
    };
    let mut sum_pairs = 0.0;
    let mut prev = f64::INFINITY;
    let mut lag = 0;
    while lag + 1 < n {
        let pair = autocov(lag) + autocov(lag + 1);
        if pair <= 0.0 {
            break;
        }
        let pair = pair.min(prev);
        sum_pairs += pair;
        prev = pair;
        lag += 2;
    }
    let tau = (2.0 * sum_pairs / gamma0 - 1.0).max(1.0 / n as f64);
    n as f64 / tau
}

/// Effective sample size of every coefficient's draws.
pub fn chain_diagnostics(graph: &ProcessGraph, draws: &PosteriorDraws) -> Vec<(CoefficientId, f64)> {
    coefficient_ids(graph)
        .into_iter()
        .map(|id| {
            let series: Vec<f64> = draws.draws.iter().map(|t| t.get(id)).collect();
            (id, effective_sample_size(&series))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{standard_normal, substream};

    #[test]
    fn white_noise_has_full_ess() {
        let mut rng = substream(5, 0);
        let x: Vec<f64> = (0..4000).map(|_| standard_normal(&mut rng)).collect();
        let ess = effective_sample_size(&x);
        assert!(ess > 3000.0 && ess < 5000.0, "{ess}");
    }

    #[test]
    fn ar1_has_reduced_ess() {
        let mut rng = substream(6, 0);
        let mut x = Vec::with_capacity(4000);
        let mut prev = 0.0;
        for _ in 0..4000 {
            prev = 0.9 * prev + standard_normal(&mut rng);
            x.push(prev);
        }
        // Integrated autocorrelation time of AR(1) with 0.9 is 19.
        let ess = effective_sample_size(&x);
        assert!(ess > 100.0 && ess < 400.0, "{ess}");
    }
}
