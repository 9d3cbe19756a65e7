//! Multi-threaded drivers over the core algorithms. Every function here
//! returns exactly what its sequential counterpart returns: work items are
//! independent and their results are combined in index order.

use bn_shapley_core::model::{InputFactor, NodeId, ProcessGraph, Theta};
use bn_shapley_core::data::BatchDataset;
use bn_shapley_core::inference::Prior;
use bn_shapley_core::mu_sa::{MuReport, MuSaConfig, MuSaError, MuSaProblem, PermutationWalk, Quantity};
use bn_shapley_core::shapley::{sv_bruteforce, CostForm, ShapleyError, BRUTEFORCE_MAX_FACTORS};
use rayon::prelude::*;

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "BN_SHAPLEY_THREADS";

/// A pool sized by `BN_SHAPLEY_THREADS`, or rayon's default when the
/// variable is unset, empty or not a positive integer.
pub fn thread_pool() -> rayon::ThreadPool {
    let threads = std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or(0);
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().expect("thread pool")
}

/// Walks every permutation of `problem` across the current pool.
pub fn walk_all(problem: &MuSaProblem<'_>, permutations: usize) -> Vec<PermutationWalk> {
    (0..permutations).into_par_iter().map(|i| problem.walk(i)).collect()
}

/// Parallel equivalent of `appro_shapley_mu`.
#[allow(clippy::too_many_arguments)]
pub fn appro_shapley_mu_parallel(
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
    let walks = walk_all(&problem, config.permutations);
    Ok(problem.assemble(&walks))
}

/// Brute-force Shapley values with the `2^k` cost evaluations spread over
/// the pool.
pub fn sv_bruteforce_parallel<F>(k: usize, cost: F, form: CostForm) -> Result<Vec<f64>, ShapleyError>
where
    F: Fn(u64) -> f64 + Sync,
{
    if k > BRUTEFORCE_MAX_FACTORS {
        return Err(ShapleyError::TooManyFactors { found: k, max: BRUTEFORCE_MAX_FACTORS });
    }
    let table: Vec<f64> = (0..1u64 << k).into_par_iter().map(&cost).collect();
    sv_bruteforce(k, |mask| table[mask as usize], form)
}

/// Runs `count` independent replications, returning results by index.
pub fn macro_replications<T, F>(count: usize, replicate: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    (0..count).into_par_iter().map(&replicate).collect()
}
