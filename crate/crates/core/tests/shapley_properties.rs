mod support;

use bn_shapley_core::model::{input_factors, InputFactor, NodeId};
use bn_shapley_core::propagate::node_variance;
use bn_shapley_core::shapley::{
    cost_remaining_variance, sv_bruteforce, sv_closed_form, CostForm, CovarianceMatrix, InputCovariance,
    VarianceGame,
};
use proptest::prelude::*;
use support::{path_gamma, quad_cost, random_network, random_spd};

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-300)
}

fn output_of(graph: &bn_shapley_core::model::ProcessGraph) -> NodeId {
    NodeId(graph.node_count() - 1)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn closed_form_matches_enumeration(seed in any::<u64>(), nodes in 2usize..=8, correlated in any::<bool>()) {
        let net = random_network(seed, nodes);
        let g = &net.graph;
        let out = output_of(g);
        let factors = input_factors(g);
        let k = factors.len();
        let gamma: Vec<f64> = factors.iter().map(|f| path_gamma(g, &net.theta, f.node(), out)).collect();
        let (cov_mode, cov) = if correlated {
            let c = random_spd(seed ^ 0x5eed, k);
            (InputCovariance::UserSupplied(CovarianceMatrix::new(k, c.clone()).unwrap()), c)
        } else {
            let mut c = vec![0.0; k * k];
            for (i, f) in factors.iter().enumerate() {
                c[i * k + i] = net.theta.v2[f.node().0];
            }
            (InputCovariance::Independent, c)
        };
        let report = sv_closed_form(g, &net.theta, out, &cov_mode).unwrap();
        let oracle = sv_bruteforce(k, |m| quad_cost(&gamma, &cov, m), CostForm::RemainingVariance).unwrap();
        let scale = oracle.iter().map(|v| v.abs()).fold(0.0, f64::max);
        for (e, o) in report.entries.iter().zip(&oracle) {
            prop_assert!((e.shapley - o).abs() <= 1e-9 * scale.max(1e-300), "{} vs {}", e.shapley, o);
        }
    }

    #[test]
    fn efficiency_and_propagated_variance(seed in any::<u64>(), nodes in 2usize..=10) {
        let net = random_network(seed, nodes);
        let out = output_of(&net.graph);
        let report = sv_closed_form(&net.graph, &net.theta, out, &InputCovariance::Independent).unwrap();
        let var = node_variance(&net.graph, &net.theta, out);
        prop_assert!(rel_close(report.shapley_sum(), var, 1e-10));
        prop_assert!(rel_close(report.total_variance, var, 1e-10));
        let crit: f64 = report.entries.iter().map(|e| e.criticality).sum();
        prop_assert!((crit - 1.0).abs() <= 1e-10);
    }

    #[test]
    fn dual_form_gives_same_values(seed in any::<u64>(), nodes in 2usize..=8) {
        let net = random_network(seed, nodes);
        let out = output_of(&net.graph);
        let k = input_factors(&net.graph).len();
        let c = random_spd(seed, k);
        let game = VarianceGame::full_graph(
            &net.graph, &net.theta, out,
            &InputCovariance::UserSupplied(CovarianceMatrix::new(k, c).unwrap()),
        ).unwrap();
        let a = sv_bruteforce(k, |m| game.cost_mask(m), CostForm::RemainingVariance).unwrap();
        let b = sv_bruteforce(k, |m| game.cost_mask(m), CostForm::Explained).unwrap();
        let scale = a.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1e-300);
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() <= 1e-10 * scale);
        }
    }

    #[test]
    fn independent_cost_is_monotone(seed in any::<u64>(), nodes in 2usize..=8, mask in any::<u64>(), extra in 0usize..8) {
        let net = random_network(seed, nodes);
        let out = output_of(&net.graph);
        let factors = input_factors(&net.graph);
        let k = factors.len();
        let mask = mask & ((1u64 << k) - 1);
        let subset: Vec<InputFactor> = (0..k).filter(|i| mask >> i & 1 == 1).map(|i| factors[i]).collect();
        let mut bigger = subset.clone();
        bigger.push(factors[extra % k]);
        let c1 = cost_remaining_variance(&net.graph, &net.theta, out, &subset, &InputCovariance::Independent).unwrap();
        let c2 = cost_remaining_variance(&net.graph, &net.theta, out, &bigger, &InputCovariance::Independent).unwrap();
        prop_assert!(c2 >= c1 - 1e-12 * c1.abs());
        prop_assert_eq!(cost_remaining_variance(&net.graph, &net.theta, out, &[], &InputCovariance::Independent).unwrap(), 0.0);
    }

    #[test]
    fn scale_equivariance(seed in any::<u64>(), nodes in 2usize..=8, s in 0.1f64..10.0) {
        let net = random_network(seed, nodes);
        let out = output_of(&net.graph);
        let base = sv_closed_form(&net.graph, &net.theta, out, &InputCovariance::Independent).unwrap();
        let mut scaled = net.theta.clone();
        for v in &mut scaled.v2 {
            *v *= s * s;
        }
        let r = sv_closed_form(&net.graph, &scaled, out, &InputCovariance::Independent).unwrap();
        for (a, b) in base.entries.iter().zip(&r.entries) {
            prop_assert!(rel_close(b.shapley, s * s * a.shapley, 1e-12) || (a.shapley == 0.0 && b.shapley == 0.0));
            prop_assert!((a.criticality - b.criticality).abs() <= 1e-12);
        }
    }

    #[test]
    fn factor_without_path_is_a_null_player(seed in any::<u64>(), nodes in 2usize..=8) {
        let net = random_network(seed, nodes);
        let out = output_of(&net.graph);
        let report = sv_closed_form(&net.graph, &net.theta, out, &InputCovariance::Independent).unwrap();
        let reach = net.graph.ancestors_inclusive(out);
        for e in &report.entries {
            if !reach[e.factor.node().0] {
                prop_assert_eq!(e.shapley, 0.0);
            }
        }
    }
}

#[test]
fn enumeration_limit() {
    assert!(sv_bruteforce(21, |_| 0.0, CostForm::RemainingVariance).is_err());
    let one = sv_bruteforce(1, |m| if m == 1 { 2.5 } else { 0.0 }, CostForm::RemainingVariance).unwrap();
    assert_eq!(one, vec![2.5]);
    let sym = sv_bruteforce(2, |m| [0.0, 1.0, 1.0, 3.0][m as usize], CostForm::RemainingVariance).unwrap();
    assert_eq!(sym, vec![1.5, 1.5]);
}
