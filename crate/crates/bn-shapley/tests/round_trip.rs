#[path = "../../core/tests/support/mod.rs"]
mod support;

use std::path::PathBuf;

use bn_shapley::data_csv::{data_to_csv, read_data};
use bn_shapley::draws_file::{draws_to_text, parse_draws, DrawsFile};
use bn_shapley::error::Error;
use bn_shapley::network_file::{five_node_network, load_network, mabs_network, network_to_json, parse_network, Network};
use bn_shapley::report_file::{parse_report, report_to_json, Provenance, Report};
use bn_shapley_core::data::BatchDataset;
use bn_shapley_core::inference::{default_prior, gibbs_sample, ChainConfig, PriorSettings};
use bn_shapley_core::model::{GraphError, InputFactor, NodeId};
use bn_shapley_core::mu_sa::{appro_shapley_mu, posterior_sv_summary, MuSaConfig, Quantity};
use bn_shapley_core::propagate::forward_sample;
use bn_shapley_core::shapley::{sv_closed_form, InputCovariance};
use bn_shapley_core::simgen::{build_mabs_network, MabsConfig};
use proptest::prelude::*;
use support::{random_closed_scope, random_network};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

fn as_network(net: support::RandomNet) -> Network {
    let n = net.graph.node_count();
    Network { graph: net.graph, theta: Some(net.theta), labels: vec![None; n], subgraphs: Vec::new() }
}

#[test]
fn shipped_mabs_fixture_equals_builder() {
    let loaded = load_network(&fixture("mabs.json")).unwrap();
    let built = build_mabs_network(&MabsConfig::reference()).unwrap();
    assert_eq!(loaded.graph, built.graph);
    assert_eq!(loaded.theta.as_ref(), Some(&built.theta));
    assert_eq!(loaded.subgraphs, built.subgraphs);
    assert_eq!(loaded, mabs_network());
}

#[test]
fn five_node_fixture_shape() {
    let net = load_network(&fixture("five_node.json")).unwrap();
    assert_eq!(net.graph.node_count(), 5);
    assert_eq!(net.graph.edge_count(), 4);
    assert_eq!(net, five_node_network());
}

#[test]
fn cycle_is_reported_with_its_edges() {
    let text = r#"{"format_version": 1,
        "nodes": [{"name": "A", "kind": "cpp"}, {"name": "B", "kind": "cqa"}, {"name": "C", "kind": "cqa"}],
        "edges": [{"parent": "A", "child": "B"}, {"parent": "B", "child": "C"}, {"parent": "C", "child": "B"}]}"#;
    match parse_network(text) {
        Err(Error::Graph(GraphError::CycleDetected(edges))) => {
            let mut edges = edges;
            edges.sort();
            assert_eq!(edges, vec![("B".to_string(), "C".to_string()), ("C".to_string(), "B".to_string())]);
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn csv_scope_rules() {
    let net = mabs_network();
    let header: Vec<&str> = net.graph.nodes().map(|n| net.graph.name(n)).collect();
    let full = forward_sample(&net.graph, net.theta.as_ref().unwrap(), 30, 1);
    let csv = data_to_csv(&full, &net.graph);
    let d = read_data(csv.as_bytes(), &net.graph).unwrap();
    assert_eq!((d.complete_count(), d.incomplete_count()), (30, 0));

    // Rows blank outside the fermentation step are valid sub-graph rows.
    let ferment: Vec<String> = (0..20).map(|i| if i < 7 { format!("{}", i as f64 + 0.5) } else { String::new() }).collect();
    let text = format!("{}\n{}\n", header.join(","), ferment.join(","));
    let d = read_data(text.as_bytes(), &net.graph).unwrap();
    assert_eq!(d.incomplete_count(), 1);

    // X5's parents are X1..X4; leave X1 blank but fill X5.
    let mut cells: Vec<String> = (0..20).map(|_| "1.0".to_string()).collect();
    cells[0].clear();
    let text = format!("{}\n{}\n", header.join(","), cells.join(","));
    assert!(matches!(read_data(text.as_bytes(), &net.graph), Err(Error::DataRow { row: 1, .. })));

    let text = format!("{}\nabc{}\n", header.join(","), ",1".repeat(19));
    assert!(matches!(read_data(text.as_bytes(), &net.graph), Err(Error::NonNumericCell { row: 1, .. })));

    let text = "X1,X2\n1,2\n";
    assert!(matches!(read_data(text.as_bytes(), &net.graph), Err(Error::HeaderMismatch(_))));
}

fn mixed(net: &Network, seed: u64) -> BatchDataset {
    let theta = net.theta.as_ref().unwrap();
    let g = &net.graph;
    let full = forward_sample(g, theta, 12, seed);
    let scope = random_closed_scope(g, seed);
    let mut d = BatchDataset::new(g.node_count());
    for r in 0..full.len() {
        if r % 3 == 2 {
            let row: Vec<Option<f64>> = g.nodes().map(|n| scope.contains(&n).then_some(full.row(r)[n.0])).collect();
            d.push_partial(g, &row).unwrap();
        } else {
            d.push_complete(full.row(r)).unwrap();
        }
    }
    d
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn networks_round_trip(seed in any::<u64>(), nodes in 2usize..=10, params in any::<bool>()) {
        let mut net = as_network(random_network(seed, nodes));
        if !params {
            net.theta = None;
        }
        net.subgraphs.push(("tail".into(), vec![NodeId(nodes - 1)]));
        let back = parse_network(&network_to_json(&net)).unwrap();
        prop_assert_eq!(back, net);
    }

    #[test]
    fn datasets_round_trip(seed in any::<u64>(), nodes in 2usize..=10) {
        let net = as_network(random_network(seed, nodes));
        let d = mixed(&net, seed);
        let back = read_data(data_to_csv(&d, &net.graph).as_bytes(), &net.graph).unwrap();
        prop_assert_eq!(back, d);
    }

    #[test]
    fn draws_round_trip(seed in any::<u64>(), nodes in 2usize..=8) {
        let net = as_network(random_network(seed, nodes));
        let d = mixed(&net, seed);
        let prior = default_prior(&net.graph, Some(&d));
        let draws = gibbs_sample(&net.graph, &prior, &d, ChainConfig::for_draws(5, 3, 2), seed).unwrap();
        let file = DrawsFile { draws, prior: PriorSettings::default() };
        let back = parse_draws(&draws_to_text(&file, &net.graph), &net.graph).unwrap();
        prop_assert_eq!(back, file);
    }

    #[test]
    fn reports_round_trip(seed in any::<u64>(), nodes in 2usize..=6) {
        let net = as_network(random_network(seed, nodes));
        let g = &net.graph;
        let out = NodeId(nodes - 1);
        let d = mixed(&net, seed);
        let prior = default_prior(g, Some(&d));
        let draws = gibbs_sample(g, &prior, &d, ChainConfig::for_draws(10, 5, 1), seed).unwrap();
        let prov = Provenance {
            network_sha256: format!("{seed:x}"),
            data_sha256: Some("d".into()),
            draws_sha256: Some("t".into()),
            subgraph: None,
            chain: Some(draws.meta),
            prior: Some(PriorSettings::default()),
        };
        let sv = sv_closed_form(g, net.theta.as_ref().unwrap(), out, &InputCovariance::Independent).unwrap();
        let summary = posterior_sv_summary(g, &draws.draws, out).unwrap();
        let factor = if g.kind(NodeId(0)).is_root() { InputFactor::Cpp(NodeId(0)) } else { InputFactor::Residual(NodeId(0)) };
        let config = MuSaConfig { permutations: 3, outer_draws: 2, inner_draws: 2, inner_thin: 1, seed };
        let mu = appro_shapley_mu(g, &prior, &d, &draws.draws, factor, out, Quantity::Shapley, config).unwrap();
        for report in [Report::Sv(sv), Report::Summary(summary), Report::Mu(mu)] {
            let text = report_to_json(g, &report, &prov);
            let (back, p) = parse_report(&text, g).unwrap();
            prop_assert_eq!(&back, &report);
            prop_assert_eq!(&p, &prov);
            prop_assert_eq!(report_to_json(g, &back, &p), text);
        }
    }
}
