extern crate std;

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::*;
use crate::dataset::{monthly_calendar, synth_panel, SynthSpec};
use crate::gru::loss_and_grad;
use crate::hierarchy::{Hierarchy, NodeRecord};
use crate::optim::Anchor;
use crate::seed::rng_for;
use rand::Rng;

fn quick() -> TrainSpec {
    TrainSpec {
        rho: 3,
        hidden: 4,
        epochs: 30,
        lr: 0.01,
        ..TrainSpec::default()
    }
}

fn small_synth() -> (Hierarchy, SeriesPanel) {
    synth_panel(&SynthSpec::new(1, 2, 40, 0.3, 7)).unwrap()
}

fn noise(seed: u64, n: usize) -> Vec<f64> {
    let mut rng = rng_for(seed);
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn panel_of(entries: &[(&str, Vec<f64>)]) -> SeriesPanel {
    let n = entries.iter().map(|(_, v)| v.len()).max().unwrap();
    SeriesPanel::new(
        monthly_calendar(2000, 1, n),
        entries
            .iter()
            .map(|(id, v)| (NodeId::from(*id), 0, v.clone())),
        0.75,
    )
    .unwrap()
}

fn tree(edges: &[(&str, Option<&str>)]) -> Hierarchy {
    Hierarchy::from_records(
        edges
            .iter()
            .map(|(id, p)| NodeRecord::new(id, *p, Some(1.0)))
            .collect(),
    )
    .unwrap()
}

#[test]
fn hrnn_without_priors_is_igru() {
    let (h, panel) = small_synth();
    let spec = quick();
    let off = train_hrnn(&panel, &h, &spec, HrnnPrior::Off).unwrap();
    let igru = train_igru(&panel, &h, &spec).unwrap();
    assert_eq!(off.nodes, igru.nodes);
}

#[test]
fn sgru_on_one_node_is_igru() {
    let h = tree(&[("r", None)]);
    let panel = panel_of(&[("r", noise(1, 30))]);
    let s = train_sgru(&panel, &h, &quick()).unwrap();
    let i = train_igru(&panel, &h, &quick()).unwrap();
    assert_eq!(s.nodes, i.nodes);
}

#[test]
fn sgru_shares_one_parameter_set() {
    let (h, panel) = small_synth();
    let s = train_sgru(&panel, &h, &quick()).unwrap();
    assert_eq!(s.nodes.len(), h.len());
    let first = s.params("0").unwrap();
    assert!(s.nodes.values().all(|m| &m.params == first));
}

#[test]
fn sgru_duplicate_series_matches_single_node() {
    let data = noise(3, 30);
    let one = train_sgru(
        &panel_of(&[("a", data.clone())]),
        &tree(&[("a", None)]),
        &quick(),
    )
    .unwrap();
    let two = train_sgru(
        &panel_of(&[("a", data.clone()), ("b", data)]),
        &tree(&[("a", None), ("b", Some("a"))]),
        &quick(),
    )
    .unwrap();
    let (p1, p2) = (one.params("a").unwrap(), two.params("b").unwrap());
    // the doubled batch has the same mean gradient up to rounding
    assert!(p1.distance(p2) < 1e-9);
}

#[test]
fn sgru_needs_some_window() {
    let h = tree(&[("r", None)]);
    let panel = panel_of(&[("r", vec![0.1, 0.2, 0.3])]);
    assert_eq!(
        train_sgru(&panel, &h, &quick()).unwrap_err(),
        Error::NoTrainingData(None)
    );
}

#[test]
fn igru_nodes_are_independent() {
    let h = tree(&[("r", None), ("a", Some("r")), ("b", Some("r"))]);
    let base = [
        ("r", noise(1, 30)),
        ("a", noise(2, 30)),
        ("b", noise(3, 30)),
    ];
    let mut moved = base.clone();
    moved[2].1 = noise(99, 30);
    let x = train_igru(&panel_of(&base), &h, &quick()).unwrap();
    let y = train_igru(&panel_of(&moved), &h, &quick()).unwrap();
    assert_eq!(x.nodes["a"], y.nodes["a"]);
    assert_ne!(x.nodes["b"], y.nodes["b"]);
}

#[test]
fn igru_skips_nodes_without_windows() {
    let h = tree(&[("r", None), ("a", Some("r"))]);
    let panel = panel_of(&[("r", noise(1, 30)), ("a", vec![0.1, 0.2])]);
    let b = train_igru(&panel, &h, &quick()).unwrap();
    assert!(b.nodes.contains_key("r"));
    assert!(!b.nodes.contains_key("a"));
    assert_eq!(b.provenance.skipped[0].node.as_str(), "a");
}

#[test]
fn igru_on_white_noise_reaches_noise_level() {
    let mut rng = rng_for(11);
    let normal = rand_distr::Normal::new(0.0, 1.0).unwrap();
    let data: Vec<f64> = (0..500)
        .map(|_| rand_distr::Distribution::sample(&normal, &mut rng))
        .collect();
    let h = tree(&[("leaf", None)]);
    let panel = panel_of(&[("leaf", data)]);
    let spec = TrainSpec {
        rho: 4,
        hidden: 4,
        epochs: 100,
        lr: 0.01,
        ..TrainSpec::default()
    };
    let b = train_igru(&panel, &h, &spec).unwrap();
    let s = panel.series("leaf").unwrap();
    let (mut sse, mut n) = (0.0, 0.0);
    for origin in s.split()..s.len() {
        let y = forecast(&b, &panel, "leaf", origin, 0).unwrap()[0];
        sse += (y - s.rates()[origin]).powi(2);
        n += 1.0;
    }
    let rmse = libm::sqrt(sse / n);
    assert!((rmse - 1.0).abs() < 0.25, "rmse {rmse}");
}

#[test]
fn hrnn_records_tau_and_order() {
    let (h, panel) = small_synth();
    let b = train_hrnn(&panel, &h, &quick(), HrnnPrior::Hierarchical).unwrap();
    let root = &b.provenance.nodes["0"];
    assert_eq!((root.order, root.level, root.tau), (0, 0, None));
    for id in ["0.1", "0.2"] {
        let p = &b.provenance.nodes[id];
        let c = p.correlation.unwrap();
        assert!((p.tau.unwrap() - libm::exp(1.5 + c)).abs() < 1e-12);
        assert!(p.order > root.order);
    }
}

#[test]
fn hrnn_single_node_uses_unit_prior() {
    let h = tree(&[("r", None)]);
    let panel = panel_of(&[("r", noise(5, 30))]);
    let spec = quick();
    let b = train_hrnn(&panel, &h, &spec, HrnnPrior::Hierarchical).unwrap();
    // same run by hand: random init, then optimize MSE with a zero anchor at
    // 1/2 rescaled to the mean-loss form, 2/N
    let seed = crate::seed::node_seed(spec.seed, "r");
    let mut rng = rng_for(seed);
    let init = GruParams::random(spec.hidden, 1, spec.init_scale, &mut rng);
    let zero = GruParams::zeros(spec.hidden, 1);
    let windows =
        crate::dataset::make_windows(&panel, "r", spec.rho, crate::dataset::Segment::Train)
            .unwrap();
    let (p, _) = crate::gru::optimize(
        init,
        &windows,
        &spec.optim_config(),
        &[Anchor::new(
            zero.flatten(),
            0.5 * 2.0 / windows.len() as f64,
        )],
        &mut rng,
    )
    .unwrap();
    assert_eq!(b.params("r").unwrap(), &p);
}

#[test]
fn large_alpha_pulls_children_onto_parent() {
    let (h, panel) = small_synth();
    let run = |alpha| {
        let spec = TrainSpec {
            alpha,
            epochs: 150,
            ..quick()
        };
        let b = train_hrnn(&panel, &h, &spec, HrnnPrior::Hierarchical).unwrap();
        let root = b.params("0").unwrap().clone();
        ["0.1", "0.2"].map(|c| b.params(c).unwrap().distance(&root))
    };
    let (tight, loose) = (run(10.0), run(-5.0));
    for (t, l) in tight.iter().zip(loose) {
        assert!(*t < 1e-2 * l, "tight {t} loose {l}");
    }
}

#[test]
fn bihrnn_with_no_updates_returns_pretrained() {
    let (h, panel) = small_synth();
    let pre = train_igru(&panel, &h, &quick()).unwrap();
    let spec = TrainSpec {
        lambda1: 0.0,
        lambda2: 0.0,
        epochs: 0,
        ..quick()
    };
    let b = train_bihrnn(&panel, &h, &spec, &pre).unwrap();
    assert_eq!(b.nodes, pre.nodes);
}

#[test]
fn bihrnn_without_anchors_continues_independent_training() {
    let (h, panel) = small_synth();
    let pre = train_igru(&panel, &h, &quick()).unwrap();
    let spec = TrainSpec {
        lambda1: 0.0,
        lambda2: 0.0,
        ..quick()
    };
    let b = train_bihrnn(&panel, &h, &spec, &pre).unwrap();
    for id in h.ids() {
        let mut rng = rng_for(crate::seed::node_seed(spec.seed, id.as_str()));
        let windows = crate::dataset::make_windows(
            &panel,
            id.as_str(),
            spec.rho,
            crate::dataset::Segment::Train,
        )
        .unwrap();
        let (p, _) = crate::gru::optimize(
            pre.params(id.as_str()).unwrap().clone(),
            &windows,
            &spec.optim_config(),
            &[],
            &mut rng,
        )
        .unwrap();
        assert_eq!(b.params(id.as_str()).unwrap(), &p);
    }
}

#[test]
fn bihrnn_anchors_at_own_params_add_nothing() {
    let (h, panel) = small_synth();
    let mut pre = train_igru(&panel, &h, &quick()).unwrap();
    let shared = pre.params("0").unwrap().clone();
    for m in pre.nodes.values_mut() {
        m.params = shared.clone();
    }
    let windows =
        crate::dataset::make_windows(&panel, "0", 3, crate::dataset::Segment::Train).unwrap();
    let anchors = [
        Anchor::new(shared.flatten(), 1.0),
        Anchor::new(shared.flatten(), 0.5),
    ];
    assert_eq!(
        loss_and_grad(&shared, &windows, &anchors).unwrap(),
        loss_and_grad(&shared, &windows, &[]).unwrap()
    );
    let zero = TrainSpec {
        lambda1: 0.0,
        lambda2: 0.0,
        epochs: 0,
        ..quick()
    };
    let full = TrainSpec {
        epochs: 0,
        ..quick()
    };
    assert_eq!(
        train_bihrnn(&panel, &h, &zero, &pre).unwrap().nodes,
        train_bihrnn(&panel, &h, &full, &pre).unwrap().nodes
    );
}

#[test]
fn huge_lambda1_pins_leaf_to_parent() {
    let (h, panel) = small_synth();
    let pre = train_igru(&panel, &h, &quick()).unwrap();
    let spec = TrainSpec {
        lambda1: 1e4,
        lambda2: 0.0,
        epochs: 300,
        ..quick()
    };
    let b = train_bihrnn(&panel, &h, &spec, &pre).unwrap();
    let d = b.params("0.1").unwrap().distance(pre.params("0").unwrap());
    assert!(d < 1e-3, "distance {d}");
}

#[test]
fn bihrnn_anchor_locality() {
    let h = tree(&[
        ("r", None),
        ("a", Some("r")),
        ("b", Some("r")),
        ("a1", Some("a")),
    ]);
    let base = [
        ("r", noise(1, 30)),
        ("a", noise(2, 30)),
        ("b", noise(3, 30)),
        ("a1", noise(4, 30)),
    ];
    let pre = train_igru(&panel_of(&base), &h, &quick()).unwrap();
    let mut moved = base.clone();
    moved[2].1 = noise(77, 30);
    let x = train_bihrnn(&panel_of(&base), &h, &quick(), &pre).unwrap();
    let y = train_bihrnn(&panel_of(&moved), &h, &quick(), &pre).unwrap();
    assert_eq!(x.nodes["a1"], y.nodes["a1"]);
    assert_eq!(x.nodes["a"], y.nodes["a"]);
    assert_ne!(x.nodes["b"], y.nodes["b"]);
}

#[test]
fn bihrnn_requires_full_pretrained_cover() {
    let (h, panel) = small_synth();
    let mut pre = train_igru(&panel, &h, &quick()).unwrap();
    pre.nodes.remove("0.2");
    assert_eq!(
        train_bihrnn(&panel, &h, &quick(), &pre).unwrap_err(),
        Error::MissingPretrained(String::from("0.2"))
    );
}

#[test]
fn trainers_are_deterministic() {
    let (h, panel) = small_synth();
    let a = train_hrnn(&panel, &h, &quick(), HrnnPrior::Hierarchical).unwrap();
    let b = train_hrnn(&panel, &h, &quick(), HrnnPrior::Hierarchical).unwrap();
    assert_eq!(a, b);
}

fn bundle_with(params: GruParams, rho: usize) -> ModelBundle {
    let mut nodes = BTreeMap::new();
    nodes.insert(NodeId::from("n"), NodeModel::new(params));
    ModelBundle {
        tag: ModelTag::Igru,
        spec: TrainSpec {
            rho,
            ..TrainSpec::default()
        },
        nodes,
        provenance: Provenance::default(),
    }
}

#[test]
fn horizon_zero_is_one_step_prediction() {
    let params = GruParams::random(3, 1, 0.5, &mut rng_for(2));
    let b = bundle_with(params.clone(), 2);
    let rates = vec![0.3, -0.1, 0.4, 0.2, 0.0];
    let panel = panel_of(&[("n", rates.clone())]);
    let out = forecast(&b, &panel, "n", 4, 0).unwrap();
    assert_eq!(out, vec![predict_sequence(&params, &rates[2..4]).unwrap()]);
}

#[test]
fn zero_parameters_forecast_zero() {
    let b = bundle_with(GruParams::zeros(3, 1), 2);
    let panel = panel_of(&[("n", vec![1.0, 2.0, 3.0, 4.0])]);
    assert_eq!(forecast(&b, &panel, "n", 3, 5).unwrap(), vec![0.0; 6]);
}

#[test]
fn three_step_recursion_by_hand() {
    let params = GruParams::random(2, 1, 0.8, &mut rng_for(9));
    let b = bundle_with(params.clone(), 3);
    let rates = vec![0.5, -0.2, 0.1, 0.3, 0.7];
    let panel = panel_of(&[("n", rates.clone())]);
    let y0 = predict_sequence(&params, &[-0.2, 0.1, 0.3]).unwrap();
    let y1 = predict_sequence(&params, &[0.1, 0.3, y0]).unwrap();
    let y2 = predict_sequence(&params, &[0.3, y0, y1]).unwrap();
    assert_eq!(forecast(&b, &panel, "n", 4, 2).unwrap(), vec![y0, y1, y2]);
}

#[test]
fn forecast_needs_history() {
    let b = bundle_with(GruParams::zeros(2, 1), 3);
    let panel = panel_of(&[("n", vec![1.0, 2.0, 3.0, 4.0])]);
    assert!(matches!(
        forecast(&b, &panel, "n", 2, 0),
        Err(Error::InsufficientHistory { .. })
    ));
}

#[test]
fn neighbors_exclude_self_and_break_ties_by_id() {
    let base = noise(4, 24);
    let h = tree(&[
        ("m", None),
        ("c", Some("m")),
        ("b", Some("m")),
        ("x", Some("m")),
    ]);
    let neg: Vec<f64> = base.iter().map(|v| -v).collect();
    let panel = panel_of(&[
        ("m", base.clone()),
        ("c", base.iter().map(|v| 2.0 * v).collect()),
        ("b", base.iter().map(|v| v + 1.0).collect()),
        ("x", neg),
    ]);
    let nn = nearest_neighbors(&panel, &h, "m", 2).unwrap();
    // b and c are both perfectly correlated with m
    assert_eq!(nn.ids, vec![NodeId::from("b"), NodeId::from("c")]);
    let all = nearest_neighbors(&panel, &h, "m", 10).unwrap();
    assert_eq!(all.ids.len(), 3);
    assert!(all.ids.iter().all(|id| id.as_str() != "m"));
    assert_eq!(all.ids[2].as_str(), "x");
}

#[test]
fn knn_gru_flags_clamped_neighbor_count() {
    let (h, panel) = small_synth();
    let spec = TrainSpec {
        k_neighbors: 5,
        ..quick()
    };
    let b = train_knn_gru(&panel, &h, &spec).unwrap();
    for (id, m) in &b.nodes {
        assert_eq!(m.neighbors.len(), 2);
        assert_eq!(m.params.input_dim(), 3);
        assert!(b.provenance.nodes[id]
            .flags
            .iter()
            .any(|f| f.contains("insufficient neighbors")));
    }
    let s = panel.series("0.1").unwrap();
    let out = forecast(&b, &panel, "0.1", s.split(), 3).unwrap();
    assert_eq!(out.len(), 4);
    assert!(out.iter().all(|v| v.is_finite()));
}

#[test]
fn knn_windows_stay_inside_training_segments() {
    // b is shorter, so its training segment ends earlier than a's
    let panel = SeriesPanel::new(
        monthly_calendar(2000, 1, 20),
        [
            (NodeId::from("a"), 0, noise(1, 20)),
            (NodeId::from("b"), 0, noise(2, 12)),
        ],
        0.75,
    )
    .unwrap();
    let w = knn::knn_windows(&panel, "a", &[NodeId::from("b")], 2).unwrap();
    // b trains on positions 0..9, so a's targets stop at 10
    assert_eq!(w.len(), 8);
    assert_eq!(w[0].inputs.len(), 4);
}

#[test]
fn train_spec_rejects_bad_values() {
    assert!(TrainSpec {
        rho: 0,
        ..TrainSpec::default()
    }
    .validate()
    .is_err());
    assert!(TrainSpec {
        lr: 0.0,
        ..TrainSpec::default()
    }
    .validate()
    .is_err());
    assert!(TrainSpec {
        lambda1: -1.0,
        ..TrainSpec::default()
    }
    .validate()
    .is_err());
    assert!(TrainSpec {
        k_neighbors: 0,
        ..TrainSpec::default()
    }
    .validate()
    .is_err());
    assert!(TrainSpec::default().validate().is_ok());
}
