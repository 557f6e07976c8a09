use std::sync::OnceLock;

use hrnn_core::baselines::{fit_baseline, BaselineSpec, ForestConfig, GbtConfig, MlpConfig};
use hrnn_core::dataset::{make_windows, synth_panel, Segment, SeriesPanel, SynthSpec};
use hrnn_core::eval::{evaluate, Aggregation};
use hrnn_core::forecast::{Forecaster, ModelTag};
use hrnn_core::metrics::relative_rmse;
use hrnn_core::models::{
    train_bihrnn, train_hrnn, train_igru, train_knn_gru, train_sgru, HrnnPrior, TrainSpec,
};
use hrnn_core::{Hierarchy, NodeId};
use proptest::prelude::*;

const LEN: usize = 48;

fn setup() -> &'static (
    Hierarchy,
    SeriesPanel,
    Vec<Box<dyn Forecaster + Send + Sync>>,
) {
    static CELL: OnceLock<(
        Hierarchy,
        SeriesPanel,
        Vec<Box<dyn Forecaster + Send + Sync>>,
    )> = OnceLock::new();
    CELL.get_or_init(|| {
        let (h, panel) = synth_panel(&SynthSpec::new(1, 3, LEN, 0.4, 12)).unwrap();
        let spec = TrainSpec {
            rho: 3,
            hidden: 3,
            epochs: 15,
            lr: 0.01,
            k_neighbors: 2,
            ..TrainSpec::default()
        };
        let bspec = BaselineSpec {
            rho: 3,
            forest: ForestConfig {
                n_trees: 5,
                ..ForestConfig::default()
            },
            gbt: GbtConfig {
                n_trees: 5,
                ..GbtConfig::default()
            },
            fc: MlpConfig {
                hidden: vec![8],
                epochs: 10,
                ..MlpConfig::fc()
            },
            deepnn: MlpConfig {
                hidden: vec![8; 3],
                epochs: 2,
                ..MlpConfig::deep()
            },
            ..BaselineSpec::default()
        };
        let hrnn = train_hrnn(&panel, &h, &spec, HrnnPrior::Hierarchical).unwrap();
        let mut models: Vec<Box<dyn Forecaster + Send + Sync>> = vec![
            Box::new(train_sgru(&panel, &h, &spec).unwrap()),
            Box::new(train_igru(&panel, &h, &spec).unwrap()),
            Box::new(train_knn_gru(&panel, &h, &spec).unwrap()),
            Box::new(train_bihrnn(&panel, &h, &spec, &hrnn).unwrap()),
            Box::new(hrnn),
        ];
        for tag in [
            ModelTag::Ar,
            ModelTag::Rw,
            ModelTag::Rf,
            ModelTag::Gbt,
            ModelTag::Fc,
            ModelTag::DeepNn,
        ] {
            models.push(Box::new(fit_baseline(tag, &panel, &h, &bspec).unwrap()));
        }
        (h, panel, models)
    })
}

/// The panel with every value at or after `from` replaced.
fn scrambled(panel: &SeriesPanel, from: usize, salt: u64) -> SeriesPanel {
    let entries: Vec<(NodeId, usize, Vec<f64>)> = panel
        .iter()
        .map(|(id, s)| {
            let rates = s
                .rates()
                .iter()
                .enumerate()
                .map(|(i, &r)| {
                    if s.period(i) >= from {
                        (i as f64 * 1.7 + salt as f64).sin() * 40.0
                    } else {
                        r
                    }
                })
                .collect();
            (id.clone(), s.start(), rates)
        })
        .collect();
    SeriesPanel::new(panel.calendar().to_vec(), entries, panel.train_fraction()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn forecasts_ignore_the_future(model in 0usize..11, node in 0usize..4, origin in 3usize..LEN, horizon in 0usize..5, salt in 0u64..100) {
        let (h, panel, models) = setup();
        let m = &models[model];
        let id = h.id(node).as_str();
        let before = m.forecast(panel, id, origin, horizon).unwrap();
        prop_assert_eq!(before.len(), horizon + 1);
        prop_assert!(before.iter().all(|v| v.is_finite()));
        let after = m.forecast(&scrambled(panel, origin, salt), id, origin, horizon).unwrap();
        prop_assert_eq!(before, after, "{} looked past origin {}", m.label(), origin);
    }

    #[test]
    fn window_counts(len in 2usize..60, frac in 0.1f64..0.95, rho in 1usize..8) {
        let rates: Vec<f64> = (0..len).map(|i| i as f64).collect();
        let cal: Vec<String> = (0..len).map(|i| format!("p{i}")).collect();
        let panel = SeriesPanel::new(cal, [(NodeId::new("x"), 0, rates)], frac).unwrap();
        let split = panel.series("x").unwrap().split();
        let train = make_windows(&panel, "x", rho, Segment::Train).unwrap();
        let test = make_windows(&panel, "x", rho, Segment::Test).unwrap();
        prop_assert_eq!(train.len(), split.saturating_sub(rho));
        prop_assert_eq!(test.len(), len.saturating_sub(split.max(rho)));
        prop_assert!(train.iter().all(|w| (w.target as usize) < split));
        prop_assert!(test.iter().all(|w| (w.target as usize) >= split));
    }

    #[test]
    fn relative_rmse_of_itself_is_one(x in 1e-9f64..1e9) {
        prop_assert_eq!(relative_rmse(x, x).unwrap(), 1.0);
    }
}

#[test]
fn training_is_a_pure_function() {
    let (h, panel) = synth_panel(&SynthSpec::new(1, 2, 40, 0.3, 5)).unwrap();
    let spec = TrainSpec {
        rho: 3,
        hidden: 3,
        epochs: 10,
        batch_size: Some(8),
        ..TrainSpec::default()
    };
    let a = train_hrnn(&panel, &h, &spec, HrnnPrior::Hierarchical).unwrap();
    let b = train_hrnn(&panel, &h, &spec, HrnnPrior::Hierarchical).unwrap();
    assert_eq!(a, b);
    let other = train_hrnn(
        &panel,
        &h,
        &TrainSpec { seed: 1, ..spec },
        HrnnPrior::Hierarchical,
    )
    .unwrap();
    assert_ne!(a.nodes, other.nodes);
}

#[test]
fn every_model_scores_on_every_node() {
    let (h, panel, models) = setup();
    let base = fit_baseline(
        ModelTag::Ar,
        panel,
        h,
        &BaselineSpec {
            rho: 1,
            ..BaselineSpec::default()
        },
    )
    .unwrap();
    let refs: Vec<&dyn Forecaster> = models
        .iter()
        .map(|m| m.as_ref() as &dyn Forecaster)
        .collect();
    let report = evaluate(&refs, &base, panel, h, &[0, 2], Aggregation::MeanOfNodes).unwrap();
    assert_eq!(report.scores.len(), models.len() * h.len() * 2);
    assert!(
        report.scores.iter().all(|s| s.rel_rmse.value().is_some()),
        "{:?}",
        report.scores
    );
}

#[test]
fn scrambling_the_visible_past_does_change_forecasts() {
    let (h, panel, models) = setup();
    let rw = &models[6];
    assert!(rw.label().starts_with("RW"));
    let id = h.id(1).as_str();
    let before = rw.forecast(panel, id, 30, 2).unwrap();
    let after = rw.forecast(&scrambled(panel, 29, 3), id, 30, 2).unwrap();
    assert_ne!(before, after);
}
