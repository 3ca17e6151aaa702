use std::sync::Arc;

use dln_core::data::{fold_plan, preprocess, split, RawTable};
use dln_core::gates::Gate;
use dln_core::network::{
    argmax_subset, softmax_subset, threshold_forward_soft, NetworkParams, SoftEngine, SteConfig,
};
use dln_core::train::{init_params, mse_loss, train, train_observed, TrainConfig};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn step_table(n: usize, seed: u64) -> RawTable {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let x: f64 = rng.random();
            vec![x, if x > 0.5 { 1.0 } else { 0.0 }]
        })
        .collect();
    RawTable::from_numeric(&["x", "y"], &rows, "y").unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn soft_activations_stay_in_unit_interval(seed in any::<u64>(), tau in 0.02f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = NetworkParams::random(3, 2, &[6, 5], 8, true, &mut rng);
        let engine = SoftEngine::new(&p, tau, SteConfig::off()).unwrap();
        for _ in 0..20 {
            let x: Vec<f64> = (0..3).map(|_| rng.random()).collect();
            let tape = engine.forward(&x).unwrap();
            for v in tape.threshold_outputs().iter().chain(tape.layer_outputs(0)).chain(tape.layer_outputs(1)) {
                prop_assert!((-1e-12..=1.0 + 1e-12).contains(v), "activation {}", v);
            }
        }
    }

    #[test]
    fn soft_gates_stay_in_unit_interval(k in 0usize..16, a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
        let v = Gate::new(k).unwrap().soft(a, b);
        prop_assert!((-1e-12..=1.0 + 1e-12).contains(&v));
    }

    #[test]
    fn argmax_ignores_row_shift(row in prop::collection::vec(-5.0f64..5.0, 16), shift in -100.0f64..100.0) {
        let subset: Vec<usize> = (0..16).step_by(2).collect();
        let shifted: Vec<f64> = row.iter().map(|v| v + shift).collect();
        // a shift can merge nearly-equal values; only compare when the gap is clear
        let best = argmax_subset(&row, &subset);
        let second = subset.iter().filter(|&&j| j != best).map(|&j| row[j]).fold(f64::NEG_INFINITY, f64::max);
        prop_assume!(row[best] - second > 1e-9);
        prop_assert_eq!(argmax_subset(&shifted, &subset), best);
    }

    #[test]
    fn minmax_scaling_preserves_order(values in prop::collection::vec(-1e3f64..1e3, 3..40)) {
        let rows: Vec<Vec<f64>> = values.iter().enumerate().map(|(i, &v)| vec![v, i as f64]).collect();
        let raw = Arc::new(RawTable::from_numeric(&["v", "t"], &rows, "t").unwrap());
        let ds = preprocess(raw, &vec![true; rows.len()]).unwrap();
        for i in 0..values.len() {
            for j in 0..values.len() {
                if values[i] < values[j] {
                    prop_assert!(ds.row(i)[0] <= ds.row(j)[0]);
                }
            }
            prop_assert!((0.0..=1.0).contains(&ds.row(i)[0]));
        }
    }

    #[test]
    fn folds_partition_rows(n in 4usize..300, k in 2usize..=4, seed in any::<u64>()) {
        let plan = fold_plan(n, k, seed).unwrap();
        let mut seen = vec![0; n];
        for f in 0..k {
            for r in plan.validation_rows(f) {
                seen[r] += 1;
            }
        }
        prop_assert!(seen.iter().all(|&c| c == 1));
        let sizes = plan.fold_sizes();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
    }
}

#[test]
fn excluded_softmax_entries_carry_no_mass() {
    let row = [3.0, -1.0, 50.0, 0.5, 2.0];
    let subset = [0, 1, 3];
    let p = softmax_subset(&row, &subset, 0.3);
    assert_eq!(p.len(), subset.len());
    assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-15);
}

#[test]
fn low_temperature_softmax_approaches_one_hot() {
    let row = [0.3, 1.2, -0.4, 1.1];
    let subset = [0, 1, 2, 3];
    let mut prev = 0.0;
    for tau in [1.0, 0.3, 0.1, 0.03, 0.01, 0.003] {
        let p = softmax_subset(&row, &subset, tau);
        assert!(p[1] >= prev);
        prev = p[1];
    }
    assert!(prev > 1.0 - 1e-12);
    let thr = dln_core::network::ThresholdParams { bias: vec![0.4], slope: vec![2.0], source_feature: vec![0] };
    assert!(threshold_forward_soft(&[0.45], &thr, 1e-4, false)[0] > 1.0 - 1e-12);
}

#[test]
fn training_is_deterministic() {
    let ds = preprocess(Arc::new(step_table(120, 1)), &vec![true; 120]).unwrap();
    let cfg = TrainConfig { epochs: 5, layers: vec![8, 8], seed: 42, ..Default::default() };
    let (a, ra) = train(&ds, &cfg).unwrap();
    let (b, rb) = train(&ds, &cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(ra, rb);
}

#[test]
fn training_lowers_loss_for_every_seed() {
    let ds = preprocess(Arc::new(step_table(300, 2)), &vec![true; 300]).unwrap();
    for seed in 0..5 {
        let cfg = TrainConfig { epochs: 20, layers: vec![16], seed, ..Default::default() };
        let init = init_params(&ds, &cfg).unwrap();
        let engine = SoftEngine::new(&init, cfg.tau_init, cfg.ste).unwrap();
        let preds: Vec<f64> = (0..ds.n_rows()).map(|i| engine.predict(ds.row(i)).unwrap()).collect();
        let initial = mse_loss(&preds, ds.target()).unwrap();
        let (_, report) = train(&ds, &cfg).unwrap();
        assert!(report.epoch_mse.last().unwrap() < &initial, "seed {seed}");
        assert_eq!(report.epoch_mse.len(), 20);
        assert!(report.tau.iter().all(|&t| t >= cfg.tau_min));
    }
}

#[test]
fn per_batch_decay_counts_batches() {
    let ds = preprocess(Arc::new(step_table(64, 3)), &vec![true; 64]).unwrap();
    let cfg = TrainConfig {
        epochs: 1,
        batch_size: 32,
        gamma: 0.9,
        tau_min: 0.01,
        decay: dln_core::train::DecayGranularity::PerBatch,
        layers: vec![4],
        ..Default::default()
    };
    let mut records = Vec::new();
    let (_, report) = train_observed(&ds, None, &cfg, &mut |r| records.push(r.clone())).unwrap();
    assert_eq!(report.tau, vec![1.0 * 0.9 * 0.9]);
    assert_eq!(records.len(), 1);
}

#[test]
fn schema_round_trip_reproduces_features() {
    let raw = Arc::new(step_table(50, 4));
    let ds = preprocess(raw.clone(), &vec![true; 50]).unwrap();
    let (train_part, test_part) = split(&ds, 0.25, 9).unwrap();
    let again = train_part.schema().transform(&raw, train_part.source_rows()).unwrap();
    assert_eq!(again.features(), train_part.features());
    assert_eq!(again.target(), train_part.target());
    assert!(test_part.features().iter().all(|v| (0.0..=1.0).contains(v)));
    let n = train_part.n_rows() as f64;
    let mean = train_part.target().iter().sum::<f64>() / n;
    let var = train_part.target().iter().map(|t| (t - mean).powi(2)).sum::<f64>() / n;
    assert!(mean.abs() < 1e-9 && (var.sqrt() - 1.0).abs() < 1e-9);
}
