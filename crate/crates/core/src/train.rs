//! Parameter initialization, the annealed mini-batch training loop, and
//! evaluation metrics.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{DlnError, Result};
use crate::gates::NUM_GATES;
use crate::network::{
    network_forward_hard_params, LogicLayerParams, NetworkParams, ParamGroup, SoftEngine, SteConfig,
    SumParams, ThresholdParams, DEFAULT_SUM_THRESHOLD,
};
use crate::optim::Adam;
use crate::tree::{tree_thresholds, uniform_grid};

pub const INIT_SLOPE: f64 = 2.0;
pub const INIT_LOGIT_STD: f64 = 0.1;
pub const CATEGORICAL_BIAS: f64 = 0.5;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecayGranularity {
    PerBatch,
    #[default]
    PerEpoch,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub tau_init: f64,
    pub gamma: f64,
    pub tau_min: f64,
    /// When false the temperature stays at `tau_init` for the whole run.
    pub tau_schedule: bool,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub decay: DecayGranularity,
    pub ste: SteConfig,
    pub two_phase: bool,
    pub concat_inputs: bool,
    /// Candidate gates and links per neuron: 4, 8 or 16 (16 = unrestricted).
    pub subspace_size: usize,
    pub thresholds_per_feature: usize,
    /// Widths of the logic layers.
    pub layers: Vec<usize>,
    pub sum_threshold: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            tau_init: 1.0,
            gamma: 0.95,
            tau_min: 0.05,
            tau_schedule: true,
            epochs: 100,
            batch_size: 32,
            learning_rate: 0.01,
            decay: DecayGranularity::PerEpoch,
            ste: SteConfig::default(),
            two_phase: false,
            concat_inputs: true,
            subspace_size: 8,
            thresholds_per_feature: 6,
            layers: vec![32, 32],
            sum_threshold: DEFAULT_SUM_THRESHOLD,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(DlnError::Config(m));
        if !(self.tau_init > 0.0 && self.tau_init.is_finite()) {
            return bad(format!("tau_init must be positive, got {}", self.tau_init));
        }
        if !(self.tau_min > 0.0 && self.tau_min <= self.tau_init) {
            return bad(format!("tau_min must lie in (0, tau_init], got {}", self.tau_min));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad(format!("gamma must lie in (0, 1], got {}", self.gamma));
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be finite and non-negative, got {}", self.learning_rate));
        }
        if ![4, 8, 16].contains(&self.subspace_size) {
            return bad(format!("subspace_size must be 4, 8 or 16, got {}", self.subspace_size));
        }
        if self.thresholds_per_feature == 0 {
            return bad("thresholds_per_feature must be at least 1".into());
        }
        if self.layers.contains(&0) {
            return bad("logic layer widths must be positive".into());
        }
        if !(self.sum_threshold > 0.0 && self.sum_threshold < 1.0) {
            return bad(format!("sum_threshold must lie in (0, 1), got {}", self.sum_threshold));
        }
        Ok(())
    }

    /// Next temperature under the configured schedule.
    fn next_tau(&self, tau: f64) -> f64 {
        if self.tau_schedule {
            decay_temperature(tau, self.gamma, self.tau_min)
        } else {
            tau
        }
    }

    /// Groups updated during `epoch`.
    pub fn active_groups(&self, epoch: usize) -> fn(ParamGroup) -> bool {
        fn all(_: ParamGroup) -> bool {
            true
        }
        fn phase_one(g: ParamGroup) -> bool {
            matches!(g, ParamGroup::Bias | ParamGroup::Slope | ParamGroup::GateLogits | ParamGroup::Coefficients)
        }
        fn phase_two(g: ParamGroup) -> bool {
            matches!(g, ParamGroup::LinkA | ParamGroup::LinkB | ParamGroup::SumLinks)
        }
        if !self.two_phase {
            all
        } else if epoch < self.epochs.div_ceil(2) {
            phase_one
        } else {
            phase_two
        }
    }
}

pub fn decay_temperature(tau: f64, gamma: f64, tau_min: f64) -> f64 {
    (tau * gamma).max(tau_min)
}

pub fn mse_loss(predictions: &[f64], targets: &[f64]) -> Result<f64> {
    if predictions.is_empty() {
        return Err(DlnError::EmptyData("mse of empty vectors".into()));
    }
    if predictions.len() != targets.len() {
        return Err(DlnError::Dimension(format!(
            "{} predictions for {} targets",
            predictions.len(),
            targets.len()
        )));
    }
    let s: f64 = predictions.iter().zip(targets).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok(s / predictions.len() as f64)
}

fn sample_subset(rng: &mut ChaCha8Rng, universe: usize, size: usize) -> Vec<usize> {
    let mut s = rand::seq::index::sample(rng, universe, size.min(universe)).into_vec();
    s.sort_unstable();
    s
}

fn normal_vec(rng: &mut ChaCha8Rng, dist: &Normal<f64>, n: usize) -> Vec<f64> {
    (0..n).map(|_| dist.sample(rng)).collect()
}

/// Initial biases for every threshold neuron, feature by feature.
fn initial_thresholds(dataset: &Dataset, config: &TrainConfig) -> Result<ThresholdParams> {
    let schema = dataset.schema();
    let mut bias = Vec::new();
    let mut source = Vec::new();
    let mut any_varying = false;
    for j in 0..dataset.n_features() {
        let column: Vec<f64> = dataset.feature_column(j).collect();
        let first = column.first().copied();
        if column.iter().any(|&v| Some(v) != first) {
            any_varying = true;
        }
        if schema.is_categorical_feature(j) {
            bias.push(CATEGORICAL_BIAS);
            source.push(j);
            continue;
        }
        let p = config.thresholds_per_feature;
        let mut cuts = tree_thresholds(&column, dataset.target(), p);
        cuts.truncate(p);
        let pad = p - cuts.len();
        cuts.extend(uniform_grid(pad));
        bias.extend(cuts);
        source.extend(std::iter::repeat_n(j, p));
    }
    if !any_varying {
        return Err(DlnError::DegenerateFeatures);
    }
    let slope = vec![INIT_SLOPE; bias.len()];
    Ok(ThresholdParams { bias, slope, source_feature: source })
}

pub fn init_params(dataset: &Dataset, config: &TrainConfig) -> Result<NetworkParams> {
    config.validate()?;
    if dataset.n_rows() == 0 {
        return Err(DlnError::EmptyData("cannot initialize from an empty dataset".into()));
    }
    let threshold = initial_thresholds(dataset, config)?;
    let thr_w = threshold.len();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let dist = Normal::new(0.0, INIT_LOGIT_STD).expect("valid normal");
    let all_gates: Vec<usize> = (0..NUM_GATES).collect();
    let mut layers = Vec::with_capacity(config.layers.len());
    let mut prev = thr_w;
    for (l, &out_dim) in config.layers.iter().enumerate() {
        let in_dim = if l > 0 && config.concat_inputs { prev + thr_w } else { prev };
        let k = config.subspace_size;
        let mut gate_subset = Vec::with_capacity(out_dim);
        let mut link_subset_a = Vec::with_capacity(out_dim);
        let mut link_subset_b = Vec::with_capacity(out_dim);
        for _ in 0..out_dim {
            gate_subset.push(if k >= NUM_GATES { all_gates.clone() } else { sample_subset(&mut rng, NUM_GATES, k) });
            let link_k = if k >= NUM_GATES { in_dim } else { k };
            link_subset_a.push(sample_subset(&mut rng, in_dim, link_k));
            link_subset_b.push(sample_subset(&mut rng, in_dim, link_k));
        }
        layers.push(LogicLayerParams {
            in_dim,
            out_dim,
            gate_logits: normal_vec(&mut rng, &dist, out_dim * NUM_GATES),
            link_a: normal_vec(&mut rng, &dist, out_dim * in_dim),
            link_b: normal_vec(&mut rng, &dist, out_dim * in_dim),
            gate_subset,
            link_subset_a,
            link_subset_b,
        });
        prev = out_dim;
    }
    let sum_in = prev;
    let sum = SumParams {
        link_logits: vec![0.0; sum_in],
        coefficients: normal_vec(&mut rng, &dist, sum_in),
        threshold: config.sum_threshold,
    };
    let params = NetworkParams {
        n_features: dataset.n_features(),
        threshold,
        layers,
        sum,
        concat_inputs: config.concat_inputs,
    };
    params.validate()?;
    Ok(params)
}

/// One line of training progress.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub tau: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    /// Mean training loss over the batches of each epoch.
    pub epoch_mse: Vec<f64>,
    /// MSE of the discretized model on a held-out set, when one was given.
    pub final_validation_mse: Option<f64>,
    /// Temperature at the end of each epoch.
    pub tau: Vec<f64>,
}

impl LossReport {
    pub fn final_tau(&self) -> f64 {
        *self.tau.last().expect("at least one epoch")
    }
}

pub fn train(dataset: &Dataset, config: &TrainConfig) -> Result<(NetworkParams, LossReport)> {
    train_observed(dataset, None, config, &mut |_| {})
}

/// Train, optionally scoring the discretized result on `validation`, and
/// report each finished epoch to `observer`.
pub fn train_observed(
    dataset: &Dataset,
    validation: Option<&Dataset>,
    config: &TrainConfig,
    observer: &mut dyn FnMut(&EpochRecord),
) -> Result<(NetworkParams, LossReport)> {
    let mut params = init_params(dataset, config)?;
    let n = dataset.n_rows();
    let mut adam = Adam::new(&params, config.learning_rate);
    // independent stream for batch order
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let mut order: Vec<usize> = (0..n).collect();
    let mut tau = config.tau_init;
    let mut report = LossReport { epoch_mse: Vec::new(), final_validation_mse: None, tau: Vec::new() };
    for epoch in 0..config.epochs {
        let active = config.active_groups(epoch);
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for (bi, batch) in order.chunks(config.batch_size).enumerate() {
            let (loss, grads) = {
                let engine = SoftEngine::new(&params, tau, config.ste)?;
                let mut acc = engine.accumulator();
                let scale = 2.0 / batch.len() as f64;
                let mut loss = 0.0;
                for &r in batch {
                    let tape = engine.forward(dataset.row(r))?;
                    let err = tape.prediction - dataset.target()[r];
                    loss += err * err;
                    engine.backward(&tape, scale * err, &mut acc)?;
                }
                (loss, engine.gradients(&acc)?)
            };
            if !loss.is_finite() || !grads.is_finite() {
                return Err(DlnError::Diverged { epoch, batch: bi, loss: loss / batch.len() as f64 });
            }
            total += loss;
            adam.step(&mut params, &grads, active);
            if config.decay == DecayGranularity::PerBatch {
                tau = config.next_tau(tau);
            }
        }
        if config.decay == DecayGranularity::PerEpoch {
            tau = config.next_tau(tau);
        }
        let record = EpochRecord { epoch, loss: total / n as f64, tau };
        observer(&record);
        report.epoch_mse.push(record.loss);
        report.tau.push(tau);
    }
    if let Some(v) = validation {
        let model = HardParams { params: &params, tau_final: tau };
        let preds: Vec<f64> = (0..v.n_rows()).map(|i| model.predict_standardized(v.row(i))).collect();
        report.final_validation_mse = Some(mse_loss(&preds, v.target())?);
    }
    Ok((params, report))
}

/// Anything producing a standardized-target prediction from a preprocessed
/// feature row.
pub trait Predictor {
    fn predict_standardized(&self, x: &[f64]) -> f64;
}

/// Discrete evaluation directly from parameters.
#[derive(Clone, Copy, Debug)]
pub struct HardParams<'a> {
    pub params: &'a NetworkParams,
    pub tau_final: f64,
}

impl Predictor for HardParams<'_> {
    fn predict_standardized(&self, x: &[f64]) -> f64 {
        network_forward_hard_params(self.params, self.tau_final, x)
    }
}

impl Predictor for SoftEngine<'_> {
    fn predict_standardized(&self, x: &[f64]) -> f64 {
        self.predict(x).expect("row width checked by dataset")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub r2: f64,
    pub rmse: f64,
    pub mae: f64,
}

/// R², RMSE and MAE of `predictions` against `targets`, both in the same
/// (original) units.
pub fn metrics(predictions: &[f64], targets: &[f64]) -> Result<Metrics> {
    let mse = mse_loss(predictions, targets)?;
    let n = targets.len() as f64;
    let mae = predictions.iter().zip(targets).map(|(p, t)| (p - t).abs()).sum::<f64>() / n;
    let mean = targets.iter().sum::<f64>() / n;
    let ss_tot: f64 = targets.iter().map(|t| (t - mean) * (t - mean)).sum();
    if ss_tot == 0.0 {
        return Err(DlnError::UndefinedR2);
    }
    Ok(Metrics { r2: 1.0 - mse * n / ss_tot, rmse: mse.sqrt(), mae })
}

/// Predictions in original target units for every row of `dataset`.
pub fn predict_dataset(model: &dyn Predictor, dataset: &Dataset) -> Vec<f64> {
    let schema = dataset.schema();
    (0..dataset.n_rows()).map(|i| schema.destandardize(model.predict_standardized(dataset.row(i)))).collect()
}

/// Metrics on de-standardized predictions and targets.
pub fn evaluate(model: &dyn Predictor, dataset: &Dataset) -> Result<Metrics> {
    if dataset.n_rows() == 0 {
        return Err(DlnError::EmptyData("evaluation dataset is empty".into()));
    }
    let schema = dataset.schema();
    let preds = predict_dataset(model, dataset);
    let targets: Vec<f64> = dataset.target().iter().map(|&z| schema.destandardize(z)).collect();
    metrics(&preds, &targets)
}
