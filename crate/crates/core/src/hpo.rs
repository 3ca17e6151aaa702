//! Budgeted random search over a hyperparameter grid, scored by k-fold
//! cross-validated MSE of the discretized model.

use std::collections::HashSet;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{default_fold_count, make_folds, Dataset};
use crate::error::{DlnError, Result};
use crate::network::NetworkParams;
use crate::train::{train, train_observed, LossReport, TrainConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SearchSpace {
    pub tau_init: Vec<f64>,
    pub gamma: Vec<f64>,
    pub tau_min: Vec<f64>,
    pub learning_rate: Vec<f64>,
    pub epochs: Vec<usize>,
    pub width: Vec<usize>,
    pub n_layers: Vec<usize>,
    pub thresholds_per_feature: Vec<usize>,
    pub subspace_size: Vec<usize>,
}

impl Default for SearchSpace {
    fn default() -> Self {
        SearchSpace {
            tau_init: vec![0.5, 1.0, 2.0],
            gamma: vec![0.9, 0.95, 0.98],
            tau_min: vec![0.01, 0.05, 0.1],
            learning_rate: vec![0.003, 0.01, 0.03],
            epochs: vec![50, 100, 200],
            width: vec![16, 32, 64],
            n_layers: vec![1, 2, 3],
            thresholds_per_feature: vec![6, 10],
            subspace_size: vec![4, 8, 16],
        }
    }
}

impl SearchSpace {
    fn grid_sizes(&self) -> [usize; 9] {
        [
            self.tau_init.len(),
            self.gamma.len(),
            self.tau_min.len(),
            self.learning_rate.len(),
            self.epochs.len(),
            self.width.len(),
            self.n_layers.len(),
            self.thresholds_per_feature.len(),
            self.subspace_size.len(),
        ]
    }

    /// Number of distinct configurations, saturating.
    pub fn size(&self) -> usize {
        self.grid_sizes().iter().fold(1usize, |acc, &n| acc.saturating_mul(n))
    }

    /// Every grid is non-empty and every combination is a valid config.
    pub fn validate(&self, base: &TrainConfig) -> Result<()> {
        if self.grid_sizes().contains(&0) {
            return Err(DlnError::Config("every search grid needs at least one value".into()));
        }
        let fmin = |v: &[f64]| v.iter().copied().fold(f64::INFINITY, f64::min);
        let fmax = |v: &[f64]| v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        // the tightest combination of each constraint
        let worst = TrainConfig {
            tau_init: fmin(&self.tau_init),
            tau_min: fmax(&self.tau_min),
            ..base.clone()
        };
        worst.validate()?;
        let mut probe = base.clone();
        for &g in &self.gamma {
            probe.gamma = g;
            probe.validate()?;
        }
        for &lr in &self.learning_rate {
            probe.learning_rate = lr;
            probe.validate()?;
        }
        for &t in &self.tau_min {
            probe.tau_min = t.min(fmin(&self.tau_init));
            probe.validate()?;
        }
        for &e in &self.epochs {
            probe.epochs = e;
            probe.validate()?;
        }
        for &w in &self.width {
            probe.layers = vec![w];
            probe.validate()?;
        }
        for &k in &self.subspace_size {
            probe.subspace_size = k;
            probe.validate()?;
        }
        for &t in &self.thresholds_per_feature {
            probe.thresholds_per_feature = t;
            probe.validate()?;
        }
        Ok(())
    }

    /// Config at grid coordinates `c`, other fields from `base`.
    pub fn config(&self, c: &[usize; 9], base: &TrainConfig) -> TrainConfig {
        TrainConfig {
            tau_init: self.tau_init[c[0]],
            gamma: self.gamma[c[1]],
            tau_min: self.tau_min[c[2]],
            learning_rate: self.learning_rate[c[3]],
            epochs: self.epochs[c[4]],
            layers: vec![self.width[c[5]]; self.n_layers[c[6]]],
            thresholds_per_feature: self.thresholds_per_feature[c[7]],
            subspace_size: self.subspace_size[c[8]],
            ..base.clone()
        }
    }

    /// Up to `budget` distinct grid points, drawn uniformly without
    /// replacement. The sequence for a smaller budget is a prefix of the
    /// sequence for a larger one.
    pub fn sample(&self, budget: usize, seed: u64) -> Vec<[usize; 9]> {
        let sizes = self.grid_sizes();
        let target = budget.min(self.size());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut seen = HashSet::new();
        let mut out = Vec::with_capacity(target);
        while out.len() < target {
            let c: [usize; 9] = std::array::from_fn(|d| rng.random_range(0..sizes[d]));
            if seen.insert(c) {
                out.push(c);
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub index: usize,
    pub config: TrainConfig,
    /// mean of `fold_mse`; infinite when training failed
    pub mean_cv_mse: f64,
    pub fold_mse: Vec<f64>,
    pub wall_time_secs: f64,
    pub error: Option<String>,
}

/// Seed used for the network of trial `index`.
pub fn trial_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(index as u64)
}

/// Mean validation MSE (standardized target) of `config` over the folds.
pub fn cross_validate(dataset: &Dataset, config: &TrainConfig, n_folds: usize, fold_seed: u64) -> Result<Vec<f64>> {
    let plan = make_folds(dataset, n_folds, fold_seed)?;
    (0..plan.n_folds)
        .map(|f| {
            let train_part = dataset.subset(&plan.training_rows(f));
            let valid_part = dataset.subset(&plan.validation_rows(f));
            let (_, report) = train_observed(&train_part, Some(&valid_part), config, &mut |_| {})?;
            Ok(report.final_validation_mse.expect("validation set given"))
        })
        .collect()
}

fn run_trial(dataset: &Dataset, config: TrainConfig, index: usize, n_folds: usize, seed: u64) -> TrialResult {
    let start = Instant::now();
    let (fold_mse, error) = match cross_validate(dataset, &config, n_folds, seed) {
        Ok(v) => (v, None),
        Err(e) => (Vec::new(), Some(e.to_string())),
    };
    let mean_cv_mse = if fold_mse.is_empty() {
        f64::INFINITY
    } else {
        let m = fold_mse.iter().sum::<f64>() / fold_mse.len() as f64;
        if m.is_nan() { f64::INFINITY } else { m }
    };
    TrialResult { index, config, mean_cv_mse, fold_mse, wall_time_secs: start.elapsed().as_secs_f64(), error }
}

/// Lowest mean CV MSE, earliest index on ties.
pub fn best_trial(trials: &[TrialResult]) -> Option<&TrialResult> {
    trials.iter().reduce(|best, t| if t.mean_cv_mse < best.mean_cv_mse { t } else { best })
}

pub fn run_search(
    dataset: &Dataset,
    space: &SearchSpace,
    base: &TrainConfig,
    budget: usize,
    seed: u64,
) -> Result<(TrialResult, Vec<TrialResult>)> {
    run_search_logged(dataset, space, base, budget, seed, &|_| {})
}

/// [`run_search`] that hands each finished trial to `on_trial` as soon as it
/// completes (in completion order); the returned list is in index order.
pub fn run_search_logged(
    dataset: &Dataset,
    space: &SearchSpace,
    base: &TrainConfig,
    budget: usize,
    seed: u64,
    on_trial: &(dyn Fn(&TrialResult) + Sync),
) -> Result<(TrialResult, Vec<TrialResult>)> {
    if budget == 0 {
        return Err(DlnError::Config("search budget must be at least 1".into()));
    }
    space.validate(base)?;
    let n_folds = default_fold_count(dataset.n_rows());
    let points = space.sample(budget, seed);
    let trials: Vec<TrialResult> = points
        .par_iter()
        .enumerate()
        .map(|(i, c)| {
            let mut config = space.config(c, base);
            config.seed = trial_seed(seed, i);
            let t = run_trial(dataset, config, i, n_folds, seed);
            on_trial(&t);
            t
        })
        .collect();
    let best = best_trial(&trials).expect("budget ≥ 1").clone();
    Ok((best, trials))
}

/// Retrain the winning configuration on the full training split.
pub fn final_fit(dataset: &Dataset, config: &TrainConfig, seed: u64) -> Result<(NetworkParams, LossReport)> {
    let config = TrainConfig { seed, ..config.clone() };
    train(dataset, &config)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trial(index: usize, mse: f64) -> TrialResult {
        TrialResult {
            index,
            config: TrainConfig::default(),
            mean_cv_mse: mse,
            fold_mse: vec![mse],
            wall_time_secs: 0.0,
            error: None,
        }
    }

    #[test]
    fn ties_go_to_earlier_trial() {
        let t = vec![trial(0, 0.5), trial(1, 0.2), trial(2, 0.2), trial(3, f64::INFINITY)];
        assert_eq!(best_trial(&t).unwrap().index, 1);
        assert_eq!(best_trial(&t[..1]).unwrap().index, 0);
    }

    #[test]
    fn sampling_is_prefix_stable_and_distinct() {
        let s = SearchSpace::default();
        let small = s.sample(32, 9);
        let large = s.sample(128, 9);
        assert_eq!(&large[..32], &small[..]);
        let distinct: HashSet<_> = large.iter().collect();
        assert_eq!(distinct.len(), 128);
        assert_ne!(s.sample(32, 10), small);
    }

    #[test]
    fn small_grid_is_enumerated() {
        let s = SearchSpace {
            tau_init: vec![1.0],
            gamma: vec![0.9, 0.95],
            tau_min: vec![0.05],
            learning_rate: vec![0.01],
            epochs: vec![1, 2],
            width: vec![4],
            n_layers: vec![1],
            thresholds_per_feature: vec![6],
            subspace_size: vec![8],
        };
        assert_eq!(s.size(), 4);
        assert_eq!(s.sample(100, 1).len(), 4);
    }

    #[test]
    fn invalid_spaces_rejected() {
        let base = TrainConfig::default();
        assert!(SearchSpace::default().validate(&base).is_ok());
        let s = SearchSpace { width: vec![], ..Default::default() };
        assert!(s.validate(&base).is_err());
        let s = SearchSpace { tau_min: vec![5.0], ..Default::default() };
        assert!(s.validate(&base).is_err());
        let s = SearchSpace { subspace_size: vec![3], ..Default::default() };
        assert!(s.validate(&base).is_err());
    }
}
