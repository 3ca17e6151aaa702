//! Run configuration: defaults, overlaid by a TOML file, overlaid by flags.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use dln_core::cost::{set_cost_table, CostTable};
use dln_core::data::SchemaHint;
use dln_core::hpo::SearchSpace;
use dln_core::network::SteConfig;
use dln_core::train::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const DEFAULT_BUDGET: usize = 32;
pub const DEFAULT_TEST_FRACTION: f64 = 0.25;

/// Everything a `train` or `search` run needs. Relative paths in a config
/// file resolve against the file's directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub data: Option<PathBuf>,
    pub target: Option<String>,
    pub categorical: Vec<String>,
    pub continuous: Vec<String>,
    pub ignore: Vec<String>,
    pub test_fraction: f64,
    /// Seeds the train/test split, the network and the search. Overrides
    /// any `seed` in `[train]`.
    pub seed: u64,
    pub out: PathBuf,
    pub budget: usize,
    pub train: TrainConfig,
    pub search: SearchSpace,
    /// Cost table overrides, e.g. `fp16_mul = 1500` or `XOR = 2`.
    pub cost: BTreeMap<String, i64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data: None,
            target: None,
            categorical: Vec::new(),
            continuous: Vec::new(),
            ignore: Vec::new(),
            test_fraction: DEFAULT_TEST_FRACTION,
            seed: 0,
            out: PathBuf::from("out"),
            budget: DEFAULT_BUDGET,
            train: TrainConfig::default(),
            search: SearchSpace::default(),
            cost: BTreeMap::new(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(e.message().to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut cfg = Self::from_toml(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        if let Some(d) = &cfg.data {
            cfg.data = Some(base.join(d));
        }
        cfg.out = base.join(&cfg.out);
        Ok(cfg)
    }

    pub fn hint(&self) -> SchemaHint {
        SchemaHint {
            target: self.target.clone(),
            categorical: self.categorical.clone(),
            continuous: self.continuous.clone(),
            ignore: self.ignore.clone(),
        }
    }

    pub fn data_path(&self) -> Result<&Path> {
        self.data.as_deref().ok_or_else(|| CliError::Usage("missing --data".into()))
    }

    pub fn cost_table(&self) -> Result<CostTable> {
        Ok(set_cost_table(&self.cost)?)
    }

    /// Check every invariant before any compute starts.
    pub fn validate(&self) -> Result<()> {
        self.data_path()?;
        if self.target.is_none() {
            return Err(CliError::Usage("missing --target".into()));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(CliError::Config(format!("test_fraction must lie in (0, 1), got {}", self.test_fraction)));
        }
        if self.budget == 0 {
            return Err(CliError::Config("budget must be at least 1".into()));
        }
        self.train.validate()?;
        self.search.validate(&self.train)?;
        self.cost_table()?;
        Ok(())
    }
}

/// Flags shared by `train` and `search`. Unset flags leave the config file
/// (or default) value in place.
#[derive(Args, Clone, Debug, Default)]
pub struct RunArgs {
    /// TOML run configuration
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// input CSV with a header row
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// name of the target column
    #[arg(long)]
    pub target: Option<String>,
    /// columns to treat as categorical (comma separated or repeated)
    #[arg(long, value_delimiter = ',')]
    pub categorical: Vec<String>,
    #[arg(long)]
    pub test_fraction: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// initial temperature
    #[arg(long)]
    pub tau: Option<f64>,
    /// temperature decay factor
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub tau_min: Option<f64>,
    /// number of logic layers
    #[arg(long)]
    pub layers: Option<usize>,
    /// width of every logic layer
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub thresholds_per_feature: Option<usize>,
    /// candidate gates and links per neuron (4, 8 or 16)
    #[arg(long)]
    pub subspace: Option<usize>,
    /// feed only the previous layer to each logic layer
    #[arg(long)]
    pub no_concat: bool,
    /// use relaxed values in every forward pass
    #[arg(long)]
    pub no_ste: bool,
    /// keep the temperature fixed at its initial value
    #[arg(long)]
    pub no_tau_schedule: bool,
    /// train thresholds, gates and coefficients first, then links
    #[arg(long)]
    pub two_phase: bool,
    /// output directory
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// print per-epoch progress to stderr
    #[arg(long, short)]
    pub verbose: bool,
}

impl RunArgs {
    /// Defaults, then the config file, then flags.
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        self.apply(&mut cfg);
        cfg.train.seed = cfg.seed;
        Ok(cfg)
    }

    fn apply(&self, cfg: &mut RunConfig) {
        fn set<T: Clone>(slot: &mut T, v: &Option<T>) {
            if let Some(v) = v {
                *slot = v.clone();
            }
        }
        if self.data.is_some() {
            cfg.data = self.data.clone();
        }
        if self.target.is_some() {
            cfg.target = self.target.clone();
        }
        if !self.categorical.is_empty() {
            cfg.categorical = self.categorical.clone();
        }
        set(&mut cfg.test_fraction, &self.test_fraction);
        set(&mut cfg.seed, &self.seed);
        set(&mut cfg.out, &self.out);
        let t = &mut cfg.train;
        set(&mut t.epochs, &self.epochs);
        set(&mut t.batch_size, &self.batch_size);
        set(&mut t.learning_rate, &self.lr);
        set(&mut t.tau_init, &self.tau);
        set(&mut t.gamma, &self.gamma);
        set(&mut t.tau_min, &self.tau_min);
        set(&mut t.thresholds_per_feature, &self.thresholds_per_feature);
        set(&mut t.subspace_size, &self.subspace);
        if self.layers.is_some() || self.width.is_some() {
            let n = self.layers.unwrap_or(t.layers.len());
            let w = self.width.or(t.layers.first().copied()).unwrap_or(32);
            t.layers = vec![w; n];
        }
        if self.no_concat {
            t.concat_inputs = false;
        }
        if self.no_ste {
            t.ste = SteConfig::off();
        }
        if self.no_tau_schedule {
            t.tau_schedule = false;
        }
        if self.two_phase {
            t.two_phase = true;
        }
    }
}
