use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use dln_core::circuit::{
    export_dot, extract_rules, load_circuit, load_model, save_circuit, save_model, simplify, HardCircuit, ModelFile,
    CIRCUIT_FORMAT, MODEL_FORMAT,
};
use dln_core::cost::{count_ops, set_cost_table, CostReport};
use dln_core::data::{load_and_split, read_csv, Dataset, RawTable, SchemaHint};
use dln_core::hpo::{final_fit, run_search_logged, TrialResult};
use dln_core::train::{evaluate, train_observed, LossReport, Metrics, TrainConfig};
use dln_core::network::NetworkParams;
use dln_core::DlnError;
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::{CompileArgs, CostArgs, CostOverrides, EvaluateArgs, ExportArgs, PredictArgs, RunArgs, SearchArgs};

pub const MODEL_FILE: &str = "model.json";
pub const METRICS_FILE: &str = "metrics.json";
pub const TRIALS_FILE: &str = "trials.jsonl";
pub const CIRCUIT_FILE: &str = "circuit.json";
pub const RULES_FILE: &str = "rules.txt";
pub const DOT_FILE: &str = "circuit.dot";
pub const COST_FILE: &str = "cost.json";

/// Contents of metrics.json. Errors are in original target units.
#[derive(Debug, Serialize)]
pub struct MetricsReport {
    pub n_train: usize,
    pub n_test: usize,
    pub train: Metrics,
    pub test: Metrics,
    pub final_train_loss: f64,
    pub tau_final: f64,
    pub cost: CostReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub search: Option<SearchSummary>,
}

#[derive(Debug, Serialize)]
pub struct SearchSummary {
    pub budget: usize,
    pub trials: usize,
    pub best_index: usize,
    pub best_mean_cv_mse: f64,
    pub best_config: TrainConfig,
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn pretty<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(DlnError::from)?;
    s.push('\n');
    Ok(s)
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => write_file(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn load_data(cfg: &RunConfig) -> Result<(Dataset, Dataset)> {
    let path = cfg.data_path()?;
    if !path.exists() {
        return Err(CliError::io(path, std::io::Error::new(std::io::ErrorKind::NotFound, "file not found")));
    }
    Ok(load_and_split(path, &cfg.hint(), cfg.test_fraction, cfg.seed)?)
}

fn epoch_logger(verbose: bool) -> impl FnMut(&dln_core::train::EpochRecord) {
    move |r| {
        if verbose {
            eprintln!("epoch {:>4}  loss {:.6}  tau {:.4}", r.epoch + 1, r.loss, r.tau);
        }
    }
}

/// Write model.json and metrics.json for a finished fit.
fn finish_run(
    cfg: &RunConfig,
    config: TrainConfig,
    train_ds: &Dataset,
    test_ds: &Dataset,
    params: NetworkParams,
    report: LossReport,
    search: Option<SearchSummary>,
) -> Result<MetricsReport> {
    let model = ModelFile {
        schema: train_ds.schema().as_ref().clone(),
        config,
        tau_final: report.final_tau(),
        params,
        report,
    };
    save_model(&model, cfg.out.join(MODEL_FILE))?;
    let circuit = simplify(&model.circuit()?);
    let metrics = MetricsReport {
        n_train: train_ds.n_rows(),
        n_test: test_ds.n_rows(),
        train: evaluate(&circuit, train_ds)?,
        test: evaluate(&circuit, test_ds)?,
        final_train_loss: *model.report.epoch_mse.last().expect("at least one epoch"),
        tau_final: model.tau_final,
        cost: count_ops(&circuit, &cfg.cost_table()?),
        search,
    };
    write_file(&cfg.out.join(METRICS_FILE), pretty(&metrics)?)?;
    Ok(metrics)
}

/// Preprocess, train, evaluate the discretized model on the test split and
/// write model.json and metrics.json.
pub fn cmd_train(args: &RunArgs) -> Result<()> {
    let cfg = args.resolve()?;
    cfg.validate()?;
    let (train_ds, test_ds) = load_data(&cfg)?;
    create_dir(&cfg.out)?;
    let (params, report) = train_observed(&train_ds, None, &cfg.train, &mut epoch_logger(args.verbose))?;
    let m = finish_run(&cfg, cfg.train.clone(), &train_ds, &test_ds, params, report, None)?;
    eprintln!("test R² {:.4}  RMSE {:.4}  MAE {:.4}  ({})", m.test.r2, m.test.rmse, m.test.mae, cfg.out.display());
    Ok(())
}

/// Random search with k-fold CV on the training split, then a final fit on
/// the whole training split and a test evaluation. Trials are appended to
/// trials.jsonl as they finish.
pub fn cmd_search(args: &SearchArgs) -> Result<()> {
    let mut cfg = args.run.resolve()?;
    if let Some(b) = args.budget {
        cfg.budget = b;
    }
    cfg.validate()?;
    let (train_ds, test_ds) = load_data(&cfg)?;
    create_dir(&cfg.out)?;
    let trials_path = cfg.out.join(TRIALS_FILE);
    let log = File::create(&trials_path).map_err(|e| CliError::io(&trials_path, e))?;
    let log = Mutex::new((log, None::<std::io::Error>));
    let verbose = args.run.verbose;
    let on_trial = |t: &TrialResult| {
        let mut line = serde_json::to_string(t).expect("trial records serialize");
        line.push('\n');
        let mut guard = log.lock().expect("trial log lock");
        let (file, failure) = &mut *guard;
        if failure.is_none() {
            if let Err(e) = file.write_all(line.as_bytes()).and_then(|_| file.flush()) {
                *failure = Some(e);
            }
        }
        if verbose {
            eprintln!("trial {:>3}  cv mse {:.6}  {:.1}s", t.index, t.mean_cv_mse, t.wall_time_secs);
        }
    };
    let (best, trials) = run_search_logged(&train_ds, &cfg.search, &cfg.train, cfg.budget, cfg.seed, &on_trial)?;
    if let (_, Some(e)) = log.into_inner().expect("trial log lock") {
        return Err(CliError::io(trials_path, e));
    }
    if !best.mean_cv_mse.is_finite() {
        let reason = best.error.clone().unwrap_or_else(|| "non-finite validation error".into());
        return Err(CliError::Failed(format!("every trial failed; best-ranked failure: {reason}")));
    }
    let config = TrainConfig { seed: cfg.seed, ..best.config.clone() };
    let (params, report) = final_fit(&train_ds, &config, cfg.seed)?;
    let summary = SearchSummary {
        budget: cfg.budget,
        trials: trials.len(),
        best_index: best.index,
        best_mean_cv_mse: best.mean_cv_mse,
        best_config: best.config.clone(),
    };
    let m = finish_run(&cfg, config, &train_ds, &test_ds, params, report, Some(summary))?;
    eprintln!(
        "best trial {} of {}  test R² {:.4}  RMSE {:.4}  ({})",
        best.index,
        trials.len(),
        m.test.r2,
        m.test.rmse,
        cfg.out.display()
    );
    Ok(())
}

/// Read a model or circuit document. Models are discretized and, unless
/// `simplify_model` is false, simplified; circuits are returned as stored.
pub fn load_any(path: &Path, simplify_model: bool) -> Result<HardCircuit> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let format = serde_json::from_str::<serde_json::Value>(&text)
        .ok()
        .and_then(|v| v.get("format").and_then(|f| f.as_str()).map(str::to_owned))
        .unwrap_or_default();
    match format.as_str() {
        MODEL_FORMAT => {
            let c = load_model(path)?.circuit()?;
            Ok(if simplify_model { simplify(&c) } else { c })
        }
        CIRCUIT_FORMAT => Ok(load_circuit(path)?),
        other => Err(DlnError::Malformed(format!(
            "{}: expected a {MODEL_FORMAT} or {CIRCUIT_FORMAT} document, found {other:?}",
            path.display()
        ))
        .into()),
    }
}

fn parse_overrides(opts: &CostOverrides) -> Result<BTreeMap<String, i64>> {
    opts.cost
        .iter()
        .map(|kv| {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("--cost expects KEY=VALUE, got `{kv}`")))?;
            let v: i64 = v
                .trim()
                .parse()
                .map_err(|_| CliError::Usage(format!("--cost value for `{k}` is not an integer")))?;
            Ok((k.trim().to_string(), v))
        })
        .collect()
}

/// Discretize (and simplify) a model, then write the circuit, its rules,
/// its DOT graph and its cost report.
pub fn cmd_compile(args: &CompileArgs) -> Result<()> {
    let table = set_cost_table(&parse_overrides(&args.opts)?)?;
    let model = load_model(&args.model)?;
    let raw = model.circuit()?;
    let circuit = if args.opts.no_simplify { raw } else { simplify(&raw) };
    let out = match &args.out {
        Some(o) => o.clone(),
        None => args.model.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from(".")),
    };
    create_dir(&out)?;
    save_circuit(&circuit, out.join(CIRCUIT_FILE))?;
    write_file(&out.join(RULES_FILE), extract_rules(&circuit).render())?;
    write_file(&out.join(DOT_FILE), export_dot(&circuit))?;
    let report = count_ops(&circuit, &table);
    write_file(&out.join(COST_FILE), pretty(&report)?)?;
    eprintln!(
        "{} thresholds, {} gates, {} links, {} OPs ({})",
        report.n_thresholds,
        report.n_gates,
        report.n_links,
        report.total_ops,
        out.display()
    );
    Ok(())
}

pub fn cmd_export(args: &ExportArgs) -> Result<()> {
    let circuit = load_any(&args.model, !args.no_simplify)?;
    emit(args.out.as_deref(), &export_dot(&circuit))
}

pub fn cmd_cost(args: &CostArgs) -> Result<()> {
    let table = set_cost_table(&parse_overrides(&args.opts)?)?;
    let circuit = load_any(&args.model, !args.opts.no_simplify)?;
    emit(None, &pretty(&count_ops(&circuit, &table))?)
}

/// Read `path` with the column kinds the circuit's schema expects.
fn read_for(circuit: &HardCircuit, path: &Path, need_target: bool) -> Result<(dln_core::data::Schema, RawTable)> {
    let schema = circuit
        .schema
        .clone()
        .ok_or_else(|| DlnError::Schema("circuit carries no input schema".into()))?;
    let hint = SchemaHint {
        target: if need_target { schema.target_name().map(str::to_owned) } else { None },
        categorical: schema.categorical_columns(),
        ..Default::default()
    };
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let raw = read_csv(file, &hint).map_err(|e| match e {
        DlnError::MissingColumn(c) => DlnError::Schema(format!("input lacks column `{c}`")),
        e => e,
    })?;
    Ok((schema, raw))
}

/// Metrics in original units over the complete rows of a labelled CSV.
pub fn cmd_evaluate(args: &EvaluateArgs) -> Result<()> {
    let circuit = load_any(&args.model, true)?;
    let (schema, raw) = read_for(&circuit, &args.data, true)?;
    let raw = Arc::new(raw);
    let rows = schema.complete_rows(&raw)?;
    let ds = schema.transform(&raw, &rows)?;
    emit(args.out.as_deref(), &pretty(&evaluate(&circuit, &ds)?)?)
}

/// One prediction per input row, in original target units; rows with a
/// missing feature value get an empty field.
pub fn cmd_predict(args: &PredictArgs) -> Result<()> {
    let circuit = load_any(&args.model, true)?;
    let (schema, raw) = read_for(&circuit, &args.data, false)?;
    let mut text = String::from("prediction\n");
    for x in schema.transform_features(&raw)? {
        if let Some(x) = x {
            text.push_str(&circuit.predict(&x).to_string());
        }
        text.push('\n');
    }
    emit(args.out.as_deref(), &text)
}
