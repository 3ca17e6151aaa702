use thiserror::Error;

#[derive(Error, Debug)]
pub enum DlnError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("gate index {0} out of range 0..16")]
    GateIndex(usize),
    #[error("row {row} has {found} fields, header has {expected}")]
    Arity { row: usize, expected: usize, found: usize },
    #[error("column `{0}` not found")]
    MissingColumn(String),
    #[error("no usable rows: {0}")]
    EmptyData(String),
    #[error("target is constant on the training rows")]
    ConstantTarget,
    #[error("invalid split: {0}")]
    InvalidSplit(String),
    #[error("fold count {0} outside 2..=4")]
    FoldCount(usize),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("tape does not belong to this forward engine")]
    TapeMismatch,
    #[error("empty candidate subset for neuron {neuron} in layer {layer}")]
    EmptySubset { layer: usize, neuron: usize },
    #[error("every feature has fewer than 2 distinct values")]
    DegenerateFeatures,
    #[error("training diverged at epoch {epoch}, batch {batch}: loss = {loss}")]
    Diverged { epoch: usize, batch: usize, loss: f64 },
    #[error("R² undefined: target has zero variance")]
    UndefinedR2,
    #[error("unsupported model version {found} (this build reads major version {supported})")]
    Version { found: String, supported: u32 },
    #[error("checksum mismatch: model file is corrupted")]
    Checksum,
    #[error("malformed document: {0}")]
    Malformed(String),
    #[error("schema mismatch: {0}")]
    Schema(String),
    #[error("negative cost for `{0}`")]
    NegativeCost(String),
    #[error("unknown cost key `{0}`")]
    UnknownCostKey(String),
}

pub type Result<T, E = DlnError> = std::result::Result<T, E>;
