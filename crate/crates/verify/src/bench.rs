//! Locally stored benchmark CSVs. Files live in `$DLN_DATA_DIR` or, when
//! that is unset, in the workspace `data/` directory, named `<name>.csv`
//! with a header row and the regression target as the last column.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

pub const DATA_DIR_ENV: &str = "DLN_DATA_DIR";

pub fn data_dir() -> PathBuf {
    match std::env::var_os(DATA_DIR_ENV) {
        Some(d) => PathBuf::from(d),
        None => {
            let d = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data");
            d.canonicalize().unwrap_or(d)
        }
    }
}

/// Path of `<name>.csv` in the data directory, if present.
pub fn locate(name: &str) -> Option<PathBuf> {
    let p = data_dir().join(format!("{name}.csv"));
    p.is_file().then_some(p)
}

/// Name of the last header field.
pub fn target_column(path: &Path) -> std::io::Result<String> {
    let mut header = String::new();
    BufReader::new(File::open(path)?).read_line(&mut header)?;
    let last = header.trim_end().rsplit(',').next().unwrap_or_default();
    Ok(last.trim().trim_matches('"').to_string())
}
