//! Versioned, checksummed JSON documents for trained models and circuits.
//!
//! Layout: `{"format": ..., "version": "1.0", "checksum": <sha256 hex>,
//! "payload": {...}}`. The checksum covers the compact serialization of the
//! payload. Floats use shortest round-trip formatting, so loading returns
//! bit-identical parameters.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use super::HardCircuit;
use crate::data::Schema;
use crate::error::{DlnError, Result};
use crate::network::NetworkParams;
use crate::train::{LossReport, TrainConfig};

pub const FORMAT_VERSION: &str = "1.0";
const SUPPORTED_MAJOR: u32 = 1;
pub const MODEL_FORMAT: &str = "dln-model";
pub const CIRCUIT_FORMAT: &str = "dln-circuit";

/// A trained network with everything needed to predict from raw rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub schema: Schema,
    pub config: TrainConfig,
    pub params: NetworkParams,
    pub tau_final: f64,
    pub report: LossReport,
}

impl ModelFile {
    /// Discretize into a circuit carrying the schema and provenance metadata.
    pub fn circuit(&self) -> Result<HardCircuit> {
        let mut c = super::discretize(&self.params, self.tau_final).with_schema(&self.schema);
        c.metadata.seed = self.config.seed;
        c.metadata.config_digest = checksum(&serde_json::to_value(&self.config)?);
        Ok(c)
    }
}

fn checksum(payload: &Value) -> String {
    hex::encode(Sha256::digest(payload.to_string().as_bytes()))
}

fn encode<T: Serialize>(format: &str, payload: &T) -> Result<String> {
    let payload = serde_json::to_value(payload)?;
    let doc = serde_json::json!({
        "format": format,
        "version": FORMAT_VERSION,
        "checksum": checksum(&payload),
        "payload": payload,
    });
    let mut text = serde_json::to_string_pretty(&doc)?;
    text.push('\n');
    Ok(text)
}

fn decode<T: DeserializeOwned>(format: &str, text: &str) -> Result<T> {
    let doc: Value = serde_json::from_str(text).map_err(|e| DlnError::Malformed(e.to_string()))?;
    let field = |k: &str| doc.get(k).ok_or_else(|| DlnError::Malformed(format!("missing field {k}")));
    let found = field("format")?.as_str().unwrap_or_default();
    if found != format {
        return Err(DlnError::Malformed(format!("expected a {format} document, found {found:?}")));
    }
    let version = field("version")?.as_str().ok_or_else(|| DlnError::Malformed("version is not a string".into()))?;
    let major: u32 = version
        .split('.')
        .next()
        .and_then(|m| m.parse().ok())
        .ok_or_else(|| DlnError::Malformed(format!("unparseable version {version:?}")))?;
    if major != SUPPORTED_MAJOR {
        return Err(DlnError::Version { found: version.to_string(), supported: SUPPORTED_MAJOR });
    }
    let payload = field("payload")?;
    let stored = field("checksum")?.as_str().unwrap_or_default();
    if checksum(payload) != stored {
        return Err(DlnError::Checksum);
    }
    T::deserialize(payload).map_err(|e| DlnError::Malformed(e.to_string()))
}

pub fn save_document<T: Serialize>(format: &str, payload: &T, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode(format, payload)?)?;
    Ok(())
}

pub fn load_document<T: DeserializeOwned>(format: &str, path: impl AsRef<Path>) -> Result<T> {
    let bytes = fs::read(path)?;
    let text = String::from_utf8(bytes).map_err(|_| DlnError::Malformed("document is not UTF-8".into()))?;
    decode(format, &text)
}

pub fn save_model(model: &ModelFile, path: impl AsRef<Path>) -> Result<()> {
    save_document(MODEL_FORMAT, model, path)
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ModelFile> {
    load_document(MODEL_FORMAT, path)
}

pub fn save_circuit(circuit: &HardCircuit, path: impl AsRef<Path>) -> Result<()> {
    save_document(CIRCUIT_FORMAT, circuit, path)
}

pub fn load_circuit(path: impl AsRef<Path>) -> Result<HardCircuit> {
    load_document(CIRCUIT_FORMAT, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::{Node, SumLink};

    fn sample() -> HardCircuit {
        let mut c = HardCircuit::empty(1);
        c.nodes.push(Node::Threshold { feature: 0, bias: 0.1 + 0.2, positive: true });
        c.links.push(SumLink { node: 0, coefficient: -1.0 / 3.0 });
        c.target_mean = 1e-300;
        c
    }

    #[test]
    fn round_trip_is_exact() {
        let c = sample();
        let text = encode(CIRCUIT_FORMAT, &c).unwrap();
        let back: HardCircuit = decode(CIRCUIT_FORMAT, &text).unwrap();
        assert_eq!(back, c);
        assert_eq!(encode(CIRCUIT_FORMAT, &back).unwrap(), text);
    }

    #[test]
    fn corrupted_payload_fails_checksum() {
        let text = encode(CIRCUIT_FORMAT, &sample()).unwrap();
        let bad = text.replacen("\"positive\": true", "\"positive\": false", 1);
        assert_ne!(bad, text);
        assert!(matches!(decode::<HardCircuit>(CIRCUIT_FORMAT, &bad), Err(DlnError::Checksum)));
    }

    #[test]
    fn future_major_version_rejected() {
        let text = encode(CIRCUIT_FORMAT, &sample()).unwrap().replacen("\"1.0\"", "\"2.0\"", 1);
        assert!(matches!(decode::<HardCircuit>(CIRCUIT_FORMAT, &text), Err(DlnError::Version { .. })));
    }

    #[test]
    fn malformed_documents() {
        assert!(matches!(decode::<HardCircuit>(CIRCUIT_FORMAT, "{not json"), Err(DlnError::Malformed(_))));
        let text = encode(MODEL_FORMAT, &sample()).unwrap();
        assert!(matches!(decode::<HardCircuit>(CIRCUIT_FORMAT, &text), Err(DlnError::Malformed(_))));
    }
}
