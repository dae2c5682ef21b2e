//! The JSON report every command emits: stable keys, content-hashed inputs,
//! and numbers normalized to 12 significant digits for reproducibility
//! audits.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use std::time::{SystemTime, UNIX_EPOCH};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub command: String,
    pub input_sha256: String,
    pub config: Value,
    pub results: Value,
    pub artifacts: Vec<String>,
    pub generated_at_unix: u64,
}

impl Report {
    pub fn new(command: &str, inputs: &[&[u8]], config: Value, results: Value) -> Self {
        let mut hasher = Sha256::new();
        for input in inputs {
            hasher.update(input);
        }
        let digest = hasher.finalize();
        let input_sha256 = digest.iter().map(|b| format!("{b:02x}")).collect();
        Self {
            command: command.to_string(),
            input_sha256,
            config,
            results,
            artifacts: Vec::new(),
            generated_at_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        }
    }

    /// Serialize with every float rounded to 12 significant digits.
    pub fn to_json(&self) -> anyhow::Result<String> {
        let mut value = serde_json::to_value(self)?;
        round_numbers(&mut value);
        Ok(serde_json::to_string_pretty(&value)?)
    }
}

fn round_numbers(value: &mut Value) {
    match value {
        Value::Number(n) => {
            if let Some(f) = n.as_f64() {
                if n.as_i64().is_none() && n.as_u64().is_none() {
                    let rounded: f64 = format!("{f:.11e}").parse().unwrap_or(f);
                    if let Some(num) = serde_json::Number::from_f64(rounded) {
                        *value = Value::Number(num);
                    }
                }
            }
        }
        Value::Array(items) => items.iter_mut().for_each(round_numbers),
        Value::Object(map) => map.values_mut().for_each(round_numbers),
        _ => {}
    }
}
