//! JSON report helpers: rounding, content hashing and the plot table.

use std::io::Write;
use std::path::Path;

use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::CliError;

pub const SIGNIFICANT_DIGITS: usize = 12;

/// Rounds every number in `value` to [`SIGNIFICANT_DIGITS`] significant digits.
pub fn round_numbers(value: &mut Value) {
    match value {
        Value::Number(n) if n.is_f64() => {
            if let Some(rounded) = n.as_f64().map(round_significant).and_then(serde_json::Number::from_f64) {
                *n = rounded;
            }
        }
        Value::Array(items) => items.iter_mut().for_each(round_numbers),
        Value::Object(map) => map.values_mut().for_each(round_numbers),
        _ => {}
    }
}

pub fn round_significant(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{:.*e}", SIGNIFICANT_DIGITS - 1, x)
        .parse()
        .unwrap_or(x)
}

/// SHA-256 over the effective configuration and the bytes of every input file.
pub fn content_hash(config: &Value, inputs: &[(&str, &[u8])]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(b"config\0");
    hasher.update(config.to_string().as_bytes());
    for (name, bytes) in inputs {
        hasher.update(name.as_bytes());
        hasher.update(b"\0");
        hasher.update((bytes.len() as u64).to_le_bytes());
        hasher.update(bytes);
    }
    hex::encode(hasher.finalize())
}

pub fn write_report(report: &Value, out: Option<&Path>) -> Result<(), CliError> {
    let mut value = report.clone();
    round_numbers(&mut value);
    let text = serde_json::to_string_pretty(&value).expect("report is valid JSON") + "\n";
    match out {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| CliError::Output(format!("{}: {e}", path.display()))),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| CliError::Output(e.to_string())),
    }
}

/// One row per setting: `setting_id,probe_mean,observed,model`.
pub fn write_plot(
    path: &Path,
    ids: &[u64],
    means: &[f64],
    observed: &[f64],
    model: &[f64],
) -> Result<(), CliError> {
    let mut text = String::from("setting_id,probe_mean,observed,model\n");
    for (((id, n), p), q) in ids.iter().zip(means).zip(observed).zip(model) {
        text.push_str(&format!(
            "{id},{},{},{}\n",
            round_significant(*n),
            round_significant(*p),
            round_significant(*q)
        ));
    }
    std::fs::write(path, text).map_err(|e| CliError::Output(format!("{}: {e}", path.display())))
}
