//! JSON model configuration files.
//!
//! ```json
//! {
//!   "species_count": 2,
//!   "period": 1.0,
//!   "growth": { "kind": "Linear", "coefficients": [] },
//!   "rates":  [ { "mean": 2.0, "cos": [], "sin": [] }, { "mean": 1.0 } ],
//!   "delays": [ { "mean": 0.5 }, { "mean": 1.3 } ],
//!   "mutation": [
//!     [ { "mean": 0.9 }, { "mean": 0.1 } ],
//!     [ { "mean": 0.1 }, { "mean": 0.9 } ]
//!   ]
//! }
//! ```
//!
//! `mutation[j][i]` is the probability that type `j` replicates into type
//! `i`. `cos` and `sin` default to empty lists. Unknown keys are rejected.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::growth::GrowthFunction;
use crate::model::ModelSpec;
use crate::signal::PeriodicSignal;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("schema error in `{key}`: {message}")]
    Schema { key: String, message: String },
    #[error("model hypotheses violated: {}", .0.join("; "))]
    Hypothesis(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignalConfig {
    pub mean: f64,
    #[serde(default)]
    pub cos: Vec<f64>,
    #[serde(default)]
    pub sin: Vec<f64>,
}

impl SignalConfig {
    fn to_signal(&self, period: f64) -> PeriodicSignal {
        PeriodicSignal::new(period, self.mean, self.cos.clone(), self.sin.clone())
    }
}

impl From<&PeriodicSignal> for SignalConfig {
    fn from(s: &PeriodicSignal) -> Self {
        Self {
            mean: s.mean,
            cos: s.cos.clone(),
            sin: s.sin.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub species_count: usize,
    pub period: f64,
    pub growth: GrowthConfig,
    pub rates: Vec<SignalConfig>,
    pub delays: Vec<SignalConfig>,
    pub mutation: Vec<Vec<SignalConfig>>,
}

/// Same shape as [`GrowthFunction`] but rejecting unknown keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GrowthConfig {
    pub kind: crate::growth::GrowthKind,
    #[serde(default)]
    pub coefficients: Vec<f64>,
}

impl ModelConfig {
    /// Shape checks and conversion, without the hypothesis checks.
    pub fn to_spec(&self) -> Result<ModelSpec, ConfigError> {
        let n = self.species_count;
        let schema = |key: &str, message: String| ConfigError::Schema {
            key: key.to_string(),
            message,
        };
        if n < 2 {
            return Err(schema("species_count", format!("must be at least 2, got {n}")));
        }
        if !(self.period > 0.0 && self.period.is_finite()) {
            return Err(schema("period", format!("must be positive, got {}", self.period)));
        }
        if self.rates.len() != n {
            return Err(schema(
                "rates",
                format!("has {} entries but species_count is {n}", self.rates.len()),
            ));
        }
        if self.delays.len() != n {
            return Err(schema(
                "delays",
                format!("has {} entries but species_count is {n}", self.delays.len()),
            ));
        }
        if self.mutation.len() != n {
            return Err(schema(
                "mutation",
                format!("has {} rows but species_count is {n}", self.mutation.len()),
            ));
        }
        if let Some((j, row)) = self.mutation.iter().enumerate().find(|(_, r)| r.len() != n) {
            return Err(schema(
                &format!("mutation[{j}]"),
                format!("has {} entries but species_count is {n}", row.len()),
            ));
        }
        let t = self.period;
        Ok(ModelSpec {
            species_count: n,
            period: t,
            growth: GrowthFunction {
                kind: self.growth.kind,
                coefficients: self.growth.coefficients.clone(),
            },
            rates: self.rates.iter().map(|s| s.to_signal(t)).collect(),
            delays: self.delays.iter().map(|s| s.to_signal(t)).collect(),
            mutation: self
                .mutation
                .iter()
                .map(|row| row.iter().map(|s| s.to_signal(t)).collect())
                .collect(),
        })
    }
}

/// Configuration equivalent of a model.
pub fn emit_config(spec: &ModelSpec) -> ModelConfig {
    ModelConfig {
        species_count: spec.species_count,
        period: spec.period,
        growth: GrowthConfig {
            kind: spec.growth.kind,
            coefficients: spec.growth.coefficients.clone(),
        },
        rates: spec.rates.iter().map(SignalConfig::from).collect(),
        delays: spec.delays.iter().map(SignalConfig::from).collect(),
        mutation: spec
            .mutation
            .iter()
            .map(|row| row.iter().map(SignalConfig::from).collect())
            .collect(),
    }
}

fn classify(err: serde_json::Error) -> ConfigError {
    use serde_json::error::Category;
    match err.classify() {
        Category::Data => {
            let message = err.to_string();
            let key = message
                .split('`')
                .nth(1)
                .unwrap_or("<root>")
                .to_string();
            ConfigError::Schema { key, message }
        }
        _ => ConfigError::Parse {
            line: err.line(),
            column: err.column(),
            message: err.to_string(),
        },
    }
}

/// Parses and fully validates a configuration document.
pub fn parse_config_str(text: &str) -> Result<ModelSpec, ConfigError> {
    let cfg: ModelConfig = serde_json::from_str(text).map_err(classify)?;
    let spec = cfg.to_spec()?;
    let report = spec.validate();
    if !report.is_valid() {
        return Err(ConfigError::Hypothesis(report.messages()));
    }
    Ok(spec)
}

pub fn parse_config(path: impl AsRef<Path>) -> Result<ModelSpec, ConfigError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_config_str(&text)
}

/// Compact JSON with object keys in sorted order.
pub fn canonical_json<T: Serialize>(value: &T) -> String {
    // serde_json::Value keeps object keys in a BTreeMap, so re-serializing
    // through it sorts them.
    let v = serde_json::to_value(value).expect("config is always representable as JSON");
    v.to_string()
}

/// SHA-256 of the canonical configuration of `spec`, hex encoded.
pub fn spec_digest(spec: &ModelSpec) -> String {
    digest_of(&emit_config(spec))
}

/// SHA-256 of [`canonical_json`], hex encoded.
pub fn digest_of<T: Serialize>(value: &T) -> String {
    hex::encode(Sha256::digest(canonical_json(value).as_bytes()))
}

/// Provenance record written next to every command output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub config_path: Option<String>,
    /// Hex SHA-256 of the canonical configuration (or case list).
    pub config_digest: String,
    pub version: String,
    pub wall_clock_seconds: f64,
    pub outputs: Vec<String>,
}

pub fn to_pretty_json(spec: &ModelSpec) -> String {
    serde_json::to_string_pretty(&emit_config(spec)).expect("config serializes")
}

#[cfg(test)]
mod tests {
    use super::*;

    const E1: &str = r#"{
      "species_count": 2,
      "period": 1.0,
      "growth": { "kind": "Linear", "coefficients": [] },
      "rates": [ { "mean": 2.0, "cos": [], "sin": [] }, { "mean": 1.0, "cos": [], "sin": [] } ],
      "delays": [ { "mean": 0.5, "cos": [], "sin": [] }, { "mean": 1.3, "cos": [], "sin": [] } ],
      "mutation": [
        [ { "mean": 0.9, "cos": [], "sin": [] }, { "mean": 0.1, "cos": [], "sin": [] } ],
        [ { "mean": 0.1, "cos": [], "sin": [] }, { "mean": 0.9, "cos": [], "sin": [] } ]
      ]
    }"#;

    #[test]
    fn parses_documented_schema() {
        let spec = parse_config_str(E1).unwrap();
        assert_eq!(spec.species_count, 2);
        assert_eq!(spec.growth, GrowthFunction::linear());
        assert_eq!(spec.q().mean, 0.9);
        assert_eq!(spec.delays[1].mean, 1.3);
    }

    #[test]
    fn length_mismatch_names_the_key() {
        let text = E1.replace(
            r#""rates": [ { "mean": 2.0, "cos": [], "sin": [] }, { "mean": 1.0, "cos": [], "sin": [] } ]"#,
            r#""rates": [ { "mean": 2.0 } ]"#,
        );
        match parse_config_str(&text) {
            Err(ConfigError::Schema { key, .. }) => assert_eq!(key, "rates"),
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn out_of_range_probability_is_a_hypothesis_error() {
        let text = E1.replacen(r#"{ "mean": 0.9, "cos""#, r#"{ "mean": 1.2, "cos""#, 1);
        match parse_config_str(&text) {
            Err(ConfigError::Hypothesis(msgs)) => {
                assert!(msgs.iter().any(|m| m.contains("Q_00 outside [0,1]")), "{msgs:?}")
            }
            other => panic!("expected hypothesis error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_key_is_rejected() {
        let text = E1.replacen(r#""period": 1.0,"#, r#""period": 1.0, "seed": 3,"#, 1);
        match parse_config_str(&text) {
            Err(ConfigError::Schema { key, .. }) => assert_eq!(key, "seed"),
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn malformed_json_reports_position() {
        match parse_config_str("{\n  \"species_count\": 2,\n  oops\n}") {
            Err(ConfigError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn digest_ignores_key_order_and_formatting() {
        let a = parse_config_str(E1).unwrap();
        let reordered = r#"{"mutation":[[{"sin":[],"mean":0.9},{"mean":0.1}],[{"mean":0.1},{"mean":0.9}]],
            "delays":[{"mean":0.5},{"mean":1.3}],"rates":[{"mean":2},{"mean":1}],
            "growth":{"coefficients":[],"kind":"Linear"},"period":1,"species_count":2}"#;
        let b = parse_config_str(reordered).unwrap();
        assert_eq!(spec_digest(&a), spec_digest(&b));
        let roundtrip = parse_config_str(&to_pretty_json(&a)).unwrap();
        assert_eq!(spec_digest(&a), spec_digest(&roundtrip));
        assert_eq!(spec_digest(&a).len(), 64);
    }
}
