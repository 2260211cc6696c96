//! Run configuration: one JSON document with a section per concern, file
//! values overridden by command-line flags.

use std::fs;
use std::path::{Path, PathBuf};

use adapt_core::energy::{EnergyArch, EnergyModelConfig};
use adapt_core::experiments::DEFAULT_RADIUS_FRACTIONS;
use adapt_core::force::ForceModelConfig;
use adapt_core::mask::MaskSpec;
use adapt_core::oracle::ToyOracleConfig;
use adapt_core::relax::RelaxConfig;
use adapt_core::train::TrainConfig;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::formats::Format;

/// Environment variable naming the default output directory.
pub const OUTPUT_DIR_ENV: &str = "ADAPT_OUTPUT_DIR";
pub const DEFAULT_OUTPUT_DIR: &str = "adapt-out";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Dataset manifest. Defaults to `<output>/data/manifest.txt`.
    pub manifest: Option<PathBuf>,
    /// Train, validation and test fractions.
    pub fractions: [f64; 3],
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            manifest: None,
            // 500 / 50 / 50 of the default 600 structures.
            fractions: [500.0 / 600.0, 50.0 / 600.0, 50.0 / 600.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FileFormat {
    Xyz,
    Json,
}

impl From<FileFormat> for Format {
    fn from(f: FileFormat) -> Format {
        match f {
            FileFormat::Xyz => Format::Xyz,
            FileFormat::Json => Format::Json,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerateConfig {
    pub count: usize,
    /// Uniform per-coordinate displacement bound, Å.
    pub jitter: f64,
    pub format: FileFormat,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        GenerateConfig {
            count: 600,
            jitter: 0.1,
            format: FileFormat::Xyz,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationConfig {
    pub fractions: Vec<f64>,
    /// Epochs per run; `train.epochs` when absent.
    pub epochs: Option<usize>,
}

impl Default for AblationConfig {
    fn default() -> Self {
        AblationConfig {
            fractions: DEFAULT_RADIUS_FRACTIONS.to_vec(),
            epochs: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareConfig {
    pub archs: Vec<EnergyArch>,
    /// Epochs per architecture; `train.epochs` when absent.
    pub epochs: Option<usize>,
}

impl Default for CompareConfig {
    fn default() -> Self {
        CompareConfig {
            archs: EnergyArch::ALL.to_vec(),
            epochs: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Seeds data generation, the split, initialization and dropout.
    /// Copied into `train.seed` on resolution.
    pub seed: u64,
    pub data: DataConfig,
    pub generate: GenerateConfig,
    pub oracle: ToyOracleConfig,
    pub force_model: ForceModelConfig,
    pub energy_model: EnergyModelConfig,
    pub train: TrainConfig,
    pub relax: RelaxConfig,
    /// Test structures relaxed by the `relax` subcommand.
    pub relax_count: usize,
    pub ablation: AblationConfig,
    pub compare: CompareConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            data: DataConfig::default(),
            generate: GenerateConfig::default(),
            oracle: ToyOracleConfig::default(),
            force_model: ForceModelConfig::default(),
            energy_model: EnergyModelConfig::default(),
            train: TrainConfig::default(),
            relax: RelaxConfig::default(),
            relax_count: 10,
            ablation: AblationConfig::default(),
            compare: CompareConfig::default(),
        }
    }
}

/// Sets `path` (dot-separated) inside `root` to `value`, creating objects
/// along the way.
pub fn set_path(root: &mut Value, path: &str, value: Value) -> Result<()> {
    let mut node = root;
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(Error::config(path, "empty key in override path"));
    }
    for (i, key) in keys.iter().enumerate() {
        if !node.is_object() {
            if node.is_null() {
                *node = Value::Object(Default::default());
            } else {
                return Err(Error::config(keys[..i].join("."), "is not an object"));
            }
        }
        let map = node.as_object_mut().unwrap();
        if i + 1 == keys.len() {
            map.insert(key.to_string(), value);
            return Ok(());
        }
        node = map.entry(key.to_string()).or_insert(Value::Null);
    }
    unreachable!("path has at least one key")
}

/// Parses `key.path=value`; the value is read as JSON, falling back to a
/// plain string.
pub fn parse_override(text: &str) -> Result<(String, Value)> {
    let (key, raw) = text
        .split_once('=')
        .ok_or_else(|| Error::config(text, "override must look like key.path=value"))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    Ok((key.trim().to_string(), value))
}

impl RunConfig {
    /// Reads `path` (or starts empty), applies `overrides` in order, and
    /// deserializes and validates the result.
    pub fn load(path: Option<&Path>, overrides: &[(String, Value)]) -> Result<RunConfig> {
        let mut root = match path {
            Some(p) => {
                let text = fs::read_to_string(p)
                    .map_err(|e| Error::config("<config>", format!("cannot read {}: {e}", p.display())))?;
                serde_json::from_str(&text)
                    .map_err(|e| Error::config("<config>", format!("{}: {e}", p.display())))?
            }
            None => Value::Object(Default::default()),
        };
        for (key, value) in overrides {
            set_path(&mut root, key, value.clone())?;
        }
        Self::from_value(root)
    }

    pub fn from_value(root: Value) -> Result<RunConfig> {
        let mut cfg: RunConfig = serde_path_to_error::deserialize(root).map_err(|e| {
            let field = e.path().to_string();
            Error::config(field, e.into_inner().to_string())
        })?;
        cfg.train.seed = cfg.seed;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let at = |field: &'static str| move |e: adapt_core::Error| Error::config(field, e.to_string());
        let total: f64 = self.data.fractions.iter().sum();
        if self.data.fractions.iter().any(|f| *f < 0.0) || (total - 1.0).abs() > 1e-9 {
            return Err(Error::config("data.fractions", "must be non-negative and sum to 1"));
        }
        if !(self.generate.jitter >= 0.0) {
            return Err(Error::config("generate.jitter", "must be non-negative"));
        }
        self.oracle.validate().map_err(at("oracle"))?;
        self.force_model.validate().map_err(at("force_model"))?;
        self.energy_model.validate().map_err(at("energy_model"))?;
        self.train.validate().map_err(at("train"))?;
        self.relax.validate().map_err(at("relax"))?;
        for &p in &self.ablation.fractions {
            MaskSpec::Radius { allowed_percent: p }
                .validate()
                .map_err(at("ablation.fractions"))?;
        }
        if self.ablation.epochs == Some(0) {
            return Err(Error::config("ablation.epochs", "must be at least 1"));
        }
        Ok(())
    }

    pub fn to_pretty_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("configs always serialize")
    }
}

/// `--out` if given, else the environment variable, else `adapt-out`.
pub fn output_dir(flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn empty_document_gives_defaults() {
        let cfg = RunConfig::from_value(json!({})).unwrap();
        assert_eq!(cfg, RunConfig::default());
    }

    #[test]
    fn overrides_create_nested_objects() {
        let mut v = json!({});
        set_path(&mut v, "train.optimizer.learning_rate", json!(0.01)).unwrap();
        assert_eq!(v, json!({"train": {"optimizer": {"learning_rate": 0.01}}}));
        let cfg = RunConfig::from_value(v).unwrap();
        assert_eq!(cfg.train.optimizer.learning_rate, 0.01);
    }

    #[test]
    fn schema_errors_name_the_field() {
        let err = RunConfig::from_value(json!({"train": {"epochs": "many"}})).unwrap_err();
        match err {
            Error::Config { field, .. } => assert_eq!(field, "train.epochs"),
            other => panic!("unexpected {other}"),
        }
        let err = RunConfig::from_value(json!({"force_model": {"encoder": {"d_modle": 3}}})).unwrap_err();
        assert!(matches!(err, Error::Config { ref field, .. } if field.starts_with("force_model.encoder")));
    }

    #[test]
    fn semantic_errors_name_the_section() {
        let err = RunConfig::from_value(json!({"force_model": {"encoder": {"n_heads": 7}}})).unwrap_err();
        assert!(matches!(err, Error::Config { ref field, .. } if field == "force_model"));
    }

    #[test]
    fn seed_propagates_into_training() {
        let cfg = RunConfig::from_value(json!({"seed": 42})).unwrap();
        assert_eq!(cfg.train.seed, 42);
    }

    #[test]
    fn override_values_parse_as_json_or_string() {
        assert_eq!(parse_override("a.b=3").unwrap(), ("a.b".into(), json!(3)));
        assert_eq!(parse_override("arch=decoder").unwrap(), ("arch".into(), json!("decoder")));
        assert!(parse_override("novalue").is_err());
    }
}
