//! Experiment configuration: TOML files with full defaulting, so an empty
//! file is a valid blob-stream experiment and every knob has the documented
//! default. The resolved config is embedded in each run record.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use hdqt::cil::Hyperparams;
use hdqt::error::{Error, Result};
use hdqt::quant::QuantConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Joint training over all classes at once (the non-continual baseline).
    Nocl,
    Lwf,
    Icarl,
    IcarlNme,
    Bic,
}

impl Method {
    pub fn parse(name: &str) -> Result<Method> {
        match name {
            "nocl" => Ok(Method::Nocl),
            "lwf" => Ok(Method::Lwf),
            "icarl" => Ok(Method::Icarl),
            "icarl_nme" => Ok(Method::IcarlNme),
            "bic" => Ok(Method::Bic),
            other => Err(Error::param("method", format!("unknown method '{other}'"))),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Method::Nocl => "nocl",
            Method::Lwf => "lwf",
            Method::Icarl => "icarl",
            Method::IcarlNme => "icarl_nme",
            Method::Bic => "bic",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetConfig {
    /// Synthetic Gaussian blobs, regenerated per seed.
    Blobs {
        #[serde(default = "default_blob_classes")]
        classes: usize,
        #[serde(default = "default_blob_samples")]
        samples_per_class: usize,
        #[serde(default = "default_blob_dim")]
        dim: usize,
        #[serde(default = "default_blob_separation")]
        separation: f64,
    },
    /// CSV file with a schema descriptor; split and normalized per seed.
    Csv {
        path: PathBuf,
        /// Defaults to `<path>.schema.toml`.
        #[serde(default)]
        schema: Option<PathBuf>,
        #[serde(default = "default_true")]
        normalize: bool,
        #[serde(default = "default_test_fraction")]
        test_fraction: f64,
    },
}

fn default_blob_classes() -> usize {
    10
}
fn default_blob_samples() -> usize {
    200
}
fn default_blob_dim() -> usize {
    16
}
fn default_blob_separation() -> f64 {
    3.0
}
fn default_true() -> bool {
    true
}
fn default_test_fraction() -> f64 {
    0.2
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig::Blobs {
            classes: default_blob_classes(),
            samples_per_class: default_blob_samples(),
            dim: default_blob_dim(),
            separation: default_blob_separation(),
        }
    }
}

impl DatasetConfig {
    pub fn schema_path(&self) -> Option<PathBuf> {
        match self {
            DatasetConfig::Csv { path, schema, .. } => Some(schema.clone().unwrap_or_else(|| {
                let mut p = path.clone().into_os_string();
                p.push(".schema.toml");
                PathBuf::from(p)
            })),
            DatasetConfig::Blobs { .. } => None,
        }
    }

    pub fn label(&self) -> String {
        match self {
            DatasetConfig::Blobs { classes, dim, .. } => format!("blobs{classes}x{dim}"),
            DatasetConfig::Csv { path, .. } => path
                .file_stem()
                .map_or_else(|| "csv".to_string(), |s| s.to_string_lossy().into_owned()),
        }
    }
}

/// Precision scheme: full working precision or integer quantization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum QuantMode {
    Fp,
    Int {
        #[serde(default = "default_input_bits")]
        input_bits: u8,
        #[serde(default = "default_accum_bits")]
        accum_bits: u8,
        #[serde(default = "default_tile_size")]
        tile_size: usize,
        #[serde(default = "default_outlier_scale")]
        outlier_scale: f64,
    },
}

fn default_input_bits() -> u8 {
    4
}
fn default_accum_bits() -> u8 {
    8
}
fn default_tile_size() -> usize {
    32
}
fn default_outlier_scale() -> f64 {
    0.975
}

impl Default for QuantMode {
    fn default() -> Self {
        QuantMode::Int {
            input_bits: default_input_bits(),
            accum_bits: default_accum_bits(),
            tile_size: default_tile_size(),
            outlier_scale: default_outlier_scale(),
        }
    }
}

impl QuantMode {
    pub fn to_quant_config(&self) -> Option<QuantConfig> {
        match *self {
            QuantMode::Fp => None,
            QuantMode::Int {
                input_bits,
                accum_bits,
                tile_size,
                outlier_scale,
            } => Some(QuantConfig {
                input_bits,
                accum_bits,
                tile_size,
                fwd_outlier_scale: outlier_scale,
                ..QuantConfig::default()
            }),
        }
    }

    pub fn label(&self) -> String {
        match self {
            QuantMode::Fp => "fp".to_string(),
            QuantMode::Int {
                input_bits,
                accum_bits,
                ..
            } => format!("b{input_bits}a{accum_bits}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub method: Method,
    pub seeds: Vec<u64>,
    pub classes_per_task: usize,
    pub dataset: DatasetConfig,
    pub quant: QuantMode,
    pub hyper: Hyperparams,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            method: Method::Icarl,
            seeds: vec![0],
            classes_per_task: 2,
            dataset: DatasetConfig::default(),
            quant: QuantMode::default(),
            hyper: Hyperparams::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(raw: &str) -> Result<ExperimentConfig> {
        let cfg: ExperimentConfig = toml::from_str(raw)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml_file(path: &Path) -> Result<ExperimentConfig> {
        let raw = std::fs::read_to_string(path)
            .map_err(|e| Error::param("config", format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&raw)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Serde(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::param("seeds", "need at least one seed"));
        }
        if self.classes_per_task == 0 {
            return Err(Error::param("classes_per_task", "must be >= 1"));
        }
        if let Some(q) = self.quant.to_quant_config() {
            q.validate()?;
        }
        self.hyper.validate()?;
        match &self.dataset {
            DatasetConfig::Blobs {
                classes,
                samples_per_class,
                dim,
                ..
            } => {
                if *classes < 2 || *samples_per_class < 2 || *dim < 1 {
                    return Err(Error::param("dataset", "degenerate blob settings"));
                }
            }
            DatasetConfig::Csv { test_fraction, .. } => {
                if !(0.0..1.0).contains(test_fraction) {
                    return Err(Error::param("test_fraction", "must be in [0, 1)"));
                }
            }
        }
        Ok(())
    }

    /// Short tag used in file names: method, precision, dataset.
    pub fn run_label(&self) -> String {
        format!(
            "{}_{}_{}",
            self.method.label(),
            self.quant.label(),
            self.dataset.label()
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_toml_is_all_defaults() {
        let cfg = ExperimentConfig::from_toml_str("").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
    }

    #[test]
    fn defaults_match_documented_protocol() {
        let cfg = ExperimentConfig::default();
        let hp = &cfg.hyper;
        assert_eq!(hp.batch_size, 128);
        assert_eq!(hp.momentum, 0.9);
        assert_eq!(hp.weight_decay, 0.0002);
        assert_eq!(hp.lr, 0.01);
        assert_eq!(hp.lr_schedule, vec![(50, 0.1)]);
        assert_eq!(hp.epochs, 100);
        assert_eq!(hp.memory_capacity, 200);
        assert_eq!(hp.kd_temperature, 2.0);
        assert_eq!(hp.kd_lambda, 3.0);
        assert_eq!(hp.bic_split_ratio, 0.1);
        assert_eq!(hp.hidden_layers, 3);
        assert_eq!(cfg.classes_per_task, 2);
        match cfg.quant {
            QuantMode::Int {
                input_bits,
                accum_bits,
                tile_size,
                outlier_scale,
            } => {
                assert_eq!(input_bits, 4);
                assert_eq!(accum_bits, 8);
                assert_eq!(tile_size, 32);
                assert_eq!(outlier_scale, 0.975);
            }
            QuantMode::Fp => panic!("default precision should be integer"),
        }
    }

    #[test]
    fn config_roundtrips_through_toml() {
        let cfg = ExperimentConfig {
            method: Method::Bic,
            seeds: vec![3, 5, 8],
            quant: QuantMode::Fp,
            dataset: DatasetConfig::Csv {
                path: PathBuf::from("data/x.csv"),
                schema: None,
                normalize: false,
                test_fraction: 0.25,
            },
            ..ExperimentConfig::default()
        };
        let text = cfg.to_toml_string().unwrap();
        let back = ExperimentConfig::from_toml_str(&text).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn invalid_settings_are_config_errors() {
        assert!(ExperimentConfig::from_toml_str("unknown_key = 1").is_err());
        let bad = r#"
            [quant]
            mode = "int"
            input_bits = 9
            accum_bits = 4
        "#;
        assert!(ExperimentConfig::from_toml_str(bad).is_err());
        let bad_seeds = "seeds = []";
        assert!(ExperimentConfig::from_toml_str(bad_seeds).is_err());
    }

    #[test]
    fn schema_path_defaults_to_sibling() {
        let ds = DatasetConfig::Csv {
            path: PathBuf::from("data/hapt.csv"),
            schema: None,
            normalize: true,
            test_fraction: 0.2,
        };
        assert_eq!(
            ds.schema_path().unwrap(),
            PathBuf::from("data/hapt.csv.schema.toml")
        );
    }
}
