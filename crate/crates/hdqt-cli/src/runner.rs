//! Seeded experiment execution: one record per seed, with paired seeding
//! across sweep points so precision comparisons see identical streams,
//! splits, and initializations.

use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use hdqt::cil::{split_tasks, train_bic, train_icarl, train_lwf, AccuracyMatrix, CilOutcome};
use hdqt::data::{
    apply_dataset_filters, load_csv, normalize, synth_blobs, CsvSchema, FeatureDataset,
};
use hdqt::error::{Error, Result};
use hdqt::nn::FcnModel;
use hdqt::qgemm::GemmStats;
use hdqt::rng::Rng;

use crate::config::{DatasetConfig, ExperimentConfig, Method, QuantMode};

/// Everything needed to regenerate any plotted curve without re-running.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config: ExperimentConfig,
    pub seed: u64,
    pub class_order: Vec<usize>,
    /// Dataset class ids in head-column (arrival) order.
    pub class_arrival: Vec<usize>,
    pub accuracy: AccuracyMatrix,
    pub task_mean_acc: Vec<f64>,
    pub forgetting: Vec<f64>,
    pub final_accuracy: f64,
    pub gemm: GemmStats,
    pub wall_clock_secs: f64,
}

impl RunRecord {
    pub fn file_name(&self) -> String {
        format!("run_{}_seed{}.json", self.config.run_label(), self.seed)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(dir.join(self.file_name()), json)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<RunRecord> {
        let raw = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&raw)?)
    }

    /// Numeric equality ignoring wall-clock time.
    pub fn same_numbers(&self, other: &RunRecord) -> bool {
        self.seed == other.seed
            && self.class_order == other.class_order
            && self.class_arrival == other.class_arrival
            && self.accuracy == other.accuracy
            && self.task_mean_acc == other.task_mean_acc
            && self.forgetting == other.forgetting
            && self.final_accuracy == other.final_accuracy
            && self.gemm == other.gemm
    }
}

/// Loads the raw CSV once; per-seed work (splits, normalization) happens in
/// `run_one_seed` so that every seed sees its own stratified split.
fn load_csv_base(config: &ExperimentConfig) -> Result<Option<FeatureDataset>> {
    match &config.dataset {
        DatasetConfig::Blobs { .. } => Ok(None),
        DatasetConfig::Csv { path, .. } => {
            let schema_path = config.dataset.schema_path().expect("csv has a schema path");
            let schema = CsvSchema::from_toml_file(&schema_path)?;
            let raw = load_csv(path, &schema)?;
            let filtered = apply_dataset_filters(&raw, schema.dataset_kind)?;
            Ok(Some(filtered))
        }
    }
}

fn prepare_dataset(
    config: &ExperimentConfig,
    base: Option<&FeatureDataset>,
    root: &Rng,
) -> Result<FeatureDataset> {
    match &config.dataset {
        DatasetConfig::Blobs {
            classes,
            samples_per_class,
            dim,
            separation,
        } => synth_blobs(
            *classes,
            *samples_per_class,
            *dim,
            *separation,
            &mut root.split("data"),
        ),
        DatasetConfig::Csv {
            normalize: do_norm,
            test_fraction,
            ..
        } => {
            let mut ds = base.expect("csv base loaded").clone();
            ds.stratified_split(*test_fraction, &mut root.split("split"))?;
            if *do_norm {
                ds = normalize(&ds)?;
            }
            Ok(ds)
        }
    }
}

fn run_one_seed(
    config: &ExperimentConfig,
    base: Option<&FeatureDataset>,
    seed: u64,
) -> Result<(RunRecord, FcnModel)> {
    let started = Instant::now();
    let root = Rng::new(seed);
    let ds = prepare_dataset(config, base, &root)?;

    let classes_per_task = match config.method {
        Method::Nocl => ds.num_classes(),
        _ => config.classes_per_task,
    };
    let stream = split_tasks(&ds, classes_per_task, &mut root.split("stream"))?;
    let model = FcnModel::new(
        ds.feature_dim(),
        config.hyper.hidden_layers,
        stream.tasks[0].classes.len(),
        &mut root.split("model"),
    );
    let quant = config.quant.to_quant_config();
    let cfg = quant.as_ref();
    let train_rng = root.split("train");
    let hp = &config.hyper;

    let outcome: CilOutcome = match config.method {
        // A single all-classes task reduces the LwF path to plain training.
        Method::Nocl | Method::Lwf => train_lwf(model, &ds, &stream, hp, cfg, &train_rng)?,
        Method::Icarl => train_icarl(model, &ds, &stream, hp, cfg, &train_rng, false)?,
        Method::IcarlNme => train_icarl(model, &ds, &stream, hp, cfg, &train_rng, true)?,
        Method::Bic => train_bic(model, &ds, &stream, hp, cfg, &train_rng)?,
    };

    let record = RunRecord {
        config: config.clone(),
        seed,
        class_order: stream.class_order.clone(),
        class_arrival: outcome.class_arrival,
        accuracy: outcome.accuracy,
        task_mean_acc: outcome.task_mean_acc,
        forgetting: outcome.forgetting,
        final_accuracy: outcome.final_accuracy,
        gemm: outcome.gemm,
        wall_clock_secs: started.elapsed().as_secs_f64(),
    };
    Ok((record, outcome.model))
}

/// Runs the experiment once per seed. Seeds execute in parallel on the
/// global thread pool; results come back in seed order and each run owns
/// its own generator, so parallelism never changes the numbers.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<RunRecord>> {
    Ok(run_experiment_keeping_models(config)?
        .into_iter()
        .map(|(record, _)| record)
        .collect())
}

/// As [`run_experiment`], also returning each seed's trained model.
pub fn run_experiment_keeping_models(
    config: &ExperimentConfig,
) -> Result<Vec<(RunRecord, FcnModel)>> {
    config.validate()?;
    let base = load_csv_base(config)?;
    config
        .seeds
        .par_iter()
        .map(|&seed| run_one_seed(config, base.as_ref(), seed))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    InputBits,
    AccumBits,
}

impl SweepAxis {
    pub fn parse(name: &str) -> Result<SweepAxis> {
        match name {
            "input" | "input_bits" => Ok(SweepAxis::InputBits),
            "accum" | "accum_bits" => Ok(SweepAxis::AccumBits),
            other => Err(Error::param("axis", format!("unknown sweep axis '{other}'"))),
        }
    }
}

/// Cross-product sweep along one precision axis with shared seeds.
///
/// Sweeping input bits pairs each width with a double-width accumulator to
/// absorb bit-growth; sweeping accumulator bits keeps the configured input
/// width. Points where the accumulator would be narrower than the input are
/// rejected up front with a warning listing them.
pub fn sweep(config: &ExperimentConfig, axis: SweepAxis, values: &[u8]) -> Result<Vec<RunRecord>> {
    config.validate()?;
    if values.is_empty() {
        return Err(Error::param("values", "empty sweep"));
    }
    let (base_input, base_tile, base_outlier) = match config.quant {
        QuantMode::Int {
            input_bits,
            tile_size,
            outlier_scale,
            ..
        } => (input_bits, tile_size, outlier_scale),
        QuantMode::Fp => {
            return Err(Error::param("quant", "sweep needs integer mode as the base"))
        }
    };

    let mut points = Vec::new();
    let mut rejected = Vec::new();
    for &v in values {
        let (input_bits, accum_bits) = match axis {
            SweepAxis::InputBits => (v, v.saturating_mul(2).min(32)),
            SweepAxis::AccumBits => (base_input, v),
        };
        if accum_bits < input_bits {
            rejected.push((input_bits, accum_bits));
            continue;
        }
        points.push(QuantMode::Int {
            input_bits,
            accum_bits,
            tile_size: base_tile,
            outlier_scale: base_outlier,
        });
    }
    if !rejected.is_empty() {
        log::warn!(
            "rejected sweep points with accumulator narrower than input: {:?}",
            rejected
        );
    }
    if points.is_empty() {
        return Err(Error::param("values", "every sweep point was rejected"));
    }

    let mut records = Vec::new();
    for quant in points {
        let point_cfg = ExperimentConfig {
            quant,
            ..config.clone()
        };
        records.extend(run_experiment(&point_cfg)?);
    }
    Ok(records)
}
