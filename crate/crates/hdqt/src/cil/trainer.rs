//! The three incremental trainers.
//!
//! All three share one engine: per task, snapshot the previous model as the
//! distillation teacher, extend the head, train with CE plus
//! temperature-scaled KD on the old-class logit slice, then evaluate over
//! every class seen so far with no task identity. They differ in what else
//! they do: LwF trains on new data only; iCaRL adds exemplar replay with
//! herding selection (optionally evaluating by nearest mean of exemplars);
//! BiC holds out a class-balanced validation split and fits a two-parameter
//! bias correction on the new-class logits in a frozen second stage.

use serde::{Deserialize, Serialize};

use crate::cil::memory::{herding_select, ReplayMemory};
use crate::cil::metrics::AccuracyMatrix;
use crate::cil::stream::TaskStream;
use crate::data::FeatureDataset;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::nn::{
    backward, ce_loss, extend_head, forward, infer, kd_loss, penultimate_features, sgd_step,
    FcnModel, SgdState,
};
use crate::qgemm::GemmStats;
use crate::quant::QuantConfig;
use crate::rng::Rng;

/// Training hyperparameters; defaults follow the feature-vector protocol
/// (SGD momentum 0.9, lr 0.01 decayed x0.1 at epoch 50, weight decay 2e-4,
/// batch 128, 100 epochs per task, memory 200, KD temperature 2, lambda 3,
/// BiC split ratio 0.1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyperparams {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub lr_schedule: Vec<(usize, f64)>,
    pub epochs: usize,
    pub batch_size: usize,
    pub memory_capacity: usize,
    pub kd_lambda: f64,
    pub kd_temperature: f64,
    pub bic_split_ratio: f64,
    pub hidden_layers: usize,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            lr: 0.01,
            momentum: 0.9,
            weight_decay: 0.0002,
            lr_schedule: vec![(50, 0.1)],
            epochs: 100,
            batch_size: 128,
            memory_capacity: 200,
            kd_lambda: 3.0,
            kd_temperature: 2.0,
            bic_split_ratio: 0.1,
            hidden_layers: 3,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        if self.lr <= 0.0 || self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::param("hyperparams", "lr/epochs/batch must be positive"));
        }
        if self.kd_temperature <= 0.0 {
            return Err(Error::param("kd_temperature", "must be > 0"));
        }
        if !(self.bic_split_ratio > 0.0 && self.bic_split_ratio < 1.0) {
            return Err(Error::param("bic_split_ratio", "must be in (0, 1)"));
        }
        Ok(())
    }
}

/// Affine correction on a contiguous block of head columns; identity at
/// initialization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasCorrection {
    pub start_col: usize,
    pub end_col: usize,
    pub alpha: f64,
    pub beta: f64,
}

impl BiasCorrection {
    pub fn identity(start_col: usize, end_col: usize) -> BiasCorrection {
        BiasCorrection {
            start_col,
            end_col,
            alpha: 1.0,
            beta: 0.0,
        }
    }
}

pub(crate) fn apply_corrections(logits: &mut Matrix, corrections: &[BiasCorrection]) {
    for corr in corrections {
        for i in 0..logits.rows() {
            let row = logits.row_mut(i);
            let end = corr.end_col.min(row.len());
            for v in &mut row[corr.start_col..end] {
                *v = corr.alpha * *v + corr.beta;
            }
        }
    }
}

/// Everything a finished run produces: the metric trail, the aggregated GEMM
/// instrumentation from training, and the trained artifacts.
#[derive(Debug, Clone)]
pub struct CilOutcome {
    pub accuracy: AccuracyMatrix,
    pub task_mean_acc: Vec<f64>,
    /// `forgetting[i - 1]` is the forgetting measure after task `i`.
    pub forgetting: Vec<f64>,
    pub final_accuracy: f64,
    pub gemm: GemmStats,
    /// Dataset class ids in arrival (head column) order.
    pub class_arrival: Vec<usize>,
    pub model: FcnModel,
    pub bias_corrections: Vec<BiasCorrection>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum TrainerKind {
    Lwf,
    Icarl { nme: bool },
    Bic,
}

/// Learning without Forgetting: KD regularization only, no replay.
pub fn train_lwf(
    model: FcnModel,
    ds: &FeatureDataset,
    stream: &TaskStream,
    hp: &Hyperparams,
    cfg: Option<&QuantConfig>,
    rng: &Rng,
) -> Result<CilOutcome> {
    run_cil(TrainerKind::Lwf, model, ds, stream, hp, cfg, rng)
}

/// iCaRL: exemplar replay with herding selection plus KD; `use_nme` switches
/// evaluation to nearest-mean-of-exemplars in penultimate-feature space.
pub fn train_icarl(
    model: FcnModel,
    ds: &FeatureDataset,
    stream: &TaskStream,
    hp: &Hyperparams,
    cfg: Option<&QuantConfig>,
    rng: &Rng,
    use_nme: bool,
) -> Result<CilOutcome> {
    run_cil(TrainerKind::Icarl { nme: use_nme }, model, ds, stream, hp, cfg, rng)
}

/// BiC: replay plus a frozen second stage that fits a two-parameter bias
/// correction for the newest class block on a held-out balanced split.
pub fn train_bic(
    model: FcnModel,
    ds: &FeatureDataset,
    stream: &TaskStream,
    hp: &Hyperparams,
    cfg: Option<&QuantConfig>,
    rng: &Rng,
) -> Result<CilOutcome> {
    run_cil(TrainerKind::Bic, model, ds, stream, hp, cfg, rng)
}

struct Teacher {
    model: FcnModel,
    corrections: Vec<BiasCorrection>,
}

fn run_cil(
    kind: TrainerKind,
    mut model: FcnModel,
    ds: &FeatureDataset,
    stream: &TaskStream,
    hp: &Hyperparams,
    cfg: Option<&QuantConfig>,
    rng: &Rng,
) -> Result<CilOutcome> {
    hp.validate()?;
    if let Some(q) = cfg {
        q.validate()?;
    }
    if stream.tasks.is_empty() {
        return Err(Error::data("empty task stream"));
    }
    if model.num_classes() != stream.tasks[0].classes.len() {
        return Err(Error::shape(
            "run_cil",
            format!(
                "model head {} != first task classes {}",
                model.num_classes(),
                stream.tasks[0].classes.len()
            ),
        ));
    }

    let uses_memory = matches!(kind, TrainerKind::Icarl { .. } | TrainerKind::Bic);
    let mut memory = if uses_memory {
        Some(ReplayMemory::new(hp.memory_capacity)?)
    } else {
        None
    };

    let mut col_of_class: Vec<Option<usize>> = vec![None; ds.num_classes()];
    let mut arrival: Vec<usize> = Vec::new();
    let mut corrections: Vec<BiasCorrection> = Vec::new();
    let mut teacher: Option<Teacher> = None;
    let mut acc = AccuracyMatrix::new(ds.num_classes());
    let mut task_mean_acc = Vec::new();
    let mut forgetting = Vec::new();
    let mut gemm = GemmStats::default();

    for (t, task) in stream.tasks.iter().enumerate() {
        let task_rng = rng.split("task").split_index(t as u64);
        if t > 0 {
            teacher = Some(Teacher {
                model: model.clone(),
                corrections: corrections.clone(),
            });
            let mut extend_rng = task_rng.split("extend");
            extend_head(&mut model, arrival.len() + task.classes.len(), &mut extend_rng)?;
        }
        let new_block_start = arrival.len();
        for &c in &task.classes {
            col_of_class[c] = Some(arrival.len());
            arrival.push(c);
        }

        let mut pool: Vec<usize> = task.train_idx.clone();
        if let Some(mem) = &memory {
            pool.extend(mem.all_indices());
        }
        if pool.is_empty() {
            return Err(Error::data(format!("task {t} has no training samples")));
        }

        // BiC carves a class-balanced validation split out of the pool.
        let (train_pool, val_pool) = if kind == TrainerKind::Bic && t > 0 {
            bic_validation_split(ds, task, memory.as_ref().expect("bic uses memory"), hp, &task_rng)?
        } else {
            (pool, Vec::new())
        };

        train_epochs(
            &mut model,
            ds,
            &train_pool,
            teacher.as_ref(),
            hp,
            cfg,
            &task_rng,
            &mut gemm,
            &col_of_class,
        )?;

        if kind == TrainerKind::Bic && t > 0 {
            if val_pool.is_empty() {
                log::warn!("task {t}: empty validation split, skipping bias correction");
            } else {
                let corr = fit_bias_correction(
                    &model,
                    ds,
                    &val_pool,
                    &col_of_class,
                    new_block_start,
                    arrival.len(),
                    &corrections,
                    cfg,
                )?;
                corrections.push(corr);
            }
        }

        if let Some(mem) = &mut memory {
            let mut new_lists = Vec::new();
            for &c in &task.classes {
                let idxs: Vec<usize> = task
                    .train_idx
                    .iter()
                    .copied()
                    .filter(|&i| ds.labels[i] == c)
                    .collect();
                if idxs.is_empty() {
                    return Err(Error::data(format!("class {c} has no training samples")));
                }
                let (x, _) = ds.gather(&idxs);
                let feats = penultimate_features(&model, &x, cfg)?;
                let order = herding_select(&feats, idxs.len())?;
                new_lists.push((c, order.into_iter().map(|o| idxs[o]).collect()));
            }
            mem.rebalance(new_lists);
        }

        let test_union: Vec<usize> = stream.tasks[..=t]
            .iter()
            .flat_map(|task| task.test_idx.iter().copied())
            .collect();
        let per_class = match kind {
            TrainerKind::Icarl { nme: true } => eval_nme(
                &model,
                ds,
                memory.as_ref().expect("icarl uses memory"),
                cfg,
                &test_union,
            )?,
            _ => eval_logits(&model, ds, cfg, &test_union, &arrival, &corrections)?,
        };
        acc.push_task(per_class);
        task_mean_acc.push(acc.task_mean(t));
        if t > 0 {
            forgetting.push(crate::cil::metrics::forgetting_score(&acc, t)?);
        }
    }

    let final_accuracy = *task_mean_acc.last().expect("at least one task");
    Ok(CilOutcome {
        accuracy: acc,
        task_mean_acc,
        forgetting,
        final_accuracy,
        gemm,
        class_arrival: arrival,
        model,
        bias_corrections: corrections,
    })
}

#[allow(clippy::too_many_arguments)]
fn train_epochs(
    model: &mut FcnModel,
    ds: &FeatureDataset,
    pool: &[usize],
    teacher: Option<&Teacher>,
    hp: &Hyperparams,
    cfg: Option<&QuantConfig>,
    task_rng: &Rng,
    gemm: &mut GemmStats,
    col_of_class: &[Option<usize>],
) -> Result<()> {
    if pool.is_empty() {
        return Err(Error::data("empty training pool"));
    }
    let mut state = SgdState::new(
        model,
        hp.lr,
        hp.momentum,
        hp.weight_decay,
        hp.lr_schedule.clone(),
    );
    let mut order: Vec<usize> = pool.to_vec();
    let shuffle_root = task_rng.split("shuffle");
    let bwd_root = task_rng.split("bwd");
    for epoch in 0..hp.epochs {
        let mut shuffle_rng = shuffle_root.split_index(epoch as u64);
        shuffle_rng.shuffle(&mut order);
        let epoch_rng = bwd_root.split_index(epoch as u64);
        for (b, chunk) in order.chunks(hp.batch_size).enumerate() {
            let (x, raw_labels) = ds.gather(chunk);
            let labels: Vec<usize> = raw_labels
                .iter()
                .map(|&l| col_of_class[l].expect("sample from an unseen class"))
                .collect();
            let (logits, cache) = forward(model, &x, cfg)?;
            gemm.merge(&cache.gemm_stats);
            let (_, mut dlogits) = ce_loss(&logits, &labels)?;
            if let Some(teacher) = teacher {
                // KD recomputes the recorded outputs per batch on the frozen
                // teacher; skipping the term entirely at lambda = 0 keeps
                // that setting bit-identical to naive fine-tuning.
                if hp.kd_lambda != 0.0 {
                    let mut old_logits = infer(&teacher.model, &x, cfg)?;
                    apply_corrections(&mut old_logits, &teacher.corrections);
                    let (_, dkd) = kd_loss(&old_logits, &logits, hp.kd_temperature)?;
                    dlogits = dlogits.add_scaled(&dkd, hp.kd_lambda)?;
                }
            }
            let step_rng = epoch_rng.split_index(b as u64);
            let grads = backward(model, &cache, &dlogits, cfg, &step_rng)?;
            sgd_step(model, &grads, &mut state, epoch)?;
        }
    }
    Ok(())
}

/// Pulls a balanced per-class validation set: the tail of each old class's
/// herding-ordered exemplar list and a seeded sample of each new class.
fn bic_validation_split(
    ds: &FeatureDataset,
    task: &crate::cil::stream::Task,
    memory: &ReplayMemory,
    hp: &Hyperparams,
    task_rng: &Rng,
) -> Result<(Vec<usize>, Vec<usize>)> {
    let old_lens: Vec<usize> = memory.classes().map(|c| {
        memory.exemplars(c).map_or(0, <[usize]>::len)
    }).collect();
    let smallest_old = old_lens.iter().copied().min().unwrap_or(0);
    let per_class = ((hp.bic_split_ratio * smallest_old as f64).floor() as usize).max(1);

    let mut val = Vec::new();
    let mut train = Vec::new();
    for c in memory.classes() {
        let list = memory.exemplars(c).expect("listed class");
        let take = per_class.min(list.len().saturating_sub(1));
        if take == 0 {
            log::warn!("class {c}: too few exemplars for a validation sample");
        }
        let split = list.len() - take;
        train.extend_from_slice(&list[..split]);
        val.extend_from_slice(&list[split..]);
    }
    let mut pick_rng = task_rng.split("bic_val");
    for &c in &task.classes {
        let mut idxs: Vec<usize> = task
            .train_idx
            .iter()
            .copied()
            .filter(|&i| ds.labels[i] == c)
            .collect();
        pick_rng.shuffle(&mut idxs);
        let take = per_class.min(idxs.len().saturating_sub(1));
        if take == 0 {
            log::warn!("class {c}: too few samples for a validation sample");
        }
        val.extend_from_slice(&idxs[..take]);
        train.extend_from_slice(&idxs[take..]);
    }
    Ok((train, val))
}

/// Stage 2 of BiC: with the network frozen, fit (alpha, beta) on the
/// validation logits by plain gradient descent on the softmax cross-entropy
/// of the corrected logits (100 epochs, lr 1e-3).
#[allow(clippy::too_many_arguments)]
fn fit_bias_correction(
    model: &FcnModel,
    ds: &FeatureDataset,
    val_pool: &[usize],
    col_of_class: &[Option<usize>],
    start_col: usize,
    end_col: usize,
    prior: &[BiasCorrection],
    cfg: Option<&QuantConfig>,
) -> Result<BiasCorrection> {
    const EPOCHS: usize = 100;
    const LR: f64 = 0.001;

    let (x, raw_labels) = ds.gather(val_pool);
    let labels: Vec<usize> = raw_labels
        .iter()
        .map(|&l| col_of_class[l].expect("validation sample from unseen class"))
        .collect();
    let mut base = infer(model, &x, cfg)?;
    apply_corrections(&mut base, prior);

    let mut corr = BiasCorrection::identity(start_col, end_col);
    for _ in 0..EPOCHS {
        let (_, dalpha, dbeta) = bias_fit_gradient(&base, &labels, &corr)?;
        corr.alpha -= LR * dalpha;
        corr.beta -= LR * dbeta;
    }
    Ok(corr)
}

/// Loss and (d alpha, d beta) of the corrected-logit cross-entropy at the
/// given correction, with the network logits held fixed.
fn bias_fit_gradient(
    base: &Matrix,
    labels: &[usize],
    corr: &BiasCorrection,
) -> Result<(f64, f64, f64)> {
    let mut corrected = base.clone();
    apply_corrections(&mut corrected, std::slice::from_ref(corr));
    let (loss, dl) = ce_loss(&corrected, labels)?;
    let mut dalpha = 0.0;
    let mut dbeta = 0.0;
    for i in 0..dl.rows() {
        for j in corr.start_col..corr.end_col {
            dalpha += dl.get(i, j) * base.get(i, j);
            dbeta += dl.get(i, j);
        }
    }
    Ok((loss, dalpha, dbeta))
}

/// Head-logit evaluation over all seen classes, task-identity-free, with
/// the whole test set as one batch (per-tensor calibration then sees the
/// same values any deployment-time batch would). Returns per-class accuracy
/// indexed by dataset class id (`None` for unseen or untested classes).
fn eval_logits(
    model: &FcnModel,
    ds: &FeatureDataset,
    cfg: Option<&QuantConfig>,
    test_idx: &[usize],
    arrival: &[usize],
    corrections: &[BiasCorrection],
) -> Result<Vec<Option<f64>>> {
    let mut correct = vec![0usize; ds.num_classes()];
    let mut total = vec![0usize; ds.num_classes()];
    let (x, labels) = ds.gather(test_idx);
    let mut logits = infer(model, &x, cfg)?;
    apply_corrections(&mut logits, corrections);
    for (i, &label) in labels.iter().enumerate() {
        let row = logits.row(i);
        let pred_col = argmax(row);
        total[label] += 1;
        if arrival[pred_col] == label {
            correct[label] += 1;
        }
    }
    Ok(tally(&correct, &total))
}

/// Nearest-mean-of-exemplars evaluation in penultimate-feature space; a pure
/// evaluation-time change on the identical trained network.
fn eval_nme(
    model: &FcnModel,
    ds: &FeatureDataset,
    memory: &ReplayMemory,
    cfg: Option<&QuantConfig>,
    test_idx: &[usize],
) -> Result<Vec<Option<f64>>> {
    let classes: Vec<usize> = memory.classes().collect();
    let mut means: Vec<Vec<f64>> = Vec::with_capacity(classes.len());
    for &c in &classes {
        let idxs = memory.exemplars(c).expect("listed class");
        let (x, _) = ds.gather(idxs);
        let feats = penultimate_features(model, &x, cfg)?;
        let mut mean = vec![0.0; feats.cols()];
        for i in 0..feats.rows() {
            for (m, v) in mean.iter_mut().zip(feats.row(i)) {
                *m += v / feats.rows() as f64;
            }
        }
        means.push(mean);
    }

    let mut correct = vec![0usize; ds.num_classes()];
    let mut total = vec![0usize; ds.num_classes()];
    let (x, labels) = ds.gather(test_idx);
    let feats = penultimate_features(model, &x, cfg)?;
    for (i, &label) in labels.iter().enumerate() {
        let row = feats.row(i);
        let mut best = (f64::INFINITY, 0usize);
        for (ci, mean) in means.iter().enumerate() {
            let d: f64 = row
                .iter()
                .zip(mean)
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            if d < best.0 {
                best = (d, ci);
            }
        }
        total[label] += 1;
        if classes[best.1] == label {
            correct[label] += 1;
        }
    }
    Ok(tally(&correct, &total))
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = j;
        }
    }
    best
}

fn tally(correct: &[usize], total: &[usize]) -> Vec<Option<f64>> {
    correct
        .iter()
        .zip(total)
        .map(|(&c, &t)| (t > 0).then(|| c as f64 / t as f64))
        .collect()
}
