//! Minimal fully connected network with reverse-mode gradients routed
//! through the quantized GEMM engine, plus the losses and SGD step used by
//! the incremental trainers.
//!
//! Master weights live at working precision and are quantized on the fly at
//! each GEMM boundary; biases and activations stay at working precision.
//! Passing `None` as the quantization config selects the exact reference
//! path everywhere, which is the unquantized baseline.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{matmul_ref, Matrix};
use crate::qgemm::{qgemm_backward_input, qgemm_backward_weight, qgemm_forward, GemmStats};
use crate::quant::QuantConfig;
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearLayer {
    /// in_dim x out_dim master weights.
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl LinearLayer {
    /// Uniform init in +-1/sqrt(fan_in); biases start at zero.
    pub fn new(in_dim: usize, out_dim: usize, rng: &mut Rng) -> LinearLayer {
        let bound = 1.0 / (in_dim as f64).sqrt();
        LinearLayer {
            weights: Matrix::random_uniform(in_dim, out_dim, -bound, bound, rng),
            bias: vec![0.0; out_dim],
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.cols()
    }
}

/// Feed-forward network: equal-width ReLU hidden layers plus a class head
/// that grows as new classes arrive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FcnModel {
    input_dim: usize,
    hidden: Vec<LinearLayer>,
    head: LinearLayer,
}

impl FcnModel {
    /// `hidden_layers` equal-width layers (width = input width), then a head
    /// with one output per initially known class.
    pub fn new(input_dim: usize, hidden_layers: usize, classes: usize, rng: &mut Rng) -> FcnModel {
        let init_rng = rng.split("init");
        let hidden = (0..hidden_layers)
            .map(|i| {
                let mut r = init_rng.split_index(i as u64);
                LinearLayer::new(input_dim, input_dim, &mut r)
            })
            .collect();
        let mut head_rng = init_rng.split("head");
        FcnModel {
            input_dim,
            hidden,
            head: LinearLayer::new(input_dim, classes, &mut head_rng),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn num_classes(&self) -> usize {
        self.head.out_dim()
    }

    pub fn hidden_layers(&self) -> &[LinearLayer] {
        &self.hidden
    }

    pub fn hidden_layers_mut(&mut self) -> &mut [LinearLayer] {
        &mut self.hidden
    }

    pub fn head(&self) -> &LinearLayer {
        &self.head
    }

    pub fn head_mut(&mut self) -> &mut LinearLayer {
        &mut self.head
    }

    /// All layers in forward order, head last.
    fn layers(&self) -> impl Iterator<Item = &LinearLayer> {
        self.hidden.iter().chain(std::iter::once(&self.head))
    }

    fn layers_mut(&mut self) -> impl Iterator<Item = &mut LinearLayer> {
        self.hidden.iter_mut().chain(std::iter::once(&mut self.head))
    }

    pub fn num_layers(&self) -> usize {
        self.hidden.len() + 1
    }
}

/// Per-layer intermediates kept for the backward pass.
pub struct ForwardCache {
    /// Input to each linear layer, head included.
    layer_inputs: Vec<Matrix>,
    /// Pre-activation of each hidden layer (for the ReLU mask).
    pre_activations: Vec<Matrix>,
    /// Merged instrumentation from every quantized GEMM in this pass.
    pub gemm_stats: GemmStats,
}

fn linear_forward(
    x: &Matrix,
    layer: &LinearLayer,
    cfg: Option<&QuantConfig>,
    stats: &mut GemmStats,
) -> Result<Matrix> {
    let mut z = match cfg {
        Some(q) => {
            let (out, s) = qgemm_forward(x, &layer.weights, q)?;
            stats.merge(&s);
            out
        }
        None => matmul_ref(x, &layer.weights)?,
    };
    for i in 0..z.rows() {
        let row = z.row_mut(i);
        for (v, b) in row.iter_mut().zip(&layer.bias) {
            *v += b;
        }
    }
    Ok(z)
}

/// Forward pass; `cfg = None` selects the exact reference path.
pub fn forward(model: &FcnModel, x: &Matrix, cfg: Option<&QuantConfig>) -> Result<(Matrix, ForwardCache)> {
    if x.cols() != model.input_dim {
        return Err(Error::shape(
            "forward",
            format!("input width {} != model width {}", x.cols(), model.input_dim),
        ));
    }
    let mut cache = ForwardCache {
        layer_inputs: Vec::with_capacity(model.num_layers()),
        pre_activations: Vec::with_capacity(model.hidden.len()),
        gemm_stats: GemmStats::default(),
    };
    let mut a = x.clone();
    for layer in &model.hidden {
        cache.layer_inputs.push(a.clone());
        let z = linear_forward(&a, layer, cfg, &mut cache.gemm_stats)?;
        a = z.map(|v| v.max(0.0));
        cache.pre_activations.push(z);
    }
    cache.layer_inputs.push(a.clone());
    let logits = linear_forward(&a, &model.head, cfg, &mut cache.gemm_stats)?;
    Ok((logits, cache))
}

/// Logits without keeping intermediates.
pub fn infer(model: &FcnModel, x: &Matrix, cfg: Option<&QuantConfig>) -> Result<Matrix> {
    forward(model, x, cfg).map(|(logits, _)| logits)
}

/// Activations feeding the head (the feature space used by herding and
/// nearest-mean evaluation).
pub fn penultimate_features(model: &FcnModel, x: &Matrix, cfg: Option<&QuantConfig>) -> Result<Matrix> {
    let (_, cache) = forward(model, x, cfg)?;
    Ok(cache.layer_inputs.last().expect("at least the head input").clone())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerGrads {
    pub dw: Matrix,
    pub db: Vec<f64>,
}

/// Gradients for every layer, ordered like the forward pass (head last).
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGrads>,
}

fn column_sums(g: &Matrix) -> Vec<f64> {
    let mut out = vec![0.0; g.cols()];
    for i in 0..g.rows() {
        for (o, v) in out.iter_mut().zip(g.row(i)) {
            *o += v;
        }
    }
    out
}

/// Reverse-mode pass. Weight and input gradients go through the
/// Hadamard-domain quantized GEMMs (or the exact path when `cfg` is `None`);
/// ReLU masking and bias reductions stay at working precision.
pub fn backward(
    model: &FcnModel,
    cache: &ForwardCache,
    dlogits: &Matrix,
    cfg: Option<&QuantConfig>,
    rng: &Rng,
) -> Result<Gradients> {
    if cache.layer_inputs.len() != model.num_layers() {
        return Err(Error::shape("backward", "cache does not match model"));
    }
    let n_layers = model.num_layers();
    let mut grads: Vec<Option<LayerGrads>> = (0..n_layers).map(|_| None).collect();

    let mut g = dlogits.clone();
    for idx in (0..n_layers).rev() {
        let layer = if idx == model.hidden.len() {
            &model.head
        } else {
            &model.hidden[idx]
        };
        let input = &cache.layer_inputs[idx];
        let layer_rng = rng.split_index(idx as u64);
        let dw = match cfg {
            Some(q) => qgemm_backward_weight(input, &g, q, &layer_rng.split("dw"))?,
            None => matmul_ref(&input.transpose(), &g)?,
        };
        let db = column_sums(&g);
        grads[idx] = Some(LayerGrads { dw, db });

        if idx > 0 {
            let dx = match cfg {
                Some(q) => qgemm_backward_input(&g, &layer.weights, q, &layer_rng.split("dx"))?,
                None => matmul_ref(&g, &layer.weights.transpose())?,
            };
            // ReLU mask of the previous hidden layer.
            let z = &cache.pre_activations[idx - 1];
            let mut masked = dx;
            for (m, zv) in masked.data_mut().iter_mut().zip(z.data()) {
                if *zv <= 0.0 {
                    *m = 0.0;
                }
            }
            g = masked;
        }
    }
    Ok(Gradients {
        layers: grads.into_iter().map(|g| g.expect("all layers visited")).collect(),
    })
}

/// Mean softmax cross-entropy and its logit gradient.
pub fn ce_loss(logits: &Matrix, labels: &[usize]) -> Result<(f64, Matrix)> {
    let n = logits.rows();
    let c = logits.cols();
    if labels.len() != n {
        return Err(Error::shape(
            "ce_loss",
            format!("{} labels for {} rows", labels.len(), n),
        ));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
        return Err(Error::data(format!("label {bad} out of range for {c} classes")));
    }
    let mut dlogits = Matrix::zeros(n, c);
    let mut loss = 0.0;
    for i in 0..n {
        let row = logits.row(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for &v in row {
            sum += (v - max).exp();
        }
        let log_sum = sum.ln() + max;
        loss += log_sum - row[labels[i]];
        let drow = dlogits.row_mut(i);
        for (j, &v) in row.iter().enumerate() {
            let p = (v - max).exp() / sum;
            drow[j] = (p - if j == labels[i] { 1.0 } else { 0.0 }) / n as f64;
        }
    }
    Ok((loss / n as f64, dlogits))
}

/// Distillation loss between temperature-scaled probability vectors, taken
/// over the old-class slice of the new logits.
///
/// Probabilities are tempered as p^(1/T) renormalized; the loss is the mean
/// cross-entropy of the tempered new distribution against the tempered
/// recorded one. The gradient flows only into the old-class columns.
pub fn kd_loss(old_logits: &Matrix, new_logits: &Matrix, temperature: f64) -> Result<(f64, Matrix)> {
    if temperature <= 0.0 || !temperature.is_finite() {
        return Err(Error::param("temperature", format!("{temperature}")));
    }
    let n = old_logits.rows();
    let n_old = old_logits.cols();
    if new_logits.rows() != n || new_logits.cols() < n_old {
        return Err(Error::shape(
            "kd_loss",
            format!(
                "old {}x{} vs new {}x{}",
                n,
                n_old,
                new_logits.rows(),
                new_logits.cols()
            ),
        ));
    }
    let mut dlogits = Matrix::zeros(n, new_logits.cols());
    let mut loss = 0.0;
    for i in 0..n {
        let target = tempered_probs(old_logits.row(i), temperature);
        let predicted = tempered_probs(&new_logits.row(i)[..n_old], temperature);
        for j in 0..n_old {
            loss -= target[j] * predicted[j].max(f64::MIN_POSITIVE).ln();
        }
        let drow = dlogits.row_mut(i);
        for j in 0..n_old {
            drow[j] = (predicted[j] - target[j]) / (temperature * n as f64);
        }
    }
    Ok((loss / n as f64, dlogits))
}

/// Softmax followed by the p^(1/T) renormalization.
fn tempered_probs(logits: &[f64], temperature: f64) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut probs: Vec<f64> = logits.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = probs.iter().sum();
    for p in probs.iter_mut() {
        *p /= sum;
    }
    let inv_t = 1.0 / temperature;
    let mut tempered: Vec<f64> = probs.iter().map(|&p| p.powf(inv_t)).collect();
    let tsum: f64 = tempered.iter().sum();
    for p in tempered.iter_mut() {
        *p /= tsum;
    }
    tempered
}

/// SGD with momentum, weight decay, and a step schedule of
/// `(epoch, multiplier)` pairs applied once the epoch index is reached.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SgdState {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub schedule: Vec<(usize, f64)>,
    velocity: Vec<LayerGrads>,
}

impl SgdState {
    pub fn new(
        model: &FcnModel,
        lr: f64,
        momentum: f64,
        weight_decay: f64,
        schedule: Vec<(usize, f64)>,
    ) -> SgdState {
        let velocity = model
            .layers()
            .map(|l| LayerGrads {
                dw: Matrix::zeros(l.weights.rows(), l.weights.cols()),
                db: vec![0.0; l.bias.len()],
            })
            .collect();
        SgdState {
            lr,
            momentum,
            weight_decay,
            schedule,
            velocity,
        }
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        let mut lr = self.lr;
        for &(at, mult) in &self.schedule {
            if epoch >= at {
                lr *= mult;
            }
        }
        lr
    }
}

/// v <- m*v + g + wd*p; p <- p - lr(epoch)*v.
pub fn sgd_step(
    model: &mut FcnModel,
    grads: &Gradients,
    state: &mut SgdState,
    epoch: usize,
) -> Result<()> {
    if grads.layers.len() != state.velocity.len() {
        return Err(Error::shape("sgd_step", "gradient count != parameter count"));
    }
    let lr = state.lr_at(epoch);
    let momentum = state.momentum;
    let wd = state.weight_decay;
    for ((layer, grad), vel) in model
        .layers_mut()
        .zip(&grads.layers)
        .zip(state.velocity.iter_mut())
    {
        if layer.weights.rows() != grad.dw.rows() || layer.weights.cols() != grad.dw.cols() {
            return Err(Error::shape("sgd_step", "gradient shape mismatch"));
        }
        for ((p, g), v) in layer
            .weights
            .data_mut()
            .iter_mut()
            .zip(grad.dw.data())
            .zip(vel.dw.data_mut())
        {
            *v = momentum * *v + *g + wd * *p;
            *p -= lr * *v;
        }
        for ((p, g), v) in layer.bias.iter_mut().zip(&grad.db).zip(vel.db.iter_mut()) {
            *v = momentum * *v + *g + wd * *p;
            *p -= lr * *v;
        }
    }
    Ok(())
}

/// Grows the head to `new_class_count` outputs. Old-class weights are kept
/// bit-exact; new columns are drawn from the init scheme.
pub fn extend_head(model: &mut FcnModel, new_class_count: usize, rng: &mut Rng) -> Result<()> {
    let old = model.head.out_dim();
    if new_class_count < old {
        return Err(Error::param(
            "new_class_count",
            format!("{new_class_count} < current {old}"),
        ));
    }
    if new_class_count == old {
        return Ok(());
    }
    let in_dim = model.head.in_dim();
    let bound = 1.0 / (in_dim as f64).sqrt();
    let mut w = Matrix::zeros(in_dim, new_class_count);
    for i in 0..in_dim {
        for j in 0..old {
            w.set(i, j, model.head.weights.get(i, j));
        }
    }
    for j in old..new_class_count {
        for i in 0..in_dim {
            w.set(i, j, -bound + 2.0 * bound * rng.unit_f64());
        }
    }
    let mut bias = model.head.bias.clone();
    bias.resize(new_class_count, 0.0);
    model.head = LinearLayer { weights: w, bias };
    Ok(())
}

const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    version: u32,
    model: FcnModel,
}

/// Writes the model as versioned JSON; floats use shortest round-trip
/// formatting, so reloads are bit-exact.
pub fn save_checkpoint(model: &FcnModel, path: &Path) -> Result<()> {
    let ckpt = Checkpoint {
        version: CHECKPOINT_VERSION,
        model: model.clone(),
    };
    let json = serde_json::to_string(&ckpt)?;
    std::fs::write(path, json)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<FcnModel> {
    let raw = std::fs::read_to_string(path)?;
    let ckpt: Checkpoint = serde_json::from_str(&raw)?;
    if ckpt.version != CHECKPOINT_VERSION {
        return Err(Error::data(format!(
            "unsupported checkpoint version {}",
            ckpt.version
        )));
    }
    Ok(ckpt.model)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_model(seed: u64, dim: usize, classes: usize) -> FcnModel {
        let mut rng = Rng::new(seed);
        FcnModel::new(dim, 2, classes, &mut rng)
    }

    #[test]
    fn zero_weight_model_outputs_bias() {
        let mut model = tiny_model(1, 4, 3);
        for layer in model.hidden.iter_mut() {
            *layer = LinearLayer {
                weights: Matrix::zeros(4, 4),
                bias: vec![0.0; 4],
            };
        }
        model.head = LinearLayer {
            weights: Matrix::zeros(4, 3),
            bias: vec![0.5, -0.25, 1.0],
        };
        let x = Matrix::from_vec(2, 4, vec![1.0; 8]).unwrap();
        let (logits, _) = forward(&model, &x, None).unwrap();
        for i in 0..2 {
            assert_eq!(logits.row(i), &[0.5, -0.25, 1.0]);
        }
    }

    #[test]
    fn single_layer_matches_hand_computation() {
        let mut rng = Rng::new(2);
        let mut model = FcnModel::new(3, 0, 2, &mut rng);
        model.head = LinearLayer {
            weights: Matrix::from_vec(3, 2, vec![1.0, 0.0, 0.0, 1.0, 1.0, -1.0]).unwrap(),
            bias: vec![0.1, -0.1],
        };
        let x = Matrix::from_vec(1, 3, vec![2.0, 3.0, 4.0]).unwrap();
        let (logits, _) = forward(&model, &x, None).unwrap();
        // [2*1 + 3*0 + 4*1, 2*0 + 3*1 + 4*(-1)] + bias
        assert!((logits.get(0, 0) - 6.1).abs() < 1e-12);
        assert!((logits.get(0, 1) - (-1.1)).abs() < 1e-12);
    }

    #[test]
    fn quantized_close_to_unquantized_at_high_bits() {
        let mut rng = Rng::new(3);
        let model = tiny_model(4, 8, 3);
        let x = Matrix::random_gaussian(6, 8, 0.0, 1.0, &mut rng);
        let (fp, _) = forward(&model, &x, None).unwrap();
        let cfg = QuantConfig {
            input_bits: 12,
            accum_bits: 28,
            tile_size: 32,
            fwd_outlier_scale: 1.0,
            ..QuantConfig::default()
        };
        let (q, _) = forward(&model, &x, Some(&cfg)).unwrap();
        assert!(q.rel_frob_dist(&fp) < 1e-2, "{}", q.rel_frob_dist(&fp));
    }

    #[test]
    fn zero_dlogits_zero_grads() {
        let model = tiny_model(5, 4, 2);
        let mut rng = Rng::new(6);
        let x = Matrix::random_gaussian(3, 4, 0.0, 1.0, &mut rng);
        let (_, cache) = forward(&model, &x, None).unwrap();
        let grads = backward(&model, &cache, &Matrix::zeros(3, 2), None, &rng).unwrap();
        for lg in &grads.layers {
            assert_eq!(lg.dw.max_abs(), 0.0);
            assert!(lg.db.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn ce_loss_uniform_two_classes() {
        let logits = Matrix::zeros(4, 2);
        let (loss, _) = ce_loss(&logits, &[0, 1, 0, 1]).unwrap();
        assert!((loss - (2.0f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn ce_loss_confident_goes_to_zero() {
        let logits = Matrix::from_vec(1, 3, vec![50.0, 0.0, 0.0]).unwrap();
        let (loss, _) = ce_loss(&logits, &[0]).unwrap();
        assert!(loss < 1e-12);
    }

    #[test]
    fn ce_loss_label_out_of_range() {
        let logits = Matrix::zeros(1, 3);
        assert!(matches!(ce_loss(&logits, &[3]), Err(Error::Data(_))));
    }

    #[test]
    fn kd_loss_equal_distributions_is_entropy_minimum() {
        let mut rng = Rng::new(7);
        let logits = Matrix::random_gaussian(5, 4, 0.0, 1.0, &mut rng);
        let t = 2.0;
        let (loss, dl) = kd_loss(&logits, &logits, t).unwrap();
        // Cross-entropy equals entropy when the distributions coincide, and
        // the gradient vanishes at the minimum.
        let mut entropy = 0.0;
        for i in 0..5 {
            let p = tempered_probs(logits.row(i), t);
            entropy -= p.iter().map(|&v| v * v.ln()).sum::<f64>();
        }
        entropy /= 5.0;
        assert!((loss - entropy).abs() < 1e-12);
        assert!(dl.max_abs() < 1e-14);
    }

    #[test]
    fn kd_gradient_only_touches_old_columns() {
        let mut rng = Rng::new(8);
        let old = Matrix::random_gaussian(3, 2, 0.0, 1.0, &mut rng);
        let new = Matrix::random_gaussian(3, 5, 0.0, 1.0, &mut rng);
        let (_, dl) = kd_loss(&old, &new, 2.0).unwrap();
        for i in 0..3 {
            for j in 2..5 {
                assert_eq!(dl.get(i, j), 0.0);
            }
        }
    }

    #[test]
    fn sgd_plain_step() {
        let mut model = tiny_model(9, 2, 2);
        let w0 = model.head.weights.clone();
        let mut state = SgdState::new(&model, 0.5, 0.0, 0.0, vec![]);
        let grads = Gradients {
            layers: model
                .layers()
                .map(|l| LayerGrads {
                    dw: l.weights.map(|_| 1.0),
                    db: vec![1.0; l.bias.len()],
                })
                .collect(),
        };
        sgd_step(&mut model, &grads, &mut state, 0).unwrap();
        for (after, before) in model.head.weights.data().iter().zip(w0.data()) {
            assert!((after - (before - 0.5)).abs() < 1e-15);
        }
    }

    #[test]
    fn sgd_momentum_recurrence() {
        // Constant gradient g, momentum 0.9: v1 = g, v2 = 1.9 g.
        let mut model = tiny_model(10, 1, 2);
        let mut state = SgdState::new(&model, 1.0, 0.9, 0.0, vec![]);
        let ones = Gradients {
            layers: model
                .layers()
                .map(|l| LayerGrads {
                    dw: l.weights.map(|_| 1.0),
                    db: vec![1.0; l.bias.len()],
                })
                .collect(),
        };
        let w0 = model.head.weights.get(0, 0);
        sgd_step(&mut model, &ones, &mut state, 0).unwrap();
        let w1 = model.head.weights.get(0, 0);
        sgd_step(&mut model, &ones, &mut state, 0).unwrap();
        let w2 = model.head.weights.get(0, 0);
        assert!((w0 - w1 - 1.0).abs() < 1e-15);
        assert!((w1 - w2 - 1.9).abs() < 1e-15);
    }

    #[test]
    fn lr_schedule_decays_at_epoch() {
        let model = tiny_model(11, 1, 2);
        let state = SgdState::new(&model, 0.01, 0.9, 0.0, vec![(50, 0.1)]);
        assert!((state.lr_at(0) - 0.01).abs() < 1e-15);
        assert!((state.lr_at(49) - 0.01).abs() < 1e-15);
        assert!((state.lr_at(50) - 0.001).abs() < 1e-15);
        assert!((state.lr_at(99) - 0.001).abs() < 1e-15);
    }

    #[test]
    fn extend_head_preserves_old_logits() {
        let mut model = tiny_model(12, 4, 3);
        let mut rng = Rng::new(13);
        let x = Matrix::random_gaussian(2, 4, 0.0, 1.0, &mut rng);
        let (before, _) = forward(&model, &x, None).unwrap();

        let same = model.clone();
        extend_head(&mut model, 3, &mut rng).unwrap();
        assert_eq!(model, same);

        extend_head(&mut model, 5, &mut rng).unwrap();
        let (after, _) = forward(&model, &x, None).unwrap();
        assert_eq!(after.cols(), 5);
        for i in 0..2 {
            for j in 0..3 {
                assert_eq!(after.get(i, j), before.get(i, j));
            }
        }
        assert!(matches!(extend_head(&mut model, 4, &mut rng), Err(Error::Param { .. })));
    }

    #[test]
    fn extend_head_init_statistics() {
        // Mean of the fresh columns over many extensions is near zero.
        let rng = Rng::new(14);
        let mut sum = 0.0;
        let mut count = 0usize;
        for i in 0..1000 {
            let mut model = FcnModel::new(6, 0, 1, &mut rng.split_index(i));
            let mut r = rng.split_index(10_000 + i);
            extend_head(&mut model, 2, &mut r).unwrap();
            for row in 0..6 {
                sum += model.head.weights.get(row, 1);
                count += 1;
            }
        }
        let bound = 1.0 / 6.0f64.sqrt();
        let sigma = bound / (3.0f64).sqrt() / (count as f64).sqrt();
        assert!((sum / count as f64).abs() < 6.0 * sigma);
    }

    #[test]
    fn checkpoint_roundtrip_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let model = tiny_model(15, 5, 4);
        save_checkpoint(&model, &path).unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        assert_eq!(model, loaded);
    }
}
