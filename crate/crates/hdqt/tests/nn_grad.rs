//! Gradient correctness: the unquantized backward pass against central
//! finite differences, the loss gradients against the same oracle, and the
//! quantized pass against its precision limit.

use hdqt::matrix::Matrix;
use hdqt::nn::{backward, ce_loss, forward, kd_loss, FcnModel, Gradients};
use hdqt::quant::QuantConfig;
use hdqt::rng::Rng;
use hdqt_oracles::finite_diff_grad;

/// Flattens all parameters (weights then bias, layer by layer).
fn flatten_params(model: &FcnModel) -> Vec<f64> {
    let mut out = Vec::new();
    for layer in model
        .hidden_layers()
        .iter()
        .chain(std::iter::once(model.head()))
    {
        out.extend_from_slice(layer.weights.data());
        out.extend_from_slice(&layer.bias);
    }
    out
}

fn unflatten_into(model: &FcnModel, params: &[f64]) -> FcnModel {
    let mut rebuilt = model.clone();
    let mut cursor = 0;
    let shapes: Vec<(usize, usize)> = model
        .hidden_layers()
        .iter()
        .chain(std::iter::once(model.head()))
        .map(|l| (l.weights.rows(), l.weights.cols()))
        .collect();
    let mut layers = Vec::new();
    for (r, c) in shapes {
        let w = Matrix::from_vec(r, c, params[cursor..cursor + r * c].to_vec()).unwrap();
        cursor += r * c;
        let b = params[cursor..cursor + c].to_vec();
        cursor += c;
        layers.push((w, b));
    }
    let n_hidden = model.hidden_layers().len();
    for (i, (w, b)) in layers.into_iter().enumerate() {
        let target = if i < n_hidden {
            &mut rebuilt.hidden_layers_mut()[i]
        } else {
            rebuilt.head_mut()
        };
        target.weights = w;
        target.bias = b;
    }
    rebuilt
}

fn flatten_grads(grads: &Gradients) -> Vec<f64> {
    let mut out = Vec::new();
    for lg in &grads.layers {
        out.extend_from_slice(lg.dw.data());
        out.extend_from_slice(&lg.db);
    }
    out
}

#[test]
fn unquantized_backward_matches_finite_differences() {
    let mut rng = Rng::new(31);
    let model = FcnModel::new(6, 3, 3, &mut rng);
    let x = Matrix::random_gaussian(5, 6, 0.0, 1.0, &mut rng);
    let labels = vec![0usize, 1, 2, 1, 0];

    let (logits, cache) = forward(&model, &x, None).unwrap();
    let (_, dlogits) = ce_loss(&logits, &labels).unwrap();
    let analytic = flatten_grads(&backward(&model, &cache, &dlogits, None, &rng).unwrap());

    let params = flatten_params(&model);
    let numeric = finite_diff_grad(
        |p| {
            let m = unflatten_into(&model, p);
            let (lg, _) = forward(&m, &x, None).unwrap();
            ce_loss(&lg, &labels).unwrap().0
        },
        &params,
        1e-4,
    );

    let scale = analytic
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()))
        .max(1e-8);
    for (i, (a, n)) in analytic.iter().zip(&numeric).enumerate() {
        assert!(
            (a - n).abs() <= 1e-4 * scale,
            "param {i}: analytic {a}, numeric {n}"
        );
    }
}

#[test]
fn ce_gradient_matches_finite_differences() {
    let mut rng = Rng::new(32);
    let logits = Matrix::random_gaussian(4, 5, 0.0, 2.0, &mut rng);
    let labels = vec![3usize, 0, 4, 2];
    let (_, analytic) = ce_loss(&logits, &labels).unwrap();
    let numeric = finite_diff_grad(
        |p| {
            let m = Matrix::from_vec(4, 5, p.to_vec()).unwrap();
            ce_loss(&m, &labels).unwrap().0
        },
        logits.data(),
        1e-5,
    );
    for (a, n) in analytic.data().iter().zip(&numeric) {
        assert!((a - n).abs() < 1e-6, "{a} vs {n}");
    }
}

#[test]
fn kd_gradient_matches_finite_differences() {
    let mut rng = Rng::new(33);
    let old = Matrix::random_gaussian(3, 4, 0.0, 1.5, &mut rng);
    let new = Matrix::random_gaussian(3, 6, 0.0, 1.5, &mut rng);
    let t = 2.0;
    let (_, analytic) = kd_loss(&old, &new, t).unwrap();
    let numeric = finite_diff_grad(
        |p| {
            let m = Matrix::from_vec(3, 6, p.to_vec()).unwrap();
            kd_loss(&old, &m, t).unwrap().0
        },
        new.data(),
        1e-5,
    );
    for (a, n) in analytic.data().iter().zip(&numeric) {
        assert!((a - n).abs() < 1e-5, "{a} vs {n}");
    }
}

#[test]
fn quantized_gradient_aligns_with_exact_at_high_precision() {
    let mut rng = Rng::new(34);
    let model = FcnModel::new(8, 3, 4, &mut rng);
    let x = Matrix::random_gaussian(12, 8, 0.0, 1.0, &mut rng);
    let labels: Vec<usize> = (0..12).map(|i| i % 4).collect();
    let cfg = QuantConfig {
        input_bits: 12,
        accum_bits: 28,
        tile_size: 32,
        fwd_outlier_scale: 1.0,
        ..QuantConfig::default()
    };

    let (logits, cache) = forward(&model, &x, None).unwrap();
    let (_, dlogits) = ce_loss(&logits, &labels).unwrap();
    let exact = flatten_grads(&backward(&model, &cache, &dlogits, None, &rng).unwrap());

    let (qlogits, qcache) = forward(&model, &x, Some(&cfg)).unwrap();
    let (_, qdlogits) = ce_loss(&qlogits, &labels).unwrap();
    let quant = flatten_grads(&backward(&model, &qcache, &qdlogits, Some(&cfg), &rng).unwrap());

    let dot: f64 = exact.iter().zip(&quant).map(|(a, b)| a * b).sum();
    let na: f64 = exact.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb: f64 = quant.iter().map(|v| v * v).sum::<f64>().sqrt();
    let cosine = dot / (na * nb);
    assert!(cosine > 0.999, "cosine {cosine}");
}
