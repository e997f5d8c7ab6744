//! Quantized matrix-multiply engine: tiled forward GEMM with saturating
//! low-bit accumulators, and Hadamard-domain backward GEMMs with stochastic
//! rounding on the sensitive tensors.
//!
//! Forward: both inputs are nearest-quantized with outlier-scaled max
//! calibration, the contraction dimension is split into tiles, each tile is
//! accumulated in a saturating integer register, and tile results are
//! dequantized and summed at working precision.
//!
//! Backward: both operands are transformed along the contraction dimension
//! with the orthonormal block Hadamard transform before quantization, which
//! spreads heavy-tailed gradient mass across the code range. Gradients (and
//! the activation in the weight-gradient product) use stochastic rounding;
//! weights use nearest. Accumulation saturates but is not tiled.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hadamard::{apply_block_hadamard, plan_blocks, Axis, Norm};
use crate::matrix::Matrix;
use crate::quant::{
    calibrate_scale, max_code, quantize_nearest, quantize_nearest_counting, quantize_stochastic,
    QuantConfig, QuantTensor, Rounding,
};
use crate::rng::Rng;

/// Minimum MAC count before the integer kernel shards rows across threads.
const PAR_THRESHOLD: usize = 1 << 18;

/// Instrumentation from one quantized GEMM.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GemmStats {
    /// Input elements clamped into the symmetric code range.
    pub saturation_count_inputs: u64,
    /// Accumulator clamp events (one per saturating MAC).
    pub saturation_count_accum: u64,
    /// Code histogram of the left operand, full code range.
    pub bins_lhs: Vec<u64>,
    /// Code histogram of the right operand, full code range.
    pub bins_rhs: Vec<u64>,
}

impl GemmStats {
    pub fn merge(&mut self, other: &GemmStats) {
        self.saturation_count_inputs += other.saturation_count_inputs;
        self.saturation_count_accum += other.saturation_count_accum;
        merge_bins(&mut self.bins_lhs, &other.bins_lhs);
        merge_bins(&mut self.bins_rhs, &other.bins_rhs);
    }
}

fn merge_bins(into: &mut Vec<u64>, from: &[u64]) {
    if into.len() < from.len() {
        into.resize(from.len(), 0);
    }
    for (a, b) in into.iter_mut().zip(from) {
        *a += b;
    }
}

/// Count per code value over the full symmetric range; index 0 is the most
/// negative representable code.
pub fn bin_occupancy(q: &QuantTensor) -> Vec<u64> {
    let top = q.max_code();
    let mut bins = vec![0u64; 2 * top as usize + 1];
    for &c in q.codes() {
        bins[(c + top) as usize] += 1;
    }
    bins
}

pub fn occupied_bins(q: &QuantTensor) -> usize {
    bin_occupancy(q).iter().filter(|&&c| c > 0).count()
}

/// Tiled integer contraction of two quantized tensors.
///
/// Each tile of the contraction dimension is summed in a clamped register of
/// `accum_bits`; tile values are dequantized and combined at working
/// precision. `tile = K` gives the un-tiled single-accumulator form.
fn saturating_gemm(
    qa: &QuantTensor,
    qb: &QuantTensor,
    accum_bits: u8,
    tile: usize,
) -> (Matrix, u64) {
    let (m, k) = (qa.rows(), qa.cols());
    let n = qb.cols();
    debug_assert_eq!(k, qb.rows());
    debug_assert!(tile >= 1);
    if m == 0 || n == 0 {
        return (Matrix::zeros(m, n), 0);
    }
    let limit = max_code(accum_bits);
    let joint_scale = qa.scale() * qb.scale();

    // Pack the right operand column-major so inner loops are contiguous.
    let mut bt = vec![0i32; n * k];
    for r in 0..k {
        for c in 0..n {
            bt[c * k + r] = qb.codes()[r * n + c];
        }
    }

    let row_job = |i: usize, out_row: &mut [f64]| -> u64 {
        let a_row = &qa.codes()[i * k..(i + 1) * k];
        let mut sats = 0u64;
        for (j, out) in out_row.iter_mut().enumerate() {
            let b_col = &bt[j * k..(j + 1) * k];
            let mut total = 0.0f64;
            let mut base = 0;
            while base < k {
                let end = (base + tile).min(k);
                let mut acc = 0i64;
                for idx in base..end {
                    let prod = i64::from(a_row[idx]) * i64::from(b_col[idx]);
                    let next = acc + prod;
                    if next > limit {
                        acc = limit;
                        sats += 1;
                    } else if next < -limit {
                        acc = -limit;
                        sats += 1;
                    } else {
                        acc = next;
                    }
                }
                total += acc as f64 * joint_scale;
                base = end;
            }
            *out = total;
        }
        sats
    };

    let mut out = Matrix::zeros(m, n);
    let total_sats: u64 = if m * n * k >= PAR_THRESHOLD && m > 1 {
        let rows: Vec<(Vec<f64>, u64)> = (0..m)
            .into_par_iter()
            .map(|i| {
                let mut row = vec![0.0; n];
                let s = row_job(i, &mut row);
                (row, s)
            })
            .collect();
        let mut sats = 0;
        for (i, (row, s)) in rows.into_iter().enumerate() {
            out.row_mut(i).copy_from_slice(&row);
            sats += s;
        }
        sats
    } else {
        let mut sats = 0;
        for (i, row) in out.data_mut().chunks_mut(n).enumerate() {
            sats += row_job(i, row);
        }
        sats
    };
    (out, total_sats)
}

/// Forward product with nearest-rounded inputs and tiled saturating
/// accumulation. Returns the dequantized real-valued output plus stats.
pub fn qgemm_forward(x: &Matrix, w: &Matrix, cfg: &QuantConfig) -> Result<(Matrix, GemmStats)> {
    if x.cols() != w.rows() {
        return Err(Error::shape(
            "qgemm_forward",
            format!("{}x{} * {}x{}", x.rows(), x.cols(), w.rows(), w.cols()),
        ));
    }
    cfg.validate()?;
    let ax = calibrate_scale(x, cfg.fwd_outlier_scale);
    let aw = calibrate_scale(w, cfg.fwd_outlier_scale);
    let (qx, sat_x) = quantize_nearest_counting(x, cfg.input_bits, ax);
    let (qw, sat_w) = quantize_nearest_counting(w, cfg.input_bits, aw);
    let (out, accum_sats) = saturating_gemm(&qx, &qw, cfg.accum_bits, cfg.tile_size);
    let stats = GemmStats {
        saturation_count_inputs: sat_x + sat_w,
        saturation_count_accum: accum_sats,
        bins_lhs: bin_occupancy(&qx),
        bins_rhs: bin_occupancy(&qw),
    };
    Ok((out, stats))
}

fn quantize_sensitive(x: &Matrix, bits: u8, cfg: &QuantConfig, rng: &mut Rng) -> QuantTensor {
    // Backward tensors are calibrated on the transformed values with no
    // outlier scaling; the 0.975 factor is a forward-pass knob.
    let alpha = calibrate_scale(x, 1.0);
    match cfg.rounding_bwd_sensitive {
        Rounding::Stochastic => quantize_stochastic(x, bits, alpha, rng),
        Rounding::Nearest => quantize_nearest(x, bits, alpha),
    }
}

/// Input gradient dX = G * W^T computed in the Hadamard domain.
///
/// Both operands are transformed along the shared contraction dimension (the
/// class/output dimension) with the orthonormal block transform, so the
/// product needs no back-transform. G is stochastically rounded, W nearest.
pub fn qgemm_backward_input(
    g: &Matrix,
    w: &Matrix,
    cfg: &QuantConfig,
    rng: &Rng,
) -> Result<Matrix> {
    if g.cols() != w.cols() {
        return Err(Error::shape(
            "qgemm_backward_input",
            format!("g {}x{} vs w {}x{}", g.rows(), g.cols(), w.rows(), w.cols()),
        ));
    }
    cfg.validate()?;
    let plan = plan_blocks(g.cols())?;
    let gt = apply_block_hadamard(g, &plan, Axis::Cols, Norm::InvSqrtN)?;
    let wt = apply_block_hadamard(&w.transpose(), &plan, Axis::Rows, Norm::InvSqrtN)?;

    let mut g_rng = rng.split("grad");
    let qg = quantize_sensitive(&gt, cfg.input_bits, cfg, &mut g_rng);
    let qw = quantize_nearest(&wt, cfg.input_bits, calibrate_scale(&wt, 1.0));

    let (out, _sats) = saturating_gemm(&qg, &qw, cfg.accum_bits, g.cols().max(1));
    Ok(out)
}

/// Weight gradient dW = X^T * G computed in the Hadamard domain.
///
/// The contraction dimension is the batch; both the activation X^T and the
/// gradient G are stochastically rounded.
pub fn qgemm_backward_weight(
    x: &Matrix,
    g: &Matrix,
    cfg: &QuantConfig,
    rng: &Rng,
) -> Result<Matrix> {
    if x.rows() != g.rows() {
        return Err(Error::shape(
            "qgemm_backward_weight",
            format!("x {}x{} vs g {}x{}", x.rows(), x.cols(), g.rows(), g.cols()),
        ));
    }
    cfg.validate()?;
    let batch = x.rows();
    let plan = plan_blocks(batch)?;
    let xt = apply_block_hadamard(&x.transpose(), &plan, Axis::Cols, Norm::InvSqrtN)?;
    let gt = apply_block_hadamard(g, &plan, Axis::Rows, Norm::InvSqrtN)?;

    let mut x_rng = rng.split("act");
    let mut g_rng = rng.split("grad");
    let qx = quantize_sensitive(&xt, cfg.input_bits, cfg, &mut x_rng);
    let qg = quantize_sensitive(&gt, cfg.input_bits, cfg, &mut g_rng);

    let (out, _sats) = saturating_gemm(&qx, &qg, cfg.accum_bits, batch.max(1));
    Ok(out)
}
