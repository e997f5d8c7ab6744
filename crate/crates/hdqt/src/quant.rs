//! Simulated-hardware quantization: max-based calibration, nearest and
//! stochastic rounding to a symmetric integer code range, and dequantization.
//!
//! A value x maps to a code by `round(clip(alpha * x, -1, 1) * 2^(b-1))`,
//! clamped to the symmetric range `+-(2^(b-1) - 1)`. Keeping the range
//! symmetric costs one level (2^b - 1 codes instead of 2^b) but makes
//! negation exact in code space, which the backward pass relies on.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rounding {
    Nearest,
    Stochastic,
}

/// One knob object for the whole precision scheme.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantConfig {
    /// Bit-width of GEMM inputs (2-16).
    pub input_bits: u8,
    /// Bit-width of the saturating accumulators (4-32).
    pub accum_bits: u8,
    /// Tile size along the contraction dimension of the forward GEMM.
    pub tile_size: usize,
    /// Scaling on the calibration maximum to drop outliers in the forward
    /// pass, in (0, 1].
    pub fwd_outlier_scale: f64,
    /// Rounding for forward-pass inputs.
    pub rounding_fwd: Rounding,
    /// Rounding for the sensitive backward tensors (both gradients and the
    /// activation in the weight-gradient GEMM).
    pub rounding_bwd_sensitive: Rounding,
}

impl Default for QuantConfig {
    fn default() -> Self {
        QuantConfig {
            input_bits: 4,
            accum_bits: 8,
            tile_size: 32,
            fwd_outlier_scale: 0.975,
            rounding_fwd: Rounding::Nearest,
            rounding_bwd_sensitive: Rounding::Stochastic,
        }
    }
}

impl QuantConfig {
    pub fn validate(&self) -> Result<()> {
        if !(2..=16).contains(&self.input_bits) {
            return Err(Error::param("input_bits", format!("{} not in 2..=16", self.input_bits)));
        }
        if !(4..=32).contains(&self.accum_bits) {
            return Err(Error::param("accum_bits", format!("{} not in 4..=32", self.accum_bits)));
        }
        if self.accum_bits < self.input_bits {
            return Err(Error::param(
                "accum_bits",
                format!("{} < input_bits {}", self.accum_bits, self.input_bits),
            ));
        }
        if self.tile_size < 1 {
            return Err(Error::param("tile_size", "must be >= 1"));
        }
        if !(self.fwd_outlier_scale > 0.0 && self.fwd_outlier_scale <= 1.0) {
            return Err(Error::param(
                "fwd_outlier_scale",
                format!("{} not in (0, 1]", self.fwd_outlier_scale),
            ));
        }
        Ok(())
    }
}

/// Integer code matrix plus everything needed to map codes back to reals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantTensor {
    rows: usize,
    cols: usize,
    codes: Vec<i32>,
    bits: u8,
    /// Real value of one code unit: 2^-(b-1) / alpha.
    scale: f64,
}

impl QuantTensor {
    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn bits(&self) -> u8 {
        self.bits
    }

    /// Dequantization multiplier per code unit.
    #[inline]
    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn codes(&self) -> &[i32] {
        &self.codes
    }

    /// Largest representable code magnitude, 2^(b-1) - 1.
    #[inline]
    pub fn max_code(&self) -> i32 {
        max_code(self.bits) as i32
    }
}

/// Widths up to 32 bits are used for accumulators, so this lives in i64.
#[inline]
pub(crate) fn max_code(bits: u8) -> i64 {
    (1i64 << (bits - 1)) - 1
}

/// Calibration: alpha = 1 / (outlier_scale * max|x|), with alpha = 1 as the
/// sentinel for an all-zero tensor (every code quantizes to zero anyway).
pub fn calibrate_scale(x: &Matrix, outlier_scale: f64) -> f64 {
    debug_assert!(outlier_scale > 0.0 && outlier_scale <= 1.0);
    let m = x.max_abs();
    if m == 0.0 {
        1.0
    } else {
        1.0 / (outlier_scale * m)
    }
}

fn quantize_with(
    x: &Matrix,
    bits: u8,
    alpha: f64,
    mut round: impl FnMut(f64) -> f64,
) -> (QuantTensor, u64) {
    debug_assert!((2..=16).contains(&bits));
    let top = max_code(bits) as i32;
    let half_levels = f64::from(1i32 << (bits - 1));
    let mut saturated = 0u64;
    let codes = x
        .data()
        .iter()
        .map(|&v| {
            let clipped = (alpha * v).clamp(-1.0, 1.0);
            let code = round(clipped * half_levels);
            if code.abs() > f64::from(top) {
                saturated += 1;
            }
            (code as i32).clamp(-top, top)
        })
        .collect();
    (
        QuantTensor {
            rows: x.rows(),
            cols: x.cols(),
            codes,
            bits,
            scale: half_levels.recip() / alpha,
        },
        saturated,
    )
}

/// Nearest rounding (half away from zero, keeping codes sign-symmetric).
pub fn quantize_nearest(x: &Matrix, bits: u8, alpha: f64) -> QuantTensor {
    quantize_nearest_counting(x, bits, alpha).0
}

pub(crate) fn quantize_nearest_counting(x: &Matrix, bits: u8, alpha: f64) -> (QuantTensor, u64) {
    quantize_with(x, bits, alpha, f64::round)
}

/// Stochastic rounding: code = floor(v) + Bernoulli(v - floor(v)), so the
/// dequantized expectation equals the clipped value for non-saturated input.
pub fn quantize_stochastic(x: &Matrix, bits: u8, alpha: f64, rng: &mut Rng) -> QuantTensor {
    quantize_stochastic_counting(x, bits, alpha, rng).0
}

pub(crate) fn quantize_stochastic_counting(
    x: &Matrix,
    bits: u8,
    alpha: f64,
    rng: &mut Rng,
) -> (QuantTensor, u64) {
    quantize_with(x, bits, alpha, |v| {
        let base = v.floor();
        let frac = v - base;
        if rng.unit_f64() < frac {
            base + 1.0
        } else {
            base
        }
    })
}

pub fn dequantize(q: &QuantTensor) -> Matrix {
    let data = q.codes.iter().map(|&c| f64::from(c) * q.scale).collect();
    Matrix::from_vec(q.rows, q.cols, data).expect("codes and scale are finite")
}
