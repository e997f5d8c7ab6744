//! Sylvester Hadamard construction and the in-place fast Walsh-Hadamard
//! transform, applied block-diagonally along a chosen matrix dimension.
//!
//! Hadamard matrices only exist at power-of-two orders here, so an arbitrary
//! dimension D is covered by a block-diagonal transform whose block sizes are
//! the binary decomposition of D (largest first, capped). Size-1 blocks
//! degrade to the identity, so every feature is covered.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Default cap on the largest transform block.
pub const DEFAULT_BLOCK_CAP: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Axis {
    Rows,
    Cols,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Norm {
    /// Plain butterfly output; applying twice scales a block by its size.
    None,
    /// Scale each block by 1/sqrt(n) so the transform is orthonormal.
    InvSqrtN,
}

/// Block-diagonal layout covering a dimension with power-of-two blocks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockPlan {
    dim: usize,
    blocks: Vec<usize>,
}

impl BlockPlan {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn blocks(&self) -> &[usize] {
        &self.blocks
    }

    pub fn largest_block(&self) -> usize {
        self.blocks.first().copied().unwrap_or(0)
    }
}

/// Sylvester recursion: H(0) = [1], H(k) doubles by the [[H, H], [H, -H]]
/// pattern. Entries are exactly +-1.
pub fn sylvester(k: u32) -> Result<Matrix> {
    if k > 12 {
        return Err(Error::param("k", format!("{k} > 12")));
    }
    let n = 1usize << k;
    let mut m = Matrix::zeros(n, n);
    m.set(0, 0, 1.0);
    let mut size = 1;
    while size < n {
        for i in 0..size {
            for j in 0..size {
                let v = m.get(i, j);
                m.set(i, j + size, v);
                m.set(i + size, j, v);
                m.set(i + size, j + size, -v);
            }
        }
        size *= 2;
    }
    Ok(m)
}

/// In-place fast Walsh-Hadamard transform (unnormalized butterfly).
///
/// Returns the number of scalar additions/subtractions performed, which is
/// exactly n * log2(n).
pub fn fwht_inplace(v: &mut [f64]) -> Result<usize> {
    let n = v.len();
    if n == 0 || !n.is_power_of_two() {
        return Err(Error::shape("fwht_inplace", format!("length {n} is not a power of two")));
    }
    let mut ops = 0usize;
    let mut h = 1;
    while h < n {
        let mut base = 0;
        while base < n {
            for i in base..base + h {
                let a = v[i];
                let b = v[i + h];
                v[i] = a + b;
                v[i + h] = a - b;
                ops += 2;
            }
            base += 2 * h;
        }
        h *= 2;
    }
    Ok(ops)
}

/// Greedy binary decomposition of D into power-of-two blocks, largest first,
/// with the default block cap.
pub fn plan_blocks(dim: usize) -> Result<BlockPlan> {
    plan_blocks_with_cap(dim, DEFAULT_BLOCK_CAP)
}

pub fn plan_blocks_with_cap(dim: usize, cap: usize) -> Result<BlockPlan> {
    if dim < 1 {
        return Err(Error::param("dim", "must be >= 1"));
    }
    if cap < 1 || !cap.is_power_of_two() {
        return Err(Error::param("cap", format!("{cap} must be a power of two >= 1")));
    }
    let mut blocks = Vec::new();
    let mut rem = dim;
    while rem > 0 {
        let block = cap.min(prev_power_of_two(rem));
        blocks.push(block);
        rem -= block;
    }
    Ok(BlockPlan { dim, blocks })
}

fn prev_power_of_two(n: usize) -> usize {
    debug_assert!(n >= 1);
    1usize << (usize::BITS - 1 - n.leading_zeros())
}

/// Applies the block-diagonal Walsh-Hadamard transform along one axis.
///
/// With `Axis::Cols` every row is transformed block by block; with
/// `Axis::Rows` every column is. `Norm::InvSqrtN` makes each block
/// orthonormal, so applying the transform to both operands of a product
/// along their shared contraction dimension leaves the product unchanged.
pub fn apply_block_hadamard(x: &Matrix, plan: &BlockPlan, axis: Axis, norm: Norm) -> Result<Matrix> {
    let axis_len = match axis {
        Axis::Rows => x.rows(),
        Axis::Cols => x.cols(),
    };
    if axis_len != plan.dim {
        return Err(Error::shape(
            "apply_block_hadamard",
            format!("axis length {} != plan dim {}", axis_len, plan.dim),
        ));
    }
    let mut out = x.clone();
    match axis {
        Axis::Cols => {
            for r in 0..out.rows() {
                transform_segments(out.row_mut(r), &plan.blocks, norm);
            }
        }
        Axis::Rows => {
            // Work column-by-column through a scratch buffer.
            let mut scratch = vec![0.0; out.rows()];
            for c in 0..out.cols() {
                for (r, v) in scratch.iter_mut().enumerate() {
                    *v = out.get(r, c);
                }
                transform_segments(&mut scratch, &plan.blocks, norm);
                for (r, &v) in scratch.iter().enumerate() {
                    out.set(r, c, v);
                }
            }
        }
    }
    out.debug_assert_finite("apply_block_hadamard");
    Ok(out)
}

fn transform_segments(data: &mut [f64], blocks: &[usize], norm: Norm) {
    let mut offset = 0;
    for &b in blocks {
        let seg = &mut data[offset..offset + b];
        // Size-1 blocks are the identity.
        if b > 1 {
            fwht_inplace(seg).expect("block sizes are powers of two");
        }
        if let Norm::InvSqrtN = norm {
            if b > 1 {
                let s = 1.0 / (b as f64).sqrt();
                for v in seg.iter_mut() {
                    *v *= s;
                }
            }
        }
        offset += b;
    }
}
