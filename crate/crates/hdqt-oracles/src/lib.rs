//! Brute-force reference implementations used by the test suites.
//!
//! Each function here is deliberately naive and obviously correct. The test
//! suites compare production code against these, so nothing in this crate
//! may share logic with the production modules — only the `Matrix` storage
//! type is reused.

use std::fmt;

use hdqt::Matrix;

/// One comparison against an oracle, with the tolerance made explicit.
#[derive(Debug, Clone)]
pub struct OracleReport {
    pub case: String,
    pub expected: f64,
    pub actual: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl OracleReport {
    pub fn check(case: impl Into<String>, expected: f64, actual: f64, tolerance: f64) -> Self {
        let pass = (expected - actual).abs() <= tolerance;
        OracleReport {
            case: case.into(),
            expected,
            actual,
            tolerance,
            pass,
        }
    }

    /// For boolean criteria: pass/fail with no numeric comparison.
    pub fn gate(case: impl Into<String>, pass: bool) -> Self {
        OracleReport {
            case: case.into(),
            expected: 1.0,
            actual: if pass { 1.0 } else { 0.0 },
            tolerance: 0.0,
            pass,
        }
    }
}

impl fmt::Display for OracleReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{}] {}: expected {:.6e}, actual {:.6e}, tol {:.1e}",
            if self.pass { "PASS" } else { "FAIL" },
            self.case,
            self.expected,
            self.actual,
            self.tolerance
        )
    }
}

/// Dense order-2^k Hadamard matrix built by the textbook doubling recursion.
pub fn dense_hadamard_oracle(k: u32) -> Matrix {
    assert!(k <= 12, "oracle capped at k = 12");
    let mut h = vec![vec![1.0f64]];
    for _ in 0..k {
        let n = h.len();
        let mut next = vec![vec![0.0; 2 * n]; 2 * n];
        for i in 0..n {
            for j in 0..n {
                let v = h[i][j];
                next[i][j] = v;
                next[i][j + n] = v;
                next[i + n][j] = v;
                next[i + n][j + n] = -v;
            }
        }
        h = next;
    }
    Matrix::from_rows(&h).expect("oracle matrix is finite")
}

/// Scalar triple-loop matrix product.
pub fn scalar_gemm_oracle(a: &Matrix, b: &Matrix) -> Matrix {
    assert_eq!(a.cols(), b.rows(), "oracle gemm shape mismatch");
    let mut out = Matrix::zeros(a.rows(), b.cols());
    for i in 0..a.rows() {
        for j in 0..b.cols() {
            let mut acc = 0.0;
            for k in 0..a.cols() {
                acc += a.get(i, k) * b.get(k, j);
            }
            out.set(i, j, acc);
        }
    }
    out
}

/// Greedy herding, recomputing every candidate mean from scratch each round:
/// repeatedly add the point whose inclusion brings the running exemplar mean
/// closest (L2) to the full-set mean, breaking ties by lowest index.
pub fn greedy_herding_oracle(points: &Matrix, k: usize) -> Vec<usize> {
    let n = points.rows();
    let d = points.cols();
    assert!(k <= n);
    let mut target = vec![0.0; d];
    for i in 0..n {
        for (j, t) in target.iter_mut().enumerate() {
            *t += points.get(i, j) / n as f64;
        }
    }
    let mut chosen: Vec<usize> = Vec::new();
    while chosen.len() < k {
        let mut best: Option<(usize, f64)> = None;
        for cand in 0..n {
            if chosen.contains(&cand) {
                continue;
            }
            let m = chosen.len() + 1;
            let mut dist2 = 0.0;
            for (j, t) in target.iter().enumerate() {
                let mut sum = points.get(cand, j);
                for &c in &chosen {
                    sum += points.get(c, j);
                }
                let diff = sum / m as f64 - t;
                dist2 += diff * diff;
            }
            match best {
                Some((_, bd)) if dist2 >= bd => {}
                _ => best = Some((cand, dist2)),
            }
        }
        chosen.push(best.expect("candidates remain").0);
    }
    chosen
}

/// Central finite differences with per-coordinate relative step.
pub fn finite_diff_grad(mut loss: impl FnMut(&[f64]) -> f64, params: &[f64], eps: f64) -> Vec<f64> {
    let mut grad = vec![0.0; params.len()];
    let mut work = params.to_vec();
    for i in 0..params.len() {
        let h = eps * params[i].abs().max(1.0);
        work[i] = params[i] + h;
        let up = loss(&work);
        work[i] = params[i] - h;
        let down = loss(&work);
        work[i] = params[i];
        grad[i] = (up - down) / (2.0 * h);
    }
    grad
}

/// Empirical mean of `draws` samples from a stochastic scalar source.
pub fn sr_mean_estimator(draws: usize, mut sample: impl FnMut() -> f64) -> f64 {
    let mut sum = 0.0;
    for _ in 0..draws {
        sum += sample();
    }
    sum / draws as f64
}

/// Forgetting at step `i`: mean over classes seen before `i` of
/// (best accuracy at any earlier step - accuracy at step i).
///
/// `acc[step][class]` is `None` until the class has been seen.
pub fn forgetting_oracle(acc: &[Vec<Option<f64>>], i: usize) -> f64 {
    assert!(i >= 1 && i < acc.len());
    let classes = acc[0].len();
    let mut sum = 0.0;
    let mut count = 0usize;
    for c in 0..classes {
        let mut best: Option<f64> = None;
        for step in acc.iter().take(i) {
            if let Some(a) = step[c] {
                best = Some(best.map_or(a, |b: f64| b.max(a)));
            }
        }
        if let Some(b) = best {
            let current = acc[i][c].expect("class seen earlier must stay evaluated");
            sum += b - current;
            count += 1;
        }
    }
    sum / count as f64
}
