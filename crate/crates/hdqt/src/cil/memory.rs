//! Exemplar replay memory with herding selection.
//!
//! Herding greedily picks the sample whose inclusion brings the running
//! exemplar mean closest to the true class mean, so the selection order is
//! incremental: shrinking a class quota just truncates its list.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Greedy herding order over the rows of `features`; ties break to the
/// lowest index. Returns `k` sample row indices.
pub fn herding_select(features: &Matrix, k: usize) -> Result<Vec<usize>> {
    let n = features.rows();
    let d = features.cols();
    if n == 0 {
        return Err(Error::data("herding on an empty class"));
    }
    if k > n {
        return Err(Error::param("k", format!("{k} > sample count {n}")));
    }
    let mut target = vec![0.0; d];
    for i in 0..n {
        for (t, v) in target.iter_mut().zip(features.row(i)) {
            *t += v / n as f64;
        }
    }
    let mut selected = vec![false; n];
    let mut running_sum = vec![0.0; d];
    let mut order = Vec::with_capacity(k);
    for step in 0..k {
        let m = (step + 1) as f64;
        let mut best: Option<(usize, f64)> = None;
        for (cand, _) in selected.iter().enumerate().filter(|(_, &s)| !s) {
            let mut dist2 = 0.0;
            for ((s, v), t) in running_sum.iter().zip(features.row(cand)).zip(&target) {
                let diff = (s + v) / m - t;
                dist2 += diff * diff;
            }
            if best.is_none_or(|(_, b)| dist2 < b) {
                best = Some((cand, dist2));
            }
        }
        let (pick, _) = best.expect("k <= n leaves candidates");
        selected[pick] = true;
        for (s, v) in running_sum.iter_mut().zip(features.row(pick)) {
            *s += v;
        }
        order.push(pick);
    }
    Ok(order)
}

/// Fixed-budget exemplar store: per-class sample indices in herding order,
/// with quotas rebalanced as the class count grows.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplayMemory {
    capacity: usize,
    per_class: BTreeMap<usize, Vec<usize>>,
}

impl ReplayMemory {
    pub fn new(capacity: usize) -> Result<ReplayMemory> {
        if capacity == 0 {
            return Err(Error::param("capacity", "must be > 0"));
        }
        Ok(ReplayMemory {
            capacity,
            per_class: BTreeMap::new(),
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn total_stored(&self) -> usize {
        self.per_class.values().map(Vec::len).sum()
    }

    pub fn classes(&self) -> impl Iterator<Item = usize> + '_ {
        self.per_class.keys().copied()
    }

    pub fn exemplars(&self, class: usize) -> Option<&[usize]> {
        self.per_class.get(&class).map(Vec::as_slice)
    }

    pub fn all_indices(&self) -> Vec<usize> {
        self.per_class.values().flatten().copied().collect()
    }

    /// Per-class quota once `total_classes` classes are stored. Degenerate
    /// budgets (capacity below the class count) are clamped to one exemplar
    /// per class with a warning, as losing classes entirely is worse than
    /// briefly exceeding the budget.
    pub fn quota_for(&self, total_classes: usize) -> usize {
        debug_assert!(total_classes > 0);
        let quota = self.capacity / total_classes;
        if quota == 0 {
            log::warn!(
                "memory capacity {} below class count {}; keeping 1 exemplar per class",
                self.capacity,
                total_classes
            );
            1
        } else {
            quota
        }
    }

    /// Shrinks existing lists to the new quota (herding order makes this a
    /// truncation) and installs the freshly selected classes.
    pub fn rebalance(&mut self, new_classes: Vec<(usize, Vec<usize>)>) {
        let total = self.per_class.len() + new_classes.len();
        let quota = self.quota_for(total.max(1));
        for list in self.per_class.values_mut() {
            list.truncate(quota);
        }
        for (class, mut order) in new_classes {
            order.truncate(quota);
            self.per_class.insert(class, order);
        }
    }
}
