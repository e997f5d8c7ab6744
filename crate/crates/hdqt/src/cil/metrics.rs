//! Per-class accuracy bookkeeping and the forgetting measure: for each class
//! seen before step i, the gap between its best earlier accuracy and its
//! current accuracy, averaged over those classes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `a[task][class]`: accuracy of a class after each task, `None` until the
/// class has been seen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyMatrix {
    num_classes: usize,
    per_task: Vec<Vec<Option<f64>>>,
}

impl AccuracyMatrix {
    pub fn new(num_classes: usize) -> AccuracyMatrix {
        AccuracyMatrix {
            num_classes,
            per_task: Vec::new(),
        }
    }

    pub fn from_rows(num_classes: usize, rows: Vec<Vec<Option<f64>>>) -> Result<AccuracyMatrix> {
        if rows.iter().any(|r| r.len() != num_classes) {
            return Err(Error::shape("AccuracyMatrix", "row width != class count"));
        }
        Ok(AccuracyMatrix {
            num_classes,
            per_task: rows,
        })
    }

    pub fn push_task(&mut self, per_class: Vec<Option<f64>>) {
        debug_assert_eq!(per_class.len(), self.num_classes);
        debug_assert!(per_class
            .iter()
            .flatten()
            .all(|a| (0.0..=1.0).contains(a)));
        self.per_task.push(per_class);
    }

    pub fn num_tasks(&self) -> usize {
        self.per_task.len()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn accuracy(&self, class: usize, task: usize) -> Option<f64> {
        self.per_task[task][class]
    }

    pub fn task_row(&self, task: usize) -> &[Option<f64>] {
        &self.per_task[task]
    }

    /// Mean over classes evaluated at this task (macro average).
    pub fn task_mean(&self, task: usize) -> f64 {
        let seen: Vec<f64> = self.per_task[task].iter().flatten().copied().collect();
        if seen.is_empty() {
            0.0
        } else {
            seen.iter().sum::<f64>() / seen.len() as f64
        }
    }
}

/// Mean over classes seen before task `i` of (best prior accuracy - current
/// accuracy). Undefined at task 0.
pub fn forgetting_score(acc: &AccuracyMatrix, i: usize) -> Result<f64> {
    if i == 0 {
        return Err(Error::param("i", "forgetting is undefined at the first task"));
    }
    if i >= acc.num_tasks() {
        return Err(Error::param("i", format!("task {i} out of range")));
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for c in 0..acc.num_classes {
        let mut best: Option<f64> = None;
        for task in &acc.per_task[..i] {
            if let Some(a) = task[c] {
                best = Some(best.map_or(a, |b: f64| b.max(a)));
            }
        }
        if let Some(b) = best {
            let current = acc.per_task[i][c].ok_or_else(|| {
                Error::data(format!("class {c} seen earlier but not evaluated at task {i}"))
            })?;
            sum += b - current;
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::data("no previously seen classes"));
    }
    Ok(sum / count as f64)
}

/// Final-task per-class accuracy differences (second minus first), ordered
/// by the arrival order given. Positive means the second run is better.
pub fn per_class_delta(
    first: &AccuracyMatrix,
    second: &AccuracyMatrix,
    arrival_order: &[usize],
) -> Result<Vec<(usize, f64)>> {
    if first.num_classes != second.num_classes {
        return Err(Error::shape("per_class_delta", "class count mismatch"));
    }
    if first.num_tasks() == 0 || second.num_tasks() == 0 {
        return Err(Error::data("empty accuracy matrix"));
    }
    let fa = &first.per_task[first.num_tasks() - 1];
    let sa = &second.per_task[second.num_tasks() - 1];
    let mut out = Vec::with_capacity(arrival_order.len());
    for &c in arrival_order {
        match (fa.get(c).copied().flatten(), sa.get(c).copied().flatten()) {
            (Some(a), Some(b)) => out.push((c, b - a)),
            _ => {
                return Err(Error::data(format!(
                    "class {c} missing a final accuracy in one run"
                )))
            }
        }
    }
    Ok(out)
}
