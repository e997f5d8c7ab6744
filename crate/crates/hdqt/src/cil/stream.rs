//! Task streams: a seeded class-order permutation partitioned into disjoint
//! class groups, each carrying its train/test sample indices.

use serde::{Deserialize, Serialize};

use crate::data::FeatureDataset;
use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Task {
    /// Dense class ids owned by this task, in arrival order.
    pub classes: Vec<usize>,
    pub train_idx: Vec<usize>,
    pub test_idx: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskStream {
    pub tasks: Vec<Task>,
    /// The seeded permutation of all class ids.
    pub class_order: Vec<usize>,
}

impl TaskStream {
    pub fn num_tasks(&self) -> usize {
        self.tasks.len()
    }

    /// Classes seen once task `i` is done, in arrival order.
    pub fn seen_classes(&self, i: usize) -> Vec<usize> {
        self.tasks[..=i]
            .iter()
            .flat_map(|t| t.classes.iter().copied())
            .collect()
    }
}

/// Splits the dataset into tasks of `classes_per_task` classes under a
/// seeded class-order permutation; the final task holds the remainder when
/// the class count does not divide evenly.
pub fn split_tasks(
    ds: &FeatureDataset,
    classes_per_task: usize,
    rng: &mut Rng,
) -> Result<TaskStream> {
    if classes_per_task < 1 {
        return Err(Error::param("classes_per_task", "must be >= 1"));
    }
    let num_classes = ds.num_classes();
    if num_classes < 1 {
        return Err(Error::data("dataset has no classes"));
    }
    let mut class_order: Vec<usize> = (0..num_classes).collect();
    rng.shuffle(&mut class_order);

    let mut tasks = Vec::new();
    for group in class_order.chunks(classes_per_task) {
        let in_task = |label: usize| group.contains(&label);
        tasks.push(Task {
            classes: group.to_vec(),
            train_idx: ds
                .train_idx
                .iter()
                .copied()
                .filter(|&i| in_task(ds.labels[i]))
                .collect(),
            test_idx: ds
                .test_idx
                .iter()
                .copied()
                .filter(|&i| in_task(ds.labels[i]))
                .collect(),
        });
    }
    Ok(TaskStream { tasks, class_order })
}
