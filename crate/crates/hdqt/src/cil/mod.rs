//! Class-incremental learning: task streams over disjoint class groups, the
//! LwF / iCaRL / BiC trainers, replay memory with herding selection, and the
//! accuracy/forgetting metrics used to compare runs.

mod memory;
mod metrics;
mod stream;
mod trainer;

pub use memory::{herding_select, ReplayMemory};
pub use metrics::{forgetting_score, per_class_delta, AccuracyMatrix};
pub use stream::{split_tasks, Task, TaskStream};
pub use trainer::{
    train_bic, train_icarl, train_lwf, BiasCorrection, CilOutcome, Hyperparams,
};
