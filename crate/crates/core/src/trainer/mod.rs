//! Triplet-network training: sampling, loss, gradients, Adam and the
//! per-task schedules.

mod adam;
mod loss;
mod sampler;
mod train;

pub use adam::{adam_step, AdamState, BETA1, BETA2, DEFAULT_LEARNING_RATE, EPSILON};
pub use loss::{encoded_triplet_loss, loss_gradients, triplet_loss, Gradients, LossOptions, DEFAULT_MARGIN};
pub use sampler::{class_of, is_valid, sample_pool, Task, Triplet, TripletPool};
pub use train::{
    run_method, task_dataset, task_seed, train, train_with_progress, Method, Schedules, TraceEntry, TrainOptions,
    TrainSchedule, TrainedModel, DEFAULT_BATCH_SIZE,
};

pub use crate::linalg::euclidean_distance;
