//! Pool-resampling training loop and the two training methods.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::net::EmbeddingParams;
use crate::rng::{self, TAG_POOL, TAG_SHUFFLE, TAG_TASK};

use super::adam::{adam_step, AdamState, DEFAULT_LEARNING_RATE};
use super::loss::{accumulate_triplet, Gradients, LossOptions};
use super::sampler::{sample_pool, Task, Triplet};

/// Triplets per gradient chunk. Fixed so the reduction tree does not depend
/// on the worker count.
const GRAD_CHUNK: usize = 64;

pub const DEFAULT_BATCH_SIZE: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrainSchedule {
    pub pool_size: usize,
    pub epochs_per_pool: usize,
    /// Number of sample-then-train rounds. Zero leaves the initialization untouched.
    pub resample_rounds: usize,
}

impl TrainSchedule {
    /// 96,000 triplets per pool, 30 epochs per pool, 4 pools.
    pub const TASK1: TrainSchedule = TrainSchedule {
        pool_size: 96_000,
        epochs_per_pool: 30,
        resample_rounds: 4,
    };

    /// 1,000,000 triplets per pool, 5 epochs per pool, 4 pools.
    pub const TASK2: TrainSchedule = TrainSchedule {
        pool_size: 1_000_000,
        epochs_per_pool: 5,
        resample_rounds: 4,
    };

    pub fn default_for(task: Task) -> Self {
        match task {
            Task::Task1 => Self::TASK1,
            Task::Task2 => Self::TASK2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.pool_size == 0 || self.epochs_per_pool == 0 {
            return Err(Error::Config("pool_size and epochs_per_pool must be positive".into()));
        }
        Ok(())
    }
}

/// Settings shared by every training run of an experiment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainOptions {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub loss: LossOptions,
    /// Width of the embedding layer.
    pub dim_out: usize,
}

impl TrainOptions {
    pub fn with_dim_out(dim_out: usize) -> Self {
        Self {
            batch_size: DEFAULT_BATCH_SIZE,
            learning_rate: DEFAULT_LEARNING_RATE,
            loss: LossOptions::default(),
            dim_out,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.dim_out == 0 {
            return Err(Error::Config("batch_size and dim_out must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if !(self.loss.margin > 0.0 && self.loss.margin.is_finite()) {
            return Err(Error::Config("margin must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceEntry {
    pub round: usize,
    pub epoch: usize,
    /// Mean loss over the epoch's triplets, each evaluated with the
    /// parameters in effect when its batch was processed.
    pub mean_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub task: Task,
    pub params: EmbeddingParams,
    pub trace: Vec<TraceEntry>,
}

fn tree_reduce(mut parts: Vec<(Gradients, f64)>) -> Option<(Gradients, f64)> {
    while parts.len() > 1 {
        let mut next = Vec::with_capacity(parts.len().div_ceil(2));
        let mut it = parts.into_iter();
        while let Some((mut g, l)) = it.next() {
            if let Some((g2, l2)) = it.next() {
                g.add_assign(&g2);
                next.push((g, l + l2));
            } else {
                next.push((g, l));
            }
        }
        parts = next;
    }
    parts.pop()
}

/// Batch-mean gradient and summed loss over `batch`.
fn batch_gradient(
    params: &EmbeddingParams,
    dataset: &Dataset,
    batch: &[Triplet],
    opts: &LossOptions,
) -> (Gradients, f64) {
    let parts: Vec<(Gradients, f64)> = batch
        .par_chunks(GRAD_CHUNK)
        .map(|chunk| {
            let mut g = Gradients::zeros_like(params);
            let mut loss = 0.0;
            for t in chunk {
                loss += accumulate_triplet(
                    params,
                    dataset.values(t.anchor),
                    dataset.values(t.positive),
                    dataset.values(t.negative),
                    opts,
                    &mut g,
                );
            }
            (g, loss)
        })
        .collect();
    let (mut g, loss) = tree_reduce(parts).expect("batch is non-empty");
    g.scale(1.0 / batch.len() as f64);
    (g, loss)
}

pub fn train(
    dataset: &Dataset,
    task: Task,
    schedule: &TrainSchedule,
    options: &TrainOptions,
    seed: u64,
) -> Result<TrainedModel> {
    train_with_progress(dataset, task, schedule, options, seed, |_| {})
}

/// Runs `resample_rounds` rounds of: sample a pool, then `epochs_per_pool`
/// epochs of shuffled mini-batches with one Adam step per batch.
/// `progress` sees every trace entry as it is produced.
pub fn train_with_progress(
    dataset: &Dataset,
    task: Task,
    schedule: &TrainSchedule,
    options: &TrainOptions,
    seed: u64,
    mut progress: impl FnMut(&TraceEntry),
) -> Result<TrainedModel> {
    schedule.validate()?;
    options.validate()?;
    let mut params = EmbeddingParams::init(dataset.dim(), options.dim_out, seed)?;
    let mut adam = AdamState::new(&params);
    let mut trace = Vec::with_capacity(schedule.resample_rounds * schedule.epochs_per_pool);
    for round in 0..schedule.resample_rounds {
        let pool_seed = rng::derive_seed(seed, &[TAG_POOL, round as u64]);
        let mut pool = sample_pool(dataset, task, schedule.pool_size, pool_seed)?.triplets;
        for epoch in 0..schedule.epochs_per_pool {
            let mut shuffler = rng::stream(seed, &[TAG_SHUFFLE, round as u64, epoch as u64]);
            pool.shuffle(&mut shuffler);
            let mut total = 0.0;
            for batch in pool.chunks(options.batch_size) {
                let (grads, loss) = batch_gradient(&params, dataset, batch, &options.loss);
                if !loss.is_finite() {
                    return Err(Error::Training(format!(
                        "{task} round {round} epoch {epoch}: non-finite batch loss {loss}"
                    )));
                }
                total += loss;
                adam_step(&mut params, &mut adam, &grads, options.learning_rate)
                    .map_err(|e| Error::Training(format!("{task} round {round} epoch {epoch}: {e}")))?;
            }
            let entry = TraceEntry {
                round,
                epoch,
                mean_loss: total / pool.len() as f64,
            };
            progress(&entry);
            trace.push(entry);
        }
    }
    Ok(TrainedModel { task, params, trace })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    /// One network per task.
    M1,
    /// One Task-2 network reused for both tasks.
    M2,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::M1 => "M1",
            Method::M2 => "M2",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "M1" | "m1" => Ok(Method::M1),
            "M2" | "m2" => Ok(Method::M2),
            other => Err(Error::Config(format!("unknown method {other:?} (expected M1 or M2)"))),
        }
    }
}

/// Schedules keyed by task; a method only needs the tasks it trains.
pub type Schedules = BTreeMap<Task, TrainSchedule>;

/// Seed used for a task's training run within a method.
pub fn task_seed(seed: u64, task: Task) -> u64 {
    rng::derive_seed(seed, &[TAG_TASK, task.number()])
}

/// Training set for a task: every vector for Task 1, blacklisted speakers
/// only for Task 2.
pub fn task_dataset(dataset: &Dataset, task: Task) -> Dataset {
    match task {
        Task::Task1 => dataset.clone(),
        Task::Task2 => dataset.blacklisted_only(),
    }
}

/// Trains the networks a method calls for. Under M2 both task keys hold the
/// same `Arc`.
pub fn run_method(
    dataset: &Dataset,
    method: Method,
    schedules: &Schedules,
    options: &TrainOptions,
    seed: u64,
    mut progress: impl FnMut(Task, &TraceEntry),
) -> Result<BTreeMap<Task, Arc<TrainedModel>>> {
    let needed: &[Task] = match method {
        Method::M1 => &[Task::Task1, Task::Task2],
        Method::M2 => &[Task::Task2],
    };
    for task in needed {
        if !schedules.contains_key(task) {
            return Err(Error::Config(format!("method {method} needs a {task} schedule")));
        }
    }
    let mut out = BTreeMap::new();
    for &task in needed {
        let data = task_dataset(dataset, task);
        let model = train_with_progress(&data, task, &schedules[&task], options, task_seed(seed, task), |e| {
            progress(task, e)
        })?;
        out.insert(task, Arc::new(model));
    }
    if method == Method::M2 {
        let shared = Arc::clone(&out[&Task::Task2]);
        out.insert(Task::Task1, shared);
    }
    Ok(out)
}
