//! Uniform random A-P-N triplet sampling for both tasks.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::rng;

/// Which notion of "class" a triplet respects.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Task {
    /// Blacklisted vs. background.
    Task1,
    /// Individual speaker identity.
    Task2,
}

impl Task {
    pub const ALL: [Task; 2] = [Task::Task1, Task::Task2];

    pub fn number(self) -> u64 {
        match self {
            Task::Task1 => 1,
            Task::Task2 => 2,
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "task{}", self.number())
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "task1" | "1" => Ok(Task::Task1),
            "task2" | "2" => Ok(Task::Task2),
            other => Err(Error::Config(format!("unknown task {other:?}"))),
        }
    }
}

/// Positions into a [`Dataset`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Triplet {
    pub anchor: usize,
    pub positive: usize,
    pub negative: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TripletPool {
    pub triplets: Vec<Triplet>,
    pub task: Task,
    pub seed: u64,
}

impl TripletPool {
    pub fn len(&self) -> usize {
        self.triplets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triplets.is_empty()
    }
}

/// Class of a position under `task`: blacklist flag for Task 1, speaker
/// index for Task 2.
pub fn class_of(dataset: &Dataset, task: Task, pos: usize) -> usize {
    match task {
        Task::Task1 => dataset.is_blacklisted(pos) as usize,
        Task::Task2 => dataset.speaker_index(pos),
    }
}

pub fn is_valid(dataset: &Dataset, task: Task, t: &Triplet) -> bool {
    t.anchor != t.positive
        && class_of(dataset, task, t.anchor) == class_of(dataset, task, t.positive)
        && class_of(dataset, task, t.anchor) != class_of(dataset, task, t.negative)
}

/// Two distinct members of `members`, uniformly over ordered pairs.
fn distinct_pair(rng: &mut impl Rng, members: &[usize]) -> (usize, usize) {
    let m = members.len();
    let i = rng.random_range(0..m);
    let mut j = rng.random_range(0..m - 1);
    if j >= i {
        j += 1;
    }
    (members[i], members[j])
}

fn sampling_error(task: Task, msg: impl Into<String>) -> Error {
    Error::Sampling {
        task: task.to_string(),
        msg: msg.into(),
    }
}

/// Draws `pool_size` triplets.
///
/// Task 2: anchor speaker uniform over speakers with at least two samples,
/// anchor/positive a uniform distinct pair of that speaker, negative uniform
/// over every other speaker's samples.
///
/// Task 1: anchor class blacklisted or background with probability 1/2
/// (restricted to classes with at least two samples), anchor/positive a
/// uniform distinct pair of that class, negative uniform over the other class.
pub fn sample_pool(dataset: &Dataset, task: Task, pool_size: usize, seed: u64) -> Result<TripletPool> {
    let mut rng = rng::stream(seed, &[rng::TAG_POOL, task.number()]);
    let mut triplets = Vec::with_capacity(pool_size);
    match task {
        Task::Task2 => {
            let eligible: Vec<usize> = dataset
                .speakers()
                .iter()
                .enumerate()
                .filter(|(_, s)| s.positions.len() >= 2)
                .map(|(i, _)| i)
                .collect();
            if eligible.is_empty() {
                return Err(sampling_error(task, "no speaker has two or more samples"));
            }
            if dataset.speakers().len() < 2 {
                return Err(sampling_error(task, "need at least two speakers"));
            }
            let n = dataset.len();
            for _ in 0..pool_size {
                let spk = eligible[rng.random_range(0..eligible.len())];
                let (anchor, positive) = distinct_pair(&mut rng, &dataset.speakers()[spk].positions);
                let negative = loop {
                    let cand = rng.random_range(0..n);
                    if dataset.speaker_index(cand) != spk {
                        break cand;
                    }
                };
                triplets.push(Triplet { anchor, positive, negative });
            }
        }
        Task::Task1 => {
            let (bl, bg): (Vec<usize>, Vec<usize>) = (0..dataset.len()).partition(|&p| dataset.is_blacklisted(p));
            if bl.is_empty() || bg.is_empty() {
                return Err(sampling_error(task, "need both blacklisted and background vectors"));
            }
            let classes: Vec<(&[usize], &[usize])> = [(&bl[..], &bg[..]), (&bg[..], &bl[..])]
                .into_iter()
                .filter(|(same, _)| same.len() >= 2)
                .collect();
            if classes.is_empty() {
                return Err(sampling_error(task, "no class has two or more samples"));
            }
            for _ in 0..pool_size {
                let (same, other) = if classes.len() == 2 {
                    classes[rng.random_bool(0.5) as usize]
                } else {
                    classes[0]
                };
                let (anchor, positive) = distinct_pair(&mut rng, same);
                let negative = other[rng.random_range(0..other.len())];
                triplets.push(Triplet { anchor, positive, negative });
            }
        }
    }
    Ok(TripletPool { triplets, task, seed })
}
