//! Seeded Gaussian-cluster datasets that mimic the shape of the i-vector
//! corpus at desk scale.
//!
//! Each speaker owns a mean drawn from `N(0, class_spread^2 I)`; its samples
//! are `mean + N(0, within_spread^2 I)`. Speakers `0..floor(bg_fraction * n)`
//! are background (`bg_` ids), the rest are blacklisted (`bl_` ids).

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::dataset::{Dataset, IVector, Partition};
use crate::error::{Error, Result};
use crate::rng::{self, TAG_SYNTH_MEANS, TAG_SYNTH_NOISE};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthParams {
    pub n_speakers: usize,
    pub samples_per_speaker: usize,
    pub dim: usize,
    pub class_spread: f64,
    pub within_spread: f64,
    pub bg_fraction: f64,
    pub seed: u64,
}

/// Speaker means shared by every partition sampled from the same corpus.
#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    dim: usize,
    within_spread: f64,
    class_spread: f64,
    seed: u64,
    n_background: usize,
    means: Vec<Vec<f64>>,
}

fn gaussian(rng: &mut impl Rng, dim: usize, scale: f64) -> Vec<f64> {
    (0..dim)
        .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

impl SyntheticCorpus {
    pub fn new(
        n_speakers: usize,
        dim: usize,
        class_spread: f64,
        within_spread: f64,
        bg_fraction: f64,
        seed: u64,
    ) -> Result<Self> {
        if n_speakers == 0 || dim == 0 {
            return Err(Error::Config("synthetic corpus needs at least one speaker and dimension".into()));
        }
        if !(class_spread.is_finite() && class_spread >= 0.0 && within_spread.is_finite() && within_spread >= 0.0) {
            return Err(Error::Config("synthetic spreads must be finite and non-negative".into()));
        }
        if !(0.0..=1.0).contains(&bg_fraction) {
            return Err(Error::Config(format!("bg_fraction {bg_fraction} outside [0, 1]")));
        }
        let mut rng = rng::stream(seed, &[TAG_SYNTH_MEANS]);
        let means = (0..n_speakers).map(|_| gaussian(&mut rng, dim, class_spread)).collect();
        Ok(Self {
            dim,
            within_spread,
            class_spread,
            seed,
            n_background: (bg_fraction * n_speakers as f64).floor() as usize,
            means,
        })
    }

    pub fn n_speakers(&self) -> usize {
        self.means.len()
    }

    pub fn n_background(&self) -> usize {
        self.n_background
    }

    pub fn speaker_id(&self, i: usize) -> String {
        if i < self.n_background {
            format!("bg_{i:05}")
        } else {
            format!("bl_{i:05}")
        }
    }

    pub fn mean(&self, i: usize) -> &[f64] {
        &self.means[i]
    }

    /// Draws `samples_per_speaker` vectors for every speaker matching
    /// `include`. `stream` selects an independent noise stream, so partitions
    /// drawn with different streams share speakers but not samples.
    pub fn sample(
        &self,
        samples_per_speaker: usize,
        stream: u64,
        include: impl Fn(bool) -> bool,
    ) -> Dataset {
        let mut rng = rng::stream(self.seed, &[TAG_SYNTH_NOISE, stream]);
        let mut vectors = Vec::with_capacity(self.means.len() * samples_per_speaker);
        for (i, mean) in self.means.iter().enumerate() {
            let blacklisted = i >= self.n_background;
            if !include(blacklisted) {
                continue;
            }
            let speaker = self.speaker_id(i);
            for k in 0..samples_per_speaker {
                let noise = gaussian(&mut rng, self.dim, self.within_spread);
                let values = mean.iter().zip(noise).map(|(m, e)| m + e).collect();
                vectors.push(IVector {
                    utterance: format!("{speaker}_s{stream}_{k}"),
                    speaker: speaker.clone(),
                    blacklisted,
                    values,
                });
            }
        }
        Dataset::new(self.dim, vectors).expect("generated vectors are well-formed")
    }

    /// Background speakers that do not belong to this corpus, for open-set
    /// evaluation partitions.
    pub fn unseen_background(&self, n_speakers: usize, samples_per_speaker: usize, stream: u64) -> Dataset {
        let mut mean_rng = rng::stream(self.seed, &[TAG_SYNTH_MEANS, stream]);
        let mut noise_rng = rng::stream(self.seed, &[TAG_SYNTH_NOISE, stream, 1]);
        let mut vectors = Vec::new();
        for i in 0..n_speakers {
            let mean = gaussian(&mut mean_rng, self.dim, self.class_spread);
            let speaker = format!("bgx{stream}_{i:05}");
            for k in 0..samples_per_speaker {
                let noise = gaussian(&mut noise_rng, self.dim, self.within_spread);
                vectors.push(IVector {
                    utterance: format!("{speaker}_{k}"),
                    speaker: speaker.clone(),
                    blacklisted: false,
                    values: mean.iter().zip(noise).map(|(m, e)| m + e).collect(),
                });
            }
        }
        Dataset::new(self.dim, vectors).expect("generated vectors are well-formed")
    }
}

pub fn synth_generate(params: &SynthParams) -> Result<Dataset> {
    let corpus = SyntheticCorpus::new(
        params.n_speakers,
        params.dim,
        params.class_spread,
        params.within_spread,
        params.bg_fraction,
        params.seed,
    )?;
    Ok(corpus.sample(params.samples_per_speaker, 0, |_| true))
}

/// Training, development and test partitions drawn from one corpus.
///
/// Training holds `samples_per_speaker` vectors of every speaker. The two
/// evaluation partitions hold `eval_samples` fresh vectors of every
/// blacklisted speaker plus as many unseen background speakers as the corpus
/// has background speakers.
pub fn synth_partitions(params: &SynthParams, eval_samples: usize) -> Result<BTreeMap<Partition, Dataset>> {
    let corpus = SyntheticCorpus::new(
        params.n_speakers,
        params.dim,
        params.class_spread,
        params.within_spread,
        params.bg_fraction,
        params.seed,
    )?;
    let mut out = BTreeMap::new();
    out.insert(Partition::Training, corpus.sample(params.samples_per_speaker, 0, |_| true));
    for (stream, part) in [(1, Partition::Development), (2, Partition::Test)] {
        let bl = corpus.sample(eval_samples, stream, |b| b);
        let bg = corpus.unseen_background(corpus.n_background(), eval_samples, stream);
        out.insert(part, bl.concat(&bg)?);
    }
    Ok(out)
}
