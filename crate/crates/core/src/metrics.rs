//! Detection (EER, DET points) and identification (confusions) metrics.
//!
//! A trial is accepted at threshold `t` when `score >= t`, so
//! `FAR(t) = #{non-targets with score >= t} / #non-targets` and
//! `FRR(t) = #{targets with score < t} / #targets`.

use crate::error::{check_dim, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredTrial {
    pub score: f64,
    /// True for a blacklisted speaker.
    pub is_target: bool,
}

impl ScoredTrial {
    pub fn new(score: f64, is_target: bool) -> Self {
        Self { score, is_target }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetPoint {
    pub threshold: f64,
    pub far: f64,
    pub frr: f64,
}

fn validate(trials: &[ScoredTrial]) -> Result<(usize, usize)> {
    if let Some(t) = trials.iter().find(|t| !t.score.is_finite()) {
        return Err(Error::Data(format!("non-finite trial score {}", t.score)));
    }
    let targets = trials.iter().filter(|t| t.is_target).count();
    let non_targets = trials.len() - targets;
    if targets == 0 || non_targets == 0 {
        return Err(Error::Data(
            "detection metrics need at least one target and one non-target trial".into(),
        ));
    }
    Ok((targets, non_targets))
}

/// Operating points at `-inf`, every distinct score (ascending) and `+inf`.
pub fn det_points(trials: &[ScoredTrial]) -> Result<Vec<DetPoint>> {
    let (n_tgt, n_non) = validate(trials)?;
    let mut sorted: Vec<ScoredTrial> = trials.to_vec();
    sorted.sort_by(|a, b| a.score.total_cmp(&b.score));

    let mut points = Vec::with_capacity(sorted.len() + 2);
    points.push(DetPoint {
        threshold: f64::NEG_INFINITY,
        far: 1.0,
        frr: 0.0,
    });
    // trials strictly below the current threshold
    let (mut tgt_below, mut non_below) = (0usize, 0usize);
    let mut i = 0;
    while i < sorted.len() {
        let threshold = sorted[i].score;
        points.push(DetPoint {
            threshold,
            far: (n_non - non_below) as f64 / n_non as f64,
            frr: tgt_below as f64 / n_tgt as f64,
        });
        while i < sorted.len() && sorted[i].score == threshold {
            if sorted[i].is_target {
                tgt_below += 1;
            } else {
                non_below += 1;
            }
            i += 1;
        }
    }
    points.push(DetPoint {
        threshold: f64::INFINITY,
        far: 0.0,
        frr: 1.0,
    });
    Ok(points)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EerResult {
    pub eer: f64,
    pub threshold: f64,
    /// The two sweep points bracketing the crossing (equal when the curves
    /// meet exactly at a sweep point).
    pub lower: DetPoint,
    pub upper: DetPoint,
}

/// Equal error rate, interpolating linearly between the two sweep points
/// that bracket the FAR = FRR crossing.
pub fn eer(trials: &[ScoredTrial]) -> Result<EerResult> {
    eer_from_points(&det_points(trials)?)
}

pub fn eer_from_points(points: &[DetPoint]) -> Result<EerResult> {
    // FAR - FRR is non-increasing along the sweep, from 1 to -1
    for (k, p) in points.iter().enumerate() {
        let diff = p.far - p.frr;
        if diff == 0.0 {
            return Ok(EerResult {
                eer: p.far,
                threshold: p.threshold,
                lower: *p,
                upper: *p,
            });
        }
        if diff < 0.0 {
            let lo = points[k - 1];
            let d_lo = lo.far - lo.frr;
            let lambda = d_lo / (d_lo - diff);
            let eer = lo.far + lambda * (p.far - lo.far);
            let threshold = match (lo.threshold.is_finite(), p.threshold.is_finite()) {
                (true, true) => lo.threshold + lambda * (p.threshold - lo.threshold),
                (true, false) => lo.threshold,
                (false, _) => p.threshold,
            };
            return Ok(EerResult {
                eer,
                threshold,
                lower: lo,
                upper: *p,
            });
        }
    }
    Err(Error::Data("DET sweep never crosses".into()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfusionCount {
    pub confusions: usize,
    pub total: usize,
    pub top1: f64,
}

impl ConfusionCount {
    pub fn correct(&self) -> usize {
        self.total - self.confusions
    }
}

pub fn count_confusions<T: PartialEq>(predictions: &[T], truth: &[T]) -> Result<ConfusionCount> {
    check_dim(truth.len(), predictions.len())?;
    if truth.is_empty() {
        return Err(Error::Data("no identification trials".into()));
    }
    let confusions = predictions.iter().zip(truth).filter(|(p, t)| p != t).count();
    Ok(ConfusionCount {
        confusions,
        total: truth.len(),
        top1: 1.0 - confusions as f64 / truth.len() as f64,
    })
}
