//! Reference implementations used to check the library. Each one is written
//! from the textbook definition and shares no code with the crate.

#![allow(dead_code)]

use std::collections::BTreeMap;

/// `ReLU(W x + b)`, optionally scaled to unit length.
pub fn forward(w: &[f64], b: &[f64], x: &[f64], normalize: bool) -> Vec<f64> {
    let dim_in = x.len();
    let mut y: Vec<f64> = b
        .iter()
        .enumerate()
        .map(|(r, bias)| {
            let mut z = *bias;
            for j in 0..dim_in {
                z += w[r * dim_in + j] * x[j];
            }
            z.max(0.0)
        })
        .collect();
    if normalize {
        let n = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n > 0.0 {
            y.iter_mut().for_each(|v| *v /= n);
        }
    }
    y
}

pub fn pre_activations(w: &[f64], b: &[f64], x: &[f64]) -> Vec<f64> {
    let dim_in = x.len();
    b.iter()
        .enumerate()
        .map(|(r, bias)| bias + (0..dim_in).map(|j| w[r * dim_in + j] * x[j]).sum::<f64>())
        .collect()
}

fn dist(u: &[f64], v: &[f64], squared: bool) -> f64 {
    let sq: f64 = u.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum();
    if squared {
        sq
    } else {
        sq.sqrt()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LossSpec {
    pub margin: f64,
    pub squared: bool,
    pub normalize: bool,
}

pub fn triplet_loss(w: &[f64], b: &[f64], xs: [&[f64]; 3], spec: LossSpec) -> f64 {
    let [a, p, n] = xs.map(|x| forward(w, b, x, spec.normalize));
    (dist(&a, &p, spec.squared) - dist(&a, &n, spec.squared) + spec.margin).max(0.0)
}

/// Signed distance term `D(a,p) - D(a,n)` before the margin and hinge.
pub fn distance_gap(w: &[f64], b: &[f64], xs: [&[f64]; 3], squared: bool, normalize: bool) -> f64 {
    let [a, p, n] = xs.map(|x| forward(w, b, x, normalize));
    dist(&a, &p, squared) - dist(&a, &n, squared)
}

/// Central finite-difference gradient of the triplet loss with respect to
/// every weight and bias.
pub fn fd_gradient(w: &[f64], b: &[f64], xs: [&[f64]; 3], spec: LossSpec, h: f64) -> (Vec<f64>, Vec<f64>) {
    let mut w = w.to_vec();
    let mut b = b.to_vec();
    let mut gw = vec![0.0; w.len()];
    for i in 0..w.len() {
        let orig = w[i];
        w[i] = orig + h;
        let up = triplet_loss(&w, &b, xs, spec);
        w[i] = orig - h;
        let down = triplet_loss(&w, &b, xs, spec);
        w[i] = orig;
        gw[i] = (up - down) / (2.0 * h);
    }
    let mut gb = vec![0.0; b.len()];
    for i in 0..b.len() {
        let orig = b[i];
        b[i] = orig + h;
        let up = triplet_loss(&w, &b, xs, spec);
        b[i] = orig - h;
        let down = triplet_loss(&w, &b, xs, spec);
        b[i] = orig;
        gb[i] = (up - down) / (2.0 * h);
    }
    (gw, gb)
}

/// `||a - b|| / max(||a||, ||b||, 1e-4)`. The floor sits above the rounding
/// noise of a step-1e-5 difference quotient summed over a few hundred
/// entries, so an exactly vanishing gradient compared with that noise does
/// not read as a mismatch.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm(&diff) / norm(a).max(norm(b)).max(1e-4)
}

/// EER from a brute-force sweep over `grid` thresholds, accepting
/// `score >= t`. Between the last grid point with FAR > FRR and the first
/// with FAR <= FRR the crossing is interpolated linearly; sweep states that
/// leave FAR and FRR unchanged are merged.
pub fn sweep_eer(scores: &[(f64, bool)], grid: impl Iterator<Item = f64>) -> f64 {
    let mut sorted: Vec<(f64, bool)> = scores.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n_tgt = sorted.iter().filter(|s| s.1).count() as f64;
    let n_non = sorted.len() as f64 - n_tgt;
    let (mut tgt_below, mut non_below) = (0usize, 0usize);
    let mut i = 0;
    let mut prev = (1.0, 0.0);
    for t in grid {
        while i < sorted.len() && sorted[i].0 < t {
            if sorted[i].1 {
                tgt_below += 1;
            } else {
                non_below += 1;
            }
            i += 1;
        }
        let far = (n_non - non_below as f64) / n_non;
        let frr = tgt_below as f64 / n_tgt;
        if far - frr <= 0.0 {
            if far == frr {
                return far;
            }
            let (pf, pr) = prev;
            let d0 = pf - pr;
            let d1 = far - frr;
            let s = d0 / (d0 - d1);
            return pf + s * (far - pf);
        }
        prev = (far, frr);
    }
    // past every score: FAR = 0, FRR = 1
    let (pf, pr) = prev;
    let d0 = pf - pr;
    let s = d0 / (d0 + 1.0);
    pf + s * (0.0 - pf)
}

#[derive(Debug, Clone, PartialEq)]
pub struct KnnAnswer {
    pub label: usize,
    pub neighbors: Vec<usize>,
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KnnRule {
    Weighted,
    Plain,
    NearestBl,
}

/// Full sort of every reference by `(distance, index)`, then a majority
/// vote over the first `k`. Vote ties go to the label whose nearest member
/// is closest, then to the lowest label.
pub fn knn_brute(
    refs: &[Vec<f64>],
    labels: &[usize],
    blacklisted: &[bool],
    k: usize,
    rule: KnnRule,
    x: &[f64],
) -> KnnAnswer {
    let mut all: Vec<(f64, usize)> = refs.iter().enumerate().map(|(i, r)| (dist(r, x, false), i)).collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let top = &all[..k.min(all.len())];
    let mut votes: BTreeMap<usize, (usize, f64)> = BTreeMap::new(); // label -> (count, nearest distance)
    for &(d, i) in top {
        let e = votes.entry(labels[i]).or_insert((0, d));
        e.0 += 1;
    }
    let best_count = votes.values().map(|v| v.0).max().unwrap();
    let mut tied: Vec<(f64, usize)> = votes.iter().filter(|(_, v)| v.0 == best_count).map(|(l, v)| (v.1, *l)).collect();
    tied.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let label = tied[0].1;
    let score = match rule {
        KnnRule::Weighted => {
            let w: Vec<f64> = top.iter().map(|(d, _)| 1.0 / (d + 1e-12)).collect();
            let bl: f64 = top.iter().zip(&w).filter(|((_, i), _)| blacklisted[*i]).map(|(_, w)| w).sum();
            bl / w.iter().sum::<f64>()
        }
        KnnRule::Plain => top.iter().filter(|(_, i)| blacklisted[*i]).count() as f64 / top.len() as f64,
        KnnRule::NearestBl => -all
            .iter()
            .find(|(_, i)| blacklisted[*i])
            .map(|(d, _)| *d)
            .unwrap_or(f64::INFINITY),
    };
    KnnAnswer {
        label,
        neighbors: top.iter().map(|(_, i)| *i).collect(),
        score,
    }
}

pub fn rbf(u: &[f64], v: &[f64], gamma: f64) -> f64 {
    (-gamma * dist(u, v, true)).exp()
}

/// Soft-margin SVM dual solved by an augmented Lagrangian over the equality
/// constraint with exact projected coordinate descent inside each round.
/// Returns `(alpha, bias)`.
pub fn svm_dual_reference(x: &[Vec<f64>], y: &[f64], c: f64, gamma: f64) -> (Vec<f64>, f64) {
    let n = x.len();
    let k: Vec<Vec<f64>> = x.iter().map(|a| x.iter().map(|b| rbf(a, b, gamma)).collect()).collect();
    let q = |i: usize, j: usize| y[i] * y[j] * k[i][j];
    let mut alpha = vec![0.0; n];
    let mut lambda = 0.0;
    let rho = 10.0;
    for _outer in 0..400 {
        for _sweep in 0..2000 {
            let mut max_step: f64 = 0.0;
            let ya: f64 = alpha.iter().zip(y).map(|(a, yi)| a * yi).sum();
            let mut ya = ya;
            for i in 0..n {
                // f(a) = 1/2 a'Qa - 1'a + lambda y'a + rho/2 (y'a)^2
                let grad: f64 = (0..n).map(|j| q(i, j) * alpha[j]).sum::<f64>() - 1.0 + lambda * y[i] + rho * ya * y[i];
                let curv = q(i, i) + rho;
                let new = (alpha[i] - grad / curv).clamp(0.0, c);
                let step = new - alpha[i];
                ya += step * y[i];
                alpha[i] = new;
                max_step = max_step.max(step.abs());
            }
            if max_step < 1e-14 {
                break;
            }
        }
        let ya: f64 = alpha.iter().zip(y).map(|(a, yi)| a * yi).sum();
        lambda += rho * ya;
        if ya.abs() < 1e-13 {
            break;
        }
    }
    // bias from the KKT conditions: y_i f(x_i) = 1 on free vectors
    let f_no_bias = |i: usize| (0..n).map(|j| alpha[j] * y[j] * k[j][i]).sum::<f64>();
    let eps = 1e-9 * c;
    let free: Vec<usize> = (0..n).filter(|&i| alpha[i] > eps && alpha[i] < c - eps).collect();
    let bias = if free.is_empty() {
        // any b in [lo, hi] satisfies KKT; take the middle
        let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
        for i in 0..n {
            let r = y[i] - f_no_bias(i);
            let at_upper = alpha[i] >= c - eps;
            // alpha = 0 needs y f >= 1, alpha = C needs y f <= 1
            if (y[i] > 0.0) != at_upper {
                lo = lo.max(r);
            } else {
                hi = hi.min(r);
            }
        }
        (lo + hi) / 2.0
    } else {
        free.iter().map(|&i| y[i] - f_no_bias(i)).sum::<f64>() / free.len() as f64
    };
    (alpha, bias)
}

pub fn svm_decision(x: &[Vec<f64>], y: &[f64], alpha: &[f64], bias: f64, gamma: f64, q: &[f64]) -> f64 {
    x.iter().zip(y).zip(alpha).map(|((xi, yi), a)| a * yi * rbf(xi, q, gamma)).sum::<f64>() + bias
}
