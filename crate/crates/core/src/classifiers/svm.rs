//! One-vs-all soft-margin SVMs with an RBF kernel, trained by SMO.
//!
//! The binary solver follows the usual dual formulation
//!
//! ```text
//! min  1/2 a'Qa - e'a   s.t.  0 <= a_i <= C,  y'a = 0,   Q_ij = y_i y_j K(x_i, x_j)
//! ```
//!
//! with maximal-violating-pair selection using second-order information for
//! the second index, and stops once the KKT gap `m(a) - M(a)` drops below `tol`.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};

use rayon::prelude::*;

use crate::error::{check_dim, Error, Result};
use crate::linalg::squared_distance_unchecked;
use crate::textio::{expect_marker, keyed, lines, parse_row, write_row};

pub const DEFAULT_C: f64 = 1.0;
pub const DEFAULT_TOL: f64 = 1e-3;
pub const DEFAULT_MAX_PASSES: usize = 10_000;
/// Floor for a non-positive curvature along the working pair.
const TAU: f64 = 1e-12;
/// Above this many training points the Gram matrix is not materialized.
const DENSE_GRAM_LIMIT: usize = 8_000;

pub fn rbf_kernel(u: &[f64], v: &[f64], gamma: f64) -> Result<f64> {
    check_dim(u.len(), v.len())?;
    Ok((-gamma * squared_distance_unchecked(u, v)).exp())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvmParams {
    pub c: f64,
    /// `None` means `1 / dim`.
    pub gamma: Option<f64>,
    pub tol: f64,
    /// Iteration budget, in units of the training-set size.
    pub max_passes: usize,
}

impl Default for SvmParams {
    fn default() -> Self {
        Self {
            c: DEFAULT_C,
            gamma: None,
            tol: DEFAULT_TOL,
            max_passes: DEFAULT_MAX_PASSES,
        }
    }
}

impl SvmParams {
    pub fn gamma_for(&self, dim: usize) -> f64 {
        self.gamma.unwrap_or(1.0 / dim as f64)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v > 0.0 && v.is_finite();
        if !ok(self.c) || !ok(self.tol) || !self.gamma.is_none_or(ok) || self.max_passes == 0 {
            return Err(Error::Config("SVM C, gamma, tol and max_passes must be positive".into()));
        }
        Ok(())
    }
}

/// Kernel rows over a fixed training set.
pub enum Gram<'a> {
    Dense { n: usize, values: Vec<f64> },
    Lazy { points: &'a [&'a [f64]], gamma: f64 },
}

impl<'a> Gram<'a> {
    pub fn new(points: &'a [&'a [f64]], gamma: f64) -> Self {
        let n = points.len();
        if n > DENSE_GRAM_LIMIT {
            return Gram::Lazy { points, gamma };
        }
        let mut values = vec![0.0; n * n];
        values.par_chunks_mut(n.max(1)).enumerate().for_each(|(i, row)| {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (-gamma * squared_distance_unchecked(points[i], points[j])).exp();
            }
        });
        Gram::Dense { n, values }
    }

    pub fn len(&self) -> usize {
        match self {
            Gram::Dense { n, .. } => *n,
            Gram::Lazy { points, .. } => points.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn row<'s>(&'s self, i: usize, buf: &'s mut Vec<f64>) -> &'s [f64] {
        match self {
            Gram::Dense { n, values } => &values[i * n..(i + 1) * n],
            Gram::Lazy { points, gamma } => {
                buf.clear();
                buf.extend(points.iter().map(|p| (-gamma * squared_distance_unchecked(points[i], p)).exp()));
                buf
            }
        }
    }

    fn diag(&self, i: usize) -> f64 {
        match self {
            Gram::Dense { n, values } => values[i * n + i],
            Gram::Lazy { .. } => 1.0,
        }
    }
}

/// Optimal dual variables of one binary problem.
#[derive(Debug, Clone, PartialEq)]
pub struct BinarySolution {
    pub alpha: Vec<f64>,
    pub bias: f64,
    pub iterations: usize,
}

/// Solves one binary dual. `y` holds +1/-1 labels; `id` names the problem in
/// errors.
pub fn solve_binary(gram: &Gram, y: &[f64], c: f64, tol: f64, max_passes: usize, id: usize) -> Result<BinarySolution> {
    let n = y.len();
    check_dim(gram.len(), n)?;
    let max_iter = max_passes.saturating_mul(n.max(1));
    let mut alpha = vec![0.0; n];
    // G = Q alpha - e
    let mut grad = vec![-1.0; n];
    let (mut buf_i, mut buf_j) = (Vec::new(), Vec::new());
    let in_up = |a: f64, yt: f64| (yt > 0.0 && a < c) || (yt < 0.0 && a > 0.0);
    let in_low = |a: f64, yt: f64| (yt > 0.0 && a > 0.0) || (yt < 0.0 && a < c);

    let mut iterations = 0;
    loop {
        let mut gmax = f64::NEG_INFINITY;
        let mut i = usize::MAX;
        for t in 0..n {
            if in_up(alpha[t], y[t]) && -y[t] * grad[t] > gmax {
                gmax = -y[t] * grad[t];
                i = t;
            }
        }
        if i == usize::MAX {
            break;
        }
        let k_i = gram.row(i, &mut buf_i);
        let mut gmax2 = f64::NEG_INFINITY;
        let mut j = usize::MAX;
        let mut best = f64::INFINITY;
        for t in 0..n {
            if !in_low(alpha[t], y[t]) {
                continue;
            }
            let yg = y[t] * grad[t];
            if yg > gmax2 {
                gmax2 = yg;
            }
            let diff = gmax + yg;
            if diff > 0.0 {
                let quad = gram.diag(i) + gram.diag(t) - 2.0 * k_i[t];
                let obj = -(diff * diff) / if quad > 0.0 { quad } else { TAU };
                if obj < best {
                    best = obj;
                    j = t;
                }
            }
        }
        if gmax + gmax2 < tol || j == usize::MAX {
            break;
        }
        if iterations >= max_iter {
            return Err(Error::SvmNonConvergence { class: id, iterations });
        }
        iterations += 1;

        let k_ij = k_i[j];
        let quad = {
            let q = gram.diag(i) + gram.diag(j) - 2.0 * k_ij;
            if q > 0.0 {
                q
            } else {
                TAU
            }
        };
        let (old_i, old_j) = (alpha[i], alpha[j]);
        let (mut ai, mut aj) = (old_i, old_j);
        if y[i] != y[j] {
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = ai - aj;
            ai += delta;
            aj += delta;
            if diff > 0.0 {
                if aj < 0.0 {
                    aj = 0.0;
                    ai = diff;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = -diff;
            }
            if diff > 0.0 {
                if ai > c {
                    ai = c;
                    aj = c - diff;
                }
            } else if aj > c {
                aj = c;
                ai = c + diff;
            }
        } else {
            let delta = (grad[i] - grad[j]) / quad;
            let sum = ai + aj;
            ai -= delta;
            aj += delta;
            if sum > c {
                if ai > c {
                    ai = c;
                    aj = sum - c;
                }
            } else if aj < 0.0 {
                aj = 0.0;
                ai = sum;
            }
            if sum > c {
                if aj > c {
                    aj = c;
                    ai = sum - c;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = sum;
            }
        }
        alpha[i] = ai;
        alpha[j] = aj;
        let (di, dj) = (ai - old_i, aj - old_j);
        let k_i = gram.row(i, &mut buf_i);
        let k_j = gram.row(j, &mut buf_j);
        for t in 0..n {
            grad[t] += y[t] * (y[i] * k_i[t] * di + y[j] * k_j[t] * dj);
        }
    }

    // bias from free vectors, or the midpoint of the feasible interval
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut free_sum, mut free) = (0.0, 0usize);
    for t in 0..n {
        let yg = y[t] * grad[t];
        if alpha[t] >= c {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free += 1;
            free_sum += yg;
        }
    }
    let rho = if free > 0 { free_sum / free as f64 } else { (ub + lb) / 2.0 };
    Ok(BinarySolution {
        alpha,
        bias: -rho,
        iterations,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SupportTerm {
    /// Row in [`SvmEnsemble::support_vectors`].
    pub index: usize,
    pub alpha: f64,
    /// +1 for the class, -1 for the rest.
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BinarySvm {
    pub class: usize,
    pub bias: f64,
    pub terms: Vec<SupportTerm>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvmEnsemble {
    dim: usize,
    gamma: f64,
    c: f64,
    support_vectors: Vec<Vec<f64>>,
    models: Vec<BinarySvm>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvmPrediction {
    pub label: usize,
    /// Largest decision value.
    pub task1_score: f64,
    pub decision_values: Vec<f64>,
}

impl SvmEnsemble {
    /// Trains one binary SVM per distinct `Some` target, in increasing class
    /// order. `None` targets are negatives in every subproblem.
    pub fn train<V: AsRef<[f64]> + Sync>(vectors: &[V], targets: &[Option<usize>], params: &SvmParams) -> Result<Self> {
        params.validate()?;
        check_dim(vectors.len(), targets.len())?;
        let dim = vectors
            .first()
            .map(|v| v.as_ref().len())
            .ok_or_else(|| Error::Model("SVM needs training vectors".into()))?;
        for v in vectors {
            check_dim(dim, v.as_ref().len())?;
        }
        let classes: Vec<usize> = targets.iter().flatten().copied().collect::<BTreeSet<_>>().into_iter().collect();
        if classes.is_empty() {
            return Err(Error::Model("SVM needs at least one class".into()));
        }
        for &class in &classes {
            if targets.iter().all(|t| *t == Some(class)) {
                return Err(Error::Model(format!("one-vs-all problem for class {class} has no negatives")));
            }
        }
        let gamma = params.gamma_for(dim);
        let points: Vec<&[f64]> = vectors.iter().map(|v| v.as_ref()).collect();
        let gram = Gram::new(&points, gamma);
        let solutions: Vec<(usize, BinarySolution, Vec<f64>)> = classes
            .par_iter()
            .map(|&class| {
                let y: Vec<f64> = targets.iter().map(|t| if *t == Some(class) { 1.0 } else { -1.0 }).collect();
                solve_binary(&gram, &y, params.c, params.tol, params.max_passes, class).map(|s| (class, s, y))
            })
            .collect::<Result<_>>()?;

        let used: BTreeSet<usize> = solutions
            .iter()
            .flat_map(|(_, s, _)| s.alpha.iter().enumerate().filter(|(_, a)| **a > 0.0).map(|(i, _)| i))
            .collect();
        let row_of: BTreeMap<usize, usize> = used.iter().enumerate().map(|(r, &i)| (i, r)).collect();
        let support_vectors = used.iter().map(|&i| points[i].to_vec()).collect();
        let models = solutions
            .into_iter()
            .map(|(class, s, y)| BinarySvm {
                class,
                bias: s.bias,
                terms: s
                    .alpha
                    .iter()
                    .enumerate()
                    .filter(|(_, a)| **a > 0.0)
                    .map(|(i, &alpha)| SupportTerm {
                        index: row_of[&i],
                        alpha,
                        y: y[i],
                    })
                    .collect(),
            })
            .collect();
        Ok(Self {
            dim,
            gamma,
            c: params.c,
            support_vectors,
            models,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn classes(&self) -> Vec<usize> {
        self.models.iter().map(|m| m.class).collect()
    }

    pub fn models(&self) -> &[BinarySvm] {
        &self.models
    }

    pub fn support_vectors(&self) -> &[Vec<f64>] {
        &self.support_vectors
    }

    /// A single class always wins; such an ensemble only ranks inputs.
    pub fn is_degenerate(&self) -> bool {
        self.models.len() == 1
    }

    pub fn decision_values(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim, x.len())?;
        if self.models.is_empty() {
            return Err(Error::Model("empty SVM ensemble".into()));
        }
        let k: Vec<f64> = self
            .support_vectors
            .iter()
            .map(|s| (-self.gamma * squared_distance_unchecked(s, x)).exp())
            .collect();
        Ok(self
            .models
            .iter()
            .map(|m| m.terms.iter().map(|t| t.alpha * t.y * k[t.index]).sum::<f64>() + m.bias)
            .collect())
    }

    /// Class with the largest decision value; ties go to the lowest class.
    pub fn predict(&self, x: &[f64]) -> Result<SvmPrediction> {
        let decision_values = self.decision_values(x)?;
        let mut best = 0;
        for (i, v) in decision_values.iter().enumerate() {
            if *v > decision_values[best] {
                best = i;
            }
        }
        Ok(SvmPrediction {
            label: self.models[best].class,
            task1_score: decision_values[best],
            decision_values,
        })
    }

    /// ```text
    /// svm-model 1
    /// dim <d>
    /// gamma <g>
    /// C <c>
    /// support <m>
    /// <d values>                        (m lines)
    /// classes <k>
    /// class <id> bias <b> terms <t>     (then t lines: <row> <alpha> <y>)
    /// end
    /// ```
    pub fn write<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "svm-model 1")?;
        writeln!(out, "dim {}", self.dim)?;
        writeln!(out, "gamma {}", self.gamma)?;
        writeln!(out, "C {}", self.c)?;
        writeln!(out, "support {}", self.support_vectors.len())?;
        for s in &self.support_vectors {
            write_row(&mut out, s)?;
        }
        writeln!(out, "classes {}", self.models.len())?;
        for m in &self.models {
            writeln!(out, "class {} bias {} terms {}", m.class, m.bias, m.terms.len())?;
            for t in &m.terms {
                writeln!(out, "{} {} {}", t.index, t.alpha, t.y)?;
            }
        }
        writeln!(out, "end")?;
        out.flush()
    }

    pub fn read<R: BufRead>(source: R) -> Result<Self> {
        let mut next = lines(source);
        expect_marker(next("header")?, "svm-model 1")?;
        let dim: usize = keyed(next("dim")?, "dim")?;
        let gamma: f64 = keyed(next("gamma")?, "gamma")?;
        let c: f64 = keyed(next("C")?, "C")?;
        let m: usize = keyed(next("support")?, "support")?;
        let support_vectors = (0..m).map(|_| parse_row(next("support vector")?, dim)).collect::<Result<Vec<_>>>()?;
        let k: usize = keyed(next("classes")?, "classes")?;
        let mut models = Vec::with_capacity(k);
        for _ in 0..k {
            let (line, text) = next("class header")?;
            let f: Vec<&str> = text.split_whitespace().collect();
            let bad = || Error::Parse {
                line,
                msg: "expected `class <id> bias <b> terms <t>`".into(),
            };
            if f.len() != 6 || f[0] != "class" || f[2] != "bias" || f[4] != "terms" {
                return Err(bad());
            }
            let class: usize = f[1].parse().map_err(|_| bad())?;
            let bias: f64 = f[3].parse().map_err(|_| bad())?;
            let t: usize = f[5].parse().map_err(|_| bad())?;
            let mut terms = Vec::with_capacity(t);
            for _ in 0..t {
                let (line, text) = next("support term")?;
                let v = parse_row((line, text), 3)?;
                let index = v[0] as usize;
                if index >= m || v[0] != index as f64 {
                    return Err(Error::Parse {
                        line,
                        msg: "support row out of range".into(),
                    });
                }
                terms.push(SupportTerm {
                    index,
                    alpha: v[1],
                    y: v[2],
                });
            }
            models.push(BinarySvm { class, bias, terms });
        }
        expect_marker(next("end")?, "end")?;
        Ok(Self {
            dim,
            gamma,
            c,
            support_vectors,
            models,
        })
    }
}
