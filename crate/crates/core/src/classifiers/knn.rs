//! Exact k-nearest-neighbour classification by linear scan.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use crate::error::{check_dim, Error, Result};
use crate::linalg::squared_distance_unchecked;
use crate::textio::{expect_marker, keyed, lines, parse_row, write_row};

pub const DEFAULT_K: usize = 3;
const WEIGHT_FLOOR: f64 = 1e-12;

/// How a continuous blacklist score is derived from the neighbourhood.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ScoreRule {
    /// Share of inverse-distance weight held by blacklisted neighbours.
    #[default]
    WeightedVote,
    /// Share of the k neighbours that are blacklisted.
    PlainVote,
    /// Negated distance to the nearest blacklisted reference.
    NegNearestBlDistance,
}

impl fmt::Display for ScoreRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScoreRule::WeightedVote => "weighted_vote",
            ScoreRule::PlainVote => "plain_vote",
            ScoreRule::NegNearestBlDistance => "neg_nearest_bl_distance",
        })
    }
}

impl FromStr for ScoreRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "weighted_vote" => Ok(ScoreRule::WeightedVote),
            "plain_vote" => Ok(ScoreRule::PlainVote),
            "neg_nearest_bl_distance" => Ok(ScoreRule::NegNearestBlDistance),
            other => Err(Error::Config(format!("unknown knn score rule {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KnnModel {
    dim: usize,
    k: usize,
    rule: ScoreRule,
    refs: Vec<Vec<f64>>,
    labels: Vec<usize>,
    blacklisted: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KnnPrediction {
    pub label: usize,
    /// Blacklist score, higher is more blacklist-like.
    pub task1_score: f64,
    /// `(reference index, distance)` nearest first.
    pub neighbors: Vec<(usize, f64)>,
}

/// Nearest-first order: distance, then reference index.
fn by_distance(a: &(usize, f64), b: &(usize, f64)) -> Ordering {
    a.1.total_cmp(&b.1).then(a.0.cmp(&b.0))
}

impl KnnModel {
    pub fn new(refs: Vec<Vec<f64>>, labels: Vec<usize>, blacklisted: Vec<bool>, k: usize, rule: ScoreRule) -> Result<Self> {
        if refs.is_empty() {
            return Err(Error::Model("knn model needs at least one reference".into()));
        }
        check_dim(refs.len(), labels.len())?;
        check_dim(refs.len(), blacklisted.len())?;
        if k == 0 || k > refs.len() {
            return Err(Error::Model(format!("k = {k} must be in 1..={}", refs.len())));
        }
        let dim = refs[0].len();
        for r in &refs {
            check_dim(dim, r.len())?;
        }
        if rule == ScoreRule::NegNearestBlDistance && !blacklisted.iter().any(|&b| b) {
            return Err(Error::Model("neg_nearest_bl_distance needs a blacklisted reference".into()));
        }
        Ok(Self {
            dim,
            k,
            rule,
            refs,
            labels,
            blacklisted,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.refs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.refs.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn is_blacklisted(&self, i: usize) -> bool {
        self.blacklisted[i]
    }

    pub fn rule(&self) -> ScoreRule {
        self.rule
    }

    /// Euclidean distance of `x` to every reference.
    pub fn distances(&self, x: &[f64]) -> Vec<(usize, f64)> {
        self.refs
            .iter()
            .enumerate()
            .map(|(i, r)| (i, squared_distance_unchecked(r, x).sqrt()))
            .collect()
    }

    /// Majority label of the k nearest references (ties on distance go to the
    /// lower reference index). Vote ties go to the tied label whose nearest
    /// member is closest, then to the lowest label.
    pub fn predict(&self, x: &[f64]) -> Result<KnnPrediction> {
        check_dim(self.dim, x.len())?;
        let mut all = self.distances(x);
        let nearest_bl = match self.rule {
            ScoreRule::NegNearestBlDistance => all
                .iter()
                .filter(|(i, _)| self.blacklisted[*i])
                .map(|&(_, d)| d)
                .fold(f64::INFINITY, f64::min),
            _ => f64::NAN,
        };
        if self.k < all.len() {
            all.select_nth_unstable_by(self.k - 1, by_distance);
            all.truncate(self.k);
        }
        all.sort_unstable_by(by_distance);
        let neighbors = all;

        // label -> (votes, distance of nearest member)
        let mut tally: BTreeMap<usize, (usize, f64)> = BTreeMap::new();
        for &(i, d) in &neighbors {
            let e = tally.entry(self.labels[i]).or_insert((0, d));
            e.0 += 1;
        }
        let label = tally
            .iter()
            .min_by(|(la, (va, da)), (lb, (vb, db))| vb.cmp(va).then(da.total_cmp(db)).then(la.cmp(lb)))
            .map(|(l, _)| *l)
            .expect("k >= 1");

        let task1_score = match self.rule {
            ScoreRule::WeightedVote => {
                let (mut bl, mut total) = (0.0, 0.0);
                for &(i, d) in &neighbors {
                    let w = 1.0 / (d + WEIGHT_FLOOR);
                    total += w;
                    if self.blacklisted[i] {
                        bl += w;
                    }
                }
                bl / total
            }
            ScoreRule::PlainVote => {
                neighbors.iter().filter(|(i, _)| self.blacklisted[*i]).count() as f64 / neighbors.len() as f64
            }
            ScoreRule::NegNearestBlDistance => -nearest_bl,
        };
        Ok(KnnPrediction {
            label,
            task1_score,
            neighbors,
        })
    }

    /// ```text
    /// knn-model 1
    /// dim <d>
    /// k <k>
    /// score_rule <rule>
    /// refs <n>
    /// <label> <0|1 blacklisted> <d values>   (n lines)
    /// end
    /// ```
    pub fn write<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "knn-model 1")?;
        writeln!(out, "dim {}", self.dim)?;
        writeln!(out, "k {}", self.k)?;
        writeln!(out, "score_rule {}", self.rule)?;
        writeln!(out, "refs {}", self.refs.len())?;
        for ((r, l), b) in self.refs.iter().zip(&self.labels).zip(&self.blacklisted) {
            write!(out, "{l} {} ", *b as u8)?;
            write_row(&mut out, r)?;
        }
        writeln!(out, "end")?;
        out.flush()
    }

    pub fn read<R: BufRead>(source: R) -> Result<Self> {
        let mut next = lines(source);
        expect_marker(next("header")?, "knn-model 1")?;
        let dim: usize = keyed(next("dim")?, "dim")?;
        let k: usize = keyed(next("k")?, "k")?;
        let rule: String = keyed(next("score_rule")?, "score_rule")?;
        let rule: ScoreRule = rule.parse()?;
        let n: usize = keyed(next("refs")?, "refs")?;
        let (mut refs, mut labels, mut blacklisted) = (Vec::new(), Vec::new(), Vec::new());
        for _ in 0..n {
            let (line, text) = next("reference row")?;
            let bad = |msg: &str| Error::Parse { line, msg: msg.into() };
            let mut parts = text.splitn(3, ' ');
            labels.push(parts.next().and_then(|s| s.parse().ok()).ok_or_else(|| bad("invalid label"))?);
            blacklisted.push(match parts.next() {
                Some("1") => true,
                Some("0") => false,
                _ => return Err(bad("invalid blacklist flag")),
            });
            refs.push(parse_row((line, parts.next().unwrap_or("").to_string()), dim)?);
        }
        expect_marker(next("end")?, "end")?;
        KnnModel::new(refs, labels, blacklisted, k, rule)
    }
}
