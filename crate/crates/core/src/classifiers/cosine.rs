//! Cosine scoring against per-speaker mean directions (the competition
//! baseline scorer).

use std::collections::BTreeSet;
use std::io::{BufRead, Write};

use crate::error::{check_dim, Error, Result};
use crate::linalg::{self, normalized};
use crate::textio::{expect_marker, keyed, lines, parse_row, write_row};

#[derive(Debug, Clone, PartialEq)]
pub struct CosineModel {
    dim: usize,
    classes: Vec<usize>,
    /// Unit-length mean direction per class, in `classes` order.
    means: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CosineScore {
    /// Position of the best class in [`CosineModel::classes`].
    pub best_index: usize,
    pub best_class: usize,
    pub score: f64,
    pub all_scores: Vec<f64>,
}

impl CosineScore {
    /// Detection decision for a threshold (strictly greater accepts).
    pub fn accepts(&self, threshold: f64) -> bool {
        self.score > threshold
    }
}

impl CosineModel {
    /// One mean per distinct label, ordered by label.
    pub fn build<V: AsRef<[f64]>>(vectors: &[V], labels: &[usize]) -> Result<Self> {
        let classes: Vec<usize> = labels.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
        Self::build_with_classes(vectors, labels, &classes)
    }

    /// One mean per entry of `classes`, in that order. Vectors whose label is
    /// not listed are ignored; a listed class without vectors is an error.
    pub fn build_with_classes<V: AsRef<[f64]>>(vectors: &[V], labels: &[usize], classes: &[usize]) -> Result<Self> {
        check_dim(vectors.len(), labels.len())?;
        let dim = vectors
            .first()
            .map(|v| v.as_ref().len())
            .ok_or_else(|| Error::Model("cosine model needs at least one vector".into()))?;
        let slot: std::collections::HashMap<usize, usize> =
            classes.iter().enumerate().map(|(i, &c)| (c, i)).collect();
        if slot.len() != classes.len() {
            return Err(Error::Model("duplicate class in cosine model".into()));
        }
        let mut sums = vec![vec![0.0; dim]; classes.len()];
        let mut counts = vec![0usize; classes.len()];
        for (v, label) in vectors.iter().zip(labels) {
            let v = v.as_ref();
            check_dim(dim, v.len())?;
            if let Some(&s) = slot.get(label) {
                let unit = normalized(v).ok_or_else(|| Error::Model(format!("zero-norm vector for class {label}")))?;
                linalg::axpy(1.0, &unit, &mut sums[s]);
                counts[s] += 1;
            }
        }
        let mut means = Vec::with_capacity(classes.len());
        for ((sum, count), class) in sums.into_iter().zip(counts).zip(classes) {
            if count == 0 {
                return Err(Error::Model(format!("class {class} has no vectors")));
            }
            let mean: Vec<f64> = sum.iter().map(|x| x / count as f64).collect();
            means.push(normalized(&mean).ok_or_else(|| Error::Model(format!("class {class} has a zero mean direction")))?);
        }
        Ok(Self {
            dim,
            classes: classes.to_vec(),
            means,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn classes(&self) -> &[usize] {
        &self.classes
    }

    pub fn means(&self) -> &[Vec<f64>] {
        &self.means
    }

    /// Cosine similarity to every class mean; ties go to the earliest class.
    pub fn score(&self, x: &[f64]) -> Result<CosineScore> {
        check_dim(self.dim, x.len())?;
        let unit = normalized(x).ok_or_else(|| Error::Model("cannot score a zero-norm vector".into()))?;
        let all_scores: Vec<f64> = self.means.iter().map(|m| linalg::dot(&unit, m)).collect();
        let mut best_index = 0;
        for (i, s) in all_scores.iter().enumerate() {
            if *s > all_scores[best_index] {
                best_index = i;
            }
        }
        Ok(CosineScore {
            best_index,
            best_class: self.classes[best_index],
            score: all_scores[best_index],
            all_scores,
        })
    }

    /// ```text
    /// cosine-model 1
    /// dim <d>
    /// classes <n>
    /// <class> <d values>      (n lines)
    /// end
    /// ```
    pub fn write<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "cosine-model 1")?;
        writeln!(out, "dim {}", self.dim)?;
        writeln!(out, "classes {}", self.classes.len())?;
        for (c, m) in self.classes.iter().zip(&self.means) {
            write!(out, "{c} ")?;
            write_row(&mut out, m)?;
        }
        writeln!(out, "end")?;
        out.flush()
    }

    pub fn read<R: BufRead>(source: R) -> Result<Self> {
        let mut next = lines(source);
        expect_marker(next("header")?, "cosine-model 1")?;
        let dim: usize = keyed(next("dim")?, "dim")?;
        let n: usize = keyed(next("classes")?, "classes")?;
        let mut classes = Vec::with_capacity(n);
        let mut means = Vec::with_capacity(n);
        for _ in 0..n {
            let (line, text) = next("class row")?;
            let (class, rest) = text.split_once(' ').ok_or_else(|| Error::Parse {
                line,
                msg: "expected class id and values".into(),
            })?;
            classes.push(class.parse().map_err(|_| Error::Parse {
                line,
                msg: "invalid class id".into(),
            })?);
            means.push(parse_row((line, rest.to_string()), dim)?);
        }
        expect_marker(next("end")?, "end")?;
        Ok(Self { dim, classes, means })
    }
}
