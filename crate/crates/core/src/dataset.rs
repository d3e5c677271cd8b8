//! Labeled i-vector collections, the CSV line format, and train/eval splits.
//!
//! Line format (UTF-8, one vector per non-empty line, no header):
//!
//! ```text
//! speaker_id,utterance_id,v1,v2,...,vd
//! ```
//!
//! A speaker is blacklisted when its id starts with the configured prefix
//! (`bl_` by default).

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use crate::error::{Error, Result};

pub const DEFAULT_BLACKLIST_PREFIX: &str = "bl_";
pub const DEFAULT_DIM: usize = 600;

#[derive(Debug, Clone, PartialEq)]
pub struct IVector {
    pub speaker: String,
    pub utterance: String,
    pub blacklisted: bool,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpeakerEntry {
    pub id: String,
    pub blacklisted: bool,
    /// Positions of this speaker's vectors, ascending.
    pub positions: Vec<usize>,
}

/// An immutable, validated set of i-vectors sharing one dimension.
///
/// Speakers are kept in order of first appearance.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    dim: usize,
    vectors: Vec<IVector>,
    speakers: Vec<SpeakerEntry>,
    speaker_of: Vec<usize>,
    lookup: HashMap<String, usize>,
}

impl Dataset {
    pub fn new(dim: usize, vectors: Vec<IVector>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Data("dimension must be positive".into()));
        }
        let mut utterances = HashSet::with_capacity(vectors.len());
        let mut speakers: Vec<SpeakerEntry> = Vec::new();
        let mut lookup: HashMap<String, usize> = HashMap::new();
        let mut speaker_of = Vec::with_capacity(vectors.len());
        for (pos, v) in vectors.iter().enumerate() {
            if v.values.len() != dim {
                return Err(Error::Dimension {
                    expected: dim,
                    got: v.values.len(),
                });
            }
            if v.values.iter().any(|x| !x.is_finite()) {
                return Err(Error::Data(format!(
                    "non-finite value in utterance {}",
                    v.utterance
                )));
            }
            if !utterances.insert(v.utterance.as_str()) {
                return Err(Error::Data(format!("duplicate utterance id {}", v.utterance)));
            }
            let idx = match lookup.get(&v.speaker) {
                Some(&idx) => {
                    if speakers[idx].blacklisted != v.blacklisted {
                        return Err(Error::Data(format!(
                            "speaker {} has inconsistent blacklist labels",
                            v.speaker
                        )));
                    }
                    idx
                }
                None => {
                    speakers.push(SpeakerEntry {
                        id: v.speaker.clone(),
                        blacklisted: v.blacklisted,
                        positions: Vec::new(),
                    });
                    lookup.insert(v.speaker.clone(), speakers.len() - 1);
                    speakers.len() - 1
                }
            };
            speakers[idx].positions.push(pos);
            speaker_of.push(idx);
        }
        Ok(Self {
            dim,
            vectors,
            speakers,
            speaker_of,
            lookup,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn vectors(&self) -> &[IVector] {
        &self.vectors
    }

    pub fn get(&self, pos: usize) -> &IVector {
        &self.vectors[pos]
    }

    pub fn values(&self, pos: usize) -> &[f64] {
        &self.vectors[pos].values
    }

    pub fn speakers(&self) -> &[SpeakerEntry] {
        &self.speakers
    }

    /// Index into [`Dataset::speakers`] of the vector at `pos`.
    pub fn speaker_index(&self, pos: usize) -> usize {
        self.speaker_of[pos]
    }

    pub fn speaker(&self, id: &str) -> Option<&SpeakerEntry> {
        self.lookup.get(id).map(|&i| &self.speakers[i])
    }

    pub fn is_blacklisted(&self, pos: usize) -> bool {
        self.vectors[pos].blacklisted
    }

    /// Keeps the vectors matching `keep`, preserving order.
    pub fn filter(&self, mut keep: impl FnMut(&IVector) -> bool) -> Dataset {
        let vectors = self.vectors.iter().filter(|v| keep(v)).cloned().collect();
        Dataset::new(self.dim, vectors).expect("subset of a valid dataset is valid")
    }

    pub fn blacklisted_only(&self) -> Dataset {
        self.filter(|v| v.blacklisted)
    }

    /// Appends `other` after `self`. Utterance ids must stay unique.
    pub fn concat(&self, other: &Dataset) -> Result<Dataset> {
        if self.dim != other.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                got: other.dim,
            });
        }
        let mut vectors = self.vectors.clone();
        vectors.extend(other.vectors.iter().cloned());
        Dataset::new(self.dim, vectors)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for v in &self.vectors {
            write!(out, "{},{}", v.speaker, v.utterance)?;
            for x in &v.values {
                write!(out, ",{x}")?;
            }
            writeln!(out)?;
        }
        out.flush()
    }
}

/// Parses the CSV line format. Line numbers in errors are 1-based.
pub fn parse_ivector_file<R: BufRead>(source: R, dim: usize, blacklist_prefix: &str) -> Result<Dataset> {
    let mut vectors = Vec::new();
    let mut utterance_line: HashMap<String, usize> = HashMap::new();
    for (i, line) in source.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::Parse {
            line: lineno,
            msg: e.to_string(),
        })?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let speaker = fields.next().unwrap_or_default().trim();
        let utterance = fields
            .next()
            .ok_or_else(|| Error::Parse {
                line: lineno,
                msg: "missing utterance id".into(),
            })?
            .trim();
        if speaker.is_empty() || utterance.is_empty() {
            return Err(Error::Parse {
                line: lineno,
                msg: "empty speaker or utterance id".into(),
            });
        }
        let values = fields
            .map(|f| {
                let x: f64 = f.trim().parse().map_err(|_| Error::Parse {
                    line: lineno,
                    msg: format!("invalid number {f:?}"),
                })?;
                if x.is_finite() {
                    Ok(x)
                } else {
                    Err(Error::Parse {
                        line: lineno,
                        msg: format!("non-finite value {f:?}"),
                    })
                }
            })
            .collect::<Result<Vec<f64>>>()?;
        if values.len() != dim {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("dimension mismatch: expected {dim} values, found {}", values.len()),
            });
        }
        if let Some(first) = utterance_line.insert(utterance.to_string(), lineno) {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("duplicate utterance id {utterance} (first seen at line {first})"),
            });
        }
        vectors.push(IVector {
            speaker: speaker.to_string(),
            utterance: utterance.to_string(),
            blacklisted: speaker.starts_with(blacklist_prefix),
            values,
        });
    }
    Dataset::new(dim, vectors)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Partition {
    Training,
    Development,
    Test,
}

impl Partition {
    pub const ALL: [Partition; 3] = [Partition::Training, Partition::Development, Partition::Test];

    pub fn name(self) -> &'static str {
        match self {
            Partition::Training => "training",
            Partition::Development => "development",
            Partition::Test => "test",
        }
    }
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SplitName {
    SetA,
    SetB,
}

impl fmt::Display for SplitName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SplitName::SetA => "SetA",
            SplitName::SetB => "SetB",
        })
    }
}

impl FromStr for SplitName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "SetA" | "A" | "a" | "seta" => Ok(SplitName::SetA),
            "SetB" | "B" | "b" | "setb" => Ok(SplitName::SetB),
            other => Err(Error::Config(format!("unknown split {other:?} (expected SetA or SetB)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitPlan {
    pub name: SplitName,
    /// Concatenated in this order.
    pub train_sources: Vec<Partition>,
    pub eval_source: Partition,
}

impl SplitPlan {
    pub fn new(name: SplitName) -> Self {
        match name {
            SplitName::SetA => SplitPlan {
                name,
                train_sources: vec![Partition::Training],
                eval_source: Partition::Development,
            },
            SplitName::SetB => SplitPlan {
                name,
                train_sources: vec![Partition::Training, Partition::Development],
                eval_source: Partition::Test,
            },
        }
    }

    /// Partitions this plan reads.
    pub fn sources(&self) -> impl Iterator<Item = Partition> + '_ {
        self.train_sources.iter().copied().chain(std::iter::once(self.eval_source))
    }
}

pub fn build_split(partitions: &BTreeMap<Partition, Dataset>, plan: &SplitPlan) -> Result<(Dataset, Dataset)> {
    let fetch = |p: Partition| {
        partitions
            .get(&p)
            .ok_or_else(|| Error::Config(format!("split {} needs the {p} partition", plan.name)))
    };
    let mut sources = plan.train_sources.iter();
    let first = sources
        .next()
        .ok_or_else(|| Error::Config(format!("split {} has no training source", plan.name)))?;
    let mut train = fetch(*first)?.clone();
    for &p in sources {
        train = train.concat(fetch(p)?)?;
    }
    let eval = fetch(plan.eval_source)?.clone();
    if eval.dim() != train.dim() {
        return Err(Error::Dimension {
            expected: train.dim(),
            got: eval.dim(),
        });
    }
    Ok((train, eval))
}
