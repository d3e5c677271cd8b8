//! Experiment configuration.
//!
//! Configs are TOML files whose leaves are addressed by dotted keys
//! (`train.task1.pool_size = 96000` and a `[train.task1]` table are the same
//! thing). Every key is optional; unknown keys are rejected. The resolved
//! config serializes to a canonical text form, one sorted `key = value` line
//! per setting, and its SHA-256 digest identifies the run in every report.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};
use toml::Value;

use crate::classifiers::{ScoreRule, SvmParams, DEFAULT_K};
use crate::dataset::{Partition, SplitName, DEFAULT_BLACKLIST_PREFIX, DEFAULT_DIM};
use crate::error::{Error, Result};
use crate::trainer::{
    LossOptions, Method, Schedules, Task, TrainOptions, TrainSchedule, DEFAULT_BATCH_SIZE,
    DEFAULT_LEARNING_RATE, DEFAULT_MARGIN,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ClassifierKind {
    Cosine,
    Knn,
    Svm,
}

impl fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ClassifierKind::Cosine => "cosine",
            ClassifierKind::Knn => "knn",
            ClassifierKind::Svm => "svm",
        })
    }
}

impl FromStr for ClassifierKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cosine" => Ok(ClassifierKind::Cosine),
            "knn" => Ok(ClassifierKind::Knn),
            "svm" => Ok(ClassifierKind::Svm),
            other => Err(Error::Config(format!("unknown classifier type {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataConfig {
    pub dim: usize,
    pub blacklist_prefix: String,
    pub partitions: BTreeMap<Partition, PathBuf>,
    pub split: SplitName,
    /// Keep only the first `n` blacklisted speakers of the training set.
    pub max_classes: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetConfig {
    /// `None` means the input dimension.
    pub dim_out: Option<usize>,
    pub normalize_embeddings: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub schedules: Schedules,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub margin: f64,
    pub method: Method,
    pub seed: u64,
    pub squared_distance: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierConfig {
    pub task1: ClassifierKind,
    pub task2: ClassifierKind,
    pub knn_k: usize,
    pub knn_score_rule: ScoreRule,
    pub svm: SvmParams,
}

impl ClassifierConfig {
    pub fn for_task(&self, task: Task) -> ClassifierKind {
        match task {
            Task::Task1 => self.task1,
            Task::Task2 => self.task2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub data: DataConfig,
    pub net: NetConfig,
    pub train: TrainConfig,
    pub clf: ClassifierConfig,
    pub out_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            data: DataConfig {
                dim: DEFAULT_DIM,
                blacklist_prefix: DEFAULT_BLACKLIST_PREFIX.to_string(),
                partitions: BTreeMap::new(),
                split: SplitName::SetA,
                max_classes: None,
            },
            net: NetConfig {
                dim_out: None,
                normalize_embeddings: false,
            },
            train: TrainConfig {
                schedules: Task::ALL.iter().map(|&t| (t, TrainSchedule::default_for(t))).collect(),
                batch_size: DEFAULT_BATCH_SIZE,
                learning_rate: DEFAULT_LEARNING_RATE,
                margin: DEFAULT_MARGIN,
                method: Method::M1,
                seed: 0,
                squared_distance: false,
            },
            clf: ClassifierConfig {
                task1: ClassifierKind::Cosine,
                task2: ClassifierKind::Cosine,
                knn_k: DEFAULT_K,
                knn_score_rule: ScoreRule::default(),
                svm: SvmParams::default(),
            },
            out_dir: None,
        }
    }
}

fn flatten(prefix: &str, table: &toml::Table, out: &mut BTreeMap<String, Value>) -> Result<()> {
    for (k, v) in table {
        let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match v {
            Value::Table(inner) => flatten(&key, inner, out)?,
            other => {
                if out.insert(key.clone(), other.clone()).is_some() {
                    return Err(Error::Config(format!("key {key} given twice")));
                }
            }
        }
    }
    Ok(())
}

/// Typed, consuming access to the flattened key-value map.
struct Entries {
    map: BTreeMap<String, Value>,
}

impl Entries {
    fn type_error(key: &str, want: &str, got: &Value) -> Error {
        Error::Config(format!("{key}: expected {want}, got {}", got.type_str()))
    }

    fn uint(&mut self, key: &str) -> Result<Option<u64>> {
        match self.map.remove(key) {
            None => Ok(None),
            Some(Value::Integer(i)) if i >= 0 => Ok(Some(i as u64)),
            Some(Value::Integer(i)) => Err(Error::Config(format!("{key}: {i} is negative"))),
            Some(v) => Err(Self::type_error(key, "a non-negative integer", &v)),
        }
    }

    fn usize(&mut self, key: &str) -> Result<Option<usize>> {
        self.uint(key)?
            .map(|v| usize::try_from(v).map_err(|_| Error::Config(format!("{key}: {v} is too large"))))
            .transpose()
    }

    fn float(&mut self, key: &str) -> Result<Option<f64>> {
        match self.map.remove(key) {
            None => Ok(None),
            Some(Value::Float(x)) => Ok(Some(x)),
            Some(Value::Integer(i)) => Ok(Some(i as f64)),
            Some(v) => Err(Self::type_error(key, "a number", &v)),
        }
    }

    fn boolean(&mut self, key: &str) -> Result<Option<bool>> {
        match self.map.remove(key) {
            None => Ok(None),
            Some(Value::Boolean(b)) => Ok(Some(b)),
            Some(v) => Err(Self::type_error(key, "a boolean", &v)),
        }
    }

    fn string(&mut self, key: &str) -> Result<Option<String>> {
        match self.map.remove(key) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s)),
            Some(v) => Err(Self::type_error(key, "a string", &v)),
        }
    }

    fn parsed<T: FromStr>(&mut self, key: &str) -> Result<Option<T>>
    where
        T::Err: fmt::Display,
    {
        self.string(key)?
            .map(|s| s.parse::<T>().map_err(|e| Error::Config(format!("{key}: {e}"))))
            .transpose()
    }
}

fn resolve(base: &Path, raw: String) -> PathBuf {
    let p = PathBuf::from(raw);
    if p.is_absolute() {
        p
    } else {
        base.join(p)
    }
}

impl ExperimentConfig {
    /// Parses config text. Relative paths are resolved against `base_dir`.
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(format!("invalid config syntax: {}", e.message())))?;
        let mut map = BTreeMap::new();
        flatten("", &table, &mut map)?;
        let mut e = Entries { map };
        let mut cfg = ExperimentConfig::default();

        if let Some(v) = e.usize("data.dim")? {
            cfg.data.dim = v;
        }
        if let Some(v) = e.string("data.blacklist_prefix")? {
            cfg.data.blacklist_prefix = v;
        }
        for p in Partition::ALL {
            if let Some(v) = e.string(&format!("data.partitions.{}", p.name()))? {
                cfg.data.partitions.insert(p, resolve(base_dir, v));
            }
        }
        if let Some(v) = e.parsed("data.split")? {
            cfg.data.split = v;
        }
        cfg.data.max_classes = e.usize("data.max_classes")?;

        cfg.net.dim_out = e.usize("net.dim_out")?;
        if let Some(v) = e.boolean("net.normalize_embeddings")? {
            cfg.net.normalize_embeddings = v;
        }

        let shared_rounds = e.usize("train.resample_rounds")?;
        for task in Task::ALL {
            let s = cfg.train.schedules.get_mut(&task).expect("default schedules cover every task");
            if let Some(v) = e.usize(&format!("train.{task}.pool_size"))? {
                s.pool_size = v;
            }
            if let Some(v) = e.usize(&format!("train.{task}.epochs_per_pool"))? {
                s.epochs_per_pool = v;
            }
            if let Some(v) = e.usize(&format!("train.{task}.resample_rounds"))?.or(shared_rounds) {
                s.resample_rounds = v;
            }
        }
        if let Some(v) = e.usize("train.batch_size")? {
            cfg.train.batch_size = v;
        }
        if let Some(v) = e.float("train.learning_rate")? {
            cfg.train.learning_rate = v;
        }
        if let Some(v) = e.float("train.margin")? {
            cfg.train.margin = v;
        }
        if let Some(v) = e.parsed("train.method")? {
            cfg.train.method = v;
        }
        if let Some(v) = e.uint("train.seed")? {
            cfg.train.seed = v;
        }
        if let Some(v) = e.boolean("train.squared_distance")? {
            cfg.train.squared_distance = v;
        }

        let shared_kind: Option<ClassifierKind> = e.parsed("clf.type")?;
        if let Some(v) = e.parsed("clf.task1.type")?.or(shared_kind) {
            cfg.clf.task1 = v;
        }
        if let Some(v) = e.parsed("clf.task2.type")?.or(shared_kind) {
            cfg.clf.task2 = v;
        }
        if let Some(v) = e.usize("clf.knn.k")? {
            cfg.clf.knn_k = v;
        }
        if let Some(v) = e.parsed("clf.knn.score_rule")? {
            cfg.clf.knn_score_rule = v;
        }
        if let Some(v) = e.float("clf.svm.C")? {
            cfg.clf.svm.c = v;
        }
        cfg.clf.svm.gamma = e.float("clf.svm.gamma")?;
        if let Some(v) = e.float("clf.svm.tol")? {
            cfg.clf.svm.tol = v;
        }
        if let Some(v) = e.usize("clf.svm.max_passes")? {
            cfg.clf.svm.max_passes = v;
        }

        cfg.out_dir = e.string("out.dir")?.map(|v| resolve(base_dir, v));

        if let Some(key) = e.map.keys().next() {
            return Err(Error::Config(format!("unknown config key {key}")));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::parse(&text, base)
    }

    /// Range checks that do not touch the filesystem.
    pub fn validate(&self) -> Result<()> {
        if self.data.dim == 0 {
            return Err(Error::Config("data.dim must be positive".into()));
        }
        if self.data.blacklist_prefix.is_empty() {
            return Err(Error::Config("data.blacklist_prefix must not be empty".into()));
        }
        if self.data.max_classes == Some(0) {
            return Err(Error::Config("data.max_classes must be positive".into()));
        }
        for s in self.train.schedules.values() {
            s.validate()?;
        }
        self.train_options().validate()?;
        if self.clf.knn_k == 0 {
            return Err(Error::Config("clf.knn.k must be positive".into()));
        }
        self.clf.svm.validate()
    }

    /// Checks that every partition the split plan reads is configured and exists.
    pub fn check_inputs(&self) -> Result<()> {
        for p in crate::dataset::SplitPlan::new(self.data.split).sources() {
            let path = self
                .data
                .partitions
                .get(&p)
                .ok_or_else(|| Error::Config(format!("split {} needs data.partitions.{}", self.data.split, p.name())))?;
            if !path.is_file() {
                return Err(Error::Config(format!("partition file {} does not exist", path.display())));
            }
        }
        Ok(())
    }

    pub fn dim_out(&self) -> usize {
        self.net.dim_out.unwrap_or(self.data.dim)
    }

    pub fn train_options(&self) -> TrainOptions {
        TrainOptions {
            batch_size: self.train.batch_size,
            learning_rate: self.train.learning_rate,
            loss: LossOptions {
                margin: self.train.margin,
                squared_distance: self.train.squared_distance,
                normalize_embeddings: self.net.normalize_embeddings,
            },
            dim_out: self.dim_out(),
        }
    }

    /// Sorted `key = value` lines covering every setting except the output
    /// directory, which does not influence results. Parsing this text yields
    /// the same config apart from `out_dir`.
    pub fn canonical(&self) -> String {
        let mut kv: BTreeMap<String, Value> = BTreeMap::new();
        let uint = |v: usize| Value::Integer(v as i64);
        let path = |p: &Path| Value::String(p.to_string_lossy().into_owned());
        kv.insert("data.dim".into(), uint(self.data.dim));
        kv.insert("data.blacklist_prefix".into(), Value::String(self.data.blacklist_prefix.clone()));
        for (p, file) in &self.data.partitions {
            kv.insert(format!("data.partitions.{}", p.name()), path(file));
        }
        kv.insert("data.split".into(), Value::String(self.data.split.to_string()));
        if let Some(m) = self.data.max_classes {
            kv.insert("data.max_classes".into(), uint(m));
        }
        if let Some(d) = self.net.dim_out {
            kv.insert("net.dim_out".into(), uint(d));
        }
        kv.insert("net.normalize_embeddings".into(), Value::Boolean(self.net.normalize_embeddings));
        for (task, s) in &self.train.schedules {
            kv.insert(format!("train.{task}.pool_size"), uint(s.pool_size));
            kv.insert(format!("train.{task}.epochs_per_pool"), uint(s.epochs_per_pool));
            kv.insert(format!("train.{task}.resample_rounds"), uint(s.resample_rounds));
        }
        kv.insert("train.batch_size".into(), uint(self.train.batch_size));
        kv.insert("train.learning_rate".into(), Value::Float(self.train.learning_rate));
        kv.insert("train.margin".into(), Value::Float(self.train.margin));
        kv.insert("train.method".into(), Value::String(self.train.method.to_string()));
        kv.insert("train.seed".into(), Value::Integer(self.train.seed as i64));
        kv.insert("train.squared_distance".into(), Value::Boolean(self.train.squared_distance));
        kv.insert("clf.task1.type".into(), Value::String(self.clf.task1.to_string()));
        kv.insert("clf.task2.type".into(), Value::String(self.clf.task2.to_string()));
        kv.insert("clf.knn.k".into(), uint(self.clf.knn_k));
        kv.insert("clf.knn.score_rule".into(), Value::String(self.clf.knn_score_rule.to_string()));
        kv.insert("clf.svm.C".into(), Value::Float(self.clf.svm.c));
        if let Some(g) = self.clf.svm.gamma {
            kv.insert("clf.svm.gamma".into(), Value::Float(g));
        }
        kv.insert("clf.svm.tol".into(), Value::Float(self.clf.svm.tol));
        kv.insert("clf.svm.max_passes".into(), uint(self.clf.svm.max_passes));
        kv.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    /// Hex SHA-256 of [`canonical`](Self::canonical).
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical().as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn parse(text: &str) -> Result<ExperimentConfig> {
        ExperimentConfig::parse(text, Path::new("/cfg"))
    }

    #[test]
    fn empty_config_gives_defaults() {
        let cfg = parse("").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        assert_eq!(cfg.train.schedules[&Task::Task1], TrainSchedule::TASK1);
        assert_eq!(cfg.train.seed, 0);
        assert_eq!(cfg.dim_out(), 600);
    }

    #[test]
    fn dotted_keys_and_tables_agree() {
        let a = parse("train.task1.pool_size = 10\nclf.svm.C = 2\n").unwrap();
        let b = parse("[train.task1]\npool_size = 10\n[clf.svm]\nC = 2.0\n").unwrap();
        assert_eq!(a, b);
        assert_eq!(a.train.schedules[&Task::Task1].pool_size, 10);
        assert_eq!(a.clf.svm.c, 2.0);
    }

    #[test]
    fn unknown_key_is_an_error() {
        let err = parse("train.learning_rte = 0.1\n").unwrap_err();
        assert!(matches!(&err, Error::Config(m) if m.contains("train.learning_rte")), "{err}");
    }

    #[test]
    fn wrong_types_rejected() {
        assert!(matches!(parse("data.dim = \"600\"\n"), Err(Error::Config(_))));
        assert!(matches!(parse("train.seed = -1\n"), Err(Error::Config(_))));
        assert!(matches!(parse("clf.type = \"forest\"\n"), Err(Error::Config(_))));
        assert!(matches!(parse("train.batch_size = 0\n"), Err(Error::Config(_))));
        assert!(matches!(parse("data.dim = [1]\n"), Err(Error::Config(_))));
        assert!(matches!(parse("data.dim = \n"), Err(Error::Config(_))));
    }

    #[test]
    fn shared_keys_expand_per_task() {
        let cfg = parse("train.resample_rounds = 0\nclf.type = \"knn\"\nclf.task2.type = \"svm\"\n").unwrap();
        assert!(cfg.train.schedules.values().all(|s| s.resample_rounds == 0));
        assert_eq!(cfg.clf.task1, ClassifierKind::Knn);
        assert_eq!(cfg.clf.task2, ClassifierKind::Svm);
        let canon = cfg.canonical();
        assert!(!canon.contains("clf.type"));
        assert!(canon.contains("train.task2.resample_rounds = 0\n"));
    }

    #[test]
    fn relative_paths_resolve_against_base() {
        let cfg = parse("data.partitions.training = \"train.csv\"\ndata.partitions.test = \"/abs/t.csv\"\n").unwrap();
        assert_eq!(cfg.data.partitions[&Partition::Training], PathBuf::from("/cfg/train.csv"));
        assert_eq!(cfg.data.partitions[&Partition::Test], PathBuf::from("/abs/t.csv"));
    }

    #[test]
    fn missing_partition_fails_input_check() {
        let cfg = parse("data.split = \"SetB\"\n").unwrap();
        assert!(matches!(cfg.check_inputs(), Err(Error::Config(_))));
    }

    #[test]
    fn output_directory_does_not_change_the_hash() {
        let a = parse("out.dir = \"a\"\n").unwrap();
        let b = parse("out.dir = \"b\"\n").unwrap();
        assert_eq!(a.out_dir, Some(PathBuf::from("/cfg/a")));
        assert_eq!(a.hash(), b.hash());
    }

    #[test]
    fn canonical_form_is_sorted_and_hash_is_hex() {
        let cfg = parse("train.seed = 5\n").unwrap();
        let canon = cfg.canonical();
        let keys: Vec<&str> = canon.lines().map(|l| l.split(" = ").next().unwrap()).collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
        let h = cfg.hash();
        assert_eq!(h.len(), 64);
        assert!(h.chars().all(|c| c.is_ascii_hexdigit()));
        assert_ne!(h, parse("train.seed = 6\n").unwrap().hash());
    }

    proptest! {
        #[test]
        fn canonical_text_round_trips(
            seed in 0u64..1_000_000,
            lr in 1e-7f64..1.0,
            margin in 1e-3f64..5.0,
            rounds in 0usize..10,
            k in 1usize..20,
            gamma in proptest::option::of(1e-4f64..10.0),
            kind in prop_oneof![Just("cosine"), Just("knn"), Just("svm")],
            method in prop_oneof![Just("M1"), Just("M2")],
            prefix in "[a-z]{1,4}_",
        ) {
            let mut text = format!(
                "train.seed = {seed}\ntrain.learning_rate = {lr:e}\ntrain.margin = {margin:e}\n\
                 train.task2.resample_rounds = {rounds}\nclf.knn.k = {k}\nclf.type = \"{kind}\"\n\
                 train.method = \"{method}\"\ndata.blacklist_prefix = \"{prefix}\"\n\
                 data.partitions.development = \"dev.csv\"\n"
            );
            if let Some(g) = gamma {
                text.push_str(&format!("clf.svm.gamma = {g:e}\n"));
            }
            let cfg = parse(&text).unwrap();
            let again = parse(&cfg.canonical()).unwrap();
            prop_assert_eq!(&again, &cfg);
            prop_assert_eq!(again.hash(), cfg.hash());
        }
    }
}
