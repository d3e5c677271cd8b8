//! End-to-end experiment orchestration: data loading, training, embedding,
//! classification, scoring and artifact output.
//!
//! Output directory layout:
//!
//! ```text
//! report.txt             key = value summary
//! task1_scores.csv       utterance,speaker,is_target,score
//! det.csv                threshold,far,frr
//! task2_predictions.csv  utterance,truth,predicted,score
//! loss_trace.csv         task,round,epoch,mean_loss
//! model.task{1,2}.ckpt   trained encoders
//! config.resolved        canonical config text
//! ```
//!
//! While a run is in progress the directory also holds an `INCOMPLETE` file;
//! it is removed on success and names the failing stage otherwise.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::classifiers::{CosineModel, KnnModel, SvmEnsemble};
use crate::config::{ClassifierKind, ExperimentConfig};
use crate::dataset::{build_split, parse_ivector_file, Dataset, Partition, SplitName, SplitPlan};
use crate::error::{Error, Result};
use crate::metrics::{count_confusions, det_points, eer_from_points, ConfusionCount, DetPoint, EerResult, ScoredTrial};
use crate::net::{embed_batch, l2_normalize_in_place, Checkpoint, EmbeddingParams};
use crate::trainer::{run_method, Method, Task, TraceEntry, TrainedModel};

pub const INCOMPLETE_MARKER: &str = "INCOMPLETE";

/// Maps vectors into the space a classifier operates in.
#[derive(Debug, Clone, PartialEq)]
pub enum Encoder {
    /// Raw vectors, untouched.
    Identity,
    Net {
        params: Arc<EmbeddingParams>,
        normalize: bool,
    },
}

impl Encoder {
    pub fn name(&self) -> &'static str {
        match self {
            Encoder::Identity => "identity",
            Encoder::Net { .. } => "tnn",
        }
    }

    pub fn encode(&self, dataset: &Dataset) -> Result<Vec<Vec<f64>>> {
        let raw: Vec<&[f64]> = dataset.vectors().iter().map(|v| v.values.as_slice()).collect();
        match self {
            Encoder::Identity => Ok(raw.iter().map(|v| v.to_vec()).collect()),
            Encoder::Net { params, normalize } => {
                let mut out = embed_batch(params, &raw)?;
                if *normalize {
                    out.iter_mut().for_each(|v| l2_normalize_in_place(v));
                }
                Ok(out)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialScore {
    pub utterance: String,
    pub speaker: String,
    pub is_target: bool,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Task1Result {
    pub eer: EerResult,
    pub det: Vec<DetPoint>,
    pub trials: Vec<TrialScore>,
}

impl Task1Result {
    pub fn targets(&self) -> usize {
        self.trials.iter().filter(|t| t.is_target).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub utterance: String,
    pub truth: String,
    pub predicted: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Task2Result {
    pub confusions: ConfusionCount,
    pub predictions: Vec<Prediction>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Provenance {
    /// `experiment`, `baseline` or `eval`.
    pub mode: &'static str,
    pub config_hash: String,
    pub seed: u64,
    pub split: SplitName,
    pub method: Option<Method>,
    pub classifiers: BTreeMap<Task, ClassifierKind>,
    pub encoders: BTreeMap<Task, &'static str>,
    /// Config hash stored in the checkpoints an `eval` run loaded.
    pub model_config_hash: Option<String>,
    pub train_vectors: usize,
    pub eval_vectors: usize,
    pub classes: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub provenance: Provenance,
    /// `None` when the evaluation set lacks target or non-target trials.
    pub task1: Option<Task1Result>,
    /// `None` when the evaluation set has no blacklisted vectors.
    pub task2: Option<Task2Result>,
    pub final_losses: BTreeMap<Task, f64>,
}

impl EvalReport {
    /// Metric lines only, without provenance.
    pub fn metrics_text(&self) -> String {
        let mut s = String::new();
        match &self.task1 {
            Some(t) => {
                let e = &t.eer;
                let _ = writeln!(s, "task1.eer = {}", e.eer);
                let _ = writeln!(s, "task1.threshold = {}", e.threshold);
                for (name, p) in [("lower", &e.lower), ("upper", &e.upper)] {
                    let _ = writeln!(s, "task1.bracket.{name}.threshold = {}", p.threshold);
                    let _ = writeln!(s, "task1.bracket.{name}.far = {}", p.far);
                    let _ = writeln!(s, "task1.bracket.{name}.frr = {}", p.frr);
                }
                let _ = writeln!(s, "task1.targets = {}", t.targets());
                let _ = writeln!(s, "task1.nontargets = {}", t.trials.len() - t.targets());
                let _ = writeln!(s, "task1.det_points = {}", t.det.len());
            }
            None => s.push_str("task1.status = skipped (evaluation set needs blacklisted and background vectors)\n"),
        }
        match &self.task2 {
            Some(t) => {
                let _ = writeln!(s, "task2.confusions = {}", t.confusions.confusions);
                let _ = writeln!(s, "task2.total = {}", t.confusions.total);
                let _ = writeln!(s, "task2.top1 = {}", t.confusions.top1);
            }
            None => s.push_str("task2.status = skipped (evaluation set has no blacklisted vectors)\n"),
        }
        s
    }

    pub fn to_text(&self) -> String {
        let p = &self.provenance;
        let mut s = String::from("# tnnspk evaluation report\n");
        let _ = writeln!(s, "mode = {}", p.mode);
        let _ = writeln!(s, "config_hash = {}", p.config_hash);
        if let Some(h) = &p.model_config_hash {
            let _ = writeln!(s, "model_config_hash = {h}");
        }
        let _ = writeln!(s, "seed = {}", p.seed);
        let _ = writeln!(s, "split = {}", p.split);
        if let Some(m) = p.method {
            let _ = writeln!(s, "method = {m}");
        }
        for task in Task::ALL {
            let _ = writeln!(s, "{task}.classifier = {}", p.classifiers[&task]);
            let _ = writeln!(s, "{task}.encoder = {}", p.encoders[&task]);
        }
        let _ = writeln!(s, "train.vectors = {}", p.train_vectors);
        let _ = writeln!(s, "train.classes = {}", p.classes);
        let _ = writeln!(s, "eval.vectors = {}", p.eval_vectors);
        for (task, loss) in &self.final_losses {
            let _ = writeln!(s, "{task}.final_mean_loss = {loss}");
        }
        s.push_str(&self.metrics_text());
        s
    }
}

/// Reads the partitions the configured split needs.
pub fn load_partitions(cfg: &ExperimentConfig) -> Result<BTreeMap<Partition, Dataset>> {
    cfg.check_inputs()?;
    let plan = SplitPlan::new(cfg.data.split);
    let mut out = BTreeMap::new();
    for p in plan.sources() {
        let path = &cfg.data.partitions[&p];
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let ds = parse_ivector_file(BufReader::new(file), cfg.data.dim, &cfg.data.blacklist_prefix)
            .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        out.insert(p, ds);
    }
    Ok(out)
}

/// Keeps the first `max` blacklisted training speakers; blacklisted
/// evaluation vectors of dropped speakers are removed too.
pub fn cap_classes(train: &Dataset, eval: &Dataset, max: usize) -> (Dataset, Dataset) {
    let kept: std::collections::BTreeSet<&str> = train
        .speakers()
        .iter()
        .filter(|s| s.blacklisted)
        .take(max)
        .map(|s| s.id.as_str())
        .collect();
    let keep = |v: &crate::dataset::IVector| !v.blacklisted || kept.contains(v.speaker.as_str());
    (train.filter(keep), eval.filter(keep))
}

/// Loads data and applies the split plan and class cap.
pub fn prepare_data(cfg: &ExperimentConfig) -> Result<(Dataset, Dataset)> {
    let partitions = load_partitions(cfg)?;
    let (train, eval) = build_split(&partitions, &SplitPlan::new(cfg.data.split))?;
    Ok(match cfg.data.max_classes {
        Some(m) => cap_classes(&train, &eval, m),
        None => (train, eval),
    })
}

/// Task whose schedule trains the encoder used for `task`.
fn training_task(method: Method, task: Task) -> Task {
    match method {
        Method::M1 => task,
        Method::M2 => Task::Task2,
    }
}

/// Encoders for both tasks. A task whose training schedule has zero rounds
/// classifies raw vectors.
pub fn encoders_for(cfg: &ExperimentConfig, models: &BTreeMap<Task, Arc<TrainedModel>>) -> BTreeMap<Task, Encoder> {
    Task::ALL
        .iter()
        .map(|&task| {
            let source = training_task(cfg.train.method, task);
            let rounds = cfg.train.schedules.get(&source).map_or(0, |s| s.resample_rounds);
            let enc = match models.get(&task) {
                Some(m) if rounds > 0 => Encoder::Net {
                    params: Arc::new(m.params.clone()),
                    normalize: cfg.net.normalize_embeddings,
                },
                _ => Encoder::Identity,
            };
            (task, enc)
        })
        .collect()
}

/// Blacklisted training speakers in first-appearance order; their index is
/// the class id every classifier uses.
fn class_table(train: &Dataset) -> (Vec<String>, BTreeMap<&str, usize>) {
    let names: Vec<String> = train.speakers().iter().filter(|s| s.blacklisted).map(|s| s.id.clone()).collect();
    let index = train
        .speakers()
        .iter()
        .filter(|s| s.blacklisted)
        .enumerate()
        .map(|(c, s)| (s.id.as_str(), c))
        .collect();
    (names, index)
}

/// Builds a classifier for one task and scores every evaluation vector,
/// returning `(predicted class, task-1 score)` per vector.
fn classify(
    cfg: &ExperimentConfig,
    kind: ClassifierKind,
    task: Task,
    train: &Dataset,
    train_emb: &[Vec<f64>],
    eval_emb: &[Vec<f64>],
) -> Result<Vec<(usize, f64)>> {
    let (_, index) = class_table(train);
    let bl_positions: Vec<usize> = (0..train.len()).filter(|&i| train.is_blacklisted(i)).collect();
    let class_of = |i: usize| index[train.get(i).speaker.as_str()];
    if bl_positions.is_empty() {
        return Err(Error::Data("training set has no blacklisted speakers".into()));
    }
    match kind {
        ClassifierKind::Cosine => {
            let vecs: Vec<&[f64]> = bl_positions.iter().map(|&i| train_emb[i].as_slice()).collect();
            let labels: Vec<usize> = bl_positions.iter().map(|&i| class_of(i)).collect();
            let model = CosineModel::build(&vecs, &labels)?;
            eval_emb
                .iter()
                .map(|x| model.score(x).map(|s| (s.best_class, s.score)))
                .collect()
        }
        ClassifierKind::Knn => {
            // Task 1 votes over every training vector, Task 2 over blacklisted ones.
            let positions: Vec<usize> = match task {
                Task::Task1 => (0..train.len()).collect(),
                Task::Task2 => bl_positions,
            };
            let n_classes = index.len();
            let labels = positions
                .iter()
                .map(|&i| {
                    if train.is_blacklisted(i) {
                        class_of(i)
                    } else {
                        n_classes + train.speaker_index(i)
                    }
                })
                .collect();
            let model = KnnModel::new(
                positions.iter().map(|&i| train_emb[i].clone()).collect(),
                labels,
                positions.iter().map(|&i| train.is_blacklisted(i)).collect(),
                cfg.clf.knn_k,
                cfg.clf.knn_score_rule,
            )?;
            eval_emb
                .iter()
                .map(|x| model.predict(x).map(|p| (p.label, p.task1_score)))
                .collect()
        }
        ClassifierKind::Svm => {
            let positions: Vec<usize> = match task {
                Task::Task1 => (0..train.len()).collect(),
                Task::Task2 => bl_positions,
            };
            let vecs: Vec<&[f64]> = positions.iter().map(|&i| train_emb[i].as_slice()).collect();
            let targets: Vec<Option<usize>> = positions
                .iter()
                .map(|&i| train.is_blacklisted(i).then(|| class_of(i)))
                .collect();
            let model = SvmEnsemble::train(&vecs, &targets, &cfg.clf.svm)?;
            eval_emb
                .iter()
                .map(|x| model.predict(x).map(|p| (p.label, p.task1_score)))
                .collect()
        }
    }
}

fn evaluate_task1(scored: &[(usize, f64)], eval: &Dataset) -> Result<Option<Task1Result>> {
    let trials: Vec<TrialScore> = eval
        .vectors()
        .iter()
        .zip(scored)
        .map(|(v, &(_, score))| TrialScore {
            utterance: v.utterance.clone(),
            speaker: v.speaker.clone(),
            is_target: v.blacklisted,
            score,
        })
        .collect();
    let targets = trials.iter().filter(|t| t.is_target).count();
    if targets == 0 || targets == trials.len() {
        return Ok(None);
    }
    let scored: Vec<ScoredTrial> = trials.iter().map(|t| ScoredTrial::new(t.score, t.is_target)).collect();
    let det = det_points(&scored)?;
    let eer = eer_from_points(&det)?;
    Ok(Some(Task1Result { eer, det, trials }))
}

fn evaluate_task2(scored: &[(usize, f64)], eval: &Dataset, class_names: &[String]) -> Result<Option<Task2Result>> {
    let predictions: Vec<Prediction> = eval
        .vectors()
        .iter()
        .zip(scored)
        .filter(|(v, _)| v.blacklisted)
        .map(|(v, &(class, score))| Prediction {
            utterance: v.utterance.clone(),
            truth: v.speaker.clone(),
            predicted: class_names.get(class).cloned().unwrap_or_default(),
            score,
        })
        .collect();
    if predictions.is_empty() {
        return Ok(None);
    }
    let predicted: Vec<&str> = predictions.iter().map(|p| p.predicted.as_str()).collect();
    let truth: Vec<&str> = predictions.iter().map(|p| p.truth.as_str()).collect();
    let confusions = count_confusions(&predicted, &truth)?;
    Ok(Some(Task2Result { confusions, predictions }))
}

/// Scores the evaluation set for both tasks with the given encoders and
/// classifier choices.
pub fn evaluate(
    cfg: &ExperimentConfig,
    classifiers: &BTreeMap<Task, ClassifierKind>,
    encoders: &BTreeMap<Task, Encoder>,
    train: &Dataset,
    eval: &Dataset,
) -> Result<(Option<Task1Result>, Option<Task2Result>)> {
    let (class_names, _) = class_table(train);
    let mut scored: BTreeMap<Task, Vec<(usize, f64)>> = BTreeMap::new();
    for task in Task::ALL {
        let encoder = &encoders[&task];
        let kind = classifiers[&task];
        // Cosine scoring ignores the task, so a shared encoder means shared results.
        let reuse = Task::ALL
            .iter()
            .take_while(|&&t| t != task)
            .find(|t| kind == ClassifierKind::Cosine && classifiers[t] == kind && encoders[t] == *encoder);
        if let Some(prev) = reuse {
            let done = scored[prev].clone();
            scored.insert(task, done);
            continue;
        }
        let train_emb = encoder.encode(train)?;
        let eval_emb = encoder.encode(eval)?;
        scored.insert(task, classify(cfg, kind, task, train, &train_emb, &eval_emb)?);
    }
    let t1 = evaluate_task1(&scored[&Task::Task1], eval)?;
    let t2 = evaluate_task2(&scored[&Task::Task2], eval, &class_names)?;
    Ok((t1, t2))
}

/// Runs `f`, tagging any error with the stage name.
fn stage<T>(name: &'static str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    f().map_err(|e| e.in_stage(name))
}

/// Output directory guarded by an `INCOMPLETE` marker.
struct OutDir {
    path: PathBuf,
}

impl OutDir {
    fn open(path: &Path) -> Result<Self> {
        fs::create_dir_all(path).map_err(|e| Error::io(path, e))?;
        let dir = Self { path: path.to_path_buf() };
        dir.write(INCOMPLETE_MARKER, |w| writeln!(w, "stage = start"))?;
        Ok(dir)
    }

    fn write(&self, name: &str, body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<()> {
        let path = self.path.join(name);
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut w = BufWriter::new(file);
        body(&mut w).and_then(|_| w.flush()).map_err(|e| Error::io(&path, e))
    }

    fn fail(&self, err: &Error) {
        let stage = match err {
            Error::Stage { stage, .. } => *stage,
            _ => "unknown",
        };
        let _ = self.write(INCOMPLETE_MARKER, |w| writeln!(w, "stage = {stage}\nerror = {err}"));
    }

    fn finish(&self) -> Result<()> {
        let path = self.path.join(INCOMPLETE_MARKER);
        fs::remove_file(&path).map_err(|e| Error::io(&path, e))
    }
}

fn guarded<T>(out: Option<&Path>, run: impl FnOnce(Option<&OutDir>) -> Result<T>) -> Result<T> {
    let dir = out.map(OutDir::open).transpose()?;
    match run(dir.as_ref()) {
        Ok(v) => {
            if let Some(d) = &dir {
                d.finish()?;
            }
            Ok(v)
        }
        Err(e) => {
            if let Some(d) = &dir {
                d.fail(&e);
            }
            Err(e)
        }
    }
}

fn write_report_files(dir: &OutDir, report: &EvalReport) -> Result<()> {
    if let Some(t1) = &report.task1 {
        dir.write("task1_scores.csv", |w| {
            writeln!(w, "utterance,speaker,is_target,score")?;
            for t in &t1.trials {
                writeln!(w, "{},{},{},{}", t.utterance, t.speaker, u8::from(t.is_target), t.score)?;
            }
            Ok(())
        })?;
        dir.write("det.csv", |w| {
            writeln!(w, "threshold,far,frr")?;
            for p in &t1.det {
                writeln!(w, "{},{},{}", p.threshold, p.far, p.frr)?;
            }
            Ok(())
        })?;
    }
    if let Some(t2) = &report.task2 {
        dir.write("task2_predictions.csv", |w| {
            writeln!(w, "utterance,truth,predicted,score")?;
            for p in &t2.predictions {
                writeln!(w, "{},{},{},{}", p.utterance, p.truth, p.predicted, p.score)?;
            }
            Ok(())
        })?;
    }
    dir.write("report.txt", |w| w.write_all(report.to_text().as_bytes()))
}

fn write_training_files(dir: &OutDir, cfg: &ExperimentConfig, models: &BTreeMap<Task, Arc<TrainedModel>>) -> Result<()> {
    dir.write("loss_trace.csv", |w| {
        writeln!(w, "task,round,epoch,mean_loss")?;
        let mut seen = Vec::new();
        for m in models.values() {
            if seen.iter().any(|s| Arc::ptr_eq(s, m)) {
                continue;
            }
            seen.push(Arc::clone(m));
            for e in &m.trace {
                writeln!(w, "{},{},{},{}", m.task, e.round, e.epoch, e.mean_loss)?;
            }
        }
        Ok(())
    })?;
    let hash = cfg.hash();
    for (task, m) in models {
        let ckpt = Checkpoint {
            params: m.params.clone(),
            normalize: cfg.net.normalize_embeddings,
            config_hash: hash.clone(),
        };
        dir.write(&checkpoint_name(*task), |w| ckpt.write(w))?;
    }
    Ok(())
}

fn write_config(dir: &OutDir, cfg: &ExperimentConfig) -> Result<()> {
    dir.write("config.resolved", |w| w.write_all(cfg.canonical().as_bytes()))
}

pub fn checkpoint_name(task: Task) -> String {
    format!("model.{task}.ckpt")
}

fn provenance(
    cfg: &ExperimentConfig,
    mode: &'static str,
    classifiers: &BTreeMap<Task, ClassifierKind>,
    encoders: &BTreeMap<Task, Encoder>,
    train: &Dataset,
    eval: &Dataset,
) -> Provenance {
    Provenance {
        mode,
        config_hash: cfg.hash(),
        seed: cfg.train.seed,
        split: cfg.data.split,
        method: (mode != "baseline").then_some(cfg.train.method),
        classifiers: classifiers.clone(),
        encoders: encoders.iter().map(|(t, e)| (*t, e.name())).collect(),
        model_config_hash: None,
        train_vectors: train.len(),
        eval_vectors: eval.len(),
        classes: train.speakers().iter().filter(|s| s.blacklisted).count(),
    }
}

fn configured_classifiers(cfg: &ExperimentConfig) -> BTreeMap<Task, ClassifierKind> {
    Task::ALL.iter().map(|&t| (t, cfg.clf.for_task(t))).collect()
}

fn final_losses(models: &BTreeMap<Task, Arc<TrainedModel>>) -> BTreeMap<Task, f64> {
    models
        .iter()
        .filter_map(|(t, m)| m.trace.last().map(|e| (*t, e.mean_loss)))
        .collect()
}

/// Trains the configured method on the configured split.
pub fn train_models(
    cfg: &ExperimentConfig,
    train: &Dataset,
    progress: impl FnMut(Task, &TraceEntry),
) -> Result<BTreeMap<Task, Arc<TrainedModel>>> {
    run_method(
        train,
        cfg.train.method,
        &cfg.train.schedules,
        &cfg.train_options(),
        cfg.train.seed,
        progress,
    )
}

/// Full pipeline: load, train, embed, classify, score. Artifacts go to
/// `cfg.out_dir` when it is set.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<EvalReport> {
    run_experiment_with_progress(cfg, |_, _| {})
}

pub fn run_experiment_with_progress(
    cfg: &ExperimentConfig,
    progress: impl FnMut(Task, &TraceEntry),
) -> Result<EvalReport> {
    guarded(cfg.out_dir.as_deref(), |dir| {
        if let Some(d) = dir {
            write_config(d, cfg)?;
        }
        let (train, eval) = stage("data", || prepare_data(cfg))?;
        let models = stage("train", || train_models(cfg, &train, progress))?;
        if let Some(d) = dir {
            stage("write", || write_training_files(d, cfg, &models))?;
        }
        let encoders = encoders_for(cfg, &models);
        let classifiers = configured_classifiers(cfg);
        let (task1, task2) = stage("evaluate", || evaluate(cfg, &classifiers, &encoders, &train, &eval))?;
        let report = EvalReport {
            provenance: provenance(cfg, "experiment", &classifiers, &encoders, &train, &eval),
            task1,
            task2,
            final_losses: final_losses(&models),
        };
        if let Some(d) = dir {
            stage("write", || write_report_files(d, &report))?;
        }
        Ok(report)
    })
}

/// Cosine scoring on raw vectors; never touches a network.
pub fn run_baseline(cfg: &ExperimentConfig) -> Result<EvalReport> {
    guarded(cfg.out_dir.as_deref(), |dir| {
        if let Some(d) = dir {
            write_config(d, cfg)?;
        }
        let (train, eval) = stage("data", || prepare_data(cfg))?;
        let encoders: BTreeMap<Task, Encoder> = Task::ALL.iter().map(|&t| (t, Encoder::Identity)).collect();
        let classifiers: BTreeMap<Task, ClassifierKind> =
            Task::ALL.iter().map(|&t| (t, ClassifierKind::Cosine)).collect();
        let (task1, task2) = stage("evaluate", || evaluate(cfg, &classifiers, &encoders, &train, &eval))?;
        let report = EvalReport {
            provenance: provenance(cfg, "baseline", &classifiers, &encoders, &train, &eval),
            task1,
            task2,
            final_losses: BTreeMap::new(),
        };
        if let Some(d) = dir {
            stage("write", || write_report_files(d, &report))?;
        }
        Ok(report)
    })
}

/// Training only: writes checkpoints, the loss trace and the resolved config.
pub fn run_training(
    cfg: &ExperimentConfig,
    progress: impl FnMut(Task, &TraceEntry),
) -> Result<BTreeMap<Task, Arc<TrainedModel>>> {
    guarded(cfg.out_dir.as_deref(), |dir| {
        if let Some(d) = dir {
            write_config(d, cfg)?;
        }
        let (train, _) = stage("data", || prepare_data(cfg))?;
        let models = stage("train", || train_models(cfg, &train, progress))?;
        if let Some(d) = dir {
            stage("write", || write_training_files(d, cfg, &models))?;
        }
        Ok(models)
    })
}

/// Reads the checkpoint for `task` from a model directory.
pub fn load_checkpoint(models_dir: &Path, task: Task) -> Result<Checkpoint> {
    let path = models_dir.join(checkpoint_name(task));
    let file = File::open(&path).map_err(|e| Error::io(&path, e))?;
    Checkpoint::read(BufReader::new(file)).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

/// Evaluation with previously trained checkpoints, which may come from a
/// run on a different split.
pub fn run_evaluation(cfg: &ExperimentConfig, models_dir: &Path) -> Result<EvalReport> {
    guarded(cfg.out_dir.as_deref(), |dir| {
        if let Some(d) = dir {
            write_config(d, cfg)?;
        }
        let checkpoints: BTreeMap<Task, Checkpoint> = stage("load-models", || {
            Task::ALL.iter().map(|&t| load_checkpoint(models_dir, t).map(|c| (t, c))).collect()
        })?;
        let (train, eval) = stage("data", || prepare_data(cfg))?;
        let encoders: BTreeMap<Task, Encoder> = checkpoints
            .iter()
            .map(|(t, c)| {
                (
                    *t,
                    Encoder::Net {
                        params: Arc::new(c.params.clone()),
                        normalize: c.normalize,
                    },
                )
            })
            .collect();
        let classifiers = configured_classifiers(cfg);
        let (task1, task2) = stage("evaluate", || evaluate(cfg, &classifiers, &encoders, &train, &eval))?;
        let mut prov = provenance(cfg, "eval", &classifiers, &encoders, &train, &eval);
        prov.method = None;
        prov.model_config_hash = checkpoints.get(&Task::Task2).map(|c| c.config_hash.clone());
        let report = EvalReport {
            provenance: prov,
            task1,
            task2,
            final_losses: BTreeMap::new(),
        };
        if let Some(d) = dir {
            stage("write", || write_report_files(d, &report))?;
        }
        Ok(report)
    })
}
