use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use tnnspk_core::config::ExperimentConfig;
use tnnspk_core::dataset::{Dataset, Partition, SplitName};
use tnnspk_core::pipeline::{self, EvalReport, Encoder};
use tnnspk_core::projection::pca_project;
use tnnspk_core::synth::{synth_partitions, SynthParams};
use tnnspk_core::trainer::{Task, TraceEntry};
use tnnspk_core::{Error, ErrorKind, Result};

#[derive(Parser)]
#[command(name = "tnnspk", version, about = "Triplet-network speaker embeddings for blacklist detection")]
struct Cli {
    /// Cap on worker threads; results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Overrides `train.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `out.dir` (default `out`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides `data.max_classes`.
    #[arg(long)]
    max_classes: Option<usize>,
    /// Overrides `data.split`.
    #[arg(long)]
    split: Option<SplitName>,
}

#[derive(Subcommand)]
enum Command {
    /// Validate the configured partitions and optionally rewrite them as CSV.
    Ingest {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train encoders and write checkpoints.
    Train(Common),
    /// Evaluate with checkpoints from a previous `train` or `run`.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        models: PathBuf,
    },
    /// Cosine scoring on raw vectors.
    Baseline(Common),
    /// Export a 2-D principal-component projection as CSV.
    Project {
        #[command(flatten)]
        common: Common,
        /// Project embeddings from this model directory instead of raw vectors.
        #[arg(long)]
        models: Option<PathBuf>,
        #[arg(long, default_value = "task2")]
        task: Task,
        #[arg(long, value_enum, default_value_t = Source::Eval)]
        source: Source,
    },
    /// Write a synthetic dataset and a matching config.
    Synth(SynthArgs),
    /// Train, evaluate and write every artifact.
    Run(Common),
}

#[derive(Clone, Copy, ValueEnum)]
enum Source {
    Train,
    Eval,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 200)]
    speakers: usize,
    #[arg(long, default_value_t = 3)]
    samples: usize,
    /// Vectors per blacklisted speaker in the development and test partitions.
    #[arg(long, default_value_t = 1)]
    eval_samples: usize,
    #[arg(long, default_value_t = 50)]
    dim: usize,
    #[arg(long, default_value_t = 1.0)]
    class_spread: f64,
    #[arg(long, default_value_t = 0.5)]
    within_spread: f64,
    #[arg(long, default_value_t = 0.5)]
    bg_fraction: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn load_config(c: &Common) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(&c.config)?;
    if let Some(s) = c.seed {
        cfg.train.seed = s;
    }
    if let Some(m) = c.max_classes {
        cfg.data.max_classes = Some(m);
    }
    if let Some(s) = c.split {
        cfg.data.split = s;
    }
    if let Some(o) = &c.out {
        cfg.out_dir = Some(o.clone());
    }
    if cfg.out_dir.is_none() {
        cfg.out_dir = Some(PathBuf::from("out"));
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print_progress(task: Task, e: &TraceEntry) {
    eprintln!("{task} round {} epoch {} mean_loss {}", e.round, e.epoch, e.mean_loss);
}

fn print_report(report: &EvalReport) {
    print!("{}", report.metrics_text());
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

fn write_dataset(path: &Path, ds: &Dataset) -> Result<()> {
    let file = File::create(path).map_err(io_err(path))?;
    ds.write_csv(BufWriter::new(file)).map_err(io_err(path))
}

fn ingest(config: &Path, out: Option<&Path>) -> Result<()> {
    let cfg = ExperimentConfig::load(config)?;
    if cfg.data.partitions.is_empty() {
        return Err(Error::Config("no data.partitions configured".into()));
    }
    if let Some(dir) = out {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    for (part, path) in &cfg.data.partitions {
        let file = File::open(path).map_err(io_err(path))?;
        let ds = tnnspk_core::dataset::parse_ivector_file(
            std::io::BufReader::new(file),
            cfg.data.dim,
            &cfg.data.blacklist_prefix,
        )
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        let bl = ds.speakers().iter().filter(|s| s.blacklisted).count();
        println!(
            "{part}: {} vectors, {} speakers ({bl} blacklisted), dim {}",
            ds.len(),
            ds.speakers().len(),
            ds.dim()
        );
        if let Some(dir) = out {
            write_dataset(&dir.join(format!("{}.csv", part.name())), &ds)?;
        }
    }
    Ok(())
}

fn project(common: &Common, models: Option<&Path>, task: Task, source: Source) -> Result<()> {
    let cfg = load_config(common)?;
    let (train, eval) = pipeline::prepare_data(&cfg)?;
    let ds = match source {
        Source::Train => train,
        Source::Eval => eval,
    };
    let (encoder, tag) = match models {
        Some(dir) => {
            let ckpt = pipeline::load_checkpoint(dir, task)?;
            let enc = Encoder::Net {
                params: ckpt.params.into(),
                normalize: ckpt.normalize,
            };
            (enc, task.to_string())
        }
        None => (Encoder::Identity, "raw".to_string()),
    };
    let points = pca_project(&encoder.encode(&ds)?, 2)?;
    let dir = cfg.out_dir.as_deref().expect("out dir defaulted");
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let path = dir.join(format!("projection.{tag}.csv"));
    let file = File::create(&path).map_err(io_err(&path))?;
    let mut w = BufWriter::new(file);
    let body = (|| {
        writeln!(w, "utterance,speaker,blacklisted,pc1,pc2")?;
        for (v, p) in ds.vectors().iter().zip(&points.points) {
            writeln!(w, "{},{},{},{},{}", v.utterance, v.speaker, u8::from(v.blacklisted), p[0], p[1])?;
        }
        w.flush()
    })();
    body.map_err(io_err(&path))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn synth(args: &SynthArgs) -> Result<()> {
    let params = SynthParams {
        n_speakers: args.speakers,
        samples_per_speaker: args.samples,
        dim: args.dim,
        class_spread: args.class_spread,
        within_spread: args.within_spread,
        bg_fraction: args.bg_fraction,
        seed: args.seed,
    };
    if args.samples < 2 {
        return Err(Error::Config("--samples must be at least 2 for triplet training".into()));
    }
    let parts: BTreeMap<Partition, Dataset> = synth_partitions(&params, args.eval_samples)?;
    fs::create_dir_all(&args.out).map_err(io_err(&args.out))?;
    for (part, ds) in &parts {
        write_dataset(&args.out.join(format!("{}.csv", part.name())), ds)?;
    }
    let cfg_path = args.out.join("experiment.toml");
    let text = format!(
        "data.dim = {}\n\
         data.partitions.training = \"training.csv\"\n\
         data.partitions.development = \"development.csv\"\n\
         data.partitions.test = \"test.csv\"\n\
         data.split = \"SetA\"\n\
         train.task1.pool_size = 20000\n\
         train.task1.epochs_per_pool = 5\n\
         train.task2.pool_size = 50000\n\
         train.learning_rate = 0.001\n\
         train.batch_size = 256\n\
         out.dir = \"out\"\n",
        args.dim
    );
    fs::write(&cfg_path, text).map_err(io_err(&cfg_path))?;
    println!("wrote {} and partitions to {}", cfg_path.display(), args.out.display());
    Ok(())
}

fn dispatch(cmd: &Command) -> Result<()> {
    match cmd {
        Command::Ingest { config, out } => ingest(config, out.as_deref()),
        Command::Train(c) => {
            let cfg = load_config(c)?;
            let models = pipeline::run_training(&cfg, print_progress)?;
            for (task, m) in &models {
                if let Some(last) = m.trace.last() {
                    println!("{task}.final_mean_loss = {}", last.mean_loss);
                }
            }
            Ok(())
        }
        Command::Eval { common, models } => {
            let cfg = load_config(common)?;
            print_report(&pipeline::run_evaluation(&cfg, models)?);
            Ok(())
        }
        Command::Baseline(c) => {
            let cfg = load_config(c)?;
            print_report(&pipeline::run_baseline(&cfg)?);
            Ok(())
        }
        Command::Project {
            common,
            models,
            task,
            source,
        } => project(common, models.as_deref(), *task, *source),
        Command::Synth(args) => synth(args),
        Command::Run(c) => {
            let cfg = load_config(c)?;
            print_report(&pipeline::run_experiment_with_progress(&cfg, print_progress)?);
            Ok(())
        }
    }
}

fn exit_code(err: &Error) -> u8 {
    match err.kind() {
        ErrorKind::Config => 1,
        ErrorKind::Data => 2,
        ErrorKind::Numeric => 3,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot set thread count: {e}");
            return ExitCode::from(1);
        }
    }
    match dispatch(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
