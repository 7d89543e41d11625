//! `gip` command-line front end.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use gip::checkpoint::{load_checkpoint, save_checkpoint, CheckpointMeta};
use gip::config::TrainConfig;
use gip::explain::{explain_instance, export_patterns};
use gip::graph::{
    generate_graphcycle_with, generate_graphfive_with, parse_tu_dataset, read_graph_json, split_dataset,
    write_tu_dataset, SplitSpec, SyntheticConfig,
};
use gip::kernel::{eval, KernelConfig};
use gip::metrics::evaluate;
use gip::model::Architecture;
use gip::train::{train_with_observer, write_history};
use gip::{Dataset64, GipError};

#[derive(Parser, Debug)]
#[command(name = "gip", version, about = "Graph classification with learnable interactive patterns")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Kind {
    Graphcycle,
    Graphfive,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Measure {
    Raw,
    Normalized,
    Distance,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic dataset in TU layout.
    GenData {
        #[arg(long, value_enum)]
        kind: Kind,
        #[arg(long, default_value_t = 300)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Small graphs: 3-5 communities of 10-30 nodes.
        #[arg(long)]
        desk: bool,
    },
    /// Train a model and write a checkpoint.
    Train {
        #[arg(long)]
        data: PathBuf,
        /// Dataset name; inferred from the `*_A.txt` file when omitted.
        #[arg(long)]
        name: Option<String>,
        #[arg(long, conflicts_with = "preset")]
        config: Option<PathBuf>,
        #[arg(long)]
        preset: Option<String>,
        #[arg(long)]
        out: PathBuf,
        /// `key=value` config overrides.
        overrides: Vec<String>,
    },
    /// Evaluate a trained model on its test split.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        name: Option<String>,
        /// Write metrics.json here instead of the model directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write per-graph explanations and the learned patterns.
    Explain {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        name: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Random-walk kernel between two graph JSON files.
    Kernel {
        g1: PathBuf,
        g2: PathBuf,
        #[arg(long = "R", default_value_t = 3)]
        steps: usize,
        #[arg(long, value_enum, default_value_t = Measure::Raw)]
        measure: Measure,
    },
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Lib(GipError),
}

impl From<GipError> for Failure {
    fn from(e: GipError) -> Self {
        match e {
            GipError::Config(_) => Failure::Usage(e.to_string()),
            other => Failure::Lib(other),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Lib(e.into())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Lib(e.into())
    }
}

fn exit_code(f: &Failure) -> u8 {
    match f {
        Failure::Usage(_) => 1,
        Failure::Lib(GipError::Divergence { .. } | GipError::NonFinite { .. }) => 3,
        Failure::Lib(_) => 2,
    }
}

fn infer_name(dir: &Path) -> Result<String, Failure> {
    let mut names = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|_| GipError::MissingFile(dir.to_path_buf()))? {
        let file = entry?.file_name().to_string_lossy().into_owned();
        if let Some(stem) = file.strip_suffix("_A.txt") {
            names.push(stem.to_string());
        }
    }
    match names.as_slice() {
        [one] => Ok(one.clone()),
        [] => Err(GipError::Dataset(format!("no *_A.txt file in {}", dir.display())).into()),
        _ => Err(Failure::Usage(format!("several datasets in {}, pass --name", dir.display()))),
    }
}

fn load_dataset(dir: &Path, name: Option<String>) -> Result<Dataset64, Failure> {
    let name = match name {
        Some(n) => n,
        None => infer_name(dir)?,
    };
    Ok(parse_tu_dataset(dir, &name)?)
}

fn gen_data(kind: Kind, n: usize, seed: u64, out: &Path, desk: bool) -> Result<(), Failure> {
    let synth = if desk { SyntheticConfig::desk() } else { SyntheticConfig::default() };
    let ds: Dataset64 = match kind {
        Kind::Graphcycle => generate_graphcycle_with(n, seed, &synth)?,
        Kind::Graphfive => generate_graphfive_with(n, seed, &synth)?,
    };
    write_tu_dataset(&ds, out)?;
    println!("wrote {} graphs ({}) to {}", ds.len(), ds.name, out.display());
    Ok(())
}

fn train_cmd(
    data: &Path,
    name: Option<String>,
    config: Option<&Path>,
    preset: Option<&str>,
    out: &Path,
    overrides: &[String],
) -> Result<(), Failure> {
    let base = match (config, preset) {
        (Some(path), _) => TrainConfig::load(path)?,
        (None, Some(p)) => TrainConfig::preset(p)?,
        (None, None) => TrainConfig::default(),
    };
    let cfg = base.with_overrides(overrides)?;
    cfg.validate()?;
    let ds = load_dataset(data, name)?;
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("config_resolved.toml"), cfg.to_toml_string())?;

    let split = split_dataset(&ds, cfg.split_ratios(), cfg.seed)?;
    std::fs::write(out.join("split.json"), serde_json::to_string_pretty(&split)?)?;
    let outcome = train_with_observer(&ds, &split, &cfg, |r| {
        let val = r.val_acc.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"));
        eprintln!("epoch {:>4}  loss {:.5}  ce {:.5}  val {val}", r.epoch, r.total, r.ce);
    })?;
    write_history(out.join("history.jsonl"), &outcome.history)?;
    let meta = CheckpointMeta {
        dataset: ds.name.clone(),
        arch: Architecture::for_dataset(&ds, &cfg)?,
        split,
        best_epoch: outcome.best_epoch,
        best_val_acc: outcome.best_val_acc.is_finite().then_some(outcome.best_val_acc),
    };
    save_checkpoint(out.join("model.ckpt"), &outcome.model, &cfg, &meta)?;
    println!("best epoch {} ; checkpoint in {}", outcome.best_epoch, out.display());
    Ok(())
}

fn check_split(split: &SplitSpec, ds: &Dataset64) -> Result<(), Failure> {
    let max = split.train.iter().chain(&split.val).chain(&split.test).copied().max();
    if max.is_some_and(|m| m >= ds.len()) {
        return Err(GipError::Dataset(format!("checkpoint split refers to graphs beyond the {} loaded", ds.len())).into());
    }
    Ok(())
}

fn eval_cmd(model_dir: &Path, data: &Path, name: Option<String>, out: Option<&Path>) -> Result<(), Failure> {
    let ckpt = load_checkpoint::<f64>(model_dir.join("model.ckpt"))?;
    let ds = load_dataset(data, name.or(Some(ckpt.meta.dataset.clone())))?;
    check_split(&ckpt.meta.split, &ds)?;
    let report = evaluate(&ckpt.model, &ds, &ckpt.meta.split.train, &ckpt.meta.split.test, &ckpt.config)?;
    let json = serde_json::to_string_pretty(&report)?;
    let dir = out.unwrap_or(model_dir);
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("metrics.json"), &json)?;
    println!("{json}");
    Ok(())
}

fn explain_cmd(model_dir: &Path, data: &Path, name: Option<String>, out: &Path) -> Result<(), Failure> {
    let ckpt = load_checkpoint::<f64>(model_dir.join("model.ckpt"))?;
    let ds = load_dataset(data, name.or(Some(ckpt.meta.dataset.clone())))?;
    check_split(&ckpt.meta.split, &ds)?;
    std::fs::create_dir_all(out)?;
    let mut lines = String::new();
    for &i in &ckpt.meta.split.test {
        let e = explain_instance(&ckpt.model, &ds.graphs[i], i, &ckpt.config)?;
        lines.push_str(&serde_json::to_string(&e)?);
        lines.push('\n');
    }
    std::fs::write(out.join("explanations.jsonl"), lines)?;
    let written = export_patterns(&ckpt.model, out.join("patterns"))?;
    println!("explained {} graphs, wrote {} pattern files", ckpt.meta.split.test.len(), written.len());
    Ok(())
}

fn kernel_cmd(g1: &Path, g2: &Path, steps: usize, measure: Measure) -> Result<(), Failure> {
    let a = read_graph_json::<f64>(g1)?;
    let b = read_graph_json::<f64>(g2)?;
    let cfg = KernelConfig::with_steps(steps);
    let v = match measure {
        Measure::Raw => eval::rw_kernel(&a, &b, &cfg)?,
        Measure::Normalized => eval::normalized_similarity(&a, &b, &cfg)?,
        Measure::Distance => eval::kernel_distance(&a, &b, &cfg)?,
    };
    println!("{v}");
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::GenData { kind, n, seed, out, desk } => gen_data(kind, n, seed, &out, desk),
        Command::Train { data, name, config, preset, out, overrides } => {
            train_cmd(&data, name, config.as_deref(), preset.as_deref(), &out, &overrides)
        }
        Command::Eval { model, data, name, out } => eval_cmd(&model, &data, name, out.as_deref()),
        Command::Explain { model, data, name, out } => explain_cmd(&model, &data, name, &out),
        Command::Kernel { g1, g2, steps, measure } => kernel_cmd(&g1, &g2, steps, measure),
    }
}

fn init_threads() -> Result<(), Failure> {
    let Ok(raw) = std::env::var("GIP_THREADS") else { return Ok(()) };
    let n: usize = raw.parse().map_err(|_| Failure::Usage(format!("GIP_THREADS={raw:?} is not a thread count")))?;
    // a second init (tests in one process) is harmless
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match init_threads().and_then(|()| run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Usage(msg) => eprintln!("error: {msg}"),
                Failure::Lib(e) => eprintln!("error: {e}"),
            }
            ExitCode::from(exit_code(&f))
        }
    }
}
