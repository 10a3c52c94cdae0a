//! Command-line front end.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 bad or insufficient data,
//! 3 numeric failure, 64 usage error.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use regex::Regex;
use serde::Serialize;

use crate::corpus::{
    cache_path, collect_dry_files, ingest_rirs, load_manifest, make_pairs, save_manifest, split_groups,
    synthesize_example, write_example, CorpusError, Split, SplitOptions, SynthConfig, DEFAULT_GROUP_PATTERN,
};
use crate::dsp::DspError;
use crate::eval::{evaluate, EvalError};
use crate::models::{check_model_gradients, LossWeights, ModelConfig, ModelError, ModelKind, Scale};
use crate::trainer::{load_checkpoint, save_checkpoint, write_log, Dataset, TrainConfig, TrainError, Trainer};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;
pub const EXIT_USAGE: i32 = 64;

/// Largest relative gradient error `gradcheck` accepts.
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Parser)]
#[command(name = "dereverb", version, about = "Reverberant speech synthesis, RIR estimation and dereverberation training")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Ingest an RIR directory, group and split it, and write a manifest.
    Prepare(PrepareArgs),
    /// Pair dry clips with RIRs and cache the synthesized examples.
    Synth(SynthArgs),
    /// Train a model on cached examples.
    Train(TrainArgs),
    /// Compare analytic and finite-difference gradients of tiny models.
    Gradcheck(GradcheckArgs),
    /// Score a checkpoint on one split.
    Eval(EvalArgs),
    /// Print a model's architecture and parameter count.
    Info(InfoArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct PrepareArgs {
    /// Directory searched recursively for RIR WAV files.
    #[arg(long)]
    pub rir_dir: PathBuf,
    /// Regex applied to file stems; capture group 1 is the group code.
    #[arg(long, default_value = DEFAULT_GROUP_PATTERN)]
    pub group_pattern: String,
    #[arg(long, default_value_t = 200)]
    pub val: usize,
    #[arg(long, default_value_t = 200)]
    pub test: usize,
    /// Records kept per group.
    #[arg(long, default_value_t = 100)]
    pub cap: usize,
    /// Groups larger than this go to train.
    #[arg(long, default_value_t = 20)]
    pub big_group: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Manifest path to write.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SynthPreset {
    /// 16 kHz, 512/256 framing, 5 s clips.
    Standard,
    /// 28-sample clips with 8/4 framing, for smoke tests.
    Tiny,
}

impl SynthPreset {
    pub fn config(self) -> SynthConfig {
        match self {
            Self::Standard => SynthConfig::default(),
            Self::Tiny => SynthConfig::tiny(),
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct SynthArgs {
    /// Manifest written by `prepare`.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Dry clips; `train/`, `val/` and `test/` subdirectories set the split.
    #[arg(long)]
    pub dry_dir: PathBuf,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    pub rirs_per_dry: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Receives `manifest.jsonl` and one cached example per pair.
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, value_enum, default_value_t = SynthPreset::Standard)]
    pub preset: SynthPreset,
    #[arg(long, env = "DEREVERB_THREADS", default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    pub threads: u64,
}

fn parse_weights(s: &str) -> Result<LossWeights, String> {
    s.parse().map_err(|e: ModelError| e.to_string())
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    /// Manifest written by `synth`.
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, value_enum, default_value_t = ModelKind::Joint)]
    pub model: ModelKind,
    #[arg(long, value_enum, default_value_t = Scale::Desk)]
    pub scale: Scale,
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u64).range(1..))]
    pub epochs: u64,
    #[arg(long, default_value_t = 1e-4)]
    pub lr: f64,
    #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u64).range(1..))]
    pub batch: u64,
    /// Loss weights `w_dry,w_rir,w_rec` (joint model only).
    #[arg(long, default_value = "1,1,1", value_parser = parse_weights)]
    pub weights: LossWeights,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory for `model.ckpt` and `log.csv`.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, env = "DEREVERB_THREADS", default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    pub threads: u64,
    /// Also save `epoch_NNNN.ckpt` every this many epochs (0 disables).
    #[arg(long, default_value_t = 0)]
    pub checkpoint_every: usize,
    /// Validation examples scored per epoch.
    #[arg(long, default_value_t = 32)]
    pub val_limit: usize,
    /// Continue from this checkpoint for `--epochs` more epochs.
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum GradcheckModel {
    All,
    Rir,
    DryGru,
    DryUnet,
    Joint,
}

impl GradcheckModel {
    fn kinds(self) -> Vec<ModelKind> {
        match self {
            Self::All => ModelKind::ALL.to_vec(),
            Self::Rir => vec![ModelKind::Rir],
            Self::DryGru => vec![ModelKind::DryGru],
            Self::DryUnet => vec![ModelKind::DryUnet],
            Self::Joint => vec![ModelKind::Joint],
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct GradcheckArgs {
    #[arg(long, value_enum, default_value_t = GradcheckModel::All)]
    pub model: GradcheckModel,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Elements probed per parameter tensor (0 probes all).
    #[arg(long, default_value_t = 40)]
    pub max_per_param: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    /// Manifest written by `synth`.
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, value_enum, default_value_t = Split::Test)]
    pub split: Split,
    /// CSV report path.
    #[arg(long)]
    pub report: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct InfoArgs {
    /// Describe the model stored in this checkpoint.
    #[arg(long, conflicts_with_all = ["model", "scale"])]
    pub ckpt: Option<PathBuf>,
    /// Describe a preset instead.
    #[arg(long, value_enum, default_value_t = ModelKind::Joint)]
    pub model: ModelKind,
    #[arg(long, value_enum, default_value_t = Scale::Desk)]
    pub scale: Scale,
}

/// A failed command with its exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn new(code: i32, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }

    fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        Self::new(EXIT_IO, format!("{}: {e}", path.display()))
    }
}

fn dsp_code(e: &DspError) -> i32 {
    match e {
        DspError::Io(_) => EXIT_IO,
        _ => EXIT_DATA,
    }
}

fn corpus_code(e: &CorpusError) -> i32 {
    match e {
        CorpusError::Io { .. } => EXIT_IO,
        CorpusError::Dsp(d) => dsp_code(d),
        _ => EXIT_DATA,
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        Self::new(corpus_code(&e), e.to_string())
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        Self::new(EXIT_DATA, e.to_string())
    }
}

fn train_code(e: &TrainError) -> i32 {
    match e {
        TrainError::NonFiniteLoss { .. } => EXIT_NUMERIC,
        TrainError::Io { .. } => EXIT_IO,
        TrainError::Invalid(_) => EXIT_USAGE,
        TrainError::Corpus(c) => corpus_code(c),
        _ => EXIT_DATA,
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        Self::new(train_code(&e), e.to_string())
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        let code = match &e {
            EvalError::Io { .. } => EXIT_IO,
            EvalError::Dsp(d) => dsp_code(d),
            EvalError::Corpus(c) => corpus_code(c),
            EvalError::Train(t) => train_code(t),
            _ => EXIT_DATA,
        };
        Self::new(code, e.to_string())
    }
}

type CmdResult = Result<(), CliError>;

fn print_config(out: &mut dyn Write, name: &str, args: &impl Serialize) -> CmdResult {
    let json = serde_json::to_string(args).map_err(|e| CliError::new(EXIT_USAGE, e.to_string()))?;
    say(out, format_args!("{name} config: {json}"))
}

fn say(out: &mut dyn Write, msg: std::fmt::Arguments) -> CmdResult {
    writeln!(out, "{msg}").map_err(|e| CliError::new(EXIT_IO, format!("stdout: {e}")))
}

fn ensure_parent(path: &Path) -> CmdResult {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => std::fs::create_dir_all(p).map_err(|e| CliError::io(p, e)),
        _ => Ok(()),
    }
}

fn cmd_prepare(a: &PrepareArgs, out: &mut dyn Write) -> CmdResult {
    print_config(out, "prepare", a)?;
    let pattern =
        Regex::new(&a.group_pattern).map_err(|e| CliError::new(EXIT_USAGE, format!("--group-pattern: {e}")))?;
    let report = ingest_rirs(&a.rir_dir, &pattern)?;
    let opts = SplitOptions {
        val: a.val,
        test: a.test,
        cap: a.cap,
        big_group: a.big_group,
        seed: a.seed,
    };
    let manifest = split_groups(&report.records, &opts)?;
    ensure_parent(&a.out)?;
    save_manifest(&manifest, &a.out)?;
    let c = &manifest.split_counts;
    say(
        out,
        format_args!(
            "rirs {} (skipped {}): train {}, val {}, test {}, discarded {}",
            report.records.len(),
            report.skipped.len(),
            c.get(Split::Train),
            c.get(Split::Val),
            c.get(Split::Test),
            c.get(Split::Discarded)
        ),
    )?;
    say(out, format_args!("wrote {}", a.out.display()))
}

fn thread_pool(threads: u64) -> Result<rayon::ThreadPool, CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads as usize)
        .build()
        .map_err(|e| CliError::new(EXIT_USAGE, e.to_string()))
}

fn cmd_synth(a: &SynthArgs, out: &mut dyn Write) -> CmdResult {
    use rayon::prelude::*;

    print_config(out, "synth", a)?;
    let cfg = a.preset.config();
    let mut manifest = load_manifest(&a.manifest)?;
    let dry = collect_dry_files(&a.dry_dir)?;
    if dry.is_empty() {
        return Err(CorpusError::NoFilesFound(a.dry_dir.clone()).into());
    }
    manifest.pairs = make_pairs(&dry, &manifest, a.rirs_per_dry as usize, a.seed)?;
    manifest.synth = Some(cfg);
    std::fs::create_dir_all(&a.out_dir).map_err(|e| CliError::io(&a.out_dir, e))?;
    let path = a.out_dir.join("manifest.jsonl");

    let m = &manifest;
    let results: Vec<Result<(), CorpusError>> = thread_pool(a.threads)?.install(|| {
        (0..m.pairs.len())
            .into_par_iter()
            .map(|i| {
                let ex = synthesize_example(&m.pairs[i], m, &cfg)?;
                if !ex.all_finite() {
                    return Err(CorpusError::Invalid(format!("pair {i} produced non-finite values")));
                }
                write_example(&cache_path(&path, i), &ex)
            })
            .collect()
    });
    results.into_iter().collect::<Result<Vec<()>, _>>()?;
    save_manifest(&manifest, &path)?;
    for s in Split::USABLE {
        say(out, format_args!("{s}: {} pairs", manifest.pair_indices(s).len()))?;
    }
    say(out, format_args!("wrote {} and {} cached examples", path.display(), manifest.pairs.len()))
}

fn cmd_train(a: &TrainArgs, out: &mut dyn Write) -> CmdResult {
    print_config(out, "train", a)?;
    let config = TrainConfig {
        kind: a.model,
        scale: a.scale,
        weights: a.weights,
        epochs: a.epochs as usize,
        batch_size: a.batch as usize,
        lr: a.lr,
        seed: a.seed,
        threads: a.threads as usize,
        checkpoint_every: a.checkpoint_every,
        val_limit: a.val_limit,
    };
    config.validate()?;
    let data = Dataset::from_manifest(&a.manifest).map_err(TrainError::from)?;
    let mut trainer = match &a.resume {
        Some(p) => Trainer::from_checkpoint(load_checkpoint(p)?, config)?,
        None => Trainer::new(config)?,
    };
    say(out, format_args!("{}", trainer.model().config.describe().trim_end()))?;
    say(
        out,
        format_args!(
            "parameters {}, train examples {}, val examples {}",
            trainer.model().params.num_scalars(),
            data.train.len(),
            data.val.len()
        ),
    )?;
    std::fs::create_dir_all(&a.out).map_err(|e| CliError::io(&a.out, e))?;
    trainer.run(&data, Some(&a.out))?;
    save_checkpoint(&trainer.checkpoint(), &a.out.join("model.ckpt"))?;
    write_log(&a.out.join("log.csv"), trainer.log())?;
    for row in trainer.log().iter().rev().take(2).collect::<Vec<_>>().into_iter().rev() {
        let l = row.loss;
        say(
            out,
            format_args!(
                "epoch {} {}: total {:.6e}, dry {:.6e}, rir {:.6e}, rec {:.6e}",
                row.epoch, row.split, l.total, l.l_dry, l.l_rir, l.l_rec
            ),
        )?;
    }
    say(out, format_args!("wrote {}", a.out.join("model.ckpt").display()))
}

fn cmd_gradcheck(a: &GradcheckArgs, out: &mut dyn Write) -> CmdResult {
    print_config(out, "gradcheck", a)?;
    let max = (a.max_per_param > 0).then_some(a.max_per_param);
    let mut worst: f64 = 0.0;
    for kind in a.model.kinds() {
        let report = check_model_gradients(&ModelConfig::preset(kind, Scale::Tiny), a.seed, max)?;
        say(
            out,
            format_args!("{kind}: max rel err {:.3e} over {} elements", report.max_rel_err, report.checked),
        )?;
        worst = worst.max(report.max_rel_err);
    }
    say(out, format_args!("max rel err {worst:.3e} (tolerance {GRADCHECK_TOLERANCE:e})"))?;
    if !(worst <= GRADCHECK_TOLERANCE) {
        return Err(CliError::new(EXIT_NUMERIC, format!("gradient error {worst:e} exceeds {GRADCHECK_TOLERANCE:e}")));
    }
    Ok(())
}

fn cmd_eval(a: &EvalArgs, out: &mut dyn Write) -> CmdResult {
    print_config(out, "eval", a)?;
    let ckpt = load_checkpoint(&a.ckpt)?;
    let report = evaluate(&ckpt, &a.manifest, a.split)?;
    ensure_parent(&a.report)?;
    report.write_csv(&a.report)?;
    for agg in report.aggregates() {
        say(
            out,
            format_args!("{}: mean {:.6e}, std {:.6e}, n {}", agg.metric, agg.mean, agg.std, agg.count),
        )?;
    }
    say(out, format_args!("wrote {}", a.report.display()))
}

fn cmd_info(a: &InfoArgs, out: &mut dyn Write) -> CmdResult {
    print_config(out, "info", a)?;
    let (config, count) = match &a.ckpt {
        Some(p) => {
            let ckpt = load_checkpoint(p)?;
            say(out, format_args!("epoch {}, adam step {}", ckpt.epoch, ckpt.adam.step))?;
            let train = serde_json::to_string(&ckpt.train).unwrap_or_default();
            say(out, format_args!("training config: {train}"))?;
            let n = ckpt.params.num_scalars();
            (ckpt.model, n)
        }
        None => {
            let config = ModelConfig::preset(a.model, a.scale);
            let n = config.param_specs().iter().map(|s| s.shape.iter().product::<usize>()).sum();
            (config, n)
        }
    };
    say(out, format_args!("{}", config.describe().trim_end()))?;
    say(out, format_args!("parameters: {count}"))
}

fn dispatch(cli: &Cli, out: &mut dyn Write) -> CmdResult {
    match &cli.command {
        Command::Prepare(a) => cmd_prepare(a, out),
        Command::Synth(a) => cmd_synth(a, out),
        Command::Train(a) => cmd_train(a, out),
        Command::Gradcheck(a) => cmd_gradcheck(a, out),
        Command::Eval(a) => cmd_eval(a, out),
        Command::Info(a) => cmd_info(a, out),
    }
}

/// Parses `args` (program name first), runs the command, writes normal
/// output to `out` and errors to stderr, and returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(&cli, out) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}
