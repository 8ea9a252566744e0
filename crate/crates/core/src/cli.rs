//! Command-line front end. `run` parses arguments, dispatches to the
//! pipeline and maps failures onto exit codes:
//!
//! | code | meaning                                   |
//! |------|-------------------------------------------|
//! | 0    | success                                   |
//! | 1    | usage error (bad flag or configuration)   |
//! | 2    | data or file-format error                 |
//! | 3    | numeric failure (non-finite loss)         |

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::datagen::{load_split, make_dataset, DatagenConfig, DatasetImage};
use crate::error::Error;
use crate::eval::{evaluate, ImageBoxes};
use crate::formats::{
    load_model, read_icdar_file, read_pgm, save_model, write_icdar_file, write_stroke_map,
};
use crate::losses::LossConfig;
use crate::pipeline::{
    adapt, detect, fine_tune, generate_pseudo_labels, load_pseudo_labels, pseudo_targets,
    save_pseudo_labels, source_samples, unlabelled_targets, with_jobs, AdaptConfig,
};
use crate::strokestats::TstConfig;
use crate::swt::{stroke_width_transform, Polarity, SwtConfig};
use crate::toymodel::{pretrain, AtaConfig, Diagnostics, ToyModel};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "textadapt", version, about = "Synthetic-to-real adaptation for a toy score-map text detector")]
pub struct Cli {
    /// Worker threads for per-image stages (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic source / target dataset.
    Datagen(DatagenArgs),
    /// Stroke width transform of one PGM image.
    Swt(SwtArgs),
    /// Stage one: train on labelled source and unlabelled target images.
    Pretrain(PretrainArgs),
    /// Build filtered pseudo-labels for the target training split.
    Pseudolabel(PseudolabelArgs),
    /// Stage two: continue training with pseudo-labels.
    Finetune(FinetuneArgs),
    /// Pretrain, pseudo-label and fine-tune in one go; writes a report.
    Adapt(AdaptArgs),
    /// Write detections for every image of a directory.
    Predict(PredictArgs),
    /// Score detections against ground truth.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
pub struct DatagenArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 40)]
    pub n_source: usize,
    #[arg(long, default_value_t = 40)]
    pub n_target_train: usize,
    #[arg(long, default_value_t = 40)]
    pub n_target_test: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// JSON file with generator settings; missing keys keep their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PolarityArg {
    Dark,
    Light,
    Both,
}

impl From<PolarityArg> for Polarity {
    fn from(p: PolarityArg) -> Self {
        match p {
            PolarityArg::Dark => Polarity::DarkOnLight,
            PolarityArg::Light => Polarity::LightOnDark,
            PolarityArg::Both => Polarity::Both,
        }
    }
}

#[derive(Debug, Args)]
pub struct SwtFlags {
    /// Stroke polarity: dark text on light ground, the reverse, or both.
    #[arg(long, value_enum, default_value_t = PolarityArg::Dark)]
    pub polarity: PolarityArg,
    #[arg(long, default_value_t = 0.1)]
    pub canny_low: f64,
    #[arg(long, default_value_t = 0.3)]
    pub canny_high: f64,
    /// Longest ray in pixels (default: a quarter of the image diagonal).
    #[arg(long)]
    pub max_ray_len: Option<f64>,
}

impl SwtFlags {
    fn config(&self) -> SwtConfig {
        SwtConfig {
            canny_low: self.canny_low,
            canny_high: self.canny_high,
            polarity: self.polarity.into(),
            max_ray_len: self.max_ray_len,
            ..SwtConfig::default()
        }
    }
}

#[derive(Debug, Args)]
pub struct SwtArgs {
    #[arg(long)]
    pub image: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub swt: SwtFlags,
}

#[derive(Debug, Args)]
pub struct TrainFlags {
    /// Weight of the reversed domain gradient; 0 disables alignment.
    #[arg(long, default_value_t = 0.2)]
    pub lambda: f64,
    #[arg(long, default_value_t = 2000)]
    pub iters: usize,
    #[arg(long, default_value_t = 1e-2)]
    pub lr: f64,
    #[arg(long, default_value_t = 6)]
    pub batch_source: usize,
    #[arg(long, default_value_t = 6)]
    pub batch_target: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl TrainFlags {
    fn config(&self) -> AtaConfig {
        AtaConfig {
            lambda: self.lambda,
            lr: self.lr,
            iters: self.iters,
            batch_source: self.batch_source,
            batch_target: self.batch_target,
            seed: self.seed,
            ..AtaConfig::default()
        }
    }
}

#[derive(Debug, Args)]
pub struct TstFlags {
    /// Fraction of candidate negatives kept (lowest scores first).
    #[arg(long, default_value_t = 1.0 / 3.0)]
    pub eta: f64,
    /// Largest stroke-width standard deviation of a kept box.
    #[arg(long, default_value_t = 3.0)]
    pub eps1: f64,
    /// Smallest stroke width score of a kept box.
    #[arg(long, default_value_t = 0.30)]
    pub eps2: f64,
    #[arg(long, default_value_t = 0.8)]
    pub score_threshold: f64,
    #[arg(long, default_value_t = 16.0)]
    pub min_box_area: f64,
}

impl TstFlags {
    fn config(&self) -> TstConfig {
        TstConfig {
            eta: self.eta,
            eps1: self.eps1,
            eps2: self.eps2,
            score_threshold: self.score_threshold,
            min_box_area: self.min_box_area,
            ..TstConfig::default()
        }
    }
}

#[derive(Debug, Args)]
pub struct PretrainArgs {
    /// Dataset root with `source/` and `target_train/`.
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub train: TrainFlags,
    #[arg(long)]
    pub out: PathBuf,
    /// Training curve as CSV.
    #[arg(long)]
    pub log: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PseudolabelArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub tst: TstFlags,
    #[command(flatten)]
    pub swt: SwtFlags,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FinetuneArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub labels: PathBuf,
    #[command(flatten)]
    pub train: TrainFlags,
    /// Switch the domain branch off while fine-tuning.
    #[arg(long)]
    pub no_ata: bool,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub log: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AdaptArgs {
    /// Dataset root; `target_test/` is scored when present.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub train: TrainFlags,
    #[arg(long, default_value_t = 2000)]
    pub finetune_iters: usize,
    /// Fine-tune learning rate (defaults to `--lr`).
    #[arg(long)]
    pub finetune_lr: Option<f64>,
    #[command(flatten)]
    pub tst: TstFlags,
    #[command(flatten)]
    pub swt: SwtFlags,
    /// Stop after pretraining.
    #[arg(long)]
    pub skip_selftrain: bool,
    /// Switch the domain branch off while fine-tuning.
    #[arg(long)]
    pub no_ata_finetune: bool,
    #[arg(long, default_value_t = 1)]
    pub rounds: usize,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Directory of PGM images.
    #[arg(long)]
    pub images: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0.8)]
    pub score_threshold: f64,
    #[arg(long, default_value_t = 16.0)]
    pub min_box_area: f64,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    pub iou: f64,
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code. Errors are reported on standard error.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(cli) {
        Ok(()) => EXIT_OK,
        // reader went away, e.g. `| head`
        Err(e) if is_broken_pipe(&e) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code(&e)
        }
    }
}

fn is_broken_pipe(err: &anyhow::Error) -> bool {
    err.chain()
        .filter_map(|c| c.downcast_ref::<std::io::Error>())
        .any(|e| e.kind() == std::io::ErrorKind::BrokenPipe)
}

/// Writes one line to standard output without panicking on a closed pipe.
fn emit(line: &str) -> anyhow::Result<()> {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    writeln!(out, "{line}")?;
    out.flush()?;
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> i32 {
    match err.chain().find_map(|c| c.downcast_ref::<Error>()) {
        Some(Error::NonFinite { .. }) => EXIT_NUMERIC,
        Some(Error::Config(_)) => EXIT_USAGE,
        Some(_) => EXIT_DATA,
        None if err.chain().any(|c| c.is::<std::io::Error>() || c.is::<serde_json::Error>()) => EXIT_DATA,
        None => EXIT_USAGE,
    }
}

fn execute(cli: Cli) -> anyhow::Result<()> {
    let jobs = cli.jobs;
    with_jobs(jobs, move || match cli.command {
        Command::Datagen(a) => cmd_datagen(a),
        Command::Swt(a) => cmd_swt(a),
        Command::Pretrain(a) => cmd_pretrain(a),
        Command::Pseudolabel(a) => cmd_pseudolabel(a),
        Command::Finetune(a) => cmd_finetune(a),
        Command::Adapt(a) => cmd_adapt(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Eval(a) => cmd_eval(a),
    })?
}

fn cmd_datagen(a: DatagenArgs) -> anyhow::Result<()> {
    let cfg = match &a.config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str::<DatagenConfig>(&text)
                .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?
        }
        None => DatagenConfig::default(),
    };
    let m = make_dataset(&a.out, a.n_source, a.n_target_train, a.n_target_test, a.seed, &cfg)?;
    eprintln!(
        "wrote {} source, {} target_train, {} target_test images to {}",
        m.n_source,
        m.n_target_train,
        m.n_target_test,
        a.out.display()
    );
    Ok(())
}

fn cmd_swt(a: SwtArgs) -> anyhow::Result<()> {
    let cfg = a.swt.config();
    cfg.validate()?;
    let image = read_pgm(&a.image)?;
    let map = stroke_width_transform(&image, &cfg)?;
    write_stroke_map(&map, &a.out)?;
    Ok(())
}

fn split(data: &Path, name: &str, with_gt: bool) -> anyhow::Result<Vec<DatasetImage>> {
    let images = load_split(&data.join(name), with_gt)?;
    if images.is_empty() {
        return Err(Error::Data(format!("no images in {}", data.join(name).display())).into());
    }
    Ok(images)
}

fn write_curve(path: &Path, curve: &[Diagnostics]) -> anyhow::Result<()> {
    let mut text = String::from(Diagnostics::CSV_HEADER);
    text.push('\n');
    for d in curve {
        text.push_str(&d.csv_line());
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))?;
    Ok(())
}

fn cmd_pretrain(a: PretrainArgs) -> anyhow::Result<()> {
    let cfg = a.train.config();
    cfg.validate()?;
    let source = source_samples(&split(&a.data, "source", true)?);
    let target = unlabelled_targets(&split(&a.data, "target_train", false)?);
    let out = pretrain(&source, &target, &cfg, LossConfig::default())?;
    save_model(&out.model, &a.out)?;
    if let Some(log) = &a.log {
        write_curve(log, &out.curve)?;
    }
    if let Some(last) = out.curve.last() {
        eprintln!("{}\n{}", Diagnostics::CSV_HEADER, last.csv_line());
    }
    Ok(())
}

fn cmd_pseudolabel(a: PseudolabelArgs) -> anyhow::Result<()> {
    let (tst, swt) = (a.tst.config(), a.swt.config());
    tst.validate()?;
    swt.validate()?;
    let model = load_model(&a.model)?;
    let images = split(&a.data, "target_train", false)?;
    let labels = generate_pseudo_labels(&model, &images, &tst, &swt)?;
    let seeds = dataset_seeds(&a.data, "target_train");
    let manifest = save_pseudo_labels(&a.out, &labels, &model, &tst, &swt, &|id| {
        seeds.iter().find(|(i, _)| i == id).map(|&(_, s)| s)
    })?;
    let s = &manifest.summary;
    eprintln!(
        "{} images: {} boxes extracted, {} kept ({} SIGMA, {} SWS rejected, {} low-evidence)",
        s.images, s.boxes_extracted, s.boxes_kept, s.rejected_sigma, s.rejected_sws, s.low_evidence
    );
    Ok(())
}

/// `(id, seed)` pairs of a split from the dataset manifest, if readable.
fn dataset_seeds(data: &Path, name: &str) -> Vec<(String, u64)> {
    fs::read_to_string(data.join("manifest.json"))
        .ok()
        .and_then(|t| serde_json::from_str::<crate::datagen::DatasetManifest>(&t).ok())
        .and_then(|m| m.images.into_iter().find(|(n, _)| n == name))
        .map(|(_, ids)| ids)
        .unwrap_or_default()
}

fn cmd_finetune(a: FinetuneArgs) -> anyhow::Result<()> {
    let cfg = a.train.config();
    cfg.validate()?;
    let model = load_model(&a.model)?;
    let source = source_samples(&split(&a.data, "source", true)?);
    let (_, labels) = load_pseudo_labels(&a.labels)?;
    let target = pseudo_targets(&split(&a.data, "target_train", false)?, &labels)?;
    let (model, curve) = fine_tune(&model, &source, &target, &cfg, LossConfig::default(), !a.no_ata)?;
    save_model(&model, &a.out)?;
    if let Some(log) = &a.log {
        write_curve(log, &curve)?;
    }
    Ok(())
}

fn cmd_adapt(a: AdaptArgs) -> anyhow::Result<()> {
    let cfg = AdaptConfig {
        pretrain: a.train.config(),
        finetune_iters: a.finetune_iters,
        finetune_lr: a.finetune_lr,
        tst: a.tst.config(),
        swt: a.swt.config(),
        loss: LossConfig::default(),
        skip_selftrain: a.skip_selftrain,
        ata_during_finetune: !a.no_ata_finetune,
        rounds: a.rounds,
    };
    cfg.validate()?;
    let source = split(&a.data, "source", true)?;
    let target = split(&a.data, "target_train", false)?;
    let test_dir = a.data.join("target_test");
    let test = if test_dir.is_dir() {
        Some(load_split(&test_dir, true)?)
    } else {
        None
    };
    let out = adapt(&source, &target, &cfg, test.as_deref())?;

    fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    save_model(&out.model, a.out.join("model.tadm"))?;
    write_curve(&a.out.join("pretrain_curve.csv"), &out.pretrain_curve)?;
    if !cfg.skip_selftrain {
        write_curve(&a.out.join("finetune_curve.csv"), &out.finetune_curve)?;
    }
    let report = serde_json::to_string_pretty(&out.report)?;
    let path = a.out.join("report.json");
    fs::write(&path, report + "\n").map_err(|e| Error::io(&path, e))?;
    if let Some(test) = &test {
        write_detections(&out.model, test, &a.out.join("pred_target_test"), &cfg.tst)?;
    }
    for stage in &out.report.stages {
        if let Some(m) = &stage.eval {
            emit(&format!("{} {}", stage.stage, m.percent_line()))?;
        }
    }
    Ok(())
}

fn write_detections(model: &ToyModel, images: &[DatasetImage], dir: &Path, tst: &TstConfig) -> anyhow::Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for img in images {
        let boxes = detect(model, &img.image, tst)?;
        write_icdar_file(&boxes, dir.join(format!("res_{}.txt", img.id)))?;
    }
    Ok(())
}

fn cmd_predict(a: PredictArgs) -> anyhow::Result<()> {
    let tst = TstConfig {
        score_threshold: a.score_threshold,
        min_box_area: a.min_box_area,
        ..TstConfig::default()
    };
    tst.validate()?;
    let model = load_model(&a.model)?;
    let images = load_split(&a.images, false)?;
    write_detections(&model, &images, &a.out, &tst)
}

/// Image id of an ICDAR text file: the stem without a `gt_` or `res_` prefix.
fn box_file_id(path: &Path) -> Option<String> {
    if path.extension()? != "txt" {
        return None;
    }
    let stem = path.file_stem()?.to_str()?;
    let id = stem
        .strip_prefix("gt_")
        .or_else(|| stem.strip_prefix("res_"))
        .unwrap_or(stem);
    Some(id.to_string())
}

fn read_box_dir(dir: &Path) -> anyhow::Result<Vec<ImageBoxes>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths: Vec<PathBuf> = entries
        .map(|e| e.map(|e| e.path()).map_err(|err| Error::io(dir, err)))
        .collect::<Result<_, _>>()?;
    paths.sort();
    let mut out = Vec::new();
    for path in paths {
        if let Some(id) = box_file_id(&path) {
            let boxes = read_icdar_file(&path).with_context(|| path.display().to_string())?;
            out.push(ImageBoxes::new(id, boxes));
        }
    }
    Ok(out)
}

fn cmd_eval(a: EvalArgs) -> anyhow::Result<()> {
    if !(a.iou > 0.0 && a.iou <= 1.0) {
        bail!(Error::Config(format!("--iou must be in (0, 1], got {}", a.iou)));
    }
    let preds = read_box_dir(&a.pred)?;
    let gts = read_box_dir(&a.gt)?;
    let m = evaluate(&preds, &gts, a.iou)?;
    emit(&format!("{}\n{}", m.percent_line(), serde_json::to_string(&m)?))?;
    Ok(())
}
