//! `probshape`: generate data, fit the shape prior, train, evaluate, sample
//! and plot.
//!
//! Exit codes: 0 success, 2 configuration or usage error, 3 runtime error.

mod config;
mod provenance;
mod svg;

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use probshape::data::{generate, ShapeDataset};
use probshape::encoder::{Head, Mode};
use probshape::inference::{PredictionRecord, PredictiveDistribution};
use probshape::io_util::{decode_pgm, f17_vec, unwrap_f17};
use probshape::trainer::{
    self, examples, fit_shape_model, initial_state, load_checkpoint, load_state, save_state,
    train_from, Checkpoint, CsvLog, RunDirs, Summary, TrainConfig,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::LoadedConfig;
use crate::provenance::Record;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Runtime(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) | CliError::Runtime(m) => f.write_str(m),
        }
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

impl From<probshape::Error> for CliError {
    fn from(e: probshape::Error) -> Self {
        match e {
            probshape::Error::InvalidArgument(_) => CliError::Config(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

type CliResult<T> = Result<T, CliError>;

#[derive(Parser)]
#[command(name = "probshape", version, about = "Probabilistic PCA contour prediction")]
struct Cli {
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the seed of the section the command uses.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, short, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset directory.
    Synth {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit the PCA shape model on a dataset's training split.
    FitPca {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        components: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train an encoder.
    Train {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Continue from `<out>/last`.
        #[arg(long)]
        resume: bool,
    },
    /// Score checkpoints on a split.
    Eval {
        #[arg(long = "checkpoint", required = true)]
        checkpoints: Vec<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, default_value = "test")]
        split: String,
        /// CSV output (default `eval_<split>.csv`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Draw contours from the predictive distribution of one image.
    Sample(SampleArgs),
    /// Render a prediction as SVG.
    Plot {
        #[arg(long)]
        prediction: PathBuf,
        #[arg(long)]
        image: PathBuf,
        /// Comma-separated confidence levels.
        #[arg(long, value_delimiter = ',')]
        levels: Option<Vec<f64>>,
        #[arg(long)]
        stride: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    id: String,
    #[arg(long, default_value_t = 0)]
    n: usize,
    /// Add the isotropic vertex noise to every draw.
    #[arg(long)]
    include_noise: bool,
    /// Compare empirical vertex moments against the closed form.
    #[arg(long)]
    stats: bool,
    /// How many draws to store in the output (default: all up to 1000).
    #[arg(long)]
    keep: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let level = if cli.verbose { "debug" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    let loaded = config::load(cli.config.as_deref())?;
    match cli.command {
        Command::Synth { out } => cmd_synth(&loaded, cli.seed, out),
        Command::FitPca {
            data,
            components,
            out,
        } => cmd_fit_pca(&loaded, data, components, &out),
        Command::Train { data, out, resume } => cmd_train(&loaded, cli.seed, data, out, resume),
        Command::Eval {
            checkpoints,
            data,
            split,
            out,
        } => cmd_eval(&loaded, &checkpoints, data, &split, out),
        Command::Sample(args) => cmd_sample(&loaded, cli.seed, args),
        Command::Plot {
            prediction,
            image,
            levels,
            stride,
            out,
        } => cmd_plot(&loaded, &prediction, &image, levels, stride, &out),
    }
}

fn need_path(flag: Option<PathBuf>, configured: &Option<PathBuf>, name: &str) -> CliResult<PathBuf> {
    flag.or_else(|| configured.clone())
        .ok_or_else(|| CliError::Config(format!("--{name} is required (or set paths.{name})")))
}

fn load_dataset(path: &Path) -> CliResult<ShapeDataset> {
    ShapeDataset::load(path).map_err(|e| CliError::Runtime(format!("dataset {}: {e}", path.display())))
}

fn parent_dir(path: &Path) -> PathBuf {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

fn file_key(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn cmd_synth(loaded: &LoadedConfig, seed: Option<u64>, out: Option<PathBuf>) -> CliResult<()> {
    let mut cfg = match (&loaded.config.synth, seed) {
        (Some(c), _) => c.clone(),
        (None, Some(s)) => probshape::data::SynthConfig::with_seed(s),
        (None, None) => {
            return Err(CliError::Config(
                "config error at `synth`: missing field `seed`".into(),
            ))
        }
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate().map_err(|e| CliError::Config(format!("synth: {e}")))?;
    let out = need_path(out, &loaded.config.paths.out, "out")?;
    let ds = generate(&cfg)?;
    ds.save(&out)?;
    log::info!(
        "wrote {} items to {} (train {}, val {}, test {})",
        ds.items.len(),
        out.display(),
        ds.splits["train"].len(),
        ds.splits["val"].len(),
        ds.splits["test"].len()
    );
    provenance::write(&out, ".", Record::new("synth", loaded.bytes.as_deref(), Some(cfg.seed)))?;
    Ok(())
}

fn cmd_fit_pca(
    loaded: &LoadedConfig,
    data: Option<PathBuf>,
    components: Option<usize>,
    out: &Path,
) -> CliResult<()> {
    let data = need_path(data, &loaded.config.paths.data, "data")?;
    let k = components
        .or(loaded.config.train.as_ref().map(|t| t.num_components))
        .unwrap_or(8);
    let ds = load_dataset(&data)?;
    let (model, hash) = fit_shape_model(&ds, k)?;
    model.save(out)?;
    let total: f64 = probshape::shape_model::covariance_spectrum(&ds.contours("train")?)?
        .iter()
        .sum();
    let kept: f64 = model.eigenvalues().iter().sum();
    log::info!(
        "fitted {k} components on train split {hash}; explained variance {:.4}",
        if total > 0.0 { kept / total } else { 1.0 }
    );
    provenance::write(
        &parent_dir(out),
        &file_key(out),
        Record::new("fit-pca", loaded.bytes.as_deref(), None).input(&data)?,
    )?;
    Ok(())
}

fn cmd_train(
    loaded: &LoadedConfig,
    seed: Option<u64>,
    data: Option<PathBuf>,
    out: Option<PathBuf>,
    resume: bool,
) -> CliResult<()> {
    let mut cfg = match (&loaded.config.train, seed) {
        (Some(c), _) => c.clone(),
        (None, Some(s)) => TrainConfig::with_seed(s),
        (None, None) => {
            return Err(CliError::Config(
                "config error at `train`: missing field `seed`".into(),
            ))
        }
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate().map_err(|e| CliError::Config(format!("train: {e}")))?;
    let data = need_path(data, &loaded.config.paths.data, "data")?;
    let out = need_path(out, &loaded.config.paths.out, "out")?;
    let ds = load_dataset(&data)?;
    let dirs = RunDirs::new(&out);
    let (state, model) = if resume {
        let (state, model) = load_state(&dirs, &cfg)?;
        log::info!("resuming at epoch {} step {}", state.epoch, state.step);
        (state, model)
    } else {
        let (model, hash) = fit_shape_model(&ds, cfg.num_components)?;
        log::info!("shape model fitted on train split {hash}");
        let spec = cfg
            .architecture
            .spec(ds.height, ds.width, cfg.head(ds.vertex_count));
        std::fs::create_dir_all(&out)?;
        let log_path = dirs.log();
        if log_path.exists() {
            std::fs::remove_file(&log_path)?;
        }
        (initial_state(&cfg, spec)?, model)
    };
    if state.net.head() != cfg.head(model.vertex_count()) {
        return Err(CliError::Config(format!(
            "checkpoint head {:?} does not match configured mode {}",
            state.net.head(),
            cfg.mode.as_str()
        )));
    }
    let train_set = examples(&ds, "train")?;
    let val = examples(&ds, "val")?;
    let mut csv = CsvLog::open(&dirs.log())?;
    let every = cfg.checkpoint_every;
    let outcome = train_from(state, &train_set, &val, &model, &cfg, |rec, st| {
        csv.append(rec)?;
        if every > 0 && rec.epoch % every == 0 {
            save_state(&dirs, st, &model, &cfg)?;
        }
        Ok(())
    })?;
    save_state(&dirs, &outcome.state, &model, &cfg)?;
    model.save(&out.join(trainer::SHAPE_MODEL_FILE))?;
    provenance::write(
        &out,
        ".",
        Record::new("train", loaded.bytes.as_deref(), Some(cfg.seed)).input(&data)?,
    )?;
    log::info!(
        "best validation DICE {:.4} at epoch {}",
        outcome.state.best_val_dice,
        outcome.state.best_epoch
    );
    if let Some(msg) = outcome.aborted {
        return Err(CliError::Runtime(format!(
            "{msg}; best checkpoint kept in {}",
            dirs.best().display()
        )));
    }
    Ok(())
}

/// Accepts a checkpoint directory or a training output directory.
fn resolve_checkpoint(path: &Path) -> CliResult<Checkpoint> {
    let dir = if path.join(probshape::encoder::MANIFEST_FILE).exists() {
        path.to_path_buf()
    } else {
        RunDirs::new(path).best()
    };
    load_checkpoint(&dir).map_err(|e| CliError::Runtime(format!("checkpoint {}: {e}", dir.display())))
}

pub fn method_label(head: Head) -> String {
    match head {
        Head::Probabilistic { latent_dim } => format!("probPCA {latent_dim}"),
        Head::DetPca { latent_dim } => format!("detPCA {latent_dim}"),
        Head::DirectVertex { .. } => "Direct Vertex".to_string(),
    }
}

pub fn format_table(rows: &[(String, Summary)]) -> String {
    let mut s = String::new();
    s.push_str(&format!(
        "{:<16} {:>15} {:>15} {:>6}\n",
        "method", "DICE", "RMSE (px)", "n"
    ));
    for (label, sm) in rows {
        s.push_str(&format!(
            "{:<16} {:>15} {:>15} {:>6}\n",
            label,
            format!("{:.2} ± {:.2}", sm.dice_mean, sm.dice_std),
            format!("{:.2} ± {:.2}", sm.rmse_mean, sm.rmse_std),
            sm.count
        ));
    }
    s.push_str("(± is the population standard deviation over subjects)\n");
    s
}

fn cmd_eval(
    loaded: &LoadedConfig,
    checkpoints: &[PathBuf],
    data: Option<PathBuf>,
    split: &str,
    out: Option<PathBuf>,
) -> CliResult<()> {
    let data = need_path(data, &loaded.config.paths.data, "data")?;
    let ds = load_dataset(&data)?;
    let set = examples(&ds, split)?;
    let mut rows = Vec::new();
    let mut record = Record::new("eval", loaded.bytes.as_deref(), None).input(&data)?;
    for path in checkpoints {
        let ck = resolve_checkpoint(path)?;
        let summary = trainer::evaluate(&ck.net, &set, &ck.model)?;
        rows.push((method_label(ck.net.head()), summary));
        record = record.input(path)?;
    }
    print!("{}", format_table(&rows));
    let out = out.unwrap_or_else(|| PathBuf::from(format!("eval_{split}.csv")));
    let mut csv = String::from("method,n,dice_mean,dice_std,rmse_mean,rmse_std\n");
    for (label, sm) in &rows {
        csv.push_str(&format!(
            "{label},{},{:e},{:e},{:e},{:e}\n",
            sm.count, sm.dice_mean, sm.dice_std, sm.rmse_mean, sm.rmse_std
        ));
    }
    std::fs::write(&out, csv)?;
    provenance::write(&parent_dir(&out), &file_key(&out), record)?;
    Ok(())
}

/// Share of entries within three standard errors, and the largest z-score.
fn moment_check(samples: &[Vec<f64>], dist: &PredictiveDistribution<f64>, include_noise: bool) -> (f64, f64, usize) {
    let n = samples.len() as f64;
    let d = dist.mean.len();
    let target = if include_noise {
        dist.clone()
    } else {
        PredictiveDistribution {
            sigma2: 0.0,
            ..dist.clone()
        }
    };
    let (mut within, mut total, mut worst) = (0usize, 0usize, 0.0f64);
    for i in 0..target.vertex_count() {
        let m = target.vertex_marginal(i).expect("index in range");
        let (ix, iy) = (2 * i, 2 * i + 1);
        let mean = |j: usize| samples.iter().map(|s| s[j]).sum::<f64>() / n;
        let (mx, my) = (mean(ix), mean(iy));
        let mut check = |emp: f64, want: f64, se: f64| {
            let z = if se > 0.0 { (emp - want).abs() / se } else if emp == want { 0.0 } else { f64::INFINITY };
            worst = worst.max(z);
            total += 1;
            if z <= 3.0 {
                within += 1;
            }
        };
        check(mx, m.mean[0], (m.cov[0] / n).sqrt());
        check(my, m.mean[1], (m.cov[2] / n).sqrt());
        for (a, b, want) in [(ix, ix, m.cov[0]), (ix, iy, m.cov[1]), (iy, iy, m.cov[2])] {
            let (ma, mb) = (if a == ix { mx } else { my }, if b == ix { mx } else { my });
            let prods: Vec<f64> = samples.iter().map(|s| (s[a] - ma) * (s[b] - mb)).collect();
            let c = prods.iter().sum::<f64>() / n;
            let v = prods.iter().map(|p| (p - c).powi(2)).sum::<f64>() / n;
            check(c, want, (v / n).sqrt());
        }
    }
    debug_assert_eq!(total, 5 * d / 2);
    (within as f64 / total as f64, worst, total)
}

fn cmd_sample(loaded: &LoadedConfig, seed: Option<u64>, args: SampleArgs) -> CliResult<()> {
    let data = need_path(args.data, &loaded.config.paths.data, "data")?;
    let ds = load_dataset(&data)?;
    let ck = resolve_checkpoint(&args.checkpoint)?;
    if ck.net.head().mode() != Mode::Probabilistic {
        return Err(CliError::Config(format!(
            "sampling needs a probabilistic checkpoint, got {}",
            ck.net.head().mode().as_str()
        )));
    }
    let item = ds.item(&args.id).map_err(|e| CliError::Config(e.to_string()))?;
    let image = ds.image(item)?;
    let dist = probshape::inference::predict(&ck.net, &image, &ck.model, ck.config.loss.sigma2)?;
    let seed = seed.unwrap_or(0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let keep = args.keep.unwrap_or(args.n.min(1000));
    let mut stored = Vec::new();
    let mut all = Vec::new();
    for i in 0..args.n {
        let s = dist.sample_contour(&mut rng, args.include_noise);
        if i < keep {
            stored.push(f17_vec(s.iter().copied()));
        }
        if args.stats {
            all.push(s);
        }
    }
    if args.stats && args.n > 1 {
        let (frac, worst, count) = moment_check(&all, &dist, args.include_noise);
        println!(
            "moment check over {} draws: {:.4} of {count} vertex mean/covariance entries within 3 SE (max |z| {worst:.2}); target covariance {}",
            args.n,
            frac,
            if args.include_noise { "includes sigma2 I" } else { "excludes sigma2 I" }
        );
    }
    let plot = &loaded.config.plot;
    let mut record = PredictionRecord::new(&dist, &plot.levels, plot.stride)?;
    record.id = Some(item.id.clone());
    record.reference = Some(f17_vec(item.contour.iter().copied()));
    record.samples = stored;
    let mut text = serde_json::to_string(&record)?;
    text.push('\n');
    std::fs::write(&args.out, text)?;
    provenance::write(
        &parent_dir(&args.out),
        &file_key(&args.out),
        Record::new("sample", loaded.bytes.as_deref(), Some(seed))
            .input(&data)?
            .input(&args.checkpoint)?,
    )?;
    Ok(())
}

fn cmd_plot(
    loaded: &LoadedConfig,
    prediction: &Path,
    image: &Path,
    levels: Option<Vec<f64>>,
    stride: Option<usize>,
    out: &Path,
) -> CliResult<()> {
    let text = std::fs::read_to_string(prediction)
        .map_err(|e| CliError::Config(format!("cannot read prediction {}: {e}", prediction.display())))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    let record: PredictionRecord = serde_path_to_error::deserialize(de).map_err(|e| {
        CliError::Config(format!(
            "prediction {} at `{}`: {}",
            prediction.display(),
            e.path(),
            e.inner()
        ))
    })?;
    let dist = record
        .distribution()
        .map_err(|e| CliError::Config(format!("prediction {}: {e}", prediction.display())))?;
    let levels = levels.unwrap_or_else(|| loaded.config.plot.levels.clone());
    if let Some(bad) = levels.iter().find(|&&l| !(l > 0.0 && l < 1.0)) {
        return Err(CliError::Config(format!("level {bad} is not in (0, 1)")));
    }
    let bytes = std::fs::read(image)?;
    let (width, height, pixels) = decode_pgm(&bytes, &image.display().to_string())?;
    let reference = record.reference.as_ref().map(|r| unwrap_f17(r));
    let samples: Vec<Vec<f64>> = record.samples.iter().map(|s| unwrap_f17(s)).collect();
    let svg_text = svg::render(&svg::PlotInput {
        raster: svg::Raster {
            width,
            height,
            pixels: &pixels,
        },
        dist: &dist,
        reference: reference.as_deref(),
        samples: &samples,
        levels: &levels,
        stride: stride.unwrap_or(loaded.config.plot.stride),
        scale: loaded.config.plot.scale,
    })?;
    std::fs::write(out, svg_text)?;
    provenance::write(
        &parent_dir(out),
        &file_key(out),
        Record::new("plot", loaded.bytes.as_deref(), None)
            .input(prediction)?
            .input(image)?,
    )?;
    Ok(())
}
