//! Mini-batch training with RMSProp, validation tracking and checkpoints.

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Parameter, RmsPropConfig, RmsPropState, Tensor};
use crate::data::ShapeDataset;
use crate::encoder::{CheckpointManifest, CheckpointMeta, Head, Image, Mode, Network, NetworkSpec};
use crate::error::{Error, Result};
use crate::io_util::sha256_hex;
use crate::loss::{
    baseline_loss_and_gradients, loss_and_gradients, BatchDraws, KldDraws, LikelihoodDraws,
    LossBreakdown, LossConfig,
};
use crate::metrics::{contour_dice, rmse};
use crate::rng::substream;
use crate::shape_model::PcaShapeModel;

pub const LOG_HEADER: &str = "epoch,step,total,negloglik,kld,val_dice,val_rmse,seconds";
pub const SHAPE_MODEL_FILE: &str = "shape_model.json";
pub const TRAIN_CONFIG_FILE: &str = "train_config.json";
pub const OPTIMIZER_FILE: &str = "optimizer.bin";
pub const STATE_FILE: &str = "state.json";

// stream tags for `substream`
const SHUFFLE: u64 = 1;
const LIKELIHOOD: u64 = 2;
const KLD: u64 = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Architecture {
    /// Nine 3x3 convolutions in three pooled blocks, then the dense head.
    Cnn { widths: [usize; 3] },
    Mlp { hidden: Vec<usize> },
}

impl Default for Architecture {
    fn default() -> Self {
        Architecture::Cnn {
            widths: [16, 32, 64],
        }
    }
}

impl Architecture {
    pub fn spec(&self, height: usize, width: usize, head: Head) -> NetworkSpec {
        match self {
            Architecture::Cnn { widths } => NetworkSpec::cl9p3dl1(height, width, *widths, head),
            Architecture::Mlp { hidden } => NetworkSpec::mlp(height, width, hidden, head),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "defaults::learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "defaults::batch_size")]
    pub batch_size: usize,
    #[serde(default = "defaults::epochs")]
    pub epochs: usize,
    pub seed: u64,
    #[serde(default)]
    pub loss: LossConfig,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default = "defaults::num_components")]
    pub num_components: usize,
    #[serde(default)]
    pub architecture: Architecture,
    /// Stop after this many epochs without a better validation DICE.
    #[serde(default = "defaults::patience")]
    pub patience: Option<usize>,
    /// Write the `last` checkpoint every this many epochs (0: only at the end).
    #[serde(default)]
    pub checkpoint_every: usize,
}

mod defaults {
    pub fn learning_rate() -> f64 {
        1e-4
    }
    pub fn batch_size() -> usize {
        5
    }
    pub fn epochs() -> usize {
        200
    }
    pub fn num_components() -> usize {
        8
    }
    pub fn patience() -> Option<usize> {
        Some(50)
    }
}

impl TrainConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            learning_rate: defaults::learning_rate(),
            batch_size: defaults::batch_size(),
            epochs: defaults::epochs(),
            seed,
            loss: LossConfig::default(),
            mode: Mode::default(),
            num_components: defaults::num_components(),
            architecture: Architecture::default(),
            patience: defaults::patience(),
            checkpoint_every: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.loss.validate()?;
        RmsPropConfig::with_learning_rate(self.learning_rate).validate()?;
        if self.batch_size == 0 || self.num_components == 0 {
            return Err(Error::InvalidArgument(
                "batch_size and num_components must be positive".into(),
            ));
        }
        if self.batch_size != self.loss.batch_size {
            return Err(Error::InvalidArgument(format!(
                "batch_size {} disagrees with loss.batch_size {}",
                self.batch_size, self.loss.batch_size
            )));
        }
        Ok(())
    }

    pub fn head(&self, vertex_count: usize) -> Head {
        Head::for_mode(self.mode, self.num_components, vertex_count)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainLogRecord {
    pub epoch: usize,
    /// Optimizer steps taken so far.
    pub step: usize,
    /// Mean over the epoch's batches.
    pub loss: LossBreakdown,
    pub val_dice: f64,
    pub val_rmse: f64,
    pub seconds: f64,
}

impl TrainLogRecord {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{:e},{:e},{:e},{:e},{:e},{:.3}",
            self.epoch,
            self.step,
            self.loss.total,
            self.loss.neg_loglik,
            self.loss.kld,
            self.val_dice,
            self.val_rmse,
            self.seconds
        )
    }
}

/// Mean and population standard deviation of the per-example scores.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub count: usize,
    pub dice_mean: f64,
    pub dice_std: f64,
    pub rmse_mean: f64,
    pub rmse_std: f64,
    pub dice: Vec<f64>,
    pub rmse: Vec<f64>,
}

pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    (m, v.sqrt())
}

impl Summary {
    pub fn from_scores(dice: Vec<f64>, rmse: Vec<f64>) -> Result<Self> {
        if dice.is_empty() || dice.len() != rmse.len() {
            return Err(Error::Empty("evaluation split"));
        }
        let (dice_mean, dice_std) = mean_std(&dice);
        let (rmse_mean, rmse_std) = mean_std(&rmse);
        Ok(Self {
            count: dice.len(),
            dice_mean,
            dice_std,
            rmse_mean,
            rmse_std,
            dice,
            rmse,
        })
    }
}

/// Point prediction used for scoring: the predictive mean for the
/// probabilistic head, the decoded or raw output for the baselines.
pub fn point_prediction(net: &Network, image: &Image, model: &PcaShapeModel<f64>) -> Result<Vec<f64>> {
    let row = net.forward_raw(&[image])?.remove(0);
    match net.head() {
        Head::Probabilistic { latent_dim } => {
            model.decode(&row[..latent_dim], [row[2 * latent_dim], row[2 * latent_dim + 1]])
        }
        Head::DetPca { latent_dim } => {
            model.decode(&row[..latent_dim], [row[latent_dim], row[latent_dim + 1]])
        }
        Head::DirectVertex { .. } => Ok(row),
    }
}

/// DICE and RMSE of the point predictions over `examples`.
pub fn evaluate(
    net: &Network,
    examples: &[(Image, Vec<f64>)],
    model: &PcaShapeModel<f64>,
) -> Result<Summary> {
    if examples.is_empty() {
        return Err(Error::Empty("evaluation split"));
    }
    let mut dice = Vec::with_capacity(examples.len());
    let mut err = Vec::with_capacity(examples.len());
    for (image, reference) in examples {
        let pred = point_prediction(net, image, model)?;
        dice.push(contour_dice(&pred, reference, image.height, image.width)?);
        err.push(rmse(&pred, reference)?);
    }
    Summary::from_scores(dice, err)
}

/// Standardized images and contours of a split.
pub fn examples(ds: &ShapeDataset, split: &str) -> Result<Vec<(Image, Vec<f64>)>> {
    ds.split(split)?
        .into_iter()
        .map(|it| Ok((ds.image(it)?, it.contour.clone())))
        .collect()
}

/// Everything needed to continue a run.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub net: Network,
    pub optimizer: RmsPropState,
    /// Epochs completed.
    pub epoch: usize,
    pub step: usize,
    pub best: Network,
    pub best_epoch: usize,
    pub best_val_dice: f64,
    pub epochs_since_best: usize,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub state: TrainState,
    pub log: Vec<TrainLogRecord>,
    /// Set when training stopped on a non-finite loss.
    pub aborted: Option<String>,
}

pub fn initial_state(cfg: &TrainConfig, spec: NetworkSpec) -> Result<TrainState> {
    let net = Network::build(spec, cfg.seed)?;
    let optimizer = RmsPropState::new(RmsPropConfig::with_learning_rate(cfg.learning_rate), net.params())?;
    Ok(TrainState {
        best: net.clone(),
        net,
        optimizer,
        epoch: 0,
        step: 0,
        best_epoch: 0,
        best_val_dice: f64::NEG_INFINITY,
        epochs_since_best: 0,
    })
}

/// Loss and gradients for one batch of training indices.
fn batch_step(
    net: &Network,
    train: &[(Image, Vec<f64>)],
    idx: &[usize],
    model: &PcaShapeModel<f64>,
    cfg: &TrainConfig,
    epoch: usize,
    step: usize,
) -> Result<(LossBreakdown, Vec<Tensor>)> {
    let batch: Vec<(&Image, &[f64])> = idx.iter().map(|&i| (&train[i].0, train[i].1.as_slice())).collect();
    if cfg.mode != Mode::Probabilistic {
        let (mse, grads) = baseline_loss_and_gradients(&batch, net, model)?;
        let b = LossBreakdown {
            neg_loglik: mse,
            kld: 0.0,
            total: mse,
        };
        return Ok((b, grads));
    }
    let k = model.num_components();
    let l = cfg.loss.num_mc_samples;
    let likelihood = idx
        .iter()
        .map(|&i| {
            let mut rng = substream(cfg.seed, &[LIKELIHOOD, epoch as u64, i as u64]);
            LikelihoodDraws::sample(&mut rng, l, k)
        })
        .collect();
    let mut rng = substream(cfg.seed, &[KLD, epoch as u64, step as u64]);
    let kld = KldDraws::sample(&mut rng, l, idx.len(), k);
    loss_and_gradients(&batch, net, model, &cfg.loss, &BatchDraws { likelihood, kld })
}

/// Continues `state` up to `cfg.epochs`. `on_epoch` sees every record and the
/// state after it (used for logging and periodic checkpoints).
pub fn train_from(
    mut state: TrainState,
    train: &[(Image, Vec<f64>)],
    val: &[(Image, Vec<f64>)],
    model: &PcaShapeModel<f64>,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&TrainLogRecord, &TrainState) -> Result<()>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let expected = cfg.head(model.vertex_count());
    if state.net.head() != expected {
        return Err(Error::HeadMismatch {
            expected: expected.mode().as_str(),
            actual: state.net.head().mode().as_str(),
        });
    }
    if train.len() < cfg.batch_size {
        return Err(Error::InvalidArgument(format!(
            "training split has {} examples, fewer than one batch of {}",
            train.len(),
            cfg.batch_size
        )));
    }
    let mut log = Vec::new();
    let start = Instant::now();
    let mut aborted = None;
    while state.epoch < cfg.epochs {
        if let Some(p) = cfg.patience {
            if state.epochs_since_best >= p && state.epoch > 0 {
                log::info!("no validation improvement for {p} epochs; stopping");
                break;
            }
        }
        let epoch = state.epoch;
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut substream(cfg.seed, &[SHUFFLE, epoch as u64]));
        let mut sums = [0.0; 3];
        let mut batches = 0usize;
        for idx in order.chunks_exact(cfg.batch_size) {
            let (b, grads) = batch_step(&state.net, train, idx, model, cfg, epoch, state.step)?;
            if !b.total.is_finite() {
                aborted = Some(format!("{}", Error::NonFiniteLoss { epoch, step: state.step }));
                break;
            }
            let mut params: Vec<Parameter> = state.net.params().to_vec();
            if let Err(e) = state.optimizer.step(&mut params, &grads) {
                aborted = Some(e.to_string());
                break;
            }
            state.net.params_mut().clone_from_slice(&params);
            state.step += 1;
            batches += 1;
            sums[0] += b.total;
            sums[1] += b.neg_loglik;
            sums[2] += b.kld;
        }
        if let Some(msg) = &aborted {
            log::error!("{msg}; keeping the best checkpoint from epoch {}", state.best_epoch);
            break;
        }
        state.epoch += 1;
        let summary = evaluate(&state.net, val, model)?;
        let n = batches.max(1) as f64;
        let record = TrainLogRecord {
            epoch: state.epoch,
            step: state.step,
            loss: LossBreakdown {
                total: sums[0] / n,
                neg_loglik: sums[1] / n,
                kld: sums[2] / n,
            },
            val_dice: summary.dice_mean,
            val_rmse: summary.rmse_mean,
            seconds: start.elapsed().as_secs_f64(),
        };
        if summary.dice_mean > state.best_val_dice {
            state.best_val_dice = summary.dice_mean;
            state.best = state.net.clone();
            state.best_epoch = state.epoch;
            state.epochs_since_best = 0;
        } else {
            state.epochs_since_best += 1;
        }
        log::info!(
            "epoch {} step {} loss {:.4e} val dice {:.4} rmse {:.3}",
            record.epoch,
            record.step,
            record.loss.total,
            record.val_dice,
            record.val_rmse
        );
        on_epoch(&record, &state)?;
        log.push(record);
    }
    Ok(TrainOutcome {
        state,
        log,
        aborted,
    })
}

/// Trains a fresh network. The shape model must come from the training
/// split alone.
pub fn train(
    train_set: &[(Image, Vec<f64>)],
    val: &[(Image, Vec<f64>)],
    model: &PcaShapeModel<f64>,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let (h, w) = train_set
        .first()
        .map(|(img, _)| (img.height, img.width))
        .ok_or(Error::Empty("training split"))?;
    let spec = cfg.architecture.spec(h, w, cfg.head(model.vertex_count()));
    train_from(initial_state(cfg, spec)?, train_set, val, model, cfg, |_, _| Ok(()))
}

/// Fits the shape model on the training split and checks the split hashes
/// for leakage. Returns the model and the training-split hash.
pub fn fit_shape_model(ds: &ShapeDataset, num_components: usize) -> Result<(PcaShapeModel<f64>, String)> {
    let train_hash = ds.split_hash("train")?;
    for other in ["val", "test"] {
        if ds.splits.get(other).is_some_and(|ids| !ids.is_empty()) && ds.split_hash(other)? == train_hash {
            return Err(Error::InvalidArgument(format!(
                "training split hash equals the {other} split hash"
            )));
        }
    }
    let model = PcaShapeModel::fit(&ds.contours("train")?, num_components)?;
    Ok((model, train_hash))
}

/// Directory holding a network, its shape model and training config.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub net: Network,
    pub manifest: CheckpointManifest,
    pub model: PcaShapeModel<f64>,
    pub config: TrainConfig,
}

pub fn save_checkpoint(
    dir: &Path,
    net: &Network,
    model: &PcaShapeModel<f64>,
    cfg: &TrainConfig,
    epoch: usize,
    step: usize,
) -> Result<CheckpointManifest> {
    let manifest = net.save(
        dir,
        CheckpointMeta {
            num_components: model.num_components(),
            vertex_count: model.vertex_count(),
            epoch,
            step,
        },
    )?;
    model.save(&dir.join(SHAPE_MODEL_FILE))?;
    std::fs::write(dir.join(TRAIN_CONFIG_FILE), serde_json::to_string_pretty(cfg)?)?;
    Ok(manifest)
}

pub fn load_checkpoint(dir: &Path) -> Result<Checkpoint> {
    let (net, manifest) = Network::load(dir)?;
    let model = PcaShapeModel::load(&dir.join(SHAPE_MODEL_FILE))?;
    let config: TrainConfig = serde_json::from_str(&std::fs::read_to_string(dir.join(TRAIN_CONFIG_FILE))?)?;
    if model.num_components() != manifest.num_components || model.vertex_count() != manifest.vertex_count {
        return Err(Error::Checkpoint(
            "shape model does not match the checkpoint manifest".into(),
        ));
    }
    Ok(Checkpoint {
        net,
        manifest,
        model,
        config,
    })
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ResumeInfo {
    epoch: usize,
    step: usize,
    best_epoch: usize,
    best_val_dice: Option<f64>,
    epochs_since_best: usize,
    optimizer_checksum: String,
}

/// Layout of a training output directory.
#[derive(Debug, Clone)]
pub struct RunDirs {
    pub root: PathBuf,
}

impl RunDirs {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }
    pub fn best(&self) -> PathBuf {
        self.root.join("best")
    }
    pub fn last(&self) -> PathBuf {
        self.root.join("last")
    }
    pub fn log(&self) -> PathBuf {
        self.root.join("train_log.csv")
    }
}

/// Writes the full resumable state: `last/` with optimizer and counters,
/// and `best/`.
pub fn save_state(dirs: &RunDirs, state: &TrainState, model: &PcaShapeModel<f64>, cfg: &TrainConfig) -> Result<()> {
    save_checkpoint(&dirs.best(), &state.best, model, cfg, state.best_epoch, state.step)?;
    let last = dirs.last();
    save_checkpoint(&last, &state.net, model, cfg, state.epoch, state.step)?;
    let mut blob = Vec::new();
    for acc in &state.optimizer.accumulators {
        for x in acc.data() {
            blob.extend_from_slice(&x.to_le_bytes());
        }
    }
    std::fs::write(last.join(OPTIMIZER_FILE), &blob)?;
    let info = ResumeInfo {
        epoch: state.epoch,
        step: state.step,
        best_epoch: state.best_epoch,
        best_val_dice: state.best_val_dice.is_finite().then_some(state.best_val_dice),
        epochs_since_best: state.epochs_since_best,
        optimizer_checksum: sha256_hex(&blob),
    };
    std::fs::write(last.join(STATE_FILE), serde_json::to_string_pretty(&info)?)?;
    Ok(())
}

/// Restores what [`save_state`] wrote. The learning rate comes from `cfg`.
pub fn load_state(dirs: &RunDirs, cfg: &TrainConfig) -> Result<(TrainState, PcaShapeModel<f64>)> {
    let last = load_checkpoint(&dirs.last())?;
    let best = load_checkpoint(&dirs.best())?;
    let info: ResumeInfo = serde_json::from_str(&std::fs::read_to_string(dirs.last().join(STATE_FILE))?)?;
    let blob = std::fs::read(dirs.last().join(OPTIMIZER_FILE))?;
    if sha256_hex(&blob) != info.optimizer_checksum {
        return Err(Error::Checkpoint("optimizer.bin checksum mismatch".into()));
    }
    let mut optimizer = RmsPropState::new(RmsPropConfig::with_learning_rate(cfg.learning_rate), last.net.params())?;
    let need: usize = optimizer.accumulators.iter().map(Tensor::len).sum();
    if blob.len() != need * 8 {
        return Err(Error::Checkpoint(format!(
            "optimizer.bin is {} bytes, expected {}",
            blob.len(),
            need * 8
        )));
    }
    let mut floats = blob.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")));
    for acc in &mut optimizer.accumulators {
        for x in acc.data_mut() {
            *x = floats.next().expect("length checked");
        }
    }
    Ok((
        TrainState {
            net: last.net,
            optimizer,
            epoch: info.epoch,
            step: info.step,
            best: best.net,
            best_epoch: info.best_epoch,
            best_val_dice: info.best_val_dice.unwrap_or(f64::NEG_INFINITY),
            epochs_since_best: info.epochs_since_best,
        },
        last.model,
    ))
}

/// Appends records to a CSV log, writing the header for a new file.
pub struct CsvLog {
    file: std::fs::File,
}

impl CsvLog {
    pub fn open(path: &Path) -> Result<Self> {
        let exists = path.exists() && std::fs::metadata(path)?.len() > 0;
        let mut file = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
        if !exists {
            writeln!(file, "{LOG_HEADER}")?;
        }
        Ok(Self { file })
    }

    pub fn append(&mut self, rec: &TrainLogRecord) -> Result<()> {
        writeln!(self.file, "{}", rec.csv_line())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate, SynthConfig};

    fn tiny() -> (ShapeDataset, TrainConfig) {
        let ds = generate(&SynthConfig {
            count: 20,
            height: 16,
            width: 16,
            vertex_count: 8,
            radius_range: [3.0, 4.0],
            wall_thickness: [1.0, 2.0],
            harmonic_amplitudes: vec![0.5, 0.3],
            ..SynthConfig::with_seed(2)
        })
        .unwrap();
        let cfg = TrainConfig {
            epochs: 2,
            num_components: 3,
            architecture: Architecture::Mlp { hidden: vec![8] },
            ..TrainConfig::with_seed(5)
        };
        (ds, cfg)
    }

    #[test]
    fn population_std_convention() {
        let s = Summary::from_scores(vec![0.8, 1.0], vec![0.0, 0.0]).unwrap();
        assert!((s.dice_mean - 0.9).abs() < 1e-15);
        assert!((s.dice_std - 0.1).abs() < 1e-15);
        assert!(Summary::from_scores(vec![], vec![]).is_err());
    }

    #[test]
    fn zero_epochs_returns_initial_network() {
        let (ds, mut cfg) = tiny();
        cfg.epochs = 0;
        let (model, _) = fit_shape_model(&ds, cfg.num_components).unwrap();
        let tr = examples(&ds, "train").unwrap();
        let va = examples(&ds, "val").unwrap();
        let out = train(&tr, &va, &model, &cfg).unwrap();
        let spec = cfg.architecture.spec(16, 16, cfg.head(8));
        assert_eq!(out.state.net, Network::build(spec, cfg.seed).unwrap());
        assert!(out.log.is_empty());
    }

    #[test]
    fn training_is_deterministic_in_every_mode() {
        let (ds, cfg) = tiny();
        let (model, _) = fit_shape_model(&ds, cfg.num_components).unwrap();
        let tr = examples(&ds, "train").unwrap();
        let va = examples(&ds, "val").unwrap();
        for mode in [Mode::Probabilistic, Mode::DirectVertex, Mode::DetPca] {
            let cfg = TrainConfig { mode, ..cfg.clone() };
            let a = train(&tr, &va, &model, &cfg).unwrap();
            let b = train(&tr, &va, &model, &cfg).unwrap();
            assert_eq!(a.state.net, b.state.net);
            assert_eq!(a.log.len(), 2);
            // 14 training items, batch 5 -> 2 full batches per epoch
            assert_eq!(a.log[1].step, 4);
            assert_ne!(a.state.net, Network::build(a.state.net.spec().clone(), cfg.seed).unwrap());
        }
    }

    #[test]
    fn resume_matches_uninterrupted_run() {
        let (ds, cfg) = tiny();
        let (model, _) = fit_shape_model(&ds, cfg.num_components).unwrap();
        let tr = examples(&ds, "train").unwrap();
        let va = examples(&ds, "val").unwrap();
        let full = train(&tr, &va, &model, &TrainConfig { epochs: 3, ..cfg.clone() }).unwrap();
        let half = train(&tr, &va, &model, &TrainConfig { epochs: 1, ..cfg.clone() }).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let dirs = RunDirs::new(dir.path());
        save_state(&dirs, &half.state, &model, &cfg).unwrap();
        let (state, m2) = load_state(&dirs, &cfg).unwrap();
        assert_eq!(m2, model);
        let cfg3 = TrainConfig { epochs: 3, ..cfg.clone() };
        let rest = train_from(state, &tr, &va, &model, &cfg3, |_, _| Ok(())).unwrap();
        assert_eq!(rest.state.net, full.state.net);
        assert_eq!(rest.state.step, full.state.step);
        assert_eq!(rest.log.last().unwrap().val_dice, full.log.last().unwrap().val_dice);
    }

    #[test]
    fn batch_size_must_agree_with_loss() {
        let mut cfg = TrainConfig::with_seed(1);
        cfg.batch_size = 4;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn missing_seed_rejected() {
        assert!(serde_json::from_str::<TrainConfig>("{}").is_err());
        let c: TrainConfig = serde_json::from_str(r#"{"seed": 9}"#).unwrap();
        assert_eq!(c, TrainConfig::with_seed(9));
    }
}
