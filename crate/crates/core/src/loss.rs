//! Training objective: a Monte-Carlo lower bound on `ln p(y|x)` plus a
//! Monte-Carlo estimate of the KL divergence between the batch's aggregate
//! latent posterior and the unit Gaussian prior.
//!
//! Every estimator exists twice: as plain arithmetic (generic over the
//! scalar, used for evaluation and statistics) and recorded on a [`Tape`]
//! (used for gradients). Both consume the same frozen noise draws, so they
//! agree to rounding.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Tensor, Var};
use crate::encoder::{EncoderOutput, Head, Image, Mode, Network, LOGVAR_RANGE};
use crate::error::{Error, Result};
use crate::rng::standard_normals;
use crate::scalar::Real;
use crate::shape_model::PcaShapeModel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossConfig {
    /// Isotropic vertex noise variance (px^2).
    pub sigma2: f64,
    /// Weight of the KL term.
    pub lambda: f64,
    /// Monte-Carlo samples per example (and for the KL estimate).
    pub num_mc_samples: usize,
    pub batch_size: usize,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            sigma2: 5e-2,
            lambda: 1e5,
            num_mc_samples: 5,
            batch_size: 5,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma2 > 0.0 && self.sigma2.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "sigma2 must be positive, got {}",
                self.sigma2
            )));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "lambda must be non-negative, got {}",
                self.lambda
            )));
        }
        if self.num_mc_samples == 0 || self.batch_size == 0 {
            return Err(Error::InvalidArgument(
                "num_mc_samples and batch_size must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    /// `-sum_n (1/L) sum_l ln p(y_n | z_l)`.
    pub neg_loglik: f64,
    pub kld: f64,
    /// `lambda * kld + neg_loglik`.
    pub total: f64,
}

/// Sample mean of per-draw terms with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate<T> {
    pub value: T,
    pub std_err: T,
}

impl<T: Real> McEstimate<T> {
    fn from_terms(terms: &[T]) -> Self {
        let n = T::from_usize_lossy(terms.len());
        let mean = terms.iter().copied().sum::<T>() / n;
        let std_err = if terms.len() > 1 {
            let var = terms.iter().map(|&t| (t - mean).square()).sum::<T>()
                / T::from_usize_lossy(terms.len() - 1);
            (var / n).sqrt()
        } else {
            T::zero()
        };
        Self {
            value: mean,
            std_err,
        }
    }
}

/// Standard-normal draws for the likelihood bound of one example (`L x K`).
#[derive(Debug, Clone, PartialEq)]
pub struct LikelihoodDraws {
    pub eps: Vec<Vec<f64>>,
}

impl LikelihoodDraws {
    pub fn sample<R: Rng + ?Sized>(rng: &mut R, samples: usize, latent_dim: usize) -> Self {
        Self {
            eps: (0..samples)
                .map(|_| standard_normals(rng, latent_dim))
                .collect(),
        }
    }
}

/// Draws for the KL estimate: a mixture component and a standard-normal
/// vector per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct KldDraws {
    pub components: Vec<usize>,
    pub eps: Vec<Vec<f64>>,
}

impl KldDraws {
    pub fn sample<R: Rng + ?Sized>(
        rng: &mut R,
        samples: usize,
        mixture_size: usize,
        latent_dim: usize,
    ) -> Self {
        let mut components = Vec::with_capacity(samples);
        let mut eps = Vec::with_capacity(samples);
        for _ in 0..samples {
            components.push(rng.random_range(0..mixture_size));
            eps.push(standard_normals(rng, latent_dim));
        }
        Self { components, eps }
    }
}

/// All noise consumed by one evaluation of the batch objective.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchDraws {
    pub likelihood: Vec<LikelihoodDraws>,
    pub kld: KldDraws,
}

impl BatchDraws {
    /// Sequential draws from one stream: per-example likelihood noise first,
    /// then the KL draws.
    pub fn sample<R: Rng + ?Sized>(
        rng: &mut R,
        batch: usize,
        latent_dim: usize,
        cfg: &LossConfig,
    ) -> Self {
        let likelihood = (0..batch)
            .map(|_| LikelihoodDraws::sample(rng, cfg.num_mc_samples, latent_dim))
            .collect();
        let kld = KldDraws::sample(rng, cfg.num_mc_samples, batch, latent_dim);
        Self { likelihood, kld }
    }
}

fn check_dims<T: Real>(
    y: &[T],
    out: &EncoderOutput<T>,
    model: &PcaShapeModel<T>,
) -> Result<()> {
    if y.len() != model.dim() {
        return Err(Error::Dimension {
            what: "contour length",
            expected: model.dim(),
            actual: y.len(),
        });
    }
    if out.latent_dim() != model.num_components() {
        return Err(Error::Dimension {
            what: "latent dimension",
            expected: model.num_components(),
            actual: out.latent_dim(),
        });
    }
    Ok(())
}

/// Reparameterized draw `z = mean + exp(logvar / 2) * eps`.
pub fn sample_latent<T: Real>(out: &EncoderOutput<T>, eps: &[T]) -> Result<Vec<T>> {
    if eps.len() != out.latent_dim() {
        return Err(Error::Dimension {
            what: "noise vector",
            expected: out.latent_dim(),
            actual: eps.len(),
        });
    }
    let half = T::lit(0.5);
    Ok(out
        .latent_mean
        .iter()
        .zip(out.clamped_logvar())
        .zip(eps)
        .map(|((&m, lv), &e)| m + (half * lv).exp() * e)
        .collect())
}

/// `ln N(y | U S^(1/2) z + mean + tile(shift), sigma2 I)`.
pub fn log_lik<T: Real>(
    y: &[T],
    z: &[T],
    shift: [T; 2],
    model: &PcaShapeModel<T>,
    sigma2: T,
) -> Result<T> {
    let decoded = model.decode(z, shift)?;
    if y.len() != decoded.len() {
        return Err(Error::Dimension {
            what: "contour length",
            expected: decoded.len(),
            actual: y.len(),
        });
    }
    let rss: T = y.iter().zip(&decoded).map(|(&a, &b)| (a - b).square()).sum();
    let r = T::from_usize_lossy(y.len());
    Ok(-T::lit(0.5) * (r * (T::TAU() * sigma2).ln() + rss / sigma2))
}

/// `(1/L) sum_l ln p(y | z_l)` with `z_l` drawn from the encoder's Gaussian.
pub fn mc_lower_bound<T: Real, R: Rng + ?Sized>(
    y: &[T],
    out: &EncoderOutput<T>,
    model: &PcaShapeModel<T>,
    cfg: &LossConfig,
    rng: &mut R,
) -> Result<T> {
    let draws = LikelihoodDraws::sample(rng, cfg.num_mc_samples, out.latent_dim());
    Ok(mc_lower_bound_with_draws(y, out, model, T::lit(cfg.sigma2), &draws)?.value)
}

pub fn mc_lower_bound_with_draws<T: Real>(
    y: &[T],
    out: &EncoderOutput<T>,
    model: &PcaShapeModel<T>,
    sigma2: T,
    draws: &LikelihoodDraws,
) -> Result<McEstimate<T>> {
    check_dims(y, out, model)?;
    if draws.eps.is_empty() {
        return Err(Error::Empty("likelihood draws"));
    }
    let mut terms = Vec::with_capacity(draws.eps.len());
    for eps in &draws.eps {
        let eps: Vec<T> = eps.iter().map(|&e| T::lit(e)).collect();
        let z = sample_latent(out, &eps)?;
        terms.push(log_lik(y, &z, out.shift, model, sigma2)?);
    }
    Ok(McEstimate::from_terms(&terms))
}

fn log_normal_diag<T: Real>(z: &[T], mean: &[T], logvar: &[T]) -> T {
    let ln2pi = T::TAU().ln();
    let s: T = z
        .iter()
        .zip(mean)
        .zip(logvar)
        .map(|((&zi, &m), &lv)| ln2pi + lv + (zi - m).square() * (-lv).exp())
        .sum();
    -T::lit(0.5) * s
}

fn log_sum_exp<T: Real>(xs: &[T]) -> T {
    let m = xs.iter().copied().fold(T::neg_infinity(), T::max);
    if !m.is_finite() {
        return m;
    }
    m + xs.iter().map(|&x| (x - m).exp()).sum::<T>().ln()
}

/// KL divergence from the normalized batch mixture `q = (1/N) sum_n N(mu_n,
/// Sigma_n)` to `N(0, I)`, estimated with samples from `q`.
pub fn kld_mc<T: Real, R: Rng + ?Sized>(
    outs: &[EncoderOutput<T>],
    cfg: &LossConfig,
    rng: &mut R,
) -> Result<T> {
    let k = outs.first().ok_or(Error::Empty("encoder outputs"))?.latent_dim();
    let draws = KldDraws::sample(rng, cfg.num_mc_samples, outs.len(), k);
    Ok(kld_mc_with_draws(outs, &draws)?.value)
}

pub fn kld_mc_with_draws<T: Real>(
    outs: &[EncoderOutput<T>],
    draws: &KldDraws,
) -> Result<McEstimate<T>> {
    let k = outs.first().ok_or(Error::Empty("encoder outputs"))?.latent_dim();
    if let Some(bad) = outs.iter().find(|o| o.latent_dim() != k) {
        return Err(Error::Dimension {
            what: "latent dimension",
            expected: k,
            actual: bad.latent_dim(),
        });
    }
    if draws.eps.is_empty() {
        return Err(Error::Empty("kld draws"));
    }
    let logvars: Vec<Vec<T>> = outs.iter().map(EncoderOutput::clamped_logvar).collect();
    let ln_n = T::from_usize_lossy(outs.len()).ln();
    let ln2pi = T::TAU().ln();
    let kf = T::from_usize_lossy(k);
    let mut terms = Vec::with_capacity(draws.eps.len());
    let mut dens = vec![T::zero(); outs.len()];
    for (&c, eps) in draws.components.iter().zip(&draws.eps) {
        let eps: Vec<T> = eps.iter().map(|&e| T::lit(e)).collect();
        let z = sample_latent(&outs[c], &eps)?;
        for (n, o) in outs.iter().enumerate() {
            dens[n] = log_normal_diag(&z, &o.latent_mean, &logvars[n]);
        }
        let ln_q = log_sum_exp(&dens) - ln_n;
        let ln_prior = -T::lit(0.5) * (kf * ln2pi + z.iter().map(|&v| v * v).sum::<T>());
        terms.push(ln_q - ln_prior);
    }
    Ok(McEstimate::from_terms(&terms))
}

/// Batch objective from encoder outputs (no gradients).
pub fn breakdown_from_outputs(
    targets: &[&[f64]],
    outs: &[EncoderOutput<f64>],
    model: &PcaShapeModel<f64>,
    cfg: &LossConfig,
    draws: &BatchDraws,
) -> Result<LossBreakdown> {
    if targets.len() != outs.len() || draws.likelihood.len() != outs.len() {
        return Err(Error::Dimension {
            what: "batch size",
            expected: outs.len(),
            actual: targets.len(),
        });
    }
    let mut neg_loglik = 0.0;
    for ((y, out), d) in targets.iter().zip(outs).zip(&draws.likelihood) {
        neg_loglik -= mc_lower_bound_with_draws(y, out, model, cfg.sigma2, d)?.value;
    }
    let kld = kld_mc_with_draws(outs, &draws.kld)?.value;
    Ok(LossBreakdown {
        neg_loglik,
        kld,
        total: cfg.lambda * kld + neg_loglik,
    })
}

/// Constants shared by every example in a recorded loss.
pub struct LossConstants {
    factor: Var,
    mean: Var,
    tile: Var,
    dim: usize,
    latent_dim: usize,
}

impl LossConstants {
    pub fn record(tape: &mut Tape, model: &PcaShapeModel<f64>) -> Result<Self> {
        let (d, k) = (model.dim(), model.num_components());
        let factor = tape.constant(Tensor::matrix(d, k, model.factor())?);
        let mean = tape.constant(Tensor::vector(model.mean().to_vec()));
        let mut tile = vec![0.0; d * 2];
        for v in 0..d / 2 {
            tile[(2 * v) * 2] = 1.0;
            tile[(2 * v + 1) * 2 + 1] = 1.0;
        }
        let tile = tape.constant(Tensor::matrix(d, 2, tile)?);
        Ok(Self {
            factor,
            mean,
            tile,
            dim: d,
            latent_dim: k,
        })
    }

    /// Records `U S^(1/2) z + mean + tile(shift)`.
    pub fn decode(&self, tape: &mut Tape, z: Var, shift: Var) -> Result<Var> {
        let zc = tape.reshape(z, &[self.latent_dim, 1])?;
        let lin = tape.matmul(self.factor, zc)?;
        let lin = tape.reshape(lin, &[self.dim])?;
        let sc = tape.reshape(shift, &[2, 1])?;
        let tiled = tape.matmul(self.tile, sc)?;
        let tiled = tape.reshape(tiled, &[self.dim])?;
        let y = tape.add(lin, self.mean)?;
        tape.add(y, tiled)
    }
}

/// Latent parameters of one example sliced out of a `[N, 2K + 2]` head.
#[derive(Debug, Clone, Copy)]
pub struct LatentVars {
    pub mean: Var,
    /// Already clamped into [`LOGVAR_RANGE`].
    pub logvar: Var,
    pub shift: Var,
}

pub fn split_head(tape: &mut Tape, head: Var, index: usize, k: usize) -> Result<LatentVars> {
    let d = 2 * k + 2;
    let base = index * d;
    let mean = tape.slice(head, base, k)?;
    let raw_logvar = tape.slice(head, base + k, k)?;
    let logvar = tape.clamp(raw_logvar, LOGVAR_RANGE.0, LOGVAR_RANGE.1);
    let shift = tape.slice(head, base + 2 * k, 2)?;
    Ok(LatentVars {
        mean,
        logvar,
        shift,
    })
}

pub fn record_sample_latent(
    tape: &mut Tape,
    mean: Var,
    logvar: Var,
    eps: &[f64],
) -> Result<Var> {
    let half = tape.scale(logvar, 0.5);
    let std = tape.exp(half);
    let e = tape.constant(Tensor::vector(eps.to_vec()));
    let noise = tape.mul(std, e)?;
    tape.add(mean, noise)
}

pub fn record_log_lik(
    tape: &mut Tape,
    consts: &LossConstants,
    y: &[f64],
    z: Var,
    shift: Var,
    sigma2: f64,
) -> Result<Var> {
    if y.len() != consts.dim {
        return Err(Error::Dimension {
            what: "contour length",
            expected: consts.dim,
            actual: y.len(),
        });
    }
    let decoded = consts.decode(tape, z, shift)?;
    let target = tape.constant(Tensor::vector(y.to_vec()));
    let resid = tape.sub(target, decoded)?;
    let sq = tape.square(resid);
    let rss = tape.sum(sq);
    let scaled = tape.scale(rss, -0.5 / sigma2);
    let r = y.len() as f64;
    Ok(tape.offset(scaled, -0.5 * r * (2.0 * PI * sigma2).ln()))
}

fn record_log_normal_diag(tape: &mut Tape, z: Var, mean: Var, logvar: Var) -> Result<Var> {
    let k = tape.value(z).len() as f64;
    let diff = tape.sub(z, mean)?;
    let sq = tape.square(diff);
    let neg = tape.scale(logvar, -1.0);
    let prec = tape.exp(neg);
    let maha = tape.mul(sq, prec)?;
    let inner = tape.add(maha, logvar)?;
    let s = tape.sum(inner);
    let s = tape.offset(s, k * (2.0 * PI).ln());
    Ok(tape.scale(s, -0.5))
}

fn record_sum(tape: &mut Tape, terms: &[Var]) -> Result<Var> {
    let mut acc = *terms.first().ok_or(Error::Empty("sum terms"))?;
    for &t in &terms[1..] {
        acc = tape.add(acc, t)?;
    }
    Ok(acc)
}

pub fn record_mc_lower_bound(
    tape: &mut Tape,
    consts: &LossConstants,
    y: &[f64],
    latent: &LatentVars,
    sigma2: f64,
    draws: &LikelihoodDraws,
) -> Result<Var> {
    let mut terms = Vec::with_capacity(draws.eps.len());
    for eps in &draws.eps {
        let z = record_sample_latent(tape, latent.mean, latent.logvar, eps)?;
        terms.push(record_log_lik(tape, consts, y, z, latent.shift, sigma2)?);
    }
    let s = record_sum(tape, &terms)?;
    Ok(tape.scale(s, 1.0 / terms.len() as f64))
}

pub fn record_kld_mc(tape: &mut Tape, latents: &[LatentVars], draws: &KldDraws) -> Result<Var> {
    let n = latents.len();
    if n == 0 {
        return Err(Error::Empty("latent batch"));
    }
    let ln_n = (n as f64).ln();
    let mut terms = Vec::with_capacity(draws.eps.len());
    for (&c, eps) in draws.components.iter().zip(&draws.eps) {
        let src = latents.get(c).ok_or(Error::OutOfRange { index: c, len: n })?;
        let z = record_sample_latent(tape, src.mean, src.logvar, eps)?;
        let k = tape.value(z).len() as f64;
        let dens: Vec<Var> = latents
            .iter()
            .map(|l| record_log_normal_diag(tape, z, l.mean, l.logvar))
            .collect::<Result<_>>()?;
        // log-sum-exp with the max treated as a constant shift
        let m = dens
            .iter()
            .map(|&d| tape.value(d).item())
            .fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<Var> = dens
            .iter()
            .map(|&d| {
                let shifted = tape.offset(d, -m);
                tape.exp(shifted)
            })
            .collect();
        let s = record_sum(tape, &exps)?;
        let lse = tape.log(s);
        let ln_q = tape.offset(lse, m - ln_n);
        let zz = tape.square(z);
        let zz = tape.sum(zz);
        let neg_ln_prior = tape.scale(zz, 0.5);
        let neg_ln_prior = tape.offset(neg_ln_prior, 0.5 * k * (2.0 * PI).ln());
        terms.push(tape.add(ln_q, neg_ln_prior)?);
    }
    let s = record_sum(tape, &terms)?;
    Ok(tape.scale(s, 1.0 / terms.len() as f64))
}

/// Vars of the recorded objective.
#[derive(Debug, Clone, Copy)]
pub struct LossGraph {
    pub total: Var,
    pub neg_loglik: Var,
    pub kld: Var,
}

impl LossGraph {
    pub fn breakdown(&self, tape: &Tape) -> LossBreakdown {
        LossBreakdown {
            neg_loglik: tape.value(self.neg_loglik).item(),
            kld: tape.value(self.kld).item(),
            total: tape.value(self.total).item(),
        }
    }
}

/// Records `lambda * KLD - sum_n (1/L) sum_l ln p(y_n | z_l)` for a batch
/// whose head outputs are the rows of `head`.
pub fn record_total_loss(
    tape: &mut Tape,
    head: Var,
    targets: &[&[f64]],
    model: &PcaShapeModel<f64>,
    cfg: &LossConfig,
    draws: &BatchDraws,
) -> Result<LossGraph> {
    let k = model.num_components();
    let n = targets.len();
    if tape.shape(head) != [n, 2 * k + 2] {
        return Err(Error::ShapeMismatch {
            op: "total_loss head",
            lhs: tape.shape(head).to_vec(),
            rhs: vec![n, 2 * k + 2],
        });
    }
    if draws.likelihood.len() != n {
        return Err(Error::Dimension {
            what: "likelihood draws",
            expected: n,
            actual: draws.likelihood.len(),
        });
    }
    let consts = LossConstants::record(tape, model)?;
    let latents: Vec<LatentVars> = (0..n)
        .map(|i| split_head(tape, head, i, k))
        .collect::<Result<_>>()?;
    let mut bounds = Vec::with_capacity(n);
    for ((y, lat), d) in targets.iter().zip(&latents).zip(&draws.likelihood) {
        bounds.push(record_mc_lower_bound(tape, &consts, y, lat, cfg.sigma2, d)?);
    }
    let loglik = record_sum(tape, &bounds)?;
    let neg_loglik = tape.scale(loglik, -1.0);
    let kld = record_kld_mc(tape, &latents, &draws.kld)?;
    let weighted = tape.scale(kld, cfg.lambda);
    let total = tape.add(weighted, neg_loglik)?;
    Ok(LossGraph {
        total,
        neg_loglik,
        kld,
    })
}

/// Objective value and parameter gradients for one batch.
pub fn loss_and_gradients(
    batch: &[(&Image, &[f64])],
    net: &Network,
    model: &PcaShapeModel<f64>,
    cfg: &LossConfig,
    draws: &BatchDraws,
) -> Result<(LossBreakdown, Vec<Tensor>)> {
    let mut tape = Tape::new();
    let params = net.register(&mut tape);
    let images: Vec<&Image> = batch.iter().map(|(i, _)| *i).collect();
    let targets: Vec<&[f64]> = batch.iter().map(|(_, y)| *y).collect();
    let head = net.record(&mut tape, &params, &images)?;
    let graph = record_total_loss(&mut tape, head, &targets, model, cfg, draws)?;
    let mut grads = tape.backward(graph.total)?;
    Ok((
        graph.breakdown(&tape),
        params.iter().map(|&p| grads.take(p)).collect(),
    ))
}

/// Objective for a batch with noise drawn from `rng`.
pub fn total_loss<R: Rng + ?Sized>(
    batch: &[(&Image, &[f64])],
    net: &Network,
    model: &PcaShapeModel<f64>,
    cfg: &LossConfig,
    rng: &mut R,
) -> Result<LossBreakdown> {
    if batch.is_empty() {
        return Err(Error::Empty("batch"));
    }
    let images: Vec<&Image> = batch.iter().map(|(i, _)| *i).collect();
    let targets: Vec<&[f64]> = batch.iter().map(|(_, y)| *y).collect();
    let outs = net.forward_batch(&images)?;
    let draws = BatchDraws::sample(rng, batch.len(), model.num_components(), cfg);
    breakdown_from_outputs(&targets, &outs, model, cfg, &draws)
}

/// Records the mean squared coordinate error of a baseline head.
pub fn record_baseline_loss(
    tape: &mut Tape,
    head: Var,
    targets: &[&[f64]],
    model: &PcaShapeModel<f64>,
    mode: Mode,
) -> Result<Var> {
    let n = targets.len();
    let (d, k) = (model.dim(), model.num_components());
    let width = match mode {
        Mode::DirectVertex => d,
        Mode::DetPca => k + 2,
        Mode::Probabilistic => {
            return Err(Error::HeadMismatch {
                expected: "a baseline head",
                actual: mode.as_str(),
            })
        }
    };
    if tape.shape(head) != [n, width] {
        return Err(Error::ShapeMismatch {
            op: "baseline_loss head",
            lhs: tape.shape(head).to_vec(),
            rhs: vec![n, width],
        });
    }
    let consts = LossConstants::record(tape, model)?;
    let mut sq_sums = Vec::with_capacity(n);
    for (i, y) in targets.iter().enumerate() {
        if y.len() != d {
            return Err(Error::Dimension {
                what: "contour length",
                expected: d,
                actual: y.len(),
            });
        }
        let pred = match mode {
            Mode::DirectVertex => tape.slice(head, i * width, d)?,
            _ => {
                let z = tape.slice(head, i * width, k)?;
                let shift = tape.slice(head, i * width + k, 2)?;
                consts.decode(tape, z, shift)?
            }
        };
        let target = tape.constant(Tensor::vector(y.to_vec()));
        let resid = tape.sub(pred, target)?;
        let sq = tape.square(resid);
        sq_sums.push(tape.sum(sq));
    }
    let s = record_sum(tape, &sq_sums)?;
    Ok(tape.scale(s, 1.0 / (n * d) as f64))
}

pub fn baseline_loss_and_gradients(
    batch: &[(&Image, &[f64])],
    net: &Network,
    model: &PcaShapeModel<f64>,
) -> Result<(f64, Vec<Tensor>)> {
    let mut tape = Tape::new();
    let params = net.register(&mut tape);
    let images: Vec<&Image> = batch.iter().map(|(i, _)| *i).collect();
    let targets: Vec<&[f64]> = batch.iter().map(|(_, y)| *y).collect();
    let head = net.record(&mut tape, &params, &images)?;
    let loss = record_baseline_loss(&mut tape, head, &targets, model, net.head().mode())?;
    let mut grads = tape.backward(loss)?;
    Ok((
        tape.value(loss).item(),
        params.iter().map(|&p| grads.take(p)).collect(),
    ))
}

/// Mean squared coordinate error of a baseline network over a batch.
pub fn baseline_loss(
    batch: &[(&Image, &[f64])],
    net: &Network,
    model: &PcaShapeModel<f64>,
    mode: Mode,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Empty("batch"));
    }
    if mode == Mode::Probabilistic || net.head().mode() != mode {
        return Err(Error::HeadMismatch {
            expected: mode.as_str(),
            actual: net.head().mode().as_str(),
        });
    }
    let mut tape = Tape::new();
    let params: Vec<Var> = net
        .params()
        .iter()
        .map(|p| tape.constant(p.value.clone()))
        .collect();
    let images: Vec<&Image> = batch.iter().map(|(i, _)| *i).collect();
    let targets: Vec<&[f64]> = batch.iter().map(|(_, y)| *y).collect();
    let head = net.record(&mut tape, &params, &images)?;
    let loss = record_baseline_loss(&mut tape, head, &targets, model, mode)?;
    Ok(tape.value(loss).item())
}

/// Mean squared coordinate error between two contours.
pub fn coordinate_mse<T: Real>(pred: &[T], reference: &[T]) -> Result<T> {
    if pred.len() != reference.len() || pred.is_empty() {
        return Err(Error::Dimension {
            what: "contour length",
            expected: reference.len(),
            actual: pred.len(),
        });
    }
    Ok(pred
        .iter()
        .zip(reference)
        .map(|(&a, &b)| (a - b).square())
        .sum::<T>()
        / T::from_usize_lossy(pred.len()))
}

/// Head width a network needs to be trained against `model` in `mode`.
pub fn head_for(mode: Mode, model: &PcaShapeModel<f64>) -> Head {
    Head::for_mode(mode, model.num_components(), model.vertex_count())
}
