//! Image encoder: a small CNN (or MLP) whose single output row is split into
//! latent mean, latent log-variance and global shift, or into the heads of
//! the two deterministic baselines.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Parameter, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::io_util::sha256_hex;
use crate::scalar::Real;

/// Log-variance outputs are clamped into this range before exponentiation.
pub const LOGVAR_RANGE: (f64, f64) = (-20.0, 10.0);

/// Grayscale image standardized to zero mean and unit variance.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub height: usize,
    pub width: usize,
    pub pixels: Vec<f64>,
    /// Millimetres per pixel (isotropic).
    pub spacing: f64,
}

impl Image {
    /// Standardizes raw intensities. A constant image maps to all zeros.
    pub fn standardized(height: usize, width: usize, raw: &[f64], spacing: f64) -> Result<Self> {
        if raw.len() != height * width || raw.is_empty() {
            return Err(Error::Dimension {
                what: "image pixel count",
                expected: height * width,
                actual: raw.len(),
            });
        }
        let n = raw.len() as f64;
        let mean = raw.iter().sum::<f64>() / n;
        let var = raw.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        let sd = var.sqrt();
        let pixels = raw
            .iter()
            .map(|x| if sd > 0.0 { (x - mean) / sd } else { 0.0 })
            .collect();
        Ok(Self {
            height,
            width,
            pixels,
            spacing,
        })
    }

    pub fn from_u8(height: usize, width: usize, raw: &[u8], spacing: f64) -> Result<Self> {
        let f: Vec<f64> = raw.iter().map(|&p| p as f64).collect();
        Self::standardized(height, width, &f, spacing)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    #[default]
    #[serde(alias = "prob")]
    Probabilistic,
    DirectVertex,
    DetPca,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Probabilistic => "probabilistic",
            Mode::DirectVertex => "direct-vertex",
            Mode::DetPca => "det-pca",
        }
    }
}

/// Output head; fixes the width of the final dense layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Head {
    /// `[mean (K), log-variance (K), shift (2)]`.
    Probabilistic { latent_dim: usize },
    /// Raw `2V` vertex coordinates.
    DirectVertex { vertex_count: usize },
    /// `[weights (K), shift (2)]`.
    DetPca { latent_dim: usize },
}

impl Head {
    pub fn for_mode(mode: Mode, latent_dim: usize, vertex_count: usize) -> Self {
        match mode {
            Mode::Probabilistic => Head::Probabilistic { latent_dim },
            Mode::DirectVertex => Head::DirectVertex { vertex_count },
            Mode::DetPca => Head::DetPca { latent_dim },
        }
    }

    pub fn output_dim(&self) -> usize {
        match *self {
            Head::Probabilistic { latent_dim } => 2 * latent_dim + 2,
            Head::DirectVertex { vertex_count } => 2 * vertex_count,
            Head::DetPca { latent_dim } => latent_dim + 2,
        }
    }

    pub fn mode(&self) -> Mode {
        match self {
            Head::Probabilistic { .. } => Mode::Probabilistic,
            Head::DirectVertex { .. } => Mode::DirectVertex,
            Head::DetPca { .. } => Mode::DetPca,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LayerSpec {
    Conv {
        out_channels: usize,
        kernel: usize,
        padding: usize,
    },
    Relu,
    MaxPool,
    /// Hidden fully connected layer (flattens its input).
    Dense { out: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    pub input_height: usize,
    pub input_width: usize,
    pub layers: Vec<LayerSpec>,
    pub head: Head,
    /// Multiplier on the initial weights of the final dense layer.
    #[serde(default = "NetworkSpec::default_final_scale")]
    pub final_layer_scale: f64,
}

/// Shape after a layer: `(channels, height, width)`, or `(features, 1, 1)`
/// once flattened.
type ActShape = (usize, usize, usize);

impl NetworkSpec {
    fn default_final_scale() -> f64 {
        0.01
    }

    /// Nine 3x3 convolutions with ReLU in three pooled blocks of the given
    /// channel widths, then one dense layer to the head.
    pub fn cl9p3dl1(height: usize, width: usize, widths: [usize; 3], head: Head) -> Self {
        let mut layers = Vec::with_capacity(21);
        for w in widths {
            for _ in 0..3 {
                layers.push(LayerSpec::Conv {
                    out_channels: w,
                    kernel: 3,
                    padding: 1,
                });
                layers.push(LayerSpec::Relu);
            }
            layers.push(LayerSpec::MaxPool);
        }
        Self {
            input_height: height,
            input_width: width,
            layers,
            head,
            final_layer_scale: Self::default_final_scale(),
        }
    }

    /// CL9P3DL1 with 16/32/64 channels.
    pub fn cl9p3dl1_default(height: usize, width: usize, head: Head) -> Self {
        Self::cl9p3dl1(height, width, [16, 32, 64], head)
    }

    /// Fully connected network with ReLU hidden layers.
    pub fn mlp(height: usize, width: usize, hidden: &[usize], head: Head) -> Self {
        let mut layers = Vec::new();
        for &h in hidden {
            layers.push(LayerSpec::Dense { out: h });
            layers.push(LayerSpec::Relu);
        }
        Self {
            input_height: height,
            input_width: width,
            layers,
            head,
            final_layer_scale: Self::default_final_scale(),
        }
    }

    /// Activation shapes after each layer; the last entry feeds the head.
    pub fn activation_shapes(&self) -> Result<Vec<ActShape>> {
        let mut shape = (1, self.input_height, self.input_width);
        if shape.1 == 0 || shape.2 == 0 {
            return Err(Error::SpatialCollapse {
                layer: 0,
                height: shape.1,
                width: shape.2,
            });
        }
        let mut out = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let (c, h, w) = shape;
            shape = match *layer {
                LayerSpec::Conv {
                    out_channels,
                    kernel,
                    padding,
                } => {
                    if out_channels == 0 || kernel == 0 {
                        return Err(Error::InvalidArgument(format!(
                            "layer {i}: conv needs positive channels and kernel"
                        )));
                    }
                    let (ph, pw) = (h + 2 * padding, w + 2 * padding);
                    if kernel > ph || kernel > pw {
                        return Err(Error::SpatialCollapse {
                            layer: i,
                            height: h,
                            width: w,
                        });
                    }
                    (out_channels, ph - kernel + 1, pw - kernel + 1)
                }
                LayerSpec::Relu => (c, h, w),
                LayerSpec::MaxPool => {
                    if h < 2 || w < 2 {
                        return Err(Error::SpatialCollapse {
                            layer: i,
                            height: h,
                            width: w,
                        });
                    }
                    (c, h / 2, w / 2)
                }
                LayerSpec::Dense { out } => {
                    if out == 0 {
                        return Err(Error::InvalidArgument(format!("layer {i}: empty dense layer")));
                    }
                    (out, 1, 1)
                }
            };
            out.push(shape);
        }
        Ok(out)
    }

    fn param_shapes(&self) -> Result<Vec<(String, Vec<usize>, Init)>> {
        let shapes = self.activation_shapes()?;
        let mut prev = (1, self.input_height, self.input_width);
        let mut params = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            match *layer {
                LayerSpec::Conv {
                    out_channels,
                    kernel,
                    ..
                } => {
                    let fan_in = prev.0 * kernel * kernel;
                    let fan_out = out_channels * kernel * kernel;
                    params.push((
                        format!("layer{i}.conv.weight"),
                        vec![out_channels, prev.0, kernel, kernel],
                        Init::Glorot { fan_in, fan_out },
                    ));
                    params.push((format!("layer{i}.conv.bias"), vec![out_channels], Init::Zero));
                }
                LayerSpec::Dense { out } => {
                    let fan_in = prev.0 * prev.1 * prev.2;
                    params.push((
                        format!("layer{i}.dense.weight"),
                        vec![fan_in, out],
                        Init::Glorot {
                            fan_in,
                            fan_out: out,
                        },
                    ));
                    params.push((format!("layer{i}.dense.bias"), vec![out], Init::Zero));
                }
                LayerSpec::Relu | LayerSpec::MaxPool => {}
            }
            prev = shapes[i];
        }
        let fan_in = prev.0 * prev.1 * prev.2;
        let out = self.head.output_dim();
        params.push((
            "head.weight".into(),
            vec![fan_in, out],
            Init::Scaled {
                fan_in,
                fan_out: out,
                scale: self.final_layer_scale,
            },
        ));
        params.push(("head.bias".into(), vec![out], Init::Zero));
        Ok(params)
    }
}

#[derive(Debug, Clone, Copy)]
enum Init {
    Zero,
    Glorot { fan_in: usize, fan_out: usize },
    Scaled {
        fan_in: usize,
        fan_out: usize,
        scale: f64,
    },
}

/// Latent Gaussian parameters and shift predicted for one image.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderOutput<T> {
    pub latent_mean: Vec<T>,
    pub latent_logvar: Vec<T>,
    pub shift: [T; 2],
}

impl<T: Real> EncoderOutput<T> {
    pub fn new(latent_mean: Vec<T>, latent_logvar: Vec<T>, shift: [T; 2]) -> Result<Self> {
        if latent_mean.len() != latent_logvar.len() {
            return Err(Error::Dimension {
                what: "latent log-variance",
                expected: latent_mean.len(),
                actual: latent_logvar.len(),
            });
        }
        Ok(Self {
            latent_mean,
            latent_logvar,
            shift,
        })
    }

    /// Builds an output from a latent variance; zero variance maps to the
    /// lower log-variance clamp.
    pub fn from_variance(latent_mean: Vec<T>, latent_var: &[T], shift: [T; 2]) -> Result<Self> {
        let logvar = latent_var.iter().map(|&v| v.ln()).collect();
        Self::new(latent_mean, logvar, shift)
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_mean.len()
    }

    /// Log-variance clamped into [`LOGVAR_RANGE`].
    pub fn clamped_logvar(&self) -> Vec<T> {
        let (lo, hi) = (T::lit(LOGVAR_RANGE.0), T::lit(LOGVAR_RANGE.1));
        self.latent_logvar
            .iter()
            .map(|&v| if v.is_nan() { v } else { v.max(lo).min(hi) })
            .collect()
    }

    /// Diagonal of the latent covariance.
    pub fn latent_var(&self) -> Vec<T> {
        self.clamped_logvar().into_iter().map(T::exp).collect()
    }

    fn from_row(row: &[T], k: usize) -> Self {
        Self {
            latent_mean: row[..k].to_vec(),
            latent_logvar: row[k..2 * k].to_vec(),
            shift: [row[2 * k], row[2 * k + 1]],
        }
    }
}

/// Output of a baseline head.
#[derive(Debug, Clone, PartialEq)]
pub enum BaselineOutput {
    Vertices(Vec<f64>),
    Pca { weights: Vec<f64>, shift: [f64; 2] },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    spec: NetworkSpec,
    seed: u64,
    params: Vec<Parameter>,
}

impl Network {
    /// Initializes parameters deterministically from `seed`: Glorot-uniform
    /// weights, zero biases, and a scaled-down final layer.
    pub fn build(spec: NetworkSpec, seed: u64) -> Result<Self> {
        let shapes = spec.param_shapes()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = shapes
            .into_iter()
            .map(|(name, shape, init)| {
                let n: usize = shape.iter().product();
                let data: Vec<f64> = match init {
                    Init::Zero => vec![0.0; n],
                    Init::Glorot { fan_in, fan_out } => {
                        let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
                        (0..n).map(|_| rng.random_range(-a..a)).collect()
                    }
                    Init::Scaled {
                        fan_in,
                        fan_out,
                        scale,
                    } => {
                        let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
                        (0..n).map(|_| scale * rng.random_range(-a..a)).collect()
                    }
                };
                Parameter {
                    name,
                    value: Tensor::new(shape, data).expect("shape from spec"),
                }
            })
            .collect();
        Ok(Self { spec, seed, params })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn head(&self) -> Head {
        self.spec.head
    }

    pub fn params(&self) -> &[Parameter] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Parameter] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// Sets every weight and bias of the final dense layer to zero.
    pub fn zero_head(&mut self) {
        for p in self.params.iter_mut().filter(|p| p.name.starts_with("head.")) {
            p.value.data_mut().fill(0.0);
        }
    }

    /// Records the parameters on `tape` as differentiable leaves.
    pub fn register(&self, tape: &mut Tape) -> Vec<Var> {
        self.params.iter().map(|p| tape.leaf(p.value.clone())).collect()
    }

    /// Records the forward pass for a batch; returns a `[N, head_dim]` var.
    pub fn record(&self, tape: &mut Tape, params: &[Var], images: &[&Image]) -> Result<Var> {
        if images.is_empty() {
            return Err(Error::Empty("image batch"));
        }
        let (h, w) = (self.spec.input_height, self.spec.input_width);
        let mut data = Vec::with_capacity(images.len() * h * w);
        for img in images {
            if img.height != h || img.width != w {
                return Err(Error::ShapeMismatch {
                    op: "encoder input",
                    lhs: vec![h, w],
                    rhs: vec![img.height, img.width],
                });
            }
            data.extend_from_slice(&img.pixels);
        }
        let n = images.len();
        let mut x = tape.constant(Tensor::new(vec![n, 1, h, w], data)?);
        let mut p = params.iter().copied();
        let mut next = || p.next().ok_or(Error::Checkpoint("parameter list too short".into()));
        for (i, layer) in self.spec.layers.iter().enumerate() {
            x = match *layer {
                LayerSpec::Conv { padding, .. } => {
                    let (wv, bv) = (next()?, next()?);
                    let y = tape.conv2d(x, wv, padding)?;
                    tape.add_bias(y, bv)?
                }
                LayerSpec::Relu => tape.relu(x),
                LayerSpec::MaxPool => tape.max_pool2(x)?,
                LayerSpec::Dense { .. } => {
                    let (wv, bv) = (next()?, next()?);
                    let flat = flatten(tape, x, n)?;
                    let y = tape.matmul(flat, wv)?;
                    tape.add_bias(y, bv)?
                }
            };
            if !tape.value(x).all_finite() {
                return Err(Error::NonFiniteActivation { layer: i });
            }
        }
        let (wv, bv) = (next()?, next()?);
        let flat = flatten(tape, x, n)?;
        let y = tape.matmul(flat, wv)?;
        let out = tape.add_bias(y, bv)?;
        if !tape.value(out).all_finite() {
            return Err(Error::NonFiniteActivation {
                layer: self.spec.layers.len(),
            });
        }
        Ok(out)
    }

    /// Raw head outputs, one row per image.
    pub fn forward_raw(&self, images: &[&Image]) -> Result<Vec<Vec<f64>>> {
        let mut tape = Tape::new();
        let params: Vec<Var> = self
            .params
            .iter()
            .map(|p| tape.constant(p.value.clone()))
            .collect();
        let out = self.record(&mut tape, &params, images)?;
        let d = self.spec.head.output_dim();
        Ok(tape.value(out).data().chunks(d).map(<[f64]>::to_vec).collect())
    }

    /// Latent Gaussian and shift for one image (probabilistic head only).
    pub fn forward(&self, image: &Image) -> Result<EncoderOutput<f64>> {
        Ok(self.forward_batch(&[image])?.remove(0))
    }

    pub fn forward_batch(&self, images: &[&Image]) -> Result<Vec<EncoderOutput<f64>>> {
        let Head::Probabilistic { latent_dim } = self.spec.head else {
            return Err(Error::HeadMismatch {
                expected: Mode::Probabilistic.as_str(),
                actual: self.spec.head.mode().as_str(),
            });
        };
        Ok(self
            .forward_raw(images)?
            .iter()
            .map(|row| EncoderOutput::from_row(row, latent_dim))
            .collect())
    }

    pub fn forward_baseline(&self, image: &Image, mode: Mode) -> Result<BaselineOutput> {
        if mode != self.spec.head.mode() || mode == Mode::Probabilistic {
            return Err(Error::HeadMismatch {
                expected: mode.as_str(),
                actual: self.spec.head.mode().as_str(),
            });
        }
        let row = self.forward_raw(&[image])?.remove(0);
        Ok(match self.spec.head {
            Head::DirectVertex { .. } => BaselineOutput::Vertices(row),
            Head::DetPca { latent_dim } => BaselineOutput::Pca {
                weights: row[..latent_dim].to_vec(),
                shift: [row[latent_dim], row[latent_dim + 1]],
            },
            Head::Probabilistic { .. } => unreachable!("rejected above"),
        })
    }

    /// Writes `manifest.json` and `params.bin` into `dir`.
    pub fn save(&self, dir: &Path, meta: CheckpointMeta) -> Result<CheckpointManifest> {
        std::fs::create_dir_all(dir)?;
        let mut blob = Vec::with_capacity(self.param_count() * 8);
        for p in &self.params {
            for x in p.value.data() {
                blob.extend_from_slice(&x.to_le_bytes());
            }
        }
        let manifest = CheckpointManifest {
            format_version: 1,
            mode: self.spec.head.mode(),
            head_dim: self.spec.head.output_dim(),
            num_components: meta.num_components,
            vertex_count: meta.vertex_count,
            seed: self.seed,
            spec: self.spec.clone(),
            params: self
                .params
                .iter()
                .map(|p| ParamInfo {
                    name: p.name.clone(),
                    shape: p.value.shape().to_vec(),
                })
                .collect(),
            blob_bytes: blob.len(),
            checksum: sha256_hex(&blob),
            epoch: meta.epoch,
            step: meta.step,
        };
        std::fs::write(dir.join(PARAMS_FILE), &blob)?;
        std::fs::write(
            dir.join(MANIFEST_FILE),
            serde_json::to_string_pretty(&manifest)?,
        )?;
        Ok(manifest)
    }

    pub fn load(dir: &Path) -> Result<(Self, CheckpointManifest)> {
        let manifest: CheckpointManifest =
            serde_json::from_str(&std::fs::read_to_string(dir.join(MANIFEST_FILE))?)?;
        let blob = std::fs::read(dir.join(PARAMS_FILE))?;
        if blob.len() != manifest.blob_bytes {
            return Err(Error::Checkpoint(format!(
                "params.bin is {} bytes, manifest says {}",
                blob.len(),
                manifest.blob_bytes
            )));
        }
        if sha256_hex(&blob) != manifest.checksum {
            return Err(Error::Checkpoint("params.bin checksum mismatch".into()));
        }
        let mut net = Network::build(manifest.spec.clone(), manifest.seed)?;
        if net.params.len() != manifest.params.len() {
            return Err(Error::Checkpoint("parameter list does not match spec".into()));
        }
        let mut floats = blob
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")));
        for (p, info) in net.params.iter_mut().zip(&manifest.params) {
            if p.name != info.name || p.value.shape() != info.shape.as_slice() {
                return Err(Error::Checkpoint(format!(
                    "parameter `{}` does not match spec",
                    info.name
                )));
            }
            for x in p.value.data_mut() {
                *x = floats
                    .next()
                    .ok_or(Error::Checkpoint("params.bin too short".into()))?;
            }
        }
        Ok((net, manifest))
    }
}

fn flatten(tape: &mut Tape, x: Var, n: usize) -> Result<Var> {
    let feat = tape.value(x).len() / n;
    tape.reshape(x, &[n, feat])
}

pub const MANIFEST_FILE: &str = "manifest.json";
pub const PARAMS_FILE: &str = "params.bin";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CheckpointMeta {
    pub num_components: usize,
    pub vertex_count: usize,
    pub epoch: usize,
    pub step: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamInfo {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointManifest {
    pub format_version: u32,
    pub mode: Mode,
    pub head_dim: usize,
    pub num_components: usize,
    pub vertex_count: usize,
    pub seed: u64,
    pub spec: NetworkSpec,
    pub params: Vec<ParamInfo>,
    pub blob_bytes: usize,
    /// SHA-256 of `params.bin`, hex.
    pub checksum: String,
    pub epoch: usize,
    pub step: usize,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn image(h: usize, w: usize, seed: u64) -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let raw: Vec<f64> = (0..h * w).map(|_| rng.random_range(0.0..255.0)).collect();
        Image::standardized(h, w, &raw, 1.8).unwrap()
    }

    #[test]
    fn cl9p3dl1_head_widths() {
        let k = 8;
        let spec = NetworkSpec::cl9p3dl1_default(60, 60, Head::Probabilistic { latent_dim: k });
        assert_eq!(spec.head.output_dim(), 18);
        let net = Network::build(spec, 1).unwrap();
        // 3x(3 convs)+dense; dense input 64*7*7
        assert_eq!(net.param_count(), 176_754);
        assert_eq!(
            Head::DirectVertex { vertex_count: 50 }.output_dim(),
            100
        );
        assert_eq!(Head::DetPca { latent_dim: 12 }.output_dim(), 14);
    }

    #[test]
    fn build_is_deterministic() {
        let spec = NetworkSpec::cl9p3dl1(20, 20, [2, 3, 4], Head::Probabilistic { latent_dim: 3 });
        let a = Network::build(spec.clone(), 7).unwrap();
        let b = Network::build(spec.clone(), 7).unwrap();
        assert_eq!(a, b);
        let c = Network::build(spec, 8).unwrap();
        assert_ne!(a.params, c.params);
    }

    #[test]
    fn three_pools_on_four_pixels_collapse() {
        let spec = NetworkSpec::cl9p3dl1(4, 4, [2, 2, 2], Head::Probabilistic { latent_dim: 2 });
        match Network::build(spec, 0) {
            Err(Error::SpatialCollapse { layer, .. }) => assert_eq!(layer, 20),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn zero_head_gives_prior_output() {
        let spec = NetworkSpec::cl9p3dl1(16, 16, [2, 2, 2], Head::Probabilistic { latent_dim: 4 });
        let mut net = Network::build(spec, 3).unwrap();
        net.zero_head();
        let out = net.forward(&image(16, 16, 1)).unwrap();
        assert_eq!(out.latent_mean, vec![0.0; 4]);
        assert_eq!(out.latent_logvar, vec![0.0; 4]);
        assert_eq!(out.latent_var(), vec![1.0; 4]);
        assert_eq!(out.shift, [0.0, 0.0]);
    }

    #[test]
    fn output_is_finite_with_right_width() {
        let spec = NetworkSpec::cl9p3dl1(16, 16, [2, 3, 4], Head::Probabilistic { latent_dim: 5 });
        let net = Network::build(spec, 3).unwrap();
        let rows = net.forward_raw(&[&image(16, 16, 2), &image(16, 16, 3)]).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows.iter().all(|r| r.len() == 12 && r.iter().all(|x| x.is_finite())));
        assert_eq!(net.forward_raw(&[&image(16, 16, 2)]).unwrap()[0], rows[0]);
    }

    #[test]
    fn baseline_heads() {
        let img = image(8, 8, 4);
        let dv = Network::build(
            NetworkSpec::mlp(8, 8, &[6], Head::DirectVertex { vertex_count: 50 }),
            1,
        )
        .unwrap();
        match dv.forward_baseline(&img, Mode::DirectVertex).unwrap() {
            BaselineOutput::Vertices(v) => assert_eq!(v.len(), 100),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            dv.forward_baseline(&img, Mode::DetPca),
            Err(Error::HeadMismatch { .. })
        ));
        assert!(matches!(dv.forward(&img), Err(Error::HeadMismatch { .. })));
        let det = Network::build(
            NetworkSpec::mlp(8, 8, &[6], Head::DetPca { latent_dim: 12 }),
            1,
        )
        .unwrap();
        match det.forward_baseline(&img, Mode::DetPca).unwrap() {
            BaselineOutput::Pca { weights, .. } => assert_eq!(weights.len(), 12),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn wrong_image_size_is_rejected() {
        let net = Network::build(
            NetworkSpec::mlp(8, 8, &[], Head::DetPca { latent_dim: 2 }),
            1,
        )
        .unwrap();
        assert!(matches!(
            net.forward_raw(&[&image(9, 8, 0)]),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn checkpoint_round_trip_and_tamper_detection() {
        let dir = tempfile::tempdir().unwrap();
        let spec = NetworkSpec::cl9p3dl1(12, 12, [2, 2, 2], Head::Probabilistic { latent_dim: 3 });
        let net = Network::build(spec, 11).unwrap();
        let meta = CheckpointMeta {
            num_components: 3,
            vertex_count: 10,
            epoch: 4,
            step: 40,
        };
        let manifest = net.save(dir.path(), meta).unwrap();
        assert_eq!(manifest.blob_bytes, net.param_count() * 8);
        let (back, m2) = Network::load(dir.path()).unwrap();
        assert_eq!(back, net);
        assert_eq!(m2, manifest);

        let mut blob = std::fs::read(dir.path().join(PARAMS_FILE)).unwrap();
        blob[3] ^= 1;
        std::fs::write(dir.path().join(PARAMS_FILE), &blob).unwrap();
        assert!(matches!(Network::load(dir.path()), Err(Error::Checkpoint(_))));
    }
}
