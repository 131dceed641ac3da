//! Closed-form predictive distribution over the vertex vector, contour
//! sampling, per-vertex marginals and confidence ellipses.
//!
//! The covariance `sigma2 I + A diag(latent_var) A^T` is kept in factored
//! form; [`PredictiveDistribution::densify`] builds the dense matrix on
//! request.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::encoder::{EncoderOutput, Image, Network};
use crate::error::{Error, Result};
use crate::io_util::{f17_vec, unwrap_f17, F17};
use crate::linalg::symmetric_eigen_2x2;
use crate::rng::standard_normals;
use crate::scalar::Real;
use crate::shape_model::PcaShapeModel;

/// Eigenvalues of a 2x2 marginal below this are treated as rounding noise.
pub const PSD_TOLERANCE: f64 = 1e-12;

/// Levels drawn by default: 30%, 95% and 99.9% mass.
pub const DEFAULT_LEVELS: [f64; 3] = [0.30, 0.95, 0.999];

#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveDistribution<T> {
    pub mean: Vec<T>,
    /// Row-major `2V x K` factor `A = U S^(1/2)`.
    pub factor: Vec<T>,
    /// Diagonal of the latent covariance.
    pub latent_var: Vec<T>,
    pub sigma2: T,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VertexEllipse<T> {
    pub center: [T; 2],
    /// Descending.
    pub semi_axes: [T; 2],
    /// Direction of the major axis in `[0, pi)`.
    pub angle: T,
    pub level: T,
}

/// Mean and covariance of one vertex.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VertexMarginal<T> {
    pub mean: [T; 2],
    /// `[[a, b], [b, c]]` stored as `[a, b, c]`.
    pub cov: [T; 3],
}

/// Squared Mahalanobis radius of the centered region holding mass `level`
/// of a 2-D Gaussian.
pub fn chi2_2_quantile<T: Real>(level: T) -> T {
    -T::lit(2.0) * (T::one() - level).ln()
}

fn check_level<T: Real>(level: T) -> Result<()> {
    if level > T::zero() && level < T::one() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "confidence level must lie in (0, 1), got {level}"
        )))
    }
}

impl<T: Real> PredictiveDistribution<T> {
    pub fn new(mean: Vec<T>, factor: Vec<T>, latent_var: Vec<T>, sigma2: T) -> Result<Self> {
        let k = latent_var.len();
        if mean.len() % 2 != 0 || mean.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "mean must hold x,y pairs, got length {}",
                mean.len()
            )));
        }
        if factor.len() != mean.len() * k {
            return Err(Error::Dimension {
                what: "factor entries",
                expected: mean.len() * k,
                actual: factor.len(),
            });
        }
        if !(sigma2 >= T::zero()) || latent_var.iter().any(|&v| !(v >= T::zero())) {
            return Err(Error::InvalidArgument(
                "variances must be non-negative".into(),
            ));
        }
        Ok(Self {
            mean,
            factor,
            latent_var,
            sigma2,
        })
    }

    /// Mean `A mu(x) + mean + tile(s(x))`, covariance
    /// `sigma2 I + A diag(Sigma(x)) A^T`.
    pub fn from_output(out: &EncoderOutput<T>, model: &PcaShapeModel<T>, sigma2: T) -> Result<Self> {
        if out.latent_dim() != model.num_components() {
            return Err(Error::Dimension {
                what: "latent dimension",
                expected: model.num_components(),
                actual: out.latent_dim(),
            });
        }
        let mean = model.decode(&out.latent_mean, out.shift)?;
        Self::new(mean, model.factor(), out.latent_var(), sigma2)
    }

    pub fn vertex_count(&self) -> usize {
        self.mean.len() / 2
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_var.len()
    }

    /// Dense `2V x 2V` covariance, row-major.
    pub fn densify(&self) -> Vec<T> {
        let (d, k) = (self.mean.len(), self.latent_dim());
        let mut c = vec![T::zero(); d * d];
        for i in 0..d {
            for j in i..d {
                let mut s = T::zero();
                for m in 0..k {
                    s += self.factor[i * k + m] * self.latent_var[m] * self.factor[j * k + m];
                }
                if i == j {
                    s += self.sigma2;
                }
                c[i * d + j] = s;
                c[j * d + i] = s;
            }
        }
        c
    }

    /// Draws a contour: `mean + A (z - mu(x))` with `z ~ N(mu(x), Sigma(x))`,
    /// plus `N(0, sigma2 I)` if `include_noise`.
    pub fn sample_contour<R: Rng + ?Sized>(&self, rng: &mut R, include_noise: bool) -> Vec<T> {
        let k = self.latent_dim();
        let eps: Vec<T> = standard_normals(rng, k);
        let dz: Vec<T> = eps
            .iter()
            .zip(&self.latent_var)
            .map(|(&e, &v)| e * v.sqrt())
            .collect();
        let mut y = self.mean.clone();
        for (i, yi) in y.iter_mut().enumerate() {
            for (m, &d) in dz.iter().enumerate() {
                *yi += self.factor[i * k + m] * d;
            }
        }
        if include_noise {
            let sd = self.sigma2.sqrt();
            let noise: Vec<T> = standard_normals(rng, y.len());
            for (yi, n) in y.iter_mut().zip(noise) {
                *yi += sd * n;
            }
        }
        y
    }

    pub fn vertex_marginal(&self, i: usize) -> Result<VertexMarginal<T>> {
        let v = self.vertex_count();
        if i >= v {
            return Err(Error::OutOfRange { index: i, len: v });
        }
        let k = self.latent_dim();
        let (rx, ry) = (&self.factor[2 * i * k..(2 * i + 1) * k], &self.factor[(2 * i + 1) * k..(2 * i + 2) * k]);
        let (mut a, mut b, mut c) = (self.sigma2, T::zero(), self.sigma2);
        for m in 0..k {
            let s = self.latent_var[m];
            a += rx[m] * s * rx[m];
            b += rx[m] * s * ry[m];
            c += ry[m] * s * ry[m];
        }
        Ok(VertexMarginal {
            mean: [self.mean[2 * i], self.mean[2 * i + 1]],
            cov: [a, b, c],
        })
    }

    /// Fraction of vertices whose reference position lies inside the
    /// level-`level` ellipse of its marginal.
    pub fn coverage_check(&self, reference: &[T], level: T) -> Result<T> {
        check_level(level)?;
        if reference.len() != self.mean.len() {
            return Err(Error::Dimension {
                what: "contour length",
                expected: self.mean.len(),
                actual: reference.len(),
            });
        }
        let threshold = chi2_2_quantile(level);
        let mut inside = 0usize;
        for i in 0..self.vertex_count() {
            let m = self.vertex_marginal(i)?;
            let d2 = mahalanobis2(&m, [reference[2 * i], reference[2 * i + 1]])
                .ok_or(Error::SingularMarginal { index: i })?;
            if d2 <= threshold {
                inside += 1;
            }
        }
        Ok(T::from_usize_lossy(inside) / T::from_usize_lossy(self.vertex_count()))
    }

    /// Ellipses for every `stride`-th vertex at each level.
    pub fn ellipses(&self, levels: &[T], stride: usize) -> Result<Vec<(usize, VertexEllipse<T>)>> {
        let mut out = Vec::new();
        for i in (0..self.vertex_count()).step_by(stride.max(1)) {
            let m = self.vertex_marginal(i)?;
            for &level in levels {
                out.push((i, confidence_ellipse(m.mean, m.cov, level)?));
            }
        }
        Ok(out)
    }
}

fn mahalanobis2<T: Real>(m: &VertexMarginal<T>, p: [T; 2]) -> Option<T> {
    let [a, b, c] = m.cov;
    let det = a * c - b * b;
    if !(det > T::zero()) {
        return None;
    }
    let (dx, dy) = (p[0] - m.mean[0], p[1] - m.mean[1]);
    Some((c * dx * dx - T::lit(2.0) * b * dx * dy + a * dy * dy) / det)
}

/// Centered ellipse holding mass `level` of `N(mean2, cov2)`, with `cov2`
/// given as `[a, b, c]` for `[[a, b], [b, c]]`.
pub fn confidence_ellipse<T: Real>(mean2: [T; 2], cov2: [T; 3], level: T) -> Result<VertexEllipse<T>> {
    check_level(level)?;
    let (l1, l2, angle) = symmetric_eigen_2x2(cov2[0], cov2[1], cov2[2]);
    let tol = T::lit(PSD_TOLERANCE);
    if !(l2 >= -tol) || !l1.is_finite() {
        return Err(Error::NotPsd(l2.to_f64_lossy()));
    }
    let scale = chi2_2_quantile(level);
    let axis = |l: T| (scale * l.max(T::zero())).sqrt();
    Ok(VertexEllipse {
        center: mean2,
        semi_axes: [axis(l1), axis(l2)],
        angle,
        level,
    })
}

/// Runs the encoder on `image` and forms the predictive distribution.
pub fn predict(
    net: &Network,
    image: &Image,
    model: &PcaShapeModel<f64>,
    sigma2: f64,
) -> Result<PredictiveDistribution<f64>> {
    let out = net.forward(image)?;
    PredictiveDistribution::from_output(&out, model, sigma2)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EllipseRecord {
    pub i: usize,
    pub level: F17,
    pub center: [F17; 2],
    pub semi_axes: [F17; 2],
    pub angle: F17,
}

/// JSON export of one prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictionRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub mean: Vec<F17>,
    pub sigma2: F17,
    pub latent_cov: Vec<F17>,
    /// Rows of `A`.
    pub factor: Vec<Vec<F17>>,
    pub ellipses: Vec<EllipseRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<Vec<F17>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub samples: Vec<Vec<F17>>,
}

impl PredictionRecord {
    pub fn new(dist: &PredictiveDistribution<f64>, levels: &[f64], stride: usize) -> Result<Self> {
        let k = dist.latent_dim();
        let ellipses = dist
            .ellipses(levels, stride)?
            .into_iter()
            .map(|(i, e)| EllipseRecord {
                i,
                level: F17(e.level),
                center: e.center.map(F17),
                semi_axes: e.semi_axes.map(F17),
                angle: F17(e.angle),
            })
            .collect();
        Ok(Self {
            id: None,
            mean: f17_vec(dist.mean.iter().copied()),
            sigma2: F17(dist.sigma2),
            latent_cov: f17_vec(dist.latent_var.iter().copied()),
            factor: dist
                .factor
                .chunks(k.max(1))
                .take(dist.mean.len())
                .map(|r| f17_vec(r.iter().copied()))
                .collect(),
            ellipses,
            reference: None,
            samples: Vec::new(),
        })
    }

    pub fn distribution(&self) -> Result<PredictiveDistribution<f64>> {
        let k = self.latent_cov.len();
        if self.factor.len() != self.mean.len() {
            return Err(Error::Dimension {
                what: "factor rows",
                expected: self.mean.len(),
                actual: self.factor.len(),
            });
        }
        if let Some(row) = self.factor.iter().find(|r| r.len() != k) {
            return Err(Error::Dimension {
                what: "factor columns",
                expected: k,
                actual: row.len(),
            });
        }
        let factor = self.factor.iter().flat_map(|r| unwrap_f17(r)).collect();
        PredictiveDistribution::new(
            unwrap_f17(&self.mean),
            factor,
            unwrap_f17(&self.latent_cov),
            self.sigma2.0,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn dist(latent_var: Vec<f64>, sigma2: f64) -> PredictiveDistribution<f64> {
        let k = latent_var.len();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let factor = (0..6 * k).map(|_| rng.random_range(-1.0..1.0)).collect();
        PredictiveDistribution::new(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0], factor, latent_var, sigma2)
            .unwrap()
    }

    #[test]
    fn mean_at_origin_is_shape_mean() {
        let model =
            PcaShapeModel::from_parts(vec![1.0, 2.0, 3.0, 4.0], vec![0.5, 0.5, 0.5, 0.5], vec![2.0])
                .unwrap();
        let out = EncoderOutput::new(vec![0.0], vec![0.0], [0.0, 0.0]).unwrap();
        let d = PredictiveDistribution::from_output(&out, &model, 0.1).unwrap();
        assert_eq!(d.mean, model.mean());
    }

    #[test]
    fn zero_latent_variance_gives_isotropic_noise() {
        let d = dist(vec![0.0, 0.0], 0.3);
        let c = d.densify();
        for i in 0..6 {
            for j in 0..6 {
                assert_eq!(c[i * 6 + j], if i == j { 0.3 } else { 0.0 });
            }
        }
        for i in 0..3 {
            assert_eq!(d.vertex_marginal(i).unwrap().cov, [0.3, 0.0, 0.3]);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(d.sample_contour(&mut rng, false), d.mean);
    }

    #[test]
    fn rank_one_marginal_by_hand() {
        let d = PredictiveDistribution::new(vec![0.0, 0.0], vec![1.0, 0.0], vec![4.0], 0.0).unwrap();
        assert_eq!(d.vertex_marginal(0).unwrap().cov, [4.0, 0.0, 0.0]);
        assert!(matches!(d.vertex_marginal(1), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn marginal_matches_dense_block() {
        let d = dist(vec![0.7, 1.9], 0.05);
        let c = d.densify();
        for i in 0..3 {
            let m = d.vertex_marginal(i).unwrap();
            let block = [c[2 * i * 6 + 2 * i], c[2 * i * 6 + 2 * i + 1], c[(2 * i + 1) * 6 + 2 * i + 1]];
            for (a, b) in m.cov.iter().zip(block) {
                assert!((a - b).abs() < 1e-12);
            }
            let (l1, l2, _) = symmetric_eigen_2x2(m.cov[0], m.cov[1], m.cov[2]);
            assert!(l1 >= l2 && l2 >= 0.0);
        }
    }

    #[test]
    fn ellipse_closed_forms() {
        let e = confidence_ellipse([0.0, 0.0], [2.0, 0.0, 2.0], 0.30).unwrap();
        let r = (2.0 * -2.0 * 0.7f64.ln()).sqrt();
        assert!((e.semi_axes[0] - r).abs() < 1e-12 && (e.semi_axes[1] - r).abs() < 1e-12);
        assert!((chi2_2_quantile(0.95f64) - 5.991464547107979).abs() < 1e-12);
        let e = confidence_ellipse([1.0, 1.0], [4.0, 0.0, 1.0], 0.999).unwrap();
        let s = -2.0 * 0.001f64.ln();
        assert!((s - 13.815510557964274).abs() < 1e-12);
        assert!((e.semi_axes[0] - (4.0 * s).sqrt()).abs() < 1e-12);
        assert!((e.semi_axes[1] - s.sqrt()).abs() < 1e-12);
        assert_eq!(e.angle, 0.0);
        assert!(confidence_ellipse([0.0, 0.0], [1.0, 0.0, -1e-3], 0.5).is_err());
        assert!(confidence_ellipse([0.0, 0.0], [1.0, 0.0, -1e-14], 0.5).is_ok());
        assert!(confidence_ellipse([0.0, 0.0], [1.0, 0.0, 1.0], 1.0).is_err());
    }

    #[test]
    fn coverage_properties() {
        let d = dist(vec![0.5, 0.2], 0.05);
        assert_eq!(d.coverage_check(&d.mean, 0.01).unwrap(), 1.0);
        let off: Vec<f64> = d.mean.iter().map(|m| m + 0.3).collect();
        assert_eq!(d.coverage_check(&off, 1e-9).unwrap(), 0.0);
        let mut prev = 0.0;
        for level in [0.1, 0.3, 0.6, 0.9, 0.99, 0.999] {
            let c = d.coverage_check(&off, level).unwrap();
            assert!(c >= prev);
            prev = c;
        }
        let singular = dist(vec![0.0, 0.0], 0.0);
        assert!(matches!(
            singular.coverage_check(&off, 0.5),
            Err(Error::SingularMarginal { index: 0 })
        ));
    }

    #[test]
    fn record_round_trip() {
        let d = dist(vec![0.5, 0.2], 0.05);
        let rec = PredictionRecord::new(&d, &DEFAULT_LEVELS, 2).unwrap();
        assert_eq!(rec.ellipses.len(), 2 * 3);
        let text = serde_json::to_string(&rec).unwrap();
        let back: PredictionRecord = serde_json::from_str(&text).unwrap();
        assert_eq!(back.distribution().unwrap(), d);
    }
}
