//! Naive reference implementations used only by tests.
//!
//! Nothing here depends on the main crate: Gaussian densities, polygon fills
//! and covariance matrices are recomputed densely from their definitions.

use std::f64::consts::PI;
use std::fmt;

#[derive(Debug, Clone, PartialEq)]
pub enum OracleError {
    NotPsd(f64),
    Dimension(String),
    GridTooCoarse { points: usize, tail_mass: f64 },
}

impl fmt::Display for OracleError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OracleError::NotPsd(e) => write!(f, "covariance not PSD (eigenvalue {e})"),
            OracleError::Dimension(m) => write!(f, "dimension error: {m}"),
            OracleError::GridTooCoarse { points, tail_mass } => {
                write!(f, "grid of {points} points misses mass {tail_mass}")
            }
        }
    }
}

impl std::error::Error for OracleError {}

pub type OracleResult<T> = Result<T, OracleError>;

/// Eigenvalues of a symmetric matrix by plain Jacobi sweeps (values only).
pub fn symmetric_eigenvalues(a: &[f64], n: usize) -> Vec<f64> {
    let mut m = a.to_vec();
    for _ in 0..200 {
        let mut off = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    off += m[i * n + j] * m[i * n + j];
                }
            }
        }
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                if m[p * n + q] == 0.0 {
                    continue;
                }
                let phi = 0.5 * (2.0 * m[p * n + q]).atan2(m[q * n + q] - m[p * n + p]);
                let (s, c) = phi.sin_cos();
                // rotate rows/cols p and q: M <- J^T M J
                for k in 0..n {
                    let (mkp, mkq) = (m[k * n + p], m[k * n + q]);
                    m[k * n + p] = c * mkp - s * mkq;
                    m[k * n + q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[p * n + k], m[q * n + k]);
                    m[p * n + k] = c * mpk - s * mqk;
                    m[q * n + k] = s * mpk + c * mqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| m[i * n + i]).collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    ev
}

/// Lower-triangular Cholesky factor, row-major.
pub fn cholesky(a: &[f64], n: usize) -> OracleResult<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if s <= 0.0 {
                    return Err(OracleError::NotPsd(s));
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    Ok(l)
}

/// Multivariate normal with a dense covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseGaussian {
    pub mean: Vec<f64>,
    /// Row-major `n x n`.
    pub cov: Vec<f64>,
}

impl DenseGaussian {
    pub fn new(mean: Vec<f64>, cov: Vec<f64>) -> OracleResult<Self> {
        let n = mean.len();
        if cov.len() != n * n {
            return Err(OracleError::Dimension(format!(
                "covariance has {} entries for dimension {n}",
                cov.len()
            )));
        }
        let worst = symmetric_eigenvalues(&cov, n).last().copied().unwrap_or(0.0);
        if worst < -1e-12 {
            return Err(OracleError::NotPsd(worst));
        }
        Ok(Self { mean, cov })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// `ln N(y | mean, cov)` via a Cholesky factorization.
    pub fn log_density(&self, y: &[f64]) -> OracleResult<f64> {
        let n = self.dim();
        if y.len() != n {
            return Err(OracleError::Dimension(format!("point has length {}", y.len())));
        }
        let l = cholesky(&self.cov, n)?;
        // forward substitution L w = y - mean
        let mut w = vec![0.0; n];
        for i in 0..n {
            let mut s = y[i] - self.mean[i];
            for k in 0..i {
                s -= l[i * n + k] * w[k];
            }
            w[i] = s / l[i * n + i];
        }
        let quad: f64 = w.iter().map(|v| v * v).sum();
        let logdet: f64 = (0..n).map(|i| 2.0 * l[i * n + i].ln()).sum();
        Ok(-0.5 * (n as f64 * (2.0 * PI).ln() + logdet + quad))
    }
}

/// Dense mean and covariance of `y = F z + mean + tile(shift) + noise` with
/// `z ~ N(latent_mean, diag(latent_var))` and `noise ~ N(0, sigma2 I)`.
/// `factor` is row-major `D x K`.
pub fn predictive_moments(
    latent_mean: &[f64],
    latent_var: &[f64],
    shift: [f64; 2],
    shape_mean: &[f64],
    factor: &[f64],
    sigma2: f64,
) -> OracleResult<DenseGaussian> {
    let (d, k) = (shape_mean.len(), latent_mean.len());
    if factor.len() != d * k || latent_var.len() != k {
        return Err(OracleError::Dimension("factor or latent variance".into()));
    }
    let mut mean = vec![0.0; d];
    for i in 0..d {
        let mut s = shape_mean[i] + shift[i % 2];
        for j in 0..k {
            s += factor[i * k + j] * latent_mean[j];
        }
        mean[i] = s;
    }
    let mut cov = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..d {
            let mut s = if i == j { sigma2 } else { 0.0 };
            for m in 0..k {
                s += factor[i * k + m] * latent_var[m] * factor[j * k + m];
            }
            cov[i * d + j] = s;
        }
    }
    DenseGaussian::new(mean, cov)
}

/// Exact `ln p(y | x)` for the linear-Gaussian model, by dense factorization.
pub fn exact_log_marginal(
    y: &[f64],
    latent_mean: &[f64],
    latent_var: &[f64],
    shift: [f64; 2],
    shape_mean: &[f64],
    factor: &[f64],
    sigma2: f64,
) -> OracleResult<f64> {
    predictive_moments(latent_mean, latent_var, shift, shape_mean, factor, sigma2)?.log_density(y)
}

/// KL divergence of `N(mean, diag(var))` from `N(0, I)`.
pub fn kld_diag_vs_standard(mean: &[f64], var: &[f64]) -> f64 {
    0.5 * mean
        .iter()
        .zip(var)
        .map(|(m, v)| v + m * m - 1.0 - v.ln())
        .sum::<f64>()
}

fn normal_pdf(x: f64, m: f64, v: f64) -> f64 {
    (-(x - m) * (x - m) / (2.0 * v)).exp() / (2.0 * PI * v).sqrt()
}

/// `KL(q || N(0, I))` for `q = (1/N) sum_n N(mean_n, diag(var_n))` in one or
/// two dimensions, by trapezoidal quadrature over a box reaching 8 standard
/// deviations past every component and the prior.
pub fn quadrature_kld(components: &[(Vec<f64>, Vec<f64>)], points_per_axis: usize) -> OracleResult<f64> {
    let dim = components
        .first()
        .map(|c| c.0.len())
        .ok_or_else(|| OracleError::Dimension("empty mixture".into()))?;
    if !(1..=2).contains(&dim) || components.iter().any(|c| c.0.len() != dim || c.1.len() != dim) {
        return Err(OracleError::Dimension("quadrature supports 1 or 2 dimensions".into()));
    }
    if points_per_axis < 400 {
        return Err(OracleError::GridTooCoarse {
            points: points_per_axis,
            tail_mass: f64::NAN,
        });
    }
    let mut lo = vec![-8.0; dim];
    let mut hi = vec![8.0; dim];
    for (m, v) in components {
        for a in 0..dim {
            lo[a] = f64::min(lo[a], m[a] - 8.0 * v[a].sqrt());
            hi[a] = f64::max(hi[a], m[a] + 8.0 * v[a].sqrt());
        }
    }
    let n = components.len() as f64;
    let q = |x: &[f64]| {
        components
            .iter()
            .map(|(m, v)| (0..dim).map(|a| normal_pdf(x[a], m[a], v[a])).product::<f64>())
            .sum::<f64>()
            / n
    };
    let p = |x: &[f64]| (0..dim).map(|a| normal_pdf(x[a], 0.0, 1.0)).product::<f64>();
    let grid = |a: usize| -> Vec<(f64, f64)> {
        let h = (hi[a] - lo[a]) / (points_per_axis - 1) as f64;
        (0..points_per_axis)
            .map(|i| {
                let w = if i == 0 || i == points_per_axis - 1 { 0.5 * h } else { h };
                (lo[a] + i as f64 * h, w)
            })
            .collect()
    };
    let integrand = |x: &[f64]| {
        let qx = q(x);
        if qx > 0.0 {
            (qx, qx * (qx.ln() - p(x).ln()))
        } else {
            (0.0, 0.0)
        }
    };
    let (mut mass, mut kl) = (0.0, 0.0);
    let g0 = grid(0);
    if dim == 1 {
        for &(x, w) in &g0 {
            let (m, k) = integrand(&[x]);
            mass += w * m;
            kl += w * k;
        }
    } else {
        let g1 = grid(1);
        for &(x, wx) in &g0 {
            for &(y, wy) in &g1 {
                let (m, k) = integrand(&[x, y]);
                mass += wx * wy * m;
                kl += wx * wy * k;
            }
        }
    }
    let tail = (1.0 - mass).abs();
    if tail > 1e-6 {
        return Err(OracleError::GridTooCoarse {
            points: points_per_axis,
            tail_mass: tail,
        });
    }
    Ok(kl)
}

/// Crossing-number test with a ray towards +x; edges are half-open in y.
pub fn point_in_polygon(px: f64, py: f64, poly: &[f64]) -> bool {
    let n = poly.len() / 2;
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (xi, yi, xj, yj) = (poly[2 * i], poly[2 * i + 1], poly[2 * j], poly[2 * j + 1]);
        if (yi > py) != (yj > py) {
            let x = xi + (py - yi) * (xj - xi) / (yj - yi);
            if x > px {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

/// Mask of pixel centers inside `poly`, row-major.
pub fn brute_force_mask(poly: &[f64], height: usize, width: usize) -> Vec<bool> {
    let mut out = Vec::with_capacity(height * width);
    for r in 0..height {
        for c in 0..width {
            out.push(point_in_polygon(c as f64 + 0.5, r as f64 + 0.5, poly));
        }
    }
    out
}

/// Mean and sample covariance (divisor `N - 1`) built entry by entry.
pub fn sample_covariance(rows: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let n = rows.len();
    let d = rows[0].len();
    let mut mean = vec![0.0; d];
    for r in rows {
        for (m, x) in mean.iter_mut().zip(r) {
            *m += x / n as f64;
        }
    }
    let mut cov = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..d {
            let s: f64 = rows.iter().map(|r| (r[i] - mean[i]) * (r[j] - mean[j])).sum();
            cov[i * d + j] = s / (n as f64 - 1.0);
        }
    }
    (mean, cov)
}

/// Empirical moments of a sample with standard errors for every entry.
#[derive(Debug, Clone)]
pub struct EmpiricalMoments {
    pub mean: Vec<f64>,
    pub mean_se: Vec<f64>,
    /// Row-major, divisor `N`.
    pub cov: Vec<f64>,
    pub cov_se: Vec<f64>,
}

/// Moments of `samples` (one row per draw). The covariance standard error is
/// that of a mean of the products `(x_i - m_i)(x_j - m_j)`.
pub fn empirical_moments(samples: &[Vec<f64>]) -> EmpiricalMoments {
    let n = samples.len() as f64;
    let d = samples[0].len();
    let mut mean = vec![0.0; d];
    for s in samples {
        for (m, x) in mean.iter_mut().zip(s) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut cov = vec![0.0; d * d];
    let mut sq = vec![0.0; d * d];
    for s in samples {
        for i in 0..d {
            let di = s[i] - mean[i];
            for j in 0..d {
                let p = di * (s[j] - mean[j]);
                cov[i * d + j] += p;
                sq[i * d + j] += p * p;
            }
        }
    }
    let mut cov_se = vec![0.0; d * d];
    for idx in 0..d * d {
        cov[idx] /= n;
        let var = sq[idx] / n - cov[idx] * cov[idx];
        cov_se[idx] = (var.max(0.0) / n).sqrt();
    }
    let mean_se = (0..d).map(|i| (cov[i * d + i] / n).sqrt()).collect();
    EmpiricalMoments {
        mean,
        mean_se,
        cov,
        cov_se,
    }
}

/// Central difference `(f(x + h e_i) - f(x - h e_i)) / 2h`.
pub fn central_difference(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], i: usize, h: f64) -> f64 {
    let mut xp = x.to_vec();
    xp[i] += h;
    let fp = f(&xp);
    xp[i] = x[i] - h;
    let fm = f(&xp);
    (fp - fm) / (2.0 * h)
}

/// `|a - b| / max(|a|, |b|, floor)`.
pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_vertex_one_component_by_hand() {
        // y = (2, 1), mean (0, 0), factor (1, 0)^T, latent N(1, 3), sigma2 0.5
        // => N((1, 0), [[3.5, 0], [0, 0.5]])
        let got = exact_log_marginal(&[2.0, 1.0], &[1.0], &[3.0], [0.0, 0.0], &[0.0, 0.0], &[1.0, 0.0], 0.5).unwrap();
        let want = -(2.0 * PI).ln() - 0.5 * (3.5f64 * 0.5).ln() - 0.5 * (1.0 / 3.5 + 1.0 / 0.5);
        assert!((got - want).abs() < 1e-12);
    }

    #[test]
    fn quadrature_closed_forms() {
        let same = quadrature_kld(&[(vec![0.0], vec![1.0])], 801).unwrap();
        assert!(same.abs() < 1e-6);
        let m = 1.3;
        let shifted = quadrature_kld(&[(vec![m], vec![1.0])], 2001).unwrap();
        assert!((shifted - m * m / 2.0).abs() < 1e-5);
        let two = quadrature_kld(&[(vec![0.5, -0.2], vec![0.7, 1.4])], 401).unwrap();
        assert!((two - kld_diag_vs_standard(&[0.5, -0.2], &[0.7, 1.4])).abs() < 1e-5);
        assert!(quadrature_kld(&[(vec![0.0], vec![1.0])], 50).is_err());
    }

    #[test]
    fn crossing_number_square() {
        let sq = [0.0, 0.0, 10.0, 0.0, 10.0, 10.0, 0.0, 10.0];
        assert_eq!(brute_force_mask(&sq, 20, 20).iter().filter(|&&b| b).count(), 100);
    }

    #[test]
    fn not_psd_rejected() {
        assert!(DenseGaussian::new(vec![0.0, 0.0], vec![1.0, 2.0, 2.0, 1.0]).is_err());
    }
}
