//! PCA point-distribution model over corresponding contour vertices.
//!
//! Contours are flat vectors `(x1, y1, ..., xV, yV)` in pixels. A shape is
//! generated from whitened weights `z` and a global shift `s` as
//! `y = U S^(1/2) z + mean + tile(s)`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io_util::{f17_vec, unwrap_f17, F17};
use crate::linalg::{dot, symmetric_eigen};
use crate::scalar::Real;

/// Eigenvalues below this fraction of the largest are treated as zero.
pub const RELATIVE_RANK_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct PcaShapeModel<T> {
    vertex_count: usize,
    mean: Vec<T>,
    /// Column-major `2V x K`.
    components: Vec<T>,
    eigenvalues: Vec<T>,
}

/// Full spectrum of a contour set's sample covariance (divisor `N - 1`).
#[derive(Debug, Clone)]
struct Decomposition<T> {
    mean: Vec<T>,
    /// Column-major `2V x R`, `R = min(2V, N)`.
    vectors: Vec<T>,
    values: Vec<T>,
}

fn check_contours<T: Real>(contours: &[Vec<T>]) -> Result<usize> {
    if contours.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "PCA needs at least 2 contours, got {}",
            contours.len()
        )));
    }
    let dim = contours[0].len();
    if dim == 0 || dim % 2 != 0 {
        return Err(Error::InvalidArgument(format!(
            "contour length must be positive and even, got {dim}"
        )));
    }
    for c in contours {
        if c.len() != dim {
            return Err(Error::Dimension {
                what: "contour length",
                expected: dim,
                actual: c.len(),
            });
        }
        if c.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument("contour has non-finite coordinate".into()));
        }
    }
    Ok(dim)
}

fn decompose<T: Real>(contours: &[Vec<T>]) -> Result<Decomposition<T>> {
    let dim = check_contours(contours)?;
    let n = contours.len();
    let nf = T::from_usize_lossy(n);
    let mut mean = vec![T::zero(); dim];
    for c in contours {
        for (m, &x) in mean.iter_mut().zip(c) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= nf);
    // centered data, row-major n x dim
    let centered: Vec<T> = contours
        .iter()
        .flat_map(|c| c.iter().zip(&mean).map(|(&x, &m)| x - m))
        .collect();
    let divisor = T::from_usize_lossy(n - 1);

    let (mut values, mut vectors) = if dim <= n {
        let mut cov = vec![T::zero(); dim * dim];
        for row in centered.chunks(dim) {
            for i in 0..dim {
                let ri = row[i];
                if ri == T::zero() {
                    continue;
                }
                for j in i..dim {
                    cov[i * dim + j] += ri * row[j];
                }
            }
        }
        for i in 0..dim {
            for j in i..dim {
                let v = cov[i * dim + j] / divisor;
                cov[i * dim + j] = v;
                cov[j * dim + i] = v;
            }
        }
        let (vals, vecs_rm) = symmetric_eigen(&cov, dim);
        let mut cols = vec![T::zero(); dim * dim];
        for k in 0..dim {
            for i in 0..dim {
                cols[k * dim + i] = vecs_rm[i * dim + k];
            }
        }
        (vals, cols)
    } else {
        // Gram route: same nonzero spectrum, n x n instead of dim x dim.
        let mut gram = vec![T::zero(); n * n];
        for a in 0..n {
            for b in a..n {
                let v = dot(&centered[a * dim..(a + 1) * dim], &centered[b * dim..(b + 1) * dim])
                    / divisor;
                gram[a * n + b] = v;
                gram[b * n + a] = v;
            }
        }
        let (vals, w) = symmetric_eigen(&gram, n);
        let lmax = vals.first().copied().unwrap_or(T::zero()).max(T::zero());
        let mut cols = vec![T::zero(); dim * n];
        let mut filled = 0;
        for k in 0..n {
            if vals[k] > T::lit(RELATIVE_RANK_TOLERANCE) * lmax && vals[k] > T::zero() {
                let scale = T::one() / (divisor * vals[k]).sqrt();
                for a in 0..n {
                    let wa = w[a * n + k] * scale;
                    for i in 0..dim {
                        cols[k * dim + i] += centered[a * dim + i] * wa;
                    }
                }
                filled += 1;
            }
        }
        complete_orthonormal(&mut cols, dim, n, filled);
        (vals, cols)
    };

    let lmax = values.first().copied().unwrap_or(T::zero()).max(T::zero());
    for v in values.iter_mut() {
        if *v < T::lit(RELATIVE_RANK_TOLERANCE) * lmax || *v < T::zero() {
            *v = T::zero();
        }
    }
    let r = values.len();
    for k in 0..r {
        orient_column(&mut vectors[k * dim..(k + 1) * dim]);
    }
    Ok(Decomposition {
        mean,
        vectors,
        values,
    })
}

/// Re-orthonormalizes the first `filled` columns and completes the remaining
/// ones from the standard basis (modified Gram-Schmidt).
fn complete_orthonormal<T: Real>(cols: &mut [T], dim: usize, count: usize, filled: usize) {
    let mut k = 0;
    let mut basis = 0;
    while k < count {
        if k >= filled {
            let col = &mut cols[k * dim..(k + 1) * dim];
            col.iter_mut().for_each(|x| *x = T::zero());
            if basis >= dim {
                break;
            }
            col[basis] = T::one();
            basis += 1;
        }
        for j in 0..k {
            let (head, tail) = cols.split_at_mut(k * dim);
            let prev = &head[j * dim..(j + 1) * dim];
            let col = &mut tail[..dim];
            let p = dot(prev, col);
            for (c, &q) in col.iter_mut().zip(prev) {
                *c -= p * q;
            }
        }
        let col = &mut cols[k * dim..(k + 1) * dim];
        let norm = dot(col, col).sqrt();
        if norm > T::lit(1e-6) {
            col.iter_mut().for_each(|x| *x /= norm);
            k += 1;
        } else if k < filled {
            // lost to cancellation; replace from the basis
            col.iter_mut().for_each(|x| *x = T::zero());
            col[basis.min(dim - 1)] = T::one();
            basis += 1;
        }
        // otherwise retry this slot with the next basis vector
    }
}

/// Sign convention: the largest-magnitude entry of each component is positive.
fn orient_column<T: Real>(col: &mut [T]) {
    let mut best = 0;
    for (i, x) in col.iter().enumerate() {
        if x.abs() > col[best].abs() {
            best = i;
        }
    }
    if col[best] < T::zero() {
        col.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Eigenvalues of the sample covariance of `contours`, descending.
pub fn covariance_spectrum<T: Real>(contours: &[Vec<T>]) -> Result<Vec<T>> {
    Ok(decompose(contours)?.values)
}

/// Adds `shift` to every vertex.
pub fn translate<T: Real>(contour: &mut [T], shift: [T; 2]) {
    for xy in contour.chunks_mut(2) {
        xy[0] += shift[0];
        xy[1] += shift[1];
    }
}

impl<T: Real> PcaShapeModel<T> {
    /// Fits mean, leading `num_components` principal directions and their
    /// variances from training contours.
    pub fn fit(contours: &[Vec<T>], num_components: usize) -> Result<Self> {
        let dim = check_contours(contours)?;
        if num_components == 0 {
            return Err(Error::InvalidArgument("need at least one component".into()));
        }
        let achievable = dim.min(contours.len() - 1);
        if num_components > achievable {
            return Err(Error::RankTooLow {
                requested: num_components,
                achievable,
            });
        }
        let d = decompose(contours)?;
        Ok(Self {
            vertex_count: dim / 2,
            mean: d.mean,
            components: d.vectors[..dim * num_components].to_vec(),
            eigenvalues: d.values[..num_components].to_vec(),
        })
    }

    /// Assembles a model from parts. `components` is column-major `2V x K`.
    pub fn from_parts(mean: Vec<T>, components: Vec<T>, eigenvalues: Vec<T>) -> Result<Self> {
        let dim = mean.len();
        if dim == 0 || dim % 2 != 0 {
            return Err(Error::InvalidArgument(format!("mean length {dim} is not even")));
        }
        let k = eigenvalues.len();
        if components.len() != dim * k {
            return Err(Error::Dimension {
                what: "component matrix size",
                expected: dim * k,
                actual: components.len(),
            });
        }
        if eigenvalues.iter().any(|&e| !(e >= T::zero())) {
            return Err(Error::InvalidArgument("eigenvalues must be non-negative".into()));
        }
        Ok(Self {
            vertex_count: dim / 2,
            mean,
            components,
            eigenvalues,
        })
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex_count
    }

    /// Length of a contour vector, `2V`.
    pub fn dim(&self) -> usize {
        2 * self.vertex_count
    }

    pub fn num_components(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn mean(&self) -> &[T] {
        &self.mean
    }

    pub fn eigenvalues(&self) -> &[T] {
        &self.eigenvalues
    }

    pub fn component(&self, k: usize) -> &[T] {
        let d = self.dim();
        &self.components[k * d..(k + 1) * d]
    }

    /// Column-major `2V x K` component matrix.
    pub fn components(&self) -> &[T] {
        &self.components
    }

    /// Row-major `2V x K` matrix `U S^(1/2)`.
    pub fn factor(&self) -> Vec<T> {
        let (d, k) = (self.dim(), self.num_components());
        let mut out = vec![T::zero(); d * k];
        for c in 0..k {
            let s = self.eigenvalues[c].sqrt();
            for (r, &u) in self.component(c).iter().enumerate() {
                out[r * k + c] = u * s;
            }
        }
        out
    }

    /// `max |U^T U - I|`.
    pub fn orthonormality_error(&self) -> T {
        let k = self.num_components();
        let mut worst = T::zero();
        for i in 0..k {
            for j in 0..k {
                let target = if i == j { T::one() } else { T::zero() };
                worst = worst.max((dot(self.component(i), self.component(j)) - target).abs());
            }
        }
        worst
    }

    /// `U S^(1/2) z + mean + tile(shift)`.
    pub fn decode(&self, z: &[T], shift: [T; 2]) -> Result<Vec<T>> {
        if z.len() != self.num_components() {
            return Err(Error::Dimension {
                what: "latent vector",
                expected: self.num_components(),
                actual: z.len(),
            });
        }
        let mut y = self.mean.clone();
        for (k, &zk) in z.iter().enumerate() {
            let w = zk * self.eigenvalues[k].sqrt();
            if w == T::zero() {
                continue;
            }
            for (yi, &u) in y.iter_mut().zip(self.component(k)) {
                *yi += w * u;
            }
        }
        translate(&mut y, shift);
        Ok(y)
    }

    /// Whitened weights of `y`: `S^(-1/2) U^T (y - mean)`.
    pub fn project(&self, y: &[T]) -> Result<Vec<T>> {
        self.project_with_shift(y, [T::zero(); 2])
    }

    pub fn project_with_shift(&self, y: &[T], shift: [T; 2]) -> Result<Vec<T>> {
        if y.len() != self.dim() {
            return Err(Error::Dimension {
                what: "contour length",
                expected: self.dim(),
                actual: y.len(),
            });
        }
        if let Some(index) = self.eigenvalues.iter().position(|&e| e <= T::zero()) {
            return Err(Error::ZeroEigenvalue { index });
        }
        let mut centered: Vec<T> = y.iter().zip(&self.mean).map(|(&a, &m)| a - m).collect();
        translate(&mut centered, [-shift[0], -shift[1]]);
        Ok((0..self.num_components())
            .map(|k| dot(self.component(k), &centered) / self.eigenvalues[k].sqrt())
            .collect())
    }

    pub fn cast<U: Real>(&self) -> PcaShapeModel<U> {
        let conv = |v: &[T]| v.iter().map(|x| U::lit(x.to_f64_lossy())).collect();
        PcaShapeModel {
            vertex_count: self.vertex_count,
            mean: conv(&self.mean),
            components: conv(&self.components),
            eigenvalues: conv(&self.eigenvalues),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let d = self.dim();
        let file = ModelFile {
            vertex_count: self.vertex_count,
            num_components: self.num_components(),
            covariance_divisor: "n-1".to_string(),
            mean: f17_vec(self.mean.iter().map(|x| x.to_f64_lossy())),
            eigenvalues: f17_vec(self.eigenvalues.iter().map(|x| x.to_f64_lossy())),
            components: self
                .components
                .chunks(d)
                .map(|c| f17_vec(c.iter().map(|x| x.to_f64_lossy())))
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text)?;
        let d = 2 * file.vertex_count;
        if file.mean.len() != d {
            return Err(Error::Dimension {
                what: "model mean",
                expected: d,
                actual: file.mean.len(),
            });
        }
        if file.components.len() != file.num_components
            || file.eigenvalues.len() != file.num_components
        {
            return Err(Error::Dimension {
                what: "model component count",
                expected: file.num_components,
                actual: file.components.len(),
            });
        }
        let mut components = Vec::with_capacity(d * file.num_components);
        for c in &file.components {
            if c.len() != d {
                return Err(Error::Dimension {
                    what: "model component length",
                    expected: d,
                    actual: c.len(),
                });
            }
            components.extend(c.iter().map(|x| T::lit(x.0)));
        }
        let conv = |v: &[F17]| unwrap_f17(v).into_iter().map(T::lit).collect();
        Self::from_parts(conv(&file.mean), components, conv(&file.eigenvalues))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    vertex_count: usize,
    num_components: usize,
    covariance_divisor: String,
    mean: Vec<F17>,
    eigenvalues: Vec<F17>,
    /// One inner array per component (column-major).
    components: Vec<Vec<F17>>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_contours(n: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| (0..dim).map(|_| rng.random_range(-5.0..5.0)).collect())
            .collect()
    }

    #[test]
    fn two_point_spectrum() {
        let m = PcaShapeModel::<f64>::fit(&[vec![0.0, 0.0], vec![2.0, 0.0]], 1).unwrap();
        assert_eq!(m.mean(), &[1.0, 0.0]);
        assert!((m.eigenvalues()[0] - 2.0).abs() < 1e-14);
        assert!((m.component(0)[0].abs() - 1.0).abs() < 1e-14);
        assert!(m.component(0)[1].abs() < 1e-14);
    }

    #[test]
    fn identical_contours_have_zero_spectrum() {
        let c = vec![1.0, 2.0, 3.0, 4.0];
        let m = PcaShapeModel::fit(&[c.clone(), c.clone(), c.clone()], 2).unwrap();
        assert_eq!(m.mean(), &c[..]);
        assert!(m.eigenvalues().iter().all(|&e| e == 0.0));
        assert!(matches!(m.project(&c), Err(Error::ZeroEigenvalue { index: 0 })));
    }

    #[test]
    fn rank_error_reports_achievable() {
        let cs = random_contours(3, 6, 1);
        match PcaShapeModel::fit(&cs, 3) {
            Err(Error::RankTooLow {
                requested: 3,
                achievable: 2,
            }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn decode_basics() {
        let cs = random_contours(10, 6, 2);
        let m = PcaShapeModel::fit(&cs, 3).unwrap();
        assert_eq!(m.decode(&[0.0; 3], [0.0, 0.0]).unwrap(), m.mean());
        let shifted = m.decode(&[0.0; 3], [3.0, 4.0]).unwrap();
        for (i, (&a, &b)) in shifted.iter().zip(m.mean()).enumerate() {
            let want = if i % 2 == 0 { 3.0 } else { 4.0 };
            assert!((a - b - want).abs() < 1e-12);
        }
        let e1 = m.decode(&[1.0, 0.0, 0.0], [0.0, 0.0]).unwrap();
        let s1 = m.eigenvalues()[0].sqrt();
        for i in 0..6 {
            assert!((e1[i] - (m.mean()[i] + s1 * m.component(0)[i])).abs() < 1e-12);
        }
        assert!(matches!(
            m.decode(&[0.0; 2], [0.0, 0.0]),
            Err(Error::Dimension { .. })
        ));
        assert_eq!(m.project(m.mean()).unwrap(), vec![0.0; 3]);
        let z = m.project(&e1).unwrap();
        assert!((z[0] - 1.0).abs() < 1e-10 && z[1].abs() < 1e-10 && z[2].abs() < 1e-10);
    }

    #[test]
    fn gram_route_matches_covariance_route() {
        // 2V = 12 > N = 5 forces the Gram path; compare against an explicit
        // 12 x 12 covariance.
        let cs = random_contours(5, 12, 3);
        let m = PcaShapeModel::fit(&cs, 4).unwrap();
        assert!(m.orthonormality_error() < 1e-10);
        let mean: Vec<f64> = (0..12).map(|i| cs.iter().map(|c| c[i]).sum::<f64>() / 5.0).collect();
        let mut cov = vec![0.0; 144];
        for c in &cs {
            for i in 0..12 {
                for j in 0..12 {
                    cov[i * 12 + j] += (c[i] - mean[i]) * (c[j] - mean[j]) / 4.0;
                }
            }
        }
        let (vals, _) = symmetric_eigen(&cov, 12);
        for k in 0..4 {
            assert!((vals[k] - m.eigenvalues()[k]).abs() < 1e-10 * vals[0]);
            let u = m.component(k);
            for i in 0..12 {
                let cu: f64 = (0..12).map(|j| cov[i * 12 + j] * u[j]).sum();
                assert!((cu - vals[k] * u[i]).abs() < 1e-9 * vals[0]);
            }
        }
    }

    #[test]
    fn json_round_trip_is_bit_exact() {
        let cs = random_contours(8, 6, 4);
        let m = PcaShapeModel::fit(&cs, 3).unwrap();
        let back = PcaShapeModel::<f64>::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back, m);
        assert!(m.to_json().unwrap().contains("\"covariance_divisor\": \"n-1\""));
    }

    #[test]
    fn f32_model_is_usable() {
        let cs: Vec<Vec<f32>> = random_contours(12, 6, 5)
            .into_iter()
            .map(|c| c.into_iter().map(|x| x as f32).collect())
            .collect();
        let m = PcaShapeModel::fit(&cs, 6).unwrap();
        assert!(m.orthonormality_error() < 1e-5);
        let z = m.project(&cs[0]).unwrap();
        let y = m.decode(&z, [0.0, 0.0]).unwrap();
        for (a, b) in y.iter().zip(&cs[0]) {
            assert!((a - b).abs() < 1e-3);
        }
    }
}
