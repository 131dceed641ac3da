//! Small dense helpers over row-major `Vec<T>` buffers.

use crate::scalar::Real;

/// Eigendecomposition of a symmetric `n x n` matrix by cyclic Jacobi rotations.
///
/// Returns eigenvalues in descending order and the matching eigenvectors as the
/// columns of a row-major `n x n` matrix.
pub fn symmetric_eigen<T: Real>(matrix: &[T], n: usize) -> (Vec<T>, Vec<T>) {
    assert_eq!(matrix.len(), n * n);
    let mut a = matrix.to_vec();
    let mut v = vec![T::zero(); n * n];
    for i in 0..n {
        v[i * n + i] = T::one();
    }
    let total: T = a.iter().map(|&x| x * x).sum();
    let tol = T::epsilon() * T::epsilon() * total;

    for _sweep in 0..100 {
        let mut off = T::zero();
        for p in 0..n {
            for q in (p + 1)..n {
                off += a[p * n + q].square();
            }
        }
        if off <= tol || off == T::zero() {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq == T::zero() {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = (aqq - app) / (T::lit(2.0) * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        a[j * n + j]
            .partial_cmp(&a[i * n + i])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(i.cmp(&j))
    });
    let values = order.iter().map(|&i| a[i * n + i]).collect();
    let mut vectors = vec![T::zero(); n * n];
    for (dst, &src) in order.iter().enumerate() {
        for k in 0..n {
            vectors[k * n + dst] = v[k * n + src];
        }
    }
    (values, vectors)
}

/// Eigen-decomposition of a symmetric 2x2 matrix `[[a, b], [b, c]]`.
///
/// Returns `(l1, l2, angle)` with `l1 >= l2` and `angle` the direction of the
/// `l1` eigenvector folded into `[0, pi)`.
pub fn symmetric_eigen_2x2<T: Real>(a: T, b: T, c: T) -> (T, T, T) {
    let half = T::lit(0.5);
    let mid = (a + c) * half;
    let rad = ((a - c) * half).hypot(b);
    let angle = half * (T::lit(2.0) * b).atan2(a - c);
    (mid + rad, mid - rad, fold_angle(angle))
}

/// Folds an axis direction into `[0, pi)`.
pub fn fold_angle<T: Real>(angle: T) -> T {
    let pi = T::PI();
    let mut a = angle % pi;
    if a < T::zero() {
        a += pi;
    }
    if a >= pi {
        a -= pi;
    }
    a
}

pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}
