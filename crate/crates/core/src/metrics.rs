//! Evaluation metrics: DICE between flooded contours and vertex RMSE.

use std::path::Path;

use crate::error::{Error, Result};
use crate::io_util::encode_pgm;
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    pub height: usize,
    pub width: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn empty(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            bits: vec![false; height * width],
        }
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.bits[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        self.bits[row * self.width + col] = value;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    /// Binary PGM, 0 or 255 per pixel.
    pub fn to_pgm(&self) -> Vec<u8> {
        let px: Vec<u8> = self.bits.iter().map(|&b| if b { 255 } else { 0 }).collect();
        encode_pgm(self.width, self.height, &px)
    }

    pub fn write_pgm(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_pgm())?;
        Ok(())
    }
}

fn distinct_vertices<T: Real>(contour: &[T]) -> usize {
    let mut seen: Vec<(T, T)> = Vec::new();
    for p in contour.chunks_exact(2) {
        if !seen.iter().any(|&(x, y)| x == p[0] && y == p[1]) {
            seen.push((p[0], p[1]));
            if seen.len() >= 3 {
                break;
            }
        }
    }
    seen.len()
}

/// Fills the closed polygon `contour` (`x0, y0, x1, y1, ...`) on a grid.
/// Pixel `(r, c)` is set iff its center `(c + 0.5, r + 0.5)` is inside by the
/// even-odd rule.
pub fn rasterize<T: Real>(contour: &[T], height: usize, width: usize) -> Result<BinaryMask> {
    if contour.len() % 2 != 0 {
        return Err(Error::InvalidArgument(format!(
            "contour must hold x,y pairs, got length {}",
            contour.len()
        )));
    }
    let mut mask = BinaryMask::empty(height, width);
    if distinct_vertices(contour) < 3 {
        log::warn!("degenerate contour with fewer than 3 distinct vertices; mask left empty");
        return Ok(mask);
    }
    let pts: Vec<(f64, f64)> = contour
        .chunks_exact(2)
        .map(|p| (p[0].to_f64_lossy(), p[1].to_f64_lossy()))
        .collect();
    let n = pts.len();
    let mut xs = Vec::with_capacity(n);
    for r in 0..height {
        let yc = r as f64 + 0.5;
        xs.clear();
        for i in 0..n {
            let (x0, y0) = pts[i];
            let (x1, y1) = pts[(i + 1) % n];
            // half-open in y so shared vertices count once
            if (y0 <= yc && yc < y1) || (y1 <= yc && yc < y0) {
                xs.push(x0 + (yc - y0) * (x1 - x0) / (y1 - y0));
            }
        }
        xs.sort_by(f64::total_cmp);
        for span in xs.chunks_exact(2) {
            // centers with span[0] <= c + 0.5 < span[1]
            let lo = (span[0] - 0.5).ceil().max(0.0);
            let hi = (span[1] - 0.5).ceil().min(width as f64);
            if lo >= hi {
                continue;
            }
            for c in lo as usize..hi as usize {
                mask.set(r, c, true);
            }
        }
    }
    Ok(mask)
}

/// `2 |a & b| / (|a| + |b|)`, and 1 when both are empty.
pub fn dice(a: &BinaryMask, b: &BinaryMask) -> Result<f64> {
    if (a.height, a.width) != (b.height, b.width) {
        return Err(Error::ShapeMismatch {
            op: "dice",
            lhs: vec![a.height, a.width],
            rhs: vec![b.height, b.width],
        });
    }
    let both = a.bits.iter().zip(&b.bits).filter(|(&x, &y)| x && y).count();
    let total = a.count() + b.count();
    if total == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * both as f64 / total as f64)
}

/// DICE between the filled versions of two contours.
pub fn contour_dice<T: Real>(pred: &[T], reference: &[T], height: usize, width: usize) -> Result<f64> {
    dice(&rasterize(pred, height, width)?, &rasterize(reference, height, width)?)
}

/// Root mean squared Euclidean distance between corresponding vertices.
pub fn rmse<T: Real>(pred: &[T], reference: &[T]) -> Result<T> {
    if pred.len() != reference.len() || pred.len() % 2 != 0 || pred.is_empty() {
        return Err(Error::Dimension {
            what: "contour length",
            expected: reference.len(),
            actual: pred.len(),
        });
    }
    let ss: T = pred
        .iter()
        .zip(reference)
        .map(|(&a, &b)| (a - b).square())
        .sum();
    Ok((ss / T::from_usize_lossy(pred.len() / 2)).sqrt())
}

/// Signed shoelace area (positive for counter-clockwise in a y-up frame).
pub fn shoelace_area<T: Real>(contour: &[T]) -> T {
    let n = contour.len() / 2;
    let mut s = T::zero();
    for i in 0..n {
        let j = (i + 1) % n;
        s += contour[2 * i] * contour[2 * j + 1] - contour[2 * j] * contour[2 * i + 1];
    }
    s * T::lit(0.5)
}

pub fn perimeter<T: Real>(contour: &[T]) -> T {
    let n = contour.len() / 2;
    (0..n)
        .map(|i| {
            let j = (i + 1) % n;
            (contour[2 * j] - contour[2 * i]).hypot(contour[2 * j + 1] - contour[2 * i + 1])
        })
        .sum()
}
