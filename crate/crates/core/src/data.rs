//! Datasets of (image, contour) pairs: a synthetic ring generator and the
//! on-disk directory format.
//!
//! A dataset directory holds `manifest.json`, one `img_<id>.pgm` (binary
//! 8-bit PGM) and one `contour_<id>.csv` (`x,y` per line) per item.

use std::collections::{BTreeMap, HashSet};
use std::f64::consts::TAU;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::encoder::Image;
use crate::error::{Error, Result};
use crate::io_util::{decode_pgm, encode_pgm, format17, sha256_hex, F17};
use crate::rng::substream;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const SPLIT_NAMES: [&str; 3] = ["train", "val", "test"];

#[derive(Debug, Clone, PartialEq)]
pub struct Item {
    pub id: String,
    /// Row-major 8-bit intensities.
    pub pixels: Vec<u8>,
    /// `x0, y0, x1, y1, ...` in pixel coordinates (x to the right, y down).
    pub contour: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShapeDataset {
    pub height: usize,
    pub width: usize,
    /// Millimetres per pixel.
    pub spacing: f64,
    pub vertex_count: usize,
    pub items: Vec<Item>,
    /// Split name to item ids.
    pub splits: BTreeMap<String, Vec<String>>,
}

impl ShapeDataset {
    pub fn item(&self, id: &str) -> Result<&Item> {
        self.items
            .iter()
            .find(|it| it.id == id)
            .ok_or_else(|| Error::InvalidArgument(format!("no item with id {id:?}")))
    }

    pub fn split(&self, name: &str) -> Result<Vec<&Item>> {
        let ids = self
            .splits
            .get(name)
            .ok_or_else(|| Error::InvalidArgument(format!("no split named {name:?}")))?;
        ids.iter().map(|id| self.item(id)).collect()
    }

    pub fn image(&self, item: &Item) -> Result<Image> {
        Image::from_u8(self.height, self.width, &item.pixels, self.spacing)
    }

    /// Contours of a split, in split order.
    pub fn contours(&self, split: &str) -> Result<Vec<Vec<f64>>> {
        Ok(self.split(split)?.into_iter().map(|it| it.contour.clone()).collect())
    }

    /// Content hash of a split's contours (ids and coordinates, in order).
    pub fn split_hash(&self, name: &str) -> Result<String> {
        let mut buf = Vec::new();
        for it in self.split(name)? {
            buf.extend_from_slice(it.id.as_bytes());
            buf.push(b'\n');
            buf.extend_from_slice(contour_csv(&it.contour).as_bytes());
        }
        Ok(sha256_hex(&buf))
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for it in &self.items {
            if !valid_id(&it.id) {
                return Err(Error::InvalidArgument(format!(
                    "item id {:?} is not lowercase alphanumeric",
                    it.id
                )));
            }
            if !seen.insert(it.id.as_str()) {
                return Err(Error::InvalidArgument(format!("duplicate item id {:?}", it.id)));
            }
            if it.contour.len() != 2 * self.vertex_count {
                return Err(Error::MixedVertexCount {
                    id: it.id.clone(),
                    expected: self.vertex_count,
                    actual: it.contour.len() / 2,
                });
            }
            if it.pixels.len() != self.height * self.width {
                return Err(Error::Dimension {
                    what: "image pixel count",
                    expected: self.height * self.width,
                    actual: it.pixels.len(),
                });
            }
        }
        let mut used = HashSet::new();
        for (name, ids) in &self.splits {
            for id in ids {
                if !seen.contains(id.as_str()) {
                    return Err(Error::InvalidArgument(format!(
                        "split {name:?} names unknown id {id:?}"
                    )));
                }
                if !used.insert(id.as_str()) {
                    return Err(Error::InvalidArgument(format!(
                        "id {id:?} appears in more than one split"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        self.validate()?;
        std::fs::create_dir_all(dir)?;
        for it in &self.items {
            std::fs::write(
                dir.join(format!("img_{}.pgm", it.id)),
                encode_pgm(self.width, self.height, &it.pixels),
            )?;
            std::fs::write(
                dir.join(format!("contour_{}.csv", it.id)),
                contour_csv(&it.contour),
            )?;
        }
        let manifest = Manifest {
            height: self.height,
            width: self.width,
            spacing: F17(self.spacing),
            vertex_count: self.vertex_count,
            ids: self.items.iter().map(|it| it.id.clone()).collect(),
            splits: self.splits.clone(),
        };
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        std::fs::write(dir.join(MANIFEST_FILE), text)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let mpath = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&mpath)?;
        let manifest: Manifest = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: mpath.display().to_string(),
            line: e.line(),
            msg: e.to_string(),
        })?;
        let mut items = Vec::with_capacity(manifest.ids.len());
        for id in &manifest.ids {
            let ipath = dir.join(format!("img_{id}.pgm"));
            let (w, h, pixels) = decode_pgm(&std::fs::read(&ipath)?, &ipath.display().to_string())?;
            if (h, w) != (manifest.height, manifest.width) {
                return Err(Error::Parse {
                    path: ipath.display().to_string(),
                    line: 2,
                    msg: format!(
                        "image is {w}x{h}, manifest says {}x{}",
                        manifest.width, manifest.height
                    ),
                });
            }
            let cpath = dir.join(format!("contour_{id}.csv"));
            let contour = parse_contour_csv(
                &std::fs::read_to_string(&cpath)?,
                &cpath.display().to_string(),
            )?;
            if contour.len() != 2 * manifest.vertex_count {
                return Err(Error::MixedVertexCount {
                    id: id.clone(),
                    expected: manifest.vertex_count,
                    actual: contour.len() / 2,
                });
            }
            items.push(Item {
                id: id.clone(),
                pixels,
                contour,
            });
        }
        let ds = Self {
            height: manifest.height,
            width: manifest.width,
            spacing: manifest.spacing.0,
            vertex_count: manifest.vertex_count,
            items,
            splits: manifest.splits,
        };
        ds.validate()?;
        Ok(ds)
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    height: usize,
    width: usize,
    spacing: F17,
    vertex_count: usize,
    ids: Vec<String>,
    splits: BTreeMap<String, Vec<String>>,
}

fn valid_id(id: &str) -> bool {
    !id.is_empty() && id.bytes().all(|b| b.is_ascii_lowercase() || b.is_ascii_digit())
}

pub fn contour_csv(contour: &[f64]) -> String {
    let mut s = String::with_capacity(contour.len() * 24);
    for p in contour.chunks_exact(2) {
        s.push_str(&format17(p[0]));
        s.push(',');
        s.push_str(&format17(p[1]));
        s.push('\n');
    }
    s
}

pub fn parse_contour_csv(text: &str, path: &str) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let err = |msg: String| Error::Parse {
            path: path.to_string(),
            line: i + 1,
            msg,
        };
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (x, y) = line
            .split_once(',')
            .ok_or_else(|| err(format!("expected `x,y`, got {line:?}")))?;
        for field in [x, y] {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| err(format!("bad number {field:?}")))?;
            if !v.is_finite() {
                return Err(err(format!("non-finite coordinate {field:?}")));
            }
            out.push(v);
        }
    }
    if out.is_empty() {
        return Err(Error::Parse {
            path: path.to_string(),
            line: 1,
            msg: "no vertices".into(),
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    #[serde(default = "defaults::count")]
    pub count: usize,
    #[serde(default = "defaults::side")]
    pub height: usize,
    #[serde(default = "defaults::side")]
    pub width: usize,
    #[serde(default = "defaults::vertex_count")]
    pub vertex_count: usize,
    /// Outer radius range in pixels.
    #[serde(default = "defaults::radius_range")]
    pub radius_range: [f64; 2],
    #[serde(default = "defaults::wall_thickness")]
    pub wall_thickness: [f64; 2],
    /// Upper bound of the amplitude of harmonics 1..=4; each subject draws
    /// uniformly below it, with a uniform phase.
    #[serde(default = "defaults::harmonic_amplitudes")]
    pub harmonic_amplitudes: Vec<f64>,
    #[serde(default = "defaults::background")]
    pub background: f64,
    #[serde(default = "defaults::foreground")]
    pub foreground: f64,
    #[serde(default = "defaults::noise_std")]
    pub noise_std: f64,
    /// Maximum center offset as a fraction of the image size.
    #[serde(default = "defaults::center_shift")]
    pub center_shift: f64,
    #[serde(default = "defaults::spacing")]
    pub spacing: f64,
    /// Fractions for the train and validation splits; the rest is test.
    #[serde(default = "defaults::split_fractions")]
    pub split_fractions: [f64; 2],
    #[serde(default = "defaults::max_attempts")]
    pub max_attempts: usize,
    pub seed: u64,
}

mod defaults {
    pub fn count() -> usize {
        600
    }
    pub fn side() -> usize {
        60
    }
    pub fn vertex_count() -> usize {
        50
    }
    pub fn radius_range() -> [f64; 2] {
        [10.0, 15.0]
    }
    pub fn wall_thickness() -> [f64; 2] {
        [3.0, 6.0]
    }
    pub fn harmonic_amplitudes() -> Vec<f64> {
        vec![1.5, 1.0, 0.6, 0.3]
    }
    pub fn background() -> f64 {
        60.0
    }
    pub fn foreground() -> f64 {
        190.0
    }
    pub fn noise_std() -> f64 {
        12.0
    }
    pub fn center_shift() -> f64 {
        0.15
    }
    pub fn spacing() -> f64 {
        1.8
    }
    pub fn split_fractions() -> [f64; 2] {
        [0.70, 0.15]
    }
    pub fn max_attempts() -> usize {
        100
    }
}

impl SynthConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            count: defaults::count(),
            height: defaults::side(),
            width: defaults::side(),
            vertex_count: defaults::vertex_count(),
            radius_range: defaults::radius_range(),
            wall_thickness: defaults::wall_thickness(),
            harmonic_amplitudes: defaults::harmonic_amplitudes(),
            background: defaults::background(),
            foreground: defaults::foreground(),
            noise_std: defaults::noise_std(),
            center_shift: defaults::center_shift(),
            spacing: defaults::spacing(),
            split_fractions: defaults::split_fractions(),
            max_attempts: defaults::max_attempts(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.vertex_count < 3 {
            return bad(format!("vertex_count must be at least 3, got {}", self.vertex_count));
        }
        if self.count == 0 || self.height == 0 || self.width == 0 {
            return bad("count and image size must be positive".into());
        }
        let [r0, r1] = self.radius_range;
        if !(r0 > 0.0 && r1 >= r0) {
            return bad(format!("radius_range must be positive and ordered, got {r0}..{r1}"));
        }
        let [t0, t1] = self.wall_thickness;
        if !(t0 > 0.0 && t1 >= t0) {
            return bad(format!("wall_thickness must be positive and ordered, got {t0}..{t1}"));
        }
        if self.harmonic_amplitudes.len() > 4 || self.harmonic_amplitudes.iter().any(|&a| !(a >= 0.0)) {
            return bad("harmonic_amplitudes takes up to 4 non-negative values".into());
        }
        if !(self.noise_std >= 0.0) || !(self.spacing > 0.0) {
            return bad("noise_std must be non-negative and spacing positive".into());
        }
        if !(0.0..0.5).contains(&self.center_shift) {
            return bad(format!("center_shift must lie in [0, 0.5), got {}", self.center_shift));
        }
        let [a, b] = self.split_fractions;
        if !(a > 0.0 && b >= 0.0 && a + b <= 1.0) {
            return bad(format!("bad split fractions {a}, {b}"));
        }
        if self.max_attempts == 0 {
            return bad("max_attempts must be at least 1".into());
        }
        Ok(())
    }
}

/// Parameters of one synthetic subject.
#[derive(Debug, Clone, PartialEq)]
pub struct RingShape {
    pub center: [f64; 2],
    pub radius: f64,
    pub thickness: f64,
    /// `(amplitude, phase)` for harmonics 1, 2, ...
    pub harmonics: Vec<(f64, f64)>,
}

impl RingShape {
    pub fn outer_radius(&self, theta: f64) -> f64 {
        self.radius
            + self
                .harmonics
                .iter()
                .enumerate()
                .map(|(k, &(a, phi))| a * ((k + 1) as f64 * theta + phi).cos())
                .sum::<f64>()
    }

    /// Outer boundary sampled at `vertex_count` equally spaced angles
    /// starting at 0.
    pub fn contour(&self, vertex_count: usize) -> Vec<f64> {
        (0..vertex_count)
            .flat_map(|j| {
                let t = TAU * j as f64 / vertex_count as f64;
                let r = self.outer_radius(t);
                [self.center[0] + r * t.cos(), self.center[1] + r * t.sin()]
            })
            .collect()
    }

    /// Fraction of a pixel covered by the ring, from a 4x4 supersample.
    fn coverage(&self, row: usize, col: usize) -> f64 {
        const S: usize = 4;
        let mut hits = 0;
        for i in 0..S {
            for j in 0..S {
                let x = col as f64 + (j as f64 + 0.5) / S as f64 - self.center[0];
                let y = row as f64 + (i as f64 + 0.5) / S as f64 - self.center[1];
                let rho = x.hypot(y);
                let outer = self.outer_radius(y.atan2(x));
                if rho <= outer && rho >= outer - self.thickness {
                    hits += 1;
                }
            }
        }
        hits as f64 / (S * S) as f64
    }

    pub fn render<R: Rng + ?Sized>(&self, cfg: &SynthConfig, rng: &mut R) -> Vec<u8> {
        let noise = Normal::new(0.0, cfg.noise_std.max(0.0)).expect("finite std");
        let mut px = Vec::with_capacity(cfg.height * cfg.width);
        for r in 0..cfg.height {
            for c in 0..cfg.width {
                let f = self.coverage(r, c);
                let mut v = cfg.background + (cfg.foreground - cfg.background) * f;
                if cfg.noise_std > 0.0 {
                    v += noise.sample(rng);
                }
                px.push(v.round().clamp(0.0, 255.0) as u8);
            }
        }
        px
    }
}

fn sample_shape<R: Rng + ?Sized>(cfg: &SynthConfig, rng: &mut R) -> RingShape {
    let uniform = |rng: &mut R, lo: f64, hi: f64| if hi > lo { rng.random_range(lo..hi) } else { lo };
    let radius = uniform(rng, cfg.radius_range[0], cfg.radius_range[1]);
    let thickness = uniform(rng, cfg.wall_thickness[0], cfg.wall_thickness[1]);
    let harmonics = cfg
        .harmonic_amplitudes
        .iter()
        .map(|&a| (uniform(rng, 0.0, a), uniform(rng, 0.0, TAU)))
        .collect();
    let (w, h) = (cfg.width as f64, cfg.height as f64);
    let dx = uniform(rng, -cfg.center_shift, cfg.center_shift) * w;
    let dy = uniform(rng, -cfg.center_shift, cfg.center_shift) * h;
    RingShape {
        center: [w / 2.0 + dx, h / 2.0 + dy],
        radius,
        thickness,
        harmonics,
    }
}

fn shape_is_valid(shape: &RingShape, contour: &[f64], cfg: &SynthConfig) -> bool {
    let inner_ok = (0..360).all(|d| {
        let t = TAU * d as f64 / 360.0;
        shape.outer_radius(t) - shape.thickness > 0.5
    });
    let inside = contour.chunks_exact(2).all(|p| {
        p[0] >= 1.0 && p[1] >= 1.0 && p[0] <= cfg.width as f64 - 1.0 && p[1] <= cfg.height as f64 - 1.0
    });
    inner_ok && inside && is_simple_polygon(contour)
}

/// Generates `cfg.count` subjects with per-item seeded streams.
pub fn generate(cfg: &SynthConfig) -> Result<ShapeDataset> {
    cfg.validate()?;
    let width = (cfg.count.saturating_sub(1)).to_string().len().max(4);
    let mut items = Vec::with_capacity(cfg.count);
    for index in 0..cfg.count {
        let mut made = None;
        for attempt in 0..cfg.max_attempts {
            let mut rng = substream(cfg.seed, &[index as u64, attempt as u64]);
            let shape = sample_shape(cfg, &mut rng);
            let contour = shape.contour(cfg.vertex_count);
            if shape_is_valid(&shape, &contour, cfg) {
                let pixels = shape.render(cfg, &mut rng);
                made = Some((pixels, contour));
                break;
            }
        }
        let (pixels, contour) = made.ok_or(Error::GenerationFailed {
            index,
            attempts: cfg.max_attempts,
        })?;
        items.push(Item {
            id: format!("s{index:0width$}"),
            pixels,
            contour,
        });
    }
    let n_train = ((cfg.count as f64) * cfg.split_fractions[0]).round() as usize;
    let n_val = ((cfg.count as f64) * cfg.split_fractions[1]).round() as usize;
    let n_val = n_val.min(cfg.count - n_train.min(cfg.count));
    let ids: Vec<String> = items.iter().map(|it| it.id.clone()).collect();
    let n_train = n_train.min(cfg.count);
    let mut splits = BTreeMap::new();
    splits.insert("train".to_string(), ids[..n_train].to_vec());
    splits.insert("val".to_string(), ids[n_train..n_train + n_val].to_vec());
    splits.insert("test".to_string(), ids[n_train + n_val..].to_vec());
    Ok(ShapeDataset {
        height: cfg.height,
        width: cfg.width,
        spacing: cfg.spacing,
        vertex_count: cfg.vertex_count,
        items,
        splits,
    })
}

fn orient(a: (f64, f64), b: (f64, f64), c: (f64, f64)) -> f64 {
    (b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0)
}

fn segments_cross(p1: (f64, f64), p2: (f64, f64), q1: (f64, f64), q2: (f64, f64)) -> bool {
    let d1 = orient(q1, q2, p1);
    let d2 = orient(q1, q2, p2);
    let d3 = orient(p1, p2, q1);
    let d4 = orient(p1, p2, q2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    let on = |a: (f64, f64), b: (f64, f64), c: (f64, f64)| {
        c.0 >= a.0.min(b.0) && c.0 <= a.0.max(b.0) && c.1 >= a.1.min(b.1) && c.1 <= a.1.max(b.1)
    };
    (d1 == 0.0 && on(q1, q2, p1))
        || (d2 == 0.0 && on(q1, q2, p2))
        || (d3 == 0.0 && on(p1, p2, q1))
        || (d4 == 0.0 && on(p1, p2, q2))
}

/// True if no two non-adjacent edges of the closed polygon intersect.
pub fn is_simple_polygon(contour: &[f64]) -> bool {
    let pts: Vec<(f64, f64)> = contour.chunks_exact(2).map(|p| (p[0], p[1])).collect();
    let n = pts.len();
    if n < 3 {
        return false;
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if j == i + 1 || (i == 0 && j == n - 1) {
                continue;
            }
            if segments_cross(pts[i], pts[(i + 1) % n], pts[j], pts[(j + 1) % n]) {
                return false;
            }
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(seed: u64) -> SynthConfig {
        SynthConfig {
            count: 12,
            ..SynthConfig::with_seed(seed)
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate(&small(3)).unwrap();
        let b = generate(&small(3)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, generate(&small(4)).unwrap());
    }

    #[test]
    fn splits_are_disjoint_and_cover() {
        let d = generate(&SynthConfig {
            count: 20,
            ..SynthConfig::with_seed(1)
        })
        .unwrap();
        assert_eq!(d.splits["train"].len(), 14);
        assert_eq!(d.splits["val"].len(), 3);
        assert_eq!(d.splits["test"].len(), 3);
        d.validate().unwrap();
    }

    #[test]
    fn vertex_zero_lies_on_theta_zero_ray() {
        let cfg = small(5);
        for index in 0..cfg.count {
            let d = generate(&cfg).unwrap();
            let c = &d.items[index].contour;
            let mut rng = substream(cfg.seed, &[index as u64, 0]);
            let shape = sample_shape(&cfg, &mut rng);
            if shape_is_valid(&shape, &shape.contour(cfg.vertex_count), &cfg) {
                assert!((c[1] - shape.center[1]).abs() < 1e-12);
                assert!(c[0] > shape.center[0]);
            }
        }
    }

    #[test]
    fn contours_are_simple_and_inside() {
        let d = generate(&small(7)).unwrap();
        for it in &d.items {
            assert!(is_simple_polygon(&it.contour));
            assert_eq!(it.contour.len(), 100);
        }
    }

    #[test]
    fn self_intersection_detected() {
        let bow = [0.0, 0.0, 2.0, 2.0, 2.0, 0.0, 0.0, 2.0];
        assert!(!is_simple_polygon(&bow));
        assert!(is_simple_polygon(&[0.0, 0.0, 2.0, 0.0, 2.0, 2.0, 0.0, 2.0]));
    }

    #[test]
    fn csv_round_trip_and_errors() {
        let c = vec![0.1, -2.5, 1.0 / 3.0, 1e-17];
        let back = parse_contour_csv(&contour_csv(&c), "c").unwrap();
        assert_eq!(back, c);
        let err = parse_contour_csv("1,2\n3;4\n", "c").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }

    #[test]
    fn missing_seed_rejected() {
        let e = serde_json::from_str::<SynthConfig>(r#"{"count": 3}"#).unwrap_err();
        assert!(e.to_string().contains("seed"));
        let c: SynthConfig = serde_json::from_str(r#"{"seed": 3}"#).unwrap();
        assert_eq!(c, SynthConfig::with_seed(3));
    }
}
