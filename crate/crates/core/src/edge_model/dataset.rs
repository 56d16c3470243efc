//! Synthetic segmentation data with deliberately coarse score maps.
//!
//! Each sample is a textured background (class 0) carrying a few filled
//! rectangles, ellipses and triangles of the foreground classes. Every class
//! has its own base colour, contrasting with the background. The background
//! also carries thin low-contrast streaks that are not object boundaries.
//! The coarse scores are the one-hot labels blurred by a Gaussian and
//! perturbed by Gaussian noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{DtError, Result};
use crate::types::{LabelMap, ScoreMap};

/// Amplitude of the per-pixel uniform texture added to every image.
pub const PIXEL_TEXTURE: f64 = 0.06;
/// Colour offset of background streaks.
pub const STREAK_CONTRAST: f64 = 0.2;
/// Minimum L1 distance between a class colour and the background colour.
const MIN_CONTRAST: f64 = 0.9;

#[derive(Clone, Debug, PartialEq)]
pub struct ToySample {
    pub image: ScoreMap,
    pub coarse_scores: ScoreMap,
    pub labels: LabelMap,
}

type Rgb = [f64; 3];

fn random_color(rng: &mut impl Rng) -> Rgb {
    [
        rng.random_range(0.05..0.95),
        rng.random_range(0.05..0.95),
        rng.random_range(0.05..0.95),
    ]
}

fn palette(rng: &mut impl Rng, classes: usize) -> Vec<Rgb> {
    let background = random_color(rng);
    let mut colors = vec![background];
    while colors.len() < classes {
        let c = random_color(rng);
        let contrast: f64 = c.iter().zip(&background).map(|(a, b)| (a - b).abs()).sum();
        if contrast >= MIN_CONTRAST {
            colors.push(c);
        }
    }
    colors
}

enum Shape {
    Rect { top: f64, left: f64, bottom: f64, right: f64 },
    Ellipse { ci: f64, cj: f64, ri: f64, rj: f64 },
    Triangle { pts: [(f64, f64); 3] },
}

impl Shape {
    fn random(rng: &mut impl Rng, size: usize) -> Self {
        let s = size as f64;
        let (lo, hi) = (s * 0.18, s * 0.45);
        let ci = rng.random_range(0.15 * s..0.85 * s);
        let cj = rng.random_range(0.15 * s..0.85 * s);
        match rng.random_range(0..3) {
            0 => {
                let hh = rng.random_range(lo..hi) / 2.0;
                let hw = rng.random_range(lo..hi) / 2.0;
                Shape::Rect {
                    top: ci - hh,
                    left: cj - hw,
                    bottom: ci + hh,
                    right: cj + hw,
                }
            }
            1 => Shape::Ellipse {
                ci,
                cj,
                ri: rng.random_range(lo..hi) / 2.0,
                rj: rng.random_range(lo..hi) / 2.0,
            },
            _ => {
                let r = rng.random_range(lo..hi) * 0.7;
                let base = rng.random_range(0.0..std::f64::consts::TAU);
                let pts = std::array::from_fn(|k| {
                    let a = base + k as f64 * std::f64::consts::TAU / 3.0 + rng.random_range(-0.4..0.4);
                    (ci + r * a.sin(), cj + r * a.cos())
                });
                Shape::Triangle { pts }
            }
        }
    }

    /// Inside test at the pixel centre.
    fn contains(&self, i: usize, j: usize) -> bool {
        let (y, x) = (i as f64 + 0.5, j as f64 + 0.5);
        match *self {
            Shape::Rect { top, left, bottom, right } => y >= top && y < bottom && x >= left && x < right,
            Shape::Ellipse { ci, cj, ri, rj } => {
                let (dy, dx) = ((y - ci) / ri, (x - cj) / rj);
                dy * dy + dx * dx <= 1.0
            }
            Shape::Triangle { pts } => {
                let cross = |(ay, ax): (f64, f64), (by, bx): (f64, f64)| (bx - ax) * (y - ay) - (by - ay) * (x - ax);
                let d = [cross(pts[0], pts[1]), cross(pts[1], pts[2]), cross(pts[2], pts[0])];
                d.iter().all(|&v| v >= 0.0) || d.iter().all(|&v| v <= 0.0)
            }
        }
    }
}

/// Normalised 1-D Gaussian kernel with radius `ceil(3σ)`.
fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as i64;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|t| (-(t * t) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

/// Separable Gaussian blur with replicate borders.
pub fn gaussian_blur(map: &ScoreMap, sigma: f64) -> Result<ScoreMap> {
    if sigma <= 0.0 {
        return Ok(map.clone());
    }
    let kernel = gaussian_kernel(sigma);
    let radius = (kernel.len() / 2) as i64;
    let (h, w, c) = map.shape();
    let clamp = |v: i64, n: usize| v.clamp(0, n as i64 - 1) as usize;
    let mut tmp = vec![0.0; h * w * c];
    for i in 0..h {
        for j in 0..w {
            for (t, &kv) in kernel.iter().enumerate() {
                let sj = clamp(j as i64 + t as i64 - radius, w);
                for ch in 0..c {
                    tmp[(i * w + j) * c + ch] += kv * map.get(i, sj, ch);
                }
            }
        }
    }
    let mut out = vec![0.0; h * w * c];
    for i in 0..h {
        for (t, &kv) in kernel.iter().enumerate() {
            let si = clamp(i as i64 + t as i64 - radius, h);
            for j in 0..w {
                for ch in 0..c {
                    out[(i * w + j) * c + ch] += kv * tmp[(si * w + j) * c + ch];
                }
            }
        }
    }
    ScoreMap::from_vec(h, w, c, out)
}

fn make_sample(rng: &mut ChaCha8Rng, colors: &[Rgb], size: usize, blur: f64, noise: f64) -> Result<ToySample> {
    let classes = colors.len();
    let mut labels = vec![0usize; size * size];
    let mut pixel_colors = vec![colors[0]; size * size];

    // Background streaks: same label, slightly different colour.
    let streaks = rng.random_range(1..=3);
    for _ in 0..streaks {
        let horizontal = rng.random_bool(0.5);
        let pos = rng.random_range(0..size);
        let thickness = rng.random_range(1..=2);
        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        for t in 0..size {
            for d in 0..thickness {
                let (i, j) = if horizontal { ((pos + d).min(size - 1), t) } else { (t, (pos + d).min(size - 1)) };
                let px = &mut pixel_colors[i * size + j];
                for v in px.iter_mut() {
                    *v = (*v + sign * STREAK_CONTRAST).clamp(0.0, 1.0);
                }
            }
        }
    }

    let shapes = rng.random_range(2..=4);
    for _ in 0..shapes {
        let class = rng.random_range(1..classes);
        let shape = Shape::random(rng, size);
        let jitter: Rgb = std::array::from_fn(|_| rng.random_range(-0.05..0.05));
        let color: Rgb = std::array::from_fn(|k| (colors[class][k] + jitter[k]).clamp(0.0, 1.0));
        for i in 0..size {
            for j in 0..size {
                if shape.contains(i, j) {
                    labels[i * size + j] = class;
                    pixel_colors[i * size + j] = color;
                }
            }
        }
    }

    let mut image = Vec::with_capacity(size * size * 3);
    for px in &pixel_colors {
        for &v in px {
            image.push((v + rng.random_range(-PIXEL_TEXTURE..PIXEL_TEXTURE)).clamp(0.0, 1.0));
        }
    }

    let mut onehot = vec![0.0; size * size * classes];
    for (p, &l) in labels.iter().enumerate() {
        onehot[p * classes + l] = 1.0;
    }
    let mut scores = gaussian_blur(&ScoreMap::from_vec(size, size, classes, onehot)?, blur)?;
    if noise > 0.0 {
        let dist = Normal::new(0.0, noise).map_err(|e| DtError::InvalidParameter(e.to_string()))?;
        scores.data_mut().iter_mut().for_each(|v| *v += dist.sample(rng));
    }

    Ok(ToySample {
        image: ScoreMap::from_vec(size, size, 3, image)?,
        coarse_scores: scores,
        labels: LabelMap::from_vec(size, size, labels)?,
    })
}

/// `count` samples of `size`×`size` pixels over `classes` classes.
pub fn make_toy_dataset(
    count: usize,
    size: usize,
    classes: usize,
    seed: u64,
    blur: f64,
    noise: f64,
) -> Result<Vec<ToySample>> {
    if count < 1 {
        return Err(DtError::InvalidParameter("count must be at least 1".into()));
    }
    if classes < 2 {
        return Err(DtError::InvalidParameter("need at least 2 classes".into()));
    }
    if size < 4 {
        return Err(DtError::InvalidParameter(format!("size {size} is below 4 pixels")));
    }
    if !(blur.is_finite() && blur >= 0.0) || !(noise.is_finite() && noise >= 0.0) {
        return Err(DtError::InvalidParameter("blur and noise must be finite and nonnegative".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let colors = palette(&mut rng, classes);
    (0..count).map(|_| make_sample(&mut rng, &colors, size, blur, noise)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shapes_and_ranges() {
        let data = make_toy_dataset(3, 32, 4, 1, 2.0, 0.1).unwrap();
        assert_eq!(data.len(), 3);
        for s in &data {
            assert_eq!(s.image.shape(), (32, 32, 3));
            assert_eq!(s.coarse_scores.shape(), (32, 32, 4));
            assert!(s.labels.check_range(4).is_ok());
            assert!(s.image.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn sharp_scores_reproduce_labels() {
        for s in make_toy_dataset(4, 24, 3, 2, 0.0, 0.0).unwrap() {
            assert_eq!(s.coarse_scores.argmax(), s.labels);
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let a = make_toy_dataset(2, 16, 4, 9, 1.5, 0.2).unwrap();
        let b = make_toy_dataset(2, 16, 4, 9, 1.5, 0.2).unwrap();
        assert_eq!(a, b);
        let c = make_toy_dataset(2, 16, 4, 10, 1.5, 0.2).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn invalid_arguments() {
        assert!(make_toy_dataset(0, 16, 4, 1, 1.0, 0.0).is_err());
        assert!(make_toy_dataset(1, 16, 1, 1, 1.0, 0.0).is_err());
        assert!(make_toy_dataset(1, 2, 4, 1, 1.0, 0.0).is_err());
        assert!(make_toy_dataset(1, 16, 4, 1, -1.0, 0.0).is_err());
    }

    #[test]
    fn blur_preserves_constants_and_mass() {
        let m = ScoreMap::new(9, 7, 2, 0.3).unwrap();
        let b = gaussian_blur(&m, 1.7).unwrap();
        assert!(b.data().iter().all(|v| (v - 0.3).abs() < 1e-14));
        assert!((gaussian_kernel(2.0).iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }
}
