//! Deterministic synthetic test scenes.

use crate::error::Result;
use crate::forward::IntensityImage;
use crate::rng::{self, Stream};

/// A named test image.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusImage {
    pub name: String,
    pub image: IntensityImage,
}

const LO: f64 = 0.02;
const HI: f64 = 0.98;

fn build(width: usize, height: usize, f: impl Fn(f64, f64) -> f64) -> Result<IntensityImage> {
    let mut px = Vec::with_capacity(width * height);
    for y in 0..height {
        for x in 0..width {
            let u = (x as f64 + 0.5) / width as f64;
            let v = (y as f64 + 0.5) / height as f64;
            px.push(f(u, v).clamp(LO, HI));
        }
    }
    IntensityImage::new(width, height, px)
}

/// Horizontal linear ramp from dark to bright.
pub fn ramp(width: usize, height: usize) -> Result<IntensityImage> {
    build(width, height, |u, _| LO + (HI - LO) * u)
}

/// Diagonal ramp.
pub fn diagonal_ramp(width: usize, height: usize) -> Result<IntensityImage> {
    build(width, height, |u, v| LO + (HI - LO) * 0.5 * (u + v))
}

/// Vertical bands with sharp edges between distinct levels.
pub fn step_edges(width: usize, height: usize) -> Result<IntensityImage> {
    const LEVELS: [f64; 5] = [0.08, 0.7, 0.25, 0.95, 0.45];
    build(width, height, |u, _| {
        LEVELS[((u * LEVELS.len() as f64) as usize).min(LEVELS.len() - 1)]
    })
}

/// Rectangles of different intensity on a dark background.
pub fn blocks(width: usize, height: usize) -> Result<IntensityImage> {
    build(width, height, |u, v| {
        let mut c = 0.1;
        if (0.1..0.45).contains(&u) && (0.15..0.6).contains(&v) {
            c = 0.85;
        }
        if (0.5..0.9).contains(&u) && (0.35..0.85).contains(&v) {
            c = 0.4;
        }
        if (0.3..0.7).contains(&u) && (0.7..0.95).contains(&v) {
            c = 0.65;
        }
        c
    })
}

/// Sum of Gaussian blobs with positions and sizes drawn from `seed`.
pub fn gaussian_blobs(
    width: usize,
    height: usize,
    count: usize,
    seed: u64,
) -> Result<IntensityImage> {
    let draw = |i: usize, j: u64| rng::uniform(seed, Stream::Corpus, i as u64, j);
    let blobs: Vec<(f64, f64, f64, f64)> = (0..count)
        .map(|i| {
            (
                0.1 + 0.8 * draw(i, 0),
                0.1 + 0.8 * draw(i, 1),
                0.05 + 0.12 * draw(i, 2),
                0.3 + 0.6 * draw(i, 3),
            )
        })
        .collect();
    build(width, height, |u, v| {
        0.05 + blobs
            .iter()
            .map(|&(cx, cy, s, a)| {
                a * (-((u - cx).powi(2) + (v - cy).powi(2)) / (2.0 * s * s)).exp()
            })
            .sum::<f64>()
    })
}

/// Concentric rings.
pub fn rings(width: usize, height: usize) -> Result<IntensityImage> {
    build(width, height, |u, v| {
        let r = ((u - 0.5).powi(2) + (v - 0.5).powi(2)).sqrt();
        0.5 + 0.45 * (r * 4.0 * std::f64::consts::TAU).cos()
    })
}

/// The default benchmark corpus.
pub fn default_corpus(width: usize, height: usize) -> Result<Vec<CorpusImage>> {
    let named = |name: &str, image: IntensityImage| CorpusImage {
        name: name.to_string(),
        image,
    };
    Ok(vec![
        named("ramp", ramp(width, height)?),
        named("diagonal-ramp", diagonal_ramp(width, height)?),
        named("step-edges", step_edges(width, height)?),
        named("blocks", blocks(width, height)?),
        named("blobs-a", gaussian_blobs(width, height, 5, 1)?),
        named("blobs-b", gaussian_blobs(width, height, 8, 2)?),
        named("rings", rings(width, height)?),
    ])
}

/// Horizontal radiance ramp spanning `decades` decades up to `peak`.
pub fn radiance_ramp(width: usize, height: usize, decades: f64, peak: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(width * height);
    for _ in 0..height {
        for x in 0..width {
            let u = if width > 1 {
                x as f64 / (width - 1) as f64
            } else {
                1.0
            };
            out.push(peak * 10f64.powf(decades * (u - 1.0)));
        }
    }
    out
}

/// High-dynamic-range scene: a dim room with a window and a bright lamp.
pub fn hdr_scene(width: usize, height: usize, peak: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(width * height);
    for y in 0..height {
        for x in 0..width {
            let u = (x as f64 + 0.5) / width as f64;
            let v = (y as f64 + 0.5) / height as f64;
            // Background falls off over two decades from left to right.
            let mut r = peak * 1e-3 * 10f64.powf(1.5 * (1.0 - u)) * (0.6 + 0.4 * v);
            if (0.55..0.9).contains(&u) && (0.1..0.45).contains(&v) {
                r = peak * 0.15 * (0.7 + 0.3 * u);
            }
            let d2 = (u - 0.25).powi(2) + (v - 0.7).powi(2);
            r += peak * (-d2 / 0.002).exp();
            out.push(r.min(peak));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corpus_is_deterministic_and_in_range() {
        let a = default_corpus(32, 32).unwrap();
        let b = default_corpus(32, 32).unwrap();
        assert_eq!(a, b);
        for img in &a {
            assert!(
                img.image.pixels().iter().all(|&c| (LO..=HI).contains(&c)),
                "{}",
                img.name
            );
        }
    }

    #[test]
    fn radiance_ramp_spans_decades() {
        let r = radiance_ramp(5, 1, 4.0, 2.0);
        assert!((r[4] - 2.0).abs() < 1e-12);
        assert!((r[0] - 2e-4).abs() < 1e-16);
    }

    #[test]
    fn hdr_scene_is_bounded() {
        let r = hdr_scene(16, 16, 10.0);
        let max = r.iter().copied().fold(0.0, f64::max);
        let min = r.iter().copied().fold(f64::INFINITY, f64::min);
        assert!(max <= 10.0 && min > 0.0);
        assert!(max / min > 100.0);
    }
}
