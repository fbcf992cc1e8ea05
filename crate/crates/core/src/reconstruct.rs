//! Closed-form maximum-likelihood reconstruction and PSNR.

use serde::{Deserialize, Serialize};

use crate::error::{QisError, Result};
use crate::forward::{BitCube, SensorConfig, ThresholdMap};
use crate::par;
use crate::special;

/// Sufficient statistic of one pixel block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockStats {
    /// Number of ones over the block's `K` jots and `T` frames.
    pub sum: u64,
    /// Number of bits in the block, `K·T`.
    pub bits: u64,
    /// Fraction of zeros, `1 − S/(KT)`.
    pub gamma: f64,
    /// Every bit fired (`S = KT`).
    pub saturated_low: bool,
    /// No bit fired (`S = 0`).
    pub saturated_high: bool,
}

impl BlockStats {
    pub fn new(sum: u64, bits: u64) -> Self {
        Self {
            sum,
            bits,
            gamma: 1.0 - sum as f64 / bits as f64,
            saturated_low: sum == bits,
            saturated_high: sum == 0,
        }
    }

    pub fn saturated(&self) -> bool {
        self.saturated_low || self.saturated_high
    }
}

/// How `γ ∈ {0, 1}` is mapped to an estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum SaturationPolicy {
    /// Clamp `γ` to `[1/(2KT), 1 − 1/(2KT)]` before inversion.
    #[default]
    HalfCount,
    /// The unregularized estimator: `γ = 0` gives `+∞`, `γ = 1` gives 0.
    Unbounded,
}

/// Per-pixel estimate with saturation flags.
#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructionResult {
    pub width: usize,
    pub height: usize,
    /// Estimate clipped to `[0, clip]`.
    pub estimate: Vec<f64>,
    /// Estimate before clipping.
    pub raw_estimate: Vec<f64>,
    /// `S ∈ {0, KT}` for the pixel block.
    pub saturated: Vec<bool>,
    pub stats: Vec<BlockStats>,
    pub psnr_db: Option<Psnr>,
}

/// PSNR value with an explicit marker for a perfect match.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Psnr {
    Finite(f64),
    Infinite,
}

impl Psnr {
    /// `f64::INFINITY` for a perfect match.
    pub fn db(self) -> f64 {
        match self {
            Psnr::Finite(v) => v,
            Psnr::Infinite => f64::INFINITY,
        }
    }
}

impl std::fmt::Display for Psnr {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Psnr::Finite(v) => write!(f, "{v:.4}"),
            Psnr::Infinite => f.write_str("inf"),
        }
    }
}

fn pixel_dims(bits: &BitCube, config: &SensorConfig) -> Result<(usize, usize)> {
    let (kx, ky) = (config.kx as usize, config.ky as usize);
    if !bits.jot_width().is_multiple_of(kx) || !bits.jot_height().is_multiple_of(ky) {
        return Err(QisError::Dimension(format!(
            "{}×{} jot grid is not a multiple of the {kx}×{ky} pixel block",
            bits.jot_width(),
            bits.jot_height()
        )));
    }
    Ok((bits.jot_width() / kx, bits.jot_height() / ky))
}

/// `S_n` for each pixel block, row-major over pixels.
pub fn block_sums(bits: &BitCube, config: &SensorConfig) -> Result<Vec<BlockStats>> {
    let (w, h) = pixel_dims(bits, config)?;
    let (kx, ky) = (config.kx as usize, config.ky as usize);
    let jw = bits.jot_width();
    let total = (kx * ky * bits.frames()) as u64;
    // Row sums first so each output row touches contiguous memory.
    let rows = par::map_range(h, |py| {
        let mut sums = vec![0u64; w];
        for t in 0..bits.frames() {
            let plane = bits.plane(t);
            for jy in py * ky..(py + 1) * ky {
                let line = &plane[jy * jw..(jy + 1) * jw];
                for (px, s) in sums.iter_mut().enumerate() {
                    *s += line[px * kx..(px + 1) * kx]
                        .iter()
                        .map(|&b| u64::from(b))
                        .sum::<u64>();
                }
            }
        }
        sums
    });
    Ok(rows
        .into_iter()
        .flatten()
        .map(|s| BlockStats::new(s, total))
        .collect())
}

/// Threshold of every pixel; errors if a pixel block straddles two map blocks.
pub fn pixel_thresholds(qmap: &ThresholdMap, config: &SensorConfig) -> Result<Vec<u32>> {
    let (kx, ky) = (config.kx as usize, config.ky as usize);
    let (bw, bh) = (qmap.block_w(), qmap.block_h());
    if !qmap.jot_width().is_multiple_of(kx) || !qmap.jot_height().is_multiple_of(ky) {
        return Err(QisError::Dimension(
            "threshold map does not cover whole pixels".into(),
        ));
    }
    let (w, h) = (qmap.jot_width() / kx, qmap.jot_height() / ky);
    let consistent = bw % kx == 0 || kx % bw == 0;
    let consistent = consistent && (bh % ky == 0 || ky % bh == 0);
    let mut out = Vec::with_capacity(w * h);
    for py in 0..h {
        for px in 0..w {
            let jots = (py * ky..(py + 1) * ky)
                .flat_map(|jy| (px * kx..(px + 1) * kx).map(move |jx| jy * qmap.jot_width() + jx));
            let mut qs = jots.map(|m| qmap.q_for_jot(m));
            let q = qs.next().unwrap_or(1);
            if !consistent || qs.any(|v| v != q) {
                return Err(QisError::Config(format!(
                    "pixel ({px}, {py}) sees more than one threshold; \
                     reconstruction needs a single q per pixel block"
                )));
            }
            out.push(q);
        }
    }
    Ok(out)
}

/// Closed-form estimate `ĉ = K/(ατ)·Ψ_q⁻¹(γ)` for a single block.
pub fn estimate_block(
    stats: &BlockStats,
    q: u32,
    config: &SensorConfig,
    policy: SaturationPolicy,
) -> Result<f64> {
    let scale = f64::from(config.k()) / (config.alpha * config.tau);
    let n = stats.bits as f64;
    let gamma = match policy {
        SaturationPolicy::HalfCount => stats.gamma.clamp(0.5 / n, 1.0 - 0.5 / n),
        SaturationPolicy::Unbounded => {
            if stats.saturated_high {
                return Ok(0.0);
            }
            if stats.saturated_low {
                return Ok(f64::INFINITY);
            }
            stats.gamma
        }
    };
    Ok(scale * special::psi_inverse(q, gamma)?)
}

/// Per-pixel ML reconstruction with the default half-count clamp.
pub fn mle_reconstruct(
    bits: &BitCube,
    qmap: &ThresholdMap,
    config: &SensorConfig,
    clip: f64,
) -> Result<ReconstructionResult> {
    mle_reconstruct_with(bits, qmap, config, clip, SaturationPolicy::HalfCount)
}

/// Per-pixel ML reconstruction with an explicit saturation policy.
pub fn mle_reconstruct_with(
    bits: &BitCube,
    qmap: &ThresholdMap,
    config: &SensorConfig,
    clip: f64,
    policy: SaturationPolicy,
) -> Result<ReconstructionResult> {
    if !(clip > 0.0) {
        return Err(QisError::Config(format!("clip must be > 0, got {clip}")));
    }
    if bits.jot_width() != qmap.jot_width() || bits.jot_height() != qmap.jot_height() {
        return Err(QisError::Dimension(
            "threshold map and bit cube disagree on jot grid".into(),
        ));
    }
    if bits.frames() == 0 {
        return Err(QisError::Dimension("bit cube has no frames".into()));
    }
    qmap.validate(config.q_max)?;
    let (width, height) = pixel_dims(bits, config)?;
    let stats = block_sums(bits, config)?;
    let qs = pixel_thresholds(qmap, config)?;
    let raw: Vec<f64> = par::map_range(stats.len(), |n| {
        estimate_block(&stats[n], qs[n], config, policy)
    })
    .into_iter()
    .collect::<Result<_>>()?;
    Ok(ReconstructionResult {
        width,
        height,
        estimate: raw.iter().map(|v| v.clamp(0.0, clip)).collect(),
        saturated: stats.iter().map(BlockStats::saturated).collect(),
        raw_estimate: raw,
        stats,
        psnr_db: None,
    })
}

impl ReconstructionResult {
    /// Attaches the PSNR of the clipped estimate against `truth`.
    pub fn with_truth(mut self, truth: &[f64]) -> Result<Self> {
        self.psnr_db = Some(psnr(&self.estimate, truth, 1.0)?);
        Ok(self)
    }

    pub fn saturated_fraction(&self) -> f64 {
        self.saturated.iter().filter(|&&s| s).count() as f64 / self.saturated.len() as f64
    }

    pub fn mean_estimate(&self) -> f64 {
        self.raw_estimate.iter().sum::<f64>() / self.raw_estimate.len() as f64
    }
}

/// `10·log10(peak²/MSE)`.
pub fn psnr(estimate: &[f64], truth: &[f64], peak: f64) -> Result<Psnr> {
    if estimate.len() != truth.len() || estimate.is_empty() {
        return Err(QisError::Dimension(format!(
            "PSNR needs equal non-empty inputs, got {} and {}",
            estimate.len(),
            truth.len()
        )));
    }
    let mse = estimate
        .iter()
        .zip(truth)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / estimate.len() as f64;
    if mse == 0.0 {
        Ok(Psnr::Infinite)
    } else {
        Ok(Psnr::Finite(10.0 * (peak * peak / mse).log10()))
    }
}
