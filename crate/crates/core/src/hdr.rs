//! Multi-exposure high-dynamic-range acquisition and fusion.
//!
//! Each exposure scales the radiance by its duty cycle `τ_e`. Exposures are
//! reconstructed independently, referred back to radiance and combined by
//! inverse-variance weighting, with the variance taken from the Fisher
//! information at the estimate. A fixed logarithmic tone curve is used only
//! for display and PSNR.

use serde::{Deserialize, Serialize};

use crate::adapt;
use crate::analytics::{self, oracle_threshold};
use crate::error::{QisError, Result};
use crate::forward::{self, check_dims, BitCube, SensorConfig, SynthesisKernel, ThresholdMap};
use crate::par;
use crate::reconstruct::{self, Psnr, ReconstructionResult};

/// Gain that maps unit radiance at full duty cycle to `θ = q_max − 1` per jot.
pub fn default_gain(config: &SensorConfig) -> f64 {
    f64::from(config.k()) * f64::from(config.q_max - 1)
}

/// `τ_e = 2^{EV_e}·τ₀`, sorted from longest to shortest.
pub fn ev_ladder(tau0: f64, evs: &[f64]) -> Result<Vec<f64>> {
    let mut taus: Vec<f64> = evs.iter().map(|ev| tau0 * ev.exp2()).collect();
    taus.sort_by(|a, b| b.total_cmp(a));
    check_taus(&taus)?;
    Ok(taus)
}

fn check_taus(taus: &[f64]) -> Result<()> {
    if taus.is_empty() {
        return Err(QisError::Config(
            "at least one duty cycle is required".into(),
        ));
    }
    if let Some(t) = taus.iter().find(|t| !(**t > 0.0 && **t <= 1.0)) {
        return Err(QisError::Config(format!("duty cycle {t} outside (0, 1]")));
    }
    if taus.windows(2).any(|w| w[1] >= w[0]) {
        return Err(QisError::Config(
            "duty cycles must be strictly decreasing".into(),
        ));
    }
    Ok(())
}

/// How each exposure's thresholds are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ThresholdPolicy {
    Uniform(u32),
    /// Per-pixel oracle of the true radiance at the exposure's duty cycle.
    Oracle,
    /// Bisection adaptation on `block` jots, spending up to `adapt_frames`.
    Bisection {
        block: (usize, usize),
        adapt_frames: u32,
    },
}

/// One acquired exposure.
#[derive(Debug, Clone, PartialEq)]
pub struct Exposure {
    pub tau: f64,
    /// Frames available for reconstruction.
    pub bits: BitCube,
    pub qmap: ThresholdMap,
    /// Frames spent on threshold adaptation before `bits`.
    pub adaptation_frames: u32,
}

/// Exposures of a single scene.
#[derive(Debug, Clone, PartialEq)]
pub struct ExposureStack {
    pub width: usize,
    pub height: usize,
    /// Unnormalized ground-truth radiance.
    pub radiance: Vec<f64>,
    /// Sensor configuration at full duty cycle.
    pub config: SensorConfig,
    pub exposures: Vec<Exposure>,
}

impl ExposureStack {
    /// Configuration under which exposure `e` is reconstructed.
    pub fn exposure_config(&self, e: usize) -> Result<SensorConfig> {
        let x = &self.exposures[e];
        self.config
            .with_tau(x.tau)?
            .with_frames(x.bits.frames() as u32)
    }
}

/// Simulates one exposure per duty cycle.
pub fn simulate_stack(
    radiance: &[f64],
    width: usize,
    height: usize,
    config: &SensorConfig,
    kernel: SynthesisKernel,
    taus: &[f64],
    policy: ThresholdPolicy,
) -> Result<ExposureStack> {
    check_dims(width, height, radiance.len())?;
    check_taus(taus)?;
    if let Some(r) = radiance.iter().find(|r| !(**r >= 0.0 && r.is_finite())) {
        return Err(QisError::Domain(format!(
            "radiance must be finite and ≥ 0, found {r}"
        )));
    }
    let exposures = par::map_slice(taus, |&tau| {
        let cfg = config.with_tau(tau)?;
        let theta = forward::expose_values(width, height, radiance, &cfg, kernel)?;
        let (kx, ky) = (cfg.kx as usize, cfg.ky as usize);
        let (map, start) = match policy {
            ThresholdPolicy::Uniform(q) => {
                let m = ThresholdMap::uniform(&cfg, width, height, q)?;
                m.validate(cfg.q_max)?;
                (m, 0)
            }
            ThresholdPolicy::Oracle => {
                let m = ThresholdMap::from_fn(width * kx, height * ky, kx, ky, |x, y| {
                    oracle_threshold(radiance[y * width + x], &cfg).q
                })?;
                (m, 0)
            }
            ThresholdPolicy::Bisection {
                block,
                adapt_frames,
            } => {
                let rep =
                    adapt::run_bisection_on(&theta, radiance, &cfg, block, adapt_frames, None)?;
                if rep.reconstruction_frames == 0 {
                    return Err(QisError::Config("no frames left for reconstruction".into()));
                }
                (rep.map, rep.adaptation_frames)
            }
        };
        let bits = forward::sample_frames(&theta, &map, start..cfg.frames, cfg.seed)?;
        Ok(Exposure {
            tau,
            bits,
            qmap: map,
            adaptation_frames: start,
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(ExposureStack {
        width,
        height,
        radiance: radiance.to_vec(),
        config: *config,
        exposures,
    })
}

/// Unclipped reconstruction of every exposure, already referred to radiance.
pub fn reconstruct_stack(stack: &ExposureStack) -> Result<Vec<ReconstructionResult>> {
    (0..stack.exposures.len())
        .map(|e| {
            let cfg = stack.exposure_config(e)?;
            let x = &stack.exposures[e];
            reconstruct::mle_reconstruct(&x.bits, &x.qmap, &cfg, f64::INFINITY)
        })
        .collect()
}

/// Fused radiance and its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct HdrResult {
    pub width: usize,
    pub height: usize,
    pub fused: Vec<f64>,
    /// Radiance estimate of each exposure, `[e][n]`.
    pub per_exposure: Vec<Vec<f64>>,
    /// Fusion weights, `[e][n]`; each pixel's weights sum to 1.
    pub weights: Vec<Vec<f64>>,
    /// Pixels saturated in every exposure.
    pub fallback: Vec<bool>,
    /// PSNR of the tone-mapped result against the tone-mapped truth.
    pub psnr_db: Option<Psnr>,
}

/// Inverse-variance fusion of per-exposure reconstructions.
///
/// An unsaturated exposure gets weight `KT·I(r̂_e)`, the reciprocal of its
/// Fisher variance at the estimate; saturated exposures get zero. A pixel
/// saturated everywhere takes the exposure whose zero fraction is closest to
/// one half and is flagged.
pub fn fuse(stack: &ExposureStack, recs: &[ReconstructionResult]) -> Result<HdrResult> {
    if recs.len() != stack.exposures.len() {
        return Err(QisError::Dimension(format!(
            "{} reconstructions for {} exposures",
            recs.len(),
            stack.exposures.len()
        )));
    }
    let n = stack.width * stack.height;
    if recs.iter().any(|r| r.raw_estimate.len() != n) {
        return Err(QisError::Dimension(
            "reconstruction size does not match the stack".into(),
        ));
    }
    let cfgs: Vec<SensorConfig> = (0..recs.len())
        .map(|e| stack.exposure_config(e))
        .collect::<Result<_>>()?;
    let qs: Vec<Vec<u32>> = recs
        .iter()
        .zip(&stack.exposures)
        .zip(&cfgs)
        .map(|((_, x), c)| reconstruct::pixel_thresholds(&x.qmap, c))
        .collect::<Result<_>>()?;

    let per_pixel = par::map_range(n, |p| {
        let raw: Vec<f64> = recs
            .iter()
            .enumerate()
            .map(|(e, r)| {
                if r.saturated[p] {
                    0.0
                } else {
                    analytics::fisher_information(r.raw_estimate[p], qs[e][p], &cfgs[e])
                        .map(|i| i * cfgs[e].bits_per_pixel() as f64)
                        .unwrap_or(0.0)
                }
            })
            .collect();
        let total: f64 = raw.iter().sum();
        if total > 0.0 && total.is_finite() {
            let w: Vec<f64> = raw.iter().map(|v| v / total).collect();
            let f = w.iter().zip(recs).map(|(w, r)| w * r.raw_estimate[p]).sum();
            (f, w, false)
        } else {
            let best = recs
                .iter()
                .enumerate()
                .min_by(|a, b| {
                    (a.1.stats[p].gamma - 0.5)
                        .abs()
                        .total_cmp(&(b.1.stats[p].gamma - 0.5).abs())
                })
                .map_or(0, |(e, _)| e);
            let mut w = vec![0.0; recs.len()];
            w[best] = 1.0;
            (recs[best].raw_estimate[p], w, true)
        }
    });

    let mut fused = Vec::with_capacity(n);
    let mut weights = vec![Vec::with_capacity(n); recs.len()];
    let mut fallback = Vec::with_capacity(n);
    for (f, w, fb) in per_pixel {
        fused.push(f);
        for (e, v) in w.into_iter().enumerate() {
            weights[e].push(v);
        }
        fallback.push(fb);
    }
    let peak = stack.radiance.iter().copied().fold(0.0, f64::max);
    let psnr_db = if peak > 0.0 {
        Some(tone_mapped_psnr(&fused, &stack.radiance, peak)?)
    } else {
        None
    };
    Ok(HdrResult {
        width: stack.width,
        height: stack.height,
        fused,
        per_exposure: recs.iter().map(|r| r.raw_estimate.clone()).collect(),
        weights,
        fallback,
        psnr_db,
    })
}

/// Compression strength of the display tone curve.
pub const TONE_MU: f64 = 1000.0;

/// `ln(1 + μ·r/peak) / ln(1 + μ)`, clipped to `[0, 1]`.
pub fn tone_curve(r: f64, peak: f64) -> f64 {
    ((TONE_MU * r.max(0.0) / peak).ln_1p() / TONE_MU.ln_1p()).clamp(0.0, 1.0)
}

/// PSNR after applying the same tone curve to estimate and truth.
pub fn tone_mapped_psnr(estimate: &[f64], truth: &[f64], peak: f64) -> Result<Psnr> {
    let a: Vec<f64> = estimate.iter().map(|&r| tone_curve(r, peak)).collect();
    let b: Vec<f64> = truth.iter().map(|&r| tone_curve(r, peak)).collect();
    reconstruct::psnr(&a, &b, 1.0)
}

/// Thresholds used by the analytic dynamic-range curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CurvePolicy {
    Uniform(u32),
    /// `⌊τθ⌋ + 1` clamped to `q_max` for each exposure.
    Oracle,
}

/// One point of the dynamic-range curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    /// Exposure at full duty cycle.
    pub theta: f64,
    /// Best SNR over the exposures; `None` where every exposure is degenerate.
    pub snr_db: Option<f64>,
}

/// Logarithmic grid of `per_decade` points per decade from `lo` to `hi`.
pub fn log_grid(lo: f64, hi: f64, per_decade: usize) -> Vec<f64> {
    let decades = (hi / lo).log10();
    let n = (decades * per_decade as f64).ceil() as usize;
    (0..=n)
        .map(|i| lo * 10f64.powf(decades * i as f64 / n as f64))
        .collect()
}

/// Upper envelope over duty cycles of the analytic SNR at each grid exposure.
pub fn dynamic_range_curve(
    config: &SensorConfig,
    taus: &[f64],
    policy: CurvePolicy,
    thetas: &[f64],
) -> Result<Vec<CurvePoint>> {
    check_taus(taus)?;
    if let CurvePolicy::Uniform(q) = policy {
        if q < 1 || q > config.q_max {
            return Err(QisError::Domain(format!(
                "threshold {q} outside [1, {}]",
                config.q_max
            )));
        }
    }
    let bits = config.bits_per_pixel();
    Ok(par::map_slice(thetas, |&theta| {
        let best = taus
            .iter()
            .filter_map(|&tau| {
                let th = tau * theta;
                let q = match policy {
                    CurvePolicy::Uniform(q) => q,
                    CurvePolicy::Oracle => analytics::oracle_threshold_theta(th, config.q_max).q,
                };
                analytics::snr_db_theta(th, q, bits).ok()
            })
            .fold(None, |acc: Option<f64>, v| {
                Some(acc.map_or(v, |a| a.max(v)))
            });
        CurvePoint {
            theta,
            snr_db: best,
        }
    }))
}

/// Width in dB, `20·log10(θ_hi/θ_lo)`, between the first and last grid points
/// whose SNR reaches `floor_db`. Zero if none does.
pub fn dynamic_range_db(curve: &[CurvePoint], floor_db: f64) -> f64 {
    let above = |p: &&CurvePoint| p.snr_db.is_some_and(|s| s >= floor_db);
    match (curve.iter().find(above), curve.iter().rev().find(above)) {
        (Some(lo), Some(hi)) => 20.0 * (hi.theta / lo.theta).log10(),
        _ => 0.0,
    }
}
