//! Threshold-policy comparison over a corpus and a set of seeds.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::adapt::{self, ResetDirection, ResetEstimator};
use crate::corpus::CorpusImage;
use crate::error::Result;
use crate::forward::{self, expose, IntensityImage, SensorConfig, SynthesisKernel, ThresholdMap};
use crate::par;
use crate::reconstruct;
use crate::rng;

/// A way of choosing thresholds for one acquisition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Policy {
    Uniform(u32),
    ConditionalReset(ResetDirection),
    /// Bisection with one threshold per `pixels × pixels` pixel blocks.
    Proposed {
        pixels: usize,
    },
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Policy::Uniform(q) => write!(f, "uniform q={q}"),
            Policy::ConditionalReset(ResetDirection::Ascending) => {
                f.write_str("conditional reset ascending")
            }
            Policy::ConditionalReset(ResetDirection::Descending) => {
                f.write_str("conditional reset descending")
            }
            Policy::Proposed { pixels } => write!(f, "proposed {pixels}x{pixels} pixels"),
        }
    }
}

/// Sensor and frame budget of a benchmark run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchSettings {
    pub config: SensorConfig,
    pub kernel: SynthesisKernel,
    /// Frames the proposed method may spend on adaptation.
    pub adapt_frames: u32,
    pub seeds: u32,
    pub reset_estimator: ResetEstimator,
}

impl BenchSettings {
    /// `4×4` jots per pixel, 13 frames, `q_max = 16`, gain `K(q_max − 1)`,
    /// 4 adaptation frames.
    pub fn standard(seeds: u32, base_seed: u64) -> Result<Self> {
        Ok(Self {
            config: SensorConfig::new(240.0, 4, 4, 13, 16)?.with_seed(base_seed),
            kernel: SynthesisKernel::Boxcar,
            adapt_frames: 4,
            seeds,
            reset_estimator: ResetEstimator::Integration,
        })
    }
}

/// The policies of the standard comparison table.
pub fn standard_policies() -> Vec<Policy> {
    vec![
        Policy::Uniform(1),
        Policy::Uniform(5),
        Policy::Uniform(10),
        Policy::Uniform(16),
        Policy::ConditionalReset(ResetDirection::Ascending),
        Policy::ConditionalReset(ResetDirection::Descending),
        Policy::Proposed { pixels: 8 },
        Policy::Proposed { pixels: 4 },
        Policy::Proposed { pixels: 1 },
    ]
}

/// PSNR of one acquisition and reconstruction.
pub fn run_policy(
    image: &IntensityImage,
    config: &SensorConfig,
    kernel: SynthesisKernel,
    policy: Policy,
    settings: &BenchSettings,
) -> Result<f64> {
    let rec = match policy {
        Policy::Uniform(q) => {
            let theta = expose(image, config, kernel)?;
            let map = ThresholdMap::uniform(config, image.width(), image.height(), q)?;
            let bits = forward::sample_bits(&theta, &map, config.frames, config.seed)?;
            reconstruct::mle_reconstruct(&bits, &map, config, 1.0)?.with_truth(image.pixels())?
        }
        Policy::ConditionalReset(dir) => adapt::conditional_reset_reconstruct_with(
            image,
            config,
            kernel,
            dir,
            1.0,
            settings.reset_estimator,
        )?,
        Policy::Proposed { pixels } => {
            let block = (config.kx as usize * pixels, config.ky as usize * pixels);
            adapt::adapt_and_reconstruct(image, config, kernel, block, settings.adapt_frames, None)?
                .1
        }
    };
    Ok(rec.psnr_db.map_or(f64::NAN, |p| p.db()))
}

/// Summary of one policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub policy: String,
    /// Mean PSNR over every (image, seed) pair.
    pub mean_psnr: f64,
    /// Per-image standard deviation over seeds, averaged over images.
    pub std_psnr: f64,
}

/// Seed of realization `s` of image `i`.
pub fn realization_seed(base: u64, image: usize, s: u32) -> u64 {
    rng::mix64(base ^ rng::mix64(((image as u64) << 32) | u64::from(s)))
}

/// Runs every policy on every image and seed.
pub fn run_bench(
    corpus: &[CorpusImage],
    settings: &BenchSettings,
    policies: &[Policy],
) -> Result<Vec<BenchRow>> {
    let seeds = settings.seeds.max(1);
    policies
        .iter()
        .map(|&policy| {
            let per_image = corpus
                .iter()
                .enumerate()
                .map(|(i, img)| {
                    let runs: Vec<u32> = (0..seeds).collect();
                    par::map_slice(&runs, |&s| {
                        let cfg =
                            settings
                                .config
                                .with_seed(realization_seed(settings.config.seed, i, s));
                        run_policy(&img.image, &cfg, settings.kernel, policy, settings)
                    })
                    .into_iter()
                    .collect::<Result<Vec<f64>>>()
                })
                .collect::<Result<Vec<_>>>()?;
            let all: Vec<f64> = per_image.iter().flatten().copied().collect();
            let mean = all.iter().sum::<f64>() / all.len() as f64;
            let std =
                per_image.iter().map(|v| population_std(v)).sum::<f64>() / per_image.len() as f64;
            Ok(BenchRow {
                policy: policy.to_string(),
                mean_psnr: mean,
                std_psnr: std,
            })
        })
        .collect()
}

fn population_std(v: &[f64]) -> f64 {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus;

    #[test]
    fn single_seed_has_zero_std() {
        let c = vec![CorpusImage {
            name: "ramp".into(),
            image: corpus::ramp(8, 8).unwrap(),
        }];
        let s = BenchSettings::standard(1, 5).unwrap();
        let rows = run_bench(&c, &s, &[Policy::Uniform(5)]).unwrap();
        assert_eq!(rows[0].std_psnr, 0.0);
        assert!(rows[0].mean_psnr.is_finite());
    }

    #[test]
    fn policy_labels() {
        assert_eq!(
            Policy::Proposed { pixels: 4 }.to_string(),
            "proposed 4x4 pixels"
        );
        assert_eq!(Policy::Uniform(10).to_string(), "uniform q=10");
    }
}
