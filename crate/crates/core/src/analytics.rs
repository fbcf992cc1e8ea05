//! Fisher information, SNR, the SNR lower bound, the oracle threshold and
//! related analytic tables.
//!
//! All products of `Γ(q)`, `θ^q` and `e^{-θ}` are formed in the log domain.

use std::ops::RangeInclusive;

use serde::{Deserialize, Serialize};

use crate::error::{domain, QisError, Result};
use crate::forward::SensorConfig;
use crate::par;
use crate::reconstruct::{estimate_block, BlockStats, SaturationPolicy};
use crate::special::{self, ln_factorial, ln_gamma_int};

/// Per-θ Fisher information of a single bit with threshold `q`,
/// `e^{-2θ} θ^{2q-2} / (Γ(q)² Ψ (1 − Ψ))`.
pub fn fisher_theta(theta: f64, q: u32) -> Result<f64> {
    // Ψ < 1 implies θ > 0, so the logarithms below are finite.
    let (p0, p1) = nondegenerate(q, theta)?;
    let ln_num = -2.0 * theta + 2.0 * f64::from(q - 1) * theta.ln() - 2.0 * ln_gamma_int(q);
    Ok((ln_num - p0.ln() - p1.ln()).exp())
}

/// Fisher information `I_q(c)` of one bit about the normalized intensity.
pub fn fisher_information(c: f64, q: u32, config: &SensorConfig) -> Result<f64> {
    check_intensity(c)?;
    let g = config.alpha * config.tau / f64::from(config.k());
    Ok(g * g * fisher_theta(config.theta(c), q)?)
}

/// `10·log10(c² I_q(c)) + 10·log10(KT)`.
pub fn snr_db(c: f64, q: u32, config: &SensorConfig) -> Result<f64> {
    let i = fisher_information(c, q, config)?;
    Ok(10.0 * (c * c * i).log10() + 10.0 * (config.bits_per_pixel() as f64).log10())
}

/// SNR in dB as a function of exposure, with `KT` bits.
pub fn snr_db_theta(theta: f64, q: u32, bits: u64) -> Result<f64> {
    Ok(10.0 * (theta * theta * fisher_theta(theta, q)?).log10() + 10.0 * (bits as f64).log10())
}

fn check_intensity(c: f64) -> Result<()> {
    if !(c >= 0.0 && c.is_finite()) {
        return domain(format!("intensity must be finite and ≥ 0, got {c}"));
    }
    Ok(())
}

fn nondegenerate(q: u32, theta: f64) -> Result<(f64, f64)> {
    let (p0, p1) = special::psi_pair(q, theta)?;
    if p0 <= 0.0 || p1 <= 0.0 {
        return Err(QisError::Degenerate { q, theta });
    }
    Ok((p0, p1))
}

/// Output-referred SNR `E[S]/√Var[S] = √(KT(1 − Ψ)/Ψ)`.
pub fn snr_output_referred(theta: f64, q: u32, k: u32, t: u32) -> Result<f64> {
    let (p0, p1) = nondegenerate(q, theta)?;
    Ok((f64::from(k) * f64::from(t) * p1 / p0).sqrt())
}

pub fn snr_output_referred_db(theta: f64, q: u32, k: u32, t: u32) -> Result<f64> {
    Ok(20.0 * snr_output_referred(theta, q, k, t)?.log10())
}

/// Output noise referred back through the sensor response:
/// `e^{-θ} θ^q / Γ(q) · √(KT / (Ψ(1 − Ψ)))`.
pub fn snr_exposure_referred(theta: f64, q: u32, k: u32, t: u32) -> Result<f64> {
    let (p0, p1) = nondegenerate(q, theta)?;
    let ln_slope = -theta + f64::from(q) * theta.ln() - ln_gamma_int(q);
    let kt = f64::from(k) * f64::from(t);
    Ok((ln_slope + 0.5 * (kt.ln() - p0.ln() - p1.ln())).exp())
}

pub fn snr_exposure_referred_db(theta: f64, q: u32, k: u32, t: u32) -> Result<f64> {
    Ok(20.0 * snr_exposure_referred(theta, q, k, t)?.log10())
}

/// `L_q(c) = 2(ln 2 − θ + q ln θ − ln Γ(q))`, a lower bound on `ln(c² I_q(c))`.
pub fn snr_lower_bound(c: f64, q: u32, config: &SensorConfig) -> Result<f64> {
    check_intensity(c)?;
    lower_bound_theta(config.theta(c), q)
}

pub fn lower_bound_theta(theta: f64, q: u32) -> Result<f64> {
    special::GammaQuery::new(q, theta)?;
    if theta <= 0.0 {
        return domain("lower bound needs θ > 0");
    }
    Ok(2.0 * (std::f64::consts::LN_2 - theta + f64::from(q) * theta.ln() - ln_gamma_int(q)))
}

/// Oracle threshold with a flag for clamping at `q_max`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleThreshold {
    pub q: u32,
    pub clamped: bool,
}

/// `q* = ⌊θ⌋ + 1` clamped to `[1, q_max]`.
pub fn oracle_threshold(c: f64, config: &SensorConfig) -> OracleThreshold {
    oracle_threshold_theta(config.theta(c.max(0.0)), config.q_max)
}

pub fn oracle_threshold_theta(theta: f64, q_max: u32) -> OracleThreshold {
    let raw = theta.max(0.0).floor() + 1.0;
    if raw > f64::from(q_max) {
        OracleThreshold {
            q: q_max,
            clamped: true,
        }
    } else {
        OracleThreshold {
            q: raw as u32,
            clamped: false,
        }
    }
}

/// Exact SNR maximizer over `q ∈ [1, q_hi]`, skipping degenerate thresholds.
pub fn snr_argmax_theta(theta: f64, q_hi: u32) -> Option<u32> {
    let mut best: Option<(u32, f64)> = None;
    for q in 1..=q_hi {
        if let Ok(v) = fisher_theta(theta, q) {
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((q, v));
            }
        }
    }
    best.map(|b| b.0)
}

/// Mean and variance of the zero fraction `γ` of one pixel block.
pub fn bit_density_moments(c: f64, q: u32, config: &SensorConfig) -> Result<(f64, f64)> {
    check_intensity(c)?;
    let (p0, p1) = special::psi_pair(q, config.theta(c))?;
    Ok((p0, p0 * p1 / config.bits_per_pixel() as f64))
}

/// One point of an SNR table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SnrPoint {
    pub c: f64,
    pub q: u32,
    pub snr_db: f64,
    pub fisher: f64,
    pub lower_bound: f64,
}

/// SNR rows for every `(c, q)` pair where the Fisher information is defined,
/// ordered by `c` then `q`.
pub fn snr_table(config: &SensorConfig, cs: &[f64], qs: RangeInclusive<u32>) -> Vec<SnrPoint> {
    let qs: Vec<u32> = qs.collect();
    par::map_slice(cs, |&c| {
        qs.iter()
            .filter_map(|&q| {
                let fisher = fisher_information(c, q, config).ok()?;
                Some(SnrPoint {
                    c,
                    q,
                    snr_db: snr_db(c, q, config).ok()?,
                    fisher,
                    lower_bound: snr_lower_bound(c, q, config).ok()?,
                })
            })
            .collect::<Vec<_>>()
    })
    .into_iter()
    .flatten()
    .collect()
}

/// Range of SNR over the thresholds whose mean bit density `1 − Ψ` falls in
/// `[lo, hi]`. `None` if no threshold in `qs` qualifies.
pub fn snr_over_density_window(
    c: f64,
    config: &SensorConfig,
    qs: RangeInclusive<u32>,
    lo: f64,
    hi: f64,
) -> Result<Option<(f64, f64)>> {
    let mut range: Option<(f64, f64)> = None;
    for q in qs {
        let (mean, _) = bit_density_moments(c, q, config)?;
        let density = 1.0 - mean;
        if density < lo || density > hi {
            continue;
        }
        let s = snr_db(c, q, config)?;
        range = Some(match range {
            None => (s, s),
            Some((a, b)) => (a.min(s), b.max(s)),
        });
    }
    Ok(range)
}

/// CRLB assigned to grid points where neither threshold carries information.
pub const CRLB_PENALTY: f64 = 1e12;

const DEGENERATE_PSI: f64 = 1e-12;

/// Two-threshold checkerboard design.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CheckerboardDesign {
    pub q1: u32,
    pub q2: u32,
    /// Integrated CRLB over the intensity range.
    pub objective: f64,
}

/// Information of one checkerboard phase; zero where `Ψ` is within `1e-12`
/// of 0 or 1.
fn checker_information(theta: f64, q: u32, alpha: f64, k: u32) -> f64 {
    let (p0, p1) = match special::psi_pair(q, theta) {
        Ok(p) => p,
        Err(_) => return 0.0,
    };
    if p0 < DEGENERATE_PSI || p1 < DEGENERATE_PSI || theta <= 0.0 {
        return 0.0;
    }
    let ln = -2.0 * theta + 2.0 * f64::from(q - 1) * theta.ln()
        - 2.0 * ln_gamma_int(q)
        - p0.ln()
        - p1.ln();
    alpha * alpha / (2.0 * f64::from(k)) * ln.exp()
}

/// Cramér–Rao bound of a two-threshold checkerboard at intensity `c`.
///
/// Each phase covers half the jots, so the pooled information is the sum of
/// the two per-phase terms and the bound is its reciprocal.
pub fn checkerboard_crlb(q1: u32, q2: u32, c: f64, config: &SensorConfig) -> f64 {
    let theta = config.theta(c);
    let alpha = config.alpha * config.tau;
    let info = checker_information(theta, q1, alpha, config.k())
        + checker_information(theta, q2, alpha, config.k());
    if info > 0.0 {
        1.0 / info
    } else {
        CRLB_PENALTY
    }
}

/// The intensity grid `c_min, c_min + step, …, c_max`.
pub fn intensity_grid(c_min: f64, c_max: f64, step: f64) -> Result<Vec<f64>> {
    if !(c_min > 0.0 && c_min < c_max && c_max <= 1.0) {
        return domain(format!(
            "need 0 < c_min < c_max ≤ 1, got [{c_min}, {c_max}]"
        ));
    }
    if !(step > 0.0) {
        return domain(format!("grid step must be > 0, got {step}"));
    }
    let n = ((c_max - c_min) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| c_min + i as f64 * step).collect())
}

/// Trapezoidal integral of the checkerboard CRLB over `grid`.
pub fn checkerboard_objective(q1: u32, q2: u32, grid: &[f64], config: &SensorConfig) -> f64 {
    grid.windows(2)
        .map(|w| {
            0.5 * (w[1] - w[0])
                * (checkerboard_crlb(q1, q2, w[0], config)
                    + checkerboard_crlb(q1, q2, w[1], config))
        })
        .sum()
}

/// Exhaustive search of `q1 ≤ q2` in `[1, q_max]` minimizing the integrated CRLB.
pub fn checkerboard_design(
    config: &SensorConfig,
    c_min: f64,
    c_max: f64,
    grid_step: f64,
) -> Result<CheckerboardDesign> {
    let grid = intensity_grid(c_min, c_max, grid_step)?;
    let q_max = config.q_max;
    let pairs: Vec<(u32, u32)> = (1..=q_max)
        .flat_map(|a| (a..=q_max).map(move |b| (a, b)))
        .collect();
    let scores = par::map_slice(&pairs, |&(a, b)| {
        checkerboard_objective(a, b, &grid, config)
    });
    let (i, objective) =
        scores
            .iter()
            .copied()
            .enumerate()
            .fold(
                (0, f64::INFINITY),
                |acc, (i, v)| if v < acc.1 { (i, v) } else { acc },
            );
    Ok(CheckerboardDesign {
        q1: pairs[i].0,
        q2: pairs[i].1,
        objective,
    })
}

/// One row of the phase-transition table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseRow {
    pub q: u32,
    /// `E[ĉ]/c` under the half-count estimator, exact over the Binomial law of `S`.
    pub e_chat_ratio: f64,
    /// Mean bit density `1 − Ψ_q(θ)`.
    pub bit_density: f64,
    /// `NaN` where the Fisher information is degenerate.
    pub snr_db: f64,
    /// Membership of the δ-admissible set.
    pub admissible: bool,
}

/// Exact `E[ĉ]` for one threshold: sum of `ĉ(S)` against the Binomial pmf.
pub fn expected_estimate(c: f64, q: u32, config: &SensorConfig) -> Result<f64> {
    let n = config.bits_per_pixel();
    let (p0, p1) = special::psi_pair(q, config.theta(c))?;
    let mut acc = 0.0;
    for s in 0..=n {
        let ln_pmf = ln_factorial(n) - ln_factorial(s) - ln_factorial(n - s)
            + log_pow(p1, s)
            + log_pow(p0, n - s);
        let w = ln_pmf.exp();
        if w == 0.0 {
            continue;
        }
        let est = estimate_block(
            &BlockStats::new(s, n),
            q,
            config,
            SaturationPolicy::HalfCount,
        )?;
        acc += w * est;
    }
    Ok(acc)
}

fn log_pow(p: f64, k: u64) -> f64 {
    if k == 0 {
        0.0
    } else {
        k as f64 * p.ln()
    }
}

/// Expected estimate, bit density and SNR over a threshold range at intensity `c`.
pub fn phase_transition_curve(
    c: f64,
    config: &SensorConfig,
    q_range: RangeInclusive<u32>,
    delta: f64,
) -> Result<Vec<PhaseRow>> {
    if !(c > 0.0) {
        return domain(format!("phase transition needs c > 0, got {c}"));
    }
    let set =
        special::delta_admissible_set(config.theta(c), delta, config.k(), config.frames, u32::MAX)?;
    let qs: Vec<u32> = q_range.collect();
    par::map_slice(&qs, |&q| {
        let (mean, _) = bit_density_moments(c, q, config)?;
        Ok(PhaseRow {
            q,
            e_chat_ratio: expected_estimate(c, q, config)? / c,
            bit_density: 1.0 - mean,
            snr_db: snr_db(c, q, config).unwrap_or(f64::NAN),
            admissible: set.is_some_and(|s| s.contains(q)),
        })
    })
    .into_iter()
    .collect()
}
