use proptest::prelude::*;
use qis_core::analytics::{
    bit_density_moments, checkerboard_crlb, checkerboard_design, fisher_information, fisher_theta,
    intensity_grid, oracle_threshold_theta, snr_argmax_theta, snr_db, snr_db_theta,
    snr_exposure_referred_db, snr_lower_bound, snr_output_referred, CRLB_PENALTY,
};
use qis_core::forward::{
    expose, sample_bits, IntensityImage, SensorConfig, SynthesisKernel, ThresholdMap,
};
use qis_core::special::psi_pair;
use qis_oracles::{bernoulli_expected_curvature, integrate};

fn cfg(alpha: f64, k: u32, t: u32, q_max: u32) -> SensorConfig {
    SensorConfig::new(alpha, k, 1, t, q_max).unwrap()
}

#[test]
fn fisher_matches_expected_curvature_on_grid() {
    let config = cfg(300.0, 4, 50, 64);
    let mut checked = 0;
    for i in 0..20 {
        let c = 0.02 + 0.049 * i as f64;
        for j in 0..20 {
            let q = 1 + 3 * j as u32;
            let Ok(fi) = fisher_information(c, q, &config) else {
                continue;
            };
            // Skip points where either probability is too small for a
            // finite-difference log to resolve.
            let (p0, p1) = psi_pair(q, config.theta(c)).unwrap();
            if p0.min(p1) < 1e-8 {
                continue;
            }
            let h = 1e-3 * c;
            let fd = bernoulli_expected_curvature(|x| psi_pair(q, config.theta(x)).unwrap(), c, h);
            assert!((fd / fi - 1.0).abs() < 1e-5, "c={c} q={q}: {fd} vs {fi}");
            checked += 1;
        }
    }
    assert!(checked > 100, "only {checked} grid points checked");
}

#[test]
fn exposure_referred_db_equals_fisher_snr() {
    for &(k, t) in &[(1, 1), (4, 50), (16, 13)] {
        for &theta in &[0.05, 0.7, 3.0, 12.0, 40.0] {
            for q in 1..=40 {
                let Ok(a) = snr_db_theta(theta, q, u64::from(k * t)) else {
                    continue;
                };
                let b = snr_exposure_referred_db(theta, q, k, t).unwrap();
                assert!((a - b).abs() < 1e-9, "θ={theta} q={q}");
            }
        }
    }
}

#[test]
fn doubling_frames_adds_three_db_everywhere() {
    let a = cfg(250.0, 4, 20, 32);
    let b = cfg(250.0, 4, 40, 32);
    for &c in &[0.01, 0.1, 0.4, 0.9] {
        for q in 1..=32 {
            let (Ok(x), Ok(y)) = (snr_db(c, q, &a), snr_db(c, q, &b)) else {
                continue;
            };
            assert!((y - x - 3.0103).abs() < 1e-4);
        }
    }
}

#[test]
fn output_referred_snr_against_monte_carlo() {
    // Per-block sums S over a constant image: mean/std of S vs the closed form.
    let config = SensorConfig::new(40.0, 2, 2, 20, 8).unwrap();
    let img = IntensityImage::constant(80, 80, 0.3).unwrap();
    let theta = expose(&img, &config, SynthesisKernel::Boxcar).unwrap();
    for q in [1u32, 3, 5] {
        let map = ThresholdMap::uniform(&config, 80, 80, q).unwrap();
        let bits = sample_bits(&theta, &map, 20, 7 + u64::from(q)).unwrap();
        let stats = qis_core::reconstruct::block_sums(&bits, &config).unwrap();
        let s: Vec<f64> = stats.iter().map(|b| b.sum as f64).collect();
        let n = s.len() as f64;
        let mean = s.iter().sum::<f64>() / n;
        let var = s.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let want = snr_output_referred(config.theta(0.3), q, 4, 20).unwrap();
        assert!((mean / var.sqrt() / want - 1.0).abs() < 0.05, "q={q}");
    }
}

#[test]
fn bit_density_moments_against_monte_carlo() {
    let config = SensorConfig::new(60.0, 2, 2, 30, 8).unwrap();
    let img = IntensityImage::constant(64, 64, 0.5).unwrap();
    let theta = expose(&img, &config, SynthesisKernel::Boxcar).unwrap();
    for q in [2u32, 7, 8] {
        let map = ThresholdMap::uniform(&config, 64, 64, q).unwrap();
        let bits = sample_bits(&theta, &map, 30, 40 + u64::from(q)).unwrap();
        let stats = qis_core::reconstruct::block_sums(&bits, &config).unwrap();
        let g: Vec<f64> = stats.iter().map(|b| b.gamma).collect();
        let n = g.len() as f64;
        let mean = g.iter().sum::<f64>() / n;
        let var = g.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let (m, v) = bit_density_moments(0.5, q, &config).unwrap();
        assert!(
            (mean - m).abs() < 4.0 * (v / n).sqrt(),
            "q={q}: mean {mean} vs {m}"
        );
        // Sample variance of n draws has standard error ≈ v·√(2/n).
        assert!(
            (var - v).abs() < 4.0 * v * (2.0 / n).sqrt() + 1e-12,
            "q={q}: var {var} vs {v}"
        );
    }
}

#[test]
fn fisher_peak_sits_next_to_the_exposure() {
    for i in 0..60 {
        let theta = 0.25 + 0.5 * i as f64;
        let best = snr_argmax_theta(theta, 200).unwrap();
        let oracle = oracle_threshold_theta(theta, 200).q;
        assert!(
            best.abs_diff(oracle) <= 1,
            "θ={theta}: argmax {best}, oracle {oracle}"
        );
    }
    let o = oracle_threshold_theta(37.5, 16);
    assert!(o.clamped && o.q == 16);
    assert_eq!(oracle_threshold_theta(0.0, 16).q, 1);
}

#[test]
fn checkerboard_search_matches_brute_force() {
    let config = cfg(300.0, 4, 13, 4);
    let grid = intensity_grid(0.05, 1.0, 0.05).unwrap();
    let d = checkerboard_design(&config, 0.05, 1.0, 0.05).unwrap();
    let mut best = (0, 0, f64::INFINITY);
    for a in 1..=4 {
        for b in a..=4 {
            let f = |c: f64| checkerboard_crlb(a, b, c, &config);
            let v: f64 = grid
                .windows(2)
                .map(|w| 0.5 * (w[1] - w[0]) * (f(w[0]) + f(w[1])))
                .sum();
            if v < best.2 {
                best = (a, b, v);
            }
        }
    }
    assert_eq!((d.q1, d.q2), (best.0, best.1));
    assert!((d.objective - best.2).abs() <= 1e-12 * best.2);
}

#[test]
fn checkerboard_crlb_is_reciprocal_pooled_information() {
    let config = cfg(300.0, 4, 13, 16);
    for &c in &[0.1, 0.5, 0.9] {
        for (a, b) in [(4u32, 12u32), (1, 16), (8, 8)] {
            // Each phase covers K/2 of the pixel's jots; a phase whose Ψ is
            // within 1e-12 of 0 or 1 contributes nothing.
            let phase = |q: u32| {
                let (p0, p1) = psi_pair(q, config.theta(c)).unwrap();
                if p0.min(p1) < 1e-12 {
                    0.0
                } else {
                    fisher_information(c, q, &config).unwrap()
                }
            };
            let info = phase(a) + phase(b);
            if info == 0.0 {
                assert_eq!(checkerboard_crlb(a, b, c, &config), CRLB_PENALTY);
                continue;
            }
            let want = 2.0 / 4.0 / info;
            let r = checkerboard_crlb(a, b, c, &config) / want;
            assert!((r - 1.0).abs() < 1e-10, "c={c} ({a},{b}): ratio {r}");
        }
    }
    // Both phases saturated: no information, so the penalty applies.
    assert_eq!(checkerboard_crlb(16, 16, 1e-6, &config), CRLB_PENALTY);
}

#[test]
fn fisher_integrates_to_finite_total_over_exposure() {
    // Σ_q I over exposures is bounded: each bit carries finite information.
    let total = integrate(|t| fisher_theta(t, 3).unwrap_or(0.0), 1e-3, 80.0, 1e-10);
    assert!(total.is_finite() && total > 0.0);
}

proptest! {
    #[test]
    fn lower_bound_never_exceeds_log_snr(c in 0.005f64..=1.0, q in 1u32..=60, alpha in 10.0f64..500.0) {
        let config = cfg(alpha, 4, 10, 64);
        if let Ok(i) = fisher_information(c, q, &config) {
            let l = snr_lower_bound(c, q, &config).unwrap();
            prop_assert!(l <= (c * c * i).ln() + 1e-9, "L={} ln={}", l, (c * c * i).ln());
        }
    }

    #[test]
    fn fisher_is_positive_where_defined(theta in 1e-3f64..200.0, q in 1u32..=80) {
        if let Ok(v) = fisher_theta(theta, q) {
            prop_assert!(v > 0.0 && v.is_finite());
        }
    }
}
