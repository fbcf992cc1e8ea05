use proptest::prelude::*;
use qis_core::forward::{
    expose, sample_bits, BitCube, IntensityImage, SensorConfig, SynthesisKernel, ThresholdMap,
};
use qis_core::reconstruct::{
    block_sums, estimate_block, mle_reconstruct, mle_reconstruct_with, psnr, BlockStats, Psnr,
    SaturationPolicy,
};
use qis_oracles::mse_two_pass;

fn random_cube(jw: usize, jh: usize, frames: usize, seed: u64) -> BitCube {
    let bits = (0..jw * jh * frames)
        .map(|i| {
            (qis_core::rng::uniform(seed, qis_core::rng::Stream::Corpus, i as u64, 1) < 0.4) as u8
        })
        .collect();
    BitCube::new(jw, jh, frames, bits).unwrap()
}

#[test]
fn block_sums_match_naive_loop() {
    let cfg = SensorConfig::new(10.0, 3, 2, 7, 4).unwrap();
    let (w, h) = (5, 4);
    let cube = random_cube(w * 3, h * 2, 7, 9);
    let stats = block_sums(&cube, &cfg).unwrap();
    for py in 0..h {
        for px in 0..w {
            let mut s = 0u64;
            for t in 0..7 {
                for dy in 0..2 {
                    for dx in 0..3 {
                        let m = (py * 2 + dy) * w * 3 + px * 3 + dx;
                        s += u64::from(cube.get(m, t));
                    }
                }
            }
            let b = stats[py * w + px];
            assert_eq!(b.sum, s);
            assert_eq!(b.bits, 42);
        }
    }
}

#[test]
fn single_photon_estimate_is_negative_log() {
    let cfg = SensorConfig::new(200.0, 4, 1, 10, 4).unwrap();
    for s in 1..40u64 {
        let stats = BlockStats::new(s, 40);
        let got = estimate_block(&stats, 1, &cfg, SaturationPolicy::HalfCount).unwrap();
        let want = -(4.0 / 200.0) * stats.gamma.ln();
        assert!((got - want).abs() < 1e-12 * want.max(1.0), "S={s}");
    }
}

#[test]
fn saturation_clamp() {
    let cfg = SensorConfig::new(100.0, 2, 2, 5, 8).unwrap();
    let n = 20u64;
    let scale = 4.0 / 100.0;
    let all = BlockStats::new(n, n);
    assert!(all.saturated_low && all.saturated());
    let clamped = estimate_block(&all, 1, &cfg, SaturationPolicy::HalfCount).unwrap();
    assert!((clamped - scale * (2.0 * n as f64).ln()).abs() < 1e-12);
    assert_eq!(
        estimate_block(&all, 1, &cfg, SaturationPolicy::Unbounded).unwrap(),
        f64::INFINITY
    );
    let none = BlockStats::new(0, n);
    assert!(none.saturated_high);
    assert_eq!(
        estimate_block(&none, 3, &cfg, SaturationPolicy::Unbounded).unwrap(),
        0.0
    );
    assert!(estimate_block(&none, 3, &cfg, SaturationPolicy::HalfCount).unwrap() > 0.0);

    let cube = BitCube::filled(4, 4, 5, true);
    let map = ThresholdMap::uniform(&cfg, 2, 2, 1).unwrap();
    let r = mle_reconstruct(&cube, &map, &cfg, 1.0).unwrap();
    assert_eq!(r.saturated_fraction(), 1.0);
    assert!(r.estimate.iter().all(|&v| v == clamped.min(1.0)));
    assert!(r.raw_estimate.iter().all(|&v| (v - clamped).abs() < 1e-12));
    let r = mle_reconstruct_with(&cube, &map, &cfg, 1.0, SaturationPolicy::Unbounded).unwrap();
    assert!(r.raw_estimate.iter().all(|v| v.is_infinite()));
}

#[test]
fn estimate_is_unbiased_in_the_example_regime() {
    // c = 0.5, α = 300, K = 4, T = 50, q = 37: θ = 37.5 and Ψ near one half.
    let cfg = SensorConfig::new(300.0, 2, 2, 50, 60).unwrap();
    let img = IntensityImage::constant(64, 64, 0.5).unwrap();
    let theta = expose(&img, &cfg, SynthesisKernel::Boxcar).unwrap();
    let map = ThresholdMap::uniform(&cfg, 64, 64, 37).unwrap();
    let bits = sample_bits(&theta, &map, 50, 2024).unwrap();
    let r = mle_reconstruct(&bits, &map, &cfg, 1.0).unwrap();
    let mean = r.mean_estimate();
    assert!((mean / 0.5 - 1.0).abs() < 0.02, "mean estimate {mean}");
    assert_eq!(r.saturated_fraction(), 0.0);
}

#[test]
fn psnr_matches_two_pass_mse() {
    let a: Vec<f64> = (0..97).map(|i| ((i * 37) % 101) as f64 / 101.0).collect();
    let b: Vec<f64> = (0..97).map(|i| ((i * 53 + 7) % 89) as f64 / 89.0).collect();
    let want = 10.0 * (1.0 / mse_two_pass(&a, &b)).log10();
    match psnr(&a, &b, 1.0).unwrap() {
        Psnr::Finite(v) => assert!((v - want).abs() < 1e-9),
        Psnr::Infinite => panic!("unexpected perfect match"),
    }
    assert_eq!(psnr(&a, &a, 1.0).unwrap(), Psnr::Infinite);
    assert!(psnr(&a, &b[1..], 1.0).is_err());
}

#[test]
fn reconstruction_reports_truth_psnr() {
    let cfg = SensorConfig::new(300.0, 2, 2, 40, 16).unwrap();
    let img = IntensityImage::new(4, 1, vec![0.1, 0.3, 0.5, 0.7]).unwrap();
    let theta = expose(&img, &cfg, SynthesisKernel::Boxcar).unwrap();
    let map = ThresholdMap::uniform(&cfg, 4, 1, 16).unwrap();
    let bits = sample_bits(&theta, &map, 40, 1).unwrap();
    let r = mle_reconstruct(&bits, &map, &cfg, 1.0)
        .unwrap()
        .with_truth(img.pixels())
        .unwrap();
    let want = psnr(&r.estimate, img.pixels(), 1.0).unwrap();
    assert_eq!(r.psnr_db, Some(want));
}

proptest! {
    #[test]
    fn estimate_decreases_with_zero_fraction(q in 1u32..=32, n in 2u64..400) {
        let cfg = SensorConfig::new(150.0, 2, 2, 1, 32).unwrap();
        let mut prev = f64::INFINITY;
        for s in (0..=n).rev() {
            let e = estimate_block(&BlockStats::new(s, n), q, &cfg, SaturationPolicy::HalfCount).unwrap();
            prop_assert!(e.is_finite() && e >= 0.0);
            // More ones (larger S) never lowers the estimate.
            prop_assert!(e <= prev + 1e-12 * prev.abs().min(1e300));
            prev = e;
        }
    }
}
