use proptest::prelude::*;
use qis_core::special::{
    delta_admissible_set, delta_epsilon, psi, psi_complement, psi_derivative, psi_inverse,
    psi_pair, q_admissible_set,
};
use qis_oracles::psi_quadrature;

fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64))
        .collect()
}

#[test]
fn psi_matches_quadrature_on_sampled_grid() {
    for q in [1, 2, 3, 7, 15, 31, 47, 60] {
        for &theta in &log_grid(0.01, 200.0, 25) {
            let want = psi_quadrature(q, theta);
            let got = psi(q, theta).unwrap();
            assert!(
                (got - want).abs() <= 1e-10,
                "q={q} θ={theta}: {got} vs {want}"
            );
        }
    }
}

#[test]
fn psi_3_2_against_quadrature() {
    assert!((psi(3, 2.0).unwrap() - psi_quadrature(3, 2.0)).abs() < 1e-12);
}

#[test]
fn complement_is_accurate_on_the_small_side() {
    // 1 − Ψ_1(θ) = 1 − e^{−θ}, with full relative accuracy for small θ.
    let c = psi_complement(1, 1e-9).unwrap();
    assert!((c / (-(-1e-9f64).exp_m1()) - 1.0).abs() < 1e-12);
    // Ψ_60(5) is within 1e-40 of one; its complement is not zero.
    let (p0, p1) = psi_pair(60, 5.0).unwrap();
    assert_eq!(p0, 1.0);
    assert!(p1 > 0.0 && p1 < 1e-40);
}

#[test]
fn derivative_matches_central_difference() {
    let h = 1e-6;
    let fd = (psi(3, 2.0 + h).unwrap() - psi(3, 2.0 - h).unwrap()) / (2.0 * h);
    let d = psi_derivative(3, 2.0).unwrap();
    assert!(((fd - d) / d).abs() < 1e-6);
}

#[test]
fn derivative_matches_difference_of_the_small_side_on_grid() {
    for q in 1..=60 {
        for &theta in &log_grid(0.05, 150.0, 30) {
            let d = psi_derivative(q, theta).unwrap();
            assert!(d < 0.0 || d == -0.0);
            if d.abs() <= 1e-12 {
                continue;
            }
            // Difference whichever side of Ψ is small so cancellation stays
            // relative to the derivative's own scale.
            let h = 1e-5 * theta.max(1.0);
            let use_head = psi(q, theta).unwrap() < 0.5;
            let side = |t: f64| {
                let (p0, p1) = psi_pair(q, t).unwrap();
                if use_head {
                    p0
                } else {
                    -p1
                }
            };
            let fd = (side(theta + h) - side(theta - h)) / (2.0 * h);
            assert!(((fd - d) / d).abs() < 1e-6, "q={q} θ={theta}: {fd} vs {d}");
        }
    }
}

#[test]
fn inverse_of_example_regime() {
    let z = psi(37, 37.5).unwrap();
    assert!((psi_inverse(37, z).unwrap() - 37.5).abs() < 1e-8);
    assert!((psi_inverse(1, 0.5).unwrap() - std::f64::consts::LN_2).abs() < 1e-15);
}

#[test]
fn admissible_set_example() {
    let eps = delta_epsilon(2e-4, 200).unwrap();
    assert!((eps - 0.045).abs() < 1e-3);
    let set = delta_admissible_set(37.5, 2e-4, 4, 50, 60)
        .unwrap()
        .unwrap();
    assert_eq!((set.lo, set.hi), (28, 48));
    assert!(q_admissible_set(1e-9, 0.045, 16).unwrap().is_none());
}

#[test]
fn delta_admissible_set_matches_recomputed_scan() {
    let eps = 1.0 - (1e-4f64).powf(1.0 / 100.0);
    let scan: Vec<u32> = (1..=60)
        .filter(|&q| {
            let p = psi(q, 10.0).unwrap();
            p >= eps && p <= 1.0 - eps
        })
        .collect();
    let set = delta_admissible_set(10.0, 2e-4, 4, 25, 60)
        .unwrap()
        .unwrap();
    assert_eq!((set.lo, set.hi), (scan[0], *scan.last().unwrap()));
}

#[test]
fn delta_near_one_collapses_the_band() {
    // With KT = 1, ε = 1 − δ/2 approaches 1/2 from above, so the band is empty.
    let eps = delta_epsilon(1.0 - 1e-9, 1).unwrap();
    assert!(eps > 0.5 && eps < 0.5 + 1e-8);
    assert!(delta_admissible_set(0.7, 1.0 - 1e-9, 1, 1, 16)
        .unwrap()
        .is_none());
    // With more bits the same δ leaves a usable band just below 1/2.
    let eps = delta_epsilon(1.0 - 1e-9, 4).unwrap();
    assert!(eps < 0.5 && eps > 0.1);
}

proptest! {
    #[test]
    fn psi_is_a_probability(q in 1u32..80, theta in 0.0f64..400.0) {
        let p = psi(q, theta).unwrap();
        prop_assert!((0.0..=1.0).contains(&p));
    }

    #[test]
    fn psi_decreases_in_theta(q in 1u32..60, theta in 0.01f64..100.0, dt in 0.01f64..5.0) {
        let (a0, a1) = psi_pair(q, theta).unwrap();
        let (b0, b1) = psi_pair(q, theta + dt).unwrap();
        prop_assert!(b0 <= a0);
        prop_assert!(b1 >= a1);
        // Strict wherever the values are resolvable in double precision.
        if a0 > 1e-300 && a1 > 1e-300 && a0 < 0.5 {
            prop_assert!(b0 < a0);
        }
    }

    #[test]
    fn psi_increases_in_q(q in 1u32..60, theta in 0.01f64..100.0) {
        let (a0, a1) = psi_pair(q, theta).unwrap();
        let (b0, b1) = psi_pair(q + 1, theta).unwrap();
        prop_assert!(b0 >= a0);
        prop_assert!(b1 <= a1);
    }

    #[test]
    fn inverse_round_trip_on_admissible_exposures(q in 1u32..=60, z in 1e-6f64..(1.0 - 1e-6)) {
        let theta = psi_inverse(q, z).unwrap();
        prop_assert!((psi(q, theta).unwrap() - z).abs() <= 1e-12);
        let back = psi_inverse(q, psi(q, theta).unwrap()).unwrap();
        prop_assert!(((back - theta) / theta).abs() < 1e-8, "θ={} back={}", theta, back);
    }

    #[test]
    fn admissible_set_matches_exhaustive_scan(
        theta in 0.01f64..80.0,
        eps in 0.001f64..0.49,
        q_max in 1u32..=64,
    ) {
        let inside = |q: u32| {
            let p = psi(q, theta).unwrap();
            p >= eps && p <= 1.0 - eps
        };
        let scan: Vec<u32> = (1..=q_max).filter(|&q| inside(q)).collect();
        match q_admissible_set(theta, eps, q_max).unwrap() {
            None => prop_assert!(scan.is_empty()),
            Some(s) => {
                prop_assert_eq!((s.lo, s.hi), (scan[0], *scan.last().unwrap()));
                prop_assert_eq!(s.len(), scan.len());
                if s.lo > 1 {
                    prop_assert!(!inside(s.lo - 1));
                }
                if s.hi < q_max {
                    prop_assert!(!inside(s.hi + 1));
                }
            }
        }
    }

    #[test]
    fn saturation_probability_bounded_inside_delta_set(
        theta in 0.5f64..60.0,
        log_delta in -8.0f64..-1.0,
        k in 1u32..=16,
        t in 1u32..=64,
    ) {
        let delta = 10f64.powf(log_delta);
        let kt = f64::from(k * t);
        if let Some(set) = delta_admissible_set(theta, delta, k, t, 200).unwrap() {
            for q in set.lo..=set.hi {
                let (p0, p1) = psi_pair(q, theta).unwrap();
                let prob = (kt * p0.ln()).exp() + (kt * p1.ln()).exp();
                prop_assert!(prob < delta, "q={} prob={} δ={}", q, prob, delta);
            }
        }
    }
}
