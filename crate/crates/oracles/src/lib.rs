//! Reference computations that share no code with `qis-core`.
//!
//! Each routine takes the slow, direct route to a quantity the library
//! computes some other way: adaptive quadrature of the defining integral of
//! `Ψ_q(θ)`, a dense synthesis matrix built from the truncated-power form of
//! the B-spline, and a finite-difference expected curvature for Fisher
//! information.

/// Gauss–Kronrod 7/15 nodes on `[-1, 1]` (non-negative half).
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];

/// Gauss weights of the 7-point rule at Kronrod nodes 1, 3, 5 and the center.
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// One Gauss–Kronrod 7/15 panel: `(integral, error estimate)`.
///
/// The error estimate follows the QUADPACK rescaling of `|K15 − G7|` and is
/// floored at the rounding level of the panel's absolute integral.
fn gk15(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut fv = [0.0; 15];
    fv[7] = f(c);
    for i in 0..7 {
        let x = h * XGK[i];
        fv[i] = f(c - x);
        fv[14 - i] = f(c + x);
    }
    let weight = |i: usize| WGK[i.min(14 - i)];
    let k: f64 = (0..15).map(|i| weight(i) * fv[i]).sum();
    let g: f64 = WG[3] * fv[7]
        + (0..3)
            .map(|j| WG[j] * (fv[2 * j + 1] + fv[13 - 2 * j]))
            .sum::<f64>();
    let mean = 0.5 * k;
    let resabs: f64 = (0..15).map(|i| weight(i) * fv[i].abs()).sum::<f64>() * h.abs();
    let resasc: f64 = (0..15)
        .map(|i| weight(i) * (fv[i] - mean).abs())
        .sum::<f64>()
        * h.abs();
    let mut err = ((k - g) * h).abs();
    if resasc != 0.0 && err != 0.0 {
        err = resasc * (200.0 * err / resasc).powf(1.5).min(1.0);
    }
    err = err.max(50.0 * f64::EPSILON * resabs);
    (k * h, err)
}

/// Adaptive Gauss–Kronrod quadrature of `f` over `[a, b]` to absolute `tol`.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn rec(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
        let (v, err) = gk15(f, a, b);
        // The estimate never drops below rounding level; accept at that floor.
        if err <= tol || err <= 100.0 * f64::EPSILON * v.abs() || depth == 0 {
            return v;
        }
        let m = 0.5 * (a + b);
        rec(f, a, m, 0.5 * tol, depth - 1) + rec(f, m, b, 0.5 * tol, depth - 1)
    }
    // Start from a uniform split so narrow peaks are never straddled by a
    // single coarse panel.
    const PANELS: usize = 16;
    let w = (b - a) / PANELS as f64;
    (0..PANELS)
        .map(|i| {
            rec(
                &f,
                a + i as f64 * w,
                a + (i + 1) as f64 * w,
                tol / PANELS as f64,
                30,
            )
        })
        .sum()
}

/// `ln Γ(q) = Σ_{k<q} ln k` by direct summation.
pub fn ln_gamma_sum(q: u32) -> f64 {
    (1..q).map(|k| f64::from(k).ln()).sum()
}

/// `Ψ_q(θ) = Γ(q)⁻¹ ∫_θ^∞ t^{q−1} e^{−t} dt` by adaptive quadrature.
///
/// The integral is taken over whichever side of `θ` holds less mass, with the
/// integrand evaluated as `exp((q−1) ln t − t − ln Γ(q))`. The upper tail is
/// truncated where the integrand is below `1e-40`.
pub fn psi_quadrature(q: u32, theta: f64) -> f64 {
    assert!(q >= 1 && theta >= 0.0);
    let lg = ln_gamma_sum(q);
    let qm1 = f64::from(q - 1);
    let f = move |t: f64| {
        if t <= 0.0 {
            return if q == 1 { 1.0 } else { 0.0 };
        }
        (qm1 * t.ln() - t - lg).exp()
    };
    let tol = 1e-15;
    if theta >= qm1 {
        let qf = f64::from(q);
        let end = theta.max(qf) + 40.0 * qf.sqrt() + 120.0;
        integrate(f, theta, end, tol)
    } else {
        1.0 - integrate(f, 0.0, theta, tol)
    }
}

/// Centered cardinal B-spline of degree `n` from its truncated-power form
/// `(1/n!) Σ_k (−1)^k C(n+1, k) (x + (n+1)/2 − k)_+^n`.
pub fn bspline_truncated_power(n: u32, x: f64) -> f64 {
    let mut fact = 1.0;
    for i in 2..=n {
        fact *= f64::from(i);
    }
    let half = f64::from(n + 1) / 2.0;
    let mut sum = 0.0;
    let mut binom = 1.0;
    for k in 0..=n + 1 {
        let u = x + half - f64::from(k);
        if u > 0.0 {
            let p = if n == 0 { 1.0 } else { u.powi(n as i32) };
            sum += if k % 2 == 0 { binom * p } else { -binom * p };
        }
        binom = binom * f64::from(n + 1 - k) / f64::from(k + 1);
    }
    sum / fact
}

/// Dense 1-D synthesis matrix `W` (jots × pixels) for a B-spline of degree
/// `n` with `factor` jots per pixel.
///
/// Jot `j` sits at pixel coordinate `(j + ½)/factor − ½`; the coefficient grid
/// is extended by clamping to its edge values, and every row is normalized to
/// sum to one.
pub fn dense_bspline_matrix(n: u32, pixels: usize, factor: usize) -> Vec<Vec<f64>> {
    let jots = pixels * factor;
    let reach = n as i64 + 2;
    (0..jots)
        .map(|j| {
            let u = (j as f64 + 0.5) / factor as f64 - 0.5;
            let mut row = vec![0.0; pixels];
            for i in -reach..pixels as i64 + reach {
                let idx = i.clamp(0, pixels as i64 - 1) as usize;
                row[idx] += bspline_truncated_power(n, u - i as f64);
            }
            let s: f64 = row.iter().sum();
            row.iter_mut().for_each(|v| *v /= s);
            row
        })
        .collect()
}

/// Dense 1-D boxcar matrix: jot `j` copies pixel `j / factor`.
pub fn dense_boxcar_matrix(pixels: usize, factor: usize) -> Vec<Vec<f64>> {
    (0..pixels * factor)
        .map(|j| {
            let mut row = vec![0.0; pixels];
            row[j / factor] = 1.0;
            row
        })
        .collect()
}

/// Expected curvature `−Σ_b p_b(x) ∂²/∂x² ln p_b(x)` of a Bernoulli model.
///
/// `probs(x)` returns `(p_0, p_1)`, each accurate on its own. The second derivatives come from central
/// differences at step `h` and `h/2`, combined by Richardson extrapolation.
pub fn bernoulli_expected_curvature(probs: impl Fn(f64) -> (f64, f64), x: f64, h: f64) -> f64 {
    // Log of each outcome, taken through the complement when it is the
    // larger one so its tiny variation is not lost to rounding.
    let logs = |x: f64| {
        let (p0, p1) = probs(x);
        if p0 > p1 {
            ((-p1).ln_1p(), p1.ln())
        } else {
            (p0.ln(), (-p0).ln_1p())
        }
    };
    let second = |h: f64, pick: &dyn Fn((f64, f64)) -> f64| {
        let lm = pick(logs(x - h));
        let l0 = pick(logs(x));
        let lp = pick(logs(x + h));
        (lp - 2.0 * l0 + lm) / (h * h)
    };
    let d2 = |pick: &dyn Fn((f64, f64)) -> f64| {
        let a = second(h, pick);
        let b = second(0.5 * h, pick);
        (4.0 * b - a) / 3.0
    };
    let (p0, p1) = probs(x);
    -(p0 * d2(&|p: (f64, f64)| p.0) + p1 * d2(&|p: (f64, f64)| p.1))
}

/// Mean squared error by the textbook two-pass formula.
pub fn mse_two_pass(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let n = diffs.len() as f64;
    let mean = diffs.iter().sum::<f64>() / n;
    let var = diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / n;
    var + mean * mean
}
