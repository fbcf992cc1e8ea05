//! Normalized upper incomplete Gamma function for integer shape.
//!
//! For an integer threshold `q ≥ 1` and mean photon count `θ ≥ 0`,
//!
//! ```text
//! Ψ_q(θ) = Γ(q, θ) / Γ(q) = Σ_{k=0}^{q-1} θ^k e^{-θ} / k!
//! ```
//!
//! which is the probability that a Poisson(θ) count stays below `q`, i.e. the
//! probability that a jot with threshold `q` outputs a zero. Everything here is
//! evaluated with the finite Poisson partial sum, which is exact for integer
//! shape; the complement `1 − Ψ` is summed from the upper tail when it is the
//! small side so neither end loses relative precision.

use std::sync::OnceLock;

use crate::error::{domain, QisError, Result};

/// Above this exposure `e^{-θ}` underflows, so sums move to the log domain.
const LOG_DOMAIN_THETA: f64 = 700.0;

const LN_FACTORIAL_TABLE: usize = 2048;

/// Absolute tolerance on `Ψ` required of [`psi_inverse`].
pub const INVERSE_TOLERANCE: f64 = 1e-12;

fn ln_factorial_table() -> &'static [f64] {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut t = Vec::with_capacity(LN_FACTORIAL_TABLE);
        let mut acc = 0.0f64;
        t.push(0.0);
        for k in 1..LN_FACTORIAL_TABLE {
            acc += (k as f64).ln();
            t.push(acc);
        }
        t
    })
}

/// `ln(n!)`. Tabulated below 2048, Stirling series above.
pub fn ln_factorial(n: u64) -> f64 {
    if (n as usize) < LN_FACTORIAL_TABLE {
        return ln_factorial_table()[n as usize];
    }
    let x = n as f64 + 1.0;
    // ln Γ(x) by Stirling with three correction terms; error < 1e-15 for x > 2000.
    (x - 0.5) * x.ln() - x + 0.5 * (2.0 * std::f64::consts::PI).ln() + 1.0 / (12.0 * x)
        - 1.0 / (360.0 * x.powi(3))
        + 1.0 / (1260.0 * x.powi(5))
}

/// `ln Γ(q)` for integer `q ≥ 1`.
pub fn ln_gamma_int(q: u32) -> f64 {
    ln_factorial(u64::from(q) - 1)
}

/// Log of the Poisson pmf `θ^k e^{-θ} / k!`. Requires `θ > 0`.
pub fn ln_poisson_pmf(k: u32, theta: f64) -> f64 {
    -theta + f64::from(k) * theta.ln() - ln_factorial(u64::from(k))
}

/// A validated `(q, θ)` pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaQuery {
    pub q: u32,
    pub theta: f64,
}

impl GammaQuery {
    pub fn new(q: u32, theta: f64) -> Result<Self> {
        if q < 1 {
            return domain(format!("threshold q must be ≥ 1, got {q}"));
        }
        if !(theta >= 0.0) || !theta.is_finite() {
            return domain(format!("exposure θ must be finite and ≥ 0, got {theta}"));
        }
        Ok(Self { q, theta })
    }
}

/// Returns `(Ψ_q(θ), 1 − Ψ_q(θ))`, each accurate on its own scale.
pub fn psi_pair(q: u32, theta: f64) -> Result<(f64, f64)> {
    let GammaQuery { q, theta } = GammaQuery::new(q, theta)?;
    if theta == 0.0 {
        return Ok((1.0, 0.0));
    }
    // Far above the mean the head sum is 1 to double precision; only the tail matters.
    if f64::from(q) > theta + 40.0 * theta.sqrt() + 60.0 {
        return Ok((1.0, upper_tail(q, theta).clamp(0.0, 1.0)));
    }
    if theta > LOG_DOMAIN_THETA {
        return Ok(psi_pair_log(q, theta));
    }

    let mut term = (-theta).exp();
    let mut head = term;
    for k in 1..q {
        term *= theta / f64::from(k);
        head += term;
    }
    let head = head.min(1.0);
    if head < 0.5 {
        return Ok((head, 1.0 - head));
    }
    // Ψ ≥ 1/2: the complement is the small side, so sum the upper tail
    // directly and derive Ψ from it; both sides then move monotonically.
    let tail = upper_tail(q, theta).clamp(0.0, 0.5);
    Ok((1.0 - tail, tail))
}

/// Σ_{k ≥ q} θ^k e^{-θ}/k!, assuming the terms are past their mode (`q ≳ θ`).
fn upper_tail(q: u32, theta: f64) -> f64 {
    let mut term = ln_poisson_pmf(q, theta).exp();
    let mut sum = term;
    let mut k = f64::from(q);
    loop {
        k += 1.0;
        term *= theta / k;
        sum += term;
        if term <= sum * 1e-18 && k > theta {
            break;
        }
        if term == 0.0 {
            break;
        }
    }
    sum
}

fn psi_pair_log(q: u32, theta: f64) -> (f64, f64) {
    let logs: Vec<f64> = (0..q).map(|k| ln_poisson_pmf(k, theta)).collect();
    let m = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let s: f64 = logs.iter().map(|l| (l - m).exp()).sum();
    let head = (m + s.ln()).exp().min(1.0);
    if head < 0.5 {
        (head, 1.0 - head)
    } else {
        let tail = upper_tail(q, theta).clamp(0.0, 0.5);
        (1.0 - tail, tail)
    }
}

/// `Ψ_q(θ)`, the probability that a Poisson(θ) count is below `q`.
pub fn psi(q: u32, theta: f64) -> Result<f64> {
    psi_pair(q, theta).map(|(p, _)| p)
}

/// `1 − Ψ_q(θ)`, the probability that a jot with threshold `q` fires.
pub fn psi_complement(q: u32, theta: f64) -> Result<f64> {
    psi_pair(q, theta).map(|(_, c)| c)
}

/// `dΨ_q/dθ = −θ^{q−1} e^{−θ} / Γ(q)`, evaluated in the log domain.
pub fn psi_derivative(q: u32, theta: f64) -> Result<f64> {
    let GammaQuery { q, theta } = GammaQuery::new(q, theta)?;
    if theta <= 0.0 {
        return domain(format!("derivative needs θ > 0, got {theta}"));
    }
    Ok(-ln_poisson_pmf(q - 1, theta).exp())
}

/// Solves `Ψ_q(θ) = z` for `θ > 0`.
///
/// The root is bracketed starting from `[0, q + 10√q + 50]` (the upper end
/// doubles until `Ψ` drops below `z`) and then refined by Newton steps that
/// fall back to bisection whenever they leave the bracket. Iteration stops once
/// the residual reaches rounding level or `θ` stops moving; the result is checked against
/// [`INVERSE_TOLERANCE`] on `Ψ`.
pub fn psi_inverse(q: u32, z: f64) -> Result<f64> {
    if q < 1 {
        return domain(format!("threshold q must be ≥ 1, got {q}"));
    }
    if !(z > 0.0 && z < 1.0) {
        return domain(format!("psi_inverse needs z in (0, 1), got {z}"));
    }

    let qf = f64::from(q);
    let mut lo = 0.0f64;
    let mut hi = qf + 10.0 * qf.sqrt() + 50.0;
    let mut expansions = 0;
    while psi(q, hi)? > z {
        lo = hi;
        hi *= 2.0;
        expansions += 1;
        if expansions > 64 {
            return Err(QisError::Convergence { q, z });
        }
    }

    // Ψ_q(q) ≈ 1/2, a good first guess for mid-range targets.
    let mut theta = if qf > lo && qf < hi {
        qf
    } else {
        0.5 * (lo + hi)
    };
    for _ in 0..400 {
        let f = psi(q, theta)? - z;
        // Ψ carries a relative rounding error of a few ulps; stop there.
        if f.abs() <= 4.0 * f64::EPSILON * z {
            return Ok(theta);
        }
        if f > 0.0 {
            lo = theta;
        } else {
            hi = theta;
        }
        let d = psi_derivative(q, theta)?;
        let mut next = if d < 0.0 { theta - f / d } else { f64::NAN };
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        let scale = theta.abs().max(f64::MIN_POSITIVE);
        if (next - theta).abs() <= 4.0 * f64::EPSILON * scale || hi - lo <= 2.0 * f64::EPSILON * hi
        {
            theta = next;
            break;
        }
        theta = next;
    }

    let residual = (psi(q, theta)? - z).abs();
    if residual <= INVERSE_TOLERANCE {
        Ok(theta)
    } else {
        Err(QisError::Convergence { q, z })
    }
}

/// A maximal run of thresholds `lo..=hi` with `ε ≤ Ψ_q(θ) ≤ 1 − ε`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdmissibleSet {
    pub lo: u32,
    pub hi: u32,
    pub epsilon: f64,
}

impl AdmissibleSet {
    pub fn contains(&self, q: u32) -> bool {
        (self.lo..=self.hi).contains(&q)
    }

    pub fn len(&self) -> usize {
        (self.hi - self.lo + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Thresholds in `[1, q_max]` whose `Ψ_q(θ)` lies in `[ε, 1 − ε]`.
///
/// `Ψ_q(θ)` is increasing in `q`, so the set is an interval found by two
/// binary searches. `Ok(None)` means no threshold qualifies (very dark or
/// very bright exposure).
pub fn q_admissible_set(theta: f64, epsilon: f64, q_max: u32) -> Result<Option<AdmissibleSet>> {
    if !(epsilon > 0.0 && epsilon < 0.5) {
        return domain(format!("ε must lie in (0, 1/2), got {epsilon}"));
    }
    if q_max < 1 {
        return domain("q_max must be ≥ 1");
    }
    GammaQuery::new(1, theta)?;

    // Smallest q with Ψ_q ≥ ε.
    let lo = first_true(1, q_max, |q| Ok(psi(q, theta)? >= epsilon))?;
    // Smallest q with Ψ_q > 1 − ε; everything below it satisfies the upper side.
    let past_hi = first_true(1, q_max, |q| Ok(psi(q, theta)? > 1.0 - epsilon))?;
    let hi = match past_hi {
        Some(1) => return Ok(None),
        Some(p) => p - 1,
        None => q_max,
    };
    match lo {
        Some(lo) if lo <= hi => Ok(Some(AdmissibleSet { lo, hi, epsilon })),
        _ => Ok(None),
    }
}

/// Binary search for the first `q` in `[a, b]` where a monotone predicate holds.
fn first_true(a: u32, b: u32, mut pred: impl FnMut(u32) -> Result<bool>) -> Result<Option<u32>> {
    if !pred(b)? {
        return Ok(None);
    }
    let (mut lo, mut hi) = (a, b);
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if pred(mid)? {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    Ok(Some(lo))
}

/// `ε = 1 − (δ/2)^{1/(KT)}`: the band that keeps a `KT`-bit block away from all
/// zeros or all ones with probability at least `1 − δ`.
pub fn delta_epsilon(delta: f64, bits_per_block: u64) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) {
        return domain(format!("δ must lie in (0, 1), got {delta}"));
    }
    if bits_per_block == 0 {
        return domain("KT must be ≥ 1");
    }
    Ok(-(((delta / 2.0).ln() / bits_per_block as f64).exp_m1()))
}

/// The δ-admissible threshold set for a block of `k·t` bits.
///
/// When `ε ≥ 1/2` (tiny blocks) the band is empty and `Ok(None)` is returned.
pub fn delta_admissible_set(
    theta: f64,
    delta: f64,
    k: u32,
    t: u32,
    q_max: u32,
) -> Result<Option<AdmissibleSet>> {
    let epsilon = delta_epsilon(delta, u64::from(k) * u64::from(t))?;
    if epsilon >= 0.5 {
        GammaQuery::new(1, theta)?;
        return Ok(None);
    }
    q_admissible_set(theta, epsilon, q_max)
}
