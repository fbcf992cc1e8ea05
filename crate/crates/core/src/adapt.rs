//! Threshold update schemes: bisection, a Markov-chain baseline, conditional
//! reset and static checkerboard maps.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use crate::analytics::{oracle_threshold, CheckerboardDesign};
use crate::error::{QisError, Result};
use crate::forward::{
    self, expose, ExposureField, IntensityImage, SensorConfig, SynthesisKernel, ThresholdMap,
};
use crate::par;
use crate::reconstruct::{self, ReconstructionResult};
use crate::rng::{self, Stream};
use crate::special;

/// Bracket of one bisection block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BisectionState {
    pub q_a: u32,
    pub q_b: u32,
    pub q_m: u32,
    pub converged: bool,
    pub frames_consumed: u32,
}

/// Result of feeding one frame to a block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepOutcome {
    /// The bracket moved; another frame is needed.
    Moved,
    /// This frame finished the search.
    Converged,
    /// The block had already converged; the frame was ignored.
    AlreadyConverged,
}

fn midpoint(a: u32, b: u32) -> u32 {
    (a + b).div_ceil(2)
}

impl BisectionState {
    /// Bracket `[1, q_max]`.
    pub fn new(q_max: u32) -> Self {
        let q_max = q_max.max(1);
        Self {
            q_a: 1,
            q_b: q_max,
            q_m: midpoint(1, q_max),
            converged: q_max <= 2,
            frames_consumed: 0,
        }
    }

    /// Current threshold.
    pub fn q(&self) -> u32 {
        self.q_m
    }

    /// Updates the bracket from the bit density observed at `q_m`.
    ///
    /// Too many ones means the threshold is too low, so the lower end moves
    /// up. The search ends when the density is within `tol` of one half or
    /// the bracket cannot shrink further.
    pub fn step(&mut self, density: f64, tol: f64) -> StepOutcome {
        if self.converged {
            return StepOutcome::AlreadyConverged;
        }
        self.frames_consumed += 1;
        if (density - 0.5).abs() < tol {
            self.converged = true;
            return StepOutcome::Converged;
        }
        if density > 0.5 {
            self.q_a = self.q_m;
        } else {
            self.q_b = self.q_m;
        }
        self.q_m = midpoint(self.q_a, self.q_b);
        if self.q_b - self.q_a <= 1 {
            self.converged = true;
            return StepOutcome::Converged;
        }
        StepOutcome::Moved
    }
}

/// Functional form of [`BisectionState::step`] taking raw counts.
pub fn bisection_step(
    state: BisectionState,
    ones: u64,
    bits: u64,
    tol: f64,
) -> (BisectionState, StepOutcome) {
    let mut s = state;
    let outcome = s.step(ones as f64 / bits.max(1) as f64, tol);
    (s, outcome)
}

/// Default tolerance on the bit density: `1/√n` for `n` bits per block frame,
/// floored at 0.02.
pub fn default_tolerance(bits_per_frame: usize) -> f64 {
    (1.0 / (bits_per_frame.max(1) as f64).sqrt()).max(0.02)
}

/// One row of the adaptation trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: u32,
    pub block_id: usize,
    pub q_a: u32,
    pub q_b: u32,
    /// Threshold used for this iteration's frame.
    pub q_m: u32,
    pub bit_density: f64,
    pub converged: bool,
}

/// Outcome of a bisection run.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptationReport {
    /// Final thresholds.
    pub map: ThresholdMap,
    /// Oracle thresholds of the block-mean ground truth.
    pub oracle_map: ThresholdMap,
    pub states: Vec<BisectionState>,
    pub trace: Vec<TraceRow>,
    /// Mean squared threshold error to the oracle map after each iteration.
    pub mse: Vec<f64>,
    pub adaptation_frames: u32,
    pub reconstruction_frames: u32,
}

/// Block-mean oracle thresholds for a block tiling of the jot grid.
pub fn oracle_block_map(
    image: &IntensityImage,
    config: &SensorConfig,
    block_w: usize,
    block_h: usize,
) -> Result<ThresholdMap> {
    oracle_block_map_values(
        image.width(),
        image.height(),
        image.pixels(),
        config,
        block_w,
        block_h,
    )
}

/// [`oracle_block_map`] for any nonnegative pixel field.
pub fn oracle_block_map_values(
    width: usize,
    height: usize,
    values: &[f64],
    config: &SensorConfig,
    block_w: usize,
    block_h: usize,
) -> Result<ThresholdMap> {
    forward::check_dims(width, height, values.len())?;
    let (kx, ky) = (config.kx as usize, config.ky as usize);
    ThresholdMap::from_fn(width * kx, height * ky, block_w, block_h, |bx, by| {
        let mut sum = 0.0;
        for jy in by * block_h..(by + 1) * block_h {
            for jx in bx * block_w..(bx + 1) * block_w {
                sum += values[(jy / ky) * width + jx / kx];
            }
        }
        oracle_threshold(sum / (block_w * block_h) as f64, config).q
    })
}

fn map_mse(a: &[u32], b: &[u32]) -> f64 {
    let s: f64 = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| (f64::from(x) - f64::from(y)).powi(2))
        .sum();
    s / a.len() as f64
}

/// Runs the bisection search with one fresh frame per iteration.
///
/// Frames are numbered from 0; iteration `i` consumes frame `i`. Every block
/// is updated from the same frame. The run ends when all blocks have
/// converged or `adapt_frames` is spent; frames left over from the budget go
/// to reconstruction.
pub fn run_bisection(
    image: &IntensityImage,
    config: &SensorConfig,
    kernel: SynthesisKernel,
    block: (usize, usize),
    adapt_frames: u32,
    tol: Option<f64>,
) -> Result<AdaptationReport> {
    let theta = expose(image, config, kernel)?;
    run_bisection_on(&theta, image.pixels(), config, block, adapt_frames, tol)
}

/// [`run_bisection`] on a precomputed exposure field. `truth` holds the
/// per-pixel values used only for the oracle map.
pub fn run_bisection_on(
    theta: &ExposureField,
    truth: &[f64],
    config: &SensorConfig,
    block: (usize, usize),
    adapt_frames: u32,
    tol: Option<f64>,
) -> Result<AdaptationReport> {
    if adapt_frames == 0 {
        return Err(QisError::Config(
            "bisection needs at least one adaptation frame".into(),
        ));
    }
    if adapt_frames > config.frames {
        return Err(QisError::Config(format!(
            "adaptation budget {adapt_frames} exceeds the {} available frames",
            config.frames
        )));
    }
    let (bw, bh) = block;
    let (kx, ky) = (config.kx as usize, config.ky as usize);
    let (w, h) = (theta.jot_width() / kx, theta.jot_height() / ky);
    let oracle_map = oracle_block_map_values(w, h, truth, config, bw, bh)?;
    let mut map = ThresholdMap::from_fn(theta.jot_width(), theta.jot_height(), bw, bh, |_, _| 1)?;
    let n_blocks = map.q_values().len();
    let tol = tol.unwrap_or_else(|| default_tolerance(bw * bh));
    let mut states = vec![BisectionState::new(config.q_max); n_blocks];
    let mut trace = Vec::new();
    let mut mse = Vec::new();
    let mut used = 0u32;

    while used < adapt_frames && states.iter().any(|s| !s.converged) {
        map.q_values_mut()
            .iter_mut()
            .zip(&states)
            .for_each(|(q, s)| *q = s.q());
        let frame = forward::sample_frames(theta, &map, used..used + 1, config.seed)?;
        let plane = frame.plane(0);
        let ones: Vec<u64> = par::map_range(n_blocks, |b| {
            map.block_jots(b).map(|m| u64::from(plane[m])).sum()
        });
        used += 1;
        for (b, st) in states.iter_mut().enumerate() {
            if st.converged {
                continue;
            }
            let q_used = st.q_m;
            let d = ones[b] as f64 / (bw * bh) as f64;
            st.step(d, tol);
            trace.push(TraceRow {
                iteration: used,
                block_id: b,
                q_a: st.q_a,
                q_b: st.q_b,
                q_m: q_used,
                bit_density: d,
                converged: st.converged,
            });
        }
        let current: Vec<u32> = states.iter().map(BisectionState::q).collect();
        mse.push(map_mse(&current, oracle_map.q_values()));
    }

    map.q_values_mut()
        .iter_mut()
        .zip(&states)
        .for_each(|(q, s)| *q = s.q());
    Ok(AdaptationReport {
        map,
        oracle_map,
        states,
        trace,
        mse,
        adaptation_frames: used,
        reconstruction_frames: config.frames - used,
    })
}

/// Adapts, then reconstructs from the frames that follow the adaptation.
pub fn adapt_and_reconstruct(
    image: &IntensityImage,
    config: &SensorConfig,
    kernel: SynthesisKernel,
    block: (usize, usize),
    adapt_frames: u32,
    tol: Option<f64>,
) -> Result<(AdaptationReport, ReconstructionResult)> {
    let theta = expose(image, config, kernel)?;
    let report = run_bisection_on(&theta, image.pixels(), config, block, adapt_frames, tol)?;
    if report.reconstruction_frames == 0 {
        return Err(QisError::Config("no frames left for reconstruction".into()));
    }
    let start = report.adaptation_frames;
    let bits = forward::sample_frames(&theta, &report.map, start..config.frames, config.seed)?;
    let rec_cfg = config.with_frames(report.reconstruction_frames)?;
    let rec = reconstruct::mle_reconstruct(&bits, &report.map, &rec_cfg, 1.0)?
        .with_truth(image.pixels())?;
    Ok((report, rec))
}

/// Parameters of the Markov-chain baseline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarkovParams {
    /// Sub-state bits; the chain has `2^levels` sub-states per threshold.
    pub levels: u32,
    /// Probability of staying put after each bit.
    pub beta: f64,
}

impl Default for MarkovParams {
    fn default() -> Self {
        Self {
            levels: 4,
            beta: 0.25,
        }
    }
}

/// Threshold and sub-state of one chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarkovState {
    pub q: u32,
    pub s: u32,
    pub q_max: u32,
    pub params: MarkovParams,
}

impl MarkovState {
    pub fn new(q: u32, q_max: u32, params: MarkovParams) -> Result<Self> {
        if !(params.beta >= 0.0 && params.beta <= 1.0) {
            return Err(QisError::Config(format!(
                "β must lie in [0, 1], got {}",
                params.beta
            )));
        }
        if params.levels == 0 || params.levels > 16 {
            return Err(QisError::Config("Markov levels must lie in [1, 16]".into()));
        }
        if q < 1 || q > q_max {
            return Err(QisError::Domain(format!(
                "threshold {q} outside [1, {q_max}]"
            )));
        }
        Ok(Self {
            q,
            s: 1 << (params.levels - 1),
            q_max,
            params,
        })
    }
}

/// One chain transition. `u` is a uniform draw on `[0, 1)`; the sub-state
/// moves only when `u ≥ β`.
pub fn markov_step(state: MarkovState, bit: u8, u: f64) -> MarkovState {
    let mut st = state;
    if u < st.params.beta {
        return st;
    }
    let top = (1u32 << st.params.levels) - 1;
    let mid = 1u32 << (st.params.levels - 1);
    if bit == 1 {
        if st.s == top {
            if st.q < st.q_max {
                st.q += 1;
                st.s = mid;
            }
        } else {
            st.s += 1;
        }
    } else if st.s == 0 {
        if st.q > 1 {
            st.q -= 1;
            st.s = mid;
        }
    } else {
        st.s -= 1;
    }
    st
}

/// Trajectory of a Markov-chain run.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovReport {
    pub map: ThresholdMap,
    pub states: Vec<MarkovState>,
    /// Thresholds after each major iteration.
    pub history: Vec<Vec<u32>>,
    /// Mean squared error to the oracle map after each major iteration.
    pub mse: Vec<f64>,
}

/// Runs one chain per block. Major iteration `i` uses frame `i`: the block's
/// jots are visited in raster order and each produces one bit at the chain's
/// current threshold.
pub fn run_markov(
    image: &IntensityImage,
    config: &SensorConfig,
    kernel: SynthesisKernel,
    block: (usize, usize),
    major_iterations: u32,
    q_start: u32,
    params: MarkovParams,
) -> Result<MarkovReport> {
    let theta = expose(image, config, kernel)?;
    let (bw, bh) = block;
    let oracle = oracle_block_map(image, config, bw, bh)?;
    let mut map = ThresholdMap::from_fn(theta.jot_width(), theta.jot_height(), bw, bh, |_, _| {
        q_start
    })?;
    let init = MarkovState::new(q_start, config.q_max, params)?;
    let mut states = vec![init; map.q_values().len()];
    let mut history = Vec::new();
    let mut mse = Vec::new();
    let th = theta.values();
    let seed = config.seed;
    for i in 0..major_iterations as usize {
        let jots: Vec<Vec<usize>> = (0..states.len())
            .map(|b| map.block_jots(b).collect())
            .collect();
        states = par::map_range(states.len(), |b| {
            let mut st = states[b];
            for &m in &jots[b] {
                let p0 = special::psi(st.q, th[m]).unwrap_or(1.0);
                let bit = forward::draw_bit(p0, seed, m, i);
                let u = rng::uniform(seed, Stream::Markov, m as u64, i as u64);
                st = markov_step(st, bit, u);
            }
            st
        });
        let qs: Vec<u32> = states.iter().map(|s| s.q).collect();
        mse.push(map_mse(&qs, oracle.q_values()));
        history.push(qs);
    }
    map.q_values_mut()
        .iter_mut()
        .zip(&states)
        .for_each(|(q, s)| *q = s.q);
    Ok(MarkovReport {
        map,
        states,
        history,
        mse,
    })
}

/// Order of the cyclic conditional-reset threshold sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ResetDirection {
    Ascending,
    Descending,
}

impl std::str::FromStr for ResetDirection {
    type Err = QisError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ascending" | "asc" => Ok(ResetDirection::Ascending),
            "descending" | "desc" => Ok(ResetDirection::Descending),
            other => Err(QisError::Config(format!(
                "unknown reset direction '{other}'"
            ))),
        }
    }
}

/// Threshold used at frame `t`: `1..=q_max` cycled, or its reverse.
pub fn reset_threshold(direction: ResetDirection, t: u32, q_max: u32) -> u32 {
    let r = t % q_max;
    match direction {
        ResetDirection::Ascending => 1 + r,
        ResetDirection::Descending => q_max - r,
    }
}

/// How conditional-reset firings become an intensity estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ResetEstimator {
    /// Each firing at threshold `q_t` accounts for `q_t` photons; the per-jot
    /// exposure estimate is `Σ_t q_t·d_t / T`.
    Integration,
    /// Maximum-likelihood exposure under the accumulate-and-reset model.
    Likelihood,
}

impl std::str::FromStr for ResetEstimator {
    type Err = QisError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "integration" => Ok(ResetEstimator::Integration),
            "likelihood" => Ok(ResetEstimator::Likelihood),
            other => Err(QisError::Config(format!(
                "unknown reset estimator '{other}'"
            ))),
        }
    }
}

const RESET_GRID: usize = 160;
const RESET_GRID_LO: f64 = 1e-4;

/// Exact log-likelihood of a jot's firing sequence under conditional reset,
/// tabulated on a fixed exposure grid.
///
/// The accumulator state is tracked with a forward recursion over its
/// photon count, so the likelihood accounts for the photons carried over
/// between frames and the excess discarded at each reset. Sequences are
/// cached, since a scene produces few distinct ones.
#[derive(Debug)]
pub struct ResetLikelihood {
    thresholds: Vec<u32>,
    q_max: usize,
    /// `grid[0] = 0`; the rest is log-spaced.
    grid: Vec<f64>,
    /// `pmf[g·q_max + n] = P(N = n)`.
    pmf: Vec<f64>,
    /// `tail[g·(q_max+1) + k] = P(N ≥ k)`.
    tail: Vec<f64>,
    cache: Mutex<HashMap<Vec<u64>, Arc<[f64]>>>,
}

impl ResetLikelihood {
    pub fn new(direction: ResetDirection, frames: u32, q_max: u32) -> Result<Self> {
        if frames == 0 || q_max == 0 {
            return Err(QisError::Config(
                "conditional reset needs frames and q_max ≥ 1".into(),
            ));
        }
        let thresholds: Vec<u32> = (0..frames)
            .map(|t| reset_threshold(direction, t, q_max))
            .collect();
        let hi = 4.0 * f64::from(q_max) + 16.0;
        let step = (hi / RESET_GRID_LO).ln() / (RESET_GRID - 2) as f64;
        let grid: Vec<f64> = std::iter::once(0.0)
            .chain((0..RESET_GRID - 1).map(|i| RESET_GRID_LO * (step * i as f64).exp()))
            .collect();
        let qm = q_max as usize;
        let mut pmf = vec![0.0; RESET_GRID * qm];
        let mut tail = vec![0.0; RESET_GRID * (qm + 1)];
        for (g, &theta) in grid.iter().enumerate() {
            tail[g * (qm + 1)] = 1.0;
            if theta == 0.0 {
                pmf[g * qm] = 1.0;
                continue;
            }
            for n in 0..qm {
                pmf[g * qm + n] = special::ln_poisson_pmf(n as u32, theta).exp();
            }
            for k in 1..=qm {
                tail[g * (qm + 1) + k] = special::psi_complement(k as u32, theta)?;
            }
        }
        Ok(ResetLikelihood {
            thresholds,
            q_max: qm,
            grid,
            pmf,
            tail,
            cache: Mutex::new(HashMap::new()),
        })
    }

    /// Process-wide instance for a threshold schedule.
    pub fn shared(direction: ResetDirection, frames: u32, q_max: u32) -> Result<Arc<Self>> {
        type Table = Mutex<HashMap<(ResetDirection, u32, u32), Arc<ResetLikelihood>>>;
        static TABLES: OnceLock<Table> = OnceLock::new();
        let tables = TABLES.get_or_init(Default::default);
        let key = (direction, frames, q_max);
        if let Some(t) = tables.lock().unwrap_or_else(|e| e.into_inner()).get(&key) {
            return Ok(Arc::clone(t));
        }
        let built = Arc::new(Self::new(direction, frames, q_max)?);
        let mut guard = tables.lock().unwrap_or_else(|e| e.into_inner());
        Ok(Arc::clone(guard.entry(key).or_insert(built)))
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    /// Log-likelihood of a firing sequence at every grid exposure. Bit `t`
    /// of the packed words is the firing in frame `t`.
    pub fn log_likelihood(&self, fires: &[u64]) -> Arc<[f64]> {
        if let Some(v) = self
            .cache
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .get(fires)
        {
            return Arc::clone(v);
        }
        let v: Arc<[f64]> = (0..self.grid.len())
            .map(|g| self.sequence_ll(g, fires))
            .collect();
        self.cache
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .insert(fires.to_vec(), Arc::clone(&v));
        v
    }

    fn sequence_ll(&self, g: usize, fires: &[u64]) -> f64 {
        let qm = self.q_max;
        let pmf = &self.pmf[g * qm..(g + 1) * qm];
        let tail = &self.tail[g * (qm + 1)..(g + 1) * (qm + 1)];
        let mut p = vec![0.0; qm];
        let mut next = vec![0.0; qm];
        p[0] = 1.0;
        let mut ll = 0.0;
        for (t, &q) in self.thresholds.iter().enumerate() {
            let q = q as usize;
            let fired = fires[t / 64] >> (t % 64) & 1 == 1;
            next.iter_mut().for_each(|v| *v = 0.0);
            if fired {
                next[0] = p
                    .iter()
                    .enumerate()
                    .map(|(i, &pi)| pi * tail[q.saturating_sub(i)])
                    .sum();
            } else {
                for (i, &pi) in p.iter().enumerate().take(q).filter(|(_, &pi)| pi > 0.0) {
                    for j in i..q {
                        next[j] += pi * pmf[j - i];
                    }
                }
            }
            let mass: f64 = next.iter().sum();
            if mass <= 0.0 {
                return f64::NEG_INFINITY;
            }
            ll += mass.ln();
            next.iter_mut().for_each(|v| *v /= mass);
            std::mem::swap(&mut p, &mut next);
        }
        ll
    }

    /// Grid maximiser of a summed log-likelihood, refined by a parabola in
    /// `ln θ` when the peak is interior to the log-spaced part.
    pub fn argmax(&self, total: &[f64]) -> f64 {
        let (g, _) = total
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |(bg, bv), (g, &v)| {
                if v > bv {
                    (g, v)
                } else {
                    (bg, bv)
                }
            });
        if g < 2 || g + 1 >= total.len() {
            return self.grid[g];
        }
        let (a, b, c) = (total[g - 1], total[g], total[g + 1]);
        let curv = a - 2.0 * b + c;
        let shift = if curv < 0.0 {
            (0.5 * (a - c) / curv).clamp(-0.5, 0.5)
        } else {
            0.0
        };
        let dlog = (self.grid[g + 1] / self.grid[g]).ln();
        self.grid[g] * (shift * dlog).exp()
    }
}

/// Conditional-reset acquisition.
///
/// Each jot keeps a photon accumulator that carries over between frames; it
/// fires and resets when the accumulator reaches the frame's threshold.
/// Returns the firing sequences packed per jot, `words` u64 per jot.
fn conditional_reset_fires(
    theta: &ExposureField,
    config: &SensorConfig,
    direction: ResetDirection,
) -> Vec<Vec<u64>> {
    let th = theta.values();
    let words = (config.frames as usize).div_ceil(64);
    par::map_range(th.len(), |m| {
        let mut seq = vec![0u64; words];
        let mut acc = 0u64;
        for t in 0..config.frames {
            acc += u64::from(forward::photon_count(th[m], config.seed, m, t as usize));
            if acc >= u64::from(reset_threshold(direction, t, config.q_max)) {
                acc = 0;
                seq[t as usize / 64] |= 1 << (t % 64);
            }
        }
        seq
    })
}

/// Conditional-reset acquisition reconstructed by digital integration.
pub fn conditional_reset_reconstruct(
    image: &IntensityImage,
    config: &SensorConfig,
    kernel: SynthesisKernel,
    direction: ResetDirection,
    clip: f64,
) -> Result<ReconstructionResult> {
    conditional_reset_reconstruct_with(
        image,
        config,
        kernel,
        direction,
        clip,
        ResetEstimator::Integration,
    )
}

/// Conditional-reset acquisition with a chosen estimator; `ĉ = K/(ατ)·θ̂`.
pub fn conditional_reset_reconstruct_with(
    image: &IntensityImage,
    config: &SensorConfig,
    kernel: SynthesisKernel,
    direction: ResetDirection,
    clip: f64,
    estimator: ResetEstimator,
) -> Result<ReconstructionResult> {
    let theta = expose(image, config, kernel)?;
    let fires = conditional_reset_fires(&theta, config, direction);
    let (w, h) = (image.width(), image.height());
    let (kx, ky) = (config.kx as usize, config.ky as usize);
    let jw = theta.jot_width();
    let table = match estimator {
        ResetEstimator::Likelihood => Some(ResetLikelihood::shared(
            direction,
            config.frames,
            config.q_max,
        )?),
        ResetEstimator::Integration => None,
    };
    let scale = f64::from(config.k()) / (config.alpha * config.tau);
    let per_pixel_bits = config.bits_per_pixel();
    let pixels = par::map_range(w * h, |p| {
        let (px, py) = (p % w, p / w);
        let jots = (py * ky..(py + 1) * ky)
            .flat_map(|jy| (px * kx..(px + 1) * kx).map(move |jx| jy * jw + jx));
        let mut fired = 0u64;
        let mut counted = 0.0;
        let mut total = table.as_ref().map(|t| vec![0.0; t.grid().len()]);
        for m in jots {
            for t in 0..config.frames {
                if fires[m][t as usize / 64] >> (t % 64) & 1 == 1 {
                    fired += 1;
                    counted += f64::from(reset_threshold(direction, t, config.q_max));
                }
            }
            if let (Some(tab), Some(acc)) = (&table, total.as_mut()) {
                acc.iter_mut()
                    .zip(tab.log_likelihood(&fires[m]).iter())
                    .for_each(|(a, l)| *a += l);
            }
        }
        let theta_hat = match (&table, &total) {
            (Some(tab), Some(acc)) => tab.argmax(acc),
            _ => counted / per_pixel_bits as f64,
        };
        (
            scale * theta_hat,
            reconstruct::BlockStats::new(fired, per_pixel_bits),
        )
    });
    let (raw, stats): (Vec<f64>, Vec<_>) = pixels.into_iter().unzip();
    let rec = ReconstructionResult {
        width: w,
        height: h,
        estimate: raw.iter().map(|v| v.clamp(0.0, clip)).collect(),
        raw_estimate: raw,
        saturated: stats.iter().map(|s| s.saturated()).collect(),
        stats,
        psnr_db: None,
    };
    rec.with_truth(image.pixels())
}

/// Per-pixel parity pattern of a checkerboard design: `q1` where `x + y` is
/// even, `q2` elsewhere.
pub fn checkerboard_map(
    design: &CheckerboardDesign,
    config: &SensorConfig,
    width: usize,
    height: usize,
) -> Result<ThresholdMap> {
    let (kx, ky) = (config.kx as usize, config.ky as usize);
    ThresholdMap::from_fn(width * kx, height * ky, kx, ky, |x, y| {
        if (x + y) % 2 == 0 {
            design.q1
        } else {
            design.q2
        }
    })
}
