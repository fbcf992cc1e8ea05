//! Forward imaging model.
//!
//! A normalized image `c ∈ [0,1]^N` is spread over the `M = N·K` jot grid by a
//! synthesis kernel, scaled by the sensor gain and duty cycle into per-jot
//! exposures `θ = (ατ/K)·W c`, and each jot/frame emits the bit
//! `B = [Y ≥ q]` with `Y ~ Poisson(θ)`.
//!
//! Jots are laid out on a 2-D grid of `width·k_x` columns by `height·k_y` rows,
//! row-major; pixel `(x, y)` owns the `k_x × k_y` jot block starting at
//! `(x·k_x, y·k_y)`.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{QisError, Result};
use crate::par;
use crate::rng::{self, CounterRng, Stream};
use crate::special;

/// Ground-truth light field, normalized to `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct IntensityImage {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

impl IntensityImage {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        check_dims(width, height, pixels.len())?;
        if let Some(bad) = pixels.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(QisError::Domain(format!(
                "intensity must lie in [0, 1], found {bad}"
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn constant(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }
}

pub(crate) fn check_dims(width: usize, height: usize, len: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(QisError::Dimension(
            "image dimensions must be positive".into(),
        ));
    }
    if width * height != len {
        return Err(QisError::Dimension(format!(
            "{width}×{height} image needs {} values, got {len}",
            width * height
        )));
    }
    Ok(())
}

/// Sensor parameters shared by simulation, reconstruction and analysis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorConfig {
    /// Photons per unit intensity per pixel.
    pub alpha: f64,
    /// Horizontal jots per pixel.
    pub kx: u32,
    /// Vertical jots per pixel.
    pub ky: u32,
    /// Temporal frames.
    pub frames: u32,
    pub q_max: u32,
    /// Shutter duty cycle in `(0, 1]`.
    pub tau: f64,
    pub seed: u64,
}

impl SensorConfig {
    pub fn new(alpha: f64, kx: u32, ky: u32, frames: u32, q_max: u32) -> Result<Self> {
        let c = Self {
            alpha,
            kx,
            ky,
            frames,
            q_max,
            tau: 1.0,
            seed: 0,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn with_tau(mut self, tau: f64) -> Result<Self> {
        self.tau = tau;
        self.validate()?;
        Ok(self)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_frames(mut self, frames: u32) -> Result<Self> {
        self.frames = frames;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(QisError::Config(format!(
                "alpha must be > 0, got {}",
                self.alpha
            )));
        }
        if self.kx == 0 || self.ky == 0 {
            return Err(QisError::Config("jot factors must be ≥ 1".into()));
        }
        if self.frames == 0 {
            return Err(QisError::Config("frame count must be ≥ 1".into()));
        }
        if self.q_max == 0 {
            return Err(QisError::Config("q_max must be ≥ 1".into()));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(QisError::Config(format!(
                "duty cycle must lie in (0, 1], got {}",
                self.tau
            )));
        }
        Ok(())
    }

    /// Jots per pixel.
    pub fn k(&self) -> u32 {
        self.kx * self.ky
    }

    /// Bits per pixel block over all frames, `K·T`.
    pub fn bits_per_pixel(&self) -> u64 {
        u64::from(self.k()) * u64::from(self.frames)
    }

    /// Per-jot exposure for normalized intensity `c`: `θ = ατc/K`.
    pub fn theta(&self, c: f64) -> f64 {
        self.alpha * self.tau * c / f64::from(self.k())
    }

    /// Inverse of [`SensorConfig::theta`].
    pub fn intensity(&self, theta: f64) -> f64 {
        theta * f64::from(self.k()) / (self.alpha * self.tau)
    }
}

/// Synthesis kernel spreading each pixel over the jot grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SynthesisKernel {
    Boxcar,
    LinearBSpline,
    QuadraticBSpline,
    CubicBSpline,
}

impl SynthesisKernel {
    fn degree(self) -> Option<u32> {
        match self {
            SynthesisKernel::Boxcar => None,
            SynthesisKernel::LinearBSpline => Some(1),
            SynthesisKernel::QuadraticBSpline => Some(2),
            SynthesisKernel::CubicBSpline => Some(3),
        }
    }
}

impl fmt::Display for SynthesisKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SynthesisKernel::Boxcar => "boxcar",
            SynthesisKernel::LinearBSpline => "linear-bspline",
            SynthesisKernel::QuadraticBSpline => "quadratic-bspline",
            SynthesisKernel::CubicBSpline => "cubic-bspline",
        })
    }
}

impl FromStr for SynthesisKernel {
    type Err = QisError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "boxcar" => Ok(SynthesisKernel::Boxcar),
            "linear-bspline" | "linear" => Ok(SynthesisKernel::LinearBSpline),
            "quadratic-bspline" | "quadratic" => Ok(SynthesisKernel::QuadraticBSpline),
            "cubic-bspline" | "cubic" => Ok(SynthesisKernel::CubicBSpline),
            other => Err(QisError::Config(format!("unsupported kernel '{other}'"))),
        }
    }
}

/// Centered cardinal B-spline of the given degree.
pub fn bspline(degree: u32, x: f64) -> f64 {
    let a = x.abs();
    match degree {
        0 => {
            if a < 0.5 {
                1.0
            } else {
                0.0
            }
        }
        1 => (1.0 - a).max(0.0),
        2 => {
            if a < 0.5 {
                0.75 - a * a
            } else if a < 1.5 {
                0.5 * (1.5 - a) * (1.5 - a)
            } else {
                0.0
            }
        }
        3 => {
            if a < 1.0 {
                2.0 / 3.0 - a * a + 0.5 * a * a * a
            } else if a < 2.0 {
                (2.0 - a).powi(3) / 6.0
            } else {
                0.0
            }
        }
        _ => panic!("B-spline degree {degree} not supported"),
    }
}

type Taps = Vec<Vec<(usize, f64)>>;

/// Sparse row-stochastic operator `W` mapping pixel values onto jots.
///
/// The full forward operator is `G = W / K`; the `1/K` factor is applied in
/// [`expose`] so that `W` rows sum to one for every kernel.
#[derive(Debug, Clone)]
pub struct JotOperator {
    kernel: SynthesisKernel,
    width: usize,
    height: usize,
    kx: usize,
    ky: usize,
    x_taps: Taps,
    y_taps: Taps,
}

/// One axis of the separable operator: taps from each jot to pixel indices.
fn axis_taps(kernel: SynthesisKernel, pixels: usize, factor: usize) -> Taps {
    let jots = pixels * factor;
    (0..jots)
        .map(|j| match kernel.degree() {
            None => vec![(j / factor, 1.0)],
            Some(deg) => {
                // Jot center in pixel coordinates (pixel centers at integers).
                let u = (j as f64 + 0.5) / factor as f64 - 0.5;
                let base = u.floor() as i64;
                let mut taps: Vec<(usize, f64)> = Vec::with_capacity(6);
                for i in (base - 2)..=(base + 3) {
                    let w = bspline(deg, u - i as f64);
                    if w <= 0.0 {
                        continue;
                    }
                    // Clamp-to-edge extension of the coefficient grid.
                    let idx = i.clamp(0, pixels as i64 - 1) as usize;
                    match taps.iter_mut().find(|(p, _)| *p == idx) {
                        Some(t) => t.1 += w,
                        None => taps.push((idx, w)),
                    }
                }
                let s: f64 = taps.iter().map(|t| t.1).sum();
                taps.iter_mut().for_each(|t| t.1 /= s);
                taps
            }
        })
        .collect()
}

/// Builds the synthesis operator for a `width × height` image.
pub fn build_kernel(
    config: &SensorConfig,
    kernel: SynthesisKernel,
    width: usize,
    height: usize,
) -> Result<JotOperator> {
    config.validate()?;
    if width == 0 || height == 0 {
        return Err(QisError::Dimension(
            "image dimensions must be positive".into(),
        ));
    }
    let (kx, ky) = (config.kx as usize, config.ky as usize);
    Ok(JotOperator {
        kernel,
        width,
        height,
        kx,
        ky,
        x_taps: axis_taps(kernel, width, kx),
        y_taps: axis_taps(kernel, height, ky),
    })
}

impl JotOperator {
    pub fn kernel(&self) -> SynthesisKernel {
        self.kernel
    }

    pub fn jot_width(&self) -> usize {
        self.width * self.kx
    }

    pub fn jot_height(&self) -> usize {
        self.height * self.ky
    }

    pub fn jots(&self) -> usize {
        self.jot_width() * self.jot_height()
    }

    /// Row `m` of `W` as `(pixel index, weight)` pairs.
    pub fn row(&self, m: usize) -> Vec<(usize, f64)> {
        let (jx, jy) = (m % self.jot_width(), m / self.jot_width());
        let mut out = Vec::new();
        for &(py, wy) in &self.y_taps[jy] {
            for &(px, wx) in &self.x_taps[jx] {
                out.push((py * self.width + px, wy * wx));
            }
        }
        out
    }

    /// `W c` over the jot grid.
    pub fn apply(&self, values: &[f64]) -> Result<Vec<f64>> {
        if values.len() != self.width * self.height {
            return Err(QisError::Dimension(format!(
                "operator expects {} pixel values, got {}",
                self.width * self.height,
                values.len()
            )));
        }
        let jw = self.jot_width();
        let mut out = vec![0.0; self.jots()];
        par::for_each_chunk_mut(&mut out, jw, |jy, row| {
            for (jx, v) in row.iter_mut().enumerate() {
                let mut acc = 0.0;
                for &(py, wy) in &self.y_taps[jy] {
                    let line = &values[py * self.width..(py + 1) * self.width];
                    for &(px, wx) in &self.x_taps[jx] {
                        acc += wy * wx * line[px];
                    }
                }
                *v = acc;
            }
        });
        Ok(out)
    }
}

/// Per-jot exposures `θ_m`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExposureField {
    jot_width: usize,
    jot_height: usize,
    values: Vec<f64>,
}

impl ExposureField {
    pub fn new(jot_width: usize, jot_height: usize, values: Vec<f64>) -> Result<Self> {
        check_dims(jot_width, jot_height, values.len())?;
        if let Some(bad) = values.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
            return Err(QisError::Domain(format!(
                "exposure must be finite and ≥ 0, found {bad}"
            )));
        }
        Ok(Self {
            jot_width,
            jot_height,
            values,
        })
    }

    pub fn jot_width(&self) -> usize {
        self.jot_width
    }

    pub fn jot_height(&self) -> usize {
        self.jot_height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// `θ = (ατ/K)·W c` for a normalized image.
pub fn expose(
    image: &IntensityImage,
    config: &SensorConfig,
    kernel: SynthesisKernel,
) -> Result<ExposureField> {
    expose_values(
        image.width(),
        image.height(),
        image.pixels(),
        config,
        kernel,
    )
}

/// Like [`expose`] for any nonnegative field (e.g. unnormalized radiance).
pub fn expose_values(
    width: usize,
    height: usize,
    values: &[f64],
    config: &SensorConfig,
    kernel: SynthesisKernel,
) -> Result<ExposureField> {
    check_dims(width, height, values.len())?;
    let op = build_kernel(config, kernel, width, height)?;
    let scale = config.alpha * config.tau / f64::from(config.k());
    let mut theta = op.apply(values)?;
    theta.iter_mut().for_each(|v| *v *= scale);
    ExposureField::new(op.jot_width(), op.jot_height(), theta)
}

/// Spatial threshold assignment. One threshold per `block_w × block_h` jot
/// block; blocks tile the jot grid exactly.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThresholdMap {
    jot_width: usize,
    jot_height: usize,
    block_w: usize,
    block_h: usize,
    q_values: Vec<u32>,
}

impl ThresholdMap {
    pub fn new(
        jot_width: usize,
        jot_height: usize,
        block_w: usize,
        block_h: usize,
        q_values: Vec<u32>,
    ) -> Result<Self> {
        if block_w == 0 || block_h == 0 {
            return Err(QisError::Config(
                "threshold block size must be positive".into(),
            ));
        }
        if !jot_width.is_multiple_of(block_w) || !jot_height.is_multiple_of(block_h) {
            return Err(QisError::Dimension(format!(
                "{block_w}×{block_h} blocks do not tile a {jot_width}×{jot_height} jot grid"
            )));
        }
        let n = (jot_width / block_w) * (jot_height / block_h);
        if q_values.len() != n {
            return Err(QisError::Dimension(format!(
                "threshold map needs {n} values, got {}",
                q_values.len()
            )));
        }
        if q_values.contains(&0) {
            return Err(QisError::Domain("thresholds must be ≥ 1".into()));
        }
        Ok(Self {
            jot_width,
            jot_height,
            block_w,
            block_h,
            q_values,
        })
    }

    /// One threshold for the whole grid, stored at per-pixel granularity.
    pub fn uniform(config: &SensorConfig, width: usize, height: usize, q: u32) -> Result<Self> {
        let (kx, ky) = (config.kx as usize, config.ky as usize);
        Self::new(width * kx, height * ky, kx, ky, vec![q; width * height])
    }

    /// Builds a map from a function of the block coordinates.
    pub fn from_fn(
        jot_width: usize,
        jot_height: usize,
        block_w: usize,
        block_h: usize,
        f: impl Fn(usize, usize) -> u32,
    ) -> Result<Self> {
        if block_w == 0
            || block_h == 0
            || !jot_width.is_multiple_of(block_w)
            || !jot_height.is_multiple_of(block_h)
        {
            return Err(QisError::Dimension(format!(
                "{block_w}×{block_h} blocks do not tile a {jot_width}×{jot_height} jot grid"
            )));
        }
        let (bx, by) = (jot_width / block_w, jot_height / block_h);
        let q = (0..by)
            .flat_map(|y| (0..bx).map(move |x| (x, y)))
            .map(|(x, y)| f(x, y));
        Self::new(jot_width, jot_height, block_w, block_h, q.collect())
    }

    pub fn jot_width(&self) -> usize {
        self.jot_width
    }

    pub fn jot_height(&self) -> usize {
        self.jot_height
    }

    pub fn block_w(&self) -> usize {
        self.block_w
    }

    pub fn block_h(&self) -> usize {
        self.block_h
    }

    pub fn blocks_x(&self) -> usize {
        self.jot_width / self.block_w
    }

    pub fn blocks_y(&self) -> usize {
        self.jot_height / self.block_h
    }

    pub fn q_values(&self) -> &[u32] {
        &self.q_values
    }

    pub fn q_values_mut(&mut self) -> &mut [u32] {
        &mut self.q_values
    }

    /// Index of the block containing jot `m`.
    pub fn block_of(&self, m: usize) -> usize {
        let (jx, jy) = (m % self.jot_width, m / self.jot_width);
        (jy / self.block_h) * self.blocks_x() + jx / self.block_w
    }

    pub fn q_for_jot(&self, m: usize) -> u32 {
        self.q_values[self.block_of(m)]
    }

    pub fn max_q(&self) -> u32 {
        self.q_values.iter().copied().max().unwrap_or(1)
    }

    /// Checks that every threshold lies in `[1, q_max]`.
    pub fn validate(&self, q_max: u32) -> Result<()> {
        match self.q_values.iter().find(|&&q| q < 1 || q > q_max) {
            Some(q) => Err(QisError::Domain(format!(
                "threshold {q} outside [1, {q_max}]"
            ))),
            None => Ok(()),
        }
    }

    /// Jot indices of block `b`.
    pub fn block_jots(&self, b: usize) -> impl Iterator<Item = usize> + '_ {
        let (bx, by) = (b % self.blocks_x(), b / self.blocks_x());
        let (x0, y0) = (bx * self.block_w, by * self.block_h);
        (y0..y0 + self.block_h)
            .flat_map(move |y| (x0..x0 + self.block_w).map(move |x| y * self.jot_width + x))
    }
}

/// Binary measurements `B_{m,t}`, stored frame-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitCube {
    jot_width: usize,
    jot_height: usize,
    frames: usize,
    bits: Vec<u8>,
}

impl BitCube {
    pub fn new(jot_width: usize, jot_height: usize, frames: usize, bits: Vec<u8>) -> Result<Self> {
        if bits.len() != jot_width * jot_height * frames {
            return Err(QisError::Dimension(format!(
                "bit cube {jot_width}×{jot_height}×{frames} needs {} entries, got {}",
                jot_width * jot_height * frames,
                bits.len()
            )));
        }
        if bits.iter().any(|&b| b > 1) {
            return Err(QisError::Domain("bit cube entries must be 0 or 1".into()));
        }
        Ok(Self {
            jot_width,
            jot_height,
            frames,
            bits,
        })
    }

    pub fn filled(jot_width: usize, jot_height: usize, frames: usize, bit: bool) -> Self {
        Self {
            jot_width,
            jot_height,
            frames,
            bits: vec![u8::from(bit); jot_width * jot_height * frames],
        }
    }

    pub fn jot_width(&self) -> usize {
        self.jot_width
    }

    pub fn jot_height(&self) -> usize {
        self.jot_height
    }

    /// Number of jots `M`.
    pub fn jots(&self) -> usize {
        self.jot_width * self.jot_height
    }

    /// Number of frames `T`.
    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn get(&self, m: usize, t: usize) -> u8 {
        self.bits[t * self.jots() + m]
    }

    pub fn plane(&self, t: usize) -> &[u8] {
        let m = self.jots();
        &self.bits[t * m..(t + 1) * m]
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.bits
    }

    pub fn count_ones(&self) -> u64 {
        self.bits.iter().map(|&b| u64::from(b)).sum()
    }

    /// Concatenates the frames of `other` after this cube's frames.
    pub fn append(&mut self, other: &BitCube) -> Result<()> {
        if other.jot_width != self.jot_width || other.jot_height != self.jot_height {
            return Err(QisError::Dimension(
                "cannot append cubes of different jot grids".into(),
            ));
        }
        self.bits.extend_from_slice(&other.bits);
        self.frames += other.frames;
        Ok(())
    }
}

fn check_map_matches(theta: &ExposureField, qmap: &ThresholdMap) -> Result<()> {
    if theta.jot_width() != qmap.jot_width() || theta.jot_height() != qmap.jot_height() {
        return Err(QisError::Dimension(format!(
            "threshold map covers {}×{} jots but exposure has {}×{}",
            qmap.jot_width(),
            qmap.jot_height(),
            theta.jot_width(),
            theta.jot_height()
        )));
    }
    Ok(())
}

/// Draws a single bit for jot `m`, frame `t`, given `Ψ_q(θ_m)`.
///
/// Inversion sampling of `Y ~ Poisson(θ)` with uniform `U` returns the
/// smallest `y` with `U < F(y)`; hence `Y ≥ q ⇔ U ≥ F(q−1) = Ψ_q(θ)` and the
/// bit is exact in law without materializing `Y`.
#[inline]
pub fn draw_bit(p_zero: f64, seed: u64, m: usize, t: usize) -> u8 {
    u8::from(rng::uniform(seed, Stream::Bits, m as u64, t as u64) >= p_zero)
}

/// Samples frames `0..frames`.
pub fn sample_bits(
    theta: &ExposureField,
    qmap: &ThresholdMap,
    frames: u32,
    seed: u64,
) -> Result<BitCube> {
    sample_frames(theta, qmap, 0..frames, seed)
}

/// Samples the given absolute frame indices. Frame `t` of a cube sampled over
/// `a..b` is identical to the same frame sampled over any other range.
pub fn sample_frames(
    theta: &ExposureField,
    qmap: &ThresholdMap,
    frames: Range<u32>,
    seed: u64,
) -> Result<BitCube> {
    check_map_matches(theta, qmap)?;
    let p_zero = zero_probabilities(theta, qmap)?;
    let jw = theta.jot_width();
    let jh = theta.jot_height();
    let m_total = jw * jh;
    let n_frames = frames.len();
    let start = frames.start as usize;
    let mut bits = vec![0u8; m_total * n_frames];
    if m_total > 0 && n_frames > 0 {
        par::for_each_chunk_mut(&mut bits, jw, |row_idx, row| {
            let t = start + row_idx / jh;
            let m0 = (row_idx % jh) * jw;
            for (i, b) in row.iter_mut().enumerate() {
                *b = draw_bit(p_zero[m0 + i], seed, m0 + i, t);
            }
        });
    }
    BitCube::new(jw, jh, n_frames, bits)
}

/// `Ψ_{q(m)}(θ_m)` for every jot.
pub fn zero_probabilities(theta: &ExposureField, qmap: &ThresholdMap) -> Result<Vec<f64>> {
    check_map_matches(theta, qmap)?;
    let vals = theta.values();
    par::map_range(vals.len(), |m| special::psi(qmap.q_for_jot(m), vals[m]))
        .into_iter()
        .collect()
}

/// Photon count `Y ~ Poisson(θ)` for jot `m`, frame `t`.
///
/// Small means use CDF inversion on a single uniform; larger means use
/// `rand_distr`'s rejection sampler driven by a counter-keyed generator.
pub fn photon_count(theta: f64, seed: u64, m: usize, t: usize) -> u32 {
    if theta <= 0.0 {
        return 0;
    }
    if theta < 10.0 {
        let u = rng::uniform(seed, Stream::Photons, m as u64, t as u64);
        let mut k = 0u32;
        let mut p = (-theta).exp();
        let mut cdf = p;
        while u >= cdf && k < 1000 {
            k += 1;
            p *= theta / f64::from(k);
            cdf += p;
        }
        k
    } else {
        let mut r = CounterRng::new(seed, Stream::Photons, m as u64, t as u64);
        Poisson::new(theta)
            .map(|d| d.sample(&mut r) as u32)
            .unwrap_or(0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(alpha: f64, kx: u32, ky: u32) -> SensorConfig {
        SensorConfig::new(alpha, kx, ky, 10, 64).unwrap()
    }

    #[test]
    fn boxcar_1d_spreads_evenly() {
        let c = cfg(8.0, 2, 1);
        let img = IntensityImage::new(2, 1, vec![0.25, 1.0]).unwrap();
        let th = expose(&img, &c, SynthesisKernel::Boxcar).unwrap();
        assert_eq!(th.values(), &[1.0, 1.0, 4.0, 4.0]);
    }

    #[test]
    fn constant_image_under_every_kernel() {
        let c = cfg(300.0, 2, 2).with_tau(0.5).unwrap();
        let img = IntensityImage::constant(5, 4, 0.6).unwrap();
        for k in [
            SynthesisKernel::Boxcar,
            SynthesisKernel::LinearBSpline,
            SynthesisKernel::QuadraticBSpline,
            SynthesisKernel::CubicBSpline,
        ] {
            let th = expose(&img, &c, k).unwrap();
            for &v in th.values() {
                assert!((v - 300.0 * 0.5 * 0.6 / 4.0).abs() < 1e-12, "{k}: {v}");
            }
        }
    }

    #[test]
    fn example_one_exposure() {
        let c = SensorConfig::new(300.0, 2, 2, 50, 60).unwrap();
        let img = IntensityImage::constant(3, 3, 0.5).unwrap();
        let th = expose(&img, &c, SynthesisKernel::Boxcar).unwrap();
        assert!(th.values().iter().all(|&v| (v - 37.5).abs() < 1e-12));
        let dark = IntensityImage::constant(3, 3, 0.0).unwrap();
        let th0 = expose(&dark, &c, SynthesisKernel::Boxcar).unwrap();
        assert!(th0.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn exposure_scales_linearly_with_duty_cycle() {
        let base = SensorConfig::new(100.0, 2, 2, 5, 16).unwrap();
        let img = IntensityImage::new(2, 1, vec![0.3, 0.9]).unwrap();
        let full = expose(&img, &base, SynthesisKernel::QuadraticBSpline).unwrap();
        let part = expose(
            &img,
            &base.with_tau(0.2).unwrap(),
            SynthesisKernel::QuadraticBSpline,
        )
        .unwrap();
        for (a, b) in full.values().iter().zip(part.values()) {
            assert!((a * 0.2 - b).abs() < 1e-12);
        }
    }

    #[test]
    fn kernel_rows_are_stochastic() {
        let c = cfg(1.0, 3, 2);
        for k in [
            SynthesisKernel::Boxcar,
            SynthesisKernel::LinearBSpline,
            SynthesisKernel::QuadraticBSpline,
            SynthesisKernel::CubicBSpline,
        ] {
            let op = build_kernel(&c, k, 4, 3).unwrap();
            for m in 0..op.jots() {
                let row = op.row(m);
                let s: f64 = row.iter().map(|r| r.1).sum();
                assert!((s - 1.0).abs() < 1e-12);
                assert!(row.iter().all(|r| r.1 >= 0.0));
            }
        }
    }

    #[test]
    fn kernel_names_round_trip() {
        for k in [
            SynthesisKernel::Boxcar,
            SynthesisKernel::LinearBSpline,
            SynthesisKernel::QuadraticBSpline,
            SynthesisKernel::CubicBSpline,
        ] {
            assert_eq!(k.to_string().parse::<SynthesisKernel>().unwrap(), k);
        }
        assert!("gaussian".parse::<SynthesisKernel>().is_err());
    }

    #[test]
    fn image_rejects_out_of_range() {
        assert!(IntensityImage::new(1, 1, vec![1.5]).is_err());
        assert!(IntensityImage::new(2, 1, vec![0.5]).is_err());
    }

    #[test]
    fn zero_exposure_never_fires() {
        let th = ExposureField::new(4, 4, vec![0.0; 16]).unwrap();
        let map = ThresholdMap::new(4, 4, 1, 1, vec![1; 16]).unwrap();
        let cube = sample_bits(&th, &map, 20, 3).unwrap();
        assert_eq!(cube.count_ones(), 0);
    }

    #[test]
    fn sub_ranges_reproduce_frames() {
        let th = ExposureField::new(6, 4, (0..24).map(|i| i as f64 * 0.3).collect()).unwrap();
        let map = ThresholdMap::new(6, 4, 2, 2, vec![1, 2, 3, 4, 5, 6]).unwrap();
        let full = sample_bits(&th, &map, 9, 11).unwrap();
        let tail = sample_frames(&th, &map, 4..9, 11).unwrap();
        for t in 0..5 {
            assert_eq!(full.plane(t + 4), tail.plane(t));
        }
    }

    #[test]
    fn threshold_map_tiling() {
        assert!(ThresholdMap::new(8, 8, 3, 2, vec![1; 12]).is_err());
        let m = ThresholdMap::from_fn(8, 4, 4, 2, |x, y| (1 + x + 2 * y) as u32).unwrap();
        assert_eq!(m.q_values(), &[1, 2, 3, 4]);
        assert_eq!(m.q_for_jot(5), 2);
        assert_eq!(m.q_for_jot(8 * 3 + 1), 3);
        let jots: Vec<usize> = m.block_jots(3).collect();
        assert_eq!(jots, vec![20, 21, 22, 23, 28, 29, 30, 31]);
        assert!(m.validate(3).is_err());
        assert!(m.validate(4).is_ok());
    }

    #[test]
    fn photon_count_mean_matches() {
        for &theta in &[0.7, 4.0, 25.0] {
            let n = 40_000;
            let s: f64 = (0..n)
                .map(|m| f64::from(photon_count(theta, 5, m, 0)))
                .sum();
            let mean = s / n as f64;
            assert!(
                (mean - theta).abs() < 4.0 * (theta / n as f64).sqrt(),
                "{theta}: {mean}"
            );
        }
        assert_eq!(photon_count(0.0, 1, 0, 0), 0);
    }
}
