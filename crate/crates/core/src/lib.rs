//! Quanta image sensor (QIS) simulation and threshold design.
//!
//! The crate models a single-photon binary image sensor in which each pixel is
//! oversampled by `K` binary jots over `T` frames, and a jot fires when its
//! photon count reaches a threshold `q`. It provides:
//!
//! - [`special`]: the normalized upper incomplete Gamma function `Ψ_q(θ)` for
//!   integer shape, its derivative, inverse and admissible sets.
//! - [`forward`]: the imaging model (synthesis kernel, exposure, bit sampling
//!   with a counter-based RNG).
//! - [`reconstruct`]: the closed-form per-pixel maximum-likelihood estimate and
//!   PSNR.
//! - [`analytics`]: Fisher information, SNR variants, the SNR lower bound and
//!   oracle threshold, bit-density moments, the checkerboard CRLB design and the
//!   phase-transition table.
//! - [`adapt`]: bisection threshold adaptation plus the Markov-chain,
//!   conditional-reset and checkerboard baselines.
//! - [`hdr`]: multi-exposure simulation, inverse-variance fusion and analytic
//!   dynamic-range curves.
//! - [`corpus`] and [`bench`]: the synthetic test corpus and the policy
//!   comparison harness.
//! - [`io`]: PGM / CSV / QISB readers and writers.
//!
//! Data-parallel loops run on rayon when the `parallel` feature is enabled
//! (the default) and fall back to plain iterators otherwise. Results are
//! identical either way because all randomness is keyed by `(seed, jot, frame)`.

// `!(x > 0.0)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adapt;
pub mod analytics;
pub mod bench;
pub mod corpus;
pub mod error;
pub mod forward;
pub mod hdr;
pub mod io;
pub mod par;
pub mod reconstruct;
pub mod rng;
pub mod special;

pub use error::{QisError, Result};
pub use forward::{
    BitCube, ExposureField, IntensityImage, SensorConfig, SynthesisKernel, ThresholdMap,
};
pub use reconstruct::{ReconstructionResult, SaturationPolicy};
