//! reglab: a numerical laboratory for latent-reinitialized guided diffusion
//! sampling on analytic Gaussian-mixture models.
//!
//! The lab implements the two-step pipeline — invert a candidate
//! reconstruction through the unconditional probability flow ODE, then run
//! guided (DPS-style) dynamics from the resulting latent — on three data
//! distributions whose scores, denoisers and posteriors are available in
//! closed form. Because everything is analytic, the claims about the
//! pipeline (projection onto the consistency subspace, mode contraction,
//! stochastic-sampler failure, posterior bias of plain DPS) can be verified
//! against exact oracles; the [`verify`] module packages those checks as
//! reproducible experiments emitting machine-readable reports.
//!
//! Modules:
//! * [`models`] — analytic densities, scores, denoisers, mode oracles.
//! * [`measure`] — linear measurements, rewards, the exact consistency
//!   projection.
//! * [`dynamics`] — velocity fields, adaptive RK4 and Euler-Maruyama
//!   integrators, latent extraction.
//! * [`reguidance`] — the pipeline and latent-perturbation utilities.
//! * [`verify`] — experiment presets, statistical tests, verdict reports.
//! * [`config`] / [`cli`] — the preset file format and the command dispatcher
//!   behind the `reglab` binary.
//!
//! Each major capability has a runnable example under `examples/`; the
//! shipped presets under `presets/` drive the same experiments through the
//! binary.

// `!(x > 0.0)`-style guards double as NaN rejectors; the suggested
// `partial_cmp` form loses that.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod dynamics;
mod error;
pub mod measure;
pub mod models;
pub mod reguidance;
pub mod rng;
pub mod verify;

pub use error::{Error, Result};
