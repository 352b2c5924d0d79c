//! Wave propagation through media whose velocity is perturbed for a short
//! time, the instantaneous time mirror.
//!
//! The solved equation is `∂ₜ²u = a ∇·(b (1 + χ η(t)) ∇u)` on a periodic
//! grid in one or two dimensions, where `η` is a box of height `η₀/ε` and
//! width `ε` around the mirror time `T`. As `ε → 0` the box becomes the jump
//! condition `∂ₜu(T⁺) = ∂ₜu(T⁻) + η₀ a ∇·(b χ ∇u(T))`.
//!
//! * [`geometry`]: grids, fields, stencils and FFT multipliers
//! * [`media`]: coefficients, windows and presets
//! * [`spectral_oracle`]: exact per-mode transfer matrices
//! * [`evolve`]: leapfrog time stepping, jump limit, first-order form
//! * [`refocus`]: remainder fields and refocusing metrics
//! * [`analysis`]: Sobolev norms, energies, rate fits
//! * [`harness`]: configuration, experiments and output files

// `!(x > 0.0)` guards are meant to reject NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod error;
pub mod evolve;
pub mod geometry;
pub mod harness;
pub mod media;
pub mod refocus;
pub mod spectral_oracle;

pub use error::{Error, Result};

// The book chapters are compiled as doc-tests so their listings stay in sync
// with the API.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/grids.md")]
    mod grids {}
    #[doc = include_str!("../../../book/src/media.md")]
    mod media {}
    #[doc = include_str!("../../../book/src/oracle.md")]
    mod oracle {}
    #[doc = include_str!("../../../book/src/evolve.md")]
    mod evolve {}
    #[doc = include_str!("../../../book/src/refocus.md")]
    mod refocus {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
    #[doc = include_str!("../../../book/src/outputs.md")]
    mod outputs {}
}
