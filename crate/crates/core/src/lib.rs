//! Numerical laboratory for photoacoustic tomography in media with Caputo
//! fractional attenuation.
//!
//! The crate simulates `∂ₜ²u − c²Δu + a∂ₜᵅu = 0`, records boundary traces,
//! inverts them with a time-reversal Neumann series and audits the foliation
//! and visibility geometry behind uniqueness and stability. Numerical kernels
//! are generic over [`Real`] (`f32` or `f64`); the `*64` aliases fix `f64`.

pub mod acceptance;
pub mod config;
pub mod error;
pub mod frac_calculus;
pub mod forward;
pub mod geometry;
pub mod grid;
pub mod io;
pub mod manifest;
pub mod ode;
pub mod profiles;
pub mod reconstruction;
pub mod scalar;
pub mod study;

pub use error::{Error, Result};
pub use scalar::{gamma, Real};

pub type FracWeights64 = frac_calculus::FracWeights<f64>;
pub type TimeSeries64 = frac_calculus::TimeSeries<f64>;
pub type Field64 = grid::Field<f64>;
pub type Medium64 = grid::Medium<f64>;
pub type SourceSpec64 = grid::SourceSpec<f64>;
