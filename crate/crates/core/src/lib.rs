//! Spectral Galerkin simulation of the stochastic thin-film growth equation
//!
//! ```text
//! ∂t u = -∂x⁴u + ν∂x²u - ∂x²(∂x u)² + ξ
//! ```
//!
//! on `[0, L]` with periodic or Neumann boundary conditions, together with
//! the diagnostics and Monte Carlo verifiers built around it.
//!
//! * [`spectral`]: bases, the linear operator, transforms and norms.
//! * [`noise`]: counter-based Wiener forcing and the exact stochastic convolution.
//! * [`integrator`]: exponential Euler stepping and trajectory diagnostics.
//! * [`stabilizer`]: the shift profile for the linearly unstable regime.
//! * [`analysis`]: observables, ensemble statistics and moment verifiers.
//! * [`config`], [`io`], [`cli`]: run configuration, persistence and dispatch.

pub mod analysis;
pub mod cli;
pub mod config;
pub mod integrator;
pub mod io;
pub mod noise;
pub mod spectral;
pub mod stabilizer;

pub use spectral::{BasisSpec, Boundary, LinearSpectrum, SpectralField};
