//! Numerical laboratory for McKean-Vlasov (mean-field) SDEs whose drift and
//! diffusion grow super-linearly in both state and measure.
//!
//! The crate simulates interacting particle systems with tamed explicit
//! schemes, estimates propagation-of-chaos errors by Brownian-path splitting
//! and decoupling, evaluates theoretical rate curves, and numerically audits
//! the structural assumptions (local monotonicity, polynomial Lipschitz
//! bounds, coercivity, growth, dissipativity, Lyapunov/exponential
//! integrability) that a coefficient model declares for itself.
//!
//! Modules:
//! - [`measure`]: empirical measures, moments, kernel integrals, exact 1-D
//!   Wasserstein distances.
//! - [`model`]: coefficient models with declared growth metadata, plus the
//!   built-in mean-square, quintic-mean, double-kernel, and linear benchmark
//!   models.
//! - [`integrator`]: particle-system and frozen-measure time stepping over a
//!   counter-based Brownian driver (bit-reproducible across thread counts).
//! - [`chaos`]: splitting and decoupling chaos-error estimators, level sweeps,
//!   theoretical rate curves, decay fits.
//! - [`verify`]: sampled assumption checkers with replayable violation
//!   records, the Lyapunov monitor, decay-rate estimation.
//! - [`cli`]: experiment configuration, orchestration, CSV/manifest output.

pub mod chaos;
pub mod cli;
pub mod integrator;
pub mod measure;
pub mod model;
mod philox;
pub mod stats;
pub mod verify;
