//! Vortex filament dynamics laboratory.
//!
//! The crate integrates closed and periodic vortex filaments under the
//! binormal curvature flow, optionally augmented with a regularized
//! antiparallel-pair interaction, detects and performs reconnections,
//! and computes the diagnostics used to study the resulting dynamics:
//! fluid impulse (full, windowed, sliced, and on vorticity grids),
//! corner trajectories and their square-frequency spectra, Frenet data,
//! and the Hasimoto transform.
//!
//! Modules:
//! - [`geometry`]: discrete curves, boundary maps, high-order derivatives,
//!   Frenet frames, arclength reparametrization.
//! - [`scenarios`]: initial conditions (eye-shaped vortices, polygonal
//!   eyes, perturbed antiparallel pairs, reference curves).
//! - [`evolution`]: the filament velocity law and the adaptive
//!   embedded Runge-Kutta integrator with its stability cap.
//! - [`reconnection`]: trigger criteria and the surgery that turns a
//!   periodic pair into a mirror-antisymmetric closed loop.
//! - [`diagnostics`]: impulse functionals, slice profiles, vorticity
//!   grids, spectra with square-frequency dominance, power-law fits.
//! - [`analytic`]: closed-form material (corner rotation matrices,
//!   skew rhombi and their impulse, theta series, the dispersive
//!   reference sum).
//! - [`runner`]: configuration, scenario pipelines, and output files.

pub mod analytic;
pub mod diagnostics;
pub mod error;
pub mod evolution;
pub mod geometry;
pub mod reconnection;
pub mod scenarios;
pub mod vec3;

pub use error::{Error, Result};
pub use vec3::Vec3;
