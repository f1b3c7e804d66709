//! Min-max piecewise-linear car-following: first-order discrete-time
//! multi-anticipative dynamics, closed-form stationary regimes with
//! fixed-point verification, and calibration of the speed-spacing law and
//! anticipation parameters from trajectory data.
//!
//! Modules:
//! - [`law`]: the min-max piecewise-linear speed-spacing law and its
//!   inverse.
//! - [`dynamics`]: ring and open-road simulation at 0.5 s steps.
//! - [`stationary`]: stationary regimes and additive-eigenvalue residuals.
//! - [`calibration`]: anticipated-spacing samples, penalized segmented
//!   regression by dynamic programming, law reconstruction, grid search.
//! - [`io`]: trajectory ingestion (internal and NGSIM-style CSV),
//!   resampling to the model grid, and deterministic CSV exports.
//! - [`config`]: TOML run configuration.
//! - [`synth`]: seeded synthetic measurement data.

pub mod calibration;
pub mod config;
pub mod dynamics;
pub mod io;
pub mod law;
pub mod stationary;
pub mod synth;
