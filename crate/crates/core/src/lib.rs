//! Localization limits, multi-user tracking and access-point scheduling for
//! distributed MIMO deployments.
//!
//! The crate is organized bottom-up:
//!
//! - [`eadf`]: effective aperture distribution functions (EADFs) built from
//!   sampled polarimetric patterns, with analytic angle derivatives.
//! - [`signal`]: the polarimetric line-of-sight signal model and noisy
//!   observation synthesis.
//! - [`fim`]: Fisher information of the channel parameters, the equivalent
//!   FIM of position, position error bounds (PEB), geometry factor and
//!   tilt-averaged bounds.
//! - [`estimator`]: maximum-likelihood direct positioning used to check the
//!   bounds empirically.
//! - [`tracking`]: Gaussian-mixture PHD filter with an unscented measurement
//!   conversion, plus a nearest-neighbour Kalman baseline.
//! - [`apselect`]: PEB-driven access-point subset selection.
//! - [`scenario`]: TOML scenario configs, PEB maps, Monte Carlo runs and full
//!   tracking episodes with CSV export.
//! - [`fixtures`]: golden-output regression fixtures.
//! - [`mathcore`]: shared numerical kernels and seeded random streams.
//!
//! The `examples/` directory holds one runnable program per capability; the
//! `dmimo` binary exposes the same workflows on the command line.

pub mod apselect;
pub mod eadf;
pub mod error;
pub mod estimator;
pub mod fim;
pub mod fixtures;
pub mod mathcore;
pub mod scenario;
pub mod signal;
pub mod tracking;

pub use error::{Error, Result};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
