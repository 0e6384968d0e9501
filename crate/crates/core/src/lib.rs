//! Anti-concentration bounds for linear images `AX` of random vectors with
//! independent coordinates, together with the exact combinatorial oracles and
//! Monte Carlo estimators used to check them.
//!
//! The crate is organised by role:
//!
//! - [`distributions`]: the coordinate laws `X_i` and their exact 1-d quantities
//!   (density bound, concentration function, characteristic function).
//! - [`spectral`]: singular data of `A`, stable rank, tail energies and the
//!   spectral / removal projections.
//! - [`bounds`]: numeric right-hand sides of the small-ball inequalities with
//!   explicit, configurable absolute constants.
//! - [`oracles`]: exact ground truth at desk scale (discrete enumeration,
//!   cube sections, characteristic-function rearrangements).
//! - [`estimators`]: reproducible Monte Carlo small-ball and density estimates.
//! - [`experiment`]: the config-driven runner behind the `smallball` CLI.

pub mod bounds;
pub mod distributions;
pub mod error;
pub mod estimators;
pub mod experiment;
pub mod numeric;
pub mod oracles;
pub mod spectral;

pub use error::{Error, Result};
