//! Counting statistics of coherent transport in driven two- and three-site
//! systems.
//!
//! The crate propagates a single particle through time-dependent few-site
//! Hamiltonians, accumulates the Heisenberg-picture transported-charge
//! operator across a bond, and evaluates its counting statistics: the
//! spectral distribution, the counting-field quasi-distribution, and the
//! spreading over many driving cycles. A library of closed-form predictions
//! ([`analytic`]) serves as the cross-check for every numerical result.
//!
//! Time is measured in units of the inverse reference hopping between sites
//! 1 and 2, which is fixed at 1.

pub mod analytic;
pub mod counting;
pub mod error;
pub mod export;
pub mod linalg;
pub mod model;
pub mod propagation;

pub use error::{Error, Result};
pub use linalg::{CMat, CVec, EigenSystem};
pub use model::{Bond, DrivingProtocol, Sites, SystemSpec};
