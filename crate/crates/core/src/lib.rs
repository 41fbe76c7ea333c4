//! Weak-field homodyne Bell tests on vacuum–one-photon and related two-mode
//! optical states.
//!
//! * [`fock`] simulates the interferometer in a truncated Fock space and serves
//!   as the reference for everything else.
//! * [`closedform`] holds the analytic detection probabilities and the
//!   detector-inefficiency sums.
//! * [`bell`] assembles Clauser–Horne values for the supported event schemes.
//! * [`optimize`] searches measurement settings for extremal CH values and
//!   derives scans, violation regions and robustness figures from them.

pub mod bell;
pub mod closedform;
pub mod crosscheck;
pub mod error;
pub mod fock;
pub mod optimize;
pub mod params;
pub mod special;

pub use error::{Error, Result};
pub use params::{EventPattern, InputSpec, Setting};
