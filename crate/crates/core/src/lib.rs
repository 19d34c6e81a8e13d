//! Coincidence probabilities and two-photon visibility of a quantum relay
//! made of `N` concatenated entanglement-swapping stations.
//!
//! The crate evaluates the exact closed-form amplitude of the heralded
//! end-mode state, conditions it on realistic threshold-detector clicks and
//! reports the coincidence probabilities behind the visibility curve. A
//! brute-force Fock-space simulator is provided for cross-checking small
//! configurations.

pub mod amplitudes;
pub mod coincidence;
pub mod combinatorics;
pub mod detector;
pub mod error;
pub mod model;
pub mod numerics;
pub mod oracle;
pub mod transfer;

pub use error::{ParamError, RelayError};
pub use model::{
    validate_params, ClickTuple, CountTuple, InnerPattern, OuterCounts, RawParams, RelayParams,
    RotatorAngles, VisibilityReport,
};
