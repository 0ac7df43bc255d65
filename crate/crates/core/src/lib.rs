//! Strategic communication in the quadratic-Gaussian setting.
//!
//! A transmitter observes a source `X` and private information `θ` and wants
//! the receiver's estimate to track `X + θ`; the receiver wants to track `X`.
//! The transmitter leads (commits to an encoder), the receiver follows with
//! its MMSE estimator. This crate computes those Stackelberg equilibria, with
//! and without receiver side information `W`, along with the strategic
//! rate-distortion curves and the noisy-channel optimality conditions that go
//! with them.
//!
//! Every closed form here is cross-checked against exact Gaussian
//! conditioning ([`gaussian`]) and, where useful, against seeded Monte Carlo
//! simulation ([`sim`]).
//!
//! Rates are in bits throughout.
//!
//! ```
//! use stratcomm::equilibrium::closed_form_equilibrium;
//!
//! let eq = closed_form_equilibrium(1.0, 0.0, 1.0).unwrap();
//! assert!((eq.alpha - 0.618_033_988_749_895).abs() < 1e-12);
//! assert!((eq.distortions.d_e - 0.381_966_011_250_105).abs() < 1e-12);
//! ```

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod audit;
pub mod equilibrium;
mod error;
pub mod gaussian;
pub mod jscc;
pub mod rd;
pub mod sim;
pub mod solver;

pub use error::{Error, Result};
pub use gaussian::{CovMatrix, DistortionPair, ModelParams, SideInfo};
pub use jscc::{ChannelParams, LinearStrategyPair};

/// Crate version embedded in reports.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// `|a - b| / max(|a|, |b|, floor)`. The floor keeps the measure meaningful
/// for values that are legitimately zero up to rounding.
pub(crate) fn rel_dev(a: f64, b: f64, floor: f64) -> f64 {
    let d = (a - b).abs();
    if d == 0.0 {
        return 0.0;
    }
    d / a.abs().max(b.abs()).max(floor)
}
