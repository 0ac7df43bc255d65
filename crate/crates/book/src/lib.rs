//! The mdbook guide under `book/`, one module per chapter, so that
//! `cargo test` runs every Rust snippet in it.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/gaussian.md")]
pub mod gaussian {}
#[doc = include_str!("../../../book/src/equilibrium.md")]
pub mod equilibrium {}
#[doc = include_str!("../../../book/src/rate_distortion.md")]
pub mod rate_distortion {}
#[doc = include_str!("../../../book/src/channel.md")]
pub mod channel {}
#[doc = include_str!("../../../book/src/simulation.md")]
pub mod simulation {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
