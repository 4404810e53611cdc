//! Universal adversarial textures for face-mask occluders.
//!
//! The crate covers the full loop: projecting a mask texture onto aligned
//! faces ([`renderer`]), embedding faces and scoring them against enrolled
//! galleries ([`embedding`]), optimizing the texture to push masked faces
//! away from their identities ([`optimizer`]), measuring the effect in
//! digital and stream settings ([`eval`]), and the mask-substitution and
//! training-data defenses ([`defense`]).

pub mod dataset;
pub mod defense;
pub mod digest;
pub mod embedding;
pub mod error;
pub mod eval;
pub mod imaging;
pub mod optimizer;
pub mod renderer;
pub mod rng;
pub mod synth;

pub use error::{Error, Result};
