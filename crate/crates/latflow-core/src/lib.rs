//! Core algorithms for latent terrain prediction with flow matching.
//!
//! Everything in this crate is pure computation over in-memory data:
//! a small feed-forward network substrate with exact reverse-mode
//! gradients, procedural height-map worlds, the height-map VAEs, the
//! conditional velocity field with Euler-integrated inference, the MLP
//! and diffusion baseline predictors, and a grid-world navigation
//! simulator with SR/CR/SPL metrics. File formats are defined here as
//! byte-level codecs; reading and writing actual files, the CLI, and
//! wall-clock timing live in the companion `latflow-cli` crate.
//!
//! The crate is `no_std` + `alloc`. All randomness flows through
//! counter-derived ChaCha streams in [`rng`], so every result is a pure
//! function of the supplied seeds.

#![cfg_attr(not(any(test, feature = "std")), no_std)]

extern crate alloc;

pub mod baselines;
pub mod codec;
pub mod dataset;
pub mod eval;
pub mod flow;
pub mod linalg;
pub mod nav;
pub mod nn;
pub mod predict;
pub mod rng;
pub mod vae;
pub mod world;
