//! Hide, reveal and blindly sanitize steganographic payloads.
//!
//! The sanitizer is a denoising diffusion model used as a one-shot filter
//! (DM-SUDS): noise a suspect image to step `t`, predict the noise, and
//! invert back to a clean estimate. See the guide in `book/` for a tour.

pub mod diffusion;
pub mod error;
pub mod harness;
pub mod hider;
pub mod media;
pub mod metrics;
pub mod nn;
pub mod sanitize;
pub mod stego;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/hiding.md")]
    mod hiding {}
    #[doc = include_str!("../../../book/src/diffusion.md")]
    mod diffusion {}
    #[doc = include_str!("../../../book/src/sanitizing.md")]
    mod sanitizing {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    mod metrics {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
}
