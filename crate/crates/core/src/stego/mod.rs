//! Traditional least-significant-bit hiding for images and audio.
//!
//! The learned (cover-dependent) hider lives in [`crate::hider`].

mod audio;
mod lsb;

pub use self::audio::{
    audio_lsb_hide, audio_lsb_reveal, read_embedded_bits, RevealedText, TextPayload,
};
pub use self::lsb::{lsb_hide, lsb_reveal, LsbConfig, DEFAULT_IMAGE_BITS};
