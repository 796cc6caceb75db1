//! Media containers shared by every other module: 8-bit images, their
//! floating working view, 16-bit PCM audio, file I/O and seeded randomness.

mod audio;
mod image;
mod io;
mod rng;

pub use self::audio::AudioClip;
pub use self::image::{FloatImage, ImageTensor};
pub use self::io::{load_png, load_wav, save_png, save_wav};
pub use self::rng::SeededRng;
