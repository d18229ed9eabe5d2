pub mod error;
pub mod io;
pub mod masks;
pub mod metrics;
pub mod pipeline;
pub mod rpca;
pub mod saliency;
pub mod spectrogram;
pub mod tracking;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/spectrogram.md")]
    mod spectrogram {}
    #[doc = include_str!("../../../book/src/rpca.md")]
    mod rpca {}
    #[doc = include_str!("../../../book/src/masks.md")]
    mod masks {}
    #[doc = include_str!("../../../book/src/pitch.md")]
    mod pitch {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    mod metrics {}
    #[doc = include_str!("../../../book/src/pipeline.md")]
    mod pipeline {}
}
