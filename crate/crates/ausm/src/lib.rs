//! Autoregressive universal video segmentation.
//!
//! A streaming segmentation model that treats next-frame mask prediction the
//! way language models treat next-token prediction. Instance masks from the
//! previous frame are dissolved into the feature grid (history marker), all
//! past frames are folded into one fixed-size spatial state by a stack of
//! temporal selective-SSM + spatial-attention layers (history compressor),
//! and two decoder stacks produce per-frame tracking and detection
//! predictions bound to ID vectors from a fixed pool.
//!
//! The same forward pass runs in two forms that agree elementwise:
//!
//! * **recurrent** — one frame at a time with constant memory, for streaming
//!   inference over arbitrarily long videos;
//! * **parallel** — all frames at once under teacher forcing, with the
//!   temporal recurrence evaluated by a chunked scan, for fast
//!   training-style execution.
//!
//! See the `examples/` directory for runnable entry points covering data
//! generation, streaming inference, the equivalence check, benchmarking,
//! and evaluation.

pub mod atb1;
pub mod avr1;
pub mod backbone;
pub mod error;
pub mod marker;
pub mod rng;
pub mod tensor;
pub mod weights;

pub use backbone::{FrameFeatureMap, RawFrame};
pub use error::{Error, Result};
pub use marker::{MaskKind, MaskStack};
pub use tensor::Tensor;
pub use weights::{ModelDims, WeightBundle};
