//! A small Transformer encoder-decoder that reads [`crate::encoding`] rows.
//!
//! Layers are pre-norm with a final layer norm on each stack. The word
//! embedding table is shared by the encoder input, the decoder input and the
//! output projection. Forward and backward passes are written by hand and are
//! generic over [`crate::Scalar`].

pub mod checkpoint;
pub mod decode;
pub mod gradcheck;
pub mod layers;
pub mod tensor;
pub mod train;
pub mod transformer;

pub use checkpoint::{CheckpointHeader, CHECKPOINT_VERSION};
pub use decode::{cross_attention, decode, AttentionRecord, DecodeOptions, Hypothesis, DEFAULT_BEAM};
pub use gradcheck::{gradient_check, GradCheckReport};
pub use layers::Params;
pub use tensor::Matrix;
pub use train::{train, Example, TrainConfig, TrainReport};
pub use transformer::{LossStats, ModelConfig, TransformerModel};
