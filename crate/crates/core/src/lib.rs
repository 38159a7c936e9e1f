pub mod attention;
pub mod data;
pub mod encoder;
pub mod evaluation;
pub mod model;
mod error;
pub mod ndcore;
pub mod pointer_decoder;
pub mod trainer;
pub mod word_decoder;

pub use attention::{AttentionKind, AttentionOutput, PointerQuery};
pub use encoder::{DecoderKind, Encoder, EncoderOutput, ModelConfig};
pub use error::ModelError;
