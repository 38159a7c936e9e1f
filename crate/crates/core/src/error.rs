use thiserror::Error;

use crate::data::DataError;
use crate::ndcore::NdError;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Nd(#[from] NdError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("sentence too long: {len} tokens, limit {max}")]
    SentenceTooLong { len: usize, max: usize },
    #[error("gold token {0:?} outside copy support")]
    GoldOutsideSupport(String),
    #[error("no disjoint span pair exists in a sentence of {0} tokens")]
    NoDisjointSpans(usize),
    #[error("gold span {span} out of range for {len} tokens")]
    GoldSpanOutOfRange { span: crate::data::Span, len: usize },
    #[error("invalid config: {0}")]
    Config(String),
}
