//! Decoding loops that connect a token generator to the memory.

pub mod generator;
pub mod perplexity;
pub mod read;
pub mod write;

use crate::protocol::ProtocolError;
use crate::retrieval::RetrievalError;
use crate::store::StoreError;

pub use generator::{
    EchoGenerator, GeneratorError, RankedToken, ScriptedGenerator, TokenGenerator,
    UniformGenerator, EOS,
};
pub use perplexity::{
    combine_token_probability, evaluate_perplexity, PerplexityReport, PplDocument, PplToken,
};
pub use read::{
    run_read_decode, run_read_decode_with, ReadDecodeConfig, ReadDecodeOutcome, ReadRecord,
    ReadStatus, StopReason,
};
pub use write::{
    decode_write, decode_write_context, run_write_scan, CloseRecord, HaltReason, LateStopConfig,
    LateStopDecoder, LateStopTrace, OracleExtractor, WriteExtractor, WriteScanInput,
};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error(transparent)]
    Generator(#[from] GeneratorError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error("malformed call {raw:?}: {reason}")]
    Malformed { raw: String, reason: String },
    #[error("decoding failed: {0}")]
    Decode(String),
    #[error("probability out of range: {0}")]
    Domain(String),
    #[error("sentence {index}: {source}")]
    Sentence {
        index: usize,
        #[source]
        source: Box<HarnessError>,
    },
}
