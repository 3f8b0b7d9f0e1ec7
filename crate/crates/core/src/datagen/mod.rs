//! Training-example generation from annotated documents.

pub mod document;
pub mod export;
pub mod read;
pub mod write;

use crate::protocol::ProtocolError;
use crate::retrieval::RetrievalError;

pub use document::{read_documents, AnnotatedDocument, DocTriple, Mention, SanitizeLog};
pub use export::{export_examples, import_examples, read_examples, write_examples, Example};
pub use read::{
    generate_read_corpus, generate_read_examples, ReadExample, ReadGenConfig, SeenScope, SeenState,
    Segment,
};
pub use write::{generate_write_examples, sentence_triples, WriteExample};

#[derive(Debug, thiserror::Error)]
pub enum DatagenError {
    #[error("document {id:?}: {message}")]
    InvalidDocument { id: Option<String>, message: String },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
