//! Structured, explicit memory for language models.
//!
//! Facts live in a deduplicated triple store (entities and relations in their
//! own tables, triples as id combinations) and are retrieved by embedding
//! similarity. Models talk to the memory through `MEM_WRITE` / `MEM_READ`
//! calls embedded in their token stream; [`protocol`] parses and serializes
//! those calls and [`harness`] drives decoding loops against any
//! [`harness::TokenGenerator`].
//!
//! ```
//! use tripmem_core::retrieval::{execute_query, MemoryQuery, RetrievalThresholds};
//! use tripmem_core::store::MemoryStore;
//!
//! let mut store = MemoryStore::with_reference_embedder(256, 0);
//! store.insert_triple("Il Regalo Più Grande", "part of", "Alla Mia Età", None).unwrap();
//!
//! let q = MemoryQuery::object("Il Regalo Più Grande", "part of");
//! let result = execute_query(&store, &q, &RetrievalThresholds::default()).unwrap();
//! assert_eq!(result.names(), vec!["Alla Mia Età"]);
//! ```

pub mod config;
pub mod datagen;
pub mod editing;
pub mod embedding;
pub mod harness;
pub mod par;
pub mod protocol;
pub mod retrieval;
pub mod store;

pub use embedding::{cosine, EmbeddingProvider, EmbeddingVector, ReferenceEmbedder};
pub use protocol::{ReadCall, StreamEvent, StreamParser, WriteCall};
pub use retrieval::{MemoryQuery, QueryDirection, QueryResult, RetrievalThresholds};
pub use store::{MemoryStats, MemoryStore};
