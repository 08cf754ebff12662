//! chunkpipe-core
//!
//! Library behind the `chunkpipe` toolkit: structure heading-markup documents
//! into header-enriched chunks, embed and retrieve them from a cosine index,
//! re-rank and filter retrieved context, build and evaluate multiple-choice QA
//! prompts, and merge model checkpoints by linear weight averaging.
//!
//! Every stage that would normally talk to a neural model goes through the
//! client traits in [`clients`], which ship with deterministic in-process
//! mocks, so the whole pipeline runs and tests without any model server.

pub mod analysis;
pub mod clients;
pub mod corpus;
pub mod embedx;
pub mod fingerprint;
pub mod merge;
pub mod qa;
pub mod ranker;
pub mod tokenize;

pub use corpus::{Chunk, ChunkPolicy, ChunkStore, DocumentTree, Section};
pub use embedx::{EmbeddingVector, RetrievalHit, VectorIndex};
pub use merge::TensorBundle;
pub use qa::{EvalReport, McqaItem, SplitPlan, SymbolSet};
pub use ranker::{ContextBlock, ContextSelection, RelevanceScore};
