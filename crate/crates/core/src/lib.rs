//! Retrieval-augmented molecule generation from bioassay records: storage,
//! embedding search, LLM access, prompt assembly, batched generation and
//! evaluation metrics.

pub mod context;
pub mod eval;
pub mod generation;
pub mod index;
pub mod llm;
pub mod retrieval;
pub mod store;
pub mod templates;
