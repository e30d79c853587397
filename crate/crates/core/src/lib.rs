//! Health-misinformation retrieval pipeline: BM25 retrieval, semantic and
//! quality-criterion re-ranking, reciprocal rank fusion, and multi-aspect
//! evaluation (nDCG, P@10, CAM, compatibility).

pub mod bm25;
pub mod corpus_io;
pub mod error;
pub mod eval;
pub mod fixture;
pub mod fusion;
pub mod model;
pub mod pipeline;
pub mod quality;
pub mod semantic;

pub use error::{Error, Result};
pub use model::{
    Aspect, AspectJudgment, CriterionVector, Document, DocumentStore, EmbeddingRecord, Qrels, RankedList, Run,
    RunEntry, Topic,
};
