//! Containment similarity search over set-valued records with GB-KMV
//! sketches, plus KMV, G-KMV and LSH Ensemble baselines.

pub mod dataset;
pub mod error;
pub mod eval;
pub mod fixtures;
pub mod gbkmv;
pub mod hashing;
pub mod kmv;
pub mod lshe;
pub mod persist;
pub mod search;
pub mod tuner;

pub use dataset::{Dataset, Dictionary, ElementId, Record};
pub use error::{GbkmvError, Result};
pub use gbkmv::{build_gbkmv_index, BufferSize, GbkmvIndex};
pub use hashing::HashSource;
pub use search::{exact_search, query, QueryScratch, SizePartitionIndex};
