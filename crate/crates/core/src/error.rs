use std::io;

use crate::dataset::ElementId;

pub type Result<T> = std::result::Result<T, GbkmvError>;

#[derive(Debug, thiserror::Error)]
pub enum GbkmvError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),

    #[error("dataset is empty after filtering")]
    EmptyDataset,

    #[error("degenerate power-law fit: all values are equal")]
    DegenerateFit,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("no fixture hash for element {0}")]
    MissingFixture(ElementId),

    #[error("sketch holds {len} entries, at least 2 are required")]
    InsufficientSketch { len: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("budget of {budget} units cannot pay for a {bits}-bit buffer on {records} records")]
    BudgetExhausted { budget: f64, bits: usize, records: usize },

    #[error("incompatible sketches: {0}")]
    IncompatibleSketch(String),

    #[error("buffer size {r} leaves no budget for the sketch tail")]
    InfeasibleBuffer { r: usize },

    #[error("similarity is 0 or 1; variance is zero by continuity")]
    DegenerateSimilarity,

    #[error("index format error: {0}")]
    Format(String),

    #[error("index file is corrupt: {0}")]
    Corrupt(String),
}
