//! The four-record worked example used throughout the tests, docs and CLI
//! demos, with its injected hash table.

use crate::dataset::{ingest, Dataset, Record};
use crate::hashing::HashSource;

pub const FIG1_TEXT: &str = "e1 e2 e3 e4 e7\ne2 e3 e5\ne2 e4 e5\ne1 e2 e6 e10\n";

pub const QUERY_TEXT: &str = "e1 e2 e3 e5 e7 e9";

/// Hash table of the example. `e1` and `e6` are never shown with a value;
/// anything above 0.5 reproduces every sketch of the example.
pub const HASHES: &[(&str, f64)] = &[
    ("e1", 0.62),
    ("e2", 0.24),
    ("e3", 0.85),
    ("e4", 0.47),
    ("e5", 0.10),
    ("e6", 0.71),
    ("e7", 0.33),
    ("e9", 0.56),
    ("e10", 0.18),
];

/// The hash table in the two-column fixture file format.
pub fn hash_table_text() -> String {
    HASHES.iter().map(|(t, h)| format!("{t} {h}\n")).collect()
}

pub struct WorkedExample {
    pub dataset: Dataset,
    pub query: Record,
    pub hash: HashSource,
}

pub fn worked_example() -> WorkedExample {
    let dataset = ingest(FIG1_TEXT.as_bytes(), 1).expect("example parses");
    let mut enc = dataset.query_encoder();
    let query = enc.encode_line(QUERY_TEXT).expect("query is non-empty");
    let hash = HashSource::load_fixture(0, hash_table_text().as_bytes(), |t| enc.id_of(t))
        .expect("fixture parses");
    WorkedExample { dataset, query, hash }
}
