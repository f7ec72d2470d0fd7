//! Codecs and loaders for every on-disk artifact of the pipeline.
//!
//! - IDX (MNIST convention, big-endian) for images and label vectors
//! - DIVT, a little-endian 2-D `f32` tensor file used for all feature and
//!   probability matrices
//! - CSV tables plus optional JSONL texts, described by a [`TableSchema`]
//! - scenario configs: flat `key = value` files with `[name]` sections

mod dir;
mod idx;
mod scenario;
mod table;
mod tensor;

use std::path::Path;

pub use dir::{
    Dataset, DICTIONARY_FILE, IMAGES_FILE, LABELS_FILE, SCENARIOS_FILE, SCHEMA_FILE, TABLE_FILE,
    TEXTS_FILE,
};
pub use idx::{
    decode_images, decode_labels, encode_images, encode_labels, ImageStack, IDX_IMAGES_MAGIC,
    IDX_LABELS_MAGIC,
};
pub use scenario::{
    load_scenarios, parse_scenarios, Predicate, Scenario, ScenarioConfig, ScenarioDef, Term,
};
pub use table::{
    load_table, CategoryDictionary, ColumnKind, DatasetTable, MetadataColumn, Record, TableError,
    TableSchema, MISSING_VALUE,
};
pub use tensor::{decode_tensor, encode_tensor, TensorFile, DIVT_MAGIC, DIVT_VERSION};

/// Binary format failures. Each malformed-input class has its own variant.
#[derive(Debug, thiserror::Error, PartialEq)]
pub enum CodecError {
    #[error("bad magic number: expected {expected:02x?}, found {found:02x?}")]
    BadMagic { expected: Vec<u8>, found: Vec<u8> },

    #[error("unsupported format version {0}")]
    BadVersion(u32),

    #[error("truncated payload: need {needed} bytes, have {available}")]
    Truncated { needed: usize, available: usize },

    #[error("{extra} unexpected trailing bytes after payload")]
    TrailingBytes { extra: usize },

    #[error("dimensions {dims:?} overflow the addressable size")]
    DimOverflow { dims: Vec<u64> },

    #[error("invalid shape: {0}")]
    InvalidShape(String),

    #[error("empty tensor ({rows}x{cols})")]
    EmptyTensor { rows: u64, cols: u64 },

    #[error("non-finite value {value} at flat index {index}")]
    NonFinite { index: usize, value: f32 },
}

pub(crate) fn read_file(path: &Path) -> crate::Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| crate::Error::io(path, e))
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> crate::Result<()> {
    std::fs::write(path, bytes).map_err(|e| crate::Error::io(path, e))
}
