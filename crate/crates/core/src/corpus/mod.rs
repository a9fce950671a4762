//! Speech records and the on-disk corpus they are stored in.

mod record;
mod store;

pub use record::{sentence_factor_vectors, SpeechRecord};
pub use store::{
    content_hash, validate_id, CorpusIndex, CorpusSnapshot, CorpusStore, IndexEntry, IngestOutcome, StoreError,
    INDEX_SCHEMA_VERSION,
};
