//! Smatch evaluation.

mod smatch;

pub use smatch::{
    smatch, smatch_seeded, smatch_unlabeled, CorpusScore, SmatchScore, TripleSet, DEFAULT_RESTARTS,
};
