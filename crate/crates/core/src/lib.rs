//! Text-to-AMR parsing with graph-transformer decoders over concept
//! sequences and Levi graphs.
//!
//! The crate covers the graph model and its Levi transform, breadth-first
//! linearization, corpus ingestion, a small reverse-mode tensor engine, the
//! three decoder variants, teacher-forced training and Smatch scoring.

pub mod corpus;
pub mod eval;
pub mod graph;
pub mod model;
pub mod tensor;
pub mod training;

pub use corpus::{
    build_vocab, load_corpus, load_sentences, make_oracle, Sentence, TrainingExample, Vocabulary,
};
pub use eval::{smatch, smatch_unlabeled, CorpusScore, SmatchScore};
pub use graph::{
    emit_penman, from_levi, linearize, parse_penman, restore, to_levi, AmrGraph, GraphError,
    LeviGraph, LinearizeMode, NodeSequence,
};
pub use model::{
    count_parameters, Model, ModelError, ParamCounts, ParserConfig, Variant, VocabSizes,
};
pub use training::{train, EpochMetrics, TrainConfig, TrainError, TrainReport};
