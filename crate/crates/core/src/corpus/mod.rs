//! Corpus ingestion, token features, vocabularies and oracle targets.

mod load;
mod oracle;
mod vocab;

use serde::{Deserialize, Serialize};

use crate::graph::{AmrGraph, LinearizeMode, NodeSequence, SeqEntry};

pub use load::{
    load_corpus, load_sentences, parse_corpus, parse_features, parse_graphs, Diagnostic,
    GraphRecord, LoadedCorpus,
};
pub use oracle::{make_oracle, NodeResolution, Oracle, OracleStep};
pub(crate) use vocab::entry_node_id;
pub use vocab::{build_vocab, Index, Vocabulary, END, PAD, ROOT, SPECIALS, UNK};

/// Marks an absent lemma, POS or NER feature.
pub const SENTINEL: &str = "_";

/// Name of the terminating entry appended to every target sequence.
pub const END_NAME: &str = "<end>";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenFeatures {
    pub token: String,
    pub lemma: String,
    pub pos: String,
    pub ner: String,
}

impl TokenFeatures {
    /// A token with every feature absent.
    pub fn bare(token: impl Into<String>) -> Self {
        TokenFeatures {
            token: token.into(),
            lemma: SENTINEL.into(),
            pos: SENTINEL.into(),
            ner: SENTINEL.into(),
        }
    }

    pub fn chars(&self) -> impl Iterator<Item = char> + '_ {
        self.token.chars()
    }

    /// The lemma used for copying: the token itself when the lemma is absent.
    pub fn copy_lemma(&self) -> &str {
        if self.lemma == SENTINEL {
            &self.token
        } else {
            &self.lemma
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sentence {
    pub tokens: Vec<TokenFeatures>,
    pub gold: Option<AmrGraph>,
}

impl Sentence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingExample {
    pub id: Option<String>,
    /// `# ::key value` lines of the source block, in order.
    pub metadata: Vec<(String, String)>,
    pub sentence: Sentence,
}

impl TrainingExample {
    /// Gold linearization with the END entry appended, if a gold graph exists.
    pub fn target(&self, mode: LinearizeMode) -> Option<NodeSequence> {
        let g = self.sentence.gold.as_ref()?;
        let mut seq = crate::graph::linearize(g, mode).ok()?;
        seq.push(SeqEntry::concept(END_NAME), []);
        Some(seq)
    }
}

/// Corpus counts in the layout of the usual AMR data-statistics table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CorpusStats {
    pub sentences: usize,
    pub tokens: usize,
    pub concepts: usize,
    pub relations: usize,
}

pub fn corpus_stats(examples: &[TrainingExample]) -> CorpusStats {
    let mut s = CorpusStats {
        sentences: examples.len(),
        ..Default::default()
    };
    for ex in examples {
        s.tokens += ex.sentence.len();
        if let Some(g) = &ex.sentence.gold {
            s.concepts += g.len();
            s.relations += g.edges().len();
        }
    }
    s
}
