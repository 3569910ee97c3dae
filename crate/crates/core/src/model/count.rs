use serde::{Deserialize, Serialize};

use super::{ParserConfig, Variant};
use crate::corpus::{Vocabulary, SPECIALS};
use crate::tensor::ParamStore;

/// Inventory sizes that determine embedding and output widths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VocabSizes {
    pub tokens: usize,
    pub lemmas: usize,
    pub pos: usize,
    pub ner: usize,
    pub chars: usize,
    /// Generation entries without labels: specials plus learned concepts.
    pub concepts: usize,
    /// Distinct base relation labels; the relation inventory holds twice as many.
    pub labels: usize,
}

impl VocabSizes {
    pub fn of(v: &Vocabulary) -> Self {
        VocabSizes {
            tokens: v.tokens.len(),
            lemmas: v.lemmas.len(),
            pos: v.pos.len(),
            ner: v.ner.len(),
            chars: v.chars.len(),
            concepts: SPECIALS.len() + v.concept_count,
            labels: v.relation_bases(),
        }
    }
}

/// Parameter counts per component.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ParamCounts {
    pub text_encoder: usize,
    pub graph_encoder: usize,
    pub graph_transformer: usize,
    /// Gate and generation matrices.
    pub node_decoder: usize,
    pub biaffine: usize,
}

impl ParamCounts {
    /// Everything after the graph transformer.
    pub fn decoder(&self) -> usize {
        self.node_decoder + self.biaffine
    }

    pub fn total(&self) -> usize {
        self.text_encoder + self.graph_encoder + self.graph_transformer + self.decoder()
    }

    /// Groups a parameter store by name prefix.
    pub fn enumerate(store: &ParamStore) -> Self {
        let mut c = ParamCounts::default();
        for (_, p) in store.iter() {
            let n = p.tensor.len();
            let slot = match p.name.split('.').next() {
                Some("text") => &mut c.text_encoder,
                Some("graph") => &mut c.graph_encoder,
                Some("gt") => &mut c.graph_transformer,
                Some("node") => &mut c.node_decoder,
                Some("biaffine") => &mut c.biaffine,
                _ => panic!("parameter `{}` belongs to no component", p.name),
            };
            *slot += n;
        }
        c
    }
}

fn linear(din: usize, dout: usize) -> usize {
    din * dout + dout
}

fn encoder(layers: usize, d: usize, ff: usize) -> usize {
    let layer = 2 * 2 * d + 3 * linear(d, d) + d * d + linear(d, ff) + linear(ff, d);
    layers * layer + 2 * d
}

fn char_cnn(cfg: &ParserConfig, chars: usize) -> usize {
    chars * cfg.char_dim
        + linear(cfg.char_ngram * cfg.char_dim, cfg.char_filters)
        + linear(cfg.char_filters, cfg.char_out)
}

/// Closed-form parameter count of a parser with configuration `cfg`.
pub fn count_parameters(cfg: &ParserConfig, v: &VocabSizes) -> ParamCounts {
    let d = cfg.d;
    let relations = 2 * v.labels;
    let nodes = match cfg.variant {
        Variant::NdAdLv => v.concepts + relations,
        _ => v.concepts,
    };
    let text_in = cfg.word_dim + cfg.lemma_dim + cfg.pos_dim + cfg.ner_dim + cfg.char_out;
    let text_encoder = v.tokens * cfg.word_dim
        + v.lemmas * cfg.lemma_dim
        + v.pos * cfg.pos_dim
        + v.ner * cfg.ner_dim
        + char_cnn(cfg, v.chars)
        + linear(text_in, d)
        + encoder(cfg.text_layers, d, cfg.ff_hidden);
    let graph_encoder = nodes * cfg.concept_dim
        + char_cnn(cfg, v.chars)
        + linear(cfg.concept_dim + cfg.char_out, d)
        + encoder(cfg.graph_layers, d, cfg.ff_hidden);
    let between = 2 * 2 * d + linear(d, cfg.gt_ff_hidden) + linear(cfg.gt_ff_hidden, d);
    let graph_transformer =
        cfg.gt_layers * (4 * cfg.heads * d * d) + cfg.gt_layers.saturating_sub(1) * between;
    let node_decoder = 3 * d + d * nodes;
    let biaffine = if cfg.variant.uses_biaffine() {
        let h1 = cfg.biaffine_hidden + 1;
        4 * linear(d, cfg.biaffine_hidden) + h1 * h1 + relations.max(1) * h1 * h1
    } else {
        0
    };
    ParamCounts {
        text_encoder,
        graph_encoder,
        graph_transformer,
        node_decoder,
        biaffine,
    }
}
