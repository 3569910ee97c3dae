use serde::{Deserialize, Serialize};

use super::vocab::entry_node_id;
use super::{Sentence, TrainingExample, Vocabulary, UNK};
use crate::graph::{EntryKind, LinearizeMode, NodeSequence};

/// How a gold node name is reachable by the node decoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeResolution {
    /// In the generation vocabulary (it may also be copyable).
    Vocab(usize),
    /// Only reachable by copying a token or a lemma.
    Copy,
    Unk,
}

/// Supervision for predicting entry `t` from the prefix `0..t`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleStep {
    pub t: usize,
    pub kind: EntryKind,
    pub name: String,
    pub resolution: NodeResolution,
    /// `arcs[j]` is set when entry `t` links to prefix entry `j`; length `t`.
    pub arcs: Vec<bool>,
    /// `(j, relation id)` for each labeled arc (concept mode only).
    pub rels: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Oracle {
    pub mode: LinearizeMode,
    /// Gold sequence with the END entry appended.
    pub sequence: NodeSequence,
    pub steps: Vec<OracleStep>,
    /// Steps whose target resolved to UNK.
    pub unk: usize,
    pub warnings: Vec<String>,
}

impl Oracle {
    /// Node id per sequence entry as seen by the graph encoder.
    pub fn node_ids(&self, vocab: &Vocabulary) -> Vec<usize> {
        self.sequence
            .entries
            .iter()
            .map(|e| entry_node_id(vocab, e.kind, &e.name))
            .collect()
    }
}

pub(crate) fn copyable(sentence: &Sentence, name: &str) -> bool {
    sentence
        .tokens
        .iter()
        .any(|t| t.token == name || t.copy_lemma() == name)
}

/// Per-step targets for teacher forcing. Returns `None` without a gold graph.
pub fn make_oracle(example: &TrainingExample, vocab: &Vocabulary) -> Option<Oracle> {
    let sequence = example.target(vocab.mode)?;
    let mut steps = Vec::with_capacity(sequence.len() - 1);
    let mut unk = 0;
    let mut warnings = Vec::new();
    for t in 1..sequence.len() {
        let entry = &sequence.entries[t];
        let resolution = match vocab.nodes.get(&entry.name) {
            Some(id) if id != UNK => NodeResolution::Vocab(id),
            _ if copyable(&example.sentence, &entry.name) => NodeResolution::Copy,
            _ => {
                unk += 1;
                warnings.push(format!(
                    "step {t}: `{}` is neither in vocabulary nor copyable",
                    entry.name
                ));
                NodeResolution::Unk
            }
        };
        let mut arcs = vec![false; t];
        for &j in &sequence.arcs[t] {
            arcs[j] = true;
        }
        let mut rels = Vec::new();
        for l in sequence.labels.iter().filter(|l| l.from == t) {
            match vocab.relations.get(&l.label) {
                Some(r) => rels.push((l.to, r)),
                None => warnings.push(format!("step {t}: unknown relation `{}`", l.label)),
            }
        }
        steps.push(OracleStep {
            t,
            kind: entry.kind,
            name: entry.name.clone(),
            resolution,
            arcs,
            rels,
        });
    }
    Some(Oracle {
        mode: vocab.mode,
        sequence,
        steps,
        unk,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::super::{build_vocab, parse_corpus, END_NAME};
    use super::*;
    use crate::graph::{restore, SeqEntry};

    const WANT_BELIEVE: &str = "\
# ::tok The boy wants the girl to believe him .
(w / want :ARG0 (b / boy) :ARG1 (b2 / believe :ARG0 (g / girl) :ARG1 b))
";

    fn oracle(mode: LinearizeMode) -> Oracle {
        let c = parse_corpus(WANT_BELIEVE, None).examples;
        let v = build_vocab(&c, mode);
        make_oracle(&c[0], &v).unwrap()
    }

    #[test]
    fn levi_steps_follow_the_sequence() {
        let o = oracle(LinearizeMode::Levi);
        assert_eq!(o.steps.len(), 9);
        let names: Vec<&str> = o.steps.iter().map(|s| s.name.as_str()).collect();
        assert_eq!(
            names,
            ["want", "believe", "ARG1", "boy", "ARG1", "ARG0", "girl", "ARG0", END_NAME]
        );
        let s3 = &o.steps[2];
        assert_eq!(s3.t, 3);
        assert_eq!(s3.arcs, vec![false, true, true]);
        for s in &o.steps {
            assert_eq!(s.arcs.len(), s.t);
            assert!(s.rels.is_empty());
        }
        assert_eq!(o.unk, 0);
    }

    #[test]
    fn reentrant_boy_is_reached_from_two_labels() {
        let o = oracle(LinearizeMode::Levi);
        let boy = 4;
        let linking: Vec<usize> = o
            .steps
            .iter()
            .filter(|s| s.kind == EntryKind::Label && s.arcs.get(boy) == Some(&true))
            .map(|s| s.t)
            .collect();
        assert_eq!(linking, vec![5, 6]);
    }

    #[test]
    fn concept_mode_tags_reversals() {
        let o = oracle(LinearizeMode::Concepts);
        let v = build_vocab(
            &parse_corpus(WANT_BELIEVE, None).examples,
            LinearizeMode::Concepts,
        );
        // want=1 believe=2 boy=3 girl=4; boy is ARG0 of want and ARG1 of believe.
        let boy = &o.steps[2];
        assert_eq!(boy.name, "boy");
        assert_eq!(boy.arcs, vec![false, true, true]);
        let rels: Vec<(usize, &str)> = boy
            .rels
            .iter()
            .map(|&(j, r)| (j, v.relations.name(r)))
            .collect();
        assert_eq!(rels, vec![(1, "ARG0_R"), (2, "ARG1_R")]);
    }

    #[test]
    fn single_concept_has_one_step_without_arcs() {
        let c = parse_corpus("# ::tok a\n(a / alpha)\n", None).examples;
        let v = build_vocab(&c, LinearizeMode::Levi);
        let o = make_oracle(&c[0], &v).unwrap();
        assert_eq!(o.steps.len(), 2);
        assert_eq!(o.steps[0].arcs, vec![false]);
        assert_eq!(o.steps[1].name, END_NAME);
    }

    #[test]
    fn gold_arcs_restore_the_graph() {
        for mode in [LinearizeMode::Concepts, LinearizeMode::Levi] {
            let o = oracle(mode);
            let mut seq = NodeSequence::new();
            for s in o.steps.iter().filter(|s| s.name != END_NAME) {
                let arcs = s
                    .arcs
                    .iter()
                    .enumerate()
                    .filter(|(_, b)| **b)
                    .map(|(j, _)| j);
                seq.push(
                    SeqEntry {
                        kind: s.kind,
                        name: s.name.clone(),
                    },
                    arcs,
                );
            }
            seq.labels = o.sequence.labels.clone();
            let c = parse_corpus(WANT_BELIEVE, None).examples;
            let g = c[0].sentence.gold.as_ref().unwrap();
            let order = crate::graph::linearize::concept_order(g);
            assert_eq!(restore(&seq, mode).unwrap(), g.reordered(&order));
        }
    }

    #[test]
    fn unknown_names_count_as_unk() {
        let c = parse_corpus("# ::tok x\n(a / alpha)\n", None).examples;
        let other = parse_corpus("# ::tok y\n(b / beta)\n", None).examples;
        let v = build_vocab(&other, LinearizeMode::Concepts);
        let o = make_oracle(&c[0], &v).unwrap();
        assert_eq!(o.steps[0].resolution, NodeResolution::Unk);
        assert_eq!(o.unk, 1);
        let copy = parse_corpus("# ::tok alpha\n(a / alpha)\n", None).examples;
        let o = make_oracle(&copy[0], &v).unwrap();
        assert_eq!(o.steps[0].resolution, NodeResolution::Copy);
    }
}
