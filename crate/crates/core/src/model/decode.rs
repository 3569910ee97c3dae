use serde::{Deserialize, Serialize};

use super::{Candidates, Model, ModelError, StepVars, Variant};
use crate::corpus::{Sentence, END, PAD, ROOT, SPECIALS, UNK};
use crate::graph::{
    restore_logged, AmrEdge, AmrGraph, ArcLabel, EntryKind, NodeSequence, Repair, SeqEntry,
};
use crate::tensor::{Precision, Tape};

/// Indices whose score reaches `threshold`.
pub fn threshold_arcs(scores: &[f64], threshold: f64) -> Vec<usize> {
    scores
        .iter()
        .enumerate()
        .filter(|(_, &s)| s >= threshold)
        .map(|(i, _)| i)
        .collect()
}

/// One greedy decoding decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepPrediction {
    pub entry: SeqEntry,
    /// Prefix positions the new entry links to.
    pub arcs: Vec<usize>,
    /// Relation labels of concept-mode arcs, in `arcs` order.
    pub labels: Vec<String>,
    /// Arcs were added because none passed the threshold.
    pub repaired: bool,
    pub score: f64,
}

/// Attention recorded while parsing one sentence.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AttentionTrace {
    /// `<root>` followed by the surface tokens.
    pub tokens: Vec<String>,
    /// Last text-encoder layer, averaged over heads; `(n+1)×(n+1)`.
    pub text: Vec<Vec<f64>>,
    /// Decoded sequence names, `<root>` first.
    pub nodes: Vec<String>,
    /// Per generated entry, its `α^⊘` over the `n` tokens.
    pub node_token: Vec<Vec<f64>>,
    /// Per generated entry, its `α^⊗` over the entries before it.
    pub node_node: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Parse {
    pub sequence: NodeSequence,
    pub graph: AmrGraph,
    pub repairs: Vec<Repair>,
    /// Steps whose arcs were forced because none passed the threshold.
    pub forced_arcs: usize,
    /// Concepts dropped because they were not connected to the root.
    pub dropped: usize,
    pub trace: AttentionTrace,
}

fn argmax(xs: impl Iterator<Item = f64>) -> Option<(usize, f64)> {
    xs.enumerate().fold(None, |best, (i, x)| match best {
        Some((_, b)) if b >= x => best,
        _ => Some((i, x)),
    })
}

impl Model {
    fn label_range(&self) -> std::ops::Range<usize> {
        SPECIALS.len() + self.vocab.concept_count..self.vocab.nodes.len()
    }

    /// Picks the next entry and its arcs; `None` means END.
    pub(crate) fn choose(
        &self,
        t: &Tape,
        sv: &StepVars,
        c: &Candidates,
        seq: &NodeSequence,
    ) -> Option<StepPrediction> {
        let labels = self.label_range();
        let concepts: Vec<usize> = (1..seq.len())
            .filter(|&j| seq.entries[j].kind == EntryKind::Concept)
            .collect();
        let probs = t.value(sv.node.o_node);
        let (best, score) = argmax(probs.iter().enumerate().map(|(i, &p)| {
            let banned = i == PAD
                || i == UNK
                || i == ROOT
                || (concepts.is_empty() && (i == END || labels.contains(&i)));
            if banned {
                f64::NEG_INFINITY
            } else {
                p
            }
        }))?;
        if best == END {
            return None;
        }
        let name = c.name(&self.vocab, best).to_string();
        let is_label = labels.contains(&best);
        let scores: Vec<f64> = match self.config.variant {
            Variant::NdBdBd => {
                let mut s = vec![0.0];
                if let Some(b) = &sv.biaffine {
                    s.extend_from_slice(t.value(b.o_arc));
                }
                s
            }
            _ => t.value(sv.attn.alpha_arc).to_vec(),
        };
        let thr = self.config.arc_threshold;
        let mut arcs: Vec<usize> = concepts
            .iter()
            .copied()
            .filter(|&j| scores[j] >= thr)
            .collect();
        let mut repaired = false;
        let entry = if is_label {
            if arcs.len() < 2 {
                let mut ranked = concepts.clone();
                ranked.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(b.cmp(&a)));
                ranked.truncate(2);
                ranked.sort_unstable();
                repaired = ranked != arcs;
                arcs = ranked;
            }
            SeqEntry::label(name)
        } else {
            match self.config.variant {
                Variant::NdAdLv => arcs.clear(),
                _ => {
                    if arcs.is_empty() && !concepts.is_empty() {
                        let (k, _) = argmax(concepts.iter().map(|&j| scores[j])).unwrap();
                        arcs.push(concepts[k]);
                        repaired = true;
                    }
                }
            }
            SeqEntry::concept(name)
        };
        let rel_labels = match &sv.biaffine {
            Some(b) if !is_label => {
                let r = self.vocab.relations.len().max(1);
                let o_rel = t.value(b.o_rel);
                arcs.iter()
                    .map(|&j| {
                        let row = &o_rel[(j - 1) * r..j * r];
                        let (k, _) = argmax(row.iter().copied()).unwrap();
                        self.vocab.relations.name(k).to_string()
                    })
                    .collect()
            }
            _ => Vec::new(),
        };
        Some(StepPrediction {
            entry,
            arcs,
            labels: rel_labels,
            repaired,
            score,
        })
    }

    /// Greedy decision for the prefix encoded in `state`.
    pub fn decode_step(
        &self,
        state: &super::EncoderState,
        s: &Sentence,
        prefix: &NodeSequence,
    ) -> Result<Option<StepPrediction>, ModelError> {
        let mut t = Tape::new(&self.params);
        let (p, m) = self.prepared_from_state(&mut t, state, s)?;
        let sv = self.step_vars(&mut t, &p, m)?;
        Ok(self.choose(&t, &sv, &p.candidates, prefix))
    }

    /// Greedy parse of one sentence.
    pub fn parse(&self, s: &Sentence) -> Result<Parse, ModelError> {
        self.parse_with(s, Precision::F64)
    }

    pub fn parse_with(&self, s: &Sentence, precision: Precision) -> Result<Parse, ModelError> {
        if s.is_empty() {
            return Err(ModelError::EmptySentence);
        }
        let mut t = Tape::with_precision(&self.params, precision);
        let (et, text_attn) = self.text_vars(&mut t, s)?;
        let mut seq = NodeSequence::new();
        let mut trace = AttentionTrace {
            tokens: std::iter::once(crate::graph::ROOT_NAME.to_string())
                .chain(s.tokens.iter().map(|x| x.token.clone()))
                .collect(),
            text: head_average(&t, &text_attn),
            ..AttentionTrace::default()
        };
        let mut forced = 0;
        while seq.len() <= self.config.max_decode_len {
            let ev = self.graph_vars(&mut t, &seq.entries)?;
            let p = self.prepare_from(&mut t, s, et, ev, Vec::new())?;
            let sv = self.step_vars(&mut t, &p, seq.len() - 1)?;
            let Some(pred) = self.choose(&t, &sv, &p.candidates, &seq) else {
                break;
            };
            trace.node_token.push(t.value(sv.attn.alpha_token).to_vec());
            trace.node_node.push(t.value(sv.attn.alpha_arc).to_vec());
            forced += usize::from(pred.repaired);
            let at = seq.len();
            for (j, label) in pred.arcs.iter().zip(&pred.labels) {
                seq.labels.push(ArcLabel {
                    from: at,
                    to: *j,
                    label: label.clone(),
                });
            }
            seq.push(pred.entry, pred.arcs);
        }
        trace.nodes = seq.entries.iter().map(|e| e.name.clone()).collect();
        let (full, repairs) = restore_logged(&seq, self.config.variant.mode())?;
        let (graph, dropped) = root_component(&full);
        Ok(Parse {
            sequence: seq,
            graph,
            repairs,
            forced_arcs: forced,
            dropped,
            trace,
        })
    }
}

fn head_average(t: &Tape, heads: &[crate::tensor::Var]) -> Vec<Vec<f64>> {
    let Some(&first) = heads.first() else {
        return Vec::new();
    };
    let (r, c) = t.shape(first);
    let mut avg = vec![vec![0.0; c]; r];
    for &h in heads {
        for (i, row) in t.value(h).chunks(c).enumerate() {
            for (a, v) in avg[i].iter_mut().zip(row) {
                *a += v / heads.len() as f64;
            }
        }
    }
    avg
}

/// Keeps only concepts connected to the root; returns the count dropped.
pub(crate) fn root_component(g: &AmrGraph) -> (AmrGraph, usize) {
    let keep = g.reachable_from_root();
    let dropped = keep.iter().filter(|k| !**k).count();
    if dropped == 0 {
        return (g.clone(), 0);
    }
    let mut new_id = vec![usize::MAX; g.len()];
    let mut names = Vec::new();
    for (i, c) in g.concepts().iter().enumerate() {
        if keep[i] {
            new_id[i] = names.len();
            names.push(c.name.clone());
        }
    }
    let edges = g
        .edges()
        .iter()
        .filter(|e| keep[e.head] && keep[e.dependent])
        .map(|e| AmrEdge::new(new_id[e.head], new_id[e.dependent], e.label.clone()));
    let pruned =
        AmrGraph::from_parts(names, edges, new_id[g.root()]).expect("subgraph of a valid graph");
    (pruned, dropped)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::parse_penman;

    #[test]
    fn threshold_keeps_scores_at_or_above() {
        assert_eq!(threshold_arcs(&[0.9, 0.3, 0.6], 0.5), vec![0, 2]);
        assert_eq!(threshold_arcs(&[0.5], 0.5), vec![0]);
        assert!(threshold_arcs(&[0.1, 0.2], 0.5).is_empty());
    }

    #[test]
    fn unreachable_concepts_are_dropped() {
        let g = parse_penman("(a / alpha :ARG0 (b / beta))").unwrap();
        let mut names: Vec<String> = g.concepts().iter().map(|c| c.name.clone()).collect();
        names.push("gamma".into());
        let h = AmrGraph::from_parts(names, g.edges().to_vec(), g.root()).unwrap();
        let (p, dropped) = root_component(&h);
        assert_eq!(dropped, 1);
        assert_eq!(p, g);
    }
}
