//! Graph linearization into decoder node sequences, and restoration back.
//!
//! Concepts are ordered breadth-first from the root, ignoring edge direction;
//! ties among neighbors are broken by `(name, label, direction, id)`.
//!
//! In [`LinearizeMode::Concepts`] each concept entry is linked to the earlier
//! concepts it shares an edge with, and the relation labels travel alongside
//! as [`ArcLabel`]s. The newly generated concept is treated as the head; when
//! the gold graph has it as the dependent, the label carries the `_R` suffix.
//!
//! In [`LinearizeMode::Levi`] each concept is immediately followed by one label
//! entry per edge connecting it to already generated concepts, most recently
//! generated neighbor first. A label entry is linked to both endpoint concepts;
//! its nearest concept is the dependent unless the label ends in `_R`.

use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use super::{AmrEdge, AmrGraph, GraphError, NodeId, REVERSED_SUFFIX};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinearizeMode {
    Concepts,
    Levi,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntryKind {
    Root,
    Concept,
    Label,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeqEntry {
    pub kind: EntryKind,
    pub name: String,
}

impl SeqEntry {
    pub fn root() -> Self {
        SeqEntry {
            kind: EntryKind::Root,
            name: ROOT_NAME.to_string(),
        }
    }

    pub fn concept(name: impl Into<String>) -> Self {
        SeqEntry {
            kind: EntryKind::Concept,
            name: name.into(),
        }
    }

    pub fn label(name: impl Into<String>) -> Self {
        SeqEntry {
            kind: EntryKind::Label,
            name: name.into(),
        }
    }
}

pub const ROOT_NAME: &str = "<root>";

/// Relation label attached to the arc from entry `from` to the earlier entry `to`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ArcLabel {
    pub from: usize,
    pub to: usize,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct NodeSequence {
    pub entries: Vec<SeqEntry>,
    /// For each entry `t`, the earlier entries linked to it, ascending.
    pub arcs: Vec<Vec<usize>>,
    /// Relation labels for concept-mode arcs; empty in Levi mode.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub labels: Vec<ArcLabel>,
}

impl NodeSequence {
    pub fn new() -> Self {
        NodeSequence {
            entries: vec![SeqEntry::root()],
            arcs: vec![Vec::new()],
            labels: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn push(&mut self, entry: SeqEntry, arcs: impl IntoIterator<Item = usize>) -> usize {
        let arcs: BTreeSet<usize> = arcs.into_iter().collect();
        self.entries.push(entry);
        self.arcs.push(arcs.into_iter().collect());
        self.entries.len() - 1
    }

    /// Labels recorded for the arc `from -> to`.
    pub fn labels_for(&self, from: usize, to: usize) -> impl Iterator<Item = &str> {
        self.labels
            .iter()
            .filter(move |l| l.from == from && l.to == to)
            .map(|l| l.label.as_str())
    }

    /// Entry 0 must be the root and every arc must point strictly backwards.
    pub fn validate(&self) -> Result<(), GraphError> {
        let malformed = |index, reason: &str| GraphError::MalformedSequence {
            index,
            reason: reason.to_string(),
        };
        if self.entries.first().map(|e| e.kind) != Some(EntryKind::Root) {
            return Err(malformed(0, "first entry must be the root"));
        }
        if self.arcs.len() != self.entries.len() {
            return Err(malformed(0, "arc table length differs from entry count"));
        }
        for (t, (entry, arcs)) in self.entries.iter().zip(&self.arcs).enumerate().skip(1) {
            if entry.kind == EntryKind::Root {
                return Err(malformed(t, "root entry after position 0"));
            }
            if let Some(&j) = arcs.iter().find(|&&j| j >= t) {
                return Err(malformed(t, &format!("arc to non-earlier entry {j}")));
            }
        }
        for l in &self.labels {
            if l.to >= l.from || l.from >= self.entries.len() {
                return Err(malformed(l.from, "relation label on a non-backward arc"));
            }
        }
        Ok(())
    }
}

/// Something restoration had to fix or drop.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Repair {
    /// A label entry linked to no concept; it was dropped.
    OrphanLabel { index: usize },
    /// A label entry linked to more than two concepts; one edge per extra head.
    ExtraHeads { index: usize, heads: usize },
    /// An arc pointing at the root or a label entry was ignored.
    IgnoredArc { index: usize, target: usize },
    /// A concept-mode arc had no relation label and was dropped.
    MissingLabel { index: usize, target: usize },
    /// A label entry appeared in a concept-mode sequence and was dropped.
    UnexpectedLabel { index: usize },
    /// The same triple was produced twice; the copy was dropped.
    DuplicateEdge { index: usize },
}

/// Breadth-first concept order used by both linearization modes.
pub fn concept_order(g: &AmrGraph) -> Vec<NodeId> {
    let adj = g.adjacency();
    let mut seen = vec![false; g.len()];
    let mut order = Vec::with_capacity(g.len());
    for start in std::iter::once(g.root()).chain(0..g.len()) {
        if seen[start] {
            continue;
        }
        seen[start] = true;
        let mut queue = VecDeque::from([start]);
        while let Some(u) = queue.pop_front() {
            order.push(u);
            let mut next: Vec<(NodeId, usize)> = adj[u].clone();
            next.sort_by(|a, b| {
                let ea = &g.edges()[a.1];
                let eb = &g.edges()[b.1];
                (g.name(a.0), &ea.label, ea.head != u, a.0).cmp(&(
                    g.name(b.0),
                    &eb.label,
                    eb.head != u,
                    b.0,
                ))
            });
            for (v, _) in next {
                if !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
    }
    order
}

fn reversed(label: &str) -> String {
    format!("{label}{REVERSED_SUFFIX}")
}

/// Splits `ARG0_R` into `("ARG0", true)`.
pub fn split_reversed(label: &str) -> (&str, bool) {
    match label.strip_suffix(REVERSED_SUFFIX) {
        Some(base) if !base.is_empty() => (base, true),
        _ => (label, false),
    }
}

/// Linearizes `g`. Concepts disconnected from the root are appended as
/// further breadth-first components; use [`AmrGraph::validate`] for strictness.
pub fn linearize(g: &AmrGraph, mode: LinearizeMode) -> Result<NodeSequence, GraphError> {
    let order = concept_order(g);
    let mut pos = vec![usize::MAX; g.len()];
    let mut seq = NodeSequence::new();
    match mode {
        LinearizeMode::Concepts => {
            if let Some(e) = g.edges().iter().find(|e| e.head == e.dependent) {
                return Err(GraphError::SelfLoop(e.head));
            }
            for &c in &order {
                let t = seq.len();
                let mut arcs = Vec::new();
                for e in g.incident(c) {
                    let o = e.other(c).unwrap();
                    if pos[o] == usize::MAX {
                        continue;
                    }
                    arcs.push(pos[o]);
                    let label = if e.head == c {
                        e.label.clone()
                    } else {
                        reversed(&e.label)
                    };
                    seq.labels.push(ArcLabel {
                        from: t,
                        to: pos[o],
                        label,
                    });
                }
                seq.push(SeqEntry::concept(g.name(c)), arcs);
                pos[c] = t;
            }
            seq.labels.sort();
        }
        LinearizeMode::Levi => {
            for &c in &order {
                let t = seq.push(SeqEntry::concept(g.name(c)), []);
                pos[c] = t;
                let mut connecting: Vec<&AmrEdge> = g
                    .incident(c)
                    .filter(|e| pos[e.other(c).unwrap()] != usize::MAX)
                    .collect();
                connecting.sort_by(|a, b| {
                    let pa = pos[a.other(c).unwrap()];
                    let pb = pos[b.other(c).unwrap()];
                    pb.cmp(&pa)
                        .then_with(|| a.label.cmp(&b.label))
                        .then_with(|| (a.head == c).cmp(&(b.head == c)))
                });
                for e in connecting {
                    let o = e.other(c).unwrap();
                    let name = if e.dependent == c {
                        e.label.clone()
                    } else {
                        reversed(&e.label)
                    };
                    seq.push(SeqEntry::label(name), [pos[o], t]);
                }
            }
        }
    }
    Ok(seq)
}

/// Rebuilds a graph from a node sequence, discarding the repair log.
pub fn restore(seq: &NodeSequence, mode: LinearizeMode) -> Result<AmrGraph, GraphError> {
    restore_logged(seq, mode).map(|(g, _)| g)
}

/// Rebuilds a graph from a node sequence. Concept ids follow entry order and
/// the first concept entry becomes the root.
pub fn restore_logged(
    seq: &NodeSequence,
    mode: LinearizeMode,
) -> Result<(AmrGraph, Vec<Repair>), GraphError> {
    seq.validate()?;
    let mut names = Vec::new();
    let mut id_of = vec![usize::MAX; seq.len()];
    let mut edges: Vec<AmrEdge> = Vec::new();
    let mut seen: BTreeSet<AmrEdge> = BTreeSet::new();
    let mut repairs = Vec::new();

    let mut add_edge = |edge: AmrEdge, index: usize, repairs: &mut Vec<Repair>| {
        if seen.insert(edge.clone()) {
            edges.push(edge);
        } else {
            repairs.push(Repair::DuplicateEdge { index });
        }
    };

    for (t, entry) in seq.entries.iter().enumerate().skip(1) {
        match (entry.kind, mode) {
            (EntryKind::Concept, _) => {
                id_of[t] = names.len();
                names.push(entry.name.clone());
                if mode == LinearizeMode::Concepts {
                    for &j in &seq.arcs[t] {
                        if id_of[j] == usize::MAX {
                            repairs.push(Repair::IgnoredArc {
                                index: t,
                                target: j,
                            });
                            continue;
                        }
                        let mut any = false;
                        for label in seq.labels_for(t, j) {
                            any = true;
                            let (base, rev) = split_reversed(label);
                            let edge = if rev {
                                AmrEdge::new(id_of[j], id_of[t], base)
                            } else {
                                AmrEdge::new(id_of[t], id_of[j], base)
                            };
                            add_edge(edge, t, &mut repairs);
                        }
                        if !any {
                            repairs.push(Repair::MissingLabel {
                                index: t,
                                target: j,
                            });
                        }
                    }
                }
            }
            (EntryKind::Label, LinearizeMode::Concepts) => {
                repairs.push(Repair::UnexpectedLabel { index: t });
            }
            (EntryKind::Label, LinearizeMode::Levi) => {
                let mut concepts = Vec::new();
                for &j in &seq.arcs[t] {
                    if id_of[j] == usize::MAX {
                        repairs.push(Repair::IgnoredArc {
                            index: t,
                            target: j,
                        });
                    } else {
                        concepts.push(j);
                    }
                }
                let Some(&nearest) = concepts.iter().max() else {
                    repairs.push(Repair::OrphanLabel { index: t });
                    continue;
                };
                let (base, rev) = split_reversed(&entry.name);
                let heads: Vec<usize> =
                    concepts.iter().copied().filter(|&j| j != nearest).collect();
                if heads.len() > 1 {
                    repairs.push(Repair::ExtraHeads {
                        index: t,
                        heads: heads.len(),
                    });
                }
                if heads.is_empty() {
                    add_edge(
                        AmrEdge::new(id_of[nearest], id_of[nearest], base),
                        t,
                        &mut repairs,
                    );
                }
                for h in heads {
                    let edge = if rev {
                        AmrEdge::new(id_of[nearest], id_of[h], base)
                    } else {
                        AmrEdge::new(id_of[h], id_of[nearest], base)
                    };
                    add_edge(edge, t, &mut repairs);
                }
            }
            (EntryKind::Root, _) => unreachable!("validated"),
        }
    }

    if names.is_empty() {
        return Err(GraphError::MalformedSequence {
            index: 0,
            reason: "sequence has no concept entries".into(),
        });
    }
    let graph = AmrGraph::from_parts(names, edges, 0)?;
    Ok((graph, repairs))
}

#[cfg(test)]
mod tests {
    use super::super::parse_penman;
    use super::super::random::random_graph;
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const WANT_BELIEVE: &str =
        "(w / want :ARG0 (b / boy) :ARG1 (b2 / believe :ARG0 (g / girl) :ARG1 b))";

    fn names(seq: &NodeSequence) -> Vec<&str> {
        seq.entries.iter().map(|e| e.name.as_str()).collect()
    }

    #[test]
    fn levi_order_matches_the_worked_example() {
        let g = parse_penman(WANT_BELIEVE).unwrap();
        let seq = linearize(&g, LinearizeMode::Levi).unwrap();
        assert_eq!(
            names(&seq),
            ["<root>", "want", "believe", "ARG1", "boy", "ARG1", "ARG0", "girl", "ARG0"]
        );
        // want=1 believe=2 boy=4 girl=7
        assert_eq!(seq.arcs[3], vec![1, 2]);
        assert_eq!(seq.arcs[5], vec![2, 4]);
        assert_eq!(seq.arcs[6], vec![1, 4]);
        assert_eq!(seq.arcs[8], vec![2, 7]);
        for t in [1, 2, 4, 7] {
            assert!(seq.arcs[t].is_empty());
        }
        let back = restore(&seq, LinearizeMode::Levi).unwrap();
        assert_eq!(back, g.reordered(&concept_order(&g)));
        assert!(back.is_isomorphic(&g));
    }

    #[test]
    fn concept_mode_reverses_when_new_node_is_dependent() {
        let g = parse_penman(WANT_BELIEVE).unwrap();
        let seq = linearize(&g, LinearizeMode::Concepts).unwrap();
        assert_eq!(names(&seq), ["<root>", "want", "believe", "boy", "girl"]);
        assert_eq!(seq.arcs[3], vec![1, 2]);
        assert_eq!(seq.labels_for(2, 1).collect::<Vec<_>>(), ["ARG1_R"]);
        assert_eq!(seq.labels_for(3, 1).collect::<Vec<_>>(), ["ARG0_R"]);
        assert_eq!(seq.labels_for(3, 2).collect::<Vec<_>>(), ["ARG1_R"]);
        assert_eq!(
            restore(&seq, LinearizeMode::Concepts).unwrap(),
            g.reordered(&concept_order(&g))
        );
    }

    #[test]
    fn single_concept() {
        let g = parse_penman("(a / alpha)").unwrap();
        for mode in [LinearizeMode::Concepts, LinearizeMode::Levi] {
            let seq = linearize(&g, mode).unwrap();
            assert_eq!(names(&seq), ["<root>", "alpha"]);
            assert!(seq.arcs.iter().all(|a| a.is_empty()));
            assert_eq!(restore(&seq, mode).unwrap(), g);
        }
    }

    #[test]
    fn reversed_label_flips_direction() {
        let mut plain = NodeSequence::new();
        plain.push(SeqEntry::concept("want"), []);
        plain.push(SeqEntry::concept("boy"), []);
        plain.push(SeqEntry::label("ARG0"), [1, 2]);
        let mut rev = plain.clone();
        rev.entries[3].name = "ARG0_R".into();

        let a = restore(&plain, LinearizeMode::Levi).unwrap();
        let b = restore(&rev, LinearizeMode::Levi).unwrap();
        assert_eq!(a.edges(), &[AmrEdge::new(0, 1, "ARG0")]);
        assert_eq!(b.edges(), &[AmrEdge::new(1, 0, "ARG0")]);

        let mut cplain = NodeSequence::new();
        cplain.push(SeqEntry::concept("want"), []);
        cplain.push(SeqEntry::concept("boy"), [1]);
        let mut crev = cplain.clone();
        cplain.labels.push(ArcLabel {
            from: 2,
            to: 1,
            label: "ARG0".into(),
        });
        crev.labels.push(ArcLabel {
            from: 2,
            to: 1,
            label: "ARG0_R".into(),
        });
        assert_eq!(
            restore(&cplain, LinearizeMode::Concepts).unwrap().edges(),
            &[AmrEdge::new(1, 0, "ARG0")]
        );
        assert_eq!(
            restore(&crev, LinearizeMode::Concepts).unwrap().edges(),
            &[AmrEdge::new(0, 1, "ARG0")]
        );
    }

    #[test]
    fn orphan_labels_are_dropped_and_logged() {
        let mut seq = NodeSequence::new();
        seq.push(SeqEntry::label("ARG0"), []);
        seq.push(SeqEntry::concept("alpha"), []);
        seq.push(SeqEntry::label("mod"), [0]);
        let (g, log) = restore_logged(&seq, LinearizeMode::Levi).unwrap();
        assert_eq!(g.len(), 1);
        assert!(g.edges().is_empty());
        assert_eq!(
            log,
            vec![
                Repair::OrphanLabel { index: 1 },
                Repair::IgnoredArc {
                    index: 3,
                    target: 0
                },
                Repair::OrphanLabel { index: 3 },
            ]
        );
    }

    #[test]
    fn extra_heads_become_extra_edges() {
        let mut seq = NodeSequence::new();
        seq.push(SeqEntry::concept("a"), []);
        seq.push(SeqEntry::concept("b"), []);
        seq.push(SeqEntry::concept("c"), []);
        seq.push(SeqEntry::label("op1"), [1, 2, 3]);
        let (g, log) = restore_logged(&seq, LinearizeMode::Levi).unwrap();
        assert_eq!(
            g.edges(),
            &[AmrEdge::new(0, 2, "op1"), AmrEdge::new(1, 2, "op1")]
        );
        assert_eq!(log, vec![Repair::ExtraHeads { index: 4, heads: 2 }]);
    }

    #[test]
    fn cyclic_graphs_survive_levi_roundtrip() {
        let g = parse_penman("(a / alpha :ARG1 (b / beta :ARG1 (c / gamma :ARG1 a)))").unwrap();
        assert!(!g.is_acyclic());
        let seq = linearize(&g, LinearizeMode::Levi).unwrap();
        assert_eq!(
            restore(&seq, LinearizeMode::Levi).unwrap(),
            g.reordered(&concept_order(&g))
        );
        let g = parse_penman("(x / x :mod x)").unwrap();
        let seq = linearize(&g, LinearizeMode::Levi).unwrap();
        assert_eq!(restore(&seq, LinearizeMode::Levi).unwrap(), g);
        assert_eq!(
            linearize(&g, LinearizeMode::Concepts),
            Err(GraphError::SelfLoop(0))
        );
    }

    #[test]
    fn rejects_forward_arcs() {
        let mut seq = NodeSequence::new();
        seq.push(SeqEntry::concept("a"), []);
        seq.arcs[1].push(1);
        assert!(matches!(
            restore(&seq, LinearizeMode::Levi),
            Err(GraphError::MalformedSequence { index: 1, .. })
        ));
        let empty = NodeSequence::new();
        assert!(restore(&empty, LinearizeMode::Concepts).is_err());
    }

    #[test]
    fn disconnected_components_are_appended() {
        let g = AmrGraph::from_parts(["a", "b", "c"], [AmrEdge::new(2, 1, "mod")], 0).unwrap();
        for mode in [LinearizeMode::Concepts, LinearizeMode::Levi] {
            let seq = linearize(&g, mode).unwrap();
            assert_eq!(
                restore(&seq, mode).unwrap(),
                g.reordered(&concept_order(&g))
            );
        }
    }

    #[test]
    fn random_roundtrips_both_modes() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..500 {
            let g = random_graph(&mut rng, 12, 20);
            let canonical = g.reordered(&concept_order(&g));
            for mode in [LinearizeMode::Concepts, LinearizeMode::Levi] {
                let seq = linearize(&g, mode).unwrap();
                seq.validate().unwrap();
                assert_eq!(restore(&seq, mode).unwrap(), canonical);
            }
        }
    }
}
