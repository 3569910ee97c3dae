//! Levi graph transform: every labeled edge becomes a label node.
//!
//! Nodes follow the Levi linearization order. Arcs always run from the
//! earlier concept through the label node to the later concept; a label node
//! whose name ends in `_R` stands for an edge pointing the other way.

use serde::{Deserialize, Serialize};

use super::linearize::{concept_order, linearize, split_reversed, EntryKind, LinearizeMode};
use super::{AmrEdge, AmrGraph, GraphError, REVERSED_SUFFIX};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Concept,
    Label,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LeviNode {
    pub kind: NodeKind,
    pub name: String,
    pub reversed: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LeviGraph {
    pub nodes: Vec<LeviNode>,
    pub arcs: Vec<(usize, usize)>,
}

impl LeviGraph {
    pub fn label_count(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| n.kind == NodeKind::Label)
            .count()
    }

    /// Checks kind alternation, label degrees and the `_R` flag.
    pub fn validate(&self) -> Result<(), GraphError> {
        let malformed = |index, reason: String| GraphError::MalformedLevi { index, reason };
        let n = self.nodes.len();
        let mut indeg = vec![0usize; n];
        let mut outdeg = vec![0usize; n];
        for &(a, b) in &self.arcs {
            if a >= n || b >= n {
                return Err(malformed(a.max(b), "arc endpoint out of range".into()));
            }
            if self.nodes[a].kind == self.nodes[b].kind {
                return Err(malformed(
                    b,
                    format!("arc {a} -> {b} joins two nodes of the same kind"),
                ));
            }
            outdeg[a] += 1;
            indeg[b] += 1;
        }
        for (i, node) in self.nodes.iter().enumerate() {
            if node.name.is_empty() {
                return Err(malformed(i, "empty name".into()));
            }
            if node.kind == NodeKind::Label {
                if indeg[i] != 1 || outdeg[i] != 1 {
                    return Err(malformed(
                        i,
                        format!(
                            "label has in-degree {} and out-degree {}",
                            indeg[i], outdeg[i]
                        ),
                    ));
                }
                if node.reversed != split_reversed(&node.name).1 {
                    return Err(malformed(
                        i,
                        "reversed flag disagrees with label name".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

pub fn to_levi(g: &AmrGraph) -> LeviGraph {
    let seq = linearize(g, LinearizeMode::Levi).expect("Levi linearization is total");
    let mut lv = LeviGraph::default();
    // Sequence entry t (t >= 1) becomes Levi node t - 1.
    for (t, entry) in seq.entries.iter().enumerate().skip(1) {
        let node = t - 1;
        match entry.kind {
            EntryKind::Concept => lv.nodes.push(LeviNode {
                kind: NodeKind::Concept,
                name: entry.name.clone(),
                reversed: false,
            }),
            EntryKind::Label => {
                lv.nodes.push(LeviNode {
                    kind: NodeKind::Label,
                    name: entry.name.clone(),
                    reversed: entry.name.ends_with(REVERSED_SUFFIX),
                });
                let arcs = &seq.arcs[t];
                let (earlier, later) = (arcs[0], *arcs.last().unwrap());
                lv.arcs.push((earlier - 1, node));
                lv.arcs.push((node, later - 1));
            }
            EntryKind::Root => unreachable!("root only at position 0"),
        }
    }
    lv
}

/// Inverse of [`to_levi`]; concepts are numbered in node order and the first
/// concept node is the root.
pub fn from_levi(lv: &LeviGraph) -> Result<AmrGraph, GraphError> {
    lv.validate()?;
    let mut id_of = vec![usize::MAX; lv.nodes.len()];
    let mut names = Vec::new();
    for (i, node) in lv.nodes.iter().enumerate() {
        if node.kind == NodeKind::Concept {
            id_of[i] = names.len();
            names.push(node.name.clone());
        }
    }
    if names.is_empty() {
        return Err(GraphError::Empty);
    }
    let mut source = vec![usize::MAX; lv.nodes.len()];
    let mut target = vec![usize::MAX; lv.nodes.len()];
    for &(a, b) in &lv.arcs {
        if lv.nodes[b].kind == NodeKind::Label {
            source[b] = a;
        } else {
            target[a] = b;
        }
    }
    let edges = lv
        .nodes
        .iter()
        .enumerate()
        .filter(|(_, n)| n.kind == NodeKind::Label)
        .map(|(i, n)| {
            let (base, _) = split_reversed(&n.name);
            let (s, t) = (id_of[source[i]], id_of[target[i]]);
            if n.reversed {
                AmrEdge::new(t, s, base)
            } else {
                AmrEdge::new(s, t, base)
            }
        });
    AmrGraph::from_parts(names, edges, 0)
}

/// Concept order that [`from_levi`] and [`to_levi`] agree on.
pub fn levi_concept_order(g: &AmrGraph) -> Vec<usize> {
    concept_order(g)
}
