//! AMR graph data model.
//!
//! An [`AmrGraph`] is a rooted, directed, edge-labeled graph of concepts.
//! Concept identifiers are dense: the concept at position `i` has id `i`.
//! Edges are kept sorted by `(head, dependent, label)` so that structural
//! equality is multiset equality over edges.

pub mod levi;
pub mod linearize;
pub mod penman;
pub mod random;

use std::collections::{BTreeMap, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use levi::{from_levi, to_levi, LeviGraph, LeviNode, NodeKind};
pub use linearize::{
    concept_order, linearize, restore, restore_logged, split_reversed, ArcLabel, EntryKind,
    LinearizeMode, NodeSequence, Repair, SeqEntry, ROOT_NAME,
};
pub use penman::{emit_penman, parse_penman, PenmanError, PenmanErrorKind};

/// Suffix marking a relation whose direction is flipped in a decoder sequence.
pub const REVERSED_SUFFIX: &str = "_R";

pub type NodeId = usize;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Concept {
    pub id: NodeId,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AmrEdge {
    pub head: NodeId,
    pub dependent: NodeId,
    pub label: String,
}

impl AmrEdge {
    pub fn new(head: NodeId, dependent: NodeId, label: impl Into<String>) -> Self {
        AmrEdge {
            head,
            dependent,
            label: label.into(),
        }
    }

    /// The endpoint opposite to `id`, if `id` is an endpoint.
    pub fn other(&self, id: NodeId) -> Option<NodeId> {
        if self.head == id {
            Some(self.dependent)
        } else if self.dependent == id {
            Some(self.head)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("graph has no concepts")]
    Empty,
    #[error("concept at position {position} has id {id}; ids must be dense")]
    NonDenseId { position: usize, id: NodeId },
    #[error("concept {0} has an empty name")]
    EmptyName(NodeId),
    #[error("edge {head} -> {dependent} has an empty label")]
    EmptyLabel { head: NodeId, dependent: NodeId },
    #[error("edge label `{0}` uses the reserved `_R` suffix")]
    ReservedLabel(String),
    #[error("edge endpoint {0} is not a concept of the graph")]
    UnknownNode(NodeId),
    #[error("root {0} is not a concept of the graph")]
    RootMissing(NodeId),
    #[error("duplicate edge {head} -{label}-> {dependent}")]
    DuplicateEdge {
        head: NodeId,
        dependent: NodeId,
        label: String,
    },
    #[error("self-loop on concept {0}")]
    SelfLoop(NodeId),
    #[error("concept {0} is not connected to the root")]
    Disconnected(NodeId),
    #[error("malformed Levi graph at node {index}: {reason}")]
    MalformedLevi { index: usize, reason: String },
    #[error("malformed node sequence at entry {index}: {reason}")]
    MalformedSequence { index: usize, reason: String },
}

/// Non-fatal observations about a graph.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum GraphWarning {
    /// A directed cycle passes through this concept.
    Cycle(NodeId),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AmrGraph {
    concepts: Vec<Concept>,
    edges: Vec<AmrEdge>,
    root: NodeId,
}

impl AmrGraph {
    /// Builds a graph from concept names (ids assigned by position), edges and a root.
    pub fn from_parts<S: Into<String>>(
        names: impl IntoIterator<Item = S>,
        edges: impl IntoIterator<Item = AmrEdge>,
        root: NodeId,
    ) -> Result<Self, GraphError> {
        let concepts = names
            .into_iter()
            .enumerate()
            .map(|(id, name)| Concept {
                id,
                name: name.into(),
            })
            .collect();
        Self::new(concepts, edges.into_iter().collect(), root)
    }

    pub fn new(
        concepts: Vec<Concept>,
        mut edges: Vec<AmrEdge>,
        root: NodeId,
    ) -> Result<Self, GraphError> {
        if concepts.is_empty() {
            return Err(GraphError::Empty);
        }
        for (position, c) in concepts.iter().enumerate() {
            if c.id != position {
                return Err(GraphError::NonDenseId { position, id: c.id });
            }
            if c.name.is_empty() {
                return Err(GraphError::EmptyName(c.id));
            }
        }
        if root >= concepts.len() {
            return Err(GraphError::RootMissing(root));
        }
        for e in &edges {
            for id in [e.head, e.dependent] {
                if id >= concepts.len() {
                    return Err(GraphError::UnknownNode(id));
                }
            }
            if e.label.is_empty() {
                return Err(GraphError::EmptyLabel {
                    head: e.head,
                    dependent: e.dependent,
                });
            }
            if e.label.ends_with(REVERSED_SUFFIX) {
                return Err(GraphError::ReservedLabel(e.label.clone()));
            }
        }
        edges.sort();
        if let Some(w) = edges.windows(2).find(|w| w[0] == w[1]) {
            return Err(GraphError::DuplicateEdge {
                head: w[0].head,
                dependent: w[0].dependent,
                label: w[0].label.clone(),
            });
        }
        Ok(AmrGraph {
            concepts,
            edges,
            root,
        })
    }

    pub fn concepts(&self) -> &[Concept] {
        &self.concepts
    }

    pub fn edges(&self) -> &[AmrEdge] {
        &self.edges
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn len(&self) -> usize {
        self.concepts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.concepts.is_empty()
    }

    pub fn name(&self, id: NodeId) -> &str {
        &self.concepts[id].name
    }

    /// Edges touching `id`, in either direction.
    pub fn incident(&self, id: NodeId) -> impl Iterator<Item = &AmrEdge> {
        self.edges
            .iter()
            .filter(move |e| e.head == id || e.dependent == id)
    }

    /// Undirected adjacency: for each concept, `(neighbor, edge index)` pairs.
    pub(crate) fn adjacency(&self) -> Vec<Vec<(NodeId, usize)>> {
        let mut adj = vec![Vec::new(); self.len()];
        for (i, e) in self.edges.iter().enumerate() {
            adj[e.head].push((e.dependent, i));
            if e.head != e.dependent {
                adj[e.dependent].push((e.head, i));
            }
        }
        adj
    }

    /// Concepts reachable from the root, ignoring edge direction.
    pub fn reachable_from_root(&self) -> Vec<bool> {
        let adj = self.adjacency();
        let mut seen = vec![false; self.len()];
        let mut queue = VecDeque::from([self.root]);
        seen[self.root] = true;
        while let Some(u) = queue.pop_front() {
            for &(v, _) in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        seen
    }

    /// Checks the structural invariants that `new` does not enforce.
    ///
    /// Strict mode rejects self-loops and concepts disconnected from the root.
    /// Directed cycles are never fatal; they are reported as warnings.
    pub fn validate(&self, strict: bool) -> Result<Vec<GraphWarning>, GraphError> {
        if strict {
            if let Some(e) = self.edges.iter().find(|e| e.head == e.dependent) {
                return Err(GraphError::SelfLoop(e.head));
            }
            if let Some(id) = self.reachable_from_root().iter().position(|r| !r) {
                return Err(GraphError::Disconnected(id));
            }
        }
        Ok(self
            .cycle_nodes()
            .into_iter()
            .map(GraphWarning::Cycle)
            .collect())
    }

    /// Concepts lying on a directed cycle (self-loops included).
    pub fn cycle_nodes(&self) -> Vec<NodeId> {
        // Tarjan-free approach: a node is on a cycle iff it can reach itself.
        let n = self.len();
        let mut out = vec![Vec::new(); n];
        for e in &self.edges {
            out[e.head].push(e.dependent);
        }
        (0..n)
            .filter(|&start| {
                let mut seen = vec![false; n];
                let mut stack = out[start].clone();
                while let Some(u) = stack.pop() {
                    if u == start {
                        return true;
                    }
                    if !seen[u] {
                        seen[u] = true;
                        stack.extend(&out[u]);
                    }
                }
                false
            })
            .collect()
    }

    pub fn is_acyclic(&self) -> bool {
        self.cycle_nodes().is_empty()
    }

    /// Renumbers concepts so that `order[k]` becomes concept `k`.
    ///
    /// `order` must be a permutation of the concept ids.
    pub fn reordered(&self, order: &[NodeId]) -> AmrGraph {
        assert_eq!(order.len(), self.len(), "order must cover every concept");
        let mut new_id = vec![usize::MAX; self.len()];
        for (k, &old) in order.iter().enumerate() {
            new_id[old] = k;
        }
        let concepts = order
            .iter()
            .enumerate()
            .map(|(k, &old)| Concept {
                id: k,
                name: self.concepts[old].name.clone(),
            })
            .collect();
        let mut edges: Vec<AmrEdge> = self
            .edges
            .iter()
            .map(|e| AmrEdge::new(new_id[e.head], new_id[e.dependent], e.label.clone()))
            .collect();
        edges.sort();
        AmrGraph {
            concepts,
            edges,
            root: new_id[self.root],
        }
    }

    /// Structural isomorphism preserving names, labels, edge direction and root.
    pub fn is_isomorphic(&self, other: &AmrGraph) -> bool {
        if self.len() != other.len() || self.edges.len() != other.edges.len() {
            return false;
        }
        if self.name(self.root) != other.name(other.root) {
            return false;
        }
        let sig_a: Vec<_> = (0..self.len()).map(|i| self.signature(i)).collect();
        let sig_b: Vec<_> = (0..other.len()).map(|i| other.signature(i)).collect();
        let mut hist_a: BTreeMap<&NodeSignature, usize> = BTreeMap::new();
        let mut hist_b: BTreeMap<&NodeSignature, usize> = BTreeMap::new();
        for s in &sig_a {
            *hist_a.entry(s).or_default() += 1;
        }
        for s in &sig_b {
            *hist_b.entry(s).or_default() += 1;
        }
        if hist_a != hist_b {
            return false;
        }

        let mut edge_count_b: BTreeMap<(NodeId, NodeId), Vec<&str>> = BTreeMap::new();
        for e in &other.edges {
            edge_count_b
                .entry((e.head, e.dependent))
                .or_default()
                .push(&e.label);
        }
        let mut edge_count_a: BTreeMap<(NodeId, NodeId), Vec<&str>> = BTreeMap::new();
        for e in &self.edges {
            edge_count_a
                .entry((e.head, e.dependent))
                .or_default()
                .push(&e.label);
        }

        // Map nodes in BFS order from the root so that constraints bite early.
        let mut order = Vec::with_capacity(self.len());
        let adj = self.adjacency();
        let mut seen = vec![false; self.len()];
        for start in std::iter::once(self.root).chain(0..self.len()) {
            if seen[start] {
                continue;
            }
            seen[start] = true;
            let mut queue = VecDeque::from([start]);
            while let Some(u) = queue.pop_front() {
                order.push(u);
                for &(v, _) in &adj[u] {
                    if !seen[v] {
                        seen[v] = true;
                        queue.push_back(v);
                    }
                }
            }
        }

        let mut map = vec![usize::MAX; self.len()];
        let mut used = vec![false; other.len()];
        let ctx = IsoContext {
            order: &order,
            sig_a: &sig_a,
            sig_b: &sig_b,
            edges_a: &edge_count_a,
            edges_b: &edge_count_b,
            root_a: self.root,
            root_b: other.root,
        };
        ctx.extend(0, &mut map, &mut used)
    }

    fn signature(&self, id: NodeId) -> NodeSignature {
        let mut out: Vec<(String, String)> = Vec::new();
        let mut inc: Vec<(String, String)> = Vec::new();
        for e in &self.edges {
            if e.head == id {
                out.push((e.label.clone(), self.name(e.dependent).to_string()));
            }
            if e.dependent == id {
                inc.push((e.label.clone(), self.name(e.head).to_string()));
            }
        }
        out.sort();
        inc.sort();
        NodeSignature {
            name: self.name(id).to_string(),
            out,
            inc,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
struct NodeSignature {
    name: String,
    out: Vec<(String, String)>,
    inc: Vec<(String, String)>,
}

struct IsoContext<'a> {
    order: &'a [NodeId],
    sig_a: &'a [NodeSignature],
    sig_b: &'a [NodeSignature],
    edges_a: &'a BTreeMap<(NodeId, NodeId), Vec<&'a str>>,
    edges_b: &'a BTreeMap<(NodeId, NodeId), Vec<&'a str>>,
    root_a: NodeId,
    root_b: NodeId,
}

impl IsoContext<'_> {
    fn labels_between<'m>(
        edges: &'m BTreeMap<(NodeId, NodeId), Vec<&str>>,
        a: NodeId,
        b: NodeId,
    ) -> Vec<&'m str> {
        let mut labels: Vec<&str> = edges.get(&(a, b)).cloned().unwrap_or_default();
        labels.sort_unstable();
        labels
    }

    fn extend(&self, depth: usize, map: &mut [NodeId], used: &mut [bool]) -> bool {
        let Some(&u) = self.order.get(depth) else {
            return true;
        };
        for v in 0..self.sig_b.len() {
            if used[v] || self.sig_a[u] != self.sig_b[v] {
                continue;
            }
            if (u == self.root_a) != (v == self.root_b) {
                continue;
            }
            let consistent = self.order[..depth]
                .iter()
                .chain(std::iter::once(&u))
                .all(|&w| {
                    let mw = if w == u { v } else { map[w] };
                    Self::labels_between(self.edges_a, u, w)
                        == Self::labels_between(self.edges_b, v, mw)
                        && Self::labels_between(self.edges_a, w, u)
                            == Self::labels_between(self.edges_b, mw, v)
                });
            if !consistent {
                continue;
            }
            map[u] = v;
            used[v] = true;
            if self.extend(depth + 1, map, used) {
                return true;
            }
            used[v] = false;
            map[u] = usize::MAX;
        }
        false
    }
}

impl fmt::Display for AmrGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match emit_penman(self) {
            Ok(text) => f.write_str(&text),
            Err(_) => write!(
                f,
                "<graph: {} concepts, {} edges>",
                self.len(),
                self.edges.len()
            ),
        }
    }
}
