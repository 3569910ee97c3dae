use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::{TrainingExample, END_NAME};
use crate::graph::{split_reversed, EntryKind, LinearizeMode, REVERSED_SUFFIX, ROOT_NAME};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const ROOT: usize = 2;
pub const END: usize = 3;
/// Reserved entries at the head of every symbol index.
pub const SPECIALS: [&str; 4] = ["<pad>", "<unk>", ROOT_NAME, END_NAME];

/// Dense string index.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Index {
    items: Vec<String>,
    lookup: HashMap<String, usize>,
}

impl From<Vec<String>> for Index {
    fn from(items: Vec<String>) -> Self {
        let lookup = items
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i))
            .collect();
        Index { items, lookup }
    }
}

impl From<Index> for Vec<String> {
    fn from(index: Index) -> Self {
        index.items
    }
}

impl Index {
    fn with_specials() -> Self {
        Index::from(SPECIALS.iter().map(|s| s.to_string()).collect::<Vec<_>>())
    }

    /// Appends `name` unless present; returns its id.
    pub fn insert(&mut self, name: &str) -> usize {
        if let Some(&i) = self.lookup.get(name) {
            return i;
        }
        self.items.push(name.to_string());
        self.lookup.insert(name.to_string(), self.items.len() - 1);
        self.items.len() - 1
    }

    pub fn get(&self, name: &str) -> Option<usize> {
        self.lookup.get(name).copied()
    }

    pub fn id_or_unk(&self, name: &str) -> usize {
        self.get(name).unwrap_or(UNK)
    }

    pub fn name(&self, id: usize) -> &str {
        &self.items[id]
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.items.iter().map(String::as_str)
    }
}

/// Symbol inventories for one decoding mode.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    pub mode: LinearizeMode,
    /// Generation candidates: specials, then C, then in Levi mode each relation
    /// label followed by its `_R` twin.
    pub nodes: Index,
    /// Number of learned concepts in `nodes` (excluding specials and labels).
    pub concept_count: usize,
    /// Relation inventory R for the biaffine scorer; every label has its twin.
    pub relations: Index,
    pub tokens: Index,
    pub lemmas: Index,
    pub pos: Index,
    pub ner: Index,
    /// Characters of tokens and of node names.
    pub chars: Index,
}

impl Vocabulary {
    /// Learned label entries in `nodes` (zero in concept mode).
    pub fn label_count(&self) -> usize {
        self.nodes.len() - SPECIALS.len() - self.concept_count
    }

    /// Number of distinct base relation labels.
    pub fn relation_bases(&self) -> usize {
        self.relations.len() / 2
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("vocabulary serializes")
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }
}

/// Orders by descending count, then lexicographically.
fn ranked(counts: BTreeMap<String, usize>) -> Vec<String> {
    let mut v: Vec<(String, usize)> = counts.into_iter().collect();
    v.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    v.into_iter().map(|(s, _)| s).collect()
}

fn count<'a>(it: impl Iterator<Item = &'a str>) -> BTreeMap<String, usize> {
    let mut m = BTreeMap::new();
    for s in it {
        *m.entry(s.to_string()).or_insert(0) += 1;
    }
    m
}

fn index_of(counts: BTreeMap<String, usize>) -> Index {
    let mut idx = Index::with_specials();
    for s in ranked(counts) {
        idx.insert(&s);
    }
    idx
}

pub fn build_vocab(examples: &[TrainingExample], mode: LinearizeMode) -> Vocabulary {
    let graphs: Vec<_> = examples
        .iter()
        .filter_map(|e| e.sentence.gold.as_ref())
        .collect();
    let concept_counts = count(
        graphs
            .iter()
            .flat_map(|g| g.concepts().iter().map(|c| c.name.as_str())),
    );
    let label_counts = count(
        graphs
            .iter()
            .flat_map(|g| g.edges().iter().map(|e| split_reversed(&e.label).0)),
    );
    let labels = ranked(label_counts);

    let mut nodes = Index::with_specials();
    let mut concept_count = 0;
    for c in ranked(concept_counts) {
        if nodes.get(&c).is_none() {
            nodes.insert(&c);
            concept_count += 1;
        }
    }
    let mut relations = Index::default();
    for l in &labels {
        relations.insert(l);
        relations.insert(&format!("{l}{REVERSED_SUFFIX}"));
    }
    if mode == LinearizeMode::Levi {
        for r in relations.iter() {
            nodes.insert(r);
        }
    }

    let tokens = examples.iter().flat_map(|e| e.sentence.tokens.iter());
    let mut char_counts = count(std::iter::empty());
    for t in tokens.clone() {
        for ch in t.token.chars() {
            *char_counts.entry(ch.to_string()).or_insert(0) += 1;
        }
    }
    for name in nodes.iter().skip(SPECIALS.len()) {
        for ch in name.chars() {
            *char_counts.entry(ch.to_string()).or_insert(0) += 1;
        }
    }

    Vocabulary {
        mode,
        nodes,
        concept_count,
        relations,
        tokens: index_of(count(tokens.clone().map(|t| t.token.as_str()))),
        lemmas: index_of(count(tokens.clone().map(|t| t.lemma.as_str()))),
        pos: index_of(count(tokens.clone().map(|t| t.pos.as_str()))),
        ner: index_of(count(tokens.map(|t| t.ner.as_str()))),
        chars: index_of(char_counts),
    }
}

/// Node index of a sequence entry, before any copy resolution.
pub(crate) fn entry_node_id(vocab: &Vocabulary, kind: EntryKind, name: &str) -> usize {
    match kind {
        EntryKind::Root => ROOT,
        _ => vocab.nodes.id_or_unk(name),
    }
}
