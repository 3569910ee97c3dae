//! Smatch: triple-overlap F1 maximized over variable alignments.
//!
//! Alignment search is greedy hill climbing over injective variable mappings
//! (reassign one variable, or swap two), started from one name-matching
//! initialization plus `restarts` random ones.

use std::collections::HashSet;
use std::ops::AddAssign;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::graph::penman::is_constant_like;
use crate::graph::AmrGraph;

pub const DEFAULT_RESTARTS: usize = 4;

const KICKS_PER_VARIABLE: usize = 2;

const UNLABELED: &str = "<rel>";

/// Instance, attribute, relation and root triples of one graph.
///
/// Leaf constants with a single parent (numbers, quoted strings, `+`/`-`) are
/// folded into attribute triples `(var, label, constant)` like the reference
/// scorer does; every other concept is a variable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TripleSet {
    pub instances: Vec<String>,
    pub attributes: Vec<(usize, String, String)>,
    pub relations: Vec<(usize, String, usize)>,
    pub root: usize,
}

impl TripleSet {
    pub fn from_graph(g: &AmrGraph, labeled: bool) -> Self {
        let label = |l: &str| {
            if labeled {
                l.to_string()
            } else {
                UNLABELED.to_string()
            }
        };
        let mut degree = vec![0usize; g.len()];
        let mut outgoing = vec![0usize; g.len()];
        for e in g.edges() {
            degree[e.head] += 1;
            degree[e.dependent] += 1;
            outgoing[e.head] += 1;
        }
        let is_attr: Vec<bool> = (0..g.len())
            .map(|i| {
                i != g.root() && degree[i] == 1 && outgoing[i] == 0 && is_constant_like(g.name(i))
            })
            .collect();
        let mut var_of = vec![usize::MAX; g.len()];
        let mut instances = Vec::new();
        for (i, c) in g.concepts().iter().enumerate() {
            if !is_attr[i] {
                var_of[i] = instances.len();
                instances.push(c.name.clone());
            }
        }
        let mut attributes = Vec::new();
        let mut relations = Vec::new();
        for e in g.edges() {
            if is_attr[e.dependent] {
                attributes.push((
                    var_of[e.head],
                    label(&e.label),
                    g.name(e.dependent).to_string(),
                ));
            } else {
                relations.push((var_of[e.head], label(&e.label), var_of[e.dependent]));
            }
        }
        TripleSet {
            instances,
            attributes,
            relations,
            root: var_of[g.root()],
        }
    }

    pub fn vars(&self) -> usize {
        self.instances.len()
    }

    /// Triple count including the root triple.
    pub fn total(&self) -> usize {
        self.instances.len() + self.attributes.len() + self.relations.len() + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SmatchScore {
    pub matched: usize,
    pub pred_total: usize,
    pub gold_total: usize,
}

impl SmatchScore {
    pub fn precision(&self) -> f64 {
        ratio(self.matched, self.pred_total)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.matched, self.gold_total)
    }

    pub fn f1(&self) -> f64 {
        let total = self.pred_total + self.gold_total;
        if total == 0 {
            return 1.0;
        }
        2.0 * self.matched as f64 / total as f64
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

impl AddAssign for SmatchScore {
    fn add_assign(&mut self, rhs: Self) {
        self.matched += rhs.matched;
        self.pred_total += rhs.pred_total;
        self.gold_total += rhs.gold_total;
    }
}

/// Micro-averaged corpus score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorpusScore {
    pub pairs: usize,
    pub matched: usize,
    pub pred_total: usize,
    pub gold_total: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl CorpusScore {
    pub fn from_scores(scores: impl IntoIterator<Item = SmatchScore>) -> Self {
        let mut sum = SmatchScore::default();
        let mut pairs = 0;
        for s in scores {
            sum += s;
            pairs += 1;
        }
        CorpusScore {
            pairs,
            matched: sum.matched,
            pred_total: sum.pred_total,
            gold_total: sum.gold_total,
            precision: sum.precision(),
            recall: sum.recall(),
            f1: sum.f1(),
        }
    }
}

/// Precomputed scoring tables for one (pred, gold) pair.
struct Scorer {
    n_pred: usize,
    n_gold: usize,
    /// Instance + attribute + root matches for mapping pred i to gold j.
    node_weight: Vec<Vec<usize>>,
    pred_relations: Vec<(usize, String, usize)>,
    gold_relations: HashSet<(usize, String, usize)>,
}

impl Scorer {
    fn new(pred: &TripleSet, gold: &TripleSet) -> Self {
        let mut node_weight = vec![vec![0usize; gold.vars()]; pred.vars()];
        for (i, row) in node_weight.iter_mut().enumerate() {
            for (j, w) in row.iter_mut().enumerate() {
                if pred.instances[i] == gold.instances[j] {
                    *w += 1;
                }
                if i == pred.root && j == gold.root {
                    *w += 1;
                }
                // Multiset intersection of (label, constant) attributes.
                let mut gold_attrs: Vec<(&str, &str)> = gold
                    .attributes
                    .iter()
                    .filter(|a| a.0 == j)
                    .map(|a| (a.1.as_str(), a.2.as_str()))
                    .collect();
                for a in pred.attributes.iter().filter(|a| a.0 == i) {
                    if let Some(k) = gold_attrs
                        .iter()
                        .position(|g| *g == (a.1.as_str(), a.2.as_str()))
                    {
                        gold_attrs.swap_remove(k);
                        *w += 1;
                    }
                }
            }
        }
        Scorer {
            n_pred: pred.vars(),
            n_gold: gold.vars(),
            node_weight,
            pred_relations: pred.relations.clone(),
            gold_relations: gold.relations.iter().cloned().collect(),
        }
    }

    fn score(&self, mapping: &[Option<usize>]) -> usize {
        let nodes: usize = mapping
            .iter()
            .enumerate()
            .filter_map(|(i, m)| m.map(|j| self.node_weight[i][j]))
            .sum();
        let mut probe = (0, String::new(), 0);
        let rels = self
            .pred_relations
            .iter()
            .filter(|(a, l, b)| match (mapping[*a], mapping[*b]) {
                (Some(ma), Some(mb)) => {
                    probe.0 = ma;
                    probe.1.clone_from(l);
                    probe.2 = mb;
                    self.gold_relations.contains(&probe)
                }
                _ => false,
            })
            .count();
        nodes + rels
    }

    fn smart_init(
        &self,
        pred: &TripleSet,
        gold: &TripleSet,
        rng: &mut ChaCha8Rng,
    ) -> Vec<Option<usize>> {
        let mut used = vec![false; self.n_gold];
        let mut mapping = vec![None; self.n_pred];
        let mut order: Vec<usize> = (0..self.n_pred).collect();
        order.shuffle(rng);
        for i in order {
            let candidates: Vec<usize> = (0..self.n_gold)
                .filter(|&j| !used[j] && pred.instances[i] == gold.instances[j])
                .collect();
            if let Some(&j) = candidates.choose(rng) {
                used[j] = true;
                mapping[i] = Some(j);
            }
        }
        let mut free: Vec<usize> = (0..self.n_gold).filter(|&j| !used[j]).collect();
        free.shuffle(rng);
        for m in mapping.iter_mut().filter(|m| m.is_none()) {
            *m = free.pop();
        }
        mapping
    }

    fn random_init(&self, rng: &mut ChaCha8Rng) -> Vec<Option<usize>> {
        let mut gold: Vec<usize> = (0..self.n_gold).collect();
        gold.shuffle(rng);
        (0..self.n_pred).map(|i| gold.get(i).copied()).collect()
    }

    /// Climbs from `init`, then keeps kicking the local optimum with a random
    /// two-variable perturbation and re-climbing; keeps the best optimum seen.
    fn search(&self, init: Vec<Option<usize>>, rng: &mut ChaCha8Rng) -> usize {
        let (mut best, mut mapping) = self.climb(init);
        for _ in 0..KICKS_PER_VARIABLE * self.n_pred {
            let (score, candidate) = self.climb(self.perturb(&mapping, rng));
            if score >= best {
                best = score;
                mapping = candidate;
            }
        }
        best
    }

    fn perturb(&self, mapping: &[Option<usize>], rng: &mut ChaCha8Rng) -> Vec<Option<usize>> {
        let mut out = mapping.to_vec();
        if self.n_pred == 0 || self.n_gold == 0 {
            return out;
        }
        for _ in 0..2 {
            let i = rng.gen_range(0..self.n_pred);
            let j = rng.gen_range(0..self.n_gold);
            match out.iter().position(|m| *m == Some(j)) {
                Some(k) => out.swap(i, k),
                None => out[i] = Some(j),
            }
        }
        out
    }

    fn climb(&self, mut mapping: Vec<Option<usize>>) -> (usize, Vec<Option<usize>>) {
        let mut current = self.score(&mapping);
        loop {
            let mut used = vec![false; self.n_gold];
            for j in mapping.iter().flatten() {
                used[*j] = true;
            }
            let mut best: Option<(usize, Vec<Option<usize>>)> = None;
            let consider =
                |candidate: Vec<Option<usize>>, best: &mut Option<(usize, Vec<Option<usize>>)>| {
                    let s = self.score(&candidate);
                    if s > best.as_ref().map_or(current, |b| b.0) {
                        *best = Some((s, candidate));
                    }
                };
            for i in 0..self.n_pred {
                for j in (0..self.n_gold).filter(|&j| !used[j]) {
                    let mut cand = mapping.clone();
                    cand[i] = Some(j);
                    consider(cand, &mut best);
                }
                for k in i + 1..self.n_pred {
                    if mapping[i] == mapping[k] {
                        continue;
                    }
                    let mut cand = mapping.clone();
                    cand.swap(i, k);
                    consider(cand, &mut best);
                }
            }
            match best {
                Some((s, cand)) => {
                    current = s;
                    mapping = cand;
                }
                None => return (current, mapping),
            }
        }
    }
}

fn graph_seed(pred: &TripleSet, gold: &TripleSet) -> u64 {
    // FNV-1a over the concept inventories and sizes.
    let mut h: u64 = 0xcbf29ce484222325;
    let mut feed = |bytes: &[u8]| {
        for b in bytes {
            h ^= *b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
    };
    for t in [pred, gold] {
        for c in &t.instances {
            feed(c.as_bytes());
            feed(&[0]);
        }
        feed(&(t.relations.len() as u64).to_le_bytes());
        feed(&(t.attributes.len() as u64).to_le_bytes());
    }
    h
}

fn best_match(pred: &TripleSet, gold: &TripleSet, restarts: usize, seed: u64) -> SmatchScore {
    let scorer = Scorer::new(pred, gold);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = 0;
    for r in 0..=restarts {
        let init = if r == 0 {
            scorer.smart_init(pred, gold, &mut rng)
        } else {
            scorer.random_init(&mut rng)
        };
        best = best.max(scorer.search(init, &mut rng));
    }
    SmatchScore {
        matched: best,
        pred_total: pred.total(),
        gold_total: gold.total(),
    }
}

/// Labeled Smatch with a seed derived from the pair's contents.
pub fn smatch(pred: &AmrGraph, gold: &AmrGraph, restarts: usize) -> SmatchScore {
    let p = TripleSet::from_graph(pred, true);
    let g = TripleSet::from_graph(gold, true);
    let seed = graph_seed(&p, &g);
    best_match(&p, &g, restarts, seed)
}

pub fn smatch_seeded(pred: &AmrGraph, gold: &AmrGraph, restarts: usize, seed: u64) -> SmatchScore {
    let p = TripleSet::from_graph(pred, true);
    let g = TripleSet::from_graph(gold, true);
    best_match(&p, &g, restarts, seed)
}

/// Smatch with every relation and attribute label replaced by one dummy label.
pub fn smatch_unlabeled(pred: &AmrGraph, gold: &AmrGraph, restarts: usize) -> SmatchScore {
    let p = TripleSet::from_graph(pred, false);
    let g = TripleSet::from_graph(gold, false);
    let seed = graph_seed(&p, &g);
    best_match(&p, &g, restarts, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::random::random_graph_from;
    use crate::graph::{parse_penman, AmrEdge};
    use rand::Rng;

    const WANT_BELIEVE: &str =
        "(w / want :ARG0 (b / boy) :ARG1 (b2 / believe :ARG0 (g / girl) :ARG1 b))";

    /// Exhaustive search over every injective partial mapping.
    fn oracle(pred: &TripleSet, gold: &TripleSet) -> usize {
        let scorer = Scorer::new(pred, gold);
        fn go(s: &Scorer, i: usize, map: &mut Vec<Option<usize>>, used: &mut Vec<bool>) -> usize {
            if i == s.n_pred {
                return s.score(map);
            }
            map[i] = None;
            let mut best = go(s, i + 1, map, used);
            for j in 0..s.n_gold {
                if !used[j] {
                    used[j] = true;
                    map[i] = Some(j);
                    best = best.max(go(s, i + 1, map, used));
                    used[j] = false;
                }
            }
            map[i] = None;
            best
        }
        go(
            &scorer,
            0,
            &mut vec![None; pred.vars()],
            &mut vec![false; gold.vars()],
        )
    }

    #[test]
    fn identical_graphs_score_one() {
        let g = parse_penman(WANT_BELIEVE).unwrap();
        let s = smatch(&g, &g, DEFAULT_RESTARTS);
        assert_eq!((s.precision(), s.recall(), s.f1()), (1.0, 1.0, 1.0));
        assert_eq!(s.matched, 4 + 4 + 1);
    }

    #[test]
    fn one_missing_edge() {
        // Gold: 4 instances + 4 relations + root = 9 triples.
        // Pred drops believe -ARG1-> boy: 8 triples, all matched.
        let gold = parse_penman(WANT_BELIEVE).unwrap();
        let pred = parse_penman("(w / want :ARG0 (b / boy) :ARG1 (b2 / believe :ARG0 (g / girl)))")
            .unwrap();
        let s = smatch(&pred, &gold, DEFAULT_RESTARTS);
        assert_eq!((s.matched, s.pred_total, s.gold_total), (8, 8, 9));
        assert_eq!(s.precision(), 1.0);
        assert_eq!(s.recall(), 8.0 / 9.0);
        assert!((s.f1() - 16.0 / 17.0).abs() < 1e-12);
    }

    #[test]
    fn attributes_fold_into_triples() {
        let g = parse_penman("(a / alpha :polarity - :quant 5)").unwrap();
        let t = TripleSet::from_graph(&g, true);
        assert_eq!(t.instances, vec!["alpha"]);
        assert_eq!(t.attributes.len(), 2);
        assert_eq!(t.total(), 4);
        let other = parse_penman("(a / alpha :polarity - :quant 6)").unwrap();
        assert_eq!(smatch(&other, &g, 4).matched, 3);
    }

    #[test]
    fn unlabeled_ignores_relation_names() {
        let gold = parse_penman(WANT_BELIEVE).unwrap();
        let pred = parse_penman(
            "(w / want :ARG0 (b / boy) :ARG1 (b2 / believe :ARG0 (g / girl) :ARG2 b))",
        )
        .unwrap();
        assert_eq!(smatch_unlabeled(&pred, &gold, 4).f1(), 1.0);
        assert!(smatch(&pred, &gold, 4).f1() < 1.0);
    }

    #[test]
    fn renaming_variables_changes_nothing() {
        let g = parse_penman(WANT_BELIEVE).unwrap();
        let r = g.reordered(&[3, 1, 0, 2]);
        assert_eq!(smatch(&r, &g, 4).f1(), 1.0);
    }

    #[test]
    fn symmetric_under_swap() {
        let a = parse_penman(WANT_BELIEVE).unwrap();
        let b = parse_penman("(w / want :ARG0 (b / boy) :ARG1 (g / go :ARG0 b))").unwrap();
        let ab = smatch(&a, &b, 4);
        let ba = smatch(&b, &a, 4);
        assert_eq!(ab.matched, ba.matched);
        assert_eq!(ab.precision(), ba.recall());
        assert_eq!(ab.f1(), ba.f1());
    }

    #[test]
    fn hill_climbing_matches_exhaustive_oracle() {
        let names = ["a", "b", "c", "d"];
        let labels = ["ARG0", "ARG1", "mod"];
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let gold = random_graph_from(&mut rng, 6, 8, &names, &labels);
            let pred = if rng.gen_bool(0.5) {
                random_graph_from(&mut rng, 6, 8, &names, &labels)
            } else {
                let mut edges: Vec<AmrEdge> = gold.edges().to_vec();
                if !edges.is_empty() {
                    let k = rng.gen_range(0..edges.len());
                    edges.remove(k);
                }
                let order: Vec<usize> = (0..gold.len()).rev().collect();
                AmrGraph::from_parts(
                    gold.concepts().iter().map(|c| c.name.clone()),
                    edges,
                    gold.root(),
                )
                .unwrap()
                .reordered(&order)
            };
            let p = TripleSet::from_graph(&pred, true);
            let g = TripleSet::from_graph(&gold, true);
            let s = smatch(&pred, &gold, DEFAULT_RESTARTS);
            assert_eq!(s.matched, oracle(&p, &g), "{pred} vs {gold}");
        }
    }

    #[test]
    fn corpus_score_is_micro_averaged() {
        let a = SmatchScore {
            matched: 1,
            pred_total: 2,
            gold_total: 2,
        };
        let b = SmatchScore {
            matched: 3,
            pred_total: 3,
            gold_total: 6,
        };
        let c = CorpusScore::from_scores([a, b]);
        assert_eq!(c.pairs, 2);
        assert_eq!(c.precision, 4.0 / 5.0);
        assert_eq!(c.recall, 4.0 / 8.0);
    }
}
