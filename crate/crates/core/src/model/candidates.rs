use std::collections::HashMap;

use crate::corpus::{Sentence, Vocabulary};

/// Candidate list of the node decoder for one sentence: the generation
/// vocabulary, then tokens not in it, then lemmas not in either. Each name
/// appears once, so copy and generation mass for the same string add up.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidates {
    generated: usize,
    extra: Vec<String>,
    extra_index: HashMap<String, usize>,
    token_cols: Vec<usize>,
    lemma_cols: Vec<usize>,
}

impl Candidates {
    pub fn new(vocab: &Vocabulary, s: &Sentence) -> Self {
        let generated = vocab.nodes.len();
        let mut c = Candidates {
            generated,
            extra: Vec::new(),
            extra_index: HashMap::new(),
            token_cols: Vec::with_capacity(s.len()),
            lemma_cols: Vec::with_capacity(s.len()),
        };
        let col = |c: &mut Candidates, name: &str| -> usize {
            if let Some(i) = vocab.nodes.get(name) {
                return i;
            }
            if let Some(&i) = c.extra_index.get(name) {
                return i;
            }
            let i = generated + c.extra.len();
            c.extra.push(name.to_string());
            c.extra_index.insert(name.to_string(), i);
            i
        };
        for t in &s.tokens {
            let i = col(&mut c, &t.token);
            c.token_cols.push(i);
        }
        for t in &s.tokens {
            let i = col(&mut c, t.copy_lemma());
            c.lemma_cols.push(i);
        }
        c
    }

    pub fn len(&self) -> usize {
        self.generated + self.extra.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Size of the generation vocabulary at the head of the list.
    pub fn generated(&self) -> usize {
        self.generated
    }

    pub fn tokens(&self) -> usize {
        self.token_cols.len()
    }

    pub fn name<'a>(&'a self, vocab: &'a Vocabulary, i: usize) -> &'a str {
        if i < self.generated {
            vocab.nodes.name(i)
        } else {
            &self.extra[i - self.generated]
        }
    }

    pub fn index_of(&self, vocab: &Vocabulary, name: &str) -> Option<usize> {
        vocab
            .nodes
            .get(name)
            .or_else(|| self.extra_index.get(name).copied())
    }

    /// Column of token `i` (0-based) in the list.
    pub fn token_col(&self, i: usize) -> usize {
        self.token_cols[i]
    }

    pub fn lemma_col(&self, i: usize) -> usize {
        self.lemma_cols[i]
    }

    fn map(&self, cols: &[usize]) -> Vec<f64> {
        let w = self.len();
        let mut m = vec![0.0; cols.len() * w];
        for (i, &c) in cols.iter().enumerate() {
            m[i * w + c] = 1.0;
        }
        m
    }

    /// `n×|X|` 0/1 matrix sending token `i` to its candidate column.
    pub fn token_map(&self) -> Vec<f64> {
        self.map(&self.token_cols)
    }

    pub fn lemma_map(&self) -> Vec<f64> {
        self.map(&self.lemma_cols)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{build_vocab, parse_corpus, TokenFeatures};
    use crate::graph::LinearizeMode;

    #[test]
    fn duplicates_collapse_into_one_column() {
        let c = parse_corpus("# ::tok boy\n(b / boy)\n", None).examples;
        let v = build_vocab(&c, LinearizeMode::Concepts);
        let mut a = TokenFeatures::bare("boy");
        a.lemma = "boy".into();
        let mut b = TokenFeatures::bare("runs");
        b.lemma = "run".into();
        let s = Sentence {
            tokens: vec![a, TokenFeatures::bare("runs"), b],
            gold: None,
        };
        let x = Candidates::new(&v, &s);
        assert_eq!(x.len(), v.nodes.len() + 2);
        assert_eq!(x.token_col(0), v.nodes.get("boy").unwrap());
        assert_eq!(x.lemma_col(0), x.token_col(0));
        assert_eq!(x.token_col(1), x.token_col(2));
        assert_eq!(
            x.lemma_col(1),
            x.token_col(1),
            "absent lemma falls back to the token"
        );
        assert_eq!(x.name(&v, x.lemma_col(2)), "run");
        assert_eq!(x.index_of(&v, "run"), Some(x.lemma_col(2)));
        let m = x.token_map();
        assert_eq!(m.iter().sum::<f64>(), 3.0);
    }
}
