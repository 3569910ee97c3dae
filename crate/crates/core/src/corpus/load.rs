use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Sentence, TokenFeatures, TrainingExample, SENTINEL};
use crate::graph::parse_penman;

/// Why a sentence was skipped.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    /// Zero-based block position in the Penman file.
    pub index: usize,
    pub id: Option<String>,
    pub message: String,
}

impl std::fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match &self.id {
            Some(id) => write!(f, "block {} ({id}): {}", self.index, self.message),
            None => write!(f, "block {}: {}", self.index, self.message),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct LoadedCorpus {
    pub examples: Vec<TrainingExample>,
    pub diagnostics: Vec<Diagnostic>,
}

struct Block {
    metadata: Vec<(String, String)>,
    graph: String,
}

fn blocks(text: &str) -> Vec<Block> {
    let mut out = Vec::new();
    let mut cur = Block {
        metadata: Vec::new(),
        graph: String::new(),
    };
    let flush = |cur: &mut Block, out: &mut Vec<Block>| {
        if !cur.graph.trim().is_empty() {
            out.push(std::mem::replace(
                cur,
                Block {
                    metadata: Vec::new(),
                    graph: String::new(),
                },
            ));
        } else {
            cur.metadata.clear();
            cur.graph.clear();
        }
    };
    for line in text.lines() {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            flush(&mut cur, &mut out);
        } else if let Some(meta) = trimmed.strip_prefix("# ::") {
            for field in split_metadata(meta) {
                cur.metadata.push(field);
            }
        } else if trimmed.starts_with('#') {
            continue;
        } else {
            cur.graph.push_str(line);
            cur.graph.push('\n');
        }
    }
    flush(&mut cur, &mut out);
    out
}

/// A graph read without sentence requirements.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphRecord {
    pub id: Option<String>,
    pub graph: crate::graph::AmrGraph,
}

/// Reads every graph block of a Penman file; sentences are not required.
pub fn parse_graphs(text: &str) -> (Vec<GraphRecord>, Vec<Diagnostic>) {
    let mut graphs = Vec::new();
    let mut diagnostics = Vec::new();
    for (index, block) in blocks(text).into_iter().enumerate() {
        let id = block
            .metadata
            .iter()
            .find(|(k, _)| k == "id")
            .map(|(_, v)| v.clone());
        match parse_penman(&block.graph) {
            Ok(graph) => graphs.push(GraphRecord { id, graph }),
            Err(e) => diagnostics.push(Diagnostic {
                index,
                id,
                message: format!("graph: {e}"),
            }),
        }
    }
    (graphs, diagnostics)
}

/// `id x ::date y` carries two fields on one line; `tok` and `snt` lines are
/// taken verbatim.
fn split_metadata(meta: &str) -> Vec<(String, String)> {
    let meta = meta.trim();
    let kv = |part: &str| {
        let (k, v) = part.split_once(char::is_whitespace).unwrap_or((part, ""));
        (k.to_string(), v.trim().to_string())
    };
    if meta.starts_with("tok ") || meta.starts_with("snt ") {
        return vec![kv(meta)];
    }
    meta.split(" ::").map(kv).collect()
}

/// Parses feature blocks: one `token lemma pos ner` tab-separated line per
/// token, blank lines between sentences. Missing columns become the sentinel.
pub fn parse_features(text: &str) -> Vec<Vec<TokenFeatures>> {
    let mut out = Vec::new();
    let mut cur = Vec::new();
    for line in text.lines() {
        if line.trim().is_empty() {
            if !cur.is_empty() {
                out.push(std::mem::take(&mut cur));
            }
            continue;
        }
        let mut cols = line.split('\t').map(str::trim);
        let token = cols.next().unwrap_or_default().to_string();
        let mut next = || {
            cols.next()
                .filter(|c| !c.is_empty())
                .unwrap_or(SENTINEL)
                .to_string()
        };
        let (lemma, pos, ner) = (next(), next(), next());
        cur.push(TokenFeatures {
            token,
            lemma,
            pos,
            ner,
        });
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

/// Builds examples from Penman text and optional feature text. Problems are
/// reported per sentence and never abort the corpus.
pub fn parse_corpus(penman: &str, features: Option<&str>) -> LoadedCorpus {
    let feats = features.map(parse_features);
    let mut out = LoadedCorpus::default();
    for (index, block) in blocks(penman).into_iter().enumerate() {
        let meta = |k: &str| {
            block
                .metadata
                .iter()
                .find(|(key, _)| key == k)
                .map(|(_, v)| v.clone())
        };
        let id = meta("id");
        let mut skip = |message: String| {
            out.diagnostics.push(Diagnostic {
                index,
                id: id.clone(),
                message,
            })
        };
        let gold = match parse_penman(&block.graph) {
            Ok(g) => g,
            Err(e) => {
                skip(format!("graph: {e}"));
                continue;
            }
        };
        let words: Vec<String> = meta("tok")
            .or_else(|| meta("snt"))
            .map(|s| s.split_whitespace().map(String::from).collect())
            .unwrap_or_default();
        if words.is_empty() {
            skip("no `# ::tok` or `# ::snt` line".into());
            continue;
        }
        let tokens = match feats.as_ref().map(|f| f.get(index)) {
            None => words.into_iter().map(TokenFeatures::bare).collect(),
            Some(None) => {
                skip("no feature block for this sentence".into());
                continue;
            }
            Some(Some(rows)) => {
                if rows.len() != words.len() {
                    skip(format!(
                        "feature block has {} rows for {} tokens",
                        rows.len(),
                        words.len()
                    ));
                    continue;
                }
                if let Some((i, (r, w))) = rows
                    .iter()
                    .zip(&words)
                    .enumerate()
                    .find(|(_, (r, w))| &r.token != *w)
                {
                    skip(format!(
                        "feature token {i} is `{}`, expected `{w}`",
                        r.token
                    ));
                    continue;
                }
                rows.clone()
            }
        };
        out.examples.push(TrainingExample {
            id,
            metadata: block.metadata,
            sentence: Sentence {
                tokens,
                gold: Some(gold),
            },
        });
    }
    out
}

pub fn load_corpus(penman: &Path, features: Option<&Path>) -> std::io::Result<LoadedCorpus> {
    let text = fs::read_to_string(penman)?;
    let feats = features.map(fs::read_to_string).transpose()?;
    Ok(parse_corpus(&text, feats.as_deref()))
}

/// Reads raw input: one whitespace-tokenized sentence per nonblank line, with
/// optional aligned features.
pub fn load_sentences(path: &Path, features: Option<&Path>) -> std::io::Result<LoadedCorpus> {
    let text = fs::read_to_string(path)?;
    let feats = features
        .map(fs::read_to_string)
        .transpose()?
        .map(|f| parse_features(&f));
    let mut out = LoadedCorpus::default();
    for (index, line) in text.lines().filter(|l| !l.trim().is_empty()).enumerate() {
        let words: Vec<&str> = line.split_whitespace().collect();
        let tokens = match feats.as_ref().map(|f| f.get(index)) {
            None => words.iter().map(|w| TokenFeatures::bare(*w)).collect(),
            Some(Some(rows)) if rows.len() == words.len() => rows.clone(),
            Some(_) => {
                out.diagnostics.push(Diagnostic {
                    index,
                    id: None,
                    message: "feature block does not align with the sentence".into(),
                });
                continue;
            }
        };
        out.examples.push(TrainingExample {
            id: None,
            metadata: vec![("tok".into(), words.join(" "))],
            sentence: Sentence { tokens, gold: None },
        });
    }
    Ok(out)
}
