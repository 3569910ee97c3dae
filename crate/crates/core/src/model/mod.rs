//! Text and graph encoders, the graph transformer, and the node, arc and
//! relation decoders.
//!
//! The graph transformer uses the target-token encoding `e^t_0` as its only
//! query and attends over `[e^t_1..e^t_n; e^v_0..e^v_m]`. The graph encoder is
//! causal, so node encodings of a prefix never depend on later nodes and one
//! encoding of the gold sequence serves every teacher-forced step.

mod candidates;
mod config;
mod count;
mod decode;
mod layers;

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{entry_node_id, Sentence, Vocabulary, ROOT, UNK};
use crate::graph::{EntryKind, SeqEntry};
use crate::tensor::{
    checkpoint, ParamId, ParamStore, Precision, Result as TResult, Tape, Tensor, TensorError, Var,
};

pub use candidates::Candidates;
pub use config::{ConfigError, ParserConfig, Variant};
pub use count::{count_parameters, ParamCounts, VocabSizes};
pub use decode::{threshold_arcs, AttentionTrace, Parse, StepPrediction};

use layers::{causal_mask, positions, Builder, CharCnn, Encoder, FeedForward, LayerNorm, Linear};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("variant {variant} needs a {expected:?} vocabulary")]
    ModeMismatch {
        variant: Variant,
        expected: crate::graph::LinearizeMode,
    },
    #[error("sentence has no tokens")]
    EmptySentence,
    #[error("model files: {0}")]
    Io(#[from] std::io::Error),
    #[error("vocabulary file: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Graph(#[from] crate::graph::GraphError),
}

/// Encoder outputs for one sentence and node prefix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderState {
    /// `(n+1)×d`; row 0 encodes the target token.
    pub et: Tensor,
    /// `(m+1)×d`; row 0 encodes the root.
    pub ev: Tensor,
}

/// Final-layer attention of the graph transformer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionOutput {
    /// One distribution of length `n+m+1` per head.
    pub alpha: Vec<Vec<f64>>,
    pub beta_plus: Vec<f64>,
    /// First `n` entries of the first head, as stored (not renormalized).
    pub alpha_token: Vec<f64>,
    /// Head-wise maximum over the last `m+1` positions.
    pub alpha_arc: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeDecoderOutput {
    /// `g(C)`, `g(W)`, `g(L)`.
    pub gates: [f64; 3],
    pub o_node: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiaffineOutput {
    pub o_arc: Vec<f64>,
    /// `m` rows, each a distribution over relations.
    pub o_rel: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
struct TextEncoder {
    tok: ParamId,
    lemma: ParamId,
    pos: ParamId,
    ner: ParamId,
    chars: CharCnn,
    proj: Linear,
    enc: Encoder,
}

#[derive(Debug, Clone)]
struct GraphEncoder {
    node: ParamId,
    chars: CharCnn,
    proj: Linear,
    enc: Encoder,
}

#[derive(Debug, Clone)]
struct GtLayer {
    wq: Vec<ParamId>,
    wk: Vec<ParamId>,
    wv: Vec<ParamId>,
    wo: ParamId,
    /// Residual, normalization and feed-forward between layers; absent on the
    /// final layer.
    post: Option<(LayerNorm, FeedForward, LayerNorm)>,
}

#[derive(Debug, Clone)]
struct BiaffineParams {
    arc_dep: Linear,
    arc_head: Linear,
    rel_dep: Linear,
    rel_head: Linear,
    u_arc: ParamId,
    u_rel: ParamId,
}

#[derive(Debug, Clone)]
struct Net {
    text: TextEncoder,
    graph: GraphEncoder,
    gt: Vec<GtLayer>,
    gate: ParamId,
    gen: ParamId,
    biaffine: Option<BiaffineParams>,
}

/// A parser: configuration, vocabulary, parameters.
#[derive(Debug, Clone)]
pub struct Model {
    pub config: ParserConfig,
    pub vocab: Vocabulary,
    pub params: ParamStore,
    net: Net,
}

/// Tape handles for one step's graph attention.
#[derive(Debug, Clone)]
pub struct AttnVars {
    pub alphas: Vec<Var>,
    pub beta_plus: Var,
    pub alpha_token: Var,
    pub alpha_arc: Var,
}

#[derive(Debug, Clone, Copy)]
pub struct NodeVars {
    /// `1×3` gate distribution.
    pub gates: Var,
    /// `1×|X|` candidate distribution.
    pub o_node: Var,
}

#[derive(Debug, Clone, Copy)]
pub struct BiaffineVars {
    /// `1×m` arc probabilities for prefix entries `1..=m`.
    pub o_arc: Var,
    /// `m×|R|` relation distributions.
    pub o_rel: Var,
}

#[derive(Debug, Clone)]
pub struct StepVars {
    pub attn: AttnVars,
    pub node: NodeVars,
    pub biaffine: Option<BiaffineVars>,
}

/// Per-sentence encodings and projections shared by all steps.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub n: usize,
    pub et: Var,
    pub ev: Var,
    /// Last text-encoder layer attention, one matrix per head.
    pub text_attn: Vec<Var>,
    keys: Vec<Vec<Var>>,
    values: Vec<Vec<Var>>,
    pub candidates: Candidates,
}

impl Model {
    pub fn new(config: ParserConfig, vocab: Vocabulary, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        if config.variant.mode() != vocab.mode {
            return Err(ModelError::ModeMismatch {
                variant: config.variant,
                expected: config.variant.mode(),
            });
        }
        let mut params = ParamStore::new();
        let net = build(&config, &vocab, &mut Builder::new(&mut params, seed));
        Ok(Model {
            config,
            vocab,
            params,
            net,
        })
    }

    pub fn save(&self, dir: &Path) -> Result<(), ModelError> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("config.toml"), self.config.to_toml())?;
        std::fs::write(dir.join("vocab.json"), self.vocab.to_json())?;
        checkpoint::save(&self.params, &dir.join("params.ckpt"))?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self, ModelError> {
        let config = ParserConfig::from_file(&dir.join("config.toml"))?;
        let vocab = Vocabulary::from_json(&std::fs::read_to_string(dir.join("vocab.json"))?)?;
        let mut model = Model::new(config, vocab, 0)?;
        let stored = checkpoint::load(&dir.join("params.ckpt"))?;
        if stored.len() != model.params.len() {
            return Err(TensorError::Checkpoint(format!(
                "checkpoint has {} parameters, model has {}",
                stored.len(),
                model.params.len()
            ))
            .into());
        }
        model.params.load_values(&stored)?;
        Ok(model)
    }

    fn char_ids(&self, word: &str) -> Vec<usize> {
        let mut buf = [0u8; 4];
        let ids: Vec<usize> = word
            .chars()
            .map(|c| self.vocab.chars.id_or_unk(c.encode_utf8(&mut buf)))
            .collect();
        if ids.is_empty() {
            vec![UNK]
        } else {
            ids
        }
    }

    /// Records the text encoder; returns `E^t` and the last layer's attention.
    pub fn text_vars(&self, t: &mut Tape, s: &Sentence) -> TResult<(Var, Vec<Var>)> {
        let v = &self.vocab;
        let n = s.len();
        let mut ids: [Vec<usize>; 4] = std::array::from_fn(|_| vec![ROOT]);
        let mut chars = vec![vec![ROOT]];
        for tk in &s.tokens {
            ids[0].push(v.tokens.id_or_unk(&tk.token));
            ids[1].push(v.lemmas.id_or_unk(&tk.lemma));
            ids[2].push(v.pos.id_or_unk(&tk.pos));
            ids[3].push(v.ner.id_or_unk(&tk.ner));
            chars.push(self.char_ids(&tk.token));
        }
        let te = &self.net.text;
        let mut parts = Vec::with_capacity(5);
        for (table, ids) in [te.tok, te.lemma, te.pos, te.ner].into_iter().zip(&ids) {
            let p = t.param(table);
            parts.push(t.gather_rows(p, ids)?);
        }
        parts.push(te.chars.forward(t, &chars)?);
        let x = t.concat_cols(&parts)?;
        let x = te.proj.forward(t, x)?;
        let d = self.config.d;
        let pe = t.constant(n + 1, d, positions(0, n + 1, d))?;
        let x = t.add(x, pe)?;
        te.enc.forward(t, x, None)
    }

    /// Records the causal graph encoder over sequence entries; returns `E^v`.
    pub fn graph_vars(&self, t: &mut Tape, entries: &[SeqEntry]) -> TResult<Var> {
        let ids: Vec<usize> = entries
            .iter()
            .map(|e| entry_node_id(&self.vocab, e.kind, &e.name))
            .collect();
        let chars: Vec<Vec<usize>> = entries
            .iter()
            .map(|e| match e.kind {
                EntryKind::Root => vec![ROOT],
                _ => self.char_ids(&e.name),
            })
            .collect();
        let ge = &self.net.graph;
        let table = t.param(ge.node);
        let emb = t.gather_rows(table, &ids)?;
        let c = ge.chars.forward(t, &chars)?;
        let x = t.concat_cols(&[emb, c])?;
        let x = ge.proj.forward(t, x)?;
        let (rows, d) = (entries.len(), self.config.d);
        let pe = t.constant(rows, d, positions(0, rows, d))?;
        let x = t.add(x, pe)?;
        let mask = if rows > 1 {
            Some(t.constant(rows, rows, causal_mask(rows))?)
        } else {
            None
        };
        Ok(ge.enc.forward(t, x, mask)?.0)
    }

    /// Encodes the sentence and the node entries available as prefixes, and
    /// projects the attention memory once.
    pub fn prepare(&self, t: &mut Tape, s: &Sentence, entries: &[SeqEntry]) -> TResult<Prepared> {
        let (et, text_attn) = self.text_vars(t, s)?;
        let ev = self.graph_vars(t, entries)?;
        self.prepare_from(t, s, et, ev, text_attn)
    }

    fn prepare_from(
        &self,
        t: &mut Tape,
        s: &Sentence,
        et: Var,
        ev: Var,
        text_attn: Vec<Var>,
    ) -> TResult<Prepared> {
        let n = t.shape(et).0 - 1;
        let toks = t.slice_rows(et, 1, n)?;
        let mem = t.concat_rows(&[toks, ev])?;
        let mut keys = Vec::with_capacity(self.net.gt.len());
        let mut values = Vec::with_capacity(self.net.gt.len());
        for layer in &self.net.gt {
            let mut k = Vec::with_capacity(layer.wk.len());
            let mut v = Vec::with_capacity(layer.wv.len());
            for (&wk, &wv) in layer.wk.iter().zip(&layer.wv) {
                let wk = t.param(wk);
                k.push(t.matmul(mem, wk)?);
                let wv = t.param(wv);
                v.push(t.matmul(mem, wv)?);
            }
            keys.push(k);
            values.push(v);
        }
        Ok(Prepared {
            n,
            et,
            ev,
            text_attn,
            keys,
            values,
            candidates: Candidates::new(&self.vocab, s),
        })
    }

    /// Graph-transformer attention for a prefix of `m+1` nodes.
    pub fn attend(&self, t: &mut Tape, p: &Prepared, m: usize) -> TResult<AttnVars> {
        let k = p.n + m + 1;
        let scale = 1.0 / (self.config.d as f64).sqrt();
        let mut q = t.slice_rows(p.et, 0, 1)?;
        let mut alphas = Vec::new();
        let mut beta_plus = q;
        for (l, layer) in self.net.gt.iter().enumerate() {
            alphas.clear();
            let mut betas = Vec::with_capacity(layer.wq.len());
            for h in 0..layer.wq.len() {
                let wq = t.param(layer.wq[h]);
                let qh = t.matmul(q, wq)?;
                let kh = t.slice_rows(p.keys[l][h], 0, k)?;
                let s = t.matmul_t(qh, kh)?;
                let s = t.scale(s, scale);
                let a = t.softmax_rows(s);
                let vh = t.slice_rows(p.values[l][h], 0, k)?;
                betas.push(t.matmul(a, vh)?);
                alphas.push(a);
            }
            let cat = t.concat_cols(&betas)?;
            let wo = t.param(layer.wo);
            beta_plus = t.matmul(cat, wo)?;
            if let Some((ln1, ff, ln2)) = &layer.post {
                let r = t.add(q, beta_plus)?;
                let r = ln1.forward(t, r)?;
                let f = ff.forward(t, r)?;
                let r = t.add(r, f)?;
                q = ln2.forward(t, r)?;
            }
        }
        let alpha_token = t.slice_cols(alphas[0], 0, p.n)?;
        let stacked = t.concat_rows(&alphas)?;
        let mx = t.max_over(stacked, 0)?;
        let alpha_arc = t.slice_cols(mx, p.n, m + 1)?;
        Ok(AttnVars {
            alphas,
            beta_plus,
            alpha_token,
            alpha_arc,
        })
    }

    /// Node decoder over the deduplicated candidate list.
    pub fn node_vars(
        &self,
        t: &mut Tape,
        beta_plus: Var,
        alpha_token: Var,
        c: &Candidates,
    ) -> TResult<NodeVars> {
        let n = c.tokens();
        let total = c.len();
        let gate_w = t.param(self.net.gate);
        let g = t.matmul(beta_plus, gate_w)?;
        let gates = t.softmax_rows(g);
        let gen_w = t.param(self.net.gen);
        let gen = t.matmul(beta_plus, gen_w)?;
        let mut gen = t.softmax_rows(gen);
        if total > c.generated() {
            let pad = t.constant(1, total - c.generated(), vec![0.0; total - c.generated()])?;
            gen = t.concat_cols(&[gen, pad])?;
        }
        let s = t.sum(alpha_token);
        let inv = t.recip(s);
        let a = t.mul_scalar(alpha_token, inv)?;
        let wmap = t.constant(n, total, c.token_map())?;
        let lmap = t.constant(n, total, c.lemma_map())?;
        let cw = t.matmul(a, wmap)?;
        let cl = t.matmul(a, lmap)?;
        let mut terms = Vec::with_capacity(3);
        for (i, part) in [gen, cw, cl].into_iter().enumerate() {
            let gi = t.slice_cols(gates, i, 1)?;
            terms.push(t.mul_scalar(part, gi)?);
        }
        let o = t.add(terms[0], terms[1])?;
        let o_node = t.add(o, terms[2])?;
        Ok(NodeVars { gates, o_node })
    }

    /// Deep biaffine arc and relation scores with `β^⊕` as the head and prefix
    /// entries `1..=m` as dependents. `None` when `m = 0` or the variant has no
    /// biaffine scorer.
    pub fn biaffine_vars(
        &self,
        t: &mut Tape,
        beta_plus: Var,
        ev: Var,
        m: usize,
    ) -> TResult<Option<BiaffineVars>> {
        let Some(b) = &self.net.biaffine else {
            return Ok(None);
        };
        if m == 0 {
            return Ok(None);
        }
        let deps = t.slice_rows(ev, 1, m)?;
        let ones_m = t.constant(m, 1, vec![1.0; m])?;
        let ones_1 = t.constant(1, 1, vec![1.0])?;
        let mlp = |t: &mut Tape, lin: &Linear, x: Var, ones: Var| -> TResult<Var> {
            let h = lin.forward(t, x)?;
            let h = t.gelu(h);
            t.concat_cols(&[h, ones])
        };
        let ad = mlp(t, &b.arc_dep, deps, ones_m)?;
        let ah = mlp(t, &b.arc_head, beta_plus, ones_1)?;
        let rd = mlp(t, &b.rel_dep, deps, ones_m)?;
        let rh = mlp(t, &b.rel_head, beta_plus, ones_1)?;

        let u = t.param(b.u_arc);
        let du = t.matmul(ad, u)?;
        let s = t.matmul_t(du, ah)?;
        let s = t.reshape(s, 1, m)?;
        let o_arc = t.sigmoid(s);

        let hb1 = self.config.biaffine_hidden + 1;
        let r = self.vocab.relations.len().max(1);
        let ur = t.param(b.u_rel);
        let hp = t.matmul_t(ur, rh)?;
        let hp = t.reshape(hp, r, hb1)?;
        let scores = t.matmul_t(rd, hp)?;
        let o_rel = t.softmax_rows(scores);
        Ok(Some(BiaffineVars { o_arc, o_rel }))
    }

    /// All decoder outputs for the step that follows prefix entries `0..=m`.
    pub fn step_vars(&self, t: &mut Tape, p: &Prepared, m: usize) -> TResult<StepVars> {
        let attn = self.attend(t, p, m)?;
        let node = self.node_vars(t, attn.beta_plus, attn.alpha_token, &p.candidates)?;
        let biaffine = if self.config.variant.uses_biaffine() {
            self.biaffine_vars(t, attn.beta_plus, p.ev, m)?
        } else {
            None
        };
        Ok(StepVars {
            attn,
            node,
            biaffine,
        })
    }

    fn tape(&self, precision: Precision) -> Tape<'_> {
        Tape::with_precision(&self.params, precision)
    }

    pub fn encode_text(&self, s: &Sentence) -> Result<Tensor, ModelError> {
        if s.is_empty() {
            return Err(ModelError::EmptySentence);
        }
        let mut t = self.tape(Precision::F64);
        let (et, _) = self.text_vars(&mut t, s)?;
        Ok(to_tensor(&t, et))
    }

    pub fn encode_graph(&self, entries: &[SeqEntry]) -> Result<Tensor, ModelError> {
        let mut t = self.tape(Precision::F64);
        let ev = self.graph_vars(&mut t, entries)?;
        Ok(to_tensor(&t, ev))
    }

    /// Graph-transformer attention over given encodings.
    pub fn graph_attention(&self, state: &EncoderState) -> Result<AttentionOutput, ModelError> {
        let mut t = self.tape(Precision::F64);
        let (p, m) = self.prepared_from_state(
            &mut t,
            state,
            &Sentence {
                tokens: Vec::new(),
                gold: None,
            },
        )?;
        let a = self.attend(&mut t, &p, m)?;
        Ok(AttentionOutput {
            alpha: a.alphas.iter().map(|v| t.value(*v).to_vec()).collect(),
            beta_plus: t.value(a.beta_plus).to_vec(),
            alpha_token: t.value(a.alpha_token).to_vec(),
            alpha_arc: t.value(a.alpha_arc).to_vec(),
        })
    }

    fn prepared_from_state(
        &self,
        t: &mut Tape,
        state: &EncoderState,
        s: &Sentence,
    ) -> TResult<(Prepared, usize)> {
        let (er, ec) = state.et.dims();
        let (vr, vc) = state.ev.dims();
        let et = t.constant(er, ec, state.et.values().to_vec())?;
        let ev = t.constant(vr, vc, state.ev.values().to_vec())?;
        Ok((self.prepare_from(t, s, et, ev, Vec::new())?, vr - 1))
    }

    /// Node decoder on given `β^⊕` and stored `α^⊘` for a sentence.
    pub fn node_decode(
        &self,
        beta_plus: &[f64],
        alpha_token: &[f64],
        s: &Sentence,
    ) -> Result<NodeDecoderOutput, ModelError> {
        let mut t = self.tape(Precision::F64);
        let c = Candidates::new(&self.vocab, s);
        let b = t.constant(1, beta_plus.len(), beta_plus.to_vec())?;
        let a = t.constant(1, alpha_token.len(), alpha_token.to_vec())?;
        let out = self.node_vars(&mut t, b, a, &c)?;
        let g = t.value(out.gates);
        Ok(NodeDecoderOutput {
            gates: [g[0], g[1], g[2]],
            o_node: t.value(out.o_node).to_vec(),
        })
    }

    /// Biaffine outputs for `β^⊕` and encodings `E^v`; rows `1..` are the
    /// dependents.
    pub fn biaffine_decode(
        &self,
        beta_plus: &[f64],
        ev: &Tensor,
    ) -> Result<BiaffineOutput, ModelError> {
        let mut t = self.tape(Precision::F64);
        let (r, c) = ev.dims();
        let b = t.constant(1, beta_plus.len(), beta_plus.to_vec())?;
        let e = t.constant(r, c, ev.values().to_vec())?;
        let out = self.biaffine_vars(&mut t, b, e, r - 1)?;
        Ok(match out {
            None => BiaffineOutput {
                o_arc: Vec::new(),
                o_rel: Vec::new(),
            },
            Some(bv) => {
                let rels = self.vocab.relations.len().max(1);
                BiaffineOutput {
                    o_arc: t.value(bv.o_arc).to_vec(),
                    o_rel: t
                        .value(bv.o_rel)
                        .chunks(rels)
                        .map(<[f64]>::to_vec)
                        .collect(),
                }
            }
        })
    }

    pub fn candidates(&self, s: &Sentence) -> Candidates {
        Candidates::new(&self.vocab, s)
    }
}

fn to_tensor(t: &Tape, v: Var) -> Tensor {
    let (r, c) = t.shape(v);
    Tensor::new(vec![r, c], t.value(v).to_vec()).expect("tape shapes are consistent")
}

fn build(cfg: &ParserConfig, vocab: &Vocabulary, b: &mut Builder) -> Net {
    let d = cfg.d;
    let eps = cfg.layer_norm_eps;
    let text_in = cfg.word_dim + cfg.lemma_dim + cfg.pos_dim + cfg.ner_dim + cfg.char_out;
    let text = TextEncoder {
        tok: b.embedding("text.tok", vocab.tokens.len(), cfg.word_dim),
        lemma: b.embedding("text.lemma", vocab.lemmas.len(), cfg.lemma_dim),
        pos: b.embedding("text.pos", vocab.pos.len(), cfg.pos_dim),
        ner: b.embedding("text.ner", vocab.ner.len(), cfg.ner_dim),
        chars: CharCnn::new(
            b,
            "text.char",
            vocab.chars.len(),
            cfg.char_dim,
            cfg.char_filters,
            cfg.char_ngram,
            cfg.char_out,
        ),
        proj: Linear::new(b, "text.proj", text_in, d, true),
        enc: Encoder::new(b, "text", cfg.text_layers, d, cfg.heads, cfg.ff_hidden, eps),
    };
    let graph = GraphEncoder {
        node: b.embedding("graph.node", vocab.nodes.len(), cfg.concept_dim),
        chars: CharCnn::new(
            b,
            "graph.char",
            vocab.chars.len(),
            cfg.char_dim,
            cfg.char_filters,
            cfg.char_ngram,
            cfg.char_out,
        ),
        proj: Linear::new(b, "graph.proj", cfg.concept_dim + cfg.char_out, d, true),
        enc: Encoder::new(
            b,
            "graph",
            cfg.graph_layers,
            d,
            cfg.heads,
            cfg.ff_hidden,
            eps,
        ),
    };
    let gt = (0..cfg.gt_layers)
        .map(|l| {
            let per_head = |b: &mut Builder, w: &str| -> Vec<ParamId> {
                (0..cfg.heads)
                    .map(|h| b.matrix(&format!("gt.layer{l}.head{h}.{w}"), d, d))
                    .collect()
            };
            let wq = per_head(b, "wq");
            let wk = per_head(b, "wk");
            let wv = per_head(b, "wv");
            let wo = b.matrix(&format!("gt.layer{l}.wo"), cfg.heads * d, d);
            let post = (l + 1 < cfg.gt_layers).then(|| {
                (
                    LayerNorm::new(b, &format!("gt.layer{l}.ln1"), d, eps),
                    FeedForward::new(b, &format!("gt.layer{l}.ff"), d, cfg.gt_ff_hidden),
                    LayerNorm::new(b, &format!("gt.layer{l}.ln2"), d, eps),
                )
            });
            GtLayer {
                wq,
                wk,
                wv,
                wo,
                post,
            }
        })
        .collect();
    let gate = b.matrix("node.gate", d, 3);
    let gen = b.matrix("node.gen", d, vocab.nodes.len());
    let biaffine = cfg.variant.uses_biaffine().then(|| {
        let hb = cfg.biaffine_hidden;
        let r = vocab.relations.len().max(1);
        BiaffineParams {
            arc_dep: Linear::new(b, "biaffine.arc_dep", d, hb, true),
            arc_head: Linear::new(b, "biaffine.arc_head", d, hb, true),
            rel_dep: Linear::new(b, "biaffine.rel_dep", d, hb, true),
            rel_head: Linear::new(b, "biaffine.rel_head", d, hb, true),
            u_arc: b.matrix("biaffine.u_arc", hb + 1, hb + 1),
            u_rel: b.matrix("biaffine.u_rel", r * (hb + 1), hb + 1),
        }
    });
    Net {
        text,
        graph,
        gt,
        gate,
        gen,
        biaffine,
    }
}

#[cfg(test)]
mod tests;
