//! Parameterized building blocks recorded onto a tape.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::tensor::{ParamId, ParamStore, Result, Tape, Tensor, Var};

/// Large negative score that zeroes a softmax entry.
pub(crate) const MASKED: f64 = -1e9;

/// Creates named parameters with deterministic initialization.
pub(crate) struct Builder<'a> {
    pub store: &'a mut ParamStore,
    rng: ChaCha8Rng,
}

impl<'a> Builder<'a> {
    pub fn new(store: &'a mut ParamStore, seed: u64) -> Self {
        Builder {
            store,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    fn add(&mut self, name: &str, t: Tensor) -> ParamId {
        self.store
            .add(name, t)
            .expect("parameter names are unique by construction")
    }

    pub fn matrix(&mut self, name: &str, rows: usize, cols: usize) -> ParamId {
        let t = Tensor::glorot(&[rows, cols], &mut self.rng);
        self.add(name, t)
    }

    pub fn embedding(&mut self, name: &str, rows: usize, cols: usize) -> ParamId {
        let t = Tensor::uniform(&[rows, cols], (3.0 / cols as f64).sqrt(), &mut self.rng);
        self.add(name, t)
    }

    pub fn filled(&mut self, name: &str, shape: &[usize], value: f64) -> ParamId {
        self.add(name, Tensor::filled(shape, value))
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Linear {
    pub w: ParamId,
    pub b: Option<ParamId>,
}

impl Linear {
    pub fn new(b: &mut Builder, name: &str, din: usize, dout: usize, bias: bool) -> Self {
        Linear {
            w: b.matrix(&format!("{name}.w"), din, dout),
            b: bias.then(|| b.filled(&format!("{name}.b"), &[1, dout], 0.0)),
        }
    }

    pub fn forward(&self, t: &mut Tape, x: Var) -> Result<Var> {
        let w = t.param(self.w);
        let y = t.matmul(x, w)?;
        match self.b {
            Some(b) => {
                let b = t.param(b);
                t.add_row(y, b)
            }
            None => Ok(y),
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct LayerNorm {
    pub g: ParamId,
    pub b: ParamId,
    pub eps: f64,
}

impl LayerNorm {
    pub fn new(b: &mut Builder, name: &str, d: usize, eps: f64) -> Self {
        LayerNorm {
            g: b.filled(&format!("{name}.g"), &[1, d], 1.0),
            b: b.filled(&format!("{name}.b"), &[1, d], 0.0),
            eps,
        }
    }

    pub fn forward(&self, t: &mut Tape, x: Var) -> Result<Var> {
        let n = t.layer_norm_rows(x, self.eps);
        let g = t.param(self.g);
        let y = t.mul_row(n, g)?;
        let b = t.param(self.b);
        t.add_row(y, b)
    }
}

/// Multi-head self-attention with `d / heads` columns per head.
#[derive(Debug, Clone)]
pub(crate) struct SelfAttention {
    pub wq: Linear,
    pub wk: Linear,
    pub wv: Linear,
    pub wo: Linear,
    pub heads: usize,
}

impl SelfAttention {
    pub fn new(b: &mut Builder, name: &str, d: usize, heads: usize) -> Self {
        SelfAttention {
            wq: Linear::new(b, &format!("{name}.q"), d, d, true),
            // A key bias shifts every score of a query equally, so softmax
            // ignores it; leaving it out keeps every parameter identifiable.
            wk: Linear::new(b, &format!("{name}.k"), d, d, false),
            wv: Linear::new(b, &format!("{name}.v"), d, d, true),
            wo: Linear::new(b, &format!("{name}.o"), d, d, true),
            heads,
        }
    }

    /// Returns the output and each head's attention matrix.
    pub fn forward(&self, t: &mut Tape, x: Var, mask: Option<Var>) -> Result<(Var, Vec<Var>)> {
        let d = t.shape(x).1;
        let dh = d / self.heads;
        let q = self.wq.forward(t, x)?;
        let k = self.wk.forward(t, x)?;
        let v = self.wv.forward(t, x)?;
        let mut outs = Vec::with_capacity(self.heads);
        let mut attn = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let qh = t.slice_cols(q, h * dh, dh)?;
            let kh = t.slice_cols(k, h * dh, dh)?;
            let vh = t.slice_cols(v, h * dh, dh)?;
            let s = t.matmul_t(qh, kh)?;
            let mut s = t.scale(s, 1.0 / (dh as f64).sqrt());
            if let Some(m) = mask {
                s = t.add(s, m)?;
            }
            let a = t.softmax_rows(s);
            outs.push(t.matmul(a, vh)?);
            attn.push(a);
        }
        let cat = t.concat_cols(&outs)?;
        Ok((self.wo.forward(t, cat)?, attn))
    }
}

#[derive(Debug, Clone)]
pub(crate) struct FeedForward {
    pub l1: Linear,
    pub l2: Linear,
}

impl FeedForward {
    pub fn new(b: &mut Builder, name: &str, d: usize, hidden: usize) -> Self {
        FeedForward {
            l1: Linear::new(b, &format!("{name}.1"), d, hidden, true),
            l2: Linear::new(b, &format!("{name}.2"), hidden, d, true),
        }
    }

    pub fn forward(&self, t: &mut Tape, x: Var) -> Result<Var> {
        let h = self.l1.forward(t, x)?;
        let h = t.gelu(h);
        self.l2.forward(t, h)
    }
}

/// Pre-norm transformer encoder layer.
#[derive(Debug, Clone)]
pub(crate) struct EncoderLayer {
    pub ln1: LayerNorm,
    pub attn: SelfAttention,
    pub ln2: LayerNorm,
    pub ff: FeedForward,
}

#[derive(Debug, Clone)]
pub(crate) struct Encoder {
    pub layers: Vec<EncoderLayer>,
    pub ln_f: LayerNorm,
}

impl Encoder {
    pub fn new(
        b: &mut Builder,
        name: &str,
        layers: usize,
        d: usize,
        heads: usize,
        ff: usize,
        eps: f64,
    ) -> Self {
        let layers = (0..layers)
            .map(|i| EncoderLayer {
                ln1: LayerNorm::new(b, &format!("{name}.layer{i}.ln1"), d, eps),
                attn: SelfAttention::new(b, &format!("{name}.layer{i}.attn"), d, heads),
                ln2: LayerNorm::new(b, &format!("{name}.layer{i}.ln2"), d, eps),
                ff: FeedForward::new(b, &format!("{name}.layer{i}.ff"), d, ff),
            })
            .collect();
        Encoder {
            layers,
            ln_f: LayerNorm::new(b, &format!("{name}.ln_f"), d, eps),
        }
    }

    /// Returns the encoded rows and the last layer's attention matrices.
    pub fn forward(&self, t: &mut Tape, mut x: Var, mask: Option<Var>) -> Result<(Var, Vec<Var>)> {
        let mut last = Vec::new();
        for layer in &self.layers {
            let h = layer.ln1.forward(t, x)?;
            let (a, attn) = layer.attn.forward(t, h, mask)?;
            x = t.add(x, a)?;
            let h = layer.ln2.forward(t, x)?;
            let f = layer.ff.forward(t, h)?;
            x = t.add(x, f)?;
            last = attn;
        }
        Ok((self.ln_f.forward(t, x)?, last))
    }
}

/// Character CNN: embed, convolve with centered windows, max-pool over
/// positions, project.
#[derive(Debug, Clone)]
pub(crate) struct CharCnn {
    pub emb: ParamId,
    pub conv: Linear,
    pub proj: Linear,
    pub width: usize,
}

impl CharCnn {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        b: &mut Builder,
        name: &str,
        chars: usize,
        dim: usize,
        filters: usize,
        width: usize,
        out: usize,
    ) -> Self {
        CharCnn {
            emb: b.embedding(&format!("{name}.emb"), chars, dim),
            conv: Linear::new(b, &format!("{name}.conv"), width * dim, filters, true),
            proj: Linear::new(b, &format!("{name}.proj"), filters, out, true),
            width,
        }
    }

    /// One `1×out` row per character-id sequence.
    pub fn forward(&self, t: &mut Tape, words: &[Vec<usize>]) -> Result<Var> {
        let table = t.param(self.emb);
        let mut rows = Vec::with_capacity(words.len());
        for ids in words {
            let e = t.gather_rows(table, ids)?;
            let u = t.unfold(e, self.width)?;
            let c = self.conv.forward(t, u)?;
            let c = t.tanh(c);
            rows.push(t.max_over(c, 0)?);
        }
        let pooled = t.concat_rows(&rows)?;
        self.proj.forward(t, pooled)
    }
}

/// Sinusoidal position signals for rows `start..start + n`.
pub(crate) fn positions(start: usize, n: usize, d: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * d];
    for p in 0..n {
        let pos = (start + p) as f64;
        for i in 0..d {
            let rate = 10000f64.powf((2 * (i / 2)) as f64 / d as f64);
            out[p * d + i] = if i % 2 == 0 {
                (pos / rate).sin()
            } else {
                (pos / rate).cos()
            };
        }
    }
    out
}

/// Additive mask letting row `i` see columns `0..=i` only.
pub(crate) fn causal_mask(n: usize) -> Vec<f64> {
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            m[i * n + j] = MASKED;
        }
    }
    m
}
