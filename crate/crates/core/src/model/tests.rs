use super::*;
use crate::corpus::{build_vocab, parse_corpus, TokenFeatures};
use crate::graph::{emit_penman, LinearizeMode};

const TOY: &str = "\
# ::tok the boy wants the girl to believe him
(w / want-01 :ARG0 (b / boy) :ARG1 (b2 / believe-01 :ARG0 (g / girl) :ARG1 b))

# ::tok the girl sleeps
(s / sleep-01 :ARG0 (g / girl))
";

fn model(variant: Variant) -> (Model, Vec<crate::corpus::TrainingExample>) {
    let ex = parse_corpus(TOY, None).examples;
    let v = build_vocab(&ex, variant.mode());
    (
        Model::new(ParserConfig::toy(variant, 16, 2), v, 7).unwrap(),
        ex,
    )
}

fn values<'a>(m: &'a Model, name: &str) -> &'a Tensor {
    &m.params.get(m.params.id(name).unwrap()).tensor
}

fn softmax(xs: &[f64]) -> Vec<f64> {
    let mx = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = xs.iter().map(|x| (x - mx).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|x| x / s).collect()
}

/// `x · W` for a row vector and a row-major matrix.
fn vecmat(x: &[f64], w: &Tensor) -> Vec<f64> {
    let (r, c) = w.dims();
    assert_eq!(x.len(), r);
    (0..c)
        .map(|j| (0..r).map(|i| x[i] * w.values()[i * c + j]).sum())
        .collect()
}

fn state(m: &Model, s: &Sentence, entries: &[SeqEntry]) -> EncoderState {
    EncoderState {
        et: m.encode_text(s).unwrap(),
        ev: m.encode_graph(entries).unwrap(),
    }
}

fn prefix(names: &[&str]) -> Vec<SeqEntry> {
    std::iter::once(SeqEntry::root())
        .chain(names.iter().map(|n| SeqEntry::concept(*n)))
        .collect()
}

#[test]
fn attention_distributions_and_head_maximum() {
    let (m, ex) = model(Variant::NdAdBd);
    let s = &ex[0].sentence;
    let st = state(&m, s, &prefix(&["want-01", "boy"]));
    let a = m.graph_attention(&st).unwrap();
    let (n, mm) = (s.len(), 2);
    assert_eq!(a.alpha.len(), 2);
    for head in &a.alpha {
        assert_eq!(head.len(), n + mm + 1);
        assert!((head.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
    assert_eq!(a.alpha_token, a.alpha[0][..n].to_vec());
    for (j, v) in a.alpha_arc.iter().enumerate() {
        let max = a.alpha.iter().map(|h| h[n + j]).fold(f64::MIN, f64::max);
        assert_eq!(*v, max);
    }
    assert_eq!(a.beta_plus.len(), 16);
}

#[test]
fn graph_encoder_is_causal() {
    let (m, _) = model(Variant::NdAdLv);
    let full = m
        .encode_graph(&prefix(&["want-01", "boy", "girl"]))
        .unwrap();
    let part = m.encode_graph(&prefix(&["want-01"])).unwrap();
    let d = m.config.d;
    for (a, b) in part.values().iter().zip(&full.values()[..2 * d]) {
        assert!((a - b).abs() < 1e-12);
    }
}

/// Builds the copy distribution name by name, with no candidate matrices.
#[test]
fn node_decoder_matches_a_direct_mixture() {
    for variant in Variant::ALL {
        let (m, _) = model(variant);
        let mut toks: Vec<TokenFeatures> = ["the", "boy", "runs", "boy", "quickly"]
            .iter()
            .map(|t| TokenFeatures::bare(*t))
            .collect();
        toks[2].lemma = "run".into();
        toks[4].lemma = "quick".into();
        let s = Sentence {
            tokens: toks,
            gold: None,
        };
        let beta: Vec<f64> = (0..m.config.d)
            .map(|i| ((i * 7 % 5) as f64 - 2.0) * 0.3)
            .collect();
        let alpha = [0.05, 0.1, 0.02, 0.03, 0.2];
        let out = m.node_decode(&beta, &alpha, &s).unwrap();

        let gates = softmax(&vecmat(&beta, values(&m, "node.gate")));
        let gen = softmax(&vecmat(&beta, values(&m, "node.gen")));
        let total: f64 = alpha.iter().sum();
        let mut expect: std::collections::HashMap<String, f64> = std::collections::HashMap::new();
        for (i, p) in gen.iter().enumerate() {
            *expect.entry(m.vocab.nodes.name(i).to_string()).or_default() += gates[0] * p;
        }
        for (tk, a) in s.tokens.iter().zip(alpha) {
            *expect.entry(tk.token.clone()).or_default() += gates[1] * a / total;
            *expect.entry(tk.copy_lemma().to_string()).or_default() += gates[2] * a / total;
        }
        let c = m.candidates(&s);
        assert_eq!(
            out.o_node.len(),
            expect.len(),
            "{variant}: one column per distinct name"
        );
        for (name, p) in &expect {
            let i = c.index_of(&m.vocab, name).unwrap();
            assert!((out.o_node[i] - p).abs() < 1e-12, "{variant} {name}");
        }
        assert!((out.o_node.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for (g, e) in out.gates.iter().zip(&gates) {
            assert!((g - e).abs() < 1e-12);
        }
    }
}

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + ((2.0 / std::f64::consts::PI).sqrt() * (x + 0.044715 * x.powi(3))).tanh())
}

fn mlp1(m: &Model, name: &str, x: &[f64]) -> Vec<f64> {
    let h = vecmat(x, values(m, &format!("{name}.w")));
    let b = values(m, &format!("{name}.b")).values();
    let mut out: Vec<f64> = h.iter().zip(b).map(|(h, b)| gelu(h + b)).collect();
    out.push(1.0);
    out
}

fn bilinear(a: &[f64], u: &[f64], b: &[f64]) -> f64 {
    let k = b.len();
    (0..a.len())
        .map(|i| (0..k).map(|j| a[i] * u[i * k + j] * b[j]).sum::<f64>())
        .sum()
}

#[test]
fn biaffine_matches_explicit_bilinear_forms() {
    let (m, _) = model(Variant::NdBdBd);
    let ev = m
        .encode_graph(&prefix(&["want-01", "boy", "girl"]))
        .unwrap();
    let beta: Vec<f64> = (0..m.config.d).map(|i| (i as f64 * 0.37).sin()).collect();
    let out = m.biaffine_decode(&beta, &ev).unwrap();
    let d = m.config.d;
    let h1 = m.config.biaffine_hidden + 1;
    let r = m.vocab.relations.len();
    assert_eq!(out.o_arc.len(), 3);
    let ua = values(&m, "biaffine.u_arc").values();
    let ur = values(&m, "biaffine.u_rel").values();
    let ah = mlp1(&m, "biaffine.arc_head", &beta);
    let rh = mlp1(&m, "biaffine.rel_head", &beta);
    for j in 1..=3 {
        let v = &ev.values()[j * d..(j + 1) * d];
        let ad = mlp1(&m, "biaffine.arc_dep", v);
        let p = 1.0 / (1.0 + (-bilinear(&ad, ua, &ah)).exp());
        assert!((out.o_arc[j - 1] - p).abs() < 1e-12);
        let rd = mlp1(&m, "biaffine.rel_dep", v);
        let scores: Vec<f64> = (0..r)
            .map(|k| bilinear(&rd, &ur[k * h1 * h1..(k + 1) * h1 * h1], &rh))
            .collect();
        for (a, b) in out.o_rel[j - 1].iter().zip(softmax(&scores)) {
            assert!((a - b).abs() < 1e-12);
        }
    }
    let (lv, _) = model(Variant::NdAdLv);
    assert!(lv.biaffine_decode(&beta, &ev).unwrap().o_arc.is_empty());
}

#[test]
fn parse_yields_a_rooted_graph() {
    for variant in Variant::ALL {
        let (m, ex) = model(variant);
        let p = m.parse(&ex[1].sentence).unwrap();
        assert!(!p.graph.is_empty());
        assert!(p.graph.reachable_from_root().iter().all(|r| *r));
        emit_penman(&p.graph).unwrap();
        assert!(p.sequence.len() <= m.config.max_decode_len + 1);
        assert_eq!(p.trace.node_node.len(), p.sequence.len() - 1);
        for (i, row) in p.trace.node_node.iter().enumerate() {
            assert_eq!(row.len(), i + 1);
        }
        if variant.mode() == LinearizeMode::Levi {
            assert!(p.sequence.labels.is_empty());
        }
    }
}

#[test]
fn save_and_load_reproduce_the_parser() {
    let (m, ex) = model(Variant::NdAdBd);
    let dir = tempfile::tempdir().unwrap();
    m.save(dir.path()).unwrap();
    let back = Model::load(dir.path()).unwrap();
    assert_eq!(back.config, m.config);
    assert_eq!(
        back.parse(&ex[0].sentence).unwrap(),
        m.parse(&ex[0].sentence).unwrap()
    );
}

#[test]
fn vocabulary_mode_must_match_the_variant() {
    let ex = parse_corpus(TOY, None).examples;
    let v = build_vocab(&ex, LinearizeMode::Concepts);
    assert!(matches!(
        Model::new(ParserConfig::toy(Variant::NdAdLv, 16, 2), v, 0),
        Err(ModelError::ModeMismatch { .. })
    ));
}
