use serde::{Deserialize, Serialize};

use crate::corpus::{Oracle, OracleStep, Sentence, UNK};
use crate::graph::SeqEntry;
use crate::model::{Candidates, Model, StepVars, Variant};
use crate::tensor::{Result, Tape, Var};

/// Clamp applied inside every logarithm of the losses.
pub const LOG_EPS: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub node: f64,
    pub arc: f64,
    pub rel: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            node: 1.0,
            arc: 1.0,
            rel: 1.0,
        }
    }
}

/// Loss terms as tape scalars.
#[derive(Debug, Clone, Copy)]
pub struct LossVars {
    pub node: Var,
    pub arc: Var,
    pub rel: Var,
    pub total: Var,
}

/// Loss values summed over steps.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub node_loss: f64,
    pub arc_loss: f64,
    pub rel_loss: f64,
    pub total: f64,
    pub steps: usize,
}

impl LossBreakdown {
    pub fn read(t: &Tape, v: &LossVars, steps: usize) -> Self {
        LossBreakdown {
            node_loss: t.scalar(v.node),
            arc_loss: t.scalar(v.arc),
            rel_loss: t.scalar(v.rel),
            total: t.scalar(v.total),
            steps,
        }
    }

    pub fn is_finite(&self) -> bool {
        [self.node_loss, self.arc_loss, self.rel_loss, self.total]
            .iter()
            .all(|v| v.is_finite())
    }
}

impl std::ops::AddAssign for LossBreakdown {
    fn add_assign(&mut self, o: Self) {
        self.node_loss += o.node_loss;
        self.arc_loss += o.arc_loss;
        self.rel_loss += o.rel_loss;
        self.total += o.total;
        self.steps += o.steps;
    }
}

/// Bernoulli negative log-likelihood `-Σ y log p + (1-y) log(1-p)`.
pub fn bernoulli_nll(t: &mut Tape, p: Var, gold: &[bool]) -> Result<Var> {
    let y: Vec<f64> = gold.iter().map(|&b| f64::from(u8::from(b))).collect();
    let not_y: Vec<f64> = y.iter().map(|v| 1.0 - v).collect();
    let lp = t.log_clamped(p, LOG_EPS);
    let q = t.affine(p, -1.0, 1.0);
    let lq = t.log_clamped(q, LOG_EPS);
    let a = t.dot_const(lp, &y)?;
    let b = t.dot_const(lq, &not_y)?;
    let s = t.add(a, b)?;
    Ok(t.scale(s, -1.0))
}

/// Negative log of the picked probabilities, summed.
fn nll_at(t: &mut Tape, probs: Var, flat: &[usize]) -> Result<Var> {
    let p = t.pick(probs, flat)?;
    let l = t.log_clamped(p, LOG_EPS);
    let s = t.sum(l);
    Ok(t.scale(s, -1.0))
}

/// Candidate index of the gold node; UNK when it is neither generated nor copyable.
pub fn gold_index(model: &Model, c: &Candidates, step: &OracleStep) -> usize {
    c.index_of(&model.vocab, &step.name).unwrap_or(UNK)
}

/// Losses of one teacher-forced step.
pub fn step_loss(
    model: &Model,
    t: &mut Tape,
    sv: &StepVars,
    c: &Candidates,
    step: &OracleStep,
    w: &LossWeights,
) -> Result<LossVars> {
    let node = nll_at(t, sv.node.o_node, &[gold_index(model, c, step)])?;
    let zero = t.constant(1, 1, vec![0.0])?;
    let arc = match model.config.variant {
        Variant::NdBdBd => match &sv.biaffine {
            Some(b) => bernoulli_nll(t, b.o_arc, &step.arcs[1..])?,
            None => zero,
        },
        _ => bernoulli_nll(t, sv.attn.alpha_arc, &step.arcs)?,
    };
    let rel = match &sv.biaffine {
        Some(b) if !step.rels.is_empty() => {
            let r = model.vocab.relations.len().max(1);
            let flat: Vec<usize> = step.rels.iter().map(|&(j, k)| (j - 1) * r + k).collect();
            nll_at(t, b.o_rel, &flat)?
        }
        _ => zero,
    };
    let a = t.scale(node, w.node);
    let b = t.scale(arc, w.arc);
    let c = t.scale(rel, w.rel);
    let s = t.add(a, b)?;
    let total = t.add(s, c)?;
    Ok(LossVars {
        node,
        arc,
        rel,
        total,
    })
}

/// Teacher-forced losses averaged over the steps of one sentence.
pub fn sentence_loss(
    model: &Model,
    t: &mut Tape,
    s: &Sentence,
    oracle: &Oracle,
    w: &LossWeights,
) -> Result<LossVars> {
    let entries: &[SeqEntry] = &oracle.sequence.entries[..oracle.sequence.len() - 1];
    let p = model.prepare(t, s, entries)?;
    let mut acc: Option<LossVars> = None;
    for step in &oracle.steps {
        let sv = model.step_vars(t, &p, step.t - 1)?;
        let l = step_loss(model, t, &sv, &p.candidates, step, w)?;
        acc = Some(match acc {
            None => l,
            Some(a) => LossVars {
                node: t.add(a.node, l.node)?,
                arc: t.add(a.arc, l.arc)?,
                rel: t.add(a.rel, l.rel)?,
                total: t.add(a.total, l.total)?,
            },
        });
    }
    let a = acc.expect("an oracle has at least the END step");
    let k = 1.0 / oracle.steps.len() as f64;
    Ok(LossVars {
        node: t.scale(a.node, k),
        arc: t.scale(a.arc, k),
        rel: t.scale(a.rel, k),
        total: t.scale(a.total, k),
    })
}
