//! Teacher-forced training: losses, Adam with global-norm clipping, and the
//! epoch loop with Smatch evaluation.

mod loss;

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{make_oracle, Oracle, TrainingExample};
use crate::eval::{smatch_seeded, CorpusScore, DEFAULT_RESTARTS};
use crate::model::{Model, ModelError};
use crate::tensor::{Gradients, ParamStore, Tape, TensorError};

pub use loss::{
    bernoulli_nll, gold_index, sentence_loss, step_loss, LossBreakdown, LossVars, LossWeights,
    LOG_EPS,
};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training corpus has no sentence with a gold graph")]
    EmptyCorpus,
    #[error("diverged at epoch {epoch}, sentence {sentence}: loss {loss:e} (parameter norm {param_norm:.4e}, gradient norm {grad_norm:.4e})")]
    Diverged {
        epoch: usize,
        sentence: usize,
        loss: f64,
        param_norm: f64,
        grad_norm: f64,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("training config: {0}")]
    Config(String),
    #[error("I/O: {0}")]
    Io(#[from] std::io::Error),
}

/// Optimization settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub clip_norm: f64,
    pub seed: u64,
    pub weights: LossWeights,
    /// Smatch is computed every this many epochs and on the last one.
    pub eval_every: usize,
    /// Sentences taken from the end of the corpus for evaluation only; with
    /// zero, Smatch is measured on the training set.
    pub heldout: usize,
    /// Stop once the evaluated Smatch reaches this value.
    pub target_smatch: Option<f64>,
    /// A sentence loss above this value halts training.
    pub divergence: f64,
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 200,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            clip_norm: 1.0,
            seed: 1,
            weights: LossWeights::default(),
            eval_every: 5,
            heldout: 0,
            target_smatch: None,
            divergence: 1e4,
            shuffle: true,
        }
    }
}

/// One line of the metrics log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    /// Losses averaged over sentences.
    pub node_loss: f64,
    pub arc_loss: f64,
    pub rel_loss: f64,
    pub total: f64,
    pub steps: usize,
    pub grad_norm: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub smatch: Option<CorpusScore>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochMetrics>,
    pub best_f1: f64,
    pub reached_target: bool,
}

/// Adam with bias correction and global-norm gradient clipping.
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    clip: f64,
    step: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(store: &ParamStore, cfg: &TrainConfig) -> Self {
        let zeros: Vec<Vec<f64>> = store
            .iter()
            .map(|(_, p)| vec![0.0; p.tensor.len()])
            .collect();
        Adam {
            lr: cfg.lr,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.adam_eps,
            clip: cfg.clip_norm,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    /// Applies one update; returns the gradient norm before clipping.
    pub fn update(&mut self, store: &mut ParamStore, grads: &Gradients) -> f64 {
        let norm = grads.global_norm();
        let scale = if self.clip > 0.0 && norm > self.clip {
            self.clip / norm
        } else {
            1.0
        };
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        for (id, g) in grads.iter() {
            let i = id.index();
            let p = store.get_mut(id);
            if !p.trainable {
                continue;
            }
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for (k, w) in p.tensor.values_mut().iter_mut().enumerate() {
                let g = g[k] * scale;
                m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * g;
                v[k] = self.beta2 * v[k] + (1.0 - self.beta2) * g * g;
                let mh = m[k] / c1;
                let vh = v[k] / c2;
                *w -= self.lr * mh / (vh.sqrt() + self.eps);
            }
        }
        norm
    }
}

fn param_norm(store: &ParamStore) -> f64 {
    store
        .iter()
        .flat_map(|(_, p)| p.tensor.values().iter())
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt()
}

/// Micro-averaged Smatch of greedy parses against gold graphs.
pub fn evaluate(model: &Model, examples: &[TrainingExample]) -> Result<CorpusScore, ModelError> {
    let mut scores = Vec::with_capacity(examples.len());
    for (i, ex) in examples.iter().enumerate() {
        let Some(gold) = &ex.sentence.gold else {
            continue;
        };
        let parse = model.parse(&ex.sentence)?;
        scores.push(smatch_seeded(
            &parse.graph,
            gold,
            DEFAULT_RESTARTS,
            i as u64,
        ));
    }
    Ok(CorpusScore::from_scores(scores))
}

/// Teacher-forced training of `model` on the sentences with gold graphs.
///
/// `on_epoch` receives each epoch's metrics as soon as they are known.
pub fn train(
    model: &mut Model,
    examples: &[TrainingExample],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochMetrics) -> std::io::Result<()>,
) -> Result<TrainReport, TrainError> {
    if cfg.eval_every == 0 {
        return Err(TrainError::Config("eval_every must be positive".into()));
    }
    let with_gold: Vec<&TrainingExample> = examples
        .iter()
        .filter(|e| e.sentence.gold.is_some())
        .collect();
    if with_gold.len() <= cfg.heldout {
        return Err(TrainError::EmptyCorpus);
    }
    let split = with_gold.len() - cfg.heldout;
    let train_set: Vec<(&TrainingExample, Oracle)> = with_gold[..split]
        .iter()
        .filter_map(|e| make_oracle(e, &model.vocab).map(|o| (*e, o)))
        .collect();
    let eval_set: Vec<TrainingExample> = if cfg.heldout == 0 {
        with_gold[..split].iter().map(|e| (*e).clone()).collect()
    } else {
        with_gold[split..].iter().map(|e| (*e).clone()).collect()
    };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = Adam::new(&model.params, cfg);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut report = TrainReport {
        epochs: Vec::new(),
        best_f1: 0.0,
        reached_target: false,
    };
    for epoch in 1..=cfg.epochs {
        if cfg.shuffle {
            order.shuffle(&mut rng);
        }
        let mut sum = LossBreakdown::default();
        let mut grad_norm = 0.0;
        for &i in &order {
            let (ex, oracle) = &train_set[i];
            let (loss, grads) = {
                let mut t = Tape::new(&model.params);
                let l = sentence_loss(model, &mut t, &ex.sentence, oracle, &cfg.weights)?;
                let loss = LossBreakdown::read(&t, &l, oracle.steps.len());
                if !loss.is_finite() || loss.total > cfg.divergence {
                    return Err(TrainError::Diverged {
                        epoch,
                        sentence: i,
                        loss: loss.total,
                        param_norm: param_norm(&model.params),
                        grad_norm: f64::NAN,
                    });
                }
                (loss, t.backward(l.total))
            };
            let g = adam.update(&mut model.params, &grads);
            if !g.is_finite() {
                return Err(TrainError::Diverged {
                    epoch,
                    sentence: i,
                    loss: loss.total,
                    param_norm: param_norm(&model.params),
                    grad_norm: g,
                });
            }
            grad_norm += g;
            sum += loss;
        }
        let k = train_set.len() as f64;
        let evaluate_now = epoch % cfg.eval_every == 0 || epoch == cfg.epochs;
        let smatch = if evaluate_now {
            Some(evaluate(model, &eval_set)?)
        } else {
            None
        };
        let m = EpochMetrics {
            epoch,
            node_loss: sum.node_loss / k,
            arc_loss: sum.arc_loss / k,
            rel_loss: sum.rel_loss / k,
            total: sum.total / k,
            steps: sum.steps,
            grad_norm: grad_norm / k,
            smatch,
        };
        on_epoch(&m)?;
        report.epochs.push(m);
        if let Some(s) = smatch {
            report.best_f1 = report.best_f1.max(s.f1);
            if cfg.target_smatch.is_some_and(|target| s.f1 >= target) {
                report.reached_target = true;
                break;
            }
        }
    }
    Ok(report)
}

/// Serializes one metrics record as a JSON line.
pub fn metrics_line(m: &EpochMetrics) -> String {
    serde_json::to_string(m).expect("metrics serialize")
}

impl TrainConfig {
    pub fn from_toml(text: &str) -> Result<Self, TrainError> {
        toml::from_str(text).map_err(|e| TrainError::Config(e.to_string()))
    }

    pub fn from_file(path: &Path) -> Result<Self, TrainError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }
}
