//! Training loop: token-count batches, Adam with inverse-square-root warmup,
//! per-epoch dev scoring and best-epoch selection.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::layers::Params;
use super::transformer::{LossStats, TransformerModel};
use crate::encoding::SourceLayout;
use crate::seed::rng_for;
use crate::{Error, Result, Scalar};

/// One training pair: source layout and target ids (without `<s>`/`</s>`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Example {
    pub source: SourceLayout,
    pub target: Vec<u32>,
}

impl Example {
    fn tokens(&self) -> usize {
        self.source.len() + self.target.len() + 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Source plus target tokens per batch.
    pub batch_tokens: usize,
    /// Peak learning rate, reached at the end of warmup.
    pub learning_rate: f64,
    pub warmup_steps: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 20,
            batch_tokens: 2048,
            learning_rate: 1e-3,
            warmup_steps: 400,
            beta1: 0.9,
            beta2: 0.98,
            adam_eps: 1e-9,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_tokens == 0 || self.warmup_steps == 0 {
            return Err(Error::Config("batch tokens and warmup steps must be positive".into()));
        }
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return Err(Error::Config(format!("learning rate {} must be positive", self.learning_rate)));
        }
        Ok(())
    }

    /// `lr · min(step / warmup, √(warmup / step))`, steps counted from 1.
    pub fn learning_rate_at(&self, step: usize) -> f64 {
        let s = step.max(1) as f64;
        let w = self.warmup_steps as f64;
        self.learning_rate * (s / w).min((w / s).sqrt())
    }
}

pub struct Adam<T> {
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
    step: usize,
}

impl<T: Scalar> Adam<T> {
    pub fn new(model: &TransformerModel<T>) -> Self {
        let mut m = Vec::new();
        model.visit("", &mut |_, p| m.push(vec![T::zero(); p.len()]));
        Adam {
            v: m.clone(),
            m,
            step: 0,
        }
    }

    pub fn update(&mut self, model: &mut TransformerModel<T>, grad: &TransformerModel<T>, cfg: &TrainConfig, lr: f64) {
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - cfg.beta1.powi(t);
        let c2 = 1.0 - cfg.beta2.powi(t);
        let (b1, b2) = (T::of(cfg.beta1), T::of(cfg.beta2));
        let (ob1, ob2) = (T::one() - b1, T::one() - b2);
        let step_size = T::of(lr / c1);
        let inv_c2 = T::of(1.0 / c2);
        let eps = T::of(cfg.adam_eps);
        let mut grads = Vec::new();
        grad.visit("", &mut |_, g| grads.push(g));
        let mut idx = 0;
        let (ms, vs) = (&mut self.m, &mut self.v);
        model.visit_mut("", &mut |_, p| {
            let g = grads[idx];
            let (m, v) = (&mut ms[idx], &mut vs[idx]);
            for i in 0..p.len() {
                m[i] = b1 * m[i] + ob1 * g[i];
                v[i] = b2 * v[i] + ob2 * g[i] * g[i];
                p[i] -= step_size * m[i] / ((v[i] * inv_c2).sqrt() + eps);
            }
            idx += 1;
        });
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub steps: usize,
    /// Mean label-smoothed cross-entropy per target token.
    pub train_loss: f64,
    /// Mean negative log-likelihood per target token.
    pub train_nll: f64,
    pub dev_score: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose parameters were kept, if any dev score was reported.
    pub best_epoch: Option<usize>,
    pub best_dev_score: Option<f64>,
}

/// Length-sorted batches of at most `batch_tokens` tokens (a single longer
/// example forms its own batch), in seeded random order.
pub fn make_batches<R: rand::Rng>(examples: &[Example], batch_tokens: usize, rng: &mut R) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..examples.len()).collect();
    order.shuffle(rng);
    order.sort_by_key(|&i| (examples[i].source.len(), examples[i].target.len()));
    let mut batches = Vec::new();
    let mut current = Vec::new();
    let mut tokens = 0;
    for i in order {
        let n = examples[i].tokens();
        if !current.is_empty() && tokens + n > batch_tokens {
            batches.push(std::mem::take(&mut current));
            tokens = 0;
        }
        current.push(i);
        tokens += n;
    }
    if !current.is_empty() {
        batches.push(current);
    }
    batches.shuffle(rng);
    batches
}

/// Train in place. After each epoch `on_epoch(epoch, model)` may return a dev
/// score; the parameters of the highest-scoring epoch (earliest on ties) are
/// restored at the end. With `epochs = 0` the model is left untouched.
pub fn train<T: Scalar>(
    model: &mut TransformerModel<T>,
    examples: &[Example],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(usize, &TransformerModel<T>) -> Result<Option<f64>>,
) -> Result<TrainReport> {
    cfg.validate()?;
    let mut report = TrainReport::default();
    if cfg.epochs == 0 || examples.is_empty() {
        return Ok(report);
    }
    let seed = model.config.seed;
    let mut shuffle_rng = rng_for(seed, "shuffle");
    let mut dropout_rng = rng_for(seed, "dropout");
    let mut adam = Adam::new(model);
    let mut grad = model.zeros_like();
    let mut best: Option<(f64, usize, TransformerModel<T>)> = None;
    let mut step = 0;
    for epoch in 1..=cfg.epochs {
        let batches = make_batches(examples, cfg.batch_tokens, &mut shuffle_rng);
        let mut totals = LossStats::default();
        for batch in &batches {
            grad.fill_zero();
            let mut stats = LossStats::default();
            for &i in batch {
                let ex = &examples[i];
                stats.add(model.loss_and_grad(&ex.source, &ex.target, &mut grad, Some(&mut dropout_rng))?);
            }
            if !stats.loss.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    step: step + 1,
                    loss: stats.loss,
                });
            }
            let inv = T::of(1.0 / stats.tokens as f64);
            let mut finite = true;
            grad.visit_mut("", &mut |_, g| {
                for x in g.iter_mut() {
                    *x *= inv;
                    finite &= x.is_finite();
                }
            });
            if !finite {
                return Err(Error::Diverged {
                    epoch,
                    step: step + 1,
                    loss: f64::NAN,
                });
            }
            step += 1;
            adam.update(model, &grad, cfg, cfg.learning_rate_at(step));
            totals.add(stats);
        }
        let record = EpochRecord {
            epoch,
            steps: step,
            train_loss: totals.loss / totals.tokens as f64,
            train_nll: totals.nll / totals.tokens as f64,
            dev_score: on_epoch(epoch, model)?,
        };
        log::info!(
            "epoch {epoch}: loss {:.4} nll {:.4} dev {:?}",
            record.train_loss,
            record.train_nll,
            record.dev_score
        );
        if let Some(score) = record.dev_score {
            if best.as_ref().is_none_or(|(b, _, _)| score > *b) {
                best = Some((score, epoch, model.clone()));
            }
        }
        report.epochs.push(record);
    }
    if let Some((score, epoch, params)) = best {
        *model = params;
        report.best_epoch = Some(epoch);
        report.best_dev_score = Some(score);
    }
    Ok(report)
}
