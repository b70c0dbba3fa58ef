//! Classifier-free training of the convolutional denoiser with Adam.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::conv::{assemble_input, backward, forward, skip_scale, Architecture, ModelWeights};
use crate::diffusion::forward_sample;
use crate::error::{Error, Result};
use crate::schedule::NoiseSchedule;
use crate::tensor::Field;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossNorm {
    L1,
    L2,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub steps: usize,
    pub batch_size: usize,
    pub cond_dropout_prob: f64,
    pub loss_norm: LossNorm,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            steps: 1000,
            batch_size: 4,
            cond_dropout_prob: 0.1,
            loss_norm: LossNorm::L1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("train.learning_rate", "must be finite and >= 0"));
        }
        for (name, b) in [("train.adam_beta1", self.adam_beta1), ("train.adam_beta2", self.adam_beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::config(name, "must lie in [0, 1)"));
            }
        }
        if !(0.0..=1.0).contains(&self.cond_dropout_prob) {
            return Err(Error::config("train.cond_dropout_prob", "must lie in [0, 1]"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("train.batch_size", "must be >= 1"));
        }
        Ok(())
    }
}

/// One `(context, target)` example.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingPair {
    pub context: Field,
    pub target: Field,
}

#[derive(Clone, Debug)]
pub struct TrainOutput {
    pub weights: ModelWeights,
    pub losses: Vec<f64>,
    /// Batch elements whose condition was replaced by noise.
    pub dropped_conditions: usize,
    pub drawn_examples: usize,
}

struct Adam {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: i32,
}

/// Stateful optimizer loop; [`train_denoiser`] drives it to completion.
pub struct Trainer<'a> {
    dataset: &'a [TrainingPair],
    sched: &'a NoiseSchedule,
    cfg: TrainConfig,
    weights: ModelWeights,
    adam: Adam,
    rng: ChaCha8Rng,
    step: usize,
    dropped: usize,
    drawn: usize,
}

struct Example {
    x_t: Field,
    condition: Field,
    eps: Field,
    t: usize,
}

impl<'a> Trainer<'a> {
    pub fn new(
        dataset: &'a [TrainingPair],
        sched: &'a NoiseSchedule,
        cfg: TrainConfig,
        weights: ModelWeights,
    ) -> Result<Self> {
        cfg.validate()?;
        weights.validate()?;
        let Some(first) = dataset.first() else {
            return Err(Error::Input("training set is empty".into()));
        };
        let arch = &weights.architecture;
        let (h, w) = (first.target.height(), first.target.width());
        for (i, pair) in dataset.iter().enumerate() {
            pair.target
                .ensure_shape(arch.target_shape(h, w))
                .and_then(|_| pair.context.ensure_shape([arch.context, arch.channels, h, w]))
                .map_err(|e| Error::Input(format!("training pair {i}: {e}")))?;
        }
        let adam = Adam {
            m: weights.zeros_like(),
            v: weights.zeros_like(),
            t: 0,
        };
        Ok(Trainer {
            dataset,
            sched,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            cfg,
            weights,
            adam,
            step: 0,
            dropped: 0,
            drawn: 0,
        })
    }

    pub fn weights(&self) -> &ModelWeights {
        &self.weights
    }

    pub fn into_weights(self) -> ModelWeights {
        self.weights
    }

    pub fn steps_done(&self) -> usize {
        self.step
    }

    pub fn dropped_conditions(&self) -> usize {
        self.dropped
    }

    pub fn drawn_examples(&self) -> usize {
        self.drawn
    }

    fn draw_batch(&mut self) -> Result<Vec<Example>> {
        let mut batch = Vec::with_capacity(self.cfg.batch_size);
        for _ in 0..self.cfg.batch_size {
            let pair = &self.dataset[self.rng.random_range(0..self.dataset.len())];
            let t = self.rng.random_range(0..self.sched.len());
            let eps = Field::randn(pair.target.shape(), &mut self.rng);
            let x_t = forward_sample(&pair.target, t, &eps, self.sched)?;
            let drop = self.rng.random::<f64>() < self.cfg.cond_dropout_prob;
            let condition = if drop {
                self.dropped += 1;
                Field::randn(pair.context.shape(), &mut self.rng)
            } else {
                pair.context.clone()
            };
            self.drawn += 1;
            batch.push(Example {
                x_t,
                condition,
                eps,
                t,
            });
        }
        Ok(batch)
    }

    /// One optimizer update. Returns the mean batch loss before the update.
    pub fn step(&mut self) -> Result<f64> {
        let batch = self.draw_batch()?;
        let sched = self.sched;
        let total = sched.len();
        let norm = self.cfg.loss_norm;
        let weights = &self.weights;
        let per_example: Vec<Result<(f64, Vec<Vec<f64>>)>> = batch
            .par_iter()
            .map(|ex| {
                let abar = sched.alpha_bar(ex.t);
                loss_and_gradient(weights, &ex.x_t, &ex.condition, ex.t, total, abar, &ex.eps, norm)
            })
            .collect();
        let scale = 1.0 / batch.len() as f64;
        let mut grads = weights.zeros_like();
        let mut loss = 0.0;
        // fixed summation order keeps the result independent of thread scheduling
        for item in per_example {
            let (l, g) = item?;
            loss += l * scale;
            for (acc, gi) in grads.iter_mut().zip(g) {
                for (a, v) in acc.iter_mut().zip(gi) {
                    *a += v * scale;
                }
            }
        }
        if !loss.is_finite() {
            return Err(Error::Diverged {
                step: self.step,
                what: format!("training loss is {loss}"),
            });
        }
        self.apply_adam(&grads);
        self.step += 1;
        Ok(loss)
    }

    fn apply_adam(&mut self, grads: &[Vec<f64>]) {
        const EPS: f64 = 1e-8;
        let (b1, b2, lr) = (self.cfg.adam_beta1, self.cfg.adam_beta2, self.cfg.learning_rate);
        self.adam.t += 1;
        let c1 = 1.0 - b1.powi(self.adam.t);
        let c2 = 1.0 - b2.powi(self.adam.t);
        for (i, g) in grads.iter().enumerate() {
            let w = &mut self.weights.tensors[i].data;
            let m = &mut self.adam.m[i];
            let v = &mut self.adam.v[i];
            for j in 0..g.len() {
                m[j] = b1 * m[j] + (1.0 - b1) * g[j];
                v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
                let m_hat = m[j] / c1;
                let v_hat = v[j] / c2;
                w[j] -= lr * m_hat / (v_hat.sqrt() + EPS);
            }
        }
    }
}

/// Per-example loss and parameter gradient of `‖ε − ε_θ(x_t, c, t)‖` (mean over elements).
pub(crate) fn loss_and_gradient(
    weights: &ModelWeights,
    x_t: &Field,
    condition: &Field,
    step: usize,
    total_steps: usize,
    alpha_bar: f64,
    eps: &Field,
    norm: LossNorm,
) -> Result<(f64, Vec<Vec<f64>>)> {
    let input = assemble_input(&weights.architecture, x_t, condition, step, total_steps)?;
    let (h, w) = (x_t.height(), x_t.width());
    let pass = forward(weights, input, h, w);
    let skip = skip_scale(&weights.architecture, alpha_bar);
    let n = eps.len() as f64;
    let mut loss = 0.0;
    let d_out: Vec<f64> = pass
        .output
        .iter()
        .zip(x_t.data())
        .zip(eps.data())
        .map(|((&y, &x), &e)| {
            let r = y + skip * x - e;
            match norm {
                LossNorm::L1 => {
                    loss += r.abs();
                    if r > 0.0 {
                        1.0 / n
                    } else if r < 0.0 {
                        -1.0 / n
                    } else {
                        0.0
                    }
                }
                LossNorm::L2 => {
                    loss += r * r;
                    2.0 * r / n
                }
            }
        })
        .collect();
    let mut grads = weights.zeros_like();
    backward(weights, &pass, d_out, h, w, &mut grads);
    Ok((loss / n, grads))
}

/// The seeded initialization [`train_denoiser`] starts from.
pub fn initial_weights(architecture: Architecture, cfg: &TrainConfig) -> Result<ModelWeights> {
    ModelWeights::init(architecture, cfg.seed ^ 0x9e37_79b9_7f4a_7c15)
}

/// Trains from a seeded initialization of `architecture`.
pub fn train_denoiser(
    dataset: &[TrainingPair],
    sched: &NoiseSchedule,
    cfg: &TrainConfig,
    architecture: Architecture,
) -> Result<TrainOutput> {
    let init = initial_weights(architecture, cfg)?;
    let mut trainer = Trainer::new(dataset, sched, cfg.clone(), init)?;
    let mut losses = Vec::with_capacity(cfg.steps);
    for _ in 0..cfg.steps {
        losses.push(trainer.step()?);
    }
    Ok(TrainOutput {
        dropped_conditions: trainer.dropped_conditions(),
        drawn_examples: trainer.drawn_examples(),
        weights: trainer.into_weights(),
        losses,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedule::cosine_schedule;

    fn toy_set(n: usize, seed: u64) -> Vec<TrainingPair> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let context = Field::randn([1, 1, 4, 4], &mut rng);
                // the target is the context repeated, so the condition is informative
                let mut data = context.data().to_vec();
                data.extend_from_slice(context.data());
                TrainingPair {
                    target: Field::from_vec([2, 1, 4, 4], data).unwrap(),
                    context,
                }
            })
            .collect()
    }

    #[test]
    fn zero_learning_rate_freezes_weights() {
        let sched = cosine_schedule(20, 0.008).unwrap();
        let data = toy_set(4, 1);
        let arch = Architecture::desk(2, 1, 1, 4);
        let init = ModelWeights::init(arch, 5).unwrap();
        let cfg = TrainConfig {
            learning_rate: 0.0,
            steps: 10,
            ..TrainConfig::default()
        };
        let mut trainer = Trainer::new(&data, &sched, cfg, init.clone()).unwrap();
        for _ in 0..10 {
            trainer.step().unwrap();
        }
        assert_eq!(trainer.weights(), &init);
    }

    #[test]
    fn training_is_deterministic() {
        let sched = cosine_schedule(20, 0.008).unwrap();
        let data = toy_set(4, 2);
        let cfg = TrainConfig {
            steps: 15,
            seed: 3,
            ..TrainConfig::default()
        };
        let a = train_denoiser(&data, &sched, &cfg, Architecture::desk(2, 1, 1, 4)).unwrap();
        let b = train_denoiser(&data, &sched, &cfg, Architecture::desk(2, 1, 1, 4)).unwrap();
        assert_eq!(a.losses, b.losses);
        assert_eq!(a.weights, b.weights);
    }

    #[test]
    fn conditional_loss_decreases_without_dropout() {
        let sched = cosine_schedule(50, 0.008).unwrap();
        let data = toy_set(10, 4);
        let cfg = TrainConfig {
            steps: 500,
            batch_size: 4,
            cond_dropout_prob: 0.0,
            seed: 11,
            ..TrainConfig::default()
        };
        let out = train_denoiser(&data, &sched, &cfg, Architecture::desk(2, 1, 1, 8)).unwrap();
        assert_eq!(out.dropped_conditions, 0);
        let head: f64 = out.losses[..50].iter().sum::<f64>() / 50.0;
        let tail: f64 = out.losses[450..].iter().sum::<f64>() / 50.0;
        assert!(tail < head, "loss went from {head} to {tail}");
    }

    #[test]
    fn dropout_fraction_is_near_nominal() {
        let sched = cosine_schedule(10, 0.008).unwrap();
        let data = toy_set(2, 5);
        let arch = Architecture::desk(2, 1, 1, 1);
        let cfg = TrainConfig {
            learning_rate: 0.0,
            batch_size: 1,
            cond_dropout_prob: 0.1,
            seed: 17,
            ..TrainConfig::default()
        };
        let mut trainer = Trainer::new(&data, &sched, cfg, ModelWeights::zeros(arch).unwrap()).unwrap();
        for _ in 0..10_000 {
            trainer.step().unwrap();
        }
        let frac = trainer.dropped_conditions() as f64 / trainer.drawn_examples() as f64;
        assert!((0.08..=0.12).contains(&frac), "dropout fraction {frac}");
    }

    #[test]
    fn rejects_empty_dataset_and_bad_config() {
        let sched = cosine_schedule(10, 0.008).unwrap();
        let arch = Architecture::desk(2, 1, 1, 2);
        let w = ModelWeights::zeros(arch).unwrap();
        assert!(Trainer::new(&[], &sched, TrainConfig::default(), w.clone()).is_err());
        let bad = TrainConfig {
            cond_dropout_prob: 1.5,
            ..TrainConfig::default()
        };
        assert!(Trainer::new(&toy_set(1, 0), &sched, bad, w).is_err());
    }

    #[test]
    fn non_finite_loss_reports_divergence() {
        let sched = cosine_schedule(10, 0.008).unwrap();
        let mut data = toy_set(1, 0);
        data[0].target.data_mut()[0] = f64::INFINITY;
        let w = ModelWeights::init(Architecture::desk(2, 1, 1, 2), 0).unwrap();
        let mut trainer = Trainer::new(&data, &sched, TrainConfig::default(), w).unwrap();
        assert!(matches!(trainer.step(), Err(Error::Diverged { step: 0, .. })));
    }
}
