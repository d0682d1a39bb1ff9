use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::{elbo_loss_and_grad, Example, LossBreakdown, LossWeights};
use super::model::{Cvae, CvaeShape};
use crate::error::{Error, Result};
use crate::scalar::{lit, Real};

/// Optimization hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Mutual-information weight.
    pub alpha: f64,
    pub beta_max: f64,
    /// Iteration at which the KL weight reaches `beta_max / 2`.
    pub crossover: usize,
    /// Iterations over which the KL weight rises from 2% to 98%.
    pub ramp: usize,
    pub kl_clamp: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            alpha: 1.5,
            beta_max: 1.0,
            crossover: 10_000,
            ramp: 1_000,
            kl_clamp: 0.2,
            batch_size: 256,
            epochs: 30,
            learning_rate: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            seed: 0,
        }
    }
}

/// Runs shorter than this use a crossover at half the run.
pub const FULL_SCHEDULE_ITERATIONS: usize = 20_000;

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v >= 0.0;
        if !ok(self.alpha) || !ok(self.beta_max) || !ok(self.kl_clamp) {
            return Err(Error::Config("alpha, beta_max and kl_clamp must be finite and >= 0".into()));
        }
        if self.batch_size == 0 || self.epochs == 0 || self.crossover == 0 || self.ramp == 0 {
            return Err(Error::Config("batch size, epochs, crossover and ramp must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) || !(self.adam_epsilon > 0.0) {
            return Err(Error::Config("Adam decay rates must lie in [0, 1) and epsilon be positive".into()));
        }
        Ok(())
    }

    pub fn iterations(&self, examples: usize) -> usize {
        self.epochs * examples.div_ceil(self.batch_size)
    }
}

/// Logistic KL-weight schedule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaSchedule {
    pub beta_max: f64,
    pub crossover: f64,
    pub ramp: f64,
}

impl BetaSchedule {
    /// Schedule for a run of `total` iterations; short runs compress the
    /// crossover to `total / 2` and shrink the ramp by the same factor.
    pub fn for_run(config: &TrainConfig, total: usize) -> Self {
        let (crossover, ramp) = if total < FULL_SCHEDULE_ITERATIONS {
            let c = total as f64 / 2.0;
            (c, config.ramp as f64 * c / config.crossover as f64)
        } else {
            (config.crossover as f64, config.ramp as f64)
        };
        Self {
            beta_max: config.beta_max,
            crossover,
            ramp: ramp.max(f64::MIN_POSITIVE),
        }
    }

    pub fn at(&self, iteration: usize) -> f64 {
        // 2% -> 98% spans 2 ln 49 scale units.
        let scale = self.ramp / (2.0 * 49f64.ln());
        let x = (iteration as f64 - self.crossover) / scale;
        self.beta_max / (1.0 + (-x).exp())
    }
}

/// Adam optimizer state.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam<T> {
    lr: T,
    b1: T,
    b2: T,
    eps: T,
    m: Vec<T>,
    v: Vec<T>,
    t: i32,
}

impl<T: Real> Adam<T> {
    pub fn new(len: usize, config: &TrainConfig) -> Self {
        Self {
            lr: lit(config.learning_rate),
            b1: lit(config.adam_beta1),
            b2: lit(config.adam_beta2),
            eps: lit(config.adam_epsilon),
            m: vec![T::zero(); len],
            v: vec![T::zero(); len],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [T], grad: &[T]) {
        self.t += 1;
        let c1 = T::one() - self.b1.powi(self.t);
        let c2 = T::one() - self.b2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = self.b1 * self.m[i] + (T::one() - self.b1) * grad[i];
            self.v[i] = self.b2 * self.v[i] + (T::one() - self.b2) * grad[i] * grad[i];
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            params[i] = params[i] - self.lr * mh / (vh.sqrt() + self.eps);
        }
    }
}

/// Trained network and the per-iteration loss trace.
#[derive(Debug, Clone, PartialEq)]
pub struct Trained<T> {
    pub model: Cvae<T>,
    pub trace: Vec<LossBreakdown<T>>,
}

/// Minibatch Adam on the modified ELBO. Initialization and shuffling draw
/// from one generator seeded with `config.seed`.
pub fn train<T: Real>(shape: CvaeShape, data: &[Example<'_, T>], config: &TrainConfig) -> Result<Trained<T>> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::Empty("training set"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = Cvae::with_rng(shape, &mut rng)?;
    let total = config.iterations(data.len());
    let schedule = BetaSchedule::for_run(config, total);
    let mut adam = Adam::new(model.params().len(), config);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut trace = Vec::with_capacity(total);
    let mut iteration = 0;
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<Example<'_, T>> = chunk.iter().map(|&i| data[i]).collect();
            let weights = LossWeights {
                alpha: lit(config.alpha),
                beta: lit(schedule.at(iteration)),
                kl_clamp: lit(config.kl_clamp),
            };
            let (loss, grad) = elbo_loss_and_grad(&model, &batch, weights)?;
            if !loss.total.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Diverged {
                    iteration,
                    trace: trace
                        .iter()
                        .map(|l: &LossBreakdown<T>| l.total.to_f64().unwrap_or(f64::NAN))
                        .collect(),
                });
            }
            adam.step(model.params_mut(), &grad);
            trace.push(loss);
            iteration += 1;
        }
    }
    Ok(Trained { model, trace })
}

/// Means of consecutive `window`-sized blocks of the total loss.
pub fn smoothed_totals<T: Real>(trace: &[LossBreakdown<T>], window: usize) -> Vec<f64> {
    trace
        .chunks(window.max(1))
        .map(|c| c.iter().map(|l| l.total.to_f64().unwrap_or(f64::NAN)).sum::<f64>() / c.len() as f64)
        .collect()
}
