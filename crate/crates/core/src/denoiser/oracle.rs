//! Closed-form optimal noise predictor for i.i.d. Gaussian pixel data.
//!
//! If `x_0 ~ N(μ0, τ² I)` then `x_t | x_0 ~ N(√ᾱ x_0, (1-ᾱ) I)` and the
//! posterior mean is
//! `E[x_0 | x_t] = μ0 + √ᾱ τ² / (ᾱ τ² + 1 - ᾱ) · (x_t - √ᾱ μ0)`.
//! The MSE-optimal ε follows by inverting the forward map.

use serde::{Deserialize, Serialize};

use super::{Condition, Denoiser, DenoiserInput};
use crate::error::{Error, Result};
use crate::schedule::NoiseSchedule;
use crate::tensor::Field;

/// How the prior mean μ0 is derived from the condition slot.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorMean {
    /// μ0 is the global constant regardless of the context.
    Global,
    /// μ0 repeats the last observed context frame across the horizon.
    Persistence,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianOracle {
    pub prior_var: f64,
    pub global_mean: f64,
    pub prior: PriorMean,
}

impl GaussianOracle {
    pub fn new(prior_var: f64, global_mean: f64, prior: PriorMean) -> Result<Self> {
        if !(prior_var > 0.0 && prior_var.is_finite()) {
            return Err(Error::Parameter(format!(
                "oracle prior variance must be positive, got {prior_var}"
            )));
        }
        Ok(GaussianOracle {
            prior_var,
            global_mean,
            prior,
        })
    }

    pub fn prior_mean(&self, condition: Condition<'_>, target: [usize; 4]) -> Result<Field> {
        match (self.prior, condition) {
            (PriorMean::Persistence, Condition::Observed(ctx)) => {
                let [n, c, h, w] = target;
                if ctx.channels() != c || ctx.height() != h || ctx.width() != w {
                    return Err(Error::shape(&target[1..], &ctx.shape()[1..]));
                }
                let last = ctx.frame_range(ctx.frames() - 1, ctx.frames());
                let mut out = Vec::with_capacity(target.iter().product());
                for _ in 0..n {
                    out.extend_from_slice(last.data());
                }
                Field::from_vec(target, out)
            }
            _ => Ok(Field::filled(target, self.global_mean)),
        }
    }
}

/// Optimal ε for a Gaussian prior with mean field `prior_mean` and variance `prior_var`.
pub fn gaussian_oracle_eps(
    x_t: &Field,
    prior_mean: &Field,
    prior_var: f64,
    step: usize,
    sched: &NoiseSchedule,
) -> Result<Field> {
    sched.check_step(step)?;
    oracle_eps_with(x_t, prior_mean, prior_var, sched.alpha_bar(step), step)
}

pub(crate) fn oracle_eps_with(
    x_t: &Field,
    prior_mean: &Field,
    prior_var: f64,
    alpha_bar: f64,
    step: usize,
) -> Result<Field> {
    if prior_var <= 0.0 {
        return Err(Error::Parameter("oracle prior variance must be positive".into()));
    }
    if alpha_bar >= 1.0 {
        return Err(Error::DegenerateStep {
            step,
            reason: "noise scale sqrt(1 - alpha_bar) is zero".into(),
        });
    }
    let root = alpha_bar.sqrt();
    let gain = root * prior_var / (alpha_bar * prior_var + 1.0 - alpha_bar);
    let noise_scale = (1.0 - alpha_bar).sqrt();
    x_t.zip_map(prior_mean, |x, mu| {
        let posterior = mu + gain * (x - root * mu);
        (x - root * posterior) / noise_scale
    })
}

/// `E[x_0 | x_t]` under the Gaussian prior.
pub fn gaussian_oracle_posterior(
    x_t: &Field,
    prior_mean: &Field,
    prior_var: f64,
    alpha_bar: f64,
) -> Result<Field> {
    let root = alpha_bar.sqrt();
    let gain = root * prior_var / (alpha_bar * prior_var + 1.0 - alpha_bar);
    x_t.zip_map(prior_mean, |x, mu| mu + gain * (x - root * mu))
}

impl Denoiser for GaussianOracle {
    fn predict_eps(&self, input: &DenoiserInput<'_>, sched: &NoiseSchedule) -> Result<Field> {
        let mu = self.prior_mean(input.condition, input.x_t.shape())?;
        gaussian_oracle_eps(input.x_t, &mu, self.prior_var, input.step, sched)
    }

    fn check_shapes(&self, target: [usize; 4], context: [usize; 4]) -> Result<()> {
        if self.prior == PriorMean::Persistence && target[1..] != context[1..] {
            return Err(Error::shape(&target[1..], &context[1..]));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn f(v: f64) -> Field {
        Field::filled([1, 1, 2, 2], v)
    }

    #[test]
    fn hand_evaluated_posterior_and_eps() {
        let post = gaussian_oracle_posterior(&f(1.0), &f(0.0), 1.0, 0.5).unwrap();
        let h = 0.5f64.sqrt();
        for v in post.data() {
            assert!((v - h).abs() < 1e-15);
            assert!((v - 0.70711).abs() < 1e-5);
        }
        let eps = oracle_eps_with(&f(1.0), &f(0.0), 1.0, 0.5, 0).unwrap();
        for v in eps.data() {
            assert!((v - (1.0 - h * h) / h).abs() < 1e-15);
            assert!((v - 0.70711).abs() < 1e-5);
        }
    }

    #[test]
    fn zero_variance_prior_dominates() {
        let post = gaussian_oracle_posterior(&f(3.0), &f(0.25), 1e-14, 0.3).unwrap();
        for v in post.data() {
            assert!((v - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn noiseless_limit_returns_observation() {
        let post = gaussian_oracle_posterior(&f(3.0), &f(0.25), 1.0, 1.0 - 1e-12).unwrap();
        for v in post.data() {
            assert!((v - 3.0).abs() < 1e-9);
        }
        assert!(matches!(
            oracle_eps_with(&f(3.0), &f(0.25), 1.0, 1.0, 4),
            Err(Error::DegenerateStep { step: 4, .. })
        ));
    }

    #[test]
    fn persistence_prior_repeats_last_frame() {
        let ctx = Field::from_vec([2, 1, 1, 2], vec![0.0, 0.0, 0.5, 0.75]).unwrap();
        let oracle = GaussianOracle::new(1.0, -1.0, PriorMean::Persistence).unwrap();
        let mu = oracle.prior_mean(Condition::Observed(&ctx), [3, 1, 1, 2]).unwrap();
        assert_eq!(mu.data(), &[0.5, 0.75, 0.5, 0.75, 0.5, 0.75]);
        let null = oracle.prior_mean(Condition::Null(&ctx), [3, 1, 1, 2]).unwrap();
        assert!(null.data().iter().all(|&v| v == -1.0));
    }

    #[test]
    fn rejects_nonpositive_variance() {
        assert!(GaussianOracle::new(0.0, 0.0, PriorMean::Global).is_err());
    }
}
