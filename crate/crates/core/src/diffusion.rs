//! Stateless diffusion algebra shared by training and both samplers.

use crate::error::{Error, Result};
use crate::schedule::NoiseSchedule;
use crate::tensor::Field;

/// A latent on the reverse trajectory.
///
/// `step` counts the reverse steps still to run: `step == T` is the Gaussian
/// prior and `step == 0` is the finished sample. The schedule entry consumed
/// by the next reverse step is `step - 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentState {
    pub data: Field,
    pub step: usize,
}

/// Observed frames preceding the forecast window.
#[derive(Clone, Debug, PartialEq)]
pub struct ContextField {
    pub data: Field,
    /// Offsets in frame intervals before the forecast start (negative, oldest first).
    pub timestamps: Vec<f64>,
}

impl ContextField {
    pub fn new(data: Field) -> Result<Self> {
        if data.frames() == 0 {
            return Err(Error::Input("context needs at least one frame".into()));
        }
        if !data.is_finite() {
            return Err(Error::Input("context contains non-finite values".into()));
        }
        let n = data.frames();
        let timestamps = (0..n).map(|i| i as f64 - n as f64).collect();
        Ok(ContextField { data, timestamps })
    }
}

/// Samples `q(x_t | x_0) = N(√ᾱ_t x_0, (1 − ᾱ_t) I)` with the supplied noise.
pub fn forward_sample(x0: &Field, t: usize, eps: &Field, sched: &NoiseSchedule) -> Result<Field> {
    sched.check_step(t)?;
    forward_sample_with(x0, eps, sched.alpha_bar(t))
}

pub(crate) fn forward_sample_with(x0: &Field, eps: &Field, alpha_bar: f64) -> Result<Field> {
    let a = alpha_bar.sqrt();
    let b = (1.0 - alpha_bar).sqrt();
    x0.zip_map(eps, |x, e| a * x + b * e)
}

/// Direct single-jump estimate of `x_0` from `x_t` and a noise prediction.
pub fn predict_x0(x_t: &Field, eps_hat: &Field, t: usize, sched: &NoiseSchedule) -> Result<Field> {
    sched.check_step(t)?;
    predict_x0_with(x_t, eps_hat, sched.alpha_bar(t), t)
}

pub(crate) fn predict_x0_with(
    x_t: &Field,
    eps_hat: &Field,
    alpha_bar: f64,
    t: usize,
) -> Result<Field> {
    if alpha_bar <= 0.0 {
        return Err(Error::DegenerateStep {
            step: t,
            reason: "alpha_bar is zero".into(),
        });
    }
    let inv = 1.0 / alpha_bar.sqrt();
    let b = (1.0 - alpha_bar).sqrt();
    x_t.zip_map(eps_hat, |x, e| (x - b * e) * inv)
}

/// Mean of the reverse transition `x_t → x_{t-1}` given a noise prediction.
///
/// Used for both the conditioned and the free branch; they differ only in
/// which prediction is supplied.
pub fn posterior_mean(x_t: &Field, eps_hat: &Field, t: usize, sched: &NoiseSchedule) -> Result<Field> {
    sched.check_step(t)?;
    posterior_mean_with(x_t, eps_hat, sched.alpha(t), sched.alpha_bar(t), t)
}

pub(crate) fn posterior_mean_with(
    x_t: &Field,
    eps_hat: &Field,
    alpha: f64,
    alpha_bar: f64,
    t: usize,
) -> Result<Field> {
    if alpha <= 0.0 {
        return Err(Error::DegenerateStep {
            step: t,
            reason: "alpha is zero".into(),
        });
    }
    let coef = if alpha == 1.0 {
        0.0
    } else if alpha_bar >= 1.0 {
        return Err(Error::DegenerateStep {
            step: t,
            reason: "alpha_bar is one while beta is positive".into(),
        });
    } else {
        (1.0 - alpha) / (1.0 - alpha_bar).sqrt()
    };
    let inv = 1.0 / alpha.sqrt();
    x_t.zip_map(eps_hat, |x, e| (x - coef * e) * inv)
}
