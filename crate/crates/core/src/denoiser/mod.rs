//! The noise-prediction contract and its implementations.

mod conv;
mod gradcheck;
mod oracle;
pub mod scripted;
mod train;

pub use conv::{Activation, Architecture, ConvDenoiser, LayerSpec, ModelWeights, NamedTensor};
pub use gradcheck::{gradient_check, gradient_check_with_schedule};
pub use oracle::{gaussian_oracle_eps, gaussian_oracle_posterior, GaussianOracle, PriorMean};
pub use train::{initial_weights, train_denoiser, LossNorm, TrainConfig, TrainOutput, Trainer, TrainingPair};

use crate::error::Result;
use crate::schedule::NoiseSchedule;
use crate::tensor::Field;

/// What occupies the condition slot of a denoiser call.
#[derive(Clone, Copy, Debug)]
pub enum Condition<'a> {
    /// Observed context frames.
    Observed(&'a Field),
    /// The unconditional branch. The carried field is the standard-normal
    /// stand-in fed in place of the context, matching how the network was
    /// trained with condition dropout.
    Null(&'a Field),
}

impl<'a> Condition<'a> {
    pub fn field(&self) -> &'a Field {
        match *self {
            Condition::Observed(f) | Condition::Null(f) => f,
        }
    }

    pub fn is_null(&self) -> bool {
        matches!(self, Condition::Null(_))
    }
}

#[derive(Clone, Copy, Debug)]
pub struct DenoiserInput<'a> {
    pub x_t: &'a Field,
    pub condition: Condition<'a>,
    /// 0-based schedule index of the noise level of `x_t`.
    pub step: usize,
}

/// An ε-predictor: maps a corrupted state to an estimate of the injected noise.
pub trait Denoiser: Send + Sync {
    fn predict_eps(&self, input: &DenoiserInput<'_>, sched: &NoiseSchedule) -> Result<Field>;

    /// Checks the task shapes before any sampling starts.
    fn check_shapes(&self, _target: [usize; 4], _context: [usize; 4]) -> Result<()> {
        Ok(())
    }
}

impl<D: Denoiser + ?Sized> Denoiser for &D {
    fn predict_eps(&self, input: &DenoiserInput<'_>, sched: &NoiseSchedule) -> Result<Field> {
        (**self).predict_eps(input, sched)
    }

    fn check_shapes(&self, target: [usize; 4], context: [usize; 4]) -> Result<()> {
        (**self).check_shapes(target, context)
    }
}

impl<D: Denoiser + ?Sized> Denoiser for Box<D> {
    fn predict_eps(&self, input: &DenoiserInput<'_>, sched: &NoiseSchedule) -> Result<Field> {
        (**self).predict_eps(input, sched)
    }

    fn check_shapes(&self, target: [usize; 4], context: [usize; 4]) -> Result<()> {
        (**self).check_shapes(target, context)
    }
}
