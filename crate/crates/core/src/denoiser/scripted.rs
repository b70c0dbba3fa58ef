//! Denoisers with hand-chosen outputs, for tests and hand traces.

use super::{Denoiser, DenoiserInput};
use crate::error::Result;
use crate::schedule::NoiseSchedule;
use crate::tensor::Field;

/// Returns a fixed field for each branch, ignoring the state.
#[derive(Clone, Debug)]
pub struct ScriptedDenoiser {
    pub conditional: Field,
    pub unconditional: Field,
}

impl ScriptedDenoiser {
    pub fn constant(field: Field) -> Self {
        ScriptedDenoiser {
            conditional: field.clone(),
            unconditional: field,
        }
    }
}

impl Denoiser for ScriptedDenoiser {
    fn predict_eps(&self, input: &DenoiserInput<'_>, _sched: &NoiseSchedule) -> Result<Field> {
        let out = if input.condition.is_null() {
            &self.unconditional
        } else {
            &self.conditional
        };
        input.x_t.ensure_same_shape(out)?;
        Ok(out.clone())
    }
}

/// Predicts `ε = x_t`.
#[derive(Clone, Copy, Debug, Default)]
pub struct IdentityDenoiser;

impl Denoiser for IdentityDenoiser {
    fn predict_eps(&self, input: &DenoiserInput<'_>, _sched: &NoiseSchedule) -> Result<Field> {
        Ok(input.x_t.clone())
    }
}

/// Predicts the noise that maps `x_t` exactly onto a constant `x_0`, so a
/// deterministic reverse trajectory lands on that constant from any prior draw.
#[derive(Clone, Copy, Debug)]
pub struct FixedTargetDenoiser {
    pub target: f64,
}

impl Denoiser for FixedTargetDenoiser {
    fn predict_eps(&self, input: &DenoiserInput<'_>, sched: &NoiseSchedule) -> Result<Field> {
        sched.check_step(input.step)?;
        let abar = sched.alpha_bar(input.step);
        let (root, noise) = (abar.sqrt(), (1.0 - abar).sqrt());
        Ok(input.x_t.map(|x| (x - root * self.target) / noise))
    }
}
