//! Finite-difference verification of the hand-written backward pass.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::conv::ModelWeights;
use super::train::{loss_and_gradient, LossNorm};
use super::DenoiserInput;
use crate::schedule::{cosine_schedule, NoiseSchedule, DEFAULT_COSINE_OFFSET};
use crate::tensor::Field;

const FD_STEP: f64 = 1e-5;
/// Magnitudes below this are compared absolutely rather than relatively.
const REL_FLOOR: f64 = 1e-8;
const TARGET_SEED: u64 = 0x6772_6164;

/// Max relative error between analytic and central-difference gradients of
/// the L2 denoising loss against a fixed pseudo-random target, over
/// `probe_count` randomly chosen parameters (all of them if there are fewer).
///
/// `sched` supplies the step embedding length and the noise level of `input.step`.
pub fn gradient_check_with_schedule(
    weights: &ModelWeights,
    input: &DenoiserInput<'_>,
    sched: &NoiseSchedule,
    probe_count: usize,
) -> crate::error::Result<f64> {
    weights.validate()?;
    sched.check_step(input.step)?;
    let (total_steps, abar) = (sched.len(), sched.alpha_bar(input.step));
    let mut rng = ChaCha8Rng::seed_from_u64(TARGET_SEED);
    let target = Field::randn(input.x_t.shape(), &mut rng);
    let cond = input.condition.field();
    let loss = |w: &ModelWeights| {
        loss_and_gradient(w, input.x_t, cond, input.step, total_steps, abar, &target, LossNorm::L2)
            .map(|(l, _)| l)
    };
    let (_, analytic) =
        loss_and_gradient(weights, input.x_t, cond, input.step, total_steps, abar, &target, LossNorm::L2)?;

    let total = weights.parameter_count();
    let probes: Vec<usize> = if probe_count >= total {
        (0..total).collect()
    } else {
        let mut v = sample(&mut rng, total, probe_count.max(1)).into_vec();
        v.sort_unstable();
        v
    };

    let mut perturbed = weights.clone();
    let mut worst: f64 = 0.0;
    for index in probes {
        let (ti, off) = weights.locate(index).expect("probe within parameter count");
        let original = weights.tensors[ti].data[off];
        perturbed.tensors[ti].data[off] = original + FD_STEP;
        let plus = loss(&perturbed)?;
        perturbed.tensors[ti].data[off] = original - FD_STEP;
        let minus = loss(&perturbed)?;
        perturbed.tensors[ti].data[off] = original;
        let numeric = (plus - minus) / (2.0 * FD_STEP);
        let exact = analytic[ti][off];
        let denom = exact.abs().max(numeric.abs()).max(REL_FLOOR);
        worst = worst.max((exact - numeric).abs() / denom);
    }
    Ok(worst)
}

/// [`gradient_check_with_schedule`] on a 1000-step cosine schedule.
pub fn gradient_check(
    weights: &ModelWeights,
    input: &DenoiserInput<'_>,
    probe_count: usize,
) -> crate::error::Result<f64> {
    let sched = cosine_schedule(1000, DEFAULT_COSINE_OFFSET)?;
    gradient_check_with_schedule(weights, input, &sched, probe_count)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::denoiser::{Architecture, Condition};

    #[test]
    fn random_network_passes() {
        let arch = Architecture::desk(2, 2, 1, 4);
        let weights = ModelWeights::init(arch, 21).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = Field::randn([2, 1, 5, 5], &mut rng);
        let c = Field::randn([2, 1, 5, 5], &mut rng);
        let input = DenoiserInput {
            x_t: &x,
            condition: Condition::Observed(&c),
            step: 13,
        };
        let sched = cosine_schedule(50, DEFAULT_COSINE_OFFSET).unwrap();
        let err = gradient_check_with_schedule(&weights, &input, &sched, 64).unwrap();
        assert!(err <= 1e-5, "max relative error {err}");
    }

    #[test]
    fn zero_network_is_exact_and_exhaustive() {
        let arch = Architecture::desk(1, 1, 1, 2);
        let weights = ModelWeights::zeros(arch).unwrap();
        let x = Field::zeros([1, 1, 3, 3]);
        let c = Field::zeros([1, 1, 3, 3]);
        let input = DenoiserInput {
            x_t: &x,
            condition: Condition::Null(&c),
            step: 0,
        };
        let err = gradient_check(&weights, &input, 1_000_000).unwrap();
        assert!(err < 1e-9, "max relative error {err}");
    }
}
