use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use cogdpm::denoiser::scripted::ScriptedDenoiser;
use cogdpm::denoiser::{
    Architecture, Condition, ConvDenoiser, Denoiser, DenoiserInput, GaussianOracle, ModelWeights, PriorMean,
};
use cogdpm::diffusion::{forward_sample, ContextField, LatentState};
use cogdpm::sampler::{cogdpm_sample, cogdpm_step, NoiseSource, PrecisionQueue, SamplerConfig};
use cogdpm::schedule::{cosine_schedule, linear_schedule};
use cogdpm::Field;

fn field(shape: [usize; 4], seed: u64) -> Field {
    Field::randn(shape, &mut ChaCha8Rng::seed_from_u64(seed))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn larger_lambda_never_lowers_the_sample(
        seed in any::<u64>(),
        lo in 0.0f64..4.0,
        extra in 0.0f64..4.0,
        gap in 0.01f64..2.0,
    ) {
        let shape = [1, 1, 3, 4];
        let sched = linear_schedule(1, 0.02, 0.02).unwrap();
        let cond = field(shape, seed);
        // the free branch predicts more noise everywhere, so P − G > 0
        let free = cond.map(|v| v + gap);
        let model = ScriptedDenoiser { conditional: cond, unconditional: free };
        let ctx = ContextField::new(Field::zeros(shape)).unwrap();
        let x = field(shape, seed ^ 1);
        let earlier = field(shape, seed ^ 2);
        let step_with = |lambda: f64| {
            let cfg = SamplerConfig { lambda, queue_capacity: 2, ..SamplerConfig::default() };
            let mut queue = PrecisionQueue::new(2);
            queue.push(earlier.clone()).unwrap();
            let mut noise = NoiseSource::new(3);
            let state = LatentState { data: x.clone(), step: 1 };
            cogdpm_step(&state, &ctx, &model, &mut queue, &sched, &cfg, &mut noise).unwrap().state.data
        };
        let a = step_with(lo);
        let b = step_with(lo + extra);
        for (va, vb) in a.data().iter().zip(b.data()) {
            prop_assert!(vb >= va, "{vb} < {va}");
        }
    }

    #[test]
    fn queue_never_exceeds_capacity_and_evicts_oldest(cap in 1usize..6, pushes in 1usize..20) {
        let mut q = PrecisionQueue::new(cap);
        for i in 0..pushes {
            q.push(Field::filled([1, 1, 1, 1], i as f64)).unwrap();
            prop_assert!(q.len() <= cap);
            let kept: Vec<f64> = q.entries().map(|f| f.data()[0]).collect();
            let first = (i + 1).saturating_sub(cap);
            let expect: Vec<f64> = (first..=i).map(|v| v as f64).collect();
            prop_assert_eq!(kept, expect);
        }
    }

    #[test]
    fn every_weight_lies_in_range(seed in any::<u64>(), lambda in 0.0f64..5.0, cap in 1usize..6) {
        let sched = cosine_schedule(12, 0.008).unwrap();
        let oracle = GaussianOracle::new(0.5, 0.0, PriorMean::Persistence).unwrap();
        let ctx = ContextField::new(field([2, 1, 5, 5], seed)).unwrap();
        let cfg = SamplerConfig {
            lambda,
            queue_capacity: cap,
            seed,
            keep_history: true,
            stochastic_step: seed % 2 == 0,
            ..SamplerConfig::default()
        };
        let run = cogdpm_sample(&ctx, 2, &oracle, &sched, &cfg).unwrap();
        prop_assert!(run.forecast.is_finite());
        prop_assert_eq!(run.weight_history.len(), 12);
        for w in run.weight_history.iter().flat_map(|f| f.data().iter()) {
            prop_assert!((1.0..=1.0 + lambda).contains(w), "weight {w}");
        }
    }
}

/// Mean squared error of `model`'s ε prediction on data drawn from `prior`.
fn denoising_loss(model: &dyn Denoiser, oracle: &GaussianOracle, steps: &[usize]) -> (f64, f64, usize) {
    let sched = cosine_schedule(50, 0.008).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let shape = [2, 1, 16, 16];
    let mut errs = Vec::new();
    for &t in steps {
        for _ in 0..10 {
            let ctx = Field::randn([1, 1, 16, 16], &mut rng);
            let mu = oracle.prior_mean(Condition::Observed(&ctx), shape).unwrap();
            let noise0 = Field::randn(shape, &mut rng);
            let x0 = mu.zip_map(&noise0, |m, z| m + oracle.prior_var.sqrt() * z).unwrap();
            let eps = Field::randn(shape, &mut rng);
            let xt = forward_sample(&x0, t, &eps, &sched).unwrap();
            let input = DenoiserInput { x_t: &xt, condition: Condition::Observed(&ctx), step: t };
            let pred = model.predict_eps(&input, &sched).unwrap();
            errs.extend(pred.data().iter().zip(eps.data()).map(|(p, e)| (p - e) * (p - e)));
        }
    }
    let n = errs.len() as f64;
    let mean = errs.iter().sum::<f64>() / n;
    let var = errs.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / n;
    (mean, (var / n).sqrt(), errs.len())
}

struct Zero;

impl Denoiser for Zero {
    fn predict_eps(&self, input: &DenoiserInput<'_>, _: &cogdpm::schedule::NoiseSchedule) -> cogdpm::Result<Field> {
        Ok(Field::zeros(input.x_t.shape()))
    }
}

#[test]
fn oracle_has_the_lowest_denoising_loss() {
    let oracle = GaussianOracle::new(0.3, 0.0, PriorMean::Persistence).unwrap();
    let net = ConvDenoiser::new(ModelWeights::init(Architecture::desk(2, 1, 1, 6), 4).unwrap()).unwrap();
    let steps = [5, 20, 35, 49];
    let (lo, se_o, n) = denoising_loss(&oracle, &oracle, &steps);
    assert!(n >= 10_000);
    for (name, model) in [("network", &net as &dyn Denoiser), ("zero", &Zero)] {
        let (l, se) = {
            let (l, se, _) = denoising_loss(model, &oracle, &steps);
            (l, se)
        };
        let margin = 3.0 * (se * se + se_o * se_o).sqrt();
        assert!(l - lo >= margin, "{name}: loss {l} vs oracle {lo}, margin {margin}");
    }
}

#[test]
fn deterministic_oracle_sampling_is_centred() {
    let oracle = GaussianOracle::new(1.0, 0.0, PriorMean::Global).unwrap();
    let sched = cosine_schedule(200, 0.008).unwrap();
    let ctx = ContextField::new(Field::zeros([1, 1, 64, 64])).unwrap();
    let cfg = SamplerConfig { seed: 8, ..SamplerConfig::default() };
    let out = cogdpm_sample(&ctx, 4, &oracle, &sched, &cfg).unwrap();
    let v = out.forecast.data();
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    assert!(mean.abs() <= 3.0 * (var / n).sqrt(), "mean {mean}");
    // without the noise term the spread contracts
    assert!(var < 1.0, "variance {var}");
}
