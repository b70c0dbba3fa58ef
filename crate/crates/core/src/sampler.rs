//! Reverse-diffusion sampling with precision-weighted guidance.
//!
//! Each reverse step evaluates the denoiser twice: once with the observed
//! context (the perceptual branch `P`) and once with a fresh standard-normal
//! field in the condition slot (the generative branch `G`). The free branch's
//! direct `x_0` estimates are kept in a bounded FIFO; their per-coordinate
//! variance is standardized into a weight field `w ∈ [1, 1 + λ]`, and the
//! state advances to `G + w ⊙ (P − G)`.

use std::collections::VecDeque;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::denoiser::{Condition, Denoiser, DenoiserInput};
use crate::diffusion::{posterior_mean, predict_x0, ContextField, LatentState};
use crate::error::{Error, Result};
use crate::schedule::NoiseSchedule;
use crate::tensor::Field;

/// Guidance standard deviations below this count as zero.
pub const SIGMA_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    /// Reverse steps to run; `None` runs the whole schedule.
    pub t_infer: Option<usize>,
    pub lambda: f64,
    pub queue_capacity: usize,
    /// Newest estimates used for the variance; `None` uses the whole queue.
    pub window_k: Option<usize>,
    /// Adds `√β_t · z` after every reverse step except the last.
    pub stochastic_step: bool,
    pub clip_lo: f64,
    pub clip_hi: f64,
    pub seed: u64,
    /// Draw the unconditional-slot noise once per trajectory instead of every step.
    pub freeze_null_condition: bool,
    /// Keep every per-step weight field in the result.
    pub keep_history: bool,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            t_infer: None,
            lambda: 2.0,
            queue_capacity: 4,
            window_k: None,
            stochastic_step: false,
            clip_lo: 0.0,
            clip_hi: 1.0,
            seed: 0,
            freeze_null_condition: false,
            keep_history: false,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.queue_capacity == 0 {
            return Err(Error::config("sampler.queue_capacity", "must be >= 1"));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::config("sampler.lambda", "must be finite and >= 0"));
        }
        if !(self.clip_lo < self.clip_hi) {
            return Err(Error::config("sampler.clip_lo", "must be below clip_hi"));
        }
        if let Some(k) = self.window_k {
            if k == 0 || k > self.queue_capacity {
                return Err(Error::config(
                    "sampler.window_k",
                    "must lie in 1..=queue_capacity",
                ));
            }
        }
        if self.t_infer == Some(0) {
            return Err(Error::config("sampler.t_infer", "must be >= 1"));
        }
        Ok(())
    }

    fn start_step(&self, sched: &NoiseSchedule) -> Result<usize> {
        match self.t_infer {
            None => Ok(sched.len()),
            Some(t) if t <= sched.len() => Ok(t),
            Some(t) => Err(Error::config(
                "sampler.t_infer",
                format!("{t} exceeds the schedule length {}", sched.len()),
            )),
        }
    }

    /// Closed range every emitted weight must lie in.
    pub fn weight_bounds(&self) -> (f64, f64) {
        (
            1.0 + self.lambda * self.clip_lo,
            1.0 + self.lambda * self.clip_hi,
        )
    }
}

/// Bounded FIFO of direct `x_0` estimates, newest last.
#[derive(Clone, Debug)]
pub struct PrecisionQueue {
    capacity: usize,
    entries: VecDeque<Field>,
}

impl PrecisionQueue {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity >= 1, "queue capacity must be positive");
        PrecisionQueue {
            capacity,
            entries: VecDeque::with_capacity(capacity + 1),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Appends an estimate, evicting the oldest one when over capacity.
    pub fn push(&mut self, estimate: Field) -> Result<()> {
        if let Some(first) = self.entries.front() {
            first.ensure_same_shape(&estimate)?;
        }
        self.entries.push_back(estimate);
        if self.entries.len() > self.capacity {
            self.entries.pop_front();
        }
        Ok(())
    }

    pub fn entries(&self) -> impl Iterator<Item = &Field> {
        self.entries.iter()
    }
}

/// `P − G`.
pub fn guidance_field(p_mean: &Field, g_mean: &Field) -> Result<Field> {
    p_mean.zip_map(g_mean, |p, g| p - g)
}

/// Per-coordinate population variance over the queued estimates.
pub fn inverse_precision(queue: &PrecisionQueue) -> Result<Field> {
    inverse_precision_window(queue, queue.len())
}

fn inverse_precision_window(queue: &PrecisionQueue, window: usize) -> Result<Field> {
    if queue.is_empty() {
        return Err(Error::State("inverse precision of an empty queue".into()));
    }
    let window = window.clamp(1, queue.len());
    let recent: Vec<&Field> = queue.entries.iter().skip(queue.len() - window).collect();
    let n = recent.len() as f64;
    let mut mean = vec![0.0; recent[0].len()];
    for e in &recent {
        for (m, v) in mean.iter_mut().zip(e.data()) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; mean.len()];
    for e in &recent {
        for ((s, v), m) in var.iter_mut().zip(e.data()).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    var.iter_mut().for_each(|s| *s /= n);
    Field::from_vec(recent[0].shape(), var)
}

/// `λ · clip((U − mean(U)) / std(U), lo, hi) + 1` with global statistics.
///
/// Returns the all-ones field when the standard deviation is below
/// [`SIGMA_FLOOR`].
pub fn normalize_weights(inverse_precision: &Field, cfg: &SamplerConfig) -> Field {
    let n = inverse_precision.len() as f64;
    let mean = inverse_precision.mean();
    let var = inverse_precision
        .data()
        .iter()
        .map(|v| (v - mean) * (v - mean))
        .sum::<f64>()
        / n;
    let sigma = var.sqrt();
    if !(sigma >= SIGMA_FLOOR) {
        return Field::filled(inverse_precision.shape(), 1.0);
    }
    inverse_precision.map(|u| cfg.lambda * ((u - mean) / sigma).clamp(cfg.clip_lo, cfg.clip_hi) + 1.0)
}

/// `G + w·(P − G)`, returning `P` itself where the weight is exactly one.
fn combine(g: &Field, p: &Field, w: impl Fn(usize) -> f64) -> Field {
    let data = g
        .data()
        .iter()
        .zip(p.data())
        .enumerate()
        .map(|(i, (&gv, &pv))| {
            let wi = w(i);
            if wi == 1.0 {
                pv
            } else {
                gv + wi * (pv - gv)
            }
        })
        .collect();
    Field::from_vec(g.shape(), data).expect("shape preserved")
}

/// Source of the standard-normal fields a trajectory consumes.
///
/// Draw order per trajectory: the prior, then per step the null-condition
/// field (unless frozen) followed by the step noise (when stochastic).
pub struct NoiseSource {
    rng: ChaCha8Rng,
    frozen_null: Option<Field>,
}

impl NoiseSource {
    pub fn new(seed: u64) -> Self {
        NoiseSource {
            rng: ChaCha8Rng::seed_from_u64(seed),
            frozen_null: None,
        }
    }

    fn normal(&mut self, shape: [usize; 4]) -> Field {
        Field::randn(shape, &mut self.rng)
    }

    fn null_condition(&mut self, shape: [usize; 4], freeze: bool) -> Field {
        if freeze {
            if self.frozen_null.is_none() {
                self.frozen_null = Some(self.normal(shape));
            }
            self.frozen_null.clone().unwrap()
        } else {
            self.normal(shape)
        }
    }
}

/// Output of one reverse step.
pub struct StepOutput {
    pub state: LatentState,
    pub weights: Field,
}

/// Both branch means and the free-branch `x_0` estimate at one step.
struct Branches {
    p: Field,
    g: Field,
    x0_free: Field,
}

fn evaluate_branches(
    x_t: &LatentState,
    context: &ContextField,
    model: &dyn Denoiser,
    sched: &NoiseSchedule,
    null_condition: &Field,
) -> Result<Branches> {
    let t = x_t.step - 1;
    let eps_cond = model.predict_eps(
        &DenoiserInput {
            x_t: &x_t.data,
            condition: Condition::Observed(&context.data),
            step: t,
        },
        sched,
    )?;
    let eps_free = model.predict_eps(
        &DenoiserInput {
            x_t: &x_t.data,
            condition: Condition::Null(null_condition),
            step: t,
        },
        sched,
    )?;
    Ok(Branches {
        p: posterior_mean(&x_t.data, &eps_cond, t, sched)?,
        g: posterior_mean(&x_t.data, &eps_free, t, sched)?,
        x0_free: predict_x0(&x_t.data, &eps_free, t, sched)?,
    })
}

fn add_step_noise(
    mut next: Field,
    step: usize,
    sched: &NoiseSchedule,
    cfg: &SamplerConfig,
    noise: &mut NoiseSource,
) -> Field {
    // the step that produces x_0 never adds noise
    if cfg.stochastic_step && step > 1 {
        let scale = sched.beta(step - 1).sqrt();
        let z = noise.normal(next.shape());
        for (v, zi) in next.data_mut().iter_mut().zip(z.data()) {
            *v += scale * zi;
        }
    }
    next
}

/// One precision-weighted reverse step `x_t → x_{t-1}`.
pub fn cogdpm_step(
    x_t: &LatentState,
    context: &ContextField,
    model: &dyn Denoiser,
    queue: &mut PrecisionQueue,
    sched: &NoiseSchedule,
    cfg: &SamplerConfig,
    noise: &mut NoiseSource,
) -> Result<StepOutput> {
    if x_t.step == 0 || x_t.step > sched.len() {
        return Err(Error::State(format!(
            "no reverse step from step {} with a {}-step schedule",
            x_t.step,
            sched.len()
        )));
    }
    let null = noise.null_condition(context.data.shape(), cfg.freeze_null_condition);
    let b = evaluate_branches(x_t, context, model, sched, &null)?;
    queue.push(b.x0_free)?;
    let u = inverse_precision_window(queue, cfg.window_k.unwrap_or(queue.capacity()))?;
    let w = normalize_weights(&u, cfg);
    let (lo, hi) = cfg.weight_bounds();
    if let Some(bad) = w.data().iter().find(|&&v| !(lo..=hi).contains(&v)) {
        return Err(Error::State(format!(
            "weight {bad} outside [{lo}, {hi}] at step {}",
            x_t.step
        )));
    }
    let next = combine(&b.g, &b.p, |i| w.data()[i]);
    let next = add_step_noise(next, x_t.step, sched, cfg, noise);
    Ok(StepOutput {
        state: LatentState {
            data: next,
            step: x_t.step - 1,
        },
        weights: w,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum GuidanceMode {
    /// Precision-weighted field guidance.
    Precision,
    /// Classifier-free guidance with a constant scale.
    Constant { scale: f64 },
}

#[derive(Clone, Debug)]
pub struct ForecastResult {
    pub forecast: Field,
    /// Weight field of every step, oldest first, when history is kept.
    pub weight_history: Vec<Field>,
    pub final_weights: Field,
    /// Variance of the queued estimates at the last step (precision mode only).
    pub final_inverse_precision: Option<Field>,
    pub seed: u64,
    pub mode: GuidanceMode,
    pub config: SamplerConfig,
}

fn target_shape(context: &ContextField, horizon: usize) -> [usize; 4] {
    let [_, c, h, w] = context.data.shape();
    [horizon, c, h, w]
}

fn run(
    context: &ContextField,
    horizon: usize,
    model: &dyn Denoiser,
    sched: &NoiseSchedule,
    cfg: &SamplerConfig,
    mode: GuidanceMode,
) -> Result<ForecastResult> {
    cfg.validate()?;
    if horizon == 0 {
        return Err(Error::Input("forecast horizon must be >= 1".into()));
    }
    let shape = target_shape(context, horizon);
    model.check_shapes(shape, context.data.shape())?;
    let start = cfg.start_step(sched)?;
    let mut noise = NoiseSource::new(cfg.seed);
    let mut state = LatentState {
        data: noise.normal(shape),
        step: start,
    };
    let mut queue = PrecisionQueue::new(cfg.queue_capacity);
    let mut history = Vec::new();
    let mut final_weights = Field::filled(shape, 1.0);
    let mut final_u = None;
    while state.step > 0 {
        let step = state.step;
        let (next, weights) = match mode {
            GuidanceMode::Precision => {
                let out = cogdpm_step(&state, context, model, &mut queue, sched, cfg, &mut noise)?;
                if step == 1 {
                    final_u = Some(inverse_precision_window(
                        &queue,
                        cfg.window_k.unwrap_or(queue.capacity()),
                    )?);
                }
                (out.state, out.weights)
            }
            GuidanceMode::Constant { scale } => {
                let null = noise.null_condition(context.data.shape(), cfg.freeze_null_condition);
                let b = evaluate_branches(&state, context, model, sched, &null)?;
                let next = combine(&b.g, &b.p, |_| scale);
                let next = add_step_noise(next, step, sched, cfg, &mut noise);
                (
                    LatentState {
                        data: next,
                        step: step - 1,
                    },
                    Field::filled(shape, scale),
                )
            }
        };
        if !next.data.is_finite() {
            return Err(Error::Diverged {
                step,
                what: "non-finite latent state".into(),
            });
        }
        if cfg.keep_history {
            history.push(weights.clone());
        }
        final_weights = weights;
        state = next;
    }
    Ok(ForecastResult {
        forecast: state.data,
        weight_history: history,
        final_weights,
        final_inverse_precision: final_u,
        seed: cfg.seed,
        mode,
        config: cfg.clone(),
    })
}

/// Full precision-weighted trajectory from `x_T ~ N(0, I)` to `x_0`.
pub fn cogdpm_sample(
    context: &ContextField,
    horizon: usize,
    model: &dyn Denoiser,
    sched: &NoiseSchedule,
    cfg: &SamplerConfig,
) -> Result<ForecastResult> {
    run(context, horizon, model, sched, cfg, GuidanceMode::Precision)
}

/// Same loop with a constant scalar guidance weight and no queue.
pub fn cfg_sample(
    context: &ContextField,
    horizon: usize,
    model: &dyn Denoiser,
    sched: &NoiseSchedule,
    guidance_scale: f64,
    cfg: &SamplerConfig,
) -> Result<ForecastResult> {
    if !guidance_scale.is_finite() {
        return Err(Error::config("sampler.guidance_scale", "must be finite"));
    }
    run(
        context,
        horizon,
        model,
        sched,
        cfg,
        GuidanceMode::Constant {
            scale: guidance_scale,
        },
    )
}

pub fn sample_with_mode(
    context: &ContextField,
    horizon: usize,
    model: &dyn Denoiser,
    sched: &NoiseSchedule,
    cfg: &SamplerConfig,
    mode: GuidanceMode,
) -> Result<ForecastResult> {
    run(context, horizon, model, sched, cfg, mode)
}

/// Per-coordinate population variance of the given fields.
pub fn population_variance(fields: &[Field]) -> Result<Field> {
    let Some(first) = fields.first() else {
        return Err(Error::Input("variance of an empty collection".into()));
    };
    let mut queue = PrecisionQueue::new(fields.len());
    for f in fields {
        first.ensure_same_shape(f)?;
        queue.push(f.clone())?;
    }
    inverse_precision(&queue)
}

/// Variance across `members` independent precision-weighted forecasts
/// seeded `seed, seed + 1, …`.
pub fn mc_precision(
    context: &ContextField,
    horizon: usize,
    model: &dyn Denoiser,
    sched: &NoiseSchedule,
    cfg: &SamplerConfig,
    members: usize,
) -> Result<Field> {
    if members < 2 {
        return Err(Error::config("members", "Monte-Carlo precision needs >= 2 members"));
    }
    let forecasts = (0..members as u64)
        .map(|i| {
            let member_cfg = SamplerConfig {
                seed: cfg.seed.wrapping_add(i),
                keep_history: false,
                ..cfg.clone()
            };
            cogdpm_sample(context, horizon, model, sched, &member_cfg).map(|r| r.forecast)
        })
        .collect::<Result<Vec<_>>>()?;
    population_variance(&forecasts)
}
