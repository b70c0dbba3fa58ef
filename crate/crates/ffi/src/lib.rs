//! C ABI over the `cogdpm` engine.
//!
//! Schedules and denoisers are opaque heap handles released with their
//! `*_free` function. Every call returns a [`CogStatus`]; on failure the
//! message is available from [`cog_last_error`] on the same thread.
//! Fields are passed as contiguous row-major `double` buffers with an
//! explicit `(frames, channels, height, width)` shape.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use cogdpm::denoiser::{Denoiser, GaussianOracle, PriorMean};
use cogdpm::diffusion::ContextField;
use cogdpm::io::Checkpoint;
use cogdpm::metrics::{crps_ensemble, csi_neighborhood, fss, CrpsEstimator};
use cogdpm::sampler::{sample_with_mode, GuidanceMode, SamplerConfig};
use cogdpm::schedule::{cosine_schedule, linear_schedule, NoiseSchedule};
use cogdpm::{Error, Field};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CogStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    ShapeMismatch = 3,
    DegenerateStep = 4,
    Diverged = 5,
    Io = 6,
    Format = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CogGuidance {
    /// Precision-weighted field guidance.
    Precision = 0,
    /// Constant classifier-free guidance with `guidance_scale`.
    Constant = 1,
}

#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct CogSamplerConfig {
    pub lambda: f64,
    pub queue_capacity: usize,
    /// Newest queue entries used for the variance; 0 uses the whole queue.
    pub window_k: usize,
    /// Reverse steps to run; 0 runs the whole schedule.
    pub t_infer: usize,
    pub stochastic_step: bool,
    pub clip_lo: f64,
    pub clip_hi: f64,
    pub seed: u64,
    pub guidance: CogGuidance,
    pub guidance_scale: f64,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct CogContingency {
    pub hits: u64,
    pub misses: u64,
    pub false_alarms: u64,
    pub correct_rejections: u64,
}

/// Opaque noise schedule.
pub struct CogSchedule(NoiseSchedule);

/// Opaque denoiser.
pub struct CogDenoiser(Box<dyn Denoiser>);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: String) {
    let msg = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &Error) -> CogStatus {
    match e {
        Error::Shape { .. } => CogStatus::ShapeMismatch,
        Error::DegenerateStep { .. } => CogStatus::DegenerateStep,
        Error::Diverged { .. } => CogStatus::Diverged,
        Error::Io { .. } => CogStatus::Io,
        Error::Format { .. } => CogStatus::Format,
        _ => CogStatus::InvalidArgument,
    }
}

struct Fail(CogStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(CogStatus::NullPointer, format!("`{what}` is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> CogStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            CogStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            CogStatus::Panic
        }
    }
}

unsafe fn read_shape(shape: *const usize) -> Result<[usize; 4], Fail> {
    if shape.is_null() {
        return Err(null("shape"));
    }
    let s = std::slice::from_raw_parts(shape, 4);
    let shape = [s[0], s[1], s[2], s[3]];
    if shape.contains(&0) {
        return Err(Fail(CogStatus::InvalidArgument, format!("empty axis in shape {shape:?}")));
    }
    Ok(shape)
}

unsafe fn read_field(data: *const f64, shape: [usize; 4], what: &str) -> Result<Field, Fail> {
    if data.is_null() {
        return Err(null(what));
    }
    let len = shape.iter().product();
    Ok(Field::from_vec(shape, std::slice::from_raw_parts(data, len).to_vec())?)
}

unsafe fn write_out<T: Copy>(out: *mut T, value: T, what: &str) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null(what));
    }
    *out = value;
    Ok(())
}

/// Message of the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn cog_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn cog_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn cog_schedule_cosine(steps: usize, s_offset: f64, out: *mut *mut CogSchedule) -> CogStatus {
    guard(|| {
        let s = cosine_schedule(steps, s_offset)?;
        write_out(out, Box::into_raw(Box::new(CogSchedule(s))), "out")
    })
}

/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn cog_schedule_linear(
    steps: usize,
    beta_start: f64,
    beta_end: f64,
    out: *mut *mut CogSchedule,
) -> CogStatus {
    guard(|| {
        let s = linear_schedule(steps, beta_start, beta_end)?;
        write_out(out, Box::into_raw(Box::new(CogSchedule(s))), "out")
    })
}

/// Number of diffusion steps, or 0 for a null handle.
///
/// # Safety
/// `schedule` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cog_schedule_len(schedule: *const CogSchedule) -> usize {
    schedule.as_ref().map_or(0, |s| s.0.len())
}

/// Copies the ᾱ table into `out`, which must hold `cog_schedule_len` values.
///
/// # Safety
/// `schedule` must be a live handle and `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn cog_schedule_alpha_bars(schedule: *const CogSchedule, out: *mut f64, len: usize) -> CogStatus {
    guard(|| {
        let s = schedule.as_ref().ok_or_else(|| null("schedule"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        if len != s.0.len() {
            return Err(Fail(
                CogStatus::ShapeMismatch,
                format!("buffer holds {len} values, schedule has {}", s.0.len()),
            ));
        }
        std::slice::from_raw_parts_mut(out, len).copy_from_slice(s.0.alpha_bars());
        Ok(())
    })
}

/// # Safety
/// `schedule` must be null or a handle not freed before.
#[no_mangle]
pub unsafe extern "C" fn cog_schedule_free(schedule: *mut CogSchedule) {
    if !schedule.is_null() {
        drop(Box::from_raw(schedule));
    }
}

/// Analytic Gaussian denoiser. With `persistence` the prior mean repeats the
/// last context frame; otherwise it is `global_mean`.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn cog_denoiser_oracle(
    prior_var: f64,
    global_mean: f64,
    persistence: bool,
    out: *mut *mut CogDenoiser,
) -> CogStatus {
    guard(|| {
        let prior = if persistence { PriorMean::Persistence } else { PriorMean::Global };
        let oracle = GaussianOracle::new(prior_var, global_mean, prior)?;
        write_out(out, Box::into_raw(Box::new(CogDenoiser(Box::new(oracle)))), "out")
    })
}

/// Loads a trained network and the schedule stored with it.
///
/// # Safety
/// `path` must be a NUL-terminated string; both out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn cog_denoiser_load(
    path: *const c_char,
    out_denoiser: *mut *mut CogDenoiser,
    out_schedule: *mut *mut CogSchedule,
) -> CogStatus {
    guard(|| {
        if path.is_null() {
            return Err(null("path"));
        }
        if out_denoiser.is_null() || out_schedule.is_null() {
            return Err(null("out"));
        }
        let path = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| Fail(CogStatus::InvalidArgument, "path is not UTF-8".into()))?;
        let ck = Checkpoint::read(Path::new(path))?;
        let model = cogdpm::denoiser::ConvDenoiser::new(ck.weights)?;
        *out_denoiser = Box::into_raw(Box::new(CogDenoiser(Box::new(model))));
        *out_schedule = Box::into_raw(Box::new(CogSchedule(ck.schedule)));
        Ok(())
    })
}

/// # Safety
/// `denoiser` must be null or a handle not freed before.
#[no_mangle]
pub unsafe extern "C" fn cog_denoiser_free(denoiser: *mut CogDenoiser) {
    if !denoiser.is_null() {
        drop(Box::from_raw(denoiser));
    }
}

/// Library defaults: λ = 2, queue 4, whole schedule, deterministic steps,
/// clip `[0, 1]`, precision guidance.
#[no_mangle]
pub extern "C" fn cog_sampler_config_default() -> CogSamplerConfig {
    let d = SamplerConfig::default();
    CogSamplerConfig {
        lambda: d.lambda,
        queue_capacity: d.queue_capacity,
        window_k: 0,
        t_infer: 0,
        stochastic_step: d.stochastic_step,
        clip_lo: d.clip_lo,
        clip_hi: d.clip_hi,
        seed: d.seed,
        guidance: CogGuidance::Precision,
        guidance_scale: 1.0,
    }
}

/// Samples one forecast of `horizon` frames conditioned on `context`.
///
/// `out` receives `horizon * channels * height * width` doubles and must be
/// exactly that long (`out_len`). When `out_weights` is not null it receives
/// the final-step guidance weights with the same layout.
///
/// # Safety
/// All handles must be live; `context` must hold the product of
/// `context_shape` doubles; `out` and `out_weights` must hold `out_len`.
#[no_mangle]
pub unsafe extern "C" fn cog_sample(
    denoiser: *const CogDenoiser,
    schedule: *const CogSchedule,
    config: *const CogSamplerConfig,
    context: *const f64,
    context_shape: *const usize,
    horizon: usize,
    out: *mut f64,
    out_weights: *mut f64,
    out_len: usize,
) -> CogStatus {
    guard(|| {
        let model = denoiser.as_ref().ok_or_else(|| null("denoiser"))?;
        let sched = schedule.as_ref().ok_or_else(|| null("schedule"))?;
        let c = config.as_ref().ok_or_else(|| null("config"))?;
        let shape = read_shape(context_shape)?;
        let ctx = ContextField::new(read_field(context, shape, "context")?)?;
        if out.is_null() {
            return Err(null("out"));
        }
        let expected = horizon * shape[1] * shape[2] * shape[3];
        if out_len != expected {
            return Err(Fail(
                CogStatus::ShapeMismatch,
                format!("output buffer holds {out_len} values, forecast needs {expected}"),
            ));
        }
        let cfg = SamplerConfig {
            t_infer: (c.t_infer > 0).then_some(c.t_infer),
            lambda: c.lambda,
            queue_capacity: c.queue_capacity,
            window_k: (c.window_k > 0).then_some(c.window_k),
            stochastic_step: c.stochastic_step,
            clip_lo: c.clip_lo,
            clip_hi: c.clip_hi,
            seed: c.seed,
            freeze_null_condition: false,
            keep_history: false,
        };
        let mode = match c.guidance {
            CogGuidance::Precision => GuidanceMode::Precision,
            CogGuidance::Constant => GuidanceMode::Constant { scale: c.guidance_scale },
        };
        let r = sample_with_mode(&ctx, horizon, model.0.as_ref(), &sched.0, &cfg, mode)?;
        std::slice::from_raw_parts_mut(out, out_len).copy_from_slice(r.forecast.data());
        if !out_weights.is_null() {
            std::slice::from_raw_parts_mut(out_weights, out_len).copy_from_slice(r.final_weights.data());
        }
        Ok(())
    })
}

/// Mean ensemble CRPS. `members` holds `member_count` consecutive fields of
/// `shape`; `fair` selects the `M(M−1)` spread normalization.
///
/// # Safety
/// `members` must hold `member_count` fields and `truth` one field of `shape`.
#[no_mangle]
pub unsafe extern "C" fn cog_crps(
    members: *const f64,
    member_count: usize,
    truth: *const f64,
    shape: *const usize,
    fair: bool,
    out: *mut f64,
) -> CogStatus {
    guard(|| {
        let shape = read_shape(shape)?;
        if members.is_null() {
            return Err(null("members"));
        }
        let len: usize = shape.iter().product();
        let fields = (0..member_count)
            .map(|m| read_field(members.add(m * len), shape, "members"))
            .collect::<Result<Vec<_>, _>>()?;
        let truth = read_field(truth, shape, "truth")?;
        let est = if fair { CrpsEstimator::Fair } else { CrpsEstimator::Empirical };
        let r = crps_ensemble(&fields, &truth, est)?;
        write_out(out, r.mean, "out")
    })
}

/// Neighborhood CSI of one forecast against one truth; `window` 1 gives
/// plain CSI. `out_table` may be null.
///
/// # Safety
/// `forecast` and `truth` must each hold one field of `shape`.
#[no_mangle]
pub unsafe extern "C" fn cog_csi(
    forecast: *const f64,
    truth: *const f64,
    shape: *const usize,
    threshold: f64,
    window: usize,
    out_score: *mut f64,
    out_table: *mut CogContingency,
) -> CogStatus {
    guard(|| {
        let shape = read_shape(shape)?;
        let f = read_field(forecast, shape, "forecast")?;
        let t = read_field(truth, shape, "truth")?;
        let s = csi_neighborhood(&[f], &[t], threshold, window)?;
        write_out(out_score, s.score, "out_score")?;
        if !out_table.is_null() {
            *out_table = CogContingency {
                hits: s.table.hits,
                misses: s.table.misses,
                false_alarms: s.table.false_alarms,
                correct_rejections: s.table.correct_rejections,
            };
        }
        Ok(())
    })
}

/// Fractions skill score with an odd `window`.
///
/// # Safety
/// `forecast` and `truth` must each hold one field of `shape`.
#[no_mangle]
pub unsafe extern "C" fn cog_fss(
    forecast: *const f64,
    truth: *const f64,
    shape: *const usize,
    threshold: f64,
    window: usize,
    out: *mut f64,
) -> CogStatus {
    guard(|| {
        let shape = read_shape(shape)?;
        let f = read_field(forecast, shape, "forecast")?;
        let t = read_field(truth, shape, "truth")?;
        write_out(out, fss(&[f], &[t], threshold, window)?, "out")
    })
}
