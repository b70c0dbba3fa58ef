//! Diffusion noise schedules.
//!
//! Tables are 0-based: entry `t` describes the transition into the
//! `(t + 1)`-th latent, so index 0 is the least-noised step.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const BETA_MAX: f64 = 0.999;
pub const DEFAULT_COSINE_OFFSET: f64 = 0.008;

/// How a schedule was constructed. Stored next to the explicit tables so a
/// run can be replayed from either.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScheduleSpec {
    Cosine { steps: usize, s_offset: f64 },
    Linear { steps: usize, beta_start: f64, beta_end: f64 },
    Explicit,
}

impl ScheduleSpec {
    pub fn build(&self) -> Result<NoiseSchedule> {
        match *self {
            ScheduleSpec::Cosine { steps, s_offset } => cosine_schedule(steps, s_offset),
            ScheduleSpec::Linear {
                steps,
                beta_start,
                beta_end,
            } => linear_schedule(steps, beta_start, beta_end),
            ScheduleSpec::Explicit => Err(Error::Parameter(
                "an explicit schedule must be rebuilt from its beta table".into(),
            )),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NoiseSchedule {
    spec: ScheduleSpec,
    betas: Vec<f64>,
    alphas: Vec<f64>,
    alpha_bars: Vec<f64>,
}

impl NoiseSchedule {
    /// Builds the α and ᾱ tables from a β table, validating every invariant.
    pub fn from_betas(spec: ScheduleSpec, betas: Vec<f64>) -> Result<Self> {
        if betas.is_empty() {
            return Err(Error::Parameter("schedule needs at least one step".into()));
        }
        for (t, &b) in betas.iter().enumerate() {
            if !(b > 0.0 && b < 1.0) || b > BETA_MAX {
                return Err(Error::Parameter(format!(
                    "beta[{t}] = {b} outside (0, {BETA_MAX}]"
                )));
            }
        }
        let alphas: Vec<f64> = betas.iter().map(|b| 1.0 - b).collect();
        let alpha_bars: Vec<f64> = alphas
            .iter()
            .scan(1.0, |acc, a| {
                *acc *= a;
                Some(*acc)
            })
            .collect();
        if *alpha_bars.last().unwrap() <= 0.0 {
            return Err(Error::Parameter("alpha_bar underflows to zero".into()));
        }
        Ok(NoiseSchedule {
            spec,
            betas,
            alphas,
            alpha_bars,
        })
    }

    pub fn spec(&self) -> &ScheduleSpec {
        &self.spec
    }

    /// Number of diffusion steps `T`.
    pub fn len(&self) -> usize {
        self.betas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.betas.is_empty()
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bars
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.betas[t]
    }

    pub fn alpha(&self, t: usize) -> f64 {
        self.alphas[t]
    }

    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bars[t]
    }

    pub fn check_step(&self, t: usize) -> Result<()> {
        if t >= self.len() {
            return Err(Error::Parameter(format!(
                "step {t} outside schedule of length {}",
                self.len()
            )));
        }
        Ok(())
    }

    /// SHA-256 of the little-endian β table.
    pub fn digest(&self) -> String {
        let mut hasher = Sha256::new();
        for b in &self.betas {
            hasher.update(b.to_le_bytes());
        }
        hex::encode(hasher.finalize())
    }
}

fn cosine_f(t: f64, steps: f64, s: f64) -> f64 {
    let angle = (t / steps + s) / (1.0 + s) * FRAC_PI_2;
    angle.cos().powi(2)
}

pub fn cosine_schedule(steps: usize, s_offset: f64) -> Result<NoiseSchedule> {
    if steps < 2 {
        return Err(Error::Parameter(format!("cosine schedule needs T >= 2, got {steps}")));
    }
    if !(s_offset > 0.0 && s_offset < 0.1) {
        return Err(Error::Parameter(format!(
            "cosine offset must lie in (0, 0.1), got {s_offset}"
        )));
    }
    let total = steps as f64;
    let f0 = cosine_f(0.0, total, s_offset);
    let mut prev = 1.0;
    let betas = (1..=steps)
        .map(|t| {
            let bar = cosine_f(t as f64, total, s_offset) / f0;
            let beta = (1.0 - bar / prev).min(BETA_MAX);
            prev = bar;
            beta
        })
        .collect();
    NoiseSchedule::from_betas(ScheduleSpec::Cosine { steps, s_offset }, betas)
}

pub fn linear_schedule(steps: usize, beta_start: f64, beta_end: f64) -> Result<NoiseSchedule> {
    if steps < 1 {
        return Err(Error::Parameter("linear schedule needs T >= 1".into()));
    }
    if !(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0) {
        return Err(Error::Parameter(format!(
            "need 0 < beta_start <= beta_end < 1, got {beta_start}, {beta_end}"
        )));
    }
    let betas = (0..steps)
        .map(|i| {
            if steps == 1 {
                beta_start
            } else {
                let frac = i as f64 / (steps - 1) as f64;
                beta_start + (beta_end - beta_start) * frac
            }
        })
        .collect();
    NoiseSchedule::from_betas(
        ScheduleSpec::Linear {
            steps,
            beta_start,
            beta_end,
        },
        betas,
    )
}
