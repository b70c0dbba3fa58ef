//! Advective flow surrogate: a seeded field of Gaussian vortices, evolved by
//! semi-Lagrangian self-advection on a periodic grid with optional diffusion.
//!
//! Bilinear back-tracing and the 5-point smoothing are both convex
//! combinations of existing values, so the speed never exceeds its initial
//! maximum.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{derive_seed, GriddedSequence, SplitRole};
use crate::error::{Error, Result};
use crate::tensor::Field;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowTaskConfig {
    pub size: usize,
    pub frames: usize,
    pub context: usize,
    pub channels: usize,
    /// Diffusion coefficient of the per-frame 5-point smoothing, in [0, 0.25].
    pub smoothing: f64,
    pub vortex_count: usize,
    /// Peak |circulation| of a vortex's streamfunction.
    pub strength_max: f64,
    pub radius_min: f64,
    pub radius_max: f64,
    /// Advection time step per frame, in grid cells per unit velocity.
    pub dt: f64,
    pub frame_interval: f64,
    pub seed: u64,
}

impl Default for FlowTaskConfig {
    fn default() -> Self {
        FlowTaskConfig {
            size: 32,
            frames: 15,
            context: 4,
            channels: 2,
            smoothing: 0.02,
            vortex_count: 4,
            strength_max: 3.0,
            radius_min: 2.5,
            radius_max: 5.0,
            dt: 1.0,
            frame_interval: 1.0,
            seed: 0,
        }
    }
}

impl FlowTaskConfig {
    pub fn validate(&self) -> Result<()> {
        if self.size < 4 {
            return Err(Error::config("flow.size", "must be >= 4"));
        }
        if self.channels != 2 {
            return Err(Error::config("flow.channels", "velocity fields have exactly 2 channels"));
        }
        if self.context == 0 || self.context >= self.frames {
            return Err(Error::config("flow.context", "must satisfy 1 <= context < frames"));
        }
        if !(0.0..=0.25).contains(&self.smoothing) {
            return Err(Error::config("flow.smoothing", "must lie in [0, 0.25]"));
        }
        if !(self.radius_min > 0.0 && self.radius_min <= self.radius_max && self.radius_max.is_finite()) {
            return Err(Error::config("flow.radius_min", "need 0 < radius_min <= radius_max"));
        }
        if !(self.strength_max >= 0.0 && self.strength_max.is_finite() && self.dt.is_finite()) {
            return Err(Error::config("flow.strength_max", "must be finite and >= 0"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Vortex {
    pub x: f64,
    pub y: f64,
    /// Signed amplitude of the Gaussian streamfunction.
    pub strength: f64,
    pub radius: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FlowScene {
    pub vortices: Vec<Vortex>,
}

impl FlowScene {
    pub fn random(cfg: &FlowTaskConfig, rng: &mut impl Rng) -> Self {
        let n = cfg.size as f64;
        let vortices = (0..cfg.vortex_count)
            .map(|_| Vortex {
                x: rng.random::<f64>() * n,
                y: rng.random::<f64>() * n,
                strength: (2.0 * rng.random::<f64>() - 1.0) * cfg.strength_max,
                radius: cfg.radius_min + rng.random::<f64>() * (cfg.radius_max - cfg.radius_min),
            })
            .collect();
        FlowScene { vortices }
    }

    /// `(u, v) = (∂ψ/∂y, −∂ψ/∂x)` of `ψ = Σ Γ exp(−d²/2r²)`, minimum-image distances.
    pub fn velocity(&self, size: usize) -> (Vec<f64>, Vec<f64>) {
        let n = size as f64;
        let wrap = |d: f64| d - n * (d / n).round();
        let mut u = vec![0.0; size * size];
        let mut v = vec![0.0; size * size];
        for y in 0..size {
            for x in 0..size {
                let i = y * size + x;
                for vt in &self.vortices {
                    let dx = wrap(x as f64 - vt.x);
                    let dy = wrap(y as f64 - vt.y);
                    let r2 = vt.radius * vt.radius;
                    let psi = vt.strength * (-(dx * dx + dy * dy) / (2.0 * r2)).exp();
                    u[i] += -psi * dy / r2;
                    v[i] += psi * dx / r2;
                }
            }
        }
        (u, v)
    }
}

fn sample_bilinear(field: &[f64], size: usize, x: f64, y: f64) -> f64 {
    let n = size as f64;
    let x = x.rem_euclid(n);
    let y = y.rem_euclid(n);
    let x0 = x.floor();
    let y0 = y.floor();
    let fx = x - x0;
    let fy = y - y0;
    let (x0, y0) = (x0 as usize % size, y0 as usize % size);
    let (x1, y1) = ((x0 + 1) % size, (y0 + 1) % size);
    let at = |xx: usize, yy: usize| field[yy * size + xx];
    (1.0 - fy) * ((1.0 - fx) * at(x0, y0) + fx * at(x1, y0)) + fy * ((1.0 - fx) * at(x0, y1) + fx * at(x1, y1))
}

fn advect(u: &[f64], v: &[f64], size: usize, dt: f64) -> (Vec<f64>, Vec<f64>) {
    let mut nu = vec![0.0; u.len()];
    let mut nv = vec![0.0; v.len()];
    for y in 0..size {
        for x in 0..size {
            let i = y * size + x;
            let sx = x as f64 - dt * u[i];
            let sy = y as f64 - dt * v[i];
            nu[i] = sample_bilinear(u, size, sx, sy);
            nv[i] = sample_bilinear(v, size, sx, sy);
        }
    }
    (nu, nv)
}

fn smooth(field: &[f64], size: usize, nu: f64) -> Vec<f64> {
    let mut out = vec![0.0; field.len()];
    for y in 0..size {
        for x in 0..size {
            let at = |xx: usize, yy: usize| field[yy * size + xx];
            let sum4 = at((x + 1) % size, y)
                + at((x + size - 1) % size, y)
                + at(x, (y + 1) % size)
                + at(x, (y + size - 1) % size);
            out[y * size + x] = (1.0 - 4.0 * nu) * at(x, y) + nu * sum4;
        }
    }
    out
}

/// Evolves an initial velocity field for `cfg.frames` frames; frame 0 is the input.
pub fn simulate_flow(u0: Vec<f64>, v0: Vec<f64>, cfg: &FlowTaskConfig) -> Result<Field> {
    cfg.validate()?;
    let size = cfg.size;
    let plane = size * size;
    if u0.len() != plane || v0.len() != plane {
        return Err(Error::shape(&[plane], &[u0.len().min(v0.len())]));
    }
    let mut data = Vec::with_capacity(cfg.frames * 2 * plane);
    let (mut u, mut v) = (u0, v0);
    for f in 0..cfg.frames {
        data.extend_from_slice(&u);
        data.extend_from_slice(&v);
        if f + 1 == cfg.frames {
            break;
        }
        let (nu, nv) = advect(&u, &v, size, cfg.dt);
        (u, v) = if cfg.smoothing > 0.0 {
            (smooth(&nu, size, cfg.smoothing), smooth(&nv, size, cfg.smoothing))
        } else {
            (nu, nv)
        };
    }
    Field::from_vec([cfg.frames, 2, size, size], data)
}

pub fn generate_flow_dataset(cfg: &FlowTaskConfig, count: usize) -> Result<Vec<GriddedSequence>> {
    cfg.validate()?;
    if count == 0 {
        return Err(Error::config("count", "must be >= 1"));
    }
    (0..count as u64)
        .into_par_iter()
        .map(|id| {
            let seed = derive_seed(cfg.seed, id);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (u, v) = FlowScene::random(cfg, &mut rng).velocity(cfg.size);
            Ok(GriddedSequence {
                data: simulate_flow(u, v, cfg)?,
                context_frames: cfg.context,
                frame_interval: cfg.frame_interval,
                split: SplitRole::Unassigned,
                sample_id: id,
                seed,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn energy(f: &Field, frame: usize) -> f64 {
        (0..2).map(|c| f.plane(frame * 2 + c).iter().map(|v| v * v).sum::<f64>()).sum()
    }

    fn one_vortex(size: usize) -> FlowScene {
        FlowScene {
            vortices: vec![Vortex {
                x: size as f64 / 2.0,
                y: size as f64 / 2.0,
                strength: 4.0,
                radius: 4.0,
            }],
        }
    }

    #[test]
    fn zero_velocity_is_a_fixed_point() {
        let cfg = FlowTaskConfig::default();
        let n = cfg.size * cfg.size;
        let f = simulate_flow(vec![0.0; n], vec![0.0; n], &cfg).unwrap();
        assert!(f.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_vortex_rotates_without_gaining_energy() {
        let cfg = FlowTaskConfig {
            smoothing: 0.0,
            frames: 2,
            context: 1,
            ..FlowTaskConfig::default()
        };
        let (u, v) = one_vortex(cfg.size).velocity(cfg.size);
        let f = simulate_flow(u, v, &cfg).unwrap();
        assert!(energy(&f, 1) <= energy(&f, 0));
        // counter-clockwise circulation: above the centre the flow points one way, below the other
        let c = cfg.size / 2;
        let above = f.get(0, 0, c - 3, c);
        let below = f.get(0, 0, c + 3, c);
        assert!(above * below < 0.0);
        assert!(f.get(0, 0, c, c).abs() < 1e-12);
    }

    #[test]
    fn smoothing_lowers_final_variance() {
        let base = FlowTaskConfig {
            seed: 3,
            ..FlowTaskConfig::default()
        };
        let variance = |smoothing: f64| {
            let cfg = FlowTaskConfig { smoothing, ..base.clone() };
            let seq = &generate_flow_dataset(&cfg, 1).unwrap()[0].data;
            let last = seq.frame_range(cfg.frames - 1, cfg.frames);
            let m = last.mean();
            last.data().iter().map(|v| (v - m).powi(2)).sum::<f64>() / last.len() as f64
        };
        assert!(variance(0.1) < variance(0.0));
    }

    #[test]
    fn speed_is_bounded_by_initial_maximum() {
        let cfg = FlowTaskConfig {
            seed: 8,
            ..FlowTaskConfig::default()
        };
        let seq = &generate_flow_dataset(&cfg, 2).unwrap()[1].data;
        let speed = |f: usize| {
            let (u, v) = (seq.plane(2 * f), seq.plane(2 * f + 1));
            u.iter().zip(v).map(|(a, b)| a.hypot(*b)).fold(0.0, f64::max)
        };
        let s0 = speed(0);
        for f in 1..cfg.frames {
            assert!(speed(f) <= s0 + 1e-12);
        }
        assert_eq!(seq.shape(), [15, 2, 32, 32]);
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = FlowTaskConfig::default();
        assert_eq!(generate_flow_dataset(&cfg, 3).unwrap(), generate_flow_dataset(&cfg, 3).unwrap());
    }

    #[test]
    fn validation_rejects_wrong_channel_count() {
        let cfg = FlowTaskConfig {
            channels: 3,
            ..FlowTaskConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
