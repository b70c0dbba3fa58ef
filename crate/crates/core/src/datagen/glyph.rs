//! Moving-glyph sequences: solid bitmaps translating with elastic wall
//! reflection and rotating at constant angular velocity.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{derive_seed, GriddedSequence, SplitRole};
use crate::error::{Error, Result};
use crate::tensor::Field;

const GLYPH_SIDE: usize = 7;

/// Built-in 7×7 alphabet.
pub const GLYPHS: [[&str; GLYPH_SIDE]; 8] = [
    [".#####.", "##...##", "##..###", "##.#.##", "###..##", "##...##", ".#####."],
    ["...##..", "..###..", ".####..", "...##..", "...##..", "...##..", ".######"],
    [".#####.", "##...##", ".....##", "...###.", ".###...", "##.....", "#######"],
    [".#####.", "##...##", ".....##", "..####.", ".....##", "##...##", ".#####."],
    ["....##.", "...###.", "..#.##.", ".#..##.", "#######", "....##.", "....##."],
    ["#######", "##.....", "######.", ".....##", ".....##", "##...##", ".#####."],
    ["..####.", ".##....", "##.....", "######.", "##...##", "##...##", ".#####."],
    ["#######", "##...##", "....##.", "...##..", "..##...", "..##...", "..##..."],
];

fn glyph_pixel(id: usize, scale: usize, bx: usize, by: usize) -> bool {
    GLYPHS[id][by / scale].as_bytes()[bx / scale] == b'#'
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GlyphTaskConfig {
    pub size: usize,
    pub num_glyphs: usize,
    pub frames: usize,
    pub context: usize,
    pub translate: bool,
    /// Elastic reflection at walls; when off, glyphs stop at the wall.
    pub reflect: bool,
    pub rotate: bool,
    pub speed_min: f64,
    pub speed_max: f64,
    /// Largest |angular velocity| in radians per frame.
    pub angular_speed_max: f64,
    /// Integer upscaling of the 7×7 bitmaps.
    pub glyph_scale: usize,
    pub frame_interval: f64,
    pub seed: u64,
}

impl Default for GlyphTaskConfig {
    fn default() -> Self {
        GlyphTaskConfig {
            size: 32,
            num_glyphs: 2,
            frames: 20,
            context: 4,
            translate: true,
            reflect: true,
            rotate: true,
            speed_min: 0.5,
            speed_max: 1.5,
            angular_speed_max: 0.15,
            glyph_scale: 1,
            frame_interval: 1.0,
            seed: 0,
        }
    }
}

impl GlyphTaskConfig {
    fn side(&self) -> usize {
        GLYPH_SIDE * self.glyph_scale
    }

    /// Side of the square box a glyph occupies (larger when rotating).
    pub fn extent(&self) -> usize {
        let s = self.side();
        if self.rotate {
            (s as f64 * std::f64::consts::SQRT_2).ceil() as usize
        } else {
            s
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.glyph_scale == 0 {
            return Err(Error::config("glyph.glyph_scale", "must be >= 1"));
        }
        if self.extent() > self.size {
            return Err(Error::config(
                "glyph.size",
                format!("glyph box {} does not fit a {} grid", self.extent(), self.size),
            ));
        }
        if self.context == 0 || self.context >= self.frames {
            return Err(Error::config("glyph.context", "must satisfy 1 <= context < frames"));
        }
        if !(0.0 <= self.speed_min && self.speed_min <= self.speed_max && self.speed_max.is_finite()) {
            return Err(Error::config("glyph.speed_min", "need 0 <= speed_min <= speed_max"));
        }
        if !(self.angular_speed_max >= 0.0 && self.angular_speed_max.is_finite()) {
            return Err(Error::config("glyph.angular_speed_max", "must be finite and >= 0"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GlyphState {
    pub id: usize,
    /// Top-left corner of the glyph box.
    pub x: f64,
    pub y: f64,
    pub vx: f64,
    pub vy: f64,
    pub angle: f64,
    pub omega: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GlyphScene {
    pub glyphs: Vec<GlyphState>,
}

impl GlyphScene {
    pub fn random(cfg: &GlyphTaskConfig, rng: &mut impl Rng) -> Self {
        let room = (cfg.size - cfg.extent()) as f64;
        let glyphs = (0..cfg.num_glyphs)
            .map(|_| {
                let id = rng.random_range(0..GLYPHS.len());
                let x = rng.random::<f64>() * room;
                let y = rng.random::<f64>() * room;
                let (vx, vy) = if cfg.translate {
                    let speed = cfg.speed_min + rng.random::<f64>() * (cfg.speed_max - cfg.speed_min);
                    let dir = rng.random::<f64>() * std::f64::consts::TAU;
                    (speed * dir.cos(), speed * dir.sin())
                } else {
                    (0.0, 0.0)
                };
                let (angle, omega) = if cfg.rotate {
                    (
                        rng.random::<f64>() * std::f64::consts::TAU,
                        (2.0 * rng.random::<f64>() - 1.0) * cfg.angular_speed_max,
                    )
                } else {
                    (0.0, 0.0)
                };
                GlyphState {
                    id,
                    x,
                    y,
                    vx,
                    vy,
                    angle,
                    omega,
                }
            })
            .collect();
        GlyphScene { glyphs }
    }
}

fn bounce(pos: &mut f64, vel: &mut f64, max: f64, reflect: bool) {
    *pos += *vel;
    if *pos < 0.0 {
        if reflect {
            *pos = -*pos;
            *vel = -*vel;
        } else {
            *pos = 0.0;
            *vel = 0.0;
        }
    } else if *pos > max {
        if reflect {
            *pos = 2.0 * max - *pos;
            *vel = -*vel;
        } else {
            *pos = max;
            *vel = 0.0;
        }
    }
    *pos = pos.clamp(0.0, max);
}

fn draw(frame: &mut [f64], size: usize, g: &GlyphState, cfg: &GlyphTaskConfig) {
    let extent = cfg.extent();
    let side = cfg.side();
    let ox = g.x.round() as usize;
    let oy = g.y.round() as usize;
    let (sin, cos) = g.angle.sin_cos();
    let centre = extent as f64 / 2.0;
    let half = side as f64 / 2.0;
    for py in 0..extent {
        for px in 0..extent {
            let u = px as f64 + 0.5 - centre;
            let v = py as f64 + 0.5 - centre;
            // nearest-neighbour lookup of the inverse-rotated pixel centre
            let (su, sv) = if g.angle == 0.0 {
                (u, v)
            } else {
                (cos * u + sin * v, -sin * u + cos * v)
            };
            let bx = (su + half).floor();
            let by = (sv + half).floor();
            if bx < 0.0 || by < 0.0 || bx >= side as f64 || by >= side as f64 {
                continue;
            }
            if glyph_pixel(g.id, cfg.glyph_scale, bx as usize, by as usize) {
                let cell = &mut frame[(oy + py) * size + ox + px];
                *cell = cell.max(1.0);
            }
        }
    }
}

/// Renders `cfg.frames` frames of `scene`, advancing it after each frame.
pub fn render_glyph_sequence(scene: &GlyphScene, cfg: &GlyphTaskConfig) -> Result<Field> {
    cfg.validate()?;
    let size = cfg.size;
    let max = (size - cfg.extent()) as f64;
    for g in &scene.glyphs {
        if g.id >= GLYPHS.len() || !(0.0..=max).contains(&g.x) || !(0.0..=max).contains(&g.y) {
            return Err(Error::config("glyph.scene", "glyph outside the grid or unknown id"));
        }
    }
    let mut state = scene.clone();
    let mut field = Field::zeros([cfg.frames, 1, size, size]);
    for f in 0..cfg.frames {
        let plane = field.plane_mut(f);
        for g in &state.glyphs {
            draw(plane, size, g, cfg);
        }
        for g in &mut state.glyphs {
            bounce(&mut g.x, &mut g.vx, max, cfg.reflect);
            bounce(&mut g.y, &mut g.vy, max, cfg.reflect);
            g.angle += g.omega;
        }
    }
    Ok(field)
}

/// `count` sequences; sample `i` is drawn from `derive_seed(cfg.seed, i)`.
pub fn generate_glyph_dataset(cfg: &GlyphTaskConfig, count: usize) -> Result<Vec<GriddedSequence>> {
    cfg.validate()?;
    if count == 0 {
        return Err(Error::config("count", "must be >= 1"));
    }
    (0..count as u64)
        .into_par_iter()
        .map(|id| {
            let seed = derive_seed(cfg.seed, id);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let scene = GlyphScene::random(cfg, &mut rng);
            Ok(GriddedSequence {
                data: render_glyph_sequence(&scene, cfg)?,
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

    fn single(x: f64, y: f64, vx: f64, vy: f64) -> GlyphScene {
        GlyphScene {
            glyphs: vec![GlyphState {
                id: 3,
                x,
                y,
                vx,
                vy,
                angle: 0.0,
                omega: 0.0,
            }],
        }
    }

    fn translate_only() -> GlyphTaskConfig {
        GlyphTaskConfig {
            rotate: false,
            num_glyphs: 1,
            ..GlyphTaskConfig::default()
        }
    }

    #[test]
    fn static_scene_repeats_frames() {
        let cfg = GlyphTaskConfig {
            translate: false,
            rotate: false,
            ..GlyphTaskConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let scene = GlyphScene::random(&cfg, &mut rng);
        let seq = render_glyph_sequence(&scene, &cfg).unwrap();
        for f in 1..cfg.frames {
            assert_eq!(seq.plane(f), seq.plane(0));
        }
        assert!(seq.plane(0).iter().any(|&v| v == 1.0));
    }

    #[test]
    fn unit_horizontal_motion_shifts_frames() {
        let cfg = GlyphTaskConfig {
            frames: 8,
            ..translate_only()
        };
        let seq = render_glyph_sequence(&single(2.0, 10.0, 1.0, 0.0), &cfg).unwrap();
        let size = cfg.size;
        for k in 1..cfg.frames {
            for y in 0..size {
                for x in 0..size {
                    let shifted = if x >= k { seq.get(0, 0, y, x - k) } else { 0.0 };
                    assert_eq!(seq.get(k, 0, y, x), shifted, "frame {k} ({y},{x})");
                }
            }
        }
    }

    #[test]
    fn reflection_preserves_speed_and_mass() {
        let cfg = GlyphTaskConfig {
            frames: 40,
            ..translate_only()
        };
        let max = (cfg.size - cfg.extent()) as f64;
        let mut g = GlyphState {
            id: 0,
            x: max - 1.0,
            y: 3.0,
            vx: 1.5,
            vy: -0.75,
            angle: 0.0,
            omega: 0.0,
        };
        let seq = render_glyph_sequence(&GlyphScene { glyphs: vec![g.clone()] }, &cfg).unwrap();
        let mass0: f64 = seq.plane(0).iter().sum();
        for f in 0..cfg.frames {
            assert_eq!(seq.plane(f).iter().sum::<f64>(), mass0);
        }
        let mut bounced = false;
        for _ in 0..cfg.frames {
            let before = g.vx;
            bounce(&mut g.x, &mut g.vx, max, true);
            bounce(&mut g.y, &mut g.vy, max, true);
            bounced |= before != g.vx;
            assert_eq!(g.vx.abs(), 1.5);
            assert_eq!(g.vy.abs(), 0.75);
        }
        assert!(bounced);
    }

    #[test]
    fn values_stay_in_unit_range_and_are_deterministic() {
        let cfg = GlyphTaskConfig {
            num_glyphs: 3,
            seed: 9,
            ..GlyphTaskConfig::default()
        };
        let a = generate_glyph_dataset(&cfg, 4).unwrap();
        let b = generate_glyph_dataset(&cfg, 4).unwrap();
        assert_eq!(a, b);
        for s in &a {
            assert_eq!(s.data.shape(), [20, 1, 32, 32]);
            assert!(s.data.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
        assert_ne!(a[0].data, a[1].data);
    }

    #[test]
    fn oversized_glyph_is_rejected() {
        let cfg = GlyphTaskConfig {
            size: 8,
            ..GlyphTaskConfig::default()
        };
        assert!(matches!(generate_glyph_dataset(&cfg, 1), Err(Error::Config { .. })));
    }
}
