//! A small fully convolutional ε-network with explicit backpropagation.
//!
//! Input planes, stacked along the channel axis:
//! the `horizon × channels` planes of `x_t`, the `context × channels` planes
//! of the condition slot, and `2 × time_pairs` constant planes carrying
//! sinusoidal features of `t / T`. Each layer is a zero-padded "same"
//! convolution followed by its activation; the last layer is a linear head
//! producing `horizon × channels` planes.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{Denoiser, DenoiserInput};
use crate::error::{Error, Result};
use crate::schedule::NoiseSchedule;
use crate::tensor::Field;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Silu,
    Identity,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Silu => z / (1.0 + (-z).exp()),
            Activation::Identity => z,
        }
    }

    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Silu => {
                let s = 1.0 / (1.0 + (-z).exp());
                s * (1.0 + z * (1.0 - s))
            }
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub out_channels: usize,
    pub kernel: usize,
    /// Spacing between kernel taps; 1 is a plain convolution.
    #[serde(default = "one")]
    pub dilation: usize,
    pub activation: Activation,
}

fn one() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    /// Forecast frames `N`.
    pub horizon: usize,
    /// Context frames `N0`.
    pub context: usize,
    pub channels: usize,
    /// Number of (sin, cos) step-embedding pairs.
    pub time_pairs: usize,
    pub layers: Vec<LayerSpec>,
    /// Adds `√(1 − ᾱ_t) · x_t` to the last layer's output, so the layers
    /// only model the residual. That term is the whole answer at high noise.
    #[serde(default)]
    pub noise_skip: bool,
}

impl Architecture {
    /// Four 3×3 SiLU layers of width `hidden` with dilations 1, 2, 4, 8
    /// (a 31×31 receptive field), a 1×1 linear head and the noise skip.
    pub fn desk(horizon: usize, context: usize, channels: usize, hidden: usize) -> Self {
        let conv = |dilation| LayerSpec {
            out_channels: hidden,
            kernel: 3,
            dilation,
            activation: Activation::Silu,
        };
        Architecture {
            horizon,
            context,
            channels,
            time_pairs: 4,
            layers: vec![
                conv(1),
                conv(2),
                conv(4),
                conv(8),
                LayerSpec {
                    out_channels: horizon * channels,
                    kernel: 1,
                    dilation: 1,
                    activation: Activation::Identity,
                },
            ],
            noise_skip: true,
        }
    }

    pub fn in_channels(&self) -> usize {
        (self.horizon + self.context) * self.channels + 2 * self.time_pairs
    }

    pub fn out_channels(&self) -> usize {
        self.horizon * self.channels
    }

    pub fn target_shape(&self, height: usize, width: usize) -> [usize; 4] {
        [self.horizon, self.channels, height, width]
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 || self.context == 0 || self.channels == 0 {
            return Err(Error::config("architecture", "horizon, context and channels must be >= 1"));
        }
        let Some(last) = self.layers.last() else {
            return Err(Error::config("architecture.layers", "at least one layer is required"));
        };
        if last.out_channels != self.out_channels() {
            return Err(Error::config(
                "architecture.layers",
                format!(
                    "head must emit horizon x channels = {} planes, got {}",
                    self.out_channels(),
                    last.out_channels
                ),
            ));
        }
        for (i, layer) in self.layers.iter().enumerate() {
            if layer.kernel % 2 == 0 || layer.out_channels == 0 || layer.dilation == 0 {
                return Err(Error::config(
                    format!("architecture.layers[{i}]"),
                    "kernel must be odd, out_channels and dilation positive",
                ));
            }
        }
        Ok(())
    }

    /// `(name, length)` of every parameter tensor in storage order.
    pub fn tensor_layout(&self) -> Vec<(String, usize)> {
        let mut cin = self.in_channels();
        let mut out = Vec::with_capacity(2 * self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            out.push((
                format!("layer{i}.weight"),
                layer.out_channels * cin * layer.kernel * layer.kernel,
            ));
            out.push((format!("layer{i}.bias"), layer.out_channels));
            cin = layer.out_channels;
        }
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.tensor_layout().iter().map(|(_, n)| n).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub data: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelWeights {
    pub architecture: Architecture,
    pub tensors: Vec<NamedTensor>,
}

impl ModelWeights {
    pub fn zeros(architecture: Architecture) -> Result<Self> {
        architecture.validate()?;
        let tensors = architecture
            .tensor_layout()
            .into_iter()
            .map(|(name, n)| NamedTensor {
                name,
                data: vec![0.0; n],
            })
            .collect();
        Ok(ModelWeights {
            architecture,
            tensors,
        })
    }

    /// Normal weights scaled by `1/sqrt(fan_in)`, zero biases.
    pub fn init(architecture: Architecture, seed: u64) -> Result<Self> {
        let mut weights = Self::zeros(architecture)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut cin = weights.architecture.in_channels();
        for (i, layer) in weights.architecture.layers.clone().iter().enumerate() {
            let fan_in = (cin * layer.kernel * layer.kernel) as f64;
            let scale = 1.0 / fan_in.sqrt();
            for w in &mut weights.tensors[2 * i].data {
                let z: f64 = StandardNormal.sample(&mut rng);
                *w = z * scale;
            }
            cin = layer.out_channels;
        }
        Ok(weights)
    }

    pub fn from_tensors(architecture: Architecture, tensors: Vec<NamedTensor>) -> Result<Self> {
        let weights = ModelWeights {
            architecture,
            tensors,
        };
        weights.validate()?;
        Ok(weights)
    }

    pub fn validate(&self) -> Result<()> {
        self.architecture.validate()?;
        let layout = self.architecture.tensor_layout();
        if layout.len() != self.tensors.len() {
            return Err(Error::config(
                "weights",
                format!("expected {} tensors, found {}", layout.len(), self.tensors.len()),
            ));
        }
        for ((name, n), t) in layout.iter().zip(&self.tensors) {
            if *name != t.name || *n != t.data.len() {
                return Err(Error::config(
                    format!("weights.{name}"),
                    format!("expected {n} values, found `{}` with {}", t.name, t.data.len()),
                ));
            }
            if t.data.iter().any(|v| !v.is_finite()) {
                return Err(Error::config(format!("weights.{name}"), "non-finite value"));
            }
        }
        Ok(())
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors.iter().map(|t| t.data.len()).sum()
    }

    /// Locates flat parameter `index` as `(tensor, offset)`.
    pub fn locate(&self, mut index: usize) -> Option<(usize, usize)> {
        for (i, t) in self.tensors.iter().enumerate() {
            if index < t.data.len() {
                return Some((i, index));
            }
            index -= t.data.len();
        }
        None
    }

    pub(crate) fn zeros_like(&self) -> Vec<Vec<f64>> {
        self.tensors.iter().map(|t| vec![0.0; t.data.len()]).collect()
    }
}

fn time_features(step: usize, total: usize, pairs: usize) -> Vec<f64> {
    let tau = step as f64 / total as f64;
    let mut out = Vec::with_capacity(2 * pairs);
    for k in 0..pairs {
        let phase = std::f64::consts::PI * (1u64 << k) as f64 * tau;
        out.push(phase.sin());
        out.push(phase.cos());
    }
    out
}

/// Stacks `x_t`, the condition planes and the step embedding into `[in_channels, H*W]`.
pub(crate) fn assemble_input(
    arch: &Architecture,
    x_t: &Field,
    condition: &Field,
    step: usize,
    total_steps: usize,
) -> Result<Vec<f64>> {
    let (h, w) = (x_t.height(), x_t.width());
    x_t.ensure_shape(arch.target_shape(h, w))?;
    condition.ensure_shape([arch.context, arch.channels, h, w])?;
    let hw = h * w;
    let mut input = Vec::with_capacity(arch.in_channels() * hw);
    input.extend_from_slice(x_t.data());
    input.extend_from_slice(condition.data());
    for f in time_features(step, total_steps, arch.time_pairs) {
        input.extend(std::iter::repeat_n(f, hw));
    }
    Ok(input)
}

fn im2col(input: &[f64], cin: usize, h: usize, w: usize, k: usize, d: usize) -> Vec<f64> {
    let hw = h * w;
    let pad = (k / 2 * d) as isize;
    let mut cols = vec![0.0; cin * k * k * hw];
    for c in 0..cin {
        let plane = &input[c * hw..(c + 1) * hw];
        for ky in 0..k {
            let dy = (ky * d) as isize - pad;
            for kx in 0..k {
                let dx = (kx * d) as isize - pad;
                let row = ((c * k + ky) * k + kx) * hw;
                let dst = &mut cols[row..row + hw];
                let x_lo = (-dx).max(0) as usize;
                let x_hi = (w as isize - dx).min(w as isize).max(0) as usize;
                if x_lo >= x_hi {
                    continue;
                }
                for y in 0..h {
                    let sy = y as isize + dy;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let src = sy as usize * w;
                    let sx_lo = (x_lo as isize + dx) as usize;
                    dst[y * w + x_lo..y * w + x_hi]
                        .copy_from_slice(&plane[src + sx_lo..src + sx_lo + (x_hi - x_lo)]);
                }
            }
        }
    }
    cols
}

fn col2im(cols: &[f64], cin: usize, h: usize, w: usize, k: usize, d: usize) -> Vec<f64> {
    let hw = h * w;
    let pad = (k / 2 * d) as isize;
    let mut out = vec![0.0; cin * hw];
    for c in 0..cin {
        let plane = &mut out[c * hw..(c + 1) * hw];
        for ky in 0..k {
            let dy = (ky * d) as isize - pad;
            for kx in 0..k {
                let dx = (kx * d) as isize - pad;
                let row = ((c * k + ky) * k + kx) * hw;
                let src = &cols[row..row + hw];
                let x_lo = (-dx).max(0) as usize;
                let x_hi = (w as isize - dx).min(w as isize).max(0) as usize;
                if x_lo >= x_hi {
                    continue;
                }
                for y in 0..h {
                    let sy = y as isize + dy;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let base = sy as usize * w;
                    let sx_lo = (x_lo as isize + dx) as usize;
                    for (d, s) in plane[base + sx_lo..base + sx_lo + (x_hi - x_lo)]
                        .iter_mut()
                        .zip(&src[y * w + x_lo..y * w + x_hi])
                    {
                        *d += s;
                    }
                }
            }
        }
    }
    out
}

/// `C = A·B + beta·C` for row-major storage; `*_t` marks a stored transpose.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_t: bool,
    b: &[f64],
    b_t: bool,
    beta: f64,
    c: &mut [f64],
) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: slice lengths are checked above and the strides address
    // exactly the m×k, k×n and m×n row-major (or transposed) buffers.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

struct LayerCache {
    /// im2col of the layer input (or the input itself for 1×1 kernels).
    cols: Vec<f64>,
    pre: Vec<f64>,
}

pub(crate) struct ForwardPass {
    pub output: Vec<f64>,
    caches: Vec<LayerCache>,
}

pub(crate) fn forward(weights: &ModelWeights, input: Vec<f64>, h: usize, w: usize) -> ForwardPass {
    let arch = &weights.architecture;
    let hw = h * w;
    let mut cin = arch.in_channels();
    let mut act = input;
    let mut caches = Vec::with_capacity(arch.layers.len());
    for (i, layer) in arch.layers.iter().enumerate() {
        let k = layer.kernel;
        let cols = if k == 1 { act } else { im2col(&act, cin, h, w, k, layer.dilation) };
        let kernel = &weights.tensors[2 * i].data;
        let bias = &weights.tensors[2 * i + 1].data;
        let mut pre = vec![0.0; layer.out_channels * hw];
        for (o, row) in pre.chunks_mut(hw).enumerate() {
            row.fill(bias[o]);
        }
        gemm(layer.out_channels, cin * k * k, hw, kernel, false, &cols, false, 1.0, &mut pre);
        act = pre.iter().map(|&z| layer.activation.apply(z)).collect();
        caches.push(LayerCache { cols, pre });
        cin = layer.out_channels;
    }
    ForwardPass {
        output: act,
        caches,
    }
}

/// Accumulates parameter gradients for `d_output` into `grads`.
pub(crate) fn backward(
    weights: &ModelWeights,
    pass: &ForwardPass,
    d_output: Vec<f64>,
    h: usize,
    w: usize,
    grads: &mut [Vec<f64>],
) {
    let arch = &weights.architecture;
    let hw = h * w;
    let mut d_act = d_output;
    for i in (0..arch.layers.len()).rev() {
        let layer = &arch.layers[i];
        let cache = &pass.caches[i];
        let cin = if i == 0 {
            arch.in_channels()
        } else {
            arch.layers[i - 1].out_channels
        };
        let k = layer.kernel;
        let d_pre: Vec<f64> = if layer.activation == Activation::Identity {
            d_act
        } else {
            d_act
                .iter()
                .zip(&cache.pre)
                .map(|(g, &z)| g * layer.activation.derivative(z))
                .collect()
        };
        let ckk = cin * k * k;
        gemm(layer.out_channels, hw, ckk, &d_pre, false, &cache.cols, true, 1.0, &mut grads[2 * i]);
        for (o, row) in d_pre.chunks(hw).enumerate() {
            grads[2 * i + 1][o] += row.iter().sum::<f64>();
        }
        if i == 0 {
            break;
        }
        let mut d_cols = vec![0.0; ckk * hw];
        gemm(
            ckk,
            layer.out_channels,
            hw,
            &weights.tensors[2 * i].data,
            true,
            &d_pre,
            false,
            0.0,
            &mut d_cols,
        );
        d_act = if k == 1 { d_cols } else { col2im(&d_cols, cin, h, w, k, layer.dilation) };
    }
}

/// Coefficient of `x_t` added to the network output at noise level `alpha_bar`.
pub(crate) fn skip_scale(arch: &Architecture, alpha_bar: f64) -> f64 {
    if arch.noise_skip {
        (1.0 - alpha_bar).sqrt()
    } else {
        0.0
    }
}

/// Runs the network on an already-validated input.
pub(crate) fn predict(
    weights: &ModelWeights,
    x_t: &Field,
    condition: &Field,
    step: usize,
    total_steps: usize,
    alpha_bar: f64,
) -> Result<Field> {
    let input = assemble_input(&weights.architecture, x_t, condition, step, total_steps)?;
    let mut out = forward(weights, input, x_t.height(), x_t.width()).output;
    let skip = skip_scale(&weights.architecture, alpha_bar);
    if skip != 0.0 {
        for (o, x) in out.iter_mut().zip(x_t.data()) {
            *o += skip * x;
        }
    }
    Field::from_vec(x_t.shape(), out)
}

#[derive(Clone, Debug)]
pub struct ConvDenoiser {
    weights: ModelWeights,
}

impl ConvDenoiser {
    pub fn new(weights: ModelWeights) -> Result<Self> {
        weights.validate()?;
        Ok(ConvDenoiser { weights })
    }

    pub fn weights(&self) -> &ModelWeights {
        &self.weights
    }
}

impl Denoiser for ConvDenoiser {
    fn predict_eps(&self, input: &DenoiserInput<'_>, sched: &NoiseSchedule) -> Result<Field> {
        sched.check_step(input.step)?;
        predict(
            &self.weights,
            input.x_t,
            input.condition.field(),
            input.step,
            sched.len(),
            sched.alpha_bar(input.step),
        )
    }

    fn check_shapes(&self, target: [usize; 4], context: [usize; 4]) -> Result<()> {
        let arch = &self.weights.architecture;
        let want_target = arch.target_shape(target[2], target[3]);
        if target != want_target {
            return Err(Error::shape(&want_target, &target));
        }
        let want_context = [arch.context, arch.channels, target[2], target[3]];
        if context != want_context {
            return Err(Error::shape(&want_context, &context));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::denoiser::Condition;
    use crate::schedule::cosine_schedule;

    fn tiny_arch() -> Architecture {
        Architecture::desk(2, 1, 1, 3)
    }

    #[test]
    fn layout_counts_parameters() {
        let arch = tiny_arch();
        // in = (2+1)*1 + 8 = 11
        let expected = 3 * 11 * 9 + 3 + 3 * (3 * 3 * 9 + 3) + 2 * 3 + 2;
        assert_eq!(arch.parameter_count(), expected);
        assert_eq!(ModelWeights::zeros(arch).unwrap().parameter_count(), expected);
    }

    #[test]
    fn zero_weights_emit_only_the_skip_term() {
        let sched = cosine_schedule(10, 0.008).unwrap();
        let net = ConvDenoiser::new(ModelWeights::zeros(tiny_arch()).unwrap()).unwrap();
        let x = Field::filled([2, 1, 4, 4], 0.3);
        let c = Field::filled([1, 1, 4, 4], -0.2);
        let input = DenoiserInput {
            x_t: &x,
            condition: Condition::Observed(&c),
            step: 3,
        };
        let out = net.predict_eps(&input, &sched).unwrap();
        let expected = 0.3 * (1.0 - sched.alpha_bar(3)).sqrt();
        assert!(out.data().iter().all(|&v| v == expected));

        let mut plain = tiny_arch();
        plain.noise_skip = false;
        let net = ConvDenoiser::new(ModelWeights::zeros(plain).unwrap()).unwrap();
        assert!(net.predict_eps(&input, &sched).unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn repeated_calls_are_bit_identical() {
        let sched = cosine_schedule(10, 0.008).unwrap();
        let net = ConvDenoiser::new(ModelWeights::init(tiny_arch(), 3).unwrap()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = Field::randn([2, 1, 5, 4], &mut rng);
        let c = Field::randn([1, 1, 5, 4], &mut rng);
        let input = DenoiserInput {
            x_t: &x,
            condition: Condition::Observed(&c),
            step: 7,
        };
        let a = net.predict_eps(&input, &sched).unwrap();
        let b = net.predict_eps(&input, &sched).unwrap();
        assert_eq!(a, b);
        assert!(a.data().iter().any(|&v| v != 0.0));
    }

    #[test]
    fn single_pointwise_layer_matches_hand_convolution() {
        // One 1×1 linear layer: out = x_plane + 2·cond_plane + 0.5·sin(0) + 0.25·cos(0) + 0.1
        let arch = Architecture {
            horizon: 1,
            context: 1,
            channels: 1,
            time_pairs: 1,
            layers: vec![LayerSpec {
                out_channels: 1,
                kernel: 1,
                dilation: 1,
                activation: Activation::Identity,
            }],
            noise_skip: false,
        };
        let weights = ModelWeights::from_tensors(
            arch,
            vec![
                NamedTensor {
                    name: "layer0.weight".into(),
                    data: vec![1.0, 2.0, 0.5, 0.25],
                },
                NamedTensor {
                    name: "layer0.bias".into(),
                    data: vec![0.1],
                },
            ],
        )
        .unwrap();
        let x = Field::from_vec([1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let c = Field::from_vec([1, 1, 2, 2], vec![0.5, 0.0, -1.0, 1.0]).unwrap();
        let out = predict(&weights, &x, &c, 0, 10, 0.5).unwrap();
        let expected = [2.35, 2.35, 1.35, 6.35];
        for (o, e) in out.data().iter().zip(expected) {
            assert!((o - e).abs() < 1e-12, "{o} vs {e}");
        }
    }

    #[test]
    fn three_by_three_identity_kernel_is_identity() {
        let arch = Architecture {
            horizon: 1,
            context: 1,
            channels: 1,
            time_pairs: 0,
            layers: vec![LayerSpec {
                out_channels: 1,
                kernel: 3,
                dilation: 1,
                activation: Activation::Identity,
            }],
            noise_skip: false,
        };
        let mut weights = ModelWeights::zeros(arch).unwrap();
        // centre tap of the x_t plane, right neighbour of the condition plane
        weights.tensors[0].data[4] = 1.0;
        weights.tensors[0].data[9 + 5] = 1.0;
        let x = Field::from_vec([1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let c = Field::from_vec([1, 1, 2, 2], vec![10.0, 20.0, 30.0, 40.0]).unwrap();
        let out = predict(&weights, &x, &c, 0, 10, 0.5).unwrap();
        // right neighbour is zero-padded in the last column
        assert_eq!(out.data(), &[21.0, 2.0, 43.0, 4.0]);
    }

    #[test]
    fn dilated_tap_reaches_two_pixels_away() {
        let arch = Architecture {
            horizon: 1,
            context: 1,
            channels: 1,
            time_pairs: 0,
            layers: vec![LayerSpec {
                out_channels: 1,
                kernel: 3,
                dilation: 2,
                activation: Activation::Identity,
            }],
            noise_skip: false,
        };
        let mut weights = ModelWeights::zeros(arch).unwrap();
        // right tap of the x_t plane
        weights.tensors[0].data[5] = 1.0;
        let x = Field::from_vec([1, 1, 1, 4], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let c = Field::zeros([1, 1, 1, 4]);
        let out = predict(&weights, &x, &c, 0, 10, 0.5).unwrap();
        assert_eq!(out.data(), &[3.0, 4.0, 0.0, 0.0]);
    }

    #[test]
    fn im2col_col2im_are_adjoint() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (cin, h, w, k) = (2, 6, 7, 3);
        let x: Vec<f64> = (0..cin * h * w).map(|_| StandardNormal.sample(&mut rng)).collect();
        let y: Vec<f64> = (0..cin * k * k * h * w).map(|_| StandardNormal.sample(&mut rng)).collect();
        let lhs: f64 = im2col(&x, cin, h, w, k, 2).iter().zip(&y).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(col2im(&y, cin, h, w, k, 2)).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10);
    }

    #[test]
    fn rejects_mismatched_shapes() {
        let sched = cosine_schedule(10, 0.008).unwrap();
        let net = ConvDenoiser::new(ModelWeights::zeros(tiny_arch()).unwrap()).unwrap();
        let x = Field::zeros([3, 1, 4, 4]);
        let c = Field::zeros([1, 1, 4, 4]);
        let input = DenoiserInput {
            x_t: &x,
            condition: Condition::Observed(&c),
            step: 0,
        };
        assert!(net.predict_eps(&input, &sched).is_err());
        assert!(net.check_shapes([2, 1, 4, 4], [2, 1, 4, 4]).is_err());
        assert!(net.check_shapes([2, 1, 4, 4], [1, 1, 4, 4]).is_ok());
    }
}
