//! Dense `(frames, channels, height, width)` tensors.
//!
//! Every payload in the engine (targets, contexts, noise, weight fields)
//! is a [`Field`]. Storage is row-major with `x` fastest.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    shape: [usize; 4],
    data: Vec<f64>,
}

impl Field {
    pub fn zeros(shape: [usize; 4]) -> Self {
        Self::filled(shape, 0.0)
    }

    pub fn filled(shape: [usize; 4], value: f64) -> Self {
        Field {
            shape,
            data: vec![value; shape.iter().product()],
        }
    }

    pub fn from_vec(shape: [usize; 4], data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if data.len() != expected {
            return Err(Error::shape(&[expected], &[data.len()]));
        }
        Ok(Field { shape, data })
    }

    /// Standard normal draws, consumed from `rng` in storage order.
    pub fn randn<R: Rng + ?Sized>(shape: [usize; 4], rng: &mut R) -> Self {
        let n = shape.iter().product();
        let data = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        Field { shape, data }
    }

    pub fn shape(&self) -> [usize; 4] {
        self.shape
    }

    pub fn frames(&self) -> usize {
        self.shape[0]
    }

    pub fn channels(&self) -> usize {
        self.shape[1]
    }

    pub fn height(&self) -> usize {
        self.shape[2]
    }

    pub fn width(&self) -> usize {
        self.shape[3]
    }

    /// Number of `height × width` planes.
    pub fn plane_count(&self) -> usize {
        self.shape[0] * self.shape[1]
    }

    pub fn plane_len(&self) -> usize {
        self.shape[2] * self.shape[3]
    }

    pub fn plane(&self, index: usize) -> &[f64] {
        let n = self.plane_len();
        &self.data[index * n..(index + 1) * n]
    }

    pub fn plane_mut(&mut self, index: usize) -> &mut [f64] {
        let n = self.plane_len();
        &mut self.data[index * n..(index + 1) * n]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, frame: usize, channel: usize, y: usize, x: usize) -> f64 {
        self.data[self.offset(frame, channel, y, x)]
    }

    pub fn set(&mut self, frame: usize, channel: usize, y: usize, x: usize, value: f64) {
        let i = self.offset(frame, channel, y, x);
        self.data[i] = value;
    }

    fn offset(&self, frame: usize, channel: usize, y: usize, x: usize) -> usize {
        let [_, c, h, w] = self.shape;
        ((frame * c + channel) * h + y) * w + x
    }

    pub fn ensure_shape(&self, shape: [usize; 4]) -> Result<()> {
        if self.shape != shape {
            return Err(Error::shape(&shape, &self.shape));
        }
        Ok(())
    }

    pub fn ensure_same_shape(&self, other: &Field) -> Result<()> {
        other.ensure_shape(self.shape)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Elementwise combination of two equally shaped fields.
    pub fn zip_map(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Result<Field> {
        self.ensure_same_shape(other)?;
        Ok(Field {
            shape: self.shape,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.data.len() as f64
    }

    /// Copy of frames `start..end`.
    pub fn frame_range(&self, start: usize, end: usize) -> Field {
        let per_frame = self.shape[1] * self.plane_len();
        Field {
            shape: [end - start, self.shape[1], self.shape[2], self.shape[3]],
            data: self.data[start * per_frame..end * per_frame].to_vec(),
        }
    }

    pub fn to_f32(&self) -> Vec<f32> {
        self.data.iter().map(|&v| v as f32).collect()
    }
}
