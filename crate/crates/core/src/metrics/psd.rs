use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PsdBin {
    pub wavenumber: usize,
    /// Mean power of the frequencies in this bin.
    pub power: f64,
    pub count: usize,
}

/// Radially averaged power spectrum of one `h × w` plane.
///
/// Power is `|F(k)|² / (h·w)` of the mean-removed plane, so the unbinned
/// total equals `h·w·variance`. Frequency `(ky, kx)` (signed) lands in bin
/// `round(√(ky² + kx²))`.
pub fn psd_radial(plane: &[f64], h: usize, w: usize) -> Result<Vec<PsdBin>> {
    if h < 4 || w < 4 {
        return Err(Error::Input(format!("spectrum needs at least 4x4, got {h}x{w}")));
    }
    if plane.len() != h * w {
        return Err(Error::shape(&[h, w], &[plane.len()]));
    }
    let mean = plane.iter().sum::<f64>() / (h * w) as f64;
    let mut buf: Vec<Complex<f64>> = plane.iter().map(|&v| Complex::new(v - mean, 0.0)).collect();

    let mut planner = FftPlanner::new();
    let row_fft = planner.plan_fft_forward(w);
    for row in buf.chunks_exact_mut(w) {
        row_fft.process(row);
    }
    let col_fft = planner.plan_fft_forward(h);
    let mut col = vec![Complex::new(0.0, 0.0); h];
    for x in 0..w {
        for y in 0..h {
            col[y] = buf[y * w + x];
        }
        col_fft.process(&mut col);
        for y in 0..h {
            buf[y * w + x] = col[y];
        }
    }

    let signed = |k: usize, n: usize| if k <= n / 2 { k as f64 } else { k as f64 - n as f64 };
    let max_bin = ((h / 2).pow(2) as f64 + (w / 2).pow(2) as f64).sqrt().round() as usize;
    let mut sums = vec![0.0; max_bin + 1];
    let mut counts = vec![0usize; max_bin + 1];
    let norm = (h * w) as f64;
    for y in 0..h {
        let ky = signed(y, h);
        for x in 0..w {
            let kx = signed(x, w);
            let bin = (ky * ky + kx * kx).sqrt().round() as usize;
            sums[bin] += buf[y * w + x].norm_sqr() / norm;
            counts[bin] += 1;
        }
    }
    Ok(sums
        .into_iter()
        .zip(counts)
        .enumerate()
        .map(|(k, (s, c))| PsdBin {
            wavenumber: k,
            power: if c > 0 { s / c as f64 } else { 0.0 },
            count: c,
        })
        .collect())
}

/// Sum of unbinned power.
pub fn psd_total(bins: &[PsdBin]) -> f64 {
    bins.iter().map(|b| b.power * b.count as f64).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn constant_has_no_power() {
        let bins = psd_radial(&[3.0; 64], 8, 8).unwrap();
        assert!(bins.iter().all(|b| b.power.abs() < 1e-20));
        assert_eq!(bins.iter().map(|b| b.count).sum::<usize>(), 64);
    }

    #[test]
    fn cosine_lands_in_its_bin() {
        let (h, w) = (16, 16);
        let plane: Vec<f64> = (0..h * w)
            .map(|i| (2.0 * PI * 3.0 * (i % w) as f64 / w as f64).cos())
            .collect();
        let bins = psd_radial(&plane, h, w).unwrap();
        let total = psd_total(&bins);
        let var = plane.iter().map(|v| v * v).sum::<f64>() / (h * w) as f64;
        assert!((total - (h * w) as f64 * var).abs() < 1e-9);
        for b in &bins {
            if b.wavenumber != 3 {
                assert!(b.power * (b.count as f64) < 1e-9 * total, "bin {}", b.wavenumber);
            }
        }
    }

    #[test]
    fn rejects_small_grids() {
        assert!(psd_radial(&[0.0; 9], 3, 3).is_err());
        assert!(psd_radial(&[0.0; 15], 4, 4).is_err());
    }
}
