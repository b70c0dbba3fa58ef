//! Brute-force reference implementations shared by the acceptance suite and
//! the integration tests. Each one is written from the textbook definition,
//! not from the library code.
#![allow(dead_code)]

use cogdpm::metrics::{ContingencyTable, PoolAgg};
use cogdpm::Field;

/// CRPS of one ensemble against one observation by integrating
/// `(F(x) − 1{x ≥ y})²` exactly over the piecewise-constant segments.
pub fn crps_integral(xs: &[f64], y: f64) -> f64 {
    let mut knots: Vec<f64> = xs.to_vec();
    knots.push(y);
    knots.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let m = xs.len() as f64;
    let mut total = 0.0;
    for pair in knots.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        if b <= a {
            continue;
        }
        let cdf = xs.iter().filter(|&&x| x <= a).count() as f64 / m;
        let step = if y <= a { 1.0 } else { 0.0 };
        total += (cdf - step) * (cdf - step) * (b - a);
    }
    total
}

/// Fair CRPS: the spread term averages over ordered pairs with `i ≠ j`.
pub fn crps_fair(xs: &[f64], y: f64) -> f64 {
    let m = xs.len();
    let skill = xs.iter().map(|x| (x - y).abs()).sum::<f64>() / m as f64;
    let mut spread = 0.0;
    for i in 0..m {
        for j in 0..m {
            if i != j {
                spread += (xs[i] - xs[j]).abs();
            }
        }
    }
    skill - spread / (2.0 * (m * (m - 1)) as f64)
}

/// Mean CRPS over every coordinate.
pub fn crps_mean(members: &[Field], truth: &Field, fair: bool) -> f64 {
    let n = truth.len();
    let mut sum = 0.0;
    for i in 0..n {
        let xs: Vec<f64> = members.iter().map(|m| m.data()[i]).collect();
        let y = truth.data()[i];
        sum += if fair { crps_fair(&xs, y) } else { crps_integral(&xs, y) };
    }
    sum / n as f64
}

/// Non-overlapping block pooling, one block at a time.
pub fn pool(field: &Field, window: usize, agg: PoolAgg) -> Field {
    let [f, c, h, w] = field.shape();
    let (ph, pw) = (h / window, w / window);
    let mut out = Field::zeros([f, c, ph, pw]);
    for fi in 0..f {
        for ci in 0..c {
            for by in 0..ph {
                for bx in 0..pw {
                    let mut vals = Vec::new();
                    for y in by * window..(by + 1) * window {
                        for x in bx * window..(bx + 1) * window {
                            vals.push(field.get(fi, ci, y, x));
                        }
                    }
                    let v = match agg {
                        PoolAgg::Avg => vals.iter().sum::<f64>() / vals.len() as f64,
                        PoolAgg::Max => vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
                    };
                    out.set(fi, ci, by, bx, v);
                }
            }
        }
    }
    out
}

fn window_has(field: &Field, f: usize, c: usize, y: usize, x: usize, r: usize, thr: f64) -> bool {
    let (h, w) = (field.height() as isize, field.width() as isize);
    let r = r as isize;
    for dy in -r..=r {
        for dx in -r..=r {
            let (yy, xx) = (y as isize + dy, x as isize + dx);
            if yy >= 0 && yy < h && xx >= 0 && xx < w && field.get(f, c, yy as usize, xx as usize) >= thr {
                return true;
            }
        }
    }
    false
}

/// Neighbourhood contingency counts by direct window scans (window 1 is the
/// pointwise table).
pub fn contingency(forecast: &Field, truth: &Field, thr: f64, window: usize) -> ContingencyTable {
    let [nf, nc, h, w] = forecast.shape();
    let r = window / 2;
    let mut t = ContingencyTable::default();
    for f in 0..nf {
        for c in 0..nc {
            for y in 0..h {
                for x in 0..w {
                    let fe = forecast.get(f, c, y, x) >= thr;
                    let te = truth.get(f, c, y, x) >= thr;
                    if fe {
                        if window_has(truth, f, c, y, x, r, thr) {
                            t.hits += 1;
                        } else {
                            t.false_alarms += 1;
                        }
                    }
                    if te && !window_has(forecast, f, c, y, x, r, thr) {
                        t.misses += 1;
                    }
                    if !fe && !te {
                        t.correct_rejections += 1;
                    }
                }
            }
        }
    }
    t
}

fn fraction(field: &Field, f: usize, c: usize, y: usize, x: usize, r: usize, thr: f64) -> f64 {
    let (h, w) = (field.height() as isize, field.width() as isize);
    let r = r as isize;
    let (mut events, mut cells) = (0usize, 0usize);
    for dy in -r..=r {
        for dx in -r..=r {
            let (yy, xx) = (y as isize + dy, x as isize + dx);
            if yy >= 0 && yy < h && xx >= 0 && xx < w {
                cells += 1;
                events += usize::from(field.get(f, c, yy as usize, xx as usize) >= thr);
            }
        }
    }
    events as f64 / cells as f64
}

/// FSS with edge-truncated windows, accumulated over all pairs.
pub fn fss(forecasts: &[Field], truths: &[Field], thr: f64, window: usize) -> f64 {
    let r = window / 2;
    let (mut num, mut den) = (0.0, 0.0);
    for (fc, tr) in forecasts.iter().zip(truths) {
        let [nf, nc, h, w] = fc.shape();
        for f in 0..nf {
            for c in 0..nc {
                for y in 0..h {
                    for x in 0..w {
                        let pf = fraction(fc, f, c, y, x, r, thr);
                        let po = fraction(tr, f, c, y, x, r, thr);
                        num += (pf - po).powi(2);
                        den += pf * pf + po * po;
                    }
                }
            }
        }
    }
    if den == 0.0 {
        1.0
    } else {
        1.0 - num / den
    }
}

/// Relative economic value from expected expenses per unit loss:
/// climatology pays `min(r, s)`, a perfect forecast `s·r`, the forecast
/// `r` per warning plus `1` per miss.
pub fn relative_value(t: &ContingencyTable, r: f64) -> Option<f64> {
    let n = t.total() as f64;
    let s = (t.hits + t.misses) as f64 / n;
    if s <= 0.0 || s >= 1.0 || t.hits + t.misses == 0 || t.false_alarms + t.correct_rejections == 0 {
        return None;
    }
    let clim = r.min(s);
    let perfect = s * r;
    let forecast = (t.hits + t.false_alarms) as f64 / n * r + t.misses as f64 / n;
    Some((clim - forecast) / (clim - perfect))
}

/// Root-mean-square and mean absolute error over every coordinate.
pub fn rmse_mae(forecast: &Field, truth: &Field) -> (f64, f64) {
    let n = truth.len() as f64;
    let (mut sq, mut ab) = (0.0, 0.0);
    for (a, b) in forecast.data().iter().zip(truth.data()) {
        sq += (a - b) * (a - b);
        ab += (a - b).abs();
    }
    ((sq / n).sqrt(), ab / n)
}

/// Unnormalized 2-D DFT power `|F(ky, kx)|²` of the mean-removed plane.
pub fn dft_power(plane: &[f64], h: usize, w: usize) -> Vec<f64> {
    use std::f64::consts::PI;
    let mean = plane.iter().sum::<f64>() / (h * w) as f64;
    let mut out = vec![0.0; h * w];
    for ky in 0..h {
        for kx in 0..w {
            let (mut re, mut im) = (0.0, 0.0);
            for y in 0..h {
                for x in 0..w {
                    let a = -2.0 * PI * (ky as f64 * y as f64 / h as f64 + kx as f64 * x as f64 / w as f64);
                    let v = plane[y * w + x] - mean;
                    re += v * a.cos();
                    im += v * a.sin();
                }
            }
            out[ky * w + kx] = re * re + im * im;
        }
    }
    out
}

/// Pointwise table where a forecast event means any member reaches `thr`.
pub fn any_member_table(members: &[Field], truth: &Field, thr: f64) -> ContingencyTable {
    let mut t = ContingencyTable::default();
    for i in 0..truth.len() {
        let fe = members.iter().any(|m| m.data()[i] >= thr);
        match (fe, truth.data()[i] >= thr) {
            (true, true) => t.hits += 1,
            (true, false) => t.false_alarms += 1,
            (false, true) => t.misses += 1,
            (false, false) => t.correct_rejections += 1,
        }
    }
    t
}
