use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};

use super::{check_members, check_pairs, ensemble_mean};
use crate::error::{Error, Result};
use crate::tensor::Field;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContingencyTable {
    pub hits: u64,
    pub misses: u64,
    pub false_alarms: u64,
    pub correct_rejections: u64,
}

impl ContingencyTable {
    pub fn total(&self) -> u64 {
        self.hits + self.misses + self.false_alarms + self.correct_rejections
    }

    /// `hits / (hits + misses + false_alarms)`, or `None` when no event was
    /// forecast or observed.
    pub fn csi(&self) -> Option<f64> {
        let d = self.hits + self.misses + self.false_alarms;
        (d > 0).then(|| self.hits as f64 / d as f64)
    }

    pub fn hit_rate(&self) -> Option<f64> {
        let d = self.hits + self.misses;
        (d > 0).then(|| self.hits as f64 / d as f64)
    }

    pub fn false_alarm_rate(&self) -> Option<f64> {
        let d = self.false_alarms + self.correct_rejections;
        (d > 0).then(|| self.false_alarms as f64 / d as f64)
    }

    pub fn base_rate(&self) -> Option<f64> {
        let n = self.total();
        (n > 0).then(|| (self.hits + self.misses) as f64 / n as f64)
    }
}

impl Add for ContingencyTable {
    type Output = ContingencyTable;
    fn add(self, o: ContingencyTable) -> ContingencyTable {
        ContingencyTable {
            hits: self.hits + o.hits,
            misses: self.misses + o.misses,
            false_alarms: self.false_alarms + o.false_alarms,
            correct_rejections: self.correct_rejections + o.correct_rejections,
        }
    }
}

impl AddAssign for ContingencyTable {
    fn add_assign(&mut self, o: ContingencyTable) {
        *self = *self + o;
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CsiScore {
    /// 0 when `empty` is set.
    pub score: f64,
    pub table: ContingencyTable,
    /// No event in any forecast or truth.
    pub empty: bool,
}

impl CsiScore {
    fn from_table(table: ContingencyTable) -> Self {
        match table.csi() {
            Some(score) => CsiScore { score, table, empty: false },
            None => CsiScore { score: 0.0, table, empty: true },
        }
    }
}

/// How an ensemble becomes a single binary event field.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum EventRule {
    /// Threshold the ensemble mean.
    #[default]
    EnsembleMean,
    /// Event where any member reaches the threshold.
    AnyMember,
    /// Event where at least `min_fraction` of members reach the threshold.
    MemberFraction { min_fraction: f64 },
}

impl EventRule {
    pub fn describe(&self) -> String {
        match self {
            EventRule::EnsembleMean => "ensemble mean >= threshold".into(),
            EventRule::AnyMember => "any member >= threshold".into(),
            EventRule::MemberFraction { min_fraction } => {
                format!("fraction of members >= threshold is at least {min_fraction}")
            }
        }
    }

    /// Returns a 0/1 field marking events.
    pub fn events(&self, members: &[Field], threshold: f64) -> Result<Field> {
        check_members(members)?;
        check_threshold(threshold)?;
        let base = match self {
            EventRule::EnsembleMean => return Ok(indicator(&ensemble_mean(members), threshold)),
            EventRule::AnyMember => f64::MIN_POSITIVE,
            EventRule::MemberFraction { min_fraction } => {
                if !(0.0..=1.0).contains(min_fraction) {
                    return Err(Error::Input(format!("member fraction {min_fraction} outside [0, 1]")));
                }
                *min_fraction
            }
        };
        let m = members.len() as f64;
        let mut counts = vec![0usize; members[0].len()];
        for member in members {
            for (c, &v) in counts.iter_mut().zip(member.data()) {
                *c += usize::from(v >= threshold);
            }
        }
        let data = counts
            .into_iter()
            .map(|c| if c > 0 && c as f64 / m >= base { 1.0 } else { 0.0 })
            .collect();
        Field::from_vec(members[0].shape(), data)
    }
}

/// 0/1 field of `field >= threshold`.
pub fn indicator(field: &Field, threshold: f64) -> Field {
    field.map(|v| if v >= threshold { 1.0 } else { 0.0 })
}

fn check_threshold(threshold: f64) -> Result<()> {
    if threshold.is_finite() {
        Ok(())
    } else {
        Err(Error::Input(format!("threshold must be finite, got {threshold}")))
    }
}

fn check_odd_window(window: usize) -> Result<()> {
    if window == 0 || window % 2 == 0 {
        return Err(Error::Input(format!("window must be odd and >= 1, got {window}")));
    }
    Ok(())
}

/// Summed-area table of a boolean plane, `(h+1) × (w+1)`.
struct Integral {
    w1: usize,
    sums: Vec<u32>,
}

impl Integral {
    fn new(mask: &[bool], h: usize, w: usize) -> Self {
        let w1 = w + 1;
        let mut sums = vec![0u32; (h + 1) * w1];
        for y in 0..h {
            let mut row = 0u32;
            for x in 0..w {
                row += u32::from(mask[y * w + x]);
                sums[(y + 1) * w1 + x + 1] = sums[y * w1 + x + 1] + row;
            }
        }
        Integral { w1, sums }
    }

    /// Count over rows `y0..y1`, columns `x0..x1`.
    fn count(&self, y0: usize, y1: usize, x0: usize, x1: usize) -> u32 {
        let s = |y: usize, x: usize| self.sums[y * self.w1 + x];
        s(y1, x1) + s(y0, x0) - s(y0, x1) - s(y1, x0)
    }
}

/// Centered window bounds clipped at the grid edges.
fn clip(c: usize, r: usize, n: usize) -> (usize, usize) {
    (c.saturating_sub(r), (c + r + 1).min(n))
}

fn masks(field: &Field, threshold: f64) -> Vec<bool> {
    field.data().iter().map(|&v| v >= threshold).collect()
}

pub fn csi(forecasts: &[Field], truths: &[Field], threshold: f64) -> Result<CsiScore> {
    csi_neighborhood(forecasts, truths, threshold, 1)
}

/// Forecast events with a truth event inside the centered window are hits,
/// otherwise false alarms. Truth events with no forecast event inside the
/// window are misses. Points with neither event are correct rejections.
pub fn csi_neighborhood(
    forecasts: &[Field],
    truths: &[Field],
    threshold: f64,
    window: usize,
) -> Result<CsiScore> {
    check_pairs(forecasts, truths)?;
    check_threshold(threshold)?;
    check_odd_window(window)?;
    let r = window / 2;
    let mut table = ContingencyTable::default();
    for (fc, tr) in forecasts.iter().zip(truths) {
        let (h, w) = (fc.height(), fc.width());
        let fm = masks(fc, threshold);
        let tm = masks(tr, threshold);
        let plane = h * w;
        for p in 0..fc.plane_count() {
            let f = &fm[p * plane..(p + 1) * plane];
            let t = &tm[p * plane..(p + 1) * plane];
            let fi = Integral::new(f, h, w);
            let ti = Integral::new(t, h, w);
            for y in 0..h {
                let (y0, y1) = clip(y, r, h);
                for x in 0..w {
                    let (x0, x1) = clip(x, r, w);
                    let i = y * w + x;
                    if f[i] {
                        if ti.count(y0, y1, x0, x1) > 0 {
                            table.hits += 1;
                        } else {
                            table.false_alarms += 1;
                        }
                    }
                    if t[i] && fi.count(y0, y1, x0, x1) == 0 {
                        table.misses += 1;
                    }
                    if !f[i] && !t[i] {
                        table.correct_rejections += 1;
                    }
                }
            }
        }
    }
    Ok(CsiScore::from_table(table))
}

/// Fractions skill score with edge-truncated windows, accumulated over all
/// cases before the ratio is taken.
pub fn fss(forecasts: &[Field], truths: &[Field], threshold: f64, window: usize) -> Result<f64> {
    check_pairs(forecasts, truths)?;
    check_threshold(threshold)?;
    check_odd_window(window)?;
    let r = window / 2;
    let (mut fbs, mut worst) = (0.0, 0.0);
    for (fc, tr) in forecasts.iter().zip(truths) {
        let (h, w) = (fc.height(), fc.width());
        let fm = masks(fc, threshold);
        let tm = masks(tr, threshold);
        let plane = h * w;
        for p in 0..fc.plane_count() {
            let fi = Integral::new(&fm[p * plane..(p + 1) * plane], h, w);
            let ti = Integral::new(&tm[p * plane..(p + 1) * plane], h, w);
            for y in 0..h {
                let (y0, y1) = clip(y, r, h);
                for x in 0..w {
                    let (x0, x1) = clip(x, r, w);
                    let n = ((y1 - y0) * (x1 - x0)) as f64;
                    let pf = fi.count(y0, y1, x0, x1) as f64 / n;
                    let po = ti.count(y0, y1, x0, x1) as f64 / n;
                    fbs += (pf - po) * (pf - po);
                    worst += pf * pf + po * po;
                }
            }
        }
    }
    if worst == 0.0 {
        return Ok(1.0);
    }
    Ok((1.0 - fbs / worst).clamp(0.0, 1.0))
}
