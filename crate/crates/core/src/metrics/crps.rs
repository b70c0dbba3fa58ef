use serde::{Deserialize, Serialize};

use super::check_members;
use crate::error::{Error, Result};
use crate::tensor::Field;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CrpsEstimator {
    /// `(1/M)Σ|x_i − y| − (1/2M²)ΣΣ|x_i − x_j|`.
    #[default]
    Empirical,
    /// Same with `1/(2M(M−1))` on the spread term; needs `M ≥ 2`.
    Fair,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolAgg {
    Avg,
    Max,
}

impl PoolAgg {
    pub fn as_str(self) -> &'static str {
        match self {
            PoolAgg::Avg => "avg",
            PoolAgg::Max => "max",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CrpsField {
    pub field: Field,
    pub mean: f64,
}

pub fn crps_ensemble(members: &[Field], truth: &Field, estimator: CrpsEstimator) -> Result<CrpsField> {
    check_members(members)?;
    members[0].ensure_same_shape(truth)?;
    let m = members.len();
    let spread_norm = match estimator {
        CrpsEstimator::Empirical => 2.0 * (m * m) as f64,
        CrpsEstimator::Fair if m >= 2 => 2.0 * (m * (m - 1)) as f64,
        CrpsEstimator::Fair => {
            return Err(Error::Input("the fair CRPS needs at least two members".into()))
        }
    };
    let mut values = vec![0.0; truth.len()];
    let mut xs = vec![0.0; m];
    for (i, out) in values.iter_mut().enumerate() {
        for (x, member) in xs.iter_mut().zip(members) {
            *x = member.data()[i];
        }
        let y = truth.data()[i];
        let skill: f64 = xs.iter().map(|x| (x - y).abs()).sum::<f64>() / m as f64;
        let mut spread = 0.0;
        for a in &xs {
            for b in &xs {
                spread += (a - b).abs();
            }
        }
        *out = skill - spread / spread_norm;
    }
    let field = Field::from_vec(truth.shape(), values)?;
    let mean = field.mean();
    Ok(CrpsField { field, mean })
}

/// Reduces every plane over non-overlapping `window × window` blocks.
/// Trailing rows and columns that do not fill a block are dropped.
pub fn pool_field(field: &Field, window: usize, agg: PoolAgg) -> Result<Field> {
    let (h, w) = (field.height(), field.width());
    if window == 0 || window > h.min(w) {
        return Err(Error::Input(format!("pooling window {window} does not fit a {h}x{w} grid")));
    }
    let (ph, pw) = (h / window, w / window);
    let mut out = Vec::with_capacity(field.plane_count() * ph * pw);
    for p in 0..field.plane_count() {
        let plane = field.plane(p);
        for by in 0..ph {
            for bx in 0..pw {
                let mut acc = match agg {
                    PoolAgg::Avg => 0.0,
                    PoolAgg::Max => f64::NEG_INFINITY,
                };
                for y in by * window..(by + 1) * window {
                    for x in bx * window..(bx + 1) * window {
                        let v = plane[y * w + x];
                        acc = match agg {
                            PoolAgg::Avg => acc + v,
                            PoolAgg::Max => acc.max(v),
                        };
                    }
                }
                if agg == PoolAgg::Avg {
                    acc /= (window * window) as f64;
                }
                out.push(acc);
            }
        }
    }
    Field::from_vec([field.frames(), field.channels(), ph, pw], out)
}

/// CRPS of the block-pooled members against the block-pooled truth.
pub fn pooled_crps(
    members: &[Field],
    truth: &Field,
    window: usize,
    agg: PoolAgg,
    estimator: CrpsEstimator,
) -> Result<f64> {
    check_members(members)?;
    members[0].ensure_same_shape(truth)?;
    if window == 1 {
        return Ok(crps_ensemble(members, truth, estimator)?.mean);
    }
    let pooled: Vec<Field> = members
        .iter()
        .map(|m| pool_field(m, window, agg))
        .collect::<Result<_>>()?;
    let pooled_truth = pool_field(truth, window, agg)?;
    Ok(crps_ensemble(&pooled, &pooled_truth, estimator)?.mean)
}
