//! Forecast verification scores.
//!
//! All scores treat a [`Field`] as a stack of `height × width` planes (one
//! per lead frame and channel); spatial windows never cross planes.
//! Accumulation is in `f64` with a fixed summation order.

mod categorical;
mod continuous;
mod crps;
mod psd;
mod value;

pub use categorical::{csi, csi_neighborhood, fss, indicator, ContingencyTable, CsiScore, EventRule};
pub use continuous::{rmse_mae, ErrorScores, LeadErrors};
pub use crps::{crps_ensemble, pooled_crps, pool_field, CrpsEstimator, CrpsField, PoolAgg};
pub use psd::{psd_radial, psd_total, PsdBin};
pub use value::{economic_value, relative_value, EconomicValue, VALUE_FORMULA};

use crate::error::{Error, Result};
use crate::tensor::Field;

/// `M` forecast members for one verification case.
#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleForecast {
    pub members: Vec<Field>,
    pub case_id: String,
}

impl EnsembleForecast {
    pub fn new(members: Vec<Field>, case_id: impl Into<String>) -> Result<Self> {
        check_members(&members)?;
        Ok(EnsembleForecast {
            members,
            case_id: case_id.into(),
        })
    }

    pub fn mean(&self) -> Field {
        ensemble_mean(&self.members)
    }
}

pub(crate) fn check_members(members: &[Field]) -> Result<()> {
    let Some(first) = members.first() else {
        return Err(Error::Input("ensemble has no members".into()));
    };
    for m in &members[1..] {
        first.ensure_same_shape(m)?;
    }
    Ok(())
}

pub fn ensemble_mean(members: &[Field]) -> Field {
    let mut out = Field::zeros(members[0].shape());
    for m in members {
        for (o, v) in out.data_mut().iter_mut().zip(m.data()) {
            *o += v;
        }
    }
    let n = members.len() as f64;
    out.data_mut().iter_mut().for_each(|v| *v /= n);
    out
}

pub(crate) fn check_pairs(forecasts: &[Field], truths: &[Field]) -> Result<()> {
    if forecasts.len() != truths.len() {
        return Err(Error::Input(format!(
            "{} forecasts but {} truths",
            forecasts.len(),
            truths.len()
        )));
    }
    for (f, t) in forecasts.iter().zip(truths) {
        f.ensure_same_shape(t)?;
    }
    Ok(())
}
