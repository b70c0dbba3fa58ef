use serde::{Deserialize, Serialize};

use super::categorical::{ContingencyTable, EventRule};
use super::check_members;
use crate::error::{Error, Result};
use crate::tensor::Field;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EconomicValue {
    pub ratios: Vec<f64>,
    /// `None` where the base rate is 0 or 1.
    pub values: Vec<Option<f64>>,
    pub table: ContingencyTable,
    pub decision_rule: String,
    pub formula: String,
}

pub const VALUE_FORMULA: &str = "V(r) = (min(r,s) - F*r*(1-s) + H*s*(1-r) - s) / (min(r,s) - s*r)";

/// Cost-loss relative value from hit rate `H`, false-alarm rate `F` and base
/// rate `s` at cost-loss ratio `r`.
pub fn relative_value(hit_rate: f64, false_alarm_rate: f64, base_rate: f64, ratio: f64) -> Option<f64> {
    if base_rate <= 0.0 || base_rate >= 1.0 {
        return None;
    }
    let (h, f, s, r) = (hit_rate, false_alarm_rate, base_rate, ratio);
    let clim = r.min(s);
    Some((clim - f * r * (1.0 - s) + h * s * (1.0 - r) - s) / (clim - s * r))
}

/// Relative value per ratio for ensemble forecasts turned into events with
/// `rule` (use [`EventRule::AnyMember`] for the standard decision rule).
pub fn economic_value(
    forecasts: &[Vec<Field>],
    truths: &[Field],
    threshold: f64,
    ratios: &[f64],
    rule: EventRule,
) -> Result<EconomicValue> {
    if forecasts.len() != truths.len() {
        return Err(Error::Input(format!(
            "{} forecasts but {} truths",
            forecasts.len(),
            truths.len()
        )));
    }
    if let Some(r) = ratios.iter().find(|r| !(**r > 0.0 && **r < 1.0)) {
        return Err(Error::Input(format!("cost-loss ratio {r} outside (0, 1)")));
    }
    let mut table = ContingencyTable::default();
    for (members, truth) in forecasts.iter().zip(truths) {
        check_members(members)?;
        members[0].ensure_same_shape(truth)?;
        let events = rule.events(members, threshold)?;
        for (&e, &y) in events.data().iter().zip(truth.data()) {
            match (e > 0.5, y >= threshold) {
                (true, true) => table.hits += 1,
                (false, true) => table.misses += 1,
                (true, false) => table.false_alarms += 1,
                (false, false) => table.correct_rejections += 1,
            }
        }
    }
    let values = match (table.hit_rate(), table.false_alarm_rate(), table.base_rate()) {
        (Some(h), Some(f), Some(s)) => ratios.iter().map(|&r| relative_value(h, f, s, r)).collect(),
        _ => vec![None; ratios.len()],
    };
    Ok(EconomicValue {
        ratios: ratios.to_vec(),
        values,
        table,
        decision_rule: rule.describe(),
        formula: VALUE_FORMULA.into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_value() {
        // (0.3 - 0.021 + 0.168 - 0.3) / (0.3 - 0.09) = 0.147 / 0.21
        let v = relative_value(0.8, 0.1, 0.3, 0.3).unwrap();
        assert!((v - 0.7).abs() < 1e-12);
    }

    #[test]
    fn perfect_and_no_skill() {
        for i in 1..20 {
            let r = i as f64 / 20.0;
            assert!((relative_value(1.0, 0.0, 0.3, r).unwrap() - 1.0).abs() < 1e-12);
            for h in [0.0, 0.2, 0.7, 1.0] {
                assert!(relative_value(h, h, 0.3, r).unwrap() <= 1e-12);
            }
        }
        assert_eq!(relative_value(0.5, 0.5, 0.0, 0.3), None);
        assert_eq!(relative_value(0.5, 0.5, 1.0, 0.3), None);
    }

    #[test]
    fn degenerate_base_rate_and_bad_ratio() {
        let t = Field::zeros([1, 1, 2, 2]);
        let out = economic_value(&[vec![t.clone()]], &[t.clone()], 0.5, &[0.1], EventRule::AnyMember).unwrap();
        assert_eq!(out.values, vec![None]);
        assert!(economic_value(&[vec![t.clone()]], &[t], 0.5, &[1.0], EventRule::AnyMember).is_err());
    }
}
