use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::tensor::Field;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeadErrors {
    pub rmse: f64,
    pub mae: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorScores {
    pub per_lead: Vec<LeadErrors>,
    pub rmse: f64,
    pub mae: f64,
}

pub fn rmse_mae(forecast: &Field, truth: &Field) -> Result<ErrorScores> {
    forecast.ensure_same_shape(truth)?;
    let frame_len = forecast.channels() * forecast.plane_len();
    let (mut sq_all, mut abs_all) = (0.0, 0.0);
    let mut per_lead = Vec::with_capacity(forecast.frames());
    for f in 0..forecast.frames() {
        let range = f * frame_len..(f + 1) * frame_len;
        let (mut sq, mut ab) = (0.0, 0.0);
        for (a, b) in forecast.data()[range.clone()].iter().zip(&truth.data()[range]) {
            let d = a - b;
            sq += d * d;
            ab += d.abs();
        }
        sq_all += sq;
        abs_all += ab;
        let n = frame_len as f64;
        per_lead.push(LeadErrors { rmse: (sq / n).sqrt(), mae: ab / n });
    }
    let n = forecast.len() as f64;
    Ok(ErrorScores {
        per_lead,
        rmse: (sq_all / n).sqrt(),
        mae: abs_all / n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        let t = Field::zeros([2, 1, 1, 2]);
        let s = rmse_mae(&t, &t).unwrap();
        assert_eq!((s.rmse, s.mae), (0.0, 0.0));
        let s = rmse_mae(&Field::filled([2, 1, 1, 2], 1.0), &t).unwrap();
        assert_eq!((s.rmse, s.mae), (1.0, 1.0));
        let f = Field::from_vec([1, 1, 1, 2], vec![0.0, 2.0]).unwrap();
        let s = rmse_mae(&f, &Field::zeros([1, 1, 1, 2])).unwrap();
        assert!((s.rmse - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(s.mae, 1.0);
        assert_eq!(s.per_lead.len(), 1);
        assert!(rmse_mae(&f, &t).is_err());
    }
}
