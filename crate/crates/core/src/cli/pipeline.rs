//! The steps behind each command, usable without touching the filesystem.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use super::config::{EvaluateConfig, Metric, RunConfig, Task};
use crate::datagen::{derive_seed, generate_flow_dataset, generate_glyph_dataset, split_dataset, DatasetSplits};
use crate::denoiser::{ConvDenoiser, Denoiser, GaussianOracle, TrainingPair};
use crate::diffusion::ContextField;
use crate::error::{Error, Result};
use crate::io::{Checkpoint, GridFile};
use crate::metrics::{
    crps_ensemble, csi_neighborhood, economic_value, ensemble_mean, fss, indicator, pool_field, psd_radial,
    rmse_mae, VALUE_FORMULA,
};
use crate::sampler::{sample_with_mode, GuidanceMode, SamplerConfig};
use crate::schedule::NoiseSchedule;
use crate::tensor::Field;

/// Generates the configured dataset and splits it with the master seed.
pub fn generate(cfg: &RunConfig) -> Result<DatasetSplits> {
    cfg.validate_data()?;
    let seqs = match cfg.data.task {
        Task::Glyph => generate_glyph_dataset(&cfg.data.glyph, cfg.data.count)?,
        Task::Flow => generate_flow_dataset(&cfg.data.flow, cfg.data.count)?,
    };
    split_dataset(seqs, cfg.data.fractions, cfg.seed).map_err(|e| match e {
        Error::Config { path, message } => Error::config(format!("data.{path}"), message),
        other => other,
    })
}

pub fn training_pairs(file: &GridFile) -> Result<Vec<TrainingPair>> {
    let cf = file.header.context_frames;
    if cf == 0 || cf >= file.header.shape[1] {
        return Err(Error::Input(format!(
            "training data needs context and target frames, file has {cf} context of {} frames",
            file.header.shape[1]
        )));
    }
    Ok(file
        .to_sequences()
        .into_iter()
        .map(|s| TrainingPair {
            context: s.context(),
            target: s.target(),
        })
        .collect())
}

/// A denoiser with the schedule it runs on.
pub struct LoadedModel {
    pub model: Box<dyn Denoiser>,
    pub schedule: NoiseSchedule,
    /// Short description for manifests.
    pub source: Value,
}

impl LoadedModel {
    pub fn from_checkpoint(ck: Checkpoint) -> Result<Self> {
        let source = json!({
            "kind": "checkpoint",
            "step": ck.step,
            "parameters": ck.weights.parameter_count(),
            "schedule_digest": ck.schedule.digest(),
        });
        Ok(LoadedModel {
            model: Box::new(ConvDenoiser::new(ck.weights)?),
            schedule: ck.schedule,
            source,
        })
    }

    pub fn from_oracle(oracle: GaussianOracle, schedule: NoiseSchedule) -> Self {
        let source = json!({
            "kind": "oracle",
            "oracle": oracle,
            "schedule_digest": schedule.digest(),
        });
        LoadedModel {
            model: Box::new(oracle),
            schedule,
            source,
        }
    }
}

/// One forecast case: a sample id and its observed context.
#[derive(Clone, Debug)]
pub struct Case {
    pub id: u64,
    pub context: Field,
}

pub fn cases_from(file: &GridFile, max_cases: Option<usize>) -> Result<Vec<Case>> {
    let cf = file.header.context_frames;
    if cf == 0 {
        return Err(Error::Input("input file has no context frames".into()));
    }
    let n = max_cases.unwrap_or(usize::MAX).min(file.samples());
    Ok((0..n)
        .map(|i| Case {
            id: file.header.sample_ids[i],
            context: file.sample(i).frame_range(0, cf),
        })
        .collect())
}

/// Member forecasts indexed `[member][case]`.
#[derive(Clone, Debug)]
pub struct EnsembleRun {
    pub members: Vec<Vec<Field>>,
    /// Final-step inverse precision per member and case, when kept.
    pub inverse_precision: Option<Vec<Vec<Field>>>,
    pub member_seeds: Vec<u64>,
}

impl EnsembleRun {
    /// Members regrouped per case: `[case][member]`.
    pub fn by_case(&self) -> Vec<Vec<Field>> {
        let cases = self.members.first().map_or(0, Vec::len);
        (0..cases)
            .map(|c| self.members.iter().map(|m| m[c].clone()).collect())
            .collect()
    }
}

/// Seed of member `member` on case `case_id`: `derive_seed(seed + member, case_id)`.
pub fn case_seed(seed: u64, member: usize, case_id: u64) -> u64 {
    derive_seed(seed.wrapping_add(member as u64), case_id)
}

#[allow(clippy::too_many_arguments)]
pub fn forecast_cases(
    model: &LoadedModel,
    cases: &[Case],
    horizon: usize,
    sampler: &SamplerConfig,
    mode: GuidanceMode,
    members: usize,
    keep_inverse_precision: bool,
) -> Result<EnsembleRun> {
    sampler.validate()?;
    if members == 0 {
        return Err(Error::config("forecast.members", "must be >= 1"));
    }
    let Some(first) = cases.first() else {
        return Err(Error::Input("no cases to forecast".into()));
    };
    let [_, c, h, w] = first.context.shape();
    for case in cases {
        first.context.ensure_same_shape(&case.context)?;
    }
    model.model.check_shapes([horizon, c, h, w], first.context.shape())?;
    let contexts: Vec<ContextField> = cases
        .iter()
        .map(|c| ContextField::new(c.context.clone()))
        .collect::<Result<_>>()?;

    let jobs: Vec<(usize, usize)> = (0..members).flat_map(|m| (0..cases.len()).map(move |c| (m, c))).collect();
    let results: Vec<(Field, Option<Field>)> = jobs
        .par_iter()
        .map(|&(m, c)| {
            let cfg = SamplerConfig {
                seed: case_seed(sampler.seed, m, cases[c].id),
                keep_history: false,
                ..sampler.clone()
            };
            let r = sample_with_mode(&contexts[c], horizon, model.model.as_ref(), &model.schedule, &cfg, mode)?;
            Ok((r.forecast, r.final_inverse_precision))
        })
        .collect::<Result<_>>()?;

    let mut out = vec![Vec::with_capacity(cases.len()); members];
    let mut ips = vec![Vec::with_capacity(cases.len()); members];
    for ((m, _), (f, u)) in jobs.into_iter().zip(results) {
        out[m].push(f);
        if let Some(u) = u {
            ips[m].push(u);
        }
    }
    let keep = keep_inverse_precision && mode == GuidanceMode::Precision;
    Ok(EnsembleRun {
        members: out,
        inverse_precision: keep.then_some(ips),
        member_seeds: (0..members).map(|m| sampler.seed.wrapping_add(m as u64)).collect(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScoreRow {
    pub metric: &'static str,
    pub label: String,
    pub threshold: Option<f64>,
    pub window: Option<usize>,
    pub agg: Option<&'static str>,
    pub ratio: Option<f64>,
    /// 1-based lead frame; `None` for the aggregate over all leads.
    pub lead: Option<usize>,
    pub value: Option<f64>,
}

pub const SCORE_HEADER: &str = "metric,label,threshold,window,agg,ratio,lead,value";

impl ScoreRow {
    pub fn csv(&self) -> String {
        fn opt<T: ToString>(v: &Option<T>) -> String {
            v.as_ref().map(T::to_string).unwrap_or_default()
        }
        format!(
            "{},\"{}\",{},{},{},{},{},{}",
            self.metric,
            self.label,
            opt(&self.threshold),
            opt(&self.window),
            self.agg.unwrap_or(""),
            opt(&self.ratio),
            self.lead.map_or_else(|| "all".to_string(), |l| l.to_string()),
            opt(&self.value),
        )
    }

    /// Key shared by rows of the same metric configuration and lead.
    pub fn key(&self) -> String {
        format!("{}|{}", self.label, self.lead.map_or_else(|| "all".into(), |l| l.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PsdRow {
    pub series: &'static str,
    pub wavenumber: usize,
    pub power: f64,
}

#[derive(Clone, Debug)]
pub struct Evaluation {
    pub rows: Vec<ScoreRow>,
    pub psd: Vec<PsdRow>,
    pub summary: Value,
}

impl Evaluation {
    pub fn scores_csv(&self) -> String {
        let mut s = String::from(SCORE_HEADER);
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.csv());
            s.push('\n');
        }
        s
    }

    pub fn psd_csv(&self) -> String {
        let mut s = String::from("series,wavenumber,power\n");
        for r in &self.psd {
            s.push_str(&format!("{},{},{}\n", r.series, r.wavenumber, r.power));
        }
        s
    }

    pub fn value(&self, label: &str) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.label == label && r.lead.is_none())
            .and_then(|r| r.value)
    }
}

fn frames(f: &Field, lead: Option<usize>) -> Field {
    match lead {
        Some(l) => f.frame_range(l, l + 1),
        None => f.clone(),
    }
}

fn frame_means(field: &Field) -> Vec<f64> {
    (0..field.frames()).map(|l| field.frame_range(l, l + 1).mean()).collect()
}

/// Mean over cases of per-frame means, plus the overall mean.
fn lead_average(per_case: &[Vec<f64>]) -> (Vec<f64>, f64) {
    let leads = per_case[0].len();
    let n = per_case.len() as f64;
    let mut acc = vec![0.0; leads];
    for case in per_case {
        for (a, v) in acc.iter_mut().zip(case) {
            *a += v;
        }
    }
    let per_lead: Vec<f64> = acc.iter().map(|a| a / n).collect();
    let overall = per_lead.iter().sum::<f64>() / leads as f64;
    (per_lead, overall)
}

/// Scores `[case][member]` forecasts against aligned truths.
pub fn evaluate(forecasts: &[Vec<Field>], truths: &[Field], cfg: &EvaluateConfig) -> Result<Evaluation> {
    if forecasts.is_empty() || forecasts.len() != truths.len() {
        return Err(Error::Input(format!(
            "{} forecast cases for {} truths",
            forecasts.len(),
            truths.len()
        )));
    }
    for (members, truth) in forecasts.iter().zip(truths) {
        if members.is_empty() {
            return Err(Error::Input("a case has no members".into()));
        }
        for m in members {
            m.ensure_same_shape(truth)?;
        }
    }
    let shape = truths[0].shape();
    for t in truths {
        t.ensure_shape(shape)?;
    }
    let leads = shape[0];
    let lead_opts: Vec<Option<usize>> = (0..leads).map(Some).chain([None]).collect();
    let mut rows = Vec::new();
    let mut push = |metric: &'static str, label: String, threshold, window, agg, ratio, lead: Option<usize>, value| {
        rows.push(ScoreRow {
            metric,
            label,
            threshold,
            window,
            agg,
            ratio,
            lead: lead.map(|l| l + 1),
            value,
        });
    };

    if cfg.wants(Metric::Crps) {
        let per_case: Vec<Vec<f64>> = forecasts
            .par_iter()
            .zip(truths)
            .map(|(m, t)| crps_ensemble(m, t, cfg.crps_estimator).map(|c| frame_means(&c.field)))
            .collect::<Result<_>>()?;
        let (per_lead, overall) = lead_average(&per_case);
        for (l, v) in per_lead.into_iter().enumerate() {
            push("crps", "crps".into(), None, None, None, None, Some(l), Some(v));
        }
        push("crps", "crps".into(), None, None, None, None, None, Some(overall));
    }

    if cfg.wants(Metric::PooledCrps) {
        for &w in &cfg.pool_windows {
            for &agg in &cfg.pool_aggs {
                let per_case: Vec<Vec<f64>> = forecasts
                    .par_iter()
                    .zip(truths)
                    .map(|(m, t)| {
                        let c = if w == 1 {
                            crps_ensemble(m, t, cfg.crps_estimator)?
                        } else {
                            let pm: Vec<Field> = m.iter().map(|f| pool_field(f, w, agg)).collect::<Result<_>>()?;
                            crps_ensemble(&pm, &pool_field(t, w, agg)?, cfg.crps_estimator)?
                        };
                        Ok(frame_means(&c.field))
                    })
                    .collect::<Result<_>>()?;
                let (per_lead, overall) = lead_average(&per_case);
                let label = format!("pooled_crps(w{w},{})", agg.as_str());
                for (l, v) in per_lead.into_iter().enumerate() {
                    push("pooled_crps", label.clone(), None, Some(w), Some(agg.as_str()), None, Some(l), Some(v));
                }
                push("pooled_crps", label, None, Some(w), Some(agg.as_str()), None, None, Some(overall));
            }
        }
    }

    let wants_categorical = cfg.wants(Metric::Csi) || cfg.wants(Metric::CsiNeighborhood) || cfg.wants(Metric::Fss);
    if wants_categorical {
        for &thr in &cfg.thresholds {
            let fc: Vec<Field> = forecasts
                .iter()
                .map(|m| cfg.event_rule.events(m, thr))
                .collect::<Result<_>>()?;
            let ob: Vec<Field> = truths.iter().map(|t| indicator(t, thr)).collect();
            for &lead in &lead_opts {
                let f: Vec<Field> = fc.iter().map(|x| frames(x, lead)).collect();
                let o: Vec<Field> = ob.iter().map(|x| frames(x, lead)).collect();
                if cfg.wants(Metric::Csi) {
                    let s = csi_neighborhood(&f, &o, 0.5, 1)?;
                    push("csi", format!("csi(t{thr})"), Some(thr), None, None, None, lead, Some(s.score));
                }
                for &w in &cfg.windows {
                    if cfg.wants(Metric::CsiNeighborhood) {
                        let s = csi_neighborhood(&f, &o, 0.5, w)?;
                        push(
                            "csi_neighborhood",
                            format!("csi_neighborhood(w{w},t{thr})"),
                            Some(thr),
                            Some(w),
                            None,
                            None,
                            lead,
                            Some(s.score),
                        );
                    }
                    if cfg.wants(Metric::Fss) {
                        let v = fss(&f, &o, 0.5, w)?;
                        push("fss", format!("fss(w{w},t{thr})"), Some(thr), Some(w), None, None, lead, Some(v));
                    }
                }
            }
        }
    }

    if cfg.wants(Metric::RmseMae) {
        let per_case: Vec<(Vec<f64>, Vec<f64>)> = forecasts
            .par_iter()
            .zip(truths)
            .map(|(m, t)| {
                let s = rmse_mae(&ensemble_mean(m), t)?;
                Ok((
                    s.per_lead.iter().map(|l| l.rmse * l.rmse).collect(),
                    s.per_lead.iter().map(|l| l.mae).collect(),
                ))
            })
            .collect::<Result<_>>()?;
        let (mse, mse_all) = lead_average(&per_case.iter().map(|p| p.0.clone()).collect::<Vec<_>>());
        let (mae, mae_all) = lead_average(&per_case.iter().map(|p| p.1.clone()).collect::<Vec<_>>());
        for l in 0..leads {
            push("rmse", "rmse".into(), None, None, None, None, Some(l), Some(mse[l].sqrt()));
            push("mae", "mae".into(), None, None, None, None, Some(l), Some(mae[l]));
        }
        push("rmse", "rmse".into(), None, None, None, None, None, Some(mse_all.sqrt()));
        push("mae", "mae".into(), None, None, None, None, None, Some(mae_all));
    }

    let mut value_tables = BTreeMap::new();
    if cfg.wants(Metric::EconomicValue) {
        for &thr in &cfg.thresholds {
            let ev = economic_value(forecasts, truths, thr, &cfg.cost_loss_ratios, cfg.value_rule)?;
            for (&r, &v) in ev.ratios.iter().zip(&ev.values) {
                push(
                    "economic_value",
                    format!("economic_value(t{thr},r{r})"),
                    Some(thr),
                    None,
                    None,
                    Some(r),
                    None,
                    v,
                );
            }
            value_tables.insert(format!("t{thr}"), ev.table);
        }
    }

    let mut psd = Vec::new();
    if cfg.wants(Metric::Psd) {
        let (h, w) = (shape[2], shape[3]);
        let mut add_series = |series: &'static str, fields: Vec<&Field>| -> Result<()> {
            let mut acc: Vec<f64> = Vec::new();
            let mut n = 0usize;
            for f in fields {
                for p in 0..f.plane_count() {
                    let bins = psd_radial(f.plane(p), h, w)?;
                    if acc.is_empty() {
                        acc = vec![0.0; bins.len()];
                    }
                    for (a, b) in acc.iter_mut().zip(&bins) {
                        *a += b.power;
                    }
                    n += 1;
                }
            }
            for (k, a) in acc.into_iter().enumerate() {
                psd.push(PsdRow {
                    series,
                    wavenumber: k,
                    power: a / n as f64,
                });
            }
            Ok(())
        };
        add_series("forecast", forecasts.iter().flatten().collect())?;
        add_series("truth", truths.iter().collect())?;
    }

    let aggregate: BTreeMap<String, Option<f64>> = rows
        .iter()
        .filter(|r| r.lead.is_none())
        .map(|r| (r.label.clone(), r.value))
        .collect();
    let summary = json!({
        "cases": truths.len(),
        "members": forecasts[0].len(),
        "leads": leads,
        "scores": aggregate,
        "crps_estimator": cfg.crps_estimator,
        "event_rule": cfg.event_rule.describe(),
        "economic_value": {
            "decision_rule": cfg.value_rule.describe(),
            "formula": VALUE_FORMULA,
            "tables": value_tables,
        },
    });
    Ok(Evaluation { rows, psd, summary })
}

/// Rejects pooling windows and spectra that do not fit an `h × w` grid.
pub fn check_pool_windows(cfg: &EvaluateConfig, h: usize, w: usize) -> Result<()> {
    if cfg.wants(Metric::PooledCrps) {
        if let Some(win) = cfg.pool_windows.iter().find(|&&win| win > h.min(w)) {
            return Err(Error::config(
                "evaluate.pool_windows",
                format!("window {win} does not fit the {h}x{w} grid"),
            ));
        }
    }
    if cfg.wants(Metric::Psd) && (h < 4 || w < 4) {
        return Err(Error::config("evaluate.metrics", "psd needs grids of at least 4x4"));
    }
    Ok(())
}
