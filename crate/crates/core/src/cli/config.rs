//! Run configuration, read from TOML and echoed fully resolved into every
//! manifest.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::datagen::{FlowTaskConfig, GlyphTaskConfig};
use crate::denoiser::{GaussianOracle, PriorMean, TrainConfig};
use crate::error::{Error, Result};
use crate::io::read_file;
use crate::metrics::{CrpsEstimator, EventRule, PoolAgg};
use crate::sampler::{GuidanceMode, SamplerConfig};
use crate::schedule::{ScheduleSpec, DEFAULT_COSINE_OFFSET};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Glyph,
    Flow,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub task: Task,
    pub count: usize,
    /// Train, validation and test fractions.
    pub fractions: [f64; 3],
    pub glyph: GlyphTaskConfig,
    pub flow: FlowTaskConfig,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            task: Task::Glyph,
            count: 100,
            fractions: [0.8, 0.1, 0.1],
            glyph: GlyphTaskConfig::default(),
            flow: FlowTaskConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Width of the hidden convolution layers.
    pub hidden: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig { hidden: 16 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub optimizer: TrainConfig,
    /// Write an intermediate checkpoint every this many steps; 0 disables.
    pub checkpoint_every: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            optimizer: TrainConfig::default(),
            checkpoint_every: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForecastConfig {
    pub members: usize,
    pub guidance: GuidanceMode,
    /// Forecast length; `None` uses the target frames of the input file.
    pub horizon: Option<usize>,
    /// Only the first `max_cases` samples of the input are forecast.
    pub max_cases: Option<usize>,
    /// Write each member's final-step inverse-precision field.
    pub keep_inverse_precision: bool,
    /// Write the across-member variance (needs at least two members).
    pub mc_precision: bool,
}

impl Default for ForecastConfig {
    fn default() -> Self {
        ForecastConfig {
            members: 4,
            guidance: GuidanceMode::Precision,
            horizon: None,
            max_cases: None,
            keep_inverse_precision: false,
            mc_precision: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleConfig {
    pub prior_var: f64,
    pub global_mean: f64,
    pub prior: PriorMean,
}

impl OracleConfig {
    pub fn build(&self) -> Result<GaussianOracle> {
        GaussianOracle::new(self.prior_var, self.global_mean, self.prior)
            .map_err(|e| Error::config("oracle.prior_var", e.to_string()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Crps,
    PooledCrps,
    Csi,
    CsiNeighborhood,
    Fss,
    Psd,
    EconomicValue,
    RmseMae,
}

impl Metric {
    pub const ALL: [Metric; 8] = [
        Metric::Crps,
        Metric::PooledCrps,
        Metric::Csi,
        Metric::CsiNeighborhood,
        Metric::Fss,
        Metric::Psd,
        Metric::EconomicValue,
        Metric::RmseMae,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Crps => "crps",
            Metric::PooledCrps => "pooled_crps",
            Metric::Csi => "csi",
            Metric::CsiNeighborhood => "csi_neighborhood",
            Metric::Fss => "fss",
            Metric::Psd => "psd",
            Metric::EconomicValue => "economic_value",
            Metric::RmseMae => "rmse_mae",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Metric::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::config("evaluate.metrics", format!("unknown metric `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateConfig {
    pub metrics: Vec<Metric>,
    pub thresholds: Vec<f64>,
    /// Window sides for neighborhood CSI and FSS.
    pub windows: Vec<usize>,
    /// Block sides for pooled CRPS.
    pub pool_windows: Vec<usize>,
    pub pool_aggs: Vec<PoolAgg>,
    pub crps_estimator: CrpsEstimator,
    /// Binarization of the ensemble for CSI and FSS.
    pub event_rule: EventRule,
    /// Binarization of the ensemble for the economic value.
    pub value_rule: EventRule,
    pub cost_loss_ratios: Vec<f64>,
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        EvaluateConfig {
            metrics: Metric::ALL.to_vec(),
            thresholds: vec![0.5],
            windows: vec![1, 5],
            pool_windows: vec![4],
            pool_aggs: vec![PoolAgg::Avg, PoolAgg::Max],
            crps_estimator: CrpsEstimator::Empirical,
            event_rule: EventRule::EnsembleMean,
            value_rule: EventRule::AnyMember,
            cost_loss_ratios: (1..10).map(|i| i as f64 / 10.0).collect(),
        }
    }
}

impl EvaluateConfig {
    pub fn wants(&self, m: Metric) -> bool {
        self.metrics.contains(&m)
    }
}

/// One sampler variant of an ablation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AblationVariant {
    pub name: String,
    pub guidance: GuidanceMode,
    pub lambda: Option<f64>,
    pub queue_capacity: Option<usize>,
    pub stochastic_step: Option<bool>,
}

impl AblationVariant {
    pub fn sampler(&self, base: &SamplerConfig) -> SamplerConfig {
        SamplerConfig {
            lambda: self.lambda.unwrap_or(base.lambda),
            queue_capacity: self.queue_capacity.unwrap_or(base.queue_capacity),
            stochastic_step: self.stochastic_step.unwrap_or(base.stochastic_step),
            ..base.clone()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblateConfig {
    pub variants: Vec<AblationVariant>,
}

impl Default for AblateConfig {
    fn default() -> Self {
        AblateConfig {
            variants: vec![
                AblationVariant {
                    name: "cogdpm".into(),
                    guidance: GuidanceMode::Precision,
                    lambda: None,
                    queue_capacity: None,
                    stochastic_step: None,
                },
                AblationVariant {
                    name: "constant".into(),
                    guidance: GuidanceMode::Constant { scale: 1.0 },
                    lambda: None,
                    queue_capacity: None,
                    stochastic_step: None,
                },
            ],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed. It is copied into the data, training and sampler sections
    /// when the config is resolved.
    pub seed: u64,
    pub data: DataConfig,
    pub schedule: ScheduleSpec,
    pub model: ModelConfig,
    pub train: TrainSection,
    pub sampler: SamplerConfig,
    pub forecast: ForecastConfig,
    pub oracle: Option<OracleConfig>,
    pub evaluate: EvaluateConfig,
    pub ablate: AblateConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            data: DataConfig::default(),
            schedule: ScheduleSpec::Cosine {
                steps: 200,
                s_offset: DEFAULT_COSINE_OFFSET,
            },
            model: ModelConfig::default(),
            train: TrainSection::default(),
            sampler: SamplerConfig::default(),
            forecast: ForecastConfig::default(),
            oracle: None,
            evaluate: EvaluateConfig::default(),
            ablate: AblateConfig::default(),
        }
    }
}

fn nested(prefix: &str, e: Error) -> Error {
    match e {
        Error::Config { path, message } => Error::config(format!("{prefix}{path}"), message),
        other => other,
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let path = e.span().map(|s| format!("byte {}", s.start)).unwrap_or_default();
            Error::config(path, e.message().to_string())
        })
    }

    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(RunConfig::default()),
            Some(p) => {
                let bytes = read_file(p)?;
                let text = String::from_utf8(bytes).map_err(|_| Error::Format {
                    path: p.to_path_buf(),
                    message: "config is not UTF-8".into(),
                })?;
                RunConfig::parse(&text)
            }
        }
    }

    /// Propagates the master seed into every section.
    pub fn resolve(mut self) -> Self {
        self.data.glyph.seed = self.seed;
        self.data.flow.seed = self.seed;
        self.train.optimizer.seed = self.seed;
        self.sampler.seed = self.seed;
        self
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }

    pub fn validate_data(&self) -> Result<()> {
        let d = &self.data;
        if d.count == 0 {
            return Err(Error::config("data.count", "must be >= 1"));
        }
        if d.fractions.iter().any(|f| !(0.0..=1.0).contains(f)) {
            return Err(Error::config("data.fractions", "each fraction must lie in [0, 1]"));
        }
        let sum: f64 = d.fractions.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::config("data.fractions", format!("must sum to 1, got {sum}")));
        }
        match d.task {
            Task::Glyph => d.glyph.validate().map_err(|e| nested("data.", e)),
            Task::Flow => d.flow.validate().map_err(|e| nested("data.", e)),
        }
    }

    pub fn validate_model(&self) -> Result<()> {
        if let ScheduleSpec::Explicit = self.schedule {
            return Err(Error::config("schedule.kind", "explicit schedules come from checkpoints only"));
        }
        self.schedule.build().map_err(|e| Error::config("schedule", e.to_string()))?;
        if self.model.hidden == 0 {
            return Err(Error::config("model.hidden", "must be >= 1"));
        }
        self.train.optimizer.validate()
    }

    pub fn validate_sampling(&self) -> Result<()> {
        self.sampler.validate()?;
        if self.forecast.members == 0 {
            return Err(Error::config("forecast.members", "must be >= 1"));
        }
        if self.forecast.mc_precision && self.forecast.members < 2 {
            return Err(Error::config("forecast.mc_precision", "needs members >= 2"));
        }
        if self.forecast.horizon == Some(0) {
            return Err(Error::config("forecast.horizon", "must be >= 1"));
        }
        if let GuidanceMode::Constant { scale } = self.forecast.guidance {
            if !scale.is_finite() {
                return Err(Error::config("forecast.guidance.scale", "must be finite"));
            }
        }
        if let Some(o) = &self.oracle {
            o.build()?;
        }
        Ok(())
    }

    pub fn validate_evaluate(&self) -> Result<()> {
        let e = &self.evaluate;
        if e.metrics.is_empty() {
            return Err(Error::config("evaluate.metrics", "at least one metric is required"));
        }
        if e.thresholds.is_empty() || e.thresholds.iter().any(|t| !t.is_finite()) {
            return Err(Error::config("evaluate.thresholds", "need at least one finite threshold"));
        }
        if let Some(w) = e.windows.iter().find(|w| **w == 0 || **w % 2 == 0) {
            return Err(Error::config("evaluate.windows", format!("window {w} must be odd and >= 1")));
        }
        if e.pool_windows.contains(&0) {
            return Err(Error::config("evaluate.pool_windows", "must be >= 1"));
        }
        if let Some(r) = e.cost_loss_ratios.iter().find(|r| !(**r > 0.0 && **r < 1.0)) {
            return Err(Error::config("evaluate.cost_loss_ratios", format!("{r} outside (0, 1)")));
        }
        for (name, rule) in [("evaluate.event_rule", e.event_rule), ("evaluate.value_rule", e.value_rule)] {
            if let EventRule::MemberFraction { min_fraction } = rule {
                if !(0.0..=1.0).contains(&min_fraction) {
                    return Err(Error::config(name, "min_fraction must lie in [0, 1]"));
                }
            }
        }
        Ok(())
    }

    pub fn validate_ablate(&self) -> Result<()> {
        let v = &self.ablate.variants;
        if v.len() < 2 {
            return Err(Error::config("ablate.variants", "need at least two sampler variants"));
        }
        for (i, a) in v.iter().enumerate() {
            if v[..i].iter().any(|b| b.name == a.name) {
                return Err(Error::config(format!("ablate.variants[{i}].name"), "duplicate name"));
            }
            a.sampler(&self.sampler)
                .validate()
                .map_err(|e| nested(&format!("ablate.variants[{i}]."), e))?;
        }
        Ok(())
    }
}
