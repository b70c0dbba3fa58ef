//! The `cogdpm` command line: gen-data, train, forecast, evaluate, ablate
//! and inspect. Every command that writes files finishes with a
//! `manifest.json` listing them with their digests.

pub mod config;
pub mod pipeline;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use self::config::{Metric, RunConfig};
use self::pipeline::{
    cases_from, check_pool_windows, evaluate, forecast_cases, generate, training_pairs, Evaluation, LoadedModel,
};
use crate::datagen::GriddedSequence;
use crate::denoiser::{initial_weights, Architecture, Trainer};
use crate::error::{Error, Result};
use crate::io::{read_file, unframe, Checkpoint, FileRecord, GridFile, OutputSet, CHECKPOINT_MAGIC, GRID_MAGIC};
use crate::sampler::{population_variance, GuidanceMode};
use crate::tensor::Field;

#[derive(Debug, Parser)]
#[command(name = "cogdpm", version, about = "Precision-weighted diffusion forecasting")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset and write train/val/test grid files.
    GenData {
        #[command(flatten)]
        common: Common,
    },
    /// Train the convolutional denoiser on a dataset grid file.
    Train {
        #[command(flatten)]
        common: Common,
        /// Training grid file.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Sample ensemble forecasts for every case of a grid file.
    Forecast {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        model: ModelArgs,
        /// Grid file whose leading context frames condition the forecasts.
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        sampling: SamplingArgs,
    },
    /// Score forecast grid files against the target frames of a truth file.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// One grid file per ensemble member.
        #[arg(long = "forecast", required = true, num_args = 1..)]
        forecasts: Vec<PathBuf>,
        #[arg(long)]
        truth: PathBuf,
        #[command(flatten)]
        metrics: MetricArgs,
    },
    /// Forecast and evaluate several sampler variants side by side.
    Ablate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        model: ModelArgs,
        /// Test grid file (context plus target frames).
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        sampling: SamplingArgs,
        #[command(flatten)]
        metrics: MetricArgs,
    },
    /// Print the header of a grid file or checkpoint.
    Inspect { file: PathBuf },
}

#[derive(Debug, Args)]
pub struct Common {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the master seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Record wall-clock duration in the manifest.
    #[arg(long)]
    pub timing: bool,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Trained checkpoint; without it the `[oracle]` config section is used.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SamplingArgs {
    #[arg(long)]
    pub members: Option<usize>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub queue: Option<usize>,
    /// Add the √β·z noise term between reverse steps.
    #[arg(long)]
    pub stochastic: bool,
    /// Use constant guidance with this scale instead of precision weighting.
    #[arg(long)]
    pub guidance_scale: Option<f64>,
}

#[derive(Debug, Args)]
pub struct MetricArgs {
    #[arg(long, value_delimiter = ',')]
    pub metrics: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',')]
    pub windows: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    pub thresholds: Option<Vec<f64>>,
}

fn load_config(common: &Common) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(common.config.as_deref())?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    Ok(cfg.resolve())
}

impl SamplingArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        if let Some(m) = self.members {
            cfg.forecast.members = m;
        }
        if let Some(l) = self.lambda {
            cfg.sampler.lambda = l;
        }
        if let Some(q) = self.queue {
            cfg.sampler.queue_capacity = q;
        }
        if self.stochastic {
            cfg.sampler.stochastic_step = true;
        }
        if let Some(scale) = self.guidance_scale {
            cfg.forecast.guidance = GuidanceMode::Constant { scale };
        }
    }
}

impl MetricArgs {
    fn apply(&self, cfg: &mut RunConfig) -> Result<()> {
        if let Some(ms) = &self.metrics {
            cfg.evaluate.metrics = ms.iter().map(|m| Metric::parse(m)).collect::<Result<_>>()?;
        }
        if let Some(w) = &self.windows {
            cfg.evaluate.windows = w.clone();
        }
        if let Some(t) = &self.thresholds {
            cfg.evaluate.thresholds = t.clone();
        }
        Ok(())
    }
}

struct Timer(Instant, bool);

impl Timer {
    fn start(enabled: bool) -> Self {
        Timer(Instant::now(), enabled)
    }

    fn finish(&self) -> Option<f64> {
        self.1.then(|| self.0.elapsed().as_secs_f64())
    }
}

fn load_model(cfg: &RunConfig, args: &ModelArgs) -> Result<(LoadedModel, Vec<FileRecord>)> {
    match &args.checkpoint {
        Some(path) => {
            let ck = Checkpoint::read(path)?;
            Ok((LoadedModel::from_checkpoint(ck)?, vec![FileRecord::input(path)?]))
        }
        None => {
            let Some(oracle) = &cfg.oracle else {
                return Err(Error::config("oracle", "pass --checkpoint or configure an [oracle] section"));
            };
            let sched = cfg.schedule.build().map_err(|e| Error::config("schedule", e.to_string()))?;
            Ok((LoadedModel::from_oracle(oracle.build()?, sched), vec![]))
        }
    }
}

fn horizon_for(cfg: &RunConfig, file: &GridFile) -> Result<usize> {
    let available = file.header.shape[1] - file.header.context_frames;
    match cfg.forecast.horizon {
        Some(h) => Ok(h),
        None if available > 0 => Ok(available),
        None => Err(Error::config("forecast.horizon", "input has no target frames; set a horizon")),
    }
}

fn cmd_gen_data(common: &Common) -> Result<String> {
    let timer = Timer::start(common.timing);
    let cfg = load_config(common)?;
    let splits = generate(&cfg)?;
    let config = cfg.to_json();
    let task = match cfg.data.task {
        config::Task::Glyph => "glyph",
        config::Task::Flow => "flow",
    };
    let mut out = OutputSet::new(&common.out_dir);
    let mut written = Vec::new();
    for (name, seqs) in [("train", &splits.train), ("val", &splits.val), ("test", &splits.test)] {
        if seqs.is_empty() {
            continue;
        }
        let meta = dataset_metadata(task, name, seqs);
        let grid = GridFile::from_sequences(seqs, meta, config["data"].clone())?;
        out.write(&format!("{name}.grd"), &grid.encode())?;
        written.push(format!("{name}: {}", seqs.len()));
    }
    out.finish("gen-data", cfg.seed, config, vec![], timer.finish())?;
    Ok(format!("wrote {} to {}", written.join(", "), common.out_dir.display()))
}

fn dataset_metadata(task: &str, split: &str, seqs: &[GriddedSequence]) -> Value {
    json!({
        "task": task,
        "split": split,
        "sample_seeds": seqs.iter().map(|s| s.seed).collect::<Vec<_>>(),
    })
}

fn cmd_train(common: &Common, data: &Path, steps: Option<usize>) -> Result<String> {
    let timer = Timer::start(common.timing);
    let mut cfg = load_config(common)?;
    if let Some(s) = steps {
        cfg.train.optimizer.steps = s;
    }
    cfg.validate_model()?;
    let file = GridFile::read(data)?;
    let inputs = vec![FileRecord::input(data)?];
    let pairs = training_pairs(&file)?;
    let [_, frames, channels, _, _] = file.header.shape;
    let ctx = file.header.context_frames;
    let arch = Architecture::desk(frames - ctx, ctx, channels, cfg.model.hidden);
    let sched = cfg.schedule.build()?;
    let opt = cfg.train.optimizer.clone();
    let mut trainer = Trainer::new(&pairs, &sched, opt.clone(), initial_weights(arch, &opt)?)?;

    let mut out = OutputSet::new(&common.out_dir);
    let mut losses = String::from("step,loss\n");
    let mut failure = None;
    for step in 1..=opt.steps {
        match trainer.step() {
            Ok(loss) => losses.push_str(&format!("{step},{loss}\n")),
            Err(e) => {
                failure = Some(e);
                break;
            }
        }
        let every = cfg.train.checkpoint_every;
        if every > 0 && step % every == 0 && step < opt.steps {
            let ck = Checkpoint {
                weights: trainer.weights().clone(),
                schedule: sched.clone(),
                train: opt.clone(),
                step,
            };
            out.write(&format!("checkpoints/step-{step:07}.ckpt"), &ck.encode())?;
        }
    }
    let done = trainer.steps_done();
    let ck = Checkpoint {
        weights: trainer.into_weights(),
        schedule: sched,
        train: opt,
        step: done,
    };
    out.write("checkpoint.ckpt", &ck.encode())?;
    out.write("losses.csv", losses.as_bytes())?;
    out.finish("train", cfg.seed, cfg.to_json(), inputs, timer.finish())?;
    match failure {
        Some(e) => Err(e),
        None => Ok(format!(
            "trained {done} steps ({} parameters), checkpoint in {}",
            ck.weights.parameter_count(),
            common.out_dir.display()
        )),
    }
}

fn forecast_grid(fields: &[Field], ids: &[u64], interval: f64, member: usize, member_seed: u64, what: &str) -> Result<GridFile> {
    GridFile::from_fields(
        fields,
        ids.to_vec(),
        interval,
        0,
        json!({"kind": what, "member": member}),
        json!({"member_seed": member_seed}),
    )
}

fn cmd_forecast(common: &Common, model_args: &ModelArgs, input: &Path, sampling: &SamplingArgs) -> Result<String> {
    let timer = Timer::start(common.timing);
    let mut cfg = load_config(common)?;
    sampling.apply(&mut cfg);
    cfg.validate_sampling()?;
    let (model, mut inputs) = load_model(&cfg, model_args)?;
    let file = GridFile::read(input)?;
    inputs.push(FileRecord::input(input)?);
    let cases = cases_from(&file, cfg.forecast.max_cases)?;
    let horizon = horizon_for(&cfg, &file)?;
    let f = &cfg.forecast;
    let run = forecast_cases(&model, &cases, horizon, &cfg.sampler, f.guidance, f.members, f.keep_inverse_precision)?;

    let ids: Vec<u64> = cases.iter().map(|c| c.id).collect();
    let interval = file.header.frame_interval;
    let mut out = OutputSet::new(&common.out_dir);
    for (m, fields) in run.members.iter().enumerate() {
        let g = forecast_grid(fields, &ids, interval, m, run.member_seeds[m], "forecast")?;
        out.write(&format!("member_{m:03}.grd"), &g.encode())?;
    }
    if let Some(ips) = &run.inverse_precision {
        for (m, fields) in ips.iter().enumerate() {
            let g = forecast_grid(fields, &ids, interval, m, run.member_seeds[m], "inverse_precision")?;
            out.write(&format!("inverse_precision_{m:03}.grd"), &g.encode())?;
        }
    }
    if f.mc_precision {
        let var: Vec<Field> = run
            .by_case()
            .iter()
            .map(|members| population_variance(members))
            .collect::<Result<_>>()?;
        let g = GridFile::from_fields(
            &var,
            ids.clone(),
            interval,
            0,
            json!({"kind": "mc_precision", "members": f.members}),
            json!({"seed": cfg.sampler.seed}),
        )?;
        out.write("mc_precision.grd", &g.encode())?;
    }
    let mut config = cfg.to_json();
    config["model_source"] = model.source.clone();
    out.finish("forecast", cfg.seed, config, inputs, timer.finish())?;
    Ok(format!(
        "forecast {} cases x {} members, horizon {horizon}, into {}",
        cases.len(),
        f.members,
        common.out_dir.display()
    ))
}

/// Target frames of `truth` aligned to `ids`; unmatched ids are listed.
fn aligned_truths(truth: &GridFile, ids: &[u64]) -> Result<Vec<Field>> {
    let cf = truth.header.context_frames;
    let frames = truth.header.shape[1];
    let missing: Vec<u64> = ids
        .iter()
        .filter(|id| !truth.header.sample_ids.contains(id))
        .copied()
        .collect();
    if !missing.is_empty() {
        return Err(Error::Input(format!("case ids without truth: {missing:?}")));
    }
    Ok(ids
        .iter()
        .map(|id| {
            let i = truth.header.sample_ids.iter().position(|x| x == id).unwrap();
            truth.sample(i).frame_range(cf, frames)
        })
        .collect())
}

fn write_evaluation(out: &mut OutputSet, eval: &Evaluation) -> Result<()> {
    out.write("scores.csv", eval.scores_csv().as_bytes())?;
    let mut summary = serde_json::to_string_pretty(&eval.summary).expect("serializable");
    summary.push('\n');
    out.write("summary.json", summary.as_bytes())?;
    if !eval.psd.is_empty() {
        out.write("psd.csv", eval.psd_csv().as_bytes())?;
    }
    Ok(())
}

fn cmd_evaluate(common: &Common, forecasts: &[PathBuf], truth: &Path, metrics: &MetricArgs) -> Result<String> {
    let timer = Timer::start(common.timing);
    let mut cfg = load_config(common)?;
    metrics.apply(&mut cfg)?;
    cfg.validate_evaluate()?;
    let members: Vec<GridFile> = forecasts.iter().map(|p| GridFile::read(p)).collect::<Result<_>>()?;
    let truth_file = GridFile::read(truth)?;
    let mut inputs: Vec<FileRecord> = forecasts.iter().map(|p| FileRecord::input(p)).collect::<Result<_>>()?;
    inputs.push(FileRecord::input(truth)?);

    let ids = members[0].header.sample_ids.clone();
    for (p, m) in forecasts.iter().zip(&members) {
        if m.header.sample_ids != ids {
            let unmatched: Vec<u64> = m
                .header
                .sample_ids
                .iter()
                .filter(|i| !ids.contains(i))
                .chain(ids.iter().filter(|i| !m.header.sample_ids.contains(i)))
                .copied()
                .collect();
            return Err(Error::Input(format!(
                "{} has different case ids; unmatched: {unmatched:?}",
                p.display()
            )));
        }
    }
    let truths = aligned_truths(&truth_file, &ids)?;
    let by_case: Vec<Vec<Field>> = (0..ids.len())
        .map(|c| members.iter().map(|m| m.sample(c)).collect())
        .collect();
    let [_, _, h, w] = truths[0].shape();
    check_pool_windows(&cfg.evaluate, h, w)?;
    let eval = evaluate(&by_case, &truths, &cfg.evaluate)?;

    let mut out = OutputSet::new(&common.out_dir);
    write_evaluation(&mut out, &eval)?;
    out.finish("evaluate", cfg.seed, cfg.to_json(), inputs, timer.finish())?;
    Ok(format!("scored {} cases x {} members into {}", ids.len(), members.len(), common.out_dir.display()))
}

fn cmd_ablate(
    common: &Common,
    model_args: &ModelArgs,
    input: &Path,
    sampling: &SamplingArgs,
    metrics: &MetricArgs,
) -> Result<String> {
    let timer = Timer::start(common.timing);
    let mut cfg = load_config(common)?;
    sampling.apply(&mut cfg);
    metrics.apply(&mut cfg)?;
    cfg.validate_sampling()?;
    cfg.validate_evaluate()?;
    cfg.validate_ablate()?;
    let (model, mut inputs) = load_model(&cfg, model_args)?;
    let file = GridFile::read(input)?;
    inputs.push(FileRecord::input(input)?);
    let cases = cases_from(&file, cfg.forecast.max_cases)?;
    let horizon = horizon_for(&cfg, &file)?;
    let ids: Vec<u64> = cases.iter().map(|c| c.id).collect();
    let truths = aligned_truths(&file, &ids)?;
    if truths[0].frames() != horizon {
        return Err(Error::config("forecast.horizon", "must match the target frames of the input"));
    }
    let [_, _, h, w] = truths[0].shape();
    check_pool_windows(&cfg.evaluate, h, w)?;

    let mut evals = Vec::new();
    for v in &cfg.ablate.variants {
        let sampler = v.sampler(&cfg.sampler);
        let run = forecast_cases(&model, &cases, horizon, &sampler, v.guidance, cfg.forecast.members, false)?;
        evals.push(evaluate(&run.by_case(), &truths, &cfg.evaluate)?);
    }

    let names: Vec<&str> = cfg.ablate.variants.iter().map(|v| v.name.as_str()).collect();
    let mut csv = format!("metric,label,lead,{}\n", names.join(","));
    for (i, row) in evals[0].rows.iter().enumerate() {
        let lead = row.lead.map_or_else(|| "all".into(), |l| l.to_string());
        let values: Vec<String> = evals
            .iter()
            .map(|e| e.rows[i].value.map(|v| v.to_string()).unwrap_or_default())
            .collect();
        csv.push_str(&format!("{},\"{}\",{lead},{}\n", row.metric, row.label, values.join(",")));
    }
    let mut out = OutputSet::new(&common.out_dir);
    out.write("ablation.csv", csv.as_bytes())?;
    let mut config = cfg.to_json();
    config["model_source"] = model.source.clone();
    out.finish("ablate", cfg.seed, config, inputs, timer.finish())?;
    Ok(format!("compared {} variants on {} cases into {}", names.len(), ids.len(), common.out_dir.display()))
}

fn cmd_inspect(path: &Path) -> Result<String> {
    let bytes = read_file(path)?;
    let magic = if bytes.starts_with(GRID_MAGIC) { GRID_MAGIC } else { CHECKPOINT_MAGIC };
    let (header, payload) = unframe(magic, &bytes, path)?;
    let mut value: Value = serde_json::from_slice(header).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    if let Some(obj) = value.as_object_mut() {
        obj.remove("betas");
        obj.insert("payload_bytes".into(), json!(payload.len()));
        obj.insert("format".into(), json!(String::from_utf8_lossy(magic)));
    }
    Ok(serde_json::to_string_pretty(&value).expect("serializable"))
}

pub fn execute(cli: &Cli) -> Result<String> {
    match &cli.command {
        Command::GenData { common } => cmd_gen_data(common),
        Command::Train { common, data, steps } => cmd_train(common, data, *steps),
        Command::Forecast {
            common,
            model,
            input,
            sampling,
        } => cmd_forecast(common, model, input, sampling),
        Command::Evaluate {
            common,
            forecasts,
            truth,
            metrics,
        } => cmd_evaluate(common, forecasts, truth, metrics),
        Command::Ablate {
            common,
            model,
            input,
            sampling,
            metrics,
        } => cmd_ablate(common, model, input, sampling, metrics),
        Command::Inspect { file } => cmd_inspect(file),
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(msg) => {
            let _ = writeln!(std::io::stdout(), "{msg}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
