//! Command-line front end: `generate`, `detect`, `eval` and `replica`.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::baselines::{DecimatedDetector, DecimationConfig, FixedThresholdConfig, FixedThresholdDetector};
use crate::envsim::{generate, GroundTruth, PhaseRange, ScenarioConfig, PRNG_ID};
use crate::eval::{MetricsReport, ReportInputs, TrafficParams};
use crate::io::{self, EventRow};
use crate::noisefloor::{TrackerMode, DEFAULT_EMA_ALPHA};
use crate::pipeline::{latency_budget, MemoryFootprint, Pipeline, PipelineConfig, ProcessingTimes};
use crate::report::{self, ResourceReport, RunReport, SeriesRow, TimingReport};
use crate::spectral::{magnitude, FftPlan, Frame};

pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FixedBaselineSettings {
    /// Explicit per-bin thresholds; calibrated when absent.
    pub thresholds: Option<Vec<f64>>,
    /// Frames used for calibration; the first scenario phase when absent.
    pub calibration_frames: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselinesConfig {
    pub fixed: FixedBaselineSettings,
    pub decimated: DecimationConfig,
}

/// Everything a run needs; every section is optional in TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: ScenarioConfig,
    pub pipeline: PipelineConfig,
    pub baselines: BaselinesConfig,
    pub traffic: TrafficParams,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            scenario: ScenarioConfig::replica(DEFAULT_SEED),
            pipeline: PipelineConfig::default(),
            baselines: BaselinesConfig::default(),
            traffic: TrafficParams::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    /// Checks the scenario and pipeline agree on frame layout.
    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        self.pipeline.validate()?;
        self.baselines.decimated.validate()?;
        let f = &self.scenario.frame;
        ensure!(
            f.frame_size == self.pipeline.frame_size,
            "scenario frame size {} differs from pipeline frame size {}",
            f.frame_size,
            self.pipeline.frame_size
        );
        ensure!(
            f.sample_rate_hz == self.pipeline.sample_rate_hz,
            "scenario sample rate {} differs from pipeline sample rate {}",
            f.sample_rate_hz,
            self.pipeline.sample_rate_hz
        );
        Ok(())
    }

    /// Scenario phases when they cover `frame_count` frames, otherwise one phase.
    pub fn phases_for(&self, frame_count: u64) -> Vec<PhaseRange> {
        if self.scenario.total_frames() as u64 == frame_count {
            self.scenario.phase_ranges()
        } else {
            vec![PhaseRange {
                name: "all".into(),
                start: 0,
                end: frame_count,
            }]
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectorKind {
    Proposed,
    Fixed,
    Decimated,
}

impl DetectorKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Proposed => "proposed",
            Self::Fixed => "fixed",
            Self::Decimated => "decimated",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TrackerChoice {
    Median,
    Ema,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum OutputFormat {
    #[default]
    Json,
    Csv,
}

#[derive(Debug, Parser)]
#[command(
    name = "edge-trigger",
    version,
    about = "Spectral noise-floor tracking and event triggering"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthesize a scenario into frames.bin and truth.csv.
    Generate(GenerateArgs),
    /// Run a detector over a frame file.
    Detect(DetectArgs),
    /// Score an events file against ground truth.
    Eval(EvalArgs),
    /// Generate, detect and score the reference scenario in one go.
    Replica(ReplicaArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// TOML experiment configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct DetectorArgs {
    #[arg(long, value_enum, default_value_t = DetectorKind::Proposed)]
    pub detector: DetectorKind,
    /// Overrides the pipeline tracker.
    #[arg(long, value_enum)]
    pub tracker: Option<TrackerChoice>,
    #[arg(long, value_enum, default_value_t = OutputFormat::Json)]
    pub format: OutputFormat,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub detector: DetectorArgs,
    #[arg(long)]
    pub frames: PathBuf,
    /// Scores the run when given.
    #[arg(long)]
    pub truth: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub events: PathBuf,
    #[arg(long)]
    pub truth: PathBuf,
    /// Frame file supplying the frame count; the scenario length otherwise.
    #[arg(long)]
    pub frames: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = OutputFormat::Json)]
    pub format: OutputFormat,
}

#[derive(Debug, Args)]
pub struct ReplicaArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub detector: DetectorArgs,
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Detector output over a whole stream.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorRun {
    pub series: Vec<SeriesRow>,
    pub events: Vec<EventRow>,
    /// Bin-averaged threshold per frame, for detectors with spectral thresholds.
    pub threshold_series: Option<Vec<f64>>,
    pub processing_s: f64,
}

impl DetectorRun {
    pub fn event_frames(&self) -> Vec<u64> {
        self.events.iter().map(|e| e.frame).collect()
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn check_frames(cfg: &PipelineConfig, frames: &[Frame]) -> Result<()> {
    for f in frames {
        ensure!(
            f.len() == cfg.frame_size,
            "frame {} has {} samples but the pipeline expects {}",
            f.frame_index(),
            f.len(),
            cfg.frame_size
        );
    }
    Ok(())
}

/// Runs one detector over `frames`.
pub fn run_detector(cfg: &ExperimentConfig, kind: DetectorKind, frames: &[Frame]) -> Result<DetectorRun> {
    check_frames(&cfg.pipeline, frames)?;
    let started = Instant::now();
    let run = match kind {
        DetectorKind::Proposed => {
            let mut pipeline = Pipeline::new(cfg.pipeline.clone())?;
            let results = pipeline.run_stream(frames)?;
            let processing_s = started.elapsed().as_secs_f64();
            let events = results
                .iter()
                .filter_map(|r| r.event_record.as_ref().map(|e| EventRow::new(r.frame_index, e)))
                .collect::<Result<Vec<_>, _>>()?;
            DetectorRun {
                threshold_series: Some(results.iter().map(|r| mean(&r.thresholds)).collect()),
                series: results.iter().map(SeriesRow::from).collect(),
                events,
                processing_s,
            }
        }
        DetectorKind::Fixed => {
            let plan = FftPlan::with_window(cfg.pipeline.frame_size, cfg.pipeline.window)?;
            let bins = cfg.pipeline.bin_set()?;
            let features = frames
                .iter()
                .map(|f| Ok(magnitude(&plan.forward(f.samples())?, &bins, f.frame_index())?))
                .collect::<Result<Vec<_>>>()?;
            let settings = &cfg.baselines.fixed;
            let fixed = match &settings.thresholds {
                Some(t) => FixedThresholdConfig::new(t.clone())?,
                None => {
                    let n = settings
                        .calibration_frames
                        .or_else(|| cfg.scenario.phases.first().map(|p| p.frame_count))
                        .unwrap_or(features.len())
                        .min(features.len());
                    FixedThresholdConfig::calibrate(&features[..n])?
                }
            };
            let detections = FixedThresholdDetector::new(fixed, bins.indices().to_vec())?.detect(&features)?;
            let processing_s = started.elapsed().as_secs_f64();
            DetectorRun {
                threshold_series: Some(detections.iter().map(|d| mean(&d.threshold)).collect()),
                series: detections.iter().map(SeriesRow::from).collect(),
                events: detection_rows(&detections)?,
                processing_s,
            }
        }
        DetectorKind::Decimated => {
            let detections = DecimatedDetector::new(cfg.baselines.decimated.clone())?.detect(frames)?;
            let processing_s = started.elapsed().as_secs_f64();
            DetectorRun {
                threshold_series: None,
                series: detections.iter().map(SeriesRow::from).collect(),
                events: detection_rows(&detections)?,
                processing_s,
            }
        }
    };
    Ok(run)
}

fn detection_rows(detections: &[crate::baselines::Detection]) -> Result<Vec<EventRow>> {
    Ok(detections
        .iter()
        .filter_map(|d| d.event.as_ref().map(|e| EventRow::new(d.frame_index, e)))
        .collect::<Result<Vec<_>, _>>()?)
}

fn resources(cfg: &PipelineConfig) -> Result<ResourceReport> {
    let memory = MemoryFootprint::from(cfg);
    Ok(ResourceReport {
        memory,
        memory_entries: memory.total_entries(),
        memory_bytes_16bit: memory.bytes(2),
        acquisition_latency_s: latency_budget(cfg.frame_size, cfg.sample_rate_hz, ProcessingTimes::default())?
            .acquire_s,
    })
}

fn metrics(
    cfg: &ExperimentConfig,
    event_frames: &[u64],
    truth: &GroundTruth,
    frame_count: u64,
    thresholds: Option<&[f64]>,
) -> Result<MetricsReport> {
    let phases = cfg.phases_for(frame_count);
    Ok(MetricsReport::build(&ReportInputs {
        event_frames,
        truth,
        phases: &phases,
        frame_count,
        warmup: cfg.pipeline.warmup() as u64,
        threshold_series: thresholds,
        traffic: cfg.traffic,
    })?)
}

fn apply_detector_args(cfg: &mut ExperimentConfig, args: &DetectorArgs) {
    match args.tracker {
        Some(TrackerChoice::Median) => cfg.pipeline.tracker = TrackerMode::MedianCascade,
        Some(TrackerChoice::Ema) => {
            cfg.pipeline.tracker = TrackerMode::Ema {
                alpha: DEFAULT_EMA_ALPHA,
            }
        }
        None => {}
    }
}

fn config_value(cfg: &ExperimentConfig) -> Result<serde_json::Value> {
    Ok(serde_json::to_value(cfg)?)
}

/// Builds the report for an in-memory replica run.
pub fn replica_report(cfg: &ExperimentConfig, kind: DetectorKind) -> Result<(RunReport, DetectorRun, GroundTruth)> {
    cfg.validate()?;
    let generated = generate(&cfg.scenario)?;
    let frame_count = generated.frames.len() as u64;
    let run = run_detector(cfg, kind, &generated.frames)?;
    let metrics = metrics(
        cfg,
        &run.event_frames(),
        &generated.truth,
        frame_count,
        run.threshold_series.as_deref(),
    )?;
    let report = RunReport {
        command: "replica".into(),
        detector: kind.name().into(),
        seed: Some(cfg.scenario.seed),
        prng: Some(PRNG_ID.into()),
        config: config_value(cfg)?,
        frames: frame_count,
        resources: resources(&cfg.pipeline)?,
        metrics: Some(metrics),
        events: run.events.clone(),
        series: run.series.clone(),
    };
    Ok((report, run, generated.truth))
}

fn write_timing(dir: &Path, cfg: &PipelineConfig, run: &DetectorRun, runtime_s: f64, frames: u64) -> Result<()> {
    let mean_frame_processing_s = if frames > 0 {
        run.processing_s / frames as f64
    } else {
        0.0
    };
    let acquisition_s = cfg.frame_size as f64 / cfg.sample_rate_hz;
    report::write_json(
        &dir.join("timing.json"),
        &TimingReport {
            runtime_s,
            frames,
            mean_frame_processing_s,
            acquisition_s,
            latency_s: acquisition_s + mean_frame_processing_s,
        },
    )?;
    Ok(())
}

fn write_outputs(dir: &Path, format: OutputFormat, report: &RunReport, bins: &[usize]) -> Result<()> {
    report::write_json(&dir.join("report.json"), report)?;
    io::save_events(&dir.join("events.csv"), &report.events)?;
    if format == OutputFormat::Csv {
        if let Some(m) = &report.metrics {
            report::write_confusion_csv(&dir.join("confusion.csv"), m)?;
            report::write_phases_csv(&dir.join("phases.csv"), m)?;
        }
        report::write_series_csv(&dir.join("series.csv"), &report.series, bins)?;
    }
    Ok(())
}

fn out_dir(common: &CommonArgs) -> Result<&Path> {
    fs::create_dir_all(&common.out_dir).with_context(|| format!("creating {}", common.out_dir.display()))?;
    Ok(&common.out_dir)
}

fn cmd_generate(args: &GenerateArgs) -> Result<()> {
    let mut cfg = ExperimentConfig::load(args.common.config.as_deref())?;
    if let Some(seed) = args.seed {
        cfg.scenario.seed = seed;
    }
    cfg.validate()?;
    let dir = out_dir(&args.common)?;
    let generated = generate(&cfg.scenario)?;
    io::save_frames(&dir.join("frames.bin"), &generated.frames)?;
    io::save_truth(&dir.join("truth.csv"), &generated.truth)?;
    fs::write(dir.join("config.toml"), toml::to_string(&cfg)?)?;
    log::info!(
        "wrote {} frames and {} events to {}",
        generated.frames.len(),
        generated.truth.len(),
        dir.display()
    );
    Ok(())
}

fn cmd_detect(args: &DetectArgs) -> Result<()> {
    let started = Instant::now();
    let mut cfg = ExperimentConfig::load(args.common.config.as_deref())?;
    apply_detector_args(&mut cfg, &args.detector);
    cfg.pipeline.validate()?;
    let (header, frames) =
        io::load_frames(&args.frames).with_context(|| format!("reading {}", args.frames.display()))?;
    if header.frame_size != cfg.pipeline.frame_size {
        bail!(
            "{} holds {}-sample frames but the pipeline is configured for {}",
            args.frames.display(),
            header.frame_size,
            cfg.pipeline.frame_size
        );
    }
    if header.sample_rate_hz != cfg.pipeline.sample_rate_hz {
        bail!(
            "{} was sampled at {} Hz but the pipeline is configured for {} Hz",
            args.frames.display(),
            header.sample_rate_hz,
            cfg.pipeline.sample_rate_hz
        );
    }
    let kind = args.detector.detector;
    let run = run_detector(&cfg, kind, &frames)?;
    let frame_count = frames.len() as u64;
    let metrics = match &args.truth {
        Some(path) => {
            let truth = io::load_truth(path).with_context(|| format!("reading {}", path.display()))?;
            Some(metrics(
                &cfg,
                &run.event_frames(),
                &truth,
                frame_count,
                run.threshold_series.as_deref(),
            )?)
        }
        None => None,
    };
    let report = RunReport {
        command: "detect".into(),
        detector: kind.name().into(),
        seed: None,
        prng: None,
        config: config_value(&cfg)?,
        frames: frame_count,
        resources: resources(&cfg.pipeline)?,
        metrics,
        events: run.events.clone(),
        series: run.series.clone(),
    };
    let dir = out_dir(&args.common)?;
    write_outputs(dir, args.detector.format, &report, &cfg.pipeline.bins)?;
    write_timing(dir, &cfg.pipeline, &run, started.elapsed().as_secs_f64(), frame_count)
}

fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let cfg = ExperimentConfig::load(args.common.config.as_deref())?;
    let events = io::load_events(&args.events).with_context(|| format!("reading {}", args.events.display()))?;
    let truth = io::load_truth(&args.truth).with_context(|| format!("reading {}", args.truth.display()))?;
    let frame_count = match &args.frames {
        Some(path) => io::load_frames(path)
            .with_context(|| format!("reading {}", path.display()))?
            .1
            .len() as u64,
        None => cfg.scenario.total_frames() as u64,
    };
    if let Some(last) = events.iter().map(|e| e.frame).max() {
        ensure!(
            last < frame_count,
            "event at frame {last} lies beyond the {frame_count}-frame run"
        );
    }
    let event_frames: Vec<u64> = events.iter().map(|e| e.frame).collect();
    let m = metrics(&cfg, &event_frames, &truth, frame_count, None)?;
    let dir = out_dir(&args.common)?;
    report::write_json(&dir.join("metrics.json"), &m)?;
    if args.format == OutputFormat::Csv {
        report::write_confusion_csv(&dir.join("confusion.csv"), &m)?;
        report::write_phases_csv(&dir.join("phases.csv"), &m)?;
    }
    Ok(())
}

fn cmd_replica(args: &ReplicaArgs) -> Result<()> {
    let started = Instant::now();
    let mut cfg = ExperimentConfig::load(args.common.config.as_deref())?;
    if let Some(seed) = args.seed {
        cfg.scenario.seed = seed;
    }
    apply_detector_args(&mut cfg, &args.detector);
    let (report, run, truth) = replica_report(&cfg, args.detector.detector)?;
    let dir = out_dir(&args.common)?;
    write_outputs(dir, args.detector.format, &report, &cfg.pipeline.bins)?;
    io::save_truth(&dir.join("truth.csv"), &truth)?;
    write_timing(dir, &cfg.pipeline, &run, started.elapsed().as_secs_f64(), report.frames)
}

pub fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Detect(a) => cmd_detect(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Replica(a) => cmd_replica(a),
    }
}

/// Parses `args` (program name first) and runs the command.
pub fn run_from<I, T>(args: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    run(Cli::try_parse_from(args)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_consistent() {
        let cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.scenario.seed, DEFAULT_SEED);
        assert_eq!(cfg.phases_for(6784).len(), 3);
        assert_eq!(cfg.phases_for(100).len(), 1);
    }

    #[test]
    fn partial_toml_keeps_defaults() {
        let cfg: ExperimentConfig =
            toml::from_str("[pipeline]\nzeta = 2.0\n[baselines.decimated]\nfactor = 8\n").unwrap();
        assert_eq!(cfg.pipeline.gamma_a, 64);
        assert_eq!(cfg.baselines.decimated.factor, 8);
        assert_eq!(cfg.scenario, ScenarioConfig::replica(DEFAULT_SEED));
        let back: ExperimentConfig = toml::from_str(&toml::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
        assert!(toml::from_str::<ExperimentConfig>("[pipline]\n").is_err());
    }

    #[test]
    fn mismatched_frame_layout_is_rejected() {
        let mut cfg = ExperimentConfig::default();
        cfg.pipeline.frame_size = 256;
        assert!(cfg.validate().is_err());
        let frames = vec![Frame::new(vec![0.0; 128], 0, 1000.0).unwrap()];
        assert!(run_detector(&cfg, DetectorKind::Proposed, &frames).is_err());
    }

    #[test]
    fn cli_parses_flags() {
        let cli = Cli::try_parse_from([
            "edge-trigger",
            "replica",
            "--seed",
            "7",
            "--detector",
            "decimated",
            "--tracker",
            "ema",
            "--format",
            "csv",
            "--out-dir",
            "x",
        ])
        .unwrap();
        match cli.command {
            Command::Replica(a) => {
                assert_eq!(a.seed, Some(7));
                assert_eq!(a.detector.detector, DetectorKind::Decimated);
                assert_eq!(a.detector.tracker, Some(TrackerChoice::Ema));
                assert_eq!(a.detector.format, OutputFormat::Csv);
            }
            _ => panic!("wrong subcommand"),
        }
        assert!(Cli::try_parse_from(["edge-trigger", "detect"]).is_err());
    }
}
