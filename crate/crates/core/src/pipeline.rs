//! Per-frame detection pipeline.
//!
//! Each frame goes through FFT, magnitude extraction at the monitored bins,
//! a noise-floor update for every bin, the multiplicative threshold test,
//! and OR aggregation. Trigger decisions are forced off for the first
//! `warmup_frames` frames while the tracker windows fill.
//!
//! Acquisition and analysis are double-buffered on the target. Analysis of
//! frame `t` cannot influence acquisition of `t + 1`, so the simulation runs
//! them in sequence through [`DoubleBuffer`] and accounts for the overlap in
//! [`latency_budget`] instead.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::noisefloor::{NoiseFloorError, Tracker, TrackerMode, DEFAULT_GAMMA_A, DEFAULT_GAMMA_D};
use crate::spectral::{magnitude, BinSet, FftPlan, Frame, SpectralError, SpectralFeatures, Window};
use crate::trigger::{
    decide_bin, first_firing, DeltaEncoder, ThresholdConfig, TriggerError, TriggerEvent, DEFAULT_ZETA,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    NoiseFloor(#[from] NoiseFloorError),
    #[error(transparent)]
    Trigger(#[from] TriggerError),
    #[error("frame has {actual} samples, pipeline expects {expected}")]
    FrameSizeMismatch { expected: usize, actual: usize },
    #[error("{bins} monitored bins but {coefficients} threshold coefficients")]
    CoefficientCount { bins: usize, coefficients: usize },
    #[error("window sizes must be >= 1 (gamma_d = {gamma_d}, gamma_a = {gamma_a})")]
    WindowSize { gamma_d: usize, gamma_a: usize },
    #[error("sample rate must be positive, got {0}")]
    SampleRate(f64),
    #[error("negative latency component {0}")]
    NegativeLatency(f64),
    #[error("frame {frame_index}: {source}")]
    AtFrame {
        frame_index: u64,
        #[source]
        source: Box<PipelineError>,
    },
}

/// Threshold coefficients as written in a config file: one value for all
/// bins or one per bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ZetaSpec {
    Uniform(f64),
    PerBin(Vec<f64>),
}

impl Default for ZetaSpec {
    fn default() -> Self {
        ZetaSpec::Uniform(DEFAULT_ZETA)
    }
}

impl ZetaSpec {
    pub fn resolve(&self, bins: usize) -> Result<ThresholdConfig, PipelineError> {
        match self {
            ZetaSpec::Uniform(z) => Ok(ThresholdConfig::uniform(bins, *z)?),
            ZetaSpec::PerBin(v) if v.len() == bins => Ok(ThresholdConfig::new(v.clone())?),
            ZetaSpec::PerBin(v) => Err(PipelineError::CoefficientCount {
                bins,
                coefficients: v.len(),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub frame_size: usize,
    pub sample_rate_hz: f64,
    pub bins: Vec<usize>,
    pub gamma_d: usize,
    pub gamma_a: usize,
    pub zeta: ZetaSpec,
    pub tracker: TrackerMode,
    /// Defaults to `gamma_d + gamma_a`.
    pub warmup_frames: Option<usize>,
    pub window: Window,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            frame_size: 128,
            sample_rate_hz: 1000.0,
            bins: vec![4, 8, 12, 16, 20, 24, 28, 32],
            gamma_d: DEFAULT_GAMMA_D,
            gamma_a: DEFAULT_GAMMA_A,
            zeta: ZetaSpec::default(),
            tracker: TrackerMode::MedianCascade,
            warmup_frames: None,
            window: Window::Rectangular,
        }
    }
}

impl PipelineConfig {
    pub fn warmup(&self) -> usize {
        self.warmup_frames.unwrap_or(self.gamma_d + self.gamma_a)
    }

    pub fn bin_set(&self) -> Result<BinSet, PipelineError> {
        Ok(BinSet::new(self.bins.clone(), self.frame_size)?)
    }

    pub fn thresholds(&self) -> Result<ThresholdConfig, PipelineError> {
        self.zeta.resolve(self.bins.len())
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        FftPlan::new(self.frame_size)?;
        self.bin_set()?;
        self.thresholds()?;
        if self.gamma_d == 0 || self.gamma_a == 0 {
            return Err(PipelineError::WindowSize {
                gamma_d: self.gamma_d,
                gamma_a: self.gamma_a,
            });
        }
        if !(self.sample_rate_hz.is_finite() && self.sample_rate_hz > 0.0) {
            return Err(PipelineError::SampleRate(self.sample_rate_hz));
        }
        Tracker::new(self.tracker, &self.bins, self.gamma_d, self.gamma_a)?;
        Ok(())
    }
}

/// Everything the pipeline produced for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameResult {
    pub frame_index: u64,
    pub features: SpectralFeatures,
    /// Noise-floor estimates after this frame's update.
    pub estimates: Vec<f64>,
    /// `zeta_k * N_k` per bin.
    pub thresholds: Vec<f64>,
    /// `|X_k| - zeta_k * N_k` per bin.
    pub margins: Vec<f64>,
    pub event: bool,
    pub event_record: Option<TriggerEvent>,
}

/// Sampling and analysis buffers of `N` slots each.
#[derive(Debug, Clone)]
pub struct DoubleBuffer {
    sampling: Vec<f64>,
    analysis: Vec<f64>,
    pending: bool,
}

impl DoubleBuffer {
    pub fn new(frame_size: usize) -> Self {
        Self {
            sampling: vec![0.0; frame_size],
            analysis: vec![0.0; frame_size],
            pending: false,
        }
    }

    /// Fills the sampling buffer with one frame.
    pub fn acquire(&mut self, samples: &[f64]) -> Result<(), PipelineError> {
        if samples.len() != self.sampling.len() {
            return Err(PipelineError::FrameSizeMismatch {
                expected: self.sampling.len(),
                actual: samples.len(),
            });
        }
        self.sampling.copy_from_slice(samples);
        self.pending = true;
        Ok(())
    }

    /// Hands the last acquired frame to analysis; returns `None` if nothing
    /// was acquired since the previous swap.
    pub fn swap(&mut self) -> Option<&[f64]> {
        if !self.pending {
            return None;
        }
        std::mem::swap(&mut self.sampling, &mut self.analysis);
        self.pending = false;
        Some(&self.analysis)
    }

    pub fn slots(&self) -> usize {
        self.sampling.len() + self.analysis.len()
    }
}

/// One node's detection pipeline: configuration plus tracker state.
#[derive(Debug, Clone)]
pub struct Pipeline {
    config: PipelineConfig,
    plan: FftPlan,
    bins: BinSet,
    thresholds: ThresholdConfig,
    tracker: Tracker,
    encoder: DeltaEncoder,
    processed: usize,
    warmup: usize,
}

impl Pipeline {
    pub fn new(config: PipelineConfig) -> Result<Self, PipelineError> {
        config.validate()?;
        let plan = FftPlan::with_window(config.frame_size, config.window)?;
        let bins = config.bin_set()?;
        let thresholds = config.thresholds()?;
        let tracker = Tracker::new(config.tracker, &config.bins, config.gamma_d, config.gamma_a)?;
        let warmup = config.warmup();
        Ok(Self {
            config,
            plan,
            bins,
            thresholds,
            tracker,
            encoder: DeltaEncoder::new(),
            processed: 0,
            warmup,
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn bins(&self) -> &BinSet {
        &self.bins
    }

    pub fn frames_processed(&self) -> usize {
        self.processed
    }

    pub fn estimates(&self) -> Vec<f64> {
        self.tracker.estimates()
    }

    pub fn process_frame(&mut self, frame: &Frame) -> Result<FrameResult, PipelineError> {
        self.process_samples(frame.samples(), frame.frame_index())
    }

    fn process_samples(&mut self, samples: &[f64], frame_index: u64) -> Result<FrameResult, PipelineError> {
        if samples.len() != self.config.frame_size {
            return Err(PipelineError::FrameSizeMismatch {
                expected: self.config.frame_size,
                actual: samples.len(),
            });
        }
        let spectrum = self.plan.forward(samples)?;
        let features = magnitude(&spectrum, &self.bins, frame_index)?;

        let m = self.bins.len();
        let mut estimates = Vec::with_capacity(m);
        let mut thresholds = Vec::with_capacity(m);
        let mut margins = Vec::with_capacity(m);
        let mut decisions = Vec::with_capacity(m);
        for (pos, (&mag, &zeta)) in features
            .magnitudes
            .iter()
            .zip(self.thresholds.coefficients())
            .enumerate()
        {
            let estimate = self.tracker.update_at(pos, mag)?;
            decisions.push(decide_bin(mag, estimate, zeta)?);
            let threshold = zeta * estimate;
            margins.push(mag - threshold);
            thresholds.push(threshold);
            estimates.push(estimate);
        }

        let armed = self.processed >= self.warmup;
        self.processed += 1;

        let event_record = match first_firing(&decisions).filter(|_| armed) {
            Some(pos) => {
                let strength = features.magnitudes[pos] / estimates[pos];
                Some(self.encoder.event_at(frame_index, self.bins.indices()[pos], strength)?)
            }
            None => None,
        };

        Ok(FrameResult {
            frame_index,
            features,
            estimates,
            thresholds,
            margins,
            event: event_record.is_some(),
            event_record,
        })
    }

    /// Processes frames in order through the double buffer.
    pub fn run_stream<'a, I>(&mut self, frames: I) -> Result<Vec<FrameResult>, PipelineError>
    where
        I: IntoIterator<Item = &'a Frame>,
    {
        let mut buffer = DoubleBuffer::new(self.config.frame_size);
        let mut results = Vec::new();
        for frame in frames {
            let at = |e: PipelineError| PipelineError::AtFrame {
                frame_index: frame.frame_index(),
                source: Box::new(e),
            };
            buffer.acquire(frame.samples()).map_err(at)?;
            let samples = buffer.swap().expect("frame acquired").to_vec();
            results.push(self.process_samples(&samples, frame.frame_index()).map_err(at)?);
        }
        Ok(results)
    }
}

/// Measured or assumed processing times, in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ProcessingTimes {
    pub fft: f64,
    pub median: f64,
    pub decision: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyBudget {
    /// `N / f_s`.
    pub acquire_s: f64,
    pub processing_s: f64,
    pub total_s: f64,
}

/// Trigger latency: one frame of acquisition plus the processing chain.
pub fn latency_budget(
    frame_size: usize,
    sample_rate_hz: f64,
    times: ProcessingTimes,
) -> Result<LatencyBudget, PipelineError> {
    if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
        return Err(PipelineError::SampleRate(sample_rate_hz));
    }
    for t in [times.fft, times.median, times.decision] {
        if t.is_nan() || t < 0.0 {
            return Err(PipelineError::NegativeLatency(t));
        }
    }
    let acquire_s = frame_size as f64 / sample_rate_hz;
    let processing_s = times.fft + times.median + times.decision;
    Ok(LatencyBudget {
        acquire_s,
        processing_s,
        total_s: acquire_s + processing_s,
    })
}

/// Static state tally for one node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryFootprint {
    /// `2N` for the double buffer.
    pub sample_slots: usize,
    /// `M * (gamma_d + gamma_a)`.
    pub median_entries: usize,
    /// `M` threshold coefficients.
    pub coefficients: usize,
}

impl MemoryFootprint {
    pub fn for_config(frame_size: usize, bins: usize, gamma_d: usize, gamma_a: usize) -> Self {
        Self {
            sample_slots: 2 * frame_size,
            median_entries: bins * (gamma_d + gamma_a),
            coefficients: bins,
        }
    }

    pub fn total_entries(&self) -> usize {
        self.sample_slots + self.median_entries + self.coefficients
    }

    pub fn bytes(&self, bytes_per_entry: usize) -> usize {
        self.total_entries() * bytes_per_entry
    }
}

impl From<&PipelineConfig> for MemoryFootprint {
    fn from(c: &PipelineConfig) -> Self {
        Self::for_config(c.frame_size, c.bins.len(), c.gamma_d, c.gamma_a)
    }
}
