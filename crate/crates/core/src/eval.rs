//! Scoring against ground truth, and traffic/payload accounting.
//!
//! Scoring convention: true positives and false negatives are counted per
//! truth interval (an interval is detected if any of its frames carries an
//! event); false positives and true negatives are counted per frame outside
//! every interval. Frames before the warm-up boundary are not scored. With
//! one-frame events `TP + FP + FN + TN` equals the number of scored frames.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::envsim::{GroundTruth, PhaseRange};
use crate::trigger::PAYLOAD_BITS;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("frame count must be positive")]
    NoFrames,
    #[error("scoring window [{start}, {end}) is empty or inverted")]
    EmptyWindow { start: u64, end: u64 },
    #[error("threshold series has {actual} entries for {expected} frames")]
    SeriesLength { expected: usize, actual: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

impl std::ops::Add for ConfusionMatrix {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        Self {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            fn_: self.fn_ + o.fn_,
            tn: self.tn + o.tn,
        }
    }
}

fn any_in(sorted_events: &[u64], start: u64, end: u64) -> bool {
    let i = sorted_events.partition_point(|&e| e < start);
    i < sorted_events.len() && sorted_events[i] < end
}

/// Scores frames in `[start, end)`. Intervals are attributed to the window
/// containing their first frame.
pub fn score_range(
    event_frames: &[u64],
    truth: &GroundTruth,
    start: u64,
    end: u64,
) -> Result<ConfusionMatrix, EvalError> {
    if end <= start {
        return Err(EvalError::EmptyWindow { start, end });
    }
    let mut events = event_frames.to_vec();
    events.sort_unstable();
    events.dedup();

    let mut cm = ConfusionMatrix::default();
    for iv in truth
        .intervals()
        .iter()
        .filter(|iv| iv.start >= start && iv.start < end)
    {
        if any_in(&events, iv.start, iv.end) {
            cm.tp += 1;
        } else {
            cm.fn_ += 1;
        }
    }
    for frame in start..end {
        if truth.interval_at(frame).is_some() {
            continue;
        }
        if events.binary_search(&frame).is_ok() {
            cm.fp += 1;
        } else {
            cm.tn += 1;
        }
    }
    Ok(cm)
}

/// Scores a whole run of `frame_count` frames, skipping the first `warmup`.
pub fn score(
    event_frames: &[u64],
    truth: &GroundTruth,
    frame_count: u64,
    warmup: u64,
) -> Result<ConfusionMatrix, EvalError> {
    if frame_count == 0 {
        return Err(EvalError::NoFrames);
    }
    score_range(event_frames, truth, warmup.min(frame_count), frame_count)
}

/// Ratios derived from a confusion matrix; `None` where the denominator is zero.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DetectionMetrics {
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub precision: Option<f64>,
    pub accuracy: Option<f64>,
    pub false_alarm_rate: Option<f64>,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn derive_metrics(cm: &ConfusionMatrix) -> DetectionMetrics {
    DetectionMetrics {
        sensitivity: ratio(cm.tp, cm.tp + cm.fn_),
        specificity: ratio(cm.tn, cm.tn + cm.fp),
        precision: ratio(cm.tp, cm.tp + cm.fp),
        accuracy: ratio(cm.tp + cm.tn, cm.total()),
        false_alarm_rate: ratio(cm.fp, cm.fp + cm.tn),
    }
}

/// Bit sizes and counts feeding the traffic comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrafficParams {
    /// Samples per frame.
    pub frame_size: u64,
    pub bits_per_sample: u64,
    pub decimation_factor: u64,
    pub feature_bins: u64,
    pub bits_per_feature: u64,
    pub event_payload_bits: u64,
}

impl Default for TrafficParams {
    fn default() -> Self {
        Self {
            frame_size: 128,
            bits_per_sample: 16,
            decimation_factor: 4,
            feature_bins: 16,
            bits_per_feature: 16,
            event_payload_bits: PAYLOAD_BITS as u64,
        }
    }
}

/// Bits sent per frame (streaming) or per event (proposed) by each approach.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PayloadComparison {
    pub raw_streaming_bits: u64,
    pub decimated_streaming_bits: u64,
    pub feature_transmission_bits: u64,
    pub trigger_bits: u64,
}

pub fn payload_comparison(p: &TrafficParams) -> PayloadComparison {
    PayloadComparison {
        raw_streaming_bits: p.frame_size * p.bits_per_sample,
        decimated_streaming_bits: p.frame_size / p.decimation_factor.max(1) * p.bits_per_sample,
        feature_transmission_bits: p.feature_bins * p.bits_per_feature,
        trigger_bits: p.event_payload_bits,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrafficStats {
    pub frames: u64,
    pub events: u64,
    /// `1 - events / frames`.
    pub data_reduction: f64,
    /// Every frame's feature vector.
    pub feature_stream_bits: u64,
    /// One payload per event.
    pub trigger_stream_bits: u64,
    /// `feature_stream_bits / trigger_stream_bits`; `None` with no events.
    pub reduction_factor: Option<f64>,
}

pub fn traffic_stats(
    frame_count: u64,
    event_count: u64,
    feature_bins: u64,
    bits_per_feature: u64,
    event_payload_bits: u64,
) -> Result<TrafficStats, EvalError> {
    if frame_count == 0 {
        return Err(EvalError::NoFrames);
    }
    let feature_stream_bits = frame_count * feature_bins * bits_per_feature;
    let trigger_stream_bits = event_count * event_payload_bits;
    Ok(TrafficStats {
        frames: frame_count,
        events: event_count,
        data_reduction: 1.0 - event_count as f64 / frame_count as f64,
        feature_stream_bits,
        trigger_stream_bits,
        reduction_factor: ratio(feature_stream_bits, trigger_stream_bits),
    })
}

/// Mesh load from false alarms: mean hop count x false-alarm rate x payload bits.
pub fn amplification(mean_hops: f64, false_alarm_rate: f64, payload_bits: f64) -> f64 {
    mean_hops * false_alarm_rate * payload_bits
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseReport {
    pub name: String,
    pub start: u64,
    pub end: u64,
    pub scored_frames: u64,
    pub true_events: u64,
    pub detected_events: u64,
    pub false_positives: u64,
    pub confusion: ConfusionMatrix,
    pub metrics: DetectionMetrics,
    pub threshold_min: Option<f64>,
    pub threshold_max: Option<f64>,
    /// Median threshold over the phase's scored frames.
    pub settled_threshold: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSummary {
    pub min: f64,
    pub max: f64,
    pub settled_first_phase: f64,
    pub settled_last_phase: f64,
    /// `settled_last_phase / settled_first_phase`.
    pub adaptation_ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub scoring: String,
    pub warmup_frames: u64,
    pub confusion: ConfusionMatrix,
    pub metrics: DetectionMetrics,
    pub phases: Vec<PhaseReport>,
    pub thresholds: Option<ThresholdSummary>,
    pub traffic: TrafficStats,
    pub payload: PayloadComparison,
}

pub const SCORING_CONVENTION: &str =
    "TP/FN per truth interval (any event frame inside detects it); FP/TN per frame outside all intervals; warm-up frames unscored";

fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    Some(values[values.len() / 2])
}

/// Inputs for [`MetricsReport::build`].
pub struct ReportInputs<'a> {
    pub event_frames: &'a [u64],
    pub truth: &'a GroundTruth,
    pub phases: &'a [PhaseRange],
    pub frame_count: u64,
    pub warmup: u64,
    /// One representative threshold per frame, when the detector has one.
    pub threshold_series: Option<&'a [f64]>,
    pub traffic: TrafficParams,
}

impl MetricsReport {
    pub fn build(inputs: &ReportInputs<'_>) -> Result<Self, EvalError> {
        let n = inputs.frame_count;
        if n == 0 {
            return Err(EvalError::NoFrames);
        }
        if let Some(series) = inputs.threshold_series {
            if series.len() as u64 != n {
                return Err(EvalError::SeriesLength {
                    expected: n as usize,
                    actual: series.len(),
                });
            }
        }
        let warm = inputs.warmup.min(n);
        let confusion = score(inputs.event_frames, inputs.truth, n, warm)?;

        let mut phases = Vec::with_capacity(inputs.phases.len());
        for range in inputs.phases {
            let lo = range.start.max(warm);
            let hi = range.end.min(n);
            let (cm, scored) = if hi > lo {
                (score_range(inputs.event_frames, inputs.truth, lo, hi)?, hi - lo)
            } else {
                (ConfusionMatrix::default(), 0)
            };
            let finite: Vec<f64> = inputs
                .threshold_series
                .map(|s| {
                    s[lo as usize..hi.max(lo) as usize]
                        .iter()
                        .copied()
                        .filter(|v| v.is_finite())
                        .collect()
                })
                .unwrap_or_default();
            phases.push(PhaseReport {
                name: range.name.clone(),
                start: range.start,
                end: range.end,
                scored_frames: scored,
                true_events: cm.tp + cm.fn_,
                detected_events: cm.tp,
                false_positives: cm.fp,
                confusion: cm,
                metrics: derive_metrics(&cm),
                threshold_min: finite.iter().copied().reduce(f64::min),
                threshold_max: finite.iter().copied().reduce(f64::max),
                settled_threshold: median(&mut finite.clone()),
            });
        }

        let thresholds = inputs.threshold_series.and_then(|_| {
            let first = phases.first()?.settled_threshold?;
            let last = phases.last()?.settled_threshold?;
            let min = phases.iter().filter_map(|p| p.threshold_min).reduce(f64::min)?;
            let max = phases.iter().filter_map(|p| p.threshold_max).reduce(f64::max)?;
            Some(ThresholdSummary {
                min,
                max,
                settled_first_phase: first,
                settled_last_phase: last,
                adaptation_ratio: (first > 0.0).then(|| last / first),
            })
        });

        let mut events = inputs.event_frames.to_vec();
        events.sort_unstable();
        events.dedup();
        let p = inputs.traffic;
        Ok(Self {
            scoring: SCORING_CONVENTION.to_string(),
            warmup_frames: warm,
            confusion,
            metrics: derive_metrics(&confusion),
            phases,
            thresholds,
            traffic: traffic_stats(
                n,
                events.len() as u64,
                p.feature_bins,
                p.bits_per_feature,
                p.event_payload_bits,
            )?,
            payload: payload_comparison(&p),
        })
    }
}
