//! Run reports: a deterministic JSON document plus optional CSV tables.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::baselines::Detection;
use crate::eval::{ConfusionMatrix, MetricsReport, PhaseReport};
use crate::io::{EventRow, IoError};
use crate::pipeline::{FrameResult, MemoryFootprint};

/// One frame of detector trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesRow {
    pub frame: u64,
    pub feature: Vec<f64>,
    /// Empty when the detector made no decision on this frame.
    pub threshold: Vec<f64>,
    pub margin: Vec<f64>,
    pub event: bool,
}

impl From<&FrameResult> for SeriesRow {
    fn from(r: &FrameResult) -> Self {
        Self {
            frame: r.frame_index,
            feature: r.features.magnitudes.clone(),
            threshold: r.thresholds.clone(),
            margin: r.margins.clone(),
            event: r.event,
        }
    }
}

impl From<&Detection> for SeriesRow {
    fn from(d: &Detection) -> Self {
        Self {
            frame: d.frame_index,
            margin: d.threshold.iter().zip(&d.feature).map(|(t, f)| f - t).collect(),
            feature: d.feature.clone(),
            threshold: d.threshold.clone(),
            event: d.event.is_some(),
        }
    }
}

/// Static resource figures for the configured pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResourceReport {
    pub memory: MemoryFootprint,
    pub memory_entries: usize,
    pub memory_bytes_16bit: usize,
    /// Acquisition-only latency `N / f_s`; measured processing time is in `timing.json`.
    pub acquisition_latency_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub command: String,
    pub detector: String,
    pub seed: Option<u64>,
    pub prng: Option<String>,
    /// Resolved experiment configuration.
    pub config: serde_json::Value,
    pub frames: u64,
    pub resources: ResourceReport,
    pub metrics: Option<MetricsReport>,
    pub events: Vec<EventRow>,
    pub series: Vec<SeriesRow>,
}

/// Wall-clock measurements; kept apart from the report so reports stay byte-identical.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingReport {
    pub runtime_s: f64,
    pub frames: u64,
    /// Detector compute time divided by frame count.
    pub mean_frame_processing_s: f64,
    /// `N / f_s`.
    pub acquisition_s: f64,
    /// Acquisition time plus the measured mean processing time.
    pub latency_s: f64,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value).map_err(std::io::Error::from)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct ConfusionRow<'a> {
    scope: &'a str,
    tp: u64,
    fp: u64,
    #[serde(rename = "fn")]
    fn_: u64,
    tn: u64,
    sensitivity: Option<f64>,
    specificity: Option<f64>,
    precision: Option<f64>,
    accuracy: Option<f64>,
}

fn confusion_row<'a>(scope: &'a str, cm: &ConfusionMatrix, m: &crate::eval::DetectionMetrics) -> ConfusionRow<'a> {
    ConfusionRow {
        scope,
        tp: cm.tp,
        fp: cm.fp,
        fn_: cm.fn_,
        tn: cm.tn,
        sensitivity: m.sensitivity,
        specificity: m.specificity,
        precision: m.precision,
        accuracy: m.accuracy,
    }
}

/// `confusion.csv`: one overall row and one row per phase.
pub fn write_confusion_csv(path: &Path, metrics: &MetricsReport) -> Result<(), IoError> {
    let mut w = csv::Writer::from_path(path)?;
    w.serialize(confusion_row("all", &metrics.confusion, &metrics.metrics))?;
    for p in &metrics.phases {
        w.serialize(confusion_row(&p.name, &p.confusion, &p.metrics))?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct PhaseRow<'a> {
    phase: &'a str,
    start: u64,
    end: u64,
    scored_frames: u64,
    true_events: u64,
    detected_events: u64,
    false_positives: u64,
    sensitivity: Option<f64>,
    threshold_min: Option<f64>,
    threshold_max: Option<f64>,
    settled_threshold: Option<f64>,
}

impl<'a> From<&'a PhaseReport> for PhaseRow<'a> {
    fn from(p: &'a PhaseReport) -> Self {
        Self {
            phase: &p.name,
            start: p.start,
            end: p.end,
            scored_frames: p.scored_frames,
            true_events: p.true_events,
            detected_events: p.detected_events,
            false_positives: p.false_positives,
            sensitivity: p.metrics.sensitivity,
            threshold_min: p.threshold_min,
            threshold_max: p.threshold_max,
            settled_threshold: p.settled_threshold,
        }
    }
}

pub fn write_phases_csv(path: &Path, metrics: &MetricsReport) -> Result<(), IoError> {
    let mut w = csv::Writer::from_path(path)?;
    for p in &metrics.phases {
        w.serialize(PhaseRow::from(p))?;
    }
    w.flush()?;
    Ok(())
}

/// `series.csv`: one row per frame and monitored position, long format.
pub fn write_series_csv(path: &Path, series: &[SeriesRow], bins: &[usize]) -> Result<(), IoError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["frame", "bin", "feature", "threshold", "margin", "event"])?;
    for row in series {
        for (pos, feature) in row.feature.iter().enumerate() {
            let bin = bins.get(pos).map_or_else(String::new, |b| b.to_string());
            let opt = |v: Option<&f64>| v.map_or_else(String::new, |x| x.to_string());
            w.write_record([
                row.frame.to_string(),
                bin,
                feature.to_string(),
                opt(row.threshold.get(pos)),
                opt(row.margin.get(pos)),
                u8::from(row.event).to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
