//! Comparison detectors.
//!
//! * [`FixedThresholdDetector`]: spectral magnitudes against constant per-bin
//!   thresholds, typically calibrated once as mean + 3 sigma of a quiet
//!   stretch.
//! * [`DecimatedDetector`]: looks only at every `D`-th frame and compares its
//!   time-domain RMS against an exponentially tracked RMS level.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::noisefloor::DEFAULT_EMA_ALPHA;
use crate::spectral::{Frame, SpectralFeatures};
use crate::trigger::{DeltaEncoder, TriggerError, TriggerEvent};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BaselineError {
    #[error("fixed thresholds must be positive, got {0}")]
    NonPositiveThreshold(f64),
    #[error("expected {expected} magnitudes per frame, got {actual}")]
    BinCount { expected: usize, actual: usize },
    #[error("calibration needs at least one frame")]
    NoCalibrationData,
    #[error("decimation factor must be >= 1")]
    ZeroDecimation,
    #[error("amplitude ratio must be finite and >= 1, got {0}")]
    AmplitudeRatio(f64),
    #[error("alpha must lie in (0, 1), got {0}")]
    Alpha(f64),
    #[error(transparent)]
    Trigger(#[from] TriggerError),
}

/// Per-frame output of a baseline detector.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub frame_index: u64,
    /// What the detector compared: bin magnitudes, or a single RMS value.
    pub feature: Vec<f64>,
    /// Threshold applied to each feature entry on this frame. Empty when no
    /// decision was taken.
    pub threshold: Vec<f64>,
    pub event: Option<TriggerEvent>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedThresholdConfig {
    pub thresholds: Vec<f64>,
}

impl FixedThresholdConfig {
    pub fn new(thresholds: Vec<f64>) -> Result<Self, BaselineError> {
        if let Some(&t) = thresholds.iter().find(|t| t.is_nan() || **t <= 0.0) {
            return Err(BaselineError::NonPositiveThreshold(t));
        }
        Ok(Self { thresholds })
    }

    /// Mean + 3 sigma of each bin over `features`.
    pub fn calibrate(features: &[SpectralFeatures]) -> Result<Self, BaselineError> {
        let first = features.first().ok_or(BaselineError::NoCalibrationData)?;
        let m = first.magnitudes.len();
        let count = features.len() as f64;
        let mut sum = vec![0.0; m];
        for f in features {
            if f.magnitudes.len() != m {
                return Err(BaselineError::BinCount {
                    expected: m,
                    actual: f.magnitudes.len(),
                });
            }
            sum.iter_mut().zip(&f.magnitudes).for_each(|(s, x)| *s += x);
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / count).collect();
        let mut var = vec![0.0; m];
        for f in features {
            for ((v, x), mu) in var.iter_mut().zip(&f.magnitudes).zip(&mean) {
                *v += (x - mu).powi(2);
            }
        }
        let thresholds = mean
            .iter()
            .zip(&var)
            .map(|(mu, v)| mu + 3.0 * (v / count).sqrt())
            .map(|t| if t > 0.0 { t } else { f64::MIN_POSITIVE })
            .collect();
        Self::new(thresholds)
    }
}

/// `E = any(|X_k| > threshold_k)` with thresholds that never move.
#[derive(Debug, Clone)]
pub struct FixedThresholdDetector {
    config: FixedThresholdConfig,
    bins: Vec<usize>,
}

impl FixedThresholdDetector {
    /// `bins` are the spectral bin indices the features are aligned with.
    pub fn new(config: FixedThresholdConfig, bins: Vec<usize>) -> Result<Self, BaselineError> {
        if config.thresholds.len() != bins.len() {
            return Err(BaselineError::BinCount {
                expected: bins.len(),
                actual: config.thresholds.len(),
            });
        }
        Ok(Self { config, bins })
    }

    pub fn config(&self) -> &FixedThresholdConfig {
        &self.config
    }

    pub fn detect(&self, features: &[SpectralFeatures]) -> Result<Vec<Detection>, BaselineError> {
        let mut encoder = DeltaEncoder::new();
        let th = &self.config.thresholds;
        features
            .iter()
            .map(|f| {
                if f.magnitudes.len() != th.len() {
                    return Err(BaselineError::BinCount {
                        expected: th.len(),
                        actual: f.magnitudes.len(),
                    });
                }
                let fired = f.magnitudes.iter().zip(th).position(|(m, t)| m > t);
                let event = match fired {
                    Some(pos) => Some(encoder.event_at(f.frame_index, self.bins[pos], f.magnitudes[pos] / th[pos])?),
                    None => None,
                };
                Ok(Detection {
                    frame_index: f.frame_index,
                    feature: f.magnitudes.clone(),
                    threshold: th.clone(),
                    event,
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecimationConfig {
    /// Only frames with `frame_index % factor == 0` are examined.
    pub factor: usize,
    /// Fires when RMS exceeds `amplitude_ratio` times the tracked RMS.
    pub amplitude_ratio: f64,
    /// EMA weight of the previous tracked RMS.
    pub alpha: f64,
}

impl Default for DecimationConfig {
    fn default() -> Self {
        Self {
            factor: 4,
            amplitude_ratio: 1.5,
            alpha: DEFAULT_EMA_ALPHA,
        }
    }
}

impl DecimationConfig {
    pub fn validate(&self) -> Result<(), BaselineError> {
        if self.factor == 0 {
            return Err(BaselineError::ZeroDecimation);
        }
        if !(self.amplitude_ratio.is_finite() && self.amplitude_ratio >= 1.0) {
            return Err(BaselineError::AmplitudeRatio(self.amplitude_ratio));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(BaselineError::Alpha(self.alpha));
        }
        Ok(())
    }
}

fn rms(samples: &[f64]) -> f64 {
    (samples.iter().map(|x| x * x).sum::<f64>() / samples.len() as f64).sqrt()
}

/// Time-domain adaptive detector that skips all but every `D`-th frame.
#[derive(Debug, Clone)]
pub struct DecimatedDetector {
    config: DecimationConfig,
}

impl DecimatedDetector {
    pub fn new(config: DecimationConfig) -> Result<Self, BaselineError> {
        config.validate()?;
        Ok(Self { config })
    }

    pub fn detect(&self, frames: &[Frame]) -> Result<Vec<Detection>, BaselineError> {
        let d = self.config.factor as u64;
        let mut tracked: Option<f64> = None;
        let mut encoder = DeltaEncoder::new();
        let mut out = Vec::with_capacity(frames.len());
        for f in frames {
            let idx = f.frame_index();
            if idx % d != 0 {
                out.push(Detection {
                    frame_index: idx,
                    feature: Vec::new(),
                    threshold: Vec::new(),
                    event: None,
                });
                continue;
            }
            let level = rms(f.samples());
            let (threshold, event) = match tracked {
                Some(t) => {
                    let th = self.config.amplitude_ratio * t;
                    let event = if level > th {
                        let strength = if t > 0.0 { level / t } else { f64::INFINITY };
                        Some(encoder.event_at(idx, 0, strength)?)
                    } else {
                        None
                    };
                    (vec![th], event)
                }
                // First examined frame seeds the tracker.
                None => (Vec::new(), None),
            };
            tracked = Some(match tracked {
                Some(t) => self.config.alpha * t + (1.0 - self.config.alpha) * level,
                None => level,
            });
            out.push(Detection {
                frame_index: idx,
                feature: vec![level],
                threshold,
                event,
            });
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn feat(i: u64, m: Vec<f64>) -> SpectralFeatures {
        SpectralFeatures {
            frame_index: i,
            magnitudes: m,
        }
    }

    #[test]
    fn below_threshold_is_silent() {
        let det = FixedThresholdDetector::new(FixedThresholdConfig::new(vec![5.0, 5.0]).unwrap(), vec![3, 4]).unwrap();
        let f: Vec<_> = (0..50).map(|i| feat(i, vec![4.9, 1.0])).collect();
        assert!(det.detect(&f).unwrap().iter().all(|d| d.event.is_none()));
    }

    #[test]
    fn huge_threshold_never_fires() {
        let det = FixedThresholdDetector::new(FixedThresholdConfig::new(vec![1e300]).unwrap(), vec![3]).unwrap();
        let f: Vec<_> = (0..50).map(|i| feat(i, vec![1e200])).collect();
        assert!(det.detect(&f).unwrap().iter().all(|d| d.event.is_none()));
    }

    #[test]
    fn fires_on_lowest_exceeding_bin() {
        let det = FixedThresholdDetector::new(FixedThresholdConfig::new(vec![5.0, 5.0]).unwrap(), vec![3, 4]).unwrap();
        let out = det
            .detect(&[feat(7, vec![1.0, 10.0]), feat(9, vec![6.0, 10.0])])
            .unwrap();
        let e = out[0].event.unwrap();
        assert_eq!((e.bin_id, e.frame_delta, e.strength), (4, 7, 2.0));
        let e = out[1].event.unwrap();
        assert_eq!((e.bin_id, e.frame_delta), (3, 2));
    }

    #[test]
    fn calibration_mean_plus_three_sigma() {
        let f: Vec<_> = [1.0, 3.0, 1.0, 3.0]
            .iter()
            .enumerate()
            .map(|(i, &v)| feat(i as u64, vec![v]))
            .collect();
        let c = FixedThresholdConfig::calibrate(&f).unwrap();
        assert_eq!(c.thresholds, vec![2.0 + 3.0 * 1.0]);
        assert_eq!(
            FixedThresholdConfig::calibrate(&[]),
            Err(BaselineError::NoCalibrationData)
        );
        assert!(FixedThresholdConfig::new(vec![0.0]).is_err());
    }

    fn frame(i: u64, amp: f64) -> Frame {
        let s = (0..16).map(|n| if n % 2 == 0 { amp } else { -amp }).collect();
        Frame::new(s, i, 100.0).unwrap()
    }

    #[test]
    fn no_decimation_catches_large_events_on_clean_signal() {
        let frames: Vec<Frame> = (0..100)
            .map(|i| frame(i, if i % 10 == 5 { 10.0 } else { 0.0 }))
            .collect();
        let det = DecimatedDetector::new(DecimationConfig {
            factor: 1,
            ..Default::default()
        })
        .unwrap();
        let fired: Vec<u64> = det
            .detect(&frames)
            .unwrap()
            .iter()
            .filter(|d| d.event.is_some())
            .map(|d| d.frame_index)
            .collect();
        assert_eq!(fired, (0..10).map(|i| i * 10 + 5).collect::<Vec<_>>());
    }

    #[test]
    fn decimation_misses_off_grid_events() {
        // Events at 5, 15, 25, ... are all odd, so none lands on the D = 4 grid.
        let frames: Vec<Frame> = (0..100)
            .map(|i| frame(i, if i % 10 == 5 { 10.0 } else { 1.0 }))
            .collect();
        let det = DecimatedDetector::new(DecimationConfig::default()).unwrap();
        let out = det.detect(&frames).unwrap();
        assert!(out.iter().all(|d| d.event.is_none()));
        assert!(out
            .iter()
            .filter(|d| d.frame_index % 4 != 0)
            .all(|d| d.feature.is_empty()));
        let dense = DecimatedDetector::new(DecimationConfig {
            factor: 1,
            ..Default::default()
        })
        .unwrap();
        assert_eq!(
            dense
                .detect(&frames)
                .unwrap()
                .iter()
                .filter(|d| d.event.is_some())
                .count(),
            10
        );
    }

    #[test]
    fn silent_stream_has_no_detections() {
        let frames: Vec<Frame> = (0..40).map(|i| frame(i, 0.0)).collect();
        let det = DecimatedDetector::new(DecimationConfig::default()).unwrap();
        assert!(det.detect(&frames).unwrap().iter().all(|d| d.event.is_none()));
    }

    #[test]
    fn decimation_config_errors() {
        assert_eq!(
            DecimatedDetector::new(DecimationConfig {
                factor: 0,
                ..Default::default()
            })
            .unwrap_err(),
            BaselineError::ZeroDecimation
        );
        assert!(DecimatedDetector::new(DecimationConfig {
            alpha: 1.0,
            ..Default::default()
        })
        .is_err());
        assert!(DecimatedDetector::new(DecimationConfig {
            amplitude_ratio: 0.5,
            ..Default::default()
        })
        .is_err());
    }
}
