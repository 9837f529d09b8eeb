//! Per-bin temporal noise-floor tracking.
//!
//! Each monitored bin runs a two-stage median cascade: a short window
//! (`gamma_d`, 2..=5 frames) rejects frame-scale transients, and its output
//! feeds a long window (`gamma_a`, 64..=128 frames) that follows slow drift.
//! Both stages are updated every frame, including frames that trigger.
//!
//! Medians are order statistics at zero-based position `floor(len / 2)` of
//! the filled part of the window, so an even window returns its upper-middle
//! sample and the estimate is always a value that was actually inserted.
//!
//! [`EmaTracker`] is an alternative single-pole smoother kept for experiment
//! comparisons. It is not a median and has no breakdown guarantee.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_GAMMA_D: usize = 3;
pub const DEFAULT_GAMMA_A: usize = 64;
pub const DEFAULT_EMA_ALPHA: f64 = 0.95;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NoiseFloorError {
    #[error("median of an empty buffer")]
    EmptyBuffer,
    #[error("window capacity must be >= 1")]
    ZeroCapacity,
    #[error("bin {0} is not tracked")]
    UnknownBin(usize),
    #[error("magnitude must be finite and non-negative, got {0}")]
    InvalidMagnitude(f64),
    #[error("ema alpha must lie in (0, 1), got {0}")]
    InvalidAlpha(f64),
    #[error("no bins to track")]
    NoBins,
}

/// Fixed-capacity circular window with a running fill count.
#[derive(Debug, Clone, PartialEq)]
pub struct MedianBuffer {
    window: Vec<f64>,
    capacity: usize,
    head: usize,
    fill: usize,
}

impl MedianBuffer {
    pub fn new(capacity: usize) -> Result<Self, NoiseFloorError> {
        if capacity == 0 {
            return Err(NoiseFloorError::ZeroCapacity);
        }
        Ok(Self {
            window: vec![0.0; capacity],
            capacity,
            head: 0,
            fill: 0,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn fill_count(&self) -> usize {
        self.fill
    }

    pub fn is_full(&self) -> bool {
        self.fill == self.capacity
    }

    /// Inserts a value, overwriting the oldest one once full.
    pub fn push(&mut self, value: f64) {
        self.window[self.head] = value;
        self.head = (self.head + 1) % self.capacity;
        if self.fill < self.capacity {
            self.fill += 1;
        }
    }

    /// Filled contents in insertion order, oldest first.
    pub fn contents(&self) -> Vec<f64> {
        let start = (self.head + self.capacity - self.fill) % self.capacity;
        (0..self.fill)
            .map(|i| self.window[(start + i) % self.capacity])
            .collect()
    }

    pub fn median(&self) -> Result<f64, NoiseFloorError> {
        let mut scratch = Vec::with_capacity(self.capacity);
        self.median_with(&mut scratch)
    }

    /// Median using caller-provided scratch space; the buffer itself is untouched.
    pub fn median_with(&self, scratch: &mut Vec<f64>) -> Result<f64, NoiseFloorError> {
        if self.fill == 0 {
            return Err(NoiseFloorError::EmptyBuffer);
        }
        scratch.clear();
        if self.is_full() {
            scratch.extend_from_slice(&self.window);
        } else {
            // Not yet wrapped: entries live in 0..fill.
            scratch.extend_from_slice(&self.window[..self.fill]);
        }
        Ok(partial_selection_median(scratch))
    }
}

/// Selection sort that stops once position `len / 2` holds its order statistic.
///
/// Panics on an empty slice.
pub fn partial_selection_median(values: &mut [f64]) -> f64 {
    let len = values.len();
    let target = len / 2;
    for i in 0..=target {
        for j in i + 1..len {
            if values[i] > values[j] {
                values.swap(i, j);
            }
        }
    }
    values[target]
}

#[derive(Debug, Clone, PartialEq)]
struct BinCascade {
    bin: usize,
    stage1: MedianBuffer,
    stage2: MedianBuffer,
    estimate: f64,
    stage1_output: f64,
}

/// Dual-stage median cascades for every monitored bin.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseFloorState {
    gamma_d: usize,
    gamma_a: usize,
    cascades: Vec<BinCascade>,
    scratch: Vec<f64>,
}

impl NoiseFloorState {
    /// `bins` are spectral bin indices in monitored order.
    pub fn new(bins: &[usize], gamma_d: usize, gamma_a: usize) -> Result<Self, NoiseFloorError> {
        if bins.is_empty() {
            return Err(NoiseFloorError::NoBins);
        }
        let cascades = bins
            .iter()
            .map(|&bin| {
                Ok(BinCascade {
                    bin,
                    stage1: MedianBuffer::new(gamma_d)?,
                    stage2: MedianBuffer::new(gamma_a)?,
                    estimate: 0.0,
                    stage1_output: 0.0,
                })
            })
            .collect::<Result<Vec<_>, NoiseFloorError>>()?;
        Ok(Self {
            gamma_d,
            gamma_a,
            cascades,
            scratch: Vec::with_capacity(gamma_d.max(gamma_a)),
        })
    }

    pub fn gamma_d(&self) -> usize {
        self.gamma_d
    }

    pub fn gamma_a(&self) -> usize {
        self.gamma_a
    }

    pub fn len(&self) -> usize {
        self.cascades.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cascades.is_empty()
    }

    /// Feeds one magnitude for spectral bin `bin` and returns the new estimate.
    pub fn update(&mut self, bin: usize, magnitude: f64) -> Result<f64, NoiseFloorError> {
        let pos = self
            .cascades
            .iter()
            .position(|c| c.bin == bin)
            .ok_or(NoiseFloorError::UnknownBin(bin))?;
        self.update_at(pos, magnitude)
    }

    /// Same as [`update`](Self::update), addressing the bin by its position.
    pub fn update_at(&mut self, position: usize, magnitude: f64) -> Result<f64, NoiseFloorError> {
        if !(magnitude.is_finite() && magnitude >= 0.0) {
            return Err(NoiseFloorError::InvalidMagnitude(magnitude));
        }
        let cascade = self
            .cascades
            .get_mut(position)
            .ok_or(NoiseFloorError::UnknownBin(position))?;
        cascade.stage1.push(magnitude);
        let fast = cascade.stage1.median_with(&mut self.scratch)?;
        cascade.stage2.push(fast);
        let slow = cascade.stage2.median_with(&mut self.scratch)?;
        cascade.stage1_output = fast;
        cascade.estimate = slow;
        Ok(slow)
    }

    /// Current estimate for each bin, in monitored order.
    pub fn estimates(&self) -> Vec<f64> {
        self.cascades.iter().map(|c| c.estimate).collect()
    }

    pub fn estimate_at(&self, position: usize) -> Option<f64> {
        self.cascades.get(position).map(|c| c.estimate)
    }

    /// Most recent stage-1 output for the bin at `position`.
    pub fn stage1_output_at(&self, position: usize) -> Option<f64> {
        self.cascades.get(position).map(|c| c.stage1_output)
    }

    pub fn stage1(&self, position: usize) -> Option<&MedianBuffer> {
        self.cascades.get(position).map(|c| &c.stage1)
    }

    pub fn stage2(&self, position: usize) -> Option<&MedianBuffer> {
        self.cascades.get(position).map(|c| &c.stage2)
    }

    /// Number of median-buffer slots held across all bins.
    pub fn median_entries(&self) -> usize {
        self.cascades.len() * (self.gamma_d + self.gamma_a)
    }
}

/// `estimate[t] = alpha * estimate[t-1] + (1 - alpha) * magnitude[t]`,
/// seeded with the first magnitude seen by each bin.
#[derive(Debug, Clone, PartialEq)]
pub struct EmaTracker {
    alpha: f64,
    estimates: Vec<Option<f64>>,
}

impl EmaTracker {
    pub fn new(bins: usize, alpha: f64) -> Result<Self, NoiseFloorError> {
        if bins == 0 {
            return Err(NoiseFloorError::NoBins);
        }
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(NoiseFloorError::InvalidAlpha(alpha));
        }
        Ok(Self {
            alpha,
            estimates: vec![None; bins],
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn update_at(&mut self, position: usize, magnitude: f64) -> Result<f64, NoiseFloorError> {
        if !(magnitude.is_finite() && magnitude >= 0.0) {
            return Err(NoiseFloorError::InvalidMagnitude(magnitude));
        }
        let alpha = self.alpha;
        let slot = self
            .estimates
            .get_mut(position)
            .ok_or(NoiseFloorError::UnknownBin(position))?;
        let next = match *slot {
            Some(prev) => alpha * prev + (1.0 - alpha) * magnitude,
            None => magnitude,
        };
        *slot = Some(next);
        Ok(next)
    }

    pub fn estimates(&self) -> Vec<f64> {
        self.estimates.iter().map(|e| e.unwrap_or(0.0)).collect()
    }
}

/// Tracker selection for a pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrackerMode {
    #[default]
    MedianCascade,
    Ema {
        #[serde(default = "default_alpha")]
        alpha: f64,
    },
}

fn default_alpha() -> f64 {
    DEFAULT_EMA_ALPHA
}

/// Either tracker behind one update interface.
#[derive(Debug, Clone, PartialEq)]
pub enum Tracker {
    Median(NoiseFloorState),
    Ema(EmaTracker),
}

impl Tracker {
    pub fn new(mode: TrackerMode, bins: &[usize], gamma_d: usize, gamma_a: usize) -> Result<Self, NoiseFloorError> {
        Ok(match mode {
            TrackerMode::MedianCascade => Tracker::Median(NoiseFloorState::new(bins, gamma_d, gamma_a)?),
            TrackerMode::Ema { alpha } => Tracker::Ema(EmaTracker::new(bins.len(), alpha)?),
        })
    }

    pub fn update_at(&mut self, position: usize, magnitude: f64) -> Result<f64, NoiseFloorError> {
        match self {
            Tracker::Median(s) => s.update_at(position, magnitude),
            Tracker::Ema(e) => e.update_at(position, magnitude),
        }
    }

    pub fn estimates(&self) -> Vec<f64> {
        match self {
            Tracker::Median(s) => s.estimates(),
            Tracker::Ema(e) => e.estimates(),
        }
    }
}
