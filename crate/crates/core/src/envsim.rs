//! Synthetic sensor streams with ground-truth event annotations.
//!
//! A scenario is a sequence of phases, each with its own ambient level
//! (optionally ramped linearly across the phase). Events are bin-centred
//! sinusoids placed at seeded random, non-overlapping frames. Their amplitude
//! is set so the event alone contributes `amplitude_ratio` times the
//! expected ambient magnitude of the target bin.
//!
//! Two ambient models are available:
//!
//! * [`NoiseKind::White`]: i.i.d. Gaussian samples with standard deviation
//!   equal to the level. Every bin magnitude is Rayleigh distributed, so the
//!   per-frame spread is about half the mean.
//! * [`NoiseKind::DiffuseClutter`]: a random-phase multisine covering every
//!   bin in `1..N/2` with unit total variance, scaled by the level, plus white
//!   measurement noise at `measurement_noise * level`. Energy is spread
//!   evenly over the band, but each bin's magnitude is stable frame to frame
//!   (Rician with a large K factor).
//!
//! All randomness comes from [`ChaCha8Rng`] seeded with the scenario seed:
//! stream 0 drives event placement, stream 1 drives sample generation.

use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::noisefloor::{DEFAULT_GAMMA_A, DEFAULT_GAMMA_D};
use crate::spectral::{BinSet, Frame, SpectralError};

/// Recorded in run reports so streams can be regenerated.
pub const PRNG_ID: &str = "rand_chacha::ChaCha8Rng seed_from_u64(seed); stream 0 placement, stream 1 samples";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("scenario has no phases")]
    NoPhases,
    #[error("phase `{0}` has zero frames")]
    EmptyPhase(String),
    #[error("phase `{phase}`: noise level {value} must be finite and >= 0")]
    InvalidLevel { phase: String, value: f64 },
    #[error("amplitude ratio must exceed 1, got {0}")]
    AmplitudeRatio(f64),
    #[error("event duration must be >= 1")]
    ZeroDuration,
    #[error("events need at least one target bin")]
    NoTargetBins,
    #[error("target bin {0} is not a monitored bin")]
    UnmonitoredTarget(usize),
    #[error("target bin {bin} must lie strictly between 0 and {nyquist}")]
    TargetAtEdge { bin: usize, nyquist: usize },
    #[error("measurement noise ratio {0} must be finite and >= 0")]
    MeasurementNoise(f64),
    #[error("off-grid period must be >= 2, got {0}")]
    GridPeriod(usize),
    #[error("phase `{phase}`: only {placed} of {wanted} events fit without overlap")]
    CannotFit {
        phase: String,
        wanted: usize,
        placed: usize,
    },
    #[error("ground truth intervals overlap or are unsorted at start {0}")]
    OverlappingTruth(u64),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseKind {
    #[default]
    White,
    DiffuseClutter {
        measurement_noise: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameParams {
    pub frame_size: usize,
    pub sample_rate_hz: f64,
    pub bins: Vec<usize>,
}

/// Linear ramp of the level multiplier across a phase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Ramp {
    pub start: f64,
    pub end: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseModel {
    pub broadband_level: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ramp: Option<Ramp>,
}

impl NoiseModel {
    pub fn constant(level: f64) -> Self {
        Self {
            broadband_level: level,
            ramp: None,
        }
    }

    /// Level at position `i` of a phase of `len` frames.
    pub fn level_at(&self, i: usize, len: usize) -> f64 {
        match self.ramp {
            None => self.broadband_level,
            Some(r) => {
                let t = if len > 1 { i as f64 / (len - 1) as f64 } else { 0.0 };
                self.broadband_level * (r.start + (r.end - r.start) * t)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseSpec {
    pub name: String,
    pub frame_count: usize,
    pub noise: NoiseModel,
    pub event_count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Placement {
    #[default]
    Random,
    /// Random, but no event frame is a multiple of `period`.
    OffGrid { period: usize },
}

fn default_duration() -> usize {
    1
}

fn default_guard() -> usize {
    DEFAULT_GAMMA_D + DEFAULT_GAMMA_A
}

fn default_gap() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventSpec {
    pub target_bins: Vec<usize>,
    pub amplitude_ratio: f64,
    #[serde(default = "default_duration")]
    pub duration_frames: usize,
    #[serde(default)]
    pub placement: Placement,
    /// No event starts before this frame (pipeline warm-up).
    #[serde(default = "default_guard")]
    pub guard_frames: usize,
    /// Minimum number of event-free frames between two events.
    #[serde(default = "default_gap")]
    pub min_gap_frames: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    #[serde(default)]
    pub noise: NoiseKind,
    pub frame: FrameParams,
    pub events: EventSpec,
    pub phases: Vec<PhaseSpec>,
}

/// One annotated event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruthInterval {
    pub start: u64,
    /// Exclusive.
    pub end: u64,
    pub bin: usize,
}

impl TruthInterval {
    pub fn contains(&self, frame: u64) -> bool {
        self.start <= frame && frame < self.end
    }

    pub fn len(&self) -> u64 {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct GroundTruth {
    intervals: Vec<TruthInterval>,
}

impl GroundTruth {
    pub fn new(intervals: Vec<TruthInterval>) -> Result<Self, ScenarioError> {
        for w in intervals.windows(2) {
            if w[1].start < w[0].end {
                return Err(ScenarioError::OverlappingTruth(w[1].start));
            }
        }
        if let Some(bad) = intervals.iter().find(|iv| iv.is_empty()) {
            return Err(ScenarioError::OverlappingTruth(bad.start));
        }
        Ok(Self { intervals })
    }

    pub fn intervals(&self) -> &[TruthInterval] {
        &self.intervals
    }

    pub fn len(&self) -> usize {
        self.intervals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    /// Index of the interval containing `frame`.
    pub fn interval_at(&self, frame: u64) -> Option<usize> {
        let i = self.intervals.partition_point(|iv| iv.end <= frame);
        (i < self.intervals.len() && self.intervals[i].contains(frame)).then_some(i)
    }
}

/// Frame range `[start, end)` of one phase within the stream.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseRange {
    pub name: String,
    pub start: u64,
    pub end: u64,
}

impl PhaseRange {
    pub fn contains(&self, frame: u64) -> bool {
        self.start <= frame && frame < self.end
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedScenario {
    pub frames: Vec<Frame>,
    pub truth: GroundTruth,
}

impl ScenarioConfig {
    /// Three phases of 2,800 / 2,000 / 1,984 frames carrying 98 / 11 / 30
    /// one-frame events; the ambient level rises fivefold over the transition.
    pub fn replica(seed: u64) -> Self {
        let low = 3.5;
        Self {
            seed,
            noise: NoiseKind::DiffuseClutter {
                measurement_noise: 0.05,
            },
            frame: FrameParams {
                frame_size: 128,
                sample_rate_hz: 1000.0,
                bins: vec![4, 8, 12, 16, 20, 24, 28, 32],
            },
            events: EventSpec {
                target_bins: vec![8, 16, 24],
                amplitude_ratio: 3.0,
                duration_frames: 1,
                placement: Placement::Random,
                guard_frames: default_guard(),
                min_gap_frames: default_gap(),
            },
            phases: vec![
                PhaseSpec {
                    name: "low-noise".into(),
                    frame_count: 2800,
                    noise: NoiseModel::constant(low),
                    event_count: 98,
                },
                PhaseSpec {
                    name: "transition".into(),
                    frame_count: 2000,
                    noise: NoiseModel {
                        broadband_level: low,
                        ramp: Some(Ramp { start: 1.0, end: 5.0 }),
                    },
                    event_count: 11,
                },
                PhaseSpec {
                    name: "high-noise".into(),
                    frame_count: 1984,
                    noise: NoiseModel::constant(5.0 * low),
                    event_count: 30,
                },
            ],
        }
    }

    pub fn total_frames(&self) -> usize {
        self.phases.iter().map(|p| p.frame_count).sum()
    }

    pub fn total_events(&self) -> usize {
        self.phases.iter().map(|p| p.event_count).sum()
    }

    pub fn phase_ranges(&self) -> Vec<PhaseRange> {
        let mut start = 0u64;
        self.phases
            .iter()
            .map(|p| {
                let r = PhaseRange {
                    name: p.name.clone(),
                    start,
                    end: start + p.frame_count as u64,
                };
                start = r.end;
                r
            })
            .collect()
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.phases.is_empty() {
            return Err(ScenarioError::NoPhases);
        }
        let n = self.frame.frame_size;
        let bins = BinSet::new(self.frame.bins.clone(), n)?;
        Frame::new(vec![0.0; n], 0, self.frame.sample_rate_hz)?;
        for p in &self.phases {
            if p.frame_count == 0 {
                return Err(ScenarioError::EmptyPhase(p.name.clone()));
            }
            let mut levels = vec![p.noise.broadband_level];
            if let Some(r) = p.noise.ramp {
                levels.extend([r.start, r.end]);
            }
            if let Some(&value) = levels.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
                return Err(ScenarioError::InvalidLevel {
                    phase: p.name.clone(),
                    value,
                });
            }
        }
        if let NoiseKind::DiffuseClutter { measurement_noise } = self.noise {
            if !(measurement_noise.is_finite() && measurement_noise >= 0.0) {
                return Err(ScenarioError::MeasurementNoise(measurement_noise));
            }
        }
        let ev = &self.events;
        if self.total_events() > 0 {
            if ev.target_bins.is_empty() {
                return Err(ScenarioError::NoTargetBins);
            }
            for &b in &ev.target_bins {
                if !bins.contains(b) {
                    return Err(ScenarioError::UnmonitoredTarget(b));
                }
                if b == 0 || b >= n / 2 {
                    return Err(ScenarioError::TargetAtEdge { bin: b, nyquist: n / 2 });
                }
            }
        }
        if !(ev.amplitude_ratio > 1.0 && ev.amplitude_ratio.is_finite()) {
            return Err(ScenarioError::AmplitudeRatio(ev.amplitude_ratio));
        }
        if ev.duration_frames == 0 {
            return Err(ScenarioError::ZeroDuration);
        }
        if let Placement::OffGrid { period } = ev.placement {
            if period < 2 {
                return Err(ScenarioError::GridPeriod(period));
            }
        }
        Ok(())
    }

    /// Expected magnitude of a mid-band bin under ambient level `level`.
    pub fn expected_bin_magnitude(&self, level: f64) -> f64 {
        expected_bin_magnitude(self.noise, self.frame.frame_size, level)
    }
}

/// Mean bin magnitude for white noise (Rayleigh), RMS bin magnitude for
/// diffuse clutter.
pub fn expected_bin_magnitude(noise: NoiseKind, frame_size: usize, level: f64) -> f64 {
    let n = frame_size as f64;
    match noise {
        NoiseKind::White => level * (n * PI).sqrt() / 2.0,
        NoiseKind::DiffuseClutter { measurement_noise } => {
            let tone = level * clutter_component_amplitude(frame_size) * n / 2.0;
            let white = level * measurement_noise;
            (tone * tone + n * white * white).sqrt()
        }
    }
}

/// Per-component amplitude giving the multisine unit variance.
fn clutter_component_amplitude(frame_size: usize) -> f64 {
    let components = (frame_size / 2 - 1) as f64;
    (2.0 / components).sqrt()
}

fn place_events(scenario: &ScenarioConfig, rng: &mut ChaCha8Rng) -> Result<GroundTruth, ScenarioError> {
    let ev = &scenario.events;
    let total = scenario.total_frames() as u64;
    let dur = ev.duration_frames as u64;
    let gap = ev.min_gap_frames as u64;
    let mut blocked = vec![false; total as usize];
    let mut intervals = Vec::new();

    for (phase, range) in scenario.phases.iter().zip(scenario.phase_ranges()) {
        if phase.event_count == 0 {
            continue;
        }
        let first = range.start.max(ev.guard_frames as u64);
        let on_grid = |f: u64| matches!(ev.placement, Placement::OffGrid { period } if f.is_multiple_of(period as u64));
        let mut candidates: Vec<u64> = if range.end >= first + dur {
            (first..=range.end - dur)
                .filter(|&s| !(s..s + dur).any(on_grid))
                .collect()
        } else {
            Vec::new()
        };
        candidates.shuffle(rng);

        let mut placed = 0;
        for s in candidates {
            if placed == phase.event_count {
                break;
            }
            if (s..s + dur).any(|f| blocked[f as usize]) {
                continue;
            }
            let lo = s.saturating_sub(gap);
            let hi = (s + dur + gap).min(total);
            blocked[lo as usize..hi as usize].iter_mut().for_each(|b| *b = true);
            let bin = ev.target_bins[rng.random_range(0..ev.target_bins.len())];
            intervals.push(TruthInterval {
                start: s,
                end: s + dur,
                bin,
            });
            placed += 1;
        }
        if placed < phase.event_count {
            return Err(ScenarioError::CannotFit {
                phase: phase.name.clone(),
                wanted: phase.event_count,
                placed,
            });
        }
    }
    intervals.sort_by_key(|iv| iv.start);
    GroundTruth::new(intervals)
}

/// Cos/sin of `2 pi m / N` for `m` in `0..N`.
struct PhaseTable {
    cos: Vec<f64>,
    sin: Vec<f64>,
}

impl PhaseTable {
    fn new(n: usize) -> Self {
        let (cos, sin) = (0..n)
            .map(|m| {
                let a = 2.0 * PI * m as f64 / n as f64;
                (a.cos(), a.sin())
            })
            .unzip();
        Self { cos, sin }
    }

    /// Adds `amp * cos(2 pi k i / N + phase)` to `out`.
    fn add_tone(&self, out: &mut [f64], k: usize, amp: f64, phase: f64) {
        let n = out.len();
        let (c, s) = (phase.cos(), phase.sin());
        for (i, x) in out.iter_mut().enumerate() {
            let m = (k * i) % n;
            *x += amp * (self.cos[m] * c - self.sin[m] * s);
        }
    }
}

/// Generates the frame stream and its annotations.
pub fn generate(scenario: &ScenarioConfig) -> Result<GeneratedScenario, ScenarioError> {
    scenario.validate()?;
    let mut placement_rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    placement_rng.set_stream(0);
    let truth = place_events(scenario, &mut placement_rng)?;

    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    rng.set_stream(1);
    let n = scenario.frame.frame_size;
    let fs = scenario.frame.sample_rate_hz;
    let table = PhaseTable::new(n);
    let clutter_amp = clutter_component_amplitude(n);

    let mut frames = Vec::with_capacity(scenario.total_frames());
    let mut next_interval = 0;
    let intervals = truth.intervals();
    let mut index = 0u64;
    for phase in &scenario.phases {
        for i in 0..phase.frame_count {
            let level = phase.noise.level_at(i, phase.frame_count);
            let mut samples = vec![0.0; n];
            match scenario.noise {
                NoiseKind::White => {
                    for x in samples.iter_mut() {
                        let z: f64 = rng.sample(StandardNormal);
                        *x = level * z;
                    }
                }
                NoiseKind::DiffuseClutter { measurement_noise } => {
                    for k in 1..n / 2 {
                        let phi = rng.random_range(0.0..2.0 * PI);
                        table.add_tone(&mut samples, k, level * clutter_amp, phi);
                    }
                    for x in samples.iter_mut() {
                        let z: f64 = rng.sample(StandardNormal);
                        *x += level * measurement_noise * z;
                    }
                }
            }

            while next_interval < intervals.len() && intervals[next_interval].end <= index {
                next_interval += 1;
            }
            if let Some(iv) = intervals.get(next_interval).filter(|iv| iv.contains(index)) {
                let target = scenario.events.amplitude_ratio * scenario.expected_bin_magnitude(level);
                let amp = 2.0 * target / n as f64;
                let phi = rng.random_range(0.0..2.0 * PI);
                table.add_tone(&mut samples, iv.bin, amp, phi);
            }

            frames.push(Frame::new(samples, index, fs)?);
            index += 1;
        }
    }
    Ok(GeneratedScenario { frames, truth })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{magnitude, FftPlan};

    fn small(noise: NoiseKind, level: f64, events: usize) -> ScenarioConfig {
        ScenarioConfig {
            seed: 9,
            noise,
            frame: FrameParams {
                frame_size: 64,
                sample_rate_hz: 500.0,
                bins: vec![4, 8, 12],
            },
            events: EventSpec {
                target_bins: vec![8],
                amplitude_ratio: 4.0,
                duration_frames: 1,
                placement: Placement::Random,
                guard_frames: 10,
                min_gap_frames: 1,
            },
            phases: vec![PhaseSpec {
                name: "only".into(),
                frame_count: 200,
                noise: NoiseModel::constant(level),
                event_count: events,
            }],
        }
    }

    #[test]
    fn silent_scenario() {
        let g = generate(&small(NoiseKind::White, 0.0, 0)).unwrap();
        assert_eq!(g.frames.len(), 200);
        assert!(g.truth.is_empty());
        assert!(g.frames.iter().all(|f| f.samples().iter().all(|&x| x == 0.0)));
    }

    #[test]
    fn replica_structure() {
        let s = ScenarioConfig::replica(42);
        assert_eq!(s.total_frames(), 6784);
        assert_eq!(s.total_events(), 139);
        let counts: Vec<usize> = s.phases.iter().map(|p| p.frame_count).collect();
        assert_eq!(counts, vec![2800, 2000, 1984]);
        let g = generate(&s).unwrap();
        assert_eq!(g.frames.len(), 6784);
        assert_eq!(g.truth.len(), 139);
        let ranges = s.phase_ranges();
        let per_phase: Vec<usize> = ranges
            .iter()
            .map(|r| g.truth.intervals().iter().filter(|iv| r.contains(iv.start)).count())
            .collect();
        assert_eq!(per_phase, vec![98, 11, 30]);
        assert!(g.truth.intervals().iter().all(|iv| iv.start >= 67));
    }

    #[test]
    fn seeded_placement_is_reproducible() {
        let s = small(NoiseKind::White, 1.0, 1);
        let a = generate(&s).unwrap();
        let b = generate(&s).unwrap();
        assert_eq!(a.truth.len(), 1);
        assert_eq!(a, b);
        let c = generate(&ScenarioConfig { seed: 10, ..s }).unwrap();
        assert_ne!(a.frames, c.frames);
    }

    #[test]
    fn events_are_separated_and_sorted() {
        let mut s = small(NoiseKind::White, 1.0, 35);
        s.events.duration_frames = 2;
        let g = generate(&s).unwrap();
        assert_eq!(g.truth.len(), 35);
        for w in g.truth.intervals().windows(2) {
            assert!(w[1].start > w[0].end);
        }
    }

    #[test]
    fn off_grid_placement() {
        let mut s = small(NoiseKind::White, 1.0, 40);
        s.events.placement = Placement::OffGrid { period: 4 };
        let g = generate(&s).unwrap();
        assert!(g.truth.intervals().iter().all(|iv| iv.start % 4 != 0));
    }

    #[test]
    fn overfull_phase_is_rejected() {
        let s = small(NoiseKind::White, 1.0, 150);
        assert!(matches!(
            generate(&s),
            Err(ScenarioError::CannotFit { wanted: 150, .. })
        ));
    }

    #[test]
    fn validation_errors() {
        let base = small(NoiseKind::White, 1.0, 1);
        let mut s = base.clone();
        s.phases.clear();
        assert_eq!(s.validate(), Err(ScenarioError::NoPhases));
        let mut s = base.clone();
        s.events.target_bins = vec![5];
        assert_eq!(s.validate(), Err(ScenarioError::UnmonitoredTarget(5)));
        let mut s = base.clone();
        s.events.amplitude_ratio = 1.0;
        assert!(s.validate().is_err());
        let mut s = base.clone();
        s.phases[0].noise.broadband_level = -1.0;
        assert!(matches!(s.validate(), Err(ScenarioError::InvalidLevel { .. })));
        let mut s = base.clone();
        s.phases[0].frame_count = 0;
        assert!(matches!(s.validate(), Err(ScenarioError::EmptyPhase(_))));
        let mut s = base;
        s.frame.frame_size = 48;
        assert!(s.validate().is_err());
    }

    #[test]
    fn ramp_levels() {
        let m = NoiseModel {
            broadband_level: 2.0,
            ramp: Some(Ramp { start: 1.0, end: 5.0 }),
        };
        assert_eq!(m.level_at(0, 5), 2.0);
        assert_eq!(m.level_at(4, 5), 10.0);
        assert_eq!(m.level_at(2, 5), 6.0);
        assert_eq!(m.level_at(0, 1), 2.0);
    }

    #[test]
    fn event_energy_lands_in_target_bin() {
        for noise in [
            NoiseKind::White,
            NoiseKind::DiffuseClutter {
                measurement_noise: 0.05,
            },
        ] {
            let mut s = small(noise, 1.0, 20);
            s.events.amplitude_ratio = 8.0;
            let g = generate(&s).unwrap();
            let plan = FftPlan::new(64).unwrap();
            let bins = BinSet::new(s.frame.bins.clone(), 64).unwrap();
            let floor = s.expected_bin_magnitude(1.0);
            for iv in g.truth.intervals() {
                let f = &g.frames[iv.start as usize];
                let mags = magnitude(&plan.forward(f.samples()).unwrap(), &bins, 0)
                    .unwrap()
                    .magnitudes;
                let excess: Vec<f64> = mags.iter().map(|m| m - floor).collect();
                let best = excess
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                    .unwrap()
                    .0;
                assert_eq!(bins.indices()[best], iv.bin);
            }
        }
    }

    #[test]
    fn clutter_bins_match_expected_magnitude() {
        let s = small(NoiseKind::DiffuseClutter { measurement_noise: 0.0 }, 2.0, 0);
        let g = generate(&s).unwrap();
        let plan = FftPlan::new(64).unwrap();
        let bins = BinSet::new(s.frame.bins.clone(), 64).unwrap();
        let expected = s.expected_bin_magnitude(2.0);
        for f in g.frames.iter().take(20) {
            let mags = magnitude(&plan.forward(f.samples()).unwrap(), &bins, 0)
                .unwrap()
                .magnitudes;
            for m in mags {
                assert!((m - expected).abs() < 1e-9 * expected);
            }
            let var = f.samples().iter().map(|x| x * x).sum::<f64>() / 64.0;
            assert!((var - 4.0).abs() < 1e-9);
        }
    }

    #[test]
    fn white_noise_bin_mean_is_rayleigh() {
        let s = small(NoiseKind::White, 1.5, 0);
        let mut s = s;
        s.phases[0].frame_count = 4000;
        let g = generate(&s).unwrap();
        let plan = FftPlan::new(64).unwrap();
        let bins = BinSet::new(vec![8], 64).unwrap();
        let mean = g
            .frames
            .iter()
            .map(|f| {
                magnitude(&plan.forward(f.samples()).unwrap(), &bins, 0)
                    .unwrap()
                    .magnitudes[0]
            })
            .sum::<f64>()
            / 4000.0;
        let expected = s.expected_bin_magnitude(1.5);
        // Rayleigh std/mean ~ 0.52, so the sample mean is within ~1% here.
        assert!((mean / expected - 1.0).abs() < 0.03, "{mean} vs {expected}");
    }

    #[test]
    fn truth_lookup_and_validation() {
        let t = GroundTruth::new(vec![
            TruthInterval {
                start: 3,
                end: 5,
                bin: 1,
            },
            TruthInterval {
                start: 9,
                end: 10,
                bin: 1,
            },
        ])
        .unwrap();
        assert_eq!(t.interval_at(4), Some(0));
        assert_eq!(t.interval_at(5), None);
        assert_eq!(t.interval_at(9), Some(1));
        assert_eq!(t.interval_at(100), None);
        assert!(GroundTruth::new(vec![
            TruthInterval {
                start: 3,
                end: 5,
                bin: 1
            },
            TruthInterval {
                start: 4,
                end: 6,
                bin: 1
            },
        ])
        .is_err());
    }

    #[test]
    fn scenario_toml_roundtrip() {
        let s = ScenarioConfig::replica(7);
        let text = toml::to_string(&s).unwrap();
        let back: ScenarioConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, s);
    }
}
