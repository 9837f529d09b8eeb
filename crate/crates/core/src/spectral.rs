//! Spectral feature extraction.
//!
//! A frame of `N` real samples is transformed with an iterative radix-2
//! Cooley-Tukey FFT and reduced to magnitudes at a fixed set of monitored
//! bins. Twiddle factors and the bit-reversal permutation are computed once
//! per frame size in [`FftPlan`], so the per-frame path does no trigonometry.
//!
//! The transform is unscaled: `X[k] = sum_n x[n] exp(-j 2 pi k n / N)`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Smallest supported frame size.
pub const MIN_FRAME_SIZE: usize = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error("frame size {0} is not a power of two >= {MIN_FRAME_SIZE}")]
    InvalidFrameSize(usize),
    #[error("expected {expected} samples, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("sample {index} is not finite ({value})")]
    NonFiniteSample { index: usize, value: f64 },
    #[error("sample rate must be positive and finite, got {0}")]
    InvalidSampleRate(f64),
    #[error("bin set must not be empty")]
    EmptyBinSet,
    #[error("bin {bin} is outside [0, {max}]")]
    BinOutOfRange { bin: usize, max: usize },
    #[error("bins must be strictly increasing ({prev} then {next})")]
    BinsNotIncreasing { prev: usize, next: usize },
}

fn check_frame_size(n: usize) -> Result<(), SpectralError> {
    if n < MIN_FRAME_SIZE || !n.is_power_of_two() {
        return Err(SpectralError::InvalidFrameSize(n));
    }
    Ok(())
}

fn check_finite(samples: &[f64]) -> Result<(), SpectralError> {
    match samples.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(SpectralError::NonFiniteSample {
            index,
            value: samples[index],
        }),
        None => Ok(()),
    }
}

/// One acquisition window.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    samples: Vec<f64>,
    frame_index: u64,
    sample_rate_hz: f64,
}

impl Frame {
    pub fn new(samples: Vec<f64>, frame_index: u64, sample_rate_hz: f64) -> Result<Self, SpectralError> {
        check_frame_size(samples.len())?;
        check_finite(&samples)?;
        if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
            return Err(SpectralError::InvalidSampleRate(sample_rate_hz));
        }
        Ok(Self {
            samples,
            frame_index,
            sample_rate_hz,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn frame_index(&self) -> u64 {
        self.frame_index
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }
}

/// Ordered set of monitored bin indices, valid for one frame size.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct BinSet {
    bins: Vec<usize>,
}

impl BinSet {
    /// Builds a bin set without a frame-size check; indices must still be
    /// strictly increasing. Use [`BinSet::validate_for`] before use with a
    /// particular `N`.
    pub fn from_indices(bins: Vec<usize>) -> Result<Self, SpectralError> {
        if bins.is_empty() {
            return Err(SpectralError::EmptyBinSet);
        }
        for pair in bins.windows(2) {
            if pair[1] <= pair[0] {
                return Err(SpectralError::BinsNotIncreasing {
                    prev: pair[0],
                    next: pair[1],
                });
            }
        }
        Ok(Self { bins })
    }

    pub fn new(bins: Vec<usize>, frame_size: usize) -> Result<Self, SpectralError> {
        let set = Self::from_indices(bins)?;
        set.validate_for(frame_size)?;
        Ok(set)
    }

    pub fn validate_for(&self, frame_size: usize) -> Result<(), SpectralError> {
        let max = frame_size / 2;
        match self.bins.iter().find(|&&b| b > max) {
            Some(&bin) => Err(SpectralError::BinOutOfRange { bin, max }),
            None => Ok(()),
        }
    }

    pub fn indices(&self) -> &[usize] {
        &self.bins
    }

    pub fn len(&self) -> usize {
        self.bins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }

    /// Position of spectral bin `bin` within the set.
    pub fn position(&self, bin: usize) -> Option<usize> {
        self.bins.binary_search(&bin).ok()
    }

    pub fn contains(&self, bin: usize) -> bool {
        self.position(bin).is_some()
    }
}

impl TryFrom<Vec<usize>> for BinSet {
    type Error = SpectralError;

    fn try_from(bins: Vec<usize>) -> Result<Self, Self::Error> {
        Self::from_indices(bins)
    }
}

impl From<BinSet> for Vec<usize> {
    fn from(set: BinSet) -> Self {
        set.bins
    }
}

/// Magnitudes at the monitored bins for one frame, aligned with its [`BinSet`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralFeatures {
    pub frame_index: u64,
    pub magnitudes: Vec<f64>,
}

/// Optional analysis window applied before the transform.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Window {
    /// No weighting.
    #[default]
    Rectangular,
    Hann,
}

impl Window {
    fn coefficients(self, n: usize) -> Option<Vec<f64>> {
        match self {
            Window::Rectangular => None,
            Window::Hann => Some(
                (0..n)
                    .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
                    .collect(),
            ),
        }
    }
}

/// Precomputed FFT tables for one frame size.
#[derive(Debug, Clone)]
pub struct FftPlan {
    n: usize,
    /// `exp(-j 2 pi m / N)` for `m` in `0..N/2`.
    twiddles: Vec<Complex64>,
    bit_reverse: Vec<usize>,
    window: Option<Vec<f64>>,
}

impl FftPlan {
    pub fn new(n: usize) -> Result<Self, SpectralError> {
        Self::with_window(n, Window::Rectangular)
    }

    pub fn with_window(n: usize, window: Window) -> Result<Self, SpectralError> {
        check_frame_size(n)?;
        let twiddles = (0..n / 2)
            .map(|m| Complex64::from_polar(1.0, -2.0 * PI * m as f64 / n as f64))
            .collect();
        let bits = n.trailing_zeros();
        let bit_reverse = (0..n).map(|i| i.reverse_bits() >> (usize::BITS - bits)).collect();
        Ok(Self {
            n,
            twiddles,
            bit_reverse,
            window: window.coefficients(n),
        })
    }

    pub fn size(&self) -> usize {
        self.n
    }

    /// Forward transform of a real frame.
    pub fn forward(&self, samples: &[f64]) -> Result<Vec<Complex64>, SpectralError> {
        if samples.len() != self.n {
            return Err(SpectralError::LengthMismatch {
                expected: self.n,
                actual: samples.len(),
            });
        }
        check_finite(samples)?;
        let mut buf: Vec<Complex64> = match &self.window {
            Some(w) => samples
                .iter()
                .zip(w)
                .map(|(&x, &w)| Complex64::new(x * w, 0.0))
                .collect(),
            None => samples.iter().map(|&x| Complex64::new(x, 0.0)).collect(),
        };
        self.transform_in_place(&mut buf);
        Ok(buf)
    }

    /// Decimation-in-time butterflies over a buffer of length `N`.
    fn transform_in_place(&self, buf: &mut [Complex64]) {
        let n = self.n;
        for (i, &j) in self.bit_reverse.iter().enumerate() {
            if i < j {
                buf.swap(i, j);
            }
        }
        let mut size = 2;
        while size <= n {
            let half = size / 2;
            let stride = n / size;
            for start in (0..n).step_by(size) {
                for k in 0..half {
                    let w = self.twiddles[k * stride];
                    let u = buf[start + k];
                    let v = buf[start + k + half] * w;
                    buf[start + k] = u + v;
                    buf[start + k + half] = u - v;
                }
            }
            size *= 2;
        }
    }
}

/// FFT of a validated frame. Builds a one-off plan; reuse an [`FftPlan`] for streams.
pub fn fft(frame: &Frame) -> Result<Vec<Complex64>, SpectralError> {
    FftPlan::new(frame.len())?.forward(frame.samples())
}

/// `|X[k]| = sqrt(Re^2 + Im^2)` at each monitored bin.
pub fn magnitude(spectrum: &[Complex64], bins: &BinSet, frame_index: u64) -> Result<SpectralFeatures, SpectralError> {
    let max = spectrum.len() / 2;
    let magnitudes = bins
        .indices()
        .iter()
        .map(|&k| {
            if k > max || k >= spectrum.len() {
                return Err(SpectralError::BinOutOfRange { bin: k, max });
            }
            let x = spectrum[k];
            Ok((x.re * x.re + x.im * x.im).sqrt())
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SpectralFeatures {
        frame_index,
        magnitudes,
    })
}

/// Center frequency of bin `k`.
pub fn bin_frequency_hz(k: usize, frame_size: usize, sample_rate_hz: f64) -> f64 {
    k as f64 * sample_rate_hz / frame_size as f64
}
