//! Multiplicative threshold test, OR aggregation over bins, and the compact
//! event payload.
//!
//! Payload layout (64-bit, little-endian on the wire):
//!
//! | bits     | field                                        |
//! |----------|----------------------------------------------|
//! | `0..32`  | frame delta since the previous event         |
//! | `32..40` | spectral bin index of the firing bin         |
//! | `40..56` | strength `|X_k| / N_k`, unsigned Q8.8, saturating |
//! | `56..64` | reserved, zero                               |

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_ZETA: f64 = 1.5;
/// Payload size in bits.
pub const PAYLOAD_BITS: u32 = 64;
const STRENGTH_ONE: f64 = 256.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TriggerError {
    #[error("non-finite decision input (magnitude {magnitude}, estimate {estimate}, zeta {zeta})")]
    NonFinite { magnitude: f64, estimate: f64, zeta: f64 },
    #[error("negative decision input (magnitude {magnitude}, estimate {estimate})")]
    Negative { magnitude: f64, estimate: f64 },
    #[error("threshold coefficient {0} is below 1")]
    ZetaBelowOne(f64),
    #[error("empty decision vector")]
    NoDecisions,
    #[error("frame delta {0} does not fit in 32 bits")]
    FrameDeltaRange(u64),
    #[error("bin id {0} does not fit in 8 bits")]
    BinIdRange(usize),
    #[error("strength must be finite and non-negative, got {0}")]
    InvalidStrength(f64),
    #[error("reserved payload bits are set: {0:#018x}")]
    ReservedBits(u64),
    #[error("event at frame {frame} precedes previous event at {previous}")]
    OutOfOrder { frame: u64, previous: u64 },
}

/// Per-bin threshold coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ThresholdConfig {
    zeta: Vec<f64>,
}

impl ThresholdConfig {
    pub fn new(zeta: Vec<f64>) -> Result<Self, TriggerError> {
        for &z in &zeta {
            if !z.is_finite() {
                return Err(TriggerError::NonFinite {
                    magnitude: 0.0,
                    estimate: 0.0,
                    zeta: z,
                });
            }
            if z < 1.0 {
                return Err(TriggerError::ZetaBelowOne(z));
            }
            if z > 2.0 {
                log::warn!("threshold coefficient {z} is above the usual [1, 2] range");
            }
        }
        Ok(Self { zeta })
    }

    pub fn uniform(bins: usize, zeta: f64) -> Result<Self, TriggerError> {
        Self::new(vec![zeta; bins])
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.zeta
    }

    pub fn len(&self) -> usize {
        self.zeta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.zeta.is_empty()
    }
}

impl TryFrom<Vec<f64>> for ThresholdConfig {
    type Error = TriggerError;

    fn try_from(zeta: Vec<f64>) -> Result<Self, Self::Error> {
        Self::new(zeta)
    }
}

impl From<ThresholdConfig> for Vec<f64> {
    fn from(t: ThresholdConfig) -> Self {
        t.zeta
    }
}

/// `D_k = magnitude > zeta * estimate`, strictly.
pub fn decide_bin(magnitude: f64, estimate: f64, zeta: f64) -> Result<bool, TriggerError> {
    if !(magnitude.is_finite() && estimate.is_finite() && zeta.is_finite()) {
        return Err(TriggerError::NonFinite {
            magnitude,
            estimate,
            zeta,
        });
    }
    if magnitude < 0.0 || estimate < 0.0 {
        return Err(TriggerError::Negative { magnitude, estimate });
    }
    if zeta < 1.0 {
        return Err(TriggerError::ZetaBelowOne(zeta));
    }
    Ok(magnitude > zeta * estimate)
}

/// `E = any(D_k)`.
pub fn decide_event(decisions: &[bool]) -> Result<bool, TriggerError> {
    if decisions.is_empty() {
        return Err(TriggerError::NoDecisions);
    }
    Ok(decisions.iter().any(|&d| d))
}

/// Position of the lowest-index bin that fired.
pub fn first_firing(decisions: &[bool]) -> Option<usize> {
    decisions.iter().position(|&d| d)
}

/// One system-level trigger.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TriggerEvent {
    /// Frames since the previous event; absolute frame index for the first.
    pub frame_delta: u64,
    /// Spectral bin index of the firing bin.
    pub bin_id: usize,
    /// `|X_k| / N_k` at the firing bin.
    pub strength: f64,
}

pub fn encode_event(event: &TriggerEvent) -> Result<u64, TriggerError> {
    if event.frame_delta > u32::MAX as u64 {
        return Err(TriggerError::FrameDeltaRange(event.frame_delta));
    }
    if event.bin_id > u8::MAX as usize {
        return Err(TriggerError::BinIdRange(event.bin_id));
    }
    if event.strength.is_nan() || event.strength < 0.0 {
        return Err(TriggerError::InvalidStrength(event.strength));
    }
    // +inf saturates like any large ratio.
    let q = (event.strength * STRENGTH_ONE).round().min(u16::MAX as f64) as u64;
    Ok(event.frame_delta | (event.bin_id as u64) << 32 | q << 40)
}

pub fn decode_event(payload: u64) -> Result<TriggerEvent, TriggerError> {
    if payload >> 56 != 0 {
        return Err(TriggerError::ReservedBits(payload));
    }
    Ok(TriggerEvent {
        frame_delta: payload & 0xFFFF_FFFF,
        bin_id: ((payload >> 32) & 0xFF) as usize,
        strength: ((payload >> 40) & 0xFFFF) as f64 / STRENGTH_ONE,
    })
}

/// Turns absolute event frame indices into frame deltas.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DeltaEncoder {
    last_frame: Option<u64>,
}

impl DeltaEncoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn event_at(&mut self, frame_index: u64, bin_id: usize, strength: f64) -> Result<TriggerEvent, TriggerError> {
        let frame_delta = match self.last_frame {
            Some(prev) if frame_index < prev => {
                return Err(TriggerError::OutOfOrder {
                    frame: frame_index,
                    previous: prev,
                })
            }
            Some(prev) => frame_index - prev,
            None => frame_index,
        };
        self.last_frame = Some(frame_index);
        Ok(TriggerEvent {
            frame_delta,
            bin_id,
            strength,
        })
    }

    pub fn last_frame(&self) -> Option<u64> {
        self.last_frame
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn factor_one_and_a_half() {
        assert!(decide_bin(16.0, 10.0, 1.5).unwrap());
        assert!(!decide_bin(15.0, 10.0, 1.5).unwrap());
        assert!(!decide_bin(0.0, 0.0, 1.0).unwrap());
        assert!(!decide_bin(0.0, 0.0, 2.0).unwrap());
    }

    #[test]
    fn decision_input_errors() {
        assert!(matches!(
            decide_bin(f64::NAN, 1.0, 1.5),
            Err(TriggerError::NonFinite { .. })
        ));
        assert!(matches!(
            decide_bin(1.0, f64::INFINITY, 1.5),
            Err(TriggerError::NonFinite { .. })
        ));
        assert!(matches!(decide_bin(-1.0, 1.0, 1.5), Err(TriggerError::Negative { .. })));
        assert_eq!(decide_bin(1.0, 1.0, 0.5), Err(TriggerError::ZetaBelowOne(0.5)));
    }

    #[test]
    fn or_aggregation() {
        assert!(!decide_event(&[false, false, false]).unwrap());
        assert!(decide_event(&[false, true, false]).unwrap());
        assert!(decide_event(&[true, true, true]).unwrap());
        assert_eq!(first_firing(&[true, true, true]), Some(0));
        assert_eq!(decide_event(&[]), Err(TriggerError::NoDecisions));
    }

    #[test]
    fn or_aggregation_exhaustive() {
        for m in 1..=8usize {
            for pattern in 0u32..(1 << m) {
                let d: Vec<bool> = (0..m).map(|i| pattern >> i & 1 == 1).collect();
                let any = d.iter().any(|&x| x);
                assert_eq!(decide_event(&d).unwrap(), any);
                let lowest = (0..m).find(|&i| pattern >> i & 1 == 1);
                assert_eq!(first_firing(&d), lowest);
            }
        }
    }

    #[test]
    fn threshold_config_bounds() {
        assert!(ThresholdConfig::new(vec![1.0, 1.5, 2.0]).is_ok());
        assert!(ThresholdConfig::new(vec![3.0]).is_ok());
        assert_eq!(ThresholdConfig::new(vec![0.99]), Err(TriggerError::ZetaBelowOne(0.99)));
        assert!(ThresholdConfig::new(vec![f64::NAN]).is_err());
    }

    #[test]
    fn golden_payloads() {
        let zero = TriggerEvent {
            frame_delta: 0,
            bin_id: 0,
            strength: 0.0,
        };
        assert_eq!(encode_event(&zero).unwrap(), 0);

        let e = TriggerEvent {
            frame_delta: 1,
            bin_id: 2,
            strength: 1.5,
        };
        let p = encode_event(&e).unwrap();
        assert_eq!(p, 0x0001_8002_0000_0001);
        assert_eq!(p & 0xFFFF_FFFF, 1);
        assert_eq!((p >> 32) & 0xFF, 2);
        assert_eq!((p >> 40) & 0xFFFF, 0x0180);
        assert_eq!(decode_event(p).unwrap(), e);

        let sat = TriggerEvent {
            frame_delta: 0,
            bin_id: 0,
            strength: 1000.0,
        };
        assert_eq!(encode_event(&sat).unwrap() >> 40, 0xFFFF);
        let inf = TriggerEvent {
            strength: f64::INFINITY,
            ..sat
        };
        assert_eq!(encode_event(&inf).unwrap() >> 40, 0xFFFF);
    }

    #[test]
    fn payload_range_errors() {
        let base = TriggerEvent {
            frame_delta: 0,
            bin_id: 0,
            strength: 1.0,
        };
        assert_eq!(
            encode_event(&TriggerEvent {
                frame_delta: 1 << 32,
                ..base
            }),
            Err(TriggerError::FrameDeltaRange(1 << 32))
        );
        assert_eq!(
            encode_event(&TriggerEvent { bin_id: 256, ..base }),
            Err(TriggerError::BinIdRange(256))
        );
        assert!(encode_event(&TriggerEvent { strength: -0.5, ..base }).is_err());
        assert!(encode_event(&TriggerEvent {
            strength: f64::NAN,
            ..base
        })
        .is_err());
        assert!(matches!(decode_event(1 << 56), Err(TriggerError::ReservedBits(_))));
    }

    #[test]
    fn delta_encoding() {
        let mut enc = DeltaEncoder::new();
        assert_eq!(enc.event_at(100, 4, 2.0).unwrap().frame_delta, 100);
        assert_eq!(enc.event_at(103, 4, 2.0).unwrap().frame_delta, 3);
        assert_eq!(enc.event_at(103, 4, 2.0).unwrap().frame_delta, 0);
        assert!(enc.event_at(50, 4, 2.0).is_err());
    }

    proptest! {
        #[test]
        fn scale_invariant(m in 0.0f64..1e6, e in 0.0f64..1e6, z in 1.0f64..2.0, c in 1e-3f64..1e3) {
            // Power-of-two scaling keeps the products exact.
            let c = 2f64.powi(c.log2().round() as i32);
            prop_assert_eq!(decide_bin(m, e, z).unwrap(), decide_bin(m * c, e * c, z).unwrap());
        }

        #[test]
        fn monotone_in_magnitude(a in 0.0f64..1e4, b in 0.0f64..1e4, e in 0.0f64..1e4, z in 1.0f64..2.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(decide_bin(lo, e, z).unwrap() <= decide_bin(hi, e, z).unwrap());
        }

        #[test]
        fn roundtrip(delta in 0u64..=u32::MAX as u64, bin in 0usize..256, strength in 0.0f64..255.99) {
            let e = TriggerEvent { frame_delta: delta, bin_id: bin, strength };
            let p = encode_event(&e).unwrap();
            prop_assert_eq!(p >> 56, 0);
            let d = decode_event(p).unwrap();
            prop_assert_eq!(d.frame_delta, delta);
            prop_assert_eq!(d.bin_id, bin);
            prop_assert!((d.strength - strength).abs() <= 1.0 / 256.0);
        }
    }
}
