//! Event-triggered spectral monitoring for low-bandwidth sensor nodes.
//!
//! Frames are transformed by a fixed-size FFT, a per-bin two-stage median
//! cascade tracks the noise floor, and a per-bin threshold test emits compact
//! 64-bit event payloads.

pub mod baselines;
pub mod cli;
pub mod envsim;
pub mod eval;
pub mod io;
pub mod noisefloor;
pub mod pipeline;
pub mod report;
pub mod spectral;
pub mod trigger;
