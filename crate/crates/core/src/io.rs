//! On-disk formats: the binary frame file and the truth/event CSV files.
//!
//! Frame file layout (all little-endian):
//!
//! | offset | size | field                              |
//! |--------|------|------------------------------------|
//! | 0      | 2    | magic `b"NF"`                      |
//! | 2      | 1    | version (1)                        |
//! | 3      | 1    | log2 of the frame size N            |
//! | 4      | 8    | sample rate, f64                   |
//! | 12     | 4    | frame count, u32                   |
//! | 16     | 8·N·count | samples, f64, frame-major     |
//!
//! Frame indices are implicit: the k-th frame in the file has index k.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::envsim::{GroundTruth, ScenarioError, TruthInterval};
use crate::spectral::{Frame, SpectralError, MIN_FRAME_SIZE};
use crate::trigger::{decode_event, encode_event, TriggerError, TriggerEvent};

pub const FRAME_MAGIC: [u8; 2] = *b"NF";
pub const FRAME_VERSION: u8 = 1;
pub const HEADER_LEN: usize = 16;

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("bad magic {0:?}, expected \"NF\"")]
    BadMagic([u8; 2]),
    #[error("unsupported frame file version {0}")]
    UnsupportedVersion(u8),
    #[error("log2 frame size {0} is out of range")]
    BadFrameSize(u8),
    #[error("sample rate {0} is not a positive finite number")]
    BadSampleRate(f64),
    #[error("frame file ends early: {expected} bytes of samples expected, {actual} present")]
    Truncated { expected: u64, actual: u64 },
    #[error("frame file has trailing bytes after the last frame")]
    TrailingBytes,
    #[error("frame {index} has {actual} samples, expected {expected}")]
    InconsistentLength {
        index: usize,
        expected: usize,
        actual: usize,
    },
    #[error("frame {index} has sample rate {actual}, expected {expected}")]
    InconsistentRate { index: usize, expected: f64, actual: f64 },
    #[error("frame at position {position} has index {index}; frame files need indices 0, 1, 2, ...")]
    NonSequential { position: usize, index: u64 },
    #[error("{0} frames exceed the u32 frame count field")]
    TooManyFrames(usize),
    #[error("frame size {0} is not a power of two of at least {MIN_FRAME_SIZE}")]
    FrameSizeNotPow2(usize),
    #[error("no frames to write")]
    NoFrames,
    #[error("invalid payload {0:?}")]
    BadPayload(String),
    #[error("event row {row}: payload does not match the frame_delta/bin/strength columns")]
    PayloadMismatch { row: usize },
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Trigger(#[from] TriggerError),
}

/// Parsed frame file header.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameHeader {
    pub frame_size: usize,
    pub sample_rate_hz: f64,
    pub frame_count: u32,
}

impl FrameHeader {
    pub fn to_bytes(&self) -> Result<[u8; HEADER_LEN], IoError> {
        let n = self.frame_size;
        if n < MIN_FRAME_SIZE || !n.is_power_of_two() {
            return Err(IoError::FrameSizeNotPow2(n));
        }
        if !(self.sample_rate_hz.is_finite() && self.sample_rate_hz > 0.0) {
            return Err(IoError::BadSampleRate(self.sample_rate_hz));
        }
        let mut h = [0u8; HEADER_LEN];
        h[0..2].copy_from_slice(&FRAME_MAGIC);
        h[2] = FRAME_VERSION;
        h[3] = n.trailing_zeros() as u8;
        h[4..12].copy_from_slice(&self.sample_rate_hz.to_le_bytes());
        h[12..16].copy_from_slice(&self.frame_count.to_le_bytes());
        Ok(h)
    }

    pub fn from_bytes(h: &[u8; HEADER_LEN]) -> Result<Self, IoError> {
        let magic = [h[0], h[1]];
        if magic != FRAME_MAGIC {
            return Err(IoError::BadMagic(magic));
        }
        if h[2] != FRAME_VERSION {
            return Err(IoError::UnsupportedVersion(h[2]));
        }
        let log2 = h[3];
        if !(MIN_FRAME_SIZE.trailing_zeros() as u8..=24).contains(&log2) {
            return Err(IoError::BadFrameSize(log2));
        }
        let sample_rate_hz = f64::from_le_bytes(h[4..12].try_into().unwrap());
        if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
            return Err(IoError::BadSampleRate(sample_rate_hz));
        }
        Ok(Self {
            frame_size: 1usize << log2,
            sample_rate_hz,
            frame_count: u32::from_le_bytes(h[12..16].try_into().unwrap()),
        })
    }
}

pub fn write_frames<W: Write>(mut w: W, frames: &[Frame]) -> Result<(), IoError> {
    let first = frames.first().ok_or(IoError::NoFrames)?;
    let count = u32::try_from(frames.len()).map_err(|_| IoError::TooManyFrames(frames.len()))?;
    let header = FrameHeader {
        frame_size: first.len(),
        sample_rate_hz: first.sample_rate_hz(),
        frame_count: count,
    };
    let bytes = header.to_bytes()?;
    for (position, f) in frames.iter().enumerate() {
        if f.len() != header.frame_size {
            return Err(IoError::InconsistentLength {
                index: position,
                expected: header.frame_size,
                actual: f.len(),
            });
        }
        if f.sample_rate_hz().to_bits() != header.sample_rate_hz.to_bits() {
            return Err(IoError::InconsistentRate {
                index: position,
                expected: header.sample_rate_hz,
                actual: f.sample_rate_hz(),
            });
        }
        if f.frame_index() != position as u64 {
            return Err(IoError::NonSequential {
                position,
                index: f.frame_index(),
            });
        }
    }
    w.write_all(&bytes)?;
    for f in frames {
        for s in f.samples() {
            w.write_all(&s.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_frames<R: Read>(mut r: R) -> Result<(FrameHeader, Vec<Frame>), IoError> {
    let mut h = [0u8; HEADER_LEN];
    r.read_exact(&mut h).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => IoError::Truncated {
            expected: HEADER_LEN as u64,
            actual: 0,
        },
        _ => IoError::Io(e),
    })?;
    let header = FrameHeader::from_bytes(&h)?;
    let n = header.frame_size;
    let expected = header.frame_count as u64 * n as u64 * 8;
    let mut body = Vec::new();
    r.read_to_end(&mut body)?;
    if (body.len() as u64) < expected {
        return Err(IoError::Truncated {
            expected,
            actual: body.len() as u64,
        });
    }
    if body.len() as u64 > expected {
        return Err(IoError::TrailingBytes);
    }
    let frames = body
        .chunks_exact(n * 8)
        .enumerate()
        .map(|(k, chunk)| {
            let samples = chunk
                .chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
                .collect();
            Frame::new(samples, k as u64, header.sample_rate_hz).map_err(IoError::from)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok((header, frames))
}

pub fn save_frames(path: &Path, frames: &[Frame]) -> Result<(), IoError> {
    write_frames(BufWriter::new(File::create(path)?), frames)
}

pub fn load_frames(path: &Path) -> Result<(FrameHeader, Vec<Frame>), IoError> {
    read_frames(BufReader::new(File::open(path)?))
}

pub fn write_truth<W: Write>(w: W, truth: &GroundTruth) -> Result<(), IoError> {
    let mut out = csv::Writer::from_writer(w);
    for iv in truth.intervals() {
        out.serialize(iv)?;
    }
    out.flush()?;
    Ok(())
}

/// Reads `start,end,bin` rows; rejects overlapping or unsorted intervals.
pub fn read_truth<R: Read>(r: R) -> Result<GroundTruth, IoError> {
    let rows = csv::Reader::from_reader(r)
        .deserialize::<TruthInterval>()
        .collect::<Result<Vec<_>, _>>()?;
    Ok(GroundTruth::new(rows)?)
}

pub fn save_truth(path: &Path, truth: &GroundTruth) -> Result<(), IoError> {
    write_truth(BufWriter::new(File::create(path)?), truth)
}

pub fn load_truth(path: &Path) -> Result<GroundTruth, IoError> {
    read_truth(BufReader::new(File::open(path)?))
}

/// One line of `events.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRow {
    pub frame: u64,
    pub frame_delta: u64,
    pub bin: usize,
    pub strength: f64,
    /// Encoded payload as `0x` followed by 16 hex digits.
    pub payload: String,
}

impl EventRow {
    pub fn new(frame: u64, event: &TriggerEvent) -> Result<Self, IoError> {
        let p = encode_event(event)?;
        Ok(Self {
            frame,
            frame_delta: event.frame_delta,
            bin: event.bin_id,
            strength: event.strength,
            payload: format!("{p:#018x}"),
        })
    }

    pub fn payload_bits(&self) -> Result<u64, IoError> {
        let hex = self
            .payload
            .strip_prefix("0x")
            .ok_or_else(|| IoError::BadPayload(self.payload.clone()))?;
        u64::from_str_radix(hex, 16).map_err(|_| IoError::BadPayload(self.payload.clone()))
    }
}

pub fn write_events<W: Write>(w: W, rows: &[EventRow]) -> Result<(), IoError> {
    let mut out = csv::Writer::from_writer(w);
    for row in rows {
        out.serialize(row)?;
    }
    out.flush()?;
    Ok(())
}

/// Reads event rows and checks each payload agrees with its columns.
pub fn read_events<R: Read>(r: R) -> Result<Vec<EventRow>, IoError> {
    let rows = csv::Reader::from_reader(r)
        .deserialize::<EventRow>()
        .collect::<Result<Vec<_>, _>>()?;
    for (i, row) in rows.iter().enumerate() {
        let decoded = decode_event(row.payload_bits()?)?;
        if decoded.frame_delta != row.frame_delta || decoded.bin_id != row.bin {
            return Err(IoError::PayloadMismatch { row: i });
        }
    }
    Ok(rows)
}

pub fn save_events(path: &Path, rows: &[EventRow]) -> Result<(), IoError> {
    write_events(BufWriter::new(File::create(path)?), rows)
}

pub fn load_events(path: &Path) -> Result<Vec<EventRow>, IoError> {
    read_events(BufReader::new(File::open(path)?))
}
