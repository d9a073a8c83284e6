//! Binary configuration images (`.acfg`) and sparse delta scripts
//! (`.acdl`).
//!
//! Image layout, all multi-byte fields little-endian:
//!
//! | offset | size                         | content                              |
//! |--------|------------------------------|--------------------------------------|
//! | 0      | 4                            | magic `ACFG`                         |
//! | 4      | 1                            | version (1)                          |
//! | 5      | lanes x ceil(out_rows/8)     | U-matrix, one row bitmap per lane    |
//! | ...    | lanes x 2                    | coefficient codes, `i16` per lane    |
//! | ...    | lanes x ceil(in_rows/8)      | I-matrix, one row bitmap per lane    |
//!
//! Bit `r` of a lane bitmap lives in byte `r / 8`, bit `r % 8`. At most one
//! bit is set per lane. Unused lanes are all zero.

mod delta;

pub use delta::{apply, diff, DeltaError, DeltaOp, DeltaScript, DELTA_MAGIC, DELTA_VERSION};

use thiserror::Error;

use crate::machine::{Coefficient, MachineConfig, MachineSpec};

pub const IMAGE_MAGIC: &[u8; 4] = b"ACFG";
pub const IMAGE_VERSION: u8 = 1;
const HEADER_LEN: usize = 5;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("offset {offset}: {reason}")]
pub struct FormatError {
    pub offset: usize,
    pub reason: FormatErrorReason,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FormatErrorReason {
    #[error("bad magic")]
    Magic,
    #[error("unsupported version {0}")]
    Version(u8),
    #[error("length {actual}, expected {expected}")]
    Length { expected: usize, actual: usize },
    #[error("lane {0} has more than one source row")]
    MultiSource(usize),
    #[error("lane {0} has more than one destination row")]
    MultiDestination(usize),
    #[error("lane {lane} selects row {row}, beyond the matrix")]
    RowOutOfRange { lane: usize, row: usize },
    #[error("lane {lane} code {code} out of range")]
    CodeOutOfRange { lane: usize, code: i16 },
    #[error("unknown opcode {0}")]
    UnknownOpcode(u8),
}

/// Byte sizes of the image sections for one machine.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub u_lane_bytes: usize,
    pub i_lane_bytes: usize,
    pub n_lanes: usize,
}

impl Layout {
    pub fn new(spec: &MachineSpec) -> Self {
        Layout {
            u_lane_bytes: spec.out_rows.div_ceil(8),
            i_lane_bytes: spec.in_rows.div_ceil(8),
            n_lanes: spec.n_lanes,
        }
    }

    pub fn u_offset(&self) -> usize {
        HEADER_LEN
    }

    pub fn c_offset(&self) -> usize {
        self.u_offset() + self.n_lanes * self.u_lane_bytes
    }

    pub fn i_offset(&self) -> usize {
        self.c_offset() + self.n_lanes * 2
    }

    pub fn total_len(&self) -> usize {
        self.i_offset() + self.n_lanes * self.i_lane_bytes
    }
}

pub fn image_len(spec: &MachineSpec) -> usize {
    Layout::new(spec).total_len()
}

fn coefficient_bits(c: Coefficient) -> i16 {
    match c {
        Coefficient::HighRes(code) => code,
        Coefficient::LowRes(code) => code as i16,
    }
}

/// Serializes the interconnect state of `config`.
pub fn encode(config: &MachineConfig) -> Vec<u8> {
    let layout = Layout::new(&config.spec);
    let mut out = vec![0u8; layout.total_len()];
    out[..4].copy_from_slice(IMAGE_MAGIC);
    out[4] = IMAGE_VERSION;
    for lane in 0..layout.n_lanes {
        if let Some(row) = config.u_matrix[lane] {
            let base = layout.u_offset() + lane * layout.u_lane_bytes;
            out[base + row / 8] |= 1 << (row % 8);
        }
        let c = layout.c_offset() + lane * 2;
        out[c..c + 2].copy_from_slice(&coefficient_bits(config.coefficients[lane]).to_le_bytes());
        if let Some(row) = config.i_matrix[lane] {
            let base = layout.i_offset() + lane * layout.i_lane_bytes;
            out[base + row / 8] |= 1 << (row % 8);
        }
    }
    out
}

/// Reads a lane bitmap, returning the single set row if any.
fn read_bitmap(
    field: &[u8],
    offset: usize,
    rows: usize,
    lane: usize,
    multi: fn(usize) -> FormatErrorReason,
) -> Result<Option<usize>, FormatError> {
    let mut found = None;
    for (i, &byte) in field.iter().enumerate() {
        if byte == 0 {
            continue;
        }
        if found.is_some() || byte.count_ones() > 1 {
            return Err(FormatError {
                offset: offset + i,
                reason: multi(lane),
            });
        }
        let row = i * 8 + byte.trailing_zeros() as usize;
        if row >= rows {
            return Err(FormatError {
                offset: offset + i,
                reason: FormatErrorReason::RowOutOfRange { lane, row },
            });
        }
        found = Some(row);
    }
    Ok(found)
}

/// Parses an image produced for `spec`.
pub fn decode(image: &[u8], spec: &MachineSpec) -> Result<MachineConfig, FormatError> {
    let layout = Layout::new(spec);
    if image.len() < HEADER_LEN {
        return Err(FormatError {
            offset: image.len(),
            reason: FormatErrorReason::Length {
                expected: layout.total_len(),
                actual: image.len(),
            },
        });
    }
    if &image[..4] != IMAGE_MAGIC {
        return Err(FormatError {
            offset: 0,
            reason: FormatErrorReason::Magic,
        });
    }
    if image[4] != IMAGE_VERSION {
        return Err(FormatError {
            offset: 4,
            reason: FormatErrorReason::Version(image[4]),
        });
    }
    if image.len() != layout.total_len() {
        return Err(FormatError {
            offset: image.len().min(layout.total_len()),
            reason: FormatErrorReason::Length {
                expected: layout.total_len(),
                actual: image.len(),
            },
        });
    }

    let mut config = MachineConfig::empty(spec);
    for lane in 0..layout.n_lanes {
        let u = layout.u_offset() + lane * layout.u_lane_bytes;
        config.u_matrix[lane] = read_bitmap(
            &image[u..u + layout.u_lane_bytes],
            u,
            spec.out_rows,
            lane,
            FormatErrorReason::MultiSource,
        )?;

        let c = layout.c_offset() + lane * 2;
        let code = i16::from_le_bytes([image[c], image[c + 1]]);
        let coefficient = if spec.is_lowres(lane) {
            u8::try_from(code).ok().filter(|&v| v < 8).map(Coefficient::LowRes)
        } else {
            Some(Coefficient::HighRes(code)).filter(|c| c.in_range())
        };
        config.coefficients[lane] = coefficient.ok_or(FormatError {
            offset: c,
            reason: FormatErrorReason::CodeOutOfRange { lane, code },
        })?;

        let i = layout.i_offset() + lane * layout.i_lane_bytes;
        config.i_matrix[lane] = read_bitmap(
            &image[i..i + layout.i_lane_bytes],
            i,
            spec.in_rows,
            lane,
            FormatErrorReason::MultiDestination,
        )?;
    }
    Ok(config)
}
