//! Sparse reconfiguration: per-lane field updates.
//!
//! Wire form: magic `ACDL`, version byte, `u32` op count, then one 5-byte
//! record per op: opcode, `u16` lane, `u16` payload. Row payloads use
//! `0xFFFF` for "no row"; coefficient payloads hold the code as a
//! two's-complement `i16`.

use thiserror::Error;

use super::{FormatError, FormatErrorReason};
use crate::machine::{Coefficient, MachineConfig, MachineSpec, Violation};

pub const DELTA_MAGIC: &[u8; 4] = b"ACDL";
pub const DELTA_VERSION: u8 = 1;
const NO_ROW: u16 = 0xFFFF;
const RECORD_LEN: usize = 5;
const HEADER_LEN: usize = 9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DeltaOp {
    SetUSource { lane: usize, row: Option<usize> },
    /// Raw code; its kind follows from the lane.
    SetCoeff { lane: usize, code: i16 },
    SetIDest { lane: usize, row: Option<usize> },
}

impl DeltaOp {
    fn opcode(&self) -> u8 {
        match self {
            DeltaOp::SetUSource { .. } => 1,
            DeltaOp::SetCoeff { .. } => 2,
            DeltaOp::SetIDest { .. } => 3,
        }
    }

    pub fn lane(&self) -> usize {
        match *self {
            DeltaOp::SetUSource { lane, .. }
            | DeltaOp::SetCoeff { lane, .. }
            | DeltaOp::SetIDest { lane, .. } => lane,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DeltaScript {
    pub ops: Vec<DeltaOp>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DeltaError {
    #[error("configurations target different machines")]
    SpecMismatch,
    #[error("op {index}: lane {lane} is outside the machine")]
    LaneOutOfRange { index: usize, lane: usize },
    #[error("op {index}: row {row} is outside the matrix")]
    RowOutOfRange { index: usize, row: usize },
    #[error("op {index}: code {code} is not valid on lane {lane}")]
    CodeOutOfRange { index: usize, lane: usize, code: i16 },
    #[error("result is invalid: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    Validation(Vec<Violation>),
}

fn code_of(c: Coefficient) -> i16 {
    match c {
        Coefficient::HighRes(code) => code,
        Coefficient::LowRes(code) => code as i16,
    }
}

/// One op per lane field that differs, in lane order (U, coefficient, I).
pub fn diff(old: &MachineConfig, new: &MachineConfig) -> Result<DeltaScript, DeltaError> {
    if old.spec != new.spec {
        return Err(DeltaError::SpecMismatch);
    }
    let mut ops = Vec::new();
    for lane in 0..old.spec.n_lanes {
        if old.u_matrix[lane] != new.u_matrix[lane] {
            ops.push(DeltaOp::SetUSource {
                lane,
                row: new.u_matrix[lane],
            });
        }
        if old.coefficients[lane] != new.coefficients[lane] {
            ops.push(DeltaOp::SetCoeff {
                lane,
                code: code_of(new.coefficients[lane]),
            });
        }
        if old.i_matrix[lane] != new.i_matrix[lane] {
            ops.push(DeltaOp::SetIDest {
                lane,
                row: new.i_matrix[lane],
            });
        }
    }
    Ok(DeltaScript { ops })
}

/// Applies `script` to a copy of `config`. Either every op applies and the
/// result validates, or an error is returned and nothing changes.
pub fn apply(config: &MachineConfig, script: &DeltaScript) -> Result<MachineConfig, DeltaError> {
    let spec = &config.spec;
    let mut out = config.clone();
    for (index, op) in script.ops.iter().enumerate() {
        let lane = op.lane();
        if lane >= spec.n_lanes {
            return Err(DeltaError::LaneOutOfRange { index, lane });
        }
        match *op {
            DeltaOp::SetUSource { row, .. } => {
                if let Some(row) = row.filter(|&r| r >= spec.out_rows) {
                    return Err(DeltaError::RowOutOfRange { index, row });
                }
                out.u_matrix[lane] = row;
            }
            DeltaOp::SetIDest { row, .. } => {
                if let Some(row) = row.filter(|&r| r >= spec.in_rows) {
                    return Err(DeltaError::RowOutOfRange { index, row });
                }
                out.i_matrix[lane] = row;
            }
            DeltaOp::SetCoeff { code, .. } => {
                out.coefficients[lane] = coefficient_for(spec, lane, code)
                    .ok_or(DeltaError::CodeOutOfRange { index, lane, code })?;
            }
        }
    }
    let violations = out.validate();
    if violations.is_empty() {
        Ok(out)
    } else {
        Err(DeltaError::Validation(violations))
    }
}

fn coefficient_for(spec: &MachineSpec, lane: usize, code: i16) -> Option<Coefficient> {
    let c = if spec.is_lowres(lane) {
        Coefficient::LowRes(u8::try_from(code).ok()?)
    } else {
        Coefficient::HighRes(code)
    };
    c.in_range().then_some(c)
}

fn row_payload(row: Option<usize>) -> u16 {
    row.map_or(NO_ROW, |r| r as u16)
}

impl DeltaScript {
    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + RECORD_LEN * self.ops.len());
        out.extend_from_slice(DELTA_MAGIC);
        out.push(DELTA_VERSION);
        out.extend_from_slice(&(self.ops.len() as u32).to_le_bytes());
        for op in &self.ops {
            let payload = match *op {
                DeltaOp::SetUSource { row, .. } | DeltaOp::SetIDest { row, .. } => row_payload(row),
                DeltaOp::SetCoeff { code, .. } => code as u16,
            };
            out.push(op.opcode());
            out.extend_from_slice(&(op.lane() as u16).to_le_bytes());
            out.extend_from_slice(&payload.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, FormatError> {
        let err = |offset, reason| FormatError { offset, reason };
        if bytes.len() < HEADER_LEN {
            return Err(err(
                bytes.len(),
                FormatErrorReason::Length {
                    expected: HEADER_LEN,
                    actual: bytes.len(),
                },
            ));
        }
        if &bytes[..4] != DELTA_MAGIC {
            return Err(err(0, FormatErrorReason::Magic));
        }
        if bytes[4] != DELTA_VERSION {
            return Err(err(4, FormatErrorReason::Version(bytes[4])));
        }
        let count = u32::from_le_bytes(bytes[5..9].try_into().unwrap()) as usize;
        let expected = count
            .checked_mul(RECORD_LEN)
            .and_then(|n| n.checked_add(HEADER_LEN));
        if expected != Some(bytes.len()) {
            return Err(err(
                bytes.len().min(expected.unwrap_or(usize::MAX)),
                FormatErrorReason::Length {
                    expected: expected.unwrap_or(usize::MAX),
                    actual: bytes.len(),
                },
            ));
        }
        let ops = bytes[HEADER_LEN..]
            .chunks_exact(RECORD_LEN)
            .enumerate()
            .map(|(i, rec)| {
                let lane = u16::from_le_bytes([rec[1], rec[2]]) as usize;
                let payload = u16::from_le_bytes([rec[3], rec[4]]);
                let row = (payload != NO_ROW).then_some(payload as usize);
                match rec[0] {
                    1 => Ok(DeltaOp::SetUSource { lane, row }),
                    2 => Ok(DeltaOp::SetCoeff {
                        lane,
                        code: payload as i16,
                    }),
                    3 => Ok(DeltaOp::SetIDest { lane, row }),
                    other => Err(err(
                        HEADER_LEN + i * RECORD_LEN,
                        FormatErrorReason::UnknownOpcode(other),
                    )),
                }
            })
            .collect::<Result<_, _>>()?;
        Ok(DeltaScript { ops })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bitstream::encode;
    use crate::machine::{lucidac_spec, Rule};

    fn sample() -> MachineConfig {
        let mut c = MachineConfig::empty(&lucidac_spec());
        for (lane, src, dst, coeff) in [
            (0, 1, 0, Coefficient::HighRes(369)),
            (5, 0, 0, Coefficient::HighRes(-205)),
            (24, 0, 0, Coefficient::LowRes(6)),
        ] {
            c.u_matrix[lane] = Some(src);
            c.i_matrix[lane] = Some(dst);
            c.coefficients[lane] = coeff;
        }
        c
    }

    #[test]
    fn identical_configs() {
        let c = sample();
        let d = diff(&c, &c).unwrap();
        assert!(d.is_empty());
        assert_eq!(apply(&c, &d).unwrap(), c);
    }

    #[test]
    fn single_coefficient_change() {
        let a = sample();
        let mut b = a.clone();
        b.coefficients[5] = Coefficient::HighRes(-100);
        let d = diff(&a, &b).unwrap();
        assert_eq!(d.ops, [DeltaOp::SetCoeff { lane: 5, code: -100 }]);
        assert_eq!(encode(&apply(&a, &d).unwrap()), encode(&b));
    }

    #[test]
    fn from_empty() {
        let empty = MachineConfig::empty(&lucidac_spec());
        let d = diff(&empty, &sample()).unwrap();
        // lanes 0 and 5 change all three fields; lane 24 also changes code 0 → 6
        assert_eq!(d.len(), 9);
        assert_eq!(apply(&empty, &d).unwrap(), sample());
    }

    #[test]
    fn lowres_code_range() {
        let d = DeltaScript {
            ops: vec![DeltaOp::SetCoeff { lane: 24, code: 9 }],
        };
        assert_eq!(
            apply(&sample(), &d).unwrap_err(),
            DeltaError::CodeOutOfRange { index: 0, lane: 24, code: 9 }
        );
        let d = DeltaScript {
            ops: vec![DeltaOp::SetCoeff { lane: 3, code: 2048 }],
        };
        assert!(matches!(apply(&sample(), &d), Err(DeltaError::CodeOutOfRange { .. })));
    }

    #[test]
    fn range_errors() {
        let c = sample();
        let bad = [
            DeltaOp::SetUSource { lane: 32, row: None },
            DeltaOp::SetUSource { lane: 1, row: Some(16) },
            DeltaOp::SetIDest { lane: 1, row: Some(16) },
        ];
        for op in bad {
            assert!(apply(&c, &DeltaScript { ops: vec![op] }).is_err(), "{op:?}");
        }
    }

    #[test]
    fn dangling_result_is_rejected() {
        let d = DeltaScript {
            ops: vec![DeltaOp::SetIDest { lane: 0, row: None }],
        };
        match apply(&sample(), &d) {
            Err(DeltaError::Validation(v)) => assert_eq!(v[0].rule, Rule::DanglingLane),
            other => panic!("{other:?}"),
        }
        // intermediate dangling states are fine
        let d = DeltaScript {
            ops: vec![
                DeltaOp::SetIDest { lane: 0, row: None },
                DeltaOp::SetUSource { lane: 0, row: None },
            ],
        };
        assert!(apply(&sample(), &d).is_ok());
    }

    #[test]
    fn spec_mismatch() {
        let other = MachineConfig::empty(&crate::machine::MachineSpec::new(8, 4, 16, 0.25).unwrap());
        assert_eq!(diff(&sample(), &other), Err(DeltaError::SpecMismatch));
    }

    #[test]
    fn wire_form() {
        let d = DeltaScript {
            ops: vec![
                DeltaOp::SetUSource { lane: 3, row: None },
                DeltaOp::SetCoeff { lane: 258, code: -2 },
                DeltaOp::SetIDest { lane: 1, row: Some(7) },
            ],
        };
        let bytes = d.to_bytes();
        assert_eq!(
            bytes,
            [
                b'A', b'C', b'D', b'L', 1, 3, 0, 0, 0, //
                1, 3, 0, 0xFF, 0xFF, //
                2, 2, 1, 0xFE, 0xFF, //
                3, 1, 0, 7, 0,
            ]
        );
        assert_eq!(DeltaScript::from_bytes(&bytes).unwrap(), d);
        assert!(DeltaScript::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[9] = 4;
        assert_eq!(
            DeltaScript::from_bytes(&bad).unwrap_err().reason,
            FormatErrorReason::UnknownOpcode(4)
        );
    }
}
