//! Machine geometry and the routed interconnect state.
//!
//! The interconnect is a set of lanes. Each lane picks up one output row
//! (U-matrix), scales it by its coefficient, and delivers the result as a
//! current onto one input row (I-matrix). Any number of lanes may share a
//! source row or a destination row; the latter sums implicitly.
//!
//! Rows follow a fixed convention. Output rows: integrator outputs first,
//! then multiplier outputs, then the constant source; anything above is
//! reserved. Input rows: integrator inputs first, then the two ports of each
//! multiplier (`a` of multiplier `j` at `n_integrators + 2j`, `b` right after).

use std::fmt;

use thiserror::Error;

/// High-resolution coefficient codes span `[-2048, 2047]`, one LSB being
/// `10/2048`.
pub const HIGHRES_MIN: i16 = -2048;
pub const HIGHRES_MAX: i16 = 2047;
pub const HIGHRES_LSB: f64 = 10.0 / 2048.0;

/// Values selectable on a low-resolution lane, indexed by code.
pub const LOWRES_TABLE: [f64; 8] = [10.0, 1.0, 0.5, 0.1, -0.1, -0.5, -1.0, -10.0];

/// Fraction of lanes given low-resolution coefficients in the standard
/// profiles.
pub const DEFAULT_LOWRES_FRACTION: f64 = 0.25;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpecError {
    #[error("machine needs at least one lane")]
    NoLanes,
    #[error("low-resolution fraction {0} is outside [0, 0.5]")]
    LowresFraction(f64),
    #[error("lane count {0} exceeds the addressable 65535")]
    TooManyLanes(usize),
    #[error("row count {0} exceeds the addressable 65535")]
    TooManyRows(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MachineSpec {
    pub n_integrators: usize,
    pub n_multipliers: usize,
    pub n_lanes: usize,
    pub out_rows: usize,
    pub in_rows: usize,
    lowres: Vec<bool>,
    pub has_const_row: bool,
}

/// Element driving an output row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OutRow {
    Integrator(usize),
    Multiplier(usize),
    ConstOne,
}

/// Element input fed by an input row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum InRow {
    Integrator(usize),
    MulA(usize),
    MulB(usize),
}

impl MachineSpec {
    /// A machine with a constant row whose last `round(n_lanes *
    /// lowres_fraction)` lanes carry low-resolution coefficients.
    pub fn new(
        n_integrators: usize,
        n_multipliers: usize,
        n_lanes: usize,
        lowres_fraction: f64,
    ) -> Result<Self, SpecError> {
        if n_lanes == 0 {
            return Err(SpecError::NoLanes);
        }
        if n_lanes > u16::MAX as usize {
            return Err(SpecError::TooManyLanes(n_lanes));
        }
        if !(0.0..=0.5).contains(&lowres_fraction) {
            return Err(SpecError::LowresFraction(lowres_fraction));
        }
        let in_rows = n_integrators + 2 * n_multipliers;
        let out_rows = in_rows.max(n_integrators + n_multipliers + 1);
        if out_rows >= u16::MAX as usize {
            return Err(SpecError::TooManyRows(out_rows));
        }
        let n_lowres = (n_lanes as f64 * lowres_fraction).round() as usize;
        let lowres = (0..n_lanes).map(|l| l >= n_lanes - n_lowres).collect();
        Ok(MachineSpec {
            n_integrators,
            n_multipliers,
            n_lanes,
            out_rows,
            in_rows,
            lowres,
            has_const_row: true,
        })
    }

    /// Same as [`MachineSpec::new`] with no constant source row.
    pub fn without_const_row(mut self) -> Self {
        self.has_const_row = false;
        self
    }

    pub fn is_lowres(&self, lane: usize) -> bool {
        self.lowres.get(lane).copied().unwrap_or(false)
    }

    pub fn lowres_lanes(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.n_lanes).filter(|&l| self.lowres[l])
    }

    pub fn highres_lanes(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.n_lanes).filter(|&l| !self.lowres[l])
    }

    pub fn lowres_count(&self) -> usize {
        self.lowres.iter().filter(|&&b| b).count()
    }

    pub fn out_row(&self, el: OutRow) -> usize {
        match el {
            OutRow::Integrator(i) => i,
            OutRow::Multiplier(j) => self.n_integrators + j,
            OutRow::ConstOne => self.n_integrators + self.n_multipliers,
        }
    }

    pub fn in_row(&self, el: InRow) -> usize {
        match el {
            InRow::Integrator(i) => i,
            InRow::MulA(j) => self.n_integrators + 2 * j,
            InRow::MulB(j) => self.n_integrators + 2 * j + 1,
        }
    }

    /// Element driving `row`, or `None` for reserved rows.
    pub fn out_binding(&self, row: usize) -> Option<OutRow> {
        let (ni, nm) = (self.n_integrators, self.n_multipliers);
        if row < ni {
            Some(OutRow::Integrator(row))
        } else if row < ni + nm {
            Some(OutRow::Multiplier(row - ni))
        } else if row == ni + nm && self.has_const_row {
            Some(OutRow::ConstOne)
        } else {
            None
        }
    }

    pub fn in_binding(&self, row: usize) -> Option<InRow> {
        let ni = self.n_integrators;
        if row < ni {
            Some(InRow::Integrator(row))
        } else if row < self.in_rows {
            let j = (row - ni) / 2;
            Some(if (row - ni).is_multiple_of(2) { InRow::MulA(j) } else { InRow::MulB(j) })
        } else {
            None
        }
    }

    /// Coefficient value of an unused lane.
    pub fn idle_coefficient(&self, lane: usize) -> Coefficient {
        if self.is_lowres(lane) {
            Coefficient::LowRes(0)
        } else {
            Coefficient::HighRes(0)
        }
    }
}

/// 8 integrators, 4 multipliers, 32 lanes, 16x32 and 32x16 matrices, lanes
/// 24..=31 low resolution.
pub fn lucidac_spec() -> MachineSpec {
    MachineSpec::new(8, 4, 32, DEFAULT_LOWRES_FRACTION).expect("valid profile")
}

/// 1000 integrators, 500 multipliers, 8000 lanes, a quarter of them low
/// resolution.
pub fn redac_tile_spec() -> MachineSpec {
    MachineSpec::new(1000, 500, 8000, DEFAULT_LOWRES_FRACTION).expect("valid profile")
}

/// Digital setting of one coefficient element.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Coefficient {
    /// 12-bit two's-complement code; value `code * 10/2048`.
    HighRes(i16),
    /// 3-bit index into [`LOWRES_TABLE`].
    LowRes(u8),
}

impl Coefficient {
    pub fn value(self) -> f64 {
        match self {
            Coefficient::HighRes(code) => code as f64 * HIGHRES_LSB,
            Coefficient::LowRes(code) => LOWRES_TABLE[code as usize],
        }
    }

    pub fn in_range(self) -> bool {
        match self {
            Coefficient::HighRes(c) => (HIGHRES_MIN..=HIGHRES_MAX).contains(&c),
            Coefficient::LowRes(c) => c < 8,
        }
    }

    pub fn kind_name(self) -> &'static str {
        match self {
            Coefficient::HighRes(_) => "hi",
            Coefficient::LowRes(_) => "lo",
        }
    }

    pub fn code(self) -> i32 {
        match self {
            Coefficient::HighRes(c) => c as i32,
            Coefficient::LowRes(c) => c as i32,
        }
    }
}

pub fn decode(code: Coefficient) -> f64 {
    code.value()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Quantized {
    pub code: i16,
    /// The value lay outside the representable range.
    pub clamped: bool,
}

/// Rounds `value` to the nearest 12-bit code, clamping at the ends of the
/// code range.
pub fn quantize_highres(value: f64) -> Quantized {
    let raw = (value / HIGHRES_LSB).round();
    let code = raw.clamp(HIGHRES_MIN as f64, HIGHRES_MAX as f64);
    Quantized {
        code: code as i16,
        clamped: raw != code,
    }
}

/// Code whose table value is exactly `value`, if any.
pub fn lowres_code(value: f64) -> Option<u8> {
    LOWRES_TABLE.iter().position(|&v| v == value).map(|c| c as u8)
}

/// Interconnect state: per lane a source row, a coefficient and a
/// destination row.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MachineConfig {
    pub spec: MachineSpec,
    pub u_matrix: Vec<Option<usize>>,
    pub coefficients: Vec<Coefficient>,
    pub i_matrix: Vec<Option<usize>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ActiveLane {
    pub lane: usize,
    pub src: usize,
    pub coefficient: Coefficient,
    pub dst: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Rule {
    DanglingLane,
    SourceOutOfRange,
    DestinationOutOfRange,
    UnboundSourceRow,
    KindLaneMismatch,
    CodeOutOfRange,
    LaneCountMismatch,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Rule::DanglingLane => "dangling lane",
            Rule::SourceOutOfRange => "source row out of range",
            Rule::DestinationOutOfRange => "destination row out of range",
            Rule::UnboundSourceRow => "source row not bound to an element",
            Rule::KindLaneMismatch => "kind/lane mismatch",
            Rule::CodeOutOfRange => "code out of range",
            Rule::LaneCountMismatch => "lane count mismatch",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub lane: Option<usize>,
    pub row: Option<usize>,
    pub rule: Rule,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(lane) = self.lane {
            write!(f, "lane {lane}: ")?;
        }
        write!(f, "{}", self.rule)?;
        if let Some(row) = self.row {
            write!(f, " (row {row})")?;
        }
        Ok(())
    }
}

impl MachineConfig {
    /// All lanes unused.
    pub fn empty(spec: &MachineSpec) -> Self {
        MachineConfig {
            u_matrix: vec![None; spec.n_lanes],
            coefficients: (0..spec.n_lanes).map(|l| spec.idle_coefficient(l)).collect(),
            i_matrix: vec![None; spec.n_lanes],
            spec: spec.clone(),
        }
    }

    pub fn is_active(&self, lane: usize) -> bool {
        self.u_matrix[lane].is_some() && self.i_matrix[lane].is_some()
    }

    pub fn active_lanes(&self) -> impl Iterator<Item = ActiveLane> + '_ {
        (0..self.spec.n_lanes).filter_map(move |lane| {
            Some(ActiveLane {
                lane,
                src: self.u_matrix[lane]?,
                coefficient: self.coefficients[lane],
                dst: self.i_matrix[lane]?,
            })
        })
    }

    /// Checks every lane against the interconnect rules; an empty list
    /// means the configuration is valid.
    pub fn validate(&self) -> Vec<Violation> {
        let spec = &self.spec;
        let mut out = Vec::new();
        let n = spec.n_lanes;
        if self.u_matrix.len() != n || self.coefficients.len() != n || self.i_matrix.len() != n {
            out.push(Violation {
                lane: None,
                row: None,
                rule: Rule::LaneCountMismatch,
            });
            return out;
        }
        for lane in 0..n {
            let mut push = |row, rule| {
                out.push(Violation {
                    lane: Some(lane),
                    row,
                    rule,
                })
            };
            let (src, dst) = (self.u_matrix[lane], self.i_matrix[lane]);
            if src.is_some() != dst.is_some() {
                push(src.or(dst), Rule::DanglingLane);
            }
            if let Some(r) = src {
                if r >= spec.out_rows {
                    push(Some(r), Rule::SourceOutOfRange);
                } else if spec.out_binding(r).is_none() {
                    push(Some(r), Rule::UnboundSourceRow);
                }
            }
            if let Some(r) = dst {
                if r >= spec.in_rows {
                    push(Some(r), Rule::DestinationOutOfRange);
                }
            }
            let c = self.coefficients[lane];
            if matches!(c, Coefficient::LowRes(_)) != spec.is_lowres(lane) {
                push(None, Rule::KindLaneMismatch);
            }
            if !c.in_range() {
                push(None, Rule::CodeOutOfRange);
            }
        }
        out
    }
}

/// Validates `config`, returning every violation found.
pub fn validate_config(config: &MachineConfig) -> Result<(), Vec<Violation>> {
    let v = config.validate();
    if v.is_empty() {
        Ok(())
    } else {
        Err(v)
    }
}

/// One line per active lane:
/// `LANE <k>: row<out> --[<value> (<kind>,<code>)]--> row<in>`.
impl fmt::Display for MachineConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for l in self.active_lanes() {
            writeln!(
                f,
                "LANE {}: row{} --[{} ({},{})]--> row{}",
                l.lane,
                l.src,
                l.coefficient.value(),
                l.coefficient.kind_name(),
                l.coefficient.code(),
                l.dst
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lucidac_profile() {
        let s = lucidac_spec();
        assert_eq!(s.in_rows, 16);
        assert_eq!(s.out_rows, 16);
        assert_eq!(s.n_lanes, 32);
        assert_eq!(s.lowres_lanes().collect::<Vec<_>>(), (24..32).collect::<Vec<_>>());
        assert!(s.has_const_row);
        assert_eq!(s.out_row(OutRow::ConstOne), 12);
        assert_eq!(s.out_binding(13), None);
        assert_eq!(s.in_row(InRow::MulA(0)), 8);
        assert_eq!(s.in_row(InRow::MulB(3)), 15);
        assert_eq!(s.in_binding(15), Some(InRow::MulB(3)));
    }

    #[test]
    fn redac_profile() {
        let s = redac_tile_spec();
        assert_eq!(s.n_lanes, 8000);
        assert_eq!(s.n_integrators, 1000);
        assert_eq!(s.n_multipliers, 500);
        assert_eq!(s.lowres_count(), 2000);
        assert_eq!(s.in_rows, 2000);
        assert!(s.out_rows > 1000 + 500);
    }

    #[test]
    fn spec_invariants() {
        assert_eq!(MachineSpec::new(1, 1, 10, 0.6), Err(SpecError::LowresFraction(0.6)));
        assert_eq!(MachineSpec::new(1, 1, 0, 0.2), Err(SpecError::NoLanes));
        let s = MachineSpec::new(4, 0, 8, 0.0).unwrap();
        assert_eq!(s.in_rows, 4);
        assert_eq!(s.out_rows, 5);
        assert_eq!(s.lowres_count(), 0);
    }

    #[test]
    fn quantize_examples() {
        assert_eq!(quantize_highres(0.0), Quantized { code: 0, clamped: false });
        let q = quantize_highres(1.8);
        assert_eq!(q, Quantized { code: 369, clamped: false });
        let v = Coefficient::HighRes(q.code).value();
        assert_eq!(v, 369.0 * 10.0 / 2048.0);
        assert!((v - 1.8).abs() < 0.00176 + 1e-6);
        let q = quantize_highres(10.0);
        assert_eq!(q, Quantized { code: 2047, clamped: true });
        assert_eq!(Coefficient::HighRes(2047).value(), 9.9951171875);
        assert_eq!(quantize_highres(-10.0), Quantized { code: -2048, clamped: false });
        assert!(quantize_highres(-10.01).clamped);
    }

    #[test]
    fn decode_examples() {
        assert_eq!(decode(Coefficient::LowRes(0)), 10.0);
        assert_eq!(decode(Coefficient::HighRes(0)), 0.0);
        assert_eq!(decode(Coefficient::HighRes(-2048)), -10.0);
        let table: Vec<f64> = (0..8).map(|c| decode(Coefficient::LowRes(c))).collect();
        assert_eq!(table, [10.0, 1.0, 0.5, 0.1, -0.1, -0.5, -1.0, -10.0]);
        assert_eq!(lowres_code(-1.0), Some(6));
        assert_eq!(lowres_code(0.09999), None);
    }

    #[test]
    fn empty_config_is_valid() {
        assert_eq!(validate_config(&MachineConfig::empty(&lucidac_spec())), Ok(()));
    }

    #[test]
    fn dangling_lane() {
        let mut c = MachineConfig::empty(&lucidac_spec());
        c.i_matrix[3] = Some(2);
        let v = validate_config(&c).unwrap_err();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].lane, Some(3));
        assert_eq!(v[0].rule, Rule::DanglingLane);
        assert_eq!(v[0].to_string(), "lane 3: dangling lane (row 2)");
    }

    #[test]
    fn kind_lane_mismatch() {
        let mut c = MachineConfig::empty(&lucidac_spec());
        c.coefficients[0] = Coefficient::LowRes(1);
        let v = validate_config(&c).unwrap_err();
        assert_eq!(v[0].rule, Rule::KindLaneMismatch);
        assert_eq!(v[0].to_string(), "lane 0: kind/lane mismatch");

        let mut c = MachineConfig::empty(&lucidac_spec());
        c.coefficients[24] = Coefficient::HighRes(5);
        assert_eq!(validate_config(&c).unwrap_err()[0].rule, Rule::KindLaneMismatch);
    }

    #[test]
    fn row_checks() {
        let mut c = MachineConfig::empty(&lucidac_spec());
        c.u_matrix[0] = Some(14);
        c.i_matrix[0] = Some(16);
        c.coefficients[1] = Coefficient::HighRes(3000);
        let rules: Vec<_> = validate_config(&c).unwrap_err().into_iter().map(|v| v.rule).collect();
        assert_eq!(
            rules,
            [Rule::UnboundSourceRow, Rule::DestinationOutOfRange, Rule::CodeOutOfRange]
        );
    }

    #[test]
    fn const_row_requires_flag() {
        let spec = lucidac_spec().without_const_row();
        let mut c = MachineConfig::empty(&spec);
        c.u_matrix[0] = Some(12);
        c.i_matrix[0] = Some(0);
        assert_eq!(validate_config(&c).unwrap_err()[0].rule, Rule::UnboundSourceRow);
    }

    #[test]
    fn fan_out_and_fan_in() {
        let spec = lucidac_spec();
        for k in 1..=spec.n_lanes {
            let mut c = MachineConfig::empty(&spec);
            for lane in 0..k {
                c.u_matrix[lane] = Some(5);
                c.i_matrix[lane] = Some(lane % spec.in_rows);
            }
            assert_eq!(validate_config(&c), Ok(()), "fan-out {k}");
        }
        let mut c = MachineConfig::empty(&spec);
        for lane in 0..spec.n_lanes {
            c.u_matrix[lane] = Some(lane % 13);
            c.i_matrix[lane] = Some(7);
        }
        assert_eq!(validate_config(&c), Ok(()));
    }

    #[test]
    fn text_dump() {
        let mut c = MachineConfig::empty(&lucidac_spec());
        c.u_matrix[2] = Some(1);
        c.i_matrix[2] = Some(0);
        c.coefficients[2] = Coefficient::HighRes(369);
        c.u_matrix[30] = Some(0);
        c.i_matrix[30] = Some(0);
        c.coefficients[30] = Coefficient::LowRes(6);
        assert_eq!(
            c.to_string(),
            "LANE 2: row1 --[1.8017578125 (hi,369)]--> row0\nLANE 30: row0 --[-1 (lo,6)]--> row0\n"
        );
    }
}
