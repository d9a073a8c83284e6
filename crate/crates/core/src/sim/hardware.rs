use std::collections::BTreeSet;

use crate::machine::{InRow, MachineConfig, OutRow};
use crate::route::Placement;

use super::{Dynamics, SimError};

/// Where a lane picks up its voltage.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Source {
    State(usize),
    Multiplier(usize),
    One,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct LaneTerm {
    lane: usize,
    src: Source,
    weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
struct MulSlot {
    a: Vec<LaneTerm>,
    b: Vec<LaneTerm>,
}

/// The dynamical system realized by a routed interconnect: lane currents
/// summed per input row, ideal multipliers, unit-gain integrators.
#[derive(Debug, Clone, PartialEq)]
pub struct HardwareModel {
    names: Vec<String>,
    elements: Vec<String>,
    initial: Vec<f64>,
    /// Lanes feeding each state's integrator, in lane order.
    inputs: Vec<Vec<LaneTerm>>,
    muls: Vec<MulSlot>,
    /// Multiplier evaluation order.
    order: Vec<usize>,
}

struct StateSlot {
    slot: usize,
    name: String,
    initial: f64,
}

impl HardwareModel {
    /// Model of a placement. With `quantize` the lanes carry their decoded
    /// coefficients; without it they carry the exact requested weights.
    pub fn from_placement(placement: &Placement, quantize: bool) -> Result<Self, SimError> {
        let spec = &placement.config.spec;
        let states = placement
            .integrators
            .iter()
            .map(|p| {
                if p.slot >= spec.n_integrators {
                    return Err(SimError::UnroutedTap(p.name.clone()));
                }
                Ok(StateSlot {
                    slot: p.slot,
                    name: p.name.clone(),
                    initial: p.initial,
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        let weight = |lane: usize| {
            if quantize {
                placement.config.coefficients[lane].value()
            } else {
                placement.lane_weights[lane]
            }
        };
        Self::build(&placement.config, states, weight)
    }

    /// Model of a bare configuration. Every integrator touched by an active
    /// lane becomes a state named `I<slot>` starting at zero; coefficients
    /// are the decoded values.
    pub fn from_config(config: &MachineConfig) -> Result<Self, SimError> {
        let spec = &config.spec;
        let mut used = BTreeSet::new();
        for l in config.active_lanes() {
            if let Some(OutRow::Integrator(i)) = spec.out_binding(l.src) {
                used.insert(i);
            }
            if let Some(InRow::Integrator(i)) = spec.in_binding(l.dst) {
                used.insert(i);
            }
        }
        let states = used
            .into_iter()
            .map(|slot| StateSlot {
                slot,
                name: format!("I{slot}"),
                initial: 0.0,
            })
            .collect();
        Self::build(config, states, |lane| config.coefficients[lane].value())
    }

    fn build(
        config: &MachineConfig,
        states: Vec<StateSlot>,
        weight: impl Fn(usize) -> f64,
    ) -> Result<Self, SimError> {
        let violations = config.validate();
        if !violations.is_empty() {
            return Err(SimError::InvalidConfig(violations));
        }
        let spec = &config.spec;
        let mut state_of_slot = vec![None; spec.n_integrators];
        for (i, s) in states.iter().enumerate() {
            state_of_slot[s.slot] = Some(i);
        }

        let mut inputs = vec![Vec::new(); states.len()];
        let mut muls = vec![
            MulSlot {
                a: Vec::new(),
                b: Vec::new()
            };
            spec.n_multipliers
        ];
        for l in config.active_lanes() {
            let src = match spec.out_binding(l.src) {
                Some(OutRow::Integrator(i)) => match state_of_slot[i] {
                    Some(s) => Source::State(s),
                    None => continue,
                },
                Some(OutRow::Multiplier(j)) => Source::Multiplier(j),
                Some(OutRow::ConstOne) => Source::One,
                None => continue,
            };
            let term = LaneTerm {
                lane: l.lane,
                src,
                weight: weight(l.lane),
            };
            match spec.in_binding(l.dst) {
                Some(InRow::Integrator(i)) => {
                    if let Some(s) = state_of_slot[i] {
                        inputs[s].push(term);
                    }
                }
                Some(InRow::MulA(j)) => muls[j].a.push(term),
                Some(InRow::MulB(j)) => muls[j].b.push(term),
                None => {}
            }
        }

        let order = multiplier_order(&muls)?;
        let mut elements: Vec<String> = states.iter().map(|s| s.name.clone()).collect();
        elements.extend((0..muls.len()).map(|j| format!("M{j}")));
        Ok(HardwareModel {
            names: states.iter().map(|s| s.name.clone()).collect(),
            initial: states.iter().map(|s| s.initial).collect(),
            elements,
            inputs,
            muls,
            order,
        })
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    /// Element outputs at `state`: state voltages, multiplier outputs and
    /// the constant source, which is a fixed reference and never clips.
    fn voltages(&self, state: &[f64], clip: Option<f64>, clipped: &mut [bool]) -> (Vec<f64>, Vec<f64>, f64) {
        let sat = |v: f64, e: usize, clipped: &mut [bool]| match clip {
            Some(c) if v.abs() > c => {
                clipped[e] = true;
                c.copysign(v)
            }
            _ => v,
        };
        let sv: Vec<f64> = state.iter().enumerate().map(|(i, &v)| sat(v, i, clipped)).collect();
        let one = 1.0;
        let mut mv = vec![0.0; self.muls.len()];
        for &j in &self.order {
            let a = row_sum(&self.muls[j].a, &sv, &mv, one);
            let b = row_sum(&self.muls[j].b, &sv, &mv, one);
            mv[j] = sat(a * b, self.names.len() + j, clipped);
        }
        (sv, mv, one)
    }

    /// `(lane, current)` for every lane feeding an integrator, unclipped.
    pub fn lane_currents(&self, state: &[f64]) -> Vec<(usize, f64)> {
        let mut scratch = vec![false; self.elements.len()];
        let (sv, mv, one) = self.voltages(state, None, &mut scratch);
        let mut out: Vec<(usize, f64)> = self
            .inputs
            .iter()
            .flatten()
            .map(|t| (t.lane, t.weight * voltage(t.src, &sv, &mv, one)))
            .collect();
        out.sort_by_key(|&(lane, _)| lane);
        out
    }
}

fn voltage(src: Source, sv: &[f64], mv: &[f64], one: f64) -> f64 {
    match src {
        Source::State(i) => sv[i],
        Source::Multiplier(j) => mv[j],
        Source::One => one,
    }
}

fn row_sum(terms: &[LaneTerm], sv: &[f64], mv: &[f64], one: f64) -> f64 {
    terms.iter().map(|t| t.weight * voltage(t.src, sv, mv, one)).sum()
}

/// Topological order of the multipliers, lowest index first among ready
/// ones.
fn multiplier_order(muls: &[MulSlot]) -> Result<Vec<usize>, SimError> {
    let n = muls.len();
    let mut deps: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    for (j, m) in muls.iter().enumerate() {
        for t in m.a.iter().chain(&m.b) {
            if let Source::Multiplier(k) = t.src {
                deps[j].insert(k);
            }
        }
    }
    let mut done = vec![false; n];
    let mut order = Vec::with_capacity(n);
    while order.len() < n {
        let ready = (0..n).find(|&j| !done[j] && deps[j].iter().all(|&k| done[k]));
        match ready {
            Some(j) => {
                done[j] = true;
                order.push(j);
            }
            None => return Err(SimError::AlgebraicLoop((0..n).filter(|&j| !done[j]).collect())),
        }
    }
    Ok(order)
}

impl Dynamics for HardwareModel {
    fn states(&self) -> &[String] {
        &self.names
    }

    fn elements(&self) -> &[String] {
        &self.elements
    }

    fn eval(&self, state: &[f64], clip: Option<f64>, deriv: &mut [f64], clipped: &mut [bool]) {
        let (sv, mv, one) = self.voltages(state, clip, clipped);
        for (d, terms) in deriv.iter_mut().zip(&self.inputs) {
            *d = row_sum(terms, &sv, &mv, one);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::{build_circuit, normalize};
    use crate::dsl::parse_program;
    use crate::machine::{lucidac_spec, Coefficient};
    use crate::route::place_and_route;

    fn lorenz_placement() -> Placement {
        let p = parse_program(include_str!("../../tests/data/lorenz.odedsl")).unwrap();
        let g = build_circuit(&normalize(&p)).unwrap();
        place_and_route(&g, &lucidac_spec()).unwrap().0
    }

    fn eval(m: &HardwareModel, s: &[f64]) -> Vec<f64> {
        let mut d = vec![0.0; s.len()];
        m.eval(s, None, &mut d, &mut vec![false; m.elements().len()]);
        d
    }

    #[test]
    fn lorenz_quantized_rhs() {
        let m = HardwareModel::from_placement(&lorenz_placement(), true).unwrap();
        assert_eq!(m.states(), ["X", "Y", "Z"]);
        assert_eq!(m.initial(), [0.1, 0.0, 0.0]);
        // 1.56 quantizes to code 319; -1 is exact on a low-resolution lane
        let d = eval(&m, &[0.1, 0.0, 0.0]);
        assert_eq!(d, [-0.1, 0.1 * 319.0 * 10.0 / 2048.0, 0.0]);
    }

    #[test]
    fn exact_weights() {
        let m = HardwareModel::from_placement(&lorenz_placement(), false).unwrap();
        let (x, y, z) = (0.3, -0.2, 0.5);
        let d = eval(&m, &[x, y, z]);
        let want = [
            1.8 * y - x,
            1.56 * x - 1.56 * 2.678 * x * z - 0.1 * y,
            1.5 * x * y - 0.2667 * z,
        ];
        for (a, b) in d.iter().zip(want) {
            assert!((a - b).abs() < 1e-14, "{a} {b}");
        }
    }

    #[test]
    fn decay_circuit() {
        let mut c = MachineConfig::empty(&lucidac_spec());
        c.u_matrix[24] = Some(0);
        c.i_matrix[24] = Some(0);
        c.coefficients[24] = Coefficient::LowRes(6);
        let m = HardwareModel::from_config(&c).unwrap();
        assert_eq!(m.states(), ["I0"]);
        assert_eq!(eval(&m, &[0.7]), [-0.7]);
    }

    #[test]
    fn empty_config() {
        let m = HardwareModel::from_config(&MachineConfig::empty(&lucidac_spec())).unwrap();
        assert!(m.states().is_empty());
    }

    #[test]
    fn multiplier_loop() {
        // M0 output feeds M0 input a
        let spec = lucidac_spec();
        let mut c = MachineConfig::empty(&spec);
        let mut lane = |l: usize, src: usize, dst: usize| {
            c.u_matrix[l] = Some(src);
            c.i_matrix[l] = Some(dst);
            c.coefficients[l] = Coefficient::HighRes(205);
        };
        lane(0, spec.out_row(OutRow::Multiplier(0)), spec.in_row(InRow::MulA(0)));
        lane(1, 0, spec.in_row(InRow::MulB(0)));
        lane(2, spec.out_row(OutRow::Multiplier(0)), 0);
        assert_eq!(HardwareModel::from_config(&c).unwrap_err(), SimError::AlgebraicLoop(vec![0]));
    }

    #[test]
    fn invalid_config() {
        let mut c = MachineConfig::empty(&lucidac_spec());
        c.u_matrix[0] = Some(0);
        assert!(matches!(HardwareModel::from_config(&c), Err(SimError::InvalidConfig(_))));
    }

    #[test]
    fn lane_linearity() {
        let placement = lorenz_placement();
        let s = [0.4, -0.3, 0.2];
        let base = HardwareModel::from_placement(&placement, false).unwrap().lane_currents(&s);
        for &(lane, current) in &base {
            let mut scaled = placement.clone();
            scaled.lane_weights[lane] *= 0.5;
            let got = HardwareModel::from_placement(&scaled, false).unwrap().lane_currents(&s);
            for (&(l, c), &(l2, c2)) in got.iter().zip(&base) {
                assert_eq!(l, l2);
                if l == lane {
                    assert_eq!(c, 0.5 * current);
                } else {
                    assert_eq!(c, c2);
                }
            }
        }
    }

    #[test]
    fn clipped_multiplier() {
        let m = HardwareModel::from_placement(&lorenz_placement(), false).unwrap();
        let mut clipped = vec![false; m.elements().len()];
        let mut d = [0.0; 3];
        m.eval(&[1.5, 0.2, 0.0], Some(1.0), &mut d, &mut clipped);
        assert_eq!(m.elements()[..5], ["X", "Y", "Z", "M0", "M1"]);
        assert_eq!(clipped[..5], [true, false, false, false, false]);
        // X saturates to 1 before it reaches any lane
        assert!((d[0] - (1.8 * 0.2 - 1.0)).abs() < 1e-15);
    }
}
