//! Placement of circuit elements onto machine slots and routing of every
//! weighted edge through its own lane.

use std::fmt;

use thiserror::Error;

use crate::circuit::{detect_algebraic_loops, CircuitGraph, LoopError, NodeKind, Port};
use crate::machine::{
    lowres_code, quantize_highres, validate_config, Coefficient, InRow, MachineConfig,
    MachineSpec, OutRow, Violation,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Resource {
    Integrators,
    Multipliers,
    Lanes,
    HighResLanes,
}

impl fmt::Display for Resource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Resource::Integrators => "integrators",
            Resource::Multipliers => "multipliers",
            Resource::Lanes => "lanes",
            Resource::HighResLanes => "high-resolution lanes",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlaceError {
    #[error("{kind}: need {needed}, have {available}")]
    Capacity {
        kind: Resource,
        needed: usize,
        available: usize,
    },
    #[error("circuit needs a constant source but the machine has no constant row")]
    ConstUnavailable,
    #[error(transparent)]
    AlgebraicLoop(#[from] LoopError),
    #[error("routed configuration is invalid: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Violation>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClampWarning {
    pub lane: usize,
    pub requested: f64,
    pub decoded: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PlaceRouteReport {
    pub integrators_used: usize,
    pub multipliers_used: usize,
    pub lanes_used: usize,
    pub lowres_lanes_used: usize,
    pub clamp_warnings: Vec<ClampWarning>,
    /// `(lane, |decoded - requested|)` for every used lane, by lane.
    pub quantization_errors: Vec<(usize, f64)>,
}

impl PlaceRouteReport {
    pub fn max_quantization_error(&self) -> f64 {
        self.quantization_errors.iter().map(|&(_, e)| e).fold(0.0, f64::max)
    }
}

/// `key: value` lines.
impl fmt::Display for PlaceRouteReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "integrators_used: {}", self.integrators_used)?;
        writeln!(f, "multipliers_used: {}", self.multipliers_used)?;
        writeln!(f, "lanes_used: {}", self.lanes_used)?;
        writeln!(f, "lowres_lanes_used: {}", self.lowres_lanes_used)?;
        let clamps: Vec<String> = self
            .clamp_warnings
            .iter()
            .map(|w| format!("lane {} {} -> {}", w.lane, w.requested, w.decoded))
            .collect();
        writeln!(
            f,
            "clamp_warnings: {}",
            if clamps.is_empty() { "none".to_string() } else { clamps.join(", ") }
        )?;
        writeln!(f, "max_quantization_error: {}", self.max_quantization_error())
    }
}

/// Integrator placed for one program state.
#[derive(Debug, Clone, PartialEq)]
pub struct PlacedIntegrator {
    pub name: String,
    pub slot: usize,
    pub initial: f64,
}

/// A routed configuration together with the program-level facts the image
/// format does not carry: which integrator holds which state, the initial
/// values, and the unquantized weight requested on each lane.
#[derive(Debug, Clone, PartialEq)]
pub struct Placement {
    pub config: MachineConfig,
    pub integrators: Vec<PlacedIntegrator>,
    /// Requested weight per lane; `0.0` on unused lanes.
    pub lane_weights: Vec<f64>,
}

impl Placement {
    /// Output row carrying the named state.
    pub fn tap_row(&self, name: &str) -> Option<usize> {
        self.integrators
            .iter()
            .find(|p| p.name == name)
            .map(|p| self.config.spec.out_row(OutRow::Integrator(p.slot)))
    }
}

struct Routed {
    src: usize,
    dst: usize,
    weight: f64,
}

/// Picks a lane for each `(src row, dst row, weight)`. Exactly representable
/// low-resolution weights take low-resolution lanes while any remain; all
/// other edges take high-resolution lanes. Both pools are used in ascending
/// lane order after sorting edges by `(src, dst, weight)`.
///
/// Returns lane indices in the sorted edge order together with that order.
pub fn assign_lane_kinds(
    edges: &[(usize, usize, f64)],
    spec: &MachineSpec,
) -> Result<Vec<(usize, usize)>, PlaceError> {
    if edges.len() > spec.n_lanes {
        return Err(PlaceError::Capacity {
            kind: Resource::Lanes,
            needed: edges.len(),
            available: spec.n_lanes,
        });
    }
    let mut order: Vec<usize> = (0..edges.len()).collect();
    order.sort_by(|&a, &b| {
        let (ea, eb) = (&edges[a], &edges[b]);
        (ea.0, ea.1)
            .cmp(&(eb.0, eb.1))
            .then(ea.2.total_cmp(&eb.2))
    });

    let mut lowres = spec.lowres_lanes();
    let mut highres = spec.highres_lanes();
    let available_hi = spec.n_lanes - spec.lowres_count();
    let needed_hi = {
        let eligible = edges.iter().filter(|e| lowres_code(e.2).is_some()).count();
        edges.len() - eligible + eligible.saturating_sub(spec.lowres_count())
    };
    if needed_hi > available_hi {
        return Err(PlaceError::Capacity {
            kind: Resource::HighResLanes,
            needed: needed_hi,
            available: available_hi,
        });
    }

    Ok(order
        .into_iter()
        .map(|i| {
            let lane = if lowres_code(edges[i].2).is_some() {
                lowres.next().or_else(|| highres.next())
            } else {
                highres.next()
            };
            (i, lane.expect("capacity checked"))
        })
        .collect())
}

/// Maps `graph` onto `spec`.
///
/// Integrators take slots in node order (state declaration order),
/// multipliers likewise (canonical monomial order). Each edge gets its own
/// lane carrying the quantized edge weight.
pub fn place_and_route(
    graph: &CircuitGraph,
    spec: &MachineSpec,
) -> Result<(Placement, PlaceRouteReport), PlaceError> {
    detect_algebraic_loops(graph)?;

    let n_int = graph.integrator_count();
    let n_mul = graph.multiplier_count();
    if n_int > spec.n_integrators {
        return Err(PlaceError::Capacity {
            kind: Resource::Integrators,
            needed: n_int,
            available: spec.n_integrators,
        });
    }
    if n_mul > spec.n_multipliers {
        return Err(PlaceError::Capacity {
            kind: Resource::Multipliers,
            needed: n_mul,
            available: spec.n_multipliers,
        });
    }
    if graph.has_const() && !spec.has_const_row {
        return Err(PlaceError::ConstUnavailable);
    }

    // slot per node
    let mut slot = vec![0usize; graph.nodes().len()];
    let (mut next_int, mut next_mul) = (0, 0);
    let mut integrators = Vec::with_capacity(n_int);
    for node in graph.nodes() {
        match node.kind {
            NodeKind::Integrator { initial } => {
                slot[node.id] = next_int;
                integrators.push(PlacedIntegrator {
                    name: node.label.clone(),
                    slot: next_int,
                    initial,
                });
                next_int += 1;
            }
            NodeKind::Multiplier => {
                slot[node.id] = next_mul;
                next_mul += 1;
            }
            NodeKind::ConstOne => {}
        }
    }
    let out_row = |id: usize| {
        spec.out_row(match graph.nodes()[id].kind {
            NodeKind::Integrator { .. } => OutRow::Integrator(slot[id]),
            NodeKind::Multiplier => OutRow::Multiplier(slot[id]),
            NodeKind::ConstOne => OutRow::ConstOne,
        })
    };
    let in_row = |id: usize, port: Port| {
        spec.in_row(match port {
            Port::IntegratorIn => InRow::Integrator(slot[id]),
            Port::MulA => InRow::MulA(slot[id]),
            Port::MulB => InRow::MulB(slot[id]),
        })
    };

    let routed: Vec<Routed> = graph
        .edges()
        .iter()
        .map(|e| Routed {
            src: out_row(e.src),
            dst: in_row(e.dst, e.dst_port),
            weight: e.weight,
        })
        .collect();
    let triples: Vec<_> = routed.iter().map(|r| (r.src, r.dst, r.weight)).collect();
    let lanes = assign_lane_kinds(&triples, spec)?;

    let mut config = MachineConfig::empty(spec);
    let mut lane_weights = vec![0.0; spec.n_lanes];
    let mut report = PlaceRouteReport {
        integrators_used: n_int,
        multipliers_used: n_mul,
        lanes_used: routed.len(),
        ..PlaceRouteReport::default()
    };
    for (edge, lane) in lanes {
        let r = &routed[edge];
        let coefficient = if spec.is_lowres(lane) {
            report.lowres_lanes_used += 1;
            Coefficient::LowRes(lowres_code(r.weight).expect("eligible weight"))
        } else {
            let q = quantize_highres(r.weight);
            if q.clamped {
                report.clamp_warnings.push(ClampWarning {
                    lane,
                    requested: r.weight,
                    decoded: Coefficient::HighRes(q.code).value(),
                });
            }
            Coefficient::HighRes(q.code)
        };
        config.u_matrix[lane] = Some(r.src);
        config.i_matrix[lane] = Some(r.dst);
        config.coefficients[lane] = coefficient;
        lane_weights[lane] = r.weight;
        report
            .quantization_errors
            .push((lane, (coefficient.value() - r.weight).abs()));
    }
    report.quantization_errors.sort_by_key(|&(lane, _)| lane);
    report.clamp_warnings.sort_by_key(|w| w.lane);

    validate_config(&config).map_err(PlaceError::Invalid)?;

    Ok((
        Placement {
            config,
            integrators,
            lane_weights,
        },
        report,
    ))
}
