//! Generators shared by the property tests.

#![allow(dead_code)]

use autopatch::dsl::{Expr, Plot, PlotAxis, Program, StateDef};
use autopatch::machine::{lucidac_spec, Coefficient, MachineConfig};
use proptest::prelude::*;

pub const NAMES: [&str; 4] = ["X", "Y", "Z", "W"];

/// Non-negative decimal constants with up to three fraction digits.
pub fn constant() -> impl Strategy<Value = f64> {
    (0u32..10_000).prop_map(|k| k as f64 / 1000.0)
}

pub fn expr(n_states: usize, depth: u32) -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![
        constant().prop_map(Expr::Const),
        (0..n_states).prop_map(|i| Expr::var(NAMES[i])),
    ];
    leaf.prop_recursive(depth, 24, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(l, r)| Expr::add(l, r)),
            (inner.clone(), inner.clone()).prop_map(|(l, r)| Expr::sub(l, r)),
            (inner.clone(), inner.clone()).prop_map(|(l, r)| Expr::mul(l, r)),
            inner.prop_map(Expr::neg),
        ]
    })
}

pub fn program() -> impl Strategy<Value = Program> {
    (1..=NAMES.len()).prop_flat_map(|n| {
        (
            prop::collection::vec(expr(n, 4), n),
            prop::collection::vec((-5000i32..5000).prop_map(|k| k as f64 / 1000.0), n),
            prop::collection::vec(0..n, 0..3),
            prop::option::of((0..n, 0..n)),
        )
            .prop_map(move |(derivs, inits, outs, plot)| Program {
                time_var: "t".to_string(),
                states: derivs
                    .into_iter()
                    .zip(inits)
                    .enumerate()
                    .map(|(i, (derivative, initial_value))| StateDef {
                        name: NAMES[i].to_string(),
                        derivative,
                        initial_value,
                    })
                    .collect(),
                outputs: outs.into_iter().map(|i| NAMES[i].to_string()).collect(),
                plots: plot
                    .into_iter()
                    .map(|(x, y)| Plot {
                        axes: vec![
                            PlotAxis { label: "x".into(), state: NAMES[x].into() },
                            PlotAxis { label: "y".into(), state: NAMES[y].into() },
                        ],
                    })
                    .collect(),
            })
    })
}

/// Random configurations that pass validation on the LUCIDAC profile:
/// each lane is idle or wires a bound source row to any input row with a
/// code of the lane's kind.
pub fn lucidac_config() -> impl Strategy<Value = MachineConfig> {
    let spec = lucidac_spec();
    let sources: Vec<usize> = (0..spec.out_rows).filter(|&r| spec.out_binding(r).is_some()).collect();
    let lanes: Vec<_> = (0..spec.n_lanes)
        .map(|lane| {
            let lowres = spec.is_lowres(lane);
            let coefficient = if lowres {
                (0u8..8).prop_map(Coefficient::LowRes).boxed()
            } else {
                (-2048i16..=2047).prop_map(Coefficient::HighRes).boxed()
            };
            prop::option::of((prop::sample::select(sources.clone()), 0..spec.in_rows, coefficient))
        })
        .collect();
    lanes.prop_map(move |lanes| {
        let mut c = MachineConfig::empty(&spec);
        for (lane, l) in lanes.into_iter().enumerate() {
            if let Some((src, dst, coef)) = l {
                c.u_matrix[lane] = Some(src);
                c.i_matrix[lane] = Some(dst);
                c.coefficients[lane] = coef;
            }
        }
        c
    })
}
