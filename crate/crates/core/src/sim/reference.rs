use crate::circuit::PolySystem;

use super::Dynamics;

struct IndexedTerm {
    weight: f64,
    factors: Vec<usize>,
}

/// Direct evaluation of a polynomial system with unquantized weights.
pub struct ReferenceModel {
    names: Vec<String>,
    rhs: Vec<Vec<IndexedTerm>>,
    initial: Vec<f64>,
}

impl ReferenceModel {
    pub fn new(system: &PolySystem) -> Self {
        let rhs = system
            .rhs
            .iter()
            .map(|terms| {
                terms
                    .iter()
                    .map(|t| IndexedTerm {
                        weight: t.weight,
                        factors: t
                            .monomial
                            .factors()
                            .iter()
                            .map(|f| system.state_index(f).expect("factor is a state"))
                            .collect(),
                    })
                    .collect()
            })
            .collect();
        ReferenceModel {
            names: system.states.clone(),
            rhs,
            initial: system.initial.clone(),
        }
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }
}

impl Dynamics for ReferenceModel {
    fn states(&self) -> &[String] {
        &self.names
    }

    fn elements(&self) -> &[String] {
        &self.names
    }

    fn eval(&self, state: &[f64], clip: Option<f64>, deriv: &mut [f64], clipped: &mut [bool]) {
        let mut v = state.to_vec();
        if let Some(c) = clip {
            for (i, x) in v.iter_mut().enumerate() {
                if x.abs() > c {
                    *x = c.copysign(*x);
                    clipped[i] = true;
                }
            }
        }
        for (d, terms) in deriv.iter_mut().zip(&self.rhs) {
            *d = terms
                .iter()
                .map(|t| t.factors.iter().fold(t.weight, |acc, &f| acc * v[f]))
                .sum();
        }
    }
}
