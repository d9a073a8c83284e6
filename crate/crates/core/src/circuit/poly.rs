use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use crate::dsl::{Expr, Program};

/// Product of state variables. Factors are kept sorted so that equal
/// multisets compare equal. The empty product is the constant one.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct Monomial(Vec<String>);

impl Monomial {
    pub fn one() -> Self {
        Monomial(Vec::new())
    }

    pub fn new<S: Into<String>>(factors: impl IntoIterator<Item = S>) -> Self {
        let mut f: Vec<String> = factors.into_iter().map(Into::into).collect();
        f.sort();
        Monomial(f)
    }

    pub fn degree(&self) -> usize {
        self.0.len()
    }

    pub fn factors(&self) -> &[String] {
        &self.0
    }

    /// The product of the first `len` factors.
    pub fn prefix(&self, len: usize) -> Monomial {
        Monomial(self.0[..len].to_vec())
    }

    fn times(&self, other: &Monomial) -> Monomial {
        let mut f = Vec::with_capacity(self.0.len() + other.0.len());
        f.extend_from_slice(&self.0);
        f.extend_from_slice(&other.0);
        f.sort();
        Monomial(f)
    }
}

/// Canonical order: by degree, then lexicographically by factors.
impl Ord for Monomial {
    fn cmp(&self, other: &Self) -> Ordering {
        self.degree()
            .cmp(&other.degree())
            .then_with(|| self.0.cmp(&other.0))
    }
}

impl PartialOrd for Monomial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Monomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            f.write_str("1")
        } else {
            f.write_str(&self.0.join("*"))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Term {
    pub weight: f64,
    pub monomial: Monomial,
}

/// An ODE system whose right-hand sides are weighted sums of distinct
/// monomials with nonzero weights.
#[derive(Debug, Clone, PartialEq)]
pub struct PolySystem {
    pub states: Vec<String>,
    pub rhs: Vec<Vec<Term>>,
    pub initial: Vec<f64>,
}

type Poly = BTreeMap<Monomial, f64>;

fn add_into(acc: &mut Poly, other: Poly, sign: f64) {
    for (m, w) in other {
        *acc.entry(m).or_insert(0.0) += sign * w;
    }
}

fn expand(expr: &Expr) -> Poly {
    match expr {
        Expr::Const(c) => Poly::from([(Monomial::one(), *c)]),
        Expr::Var(name) => Poly::from([(Monomial(vec![name.clone()]), 1.0)]),
        Expr::Add(l, r) | Expr::Sub(l, r) => {
            let mut acc = expand(l);
            let sign = if matches!(expr, Expr::Add(..)) { 1.0 } else { -1.0 };
            add_into(&mut acc, expand(r), sign);
            acc
        }
        Expr::Neg(e) => {
            let mut p = expand(e);
            p.values_mut().for_each(|w| *w = -*w);
            p
        }
        Expr::Mul(l, r) => {
            let (lp, rp) = (expand(l), expand(r));
            let mut acc = Poly::new();
            for (lm, lw) in &lp {
                for (rm, rw) in &rp {
                    *acc.entry(lm.times(rm)).or_insert(0.0) += lw * rw;
                }
            }
            acc
        }
    }
}

/// Expands an expression into merged terms in canonical monomial order,
/// dropping terms whose weight folds to exactly zero.
pub fn expand_terms(expr: &Expr) -> Vec<Term> {
    expand(expr)
        .into_iter()
        .filter(|(_, w)| *w != 0.0)
        .map(|(monomial, weight)| Term { weight, monomial })
        .collect()
}

/// Expands every derivative of `program` into polynomial form.
pub fn normalize(program: &Program) -> PolySystem {
    PolySystem {
        states: program.states.iter().map(|s| s.name.clone()).collect(),
        rhs: program
            .states
            .iter()
            .map(|s| expand_terms(&s.derivative))
            .collect(),
        initial: program.states.iter().map(|s| s.initial_value).collect(),
    }
}

impl PolySystem {
    pub fn state_index(&self, name: &str) -> Option<usize> {
        self.states.iter().position(|s| s == name)
    }

    /// Rebuilds the right-hand side of `state` as an expression tree of
    /// `weight * factor * ...` summands.
    pub fn rhs_expr(&self, state: usize) -> Expr {
        let summand = |t: &Term| {
            t.monomial
                .factors()
                .iter()
                .fold(Expr::Const(t.weight), |acc, f| Expr::mul(acc, Expr::var(f.clone())))
        };
        let mut terms = self.rhs[state].iter();
        match terms.next() {
            None => Expr::Const(0.0),
            Some(first) => terms.fold(summand(first), |acc, t| Expr::add(acc, summand(t))),
        }
    }

    /// Evaluates the right-hand side of `state` at `values` (indexed like
    /// `states`).
    pub fn eval_rhs(&self, state: usize, values: &[f64]) -> f64 {
        self.rhs[state]
            .iter()
            .map(|t| {
                t.monomial.factors().iter().fold(t.weight, |acc, f| {
                    acc * values[self.state_index(f).expect("factor is a state")]
                })
            })
            .sum()
    }

    pub fn term_count(&self) -> usize {
        self.rhs.iter().map(Vec::len).sum()
    }
}
