//! Syntax trees for the ODE description language and their canonical
//! source rendering.

use std::fmt;

use super::Pos;

/// Right-hand-side expression of a derivative definition.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(String),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Neg(Box<Expr>),
}

#[allow(clippy::should_implement_trait)]
impl Expr {
    pub fn var(name: impl Into<String>) -> Expr {
        Expr::Var(name.into())
    }

    pub fn add(l: Expr, r: Expr) -> Expr {
        Expr::Add(Box::new(l), Box::new(r))
    }

    pub fn sub(l: Expr, r: Expr) -> Expr {
        Expr::Sub(Box::new(l), Box::new(r))
    }

    pub fn mul(l: Expr, r: Expr) -> Expr {
        Expr::Mul(Box::new(l), Box::new(r))
    }

    pub fn neg(e: Expr) -> Expr {
        Expr::Neg(Box::new(e))
    }

    /// Evaluates the tree with variable values supplied by `lookup`.
    pub fn eval(&self, lookup: &impl Fn(&str) -> f64) -> f64 {
        match self {
            Expr::Const(c) => *c,
            Expr::Var(name) => lookup(name),
            Expr::Add(l, r) => l.eval(lookup) + r.eval(lookup),
            Expr::Sub(l, r) => l.eval(lookup) - r.eval(lookup),
            Expr::Mul(l, r) => l.eval(lookup) * r.eval(lookup),
            Expr::Neg(e) => -e.eval(lookup),
        }
    }

    /// Visits every variable name in the tree, left to right.
    pub fn for_each_var<'a>(&'a self, f: &mut impl FnMut(&'a str)) {
        match self {
            Expr::Const(_) => {}
            Expr::Var(name) => f(name),
            Expr::Add(l, r) | Expr::Sub(l, r) | Expr::Mul(l, r) => {
                l.for_each_var(f);
                r.for_each_var(f);
            }
            Expr::Neg(e) => e.for_each_var(f),
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Add(..) | Expr::Sub(..) => 1,
            Expr::Mul(..) => 2,
            Expr::Neg(_) => 3,
            Expr::Const(_) | Expr::Var(_) => 4,
        }
    }

    fn fmt_operand(&self, f: &mut fmt::Formatter<'_>, min_prec: u8) -> fmt::Result {
        if self.precedence() < min_prec {
            write!(f, "({self})")
        } else {
            write!(f, "{self}")
        }
    }
}

/// Renders with the minimum parentheses needed to re-parse into the same
/// tree. Negative constants render as `-c` and re-parse as `Neg(Const c)`.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => write!(f, "{c}"),
            Expr::Var(name) => f.write_str(name),
            Expr::Add(l, r) | Expr::Sub(l, r) => {
                let op = if matches!(self, Expr::Add(..)) { '+' } else { '-' };
                l.fmt_operand(f, 1)?;
                write!(f, " {op} ")?;
                r.fmt_operand(f, 2)
            }
            Expr::Mul(l, r) => {
                l.fmt_operand(f, 2)?;
                f.write_str(" * ")?;
                r.fmt_operand(f, 3)
            }
            Expr::Neg(e) => {
                f.write_str("-")?;
                e.fmt_operand(f, 3)
            }
        }
    }
}

/// A value annotated with its source position.
#[derive(Debug, Clone, PartialEq)]
pub struct Spanned<T> {
    pub value: T,
    pub pos: Pos,
}

impl<T> Spanned<T> {
    pub fn new(value: T, pos: Pos) -> Self {
        Spanned { value, pos }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AxisRef {
    pub label: Spanned<String>,
    pub state: Spanned<String>,
}

/// One statement of an unvalidated program.
#[derive(Debug, Clone, PartialEq)]
pub enum Stmt {
    /// `fn X(t);`
    Function {
        name: Spanned<String>,
        time_var: String,
    },
    /// `let diff[X, t] = expr;`
    Derivative {
        state: Spanned<String>,
        rhs: Expr,
        /// Every variable reference in `rhs`, with its position.
        refs: Vec<Spanned<String>>,
    },
    /// `let X(t: 0) = value;`
    Initial {
        state: Spanned<String>,
        time: Spanned<f64>,
        value: f64,
    },
    /// `plot(x: X(t), y: Y(t));`
    Plot { pos: Pos, axes: Vec<AxisRef> },
    /// `out X(t);`
    Output { state: Spanned<String> },
}

/// Parsed but unvalidated program.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Ast {
    pub time_var: Option<String>,
    pub statements: Vec<Stmt>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateDef {
    pub name: String,
    pub derivative: Expr,
    pub initial_value: f64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlotAxis {
    pub label: String,
    pub state: String,
}

/// A `plot` statement. Validation guarantees at least two axes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Plot {
    pub axes: Vec<PlotAxis>,
}

impl Plot {
    pub fn x(&self) -> &str {
        &self.axes[0].state
    }

    pub fn y(&self) -> &str {
        &self.axes[1].state
    }
}

/// A checked program: every referenced name is a declared state and every
/// state has exactly one derivative and one initial value.
#[derive(Debug, Clone, PartialEq)]
pub struct Program {
    pub time_var: String,
    pub states: Vec<StateDef>,
    pub outputs: Vec<String>,
    pub plots: Vec<Plot>,
}

impl Program {
    pub fn state_index(&self, name: &str) -> Option<usize> {
        self.states.iter().position(|s| s.name == name)
    }
}

/// Canonical source form; parsing it back yields an identical `Program`.
impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let t = &self.time_var;
        for s in &self.states {
            writeln!(f, "fn {}({t});", s.name)?;
        }
        writeln!(f)?;
        for s in &self.states {
            writeln!(f, "let diff[{}, {t}] = {};", s.name, s.derivative)?;
        }
        writeln!(f)?;
        for s in &self.states {
            writeln!(f, "let {}({t}: 0) = {};", s.name, s.initial_value)?;
        }
        if !self.plots.is_empty() {
            writeln!(f)?;
        }
        for plot in &self.plots {
            let axes: Vec<String> = plot
                .axes
                .iter()
                .map(|a| format!("{}: {}({t})", a.label, a.state))
                .collect();
            writeln!(f, "plot({});", axes.join(", "))?;
        }
        if !self.outputs.is_empty() {
            writeln!(f)?;
        }
        for out in &self.outputs {
            writeln!(f, "out {out}({t});")?;
        }
        Ok(())
    }
}
