use std::collections::HashMap;

use thiserror::Error;

use super::ast::{Ast, Expr, Plot, PlotAxis, Program, StateDef, Stmt};
use super::Pos;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ValidateErrorKind {
    NoStates,
    DuplicateState(String),
    UnknownState(String),
    UndeclaredVariable(String),
    DuplicateDerivative(String),
    MissingDerivative(String),
    DuplicateInitial(String),
    MissingInitial(String),
    NonZeroStartTime(String),
    TooFewPlotAxes(usize),
}

impl std::fmt::Display for ValidateErrorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        use ValidateErrorKind::*;
        match self {
            NoStates => write!(f, "no states declared"),
            DuplicateState(s) => write!(f, "state `{s}` declared more than once"),
            UnknownState(s) => write!(f, "unknown state `{s}`"),
            UndeclaredVariable(s) => write!(f, "use of undeclared variable `{s}`"),
            DuplicateDerivative(s) => write!(f, "duplicate derivative for `{s}`"),
            MissingDerivative(s) => write!(f, "missing derivative for `{s}`"),
            DuplicateInitial(s) => write!(f, "duplicate initial condition for `{s}`"),
            MissingInitial(s) => write!(f, "missing initial condition for `{s}`"),
            NonZeroStartTime(s) => write!(f, "initial condition for `{s}` must be given at time 0"),
            TooFewPlotAxes(n) => write!(f, "plot needs at least two axes, found {n}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{line}:{column}: {kind}")]
pub struct ValidateError {
    pub line: usize,
    pub column: usize,
    pub kind: ValidateErrorKind,
}

impl ValidateError {
    fn at(pos: Pos, kind: ValidateErrorKind) -> Self {
        ValidateError {
            line: pos.line,
            column: pos.column,
            kind,
        }
    }

    pub fn pos(&self) -> Pos {
        Pos {
            line: self.line,
            column: self.column,
        }
    }
}

#[derive(Default)]
struct Slot {
    declared_at: Pos,
    derivative: Option<Expr>,
    initial: Option<f64>,
}

/// Checks the program invariants and orders states by their `fn`
/// declarations.
pub fn validate(ast: &Ast) -> Result<Program, ValidateError> {
    let mut order: Vec<String> = Vec::new();
    let mut slots: HashMap<String, Slot> = HashMap::new();

    for stmt in &ast.statements {
        if let Stmt::Function { name, .. } = stmt {
            if slots.contains_key(&name.value) {
                return Err(ValidateError::at(
                    name.pos,
                    ValidateErrorKind::DuplicateState(name.value.clone()),
                ));
            }
            order.push(name.value.clone());
            slots.insert(
                name.value.clone(),
                Slot {
                    declared_at: name.pos,
                    ..Slot::default()
                },
            );
        }
    }
    if order.is_empty() {
        let pos = Pos { line: 1, column: 1 };
        return Err(ValidateError::at(pos, ValidateErrorKind::NoStates));
    }

    let unknown = |name: &super::ast::Spanned<String>| {
        ValidateError::at(name.pos, ValidateErrorKind::UnknownState(name.value.clone()))
    };

    let mut outputs = Vec::new();
    let mut plots = Vec::new();
    for stmt in &ast.statements {
        match stmt {
            Stmt::Function { .. } => {}
            Stmt::Derivative { state, rhs, refs } => {
                for r in refs {
                    if !slots.contains_key(&r.value) {
                        return Err(ValidateError::at(
                            r.pos,
                            ValidateErrorKind::UndeclaredVariable(r.value.clone()),
                        ));
                    }
                }
                let slot = slots.get_mut(&state.value).ok_or_else(|| unknown(state))?;
                if slot.derivative.is_some() {
                    return Err(ValidateError::at(
                        state.pos,
                        ValidateErrorKind::DuplicateDerivative(state.value.clone()),
                    ));
                }
                slot.derivative = Some(rhs.clone());
            }
            Stmt::Initial { state, time, value } => {
                let slot = slots.get_mut(&state.value).ok_or_else(|| unknown(state))?;
                if time.value != 0.0 {
                    return Err(ValidateError::at(
                        time.pos,
                        ValidateErrorKind::NonZeroStartTime(state.value.clone()),
                    ));
                }
                if slot.initial.is_some() {
                    return Err(ValidateError::at(
                        state.pos,
                        ValidateErrorKind::DuplicateInitial(state.value.clone()),
                    ));
                }
                slot.initial = Some(*value);
            }
            Stmt::Plot { pos, axes } => {
                if axes.len() < 2 {
                    return Err(ValidateError::at(
                        *pos,
                        ValidateErrorKind::TooFewPlotAxes(axes.len()),
                    ));
                }
                let mut checked = Vec::with_capacity(axes.len());
                for axis in axes {
                    if !slots.contains_key(&axis.state.value) {
                        return Err(unknown(&axis.state));
                    }
                    checked.push(PlotAxis {
                        label: axis.label.value.clone(),
                        state: axis.state.value.clone(),
                    });
                }
                plots.push(Plot { axes: checked });
            }
            Stmt::Output { state } => {
                if !slots.contains_key(&state.value) {
                    return Err(unknown(state));
                }
                outputs.push(state.value.clone());
            }
        }
    }

    let mut states = Vec::with_capacity(order.len());
    for name in order {
        let slot = slots.remove(&name).expect("declared state");
        let Some(derivative) = slot.derivative else {
            return Err(ValidateError::at(
                slot.declared_at,
                ValidateErrorKind::MissingDerivative(name),
            ));
        };
        let Some(initial_value) = slot.initial else {
            return Err(ValidateError::at(
                slot.declared_at,
                ValidateErrorKind::MissingInitial(name),
            ));
        };
        states.push(StateDef {
            name,
            derivative,
            initial_value,
        });
    }

    Ok(Program {
        time_var: ast.time_var.clone().unwrap_or_else(|| "t".to_string()),
        states,
        outputs,
        plots,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::{parse, tokenize};

    fn check(src: &str) -> Result<Program, ValidateError> {
        validate(&parse(&tokenize(src).unwrap()).unwrap())
    }

    const DECAY: &str = "fn X(t);\nlet diff[X, t] = -X;\nlet X(t: 0) = 1;\n";

    #[test]
    fn decay_program() {
        let p = check(DECAY).unwrap();
        assert_eq!(p.states.len(), 1);
        assert_eq!(p.states[0].initial_value, 1.0);
        assert_eq!(p.states[0].derivative, Expr::neg(Expr::var("X")));
        assert_eq!(p.time_var, "t");
    }

    #[test]
    fn missing_derivative() {
        let err = check("fn X(t);\nlet X(t: 0) = 1;").unwrap_err();
        assert_eq!(err.kind, ValidateErrorKind::MissingDerivative("X".into()));
        assert_eq!((err.line, err.column), (1, 4));
    }

    #[test]
    fn unknown_output() {
        let err = check(&format!("{DECAY}out W(t);")).unwrap_err();
        assert_eq!(err.kind, ValidateErrorKind::UnknownState("W".into()));
        assert_eq!((err.line, err.column), (4, 5));
    }

    #[test]
    fn undeclared_variable_in_rhs() {
        let err = check("fn X(t);\nlet diff[X, t] = X * Q;\nlet X(t: 0) = 1;").unwrap_err();
        assert_eq!(err.kind, ValidateErrorKind::UndeclaredVariable("Q".into()));
        assert_eq!((err.line, err.column), (2, 22));
    }

    #[test]
    fn duplicates_are_rejected() {
        let err = check(&format!("{DECAY}let diff[X, t] = X;")).unwrap_err();
        assert_eq!(err.kind, ValidateErrorKind::DuplicateDerivative("X".into()));
        let err = check(&format!("{DECAY}let X(t: 0) = 2;")).unwrap_err();
        assert_eq!(err.kind, ValidateErrorKind::DuplicateInitial("X".into()));
        let err = check(&format!("{DECAY}fn X(t);")).unwrap_err();
        assert_eq!(err.kind, ValidateErrorKind::DuplicateState("X".into()));
    }

    #[test]
    fn missing_initial() {
        let err = check("fn X(t);\nlet diff[X, t] = X;").unwrap_err();
        assert_eq!(err.kind, ValidateErrorKind::MissingInitial("X".into()));
    }

    #[test]
    fn nonzero_start_time() {
        let err = check("fn X(t);\nlet diff[X, t] = X;\nlet X(t: 1) = 0;").unwrap_err();
        assert_eq!(err.kind, ValidateErrorKind::NonZeroStartTime("X".into()));
        assert_eq!((err.line, err.column), (3, 10));
        // `0.0` is the same instant
        assert!(check("fn X(t);\nlet diff[X, t] = X;\nlet X(t: 0.0) = 0;").is_ok());
    }

    #[test]
    fn empty_program() {
        let err = check("").unwrap_err();
        assert_eq!(err.kind, ValidateErrorKind::NoStates);
        assert_eq!(err.to_string(), "1:1: no states declared");
    }

    #[test]
    fn plot_axes() {
        let err = check(&format!("{DECAY}plot(x: X(t));")).unwrap_err();
        assert_eq!(err.kind, ValidateErrorKind::TooFewPlotAxes(1));
        let err = check(&format!("{DECAY}plot(x: X(t), y: V(t));")).unwrap_err();
        assert_eq!(err.kind, ValidateErrorKind::UnknownState("V".into()));
        let p = check(&format!("{DECAY}plot(x: X(t), y: X(t), z: X(t));")).unwrap();
        assert_eq!(p.plots[0].axes.len(), 3);
    }

    #[test]
    fn states_follow_fn_order() {
        let src = "fn B(t);\nfn A(t);\nlet A(t: 0) = 1;\nlet diff[A, t] = B;\nlet diff[B, t] = A;\nlet B(t: 0) = 2;";
        let p = check(src).unwrap();
        let names: Vec<_> = p.states.iter().map(|s| s.name.as_str()).collect();
        assert_eq!(names, ["B", "A"]);
        assert_eq!(p.states[0].initial_value, 2.0);
    }
}
