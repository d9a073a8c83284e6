//! Fixed-step integration of the routed machine and of the reference
//! polynomial system.
//!
//! Both paths implement [`Dynamics`] and share [`run`], so with exact
//! weights they take identical steps and differ only by floating-point
//! reassociation.

mod hardware;
mod output;
mod reference;

pub use hardware::HardwareModel;
pub use output::{emit_traces, format_sig17, write_columns, EmitError};
pub use reference::ReferenceModel;

use std::str::FromStr;

use thiserror::Error;

use crate::machine::Violation;

pub const DEFAULT_MAX_STEPS: u64 = 100_000_000;

/// A first-order system `ds/dt = f(s)`.
pub trait Dynamics {
    /// State names, in state-vector order.
    fn states(&self) -> &[String];

    /// Elements whose outputs can saturate. The first `states().len()`
    /// entries are the integrators themselves.
    fn elements(&self) -> &[String];

    /// Writes `f(state)` into `deriv`. With `clip`, every element output is
    /// saturated to `±clip` and `clipped[e]` is set for each element that
    /// was.
    fn eval(&self, state: &[f64], clip: Option<f64>, deriv: &mut [f64], clipped: &mut [bool]);
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Method {
    #[default]
    Rk4,
    Euler,
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "rk4" => Ok(Method::Rk4),
            "euler" => Ok(Method::Euler),
            _ => Err(format!("unknown method `{s}`, expected rk4 or euler")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimSettings {
    pub dt: f64,
    pub t_end: f64,
    pub method: Method,
    /// Saturation threshold in machine units.
    pub clip: Option<f64>,
    pub record_stride: usize,
    pub max_steps: u64,
}

impl Default for SimSettings {
    fn default() -> Self {
        SimSettings {
            dt: 1e-3,
            t_end: 1.0,
            method: Method::Rk4,
            clip: None,
            record_stride: 1,
            max_steps: DEFAULT_MAX_STEPS,
        }
    }
}

impl SimSettings {
    /// Full steps of length `dt`, plus the length of a final shortened step
    /// (zero if `t_end` is a multiple of `dt`).
    fn schedule(&self) -> (u64, f64) {
        let ratio = self.t_end / self.dt;
        let full = (ratio + 1e-9).floor();
        let rest = self.t_end - full * self.dt;
        let partial = if rest > self.dt * 1e-9 { rest } else { 0.0 };
        (full as u64, partial)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |msg: String| Err(SimError::Settings(msg));
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.t_end.is_finite() && self.t_end >= 0.0) {
            return bad(format!("t_end must be non-negative, got {}", self.t_end));
        }
        if self.record_stride == 0 {
            return bad("record stride must be at least 1".to_string());
        }
        if let Some(c) = self.clip {
            if !(c.is_finite() && c > 0.0) {
                return bad(format!("clip threshold must be positive, got {c}"));
            }
        }
        if self.t_end / self.dt > self.max_steps as f64 {
            return bad(format!(
                "{} steps exceed the cap of {}",
                (self.t_end / self.dt).ceil(),
                self.max_steps
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid settings: {0}")]
    Settings(String),
    #[error("expected {expected} initial values, got {actual}")]
    InitialLength { expected: usize, actual: usize },
    #[error("algebraic loop through multipliers {0:?}")]
    AlgebraicLoop(Vec<usize>),
    #[error("state {0} has no output row")]
    UnroutedTap(String),
    #[error("invalid configuration: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    InvalidConfig(Vec<Violation>),
    #[error("non-finite value in {element} at t = {t}")]
    NonFinite { t: f64, element: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClipEvent {
    pub t: f64,
    pub element: String,
}

/// Sampled states over time.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trace {
    pub times: Vec<f64>,
    pub names: Vec<String>,
    /// One column per name, each as long as `times`.
    pub signals: Vec<Vec<f64>>,
    pub clip_events: Vec<ClipEvent>,
}

impl Trace {
    pub fn signal(&self, name: &str) -> Option<&[f64]> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.signals[i].as_slice())
    }

    pub fn max_abs(&self) -> f64 {
        self.signals.iter().flatten().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest pointwise difference over the signals both traces share.
    /// `None` if the time grids differ.
    pub fn max_abs_deviation(&self, other: &Trace) -> Option<f64> {
        if self.times != other.times {
            return None;
        }
        let mut worst = 0.0f64;
        for (name, column) in self.names.iter().zip(&self.signals) {
            if let Some(theirs) = other.signal(name) {
                for (a, b) in column.iter().zip(theirs) {
                    worst = worst.max((a - b).abs());
                }
            }
        }
        Some(worst)
    }

    /// Row of values at sample `k`, in `names` order.
    pub fn row(&self, k: usize) -> Vec<f64> {
        self.signals.iter().map(|c| c[k]).collect()
    }
}

struct Stepper<'a, D: Dynamics + ?Sized> {
    model: &'a D,
    clip: Option<f64>,
    method: Method,
    k: [Vec<f64>; 4],
    tmp: Vec<f64>,
    clipped: Vec<bool>,
}

impl<'a, D: Dynamics + ?Sized> Stepper<'a, D> {
    fn new(model: &'a D, settings: &SimSettings) -> Self {
        let n = model.states().len();
        Stepper {
            model,
            clip: settings.clip,
            method: settings.method,
            k: std::array::from_fn(|_| vec![0.0; n]),
            tmp: vec![0.0; n],
            clipped: vec![false; model.elements().len()],
        }
    }

    fn step(&mut self, s: &mut [f64], h: f64) {
        let (model, clip) = (self.model, self.clip);
        let [k1, k2, k3, k4] = &mut self.k;
        match self.method {
            Method::Euler => {
                model.eval(s, clip, k1, &mut self.clipped);
                for (x, d) in s.iter_mut().zip(k1.iter()) {
                    *x += h * d;
                }
            }
            Method::Rk4 => {
                model.eval(s, clip, k1, &mut self.clipped);
                for i in 0..s.len() {
                    self.tmp[i] = s[i] + 0.5 * h * k1[i];
                }
                model.eval(&self.tmp, clip, k2, &mut self.clipped);
                for i in 0..s.len() {
                    self.tmp[i] = s[i] + 0.5 * h * k2[i];
                }
                model.eval(&self.tmp, clip, k3, &mut self.clipped);
                for i in 0..s.len() {
                    self.tmp[i] = s[i] + h * k3[i];
                }
                model.eval(&self.tmp, clip, k4, &mut self.clipped);
                for i in 0..s.len() {
                    s[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
                }
            }
        }
        if let Some(c) = clip {
            for (i, x) in s.iter_mut().enumerate() {
                if x.abs() > c {
                    *x = c.copysign(*x);
                    self.clipped[i] = true;
                }
            }
        }
    }

    /// Moves the flags raised during a step into `events`.
    fn drain_clips(&mut self, t: f64, events: &mut Vec<ClipEvent>) {
        for (e, flag) in self.clipped.iter_mut().enumerate() {
            if std::mem::take(flag) {
                events.push(ClipEvent {
                    t,
                    element: self.model.elements()[e].clone(),
                });
            }
        }
    }
}

fn check_finite(model: &(impl Dynamics + ?Sized), s: &[f64], t: f64) -> Result<(), SimError> {
    match s.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(SimError::NonFinite {
            t,
            element: model.states()[i].clone(),
        }),
        None => Ok(()),
    }
}

/// Integrates `model` from `initial` over `[0, t_end]`.
///
/// Samples are taken at every `record_stride`-th step and at `t_end`. Clip
/// events carry the start time of the step in which they occurred.
pub fn run<D: Dynamics + ?Sized>(model: &D, initial: &[f64], settings: &SimSettings) -> Result<Trace, SimError> {
    settings.validate()?;
    let n = model.states().len();
    if initial.len() != n {
        return Err(SimError::InitialLength {
            expected: n,
            actual: initial.len(),
        });
    }
    let mut state = initial.to_vec();
    check_finite(model, &state, 0.0)?;

    let mut trace = Trace {
        names: model.states().to_vec(),
        signals: vec![Vec::new(); n],
        ..Trace::default()
    };
    let record = |trace: &mut Trace, t: f64, s: &[f64]| {
        trace.times.push(t);
        for (column, &v) in trace.signals.iter_mut().zip(s) {
            column.push(v);
        }
    };
    record(&mut trace, 0.0, &state);

    let (full, partial) = settings.schedule();
    let stride = settings.record_stride as u64;
    let mut stepper = Stepper::new(model, settings);
    for k in 1..=full {
        let t0 = (k - 1) as f64 * settings.dt;
        stepper.step(&mut state, settings.dt);
        stepper.drain_clips(t0, &mut trace.clip_events);
        let t = if k == full && partial == 0.0 {
            settings.t_end
        } else {
            k as f64 * settings.dt
        };
        check_finite(model, &state, t)?;
        if k % stride == 0 || (k == full && partial == 0.0) {
            record(&mut trace, t, &state);
        }
    }
    if partial > 0.0 {
        stepper.step(&mut state, partial);
        stepper.drain_clips(full as f64 * settings.dt, &mut trace.clip_events);
        check_finite(model, &state, settings.t_end)?;
        record(&mut trace, settings.t_end, &state);
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// `ds_i/dt = a_i * s_i`, clipping elements are the states.
    struct Linear {
        names: Vec<String>,
        rates: Vec<f64>,
    }

    impl Linear {
        fn new(rates: &[f64]) -> Self {
            Linear {
                names: (0..rates.len()).map(|i| format!("S{i}")).collect(),
                rates: rates.to_vec(),
            }
        }
    }

    impl Dynamics for Linear {
        fn states(&self) -> &[String] {
            &self.names
        }
        fn elements(&self) -> &[String] {
            &self.names
        }
        fn eval(&self, s: &[f64], clip: Option<f64>, d: &mut [f64], clipped: &mut [bool]) {
            for i in 0..s.len() {
                let mut v = s[i];
                if let Some(c) = clip {
                    if v.abs() > c {
                        v = c.copysign(v);
                        clipped[i] = true;
                    }
                }
                d[i] = self.rates[i] * v;
            }
        }
    }

    fn settings(dt: f64, t_end: f64) -> SimSettings {
        SimSettings {
            dt,
            t_end,
            ..SimSettings::default()
        }
    }

    #[test]
    fn decay_accuracy() {
        let trace = run(&Linear::new(&[-1.0]), &[1.0], &settings(1e-3, 1.0)).unwrap();
        assert_eq!(trace.times.len(), 1001);
        assert_eq!(*trace.times.last().unwrap(), 1.0);
        let x = *trace.signals[0].last().unwrap();
        assert!((x - (-1.0f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn euler_first_order() {
        let err = |dt| {
            let t = run(
                &Linear::new(&[-1.0]),
                &[1.0],
                &SimSettings {
                    method: Method::Euler,
                    ..settings(dt, 1.0)
                },
            )
            .unwrap();
            (t.signals[0].last().unwrap() - (-1.0f64).exp()).abs()
        };
        let ratio = err(0.01) / err(0.005);
        assert!((1.8..2.2).contains(&ratio), "{ratio}");
    }

    #[test]
    fn zero_horizon() {
        let t = run(&Linear::new(&[-1.0, 2.0]), &[0.5, 0.25], &settings(0.1, 0.0)).unwrap();
        assert_eq!(t.times, [0.0]);
        assert_eq!(t.row(0), [0.5, 0.25]);
    }

    #[test]
    fn empty_model() {
        let t = run(&Linear::new(&[]), &[], &settings(0.1, 1.0)).unwrap();
        assert_eq!(t.times.len(), 11);
        assert!(t.signals.is_empty());
    }

    #[test]
    fn partial_final_step() {
        let s = SimSettings {
            record_stride: 2,
            ..settings(0.1, 0.55)
        };
        let t = run(&Linear::new(&[-1.0]), &[1.0], &s).unwrap();
        let want = [0.0, 0.2, 0.4, 0.55];
        assert_eq!(t.times.len(), want.len());
        for (a, b) in t.times.iter().zip(want) {
            assert!((a - b).abs() < 1e-12);
        }
        let exact = (-0.55f64).exp();
        assert!((t.signals[0][3] - exact).abs() < 1e-6);
    }

    #[test]
    fn stride_keeps_end() {
        let s = SimSettings {
            record_stride: 3,
            ..settings(0.1, 1.0)
        };
        let t = run(&Linear::new(&[-1.0]), &[1.0], &s).unwrap();
        assert_eq!(t.times.len(), 5);
        assert_eq!(*t.times.last().unwrap(), 1.0);
    }

    #[test]
    fn clip_events_once_per_step() {
        let s = SimSettings {
            clip: Some(1.0),
            ..settings(0.1, 1.0)
        };
        let t = run(&Linear::new(&[1.0, -1.0]), &[0.9, 0.5], &s).unwrap();
        assert!(t.signals[0].iter().all(|v| v.abs() <= 1.0));
        let first = t.clip_events.iter().position(|e| e.element == "S0").unwrap();
        // once growth passes the threshold every later step clips exactly once
        let n = t.clip_events.iter().filter(|e| e.element == "S0").count();
        assert_eq!(n, 10 - (t.clip_events[first].t / 0.1).round() as usize);
        assert!(t.clip_events.iter().all(|e| e.element == "S0"));
    }

    #[test]
    fn non_finite() {
        let err = run(&Linear::new(&[1e300]), &[1e300], &settings(1.0, 5.0)).unwrap_err();
        assert!(matches!(err, SimError::NonFinite { t, ref element } if t == 1.0 && element == "S0"));
        assert!(run(&Linear::new(&[1.0]), &[f64::NAN], &settings(1.0, 5.0)).is_err());
    }

    #[test]
    fn bad_settings() {
        let m = Linear::new(&[1.0]);
        assert!(run(&m, &[1.0], &settings(0.0, 1.0)).is_err());
        assert!(run(&m, &[1.0], &settings(0.1, -1.0)).is_err());
        assert!(run(&m, &[], &settings(0.1, 1.0)).is_err());
        let capped = SimSettings {
            max_steps: 10,
            ..settings(0.01, 1.0)
        };
        assert!(matches!(run(&m, &[1.0], &capped), Err(SimError::Settings(_))));
    }

    #[test]
    fn deviation() {
        let a = run(&Linear::new(&[-1.0]), &[1.0], &settings(0.1, 1.0)).unwrap();
        let mut b = a.clone();
        b.signals[0][4] += 0.25;
        assert_eq!(a.max_abs_deviation(&b), Some(0.25));
        let c = run(&Linear::new(&[-1.0]), &[1.0], &settings(0.2, 1.0)).unwrap();
        assert_eq!(a.max_abs_deviation(&c), None);
    }
}
