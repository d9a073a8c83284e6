use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::dsl::Program;

use super::Trace;

#[derive(Debug, Error)]
pub enum EmitError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("trace has no signal `{0}`")]
    MissingSignal(String),
}

/// Positional decimal text with 17 significant digits.
pub fn format_sig17(v: f64) -> String {
    if v == 0.0 {
        return "0.0000000000000000".to_string();
    }
    let sci = format!("{v:.16e}");
    let exp: i32 = sci[sci.find('e').expect("exponent") + 1..].parse().expect("integer exponent");
    format!("{:.*}", (16 - exp).max(0) as usize, v)
}

/// Writes a CSV with one header line and one row per index.
pub fn write_columns(path: &Path, header: &[&str], columns: &[&[f64]]) -> Result<(), EmitError> {
    let io = |source| EmitError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    writeln!(w, "{}", header.join(",")).map_err(io)?;
    let rows = columns.first().map_or(0, |c| c.len());
    let mut line = String::new();
    for r in 0..rows {
        line.clear();
        for (i, c) in columns.iter().enumerate() {
            if i > 0 {
                line.push(',');
            }
            line.push_str(&format_sig17(c[r]));
        }
        line.push('\n');
        w.write_all(line.as_bytes()).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Writes `out.csv` (time plus every `out` signal) and one
/// `plot_<x>_<y>.csv` per plot statement into `out_dir`. Returns the paths
/// written.
pub fn emit_traces(trace: &Trace, program: &Program, out_dir: &Path) -> Result<Vec<PathBuf>, EmitError> {
    let signal = |name: &str| trace.signal(name).ok_or_else(|| EmitError::MissingSignal(name.to_string()));
    let mut written = Vec::new();

    let mut header = vec!["t"];
    let mut columns = vec![trace.times.as_slice()];
    for name in &program.outputs {
        header.push(name);
        columns.push(signal(name)?);
    }
    let path = out_dir.join("out.csv");
    write_columns(&path, &header, &columns)?;
    written.push(path);

    for plot in &program.plots {
        let (x, y) = (plot.x(), plot.y());
        let path = out_dir.join(format!("plot_{x}_{y}.csv"));
        write_columns(&path, &[x, y], &[signal(x)?, signal(y)?])?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse_program;

    #[test]
    fn sig17() {
        assert_eq!(format_sig17(0.1), "0.10000000000000001");
        assert_eq!(format_sig17(1.0), "1.0000000000000000");
        assert_eq!(format_sig17(-2.5e-3), "-0.0025000000000000001");
        assert_eq!(format_sig17(123456.0), "123456.00000000000");
        assert_eq!(format_sig17(1e20), "100000000000000000000");
        assert_eq!(format_sig17(-0.0), "0.0000000000000000");
        for v in [0.1, -3.7e-7, 12345.678, std::f64::consts::PI, 1e-300, 1e23] {
            assert_eq!(format_sig17(v).parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn files() {
        let program = parse_program(include_str!("../../tests/data/lorenz.odedsl")).unwrap();
        let trace = Trace {
            times: vec![0.0, 0.5],
            names: vec!["X".into(), "Y".into(), "Z".into()],
            signals: vec![vec![0.1, 0.2], vec![0.0, -1.0], vec![0.0, 0.0]],
            clip_events: vec![],
        };
        let dir = tempfile::tempdir().unwrap();
        let paths = emit_traces(&trace, &program, dir.path()).unwrap();
        assert_eq!(paths.len(), 2);
        let out = std::fs::read_to_string(dir.path().join("out.csv")).unwrap();
        assert_eq!(
            out,
            "t,X,Y\n\
             0.0000000000000000,0.10000000000000001,0.0000000000000000\n\
             0.50000000000000000,0.20000000000000001,-1.0000000000000000\n"
        );
        let plot = std::fs::read_to_string(dir.path().join("plot_X_Y.csv")).unwrap();
        assert_eq!(plot.lines().next(), Some("X,Y"));
        assert_eq!(plot.lines().count(), 3);
    }

    #[test]
    fn missing_signal() {
        let program = parse_program(include_str!("../../tests/data/decay.odedsl")).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let err = emit_traces(&Trace::default(), &program, dir.path()).unwrap_err();
        assert!(matches!(err, EmitError::MissingSignal(ref n) if n == "X"));
        let bad = dir.path().join("nope").join("out.csv");
        let err = write_columns(&bad, &["t"], &[]).unwrap_err();
        assert!(err.to_string().contains("nope"));
    }
}
