use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use clap::{ArgGroup, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};

use autopatch::bitstream::{self, DeltaScript, DELTA_VERSION, IMAGE_VERSION};
use autopatch::circuit::{build_circuit, normalize, CircuitGraph};
use autopatch::dsl::{parse_program, Program};
use autopatch::fabric::{blocking_experiment, Fabric};
use autopatch::machine::{lucidac_spec, redac_tile_spec, MachineSpec, DEFAULT_LOWRES_FRACTION};
use autopatch::route::{place_and_route, Placement};
use autopatch::sim::{self, emit_traces, write_columns, HardwareModel, Method, ReferenceModel, SimSettings, Trace};

#[derive(Parser)]
#[command(name = "autopatch", about = "Compile ODE programs onto an analog interconnect")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse, validate and build the circuit for a program.
    Compile {
        src: PathBuf,
        /// Print the circuit dump.
        #[arg(long)]
        emit_ir: bool,
    },
    /// Place and route a program and write its configuration image.
    Route {
        src: PathBuf,
        #[arg(long, default_value = "lucidac")]
        machine: Machine,
        #[arg(short, long)]
        output: PathBuf,
        /// Print the lane listing after the report.
        #[arg(long)]
        emit_config: bool,
    },
    /// Integrate a program (hardware path) or a configuration image.
    Simulate {
        input: PathBuf,
        #[arg(long, default_value = "lucidac")]
        machine: Machine,
        #[arg(long, default_value_t = 1e-3)]
        dt: f64,
        #[arg(long, default_value_t = 10.0)]
        t_end: f64,
        #[arg(long, default_value = "rk4")]
        method: Method,
        /// Saturation threshold in machine units, or `off`.
        #[arg(long, default_value = "1.0")]
        clip: Clip,
        #[arg(long, default_value_t = 1)]
        stride: usize,
        #[arg(long, value_enum, default_value_t = Switch::On)]
        quantize: Switch,
        /// Also run the unquantized reference system and compare.
        #[arg(long)]
        reference: bool,
        /// Initial values overriding the program's, comma separated.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        ic: Option<Vec<f64>>,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Write the delta script turning one image into another.
    Diff {
        old: PathBuf,
        new: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long, default_value = "lucidac")]
        machine: Machine,
    },
    /// Apply a delta script to an image.
    Apply {
        base: PathBuf,
        delta: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long, default_value = "lucidac")]
        machine: Machine,
    },
    /// Switch counts and blocking experiments for switch fabrics.
    #[command(group(ArgGroup::new("mode").required(true).args(["count", "experiment"])))]
    Fabric {
        #[arg(long, default_value = "simstar")]
        spec: FabricArg,
        #[arg(long)]
        count: bool,
        #[arg(long, requires = "load")]
        experiment: bool,
        #[arg(long)]
        load: Option<usize>,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(Clone, Copy)]
struct Clip(Option<f64>);

impl FromStr for Clip {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "off" {
            return Ok(Clip(None));
        }
        s.parse::<f64>()
            .map(|v| Clip(Some(v)))
            .map_err(|_| format!("expected a number or `off`, got `{s}`"))
    }
}

#[derive(Clone)]
struct Machine(MachineSpec);

/// `lucidac`, `redac`, or `custom:i=<n>,m=<n>,l=<n>`.
impl FromStr for Machine {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "lucidac" => return Ok(Machine(lucidac_spec())),
            "redac" => return Ok(Machine(redac_tile_spec())),
            _ => {}
        }
        let body = s
            .strip_prefix("custom:")
            .ok_or_else(|| format!("unknown machine `{s}`, expected lucidac, redac or custom:i=,m=,l="))?;
        let (mut i, mut m, mut l) = (None, None, None);
        for part in body.split(',') {
            let (key, value) = part.split_once('=').ok_or_else(|| format!("malformed `{part}`"))?;
            let value: usize = value.parse().map_err(|_| format!("`{value}` is not a count"))?;
            match key {
                "i" => i = Some(value),
                "m" => m = Some(value),
                "l" => l = Some(value),
                _ => return Err(format!("unknown key `{key}`")),
            }
        }
        let missing = |k| format!("custom machine needs `{k}=`");
        MachineSpec::new(
            i.ok_or_else(|| missing("i"))?,
            m.ok_or_else(|| missing("m"))?,
            l.ok_or_else(|| missing("l"))?,
            DEFAULT_LOWRES_FRACTION,
        )
        .map(Machine)
        .map_err(|e| e.to_string())
    }
}

#[derive(Clone)]
struct FabricArg(Fabric);

impl FromStr for FabricArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.parse().map(FabricArg).map_err(|e: autopatch::fabric::FabricError| e.to_string())
    }
}

/// An error already formatted as `file:line:col: error: message`.
#[derive(Debug)]
struct Diagnostic(String);

impl std::fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Diagnostic {}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).with_context(|| format!("cannot read {}", path.display()))
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).with_context(|| format!("cannot write {}", path.display()))
}

fn load_program(path: &Path) -> Result<Program> {
    let bytes = read(path)?;
    let source = String::from_utf8(bytes).with_context(|| format!("{} is not UTF-8", path.display()))?;
    parse_program(&source).map_err(|e| {
        let pos = e.pos();
        let inner = match &e {
            autopatch::dsl::DslError::Lex(e) => e.to_string(),
            autopatch::dsl::DslError::Parse(e) => e.to_string(),
            autopatch::dsl::DslError::Validate(e) => e.to_string(),
        };
        let message = inner.strip_prefix(&format!("{pos}: ")).unwrap_or(&inner);
        Diagnostic(format!("{}:{}: error: {}", path.display(), pos, message)).into()
    })
}

fn compile(program: &Program, path: &Path) -> Result<CircuitGraph> {
    build_circuit(&normalize(program)).map_err(|e| Diagnostic(format!("{}: error: {e}", path.display())).into())
}

fn placement(src: &Path, spec: &MachineSpec) -> Result<(Program, Placement, autopatch::route::PlaceRouteReport)> {
    let program = load_program(src)?;
    let graph = compile(&program, src)?;
    let (placement, report) =
        place_and_route(&graph, spec).map_err(|e| Diagnostic(format!("{}: error: {e}", src.display())))?;
    Ok((program, placement, report))
}

fn decode_image(path: &Path, spec: &MachineSpec) -> Result<autopatch::machine::MachineConfig> {
    bitstream::decode(&read(path)?, spec).map_err(|e| anyhow!("{}: {e}", path.display()))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))
}

fn write_all_states(trace: &Trace, path: &Path) -> Result<()> {
    let mut header = vec!["t"];
    header.extend(trace.names.iter().map(String::as_str));
    let mut columns = vec![trace.times.as_slice()];
    columns.extend(trace.signals.iter().map(Vec::as_slice));
    write_columns(path, &header, &columns)?;
    Ok(())
}

fn initial_values(default: &[f64], ic: &Option<Vec<f64>>) -> Result<Vec<f64>> {
    match ic {
        None => Ok(default.to_vec()),
        Some(v) if v.len() == default.len() => Ok(v.clone()),
        Some(v) => bail!("--ic has {} values, the model has {} states", v.len(), default.len()),
    }
}

fn print_run_summary(trace: &Trace) {
    println!("samples: {}", trace.times.len());
    println!("clip_events: {}", trace.clip_events.len());
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Compile { src, emit_ir } => {
            let program = load_program(&src)?;
            let graph = compile(&program, &src)?;
            if emit_ir {
                print!("{graph}");
            } else {
                println!("integrators: {}", graph.integrator_count());
                println!("multipliers: {}", graph.multiplier_count());
                println!("edges: {}", graph.edges().len());
            }
        }
        Command::Route {
            src,
            machine,
            output,
            emit_config,
        } => {
            let (_, placement, report) = placement(&src, &machine.0)?;
            write(&output, &bitstream::encode(&placement.config))?;
            print!("{report}");
            if emit_config {
                print!("{}", placement.config);
            }
        }
        Command::Simulate {
            input,
            machine,
            dt,
            t_end,
            method,
            clip,
            stride,
            quantize,
            reference,
            ic,
            out_dir,
        } => {
            let settings = SimSettings {
                dt,
                t_end,
                method,
                clip: clip.0,
                record_stride: stride,
                ..SimSettings::default()
            };
            settings.validate()?;
            let bytes = read(&input)?;
            if bytes.starts_with(bitstream::IMAGE_MAGIC) {
                if reference {
                    bail!("--reference needs a program source, not a configuration image");
                }
                let config = decode_image(&input, &machine.0)?;
                let model = HardwareModel::from_config(&config)?;
                let trace = sim::run(&model, &initial_values(model.initial(), &ic)?, &settings)?;
                ensure_dir(&out_dir)?;
                write_all_states(&trace, &out_dir.join("out.csv"))?;
                print_run_summary(&trace);
                return Ok(());
            }

            let (program, placement, _) = placement(&input, &machine.0)?;
            let model = HardwareModel::from_placement(&placement, quantize == Switch::On)?;
            let initial = initial_values(model.initial(), &ic)?;
            let trace = sim::run(&model, &initial, &settings)?;
            ensure_dir(&out_dir)?;
            emit_traces(&trace, &program, &out_dir)?;
            print_run_summary(&trace);
            if reference {
                let oracle = ReferenceModel::new(&normalize(&program));
                let ref_trace = sim::run(&oracle, &initial, &settings)?;
                let mut header = vec!["t"];
                let mut columns = vec![ref_trace.times.as_slice()];
                for name in &program.outputs {
                    header.push(name);
                    columns.push(ref_trace.signal(name).expect("reference traces every state"));
                }
                write_columns(&out_dir.join("ref_out.csv"), &header, &columns)?;
                let dev = trace.max_abs_deviation(&ref_trace).expect("same time grid");
                println!("max_abs_deviation: {dev:e}");
            }
        }
        Command::Diff {
            old,
            new,
            output,
            machine,
        } => {
            let a = decode_image(&old, &machine.0)?;
            let b = decode_image(&new, &machine.0)?;
            let script = bitstream::diff(&a, &b)?;
            write(&output, &script.to_bytes())?;
            println!("ops: {}", script.len());
        }
        Command::Apply {
            base,
            delta,
            output,
            machine,
        } => {
            let config = decode_image(&base, &machine.0)?;
            let script = DeltaScript::from_bytes(&read(&delta)?).map_err(|e| anyhow!("{}: {e}", delta.display()))?;
            let result = bitstream::apply(&config, &script)?;
            write(&output, &bitstream::encode(&result))?;
            println!("ops: {}", script.len());
        }
        Command::Fabric {
            spec,
            count,
            experiment,
            load,
            trials,
            seed,
        } => {
            if count {
                println!("{}", spec.0.switch_count());
            }
            if experiment {
                let Fabric::ThreeStage(fabric) = spec.0 else {
                    bail!("blocking experiments need a three-stage fabric");
                };
                let load = load.expect("clap enforces --load");
                print!("{}", blocking_experiment(&fabric, load, trials, seed)?);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let version: &'static str = Box::leak(
        format!(
            "{} (bitstream format {IMAGE_VERSION}, delta format {DELTA_VERSION})",
            env!("CARGO_PKG_VERSION")
        )
        .into_boxed_str(),
    );
    let matches = Cli::command().version(version).get_matches();
    let cli = Cli::from_arg_matches(&matches).unwrap_or_else(|e| e.exit());
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            match e.downcast_ref::<Diagnostic>() {
                Some(d) => eprintln!("{d}"),
                None => eprintln!("error: {e:#}"),
            }
            ExitCode::FAILURE
        }
    }
}
