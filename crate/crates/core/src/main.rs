#![allow(clippy::result_large_err)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use devs::flatten::flatten;
use devs::lang::{parse_model_bytes, resolve, ResolveError};
use devs::simulator::{FlatSimulation, InputSchedule, Simulation};
use devs::{diff_traces, DiffScope, Model, TimeValue, Trace, TraceDiff};

#[derive(Parser, Debug)]
#[command(name = "devs", version, about = "Classic DEVS with initial total states")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Parse and validate a model file.
    Validate {
        model: PathBuf,
        #[arg(long)]
        root: String,
    },
    /// Simulate a model and write its trace.
    Simulate {
        model: PathBuf,
        #[arg(long)]
        root: String,
        /// Simulate up to and including this time (e.g. `500`, `97/2`, `48.5`).
        #[arg(long)]
        until: TimeValue,
        /// Root input schedule: one `<time> <event>` per line.
        #[arg(long)]
        inputs: Option<PathBuf>,
        /// Simulate the flattened model instead of the hierarchy.
        #[arg(long)]
        flatten: bool,
        /// Output file; stdout when omitted.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Print the initial total states.
    Qinit {
        model: PathBuf,
        #[arg(long)]
        root: String,
        /// Print the initial total state of the flattened model.
        #[arg(long)]
        flatten: bool,
    },
    /// Compare two trace files.
    Diff {
        a: PathBuf,
        b: PathBuf,
        /// Compare only root outputs (`YROOT` entries).
        #[arg(long)]
        yroot_only: bool,
    },
}

/// Exit 1 for semantic failures, 2 for I/O and parse failures.
enum Failure {
    Semantic(String),
    Input(String),
}

impl Failure {
    fn report(self) -> ExitCode {
        match self {
            Failure::Semantic(msg) => {
                eprint!("{msg}");
                ExitCode::from(1)
            }
            Failure::Input(msg) => {
                eprint!("{msg}");
                ExitCode::from(2)
            }
        }
    }
}

fn read(path: &Path) -> Result<Vec<u8>, Failure> {
    fs::read(path).map_err(|e| Failure::Input(format!("error: {}: {e}\n", path.display())))
}

fn load(path: &Path, root: &str) -> Result<Model, Failure> {
    let doc = parse_model_bytes(&read(path)?)
        .map_err(|e| Failure::Input(format!("error: {}:{e} [{}]\n", path.display(), e.code())))?;
    resolve(&doc, root).map_err(|e| match e {
        ResolveError::Invalid(diags) => {
            let mut msg = String::new();
            for d in diags {
                msg.push_str(&format!("error: {d}\n"));
            }
            Failure::Semantic(msg)
        }
        other => Failure::Semantic(format!("error: {}: {other}\n", other.code())),
    })
}

fn validate(model: &Path, root: &str) -> Result<String, Failure> {
    let model = load(model, root)?;
    for (path, w) in model.warnings() {
        eprintln!("warning: {path}: {w}");
    }
    Ok(format!("ok {root}\n"))
}

fn simulate(
    model: &Path,
    root: &str,
    until: &TimeValue,
    inputs: Option<&Path>,
    flat: bool,
    trace_out: Option<&Path>,
) -> Result<String, Failure> {
    let model = load(model, root)?;
    let schedule = match inputs {
        Some(p) => {
            let text = String::from_utf8(read(p)?)
                .map_err(|_| Failure::Input(format!("error: {}: invalid UTF-8\n", p.display())))?;
            text.parse::<InputSchedule>()
                .map_err(|e| Failure::Input(format!("error: {}: {e}\n", p.display())))?
        }
        None => InputSchedule::default(),
    };
    let sim_err = |e: devs::SimError| Failure::Semantic(format!("error: {e}\n"));
    let trace = if flat {
        FlatSimulation::initialize(&model)
            .and_then(|s| s.with_inputs(schedule))
            .and_then(|mut s| s.run(until))
    } else {
        Simulation::initialize(&model)
            .and_then(|s| s.with_inputs(schedule))
            .and_then(|mut s| s.run(until))
    }
    .map_err(sim_err)?;
    let text = trace.to_text();
    match trace_out {
        Some(p) => {
            fs::write(p, text).map_err(|e| Failure::Input(format!("error: {}: {e}\n", p.display())))?;
            Ok(String::new())
        }
        None => Ok(text),
    }
}

fn collect_qinit(model: &Model, path: &str, out: &mut String) {
    match model {
        Model::Atomic(a) => {
            let shown = if path.is_empty() { "/" } else { path };
            out.push_str(&format!("{shown} {}\n", a.init));
        }
        Model::Coupled(c) => {
            for (label, child) in &c.components {
                collect_qinit(child, &format!("{path}/{label}"), out);
            }
        }
    }
}

fn qinit(model: &Path, root: &str, flat: bool) -> Result<String, Failure> {
    let model = load(model, root)?;
    let mut out = String::new();
    if flat {
        let component = flatten(&model).map_err(|e| Failure::Semantic(format!("error: {e}\n")))?;
        let (state, elapsed) = component.initial_state();
        out.push_str(&format!("({state}, {elapsed})\n"));
    } else {
        collect_qinit(&model, "", &mut out);
    }
    Ok(out)
}

fn load_trace(path: &Path) -> Result<Trace, Failure> {
    let bytes = read(path)?;
    let text =
        String::from_utf8(bytes).map_err(|_| Failure::Input(format!("error: {}: invalid UTF-8\n", path.display())))?;
    text.parse()
        .map_err(|e| Failure::Input(format!("error: {}: {e}\n", path.display())))
}

fn diff(a: &Path, b: &Path, yroot_only: bool) -> Result<String, Failure> {
    let (ta, tb) = (load_trace(a)?, load_trace(b)?);
    let scope = if yroot_only {
        DiffScope::RootOutputsOnly
    } else {
        DiffScope::All
    };
    match diff_traces(&ta, &tb, scope) {
        TraceDiff::Equal => Ok("equal\n".to_string()),
        TraceDiff::Diverged { index, left, right } => {
            let show = |l: Option<String>| l.unwrap_or_else(|| "<end of trace>".into());
            print!("diverged at entry {index}\n< {}\n> {}\n", show(left), show(right));
            Err(Failure::Semantic(String::new()))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Validate { model, root } => validate(model, root),
        Command::Simulate {
            model,
            root,
            until,
            inputs,
            flatten,
            trace,
        } => simulate(model, root, until, inputs.as_deref(), *flatten, trace.as_deref()),
        Command::Qinit { model, root, flatten } => qinit(model, root, *flatten),
        Command::Diff { a, b, yroot_only } => diff(a, b, *yroot_only),
    };
    match result {
        Ok(out) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err(f) => f.report(),
    }
}
