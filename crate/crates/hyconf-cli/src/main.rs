//! Command-line front end: parses automaton and trace files, drives
//! simulation and the closeness and conformance checks, and emits the
//! deterministic reports and plot-ready CSV.
//!
//! Exit status is the machine contract: 0 when the requested check passed,
//! 1 when it ran and failed, 2 when an input file or argument is unusable,
//! 3 when the toolkit itself fails.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use thiserror::Error;

use hyconf::{
    close_ext, close_plain, closeness_report, conformance_report, conforms, hioco, hioco_report,
    match_pair, parse_automaton, read_stimulus, read_trace, semitrans_check, semitrans_report,
    semitrans_trial, sig9, simulate, witness_csv, write_stimulus, write_trace, CloseMode,
    ClosenessParams, ConformanceReport, ExternalSignature, HiocoConfig, Hioa, HybridSequence,
    PairOutcome, PairSuite, Provenance, Report, SemitransConfig, SemitransReport, SimConfig,
    SimError, SolutionPair, Stimulus, Trace, Urgency, DELTA_MERGE,
};

#[derive(Parser)]
#[command(
    name = "hyconf",
    version,
    about = "Simulation and approximate conformance checking for hybrid I/O automata"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a model under a stimulus and write its trace files
    Simulate(SimulateArgs),
    /// Check two sampled traces for time/value closeness
    Close(CloseArgs),
    /// Check that every behavior of one suite is answered by another
    Conform(ConformArgs),
    /// Check a model against a specification over a suite of test traces
    Hioco(HiocoArgs),
    /// Exercise the closeness composition bound on random trace triples
    Semitrans(SemitransArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    /// Compare continuous variables only
    Plain,
    /// Compare action indicators along with the continuous variables
    Extended,
}

impl From<ModeArg> for CloseMode {
    fn from(m: ModeArg) -> CloseMode {
        match m {
            ModeArg::Plain => CloseMode::Plain,
            ModeArg::Extended => CloseMode::Extended,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum UrgencyArg {
    /// Every transition with a nontrivial guard fires as soon as it can
    Urgent,
    /// Input transitions wait for the schedule; the rest fire urgently
    ScheduledInputs,
}

impl From<UrgencyArg> for Urgency {
    fn from(u: UrgencyArg) -> Urgency {
        match u {
            UrgencyArg::Urgent => Urgency::Urgent,
            UrgencyArg::ScheduledInputs => Urgency::ScheduledInputs,
        }
    }
}

#[derive(clap::Args)]
struct SimulateArgs {
    /// Automaton description file
    model: PathBuf,
    /// Simulation horizon in seconds
    #[arg(long = "T")]
    horizon: f64,
    /// Integration step width
    #[arg(long, default_value_t = 1e-3)]
    step: f64,
    /// Stimulus file driving inputs; quiet when absent
    #[arg(long)]
    stim: Option<PathBuf>,
    /// Directory the trace files go to
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Base name for the written files; the model's name when absent
    #[arg(long)]
    name: Option<String>,
    #[arg(long, value_enum, default_value_t = UrgencyArg::Urgent)]
    urgency: UrgencyArg,
}

#[derive(clap::Args)]
struct CloseArgs {
    /// First trace CSV
    first: PathBuf,
    /// Second trace CSV
    second: PathBuf,
    /// Time slack
    #[arg(long)]
    tau: f64,
    /// Value slack
    #[arg(long)]
    eps: f64,
    /// Time horizon bounding the compared points
    #[arg(long = "T")]
    horizon: f64,
    /// Segment index bounding the compared points
    #[arg(long = "J")]
    max_jumps: usize,
    #[arg(long, value_enum, default_value_t = ModeArg::Plain)]
    mode: ModeArg,
    /// Also write the report to this file
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write matched points and the counterexample as CSV
    #[arg(long)]
    witness: Option<PathBuf>,
}

#[derive(clap::Args)]
struct ConformArgs {
    /// Directory of recorded behaviors, each a *.u.csv with its *.y.csv;
    /// every one of them must be answered by the searched side
    quantified: PathBuf,
    /// Directory of the same shape, or a model file simulated under the
    /// quantified side's stimuli
    searched: PathBuf,
    /// Model file fixing the interface; defaults to `searched` when that
    /// is a model file
    #[arg(long)]
    interface: Option<PathBuf>,
    /// Time slack
    #[arg(long)]
    tau: f64,
    /// Value slack
    #[arg(long)]
    eps: f64,
    /// Time horizon bounding the compared points
    #[arg(long = "T")]
    horizon: f64,
    /// Segment index bounding the compared points
    #[arg(long = "J")]
    max_jumps: usize,
    #[arg(long, value_enum, default_value_t = ModeArg::Plain)]
    mode: ModeArg,
    /// Integration step when `searched` is a model
    #[arg(long, default_value_t = 1e-3)]
    step: f64,
    /// Match the pairs concurrently; the report is unchanged
    #[arg(long)]
    parallel: bool,
    /// Also write the report to this file
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(clap::Args)]
struct HiocoArgs {
    /// Automaton under test
    implementation: PathBuf,
    /// Specification automaton
    specification: PathBuf,
    /// Test traces: files, or directories scanned for *.trace.csv
    #[arg(long, required = true, num_args = 1..)]
    tests: Vec<PathBuf>,
    /// Flow probe durations
    #[arg(long, value_delimiter = ',', default_value = "0.5")]
    probes: Vec<f64>,
    /// Integration step for replay and probe flows
    #[arg(long, default_value_t = 1e-3)]
    step: f64,
    #[arg(long, value_enum, default_value_t = UrgencyArg::Urgent)]
    urgency: UrgencyArg,
    /// Treat the ability to let time pass as an observable output
    #[arg(long)]
    include_xi: bool,
    /// Also write the report to this file
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(clap::Args)]
struct SemitransArgs {
    /// Random triples to generate
    #[arg(long, default_value_t = 1000)]
    trials: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Premise time slacks are drawn from [tau-min, tau-max]
    #[arg(long, default_value_t = 0.05)]
    tau_min: f64,
    #[arg(long, default_value_t = 0.5)]
    tau_max: f64,
    /// Premise value slacks are drawn from [eps-min, eps-max]
    #[arg(long, default_value_t = 0.1)]
    eps_min: f64,
    #[arg(long, default_value_t = 2.0)]
    eps_max: f64,
    /// Premise regenerations allowed per trial before giving up
    #[arg(long, default_value_t = 10)]
    retries: u32,
    /// Run the trials concurrently; the report is unchanged
    #[arg(long)]
    parallel: bool,
    /// Also write the report to this file
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{}: {message}", path.display())]
    Parse { path: PathBuf, message: String },
    #[error("{0}")]
    Input(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    fn status(&self) -> u8 {
        match self {
            CliError::Internal(_) => 3,
            _ => 2,
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.status())
        }
    }
}

fn run(cli: Cli) -> Result<bool, CliError> {
    match cli.command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::Close(args) => cmd_close(args),
        Command::Conform(args) => cmd_conform(args),
        Command::Hioco(args) => cmd_hioco(args),
        Command::Semitrans(args) => cmd_semitrans(args),
    }
}

// ---------------------------------------------------------------------
// Shared plumbing.
// ---------------------------------------------------------------------

fn read_file(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn parse_err(path: &Path, message: impl ToString) -> CliError {
    CliError::Parse {
        path: path.to_path_buf(),
        message: message.to_string(),
    }
}

fn load_model(path: &Path) -> Result<Hioa, CliError> {
    parse_automaton(&read_file(path)?).map_err(|e| parse_err(path, e))
}

fn closeness_params(
    tau: f64,
    eps: f64,
    horizon: f64,
    max_jumps: usize,
) -> Result<ClosenessParams, CliError> {
    ClosenessParams::new(tau, eps, horizon, max_jumps).map_err(|e| CliError::Input(e.to_string()))
}

/// Prints the report and mirrors it to `out` when given, byte for byte.
fn emit(report: &str, out: Option<&Path>) -> Result<(), CliError> {
    print!("{report}");
    if let Some(path) = out {
        write_file(path, report)?;
    }
    Ok(())
}

// ---------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------

fn cmd_simulate(args: SimulateArgs) -> Result<bool, CliError> {
    let model = load_model(&args.model)?;
    let stim = match &args.stim {
        Some(path) => read_stimulus(&read_file(path)?, args.horizon)
            .map_err(|e| parse_err(path, e))?,
        None => Stimulus::quiet(args.horizon),
    };
    let config = SimConfig {
        step: args.step,
        urgency: args.urgency.into(),
        ..SimConfig::default()
    };

    let (exec, halted) = match simulate(&model, &stim, &config) {
        Ok(exec) => (exec, None),
        Err(SimError::InvariantHalt {
            time,
            location,
            partial,
        }) => (*partial, Some((time, location))),
        Err(e) => return Err(CliError::Input(e.to_string())),
    };

    let trace = exec
        .trace(&model)
        .map_err(|e| CliError::Internal(e.to_string()))?;
    let full = trace
        .to_atrace()
        .map_err(|e| CliError::Internal(e.to_string()))?;
    let pair = trace
        .split(DELTA_MERGE)
        .map_err(|e| CliError::Input(e.to_string()))?;
    let output_half = pair
        .y
        .to_atrace(&model.output_actions)
        .map_err(|e| CliError::Internal(e.to_string()))?;

    // The written stimulus carries the input actions the run actually saw,
    // urgent ones included, so replaying it reproduces the same behavior.
    let realized = Stimulus {
        horizon: stim.horizon,
        schedule: pair
            .u
            .action_events()
            .iter()
            .map(|(t, a)| (*t, a.to_string()))
            .collect(),
        signals: stim.signals.clone(),
    };

    let base = args.name.clone().unwrap_or_else(|| model.name.clone());
    let dir = &args.out;
    fs::create_dir_all(dir).map_err(|source| CliError::Io {
        path: dir.clone(),
        source,
    })?;
    let file = |suffix: &str| dir.join(format!("{base}.{suffix}"));
    write_file(&file("trace.csv"), &write_trace(&full))?;
    write_file(&file("y.csv"), &write_trace(&output_half))?;
    write_file(&file("u.csv"), &write_stimulus(&realized))?;
    write_file(&file("plot.csv"), &plot_csv(&full))?;

    let mut report = Report::new("simulate");
    report.set("model", model.name.clone());
    report.set_num("horizon", stim.horizon);
    report.set_num("step", args.step);
    report.set_count("segments", exec.trajectories.len());
    report.set_count("actions", exec.actions.len());
    for (i, action) in exec.actions.iter().enumerate() {
        let time = exec.trajectories[i].end_time();
        report.set(&format!("action_{i}"), format!("{action} t={}", sig9(time)));
    }
    if let Some((time, location)) = halted {
        report.set(
            "halted",
            format!("invariant of {location} at t={}", sig9(time)),
        );
    }
    report.set("files", format!("{}.{{trace,u,y,plot}}.csv", dir.join(&base).display()));
    emit(&report.render(), None)?;
    Ok(true)
}

/// Flattens a sampled trace to plot-ready rows: one `t,<var...>` line per
/// sample with the continuous variables in sorted order. Indicator columns
/// are omitted; segment boundaries simply repeat their time.
fn plot_csv(trace: &hyconf::ATrace) -> String {
    use std::fmt::Write;
    let vars: Vec<String> = trace.continuous_vars().into_iter().collect();
    let mut out = String::from("t");
    for v in &vars {
        out.push(',');
        out.push_str(v);
    }
    out.push('\n');
    for (t, _, val) in trace.points() {
        write!(out, "{t}").unwrap();
        for v in &vars {
            write!(out, ",{}", val.get(v).unwrap().value()).unwrap();
        }
        out.push('\n');
    }
    out
}

// ---------------------------------------------------------------------
// close
// ---------------------------------------------------------------------

fn cmd_close(args: CloseArgs) -> Result<bool, CliError> {
    let first = read_trace(&read_file(&args.first)?).map_err(|e| parse_err(&args.first, e))?;
    let second = read_trace(&read_file(&args.second)?).map_err(|e| parse_err(&args.second, e))?;
    let params = closeness_params(args.tau, args.eps, args.horizon, args.max_jumps)?;
    let verdict = match args.mode.into() {
        CloseMode::Plain => close_plain(&first, &second, &params),
        CloseMode::Extended => close_ext(&first, &second, &params),
    }
    .map_err(|e| CliError::Input(e.to_string()))?;

    emit(&closeness_report(&verdict), args.out.as_deref())?;
    if let Some(path) = &args.witness {
        write_file(path, &witness_csv(&verdict))?;
    }
    Ok(verdict.close)
}

// ---------------------------------------------------------------------
// conform
// ---------------------------------------------------------------------

/// Reads a directory of recorded behaviors: every `<base>.u.csv` paired
/// with its `<base>.y.csv`, sorted by base name. Returns the stimuli
/// alongside the suite so a searched model can replay them.
fn load_recorded_suite(
    dir: &Path,
    sig: &ExternalSignature,
) -> Result<(Vec<Stimulus>, PairSuite), CliError> {
    let entries = fs::read_dir(dir).map_err(|source| CliError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut bases = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|source| CliError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if let Some(base) = name.strip_suffix(".u.csv") {
            bases.push(base.to_string());
        }
    }
    bases.sort();
    if bases.is_empty() {
        return Err(CliError::Input(format!(
            "{}: no *.u.csv behaviors found",
            dir.display()
        )));
    }

    let mut stimuli = Vec::with_capacity(bases.len());
    let mut pairs = Vec::with_capacity(bases.len());
    for base in &bases {
        let u_path = dir.join(format!("{base}.u.csv"));
        let y_path = dir.join(format!("{base}.y.csv"));
        let y_trace = read_trace(&read_file(&y_path)?).map_err(|e| parse_err(&y_path, e))?;
        let y = HybridSequence::from_atrace(&y_trace).map_err(|e| parse_err(&y_path, e))?;
        let horizon = y.duration();
        let stim =
            read_stimulus(&read_file(&u_path)?, horizon).map_err(|e| parse_err(&u_path, e))?;
        let u = stim
            .input_half(&sig.input_vars)
            .map_err(|e| parse_err(&u_path, e))?;
        stimuli.push(stim);
        pairs.push(SolutionPair { u, y });
    }
    let suite = PairSuite::new(sig.clone(), Provenance::Recorded, pairs)
        .map_err(|e| CliError::Input(e.to_string()))?;
    Ok((stimuli, suite))
}

fn cmd_conform(args: ConformArgs) -> Result<bool, CliError> {
    let searched_is_model = args.searched.is_file();
    let interface_model = match (&args.interface, searched_is_model) {
        (Some(path), _) => load_model(path)?,
        (None, true) => load_model(&args.searched)?,
        (None, false) => {
            return Err(CliError::Input(
                "--interface is required when both sides are directories".to_string(),
            ))
        }
    };
    let sig = interface_model.signature();

    let (stimuli, quantified) = load_recorded_suite(&args.quantified, &sig)?;
    let searched = if searched_is_model {
        let model = load_model(&args.searched)?;
        // Recorded stimuli already carry every input action at its instant,
        // so the replay applies them as scheduled instead of re-deciding
        // input urgency on its own.
        let config = SimConfig {
            step: args.step,
            urgency: Urgency::ScheduledInputs,
            ..SimConfig::default()
        };
        PairSuite::from_model(&model, &stimuli, &config)
            .map_err(|e| CliError::Input(e.to_string()))?
    } else {
        load_recorded_suite(&args.searched, &sig)?.1
    };

    let params = closeness_params(args.tau, args.eps, args.horizon, args.max_jumps)?;
    let mode = args.mode.into();
    let report = if args.parallel {
        let outcomes = quantified
            .pairs()
            .par_iter()
            .map(|pair| match_pair(pair, &searched, &params, mode))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| CliError::Input(e.to_string()))?;
        ConformanceReport {
            conforms: outcomes.iter().all(PairOutcome::passed),
            mode,
            params,
            outcomes,
        }
    } else {
        conforms(&quantified, &searched, &params, mode)
            .map_err(|e| CliError::Input(e.to_string()))?
    };

    emit(&conformance_report(&report), args.out.as_deref())?;
    Ok(report.conforms)
}

// ---------------------------------------------------------------------
// hioco
// ---------------------------------------------------------------------

fn collect_test_paths(inputs: &[PathBuf]) -> Result<Vec<PathBuf>, CliError> {
    let mut paths = Vec::new();
    for input in inputs {
        if input.is_dir() {
            let entries = fs::read_dir(input).map_err(|source| CliError::Io {
                path: input.clone(),
                source,
            })?;
            let mut found = Vec::new();
            for entry in entries {
                let entry = entry.map_err(|source| CliError::Io {
                    path: input.clone(),
                    source,
                })?;
                let name = entry.file_name().to_string_lossy().into_owned();
                if name.ends_with(".trace.csv") {
                    found.push(entry.path());
                }
            }
            found.sort();
            paths.extend(found);
        } else {
            paths.push(input.clone());
        }
    }
    if paths.is_empty() {
        return Err(CliError::Input("no test traces found".to_string()));
    }
    Ok(paths)
}

fn cmd_hioco(args: HiocoArgs) -> Result<bool, CliError> {
    let implementation = load_model(&args.implementation)?;
    let specification = load_model(&args.specification)?;
    let sig = specification.signature();

    let mut tests = Vec::new();
    for path in collect_test_paths(&args.tests)? {
        let atrace = read_trace(&read_file(&path)?).map_err(|e| parse_err(&path, e))?;
        let seq = HybridSequence::from_atrace(&atrace).map_err(|e| parse_err(&path, e))?;
        let trace = Trace::new(sig.clone(), seq).map_err(|e| parse_err(&path, e))?;
        tests.push(trace);
    }

    let config = HiocoConfig {
        include_xi: args.include_xi,
        sim: SimConfig {
            step: args.step,
            urgency: args.urgency.into(),
            ..SimConfig::default()
        },
        ..HiocoConfig::default()
    };
    let report = hioco(
        &implementation,
        &specification,
        &tests,
        &args.probes,
        &config,
    )
    .map_err(|e| CliError::Input(e.to_string()))?;

    emit(&hioco_report(&report), args.out.as_deref())?;
    Ok(report.conforms)
}

// ---------------------------------------------------------------------
// semitrans
// ---------------------------------------------------------------------

fn cmd_semitrans(args: SemitransArgs) -> Result<bool, CliError> {
    let config = SemitransConfig {
        seed: args.seed,
        trials: args.trials,
        tau_range: (args.tau_min, args.tau_max),
        epsilon_range: (args.eps_min, args.eps_max),
        max_retries: args.retries,
    };
    if !(config.tau_range.0 <= config.tau_range.1 && config.epsilon_range.0 <= config.epsilon_range.1)
    {
        return Err(CliError::Input("slack ranges must be nonempty".to_string()));
    }

    let report = if args.parallel {
        let outcomes = (0..config.trials)
            .into_par_iter()
            .map(|trial| semitrans_trial(&config, trial))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| CliError::Internal(e.to_string()))?;
        let mut report = SemitransReport {
            trials: config.trials,
            regenerated: 0,
            violations: Vec::new(),
            exhausted: Vec::new(),
        };
        for (trial, outcome) in outcomes.iter().enumerate() {
            report.regenerated += u64::from(outcome.regenerated);
            if outcome.violation {
                report.violations.push(trial as u64);
            }
            if outcome.exhausted {
                report.exhausted.push(trial as u64);
            }
        }
        report
    } else {
        semitrans_check(&config).map_err(|e| CliError::Internal(e.to_string()))?
    };

    emit(&semitrans_report(&config, &report), args.out.as_deref())?;
    Ok(report.passed())
}
