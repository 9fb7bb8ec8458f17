//! mclim — analyze embedded Markov chain models from the command line.
//!
//! Subcommands: `validate`, `limit`, `simulate`, `sojourn`,
//! `export-dot`. Reports go to stdout, diagnostics to stderr. Exit
//! codes are part of the interface: 0 success, 1 validation failure,
//! 2 tied row maxima, 3 non-convergence / non-alternating / reducible,
//! 4 parse, IO, or usage errors.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand, ValueEnum};

use mclim_core::dot;
use mclim_core::limit::{greedy_walk, limit_of, Cycle};
use mclim_core::model::{parse_model, parse_raw, ChainModel, ModelError, StateId, TieError};
use mclim_core::sim::{run, SimConfig};
use mclim_core::sojourn::{
    cycle_sojourn, monte_carlo_sojourn, stationary_sojourn, Partition, SojournDetail, SojournError,
    SojournReport,
};

const EXIT_VALIDATION: u8 = 1;
const EXIT_TIE: u8 = 2;
const EXIT_UNSETTLED: u8 = 3;
const EXIT_USAGE: u8 = 4;

#[derive(Parser)]
#[command(
    name = "mclim",
    version,
    about = "Limit cycles, reinforcement simulation, and sojourn analytics for embedded Markov chain models"
)]
struct Cli {
    /// Append a machine-readable key=value block to the report.
    #[arg(long, global = true)]
    machine: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a model file and report every violated invariant and tied row maximum.
    Validate {
        /// Model file path.
        model: PathBuf,
    },
    /// Compute the maximum-probability limit cycle for one or all start states.
    Limit {
        /// Model file path.
        model: PathBuf,
        /// Start state name.
        #[arg(long, conflicts_with = "all_starts")]
        start: Option<String>,
        /// Compute the limit of every start state.
        #[arg(long)]
        all_starts: bool,
        /// Break tied row maxima with this perturbation magnitude (0 < MAG < 1e-3).
        #[arg(long, value_name = "MAG")]
        perturb: Option<f64>,
    },
    /// Run seeded reinforcement simulations and compare realized cycles with the greedy limit.
    Simulate {
        /// Model file path.
        model: PathBuf,
        /// Reinforcement fraction applied to each traversed cell.
        #[arg(long, default_value_t = 0.05)]
        epsilon: f64,
        /// Base seed; replica k uses seed + k.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Number of independent replicas.
        #[arg(long, default_value_t = 1)]
        runs: u32,
        /// Event budget per replica.
        #[arg(long, default_value_t = 1_000_000)]
        max_events: u64,
        /// Concentration threshold: convergence needs on-cycle probabilities >= 1 - delta.
        #[arg(long, default_value_t = 0.01)]
        delta: f64,
        /// Start state name (defaults to the first state).
        #[arg(long)]
        start: Option<String>,
    },
    /// Compute s(G), s(Gc), and the sojourn time cycle for a partition.
    Sojourn {
        /// Model file path.
        model: PathBuf,
        /// Comma-separated names of the states forming the subset G.
        #[arg(long, value_delimiter = ',', required = true)]
        good: Vec<String>,
        /// Computation route.
        #[arg(long, value_enum, default_value_t = Mode::Stationary)]
        mode: Mode,
        /// Start state for cycle mode (defaults to the first state).
        #[arg(long)]
        start: Option<String>,
        /// Entry epochs for mc mode.
        #[arg(long, default_value_t = 100_000)]
        entries: usize,
        /// Seed for mc mode.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Write the transition network as a DOT digraph.
    ExportDot {
        /// Model file path.
        model: PathBuf,
        /// Highlight the limit cycle reached from this start state.
        #[arg(long, value_name = "NAME")]
        cycle_from: Option<String>,
        /// Output file (stdout when omitted).
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Stationary,
    Cycle,
    Mc,
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Failure {
            code,
            message: message.into(),
        }
    }

    fn usage(message: impl Into<String>) -> Self {
        Failure::new(EXIT_USAGE, message)
    }

    fn tie(err: TieError) -> Self {
        Failure::new(
            EXIT_TIE,
            format!("{err} (use `limit --perturb MAG` to break ties)"),
        )
    }
}

/// Numbers in the machine block carry 15 significant digits.
fn fmt_num(x: f64) -> String {
    format!("{x:.14e}")
}

fn machine_block(pairs: &[(String, String)]) -> String {
    let mut out = String::new();
    for (key, value) in pairs {
        let _ = writeln!(out, "{key}={value}");
    }
    out
}

fn read_file(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))
}

fn load_model(path: &Path) -> Result<ChainModel, Failure> {
    let text = read_file(path)?;
    parse_model(&text).map_err(|err| match err {
        ModelError::Invalid(report) => Failure::new(
            EXIT_VALIDATION,
            format!("{}: model failed validation\n{report}", path.display()),
        ),
        other => Failure::usage(format!("{}: {other}", path.display())),
    })
}

fn lookup_state(model: &ChainModel, name: &str) -> Result<StateId, Failure> {
    model
        .state_by_name(name)
        .ok_or_else(|| Failure::usage(format!("unknown state '{name}'")))
}

fn cycle_key(model: &ChainModel, cycle: &Cycle) -> String {
    cycle.names(model).join("->")
}

fn cycle_human(model: &ChainModel, states: &[StateId]) -> String {
    states
        .iter()
        .map(|&s| model.state_name(s))
        .collect::<Vec<_>>()
        .join(" -> ")
}

fn cmd_validate(path: &Path, machine: bool) -> Result<u8, Failure> {
    let text = read_file(path)?;
    let raw = parse_raw(&text).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
    let report = raw.validate();
    println!(
        "{} states, {} errors, {} tie warnings",
        raw.n(),
        report.error_count(),
        report.tie_warning_count()
    );
    for issue in report.issues() {
        println!("  {issue}");
    }
    if machine {
        print!(
            "{}",
            machine_block(&[
                ("states".into(), raw.n().to_string()),
                ("errors".into(), report.error_count().to_string()),
                (
                    "tie_warnings".into(),
                    report.tie_warning_count().to_string()
                ),
                ("ok".into(), report.ok().to_string()),
            ])
        );
    }
    Ok(if report.ok() { 0 } else { EXIT_VALIDATION })
}

fn cmd_limit(
    path: &Path,
    start: Option<String>,
    all_starts: bool,
    perturb: Option<f64>,
    machine: bool,
) -> Result<u8, Failure> {
    let mut model = load_model(path)?;
    if let Some(mag) = perturb {
        if !(mag > 0.0 && mag < 1e-3) {
            return Err(Failure::usage(format!(
                "--perturb must lie in (0, 1e-3), got {mag}"
            )));
        }
        model = model.perturb_ties(mag);
    }
    let report = model.validate();
    if report.tie_warning_count() > 0 {
        let rows: Vec<String> = report
            .issues()
            .iter()
            .map(|issue| format!("  {issue}"))
            .collect();
        return Err(Failure::new(
            EXIT_TIE,
            format!(
                "tied row maxima make the limit ambiguous (use --perturb MAG to break ties)\n{}",
                rows.join("\n")
            ),
        ));
    }

    let starts: Vec<StateId> = if all_starts {
        model.states().collect()
    } else if let Some(name) = start {
        vec![lookup_state(&model, &name)?]
    } else {
        return Err(Failure::usage("choose either --start NAME or --all-starts"));
    };

    let mut pairs = Vec::new();
    for s in starts {
        let path = greedy_walk(&model, s).map_err(Failure::tie)?;
        println!(
            "{}: {}",
            model.state_name(s),
            cycle_human(&model, path.cycle_from_entry())
        );
        let canonical = mclim_core::limit::extract_cycle(&path);
        pairs.push((
            format!("limit.{}", model.state_name(s)),
            cycle_key(&model, &canonical),
        ));
    }
    if machine {
        print!("{}", machine_block(&pairs));
    }
    Ok(0)
}

#[allow(clippy::too_many_arguments)]
fn cmd_simulate(
    path: &Path,
    epsilon: f64,
    seed: u64,
    runs: u32,
    max_events: u64,
    delta: f64,
    start: Option<String>,
    machine: bool,
) -> Result<u8, Failure> {
    let model = load_model(path)?;
    if runs == 0 {
        return Err(Failure::usage("--runs must be at least 1"));
    }
    let start = match start {
        Some(name) => lookup_state(&model, &name)?,
        None => StateId::new(0),
    };
    let greedy = limit_of(&model, start).map_err(Failure::tie)?;

    let mut pairs: Vec<(String, String)> = vec![
        ("epsilon".into(), fmt_num(epsilon)),
        ("delta".into(), fmt_num(delta)),
        ("max_events".into(), max_events.to_string()),
        ("runs".into(), runs.to_string()),
        ("start".into(), model.state_name(start).to_string()),
        ("greedy_cycle".into(), cycle_key(&model, &greedy)),
    ];
    let mut converged = 0u32;
    let mut agreements = 0u32;
    for k in 0..runs {
        let config = SimConfig::new(epsilon, seed + u64::from(k), max_events, delta, start)
            .map_err(|e| Failure::usage(e.to_string()))?;
        let result = run(&model, &config);
        let cycle_text = result
            .realized
            .as_ref()
            .map(|c| cycle_key(&model, c))
            .unwrap_or_else(|| "-".into());
        println!(
            "run {k}: seed={} events={} converged={} cycle={}",
            result.seed,
            result.events_used,
            if result.converged { "yes" } else { "no" },
            cycle_text
        );
        if result.converged {
            converged += 1;
        }
        if result.realized.as_ref() == Some(&greedy) {
            agreements += 1;
        }
        pairs.push((format!("run.{k}.seed"), result.seed.to_string()));
        pairs.push((format!("run.{k}.converged"), result.converged.to_string()));
        pairs.push((format!("run.{k}.events"), result.events_used.to_string()));
        pairs.push((format!("run.{k}.cycle"), cycle_text));
    }
    let fraction = f64::from(agreements) / f64::from(runs);
    println!("greedy cycle: {}", cycle_human(&model, greedy.states()));
    println!("converged: {converged}/{runs}");
    println!("agreement: {agreements}/{runs} ({fraction})");
    pairs.push(("converged_runs".into(), converged.to_string()));
    pairs.push(("agreement_count".into(), agreements.to_string()));
    pairs.push(("agreement_fraction".into(), fmt_num(fraction)));
    if machine {
        print!("{}", machine_block(&pairs));
    }
    Ok(if converged == runs { 0 } else { EXIT_UNSETTLED })
}

fn sojourn_failure(err: SojournError) -> Failure {
    let code = match err {
        SojournError::Reducible { .. } | SojournError::NonAlternating | SojournError::Singular => {
            EXIT_UNSETTLED
        }
        _ => EXIT_USAGE,
    };
    Failure::new(code, err.to_string())
}

fn print_sojourn(model: &ChainModel, report: &SojournReport, machine: bool) {
    println!("method: {}", report.method);
    println!(
        "s(G)={} s(Gc)={} STC={}",
        report.s_good, report.s_bad, report.stc
    );
    let mut pairs: Vec<(String, String)> = vec![
        ("method".into(), report.method.to_string()),
        ("s_good".into(), fmt_num(report.s_good)),
        ("s_bad".into(), fmt_num(report.s_bad)),
        ("stc".into(), fmt_num(report.stc)),
    ];
    match &report.detail {
        SojournDetail::Stationary { pi_residual } => {
            println!("pi residual: {pi_residual:e}");
            pairs.push(("pi_residual".into(), fmt_num(*pi_residual)));
        }
        SojournDetail::LimitCycle {
            cycle,
            good_runs,
            bad_runs,
            note,
        } => {
            println!("cycle: {}", cycle_human(model, cycle.states()));
            println!("runs per traversal: {good_runs} in G, {bad_runs} in Gc");
            if let Some(note) = note {
                println!("note: {note}");
            }
            pairs.push(("cycle".into(), cycle_key(model, cycle)));
            pairs.push(("good_runs".into(), good_runs.to_string()));
            pairs.push(("bad_runs".into(), bad_runs.to_string()));
        }
        SojournDetail::MonteCarlo {
            entries,
            burn_in,
            used_good,
            used_bad,
            se_good,
            se_bad,
        } => {
            println!("entries: {entries} (burn-in {burn_in}, used {used_good} G / {used_bad} Gc)");
            println!("se(G)={se_good} se(Gc)={se_bad}");
            pairs.push(("entries".into(), entries.to_string()));
            pairs.push(("burn_in".into(), burn_in.to_string()));
            pairs.push(("se_good".into(), fmt_num(*se_good)));
            pairs.push(("se_bad".into(), fmt_num(*se_bad)));
        }
    }
    if machine {
        print!("{}", machine_block(&pairs));
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_sojourn(
    path: &Path,
    good: Vec<String>,
    mode: Mode,
    start: Option<String>,
    entries: usize,
    seed: u64,
    machine: bool,
) -> Result<u8, Failure> {
    let model = load_model(path)?;
    let part = Partition::from_names(&model, &good).map_err(sojourn_failure)?;
    let report = match mode {
        Mode::Stationary => stationary_sojourn(&model, &part).map_err(sojourn_failure)?,
        Mode::Cycle => {
            let start = match start {
                Some(name) => lookup_state(&model, &name)?,
                None => StateId::new(0),
            };
            let cycle = limit_of(&model, start).map_err(Failure::tie)?;
            cycle_sojourn(&model, &cycle, &part).map_err(sojourn_failure)?
        }
        Mode::Mc => monte_carlo_sojourn(&model, &part, seed, entries).map_err(sojourn_failure)?,
    };
    print_sojourn(&model, &report, machine);
    Ok(0)
}

fn cmd_export_dot(
    path: &Path,
    cycle_from: Option<String>,
    output: Option<PathBuf>,
    machine: bool,
) -> Result<u8, Failure> {
    let model = load_model(path)?;
    let cycle = match cycle_from {
        Some(name) => {
            let start = lookup_state(&model, &name)?;
            Some(limit_of(&model, start).map_err(Failure::tie)?)
        }
        None => None,
    };
    let rendered = dot::render(&model, cycle.as_ref());
    let edges = model.trans().iter().filter(|&&p| p > 0.0).count();
    let cycle_edges = cycle.as_ref().map_or(0, Cycle::len);
    match &output {
        Some(file) => {
            fs::write(file, &rendered)
                .map_err(|e| Failure::usage(format!("{}: {e}", file.display())))?;
            eprintln!("wrote {}", file.display());
        }
        None => print!("{rendered}"),
    }
    if machine {
        print!(
            "{}",
            machine_block(&[
                ("nodes".into(), model.n().to_string()),
                ("edges".into(), edges.to_string()),
                ("cycle_edges".into(), cycle_edges.to_string()),
                (
                    "output".into(),
                    output.map_or("-".into(), |p| p.display().to_string()),
                ),
            ])
        );
    }
    Ok(0)
}

fn dispatch(cli: Cli) -> Result<u8, Failure> {
    let machine = cli.machine;
    match cli.command {
        Command::Validate { model } => cmd_validate(&model, machine),
        Command::Limit {
            model,
            start,
            all_starts,
            perturb,
        } => cmd_limit(&model, start, all_starts, perturb, machine),
        Command::Simulate {
            model,
            epsilon,
            seed,
            runs,
            max_events,
            delta,
            start,
        } => cmd_simulate(
            &model, epsilon, seed, runs, max_events, delta, start, machine,
        ),
        Command::Sojourn {
            model,
            good,
            mode,
            start,
            entries,
            seed,
        } => cmd_sojourn(&model, good, mode, start, entries, seed, machine),
        Command::ExportDot {
            model,
            cycle_from,
            output,
        } => cmd_export_dot(&model, cycle_from, output, machine),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            return match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    print!("{err}");
                    ExitCode::SUCCESS
                }
                _ => {
                    eprint!("{err}");
                    ExitCode::from(EXIT_USAGE)
                }
            };
        }
    };
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code),
        Err(failure) => {
            eprintln!("mclim: {}", failure.message);
            ExitCode::from(failure.code)
        }
    }
}
