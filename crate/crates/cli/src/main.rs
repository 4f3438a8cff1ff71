use std::fs;
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use resinet::suite::{generate, read_suite, write_suite, SuiteParams};
use resinet::trace::{read_trace, write_trace};
use resinet::{parse_network, parse_query, run, validate_trace, Mode, Network, Query, RunConfig, VerdictKind};
use resinet_cli::compare::{compare, write_csv, write_table, CompareConfig};
use resinet_cli::{exit_code, EXIT_ERROR, EXIT_FAILURE};
use tracing_subscriber::EnvFilter;

#[derive(Parser)]
#[command(
    name = "resinet",
    version,
    about = "Abstraction-refinement verifier for ReLU networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct LimitArgs {
    /// Wall-clock budget per run, in seconds.
    #[arg(long)]
    timeout: Option<f64>,
    /// Cap on visited search states per refinement step.
    #[arg(long)]
    max_states: Option<u64>,
}

impl LimitArgs {
    fn timeout(&self) -> Result<Option<Duration>, String> {
        self.timeout
            .map(|t| Duration::try_from_secs_f64(t).map_err(|e| format!("--timeout: {e}")))
            .transpose()
    }
}

#[derive(Subcommand)]
enum Command {
    /// Decide one query; exits 10 (SAT), 20 (UNSAT) or 30 (TIMEOUT).
    Verify {
        network: PathBuf,
        query: PathBuf,
        #[arg(long, default_value_t = Mode::Ar4)]
        mode: Mode,
        #[command(flatten)]
        limits: LimitArgs,
        /// Print the run report as JSON.
        #[arg(long)]
        json: bool,
        /// Write the event trace (JSON lines) to this file.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Generate a seeded suite of networks and oracle-labelled queries.
    Gen {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        count: usize,
        /// Fixed widths, e.g. 2,4,5,1.
        #[arg(long, value_delimiter = ',')]
        shape: Option<Vec<usize>>,
        #[arg(long, default_value_t = 4)]
        max_inputs: usize,
        #[arg(long, default_value_t = 3)]
        max_hidden_layers: usize,
        #[arg(long, default_value_t = 8)]
        max_width: usize,
        #[arg(long, default_value_t = 10)]
        max_relus: usize,
        #[arg(long, default_value_t = 0)]
        workers: usize,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Run several modes over a suite and report per-instance statistics.
    Compare {
        suite: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "ar,ar4")]
        modes: Vec<Mode>,
        #[command(flatten)]
        limits: LimitArgs,
        #[arg(long, default_value_t = 0)]
        workers: usize,
        /// CSV output; defaults to compare.csv in the suite directory.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// JSON output; defaults to compare.json in the suite directory.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Print the JSON report instead of the table.
        #[arg(long)]
        json: bool,
    },
    /// Replay a trace and check every learned clause and propagation.
    ValidateTrace {
        trace: PathBuf,
        network: PathBuf,
        query: PathBuf,
        #[arg(long)]
        json: bool,
    },
}

fn read_inputs(network: &Path, query: &Path) -> Result<(Network, Query), String> {
    let bytes = fs::read(network).map_err(|e| format!("{}: {e}", network.display()))?;
    let net = parse_network(&bytes).map_err(|e| format!("{}: {e}", network.display()))?;
    let bytes = fs::read(query).map_err(|e| format!("{}: {e}", query.display()))?;
    let q = parse_query(&bytes).map_err(|e| format!("{}: {e}", query.display()))?;
    Ok((net, q))
}

fn cmd_verify(
    network: &Path,
    query: &Path,
    mode: Mode,
    limits: &LimitArgs,
    json: bool,
    trace: Option<&Path>,
) -> Result<u8, String> {
    let (net, q) = read_inputs(network, query)?;
    let config = RunConfig {
        mode,
        max_states: limits.max_states,
        timeout: limits.timeout()?,
        trace: trace.is_some(),
        ..RunConfig::default()
    };
    let out = run(&net, &q, &config).map_err(|e| e.to_string())?;
    if let Some(path) = trace {
        let file = fs::File::create(path).map_err(|e| format!("{}: {e}", path.display()))?;
        write_trace(&out.trace, io::BufWriter::new(file)).map_err(|e| format!("{}: {e}", path.display()))?;
    }
    let r = &out.report;
    let mut stdout = io::stdout().lock();
    if json {
        serde_json::to_writer_pretty(&mut stdout, r).map_err(|e| e.to_string())?;
        writeln!(stdout).map_err(|e| e.to_string())?;
    } else {
        let s = &r.stats;
        let _ = writeln!(stdout, "{}", r.verdict);
        if let Some(w) = &r.witness {
            let _ = writeln!(stdout, "witness {w:?}");
        }
        let _ = writeln!(
            stdout,
            "mode {} merges {} refinements {} visited_states {} splits {} propagations {} prune_hits {} learned {} time {:.1}ms",
            r.mode, r.merges, r.refinements, s.visited_states, s.splits, s.propagations, s.prune_hits, s.learned, r.elapsed_ms
        );
    }
    Ok(exit_code(r.verdict))
}

fn cmd_compare(
    suite: &Path,
    config: CompareConfig,
    csv_path: Option<PathBuf>,
    report_path: Option<PathBuf>,
    json: bool,
) -> Result<u8, String> {
    let (_, instances) = read_suite(suite).map_err(|e| e.to_string())?;
    tracing::info!(instances = instances.len(), modes = ?config.modes, "comparing");
    let report = compare(&instances, &config).map_err(|e| e.to_string())?;
    let csv_path = csv_path.unwrap_or_else(|| suite.join("compare.csv"));
    let file = fs::File::create(&csv_path).map_err(|e| format!("{}: {e}", csv_path.display()))?;
    write_csv(&report, file).map_err(|e| e.to_string())?;
    let report_path = report_path.unwrap_or_else(|| suite.join("compare.json"));
    let mut text = serde_json::to_vec_pretty(&report).map_err(|e| e.to_string())?;
    text.push(b'\n');
    fs::write(&report_path, &text).map_err(|e| format!("{}: {e}", report_path.display()))?;
    let mut stdout = io::stdout().lock();
    if json {
        let _ = stdout.write_all(&text);
    } else {
        let _ = write_table(&report, &mut stdout);
    }
    Ok(if report.failures.is_empty() { 0 } else { EXIT_FAILURE })
}

fn cmd_validate(trace: &Path, network: &Path, query: &Path, json: bool) -> Result<u8, String> {
    let (net, q) = read_inputs(network, query)?;
    let file = fs::File::open(trace).map_err(|e| format!("{}: {e}", trace.display()))?;
    let events = read_trace(BufReader::new(file)).map_err(|e| format!("{}: {e}", trace.display()))?;
    let report = validate_trace(&events, &net, &q).map_err(|e| e.to_string())?;
    let mut stdout = io::stdout().lock();
    if json {
        let _ = serde_json::to_writer_pretty(&mut stdout, &report);
        let _ = writeln!(stdout);
    } else {
        for v in &report.violations {
            let _ = writeln!(stdout, "VIOLATION {v}");
        }
        let _ = writeln!(
            stdout,
            "events {} iterations {} learned {} propagations {} successes {} unchecked {} violations {}",
            report.events,
            report.iterations,
            report.learned_checked,
            report.propagations_checked,
            report.successes_checked,
            report.unchecked,
            report.violations.len()
        );
    }
    Ok(if report.is_clean() { 0 } else { EXIT_FAILURE })
}

fn dispatch(cli: Cli) -> Result<u8, String> {
    match cli.command {
        Command::Verify {
            network,
            query,
            mode,
            limits,
            json,
            trace,
        } => cmd_verify(&network, &query, mode, &limits, json, trace.as_deref()),
        Command::Gen {
            seed,
            count,
            shape,
            max_inputs,
            max_hidden_layers,
            max_width,
            max_relus,
            workers,
            out,
        } => {
            let params = SuiteParams {
                count,
                max_inputs,
                max_hidden_layers,
                max_width,
                max_relus,
                shape,
                ..SuiteParams::default()
            };
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(workers)
                .build()
                .map_err(|e| e.to_string())?;
            let suite = pool.install(|| generate(seed, &params)).map_err(|e| e.to_string())?;
            write_suite(&out, seed, &params, &suite).map_err(|e| e.to_string())?;
            let sat = suite.iter().filter(|i| i.expected == VerdictKind::Sat).count();
            println!("wrote {} instances ({sat} SAT) to {}", suite.len(), out.display());
            Ok(0)
        }
        Command::Compare {
            suite,
            modes,
            limits,
            workers,
            csv,
            report,
            json,
        } => {
            let config = CompareConfig {
                modes,
                max_states: limits.max_states,
                timeout: limits.timeout()?,
                workers,
            };
            cmd_compare(&suite, config, csv, report, json)
        }
        Command::ValidateTrace {
            trace,
            network,
            query,
            json,
        } => cmd_validate(&trace, &network, &query, json),
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_env("RESINET_LOG").unwrap_or_else(|_| EnvFilter::new("warn")))
        .with_writer(io::stderr)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_ERROR } else { 0 });
        }
    };
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code),
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}
