use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use clap::Parser;
use thiserror::Error;

use crate::cli::metrics::{self, MetricsRecord};
use crate::cli::scenario::{Scenario, ScenarioError};
use crate::cli::shell::Shell;
use crate::device::{DeviceError, OpticalPlant};
use crate::simnet::EventTrace;
use crate::world::{World, WorldConfig, WorldError, DEFAULT_TCP_BUDGET_MS};

#[derive(Parser, Debug, Clone, PartialEq)]
#[command(name = "lightpath", version, about = "Simulate on-demand optical lightpath provisioning")]
pub struct RunArgs {
    /// Topology file (switch / span / host lines).
    #[arg(long)]
    pub topology: PathBuf,
    /// Scenario file of timed requests and faults.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write the TSV event trace here instead of stdout.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Write `key=value` metrics here instead of stdout.
    #[arg(long)]
    pub metrics: Option<PathBuf>,
    /// Longest darkness a modeled transfer survives.
    #[arg(long, default_value_t = DEFAULT_TCP_BUDGET_MS)]
    pub tcp_budget_ms: u64,
    /// Read shell commands from stdin after loading the scenario.
    #[arg(long)]
    pub interactive: bool,
    /// Credential presented by the client.
    #[arg(long)]
    pub token: Option<String>,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Topology { path: PathBuf, source: DeviceError },
    #[error("{path}: {source}")]
    Scenario { path: PathBuf, source: ScenarioError },
    #[error(transparent)]
    World(#[from] WorldError),
}

pub struct RunReport {
    pub world: World,
    pub metrics: MetricsRecord,
    /// `(key, expected, actual)` for every failed `expect`.
    pub failures: Vec<(String, String, String)>,
}

impl RunReport {
    pub fn trace(&self) -> &EventTrace {
        self.world.trace()
    }

    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Parse inputs and build a world with the scenario scheduled.
pub fn load(args: &RunArgs) -> Result<(World, Scenario), CliError> {
    let plant = OpticalPlant::parse(&read(&args.topology)?).map_err(|source| CliError::Topology {
        path: args.topology.clone(),
        source,
    })?;
    let scenario = match &args.scenario {
        Some(p) => Scenario::parse(&read(p)?).map_err(|source| CliError::Scenario {
            path: p.clone(),
            source,
        })?,
        None => Scenario::default(),
    };
    let mut cfg = WorldConfig {
        seed: args.seed,
        tcp_budget_ms: args.tcp_budget_ms,
        ..WorldConfig::default()
    };
    if let Some(t) = args.token.clone().or_else(|| scenario.token.clone()) {
        cfg.client_token = t;
    }
    let mut world = World::new(plant, cfg)?;
    scenario.install(&mut world)?;
    Ok((world, scenario))
}

pub fn check_expectations(scenario: &Scenario, m: &MetricsRecord) -> Vec<(String, String, String)> {
    scenario
        .expects
        .iter()
        .filter_map(|(k, want)| {
            let got = m.get(k).unwrap_or("0").to_string();
            (got != *want).then(|| (k.clone(), want.clone(), got))
        })
        .collect()
}

/// Batch run to the scenario's end time.
pub fn run(args: &RunArgs) -> Result<RunReport, CliError> {
    let (mut world, scenario) = load(args)?;
    world.run_until(scenario.end_time());
    Ok(finish(world, &scenario))
}

/// Run the scenario, then feed `input` lines to the shell until EOF or
/// `quit`.
pub fn run_interactive(
    args: &RunArgs,
    input: impl BufRead,
    mut output: impl Write,
) -> Result<RunReport, CliError> {
    let (mut world, scenario) = load(args)?;
    world.run_until(scenario.end_time());
    let mut shell = Shell::new(world);
    for line in input.lines() {
        let line = line.map_err(|source| CliError::Io {
            path: PathBuf::from("<stdin>"),
            source,
        })?;
        if matches!(line.trim(), "quit" | "exit") {
            break;
        }
        let reply = shell.exec(&line);
        if !reply.is_empty() {
            let _ = writeln!(output, "{reply}");
        }
    }
    Ok(finish(shell.world, &scenario))
}

fn finish(world: World, scenario: &Scenario) -> RunReport {
    let metrics = metrics::compute(world.trace());
    let failures = check_expectations(scenario, &metrics);
    RunReport {
        world,
        metrics,
        failures,
    }
}

fn write_or_print(path: &Option<PathBuf>, text: &str, out: &mut impl Write) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|source| CliError::Io {
            path: p.clone(),
            source,
        }),
        None => {
            let _ = out.write_all(text.as_bytes());
            Ok(())
        }
    }
}

/// Entry point shared by the binary: returns the process exit code
/// (0 ok, 1 failed expectation, 2 error).
pub fn main_with(args: RunArgs) -> i32 {
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    let result = if args.interactive {
        run_interactive(&args, std::io::stdin().lock(), &mut out)
    } else {
        run(&args)
    };
    let report = match result {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    let written = write_or_print(&args.trace, &report.trace().to_tsv(), &mut out)
        .and_then(|_| write_or_print(&args.metrics, &report.metrics.to_text(), &mut out));
    if let Err(e) = written {
        eprintln!("error: {e}");
        return 2;
    }
    for (k, want, got) in &report.failures {
        eprintln!("expectation failed: {k} expected {want}, got {got}");
    }
    i32::from(!report.passed())
}
