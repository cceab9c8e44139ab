//! Experiment runner behind the `ed-sim` binary.

pub mod config;
pub mod output;
pub mod presets;
pub mod run;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Parser, ValueEnum};

use output::{Grid, Manifest, Overrides};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
}

/// Energy-detection experiments: presets reproducing each figure, or custom
/// scenario files, written as CSV plus a manifest.
#[derive(Debug, Parser)]
#[command(name = "ed-sim", version)]
pub struct Args {
    /// Built-in scenario (see --list).
    #[arg(long, conflicts_with = "config")]
    pub preset: Option<String>,
    /// Scenario file in TOML.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Monte Carlo trials per point, replacing the scenario's value.
    #[arg(long)]
    pub trials: Option<u64>,
    /// Master seed, replacing the scenario's value.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; results do not depend on this.
    #[arg(long, env = "ED_THREADS")]
    pub threads: Option<usize>,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
    /// Only check the scenario and print diagnostics.
    #[arg(long)]
    pub validate: bool,
    /// Print the effective scenario text and exit.
    #[arg(long)]
    pub dump: bool,
    /// List preset ids and exit.
    #[arg(long)]
    pub list: bool,
}

/// Failure of a run, mapped to the process exit status.
#[derive(Debug)]
pub enum Failure {
    /// Unknown preset, unreadable or invalid scenario: exit 2.
    Input(String),
    /// Numerical or I/O failure while running: exit 1.
    Runtime(String),
}

impl Failure {
    pub fn exit_code(&self) -> ExitCode {
        match self {
            Failure::Input(_) => ExitCode::from(2),
            Failure::Runtime(_) => ExitCode::from(1),
        }
    }
}

/// Scenario source text and a label for the manifest.
fn load(args: &Args) -> Result<(String, String), Failure> {
    match (&args.preset, &args.config) {
        (Some(id), _) => presets::text(id)
            .map(|t| (t.to_string(), format!("preset:{id}")))
            .ok_or_else(|| {
                let known: Vec<_> = presets::ids().collect();
                Failure::Input(format!("unknown preset '{id}'; known presets: {}", known.join(", ")))
            }),
        (None, Some(path)) => fs::read_to_string(path)
            .map(|t| (t, format!("config:{}", path.display())))
            .map_err(|e| Failure::Input(format!("cannot read {}: {e}", path.display()))),
        (None, None) => Err(Failure::Input("one of --preset or --config is required".into())),
    }
}

/// Runs the command line; what `main` reports and the status it exits with.
pub fn run(args: &Args) -> Result<(), Failure> {
    if args.list {
        for id in presets::ids() {
            println!("{id}");
        }
        return Ok(());
    }
    let (text, source) = load(args)?;
    let diagnostics = config::validate(&text);
    if !diagnostics.is_empty() {
        let lines: Vec<String> = diagnostics.iter().map(|d| d.to_string()).collect();
        return Err(Failure::Input(lines.join("\n")));
    }
    if args.validate {
        println!("{source}: ok");
        return Ok(());
    }
    let effective = if args.trials.is_some() || args.seed.is_some() {
        config::apply_overrides(&text, args.trials, args.seed).map_err(Failure::Input)?
    } else {
        text
    };
    if args.dump {
        print!("{effective}");
        return Ok(());
    }
    let experiment = config::parse(&effective).map_err(|d| {
        Failure::Input(d.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("\n"))
    })?;

    if let Some(n) = args.threads {
        // A second initialization in the same process keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    let started = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let clock = Instant::now();
    let table = run::execute(&experiment).map_err(|e| Failure::Runtime(e.to_string()))?;
    let runtime = |e: crate::Error| Failure::Runtime(e.to_string());
    let mut files = output::write_tables(&args.out, &experiment.stem, &table).map_err(runtime)?;
    let manifest = Manifest {
        name: experiment.name.clone(),
        kind: experiment.kind.name().into(),
        source,
        seed: experiment.seed,
        trials: experiment.trials,
        overrides: Overrides {
            trials: args.trials,
            seed: args.seed,
        },
        threads: rayon::current_num_threads(),
        library_version: env!("CARGO_PKG_VERSION").into(),
        started_unix_seconds: started,
        wall_clock_seconds: clock.elapsed().as_secs_f64(),
        grid: Grid {
            antennas: experiment.antennas.clone(),
            snr_db: experiment.snr_db.clone(),
        },
        files: files.iter().map(|p| p.display().to_string()).collect(),
        config: effective,
    };
    files.push(output::write_manifest(&args.out, &experiment.stem, &manifest).map_err(runtime)?);
    for f in &files {
        eprintln!("wrote {}", args.out.join(f).display());
    }
    Ok(())
}
