use clap::{Parser, Subcommand};
use ermsim::trojan::{DEFAULT_C_MAIN, DEFAULT_DELAY_S, DEFAULT_GRID_ZERO_HZ, DEFAULT_VDD, DEFAULT_VTH};
use ermsim_cli::commands::{self, CliError, OutputOptions};
use ermsim_cli::config::{emit_config, ScenarioConfig};
use ermsim_cli::report::{format_summary, Summary};
use rayon::prelude::*;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "ermsim", version, about = "Trojan attack-chain simulator for a two-stage solar inverter")]
struct Cli {
    /// Output root; each config writes into <out>/<config stem>/.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for multi-config runs (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    /// Keep every k-th sample in CSV output.
    #[arg(long, global = true)]
    decimate: Option<usize>,
    /// Accepted for reproducible invocations; every model is deterministic.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the device chain (environment to power-stage output).
    Run {
        #[arg(required = true)]
        configs: Vec<PathBuf>,
    },
    /// Run the grid scenario named by [grid] kind.
    Grid {
        #[arg(required = true)]
        configs: Vec<PathBuf>,
    },
    /// Device chain followed by the grid scenario its outcome maps to.
    Chain {
        #[arg(required = true)]
        configs: Vec<PathBuf>,
    },
    /// Share ratio and unit capacitor for a target trigger delay.
    CalibratePump {
        #[arg(long, default_value_t = DEFAULT_DELAY_S)]
        delay: f64,
        #[arg(long, default_value_t = DEFAULT_VTH)]
        vth: f64,
        #[arg(long, default_value_t = DEFAULT_VDD)]
        vdd: f64,
        /// Glitch rate, Hz.
        #[arg(long, default_value_t = DEFAULT_GRID_ZERO_HZ)]
        f: f64,
        #[arg(long, default_value_t = DEFAULT_C_MAIN)]
        c_main: f64,
    },
    /// Re-run golden configs and diff their summaries.
    ReplayGolden {
        #[arg(long)]
        dir: Option<PathBuf>,
        /// Overwrite stored summaries with the current output.
        #[arg(long)]
        bless: bool,
    },
    /// Print the default config with every key.
    Defaults,
}

type Job = fn(&Path, &OutputOptions) -> Result<Summary, CliError>;

fn run_many(configs: &[PathBuf], jobs: usize, opts: &OutputOptions, job: Job) -> Result<(), CliError> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs).build().expect("thread pool");
    let results: Vec<Result<Summary, CliError>> = pool.install(|| configs.par_iter().map(|p| job(p, opts)).collect());
    let mut first_err = None;
    for (path, r) in configs.iter().zip(results) {
        match r {
            Ok(s) => {
                if configs.len() > 1 {
                    println!("# {}", path.display());
                }
                print!("{}", format_summary(&s));
            }
            Err(e) => {
                eprintln!("error: {e}");
                first_err.get_or_insert(e);
            }
        }
    }
    first_err.map_or(Ok(()), Err)
}

fn replay(dir: Option<PathBuf>, bless: bool) -> Result<(), CliError> {
    let dir = dir.unwrap_or_else(commands::default_golden_dir);
    let mut failed = Vec::new();
    for cfg in commands::golden_configs(&dir)? {
        let case = commands::replay_one(&cfg)?;
        if bless {
            commands::bless(&case, &cfg)?;
            println!("blessed {}", case.name);
        } else if case.matches() {
            println!("ok       {}", case.name);
        } else {
            match case.first_difference() {
                Some((e, a)) => eprintln!("MISMATCH {}\n  expected: {e}\n  actual:   {a}", case.name),
                None => eprintln!("MISSING  {} (no stored summary; run with --bless)", case.name),
            }
            failed.push(case.name);
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::GoldenMismatch { names: failed })
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let opts = OutputOptions { out: cli.out, decimate: cli.decimate, dry: false };
    if opts.decimate == Some(0) {
        eprintln!("error: --decimate must be at least 1");
        return ExitCode::from(2);
    }
    let _ = cli.seed;
    let res = match cli.cmd {
        Command::Run { configs } => run_many(&configs, cli.jobs, &opts, commands::run_device),
        Command::Grid { configs } => run_many(&configs, cli.jobs, &opts, commands::run_grid),
        Command::Chain { configs } => run_many(&configs, cli.jobs, &opts, commands::run_chain),
        Command::CalibratePump { delay, vth, vdd, f, c_main } => match commands::pump(delay, vth, vdd, f, c_main) {
            Ok(s) => {
                print!("{}", format_summary(&s));
                Ok(())
            }
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(2);
            }
        },
        Command::ReplayGolden { dir, bless } => replay(dir, bless).inspect_err(|e| eprintln!("error: {e}")),
        Command::Defaults => {
            print!("{}", emit_config(&ScenarioConfig::default()));
            Ok(())
        }
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => ExitCode::from(e.exit_code()),
    }
}
