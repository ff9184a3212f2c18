use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};

use quanta_core::bench::{cmd_evaluate, cmd_reconstruct, cmd_selftest, cmd_simulate, BenchmarkSpec, Fault};

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_SELFTEST: u8 = 3;

#[derive(Parser)]
#[command(name = "quanta", version, about = "Simulate, reconstruct and score single-photon quanta bursts")]
struct Cli {
    /// Benchmark spec (TOML, or JSON with a .json extension).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the spec's seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the spec's output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// More log output; repeat for debug level.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate binary captures, nano-bursts and ground truth for the corpus.
    Simulate {
        /// Overrides the spec's input corpus.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Reconstruct every burst window under every merge config.
    Reconstruct,
    /// Score reconstructions and write report.json, report.csv and summary.txt.
    Evaluate,
    /// Run the built-in calibration and round-trip checks.
    Selftest {
        /// Inject a fault to confirm that the checks can fail.
        #[arg(long, value_name = "flip-bit|wrong-p")]
        inject: Option<Fault>,
    },
}

enum Failure {
    Usage(anyhow::Error),
    Data(anyhow::Error),
    Selftest,
}

fn load_spec(cli: &Cli) -> anyhow::Result<BenchmarkSpec> {
    let mut spec = match &cli.config {
        Some(p) => BenchmarkSpec::load(p)?,
        None => BenchmarkSpec::default(),
    };
    if let Some(seed) = cli.seed {
        spec.seed = seed;
    }
    if let Some(out) = &cli.out {
        spec.out = out.clone();
    }
    if let Command::Simulate { input: Some(input) } = &cli.command {
        spec.input = Some(input.clone());
    }
    spec.validate()?;
    if matches!(cli.command, Command::Simulate { .. }) && spec.input.is_none() && spec.synthetic.is_empty() {
        anyhow::bail!("nothing to simulate: give --input or a spec with `input` or `[[synthetic]]` scenes");
    }
    Ok(spec)
}

fn run(cli: &Cli) -> Result<(), Failure> {
    if let Command::Selftest { inject } = &cli.command {
        let results = cmd_selftest(*inject);
        for r in &results {
            println!("{r}");
        }
        let failed = results.iter().filter(|r| !r.passed).count();
        println!("{} checks, {failed} failed", results.len());
        return if failed == 0 { Ok(()) } else { Err(Failure::Selftest) };
    }

    let spec = load_spec(cli).map_err(Failure::Usage)?;
    match &cli.command {
        Command::Simulate { .. } => {
            let m = cmd_simulate(&spec).map_err(Failure::Data)?;
            let bursts: usize = m.sequences.iter().map(|s| s.bursts.len()).sum();
            println!(
                "simulated {} sequences, {bursts} nano-bursts into {}",
                m.sequences.len(),
                spec.out.display()
            );
        }
        Command::Reconstruct => {
            let m = cmd_reconstruct(&spec).map_err(Failure::Data)?;
            let frames: usize = m.configs.iter().flat_map(|c| &c.sequences).map(|s| s.frames.len()).sum();
            println!("wrote {frames} reconstructions for {} configs", m.configs.len());
        }
        Command::Evaluate => {
            let report = cmd_evaluate(&spec).map_err(Failure::Data)?;
            print!("{}", quanta_core::bench::evaluate::summary_table(&report));
        }
        Command::Selftest { .. } => unreachable!(),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = match cli.threads {
        Some(0) => Err(Failure::Usage(anyhow::anyhow!("--threads must be at least 1"))),
        Some(n) => match rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .context("building the thread pool")
        {
            Ok(pool) => pool.install(|| run(&cli)),
            Err(e) => Err(Failure::Data(e)),
        },
        None => run(&cli),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_DATA)
        }
        Err(Failure::Selftest) => ExitCode::from(EXIT_SELFTEST),
    }
}
