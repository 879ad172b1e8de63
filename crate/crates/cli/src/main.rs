use std::io;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use cdcirc::quench::Engine;
use cdcirc::verify::Suite;
use cdcirc_cli::config::RunConfig;
use cdcirc_cli::{
    classify_cmd, compile_cmd, exit_code, quench_cmd, resolve_out_dir, verify_cmd, EXIT_OK, EXIT_USAGE, OUT_DIR_ENV,
};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "cdcirc", version, about = "Constant-depth circuits for 1D spin-chain time evolution")]
struct Cli {
    /// Worker threads for synthesis and simulation (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Report whether the configured model has a constant-depth circuit.
    Classify { config: PathBuf },
    /// Synthesize one circuit per time step and write QASM plus a JSONL report.
    Compile {
        config: PathBuf,
        /// Overrides `run.steps`.
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long, help = out_help())]
        out: Option<PathBuf>,
    },
    /// Simulate a quench and write the observable as CSV.
    Quench {
        config: PathBuf,
        /// exactReference, constantDepth or naiveTrotter; overrides `run.engine`.
        #[arg(long)]
        engine: Option<Engine>,
        /// Overrides `run.steps`.
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long, help = out_help())]
        out: Option<PathBuf>,
    },
    /// Run a randomized property battery.
    Verify {
        /// lemma1, conjecture, mirror, downfold or appendixA.
        #[arg(long)]
        suite: Suite,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, help = out_help())]
        out: Option<PathBuf>,
    },
}

fn out_help() -> String {
    format!("Output directory (default: config `output.dir`, then ${OUT_DIR_ENV}, then ./out)")
}

fn run(cmd: Command) -> cdcirc::Result<u8> {
    let stdout = &mut io::stdout().lock();
    let load = |p: &Path| RunConfig::load(p);
    match cmd {
        Command::Classify { config } => classify_cmd(&load(&config)?, stdout),
        Command::Compile { config, steps, out } => {
            let cfg = load(&config)?;
            let out = resolve_out_dir(out.as_deref(), Some(&cfg));
            compile_cmd(&cfg, steps.unwrap_or(cfg.run.steps), &out, stdout)
        }
        Command::Quench { config, engine, steps, out } => {
            let cfg = load(&config)?;
            let out = resolve_out_dir(out.as_deref(), Some(&cfg));
            quench_cmd(&cfg, engine, steps, &out, stdout)
        }
        Command::Verify { suite, trials, seed, out } => {
            verify_cmd(suite, trials, seed, &resolve_out_dir(out.as_deref(), None), stdout)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { EXIT_OK });
        }
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(j) = cli.jobs {
        pool = pool.num_threads(j);
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
    };
    match pool.install(|| run(cli.command)) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
