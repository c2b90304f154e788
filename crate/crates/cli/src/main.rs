use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use koopman_pe::{run, Command, Options, Threads};

#[derive(Parser)]
#[command(name = "koopman-pe", version, about = "Koopman models and persistence-of-excitation certificates")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,

    /// JSON config file (comments allowed); `.json` may be omitted
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Overrides the seed in the config
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Remove the mean before spectral analysis
    #[arg(long, global = true)]
    center: bool,

    /// Worker threads (defaults to the available cores)
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// Integrate a vector field and write trajectory CSVs
    Simulate,
    /// Fit an eDMD model from trajectory CSVs
    Fit,
    /// Roll a fitted model forward
    Predict,
    /// Certify persistence of excitation of recorded signals
    Pe,
    /// Draw initial conditions until the lifted data is rich enough
    Design,
    /// Train in one region, test in another
    Experiment,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("KOOPMAN_PE_LOG", "warn")).init();
    let Some(config) = cli.config else {
        eprintln!("error: --config is required");
        return ExitCode::from(2);
    };
    let cmd = match cli.command {
        Cmd::Simulate => Command::Simulate,
        Cmd::Fit => Command::Fit,
        Cmd::Predict => Command::Predict,
        Cmd::Pe => Command::Pe,
        Cmd::Design => Command::Design,
        Cmd::Experiment => Command::Experiment,
    };
    let opts = Options {
        config,
        out: cli.out,
        seed: cli.seed,
        center: cli.center,
        threads: cli.threads.map_or_else(Threads::available, Threads::new),
    };
    match run(cmd, &opts) {
        Ok(files) => {
            for f in files {
                println!("{}  {}", f.sha256, opts.out.join(&f.path).display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
