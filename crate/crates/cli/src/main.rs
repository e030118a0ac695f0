use std::path::PathBuf;
use std::process::ExitCode;

use array_emitters_cli::{exit_code, run, RunOptions, Study};
use clap::Parser;

/// Impurity emitters in subwavelength atom arrays: batch studies with CSV output.
#[derive(Parser, Debug)]
#[command(name = "array-emitters", version)]
struct Cli {
    /// Study to run
    #[arg(value_enum)]
    study: Study,

    /// JSON run configuration
    #[arg(long)]
    config: PathBuf,

    /// Output directory
    #[arg(long, default_value = "out")]
    out: PathBuf,

    /// Worker threads (overrides ARRAY_EMITTERS_THREADS and the config)
    #[arg(long)]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let opts = RunOptions { study: Some(cli.study), config: cli.config, out: cli.out, threads: cli.threads };
    match run(&opts) {
        Ok(m) => {
            let bad = m.cells.iter().filter(|c| c.status != "ok").count();
            println!("{}: {} cells ({} not ok), wrote {}", m.study, m.cells.len(), bad, m.outputs.join(", "));
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
