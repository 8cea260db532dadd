use std::process::ExitCode;

use clap::Parser;
use tgmixer::cli::{run, Cli};

fn main() -> ExitCode {
    tgmixer::par::init_threads_from_env();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(summary) => {
            for line in &summary.lines {
                println!("{line}");
            }
            for a in &summary.artifacts {
                println!("wrote {}", a.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
