use std::process::ExitCode;

use clap::Parser;
use swarmflow_core::cli::{run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = cli.command.resolve().and_then(|cfg| {
        for w in &cfg.warnings {
            eprintln!("warning: {w}");
        }
        run(&cfg)
    });
    match outcome {
        Ok(summary) => {
            for w in summary.warnings.iter().filter(|w| w.starts_with("suite ")) {
                eprintln!("error: {w}");
            }
            print!("{}", summary.render());
            ExitCode::from(summary.exit_code as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
