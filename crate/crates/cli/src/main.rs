use std::process::ExitCode;

use clap::Parser;
use specdiff::{Cli, Command};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.run() {
        Ok(paths) => {
            // single-report commands also echo their JSON
            if matches!(cli.command, Command::Couple { .. } | Command::Analyze) {
                for p in &paths {
                    if let Ok(text) = std::fs::read_to_string(p) {
                        print!("{text}");
                    }
                }
            }
            for p in paths {
                eprintln!("wrote {}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
