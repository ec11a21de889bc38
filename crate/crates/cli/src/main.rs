use std::process::ExitCode;

use barrier_mlmc_cli::{execute, Cli};
use clap::Parser;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(&cli) {
        Ok((report, dir)) => {
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            for line in &report.summary {
                println!("{line}");
            }
            println!("wrote {} files to {}", report.files.len(), dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
