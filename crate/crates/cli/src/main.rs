use std::io::{self, Write};
use std::path::Path;
use std::process::ExitCode;

use clap::Parser;
use ebsde_cli::{default_path, run, write_report, CliError, RunConfig};

fn main() -> ExitCode {
    let config = RunConfig::parse();
    match execute(&config) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn execute(config: &RunConfig) -> Result<(), CliError> {
    let report = run(config)?;
    let to_stdout = config.out.as_deref() == Some(Path::new("-"));
    if to_stdout {
        let mut out = io::stdout().lock();
        out.write_all(report.to_json().as_bytes())
            .map_err(|e| CliError::compute(format!("cannot write report: {}", e)))?;
        for line in &report.summary {
            eprintln!("{}", line);
        }
        return Ok(());
    }
    let path = config
        .out
        .clone()
        .unwrap_or_else(|| default_path(config.command.name()));
    write_report(&report, &path)?;
    for line in &report.summary {
        println!("{}", line);
    }
    if config.verbose > 0 {
        println!("report written to {}", path.display());
    }
    Ok(())
}
