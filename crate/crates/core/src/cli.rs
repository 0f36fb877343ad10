//! The `sandwich` command line.
//!
//! ```text
//! sandwich fit <config> <data.csv> [--out PATH] [--digits N]
//! sandwich replicate <robust-line|dose-response|standardize> [--seed N] [--out DIR]
//! ```
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error, 4 estimation
//! failure (no convergence), 1 for I/O failures writing results.
//! `SANDWICH_SOLVER_TOL` overrides the default solver tolerance; a
//! `solver.tol` in the config takes precedence over it.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::config::{parse_config, BuildError, ConfigError};
use crate::data::{sha256_hex, Dataset};
use crate::error::Error;
use crate::replicate::{self, Example};
use crate::report::{fit_spec, render_summary, Provenance};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_CONVERGENCE: i32 = 4;

pub const TOL_ENV: &str = "SANDWICH_SOLVER_TOL";
pub const DEFAULT_FIT_OUT: &str = "fit_result.json";

#[derive(Debug, Parser)]
#[command(name = "sandwich", version, about = "M-estimation with empirical sandwich variance")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit the model described by a config file to a CSV dataset.
    Fit {
        config: PathBuf,
        data: PathBuf,
        /// Where to write the JSON result document.
        #[arg(long, default_value = DEFAULT_FIT_OUT)]
        out: PathBuf,
        /// Decimals shown in the summary table.
        #[arg(long, default_value_t = 4)]
        digits: usize,
    },
    /// Regenerate one of the worked examples.
    Replicate {
        #[arg(value_parser = clap::builder::PossibleValuesParser::new(["robust-line", "dose-response", "standardize"]))]
        example: String,
        /// Seed for the simulated examples.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory; defaults to the example name.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code. Normal output goes to `stdout`, diagnostics to
/// `stderr`.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let text = e.render().to_string();
            let _ = if code == 0 {
                write!(stdout, "{text}")
            } else {
                write!(stderr, "{text}")
            };
            return code;
        }
    };
    let env_tol = std::env::var(TOL_ENV).ok();
    match cli.command {
        Command::Fit {
            config,
            data,
            out,
            digits,
        } => cmd_fit(&config, &data, &out, digits, env_tol.as_deref(), stdout, stderr),
        Command::Replicate { example, seed, out } => {
            let example: Example = example.parse().expect("validated by clap");
            let dir = out.unwrap_or_else(|| PathBuf::from(example.as_str()));
            cmd_replicate(example, seed, &dir, stdout, stderr)
        }
    }
}

fn parse_env_tol(value: Option<&str>) -> Result<Option<f64>, ConfigError> {
    let Some(v) = value else { return Ok(None) };
    match v.trim().parse::<f64>() {
        Ok(t) if t.is_finite() && t > 0.0 => Ok(Some(t)),
        _ => Err(ConfigError {
            line: None,
            key: Some(TOL_ENV.into()),
            message: format!("'{v}' is not a positive number"),
        }),
    }
}

/// Exit code for an estimation failure.
fn failure_code(e: &Error) -> i32 {
    match e {
        Error::NoConvergence { .. } | Error::SingularJacobian { .. } | Error::NonFiniteEvaluation { .. } => {
            EXIT_CONVERGENCE
        }
        _ => EXIT_DATA,
    }
}

pub fn cmd_fit(
    config_path: &Path,
    data_path: &Path,
    out_path: &Path,
    digits: usize,
    env_tol: Option<&str>,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> i32 {
    let config_text = match std::fs::read_to_string(config_path) {
        Ok(t) => t,
        Err(e) => {
            let _ = writeln!(stderr, "config error: cannot read {}: {e}", config_path.display());
            return EXIT_CONFIG;
        }
    };
    let spec = match parse_config(&config_text) {
        Ok(s) => s,
        Err(e) => {
            let _ = writeln!(stderr, "config error: {}: {e}", config_path.display());
            return EXIT_CONFIG;
        }
    };
    let env_tol = match parse_env_tol(env_tol) {
        Ok(t) => t,
        Err(e) => {
            let _ = writeln!(stderr, "config error: {e}");
            return EXIT_CONFIG;
        }
    };
    let data_bytes = match std::fs::read(data_path) {
        Ok(b) => b,
        Err(e) => {
            let _ = writeln!(stderr, "data error: cannot read {}: {e}", data_path.display());
            return EXIT_DATA;
        }
    };
    let data = match std::str::from_utf8(&data_bytes)
        .map_err(|_| "file is not UTF-8".to_string())
        .and_then(|text| Dataset::from_csv_str(text).map_err(|e| e.to_string()))
    {
        Ok(d) => d,
        Err(e) => {
            let _ = writeln!(stderr, "data error: {}: {e}", data_path.display());
            return EXIT_DATA;
        }
    };

    let provenance = Provenance {
        config_sha256: Some(sha256_hex(config_text.as_bytes())),
        data_sha256: Some(sha256_hex(&data_bytes)),
        seed: None,
    };
    let cfg = spec.solver_config(env_tol);
    let outcome = match fit_spec(&spec, &data, &cfg, provenance) {
        Ok(o) => o,
        Err(BuildError::Data(e)) => {
            let _ = writeln!(stderr, "data error: {}: {e}", data_path.display());
            return EXIT_DATA;
        }
        Err(BuildError::Model(e)) => {
            let _ = writeln!(stderr, "data error: {e}");
            return EXIT_DATA;
        }
    };

    if let Err(e) = std::fs::write(out_path, outcome.document.to_json()) {
        let _ = writeln!(stderr, "error: cannot write {}: {e}", out_path.display());
        return EXIT_IO;
    }
    let _ = write!(stdout, "{}", render_summary(&outcome.document, digits));
    let _ = writeln!(stdout, "results written to {}", out_path.display());
    match &outcome.error {
        None => EXIT_OK,
        Some(e) => {
            let _ = writeln!(stderr, "estimation failed: {e}");
            failure_code(e)
        }
    }
}

pub fn cmd_replicate(
    example: Example,
    seed: Option<u64>,
    out_dir: &Path,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> i32 {
    let replication = match replicate::run(example, seed) {
        Ok(r) => r,
        Err(e) => {
            let _ = writeln!(stderr, "{example}: {e}");
            return match &e {
                replicate::ReplicateError::Fit { source, .. } => failure_code(source),
                replicate::ReplicateError::Build(_) => EXIT_DATA,
            };
        }
    };
    if let Err(e) = replication.write_to(out_dir) {
        let _ = writeln!(stderr, "error: cannot write to {}: {e}", out_dir.display());
        return EXIT_IO;
    }
    let _ = write!(stdout, "{}", replication.summary);
    for (name, _) in &replication.files {
        let _ = writeln!(stdout, "wrote {}", out_dir.join(name).display());
    }
    EXIT_OK
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn env_tolerance() {
        assert_eq!(parse_env_tol(None).unwrap(), None);
        assert_eq!(parse_env_tol(Some("1e-6")).unwrap(), Some(1e-6));
        assert!(parse_env_tol(Some("-1")).is_err());
        assert!(parse_env_tol(Some("fast")).is_err());
    }

    #[test]
    fn usage_errors_exit_2() {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        assert_eq!(run(["sandwich", "frobnicate"], &mut out, &mut err), 2);
        assert_eq!(run(["sandwich", "replicate", "no-such-example"], &mut out, &mut err), 2);
        let mut out = Vec::new();
        assert_eq!(run(["sandwich", "--version"], &mut out, &mut err), 0);
        assert!(String::from_utf8(out).unwrap().starts_with("sandwich "));
    }
}
