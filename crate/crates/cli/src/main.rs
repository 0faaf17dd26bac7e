//! `modkam`: batch front end for the modulus, regularity, kernel, Diophantine and KAM analyses.

mod commands;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use modkam::kam::{BuiltinKind, RunConfig};
use modkam::Error;
use serde::de::DeserializeOwned;

use commands::Outcome;

#[derive(Debug, Parser)]
#[command(name = "modkam", version, about = "Moduli of continuity, smoothing kernels and a desk-scale KAM iteration")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Input document (JSON, or TOML when the extension is `.toml`).
    #[arg(long, global = true)]
    input: Option<PathBuf>,
    /// Output file; without it the data goes to stdout and the summary to stderr.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Worker threads for the data-parallel parts.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    /// Seed for randomized inputs.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Print the structured diagnostic on failure as well.
    #[arg(short, long, global = true)]
    verbose: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Validity, semi separability, weak homogeneity and concavity of a modulus.
    Modcheck,
    /// Dini-type integral at order k and exponent tau.
    Dini,
    /// Critical exponents k1*, k2*.
    Kstar,
    /// Remaining modulus from the balance equation.
    Remaining,
    /// Kernel moments or smoothing-error scaling.
    JacksonBench,
    /// Diophantine certification of a frequency vector.
    Dio,
    /// Full KAM run (defaults to the log-Hölder example).
    KamRun,
    /// Regularity estimated from measured deltas.
    Regularity,
}

enum Failure {
    /// Exit 2.
    Usage(String),
    /// Exit 1, optionally with data to write.
    Analysis { message: String, data: Option<(serde_json::Value, String)> },
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Argument(_) | Error::Domain(_) => Failure::Usage(e.to_string()),
            other => Failure::Analysis { message: other.to_string(), data: None },
        }
    }
}

fn read_input<T: DeserializeOwned>(path: Option<&Path>) -> Result<T, Failure> {
    let path = path.ok_or_else(|| Failure::Usage("--input is required for this subcommand".into()))?;
    parse_file(path)
}

fn read_or_default<T: DeserializeOwned>(path: Option<&Path>, default: T) -> Result<T, Failure> {
    match path {
        Some(p) => parse_file(p),
        None => Ok(default),
    }
}

fn parse_file<T: DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))?;
    let is_toml = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("toml"));
    if is_toml {
        toml::from_str(&text).map_err(|e| Failure::Usage(format!("schema error in {}: {e}", path.display())))
    } else {
        serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("schema error in {}: {e}", path.display())))
    }
}

fn render(json: &serde_json::Value, csv: &str, format: Format) -> String {
    match format {
        Format::Json => {
            let mut s = serde_json::to_string_pretty(json).unwrap_or_else(|_| "null".into());
            s.push('\n');
            s
        }
        Format::Csv => csv.to_string(),
    }
}

fn emit(cli: &Cli, data: &str, summary: &str) -> Result<(), Failure> {
    match &cli.output {
        Some(p) => {
            fs::write(p, data).map_err(|e| Failure::Usage(format!("cannot write {}: {e}", p.display())))?;
            println!("{summary}");
        }
        None => {
            print!("{data}");
            eprintln!("{summary}");
        }
    }
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<Outcome, Failure> {
    let input = cli.input.as_deref();
    let out = match cli.command {
        Command::Modcheck => commands::modcheck(read_input(input)?)?,
        Command::Dini => commands::dini(read_input(input)?)?,
        Command::Kstar => commands::kstar(read_input(input)?)?,
        Command::Remaining => commands::remaining(read_input(input)?)?,
        Command::JacksonBench => commands::jackson_bench(read_or_default(input, commands::JacksonInput::default())?, cli.seed)?,
        Command::Dio => commands::dio(read_input(input)?)?,
        Command::Regularity => commands::regularity_cmd(read_input(input)?)?,
        Command::KamRun => {
            let cfg: RunConfig = read_or_default(input, RunConfig::example(BuiltinKind::LogHoelderExample))?;
            match commands::kam_run(cfg) {
                Ok(o) => o,
                Err(f) => {
                    return Err(match f.error {
                        Error::Argument(_) | Error::Domain(_) => Failure::Usage(f.error.to_string()),
                        e => Failure::Analysis { message: e.to_string(), data: Some((f.json, f.csv)) },
                    })
                }
            }
        }
    };
    Ok(out)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = std::panic::catch_unwind(|| modkam::par::with_threads(cli.threads, || dispatch(&cli)));
    let result = match result {
        Ok(r) => r,
        Err(_) => Err(Failure::Analysis { message: "internal error".into(), data: None }),
    };
    match result {
        Ok(o) => {
            let data = render(&o.json, &o.csv, cli.format);
            if let Err(Failure::Usage(m)) = emit(&cli, &data, &o.summary) {
                eprintln!("error: {m}");
                return ExitCode::from(2);
            }
            ExitCode::from(if o.negative { 1 } else { 0 })
        }
        Err(Failure::Usage(m)) => {
            eprintln!("usage error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Analysis { message, data }) => {
            if let Some((json, csv)) = data {
                if cli.output.is_some() || cli.verbose {
                    let _ = emit(&cli, &render(&json, &csv, cli.format), &format!("failed: {message}"));
                }
            }
            eprintln!("error: {message}");
            ExitCode::from(1)
        }
    }
}
