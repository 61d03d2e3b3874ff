//! `harnack` command line: every verification pipeline as a subcommand.
//!
//! Exit codes: `0` all checks pass, `1` a check failed, `2` usage or
//! configuration error. Outputs go to `--out`, else `$HARNACK_OUT`, else
//! `./harnack-out`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Arg, ArgAction, ArgMatches, Command};
use thiserror::Error;

pub mod commands;
pub mod config;

use config::Config;

pub const OUT_ENV: &str = "HARNACK_OUT";
pub const DEFAULT_OUT: &str = "harnack-out";
pub const COMMANDS: [&str; 6] = ["eigen", "sweep", "certify", "solve", "fermi-demo", "report"];

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("{0}")]
    Failed(String),
    #[error("io error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}

/// Result of one subcommand.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub pass: bool,
    pub files: Vec<PathBuf>,
    pub summary: String,
}

fn about(command: &str) -> &'static str {
    match command {
        "eigen" => "trace, auxiliary and Hardy eigenvalues; writes eigen.csv",
        "sweep" => "epsilon-stability sweep of Hölder seminorms; writes sweep.csv, verdict.txt, sweep.dat",
        "certify" => "Phi, v and gamma certificates; writes certify.txt",
        "solve" => "manufactured degenerate problem with a convergence study; writes solve.csv and field.csv",
        "fermi-demo" => "ratio estimates near a circle in Fermi coordinates; writes fermi_*.csv and fermi_verdict.txt",
        _ => "merges the pass lines of earlier outputs; writes summary.csv",
    }
}

fn cli() -> Command {
    let mut cmd = Command::new("harnack")
        .version(env!("CARGO_PKG_VERSION"))
        .about("Numerical verification harness for degenerate and singular weighted elliptic problems")
        .subcommand_required(true)
        .arg_required_else_help(true);
    for name in COMMANDS {
        let mut sub = Command::new(name)
            .about(about(name))
            .arg(Arg::new("config").long("config").value_name("FILE").help("key=value configuration file"))
            .arg(Arg::new("out").long("out").value_name("DIR").help("output directory"));
        for k in config::schema(name) {
            sub = sub.arg(
                Arg::new(k.name)
                    .long(k.name.replace('_', "-"))
                    .value_name("VALUE")
                    .action(ArgAction::Set)
                    .allow_hyphen_values(true)
                    .help(format!("{} [default: {}]", k.doc, k.default)),
            );
        }
        cmd = cmd.subcommand(sub);
    }
    cmd
}

fn flags(name: &str, m: &ArgMatches) -> BTreeMap<String, String> {
    config::schema(name)
        .iter()
        .filter_map(|k| m.get_one::<String>(k.name).map(|v| (k.name.to_string(), v.clone())))
        .collect()
}

fn out_dir(m: &ArgMatches) -> PathBuf {
    m.get_one::<String>("out")
        .map(PathBuf::from)
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

/// Parses `argv` (including the program name) and runs the subcommand.
pub fn execute(argv: &[String]) -> Result<Outcome, CliError> {
    let m = cli().try_get_matches_from(argv).map_err(|e| CliError::Usage(e.to_string()))?;
    let (name, sub) = m.subcommand().ok_or_else(|| CliError::Usage("missing subcommand".into()))?;
    let file = match sub.get_one::<String>("config") {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::Usage(format!("cannot read {p}: {e}")))?;
            config::parse_file(&text)?
        }
        None => BTreeMap::new(),
    };
    let cfg = Config::resolve(name, file, flags(name, sub))?;
    let out = out_dir(sub);
    commands::dispatch(&cfg, &out)
}

/// Runs the command line and returns the process exit code.
pub fn run(argv: &[String]) -> i32 {
    if let Err(e) = cli().try_get_matches_from(argv) {
        use clap::error::ErrorKind;
        let code = match e.kind() {
            ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
            ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => 2,
            _ => 2,
        };
        let _ = e.print();
        return code;
    }
    match execute(argv) {
        Ok(o) => {
            println!("{}", o.summary);
            for f in &o.files {
                println!("wrote {}", f.display());
            }
            println!("{}", if o.pass { "PASS" } else { "FAIL" });
            if o.pass { 0 } else { 1 }
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub(crate) fn write(dir: &Path, name: &str, contents: &str) -> Result<PathBuf, CliError> {
    std::fs::create_dir_all(dir).map_err(|source| CliError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|source| CliError::Io {
        path: path.clone(),
        source,
    })?;
    Ok(path)
}
