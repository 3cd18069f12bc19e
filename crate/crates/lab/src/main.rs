use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Arg, ArgAction, ArgMatches};
use lfunlab::{dispatch, Command, ConfigFile, LabError, RunConfig};

fn cli() -> clap::Command {
    let general = [
        Arg::new("config")
            .long("config")
            .value_name("FILE")
            .global(true)
            .help("key = value file; flags override it"),
        Arg::new("output")
            .long("output")
            .short('o')
            .value_name("PATH")
            .global(true)
            .help("CSV destination (default <command>.csv)"),
        Arg::new("threads")
            .long("threads")
            .short('j')
            .value_name("N")
            .global(true)
            .help("worker threads"),
    ];
    let mut app = clap::Command::new("lfunlab")
        .about("Numerical checks for Rankin-Selberg second moments")
        .subcommand_required(false)
        .args(general);
    for c in Command::ALL {
        let mut sub = clap::Command::new(c.name()).about(c.about());
        for &(key, kind, default) in c.schema() {
            let mut help = kind.expected().to_string();
            if let Some(d) = default {
                help.push_str(&format!(" [default: {d}]"));
            }
            sub = sub.arg(
                Arg::new(key)
                    .long(key)
                    .value_name(key)
                    .allow_hyphen_values(true)
                    .action(ArgAction::Set)
                    .help(help),
            );
        }
        app = app.subcommand(sub);
    }
    app
}

fn resolve(m: &ArgMatches) -> Result<RunConfig, LabError> {
    let (command, sub) = match m.subcommand() {
        Some((name, sub)) => (Some(Command::parse(name)?), Some(sub)),
        None => (None, None),
    };
    let args = sub.unwrap_or(m);
    let file = match args.get_one::<String>("config") {
        Some(p) => ConfigFile::read(&PathBuf::from(p))?,
        None => ConfigFile::default(),
    };
    let mut flags = Vec::new();
    for key in ["output", "threads"] {
        if let Some(v) = args.get_one::<String>(key) {
            flags.push((key.to_string(), v.clone()));
        }
    }
    if let Some(c) = command {
        for &(key, _, _) in c.schema() {
            if let Some(v) = args.get_one::<String>(key) {
                flags.push((key.to_string(), v.clone()));
            }
        }
    }
    RunConfig::resolve(command, &file, &flags)
}

fn main() -> ExitCode {
    let m = match cli().try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let cfg = match resolve(&m) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("lfunlab: {e}");
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    match dispatch(&cfg) {
        Ok(out) => {
            for c in &out.checks {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            println!("wrote {}", out.path.display());
            if out.passed() {
                ExitCode::SUCCESS
            } else {
                let names: Vec<&str> = out.failures().map(|c| c.name.as_str()).collect();
                eprintln!("lfunlab: tolerance failure in {}", names.join("; "));
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("lfunlab: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
