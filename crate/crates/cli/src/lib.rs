//! `dynrecon` command-line front end.

mod commands;
pub mod flags;

use std::ffi::OsString;

use clap::error::ErrorKind;
use dynrecon::io::RunConfig;
use dynrecon::Error;

pub use commands::eval_csv;
pub use flags::{command, flag_keys, subcommands};

/// Short machine-readable tag for an error.
pub fn error_kind(e: &anyhow::Error) -> &'static str {
    match e.downcast_ref::<Error>() {
        Some(Error::Shape(_)) => "shape",
        Some(Error::Domain { .. }) => "domain",
        Some(Error::Param(_)) => "param",
        Some(Error::NonFinite { .. }) => "nonfinite",
        Some(Error::Format { .. }) => "format",
        Some(Error::Config(_)) => "config",
        Some(Error::Io { .. }) => "io",
        None => "internal",
    }
}

fn build_config(sub: &clap::ArgMatches, keys: &[&'static str]) -> anyhow::Result<RunConfig> {
    let mut cfg = match sub.get_one::<String>("config") {
        Some(p) => RunConfig::from_file(p.as_ref())?,
        None => RunConfig::new(),
    };
    for &key in keys {
        if let Some(v) = sub.get_one::<String>(key) {
            cfg.set(key, v)?;
        }
    }
    Ok(cfg)
}

fn dispatch(name: &str, cfg: &RunConfig) -> anyhow::Result<()> {
    match name {
        "phantom" => commands::phantom(cfg),
        "maps" => commands::maps(cfg),
        "mask" => commands::mask(cfg),
        "acquire" => commands::acquire_cmd(cfg),
        "recon" => commands::recon(cfg),
        "train" => commands::train_cmd(cfg),
        "eval" => commands::eval(cfg),
        "export" => commands::export(cfg),
        other => unreachable!("subcommand {other} is not dispatched"),
    }
}

/// Run with `argv` (including the program name) and return the exit code:
/// 0 on success, 2 on usage errors, 1 otherwise.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let matches = match command().try_get_matches_from(argv) {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
        }
    };
    let (name, sub) = matches.subcommand().expect("subcommand is required");
    let keys = subcommands()
        .into_iter()
        .find(|s| s.name == name)
        .expect("known subcommand")
        .keys;
    match build_config(sub, &keys).and_then(|cfg| dispatch(name, &cfg)) {
        Ok(()) => 0,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error[{}]: {msg}", error_kind(&e));
            1
        }
    }
}
