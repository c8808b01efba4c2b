//! `--config FILE`: `key = value` lines that fill in flags the command line
//! left unset. Keys are flag names without the leading dashes; `#` starts a
//! comment. Boolean flags take `true` or `false`.

use clap::parser::ValueSource;
use clap::{ArgMatches, CommandFactory};
use std::fmt;

#[derive(Debug)]
pub enum ConfigError {
    /// Malformed command line; clap prints it and exits with status 2.
    Usage(clap::Error),
    /// Unreadable or inconsistent config file.
    Invalid(String),
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Usage(e) => write!(f, "{e}"),
            ConfigError::Invalid(m) => f.write_str(m),
        }
    }
}

pub fn parse_file(text: &str) -> Result<Vec<(String, String)>, String> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| format!("config line {}: expected key = value", n + 1))?;
        let (k, v) = (k.trim(), v.trim().trim_matches('"'));
        if k.is_empty() {
            return Err(format!("config line {}: empty key", n + 1));
        }
        out.push((k.trim_start_matches('-').to_string(), v.to_string()));
    }
    Ok(out)
}

/// Returns `argv` extended with `--key value` for every config entry whose
/// flag was not given explicitly.
pub fn merge_config<C: CommandFactory>(mut argv: Vec<String>) -> Result<Vec<String>, ConfigError> {
    // first pass only locates the subcommand and the config path; real
    // validation happens when the merged argv is parsed
    let probe = C::command().ignore_errors(true).try_get_matches_from(&argv);
    let matches = match probe {
        Ok(m) => m,
        Err(e) => return Err(ConfigError::Usage(e)),
    };
    let path = matches
        .subcommand()
        .and_then(|(_, m)| m.get_one::<std::path::PathBuf>("config").cloned())
        .or_else(|| matches.get_one::<std::path::PathBuf>("config").cloned());
    let Some(path) = path else {
        return Ok(argv);
    };
    let text = std::fs::read_to_string(&path)
        .map_err(|e| ConfigError::Invalid(format!("cannot read config {}: {e}", path.display())))?;
    let entries = parse_file(&text).map_err(ConfigError::Invalid)?;

    let root = C::command();
    let (sub_name, sub_matches) = match matches.subcommand() {
        Some((n, m)) => (n.to_string(), m.clone()),
        None => return Ok(argv),
    };
    let sub = root
        .find_subcommand(&sub_name)
        .ok_or_else(|| ConfigError::Invalid(format!("unknown subcommand {sub_name}")))?;
    for (key, value) in entries {
        let id = key.replace('-', "_");
        let arg = sub
            .get_arguments()
            .chain(root.get_arguments())
            .find(|a| a.get_id().as_str() == id && a.get_long().is_some())
            .ok_or_else(|| ConfigError::Invalid(format!("config key {key:?} is not a flag of `{sub_name}`")))?;
        if id == "config" {
            return Err(ConfigError::Invalid("config files cannot include other configs".into()));
        }
        if explicitly_set(&sub_matches, &id) {
            continue;
        }
        let long = format!("--{}", arg.get_long().unwrap());
        if arg.get_action().takes_values() {
            argv.push(long);
            argv.push(value);
        } else {
            match value.as_str() {
                "true" => argv.push(long),
                "false" => {}
                other => return Err(ConfigError::Invalid(format!("config key {key:?}: expected true or false, got {other:?}"))),
            }
        }
    }
    Ok(argv)
}

fn explicitly_set(m: &ArgMatches, id: &str) -> bool {
    m.value_source(id) == Some(ValueSource::CommandLine)
}
