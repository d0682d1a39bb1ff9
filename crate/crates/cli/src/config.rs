//! Key-value config files. Each `key = value` line becomes `--key=value`
//! placed before the command-line flags, so that explicit flags win.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use clap::CommandFactory;

use crate::args::Cli;
use crate::error::{CliError, Result};

static ACTIVE: OnceLock<PathBuf> = OnceLock::new();

/// Config file of this invocation, if any.
pub fn active() -> Option<&'static Path> {
    ACTIVE.get().map(PathBuf::as_path)
}

fn config_path(argv: &[OsString]) -> Option<PathBuf> {
    let mut it = argv.iter().skip(1);
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            return it.next().map(PathBuf::from);
        }
        if let Some(v) = s.strip_prefix("--config=") {
            return Some(PathBuf::from(v));
        }
    }
    None
}

fn subcommand_index(argv: &[OsString]) -> Option<usize> {
    let mut i = 1;
    while i < argv.len() {
        let s = argv[i].to_string_lossy();
        if s == "--config" {
            i += 2;
            continue;
        }
        if !s.starts_with('-') {
            return Some(i);
        }
        i += 1;
    }
    None
}

/// Parses `key = value` lines; `#` starts a comment line.
pub fn parse_entries(text: &str) -> Result<Vec<(usize, String, String)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| CliError::usage(format!("line {}: expected `key = value`", i + 1)))?;
        let key = key.trim().trim_start_matches("--").replace('_', "-");
        let value = value.trim().trim_matches('"').to_string();
        if key.is_empty() {
            return Err(CliError::usage(format!("line {}: empty key", i + 1)));
        }
        out.push((i + 1, key, value));
    }
    Ok(out)
}

fn flags_for(path: &Path, subcommand: &str) -> Result<Vec<OsString>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::usage(format!("config file {}: {e}", path.display())))?;
    let cli = Cli::command();
    let Some(sub) = cli.find_subcommand(subcommand) else {
        return Ok(Vec::new());
    };
    let mut flags = Vec::new();
    for (line, key, value) in parse_entries(&text).map_err(|e| e.context(path.display()))? {
        let fail = |msg: String| CliError::usage(format!("{}: line {line}: {msg}", path.display()));
        if key == "config" {
            return Err(fail("config files cannot be nested".into()));
        }
        let arg = sub
            .get_arguments()
            .find(|a| a.get_long() == Some(key.as_str()))
            .ok_or_else(|| fail(format!("`{key}` is not an option of `{subcommand}`")))?;
        if arg.get_action().takes_values() {
            flags.push(OsString::from(format!("--{key}={value}")));
        } else {
            match value.as_str() {
                "true" => flags.push(OsString::from(format!("--{key}"))),
                "false" => {}
                _ => return Err(fail(format!("`{key}` expects true or false"))),
            }
        }
    }
    Ok(flags)
}

/// Inserts config-file flags right after the subcommand name.
pub fn expand_config(mut argv: Vec<OsString>) -> Result<Vec<OsString>> {
    let (Some(path), Some(at)) = (config_path(&argv), subcommand_index(&argv)) else {
        return Ok(argv);
    };
    let name = argv[at].to_string_lossy().into_owned();
    let flags = flags_for(&path, &name)?;
    let _ = ACTIVE.set(path);
    argv.splice(at + 1..at + 1, flags);
    Ok(argv)
}
