//! Optional flat `key=value` configuration file.
//!
//! `--config FILE` is removed from the argument list and each line
//! `key = value` becomes `--key=value`, inserted directly after the
//! subcommand so that flags on the command line override it. Blank lines and
//! lines starting with `#` are skipped. Unknown keys surface as clap errors.

use std::fs;

use anyhow::{bail, Context, Result};

const COMMANDS: [&str; 8] = ["test", "test-quantile", "composite", "spec", "spec-quantile", "ar", "bound", "mc"];
const SWITCHES: [&str; 2] = ["estimate", "shortcut"];

pub fn parse_config(text: &str) -> Result<Vec<String>> {
    let mut out = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) =
            line.split_once('=').with_context(|| format!("config line {}: expected key=value", k + 1))?;
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() || !key.chars().all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '-') {
            bail!("config line {}: invalid key {key:?}", k + 1);
        }
        if key == "config" {
            bail!("config line {}: nested config files are not supported", k + 1);
        }
        if SWITCHES.contains(&key) {
            match value {
                "true" => out.push(format!("--{key}")),
                "false" => {}
                _ => bail!("config line {}: {key} must be true or false", k + 1),
            }
        } else {
            out.push(format!("--{key}={value}"));
        }
    }
    Ok(out)
}

/// Replaces `--config FILE` (or `--config=FILE`) by the file's flags.
pub fn expand_config(argv: Vec<String>) -> Result<Vec<String>> {
    let mut rest = Vec::with_capacity(argv.len());
    let mut path = None;
    let mut it = argv.into_iter();
    while let Some(a) = it.next() {
        if a == "--config" {
            path = Some(it.next().context("--config needs a file path")?);
        } else if let Some(p) = a.strip_prefix("--config=") {
            path = Some(p.to_string());
        } else {
            rest.push(a);
        }
    }
    let Some(path) = path else {
        return Ok(rest);
    };
    let text = fs::read_to_string(&path).with_context(|| format!("reading config file {path}"))?;
    let flags = parse_config(&text)?;
    let pos =
        rest.iter().skip(1).position(|a| COMMANDS.contains(&a.as_str())).context("--config given without a command")?
            + 2;
    rest.splice(pos..pos, flags);
    Ok(rest)
}
