//! `--config` files: `key=value` lines naming long flags without the
//! leading dashes. Values from the command line win; keys that belong to a
//! different subcommand are ignored.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use clap::CommandFactory;

use crate::error::{CliError, Result};
use crate::Cli;

/// Global options that consume the following argument.
const GLOBAL_VALUED: [&str; 5] = ["--out", "--seed", "--jobs", "--format", "--config"];

pub fn parse_config(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::input(format!("line {}: expected key=value", n + 1)))?;
        let k = k.trim().trim_start_matches("--");
        if k.is_empty() {
            return Err(CliError::input(format!("line {}: empty key", n + 1)));
        }
        out.push((k.to_string(), v.trim().to_string()));
    }
    Ok(out)
}

fn config_path(args: &[String]) -> Option<String> {
    let mut it = args.iter().skip(1);
    while let Some(a) = it.next() {
        if a == "--config" {
            return it.next().cloned();
        }
        if let Some(p) = a.strip_prefix("--config=") {
            return Some(p.to_string());
        }
    }
    None
}

fn subcommand_name(args: &[String]) -> Option<String> {
    let names: BTreeSet<String> = Cli::command()
        .get_subcommands()
        .map(|c| c.get_name().to_string())
        .collect();
    let mut it = args.iter().skip(1);
    while let Some(a) = it.next() {
        if GLOBAL_VALUED.contains(&a.as_str()) {
            it.next();
        } else if names.contains(a) {
            return Some(a.clone());
        }
    }
    None
}

fn long_flags(cmd: &clap::Command) -> BTreeSet<String> {
    cmd.get_arguments()
        .filter_map(|a| a.get_long().map(str::to_string))
        .collect()
}

fn given(args: &[String], key: &str) -> bool {
    let flag = format!("--{key}");
    args.iter()
        .any(|a| *a == flag || a.starts_with(&format!("{flag}=")))
}

/// Returns `args` extended with the config file's entries that the command
/// line does not already set. `true`/`false` values toggle switches.
pub fn merge_config(args: Vec<String>) -> Result<Vec<String>> {
    let Some(path) = config_path(&args) else {
        return Ok(args);
    };
    let text = fs::read_to_string(&path).map_err(|e| CliError::from(e).at(Path::new(&path)))?;
    let entries = parse_config(&text).map_err(|e| e.at(Path::new(&path)))?;
    let root = Cli::command();
    let global = long_flags(&root);
    let sub = subcommand_name(&args);
    let local = sub
        .as_deref()
        .and_then(|s| root.find_subcommand(s))
        .map(long_flags)
        .unwrap_or_default();
    let any: BTreeSet<String> = root.get_subcommands().flat_map(long_flags).collect();
    let mut merged = args.clone();
    for (k, v) in entries {
        if k == "config" {
            continue;
        }
        if !global.contains(&k) && !any.contains(&k) {
            return Err(CliError::input(format!("unknown config key `{k}`")).at(Path::new(&path)));
        }
        if !global.contains(&k) && !local.contains(&k) {
            continue;
        }
        if given(&args, &k) {
            continue;
        }
        match v.as_str() {
            "true" => merged.push(format!("--{k}")),
            "false" => {}
            _ => {
                merged.push(format!("--{k}"));
                merged.push(v);
            }
        }
    }
    Ok(merged)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_dashes() {
        let c = parse_config("# comment\n\nseed = 3\n--format=json\n").unwrap();
        assert_eq!(
            c,
            vec![
                ("seed".into(), "3".into()),
                ("format".into(), "json".into())
            ]
        );
        assert!(parse_config("seed 3").is_err());
    }

    #[test]
    fn finds_subcommand_after_global_values() {
        let args: Vec<String> = ["benchirt", "--out", "fit", "simulate", "x"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        assert_eq!(subcommand_name(&args).as_deref(), Some("simulate"));
    }
}
