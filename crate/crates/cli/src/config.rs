//! `key = value` configuration files, spliced into the argument list as
//! long flags right after the subcommand name so that later command-line
//! flags override them.

use std::ffi::OsString;
use std::fs;
use std::path::Path;

use clap::CommandFactory;

use crate::cli::Cli;
use crate::error::{usage, CliError, CliResult};

/// Path given by `--config FILE` or `--config=FILE`, if any.
fn config_path(args: &[OsString]) -> CliResult<Option<OsString>> {
    let mut found = None;
    let mut iter = args.iter().skip(1);
    while let Some(arg) = iter.next() {
        let s = arg.to_string_lossy();
        if s == "--" {
            break;
        }
        if s == "--config" {
            found = Some(iter.next().cloned().ok_or_else(|| usage("--config needs a file"))?);
        } else if let Some(v) = s.strip_prefix("--config=") {
            found = Some(OsString::from(v));
        }
    }
    Ok(found)
}

/// Index of the subcommand name: the first argument that is neither the
/// global `--config` option nor its value.
fn subcommand_index(args: &[OsString]) -> Option<usize> {
    let mut i = 1;
    while i < args.len() {
        let s = args[i].to_string_lossy();
        if s == "--config" {
            i += 2;
        } else if s.starts_with("--config=") {
            i += 1;
        } else if s.starts_with('-') {
            return None;
        } else {
            return Some(i);
        }
    }
    None
}

/// Parses `key = value` lines; `#` starts a comment. Keys may use `_` or `-`.
pub fn parse_config(text: &str) -> CliResult<Vec<(String, String)>> {
    let mut entries = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| usage(format!("config line {}: expected `key = value`, got {raw:?}", n + 1)))?;
        let key = key.trim().replace('_', "-");
        if key.is_empty() {
            return Err(usage(format!("config line {}: empty key", n + 1)));
        }
        if key == "config" {
            return Err(usage(format!("config line {}: config files cannot nest", n + 1)));
        }
        entries.push((key, value.trim().to_string()));
    }
    Ok(entries)
}

/// Turns entries into flags for `subcommand`. Switches take `true`/`false`;
/// unknown keys pass through as flags and are rejected by the parser.
fn entries_to_flags(subcommand: &str, entries: &[(String, String)]) -> CliResult<Vec<OsString>> {
    let cmd = Cli::command();
    let sub = cmd.find_subcommand(subcommand);
    let mut flags = Vec::new();
    for (key, value) in entries {
        let is_switch = sub
            .and_then(|s| s.get_arguments().find(|a| a.get_long() == Some(key.as_str())))
            .is_some_and(|a| !a.get_action().takes_values());
        if is_switch {
            match value.as_str() {
                "true" => flags.push(OsString::from(format!("--{key}"))),
                "false" => {}
                other => return Err(usage(format!("config key {key}: expected true or false, got {other:?}"))),
            }
        } else {
            flags.push(OsString::from(format!("--{key}")));
            flags.push(OsString::from(value));
        }
    }
    Ok(flags)
}

/// The argument list with any config file entries spliced in.
pub fn expand_args(args: Vec<OsString>) -> CliResult<Vec<OsString>> {
    let Some(path) = config_path(&args)? else {
        return Ok(args);
    };
    let Some(sub) = subcommand_index(&args) else {
        return Ok(args);
    };
    let text = fs::read_to_string(Path::new(&path)).map_err(|e| CliError::Core(e.into()))?;
    let entries = parse_config(&text)?;
    let flags = entries_to_flags(&args[sub].to_string_lossy(), &entries)?;
    let mut out = args[..=sub].to_vec();
    out.extend(flags);
    out.extend_from_slice(&args[sub + 1..]);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn os(v: &[&str]) -> Vec<OsString> {
        v.iter().map(OsString::from).collect()
    }

    #[test]
    fn parses_comments_and_underscores() {
        let e = parse_config("# run\nbatch_size = 8\n\nlr=0.1 # fast\n").unwrap();
        assert_eq!(e, vec![("batch-size".into(), "8".into()), ("lr".into(), "0.1".into())]);
        assert!(parse_config("no equals sign").is_err());
    }

    #[test]
    fn finds_subcommand_after_global_config() {
        let a = os(&["vrnmt", "--config", "x.cfg", "train", "--lr", "1"]);
        assert_eq!(subcommand_index(&a), Some(3));
        assert_eq!(config_path(&a).unwrap(), Some(OsString::from("x.cfg")));
        let b = os(&["vrnmt", "train", "--config=y.cfg"]);
        assert_eq!(subcommand_index(&b), Some(1));
        assert_eq!(config_path(&b).unwrap(), Some(OsString::from("y.cfg")));
    }

    #[test]
    fn switches_become_bare_flags() {
        let e = vec![("smooth".to_string(), "true".to_string()), ("case-sensitive".into(), "false".into()), ("n".into(), "2".into())];
        assert_eq!(entries_to_flags("evaluate", &e).unwrap(), os(&["--smooth", "--n", "2"]));
        let bad = vec![("smooth".to_string(), "yes".to_string())];
        assert!(entries_to_flags("evaluate", &bad).is_err());
    }
}
