//! `key=value` config files, spliced into the argument list ahead of the
//! command-line flags so that flags given on the command line win.

use std::ffi::OsString;
use std::path::Path;

use anyhow::{bail, Context, Result};
use clap::{ArgAction, Command};

#[derive(Debug, PartialEq)]
pub struct Entry {
    pub line: usize,
    pub key: String,
    pub value: String,
}

/// Parses `key=value` lines; `#` starts a comment, blank lines are skipped.
pub fn parse(text: &str) -> Result<Vec<Entry>> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let Some((k, v)) = body.split_once('=') else {
            bail!("config line {line}: expected key=value, got {raw:?}");
        };
        let key = k.trim().replace('_', "-");
        if key.is_empty() {
            bail!("config line {line}: empty key");
        }
        out.push(Entry {
            line,
            key,
            value: v.trim().to_string(),
        });
    }
    Ok(out)
}

/// Turns entries into flags for `sub`, rejecting keys it does not accept.
pub fn to_flags(entries: &[Entry], sub: &Command) -> Result<Vec<OsString>> {
    let mut flags = Vec::new();
    for e in entries {
        let Some(arg) = sub
            .get_arguments()
            .find(|a| a.get_long() == Some(e.key.as_str()))
        else {
            bail!(
                "config line {}: unknown key {:?} for `{}`",
                e.line,
                e.key,
                sub.get_name()
            );
        };
        if e.key == "config" {
            bail!(
                "config line {}: config files cannot include other config files",
                e.line
            );
        }
        match arg.get_action() {
            ArgAction::SetTrue => match e.value.as_str() {
                "true" | "yes" | "1" => flags.push(format!("--{}", e.key).into()),
                "false" | "no" | "0" => {}
                other => bail!(
                    "config line {}: {:?} expects true or false, got {other:?}",
                    e.line,
                    e.key
                ),
            },
            _ => flags.push(format!("--{}={}", e.key, e.value).into()),
        }
    }
    Ok(flags)
}

fn config_path(args: &[OsString]) -> Option<OsString> {
    let mut it = args.iter();
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            return it.next().cloned();
        }
        if let Some(rest) = s.strip_prefix("--config=") {
            return Some(rest.into());
        }
    }
    None
}

/// Inserts the flags from `--config FILE`, if present, right after the subcommand name.
pub fn splice(args: Vec<OsString>, root: &Command) -> Result<Vec<OsString>> {
    let Some(path) = config_path(&args) else {
        return Ok(args);
    };
    let Some(pos) = args
        .iter()
        .skip(1)
        .position(|a| root.find_subcommand(a.to_string_lossy().as_ref()).is_some())
        .map(|p| p + 1)
    else {
        return Ok(args);
    };
    let sub = root
        .find_subcommand(args[pos].to_string_lossy().as_ref())
        .expect("subcommand located above");
    let text = std::fs::read_to_string(Path::new(&path))
        .with_context(|| format!("reading config file {}", Path::new(&path).display()))?;
    // Keys also given on the command line are dropped so that list-valued
    // flags are replaced rather than appended to.
    let given: Vec<String> = args[pos + 1..]
        .iter()
        .filter_map(|a| {
            let s = a.to_string_lossy();
            s.strip_prefix("--")
                .map(|k| k.split('=').next().unwrap_or(k).to_string())
        })
        .collect();
    let entries: Vec<Entry> = parse(&text)?
        .into_iter()
        .filter(|e| !given.contains(&e.key))
        .collect();
    let flags = to_flags(&entries, sub)?;
    let mut out = args[..=pos].to_vec();
    out.extend(flags);
    out.extend_from_slice(&args[pos + 1..]);
    Ok(out)
}
