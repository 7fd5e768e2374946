//! `key = value` config files. Each key is a long flag name of the chosen
//! subcommand (or a global flag); `_` and `-` are interchangeable. A key that
//! also appears on the command line is skipped, so explicit flags win.

use std::path::Path;

use anyhow::{anyhow, bail, Context};
use clap::Command;

pub fn parse_lines(text: &str, path: &Path) -> anyhow::Result<Vec<(String, String)>> {
    let mut out: Vec<(String, String)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| anyhow!("{}:{}: expected key = value", path.display(), i + 1))?;
        let key = k.trim().trim_start_matches("--").replace('_', "-");
        if key.is_empty() {
            bail!("{}:{}: empty key", path.display(), i + 1);
        }
        if out.iter().any(|(seen, _)| *seen == key) {
            bail!("{}:{}: duplicate key '{key}'", path.display(), i + 1);
        }
        out.push((key, v.trim().trim_matches('"').to_string()));
    }
    Ok(out)
}

fn mentioned(tokens: &[String], long: &str) -> bool {
    let flag = format!("--{long}");
    tokens
        .iter()
        .any(|t| *t == flag || t.strip_prefix(&flag).is_some_and(|rest| rest.starts_with('=')))
}

/// Returns `argv` with the file's flags inserted right after the subcommand.
pub fn merge(root: &Command, argv: &[String], path: &Path) -> anyhow::Result<Vec<String>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
    let entries = parse_lines(&text, path)?;
    let (pos, sub) = argv
        .iter()
        .enumerate()
        .skip(1)
        .find_map(|(i, t)| root.find_subcommand(t).map(|s| (i, s)))
        .ok_or_else(|| anyhow!("no subcommand given"))?;
    let mut inserted = Vec::new();
    for (key, value) in entries {
        if key == "config" {
            bail!("{}: a config file cannot name another config file", path.display());
        }
        let arg = sub
            .get_arguments()
            .chain(root.get_arguments())
            .find(|a| a.get_long() == Some(key.as_str()))
            .ok_or_else(|| anyhow!("{}: unknown key '{key}' for {}", path.display(), sub.get_name()))?;
        if mentioned(&argv[1..], &key) {
            continue;
        }
        if arg.get_action().takes_values() {
            inserted.push(format!("--{key}"));
            inserted.push(value);
        } else {
            match value.as_str() {
                "true" => inserted.push(format!("--{key}")),
                "false" => {}
                other => bail!("{}: '{key}' is a switch; use true or false, not '{other}'", path.display()),
            }
        }
    }
    let mut out = argv[..=pos].to_vec();
    out.extend(inserted);
    out.extend_from_slice(&argv[pos + 1..]);
    Ok(out)
}
