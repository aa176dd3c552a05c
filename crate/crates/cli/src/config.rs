//! `--config` files: `key = value` lines spliced in as flags right after
//! the subcommand, so that flags on the command line, which come later,
//! override them.

use std::ffi::OsString;
use std::fs;
use std::path::PathBuf;

use clap::CommandFactory;

use crate::Cli;

/// Returns the config path named in `args`, if any.
fn config_path(args: &[OsString]) -> Result<Option<PathBuf>, String> {
    let mut found = None;
    let mut it = args.iter().skip(1);
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--" {
            break;
        }
        if s == "--config" {
            match it.next() {
                Some(p) => found = Some(PathBuf::from(p)),
                None => return Err("--config needs a file path".into()),
            }
        } else if let Some(p) = s.strip_prefix("--config=") {
            found = Some(PathBuf::from(p));
        }
    }
    Ok(found)
}

/// Index of the subcommand name in `args`.
fn subcommand_index(args: &[OsString]) -> Option<usize> {
    let mut i = 1;
    while i < args.len() {
        let s = args[i].to_string_lossy();
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

/// Parses `key = value` lines. Blank lines and `#` comments are skipped.
pub fn parse_config(text: &str) -> Result<Vec<(usize, String, String)>, String> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| format!("line {}: expected `key = value`", i + 1))?;
        let key = key.trim().replace('_', "-");
        let value = value.trim().trim_matches('"').to_string();
        if key.is_empty() {
            return Err(format!("line {}: empty key", i + 1));
        }
        out.push((i + 1, key, value));
    }
    Ok(out)
}

/// Splices the config file named by `--config` into the argument list.
/// Keys are long flag names; keys that belong only to other subcommands
/// are skipped, keys no subcommand knows are errors.
pub fn expand_args(args: Vec<OsString>) -> Result<Vec<OsString>, String> {
    let Some(path) = config_path(&args)? else {
        return Ok(args);
    };
    let Some(at) = subcommand_index(&args) else {
        return Ok(args);
    };
    let text = fs::read_to_string(&path).map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
    let entries = parse_config(&text).map_err(|e| format!("{}: {e}", path.display()))?;

    let cmd = Cli::command();
    let name = args[at].to_string_lossy().into_owned();
    let Some(sub) = cmd.find_subcommand(&name) else {
        return Ok(args);
    };
    // List flags accumulate, so a key given on the command line must not be
    // injected at all.
    let given: Vec<String> = args[at + 1..]
        .iter()
        .filter_map(|a| {
            let s = a.to_string_lossy();
            let name = s.strip_prefix("--")?;
            Some(name.split('=').next().unwrap_or(name).to_string())
        })
        .collect();
    let mut injected: Vec<OsString> = Vec::new();
    for (line, key, value) in entries {
        if key == "config" {
            return Err(format!(
                "{}: line {line}: config files cannot include others",
                path.display()
            ));
        }
        let arg = sub.get_arguments().find(|a| a.get_long() == Some(key.as_str()));
        match arg {
            Some(_) if given.contains(&key) => {}
            Some(arg) if arg.get_action().takes_values() => {
                injected.push(format!("--{key}").into());
                injected.push(value.into());
            }
            Some(_) => match value.as_str() {
                "true" => injected.push(format!("--{key}").into()),
                "false" => {}
                _ => {
                    return Err(format!(
                        "{}: line {line}: `{key}` is a switch and takes true or false",
                        path.display()
                    ))
                }
            },
            None => {
                let known = cmd
                    .get_subcommands()
                    .any(|s| s.get_arguments().any(|a| a.get_long() == Some(key.as_str())));
                if !known {
                    return Err(format!("{}: line {line}: unknown key `{key}`", path.display()));
                }
            }
        }
    }
    let mut out = args[..=at].to_vec();
    out.extend(injected);
    out.extend_from_slice(&args[at + 1..]);
    Ok(out)
}
