//! `key = value` config files, spliced into the argument list right after
//! the subcommand so that explicit flags (which come later) win.

use std::ffi::OsString;
use std::path::Path;

use crate::CliError;

const GLOBAL_VALUE_FLAGS: [&str; 3] = ["--config", "--jobs", "--seed"];

/// Turns config text into flag arguments. `key = true` becomes a bare
/// `--key`, `key = false` is dropped.
pub fn parse_config(text: &str, origin: &Path) -> Result<Vec<OsString>, CliError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            CliError::Usage(format!(
                "{}:{}: expected key = value",
                origin.display(),
                i + 1
            ))
        })?;
        let key = key.trim().trim_start_matches("--").replace('_', "-");
        let value = value.trim().trim_matches('"');
        if key.is_empty() {
            return Err(CliError::Usage(format!(
                "{}:{}: empty key",
                origin.display(),
                i + 1
            )));
        }
        match value {
            "true" => out.push(format!("--{key}").into()),
            "false" => {}
            v => {
                out.push(format!("--{key}").into());
                out.push(v.into());
            }
        }
    }
    Ok(out)
}

fn config_path(args: &[OsString]) -> Option<(usize, Option<OsString>)> {
    for (i, a) in args.iter().enumerate().skip(1) {
        let s = a.to_string_lossy();
        if s == "--config" {
            return Some((i, args.get(i + 1).cloned()));
        }
        if let Some(v) = s.strip_prefix("--config=") {
            return Some((i, Some(v.into())));
        }
    }
    None
}

/// Position of the subcommand token, skipping global flags and their values.
fn subcommand_index(args: &[OsString]) -> Option<usize> {
    let mut i = 1;
    while i < args.len() {
        let s = args[i].to_string_lossy();
        if GLOBAL_VALUE_FLAGS.contains(&s.as_ref()) {
            i += 2;
        } else if s.starts_with('-') {
            i += 1;
        } else {
            return Some(i);
        }
    }
    None
}

pub fn expand_args(args: Vec<OsString>) -> Result<Vec<OsString>, CliError> {
    let Some((_, path)) = config_path(&args) else {
        return Ok(args);
    };
    let path = path.ok_or_else(|| CliError::Usage("--config needs a file".into()))?;
    let path = Path::new(&path);
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    let extra = parse_config(&text, path)?;
    let Some(sub) = subcommand_index(&args) else {
        return Ok(args);
    };
    let mut out = args[..=sub].to_vec();
    out.extend(extra);
    out.extend_from_slice(&args[sub + 1..]);
    Ok(out)
}
