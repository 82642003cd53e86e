//! `--config FILE`: a TOML table whose keys are flag names. Its entries are
//! spliced in right after the subcommand, so flags given on the command line
//! take precedence.

use std::ffi::OsString;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use toml::Value;

pub const SUBCOMMANDS: [&str; 4] = ["gen", "auction", "bench", "verify"];

/// Turns config entries into `--key value` arguments. `true` booleans become
/// bare flags and `false` ones are dropped. Arrays join with commas.
pub fn config_args(text: &str) -> Result<Vec<OsString>> {
    let table: toml::Table = text.parse().context("parsing config")?;
    let mut out = Vec::new();
    for (key, value) in &table {
        let flag = format!("--{}", key.replace('_', "-"));
        match value {
            Value::Boolean(true) => out.push(flag.into()),
            Value::Boolean(false) => {}
            Value::Array(items) => {
                let parts = items.iter().map(scalar).collect::<Result<Vec<_>>>()?;
                out.push(flag.into());
                out.push(parts.join(",").into());
            }
            v => {
                out.push(flag.into());
                out.push(scalar(v).with_context(|| format!("config key `{key}`"))?.into());
            }
        }
    }
    Ok(out)
}

fn scalar(v: &Value) -> Result<String> {
    Ok(match v {
        Value::String(s) => s.clone(),
        Value::Integer(i) => i.to_string(),
        Value::Float(f) => f.to_string(),
        Value::Boolean(b) => b.to_string(),
        other => bail!("unsupported config value `{other}`"),
    })
}

/// Removes `--config FILE` from `args` and splices the file's entries after
/// the subcommand.
pub fn expand(args: Vec<OsString>) -> Result<Vec<OsString>> {
    let mut rest = Vec::with_capacity(args.len());
    let mut path = None;
    let mut it = args.into_iter();
    while let Some(a) = it.next() {
        let s = a.to_string_lossy().into_owned();
        if s == "--config" {
            match it.next() {
                Some(p) => path = Some(p),
                None => bail!("--config needs a file"),
            }
        } else if let Some(p) = s.strip_prefix("--config=") {
            path = Some(OsString::from(p));
        } else {
            rest.push(a);
        }
    }
    let Some(path) = path else { return Ok(rest) };
    let p = Path::new(&path);
    let text = fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
    let extra = config_args(&text).with_context(|| format!("in {}", p.display()))?;
    let at = rest
        .iter()
        .position(|a| SUBCOMMANDS.iter().any(|s| a == s))
        .map(|i| i + 1)
        .unwrap_or(rest.len());
    rest.splice(at..at, extra);
    Ok(rest)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn strs(v: &[OsString]) -> Vec<String> {
        v.iter().map(|s| s.to_string_lossy().into_owned()).collect()
    }

    #[test]
    fn entries_become_flags() {
        let args = config_args("kind = \"concave\"\nunits = [15, 15]\nquick = true\noracle = false\nseed = 4\n").unwrap();
        // toml tables iterate in key order.
        assert_eq!(strs(&args), ["--kind", "concave", "--quick", "--seed", "4", "--units", "15,15"]);
    }

    #[test]
    fn splices_after_subcommand() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("c.toml");
        fs::write(&cfg, "clients = 8\n").unwrap();
        let args: Vec<OsString> = ["mrvcg", "--config", cfg.to_str().unwrap(), "gen", "--clients", "3"]
            .iter()
            .map(OsString::from)
            .collect();
        assert_eq!(strs(&expand(args).unwrap()), ["mrvcg", "gen", "--clients", "8", "--clients", "3"]);
    }

    #[test]
    fn rejects_bad_config() {
        assert!(config_args("[nested]\nx = 1\n").is_err());
        assert!(config_args("not toml").is_err());
    }
}
