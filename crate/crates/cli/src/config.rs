//! `key=value` config files. Keys are long flag names without the leading
//! dashes; every key becomes a flag unless the command line already has it.

use std::collections::BTreeMap;

pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>, String> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or(format!("config line {}: expected key=value, got `{raw}`", i + 1))?;
        let k = k.trim().trim_start_matches("--").replace('_', "-");
        if k.is_empty() {
            return Err(format!("config line {}: empty key", i + 1));
        }
        out.insert(k, v.trim().to_string());
    }
    Ok(out)
}

fn has_flag(argv: &[String], key: &str) -> bool {
    let long = format!("--{key}");
    let prefix = format!("--{key}=");
    argv.iter().any(|a| *a == long || a.starts_with(&prefix))
}

/// Append config entries the command line does not set. `known` holds the
/// long flags of the chosen subcommand; other keys are skipped so one file
/// can serve several subcommands. The caller reports keys no subcommand
/// knows.
pub fn merge(argv: &[String], cfg: &BTreeMap<String, String>, known: &[String]) -> Vec<String> {
    let mut out = argv.to_vec();
    for (k, v) in cfg {
        if k == "config" || !known.contains(k) || has_flag(argv, k) {
            continue;
        }
        // Boolean switches: `key=true` adds the flag, `key=false` leaves it out.
        match v.as_str() {
            "true" => out.push(format!("--{k}")),
            "false" => {}
            _ => out.push(format!("--{k}={v}")),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(v: &[&str]) -> Vec<String> {
        v.iter().map(|x| x.to_string()).collect()
    }

    #[test]
    fn parses_comments_and_underscores() {
        let c = parse_config("# tolerances\nflow_tol = 1e-10\nmodel=grushin # inline\n\n").unwrap();
        assert_eq!(c["flow-tol"], "1e-10");
        assert_eq!(c["model"], "grushin");
        assert!(parse_config("no equals sign").is_err());
    }

    #[test]
    fn flags_override_config() {
        let cfg = parse_config("model=grushin\ntol=1e-6\nt=3").unwrap();
        let argv = s(&["subheat", "heat-eval", "--model", "heisenberg"]);
        let merged = merge(&argv, &cfg, &s(&["model", "tol"]));
        assert_eq!(merged, s(&["subheat", "heat-eval", "--model", "heisenberg", "--tol=1e-6"]));
    }
}
