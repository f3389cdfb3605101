//! `--config FILE` support: a flat `key=value` file whose entries become
//! flags placed before the command-line flags, so the command line wins.

use std::ffi::OsString;

const SUBCOMMANDS: [&str; 6] = ["bound", "simulate", "rate-sweep", "dim-sweep", "verify", "help"];

/// Rewrites `argv` so config entries appear as `--key value` right after the
/// subcommand. A `command` key supplies the subcommand when none is given.
pub fn expand_args(argv: Vec<OsString>) -> Result<Vec<OsString>, String> {
    let mut rest = Vec::with_capacity(argv.len());
    let mut config = None;
    let mut iter = argv.into_iter();
    let program = iter.next().unwrap_or_else(|| "stein-wilks".into());
    while let Some(arg) = iter.next() {
        let text = arg.to_string_lossy();
        if text == "--config" {
            config = Some(iter.next().ok_or("--config needs a file")?);
        } else if let Some(path) = text.strip_prefix("--config=") {
            config = Some(path.into());
        } else {
            rest.push(arg);
        }
    }
    let Some(path) = config else {
        let mut out = vec![program];
        out.extend(rest);
        return Ok(out);
    };
    let text = std::fs::read_to_string(&path)
        .map_err(|e| format!("cannot read config `{}`: {e}", path.to_string_lossy()))?;
    let (command, flags) = parse(&text)?;

    let sub_pos = rest.iter().position(|a| SUBCOMMANDS.contains(&a.to_string_lossy().as_ref()));
    let mut out = vec![program];
    match (sub_pos, command) {
        (Some(pos), _) => {
            out.extend(rest[..=pos].iter().cloned());
            out.extend(flags);
            out.extend(rest[pos + 1..].iter().cloned());
        }
        (None, Some(cmd)) => {
            out.push(cmd.into());
            out.extend(flags);
            out.extend(rest);
        }
        (None, None) => out.extend(rest),
    }
    Ok(out)
}

/// Parses `key=value` lines; `#` starts a comment. Boolean flags take
/// `true`/`false`.
fn parse(text: &str) -> Result<(Option<String>, Vec<OsString>), String> {
    let mut command = None;
    let mut flags = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| format!("config line {} is not key=value: `{raw}`", i + 1))?;
        let key = key.trim().replace('_', "-");
        let value = value.trim();
        if key.is_empty() {
            return Err(format!("config line {} has an empty key", i + 1));
        }
        if key == "command" {
            command = Some(value.to_string());
            continue;
        }
        match value {
            "true" => flags.push(format!("--{key}").into()),
            "false" => {}
            _ => flags.push(format!("--{key}={value}").into()),
        }
    }
    Ok((command, flags))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn os(v: &[&str]) -> Vec<OsString> {
        v.iter().map(OsString::from).collect()
    }

    #[test]
    fn parses_flags_and_command() {
        let (cmd, flags) = parse("command = bound\n# comment\nmodel=exponential\ntheta0 = 3\ncorollary=true\nout_file=x\n").unwrap();
        assert_eq!(cmd.as_deref(), Some("bound"));
        assert_eq!(flags, os(&["--model=exponential", "--theta0=3", "--corollary", "--out-file=x"]));
    }

    #[test]
    fn config_flags_precede_command_line_flags() {
        let path = std::env::temp_dir().join(format!("sw-config-{}.cfg", std::process::id()));
        std::fs::write(&path, "command=bound\nn=5\n").unwrap();
        let argv = os(&["sw", "--config", path.to_str().unwrap(), "--n", "7"]);
        let out = expand_args(argv).unwrap();
        std::fs::remove_file(&path).unwrap();
        assert_eq!(out, os(&["sw", "bound", "--n=5", "--n", "7"]));
    }

    #[test]
    fn rejects_malformed_lines() {
        assert!(parse("model exponential").is_err());
    }

    #[test]
    fn passes_through_without_config() {
        let argv = os(&["stein-wilks", "bound", "--n", "10"]);
        assert_eq!(expand_args(argv.clone()).unwrap(), argv);
    }
}
