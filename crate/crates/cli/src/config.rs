//! `--config FILE`: `key = value` lines turned into flags of the invoked
//! subcommand, inserted ahead of the explicit ones so those win.

use std::ffi::OsString;
use std::path::Path;

use anyhow::{bail, Context, Result};
use clap::{ArgAction, CommandFactory};

use crate::Cli;

/// The parser, with repeated flags overriding earlier occurrences.
pub fn command() -> clap::Command {
    fn walk(c: clap::Command) -> clap::Command {
        c.args_override_self(true).mut_subcommands(walk)
    }
    walk(Cli::command())
}

fn read_pairs(path: &Path) -> Result<Vec<(String, String)>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading --config {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            bail!("{}:{}: expected key = value", path.display(), i + 1);
        };
        let key = k.trim().trim_start_matches("--").replace('_', "-");
        out.push((key, v.trim().to_string()));
    }
    Ok(out)
}

fn config_path(argv: &[OsString]) -> Option<OsString> {
    let mut it = argv.iter().skip(1);
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--" {
            break;
        }
        if s == "--config" {
            return it.next().cloned();
        }
        if let Some(v) = s.strip_prefix("--config=") {
            return Some(v.into());
        }
    }
    None
}

/// Returns the argument list with config flags spliced in, plus notes about
/// keys that do not apply to the invoked subcommand.
pub fn merge(argv: Vec<OsString>) -> Result<(Vec<OsString>, Vec<String>)> {
    let Some(path) = config_path(&argv) else {
        return Ok((argv, Vec::new()));
    };
    let pairs = read_pairs(Path::new(&path))?;
    let mut cmd = command();
    cmd.build();

    // Walk to the leaf subcommand; its arguments start right after it.
    let mut leaf = &cmd;
    let mut insert_at = argv.len();
    let mut i = 1;
    while i < argv.len() {
        let s = argv[i].to_string_lossy();
        if let Some(long) = s.strip_prefix("--") {
            if !long.contains('=') {
                let takes = leaf
                    .get_arguments()
                    .find(|a| a.get_long() == Some(long))
                    .is_some_and(|a| a.get_action().takes_values());
                i += takes as usize;
            }
        } else if !s.starts_with('-') {
            match leaf.find_subcommand(&*s) {
                Some(sub) => {
                    leaf = sub;
                    insert_at = i + 1;
                    if !leaf.has_subcommands() {
                        break;
                    }
                }
                None => break,
            }
        }
        i += 1;
    }
    if leaf.has_subcommands() {
        // Let clap report the missing subcommand.
        return Ok((argv, Vec::new()));
    }

    let mut extra: Vec<OsString> = Vec::new();
    let mut notes = Vec::new();
    for (key, value) in pairs {
        if key == "config" {
            continue;
        }
        let Some(arg) = leaf.get_arguments().find(|a| a.get_long() == Some(key.as_str())) else {
            notes.push(format!("config key `{key}` does not apply to `{}`", leaf.get_name()));
            continue;
        };
        match arg.get_action() {
            ArgAction::SetTrue => {
                let on: bool = value
                    .parse()
                    .with_context(|| format!("config key `{key}`: expected true or false, got `{value}`"))?;
                if on {
                    extra.push(format!("--{key}").into());
                }
            }
            a if a.takes_values() => {
                extra.push(format!("--{key}").into());
                extra.push(value.into());
            }
            _ => notes.push(format!("config key `{key}` cannot be set from a file")),
        }
    }
    let mut out = argv;
    out.splice(insert_at..insert_at, extra);
    Ok((out, notes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::FromArgMatches;

    fn parse(args: &[&str], config: &str) -> (Cli, Vec<String>) {
        let dir = std::env::temp_dir().join(format!("iriskit-config-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        static N: std::sync::atomic::AtomicUsize = std::sync::atomic::AtomicUsize::new(0);
        let path = dir.join(format!("{}.conf", N.fetch_add(1, std::sync::atomic::Ordering::Relaxed)));
        std::fs::write(&path, config).unwrap();
        let mut argv: Vec<OsString> = vec!["iriskit".into(), "--config".into(), path.clone().into()];
        argv.extend(args.iter().map(OsString::from));
        let (argv, notes) = merge(argv).unwrap();
        let m = command().try_get_matches_from(argv).unwrap();
        (Cli::from_arg_matches(&m).unwrap(), notes)
    }

    #[test]
    fn file_values_fill_gaps_and_flags_win() {
        let (cli, notes) = parse(
            &["split", "--manifest", "m.jsonl", "--out", "o.jsonl", "--ratio", "0.5"],
            "# defaults\nseed = 11\nratio = 0.8\nsubjects = 3\n",
        );
        let crate::Command::Split(a) = cli.command else { panic!() };
        assert_eq!(a.seed, 11);
        assert_eq!(a.ratio, 0.5);
        assert_eq!(notes.len(), 1);
    }

    #[test]
    fn boolean_and_underscored_keys() {
        let (cli, _) = parse(
            &["synth", "generate", "--subjects", "2", "--out", "d"],
            "seed=4\nwrite_images = true\ncamera-tilt=15\n",
        );
        let crate::Command::Synth(crate::SynthCmd::Generate(g)) = cli.command else { panic!() };
        assert!(g.write_images);
        assert_eq!((g.seed, g.camera_tilt), (4, 15.0));
    }

    #[test]
    fn no_config_leaves_arguments_alone() {
        let argv: Vec<OsString> = ["iriskit", "clean", "--manifest", "a", "--out", "b"].map(OsString::from).into();
        assert_eq!(merge(argv.clone()).unwrap().0, argv);
    }
}
