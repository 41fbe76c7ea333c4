mod args;
mod error;
mod output;
mod run;

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;
use hbell::fock::TruncationPolicy;

use args::{Cli, Command, SUBCOMMANDS};
use error::CliError;
use output::{now_rfc3339, sha256_hex, write_file, JsonDocument, OutputRecord, RunManifest};

fn main() -> ExitCode {
    let argv: Vec<String> = match std::env::args_os().map(OsString::into_string).collect() {
        Ok(v) => v,
        Err(_) => {
            eprintln!("error: arguments must be valid UTF-8");
            return ExitCode::from(1);
        }
    };
    match main_inner(argv) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn main_inner(argv: Vec<String>) -> Result<(), CliError> {
    let argv = expand_config(argv)?;
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => return clap_exit(e),
    };
    init_threads(cli.threads)?;
    if let Some(manifest) = &cli.replay {
        if cli.command.is_some() {
            return Err(CliError::Invalid("--replay takes no command".into()));
        }
        return replay(manifest);
    }
    let Some(cmd) = cli.command else {
        return Err(CliError::Invalid(format!(
            "no command given; choose one of: {}",
            SUBCOMMANDS.join(", ")
        )));
    };
    execute(&cmd, argv[1..].to_vec(), true).map(|_| ())
}

fn clap_exit(e: clap::Error) -> Result<(), CliError> {
    let _ = e.print();
    let code = match e.kind() {
        ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
        _ => 1,
    };
    std::process::exit(code)
}

fn init_threads(flag: Option<usize>) -> Result<(), CliError> {
    let n = match flag {
        Some(n) => Some(n),
        None => match std::env::var("HBELL_THREADS") {
            Ok(v) if !v.trim().is_empty() => Some(
                v.trim()
                    .parse()
                    .map_err(|_| CliError::Invalid(format!("HBELL_THREADS must be a positive integer, got {v:?}")))?,
            ),
            _ => None,
        },
    };
    if let Some(n) = n {
        if n == 0 {
            return Err(CliError::Invalid("thread count must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Invalid(format!("cannot set up {n} threads: {e}")))?;
    }
    Ok(())
}

/// Replace `--config FILE` by the flags it holds. Config flags go right
/// after the subcommand so that anything given explicitly comes later and
/// wins.
fn expand_config(argv: Vec<String>) -> Result<Vec<String>, CliError> {
    let mut rest = Vec::with_capacity(argv.len());
    let mut config = None;
    let mut it = argv.into_iter();
    while let Some(a) = it.next() {
        if a == "--config" {
            let path = it
                .next()
                .ok_or_else(|| CliError::Invalid("--config needs a file".into()))?;
            config = Some(PathBuf::from(path));
        } else if let Some(path) = a.strip_prefix("--config=") {
            config = Some(PathBuf::from(path));
        } else {
            rest.push(a);
        }
    }
    let Some(path) = config else { return Ok(rest) };
    let text = std::fs::read_to_string(&path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| CliError::Invalid(format!("{}: not valid JSON: {e}", path.display())))?;
    let serde_json::Value::Object(map) = value else {
        return Err(CliError::Invalid(format!("{}: expected a JSON object", path.display())));
    };

    let mut command = None;
    let mut flags = Vec::new();
    for (key, v) in map {
        if key == "command" {
            command = Some(
                v.as_str()
                    .ok_or_else(|| CliError::Invalid("config \"command\" must be a string".into()))?
                    .to_string(),
            );
            continue;
        }
        let flag = format!("--{}", key.replace('_', "-"));
        let text = match v {
            serde_json::Value::Bool(true) => {
                flags.push(flag);
                continue;
            }
            serde_json::Value::Bool(false) | serde_json::Value::Null => continue,
            serde_json::Value::String(s) => s,
            serde_json::Value::Number(n) => n.to_string(),
            serde_json::Value::Array(items) => items
                .iter()
                .map(|x| match x {
                    serde_json::Value::String(s) => s.clone(),
                    other => other.to_string(),
                })
                .collect::<Vec<_>>()
                .join(","),
            serde_json::Value::Object(_) => {
                return Err(CliError::Invalid(format!("config key {key:?}: nested objects are not flags")))
            }
        };
        flags.push(flag);
        flags.push(text);
    }

    let sub_pos = rest.iter().position(|a| SUBCOMMANDS.contains(&a.as_str()));
    let insert_at = match (sub_pos, command) {
        (Some(i), Some(c)) if rest[i] != c => {
            return Err(CliError::Invalid(format!(
                "config is for {c:?} but the command line asks for {:?}",
                rest[i]
            )))
        }
        (Some(i), _) => i + 1,
        (None, Some(c)) => {
            // the subcommand goes after any global flags
            rest.push(c);
            rest.len()
        }
        (None, None) => return Err(CliError::Invalid("config has no \"command\" and none was given".into())),
    };
    let tail = rest.split_off(insert_at);
    rest.extend(flags);
    rest.extend(tail);
    Ok(rest)
}

fn manifest_for(cmd: &Command, argv: Vec<String>, report: &run::Report) -> Result<RunManifest, CliError> {
    let workdir = std::env::current_dir().map_err(|e| CliError::Io(e.to_string()))?;
    Ok(RunManifest {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: cmd.name().into(),
        argv,
        workdir,
        seed: report.seed,
        truncation: TruncationPolicy::default(),
        provenance: report.provenance.clone(),
        started_at: None,
        finished_at: None,
        outputs: Vec::new(),
    })
}

/// Run one command, print its report and write the requested files.
fn execute(cmd: &Command, argv: Vec<String>, write_manifest: bool) -> Result<Vec<OutputRecord>, CliError> {
    let started = now_rfc3339();
    let report = run::dispatch(cmd)?;
    print!("{}", report.text);

    let mut manifest = manifest_for(cmd, argv, &report)?;
    let out = cmd.output();
    let mut records = Vec::new();
    if let Some(path) = &out.csv {
        let text = report.csv()?;
        write_file(path, &text)?;
        records.push(OutputRecord {
            path: path.clone(),
            format: "csv".into(),
            sha256: sha256_hex(text.as_bytes()),
        });
    }
    if let Some(path) = &out.json {
        let doc = JsonDocument {
            manifest: manifest.clone(),
            rows: report.rows.clone(),
            details: report.details.clone(),
        };
        let mut text = serde_json::to_string_pretty(&doc).map_err(|e| CliError::Io(e.to_string()))?;
        text.push('\n');
        write_file(path, &text)?;
        records.push(OutputRecord {
            path: path.clone(),
            format: "json".into(),
            sha256: sha256_hex(text.as_bytes()),
        });
    }

    if write_manifest {
        let target = out
            .manifest
            .clone()
            .or_else(|| records.first().map(|r| sidecar(&r.path)));
        if let Some(target) = target {
            manifest.started_at = Some(started);
            manifest.finished_at = Some(now_rfc3339());
            manifest.outputs = records.clone();
            let mut text = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Io(e.to_string()))?;
            text.push('\n');
            write_file(&target, &text)?;
        }
    }

    match report.failure {
        Some(msg) => Err(CliError::Numerical(msg)),
        None => Ok(records),
    }
}

fn sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

/// Re-run a recorded command in its original directory and compare hashes.
fn replay(path: &Path) -> Result<(), CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let manifest: RunManifest = serde_json::from_str(&text)
        .map_err(|e| CliError::Invalid(format!("{}: not a run manifest: {e}", path.display())))?;
    if manifest.outputs.is_empty() {
        return Err(CliError::Invalid("manifest records no outputs to compare".into()));
    }
    std::env::set_current_dir(&manifest.workdir)
        .map_err(|e| CliError::Io(format!("{}: {e}", manifest.workdir.display())))?;
    let mut argv = vec![manifest.tool.clone()];
    argv.extend(manifest.argv.iter().cloned());
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => return Err(CliError::Invalid(format!("recorded arguments no longer parse: {e}"))),
    };
    let cmd = cli
        .command
        .ok_or_else(|| CliError::Invalid("manifest has no command".into()))?;
    let records = execute(&cmd, manifest.argv.clone(), false)?;

    let mut mismatches = Vec::new();
    for want in &manifest.outputs {
        match records.iter().find(|r| r.path == want.path) {
            Some(got) if got.sha256 == want.sha256 => println!("reproduced {}", want.path.display()),
            Some(_) => mismatches.push(format!("{} differs", want.path.display())),
            None => mismatches.push(format!("{} was not written", want.path.display())),
        }
    }
    if mismatches.is_empty() {
        println!("replay ok: {} output(s) identical", manifest.outputs.len());
        Ok(())
    } else {
        Err(CliError::Numerical(format!("replay mismatch: {}", mismatches.join("; "))))
    }
}
