//! Command-line experiment runner.
//!
//! ```text
//! flockline run --config path.json [--out dir] [--jobs k] [--allow-unchecked]
//! flockline validate --config path.json
//! ```
//!
//! Exit codes: 0 success, 1 schema/I-O error, 2 assumption failure,
//! 3 tainted runs (event budget or exponent cap hit).

use flockline::experiments::{
    assumption_gate, run_experiment, write_outputs, ExperimentConfig, ExperimentError,
};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

struct Args {
    command: String,
    config: Option<PathBuf>,
    out: Option<PathBuf>,
    jobs: usize,
    allow_unchecked: bool,
}

fn usage() -> &'static str {
    "usage:\n  flockline run --config path.json [--out dir] [--jobs k] [--allow-unchecked]\n  flockline validate --config path.json"
}

fn parse_args() -> Result<Args, String> {
    let mut argv = std::env::args().skip(1);
    let command = argv.next().ok_or_else(|| usage().to_string())?;
    let mut args = Args {
        command,
        config: None,
        out: None,
        jobs: std::thread::available_parallelism()
            .map(|p| p.get())
            .unwrap_or(1),
        allow_unchecked: false,
    };
    while let Some(flag) = argv.next() {
        match flag.as_str() {
            "--config" => {
                let v = argv.next().ok_or("--config needs a path")?;
                args.config = Some(PathBuf::from(v));
            }
            "--out" => {
                let v = argv.next().ok_or("--out needs a directory")?;
                args.out = Some(PathBuf::from(v));
            }
            "--jobs" => {
                let v = argv.next().ok_or("--jobs needs a count")?;
                args.jobs = v
                    .parse::<usize>()
                    .map_err(|_| format!("invalid --jobs value: {v}"))?
                    .max(1);
            }
            "--allow-unchecked" => args.allow_unchecked = true,
            other => return Err(format!("unknown flag {other}\n{}", usage())),
        }
    }
    Ok(args)
}

fn load_config(args: &Args) -> Result<ExperimentConfig, String> {
    let path = args
        .config
        .as_ref()
        .ok_or_else(|| format!("--config is required\n{}", usage()))?;
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    ExperimentConfig::from_json(&text).map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let args = match parse_args() {
        Ok(a) => a,
        Err(msg) => {
            eprintln!("{msg}");
            return ExitCode::from(1);
        }
    };
    let cfg = match load_config(&args) {
        Ok(c) => c,
        Err(msg) => {
            eprintln!("flockline: {msg}");
            return ExitCode::from(1);
        }
    };

    match args.command.as_str() {
        "validate" => {
            if let Err(msg) = assumption_gate(&cfg) {
                eprintln!("flockline: {msg}");
                return ExitCode::from(2);
            }
            println!(
                "config ok: experiment {}",
                serde_json::json!(cfg.experiment)
            );
            ExitCode::SUCCESS
        }
        "run" => {
            if !args.allow_unchecked {
                if let Err(msg) = assumption_gate(&cfg) {
                    eprintln!("flockline: {msg}");
                    return ExitCode::from(2);
                }
            }
            let started = Instant::now();
            let out = match run_experiment(&cfg, args.jobs) {
                Ok(o) => o,
                Err(ExperimentError::AssumptionFailure(msg)) => {
                    eprintln!("flockline: {msg}");
                    return ExitCode::from(2);
                }
                Err(e) => {
                    eprintln!("flockline: {e}");
                    return ExitCode::from(1);
                }
            };
            let dir = args
                .out
                .clone()
                .or_else(|| cfg.output_dir.as_ref().map(PathBuf::from))
                .unwrap_or_else(|| PathBuf::from("."));
            let wall = started.elapsed().as_secs_f64();
            if let Err(e) = write_outputs(&dir, &cfg, &out, wall) {
                eprintln!("flockline: {e}");
                return ExitCode::from(1);
            }
            println!(
                "{}",
                serde_json::to_string(&out.summary).unwrap_or_else(|_| "{}".into())
            );
            if out.tainted {
                eprintln!("flockline: run tainted (event budget or exponent cap hit)");
                return ExitCode::from(3);
            }
            ExitCode::SUCCESS
        }
        other => {
            eprintln!("unknown command {other}\n{}", usage());
            ExitCode::from(1)
        }
    }
}
