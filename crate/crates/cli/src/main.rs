//! `loopforge`: collect loop facts, synthesize accelerators, verify them
//! and report on the results.
//!
//! Exit status: 0 on success, 1 on compilation or verification failure,
//! 2 on usage errors.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use loopforge::driver::{self, Config, DriverError};

#[derive(Parser)]
#[command(name = "loopforge", version, about = "Hardware/software partitioning for a C subset")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// First run: record every function and loop in the transcript.
    Collect {
        /// C source files, one translation unit each.
        #[arg(required = true)]
        files: Vec<PathBuf>,
        /// Transcript file to create or update.
        #[arg(short = 'o', long = "output", value_name = "TRANSCRIPT")]
        output: PathBuf,
        /// Trip count assumed for loops without constant bounds.
        #[arg(long, value_name = "N")]
        default_loop_count: Option<u64>,
    },
    /// Second run: select loops, synthesize accelerators, patch the program.
    Synth {
        #[arg(required = true)]
        files: Vec<PathBuf>,
        #[arg(long, value_name = "FILE")]
        transcript: PathBuf,
        /// Number of loops to select.
        #[arg(long, value_name = "N")]
        top_n: Option<usize>,
        /// Minimum estimated speedup (for example 1, 0.5 or 3/2).
        #[arg(long, value_name = "X")]
        min_speedup: Option<String>,
        /// Ranking key: `total` or `total-stmts`.
        #[arg(long, value_name = "KEY")]
        rank: Option<String>,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        #[command(flatten)]
        settings: Settings,
    },
    /// Check the accelerators of a build against software execution.
    Verify {
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        /// Random trials per accelerator.
        #[arg(long, value_name = "N")]
        trials: Option<u32>,
        /// Whole-program runs with and without accelerators.
        #[arg(long, value_name = "N")]
        program_trials: Option<u32>,
        #[arg(long, value_name = "N")]
        seed: Option<u64>,
        #[command(flatten)]
        settings: Settings,
    },
    /// Print the selection, estimates and verification results of a build.
    Report {
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
}

/// Configuration shared by the stages that take one.
#[derive(Args)]
struct Settings {
    /// `key=value` configuration file (`#` starts a comment).
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Individual `key=value` entries; they override the file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl Settings {
    /// File entries first, then `--set` entries, then `flags`.
    fn overrides(&self, flags: Vec<(&str, Option<String>)>) -> Result<Vec<(String, String)>, DriverError> {
        let mut out = Vec::new();
        if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path)
                .map_err(|e| DriverError::Usage(format!("{}: {e}", path.display())))?;
            let mut probe = Config::default();
            probe
                .apply_text(&text)
                .map_err(|e| DriverError::Usage(format!("{}: {e}", path.display())))?;
            for line in text.lines() {
                let line = line.split('#').next().unwrap_or("").trim();
                if let Some((k, v)) = line.split_once('=') {
                    out.push((k.trim().to_string(), v.trim().to_string()));
                }
            }
        }
        for s in &self.set {
            let (k, v) = s
                .split_once('=')
                .ok_or_else(|| DriverError::Usage(format!("--set expects KEY=VALUE, found '{s}'")))?;
            out.push((k.trim().to_string(), v.trim().to_string()));
        }
        out.extend(flags.into_iter().filter_map(|(k, v)| v.map(|v| (k.to_string(), v))));
        Ok(out)
    }
}

fn config_with(overrides: &[(String, String)]) -> Result<Config, DriverError> {
    let mut cfg = Config::default();
    for (k, v) in overrides {
        cfg.set(k, v).map_err(|e| DriverError::Usage(e.to_string()))?;
    }
    Ok(cfg)
}

fn run_collect(files: &[PathBuf], output: &Path, default_loop_count: Option<u64>) -> Result<(), DriverError> {
    let sources = driver::read_sources(files)?;
    let count = default_loop_count.unwrap_or(Config::default().default_loop_count);
    let out = driver::collect(&sources, output, count)?;
    for w in &out.warnings {
        eprintln!("{w}");
    }
    println!(
        "wrote {} ({} units, {} loops)",
        output.display(),
        out.transcript.units.len(),
        out.transcript.loops().count()
    );
    Ok(())
}

fn run_synth(
    files: &[PathBuf],
    transcript: &Path,
    out: &Path,
    overrides: &[(String, String)],
) -> Result<(), DriverError> {
    let cfg = config_with(overrides)?;
    let sources = driver::read_sources(files)?;
    let b = driver::synth(&sources, transcript, &cfg, out)?;
    print!("{}", b.selection.to_table());
    for n in b.notices.iter().filter(|n| !b.selection.notices.contains(n)) {
        eprintln!("note: {n}");
    }
    println!(
        "{} accelerator(s) written to {} ({} files)",
        b.accelerators.len(),
        out.display(),
        b.files.len()
    );
    Ok(())
}

fn run_verify(out: &Path, overrides: &[(String, String)]) -> Result<(), DriverError> {
    let v = driver::verify(out, overrides)?;
    print!("{}", v.report);
    if v.passed() {
        Ok(())
    } else {
        Err(DriverError::Failed(format!(
            "verification failed: {}",
            v.first_failure().unwrap_or_else(|| "see the report".into())
        )))
    }
}

fn run(cli: Cli) -> Result<(), DriverError> {
    match cli.command {
        Command::Collect {
            files,
            output,
            default_loop_count,
        } => run_collect(&files, &output, default_loop_count),
        Command::Synth {
            files,
            transcript,
            top_n,
            min_speedup,
            rank,
            out,
            settings,
        } => {
            let o = settings.overrides(vec![
                ("top_n", top_n.map(|n| n.to_string())),
                ("min_speedup", min_speedup),
                ("rank", rank),
            ])?;
            run_synth(&files, &transcript, &out, &o)
        }
        Command::Verify {
            out,
            trials,
            program_trials,
            seed,
            settings,
        } => {
            let o = settings.overrides(vec![
                ("trials", trials.map(|n| n.to_string())),
                ("program_trials", program_trials.map(|n| n.to_string())),
                ("seed", seed.map(|n| n.to_string())),
            ])?;
            run_verify(&out, &o)
        }
        Command::Report { out } => {
            print!("{}", driver::report(&out)?);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("loopforge: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
