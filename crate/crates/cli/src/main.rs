//! Configuration-driven experiment runner: builds models and grids from a
//! plain-text config, dispatches the property suites, and emits CSV tables
//! plus a pass/fail manifest.
//!
//! Exit codes: 0 all checks pass, 1 suite check failed, 2 config error,
//! 3 the primary quasi-linear solve did not converge, 4 it was flagged
//! BlowupSuspected.

mod config;
mod report;
mod suites;

use clap::{Parser, Subcommand};
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;
use suites::{CheckItem, RunOutcome};

#[derive(Parser)]
#[command(name = "transwave", about = "transmission-wave verification harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute the suites selected by a config file.
    Run {
        config: PathBuf,
        /// output directory for CSV artifacts (default: ./out)
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// seed recorded in the manifest; all corpora are deterministic
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// worker threads for independent suites (output is bitwise
        /// identical for any value)
        #[arg(long, default_value_t = 1)]
        threads: usize,
    },
    /// Summarize the artifacts of a previous run.
    Report { dir: PathBuf },
    /// List the built-in coefficient models.
    ListModels,
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run {
            config,
            out,
            seed,
            threads,
        } => run(config, out, seed, threads),
        Command::Report { dir } => match report::report(&dir) {
            Ok(text) => {
                print!("{text}");
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("{e}");
                ExitCode::from(2)
            }
        },
        Command::ListModels => {
            for (id, desc) in config::MODEL_IDS {
                println!("{id:<18} {desc}");
            }
            ExitCode::SUCCESS
        }
    }
}

fn run(config_path: PathBuf, out: PathBuf, seed: u64, threads: usize) -> ExitCode {
    let text = match fs::read_to_string(&config_path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("cannot read {}: {e}", config_path.display());
            return ExitCode::from(2);
        }
    };
    let cfg = match config::load(&text) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(2);
        }
    };
    if let Err(e) = fs::create_dir_all(&out) {
        eprintln!("cannot create {}: {e}", out.display());
        return ExitCode::from(2);
    }

    // suites run in parallel chunks; results land in config order so the
    // manifest is bitwise independent of the thread count
    let n_suites = cfg.suites.len();
    let mut results: Vec<Option<Result<(Vec<CheckItem>, RunOutcome), String>>> =
        (0..n_suites).map(|_| None).collect();
    let workers = threads.max(1).min(n_suites.max(1));
    std::thread::scope(|scope| {
        let mut handles = Vec::new();
        for chunk in (0..n_suites).collect::<Vec<_>>().chunks(n_suites.div_ceil(workers)) {
            let chunk = chunk.to_vec();
            let cfg = &cfg;
            let out = &out;
            handles.push(scope.spawn(move || {
                chunk
                    .into_iter()
                    .map(|i| (i, suites::run_suite(&cfg.suites[i], cfg, out)))
                    .collect::<Vec<_>>()
            }));
        }
        for h in handles {
            for (i, res) in h.join().expect("suite worker") {
                results[i] = Some(res);
            }
        }
    });

    let mut items: Vec<CheckItem> = Vec::new();
    let mut outcome = RunOutcome::Converged;
    for (i, res) in results.into_iter().enumerate() {
        match res.expect("suite executed") {
            Ok((checks, o)) => {
                items.extend(checks);
                if o != RunOutcome::Converged {
                    outcome = o;
                }
            }
            Err(e) => {
                eprintln!("suite {} failed: {e}", cfg.suites[i]);
                return ExitCode::FAILURE;
            }
        }
    }

    let mut manifest = suites::manifest_csv(&items);
    manifest.push_str(&format!(
        "# config={} model={} seed={seed}\n",
        config_path.display(),
        cfg.model_id
    ));
    if let Err(e) = fs::write(out.join("manifest.csv"), manifest) {
        eprintln!("cannot write manifest: {e}");
        return ExitCode::FAILURE;
    }

    let failures = items.iter().filter(|c| !c.pass).count();
    for c in &items {
        println!(
            "[{}] {:<34} {:>14.6e} {:<26} {}",
            c.suite,
            c.item,
            c.value,
            c.threshold,
            if c.pass { "pass" } else { "FAIL" }
        );
    }
    println!("{} checks, {} failing", items.len(), failures);

    match outcome {
        RunOutcome::NoConvergence => ExitCode::from(3),
        RunOutcome::BlowupSuspected => ExitCode::from(4),
        RunOutcome::Converged => {
            if failures > 0 {
                ExitCode::FAILURE
            } else {
                ExitCode::SUCCESS
            }
        }
    }
}
