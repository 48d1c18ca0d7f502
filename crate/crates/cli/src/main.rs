mod bundle;
mod config;
mod suites;

use clap::{Parser, Subcommand};
use config::{validate_ladder, ScenarioConfig, SUITES};
use sha2::{Digest, Sha256};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

#[derive(Parser)]
#[command(name = "kreinlab", version, about = "Boundary-problem verification suites for elliptic realizations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the suites of a scenario and write a report bundle
    Run {
        config: PathBuf,
        /// Output directory (default: the config's output_dir, else ./kreinlab-out)
        #[arg(long, env = "KREINLAB_OUT")]
        out: Option<PathBuf>,
        /// Suites to run, replacing the config's list
        #[arg(long = "suite", num_args = 1.., value_name = "NAME")]
        suites: Option<Vec<String>>,
        #[arg(long)]
        seed: Option<u64>,
        /// Tangential resolutions, each doubling the previous one
        #[arg(long, value_delimiter = ',')]
        mesh_ladder: Option<Vec<usize>>,
    },
    /// Print tidy plot data of a suite from an existing bundle
    Plot {
        bundle: PathBuf,
        suite: String,
        /// Write to a file instead of stdout
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

const USAGE: u8 = 2;

fn usage(msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(USAGE)
}

fn now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run { config, out, suites, seed, mesh_ladder } => run(config, out, suites, seed, mesh_ladder),
        Command::Plot { bundle, suite, out } => plot(bundle, suite, out),
    }
}

fn run(path: PathBuf, out: Option<PathBuf>, suites: Option<Vec<String>>, seed: Option<u64>, ladder: Option<Vec<usize>>) -> ExitCode {
    let started = now();
    let text = match std::fs::read(&path) {
        Ok(t) => t,
        Err(e) => return usage(format!("cannot read {}: {e}", path.display())),
    };
    let mut cfg = match std::str::from_utf8(&text).map_err(|e| e.to_string()).and_then(|t| ScenarioConfig::parse(t).map_err(|e| e.to_string())) {
        Ok(c) => c,
        Err(e) => return usage(format!("{}: {e}", path.display())),
    };
    if let Some(list) = suites {
        for name in &list {
            if !SUITES.contains(&name.as_str()) {
                return usage(format!("unknown suite `{name}` (available: {})", SUITES.join(", ")));
            }
        }
        cfg.suites = list;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(l) = ladder {
        if let Err(e) = validate_ladder(&l, "--mesh-ladder") {
            return usage(e);
        }
        cfg.sweep.mesh_ladder = l;
    }
    let dir = out.or_else(|| cfg.output_dir.clone()).unwrap_or_else(|| PathBuf::from("kreinlab-out"));

    let mut names: Vec<&str> = cfg.suites.iter().map(String::as_str).collect();
    names.sort_unstable();
    names.dedup();
    let results: Vec<suites::SuiteResult> = names.iter().map(|n| suites::run_suite(n, &cfg)).collect();
    if let Err(e) = bundle::write_bundle(&dir, &results) {
        eprintln!("error: writing bundle to {}: {e}", dir.display());
        return ExitCode::FAILURE;
    }
    let prov = bundle::Provenance {
        tool: "kreinlab",
        version: env!("CARGO_PKG_VERSION"),
        config_path: path.display().to_string(),
        config_sha256: Sha256::digest(&text).iter().map(|b| format!("{b:02x}")).collect(),
        seed: cfg.seed,
        mesh_ladder: &cfg.sweep.mesh_ladder,
        suites: names.clone(),
        started_unix: started,
        finished_unix: now(),
    };
    if let Err(e) = bundle::write_provenance(&dir, &prov) {
        eprintln!("error: writing provenance: {e}");
        return ExitCode::FAILURE;
    }
    for r in &results {
        let failed: Vec<&str> = r.checks.iter().filter(|c| c.status == suites::Status::Fail).map(|c| c.name.as_str()).collect();
        if failed.is_empty() {
            println!("PASS {}", r.name);
        } else {
            println!("FAIL {} ({})", r.name, failed.join(", "));
        }
    }
    println!("bundle: {}", dir.display());
    if results.iter().all(|r| r.pass()) {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn plot(dir: PathBuf, suite: String, out: Option<PathBuf>) -> ExitCode {
    let table = match bundle::plot_table(&dir, &suite) {
        Ok(t) => t,
        Err(e) => return usage(e),
    };
    let res = match out {
        Some(p) => std::fs::File::create(&p).and_then(|mut f| bundle::write_plot(&mut f, &table)),
        None => bundle::write_plot(&mut std::io::stdout().lock(), &table),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
