use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use opfam::config::{demo_config, DEMO_KINDS};
use opfam::report::write_json;
use opfam::{run_analysis, AnalysisConfig, ConfigError};

#[derive(Parser)]
#[command(
    name = "opfam",
    version,
    about = "Spectral certificates for sampled operator families"
)]
struct Cli {
    /// Cap on worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Where reports (analyze) or configs (demo) are written.
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    /// Only report errors.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every analysis in a config and write report.json plus CSVs.
    Analyze { config: PathBuf },
    /// Check a config without running it.
    Validate { config: PathBuf },
    /// Write a ready-made config for a built-in family.
    Demo {
        #[arg(value_parser = clap::builder::PossibleValuesParser::new(DEMO_KINDS))]
        family_kind: String,
    },
}

fn config_failure(e: &ConfigError) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(2)
}

fn set_threads(threads: Option<usize>, quiet: bool) {
    let Some(n) = threads else { return };
    #[cfg(feature = "parallel")]
    {
        let _ = quiet;
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
        {
            eprintln!("warning: cannot set thread count: {e}");
        }
    }
    #[cfg(not(feature = "parallel"))]
    if !quiet && n != 1 {
        eprintln!("warning: built without the `parallel` feature; --threads {n} ignored");
    }
}

fn analyze(path: &Path, output_dir: Option<PathBuf>, quiet: bool) -> ExitCode {
    let config = match AnalysisConfig::load(path) {
        Ok(c) => c,
        Err(e) => return config_failure(&e),
    };
    let base = path.parent().unwrap_or(Path::new(""));
    let dir = output_dir
        .or_else(|| config.output_dir.as_ref().map(|d| base.join(d)))
        .unwrap_or_else(|| PathBuf::from("opfam-out"));
    match run_analysis(&config, &dir) {
        Ok(outcome) => {
            if !quiet {
                for a in outcome.report["analyses"].as_array().into_iter().flatten() {
                    let status = if a["passes"] == true { "PASS" } else { "FAIL" };
                    println!(
                        "{status} [{}] {}",
                        a["index"],
                        a["kind"].as_str().unwrap_or("?")
                    );
                }
                println!("wrote {} files to {}", outcome.files.len(), dir.display());
            }
            if outcome.passes {
                ExitCode::SUCCESS
            } else {
                if quiet {
                    eprintln!(
                        "one or more certificates failed; see {}",
                        dir.join("report.json").display()
                    );
                }
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    set_threads(cli.threads, cli.quiet);
    match cli.command {
        Command::Analyze { config } => analyze(&config, cli.output_dir, cli.quiet),
        Command::Validate { config } => match AnalysisConfig::load(&config) {
            Ok(c) => {
                if !cli.quiet {
                    println!(
                        "ok: {} family, {} grid points, {} analyses",
                        c.family.kind_name(),
                        c.grid.len(),
                        c.analyses.len()
                    );
                }
                ExitCode::SUCCESS
            }
            Err(e) => config_failure(&e),
        },
        Command::Demo { family_kind } => {
            let config = demo_config(&family_kind).expect("clap restricts the kind");
            let dir = cli.output_dir.unwrap_or_else(|| PathBuf::from("."));
            let path = dir.join(format!("{family_kind}.json"));
            let written = std::fs::create_dir_all(&dir).and_then(|_| write_json(&path, &config));
            match written {
                Ok(()) => {
                    if !cli.quiet {
                        println!("wrote {}", path.display());
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: cannot write {}: {e}", path.display());
                    ExitCode::from(1)
                }
            }
        }
    }
}
