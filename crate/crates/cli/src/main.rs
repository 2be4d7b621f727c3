//! `acl` — config-driven runs of the conductivity lab.
//!
//! Every subcommand reads one INI config, runs, and writes CSV artifacts
//! plus a `manifest.json` into `--out`; `verify-algebra` also prints its
//! residual table to stdout (and only needs `--out` when the files should
//! be kept). Failures print a one-line JSON error description to stderr
//! and exit nonzero: 2 for config problems, 1 for everything else.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use acl_core::driver::{self, DriverError, RunManifest};
use acl_core::reconstruct::ReconstructMode;

#[derive(Parser)]
#[command(
    name = "acl",
    version,
    about = "Quasilinear conductivity experiments: forward solves, amplitude asymptotics, and Fourier-slice recovery"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum Mode {
    /// First-order responses as volume integrals with the known γ.
    Oracle,
    /// First-order responses from boundary data only.
    EndToEnd,
}

#[derive(Subcommand)]
enum Command {
    /// Check the probe-frame identities on randomly sampled admissible frames.
    VerifyAlgebra {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the config trial count.
        #[arg(long)]
        trials: Option<usize>,
        /// Also write the residual table and manifest here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve the quasilinear problem once with the configured boundary data.
    Solve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the amplitude-scaling experiment along the ε schedule.
    Asymptotics {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare central difference quotients against the linearized solution.
    Linearize {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Recover the transform slice γ̂(2ξ) at every configured frequency.
    Reconstruct {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum)]
        mode: Mode,
    },
    /// Tabulate the direct quadrature reference γ̂(2ξ).
    GammaHat {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Verify a finished run's checksums and reprint its tables.
    Report {
        #[arg(long)]
        manifest: PathBuf,
    },
}

fn describe(manifest: &RunManifest, out: &Path) -> String {
    let mut text = String::new();
    for artifact in &manifest.artifacts {
        text.push_str(&format!(
            "wrote {} ({} bytes)\n",
            out.join(&artifact.path).display(),
            artifact.bytes
        ));
    }
    text.push_str(&format!(
        "wrote {}\n",
        out.join(driver::MANIFEST_FILE).display()
    ));
    match serde_json::to_string_pretty(&manifest.summary) {
        Ok(s) => text + &s,
        Err(_) => text,
    }
}

fn run(command: Command) -> Result<String, (&'static str, DriverError)> {
    match command {
        Command::VerifyAlgebra {
            config,
            seed,
            trials,
            out,
        } => {
            const NAME: &str = "verify-algebra";
            let mut cfg = driver::load_config(&config).map_err(|e| (NAME, e))?;
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            if let Some(trials) = trials {
                cfg.trials = trials;
            }
            match out {
                Some(dir) => {
                    let manifest =
                        driver::run_verify_algebra(&cfg, &dir).map_err(|e| (NAME, e))?;
                    let table = std::fs::read_to_string(dir.join(&manifest.artifacts[0].path))
                        .map_err(|source| {
                            (
                                NAME,
                                DriverError::Io {
                                    path: dir.join(&manifest.artifacts[0].path),
                                    source,
                                },
                            )
                        })?;
                    Ok(format!("{table}\n{}", describe(&manifest, &dir)))
                }
                None => {
                    let (table, summary) =
                        driver::verify_algebra_table(&cfg).map_err(|e| (NAME, e))?;
                    let summary = serde_json::to_string_pretty(&summary).unwrap_or_default();
                    Ok(format!("{table}\n{summary}"))
                }
            }
        }
        Command::Solve { config, out } => {
            let cfg = driver::load_config(&config).map_err(|e| ("solve", e))?;
            let manifest = driver::run_solve(&cfg, &out).map_err(|e| ("solve", e))?;
            Ok(describe(&manifest, &out))
        }
        Command::Asymptotics { config, out } => {
            let cfg = driver::load_config(&config).map_err(|e| ("asymptotics", e))?;
            let manifest = driver::run_asymptotics(&cfg, &out).map_err(|e| ("asymptotics", e))?;
            Ok(describe(&manifest, &out))
        }
        Command::Linearize { config, out } => {
            let cfg = driver::load_config(&config).map_err(|e| ("linearize", e))?;
            let manifest = driver::run_linearize(&cfg, &out).map_err(|e| ("linearize", e))?;
            Ok(describe(&manifest, &out))
        }
        Command::Reconstruct { config, out, mode } => {
            let cfg = driver::load_config(&config).map_err(|e| ("reconstruct", e))?;
            let mode = match mode {
                Mode::Oracle => ReconstructMode::Oracle,
                Mode::EndToEnd => ReconstructMode::EndToEnd,
            };
            let manifest =
                driver::run_reconstruct(&cfg, &out, mode).map_err(|e| ("reconstruct", e))?;
            Ok(describe(&manifest, &out))
        }
        Command::GammaHat { config, out } => {
            let cfg = driver::load_config(&config).map_err(|e| ("gamma-hat", e))?;
            let manifest = driver::run_gamma_hat(&cfg, &out).map_err(|e| ("gamma-hat", e))?;
            Ok(describe(&manifest, &out))
        }
        Command::Report { manifest } => {
            driver::run_report(&manifest).map_err(|e| ("report", e))
        }
    }
}

fn main() -> ExitCode {
    use std::io::Write as _;
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(text) => {
            // A closed pipe (e.g. piping into head) is not an error.
            let _ = writeln!(std::io::stdout().lock(), "{text}");
            ExitCode::SUCCESS
        }
        Err((subcommand, err)) => {
            let _ = writeln!(
                std::io::stderr().lock(),
                "{}",
                driver::error_json(subcommand, &err)
            );
            match err {
                DriverError::Config(_) => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
