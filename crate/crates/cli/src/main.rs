use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};

use trimshift::experiments::{summarize, Experiment, RunOptions};
use trimshift::spectral::{assemble_transfer, leading_eigenpair, property_f_audit, spectral_gap};
use trimshift::{ExperimentConfig, ExperimentReport};

#[derive(Parser)]
#[command(name = "trimshift", version, about = "Trimmed sums of heavy-tailed observables on subshifts of finite type")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured ensemble and write report.csv, summary.json and manifest.json.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Worker threads; the report does not depend on it.
        #[arg(long, env = "TRIMSHIFT_THREADS")]
        threads: Option<usize>,
        #[arg(long)]
        seed_override: Option<u64>,
    },
    /// Print the leading eigenvalue, |lambda_2| and the leading eigenvector as JSON.
    Spectrum {
        #[arg(long)]
        config: PathBuf,
        /// Cylinder depth; defaults to the `depth` key of the config.
        #[arg(long)]
        depth: Option<usize>,
    },
    /// Check seminorm constants, the Gibbs bracket and the spectral gap.
    Audit {
        #[arg(long)]
        config: PathBuf,
    },
    /// Summarize a report CSV.
    Summarize {
        report: PathBuf,
        /// Write the JSON summary here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    ExperimentConfig::parse(&text).with_context(|| format!("in {}", path.display()))
}

/// Writes through a temporary file in the same directory, so `path` is
/// either complete or absent.
fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).with_context(|| format!("creating a file in {}", dir.display()))?;
    tmp.write_all(contents)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn unix_seconds() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

#[derive(Serialize)]
struct OutputDigest {
    file: String,
    sha256: String,
}

#[derive(Serialize)]
struct Manifest {
    tool: &'static str,
    version: &'static str,
    master_seed: u64,
    threads: Option<usize>,
    started_unix: u64,
    finished_unix: u64,
    config: String,
    outputs: Vec<OutputDigest>,
}

fn simulate(config: &Path, out: &Path, threads: Option<usize>, seed_override: Option<u64>) -> Result<()> {
    let started = unix_seconds();
    let mut config = load_config(config)?;
    if let Some(seed) = seed_override {
        config.seed = seed;
    }
    if threads == Some(0) {
        bail!("--threads must be positive");
    }
    let report = Experiment::new(&config)?.run(RunOptions { threads })?;
    let csv = report.to_csv();
    let summary = serde_json::to_string_pretty(&summarize(&report)?)? + "\n";

    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let outputs = [("report.csv", csv.as_bytes()), ("summary.json", summary.as_bytes())];
    let manifest = Manifest {
        tool: "trimshift",
        version: env!("CARGO_PKG_VERSION"),
        master_seed: config.seed,
        threads,
        started_unix: started,
        finished_unix: unix_seconds(),
        config: config.to_text(),
        outputs: outputs
            .iter()
            .map(|(file, bytes)| OutputDigest {
                file: file.to_string(),
                sha256: sha256_hex(bytes),
            })
            .collect(),
    };
    let manifest = serde_json::to_string_pretty(&manifest)? + "\n";
    for (file, bytes) in outputs.iter().chain([&("manifest.json", manifest.as_bytes())]) {
        write_atomic(&out.join(file), bytes)?;
    }
    println!(
        "wrote {} rows to {}",
        report.rows.len(),
        out.join("report.csv").display()
    );
    Ok(())
}

#[derive(Serialize)]
struct Spectrum {
    depth: usize,
    lambda1: f64,
    gap: f64,
    eigvec: Vec<f64>,
}

fn spectrum(config: &Path, depth: Option<usize>) -> Result<()> {
    let config = load_config(config)?;
    let depth = depth.unwrap_or(config.depth);
    let measure = config.measure()?;
    let t = assemble_transfer(&measure, depth)?;
    let pair = leading_eigenpair(&t)?;
    let gap = spectral_gap(&t)?;
    let out = Spectrum {
        depth,
        lambda1: pair.lambda,
        gap,
        eigvec: pair.eigvec,
    };
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(())
}

fn audit(config: &Path) -> Result<bool> {
    let config = load_config(config)?;
    let measure = config.measure()?;
    let observable = config.build_observable(&measure)?;
    // Only return-time observables have atoms; anything else is rejected by the audit.
    let grid: Vec<f64> = match &observable {
        trimshift::Observable::ReturnTime(chi) => (0..=config.audit_levels).map(|k| chi.atom(k)).collect(),
        _ => Vec::new(),
    };
    let k = property_f_audit(&observable, &measure, config.eps0, &grid)?;
    let gibbs = measure.verify_gibbs(config.gibbs_depth)?;
    let gap = spectral_gap(&assemble_transfer(&measure, config.depth)?)?;

    let rows = [
        ("K1_hat", k.k1_hat, config.k1_max),
        ("K2_hat", k.k2_hat, config.k2_max),
        ("K3_hat", k.k3_hat, config.k3_max),
    ];
    let mut ok = true;
    println!("{:<14} {:>22} {:>22}  status", "quantity", "value", "ceiling");
    for (name, value, ceiling) in rows {
        let pass = value.is_finite() && value <= ceiling;
        ok &= pass;
        println!("{name:<14} {value:>22.15e} {ceiling:>22.15e}  {}", if pass { "PASS" } else { "FAIL" });
    }
    let gibbs_ok = gibbs.k_lower > 0.0 && gibbs.k_upper.is_finite();
    ok &= gibbs_ok;
    println!(
        "{:<14} {:>22.15e} {:>22.15e}  {}",
        "gibbs_bracket",
        gibbs.k_lower,
        gibbs.k_upper,
        if gibbs_ok { "PASS" } else { "FAIL" }
    );
    println!("{:<14} {:>22.15e} {:>22.15e}  PASS", "lambda_2", gap, 1.0);
    Ok(ok)
}

fn summarize_file(report: &Path, out: Option<&Path>) -> Result<()> {
    let text = fs::read_to_string(report).with_context(|| format!("reading {}", report.display()))?;
    let report = ExperimentReport::from_csv(&text).with_context(|| format!("in {}", report.display()))?;
    let json = serde_json::to_string_pretty(&summarize(&report)?)? + "\n";
    match out {
        Some(path) => write_atomic(path, json.as_bytes()),
        None => {
            print!("{json}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate {
            config,
            out,
            threads,
            seed_override,
        } => simulate(config, out, *threads, *seed_override).map(|()| true),
        Command::Spectrum { config, depth } => spectrum(config, *depth).map(|()| true),
        Command::Audit { config } => audit(config),
        Command::Summarize { report, out } => summarize_file(report, out.as_deref()).map(|()| true),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
