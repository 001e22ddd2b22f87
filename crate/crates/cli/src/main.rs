//! `fermikinetics` — declarative scenario runner for the lattice-fermion
//! kinetics laboratory.
//!
//! Reads a line-oriented `section.key = value` configuration, executes the
//! selected scenario (kinetic evolution, fluctuation diagnostics, regime
//! scan, determinant oracle, or equilibrium matching), and writes the
//! artifacts plus a `manifest.json` with hashes of every output. Runs are
//! deterministic: the same configuration and seed produce byte-identical
//! data files regardless of thread count.
//!
//! Exit codes: 0 success; 2 configuration or usage error; 3 numerical
//! failure; 4 convergence failure.

mod config;
mod scenarios;

use std::fs;
use std::path::PathBuf;
use std::time::Instant;

use clap::Parser;
use serde_json::json;
use sha2::{Digest, Sha256};

use config::parse_config;
use scenarios::{run_scenario, RunContext};

#[derive(Parser)]
#[command(
    name = "fermikinetics",
    version,
    about = "Kinetic evolution and fluctuation diagnostics for lattice fermions",
    disable_help_subcommand = true
)]
struct Cli {
    /// Run configuration file (line-oriented `section.key = value`).
    #[arg(long, value_name = "PATH")]
    config: PathBuf,

    /// Output directory; overrides `output.dir` from the configuration.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Worker threads for table construction and scans (default: all cores).
    /// The thread count never changes the numerical results.
    #[arg(long, value_name = "INT")]
    threads: Option<usize>,

    /// Print progress to stderr.
    #[arg(long)]
    verbose: bool,
}

fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    let digest = h.finalize();
    let mut s = String::with_capacity(64);
    for b in digest {
        use std::fmt::Write as _;
        let _ = write!(s, "{b:02x}");
    }
    s
}

fn main() {
    std::process::exit(real_main());
}

fn real_main() -> i32 {
    let cli = Cli::parse();

    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            eprintln!("fermikinetics: could not size the thread pool: {e}");
            return 2;
        }
    }

    let text = match fs::read_to_string(&cli.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("fermikinetics: cannot read config {}: {e}", cli.config.display());
            return 2;
        }
    };
    let config_sha256 = sha256_hex(text.as_bytes());

    let spec = match parse_config(&text) {
        Ok(s) => s,
        Err(errors) => {
            eprintln!("{errors}");
            return 2;
        }
    };

    let out_dir = cli.out.clone().unwrap_or_else(|| PathBuf::from(&spec.out_dir));
    let ctx = RunContext { out_dir: out_dir.clone(), config_sha256: config_sha256.clone(), verbose: cli.verbose };
    ctx_banner(&cli, &spec, &ctx);

    let started = Instant::now();
    let output = match run_scenario(&spec, &ctx) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("fermikinetics: {e}");
            return e.exit_code();
        }
    };
    let wall_seconds = started.elapsed().as_secs_f64();

    let mut outputs = Vec::with_capacity(output.files.len());
    for name in &output.files {
        let bytes = match fs::read(out_dir.join(name)) {
            Ok(b) => b,
            Err(e) => {
                eprintln!("fermikinetics: cannot hash output {name}: {e}");
                return 2;
            }
        };
        outputs.push(json!({ "file": name, "sha256": sha256_hex(&bytes) }));
    }
    let manifest = json!({
        "tool": "fermikinetics",
        "version": env!("CARGO_PKG_VERSION"),
        "scenario": spec.scenario.to_string(),
        "config_sha256": config_sha256,
        "seed": spec.seed,
        "threads": rayon::current_num_threads(),
        "defaulted": spec.defaulted,
        "wall_seconds": wall_seconds,
        "outputs": outputs,
    });
    let mut manifest_text =
        serde_json::to_string_pretty(&manifest).expect("manifest serialization is infallible");
    manifest_text.push('\n');
    if let Err(e) = fs::write(out_dir.join("manifest.json"), manifest_text) {
        eprintln!("fermikinetics: cannot write manifest: {e}");
        return 2;
    }
    if cli.verbose {
        eprintln!(
            "fermikinetics: {} file(s) + manifest in {} ({wall_seconds:.2} s)",
            output.files.len(),
            out_dir.display()
        );
    }
    0
}

fn ctx_banner(cli: &Cli, spec: &config::RunSpec, ctx: &RunContext) {
    if !cli.verbose {
        return;
    }
    eprintln!(
        "fermikinetics: scenario={} model=({}d, n={}) seed={} formats={} out={}",
        spec.scenario,
        spec.dim,
        spec.n,
        spec.seed,
        scenarios::format_names(&spec.formats),
        ctx.out_dir.display()
    );
    if !spec.defaulted.is_empty() {
        eprintln!("fermikinetics: defaulted keys: {}", spec.defaulted.join(", "));
    }
}
