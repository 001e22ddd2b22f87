//! End-to-end tests of the `fermikinetics` binary: determinism, exit codes,
//! provenance headers, manifest integrity, and scenario-specific artifact
//! behavior, all through the real process boundary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sha2::{Digest, Sha256};

const BIN: &str = env!("CARGO_BIN_EXE_fermikinetics");

/// Fresh scratch directory under the system temp root, unique per call.
fn scratch(tag: &str) -> PathBuf {
    static COUNTER: std::sync::atomic::AtomicU64 = std::sync::atomic::AtomicU64::new(0);
    let k = COUNTER.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
    let dir = std::env::temp_dir().join(format!(
        "fermikinetics-e2e-{}-{tag}-{k}",
        std::process::id()
    ));
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("run.cfg");
    fs::write(&path, text).unwrap();
    path
}

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary should spawn")
}

fn run_ok(config: &Path, out: &Path) -> Output {
    let output = run(&[
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(
        output.status.success(),
        "expected success, got {:?}\nstderr: {}",
        output.status.code(),
        String::from_utf8_lossy(&output.stderr)
    );
    output
}

fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

fn manifest(dir: &Path) -> serde_json::Value {
    let text = fs::read_to_string(dir.join("manifest.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

const SMALL_EVOLVE: &str = "\
scenario = evolve
model.dim = 1
model.n = 8
params.eta = 0.5
run.t_final = 1.0
run.dt = 0.05
run.monitor_every = 5
output.formats = csv,json,binary
";

/// The same configuration run twice produces byte-identical data files and
/// manifests that differ only in wall time.
#[test]
fn repeated_runs_are_byte_identical() {
    let base = scratch("determinism");
    let config = write_config(&base, SMALL_EVOLVE);
    let out1 = base.join("a");
    let out2 = base.join("b");
    run_ok(&config, &out1);
    run_ok(&config, &out2);

    let mut names: Vec<String> = fs::read_dir(&out1)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert!(names.contains(&"trajectory.csv".to_string()));
    assert!(names.contains(&"table.fkct".to_string()));
    for name in &names {
        if name == "manifest.json" {
            continue;
        }
        let a = fs::read(out1.join(name)).unwrap();
        let b = fs::read(out2.join(name)).unwrap();
        assert_eq!(a, b, "output {name} differs between identical runs");
    }

    let mut m1 = manifest(&out1);
    let mut m2 = manifest(&out2);
    m1.as_object_mut().unwrap().remove("wall_seconds");
    m2.as_object_mut().unwrap().remove("wall_seconds");
    assert_eq!(m1, m2, "manifests differ beyond wall time");
}

/// The manifest lists every data file with its correct content hash, plus
/// the configuration hash and seed.
#[test]
fn manifest_hashes_every_output() {
    let base = scratch("manifest");
    let config_text = SMALL_EVOLVE;
    let config = write_config(&base, config_text);
    let out = base.join("out");
    run_ok(&config, &out);

    let m = manifest(&out);
    assert_eq!(m["tool"], "fermikinetics");
    assert_eq!(m["scenario"], "evolve");
    assert_eq!(m["seed"], 42);
    assert_eq!(m["config_sha256"], sha256_hex(config_text.as_bytes()));
    assert!(m["version"].as_str().unwrap().contains('.'));
    assert!(m["wall_seconds"].as_f64().unwrap() >= 0.0);

    let outputs = m["outputs"].as_array().unwrap();
    let mut listed: Vec<&str> = outputs.iter().map(|o| o["file"].as_str().unwrap()).collect();
    listed.sort();
    let mut on_disk: Vec<String> = fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n != "manifest.json")
        .collect();
    on_disk.sort();
    assert_eq!(listed, on_disk, "manifest must list exactly the data files");
    for o in outputs {
        let bytes = fs::read(out.join(o["file"].as_str().unwrap())).unwrap();
        assert_eq!(
            o["sha256"].as_str().unwrap(),
            sha256_hex(&bytes),
            "stale hash for {}",
            o["file"]
        );
    }
}

/// Every text output starts with the provenance header naming the tool,
/// version, scenario, configuration hash, seed, and defaulted keys.
#[test]
fn every_text_output_carries_provenance() {
    let base = scratch("provenance");
    let config = write_config(&base, SMALL_EVOLVE);
    let out = base.join("out");
    run_ok(&config, &out);

    for entry in fs::read_dir(&out).unwrap() {
        let path = entry.unwrap().path();
        let name = path.file_name().unwrap().to_str().unwrap().to_string();
        if name == "manifest.json" || name.ends_with(".fkct") {
            continue;
        }
        let text = fs::read_to_string(&path).unwrap();
        if name.ends_with(".csv") {
            assert!(
                text.starts_with("# fermikinetics "),
                "{name} lacks a provenance first line"
            );
        } else {
            assert!(text.contains("# fermikinetics "), "{name} lacks provenance");
        }
        assert!(text.contains("config_sha256="), "{name} lacks the config hash");
        assert!(text.contains("seed=42"), "{name} lacks the seed");
        assert!(text.contains("defaulted=["), "{name} lacks the defaulted-key echo");
    }
}

/// A broken configuration exits with code 2 and reports every problem with
/// its line number, not just the first.
#[test]
fn bad_config_exits_2_and_reports_all_errors() {
    let base = scratch("badcfg");
    let config = write_config(
        &base,
        "scenario = warp\nmodel.n = seven\nbogus.key = 1\nmodel.n = 15\n",
    );
    let output = run(&["--config", config.to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(2));
    let err = String::from_utf8_lossy(&output.stderr);
    assert!(err.contains("line 1"), "missing line 1 report: {err}");
    assert!(err.contains("line 2"), "missing line 2 report: {err}");
    assert!(err.contains("line 3"), "missing line 3 report: {err}");
    assert!(err.contains("line 4"), "missing duplicate-key report: {err}");
    assert!(err.contains("unknown key `bogus.key`"), "unknown key not named: {err}");
}

/// A missing configuration file is a usage error (exit 2).
#[test]
fn missing_config_file_exits_2() {
    let output = run(&["--config", "/nonexistent/fermikinetics.cfg"]);
    assert_eq!(output.status.code(), Some(2));
}

/// An empty configuration reports the missing scenario and exits 2.
#[test]
fn empty_config_exits_2() {
    let base = scratch("emptycfg");
    let config = write_config(&base, "");
    let output = run(&["--config", config.to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(2));
    let err = String::from_utf8_lossy(&output.stderr);
    assert!(err.contains("scenario missing"), "got: {err}");
}

/// A mathematically unattainable equilibrium target is a domain error and
/// exits 2 after parsing succeeded.
#[test]
fn unattainable_equilibrium_target_exits_2() {
    let base = scratch("equnreach");
    let config = write_config(
        &base,
        "scenario = equilibrium\nmodel.dim = 1\nmodel.n = 16\nrun.rho = 0.5\nrun.energy = 50.0\n",
    );
    let out = base.join("out");
    let output = run(&[
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(2));
    let err = String::from_utf8_lossy(&output.stderr);
    assert!(err.contains("domain error"), "got: {err}");
}

/// A constant pair potential has vanishing antisymmetrized matrix elements,
/// so the kinetic flow is frozen: the trajectory rows are all identical and
/// the final snapshot equals the initial one.
#[test]
fn constant_potential_freezes_the_trajectory() {
    let base = scratch("frozen");
    let config = write_config(
        &base,
        "scenario = evolve\nmodel.dim = 1\nmodel.n = 8\nmodel.potential = constant:2.5\n\
         params.eta = 0.5\nrun.t_final = 1.0\nrun.dt = 0.05\nrun.monitor_every = 5\n",
    );
    let out = base.join("out");
    run_ok(&config, &out);

    let traj = fs::read_to_string(out.join("trajectory.csv")).unwrap();
    let rows: Vec<&str> = traj.lines().skip(2).collect();
    assert!(rows.len() >= 3, "expected several monitor rows");
    let state_of = |row: &str| row.splitn(2, ',').nth(1).unwrap().to_string();
    let first = state_of(rows[0]);
    for row in &rows {
        assert_eq!(state_of(row), first, "trajectory moved under a constant potential");
    }

    let strip_head = |name: &str| {
        let text = fs::read_to_string(out.join(name)).unwrap();
        text.lines().skip(1).collect::<Vec<_>>().join("\n")
    };
    assert_eq!(
        strip_head("snapshot_initial.csv"),
        strip_head("snapshot_final.csv"),
        "occupation changed under a constant potential"
    );
}

/// Thread count is a performance knob only: data files are byte-identical
/// across pool sizes.
#[test]
fn thread_count_never_changes_results() {
    let base = scratch("threads");
    let config = write_config(
        &base,
        "scenario = scaling\nmodel.dim = 1\nmodel.n = 16\nparams.lambda = 0.4\n\
         run.occupation = fermi-dirac\nparams.blocks = 8, 16, 32\nparams.horizons = 8, 32, 128\n",
    );
    let out1 = base.join("t1");
    let out2 = base.join("t4");
    let run_with = |out: &Path, threads: &str| {
        let output = run(&[
            "--config",
            config.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--threads",
            threads,
        ]);
        assert!(
            output.status.success(),
            "stderr: {}",
            String::from_utf8_lossy(&output.stderr)
        );
    };
    run_with(&out1, "1");
    run_with(&out2, "4");
    for name in ["regime.csv", "regime.json", "summary.json"] {
        let a = fs::read(out1.join(name)).unwrap();
        let b = fs::read(out2.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between 1 and 4 threads");
    }
}

/// Without `--out`, artifacts land in the directory the config names.
#[test]
fn config_output_dir_is_honored() {
    let base = scratch("outdir");
    let dest = base.join("from-config");
    let config = write_config(
        &base,
        &format!(
            "scenario = equilibrium\nmodel.dim = 1\nmodel.n = 16\nrun.rho = 0.4\n\
             run.energy = -0.1\noutput.dir = {}\n",
            dest.display()
        ),
    );
    let output = run(&["--config", config.to_str().unwrap()]);
    assert!(
        output.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&output.stderr)
    );
    assert!(dest.join("summary.json").exists());
    assert!(dest.join("manifest.json").exists());
}

/// The oracle scenario cross-checks the determinant rule against the dense
/// representation and reports the worst error.
#[test]
fn oracle_scenario_reports_agreement() {
    let base = scratch("oracle");
    let config = write_config(
        &base,
        "scenario = oracle\nmodel.dim = 1\nmodel.n = 6\nrun.cases = 12\nrun.seed = 9\n",
    );
    let out = base.join("out");
    run_ok(&config, &out);
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["pass"], true);
    assert!(summary["worst_error"].as_f64().unwrap() <= 1e-10);
    let csv = fs::read_to_string(out.join("oracle.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2 + 12, "one row per case plus header lines");
}

/// The fluct scenario classifies a thermal state as convergent and reports
/// a variance ladder consistent with its spectral covariance.
#[test]
fn fluct_scenario_classifies_thermal_state() {
    let base = scratch("fluct");
    let config = write_config(
        &base,
        "scenario = fluct\nmodel.dim = 1\nmodel.n = 64\nrun.occupation = fermi-dirac\n\
         params.blocks = 4, 8, 16, 32\nparams.horizons = 16, 64\n",
    );
    let out = base.join("out");
    run_ok(&config, &out);
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["class"], "convergent");
    let limit = summary["limit"].as_f64().unwrap();
    let cov = summary["covariance"].as_f64().unwrap();
    assert!(
        (limit - cov).abs() < 1e-2 * cov.abs().max(1.0),
        "extrapolated limit {limit} far from covariance {cov}"
    );
    assert!(summary["weyl_characteristic"].as_f64().unwrap() > 0.0);
    let variance_csv = fs::read_to_string(out.join("variance.csv")).unwrap();
    assert_eq!(variance_csv.lines().count(), 2 + 4, "one row per block size");
}
