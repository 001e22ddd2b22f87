//! Scenario execution: builds the model a [`RunSpec`] describes, runs the
//! requested workflow, and writes its artifacts (CSV / JSON / binary) with a
//! provenance header on every file.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use fermikinetics_core::collision::{build_table, default_eta, TableMode};
use fermikinetics_core::equilibrium::match_equilibrium;
use fermikinetics_core::fluctuations::{
    block_variance, regime_scan, variance_limit, weyl_char, ProbeKernel, RegimeLabel,
    RegimeThresholds, ScanMoment, VarianceClass,
};
use fermikinetics_core::fock::{FockRep, SmearedWord};
use fermikinetics_core::kinetics::evolve;
use fermikinetics_core::quasifree::SiteProfile;
use fermikinetics_core::{
    Dispersion64, Error, Grid, Occupation64, PairPotential64, QuadraticObservable64,
    QuasifreeState64, Result, ScalingParameters64,
};

use crate::config::{
    EtaSpec, Formats, ModeKind, ObservableKind, PotentialKind, RunSpec, Scenario, StateKind,
};

type C64 = fermikinetics_core::C<f64>;

/// Everything a scenario needs beyond the parsed run description.
pub struct RunContext {
    pub out_dir: PathBuf,
    pub config_sha256: String,
    pub verbose: bool,
}

impl RunContext {
    fn log(&self, msg: &str) {
        if self.verbose {
            eprintln!("fermikinetics: {msg}");
        }
    }
}

/// Relative names of the files a scenario wrote, in write order.
pub struct RunOutput {
    pub files: Vec<String>,
}

/// Provenance header placed as the first line of every output file.
fn provenance(spec: &RunSpec, ctx: &RunContext) -> String {
    format!(
        "# fermikinetics {} scenario={} config_sha256={} seed={} defaulted=[{}]",
        env!("CARGO_PKG_VERSION"),
        spec.scenario,
        ctx.config_sha256,
        spec.seed,
        spec.defaulted.join(",")
    )
}

fn write_file(ctx: &RunContext, out: &mut RunOutput, name: &str, bytes: &[u8]) -> Result<()> {
    let path: &Path = &ctx.out_dir.join(name);
    fs::write(path, bytes)?;
    ctx.log(&format!("wrote {}", path.display()));
    out.files.push(name.to_string());
    Ok(())
}

fn build_model(spec: &RunSpec) -> Result<(Grid, Dispersion64, PairPotential64)> {
    let grid = Grid::new(spec.dim, spec.n)?;
    let band = match spec.band {
        crate::config::BandKind::Cosine => Dispersion64::cosine(&grid),
    };
    let v = match spec.potential {
        PotentialKind::Cosine => PairPotential64::cosine(&grid),
        PotentialKind::Constant(c) => PairPotential64::constant(&grid, c),
    };
    Ok((grid, band, v))
}

fn build_occupation(spec: &RunSpec, grid: &Grid, band: &Dispersion64) -> Result<Occupation64> {
    match spec.occupation {
        StateKind::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            let w: Vec<f64> = (0..grid.len()).map(|_| 0.05 + 0.9 * rng.random::<f64>()).collect();
            Occupation64::new(grid, w)
        }
        StateKind::FermiDirac => Occupation64::fermi_dirac(band, spec.beta, spec.mu),
        StateKind::SharpSea => Occupation64::sharp_sea(band, spec.mu),
        StateKind::Constant(rho) => Occupation64::constant(grid, rho),
    }
}

fn resolve_eta(spec: &RunSpec, band: &Dispersion64) -> f64 {
    match spec.eta {
        EtaSpec::Auto => default_eta(band),
        EtaSpec::Fixed(e) => e,
    }
}

fn table_mode(spec: &RunSpec) -> TableMode {
    match spec.mode {
        ModeKind::Mollified => TableMode::Mollified,
        ModeKind::ExactShell => TableMode::ExactShell,
    }
}

fn build_observable(spec: &RunSpec, grid: &Grid) -> Result<QuadraticObservable64> {
    match spec.observable {
        ObservableKind::Number => QuadraticObservable64::number_at(grid, [0, 0]),
        ObservableKind::Hopping => {
            let one = C64::new(1.0, 0.0);
            let origin = grid.site([0, 0]);
            let neighbor = grid.site([1, 0]);
            QuadraticObservable64::from_profiles(grid, vec![(origin, one)], vec![(neighbor, one)])
        }
    }
}

fn thresholds(spec: &RunSpec) -> Option<RegimeThresholds<f64>> {
    match (spec.threshold_regular, spec.threshold_divergent) {
        (Some(regular), Some(divergent)) => Some(RegimeThresholds { regular, divergent }),
        _ => None,
    }
}

/// Runs the selected scenario and returns the files it wrote.
pub fn run_scenario(spec: &RunSpec, ctx: &RunContext) -> Result<RunOutput> {
    fs::create_dir_all(&ctx.out_dir)?;
    let mut out = RunOutput { files: Vec::new() };
    match spec.scenario {
        Scenario::Evolve => run_evolve(spec, ctx, &mut out)?,
        Scenario::Fluct => run_fluct(spec, ctx, &mut out)?,
        Scenario::Scaling => run_scaling(spec, ctx, &mut out)?,
        Scenario::Oracle => run_oracle(spec, ctx, &mut out)?,
        Scenario::Equilibrium => run_equilibrium(spec, ctx, &mut out)?,
    }
    Ok(out)
}

fn snapshot_csv(head: &str, grid: &Grid, w: &Occupation64) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{head}");
    let _ = writeln!(s, "idx,p0,p1,w");
    for j in grid.indices() {
        let p: [f64; 2] = grid.momentum(j);
        let _ = writeln!(s, "{},{},{},{}", j, p[0], p[1], w.value(j));
    }
    s
}

fn run_evolve(spec: &RunSpec, ctx: &RunContext, out: &mut RunOutput) -> Result<()> {
    let (grid, band, v) = build_model(spec)?;
    let w0 = build_occupation(spec, &grid, &band)?;
    let eta = resolve_eta(spec, &band);
    let params = ScalingParameters64::new(spec.lambda, spec.time_scale, spec.block, eta)?;
    ctx.log(&format!(
        "building collision table (nu={}, n={}, eta={eta:.3e}, mode={})",
        spec.dim,
        spec.n,
        table_mode(spec)
    ));
    let table = build_table(&band, &v, &params, None, table_mode(spec))?;
    ctx.log(&format!("table has {} entries; integrating to t = {}", table.len(), spec.t_final));
    let traj = evolve(&w0, &band, &table, spec.t_final, spec.dt, spec.monitor_every)?;
    let head = provenance(spec, ctx);

    if spec.formats.csv {
        let mut csv = String::new();
        let _ = writeln!(csv, "{head}");
        let _ = writeln!(csv, "t,rho,energy,entropy,dist_fd");
        for p in &traj.points {
            let _ = writeln!(csv, "{},{},{},{},{}", p.t, p.rho, p.energy, p.entropy, p.dist_fd);
        }
        write_file(ctx, out, "trajectory.csv", csv.as_bytes())?;

        let mut ent = String::new();
        let _ = writeln!(ent, "{head}");
        let _ = writeln!(ent, "t,entropy");
        for (t, s) in &traj.entropy_steps {
            let _ = writeln!(ent, "{t},{s}");
        }
        write_file(ctx, out, "entropy.csv", ent.as_bytes())?;

        write_file(ctx, out, "snapshot_initial.csv", snapshot_csv(&head, &grid, &w0).as_bytes())?;
        write_file(
            ctx,
            out,
            "snapshot_final.csv",
            snapshot_csv(&head, &grid, &traj.last().w).as_bytes(),
        )?;
    }

    if spec.formats.json {
        let last = traj.last();
        let summary = json!({
            "provenance": head,
            "scenario": "evolve",
            "table_entries": table.len(),
            "eta": table.eta(),
            "accepted_steps": traj.accepted_steps,
            "rejected_steps": traj.rejected_steps,
            "final_dt": traj.final_dt,
            "max_density_drift": traj.max_density_drift,
            "max_energy_drift": traj.max_energy_drift,
            "final": {
                "t": last.t,
                "rho": last.rho,
                "energy": last.energy,
                "entropy": last.entropy,
                "dist_fd": last.dist_fd,
            },
        });
        write_file(ctx, out, "summary.json", pretty(&summary).as_bytes())?;
    }

    if spec.formats.binary {
        let mut buf: Vec<u8> = Vec::new();
        table.write_binary(&mut buf)?;
        write_file(ctx, out, "table.fkct", &buf)?;
    }
    Ok(())
}

fn run_fluct(spec: &RunSpec, ctx: &RunContext, out: &mut RunOutput) -> Result<()> {
    let (grid, band, v) = build_model(spec)?;
    let w = build_occupation(spec, &grid, &band)?;
    let state = QuasifreeState64::new(w);
    let a = build_observable(spec, &grid)?;
    let head = provenance(spec, ctx);

    ctx.log(&format!("block ladder {:?}", spec.blocks));
    let mut ladder: Vec<(usize, f64)> = Vec::with_capacity(spec.blocks.len());
    for &k in &spec.blocks {
        ladder.push((k, block_variance(&state, &a, k)?));
    }
    let verdict = variance_limit(&state, &a, &spec.blocks)?;
    let covariance = state.covariance(&a, &a)?;
    let characteristic = match weyl_char(&state, &a) {
        Ok(c) => Some(c),
        Err(Error::Domain(_)) | Err(Error::Config(_)) => None,
        Err(e) => return Err(e),
    };

    if spec.formats.csv {
        let mut csv = String::new();
        let _ = writeln!(csv, "{head}");
        let _ = writeln!(csv, "K,variance");
        for (k, val) in &ladder {
            let _ = writeln!(csv, "{k},{val}");
        }
        write_file(ctx, out, "variance.csv", csv.as_bytes())?;

        if spec.lambda > 0.0 && !spec.horizons.is_empty() {
            let kernel = ProbeKernel::build(&state, &band, &v, spec.lambda, &a)?;
            let mut csv = String::new();
            let _ = writeln!(csv, "{head}");
            let _ = writeln!(csv, "N,abs,re,im");
            for &horizon in &spec.horizons {
                let z = kernel.eval(horizon)?;
                let _ = writeln!(csv, "{},{},{},{}", horizon, z.norm(), z.re, z.im);
            }
            write_file(ctx, out, "probe.csv", csv.as_bytes())?;
        }
    }

    if spec.formats.json {
        let class = match verdict.class {
            VarianceClass::Convergent => "convergent",
            VarianceClass::MarginalDivergent => "marginal-divergent",
        };
        let summary = json!({
            "provenance": head,
            "scenario": "fluct",
            "class": class,
            "limit": verdict.limit,
            "log_slope": verdict.log_slope,
            "scaled_slope": verdict.scaled_slope,
            "increment_ratio": verdict.increment_ratio,
            "covariance": covariance,
            "weyl_characteristic": characteristic,
            "blocks": verdict.values.iter().map(|(k, _)| *k).collect::<Vec<_>>(),
            "variances": verdict.values.iter().map(|(_, x)| *x).collect::<Vec<_>>(),
        });
        write_file(ctx, out, "summary.json", pretty(&summary).as_bytes())?;
    }
    Ok(())
}

fn run_scaling(spec: &RunSpec, ctx: &RunContext, out: &mut RunOutput) -> Result<()> {
    let (grid, band, v) = build_model(spec)?;
    let w = build_occupation(spec, &grid, &band)?;
    let state = QuasifreeState64::new(w);
    let a = build_observable(spec, &grid)?;
    let head = provenance(spec, ctx);

    ctx.log(&format!(
        "regime scan over {} blocks x {} horizons",
        spec.blocks.len(),
        spec.horizons.len()
    ));
    let report = regime_scan(
        &state,
        &band,
        &v,
        spec.lambda,
        &a,
        &spec.blocks,
        &spec.horizons,
        ScanMoment::Variance,
        thresholds(spec),
    )?;

    if spec.formats.csv {
        let mut buf: Vec<u8> = format!("{head}\n").into_bytes();
        report.write_csv(&mut buf)?;
        write_file(ctx, out, "regime.csv", &buf)?;
    }
    if spec.formats.json {
        let mut buf: Vec<u8> = Vec::new();
        report.write_json(&mut buf)?;
        write_file(ctx, out, "regime.json", &buf)?;

        let count = |want: RegimeLabel| {
            report.cells.iter().filter(|c| c.label == Some(want)).count()
        };
        let summary = json!({
            "provenance": head,
            "scenario": "scaling",
            "exponent": report.exponent,
            "base_variance": report.base_variance,
            "cells": report.cells.len(),
            "regular": count(RegimeLabel::Regular),
            "finite_shifted": count(RegimeLabel::FiniteShifted),
            "divergent": count(RegimeLabel::Divergent),
        });
        write_file(ctx, out, "summary.json", pretty(&summary).as_bytes())?;
    }
    Ok(())
}

/// Momentum coefficients of the smeared creator `a*(f) = Σ_x conj(f_x) d†_x`.
fn creator_coeffs(rep: &FockRep, profile: &SiteProfile<f64>) -> Vec<C64> {
    let mut acc = vec![C64::new(0.0, 0.0); rep.sites()];
    for &(site, amp) in profile {
        for (a, b) in acc.iter_mut().zip(&rep.position_coeffs(true, site as i64)) {
            *a += amp.conj() * b;
        }
    }
    acc
}

/// Momentum coefficients of the smeared annihilator `a(g) = Σ_x g_x d_x`.
fn annihilator_coeffs(rep: &FockRep, profile: &SiteProfile<f64>) -> Vec<C64> {
    let mut acc = vec![C64::new(0.0, 0.0); rep.sites()];
    for &(site, amp) in profile {
        for (a, b) in acc.iter_mut().zip(&rep.position_coeffs(false, site as i64)) {
            *a += amp * b;
        }
    }
    acc
}

fn random_profile(rng: &mut ChaCha8Rng, l: usize) -> SiteProfile<f64> {
    let support = 1 + rng.random_range(0..3usize);
    let mut profile: SiteProfile<f64> = Vec::new();
    while profile.len() < support {
        let site = rng.random_range(0..l);
        if profile.iter().any(|&(s, _)| s == site) {
            continue;
        }
        let amp = C64::new(2.0 * rng.random::<f64>() - 1.0, 2.0 * rng.random::<f64>() - 1.0);
        profile.push((site, amp));
    }
    profile
}

fn run_oracle(spec: &RunSpec, ctx: &RunContext, out: &mut RunOutput) -> Result<()> {
    let l = spec.n;
    let grid = Grid::new(1, l)?;
    let rep = FockRep::new(l)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let head = provenance(spec, ctx);
    let tolerance = 1e-10;

    let mut rows: Vec<(usize, usize, f64)> = Vec::with_capacity(spec.cases);
    let mut worst = 0.0f64;
    for case in 0..spec.cases {
        let w: Vec<f64> = (0..l).map(|_| 0.05 + 0.9 * rng.random::<f64>()).collect();
        let state = QuasifreeState64::new(Occupation64::new(&grid, w.clone())?);
        let dense = rep.gaussian_state(&w)?;
        let r = 1 + case % 3;
        let creators: Vec<SiteProfile<f64>> = (0..r).map(|_| random_profile(&mut rng, l)).collect();
        let annihilators: Vec<SiteProfile<f64>> =
            (0..r).map(|_| random_profile(&mut rng, l)).collect();

        let rule = state.wick_expect(&creators, &annihilators)?;
        // Word order a*(f_1)…a*(f_r) a(g_r)…a(g_1): creators left to right,
        // annihilators reversed.
        let mut letters: Vec<(bool, Vec<C64>)> =
            creators.iter().map(|f| (true, creator_coeffs(&rep, f))).collect();
        for g in annihilators.iter().rev() {
            letters.push((false, annihilator_coeffs(&rep, g)));
        }
        let exact = rep.expect_word(&dense, &SmearedWord { letters })?;

        let err = (rule - exact).norm();
        worst = worst.max(err);
        rows.push((case, r, err));
        ctx.log(&format!("case {case}: r={r} error={err:.3e}"));
    }

    if spec.formats.csv {
        let mut csv = String::new();
        let _ = writeln!(csv, "{head}");
        let _ = writeln!(csv, "case,r,error");
        for (case, r, err) in &rows {
            let _ = writeln!(csv, "{case},{r},{err:e}");
        }
        write_file(ctx, out, "oracle.csv", csv.as_bytes())?;
    }
    if spec.formats.json {
        let summary = json!({
            "provenance": head,
            "scenario": "oracle",
            "sites": l,
            "cases": spec.cases,
            "worst_error": worst,
            "tolerance": tolerance,
            "pass": worst <= tolerance,
        });
        write_file(ctx, out, "summary.json", pretty(&summary).as_bytes())?;
    }
    if worst > tolerance {
        return Err(Error::Numerical(format!(
            "determinant rule disagrees with the dense representation: worst error {worst:e} > {tolerance:e}"
        )));
    }
    Ok(())
}

fn run_equilibrium(spec: &RunSpec, ctx: &RunContext, out: &mut RunOutput) -> Result<()> {
    let (grid, band, _) = build_model(spec)?;
    let rho = spec.rho.expect("validated at parse time");
    let energy = spec.energy.expect("validated at parse time");
    ctx.log(&format!("matching (rho, e) = ({rho}, {energy})"));
    let params = match_equilibrium(&band, rho, energy)?;
    let w = params.occupation(&band)?;
    let (rho_got, e_got) = w.density_energy(&band)?;
    let head = provenance(spec, ctx);

    if spec.formats.csv {
        let mut csv = String::new();
        let _ = writeln!(csv, "{head}");
        let _ = writeln!(csv, "idx,p0,p1,energy,w");
        for j in grid.indices() {
            let p: [f64; 2] = grid.momentum(j);
            let _ = writeln!(csv, "{},{},{},{},{}", j, p[0], p[1], band.values()[j], w.value(j));
        }
        write_file(ctx, out, "equilibrium.csv", csv.as_bytes())?;
    }
    if spec.formats.json {
        let summary = json!({
            "provenance": head,
            "scenario": "equilibrium",
            "beta": params.beta,
            "mu": params.mu,
            "shift": params.shift,
            "degenerate": params.degenerate,
            "target_rho": rho,
            "target_energy": energy,
            "achieved_rho": rho_got,
            "achieved_energy": e_got,
        });
        write_file(ctx, out, "summary.json", pretty(&summary).as_bytes())?;
    }
    Ok(())
}

fn pretty(v: &serde_json::Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json serialization is infallible here");
    s.push('\n');
    s
}

/// Formats gate which artifact families are written; re-exported for the
/// binary's format summary in verbose mode.
pub fn format_names(f: &Formats) -> String {
    let mut names = Vec::new();
    if f.csv {
        names.push("csv");
    }
    if f.json {
        names.push("json");
    }
    if f.binary {
        names.push("binary");
    }
    names.join(",")
}
