//! Experiment orchestration: resolving initial data, running the integrator
//! with monitors, and persisting reproducible artifacts (CSV + manifest +
//! plot script).  The ground-state cache lives here too.

use crate::config::{InitialData, RunConfig};
use crate::diagnostics::{self, Classification, Fate, Verdict};
use crate::evolve::{self, Sample, Termination, TimeSeries, VirialRecord};
use crate::grid::{RadialField, RadialGrid};
use crate::groundstate::{self, GroundState, SolveOpts, Thresholds};
use crate::params::{self, ProblemSpec};
use crate::{Error, Result};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub config: RunConfig,
    pub thresholds: Thresholds,
    pub ground_state_mass: f64,
    pub termination: Termination,
    pub termination_detail: String,
    pub classification: Classification,
    pub fate: Fate,
    /// True when the a-priori verdict and the simulated fate agree.
    pub concordance: bool,
    pub scattering_norm_accumulation: f64,
    /// sha256 of every emitted CSV, keyed by file name.
    pub checksums: BTreeMap<String, String>,
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path)?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(format!("{:x}", hasher.finalize()))
}

/// Writes a field as CSV.  Floats use shortest round-trip formatting, so a
/// parse/re-emit cycle is bit-exact.
pub fn write_field_csv(path: &Path, u: &RadialField) -> Result<()> {
    let mut out = String::from("r,re,im\n");
    for (&r, z) in u.grid().nodes().iter().zip(u.values()) {
        out.push_str(&format!("{},{},{}\n", r, z.re, z.im));
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Reads a field CSV produced by [`write_field_csv`] onto the given grid.
pub fn read_field_csv(path: &Path, grid: &Arc<RadialGrid>) -> Result<RadialField> {
    let text = std::fs::read_to_string(path)?;
    let mut values = Vec::with_capacity(grid.len());
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            if line != "r,re,im" {
                return Err(Error::Config(format!(
                    "{}: unexpected header {line:?}",
                    path.display()
                )));
            }
            continue;
        }
        let mut parts = line.split(',');
        let bad = || Error::Config(format!("{}: malformed row {i}", path.display()));
        let _r: f64 = parts.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
        let re: f64 = parts.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
        let im: f64 = parts.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
        values.push(Complex64::new(re, im));
    }
    if values.len() != grid.len() {
        return Err(Error::Config(format!(
            "{}: {} rows but the grid has {} nodes",
            path.display(),
            values.len(),
            grid.len()
        )));
    }
    Ok(RadialField::from_values(Arc::clone(grid), values)?)
}

fn write_series_csv(path: &Path, series: &TimeSeries) -> Result<()> {
    let mut out = String::from(
        "t,mass,energy,kinetic_a,lp,variance,virial_first,virial_rhs_full,boundary_mass_fraction,scattering_density\n",
    );
    for s in &series.samples {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            s.t,
            s.observables.mass,
            s.observables.energy,
            s.observables.kinetic_a,
            s.observables.lp,
            s.virial.variance,
            s.virial.first_derivative,
            s.virial.rhs_full,
            s.boundary_mass_fraction,
            s.scattering_density,
        ));
    }
    std::fs::write(path, out)?;
    Ok(())
}

const PLOT_SCRIPT: &str = r#"#!/usr/bin/env python3
"""Plots the observable time series of a run directory."""
import csv
import sys
from pathlib import Path

import matplotlib.pyplot as plt

run_dir = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(__file__).parent
rows = list(csv.DictReader(open(run_dir / "series.csv")))
t = [float(r["t"]) for r in rows]

fig, axes = plt.subplots(2, 2, figsize=(10, 7), sharex=True)
panels = [
    ("energy", "E_a"),
    ("kinetic_a", "kinetic"),
    ("lp", "L^p potential term"),
    ("variance", "V(t; |x|^2)"),
]
for ax, (col, label) in zip(axes.flat, panels):
    ax.plot(t, [float(r[col]) for r in rows])
    ax.set_ylabel(label)
    ax.grid(True, alpha=0.3)
for ax in axes[-1]:
    ax.set_xlabel("t")
fig.tight_layout()
fig.savefig(run_dir / "run.png", dpi=150)
print(run_dir / "run.png")
"#;

fn cache_dir() -> PathBuf {
    std::env::var_os("NLSLAB_CACHE")
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("nlslab-gs-cache"))
}

#[derive(Debug, Serialize, Deserialize)]
struct GsCacheRecord {
    d: u32,
    a_used: f64,
    alpha: f64,
    n: usize,
    r_max: f64,
    tol: f64,
    elliptic_tol: f64,
    c_a: f64,
    elliptic_residual: f64,
    iterations: usize,
    values: Vec<f64>,
}

fn cache_path(spec: &ProblemSpec, grid: &RadialGrid, opts: &SolveOpts) -> PathBuf {
    cache_dir().join(format!(
        "gs_d{}_a{}_alpha{}_n{}_rmax{}_tol{}_etol{}.json",
        spec.d,
        spec.a.min(0.0),
        spec.alpha,
        grid.len(),
        grid.r_max(),
        opts.tol,
        opts.elliptic_tol,
    ))
}

fn try_load_cached(
    path: &Path,
    spec: &ProblemSpec,
    grid: &Arc<RadialGrid>,
    opts: &SolveOpts,
) -> Option<GroundState> {
    let text = std::fs::read_to_string(path).ok()?;
    let rec: GsCacheRecord = serde_json::from_str(&text).ok()?;
    if rec.d != spec.d
        || rec.a_used != spec.a.min(0.0)
        || rec.alpha != spec.alpha
        || rec.n != grid.len()
        || rec.r_max != grid.r_max()
        || rec.values.len() != grid.len()
    {
        return None;
    }
    let q = RadialField::from_values(
        Arc::clone(grid),
        rec.values.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
    )
    .ok()?;
    let a_used = spec.a.min(0.0);
    let mass = q.mass();
    let kinetic_a = q.hardy_form(a_used).ok()?;
    let lp = q.lp_pow(spec.alpha + 2.0);
    let gs = GroundState {
        spec: *spec,
        q,
        c_a: rec.c_a,
        mass,
        kinetic_a,
        lp,
        attained: spec.a <= 0.0,
        elliptic_residual: rec.elliptic_residual,
        iterations: rec.iterations,
    };
    // Revalidate before trusting a disk artifact.
    let (r1, r2) = groundstate::pohozaev_check(&gs, spec);
    if r1.max(r2) > 5e-3 || rec.elliptic_residual > opts.elliptic_tol {
        return None;
    }
    Some(gs)
}

fn store_cached(path: &Path, gs: &GroundState, grid: &RadialGrid, opts: &SolveOpts) {
    let rec = GsCacheRecord {
        d: gs.spec.d,
        a_used: gs.a_used(),
        alpha: gs.spec.alpha,
        n: grid.len(),
        r_max: grid.r_max(),
        tol: opts.tol,
        elliptic_tol: opts.elliptic_tol,
        c_a: gs.c_a,
        elliptic_residual: gs.elliptic_residual,
        iterations: gs.iterations,
        values: gs.q.values().iter().map(|z| z.re).collect(),
    };
    // Best-effort: a cold cache only costs a recompute.
    if std::fs::create_dir_all(path.parent().unwrap()).is_ok() {
        if let Ok(text) = serde_json::to_string(&rec) {
            let _ = std::fs::write(path, text);
        }
    }
}

/// Ground state through the disk cache; cache entries are revalidated via the
/// Pohozaev residuals before use.
pub fn obtain_ground_state(
    spec: &ProblemSpec,
    grid: &Arc<RadialGrid>,
    opts: &SolveOpts,
) -> Result<GroundState> {
    let path = cache_path(spec, grid, opts);
    if let Some(gs) = try_load_cached(&path, spec, grid, opts) {
        return Ok(gs);
    }
    let gs = groundstate::solve_ground_state(spec, grid, opts)?;
    store_cached(&path, &gs, grid, opts);
    Ok(gs)
}

fn resolve_initial(
    config: &RunConfig,
    grid: &Arc<RadialGrid>,
    gs: &GroundState,
) -> Result<RadialField> {
    Ok(match &config.initial {
        InitialData::Gaussian { amplitude, width } => {
            RadialField::gaussian(Arc::clone(grid), *amplitude, *width)
        }
        InitialData::GroundStateMultiple { c } => {
            let mut u = gs.q.clone();
            u.scale(Complex64::new(*c, 0.0));
            u
        }
        InitialData::FromFile { path } => read_field_csv(path, grid)?,
    })
}

fn initial_only_series(u0: &RadialField, spec: &ProblemSpec) -> Result<TimeSeries> {
    let obs = u0.energy(spec)?;
    let q_0 = spec.alpha * (spec.d as f64 + 2.0) / 2.0;
    let sample = Sample {
        t: 0.0,
        observables: obs,
        virial: VirialRecord {
            variance: diagnostics::variance(u0, &diagnostics::VirialWeight::Full),
            first_derivative: diagnostics::virial_first_derivative(
                u0,
                &diagnostics::VirialWeight::Full,
            ),
            rhs_full: diagnostics::virial_rhs_full_from_observables(&obs, spec),
        },
        boundary_mass_fraction: u0.boundary_mass_fraction(),
        scattering_density: u0.lp_pow(q_0),
    };
    Ok(TimeSeries {
        samples: vec![sample],
        termination: Termination::Completed,
        termination_detail: String::new(),
    })
}

/// Runs one experiment end to end and persists all artifacts into the
/// configured output directory.  On failure an `ERROR` marker file with the
/// message is left next to whatever was already written.
pub fn run_experiment(config: &RunConfig) -> Result<RunManifest> {
    config.validate()?;
    std::fs::create_dir_all(&config.output)?;
    match run_inner(config) {
        Ok(manifest) => Ok(manifest),
        Err(e) => {
            let _ = std::fs::write(config.output.join("ERROR"), format!("{e}\n"));
            Err(e)
        }
    }
}

struct Prepared {
    spec: ProblemSpec,
    gs: GroundState,
    thresholds: Thresholds,
    u0: RadialField,
}

fn prepare(config: &RunConfig) -> Result<Prepared> {
    let spec = config.problem_spec()?;
    let report = params::validate_regime(&spec)?;
    if !report.main_theorem_ok {
        return Err(Error::Config(format!(
            "parameters outside the validated regime: {}",
            report.messages.join("; ")
        )));
    }
    let grid = RadialGrid::new(spec.d, config.grid.n, config.grid.r_max)?;
    let solve_opts = SolveOpts::default();
    let gs = obtain_ground_state(&spec, &grid, &solve_opts)?;
    let thresholds = groundstate::thresholds(&gs, &spec, config.monitors.threshold_cross_tol)?;
    let u0 = resolve_initial(config, &grid, &gs)?;
    Ok(Prepared {
        spec,
        gs,
        thresholds,
        u0,
    })
}

/// Classifies the configured initial datum without running the evolution.
pub fn classify_config(config: &RunConfig) -> Result<Classification> {
    config.validate()?;
    let p = prepare(config)?;
    Ok(diagnostics::classify(
        &p.u0,
        &p.spec,
        &p.thresholds,
        config.monitors.classify_tol,
    )?)
}

fn run_inner(config: &RunConfig) -> Result<RunManifest> {
    let Prepared {
        spec,
        gs,
        thresholds,
        u0,
    } = prepare(config)?;
    let out = &config.output;
    std::fs::create_dir_all(out)?;
    write_field_csv(&out.join("field_initial.csv"), &u0)?;

    let classification = diagnostics::classify(&u0, &spec, &thresholds, config.monitors.classify_tol)?;

    let snapshot_every = config.monitors.snapshot_every;
    let mut snapshot_err: Option<Error> = None;
    let mut sample_index = 0usize;
    let mut final_field = u0.clone();
    let series = if config.integrator.t_end > 0.0 {
        evolve::evolve_with(&u0, &spec, &config.integrator, |state, _sample| {
            if snapshot_every > 0 && sample_index % snapshot_every == 0 && snapshot_err.is_none() {
                let path = out.join(format!("field_{sample_index:06}.csv"));
                if let Err(e) = write_field_csv(&path, &state.u) {
                    snapshot_err = Some(e);
                }
            }
            sample_index += 1;
            final_field = state.u.clone();
        })?
    } else {
        initial_only_series(&u0, &spec)?
    };
    if let Some(e) = snapshot_err {
        return Err(e);
    }
    write_field_csv(&out.join("field_final.csv"), &final_field)?;
    write_series_csv(&out.join("series.csv"), &series)?;
    std::fs::write(out.join("plot.py"), PLOT_SCRIPT)?;

    let fate = diagnostics::detect_fate(&series, &spec, &config.monitors.fate);
    let concordance = matches!(
        (classification.verdict, fate),
        (Verdict::Scatter, Fate::ScatterConsistent) | (Verdict::Blowup, Fate::BlowupConsistent)
    );

    let mut checksums = BTreeMap::new();
    for entry in std::fs::read_dir(out)? {
        let entry = entry?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if name.ends_with(".csv") {
            checksums.insert(name, sha256_file(&entry.path())?);
        }
    }

    let manifest = RunManifest {
        version: VERSION.to_string(),
        config: config.clone(),
        thresholds,
        ground_state_mass: gs.mass,
        termination: series.termination,
        termination_detail: series.termination_detail.clone(),
        classification,
        fate,
        concordance,
        scattering_norm_accumulation: series.scattering_norm_accumulation(),
        checksums,
    };
    // The manifest is written last, after every file it references.
    std::fs::write(
        out.join("manifest.json"),
        serde_json::to_string_pretty(&manifest).map_err(|e| Error::Config(e.to_string()))?,
    )?;
    Ok(manifest)
}

/// Reads a run directory's manifest and verifies every recorded checksum.
pub fn verify_run_dir(dir: &Path) -> Result<RunManifest> {
    let text = std::fs::read_to_string(dir.join("manifest.json"))?;
    let manifest: RunManifest =
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("manifest: {e}")))?;
    for (name, expected) in &manifest.checksums {
        let actual = sha256_file(&dir.join(name))?;
        if &actual != expected {
            return Err(Error::Config(format!(
                "checksum mismatch for {name}: manifest {expected}, file {actual}"
            )));
        }
    }
    Ok(manifest)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub classify: String,
    pub fate: String,
    pub concordance: bool,
    /// Error message when the run failed; empty otherwise.
    pub error: String,
}

#[derive(Debug)]
pub struct SweepSummary {
    pub rows: Vec<SweepRow>,
    pub manifests: Vec<Option<RunManifest>>,
}

fn label<T: Serialize>(v: &T) -> String {
    serde_json::to_value(v)
        .ok()
        .and_then(|j| j.as_str().map(str::to_owned))
        .unwrap_or_else(|| "?".to_string())
}

fn derive_config(base: &RunConfig, parameter: &str, value: f64) -> Result<RunConfig> {
    let mut cfg = base.clone();
    match parameter {
        "c" => cfg.initial = InitialData::GroundStateMultiple { c: value },
        "a" => cfg.spec.a = value,
        "amplitude" => match &mut cfg.initial {
            InitialData::Gaussian { amplitude, .. } => *amplitude = value,
            _ => {
                return Err(Error::Config(
                    "amplitude sweep requires gaussian initial data".to_string(),
                ))
            }
        },
        other => {
            return Err(Error::Config(format!(
                "unknown sweep parameter {other:?} (supported: c, a, amplitude)"
            )))
        }
    }
    cfg.output = base.output.join(format!("{parameter}={value}"));
    Ok(cfg)
}

/// Runs the sweep, continuing past individual failures, and writes
/// `summary.csv` under the base output directory.
pub fn sweep(base: &RunConfig, parameter: &str, values: &[f64]) -> Result<SweepSummary> {
    std::fs::create_dir_all(&base.output)?;
    let mut rows = Vec::new();
    let mut manifests = Vec::new();
    for &value in values {
        // Derivation errors are per-run rows too: the sweep must go on.
        let outcome = derive_config(base, parameter, value).and_then(|cfg| run_experiment(&cfg));
        match outcome {
            Ok(manifest) => {
                rows.push(SweepRow {
                    value,
                    classify: label(&manifest.classification.verdict),
                    fate: label(&manifest.fate),
                    concordance: manifest.concordance,
                    error: String::new(),
                });
                manifests.push(Some(manifest));
            }
            Err(e) => {
                rows.push(SweepRow {
                    value,
                    classify: "error".to_string(),
                    fate: "error".to_string(),
                    concordance: false,
                    error: e.to_string(),
                });
                manifests.push(None);
            }
        }
    }
    let mut out = format!("{parameter},classify,detect_fate,concordance,error\n");
    for row in &rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            row.value, row.classify, row.fate, row.concordance, row.error
        ));
    }
    std::fs::write(base.output.join("summary.csv"), out)?;
    Ok(SweepSummary { rows, manifests })
}
