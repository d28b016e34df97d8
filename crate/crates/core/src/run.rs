//! Mode dispatch and artifact emission for the command-line tool.
//!
//! Data files are CSV with a header row and 17 significant digits.
//! `report.json` depends only on the resolved config; wall-clock figures go
//! to `timing.json`.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{Mode, RunConfig};
use crate::ensemble::{run_ensemble, EnsembleOptions};
use crate::error::{Error, Result};
use crate::filter::{filter_record, run_trajectory, TrajectoryOptions};
use crate::master::{integrate_master, MasterOptions};
use crate::record::MeasurementRecord;
use crate::slh::ExtendedSystem;
use crate::validation::{run_all, CheckOutcome};

pub const THREADS_ENV: &str = "PHOTON_FILTER_THREADS";

#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub mode: Mode,
    pub config: Value,
    pub config_sha256: String,
    pub summary: Value,
    pub checks: Vec<CheckOutcome>,
    pub passed: bool,
    pub files: Vec<String>,
}

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

struct Csv {
    out: BufWriter<fs::File>,
}

impl Csv {
    fn create(path: &Path, header: &[String]) -> Result<Self> {
        let mut out = BufWriter::new(fs::File::create(path)?);
        writeln!(out, "{}", header.join(","))?;
        Ok(Csv { out })
    }

    fn row(&mut self, values: &[f64]) -> Result<()> {
        let cells: Vec<String> = values.iter().map(|&v| num(v)).collect();
        writeln!(self.out, "{}", cells.join(","))?;
        Ok(())
    }

    fn finish(mut self) -> Result<()> {
        self.out.flush()?;
        Ok(())
    }
}

/// Thread count: environment first, then config, else rayon's default.
pub fn resolve_threads(cfg: &RunConfig) -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(Error::Config {
                key: THREADS_ENV.into(),
                msg: format!("expected a positive integer, got `{v}`"),
            }),
        },
        Err(_) => Ok(cfg.threads),
    }
}

/// Runs `cfg` and writes its artifacts into `cfg.output`.
pub fn run(cfg: &RunConfig) -> Result<RunReport> {
    fs::create_dir_all(&cfg.output)?;
    let start = Instant::now();
    let (summary, checks, files) = match cfg.mode {
        Mode::Master => run_master(cfg)?,
        Mode::Trajectory => run_traj(cfg)?,
        Mode::Ensemble => run_ens(cfg)?,
        Mode::Validate => {
            let checks = run_all(resolve_threads(cfg)?);
            (json!({}), checks, Vec::new())
        }
    };
    let elapsed = start.elapsed().as_secs_f64();
    let mut report = RunReport {
        mode: cfg.mode,
        config: cfg.echo.clone(),
        config_sha256: cfg.hash(),
        passed: checks.iter().all(|c| c.passed),
        summary,
        checks,
        files,
    };
    report.files.push("report.json".into());
    write_json(&cfg.output.join("report.json"), &report)?;
    let timing = json!({
        "total_s": elapsed,
        "checks": report.checks.iter().map(|c| json!({"id": c.id, "elapsed_s": c.elapsed_s})).collect::<Vec<_>>(),
    });
    write_json(&cfg.output.join("timing.json"), &timing)?;
    Ok(report)
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(v).expect("report serializes");
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

type Outcome = (Value, Vec<CheckOutcome>, Vec<String>);

fn file(cfg: &RunConfig, name: &str) -> (PathBuf, String) {
    (cfg.output.join(name), name.to_string())
}

fn run_master(cfg: &RunConfig) -> Result<Outcome> {
    let opts = MasterOptions {
        observables: cfg.observables.clone(),
        snapshot_stride: None,
        invariant_tol: cfg.invariant_tol,
    };
    let run = integrate_master(
        &cfg.system,
        &cfg.pulse,
        &cfg.eta,
        cfg.dt_ode,
        cfg.horizon,
        &opts,
    )?;
    let (path, name) = file(cfg, "master.csv");
    let mut header = vec!["t".to_string()];
    for o in &run.observable_names {
        for b in ["11", "10", "01", "00"] {
            header.push(format!("mu{b}_{o}_re"));
            header.push(format!("mu{b}_{o}_im"));
        }
    }
    let mut csv = Csv::create(&path, &header)?;
    let mut row = Vec::with_capacity(header.len());
    for (k, t) in run.times().into_iter().enumerate() {
        row.clear();
        row.push(t);
        for series in &run.mu {
            for z in series[k] {
                row.push(z.re);
                row.push(z.im);
            }
        }
        csv.row(&row)?;
    }
    csv.finish()?;
    let w = run.worst;
    let summary = json!({
        "max_trace_drift": w.trace11.max(w.trace00),
        "max_cross_trace": w.trace_cross,
        "max_cross_asymmetry": w.cross_asymmetry,
        "max_hermiticity_violation": w.hermiticity,
        "min_eigenvalue": w.min_eigenvalue,
    });
    Ok((summary, Vec::new(), vec![name]))
}

fn run_traj(cfg: &RunConfig) -> Result<Outcome> {
    let ext = ExtendedSystem::new(cfg.system.clone(), cfg.pulse.clone(), cfg.w_floor)?;
    let opts = TrajectoryOptions {
        observables: cfg.observables.clone(),
        stride: cfg.stride,
        keep_increments: true,
        cross_check_tol: cfg.cross_check_tol,
        ..Default::default()
    };
    let mut files = Vec::new();
    let run = match &cfg.record {
        Some(p) => {
            let rec = MeasurementRecord::load(p)?;
            filter_record(&ext, &cfg.eta, &rec, true, &opts)?
        }
        None => {
            let run = run_trajectory(&ext, &cfg.eta, cfg.dt_sde, cfg.horizon, cfg.seed, &opts)?;
            let (path, name) = file(cfg, "record.txt");
            run.record()
                .ok_or_else(|| Error::InvalidArgument("generated record is incomplete".into()))?
                .save(&path)?;
            files.push(name);
            run
        }
    };
    if run.cross_check_exceeded {
        log::warn!(
            "photon/extended filter gap {:.3e} exceeds {:.1e}",
            run.max_cross_deviation.unwrap_or(f64::NAN),
            cfg.cross_check_tol
        );
    }

    let (path, name) = file(cfg, "trajectory.csv");
    let mut header = vec!["t".to_string()];
    header.extend(run.observable_names.iter().map(|o| format!("pi11_{o}")));
    header.extend(run.observable_names.iter().map(|o| format!("ext_{o}")));
    header.push("Y".into());
    header.push("W".into());
    let mut csv = Csv::create(&path, &header)?;
    let dt = run.grid.dt();
    let (mut y, mut w, mut k) = (0.0, 0.0, 0usize);
    let ext_series = run
        .extended
        .as_ref()
        .expect("extended filter runs alongside");
    let mut row = Vec::with_capacity(header.len());
    for (i, &t) in run.times.iter().enumerate() {
        let target = run.grid.index_of(t).expect("stored times lie on the grid");
        while k < target {
            y += run.dy[k];
            w += run.dw[k];
            k += 1;
        }
        row.clear();
        row.push(t);
        row.extend(run.pi11.iter().map(|s| s[i]));
        row.extend(ext_series.iter().map(|s| s[i]));
        row.push(y);
        row.push(w);
        csv.row(&row)?;
    }
    csv.finish()?;
    files.push(name);

    let s11 = &run.final_state.sigma11;
    let summary = json!({
        "dt": dt,
        "seed": run.seed,
        "max_trace_drift": run.max_trace_drift,
        "max_cross_deviation": run.max_cross_deviation,
        "cross_check_exceeded": run.cross_check_exceeded,
        "final_hermiticity_violation": s11.hermiticity_defect(),
        "final_min_eigenvalue": s11.min_eigenvalue(),
        "W_T": run.w_final,
    });
    Ok((summary, Vec::new(), files))
}

fn run_ens(cfg: &RunConfig) -> Result<Outcome> {
    let ext = ExtendedSystem::new(cfg.system.clone(), cfg.pulse.clone(), cfg.w_floor)?;
    let res = run_ensemble(
        &ext,
        &cfg.eta,
        &EnsembleOptions {
            n_traj: cfg.n_traj,
            seed: cfg.seed,
            dt: cfg.dt_sde,
            horizon: cfg.horizon,
            checkpoint_interval: cfg.checkpoint_interval,
            observables: cfg.observables.clone(),
            threads: resolve_threads(cfg)?,
        },
    )?;
    let master = integrate_master(
        &cfg.system,
        &cfg.pulse,
        &cfg.eta,
        cfg.dt_ode,
        cfg.horizon,
        &MasterOptions {
            observables: cfg.observables.clone(),
            snapshot_stride: None,
            invariant_tol: cfg.invariant_tol,
        },
    )?;

    let (path, name) = file(cfg, "ensemble.csv");
    let mut header = vec!["t".to_string()];
    for o in &res.observable_names {
        header.push(format!("mean_{o}"));
        header.push(format!("stderr_{o}"));
        header.push(format!("mu11_{o}"));
    }
    let mut csv = Csv::create(&path, &header)?;
    let mut row = Vec::with_capacity(header.len());
    let mut worst_z: f64 = 0.0;
    for (k, &t) in res.checkpoints.iter().enumerate() {
        let idx = master
            .grid
            .index_of(t)
            .filter(|&i| (master.grid.time(i) - t).abs() <= 1e-9 * t.max(1.0))
            .ok_or_else(|| Error::Config {
                key: "checkpoint_interval".into(),
                msg: format!("checkpoint {t} is not on the dt_ode grid"),
            })?;
        row.clear();
        row.push(t);
        for j in 0..res.observable_names.len() {
            let (m, se, mu) = (res.mean[j][k], res.stderr[j][k], master.mu[j][idx][0].re);
            row.extend([m, se, mu]);
            if se > 0.0 {
                worst_z = worst_z.max((m - mu).abs() / se);
            }
        }
        csv.row(&row)?;
    }
    csv.finish()?;

    let summary = json!({
        "n_traj": res.n_traj,
        "max_trace_drift": res.max_trace_drift,
        "max_cross_deviation": res.max_cross_deviation,
        "max_z_score": worst_z,
        "W_T_mean": res.w_mean,
        "W_T_var": res.w_var,
        "master_min_eigenvalue": master.worst.min_eigenvalue,
        "master_max_hermiticity_violation": master.worst.hermiticity,
    });
    Ok((summary, Vec::new(), vec![name]))
}
