//! Monte Carlo ensembles of lockstep trajectories.
//!
//! Trajectory `i` draws its noise from stream `(seed, i)`. Per-trajectory
//! results are collected by index and reduced sequentially, so the output
//! does not depend on the number of worker threads.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::filter::{run_trajectory, TrajectoryOptions};
use crate::opalg::{Observable, C64};
use crate::slh::ExtendedSystem;

#[derive(Clone, Debug)]
pub struct EnsembleOptions {
    pub n_traj: usize,
    pub seed: u64,
    pub dt: f64,
    pub horizon: f64,
    /// Spacing of the reported checkpoints; must be a multiple of `dt`.
    pub checkpoint_interval: f64,
    pub observables: Vec<Observable>,
    /// Worker threads; `None` uses the global rayon pool.
    pub threads: Option<usize>,
}

#[derive(Clone, Debug)]
pub struct EnsembleResult {
    pub n_traj: usize,
    pub checkpoints: Vec<f64>,
    pub observable_names: Vec<String>,
    /// `mean[obs][checkpoint]` of `pi^{11}_t(X)`.
    pub mean: Vec<Vec<f64>>,
    /// Standard error of the mean, sample standard deviation over `sqrt(N)`.
    pub stderr: Vec<Vec<f64>>,
    pub w_mean: f64,
    /// Unbiased sample variance of `W(T)`.
    pub w_var: f64,
    pub max_cross_deviation: f64,
    pub max_trace_drift: f64,
}

struct Sample {
    values: Vec<Vec<f64>>,
    w: f64,
    cross: f64,
    drift: f64,
}

pub fn run_ensemble(
    ext: &ExtendedSystem,
    eta: &[C64],
    opts: &EnsembleOptions,
) -> Result<EnsembleResult> {
    if opts.n_traj < 2 {
        return Err(Error::InvalidArgument(format!(
            "an ensemble needs at least 2 trajectories, got {}",
            opts.n_traj
        )));
    }
    let ratio = opts.checkpoint_interval / opts.dt;
    let stride = ratio.round() as usize;
    if stride == 0 || (ratio - stride as f64).abs() > 1e-9 * ratio {
        return Err(Error::InvalidArgument(format!(
            "checkpoint interval {} is not a positive multiple of dt {}",
            opts.checkpoint_interval, opts.dt
        )));
    }
    let base = TrajectoryOptions {
        observables: opts.observables.clone(),
        stride,
        keep_increments: false,
        ..Default::default()
    };
    let one = |i: usize| -> Result<(Vec<f64>, Sample)> {
        let o = TrajectoryOptions {
            trajectory_index: i as u64,
            ..base.clone()
        };
        let run = run_trajectory(ext, eta, opts.dt, opts.horizon, opts.seed, &o)?;
        Ok((
            run.times,
            Sample {
                values: run.pi11,
                w: run.w_final,
                cross: run.max_cross_deviation.unwrap_or(0.0),
                drift: run.max_trace_drift,
            },
        ))
    };
    let collect = || -> Result<Vec<(Vec<f64>, Sample)>> {
        (0..opts.n_traj).into_par_iter().map(one).collect()
    };
    let samples = match opts.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?
            .install(collect)?,
        None => collect()?,
    };
    Ok(reduce(samples, &opts.observables))
}

fn reduce(samples: Vec<(Vec<f64>, Sample)>, observables: &[Observable]) -> EnsembleResult {
    let n = samples.len();
    let nf = n as f64;
    let checkpoints = samples[0].0.clone();
    let n_cp = checkpoints.len();
    let n_obs = observables.len();
    let mut sum = vec![vec![0.0; n_cp]; n_obs];
    let mut sum_sq = vec![vec![0.0; n_cp]; n_obs];
    let (mut w_sum, mut w_sq) = (0.0, 0.0);
    let (mut cross, mut drift) = (0.0f64, 0.0f64);
    for (_, s) in &samples {
        for j in 0..n_obs {
            for (k, v) in s.values[j].iter().enumerate() {
                sum[j][k] += v;
                sum_sq[j][k] += v * v;
            }
        }
        w_sum += s.w;
        w_sq += s.w * s.w;
        cross = cross.max(s.cross);
        drift = drift.max(s.drift);
    }
    let var = |s: f64, sq: f64| ((sq - s * s / nf) / (nf - 1.0)).max(0.0);
    let mean: Vec<Vec<f64>> = sum
        .iter()
        .map(|r| r.iter().map(|s| s / nf).collect())
        .collect();
    let stderr = sum
        .iter()
        .zip(&sum_sq)
        .map(|(r, q)| {
            r.iter()
                .zip(q)
                .map(|(s, sq)| (var(*s, *sq) / nf).sqrt())
                .collect()
        })
        .collect();
    EnsembleResult {
        n_traj: n,
        checkpoints,
        observable_names: observables.iter().map(|o| o.name().to_string()).collect(),
        mean,
        stderr,
        w_mean: w_sum / nf,
        w_var: var(w_sum, w_sq),
        max_cross_deviation: cross,
        max_trace_drift: drift,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::opalg::{c, SlhTriple};
    use crate::pulse::Pulse;

    fn small(threads: Option<usize>) -> EnsembleResult {
        let ext = ExtendedSystem::new(
            SlhTriple::two_level(1.0, 0.5),
            Pulse::gaussian(0.5, 0.2).unwrap(),
            1e-12,
        )
        .unwrap();
        let opts = EnsembleOptions {
            n_traj: 6,
            seed: 99,
            dt: 1e-3,
            horizon: 1.0,
            checkpoint_interval: 0.5,
            observables: vec![Observable::preset("sz").unwrap()],
            threads,
        };
        run_ensemble(&ext, &[c(1.0), c(0.0)], &opts).unwrap()
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let a = small(Some(1));
        let b = small(Some(3));
        assert_eq!(a.mean, b.mean);
        assert_eq!(a.stderr, b.stderr);
        assert_eq!(a.w_var, b.w_var);
        assert_eq!(a.checkpoints, vec![0.0, 0.5, 1.0]);
        // every trajectory starts in the same state
        assert_eq!(a.stderr[0][0], 0.0);
    }

    #[test]
    fn sample_variance_matches_two_pass() {
        let obs = vec![Observable::preset("sz").unwrap()];
        let samples: Vec<(Vec<f64>, Sample)> = [1.0, 2.0, 4.0]
            .iter()
            .map(|&v| {
                (
                    vec![0.0],
                    Sample {
                        values: vec![vec![v]],
                        w: v,
                        cross: 0.0,
                        drift: 0.0,
                    },
                )
            })
            .collect();
        let r = reduce(samples, &obs);
        let m = 7.0 / 3.0;
        let v = ((1.0 - m) * (1.0f64 - m) + (2.0 - m) * (2.0 - m) + (4.0 - m) * (4.0 - m)) / 2.0;
        assert!((r.w_var - v).abs() < 1e-14);
        assert!((r.stderr[0][0] - (v / 3.0).sqrt()).abs() < 1e-14);
    }
}
