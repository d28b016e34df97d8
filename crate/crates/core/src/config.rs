//! JSON run configuration.
//!
//! Every key except `dt_sde` (required for the stochastic modes) has a
//! default. [`RunConfig::echo`] holds the fully resolved document.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::opalg::{Observable, Operator, SlhTriple, C64};
use crate::pulse::Pulse;
use crate::slh::DEFAULT_W_FLOOR;

pub const DEFAULT_DT_ODE: f64 = 1e-3;
pub const DEFAULT_DT_SDE: f64 = 1e-4;
/// Largest `| |eta|^2 - 1 |` that is silently normalized away.
pub const ETA_AUTONORM_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Master,
    Trajectory,
    Ensemble,
    Validate,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Master => "master",
            Mode::Trajectory => "trajectory",
            Mode::Ensemble => "ensemble",
            Mode::Validate => "validate",
        })
    }
}

impl FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "master" => Ok(Mode::Master),
            "trajectory" => Ok(Mode::Trajectory),
            "ensemble" => Ok(Mode::Ensemble),
            "validate" => Ok(Mode::Validate),
            _ => Err(Error::Config {
                key: "mode".into(),
                msg: format!("unknown mode `{s}`"),
            }),
        }
    }
}

/// Complex matrix as nested rows of `[re, im]` pairs.
type RawMatrix = Vec<Vec<[f64; 2]>>;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum RawSystem {
    Preset {
        preset: String,
        #[serde(default = "one")]
        kappa: f64,
        #[serde(default = "half")]
        omega: f64,
    },
    Explicit {
        dim: usize,
        #[serde(rename = "S")]
        s: Option<RawMatrix>,
        #[serde(rename = "L")]
        l: RawMatrix,
        #[serde(rename = "H")]
        h: RawMatrix,
    },
}

fn one() -> f64 {
    1.0
}

fn half() -> f64 {
    0.5
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case", deny_unknown_fields)]
enum RawPulse {
    Gaussian {
        t0: f64,
        sigma: f64,
        #[serde(default)]
        detuning: f64,
    },
    DecayingExponential {
        gamma: f64,
        #[serde(default)]
        t0: f64,
        #[serde(default)]
        detuning: f64,
    },
    Square {
        t0: f64,
        t1: f64,
        #[serde(default)]
        detuning: f64,
    },
    Tabulated {
        grid: Vec<f64>,
        values: Vec<[f64; 2]>,
        #[serde(default)]
        detuning: f64,
    },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum RawEta {
    Named(String),
    Vector(Vec<[f64; 2]>),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum RawObservable {
    Preset(String),
    Custom { name: String, matrix: RawMatrix },
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTolerances {
    invariant: Option<f64>,
    cross_check: Option<f64>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    mode: Option<Mode>,
    system: Option<RawSystem>,
    pulse: Option<RawPulse>,
    eta: Option<RawEta>,
    dt_ode: Option<f64>,
    dt_sde: Option<f64>,
    #[serde(rename = "T")]
    horizon: Option<f64>,
    seed: Option<u64>,
    n_traj: Option<usize>,
    observables: Option<Vec<RawObservable>>,
    output: Option<PathBuf>,
    w_floor: Option<f64>,
    tolerances: Option<RawTolerances>,
    threads: Option<usize>,
    checkpoint_interval: Option<f64>,
    /// Row stride of the trajectory CSV.
    stride: Option<usize>,
    /// Measurement record to filter instead of generating one.
    record: Option<PathBuf>,
}

/// A validated configuration.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub mode: Mode,
    pub system: SlhTriple,
    pub pulse: Pulse,
    pub eta: Vec<C64>,
    pub dt_ode: f64,
    pub dt_sde: f64,
    pub horizon: f64,
    pub seed: u64,
    pub n_traj: usize,
    pub observables: Vec<Observable>,
    pub output: PathBuf,
    pub w_floor: f64,
    pub invariant_tol: f64,
    pub cross_check_tol: f64,
    pub threads: Option<usize>,
    pub checkpoint_interval: f64,
    pub stride: usize,
    pub record: Option<PathBuf>,
    /// The resolved document with all defaults filled in.
    pub echo: serde_json::Value,
}

impl RunConfig {
    /// Resolves `text` for `mode`. A `mode` key inside the document must
    /// agree with `mode` when present.
    pub fn from_json(text: &str, mode: Mode) -> Result<Self> {
        Self::from_json_with(text, mode, &Overrides::default())
    }

    /// As [`RunConfig::from_json`], with command-line overrides applied
    /// before defaults are resolved.
    pub fn from_json_with(text: &str, mode: Mode, ov: &Overrides) -> Result<Self> {
        let mut raw: RawConfig = serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            column: e.column(),
            msg: e.to_string(),
        })?;
        if let Some(v) = ov.seed {
            raw.seed = Some(v);
        }
        if let Some(v) = ov.n_traj {
            raw.n_traj = Some(v);
        }
        if let Some(v) = &ov.output {
            raw.output = Some(v.clone());
        }
        resolve(raw, mode)
    }

    /// Defaults only.
    pub fn default_for(mode: Mode) -> Result<Self> {
        let mut raw = RawConfig::default();
        if matches!(mode, Mode::Trajectory | Mode::Ensemble) {
            raw.dt_sde = Some(DEFAULT_DT_SDE);
        }
        resolve(raw, mode)
    }

    /// Hex SHA-256 of the resolved document.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(&self.echo).expect("echo serializes");
        hex::encode(Sha256::digest(bytes))
    }
}

/// Command-line values that take precedence over the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub n_traj: Option<usize>,
    pub output: Option<PathBuf>,
}

pub fn load_config(path: &Path, mode: Mode, ov: &Overrides) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)?;
    RunConfig::from_json_with(&text, mode, ov)
}

fn key_err(key: &str, msg: impl Into<String>) -> Error {
    Error::Config {
        key: key.into(),
        msg: msg.into(),
    }
}

fn positive(key: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(key_err(key, format!("must be a positive number, got {v}")))
    }
}

fn matrix(key: &str, dim: usize, rows: &RawMatrix) -> Result<Operator> {
    if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
        return Err(key_err(key, format!("expected a {dim}x{dim} matrix")));
    }
    let entries: Vec<C64> = rows
        .iter()
        .flat_map(|r| r.iter().map(|[re, im]| C64::new(*re, *im)))
        .collect();
    Operator::from_row_slice(dim, &entries).map_err(|e| key_err(key, e.to_string()))
}

fn resolve(mut raw: RawConfig, mode: Mode) -> Result<RunConfig> {
    if let Some(m) = raw.mode {
        if m != mode {
            return Err(key_err(
                "mode",
                format!("config says `{m}` but `{mode}` was requested"),
            ));
        }
    }
    raw.mode = Some(mode);

    let system_raw = raw.system.get_or_insert(RawSystem::Preset {
        preset: "twolevel".into(),
        kappa: 1.0,
        omega: 0.5,
    });
    let system = match system_raw {
        RawSystem::Preset {
            preset,
            kappa,
            omega,
        } => {
            if preset != "twolevel" {
                return Err(key_err(
                    "system.preset",
                    format!("unknown preset `{preset}`"),
                ));
            }
            if !(*kappa >= 0.0 && kappa.is_finite() && omega.is_finite()) {
                return Err(key_err(
                    "system.kappa",
                    "kappa must be >= 0 and omega finite",
                ));
            }
            SlhTriple::two_level(*kappa, *omega)
        }
        RawSystem::Explicit { dim, s, l, h } => {
            if *dim == 0 {
                return Err(key_err("system.dim", "must be positive"));
            }
            let s_op = match s {
                Some(s) => matrix("system.S", *dim, s)?,
                None => Operator::identity(*dim),
            };
            SlhTriple::new(
                s_op,
                matrix("system.L", *dim, l)?,
                matrix("system.H", *dim, h)?,
            )
            .map_err(|e| key_err("system", e.to_string()))?
        }
    };

    let pulse_raw = raw.pulse.get_or_insert(RawPulse::Gaussian {
        t0: 3.0,
        sigma: 1.0,
        detuning: 0.0,
    });
    let pulse = build_pulse(pulse_raw).map_err(|e| key_err("pulse", e.to_string()))?;

    let eta_raw = raw.eta.get_or_insert(RawEta::Named("ground".into()));
    let eta = build_eta(eta_raw, system.dim())?;

    let dt_ode = positive("dt_ode", *raw.dt_ode.get_or_insert(DEFAULT_DT_ODE))?;
    let dt_sde = match (raw.dt_sde, mode) {
        (Some(v), _) => positive("dt_sde", v)?,
        (None, Mode::Trajectory | Mode::Ensemble) => {
            return Err(key_err("dt_sde", format!("required in {mode} mode")));
        }
        (None, _) => *raw.dt_sde.insert(DEFAULT_DT_SDE),
    };
    let horizon = positive("T", *raw.horizon.get_or_insert(10.0))?;
    let seed = *raw.seed.get_or_insert(0);
    let n_traj = *raw.n_traj.get_or_insert(500);
    if mode == Mode::Ensemble && n_traj < 2 {
        return Err(key_err(
            "n_traj",
            "an ensemble needs at least 2 trajectories",
        ));
    }

    let obs_raw = raw.observables.get_or_insert_with(|| {
        ["sx", "sy", "sz"]
            .iter()
            .map(|s| RawObservable::Preset(s.to_string()))
            .collect()
    });
    let observables = build_observables(obs_raw, system.dim())?;

    let output = raw
        .output
        .get_or_insert_with(|| PathBuf::from("out"))
        .clone();
    let w_floor = positive("w_floor", *raw.w_floor.get_or_insert(DEFAULT_W_FLOOR))?;
    let tol = raw.tolerances.get_or_insert_with(Default::default);
    let invariant_tol = positive(
        "tolerances.invariant",
        *tol.invariant.get_or_insert(crate::master::INVARIANT_TOL),
    )?;
    let cross_check_tol = positive(
        "tolerances.cross_check",
        *tol.cross_check
            .get_or_insert(crate::filter::CROSS_CHECK_TOL),
    )?;
    if raw.threads == Some(0) {
        return Err(key_err("threads", "must be positive"));
    }
    let threads = raw.threads;
    let checkpoint_interval = positive(
        "checkpoint_interval",
        *raw.checkpoint_interval.get_or_insert(1.0),
    )?;
    let stride = *raw.stride.get_or_insert(10);
    if stride == 0 {
        return Err(key_err("stride", "must be positive"));
    }
    let record = raw.record.clone();

    let echo = serde_json::to_value(&raw).expect("config serializes");
    Ok(RunConfig {
        mode,
        system,
        pulse,
        eta,
        dt_ode,
        dt_sde,
        horizon,
        seed,
        n_traj,
        observables,
        output,
        w_floor,
        invariant_tol,
        cross_check_tol,
        threads,
        checkpoint_interval,
        stride,
        record,
        echo,
    })
}

fn build_pulse(raw: &RawPulse) -> Result<Pulse> {
    let (p, detuning) = match raw {
        RawPulse::Gaussian {
            t0,
            sigma,
            detuning,
        } => (Pulse::gaussian(*t0, *sigma)?, *detuning),
        RawPulse::DecayingExponential {
            gamma,
            t0,
            detuning,
        } => (Pulse::decaying_exponential(*gamma, *t0)?, *detuning),
        RawPulse::Square { t0, t1, detuning } => (Pulse::square(*t0, *t1)?, *detuning),
        RawPulse::Tabulated {
            grid,
            values,
            detuning,
        } => (
            Pulse::tabulated(
                grid.clone(),
                values.iter().map(|[re, im]| C64::new(*re, *im)).collect(),
            )?,
            *detuning,
        ),
    };
    Ok(if detuning != 0.0 {
        p.with_detuning(detuning)
    } else {
        p
    })
}

fn build_eta(raw: &RawEta, dim: usize) -> Result<Vec<C64>> {
    let mut v = match raw {
        RawEta::Named(name) => {
            if dim != 2 {
                return Err(key_err("eta", "named states need a two-level system"));
            }
            match name.as_str() {
                "ground" => vec![C64::new(1.0, 0.0), C64::new(0.0, 0.0)],
                "excited" => vec![C64::new(0.0, 0.0), C64::new(1.0, 0.0)],
                _ => return Err(key_err("eta", format!("unknown state `{name}`"))),
            }
        }
        RawEta::Vector(xs) => xs.iter().map(|[re, im]| C64::new(*re, *im)).collect(),
    };
    if v.len() != dim {
        return Err(key_err(
            "eta",
            format!("has {} components, system dimension is {dim}", v.len()),
        ));
    }
    let n2: f64 = v.iter().map(|z| z.norm_sqr()).sum();
    let off = (n2 - 1.0).abs();
    if off.is_nan() || off >= ETA_AUTONORM_TOL {
        return Err(key_err("eta", format!("not normalized: |eta|^2 = {n2}")));
    }
    if off > 0.0 {
        log::warn!("eta has |eta|^2 = {n2}; normalizing");
        let s = 1.0 / n2.sqrt();
        v.iter_mut().for_each(|z| *z *= s);
    }
    Ok(v)
}

fn build_observables(raw: &[RawObservable], dim: usize) -> Result<Vec<Observable>> {
    let mut out: Vec<Observable> = Vec::with_capacity(raw.len());
    for r in raw {
        let o = match r {
            RawObservable::Preset(name) => {
                if dim != 2 {
                    return Err(key_err(
                        "observables",
                        format!("preset `{name}` needs a two-level system"),
                    ));
                }
                Observable::preset(name)
                    .ok_or_else(|| key_err("observables", format!("unknown preset `{name}`")))?
            }
            RawObservable::Custom { name, matrix: m } => {
                let op = matrix(&format!("observables.{name}"), dim, m)?;
                Observable::new(name.clone(), op)
                    .map_err(|e| key_err(&format!("observables.{name}"), e.to_string()))?
            }
        };
        if out.iter().any(|x| x.name() == o.name()) {
            return Err(key_err(
                "observables",
                format!("duplicate name `{}`", o.name()),
            ));
        }
        if !o
            .name()
            .chars()
            .all(|ch| ch.is_ascii_alphanumeric() || ch == '_')
        {
            return Err(key_err(
                "observables",
                format!("name `{}` must be alphanumeric or `_`", o.name()),
            ));
        }
        out.push(o);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::opalg::{sigma_minus, sigma_z};

    #[test]
    fn twolevel_preset_expands() {
        let cfg = RunConfig::from_json(
            r#"{"system": {"preset": "twolevel", "kappa": 1.0, "omega": 0.5}}"#,
            Mode::Master,
        )
        .unwrap();
        assert!(cfg.system.l().max_abs_diff(&sigma_minus()) < 1e-15);
        assert!(cfg.system.h().max_abs_diff(&(&sigma_z() * 0.5)) < 1e-15);
        assert!(cfg.system.s().max_abs_diff(&Operator::identity(2)) == 0.0);
    }

    #[test]
    fn missing_dt_sde_names_the_key() {
        let err = RunConfig::from_json("{}", Mode::Trajectory).unwrap_err();
        match err {
            Error::Config { key, .. } => assert_eq!(key, "dt_sde"),
            other => panic!("unexpected {other}"),
        }
        assert!(RunConfig::from_json("{}", Mode::Master).is_ok());
    }

    #[test]
    fn non_unitary_scattering_is_rejected() {
        let text = r#"{"system": {"dim": 2,
            "S": [[[2,0],[0,0]],[[0,0],[1,0]]],
            "L": [[[0,0],[1,0]],[[0,0],[0,0]]],
            "H": [[[0,0],[0,0]],[[0,0],[0,0]]]}}"#;
        let err = RunConfig::from_json(text, Mode::Master).unwrap_err();
        let msg = err.to_string();
        assert!(
            msg.contains("not unitary") && msg.contains("3.000e0"),
            "{msg}"
        );
    }

    #[test]
    fn parse_errors_carry_position() {
        let err = RunConfig::from_json("{\n  \"T\": ,\n}", Mode::Master).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn eta_normalization_policy() {
        let ok = RunConfig::from_json(r#"{"eta": [[1.0000001,0],[0,0]]}"#, Mode::Master).unwrap();
        assert!((ok.eta[0].norm() - 1.0).abs() < 1e-15);
        assert!(RunConfig::from_json(r#"{"eta": [[1.1,0],[0,0]]}"#, Mode::Master).is_err());
    }

    #[test]
    fn echo_is_complete_and_hash_stable() {
        let a = RunConfig::from_json(r#"{"seed": 5}"#, Mode::Master).unwrap();
        let b = RunConfig::from_json(r#"{"seed": 5, "T": 10.0}"#, Mode::Master).unwrap();
        assert_eq!(a.echo["dt_ode"], serde_json::json!(1e-3));
        assert_eq!(a.echo["pulse"]["shape"], "gaussian");
        assert_eq!(a.hash(), b.hash());
    }

    #[test]
    fn overrides_win_and_are_echoed() {
        let ov = Overrides {
            seed: Some(9),
            n_traj: Some(20),
            output: None,
        };
        let cfg = RunConfig::from_json_with(r#"{"seed": 1, "dt_sde": 1e-3}"#, Mode::Ensemble, &ov)
            .unwrap();
        assert_eq!((cfg.seed, cfg.n_traj), (9, 20));
        assert_eq!(cfg.echo["seed"], 9);
    }

    #[test]
    fn unknown_keys_and_bad_values() {
        assert!(RunConfig::from_json(r#"{"bogus": 1}"#, Mode::Master).is_err());
        assert!(RunConfig::from_json(r#"{"observables": ["sq"]}"#, Mode::Master).is_err());
        assert!(RunConfig::from_json(r#"{"mode": "ensemble"}"#, Mode::Master).is_err());
        assert!(RunConfig::from_json(
            r#"{"pulse": {"shape": "square", "t0": 1, "t1": 0.5}}"#,
            Mode::Master
        )
        .is_err());
    }
}
