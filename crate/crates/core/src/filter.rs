//! Homodyne quantum filters: the four-block single-photon filter, the
//! vacuum filter, and record generation from the extended system.
//!
//! All updates are Euler–Maruyama in the Schrödinger picture with
//! `pi^{jk}_t(X) = tr[sigma^{jk} X]` and innovations `dW = dY - K dt`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::master::normalized_projector;
use crate::opalg::{
    add_scaled, c, commutator, lindblad_heisenberg, trace_of_product, GeneratorParts, Observable,
    Operator, SlhTriple, C64,
};
use crate::pulse::Pulse;
use crate::record::MeasurementRecord;
use crate::rng::BrownianIncrements;
use crate::slh::ExtendedSystem;

/// Imaginary part of the gain that is silently dropped.
pub const GAIN_IMAG_TOL: f64 = 1e-10;

/// Default flag threshold for the photon/extended filter comparison.
pub const CROSS_CHECK_TOL: f64 = 1e-2;

#[derive(Clone, Debug)]
pub struct FilterState {
    pub t: f64,
    pub sigma11: Operator,
    pub sigma10: Operator,
    pub sigma01: Operator,
    pub sigma00: Operator,
}

impl FilterState {
    pub fn initial(eta: &[C64]) -> Result<Self> {
        let p = normalized_projector(eta)?;
        let d = p.dim();
        Ok(FilterState {
            t: 0.0,
            sigma11: p.clone(),
            sigma10: Operator::zeros(d),
            sigma01: Operator::zeros(d),
            sigma00: p,
        })
    }

    pub fn dim(&self) -> usize {
        self.sigma11.dim()
    }

    /// `[pi^{11}, pi^{10}, pi^{01}, pi^{00}](X)`.
    pub fn expectations(&self, x: &Operator) -> [C64; 4] {
        [&self.sigma11, &self.sigma10, &self.sigma01, &self.sigma00].map(|s| s.expect(x))
    }

    /// Conditional expectation `pi^{11}_t(X)` of a Hermitian `X`.
    pub fn conditional(&self, x: &Operator) -> f64 {
        self.sigma11.expect(x).re
    }

    fn raw(&self) -> [DMatrix<C64>; 4] {
        [&self.sigma11, &self.sigma10, &self.sigma01, &self.sigma00].map(|s| s.matrix().clone())
    }

    fn from_raw(t: f64, m: [DMatrix<C64>; 4]) -> Self {
        let [a, b, cc, d] = m;
        FilterState {
            t,
            sigma11: Operator::wrap(a),
            sigma10: Operator::wrap(b),
            sigma01: Operator::wrap(cc),
            sigma00: Operator::wrap(d),
        }
    }
}

fn real_gain(k: C64, t: f64) -> Result<f64> {
    if !k.re.is_finite() || !k.im.is_finite() {
        return Err(Error::NonFinite("gain"));
    }
    if k.im.abs() > GAIN_IMAG_TOL {
        return Err(Error::NonRealGain {
            time: t,
            imag: k.im,
        });
    }
    Ok(k.re)
}

/// Vacuum-type increment of one block, written into `acc`:
/// `acc = G*(rho) dt + (L rho + rho L* - k rho) dw`. `tmp` is scratch.
fn base_increment(
    acc: &mut DMatrix<C64>,
    tmp: &mut DMatrix<C64>,
    p: &GeneratorParts,
    rho: &DMatrix<C64>,
    dt: f64,
    dw: f64,
    k: f64,
) {
    let (one, zero) = (c(1.0), c(0.0));
    let (cdt, cdw) = (c(dt), c(dw));
    tmp.gemm(one, &p.l, rho, zero);
    acc.gemm(cdt, tmp, &p.l_dag, zero);
    add_scaled(acc, cdw, tmp);
    acc.gemm(cdt, &p.k, rho, one);
    acc.gemm(cdt, rho, &p.k_dag, one);
    acc.gemm(cdw, rho, &p.l_dag, one);
    add_scaled(acc, c(-k * dw), rho);
}

fn gain_of(p: &GeneratorParts, rho: &DMatrix<C64>) -> C64 {
    trace_of_product(&p.l, rho) + trace_of_product(&p.l_dag, rho)
}

/// The four-block update with preallocated scratch.
#[derive(Clone, Debug)]
pub(crate) struct PhotonKernel {
    parts: GeneratorParts,
    n: [DMatrix<C64>; 3],
    tmp: [DMatrix<C64>; 4],
}

impl PhotonKernel {
    pub fn new(g: &SlhTriple) -> Self {
        let d = g.dim();
        let z = || DMatrix::zeros(d, d);
        PhotonKernel {
            parts: GeneratorParts::new(g),
            n: [z(), z(), z()],
            tmp: [z(), z(), z(), z()],
        }
    }

    pub fn gain(&self, m: &[DMatrix<C64>; 4], xi: C64, t: f64) -> Result<f64> {
        let p = &self.parts;
        let k = gain_of(p, &m[0])
            + xi * trace_of_product(&p.s, &m[1])
            + xi.conj() * trace_of_product(&p.s_dag, &m[2]);
        real_gain(k, t)
    }

    /// Advances `m` in place; returns `(K, dW)`.
    pub fn step(
        &mut self,
        m: &mut [DMatrix<C64>; 4],
        xi: C64,
        dy: f64,
        dt: f64,
        t: f64,
    ) -> Result<(f64, f64)> {
        let k = self.gain(m, xi, t)?;
        let dw = dy - k * dt;
        let p = &self.parts;
        let [n11, n10, n00] = &mut self.n;
        let [tmp, s00_sd, s01_sd, s_s10] = &mut self.tmp;
        let [s11, s10, s01, s00] = &*m;
        let one = c(1.0);
        let zero = c(0.0);
        let xic = xi.conj();

        base_increment(n00, tmp, p, s00, dt, dw, k);

        // 10: + xi* [L, s00 S*] dt + xi* s00 S* dW
        s00_sd.gemm(one, s00, &p.s_dag, zero);
        base_increment(n10, tmp, p, s10, dt, dw, k);
        n10.gemm(xic * dt, &p.l, s00_sd, one);
        n10.gemm(-xic * dt, s00_sd, &p.l, one);
        add_scaled(n10, xic * dw, s00_sd);

        // 11: + (xi* [L, s01 S*] + xi [S s10, L*] + |xi|^2 (S s00 S* - s00)) dt
        //     + (xi* s01 S* + xi S s10) dW
        s01_sd.gemm(one, s01, &p.s_dag, zero);
        s_s10.gemm(one, &p.s, s10, zero);
        base_increment(n11, tmp, p, s11, dt, dw, k);
        n11.gemm(xic * dt, &p.l, s01_sd, one);
        n11.gemm(-xic * dt, s01_sd, &p.l, one);
        n11.gemm(xi * dt, s_s10, &p.l_dag, one);
        n11.gemm(-xi * dt, &p.l_dag, s_s10, one);
        let i2 = xi.norm_sqr();
        if i2 != 0.0 {
            n11.gemm(c(i2 * dt), &p.s, s00_sd, one);
            add_scaled(n11, c(-i2 * dt), s00);
        }
        add_scaled(n11, xic * dw, s01_sd);
        add_scaled(n11, xi * dw, s_s10);

        m[0] += &*n11;
        m[1] += &*n10;
        m[3] += &*n00;
        let (left, right) = m.split_at_mut(2);
        left[1].adjoint_to(&mut right[0]);
        if m.iter().any(|b| b.iter().any(|z| !z.is_finite())) {
            return Err(Error::NonFinite("filter state"));
        }
        Ok((k, dw))
    }
}

/// `K_t = pi^{11}(L + L*) + xi(t) pi^{10}(S) + xi(t)* pi^{01}(S*)`.
pub fn gain(s: &FilterState, g: &SlhTriple, p: &Pulse) -> Result<f64> {
    if s.dim() != g.dim() {
        return Err(Error::DimensionMismatch {
            op: "gain",
            left: s.dim(),
            right: g.dim(),
        });
    }
    PhotonKernel::new(g).gain(&s.raw(), p.eval(s.t)?, s.t)
}

/// Result of a single filter update.
#[derive(Clone, Debug)]
pub struct FilterStep {
    pub state: FilterState,
    pub gain: f64,
    pub dw: f64,
}

/// One Euler–Maruyama step of the four coupled blocks with record increment
/// `dy`; `xi` is sampled at the left end point.
pub fn filter_step(
    s: &FilterState,
    dy: f64,
    dt: f64,
    g: &SlhTriple,
    p: &Pulse,
) -> Result<FilterStep> {
    check_step(s.dim(), g.dim(), dt, dy)?;
    let mut m = s.raw();
    let (k, dw) = PhotonKernel::new(g).step(&mut m, p.eval(s.t)?, dy, dt, s.t)?;
    Ok(FilterStep {
        state: FilterState::from_raw(s.t + dt, m),
        gain: k,
        dw,
    })
}

fn check_step(state_dim: usize, sys_dim: usize, dt: f64, dy: f64) -> Result<()> {
    if state_dim != sys_dim {
        return Err(Error::DimensionMismatch {
            op: "filter step",
            left: state_dim,
            right: sys_dim,
        });
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "dt must be positive, got {dt}"
        )));
    }
    if !dy.is_finite() {
        return Err(Error::NonFinite("record increment"));
    }
    Ok(())
}

/// The same update as [`filter_step`], evaluated on a single observable by
/// applying the generator to `x` rather than to the state. Returns the four
/// updated expectations `pi^{jk}_{t+dt}(X)`.
pub fn filter_step_heisenberg(
    s: &FilterState,
    dy: f64,
    dt: f64,
    g: &SlhTriple,
    p: &Pulse,
    x: &Operator,
) -> Result<[C64; 4]> {
    check_step(s.dim(), g.dim(), dt, dy)?;
    if x.dim() != s.dim() {
        return Err(Error::DimensionMismatch {
            op: "filter_step_heisenberg",
            left: s.dim(),
            right: x.dim(),
        });
    }
    let xi = p.eval(s.t)?;
    let xic = xi.conj();
    let k = gain(s, g, p)?;
    let dw = dy - k * dt;
    let (sm, l) = (g.s(), g.l());
    let (sd, ld) = (sm.adjoint(), l.adjoint());

    let gx = lindblad_heisenberg(g, x)?;
    let a = &sd * &commutator(x, l)?;
    let b = &commutator(&ld, x)? * sm;
    let scattered = &(&(&sd * x) * sm) - x;
    let xl = &(x * l) + &(&ld * x);
    let sdx = &sd * x;
    let xs = x * sm;
    let pi = |sig: &Operator, y: &Operator| sig.expect(y);
    let (s11, s10, s01, s00) = (&s.sigma11, &s.sigma10, &s.sigma01, &s.sigma00);

    let d11 =
        pi(s11, &gx) + pi(s01, &a) * xic + pi(s10, &b) * xi + pi(s00, &scattered) * xi.norm_sqr();
    let w11 = pi(s11, &xl) + pi(s01, &sdx) * xic + pi(s10, &xs) * xi - pi(s11, x) * k;
    let d10 = pi(s10, &gx) + pi(s00, &a) * xic;
    let w10 = pi(s10, &xl) + pi(s00, &sdx) * xic - pi(s10, x) * k;
    let d01 = pi(s01, &gx) + pi(s00, &b) * xi;
    let w01 = pi(s01, &xl) + pi(s00, &xs) * xi - pi(s01, x) * k;
    let d00 = pi(s00, &gx);
    let w00 = pi(s00, &xl) - pi(s00, x) * k;

    let now = s.expectations(x);
    Ok([
        now[0] + d11 * dt + w11 * dw,
        now[1] + d10 * dt + w10 * dw,
        now[2] + d01 * dt + w01 * dw,
        now[3] + d00 * dt + w00 * dw,
    ])
}

/// Vacuum-input filter: `d rho = G*(rho) dt + (L rho + rho L* - K rho) dW`
/// with `K = tr[(L + L*) rho]`.
#[derive(Clone, Debug)]
pub(crate) struct VacuumKernel {
    pub parts: GeneratorParts,
    acc: DMatrix<C64>,
    tmp: DMatrix<C64>,
}

impl VacuumKernel {
    pub fn new(parts: GeneratorParts) -> Self {
        let d = parts.l.nrows();
        VacuumKernel {
            parts,
            acc: DMatrix::zeros(d, d),
            tmp: DMatrix::zeros(d, d),
        }
    }

    pub fn gain(&self, rho: &DMatrix<C64>, t: f64) -> Result<f64> {
        real_gain(gain_of(&self.parts, rho), t)
    }

    pub fn step(&mut self, rho: &mut DMatrix<C64>, dy: f64, dt: f64, t: f64) -> Result<(f64, f64)> {
        let k = self.gain(rho, t)?;
        let dw = dy - k * dt;
        base_increment(&mut self.acc, &mut self.tmp, &self.parts, rho, dt, dw, k);
        *rho += &self.acc;
        if rho.iter().any(|z| !z.is_finite()) {
            return Err(Error::NonFinite("vacuum filter state"));
        }
        Ok((k, dw))
    }
}

/// One vacuum-filter step; returns `(rho', K, dW)`.
pub fn vacuum_filter_step(
    rho: &Operator,
    dy: f64,
    dt: f64,
    g: &SlhTriple,
) -> Result<(Operator, f64, f64)> {
    check_step(rho.dim(), g.dim(), dt, dy)?;
    let mut kern = VacuumKernel::new(GeneratorParts::new(g));
    let mut m = rho.matrix().clone();
    let (k, dw) = kern.step(&mut m, dy, dt, 0.0)?;
    Ok((Operator::wrap(m), k, dw))
}

/// Options shared by the trajectory drivers.
#[derive(Clone, Debug)]
pub struct TrajectoryOptions {
    pub observables: Vec<Observable>,
    /// Store series every `stride` steps (the final point is always stored).
    pub stride: usize,
    /// Keep the full `dY`, `dW` and gain sequences.
    pub keep_increments: bool,
    /// Rescale `sigma11` to unit trace after every step.
    pub renormalize: bool,
    pub cross_check_tol: f64,
    /// Stream index within the master seed.
    pub trajectory_index: u64,
}

impl Default for TrajectoryOptions {
    fn default() -> Self {
        TrajectoryOptions {
            observables: Vec::new(),
            stride: 1,
            keep_increments: true,
            renormalize: false,
            cross_check_tol: CROSS_CHECK_TOL,
            trajectory_index: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrajectoryRun {
    pub grid: TimeGrid,
    pub seed: Option<u64>,
    pub times: Vec<f64>,
    pub observable_names: Vec<String>,
    /// `pi11[obs][i]` at `times[i]`.
    pub pi11: Vec<Vec<f64>>,
    /// `tr[rho~_c (I ⊗ X)]` when the extended filter ran alongside.
    pub extended: Option<Vec<Vec<f64>>>,
    pub dy: Vec<f64>,
    pub dw: Vec<f64>,
    pub gains: Vec<f64>,
    /// Innovations at the horizon, `W(T) = sum dW`.
    pub w_final: f64,
    /// Sup over every grid point and observable of the photon/extended gap.
    pub max_cross_deviation: Option<f64>,
    pub cross_check_exceeded: bool,
    /// Largest `|tr sigma11 - 1|` seen.
    pub max_trace_drift: f64,
    pub final_state: FilterState,
    pub final_extended: Option<Operator>,
}

impl TrajectoryRun {
    pub fn record(&self) -> Option<MeasurementRecord> {
        if self.dy.len() != self.grid.n_steps() {
            return None;
        }
        MeasurementRecord::new(self.grid.dt(), self.dy.clone(), self.seed?).ok()
    }
}

enum Source<'a> {
    Brownian(Box<BrownianIncrements>),
    Given(&'a [f64]),
}

/// Steps the photon filter, and optionally the extended vacuum filter, over
/// `grid`. With a Brownian source the record is produced by the extended
/// filter: `dY_k = tr[(L~ + L~*) rho~_k] dt + dW_k`.
fn drive(
    ext: &ExtendedSystem,
    eta: &[C64],
    grid: TimeGrid,
    mut source: Source<'_>,
    with_extended: bool,
    opts: &TrajectoryOptions,
) -> Result<TrajectoryRun> {
    let d = ext.sys_dim();
    let mut state = FilterState::initial(eta)?;
    if state.dim() != d {
        return Err(Error::DimensionMismatch {
            op: "initial state vs system",
            left: state.dim(),
            right: d,
        });
    }
    for o in &opts.observables {
        if o.op().dim() != d {
            return Err(Error::DimensionMismatch {
                op: "observable",
                left: o.op().dim(),
                right: d,
            });
        }
    }
    if opts.stride == 0 {
        return Err(Error::InvalidArgument("stride must be positive".into()));
    }
    let with_extended = with_extended || matches!(source, Source::Brownian(_));
    let pulse = ext.pulse();
    let mut kernel = PhotonKernel::new(ext.base());
    let mut ext_kernel = VacuumKernel::new(ext.generator_parts(C64::new(0.0, 0.0)));
    let mut m = state.raw();
    let mut rho_ext = with_extended.then(|| ext.initial_state(eta).into_matrix());
    let lifted: Vec<DMatrix<C64>> = opts
        .observables
        .iter()
        .map(|o| Operator::identity(2).kron(o.op()).into_matrix())
        .collect();

    let n = grid.n_steps();
    let n_obs = opts.observables.len();
    let cap = n / opts.stride + 2;
    let mut times = Vec::with_capacity(cap);
    let mut pi11: Vec<Vec<f64>> = vec![Vec::with_capacity(cap); n_obs];
    let mut ext_series: Option<Vec<Vec<f64>>> =
        with_extended.then(|| vec![Vec::with_capacity(cap); n_obs]);
    let inc_cap = if opts.keep_increments { n } else { 0 };
    let (mut dys, mut dws, mut gains) = (
        Vec::with_capacity(inc_cap),
        Vec::with_capacity(inc_cap),
        Vec::with_capacity(inc_cap),
    );
    let mut w_final = 0.0;
    let mut max_dev: f64 = 0.0;
    let mut max_drift: f64 = 0.0;

    for k in 0..=n {
        let t = grid.time(k);
        max_drift = max_drift.max((m[0].trace() - c(1.0)).norm());
        let store = k % opts.stride == 0 || k == n;
        if store {
            times.push(t);
        }
        for (j, o) in opts.observables.iter().enumerate() {
            let v = trace_of_product(&m[0], o.op().matrix()).re;
            if let Some(r) = &rho_ext {
                let e = trace_of_product(r, &lifted[j]).re;
                max_dev = max_dev.max((v - e).abs());
                if store {
                    ext_series.as_mut().unwrap()[j].push(e);
                }
            }
            if store {
                pi11[j].push(v);
            }
        }
        if k == n {
            break;
        }

        if rho_ext.is_some() {
            ext.update_parts(ext.lambda_at(t), &mut ext_kernel.parts);
        }
        let dy = match (&mut source, &rho_ext) {
            (Source::Given(r), _) => r[k],
            (Source::Brownian(b), Some(r)) => {
                ext_kernel.gain(r, t)? * grid.dt() + b.next().unwrap()
            }
            (Source::Brownian(_), None) => {
                unreachable!("generated records need the extended filter")
            }
        };
        if let Some(r) = rho_ext.as_mut() {
            ext_kernel
                .step(r, dy, grid.dt(), t)
                .map_err(|e| blowup(e, k, grid, "extended filter"))?;
        }
        let (gk, dw) = kernel
            .step(&mut m, pulse.amplitude(t), dy, grid.dt(), t)
            .map_err(|e| blowup(e, k, grid, "photon filter"))?;
        if opts.renormalize {
            let tr = m[0].trace().re;
            m[0] *= c(1.0 / tr);
        }
        w_final += dw;
        if opts.keep_increments {
            dys.push(dy);
            dws.push(dw);
            gains.push(gk);
        }
    }
    state = FilterState::from_raw(grid.horizon(), m);
    let max_cross_deviation = rho_ext.as_ref().map(|_| max_dev);

    Ok(TrajectoryRun {
        grid,
        seed: None,
        times,
        observable_names: opts
            .observables
            .iter()
            .map(|o| o.name().to_string())
            .collect(),
        pi11,
        extended: ext_series,
        dy: dys,
        dw: dws,
        gains,
        w_final,
        cross_check_exceeded: max_cross_deviation
            .is_some_and(|x| x.is_nan() || x > opts.cross_check_tol),
        max_cross_deviation,
        max_trace_drift: max_drift,
        final_state: state,
        final_extended: rho_ext.map(Operator::wrap),
    })
}

fn blowup(e: Error, k: usize, grid: TimeGrid, what: &'static str) -> Error {
    match e {
        Error::NonFinite(_) => Error::NumericBlowup {
            step: k + 1,
            time: grid.time(k + 1),
            what,
        },
        other => other,
    }
}

/// Generates a record from the extended system and filters it with the
/// single-photon filter in lockstep, recording both conditional
/// expectations for every requested observable.
pub fn run_trajectory(
    ext: &ExtendedSystem,
    eta: &[C64],
    dt: f64,
    horizon: f64,
    seed: u64,
    opts: &TrajectoryOptions,
) -> Result<TrajectoryRun> {
    let grid = TimeGrid::new(dt, horizon)?;
    let src = Source::Brownian(Box::new(BrownianIncrements::new(
        seed,
        opts.trajectory_index,
        dt,
    )?));
    let mut run = drive(ext, eta, grid, src, true, opts)?;
    run.seed = Some(seed);
    Ok(run)
}

/// Record-driven mode. When `with_extended` is set the extended vacuum
/// filter is run on the same record for cross-checking.
pub fn filter_record(
    ext: &ExtendedSystem,
    eta: &[C64],
    record: &MeasurementRecord,
    with_extended: bool,
    opts: &TrajectoryOptions,
) -> Result<TrajectoryRun> {
    let grid = TimeGrid::from_steps(record.dt, record.len())?;
    let mut run = drive(
        ext,
        eta,
        grid,
        Source::Given(&record.dy),
        with_extended,
        opts,
    )?;
    run.seed = Some(record.seed);
    Ok(run)
}

/// Record plus the extended conditional expectations of `observables`
/// (`tr[rho~_c (I ⊗ X)]` on every grid point).
pub fn generate_record(
    ext: &ExtendedSystem,
    eta: &[C64],
    dt: f64,
    horizon: f64,
    seed: u64,
    observables: &[Observable],
) -> Result<(MeasurementRecord, Vec<Vec<f64>>)> {
    let opts = TrajectoryOptions {
        observables: observables.to_vec(),
        ..Default::default()
    };
    let run = run_trajectory(ext, eta, dt, horizon, seed, &opts)?;
    let rec = MeasurementRecord::new(dt, run.dy, seed)?;
    Ok((rec, run.extended.unwrap_or_default()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::opalg::{number, sigma_minus, sigma_x, sigma_z, I};

    fn two_level() -> SlhTriple {
        SlhTriple::two_level(1.0, 0.5)
    }

    fn random_like_state() -> FilterState {
        let mut s = FilterState::initial(&[c(0.6), C64::new(0.0, 0.8)]).unwrap();
        s.sigma10 = Operator::from_row_slice(
            2,
            &[C64::new(0.1, 0.05), c(0.2), C64::new(-0.1, 0.3), c(-0.1)],
        )
        .unwrap();
        s.sigma01 = s.sigma10.adjoint();
        s.sigma00 = Operator::from_row_slice(
            2,
            &[c(0.3), C64::new(0.1, 0.2), C64::new(0.1, -0.2), c(0.7)],
        )
        .unwrap();
        s.t = 2.5;
        s
    }

    #[test]
    fn initial_gain_vanishes_at_ground() {
        let p = Pulse::gaussian(3.0, 1.0).unwrap();
        let s = FilterState::initial(&[c(1.0), c(0.0)]).unwrap();
        assert_eq!(gain(&s, &two_level(), &p).unwrap(), 0.0);
    }

    #[test]
    fn gain_without_photon_is_vacuum_gain() {
        let p = Pulse::square(50.0, 51.0).unwrap();
        let s = random_like_state();
        let g = two_level();
        let lp = g.l() + &g.l().adjoint();
        let k = gain(&s, &g, &p).unwrap();
        assert!((k - s.sigma11.expect(&lp).re).abs() < 1e-15);
    }

    #[test]
    fn non_real_gain_is_rejected() {
        let p = Pulse::gaussian(3.0, 1.0).unwrap();
        let mut s = random_like_state();
        s.sigma01 = Operator::zeros(2);
        assert!(matches!(
            gain(&s, &two_level(), &p),
            Err(Error::NonRealGain { .. })
        ));
    }

    #[test]
    fn zero_innovation_without_photon_is_master_euler_step() {
        let p = Pulse::square(50.0, 51.0).unwrap();
        let g = two_level();
        let s = random_like_state();
        let dt = 1e-3;
        let k = gain(&s, &g, &p).unwrap();
        let out = filter_step(&s, k * dt, dt, &g, &p).unwrap();
        assert_eq!(out.dw, 0.0);
        let euler = &s.sigma11
            + &crate::opalg::lindblad_schrodinger(&g, &s.sigma11)
                .unwrap()
                .scale(c(dt));
        assert!(out.state.sigma11.max_abs_diff(&euler) < 1e-15);
    }

    #[test]
    fn schrodinger_and_heisenberg_steps_agree() {
        let p = Pulse::gaussian(3.0, 1.0).unwrap();
        let g = SlhTriple::new(
            Operator::from_row_slice(2, &[c(0.0), I, I, c(0.0)]).unwrap(),
            sigma_minus().scale(c(0.9)),
            sigma_x().scale(c(0.3)),
        )
        .unwrap();
        let s = random_like_state();
        let (dy, dt) = (0.013, 1e-3);
        let out = filter_step(&s, dy, dt, &g, &p).unwrap();
        let hx = Operator::from_row_slice(
            2,
            &[c(0.4), C64::new(0.1, -0.7), C64::new(0.1, 0.7), c(-1.2)],
        )
        .unwrap();
        for x in [sigma_z(), number(), hx] {
            let a = out.state.expectations(&x);
            let b = filter_step_heisenberg(&s, dy, dt, &g, &p, &x).unwrap();
            for j in 0..4 {
                assert!(
                    (a[j] - b[j]).norm() < 1e-12,
                    "block {j}: {} vs {}",
                    a[j],
                    b[j]
                );
            }
        }
    }

    #[test]
    fn trace_is_preserved_to_second_order() {
        let p = Pulse::gaussian(3.0, 1.0).unwrap();
        let g = two_level();
        let mut s = random_like_state();
        s.sigma11 = Operator::projector(&[c(0.6), C64::new(0.0, 0.8)]);
        let dt: f64 = 1e-4;
        let dy = 0.5 * dt.sqrt();
        let out = filter_step(&s, dy, dt, &g, &p).unwrap();
        assert!((out.state.sigma11.trace() - c(1.0)).norm() < 1e-14);
        assert!(out.state.sigma01.max_abs_diff(&out.state.sigma10.adjoint()) == 0.0);
    }

    #[test]
    fn vacuum_filter_without_coupling_is_unitary_euler() {
        let g = SlhTriple::new(Operator::identity(2), Operator::zeros(2), sigma_x()).unwrap();
        let rho = Operator::projector(&[c(1.0), c(0.0)]);
        let (a, k, _) = vacuum_filter_step(&rho, 0.3, 1e-3, &g).unwrap();
        let (b, _, _) = vacuum_filter_step(&rho, -7.0, 1e-3, &g).unwrap();
        assert_eq!(k, 0.0);
        assert_eq!(a, b);
    }

    #[test]
    fn stored_innovations_reconstruct_record() {
        let g = two_level();
        let ext = ExtendedSystem::new(g, Pulse::gaussian(0.5, 0.2).unwrap(), 1e-12).unwrap();
        let run =
            run_trajectory(&ext, &[c(1.0), c(0.0)], 1e-3, 1.0, 11, &Default::default()).unwrap();
        for ((dy, dw), k) in run.dy.iter().zip(&run.dw).zip(&run.gains) {
            // exact up to the rounding of the subtraction itself
            let scale = dy.abs().max((k * 1e-3).abs());
            assert!((dw + k * 1e-3 - dy).abs() <= 2.0 * f64::EPSILON * scale);
        }
    }

    #[test]
    fn record_driven_mode_reproduces_lockstep() {
        let ext =
            ExtendedSystem::new(two_level(), Pulse::gaussian(0.5, 0.2).unwrap(), 1e-12).unwrap();
        let opts = TrajectoryOptions {
            observables: vec![Observable::preset("sz").unwrap()],
            ..Default::default()
        };
        let eta = [c(1.0), c(0.0)];
        let live = run_trajectory(&ext, &eta, 1e-3, 1.0, 5, &opts).unwrap();
        let rec = live.record().unwrap();
        let replay = filter_record(&ext, &eta, &rec, true, &opts).unwrap();
        assert_eq!(live.pi11, replay.pi11);
        assert_eq!(live.extended, replay.extended);
    }
}
