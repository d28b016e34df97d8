//! Coupled master equations for a system driven by a single photon.
//!
//! The state is a quadruple of system operators `rho^{jk}`; expectations are
//! `mu^{jk}(X) = tr[(rho^{jk})* X]`. `rho^{11}` is the physical state.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::opalg::{
    c, commutator, lindblad_heisenberg, GeneratorParts, Observable, Operator, SlhTriple, C64,
};
use crate::pulse::Pulse;
use crate::slh::{photon_blocks, ExtendedSystem};

pub const INVARIANT_TOL: f64 = 1e-6;

/// Numerator magnitude above which a vanished weight is an error.
pub const EMBEDDING_TOL: f64 = 1e-8;

#[derive(Clone, Debug)]
pub struct GeneralizedState {
    pub t: f64,
    pub rho11: Operator,
    pub rho10: Operator,
    pub rho01: Operator,
    pub rho00: Operator,
}

impl GeneralizedState {
    /// `rho^{11} = rho^{00} = |eta><eta|`, off-diagonal blocks zero.
    pub fn initial(eta: &[C64]) -> Result<Self> {
        let p = normalized_projector(eta)?;
        let d = p.dim();
        Ok(GeneralizedState {
            t: 0.0,
            rho11: p.clone(),
            rho10: Operator::zeros(d),
            rho01: Operator::zeros(d),
            rho00: p,
        })
    }

    pub fn dim(&self) -> usize {
        self.rho11.dim()
    }

    pub fn blocks(&self) -> [&Operator; 4] {
        [&self.rho11, &self.rho10, &self.rho01, &self.rho00]
    }

    /// `[mu^{11}, mu^{10}, mu^{01}, mu^{00}]` of `x`.
    pub fn expectations(&self, x: &Operator) -> Result<[C64; 4]> {
        if x.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                op: "expectations",
                left: self.dim(),
                right: x.dim(),
            });
        }
        Ok(self.blocks().map(|b| b.inner(x)))
    }

    pub fn invariants(&self) -> InvariantReport {
        InvariantReport {
            trace11: (self.rho11.trace() - c(1.0)).norm(),
            trace00: (self.rho00.trace() - c(1.0)).norm(),
            trace_cross: self.rho10.trace().norm().max(self.rho01.trace().norm()),
            cross_asymmetry: self.rho01.max_abs_diff(&self.rho10.adjoint()),
            hermiticity: self
                .rho11
                .hermiticity_defect()
                .max(self.rho00.hermiticity_defect()),
            min_eigenvalue: self.rho11.min_eigenvalue().min(self.rho00.min_eigenvalue()),
        }
    }

    fn from_raw(t: f64, m: [DMatrix<C64>; 4]) -> Self {
        let [a, b, cc, d] = m;
        GeneralizedState {
            t,
            rho11: Operator::wrap(a),
            rho10: Operator::wrap(b),
            rho01: Operator::wrap(cc),
            rho00: Operator::wrap(d),
        }
    }

    fn raw(&self) -> [DMatrix<C64>; 4] {
        self.blocks().map(|b| b.matrix().clone())
    }
}

pub(crate) fn normalized_projector(eta: &[C64]) -> Result<Operator> {
    if eta.is_empty() {
        return Err(Error::EmptyOperator);
    }
    let n2: f64 = eta.iter().map(|z| z.norm_sqr()).sum();
    if !n2.is_finite() || (n2 - 1.0).abs() > 1e-10 {
        return Err(Error::InvalidArgument(format!(
            "initial state must be normalized, got squared norm {n2}"
        )));
    }
    Ok(Operator::projector(eta))
}

/// Worst-case invariant defects of a generalized state.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct InvariantReport {
    pub trace11: f64,
    pub trace00: f64,
    pub trace_cross: f64,
    pub cross_asymmetry: f64,
    pub hermiticity: f64,
    pub min_eigenvalue: f64,
}

impl InvariantReport {
    fn first_breach(&self, tol: f64) -> Option<(&'static str, f64)> {
        [
            ("trace rho11 = 1", self.trace11),
            ("trace rho00 = 1", self.trace00),
            ("trace rho10 = 0", self.trace_cross),
            ("rho01 = rho10*", self.cross_asymmetry),
            ("hermiticity", self.hermiticity),
            ("positivity", -self.min_eigenvalue),
        ]
        .into_iter()
        .find(|(_, v)| v.is_nan() || *v >= tol)
    }

    /// Componentwise worst of two reports.
    pub fn worst(self, o: InvariantReport) -> InvariantReport {
        InvariantReport {
            trace11: self.trace11.max(o.trace11),
            trace00: self.trace00.max(o.trace00),
            trace_cross: self.trace_cross.max(o.trace_cross),
            cross_asymmetry: self.cross_asymmetry.max(o.cross_asymmetry),
            hermiticity: self.hermiticity.max(o.hermiticity),
            min_eigenvalue: self.min_eigenvalue.min(o.min_eigenvalue),
        }
    }
}

fn check_system(g: &SlhTriple, eta_dim: usize) -> Result<()> {
    if g.dim() != eta_dim {
        return Err(Error::DimensionMismatch {
            op: "initial state vs system",
            left: eta_dim,
            right: g.dim(),
        });
    }
    Ok(())
}

fn rhs_raw(parts: &GeneratorParts, xi: C64, m: &[DMatrix<C64>; 4]) -> [DMatrix<C64>; 4] {
    let [r11, r10, r01, r00] = m;
    let (l, ld, s, sd) = (&parts.l, &parts.l_dag, &parts.s, &parts.s_dag);
    let xic = xi.conj();

    let mut d00 = parts.apply_adjoint(r00);

    let mut d10 = parts.apply_adjoint(r10);
    let s00 = s * r00;
    d10 += (&s00 * ld - ld * &s00) * xi;

    let mut d01 = parts.apply_adjoint(r01);
    let r00s = r00 * sd;
    d01 += (l * &r00s - &r00s * l) * xic;

    let mut d11 = parts.apply_adjoint(r11);
    let s01 = s * r01;
    d11 += (&s01 * ld - ld * &s01) * xi;
    let r10s = r10 * sd;
    d11 += (l * &r10s - &r10s * l) * xic;
    let i2 = xi.norm_sqr();
    if i2 != 0.0 {
        d11 += (&s00 * sd - r00) * c(i2);
    }
    // keep the diagonal blocks exactly Hermitian against rounding drift
    symmetrize(&mut d11);
    symmetrize(&mut d00);
    [d11, d10, d01, d00]
}

fn symmetrize(m: &mut DMatrix<C64>) {
    let n = m.nrows();
    for i in 0..n {
        m[(i, i)].im = 0.0;
        for j in (i + 1)..n {
            let z = (m[(i, j)] + m[(j, i)].conj()) * 0.5;
            m[(i, j)] = z;
            m[(j, i)] = z.conj();
        }
    }
}

/// Time derivative of the four blocks at `(s.t, xi(s.t))`.
pub fn master_rhs(s: &GeneralizedState, g: &SlhTriple, p: &Pulse) -> Result<GeneralizedState> {
    check_system(g, s.dim())?;
    let xi = p.eval(s.t)?;
    let d = rhs_raw(&GeneratorParts::new(g), xi, &s.raw());
    Ok(GeneralizedState::from_raw(s.t, d))
}

/// `d/dt [mu^{11}, mu^{10}, mu^{01}, mu^{00}](X)` evaluated through the
/// Heisenberg form, i.e. by applying the generator to `X` instead of to the
/// state.
pub fn master_rhs_heisenberg(
    s: &GeneralizedState,
    g: &SlhTriple,
    p: &Pulse,
    x: &Operator,
) -> Result<[C64; 4]> {
    check_system(g, s.dim())?;
    if x.dim() != s.dim() {
        return Err(Error::DimensionMismatch {
            op: "master_rhs_heisenberg",
            left: s.dim(),
            right: x.dim(),
        });
    }
    let xi = p.eval(s.t)?;
    let (sm, l) = (g.s(), g.l());
    let sd = sm.adjoint();
    let gx = lindblad_heisenberg(g, x)?;
    let a = &sd * &commutator(x, l)?;
    let b = &commutator(&l.adjoint(), x)? * sm;
    let scattered = &(&(&sd * x) * sm) - x;
    let mu = |r: &Operator, y: &Operator| r.inner(y);

    let d11 = mu(&s.rho11, &gx)
        + mu(&s.rho01, &a) * xi.conj()
        + mu(&s.rho10, &b) * xi
        + mu(&s.rho00, &scattered) * xi.norm_sqr();
    let d10 = mu(&s.rho10, &gx) + mu(&s.rho00, &a) * xi.conj();
    let d01 = mu(&s.rho01, &gx) + mu(&s.rho00, &b) * xi;
    let d00 = mu(&s.rho00, &gx);
    Ok([d11, d10, d01, d00])
}

fn axpy4(base: &[DMatrix<C64>; 4], k: &[DMatrix<C64>; 4], h: f64) -> [DMatrix<C64>; 4] {
    std::array::from_fn(|i| &base[i] + &k[i] * c(h))
}

/// One classical RK4 step of the coupled equations with `xi` sampled at
/// `t`, `t + dt/2`, `t + dt`.
pub(crate) fn rk4_step(
    parts: &GeneratorParts,
    p: &Pulse,
    t: f64,
    dt: f64,
    m: &[DMatrix<C64>; 4],
) -> [DMatrix<C64>; 4] {
    let x0 = p.amplitude(t);
    let xh = p.amplitude(t + 0.5 * dt);
    let x1 = p.amplitude(t + dt);
    let k1 = rhs_raw(parts, x0, m);
    let k2 = rhs_raw(parts, xh, &axpy4(m, &k1, 0.5 * dt));
    let k3 = rhs_raw(parts, xh, &axpy4(m, &k2, 0.5 * dt));
    let k4 = rhs_raw(parts, x1, &axpy4(m, &k3, dt));
    std::array::from_fn(|i| {
        let incr = &k1[i] + (&k2[i] + &k3[i]) * c(2.0) + &k4[i];
        &m[i] + incr * c(dt / 6.0)
    })
}

#[derive(Clone, Debug)]
pub struct MasterOptions {
    pub observables: Vec<Observable>,
    /// Keep every `n`-th state (the final state is always kept).
    pub snapshot_stride: Option<usize>,
    pub invariant_tol: f64,
}

impl Default for MasterOptions {
    fn default() -> Self {
        MasterOptions {
            observables: Vec::new(),
            snapshot_stride: None,
            invariant_tol: INVARIANT_TOL,
        }
    }
}

#[derive(Clone, Debug)]
pub struct MasterRun {
    pub grid: TimeGrid,
    pub observable_names: Vec<String>,
    /// `mu[obs][k]` holds the four block expectations at `t_k`.
    pub mu: Vec<Vec<[C64; 4]>>,
    pub snapshots: Vec<GeneralizedState>,
    pub final_state: GeneralizedState,
    pub worst: InvariantReport,
}

impl MasterRun {
    pub fn times(&self) -> Vec<f64> {
        (0..=self.grid.n_steps())
            .map(|k| self.grid.time(k))
            .collect()
    }

    pub fn series(&self, name: &str) -> Option<&[[C64; 4]]> {
        let i = self.observable_names.iter().position(|n| n == name)?;
        Some(&self.mu[i])
    }
}

/// Integrates the coupled equations on `[0, horizon]` with fixed step `dt`.
/// Aborts with [`Error::InvariantViolation`] at the first step where an
/// invariant defect reaches `opts.invariant_tol`.
pub fn integrate_master(
    g: &SlhTriple,
    p: &Pulse,
    eta: &[C64],
    dt: f64,
    horizon: f64,
    opts: &MasterOptions,
) -> Result<MasterRun> {
    let grid = TimeGrid::new(dt, horizon)?;
    let init = GeneralizedState::initial(eta)?;
    check_system(g, init.dim())?;
    for o in &opts.observables {
        if o.op().dim() != g.dim() {
            return Err(Error::DimensionMismatch {
                op: "observable",
                left: o.op().dim(),
                right: g.dim(),
            });
        }
    }
    let parts = GeneratorParts::new(g);
    let mut mu: Vec<Vec<[C64; 4]>> = opts
        .observables
        .iter()
        .map(|_| Vec::with_capacity(grid.n_steps() + 1))
        .collect();
    let mut snapshots = Vec::new();
    let mut worst = init.invariants();
    let mut state = init;

    let mut k = 0usize;
    loop {
        let rep = state.invariants();
        if let Some((inv, mag)) = rep.first_breach(opts.invariant_tol) {
            return Err(Error::InvariantViolation {
                time: state.t,
                invariant: inv,
                magnitude: mag,
            });
        }
        worst = worst.worst(rep);
        for (o, series) in opts.observables.iter().zip(mu.iter_mut()) {
            series.push(state.expectations(o.op())?);
        }
        if let Some(stride) = opts.snapshot_stride {
            if stride > 0 && k.is_multiple_of(stride) && k != grid.n_steps() {
                snapshots.push(state.clone());
            }
        }
        if k == grid.n_steps() {
            break;
        }
        let t = grid.time(k);
        let next = rk4_step(&parts, p, t, dt, &state.raw());
        if next.iter().any(|m| m.iter().any(|z| !z.is_finite())) {
            return Err(Error::NumericBlowup {
                step: k + 1,
                time: grid.time(k + 1),
                what: "master equation",
            });
        }
        k += 1;
        state = GeneralizedState::from_raw(grid.time(k), next);
    }
    snapshots.push(state.clone());

    Ok(MasterRun {
        grid,
        observable_names: opts
            .observables
            .iter()
            .map(|o| o.name().to_string())
            .collect(),
        mu,
        snapshots,
        final_state: state,
        worst,
    })
}

/// RK4 for `d rho/dt = G*_t(rho)` where `(L(t), H(t))` come from `gen_at`.
/// `visit` sees the state on every grid point, including `t = 0`.
pub(crate) fn integrate_lindblad<F, V>(
    s: &DMatrix<C64>,
    gen_at: F,
    rho0: DMatrix<C64>,
    grid: TimeGrid,
    mut visit: V,
) -> Result<DMatrix<C64>>
where
    F: Fn(f64) -> (DMatrix<C64>, DMatrix<C64>),
    V: FnMut(usize, &DMatrix<C64>) -> Result<()>,
{
    let dt = grid.dt();
    let parts_at = |t: f64| {
        let (l, h) = gen_at(t);
        GeneratorParts::from_matrices(s, &l, &h)
    };
    let mut rho = rho0;
    visit(0, &rho)?;
    for k in 0..grid.n_steps() {
        let t = grid.time(k);
        let p0 = parts_at(t);
        let ph = parts_at(t + 0.5 * dt);
        let p1 = parts_at(t + dt);
        let k1 = p0.apply_adjoint(&rho);
        let k2 = ph.apply_adjoint(&(&rho + &k1 * c(0.5 * dt)));
        let k3 = ph.apply_adjoint(&(&rho + &k2 * c(0.5 * dt)));
        let k4 = p1.apply_adjoint(&(&rho + &k3 * c(dt)));
        rho += (k1 + (k2 + k3) * c(2.0) + k4) * c(dt / 6.0);
        symmetrize(&mut rho);
        if rho.iter().any(|z| !z.is_finite()) {
            return Err(Error::NumericBlowup {
                step: k + 1,
                time: grid.time(k + 1),
                what: "Lindblad equation",
            });
        }
        visit(k + 1, &rho)?;
    }
    Ok(rho)
}

/// States of the ordinary (vacuum-input) master equation on the grid.
pub fn integrate_vacuum_master(
    g: &SlhTriple,
    rho0: &Operator,
    dt: f64,
    horizon: f64,
) -> Result<Vec<Operator>> {
    if rho0.dim() != g.dim() {
        return Err(Error::DimensionMismatch {
            op: "integrate_vacuum_master",
            left: rho0.dim(),
            right: g.dim(),
        });
    }
    let grid = TimeGrid::new(dt, horizon)?;
    let (l, h) = (g.l().matrix().clone(), g.h().matrix().clone());
    let mut out = Vec::with_capacity(grid.n_steps() + 1);
    integrate_lindblad(
        g.s().matrix(),
        |_| (l.clone(), h.clone()),
        rho0.matrix().clone(),
        grid,
        |_, r| {
            out.push(Operator::wrap(r.clone()));
            Ok(())
        },
    )?;
    Ok(out)
}

/// Block expectations recovered from the extended (ancilla ⊗ system)
/// vacuum master equation.
#[derive(Clone, Debug)]
pub struct EmbeddingRun {
    pub grid: TimeGrid,
    pub observable_names: Vec<String>,
    /// Tail weight `w(t_k)`.
    pub weights: Vec<f64>,
    /// `tr[rho~ (|e><e| ⊗ I)]`.
    pub excited_population: Vec<f64>,
    /// `mu[obs][k][block]`, `None` once the block weight is below the floor.
    pub mu: Vec<Vec<[Option<C64>; 4]>>,
    pub final_state: Operator,
}

/// Runs the extended vacuum master equation from `|e><e| ⊗ |eta><eta|` and
/// divides out the ancilla weights. Blocks whose weight has dropped to the
/// floor are reported as `None`; if their numerator has not also vanished
/// (to [`EMBEDDING_TOL`]) the run fails with [`Error::EmbeddingBreakdown`].
pub fn embedding_oracle(
    ext: &ExtendedSystem,
    eta: &[C64],
    dt: f64,
    horizon: f64,
    observables: &[Observable],
) -> Result<EmbeddingRun> {
    let grid = TimeGrid::new(dt, horizon)?;
    let proj = normalized_projector(eta)?;
    let d = ext.sys_dim();
    if proj.dim() != d {
        return Err(Error::DimensionMismatch {
            op: "embedding_oracle",
            left: proj.dim(),
            right: d,
        });
    }
    let rho0 = ext.initial_state(eta).into_matrix();
    let p = ext.pulse();
    let floor = ext.w_floor();
    let mut weights = Vec::with_capacity(grid.n_steps() + 1);
    let mut pop = Vec::with_capacity(grid.n_steps() + 1);
    let mut mu: Vec<Vec<[Option<C64>; 4]>> = observables.iter().map(|_| Vec::new()).collect();

    let last = integrate_lindblad(
        ext.scattering(),
        |t| ext.generators(t),
        rho0,
        grid,
        |k, r| {
            let t = grid.time(k);
            let w = p.tail(t);
            let rho = Operator::wrap(r.clone());
            let ee = rho.block(d, 1, 1);
            pop.push(ee.trace().re);
            weights.push(w);
            let gg = rho.block(d, 0, 0);
            let eg = rho.block(d, 1, 0);
            let ge = rho.block(d, 0, 1);
            let blocks = photon_blocks(&rho, d, w, floor);
            for (o, series) in observables.iter().zip(mu.iter_mut()) {
                let x = o.op();
                let mut row = [None; 4];
                row[0] = Some((&gg + &ee).expect(x));
                if w > floor {
                    for b in 1..4 {
                        row[b] = Some(blocks[b].expect(x));
                    }
                } else {
                    let num = [eg.expect(x), ge.expect(x), ee.expect(x)]
                        .iter()
                        .map(|z| z.norm())
                        .fold(0.0, f64::max);
                    if num > EMBEDDING_TOL {
                        return Err(Error::EmbeddingBreakdown {
                            time: t,
                            weight: w,
                            numerator: num,
                        });
                    }
                }
                series.push(row);
            }
            Ok(())
        },
    )?;

    Ok(EmbeddingRun {
        grid,
        observable_names: observables.iter().map(|o| o.name().to_string()).collect(),
        weights,
        excited_population: pop,
        mu,
        final_state: Operator::wrap(last),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::opalg::{number, sigma_minus, sigma_z};

    fn ground() -> Vec<C64> {
        vec![c(1.0), c(0.0)]
    }

    fn excited() -> Vec<C64> {
        vec![c(0.0), c(1.0)]
    }

    #[test]
    fn initial_state_shape() {
        let s = GeneralizedState::initial(&ground()).unwrap();
        assert_eq!(s.rho11.get(0, 0), c(1.0));
        assert_eq!(s.rho10.max_abs(), 0.0);
        assert!(GeneralizedState::initial(&[c(1.0), c(1.0)]).is_err());
    }

    #[test]
    fn rhs_at_ground_with_unit_pulse() {
        // xi(0) = 1, eta = |g>, S = I, L = sqrt(k) sigma_minus, H = 0
        let k: f64 = 0.7;
        let g = SlhTriple::two_level(k, 0.0);
        let p = Pulse::square(0.0, 1.0).unwrap();
        let s = GeneralizedState::initial(&ground()).unwrap();
        let d = master_rhs(&s, &g, &p).unwrap();
        // [rho00, L*] with rho00 = |g><g| gives sqrt(k)(|g><g|σ+ - σ+|g><g|) = -sqrt(k)|e><g|
        let expect10 = Operator::ket_bra(2, 1, 0).scale(c(-k.sqrt()));
        assert!(d.rho10.max_abs_diff(&expect10) < 1e-15);
        assert!(d.rho01.max_abs_diff(&expect10.adjoint()) < 1e-15);
        assert!(d.rho00.max_abs() < 1e-15);
    }

    #[test]
    fn excited_decay_without_photon() {
        let k = 1.3;
        let g = SlhTriple::two_level(k, 0.0);
        let p = Pulse::square(20.0, 21.0).unwrap();
        let opts = MasterOptions {
            observables: vec![Observable::new("n", number()).unwrap()],
            ..Default::default()
        };
        let run = integrate_master(&g, &p, &excited(), 1e-3, 2.0, &opts).unwrap();
        for (i, mu) in run.mu[0].iter().enumerate() {
            let t = run.grid.time(i);
            assert!((mu[0].re - (-k * t).exp()).abs() < 1e-10);
            assert!((mu[3].re - (-k * t).exp()).abs() < 1e-10);
        }
    }

    #[test]
    fn vacuum_master_matches_block_00() {
        let g = SlhTriple::two_level(1.0, 0.4);
        let p = Pulse::gaussian(1.0, 0.5).unwrap();
        let opts = MasterOptions {
            snapshot_stride: Some(100),
            ..Default::default()
        };
        let eta = [c(0.6), C64::new(0.0, 0.8)];
        let run = integrate_master(&g, &p, &eta, 1e-3, 1.0, &opts).unwrap();
        let vac = integrate_vacuum_master(&g, &Operator::projector(&eta), 1e-3, 1.0).unwrap();
        for snap in &run.snapshots {
            let k = run.grid.index_of(snap.t).unwrap();
            assert!(snap.rho00.max_abs_diff(&vac[k]) < 1e-13);
        }
    }

    #[test]
    fn heisenberg_and_schrodinger_agree() {
        let g = SlhTriple::two_level(0.9, 0.3);
        let p = Pulse::gaussian(0.5, 0.4).unwrap();
        let mut s = GeneralizedState::initial(&[c(0.8), c(0.6)]).unwrap();
        s.rho10 =
            Operator::from_row_slice(2, &[c(0.1), C64::new(0.2, -0.1), c(0.0), c(-0.1)]).unwrap();
        s.rho01 = s.rho10.adjoint();
        s.t = 0.3;
        let d = master_rhs(&s, &g, &p).unwrap();
        for x in [sigma_z(), sigma_minus(), number()] {
            let lhs = d.expectations(&x).unwrap();
            let rhs = master_rhs_heisenberg(&s, &g, &p, &x).unwrap();
            for b in 0..4 {
                assert!((lhs[b] - rhs[b]).norm() < 1e-13, "block {b}");
            }
        }
    }

    #[test]
    fn dimension_errors() {
        let g = SlhTriple::trivial(3);
        let p = Pulse::gaussian(1.0, 0.5).unwrap();
        let err = integrate_master(&g, &p, &ground(), 1e-3, 1.0, &MasterOptions::default());
        assert!(matches!(err, Err(Error::DimensionMismatch { .. })));
    }
}
