//! Cascade of a two-level "generating filter" ancilla into the system.
//!
//! The ancilla, started in its excited state and driven by vacuum, emits a
//! photon with wavepacket `xi`. Feeding its output into the system `G`
//! reproduces single-photon driving with a Markovian model on
//! `ancilla ⊗ system`. All lifted operators use that tensor ordering.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::opalg::{
    add_scaled, check_dims, commutator, dissipator_heisenberg, lindblad_heisenberg, number,
    sigma_minus, sigma_plus, GeneratorParts, Operator, SlhTriple, C64, STRUCTURAL_TOL,
};
use crate::pulse::Pulse;

pub const DEFAULT_W_FLOOR: f64 = 1e-12;

/// Anti-Hermitian-part helper: `Im[A] = (A - A*) / 2i`.
pub fn im_part(a: &Operator) -> Operator {
    (a - &a.adjoint()).scale(C64::new(0.0, -0.5))
}

/// Cascade `G ◁ M = (S, L + S L0, H + H0 + Im[L* S L0])` where the output of
/// `M = (I, L0, H0)` feeds the input of `G`. Both triples must already act on
/// the same space.
pub fn series_product(g: &SlhTriple, m: &SlhTriple) -> Result<SlhTriple> {
    check_dims("series_product", g.s(), m.s())?;
    let dev = m.s().max_abs_diff(&Operator::identity(m.dim()));
    if dev > STRUCTURAL_TOL {
        return Err(Error::InvalidArgument(format!(
            "series_product only supports M with identity scattering (||S_M - I||_max = {dev:.3e})"
        )));
    }
    let s = g.s().clone();
    let sl0 = g.s() * m.l();
    let l = g.l() + &sl0;
    let h = &(g.h() + m.h()) + &im_part(&(&g.l().adjoint() * &sl0));
    Ok(SlhTriple::from_parts_unchecked(s, l, h))
}

/// `I_ancilla ⊗ op`.
pub fn lift_system(op: &Operator, ancilla_dim: usize) -> Operator {
    Operator::identity(ancilla_dim).kron(op)
}

/// `op ⊗ I_system`.
pub fn lift_ancilla(op: &Operator, sys_dim: usize) -> Operator {
    op.kron(&Operator::identity(sys_dim))
}

/// `xi(t) / sqrt(w(t))`, or zero once `w(t) <= w_floor`.
pub fn ancilla_coupling(p: &Pulse, t: f64, w_floor: f64) -> Result<C64> {
    let xi = p.eval(t)?;
    let w = p.tail(t);
    Ok(coupling_from(xi, w, w_floor))
}

#[inline]
pub(crate) fn coupling_from(xi: C64, w: f64, w_floor: f64) -> C64 {
    if w <= w_floor {
        C64::new(0.0, 0.0)
    } else {
        xi / w.sqrt()
    }
}

/// The signal model `M(t) = (I, xi(t) sigma_minus / sqrt(w(t)), 0)` on the
/// two-level ancilla.
pub fn signal_model(p: &Pulse, t: f64, w_floor: f64) -> Result<SlhTriple> {
    let lambda = ancilla_coupling(p, t, w_floor)?;
    Ok(SlhTriple::from_parts_unchecked(
        Operator::identity(2),
        sigma_minus().scale(lambda),
        Operator::zeros(2),
    ))
}

/// Amplitudes `(sqrt(w), sqrt(1 - w))` of the "photon still in the ancilla"
/// and "photon emitted into the field" branches of the generating filter.
pub fn generating_filter_weights(p: &Pulse, t: f64) -> Result<(f64, f64)> {
    let w = p.tail_weight(t)?;
    Ok((w.sqrt(), (1.0 - w).sqrt()))
}

/// Which of the four photon blocks an ancilla observable selects.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Block {
    B11,
    B10,
    B01,
    B00,
}

impl Block {
    pub const ALL: [Block; 4] = [Block::B11, Block::B10, Block::B01, Block::B00];

    pub fn label(self) -> &'static str {
        match self {
            Block::B11 => "11",
            Block::B10 => "10",
            Block::B01 => "01",
            Block::B00 => "00",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Ancilla observables `Q_jk` and their weights `w_jk(t)`.
#[derive(Clone, Debug)]
pub struct AncillaObservables {
    pub q11: Operator,
    pub q10: Operator,
    pub q01: Operator,
    pub q00: Operator,
}

impl Default for AncillaObservables {
    fn default() -> Self {
        AncillaObservables {
            q11: Operator::identity(2),
            q10: sigma_minus(),
            q01: sigma_plus(),
            q00: number(),
        }
    }
}

impl AncillaObservables {
    pub fn get(&self, b: Block) -> &Operator {
        match b {
            Block::B11 => &self.q11,
            Block::B10 => &self.q10,
            Block::B01 => &self.q01,
            Block::B00 => &self.q00,
        }
    }

    /// `w_jk` given the tail weight `w`.
    pub fn weight(b: Block, w: f64) -> f64 {
        match b {
            Block::B11 => 1.0,
            Block::B10 | Block::B01 => w.sqrt(),
            Block::B00 => w,
        }
    }
}

/// The system `G` cascaded behind the photon-generating ancilla.
#[derive(Clone, Debug)]
pub struct ExtendedSystem {
    base: SlhTriple,
    pulse: Pulse,
    w_floor: f64,
    // time-independent pieces of L~(t) = l_sys + lambda(t) l_anc and
    // H~(t) = h_sys + Im[lambda(t) cross]
    l_sys: DMatrix<C64>,
    l_anc: DMatrix<C64>,
    h_sys: DMatrix<C64>,
    cross: DMatrix<C64>,
    s_ext: DMatrix<C64>,
    // K~ = -iH~ - L~*L~/2 = k0 + lambda k_lam + conj(lambda) k_conj + |lambda|^2 k_abs
    k0: DMatrix<C64>,
    k_lam: DMatrix<C64>,
    k_conj: DMatrix<C64>,
    k_abs: DMatrix<C64>,
}

impl ExtendedSystem {
    pub fn new(base: SlhTriple, pulse: Pulse, w_floor: f64) -> Result<Self> {
        if w_floor.is_nan() || w_floor <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "w_floor must be positive, got {w_floor}"
            )));
        }
        let d = base.dim();
        let l_sys = lift_system(base.l(), 2).into_matrix();
        let l_anc = sigma_minus().kron(base.s()).into_matrix();
        let h_sys = lift_system(base.h(), 2).into_matrix();
        let cross = sigma_minus()
            .kron(&(&base.l().adjoint() * base.s()))
            .into_matrix();
        let s_ext = lift_system(base.s(), 2).into_matrix();
        debug_assert_eq!(l_sys.nrows(), 2 * d);
        let half = C64::new(0.5, 0.0);
        let atb = l_sys.adjoint() * &l_anc;
        let k0 = &h_sys * C64::new(0.0, -1.0) - l_sys.adjoint() * &l_sys * half;
        let k_lam = -(&cross + &atb) * half;
        let k_conj = (cross.adjoint() - atb.adjoint()) * half;
        let k_abs = -(l_anc.adjoint() * &l_anc) * half;
        Ok(ExtendedSystem {
            k0,
            k_lam,
            k_conj,
            k_abs,
            base,
            pulse,
            w_floor,
            l_sys,
            l_anc,
            h_sys,
            cross,
            s_ext,
        })
    }

    pub fn base(&self) -> &SlhTriple {
        &self.base
    }

    pub fn pulse(&self) -> &Pulse {
        &self.pulse
    }

    pub fn w_floor(&self) -> f64 {
        self.w_floor
    }

    pub fn sys_dim(&self) -> usize {
        self.base.dim()
    }

    pub fn dim(&self) -> usize {
        2 * self.base.dim()
    }

    /// Ancilla coupling `lambda(t)` such that `L0(t) = lambda(t) sigma_minus`.
    pub fn coupling(&self, t: f64) -> Result<C64> {
        ancilla_coupling(&self.pulse, t, self.w_floor)
    }

    /// `(S~, L~(t), H~(t))` computed through the series product of the lifted
    /// system and the lifted signal model.
    pub fn triple_at(&self, t: f64) -> Result<SlhTriple> {
        let m = signal_model(&self.pulse, t, self.w_floor)?;
        let d = self.sys_dim();
        let g_lift = SlhTriple::from_parts_unchecked(
            lift_system(self.base.s(), 2),
            lift_system(self.base.l(), 2),
            lift_system(self.base.h(), 2),
        );
        let m_lift = SlhTriple::from_parts_unchecked(
            lift_ancilla(m.s(), d),
            lift_ancilla(m.l(), d),
            lift_ancilla(m.h(), d),
        );
        series_product(&g_lift, &m_lift)
    }

    /// `(L~(t), H~(t))` from precomputed pieces; equal to [`Self::triple_at`]
    /// up to rounding.
    pub(crate) fn generators(&self, t: f64) -> (DMatrix<C64>, DMatrix<C64>) {
        let lambda = coupling_from(self.pulse.amplitude(t), self.pulse.tail(t), self.w_floor);
        self.generators_for(lambda)
    }

    pub(crate) fn generators_for(&self, lambda: C64) -> (DMatrix<C64>, DMatrix<C64>) {
        let l = &self.l_sys + &self.l_anc * lambda;
        let z = &self.cross * lambda;
        let h = &self.h_sys + (&z - z.adjoint()) * C64::new(0.0, -0.5);
        (l, h)
    }

    pub(crate) fn lambda_at(&self, t: f64) -> C64 {
        coupling_from(self.pulse.amplitude(t), self.pulse.tail(t), self.w_floor)
    }

    /// Generator pieces for coupling `lambda`.
    pub(crate) fn generator_parts(&self, lambda: C64) -> GeneratorParts {
        let mut parts = GeneratorParts::from_matrices(&self.s_ext, &self.l_sys, &self.h_sys);
        self.update_parts(lambda, &mut parts);
        parts
    }

    /// Overwrites `L~`, `K~` and their adjoints in `parts` for coupling
    /// `lambda` without allocating.
    pub(crate) fn update_parts(&self, lambda: C64, parts: &mut GeneratorParts) {
        parts.l.copy_from(&self.l_sys);
        add_scaled(&mut parts.l, lambda, &self.l_anc);
        parts.l.adjoint_to(&mut parts.l_dag);
        parts.k.copy_from(&self.k0);
        add_scaled(&mut parts.k, lambda, &self.k_lam);
        add_scaled(&mut parts.k, lambda.conj(), &self.k_conj);
        add_scaled(&mut parts.k, C64::new(lambda.norm_sqr(), 0.0), &self.k_abs);
        parts.k.adjoint_to(&mut parts.k_dag);
    }

    pub(crate) fn scattering(&self) -> &DMatrix<C64> {
        &self.s_ext
    }

    /// Initial extended state `|e><e| ⊗ |eta><eta|`.
    pub fn initial_state(&self, eta: &[C64]) -> Operator {
        number().kron(&Operator::projector(eta))
    }
}

/// Heisenberg generator of the extended system on a product `A ⊗ X`:
///
/// `A⊗G(X) + L_{L0}(A)⊗X + L0*A⊗S*[X,L] + A L0⊗[L*,X]S + L0* A L0⊗(S*XS - X)`.
pub fn extended_generator(
    ext: &ExtendedSystem,
    t: f64,
    a: &Operator,
    x: &Operator,
) -> Result<Operator> {
    if a.dim() != 2 {
        return Err(Error::DimensionMismatch {
            op: "extended_generator (ancilla)",
            left: a.dim(),
            right: 2,
        });
    }
    let g = ext.base();
    check_dims("extended_generator (system)", g.s(), x)?;
    let l0 = sigma_minus().scale(ext.coupling(t)?);
    let l0d = l0.adjoint();
    let (s, l) = (g.s(), g.l());
    let sd = s.adjoint();

    let mut out = a.kron(&lindblad_heisenberg(g, x)?);
    out += &dissipator_heisenberg(&l0, a)?.kron(x);
    out += &(&l0d * a).kron(&(&sd * &commutator(x, l)?));
    out += &(a * &l0).kron(&(&commutator(&l.adjoint(), x)? * s));
    let scattered = &(&(&sd * x) * s) - x;
    out += &(&(&l0d * a) * &l0).kron(&scattered);
    Ok(out)
}

/// Maps an extended (ancilla ⊗ system) operator to the four system blocks
/// `tr_anc[(Q_jk ⊗ I) rho] / w_jk`, ordered 11, 10, 01, 00. Blocks whose
/// weight has fallen to `w_floor` are returned as zero.
pub fn photon_blocks(rho_ext: &Operator, sys_dim: usize, w: f64, w_floor: f64) -> [Operator; 4] {
    let gg = rho_ext.block(sys_dim, 0, 0);
    let ee = rho_ext.block(sys_dim, 1, 1);
    let eg = rho_ext.block(sys_dim, 1, 0);
    let ge = rho_ext.block(sys_dim, 0, 1);
    let scaled = |op: Operator, weight: f64| {
        if w <= w_floor {
            Operator::zeros(sys_dim)
        } else {
            &op * (1.0 / weight)
        }
    };
    [
        &gg + &ee,
        scaled(eg, w.sqrt()),
        scaled(ge, w.sqrt()),
        scaled(ee, w),
    ]
}
