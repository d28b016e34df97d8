//! Dense complex operators, SLH triples and the Lindblad generator in both
//! the Heisenberg (`G(X)`) and Schrödinger (`G*(rho)`) pictures.
//!
//! Basis convention for two-level systems: index 0 is the ground state |g>,
//! index 1 the excited state |e>. With this ordering `sigma_z |e> = |e>` and
//! `sigma_minus = |g><e|`.

use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use nalgebra::DMatrix;
pub use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

/// Tolerance for structural checks (unitarity, Hermiticity).
pub const STRUCTURAL_TOL: f64 = 1e-10;
/// Tolerance for algebraic identities.
pub const ALGEBRAIC_TOL: f64 = 1e-12;

pub const I: C64 = C64 { re: 0.0, im: 1.0 };

#[inline]
pub(crate) fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

/// A square complex matrix acting on a finite-dimensional Hilbert space.
#[derive(Clone, PartialEq)]
pub struct Operator(DMatrix<C64>);

impl fmt::Debug for Operator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Operator{}", self.0)
    }
}

impl Operator {
    pub fn from_matrix(m: DMatrix<C64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::NotSquare {
                rows: m.nrows(),
                cols: m.ncols(),
            });
        }
        if m.nrows() == 0 {
            return Err(Error::EmptyOperator);
        }
        if !m.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
            return Err(Error::NonFinite("operator"));
        }
        Ok(Operator(m))
    }

    /// Builds an operator from `dim * dim` entries in row-major order.
    pub fn from_row_slice(dim: usize, entries: &[C64]) -> Result<Self> {
        if dim == 0 {
            return Err(Error::EmptyOperator);
        }
        if entries.len() != dim * dim {
            return Err(Error::InvalidArgument(format!(
                "expected {} entries for a {dim}x{dim} operator, got {}",
                dim * dim,
                entries.len()
            )));
        }
        Self::from_matrix(DMatrix::from_row_slice(dim, dim, entries))
    }

    pub fn from_real_rows(rows: &[&[f64]]) -> Result<Self> {
        let dim = rows.len();
        let entries: Vec<C64> = rows.iter().flat_map(|r| r.iter().map(|&x| c(x))).collect();
        Self::from_row_slice(dim, &entries)
    }

    pub(crate) fn wrap(m: DMatrix<C64>) -> Self {
        debug_assert_eq!(m.nrows(), m.ncols());
        Operator(m)
    }

    pub fn zeros(dim: usize) -> Self {
        Operator(DMatrix::zeros(dim, dim))
    }

    pub fn identity(dim: usize) -> Self {
        Operator(DMatrix::identity(dim, dim))
    }

    /// `|v><v|` for a (not necessarily normalized) vector `v`.
    pub fn projector(v: &[C64]) -> Self {
        let n = v.len();
        Operator(DMatrix::from_fn(n, n, |i, j| v[i] * v[j].conj()))
    }

    /// `|e_i><e_j|` on a `dim`-dimensional space.
    pub fn ket_bra(dim: usize, i: usize, j: usize) -> Self {
        let mut m = DMatrix::zeros(dim, dim);
        m[(i, j)] = c(1.0);
        Operator(m)
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.0
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.0[(i, j)]
    }

    pub fn adjoint(&self) -> Operator {
        Operator(self.0.adjoint())
    }

    pub fn trace(&self) -> C64 {
        self.0.trace()
    }

    pub fn scale(&self, z: C64) -> Operator {
        Operator(&self.0 * z)
    }

    /// Tensor product `self ⊗ other` (self is the left, slower-varying factor).
    pub fn kron(&self, other: &Operator) -> Operator {
        Operator(self.0.kronecker(&other.0))
    }

    /// `tr[self · x]`.
    pub fn expect(&self, x: &Operator) -> C64 {
        trace_of_product(&self.0, &x.0)
    }

    /// `<self, x> = tr[self* · x]`.
    pub fn inner(&self, x: &Operator) -> C64 {
        let n = self.dim();
        let mut acc = C64::new(0.0, 0.0);
        for i in 0..n {
            for k in 0..n {
                acc += self.0[(k, i)].conj() * x.0[(k, i)];
            }
        }
        acc
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0, |m, z| m.max(z.norm()))
    }

    pub fn max_abs_diff(&self, other: &Operator) -> f64 {
        self.0
            .iter()
            .zip(other.0.iter())
            .fold(0.0, |m, (a, b)| m.max((a - b).norm()))
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// `||A - A*||_max`.
    pub fn hermiticity_defect(&self) -> f64 {
        let n = self.dim();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in i..n {
                worst = worst.max((self.0[(i, j)] - self.0[(j, i)].conj()).norm());
            }
        }
        worst
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_defect() <= tol
    }

    /// `||A*A - I||_max`.
    pub fn unitarity_defect(&self) -> f64 {
        let p = self.0.adjoint() * &self.0;
        let n = self.dim();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((p[(i, j)] - c(target)).norm());
            }
        }
        worst
    }

    pub fn is_unitary(&self, tol: f64) -> bool {
        self.unitarity_defect() <= tol
    }

    /// Smallest eigenvalue of the Hermitian part `(A + A*)/2`.
    pub fn min_eigenvalue(&self) -> f64 {
        let h = (&self.0 + self.0.adjoint()) * c(0.5);
        h.symmetric_eigenvalues()
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min)
    }

    /// Extracts the `dim x dim` block `(a, b)` of an operator on an `n·dim`
    /// space ordered as ancilla ⊗ system.
    pub fn block(&self, sys_dim: usize, a: usize, b: usize) -> Operator {
        Operator(
            self.0
                .view((a * sys_dim, b * sys_dim), (sys_dim, sys_dim))
                .into_owned(),
        )
    }
}

/// `y += a x` in place.
#[inline]
pub(crate) fn add_scaled(y: &mut DMatrix<C64>, a: C64, x: &DMatrix<C64>) {
    y.zip_apply(x, |yi, xi| *yi += a * xi);
}

pub(crate) fn trace_of_product(a: &DMatrix<C64>, b: &DMatrix<C64>) -> C64 {
    let n = a.nrows();
    let (a, b) = (a.as_slice(), b.as_slice());
    let mut acc = C64::new(0.0, 0.0);
    // column-major: a[(i, k)] = a[i + k n]
    for i in 0..n {
        let bi = &b[i * n..(i + 1) * n];
        for (k, bk) in bi.iter().enumerate() {
            acc += a[i + k * n] * bk;
        }
    }
    acc
}

impl<'a> Add<&'a Operator> for &'a Operator {
    type Output = Operator;
    fn add(self, rhs: &Operator) -> Operator {
        Operator(&self.0 + &rhs.0)
    }
}

impl<'a> Sub<&'a Operator> for &'a Operator {
    type Output = Operator;
    fn sub(self, rhs: &Operator) -> Operator {
        Operator(&self.0 - &rhs.0)
    }
}

impl<'a> Mul<&'a Operator> for &'a Operator {
    type Output = Operator;
    fn mul(self, rhs: &Operator) -> Operator {
        Operator(&self.0 * &rhs.0)
    }
}

impl Mul<C64> for &Operator {
    type Output = Operator;
    fn mul(self, rhs: C64) -> Operator {
        Operator(&self.0 * rhs)
    }
}

impl Mul<f64> for &Operator {
    type Output = Operator;
    fn mul(self, rhs: f64) -> Operator {
        Operator(&self.0 * c(rhs))
    }
}

impl Add for Operator {
    type Output = Operator;
    fn add(self, rhs: Operator) -> Operator {
        Operator(self.0 + rhs.0)
    }
}

impl Sub for Operator {
    type Output = Operator;
    fn sub(self, rhs: Operator) -> Operator {
        Operator(self.0 - rhs.0)
    }
}

impl AddAssign<&Operator> for Operator {
    fn add_assign(&mut self, rhs: &Operator) {
        self.0 += &rhs.0;
    }
}

impl Neg for &Operator {
    type Output = Operator;
    fn neg(self) -> Operator {
        Operator(-&self.0)
    }
}

pub fn sigma_x() -> Operator {
    Operator::from_real_rows(&[&[0.0, 1.0], &[1.0, 0.0]]).unwrap()
}

/// `i|g><e| - i|e><g|`, so that `[sigma_x, sigma_y] = 2i sigma_z`.
pub fn sigma_y() -> Operator {
    Operator::from_row_slice(2, &[c(0.0), I, -I, c(0.0)]).unwrap()
}

/// `|e><e| - |g><g|`.
pub fn sigma_z() -> Operator {
    Operator::from_real_rows(&[&[-1.0, 0.0], &[0.0, 1.0]]).unwrap()
}

/// Lowering operator `|g><e|`.
pub fn sigma_minus() -> Operator {
    Operator::ket_bra(2, 0, 1)
}

/// Raising operator `|e><g|`.
pub fn sigma_plus() -> Operator {
    Operator::ket_bra(2, 1, 0)
}

/// Excited-state projector `n = sigma_plus sigma_minus`.
pub fn number() -> Operator {
    Operator::ket_bra(2, 1, 1)
}

/// A Hermitian operator with a name used for output columns.
#[derive(Clone, Debug)]
pub struct Observable {
    name: String,
    op: Operator,
}

impl Observable {
    pub fn new(name: impl Into<String>, op: Operator) -> Result<Self> {
        let name = name.into();
        let dev = op.hermiticity_defect();
        if dev > STRUCTURAL_TOL {
            return Err(Error::NotHermitian {
                what: format!("observable `{name}`"),
                deviation: dev,
            });
        }
        Ok(Observable { name, op })
    }

    /// Two-level presets: `sx`, `sy`, `sz` and `population` (`|e><e|`).
    pub fn preset(name: &str) -> Option<Self> {
        let op = match name {
            "sx" => sigma_x(),
            "sy" => sigma_y(),
            "sz" => sigma_z(),
            "population" => number(),
            _ => return None,
        };
        Some(Observable {
            name: name.to_string(),
            op,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn op(&self) -> &Operator {
        &self.op
    }
}

pub(crate) fn check_dims(op: &'static str, a: &Operator, b: &Operator) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            op,
            left: a.dim(),
            right: b.dim(),
        });
    }
    Ok(())
}

/// `AB - BA`.
pub fn commutator(a: &Operator, b: &Operator) -> Result<Operator> {
    check_dims("commutator", a, b)?;
    Ok(Operator(&a.0 * &b.0 - &b.0 * &a.0))
}

/// `L_L(X) = ½ L*[X, L] + ½ [L*, X] L`.
pub fn dissipator_heisenberg(l: &Operator, x: &Operator) -> Result<Operator> {
    check_dims("dissipator_heisenberg", l, x)?;
    let ld = l.0.adjoint();
    let xl = &x.0 * &l.0;
    let lx = &l.0 * &x.0;
    let ldx = &ld * &x.0;
    let xld = &x.0 * &ld;
    let out = (&ld * (&xl - &lx) + (&ldx - &xld) * &l.0) * c(0.5);
    Ok(Operator(out))
}

/// The system parameters `(S, L, H)` of an open quantum system driven by a
/// single boson field.
#[derive(Clone, Debug, PartialEq)]
pub struct SlhTriple {
    s: Operator,
    l: Operator,
    h: Operator,
}

impl SlhTriple {
    pub fn new(s: Operator, l: Operator, h: Operator) -> Result<Self> {
        Self::with_tolerance(s, l, h, STRUCTURAL_TOL)
    }

    pub fn with_tolerance(s: Operator, l: Operator, h: Operator, tol: f64) -> Result<Self> {
        check_dims("SlhTriple (S, L)", &s, &l)?;
        check_dims("SlhTriple (S, H)", &s, &h)?;
        let deviation = s.unitarity_defect();
        if deviation > tol {
            return Err(Error::NotUnitary { deviation });
        }
        let deviation = h.hermiticity_defect();
        if deviation > tol {
            return Err(Error::NotHermitian {
                what: "Hamiltonian".into(),
                deviation,
            });
        }
        Ok(SlhTriple { s, l, h })
    }

    /// Skips validation; callers guarantee the invariants by construction.
    pub(crate) fn from_parts_unchecked(s: Operator, l: Operator, h: Operator) -> Self {
        SlhTriple { s, l, h }
    }

    /// `(I, 0, 0)`: a system that does not couple to the field.
    pub fn trivial(dim: usize) -> Self {
        SlhTriple {
            s: Operator::identity(dim),
            l: Operator::zeros(dim),
            h: Operator::zeros(dim),
        }
    }

    /// `S = I`, `L = sqrt(kappa) sigma_minus`, `H = omega sigma_z`.
    pub fn two_level(kappa: f64, omega: f64) -> Self {
        SlhTriple {
            s: Operator::identity(2),
            l: &sigma_minus() * kappa.sqrt(),
            h: &sigma_z() * omega,
        }
    }

    pub fn dim(&self) -> usize {
        self.s.dim()
    }

    pub fn s(&self) -> &Operator {
        &self.s
    }

    pub fn l(&self) -> &Operator {
        &self.l
    }

    pub fn h(&self) -> &Operator {
        &self.h
    }
}

/// `G(X) = L_L(X) - i[X, H]`.
pub fn lindblad_heisenberg(g: &SlhTriple, x: &Operator) -> Result<Operator> {
    check_dims("lindblad_heisenberg", g.s(), x)?;
    let diss = dissipator_heisenberg(g.l(), x)?;
    let comm = commutator(x, g.h())?;
    Ok(&diss - &comm.scale(I))
}

/// `G*(rho) = L rho L* - ½ rho L*L - ½ L*L rho + i[rho, H]`.
///
/// `rho` need not be Hermitian.
pub fn lindblad_schrodinger(g: &SlhTriple, rho: &Operator) -> Result<Operator> {
    check_dims("lindblad_schrodinger", g.s(), rho)?;
    Ok(Operator(GeneratorParts::new(g).apply_adjoint(&rho.0)))
}

/// Precomputed matrices for repeated application of `G*`.
///
/// `G*(rho) = L rho L* + K rho + rho K*` with `K = -iH - ½ L*L`.
#[derive(Clone, Debug)]
pub(crate) struct GeneratorParts {
    pub l: DMatrix<C64>,
    pub l_dag: DMatrix<C64>,
    pub k: DMatrix<C64>,
    pub k_dag: DMatrix<C64>,
    pub s: DMatrix<C64>,
    pub s_dag: DMatrix<C64>,
}

impl GeneratorParts {
    pub fn new(g: &SlhTriple) -> Self {
        Self::from_matrices(&g.s.0, &g.l.0, &g.h.0)
    }

    pub fn from_matrices(s: &DMatrix<C64>, l: &DMatrix<C64>, h: &DMatrix<C64>) -> Self {
        let l_dag = l.adjoint();
        let k = h * (-I) - (&l_dag * l) * c(0.5);
        GeneratorParts {
            l: l.clone(),
            l_dag,
            k_dag: k.adjoint(),
            k,
            s: s.clone(),
            s_dag: s.adjoint(),
        }
    }

    pub fn apply_adjoint(&self, rho: &DMatrix<C64>) -> DMatrix<C64> {
        let mut out = &self.l * rho * &self.l_dag;
        out += &self.k * rho;
        out += rho * &self.k_dag;
        out
    }
}
