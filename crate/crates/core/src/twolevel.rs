//! Closed-form coefficient equations for a two-level atom
//! (`S = I`, `L = sqrt(kappa) sigma_minus`, `H = omega sigma_z`).
//!
//! Every block is written as `(c I + x sigma_x + y sigma_y + z sigma_z) / 2`.
//! These equations are transcribed by hand and serve as an oracle for the
//! generic solvers in [`crate::master`] and [`crate::filter`].

use std::ops::{Add, Mul, Sub};

use crate::error::{Error, Result};
use crate::filter::FilterState;
use crate::grid::TimeGrid;
use crate::master::GeneralizedState;
use crate::opalg::{c, sigma_x, sigma_y, sigma_z, Operator, C64, I};
use crate::pulse::Pulse;

/// Which transcription of the coefficient equations to use.
pub trait Transcription {
    const AS_PRINTED: bool;
}

/// Equations consistent with the generic coupled master equations.
pub struct Corrected;

/// The historical transcription: `dz00/dt = -kappa (1 + z11)` and
/// `dx01/dt` with the opposite drive sign. Kept only for regression tests.
pub struct AsPrinted;

impl Transcription for Corrected {
    const AS_PRINTED: bool = false;
}

impl Transcription for AsPrinted {
    const AS_PRINTED: bool = true;
}

/// Bloch coefficients `(c, x, y, z)` of one block.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
struct Bloch {
    c: C64,
    x: C64,
    y: C64,
    z: C64,
}

impl Bloch {
    fn of(op: &Operator) -> Bloch {
        Bloch {
            c: op.trace(),
            x: op.expect(&sigma_x()),
            y: op.expect(&sigma_y()),
            z: op.expect(&sigma_z()),
        }
    }

    fn to_operator(self) -> Operator {
        let m = [
            self.c - self.z,
            self.x + I * self.y,
            self.x - I * self.y,
            self.c + self.z,
        ];
        Operator::from_row_slice(2, &m.map(|v| v * 0.5)).expect("2x2")
    }

    fn conj(self) -> Bloch {
        Bloch {
            c: self.c.conj(),
            x: self.x.conj(),
            y: self.y.conj(),
            z: self.z.conj(),
        }
    }

    /// Free evolution: amplitude damping at rate `kappa` plus `omega sigma_z`.
    fn relax(self, kappa: f64, omega: f64) -> Bloch {
        Bloch {
            c: c(0.0),
            x: self.x * (-0.5 * kappa) - self.y * (2.0 * omega),
            y: self.x * (2.0 * omega) - self.y * (0.5 * kappa),
            z: (self.c + self.z) * (-kappa),
        }
    }

    /// Coefficients of `[sigma_minus, rho]`.
    fn lowered(self) -> Bloch {
        Bloch {
            c: c(0.0),
            x: self.z,
            y: -I * self.z,
            z: -(self.x - I * self.y),
        }
    }

    /// Coefficients of `sigma_minus rho + rho sigma_plus`.
    fn emitted(self) -> Bloch {
        Bloch {
            c: self.x,
            x: self.c + self.z,
            y: c(0.0),
            z: -self.x,
        }
    }
}

impl Add for Bloch {
    type Output = Bloch;
    fn add(self, o: Bloch) -> Bloch {
        Bloch {
            c: self.c + o.c,
            x: self.x + o.x,
            y: self.y + o.y,
            z: self.z + o.z,
        }
    }
}

impl Sub for Bloch {
    type Output = Bloch;
    fn sub(self, o: Bloch) -> Bloch {
        self + o * c(-1.0)
    }
}

impl Mul<C64> for Bloch {
    type Output = Bloch;
    fn mul(self, a: C64) -> Bloch {
        Bloch {
            c: self.c * a,
            x: self.x * a,
            y: self.y * a,
            z: self.z * a,
        }
    }
}

const REALNESS_TOL: f64 = 1e-10;

fn real(z: C64, what: &'static str) -> Result<f64> {
    if z.im.abs() > REALNESS_TOL {
        return Err(Error::InvariantViolation {
            time: f64::NAN,
            invariant: what,
            magnitude: z.im.abs(),
        });
    }
    Ok(z.re)
}

/// The nine master-equation coefficients; `c00 = c11 = 1` and `c01 = 0`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct BlochMasterCoeffs {
    pub x00: f64,
    pub y00: f64,
    pub z00: f64,
    pub x01: C64,
    pub y01: C64,
    pub z01: C64,
    pub x11: f64,
    pub y11: f64,
    pub z11: f64,
}

impl BlochMasterCoeffs {
    /// Initial condition for the pure state `eta`.
    pub fn initial(eta: &[C64]) -> Result<Self> {
        Self::from_state(&GeneralizedState::initial(eta)?)
    }

    /// Coefficients of `rho^{00}`, `rho^{01}`, `rho^{11}`; fails if a
    /// diagonal block has coefficients that are not real.
    pub fn from_state(s: &GeneralizedState) -> Result<Self> {
        if s.dim() != 2 {
            return Err(Error::DimensionMismatch {
                op: "BlochMasterCoeffs::from_state",
                left: s.dim(),
                right: 2,
            });
        }
        let b00 = Bloch::of(&s.rho00);
        let b01 = Bloch::of(&s.rho01);
        let b11 = Bloch::of(&s.rho11);
        Ok(BlochMasterCoeffs {
            x00: real(b00.x, "x00 real")?,
            y00: real(b00.y, "y00 real")?,
            z00: real(b00.z, "z00 real")?,
            x01: b01.x,
            y01: b01.y,
            z01: b01.z,
            x11: real(b11.x, "x11 real")?,
            y11: real(b11.y, "y11 real")?,
            z11: real(b11.z, "z11 real")?,
        })
    }

    pub fn to_state(&self, t: f64) -> GeneralizedState {
        let (b00, b01, b11) = self.blocks();
        GeneralizedState {
            t,
            rho11: b11.to_operator(),
            rho10: b01.conj().to_operator(),
            rho01: b01.to_operator(),
            rho00: b00.to_operator(),
        }
    }

    fn blocks(&self) -> (Bloch, Bloch, Bloch) {
        let b00 = Bloch {
            c: c(1.0),
            x: c(self.x00),
            y: c(self.y00),
            z: c(self.z00),
        };
        let b01 = Bloch {
            c: c(0.0),
            x: self.x01,
            y: self.y01,
            z: self.z01,
        };
        let b11 = Bloch {
            c: c(1.0),
            x: c(self.x11),
            y: c(self.y11),
            z: c(self.z11),
        };
        (b00, b01, b11)
    }

    fn from_blocks(b00: Bloch, b01: Bloch, b11: Bloch) -> Self {
        BlochMasterCoeffs {
            x00: b00.x.re,
            y00: b00.y.re,
            z00: b00.z.re,
            x01: b01.x,
            y01: b01.y,
            z01: b01.z,
            x11: b11.x.re,
            y11: b11.y.re,
            z11: b11.z.re,
        }
    }

    pub fn as_array(&self) -> [C64; 9] {
        [
            c(self.x00),
            c(self.y00),
            c(self.z00),
            self.x01,
            self.y01,
            self.z01,
            c(self.x11),
            c(self.y11),
            c(self.z11),
        ]
    }

    pub fn max_abs_diff(&self, o: &Self) -> f64 {
        self.as_array()
            .iter()
            .zip(o.as_array())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    fn axpy(&self, h: f64, d: &Self) -> Self {
        let a = self.as_array();
        let b = d.as_array();
        let v: [C64; 9] = std::array::from_fn(|i| a[i] + b[i] * h);
        BlochMasterCoeffs {
            x00: v[0].re,
            y00: v[1].re,
            z00: v[2].re,
            x01: v[3],
            y01: v[4],
            z01: v[5],
            x11: v[6].re,
            y11: v[7].re,
            z11: v[8].re,
        }
    }
}

fn rhs_with_xi<V: Transcription>(
    m: &BlochMasterCoeffs,
    xi: C64,
    kappa: f64,
    omega: f64,
) -> BlochMasterCoeffs {
    let (b00, b01, b11) = m.blocks();
    let sk = kappa.sqrt();
    let xic = xi.conj();

    let mut d00 = b00.relax(kappa, omega);
    let mut d01 = b01.relax(kappa, omega) + b00.lowered() * (xic * sk);
    let drive = b01.conj().lowered() * (xic * sk);
    let d11 = b11.relax(kappa, omega) + drive + drive.conj();

    if V::AS_PRINTED {
        d00.z = c(-kappa * (1.0 + m.z11));
        d01.x -= c(2.0 * sk) * xic * m.z00;
    }
    BlochMasterCoeffs::from_blocks(d00, d01, d11)
}

/// Time derivative of the nine coefficients at time `t`.
pub fn bloch_master_rhs<V: Transcription>(
    m: &BlochMasterCoeffs,
    t: f64,
    kappa: f64,
    omega: f64,
    p: &Pulse,
) -> Result<BlochMasterCoeffs> {
    check_kappa(kappa)?;
    Ok(rhs_with_xi::<V>(m, p.eval(t)?, kappa, omega))
}

fn check_kappa(kappa: f64) -> Result<()> {
    if !(kappa > 0.0 && kappa.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "kappa must be positive, got {kappa}"
        )));
    }
    Ok(())
}

/// RK4 on the nine coefficients with the same stage times as
/// [`crate::master::integrate_master`]. Returns one entry per grid point.
pub fn integrate_bloch_master<V: Transcription>(
    init: BlochMasterCoeffs,
    kappa: f64,
    omega: f64,
    p: &Pulse,
    dt: f64,
    horizon: f64,
) -> Result<Vec<BlochMasterCoeffs>> {
    check_kappa(kappa)?;
    let grid = TimeGrid::new(dt, horizon)?;
    let mut out = Vec::with_capacity(grid.n_steps() + 1);
    let mut m = init;
    out.push(m);
    for k in 0..grid.n_steps() {
        let t = grid.time(k);
        let (x0, xh, x1) = (
            p.amplitude(t),
            p.amplitude(t + 0.5 * dt),
            p.amplitude(t + dt),
        );
        let k1 = rhs_with_xi::<V>(&m, x0, kappa, omega);
        let k2 = rhs_with_xi::<V>(&m.axpy(0.5 * dt, &k1), xh, kappa, omega);
        let k3 = rhs_with_xi::<V>(&m.axpy(0.5 * dt, &k2), xh, kappa, omega);
        let k4 = rhs_with_xi::<V>(&m.axpy(dt, &k3), x1, kappa, omega);
        m = m
            .axpy(dt / 6.0, &k1)
            .axpy(dt / 3.0, &k2)
            .axpy(dt / 3.0, &k3)
            .axpy(dt / 6.0, &k4);
        if m.as_array().iter().any(|z| !z.is_finite()) {
            return Err(Error::NumericBlowup {
                step: k + 1,
                time: grid.time(k + 1),
                what: "two-level coefficients",
            });
        }
        out.push(m);
    }
    Ok(out)
}

/// Filter coefficients. The hatted `01` block is the conditional
/// counterpart of `rho^{01}`, i.e. `sigma^{10}` of [`FilterState`];
/// `c11 = 1` by construction.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct BlochFilterCoeffs {
    pub c00: f64,
    pub x00: f64,
    pub y00: f64,
    pub z00: f64,
    pub c01: C64,
    pub x01: C64,
    pub y01: C64,
    pub z01: C64,
    pub x11: f64,
    pub y11: f64,
    pub z11: f64,
}

impl BlochFilterCoeffs {
    pub fn initial(eta: &[C64]) -> Result<Self> {
        Self::from_filter_state(&FilterState::initial(eta)?)
    }

    pub fn from_filter_state(s: &FilterState) -> Result<Self> {
        if s.dim() != 2 {
            return Err(Error::DimensionMismatch {
                op: "BlochFilterCoeffs::from_filter_state",
                left: s.dim(),
                right: 2,
            });
        }
        let b00 = Bloch::of(&s.sigma00);
        let b01 = Bloch::of(&s.sigma10);
        let b11 = Bloch::of(&s.sigma11);
        Ok(BlochFilterCoeffs {
            c00: real(b00.c, "c00 real")?,
            x00: real(b00.x, "x00 real")?,
            y00: real(b00.y, "y00 real")?,
            z00: real(b00.z, "z00 real")?,
            c01: b01.c,
            x01: b01.x,
            y01: b01.y,
            z01: b01.z,
            x11: real(b11.x, "x11 real")?,
            y11: real(b11.y, "y11 real")?,
            z11: real(b11.z, "z11 real")?,
        })
    }

    pub fn to_filter_state(&self, t: f64) -> FilterState {
        let (b00, b01, b11) = self.blocks();
        FilterState {
            t,
            sigma11: b11.to_operator(),
            sigma10: b01.to_operator(),
            sigma01: b01.conj().to_operator(),
            sigma00: b00.to_operator(),
        }
    }

    fn blocks(&self) -> (Bloch, Bloch, Bloch) {
        (
            Bloch {
                c: c(self.c00),
                x: c(self.x00),
                y: c(self.y00),
                z: c(self.z00),
            },
            Bloch {
                c: self.c01,
                x: self.x01,
                y: self.y01,
                z: self.z01,
            },
            Bloch {
                c: c(1.0),
                x: c(self.x11),
                y: c(self.y11),
                z: c(self.z11),
            },
        )
    }

    pub fn as_array(&self) -> [C64; 11] {
        [
            c(self.c00),
            c(self.x00),
            c(self.y00),
            c(self.z00),
            self.c01,
            self.x01,
            self.y01,
            self.z01,
            c(self.x11),
            c(self.y11),
            c(self.z11),
        ]
    }

    pub fn max_abs_diff(&self, o: &Self) -> f64 {
        self.as_array()
            .iter()
            .zip(o.as_array())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

/// `K = sqrt(kappa) x11 + xi c01 + conj(xi c01)`.
pub fn bloch_gain(f: &BlochFilterCoeffs, t: f64, kappa: f64, p: &Pulse) -> Result<f64> {
    check_kappa(kappa)?;
    let xi = p.eval(t)?;
    Ok(kappa.sqrt() * f.x11 + 2.0 * (xi * f.c01).re)
}

/// One Euler–Maruyama step of the filter coefficients for innovation
/// increment `dw`.
pub fn bloch_filter_step(
    f: &BlochFilterCoeffs,
    dw: f64,
    dt: f64,
    t: f64,
    kappa: f64,
    omega: f64,
    p: &Pulse,
) -> Result<BlochFilterCoeffs> {
    check_kappa(kappa)?;
    if dt.is_nan() || dt <= 0.0 || !dw.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "need dt > 0 and finite dW (dt={dt}, dW={dw})"
        )));
    }
    let xi = p.eval(t)?;
    let xic = xi.conj();
    let sk = c(kappa.sqrt());
    let k = c(bloch_gain(f, t, kappa, p)?);
    let (b00, b01, b11) = f.blocks();

    let drift00 = b00.relax(kappa, omega);
    let drift01 = b01.relax(kappa, omega) + b00.lowered() * (xic * sk);
    let drive = b01.conj().lowered() * (xic * sk);
    let drift11 = b11.relax(kappa, omega) + drive + drive.conj();

    let diff00 = b00.emitted() * sk - b00 * k;
    let diff01 = b01.emitted() * sk + b00 * xic - b01 * k;
    let diff11 = b11.emitted() * sk + b01.conj() * xic + b01 * xi - b11 * k;

    let (cdt, cdw) = (c(dt), c(dw));
    let n00 = b00 + drift00 * cdt + diff00 * cdw;
    let n01 = b01 + drift01 * cdt + diff01 * cdw;
    let n11 = b11 + drift11 * cdt + diff11 * cdw;
    let out = BlochFilterCoeffs {
        c00: n00.c.re,
        x00: n00.x.re,
        y00: n00.y.re,
        z00: n00.z.re,
        c01: n01.c,
        x01: n01.x,
        y01: n01.y,
        z01: n01.z,
        x11: n11.x.re,
        y11: n11.y.re,
        z11: n11.z.re,
    };
    if out.as_array().iter().any(|z| !z.is_finite()) {
        return Err(Error::NonFinite("two-level filter coefficients"));
    }
    Ok(out)
}
