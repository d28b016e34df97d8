//! Single-photon wavepackets `xi(t)` and their tail weight
//! `w(t) = ∫_t^∞ |xi(s)|² ds`.

use std::f64::consts::{PI, SQRT_2};

use crate::error::{Error, Result};
use crate::opalg::C64;

/// Accepted deviation of `∫|xi|²` from one.
pub const NORM_TOL: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub enum PulseShape {
    /// `|xi|²` is a normal density with mean `center` and standard deviation
    /// `width`, truncated to `t >= 0` and renormalized.
    Gaussian { center: f64, width: f64 },
    /// `sqrt(rate) exp(-rate (t - start) / 2)` for `t >= start`, zero before.
    DecayingExponential { rate: f64, start: f64 },
    /// Constant on `[start, end)`.
    Square { start: f64, end: f64 },
    /// Linear interpolation between samples, zero outside the grid.
    Tabulated { grid: Vec<f64>, values: Vec<C64> },
}

#[derive(Clone, Debug)]
enum Kind {
    Gaussian {
        center: f64,
        width: f64,
        amp: f64,
        mass: f64,
    },
    Exponential {
        rate: f64,
        start: f64,
    },
    Square {
        start: f64,
        end: f64,
    },
    Tabulated {
        grid: Vec<f64>,
        values: Vec<C64>,
        // tail[i] = ∫_{grid[i]}^{grid[last]} |xi|²
        tail: Vec<f64>,
    },
}

/// A normalized wavepacket. Immutable after construction.
#[derive(Clone, Debug)]
pub struct Pulse {
    shape: PulseShape,
    kind: Kind,
    detuning: f64,
}

impl Pulse {
    pub fn new(shape: PulseShape) -> Result<Self> {
        let kind = match &shape {
            &PulseShape::Gaussian { center, width } => {
                if !(center.is_finite() && width.is_finite() && width > 0.0) {
                    return Err(Error::InvalidPulse(format!(
                        "gaussian needs finite center and width > 0 (center={center}, width={width})"
                    )));
                }
                // probability mass of N(center, width²) on [0, ∞)
                let mass = 0.5 * libm::erfc(-center / (width * SQRT_2));
                if mass < 1e-300 {
                    return Err(Error::InvalidPulse("gaussian has no mass on t >= 0".into()));
                }
                let amp = (1.0 / (width * (2.0 * PI).sqrt() * mass)).sqrt();
                Kind::Gaussian {
                    center,
                    width,
                    amp,
                    mass,
                }
            }
            &PulseShape::DecayingExponential { rate, start } => {
                if !(rate.is_finite() && rate > 0.0 && start.is_finite() && start >= 0.0) {
                    return Err(Error::InvalidPulse(format!(
                        "decaying exponential needs rate > 0 and start >= 0 (rate={rate}, start={start})"
                    )));
                }
                Kind::Exponential { rate, start }
            }
            &PulseShape::Square { start, end } => {
                if !(start.is_finite() && end.is_finite() && start >= 0.0 && end > start) {
                    return Err(Error::InvalidPulse(format!(
                        "square pulse needs 0 <= start < end (start={start}, end={end})"
                    )));
                }
                Kind::Square { start, end }
            }
            PulseShape::Tabulated { grid, values } => tabulated(grid, values)?,
        };
        let pulse = Pulse {
            shape,
            kind,
            detuning: 0.0,
        };
        let norm = pulse.norm_by_quadrature();
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(Error::InvalidPulse(format!(
                "quadrature norm {norm} deviates from 1 by more than {NORM_TOL:e}"
            )));
        }
        Ok(pulse)
    }

    pub fn gaussian(center: f64, width: f64) -> Result<Self> {
        Self::new(PulseShape::Gaussian { center, width })
    }

    pub fn decaying_exponential(rate: f64, start: f64) -> Result<Self> {
        Self::new(PulseShape::DecayingExponential { rate, start })
    }

    pub fn square(start: f64, end: f64) -> Result<Self> {
        Self::new(PulseShape::Square { start, end })
    }

    pub fn tabulated(grid: Vec<f64>, values: Vec<C64>) -> Result<Self> {
        Self::new(PulseShape::Tabulated { grid, values })
    }

    /// Multiplies the envelope by `exp(-i detuning t)`. `|xi|` and `w` are
    /// unchanged.
    pub fn with_detuning(mut self, detuning: f64) -> Self {
        self.detuning = detuning;
        self
    }

    pub fn shape(&self) -> &PulseShape {
        &self.shape
    }

    pub fn detuning(&self) -> f64 {
        self.detuning
    }

    /// `xi(t)`.
    pub fn eval(&self, t: f64) -> Result<C64> {
        check_time(t)?;
        Ok(self.amplitude(t))
    }

    /// `w(t)`, clamped to `[0, 1]`.
    pub fn tail_weight(&self, t: f64) -> Result<f64> {
        check_time(t)?;
        Ok(self.tail(t))
    }

    /// Unchecked `xi(t)` for hot loops; `t` must be non-negative.
    pub(crate) fn amplitude(&self, t: f64) -> C64 {
        let env = self.envelope(t);
        if self.detuning == 0.0 {
            env
        } else {
            env * C64::from_polar(1.0, -self.detuning * t)
        }
    }

    fn envelope(&self, t: f64) -> C64 {
        match &self.kind {
            Kind::Gaussian {
                center, width, amp, ..
            } => {
                let u = (t - center) / width;
                C64::new(amp * (-0.25 * u * u).exp(), 0.0)
            }
            Kind::Exponential { rate, start } => {
                if t < *start {
                    C64::new(0.0, 0.0)
                } else {
                    C64::new(rate.sqrt() * (-0.5 * rate * (t - start)).exp(), 0.0)
                }
            }
            Kind::Square { start, end } => {
                if t >= *start && t < *end {
                    C64::new(1.0 / (end - start).sqrt(), 0.0)
                } else {
                    C64::new(0.0, 0.0)
                }
            }
            Kind::Tabulated { grid, values, .. } => interpolate(grid, values, t),
        }
    }

    /// Unchecked `w(t)`.
    pub(crate) fn tail(&self, t: f64) -> f64 {
        let w = match &self.kind {
            Kind::Gaussian {
                center,
                width,
                mass,
                ..
            } => 0.5 * libm::erfc((t - center) / (width * SQRT_2)) / mass,
            Kind::Exponential { rate, start } => {
                if t <= *start {
                    1.0
                } else {
                    (-rate * (t - start)).exp()
                }
            }
            Kind::Square { start, end } => ((end - t) / (end - start)).min(1.0),
            Kind::Tabulated { grid, values, tail } => {
                let last = grid.len() - 1;
                if t <= grid[0] {
                    tail[0]
                } else if t >= grid[last] {
                    0.0
                } else {
                    let i = segment(grid, t);
                    let partial = adaptive_simpson(
                        &|s| interpolate(grid, values, s).norm_sqr(),
                        t,
                        grid[i + 1],
                        1e-14,
                    );
                    partial + tail[i + 1]
                }
            }
        };
        w.clamp(0.0, 1.0)
    }

    /// `|xi(t)|²`, the photon arrival density.
    pub fn intensity(&self, t: f64) -> f64 {
        self.envelope(t).norm_sqr()
    }

    /// Subintervals covering the support of `|xi|²` up to negligible tails.
    fn support_pieces(&self) -> Vec<f64> {
        match &self.kind {
            Kind::Gaussian { center, width, .. } => {
                let lo = (center - 14.0 * width).max(0.0);
                let hi = center + 14.0 * width;
                let n = 112;
                (0..=n)
                    .map(|k| lo + (hi - lo) * k as f64 / n as f64)
                    .collect()
            }
            Kind::Exponential { rate, start } => {
                (0..=80).map(|k| start + k as f64 / rate).collect()
            }
            Kind::Square { start, end } => vec![*start, *end],
            Kind::Tabulated { grid, .. } => grid.clone(),
        }
    }

    fn norm_by_quadrature(&self) -> f64 {
        let f = |t: f64| self.intensity(t);
        self.support_pieces()
            .windows(2)
            .map(|w| adaptive_simpson(&f, w[0], w[1], 1e-14))
            .sum()
    }
}

fn check_time(t: f64) -> Result<()> {
    if t.is_nan() || t < 0.0 {
        return Err(Error::NegativeTime(t));
    }
    Ok(())
}

fn tabulated(grid: &[f64], values: &[C64]) -> Result<Kind> {
    if grid.len() < 2 || grid.len() != values.len() {
        return Err(Error::InvalidPulse(format!(
            "tabulated pulse needs at least two samples and matching lengths (grid={}, values={})",
            grid.len(),
            values.len()
        )));
    }
    if grid[0] < 0.0 || !grid.iter().all(|t| t.is_finite()) {
        return Err(Error::InvalidPulse(
            "tabulated grid must be finite and start at t >= 0".into(),
        ));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidPulse(
            "tabulated grid must be strictly increasing".into(),
        ));
    }
    if !values.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        return Err(Error::InvalidPulse(
            "tabulated values must be finite".into(),
        ));
    }
    let seg_mass = |vals: &[C64], i: usize| {
        adaptive_simpson(
            &|s| interpolate(grid, vals, s).norm_sqr(),
            grid[i],
            grid[i + 1],
            1e-14,
        )
    };
    let raw: f64 = (0..grid.len() - 1).map(|i| seg_mass(values, i)).sum();
    if raw.is_nan() || raw <= 0.0 {
        return Err(Error::InvalidPulse("tabulated pulse has zero norm".into()));
    }
    let scale = 1.0 / raw.sqrt();
    let values: Vec<C64> = values.iter().map(|z| z * scale).collect();
    let mut tail = vec![0.0; grid.len()];
    for i in (0..grid.len() - 1).rev() {
        tail[i] = tail[i + 1] + seg_mass(&values, i);
    }
    Ok(Kind::Tabulated {
        grid: grid.to_vec(),
        values,
        tail,
    })
}

fn segment(grid: &[f64], t: f64) -> usize {
    // index i with grid[i] <= t < grid[i+1]
    grid.partition_point(|&g| g <= t)
        .saturating_sub(1)
        .min(grid.len() - 2)
}

fn interpolate(grid: &[f64], values: &[C64], t: f64) -> C64 {
    let last = grid.len() - 1;
    if t < grid[0] || t > grid[last] {
        return C64::new(0.0, 0.0);
    }
    let i = segment(grid, t);
    let s = (t - grid[i]) / (grid[i + 1] - grid[i]);
    values[i] * (1.0 - s) + values[i + 1] * s
}

/// Adaptive Simpson quadrature of `f` on `[a, b]` to absolute tolerance `tol`.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
    if b <= a {
        return 0.0;
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    recurse(f, a, b, fa, fm, fb, whole, tol, 48)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_pulse_values() {
        let p = Pulse::square(0.0, 1.0).unwrap();
        assert_eq!(p.eval(0.5).unwrap(), C64::new(1.0, 0.0));
        assert_eq!(p.tail_weight(0.0).unwrap(), 1.0);
        assert_eq!(p.tail_weight(1.0).unwrap(), 0.0);
        assert!((p.tail_weight(0.25).unwrap() - 0.75).abs() < 1e-15);
        assert_eq!(p.tail_weight(7.0).unwrap(), 0.0);
    }

    #[test]
    fn gaussian_peak_at_center() {
        let p = Pulse::gaussian(3.0, 1.0).unwrap();
        let peak = p.eval(3.0).unwrap().norm();
        for k in 0..600 {
            let t = k as f64 * 0.01;
            assert!(p.eval(t).unwrap().norm() <= peak);
        }
        assert!((p.tail_weight(0.0).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn exponential_matches_closed_form() {
        let (rate, start) = (1.7, 0.4);
        let p = Pulse::decaying_exponential(rate, start).unwrap();
        assert_eq!(p.eval(0.2).unwrap().norm(), 0.0);
        for &t in &[0.4, 0.9, 2.5] {
            let want = rate.sqrt() * (-rate * (t - start) / 2.0).exp();
            assert!((p.eval(t).unwrap().re - want).abs() < 1e-15);
        }
        // unit norm verified by quadrature at construction; recheck independently
        let n = 400_000;
        let h = 40.0 / n as f64;
        let mut acc = 0.0;
        for k in 0..n {
            let t = start + (k as f64 + 0.5) * h;
            acc += p.intensity(t) * h;
        }
        assert!((acc - 1.0).abs() < 1e-6);
    }

    #[test]
    fn negative_time_rejected() {
        let p = Pulse::square(0.0, 1.0).unwrap();
        assert!(matches!(p.eval(-0.1), Err(Error::NegativeTime(_))));
        assert!(matches!(p.tail_weight(-1e-9), Err(Error::NegativeTime(_))));
        assert!(p.eval(f64::NAN).is_err());
    }

    #[test]
    fn invalid_parameters_rejected() {
        assert!(Pulse::gaussian(1.0, 0.0).is_err());
        assert!(Pulse::square(1.0, 1.0).is_err());
        assert!(Pulse::decaying_exponential(-1.0, 0.0).is_err());
        assert!(Pulse::tabulated(vec![0.0, 1.0], vec![C64::new(0.0, 0.0); 2]).is_err());
        assert!(Pulse::tabulated(vec![1.0, 0.5], vec![C64::new(1.0, 0.0); 2]).is_err());
    }

    #[test]
    fn tabulated_is_renormalized() {
        let grid = vec![0.0, 1.0, 2.0, 3.0];
        let values = vec![
            C64::new(0.0, 0.0),
            C64::new(2.0, 1.0),
            C64::new(1.0, -3.0),
            C64::new(0.0, 0.0),
        ];
        let p = Pulse::tabulated(grid, values).unwrap();
        assert!((p.tail_weight(0.0).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(p.tail_weight(3.0).unwrap(), 0.0);
        // piecewise-linear |xi|² integrates exactly per segment
        let seg = |a: C64, b: C64| (a.norm_sqr() + (a * b.conj()).re + b.norm_sqr()) / 3.0;
        let raw = seg(C64::new(0.0, 0.0), C64::new(2.0, 1.0))
            + seg(C64::new(2.0, 1.0), C64::new(1.0, -3.0))
            + seg(C64::new(1.0, -3.0), C64::new(0.0, 0.0));
        let want = C64::new(2.0, 1.0) / raw.sqrt();
        assert!((p.eval(1.0).unwrap() - want).norm() < 1e-12);
        let w15 = p.tail_weight(1.5).unwrap();
        let tail_after_2 = seg(C64::new(1.0, -3.0), C64::new(0.0, 0.0)) / raw;
        let mid = (C64::new(2.0, 1.0) + C64::new(1.0, -3.0)) * 0.5;
        let half_seg = 0.5 * seg(mid, C64::new(1.0, -3.0)) / raw;
        assert!((w15 - (tail_after_2 + half_seg)).abs() < 1e-12);
    }

    #[test]
    fn detuning_keeps_modulus() {
        let p = Pulse::gaussian(2.0, 0.5).unwrap().with_detuning(3.0);
        let z = p.eval(2.3).unwrap();
        let base = Pulse::gaussian(2.0, 0.5).unwrap().eval(2.3).unwrap();
        assert!((z.norm() - base.norm()).abs() < 1e-15);
        assert!(z.im.abs() > 0.1);
    }

    #[test]
    fn simpson_on_polynomial() {
        let v = adaptive_simpson(&|x| x * x * x - 2.0 * x, 0.0, 2.0, 1e-14);
        assert!((v - 0.0).abs() < 1e-13);
    }
}
