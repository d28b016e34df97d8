use nalgebra::DMatrix;
use proptest::prelude::*;

use photon_filter::filter::{filter_step, FilterState};
use photon_filter::master::{master_rhs, GeneralizedState};
use photon_filter::opalg::{lindblad_heisenberg, lindblad_schrodinger};
use photon_filter::{Operator, Pulse, SlhTriple, C64};

fn matrix(dim: usize, entries: &[(f64, f64)]) -> DMatrix<C64> {
    DMatrix::from_iterator(dim, dim, entries.iter().map(|&(a, b)| C64::new(a, b)))
}

fn any_matrix(dim: usize) -> impl Strategy<Value = DMatrix<C64>> {
    prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), dim * dim)
        .prop_map(move |v| matrix(dim, &v))
}

fn hermitian(dim: usize) -> impl Strategy<Value = Operator> {
    any_matrix(dim).prop_map(|m| Operator::from_matrix(&m + m.adjoint()).unwrap())
}

fn unitary(dim: usize) -> impl Strategy<Value = Operator> {
    // Q factor of a generic complex matrix
    any_matrix(dim).prop_map(|m| {
        let n = m.nrows();
        let m = m + DMatrix::<C64>::identity(n, n) * C64::new(2.0, 0.0);
        Operator::from_matrix(m.qr().q()).unwrap()
    })
}

fn density(dim: usize) -> impl Strategy<Value = Operator> {
    any_matrix(dim).prop_map(|a| {
        let p =
            &a * a.adjoint() + DMatrix::<C64>::identity(a.nrows(), a.nrows()) * C64::new(1e-3, 0.0);
        let tr = p.trace();
        Operator::from_matrix(p / tr).unwrap()
    })
}

fn unit_vector(dim: usize) -> impl Strategy<Value = Vec<C64>> {
    prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), dim).prop_filter_map("nonzero", |v| {
        let n: f64 = v.iter().map(|(a, b)| a * a + b * b).sum::<f64>().sqrt();
        (n > 0.1).then(|| v.iter().map(|&(a, b)| C64::new(a / n, b / n)).collect())
    })
}

fn system(dim: usize) -> impl Strategy<Value = SlhTriple> {
    (unitary(dim), any_matrix(dim), hermitian(dim))
        .prop_map(|(s, l, h)| SlhTriple::new(s, Operator::from_matrix(l).unwrap(), h).unwrap())
}

fn pulse() -> impl Strategy<Value = Pulse> {
    prop_oneof![
        (0.5..6.0f64, 0.3..2.0f64).prop_map(|(t0, s)| Pulse::gaussian(t0, s).unwrap()),
        (0.2..3.0f64, 0.0..2.0f64).prop_map(|(g, t0)| Pulse::decaying_exponential(g, t0).unwrap()),
        (0.0..2.0f64, 0.5..3.0f64).prop_map(|(a, len)| Pulse::square(a, a + len).unwrap()),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn generator_and_adjoint_are_dual(g in system(3), x in hermitian(3), rho in density(3)) {
        let lhs = x.inner(&lindblad_schrodinger(&g, &rho).unwrap());
        let rhs = lindblad_heisenberg(&g, &x).unwrap().inner(&rho);
        prop_assert!((lhs - rhs).norm() < 1e-12 * (1.0 + lhs.norm()));
    }

    #[test]
    fn generator_annihilates_identity(g in system(3)) {
        prop_assert!(lindblad_heisenberg(&g, &Operator::identity(3)).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn adjoint_generator_is_traceless_and_hermitian(g in system(3), rho in density(3)) {
        let d = lindblad_schrodinger(&g, &rho).unwrap();
        prop_assert!(d.trace().norm() < 1e-12);
        prop_assert!(d.hermiticity_defect() < 1e-12);
    }

    #[test]
    fn generator_preserves_hermiticity(g in system(2), x in hermitian(2)) {
        prop_assert!(lindblad_heisenberg(&g, &x).unwrap().hermiticity_defect() < 1e-12);
    }

    #[test]
    fn tail_weight_is_monotone_with_intensity_slope(p in pulse(), t in 0.01..8.0f64) {
        let h = 1e-5;
        let (a, b) = (p.tail_weight(t).unwrap(), p.tail_weight(t + h).unwrap());
        prop_assert!(b <= a + 1e-12);
        prop_assert!((0.0..=1.0).contains(&a));
        // away from the square pulse's jumps the slope is -|xi|^2
        if let photon_filter::PulseShape::Square { start, end } = p.shape() {
            prop_assume!((t - start).abs() > 2.0 * h && (t - end).abs() > 2.0 * h);
        }
        if let photon_filter::PulseShape::DecayingExponential { start, .. } = p.shape() {
            prop_assume!((t - start).abs() > 2.0 * h);
        }
        let lo = p.tail_weight((t - h).max(0.0)).unwrap();
        let slope = (b - lo) / (t + h - (t - h).max(0.0));
        prop_assert!((slope + p.intensity(t)).abs() < 1e-5, "slope {slope} vs {}", p.intensity(t));
    }

    #[test]
    fn pulse_is_normalized_at_zero(p in pulse()) {
        prop_assert!((p.tail_weight(0.0).unwrap() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn master_rhs_preserves_block_structure(g in system(2), p in pulse(), eta in unit_vector(2), t in 0.0..5.0f64) {
        let mut s = GeneralizedState::initial(&eta).unwrap();
        s.t = t;
        // a few Euler steps give generic off-diagonal blocks
        for _ in 0..20 {
            let d = master_rhs(&s, &g, &p).unwrap();
            s.rho11 = &s.rho11 + &(&d.rho11 * 0.01);
            s.rho10 = &s.rho10 + &(&d.rho10 * 0.01);
            s.rho01 = &s.rho01 + &(&d.rho01 * 0.01);
            s.rho00 = &s.rho00 + &(&d.rho00 * 0.01);
            s.t += 0.01;
        }
        let d = master_rhs(&s, &g, &p).unwrap();
        prop_assert!(d.rho11.trace().norm() < 1e-12);
        prop_assert!(d.rho00.trace().norm() < 1e-12);
        prop_assert!(d.rho10.trace().norm() < 1e-12);
        prop_assert!(d.rho01.max_abs_diff(&d.rho10.adjoint()) < 1e-12);
        prop_assert!(d.rho11.hermiticity_defect() < 1e-12);
    }

    #[test]
    fn filter_step_keeps_trace_and_cross_symmetry(
        g in system(2), p in pulse(), eta in unit_vector(2),
        dws in prop::collection::vec(-0.05..0.05f64, 30),
    ) {
        let dt = 1e-3;
        let mut s = FilterState::initial(&eta).unwrap();
        s.t = 1.0;
        for dw in dws {
            let k = photon_filter::filter::gain(&s, &g, &p).unwrap();
            let step = filter_step(&s, k * dt + dw, dt, &g, &p).unwrap();
            prop_assert!((step.dw - dw).abs() < 1e-12);
            s = step.state;
        }
        prop_assert!((s.sigma11.trace().re - 1.0).abs() < 1e-12);
        // traces of the other blocks evolve; only symmetry is structural
        prop_assert!(s.sigma01.max_abs_diff(&s.sigma10.adjoint()) < 1e-15);
        prop_assert!(s.sigma11.hermiticity_defect() < 1e-12);
        prop_assert!(s.sigma00.hermiticity_defect() < 1e-12);
    }
}
