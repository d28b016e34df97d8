use proptest::prelude::*;

use photon_filter::filter::{filter_step, gain, FilterState};
use photon_filter::master::{integrate_master, MasterOptions};
use photon_filter::twolevel::{
    bloch_filter_step, bloch_gain, integrate_bloch_master, AsPrinted, BlochFilterCoeffs,
    BlochMasterCoeffs, Corrected,
};
use photon_filter::{Pulse, SlhTriple, C64};

fn max_master_gap<V: photon_filter::twolevel::Transcription>(
    kappa: f64,
    omega: f64,
    p: &Pulse,
    eta: &[C64],
    horizon: f64,
) -> f64 {
    let dt = 1e-3;
    let opts = MasterOptions {
        snapshot_stride: Some(1),
        ..Default::default()
    };
    let run = integrate_master(
        &SlhTriple::two_level(kappa, omega),
        p,
        eta,
        dt,
        horizon,
        &opts,
    )
    .unwrap();
    let bloch = integrate_bloch_master::<V>(
        BlochMasterCoeffs::initial(eta).unwrap(),
        kappa,
        omega,
        p,
        dt,
        horizon,
    )
    .unwrap();
    assert_eq!(bloch.len(), run.snapshots.len());
    run.snapshots
        .iter()
        .zip(&bloch)
        .map(|(s, b)| BlochMasterCoeffs::from_state(s).unwrap().max_abs_diff(b))
        .fold(0.0, f64::max)
}

#[test]
fn printed_relaxation_line_disagrees_with_generic_master() {
    let p = Pulse::gaussian(3.0, 1.0).unwrap();
    let g = [C64::new(1.0, 0.0), C64::new(0.0, 0.0)];
    let corrected = max_master_gap::<Corrected>(1.0, 0.5, &p, &g, 6.0);
    let printed = max_master_gap::<AsPrinted>(1.0, 0.5, &p, &g, 6.0);
    assert!(corrected < 1e-10, "{corrected}");
    assert!(printed > 1e-2, "{printed}");
}

fn unit_vector() -> impl Strategy<Value = [C64; 2]> {
    (0.0..std::f64::consts::PI, 0.0..std::f64::consts::TAU).prop_map(|(th, ph)| {
        [
            C64::new((th / 2.0).cos(), 0.0),
            C64::from_polar((th / 2.0).sin(), ph),
        ]
    })
}

fn pulse() -> impl Strategy<Value = Pulse> {
    prop_oneof![
        (0.5..4.0f64, 0.3..1.5f64, -1.0..1.0f64)
            .prop_map(|(t0, s, d)| Pulse::gaussian(t0, s).unwrap().with_detuning(d)),
        (0.3..3.0f64).prop_map(|g| Pulse::decaying_exponential(g, 0.0).unwrap()),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn bloch_master_matches_generic(
        kappa in 0.2..3.0f64, omega in -2.0..2.0f64, p in pulse(), eta in unit_vector(),
    ) {
        prop_assert!(max_master_gap::<Corrected>(kappa, omega, &p, &eta, 4.0) <= 1e-6);
    }

    #[test]
    fn bloch_filter_step_matches_generic(
        kappa in 0.2..3.0f64, omega in -2.0..2.0f64, p in pulse(), eta in unit_vector(),
        warmup in prop::collection::vec(-0.1..0.1f64, 0..40),
        dw in -0.1..0.1f64, t in 0.0..5.0f64,
    ) {
        let g = SlhTriple::two_level(kappa, omega);
        let dt = 1e-3;
        // random but structurally valid state from a few generic steps
        let mut s = FilterState::initial(&eta).unwrap();
        s.t = t;
        for w in warmup {
            let k = gain(&s, &g, &p).unwrap();
            s = filter_step(&s, k * dt + w, dt, &g, &p).unwrap().state;
        }
        let f = BlochFilterCoeffs::from_filter_state(&s).unwrap();
        let k = gain(&s, &g, &p).unwrap();
        prop_assert!((bloch_gain(&f, s.t, kappa, &p).unwrap() - k).abs() <= 1e-12);
        let generic = filter_step(&s, k * dt + dw, dt, &g, &p).unwrap();
        let hard = bloch_filter_step(&f, dw, dt, s.t, kappa, omega, &p).unwrap();
        let conv = BlochFilterCoeffs::from_filter_state(&generic.state).unwrap();
        prop_assert!(conv.max_abs_diff(&hard) <= 1e-10, "{}", conv.max_abs_diff(&hard));
    }
}
