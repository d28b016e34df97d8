use photon_filter::filter::vacuum_filter_step;
use photon_filter::master::integrate_vacuum_master;
use photon_filter::opalg::sigma_z;
use photon_filter::rng::BrownianIncrements;
use photon_filter::{Operator, SlhTriple, C64};

// Averaging the vacuum filter over records drawn from its own predictions
// must reproduce the unconditional master equation.
#[test]
fn vacuum_filter_average_tracks_master() {
    let g = SlhTriple::two_level(1.0, 0.5);
    let eta = [C64::new(0.6, 0.0), C64::new(0.0, 0.8)];
    let rho0 = Operator::projector(&eta);
    let (dt, horizon, n): (f64, f64, usize) = (1e-3, 2.0, 400);
    let steps = (horizon / dt).round() as usize;
    let lp = g.l() + &g.l().adjoint();
    let sz = sigma_z();

    let mut values = Vec::with_capacity(n);
    for i in 0..n {
        let mut noise = BrownianIncrements::new(11, i as u64, dt).unwrap();
        let mut rho = rho0.clone();
        for _ in 0..steps {
            let dy = rho.expect(&lp).re * dt + noise.next().unwrap();
            rho = vacuum_filter_step(&rho, dy, dt, &g).unwrap().0;
        }
        values.push(rho.expect(&sz).re);
    }
    let nf = n as f64;
    let mean = values.iter().sum::<f64>() / nf;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (nf - 1.0);
    let stderr = (var / nf).sqrt();

    let states = integrate_vacuum_master(&g, &rho0, dt, horizon).unwrap();
    let exact = states.last().unwrap().expect(&sz).re;
    // Euler bias at this step is far below the statistical error
    assert!(
        (mean - exact).abs() <= 4.0 * stderr + 5e-3,
        "mean {mean} exact {exact} stderr {stderr}"
    );
}
