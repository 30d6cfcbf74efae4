//! Free particle with the time-dependent generating function W = q^2/(2t).
//!
//! Shows the W-equation spread, the moving-section residuals, and the flow
//! gap over one unit of time.

use hjgeo::dynamics::gamma_related_check_hamiltonian;
use hjgeo::submanifold::OneFormFamily;
use hjgeo::symexpr::parse;
use hjgeo::timedep::{
    max_moi_residual, sigma_membership, timedep_hj_residual, TimeDependentFamily,
};

fn main() {
    let h = parse("p1^2/2").unwrap();
    let w = parse("q1^2/(2*t)").unwrap();
    let t_grid = [0.5, 1.0, 2.0];
    let qs: Vec<Vec<f64>> = (-10..=10).map(|k| vec![k as f64 / 10.0]).collect();

    let report = timedep_hj_residual(&h, &w, &t_grid, &qs).unwrap();
    for (t, spread) in &report.per_t {
        println!("t = {t}: spread of H + dW/dt is {spread:.3e}");
    }

    let fam = TimeDependentFamily::exact(&w, 1);
    let moi = max_moi_residual(&h, &fam, &t_grid, &qs).unwrap();
    println!("moving-section residual: {moi:.3e}");
    for &t in &t_grid {
        let sigma = sigma_membership(&h, &fam, t, &qs).unwrap();
        println!("membership at t = {t}: {sigma:.3e}");
    }

    let gamma = OneFormFamily::exact(&w, 1);
    let flow = gamma_related_check_hamiltonian(&h, &gamma, &[1.0], 1.0, 1e-3, 1000).unwrap();
    println!("flow gap over [1, 2]: {:.3e}", flow.max_gap);
}
