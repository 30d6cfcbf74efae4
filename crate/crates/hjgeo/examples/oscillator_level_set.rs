//! Harmonic oscillator: the energy level set as a Hamilton-Jacobi solution.
//!
//! Prints the three equivalent residuals on L = {H = 1/2} and the gap
//! between the projected-then-lifted flow and the phase-space flow.

use hjgeo::dynamics::gamma_related_check_hamiltonian;
use hjgeo::hj_autonomous::hj_residuals;
use hjgeo::submanifold::{ConstraintSubmanifold, OneFormFamily};
use hjgeo::symexpr::parse;

fn main() {
    let h = parse("(q1^2 + p1^2)/2").unwrap();
    let l = ConstraintSubmanifold::new(1, vec![parse("(q1^2 + p1^2)/2 - 0.5").unwrap()]);
    let points = l.sample_points(100, 0, 1.5);
    let report = hj_residuals(&h, &l, &points).unwrap();
    println!("level set {{H = 1/2}} at {} points", points.len());
    println!("  pullback    {:.3e}", report.max_pullback());
    println!("  annihilator {:.3e}", report.max_annihilator());
    println!("  tangency    {:.3e}", report.max_tangency());

    // the branch p = S'(q) = sqrt(1 - q^2) of the same level set
    let gamma = OneFormFamily::new(vec![parse("sqrt(1 - q1^2)").unwrap()]);
    let flow = gamma_related_check_hamiltonian(&h, &gamma, &[0.0], 0.0, 1e-3, 500).unwrap();
    println!("flow commutation gap over [0, 0.5]: {:.3e}", flow.max_gap);
}
