//! Free particle in R^3 with the nonholonomic constraint zdot = y xdot.
//!
//! Builds the constrained Hamiltonian system, prints the multiplier at a
//! point against its closed form, and grades the section gamma = (0, b, 0).

use hjgeo::geometry::PhasePoint;
use hjgeo::nonholonomic::{
    build_hamiltonian_system, distribution_hj_check, FlowProbe, LinearDistribution,
    MechanicalLagrangian,
};
use hjgeo::sampling::halton_box;
use hjgeo::submanifold::OneFormFamily;
use hjgeo::symexpr::{parse, Expr};

fn main() {
    let mass = (0..3)
        .map(|i| {
            (0..3)
                .map(|j| if i == j { Expr::one() } else { Expr::zero() })
                .collect()
        })
        .collect();
    let lag = MechanicalLagrangian::new(mass, Expr::zero()).unwrap();
    let dist = LinearDistribution::new(
        3,
        vec![vec![parse("-q2").unwrap(), Expr::zero(), Expr::one()]],
    )
    .unwrap();
    let sys = build_hamiltonian_system(&lag, &dist).unwrap();

    // point on C = p3 - q2 p1 = 0
    let x = PhasePoint::new(vec![0.0, 2.0, 0.0], vec![3.0, 5.0, 6.0]);
    let (_, lambda) = sys.xi_at(&x).unwrap();
    let closed_form = -3.0 * 5.0 / (1.0 + 4.0);
    println!("multiplier at q2 = 2, p = (3, 5, 6): {:.6}", lambda[0]);
    println!("closed form -p1 p2/(1 + q2^2):       {:.6}", closed_form);

    let gamma = OneFormFamily::new(vec![Expr::zero(), parse("0.8").unwrap(), Expr::zero()]);
    let probe = FlowProbe {
        q0: vec![0.2, -0.4, 0.1],
        t0: 0.0,
        h: 1e-3,
        steps: 500,
    };
    let qs = halton_box(50, 3, -1.0, 1.0, 0);
    let report = distribution_hj_check(&sys, &gamma, &qs, Some(&probe)).unwrap();
    println!("section gamma = (0, 0.8, 0):");
    println!("  constraint    {:.3e}", report.r_constraint);
    println!("  d gamma on D  {:.3e}", report.r_dgamma);
    println!("  condition (i) {:.3e}", report.r_hj);
    println!("  membership    {:.3e}", report.r_tangency);
    println!("  flow gap      {:.3e}", report.flow_gap.unwrap());
}
