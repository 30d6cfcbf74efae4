//! Acceptance suite: one test per criterion, each printing a pass/fail line.
//!
//! Run with `cargo test --test acceptance -- --nocapture` to see the lines.

use hjgeo::dynamics::{flow, gamma_related_check, gamma_related_check_hamiltonian};
use hjgeo::geometry::{hamiltonian_field, phase_vars, q_var, PhasePoint};
use hjgeo::hj_autonomous::{
    classical_hj_residual_from_gamma, default_lambda_grid, hj_residuals, holonomic_extend,
    holonomic_hj_check, point_on_l,
};
use hjgeo::nonholonomic::{
    build_hamiltonian_system, distribution_hj_check, FlowProbe, LinearDistribution,
    MechanicalLagrangian, NonholonomicSystem,
};
use hjgeo::sampling::halton_box;
use hjgeo::scenario::{bundled, run_scenario, Scenario};
use hjgeo::submanifold::{
    build_l_n_gamma, image_of_one_form, ConstraintSubmanifold, GraphSubmanifoldOfQ, OneFormFamily,
};
use hjgeo::symexpr::{parse, Binding, Expr, UnaryOp};
use hjgeo::timedep::{
    max_moi_residual, sigma_membership, timedep_hj_residual, timedep_holonomic_check,
    timedep_nonholonomic_check, TimeDependentFamily,
};
use std::time::Instant;

struct Criterion {
    id: &'static str,
    failures: Vec<String>,
}

impl Criterion {
    fn new(id: &'static str) -> Criterion {
        Criterion {
            id,
            failures: Vec::new(),
        }
    }

    fn le(&mut self, what: &str, value: f64, bound: f64) {
        if !(value.is_finite() && value <= bound) {
            self.failures.push(format!("{what} = {value:.3e} > {bound:.3e}"));
        }
    }

    fn gt(&mut self, what: &str, value: f64, bound: f64) {
        if !(value.is_finite() && value > bound) {
            self.failures.push(format!("{what} = {value:.3e} <= {bound:.3e}"));
        }
    }

    fn require(&mut self, what: &str, ok: bool) {
        if !ok {
            self.failures.push(what.to_string());
        }
    }

    fn finish(self) {
        if self.failures.is_empty() {
            println!("[acceptance] {}: PASS", self.id);
        } else {
            println!("[acceptance] {}: FAIL", self.id);
            for f in &self.failures {
                println!("  - {f}");
            }
            panic!("criterion {} failed", self.id);
        }
    }
}

fn skate() -> NonholonomicSystem {
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
    build_hamiltonian_system(&lag, &dist).unwrap()
}

#[test]
fn criterion_01_three_way_equivalence() {
    let started = Instant::now();
    let mut c = Criterion::new("criterion 1 (three-way equivalence on Lagrangian submanifolds)");

    // five solution configurations: (hamiltonian, submanifold)
    let solutions: Vec<(&str, Expr, ConstraintSubmanifold)> = vec![
        (
            "oscillator level set",
            parse("(q1^2 + p1^2)/2").unwrap(),
            ConstraintSubmanifold::new(1, vec![parse("(q1^2 + p1^2)/2 - 0.5").unwrap()]),
        ),
        (
            "free particle, S = 0.7 q1",
            parse("p1^2/2").unwrap(),
            image_of_one_form(
                &OneFormFamily::exact(&parse("0.7*q1").unwrap(), 1),
                None,
            ),
        ),
        (
            "free particle n=2, S = 0.3 q1 + 0.4 q2",
            parse("(p1^2 + p2^2)/2").unwrap(),
            image_of_one_form(
                &OneFormFamily::exact(&parse("0.3*q1 + 0.4*q2").unwrap(), 2),
                None,
            ),
        ),
        (
            "H = p1 p2, S = 0.5 q1 - 0.2 q2",
            parse("p1*p2").unwrap(),
            image_of_one_form(
                &OneFormFamily::exact(&parse("0.5*q1 - 0.2*q2").unwrap(), 2),
                None,
            ),
        ),
        (
            "graph case L_{N,dS}, N = {q2 = q1}",
            parse("(p1 + p2)^2/2").unwrap(),
            build_l_n_gamma(
                &GraphSubmanifoldOfQ::new(2, vec![(1, parse("q1").unwrap())]),
                &OneFormFamily::new(vec![parse("0.6").unwrap()]),
                None,
            ),
        ),
    ];
    for (label, h, l) in &solutions {
        let pts = l.sample_points(100, 0, 1.5);
        c.require(&format!("{label}: 100 sample points"), pts.len() == 100);
        let rep = hj_residuals(h, l, &pts).unwrap();
        c.le(&format!("{label}: pullback"), rep.max_pullback(), 1e-8);
        c.le(&format!("{label}: annihilator"), rep.max_annihilator(), 1e-8);
        c.le(&format!("{label}: tangency"), rep.max_tangency(), 1e-8);
    }

    // two non-solutions: all three residuals blow up jointly
    let non_solutions: Vec<(&str, Expr, ConstraintSubmanifold)> = vec![
        (
            "oscillator with constant section",
            parse("(q1^2 + p1^2)/2").unwrap(),
            image_of_one_form(&OneFormFamily::new(vec![parse("0.7").unwrap()]), None),
        ),
        (
            "free particle n=2 with S = q1^2",
            parse("(p1^2 + p2^2)/2").unwrap(),
            image_of_one_form(
                &OneFormFamily::exact(&parse("q1^2").unwrap(), 2),
                None,
            ),
        ),
    ];
    for (label, h, l) in &non_solutions {
        let pts = l.sample_points(100, 0, 1.5);
        c.require(&format!("{label}: 100 sample points"), pts.len() == 100);
        let rep = hj_residuals(h, l, &pts).unwrap();
        c.gt(&format!("{label}: pullback"), rep.max_pullback(), 1e-3);
        c.gt(&format!("{label}: annihilator"), rep.max_annihilator(), 1e-3);
        c.gt(&format!("{label}: tangency"), rep.max_tangency(), 1e-3);
    }

    c.le("runtime (s)", started.elapsed().as_secs_f64(), 5.0);
    c.finish();
}

#[test]
fn criterion_02_classical_commutation() {
    let started = Instant::now();
    let mut c = Criterion::new("criterion 2 (oscillator commutation)");
    // S' = sqrt(2E - q^2) with E = 1/2
    let h = parse("(q1^2 + p1^2)/2").unwrap();
    let gamma = OneFormFamily::new(vec![parse("sqrt(1 - q1^2)").unwrap()]);
    let rep = gamma_related_check_hamiltonian(&h, &gamma, &[0.0], 0.0, 1e-3, 500).unwrap();
    c.le("lifted-vs-integrated gap over [0, 0.5]", rep.max_gap, 1e-6);
    c.le("runtime (s)", started.elapsed().as_secs_f64(), 1.0);
    c.finish();
}

#[test]
fn criterion_03_closed_form_criterion() {
    let mut c = Criterion::new("criterion 3 (closedness as the Lagrangian criterion)");
    let closed = image_of_one_form(
        &OneFormFamily::new(vec![parse("q2").unwrap(), parse("q1").unwrap()]),
        None,
    );
    let pts = closed.sample_points(100, 0, 1.5);
    let rep = closed.is_lagrangian(&pts, 1e-10).unwrap();
    c.require("closed form passes", rep.verdict);
    c.le("closed-form bracket residual", rep.max_bracket_residual, 1e-12);

    let nonclosed = image_of_one_form(
        &OneFormFamily::new(vec![parse("q2").unwrap(), parse("-q1").unwrap()]),
        None,
    );
    let pts = nonclosed.sample_points(100, 0, 1.5);
    let rep = nonclosed.is_lagrangian(&pts, 1e-10).unwrap();
    c.require("non-closed form fails", !rep.verdict);
    c.le(
        "|bracket residual - 2|",
        (rep.max_bracket_residual - 2.0).abs(),
        1e-12,
    );
    c.finish();
}

#[test]
fn criterion_04_holonomic_multiplier_independence() {
    let mut c = Criterion::new("criterion 4 (holonomic multiplier independence)");
    let diag = GraphSubmanifoldOfQ::new(2, vec![(1, parse("q1").unwrap())]);
    let sys = holonomic_extend(&diag, &parse("p1^2/2").unwrap()).unwrap();
    let qs: Vec<Vec<f64>> = halton_box(100, 1, -1.5, 1.5, 0);
    let grid = default_lambda_grid(1);
    c.require("5 lambda values", grid.len() == 5);
    let rep = holonomic_hj_check(&sys, &parse("0.6*q1").unwrap(), &qs, &grid, 1e-10).unwrap();
    for (lambda, r) in grid.iter().zip(&rep.per_lambda) {
        c.le(&format!("extended residual at lambda = {}", lambda[0]), *r, 1e-10);
    }
    c.le("base residual", rep.base_residual, 1e-10);
    c.require("verdicts agree", rep.agreement);
    c.finish();
}

#[test]
fn criterion_05_nonholonomic_particle() {
    let started = Instant::now();
    let mut c = Criterion::new("criterion 5 (nonholonomic particle)");
    let sys = skate();

    // (a) multiplier closed form at 100 points of C
    let mut worst: f64 = 0.0;
    for raw in halton_box(100, 5, -2.0, 2.0, 0) {
        // (x, y, z, p1, p2) free; p3 = y p1 puts the point on C
        let q = vec![raw[0], raw[1], raw[2]];
        let p = vec![raw[3], raw[4], raw[1] * raw[3]];
        let x = PhasePoint::new(q, p);
        let (_, lambdas) = sys.xi_at(&x).unwrap();
        let expected = -raw[3] * raw[4] / (1.0 + raw[1] * raw[1]);
        worst = worst.max((lambdas[0] - expected).abs());
    }
    c.le("lambda vs -p1 p2/(1 + y^2)", worst, 1e-10);

    // (b) 10^4 steps at h = 1e-3 over [0, 10]: drift of H and C
    let xi = sys.xi_field_exprs();
    let x0 = [0.0, 0.5, 0.0, 0.6, 0.4, 0.3]; // C = p3 - y p1 = 0
    let traj = flow(&xi, &phase_vars(3), &x0, 0.0, 1e-3, 10_000).unwrap();
    let energy = |s: &[f64]| (s[3] * s[3] + s[4] * s[4] + s[5] * s[5]) / 2.0;
    let constraint = |s: &[f64]| (s[5] - s[1] * s[3]).abs();
    let e0 = energy(&x0);
    let mut e_drift: f64 = 0.0;
    let mut c_drift: f64 = 0.0;
    for s in &traj.states {
        e_drift = e_drift.max((energy(s) - e0).abs());
        c_drift = c_drift.max(constraint(s));
    }
    c.le("energy drift", e_drift, 1e-8);
    c.le("constraint drift", c_drift, 1e-6);

    // (c) endpoint agrees with the h = 1e-4 reference
    let reference = flow(&xi, &phase_vars(3), &x0, 0.0, 1e-4, 100_000).unwrap();
    let gap: f64 = traj
        .endpoint()
        .iter()
        .zip(reference.endpoint())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    c.le("endpoint vs reference", gap, 1e-7);

    c.le("runtime (s)", started.elapsed().as_secs_f64(), 10.0);
    c.finish();
}

#[test]
fn criterion_06_proposition_equivalence() {
    let mut c = Criterion::new("criterion 6 (nonholonomic proposition equivalence)");
    let sys = skate();
    let qs: Vec<Vec<f64>> = halton_box(50, 3, -1.0, 1.0, 0);

    // gamma = dW, W = c y: solution
    let gamma = OneFormFamily::exact(&parse("0.8*q2").unwrap(), 3);
    let probe = FlowProbe {
        q0: vec![0.2, -0.4, 0.1],
        t0: 0.0,
        h: 1e-3,
        steps: 500,
    };
    let rep = distribution_hj_check(&sys, &gamma, &qs, Some(&probe)).unwrap();
    c.le("condition (i) residual", rep.r_hj, 1e-10);
    c.le("xi membership residual", rep.r_tangency, 1e-9);
    c.le("gamma-relatedness gap", rep.flow_gap.unwrap(), 1e-6);

    // perturbed section violating (i) by >= 0.1
    let bad = OneFormFamily::new(vec![
        parse("0.5").unwrap(),
        parse("0.8").unwrap(),
        parse("0.5*q2").unwrap(),
    ]);
    let qs_bad = vec![vec![0.3, 1.0, -0.2], vec![-0.5, 0.9, 0.4]];
    let rep = distribution_hj_check(&sys, &bad, &qs_bad, None).unwrap();
    c.gt("perturbed condition (i) residual", rep.r_hj, 0.1);
    c.gt("perturbed membership residual", rep.r_tangency, 1e-3);
    c.finish();
}

#[test]
fn criterion_07_timedep_free_particle() {
    let mut c = Criterion::new("criterion 7 (time-dependent free particle)");
    let h = parse("p1^2/2").unwrap();
    let w = parse("q1^2/(2*t)").unwrap();
    let t_grid = [0.5, 1.0, 2.0];
    let qs: Vec<Vec<f64>> = (-10..=10).map(|k| vec![k as f64 / 10.0]).collect();

    let rep = timedep_hj_residual(&h, &w, &t_grid, &qs).unwrap();
    c.le("W-equation q-spread", rep.max_spread, 1e-12);

    let fam = TimeDependentFamily::exact(&w, 1);
    c.le(
        "moi residual",
        max_moi_residual(&h, &fam, &t_grid, &qs).unwrap(),
        1e-12,
    );
    let mut sigma: f64 = 0.0;
    for &t in &t_grid {
        sigma = sigma.max(sigma_membership(&h, &fam, t, &qs).unwrap());
    }
    c.le("sigma membership", sigma, 1e-12);

    let gamma = OneFormFamily::exact(&w, 1);
    let rep = gamma_related_check_hamiltonian(&h, &gamma, &[1.0], 1.0, 1e-3, 1000).unwrap();
    c.le("gamma_t-relatedness gap over one time unit", rep.max_gap, 1e-6);
    c.finish();
}

#[test]
fn criterion_08_timedep_bundled_scenarios() {
    let mut c = Criterion::new("criterion 8 (bundled time-dependent scenarios)");
    for file in ["timedep_holonomic_flat.json", "timedep_skate.json"] {
        let (_, text) = bundled().into_iter().find(|(f, _)| *f == file).unwrap();
        let sc = Scenario::from_json(text).unwrap();
        match run_scenario(&sc, None, None) {
            Ok(rep) => {
                c.require(&format!("{file} passes"), rep.passed());
                for check in &rep.checks {
                    c.le(&format!("{file}: {}", check.id), check.residual, check.tol);
                }
            }
            Err(e) => c.require(&format!("{file} runs ({e})"), false),
        }
    }
    c.finish();
}

/// Deterministic xorshift generator for the differentiation oracle.
struct Rng(u64);

impl Rng {
    fn next(&mut self) -> u64 {
        let mut x = self.0;
        x ^= x << 13;
        x ^= x >> 7;
        x ^= x << 17;
        self.0 = x;
        x
    }

    fn unit(&mut self) -> f64 {
        (self.next() >> 11) as f64 / (1u64 << 53) as f64
    }

    fn pick(&mut self, n: usize) -> usize {
        (self.next() % n as u64) as usize
    }
}

fn random_expr(rng: &mut Rng, depth: usize) -> Expr {
    if depth == 0 || rng.pick(5) == 0 {
        return match rng.pick(3) {
            0 => Expr::var("q1"),
            1 => Expr::var("p1"),
            _ => Expr::constant(rng.unit() * 3.0 - 1.5),
        };
    }
    let a = random_expr(rng, depth - 1);
    match rng.pick(8) {
        0 => Expr::add(a, random_expr(rng, depth - 1)),
        1 => Expr::sub(a, random_expr(rng, depth - 1)),
        2 => Expr::mul(a, random_expr(rng, depth - 1)),
        3 => Expr::div(a, random_expr(rng, depth - 1)),
        4 => Expr::unary(UnaryOp::Sin, a),
        5 => Expr::unary(UnaryOp::Cos, a),
        6 => Expr::unary(UnaryOp::Exp, a),
        _ => Expr::pow(a, (rng.pick(2) + 2) as f64),
    }
}

#[test]
fn criterion_09_differentiation_oracle() {
    let mut c = Criterion::new("criterion 9 (symbolic vs finite-difference derivatives)");
    let mut rng = Rng(0x9e3779b97f4a7c15);
    let mut checked = 0usize;
    let mut attempts = 0usize;
    let mut worst: f64 = 0.0;
    while checked < 1000 && attempts < 50_000 {
        attempts += 1;
        let e = random_expr(&mut rng, 3);
        let var = if rng.pick(2) == 0 { "q1" } else { "p1" };
        let x = 0.4 + rng.unit();
        let y = 0.4 + rng.unit();
        let at = |q: f64, p: f64| -> Option<f64> {
            let b: Binding = [("q1", q), ("p1", p)].into_iter().collect();
            match e.eval(&b) {
                Ok(v) if v.is_finite() && v.abs() < 1e3 => Some(v),
                _ => None,
            }
        };
        let sym = {
            let b: Binding = [("q1", x), ("p1", y)].into_iter().collect();
            match e.diff(var).eval(&b) {
                Ok(v) if v.is_finite() && v.abs() < 1e3 => v,
                _ => continue,
            }
        };
        let h = 1e-5;
        let (plus, minus) = if var == "q1" {
            (at(x + h, y), at(x - h, y))
        } else {
            (at(x, y + h), at(x, y - h))
        };
        let (Some(plus), Some(minus)) = (plus, minus) else {
            continue;
        };
        let fd = (plus - minus) / (2.0 * h);
        let rel = (sym - fd).abs() / sym.abs().max(1.0);
        worst = worst.max(rel);
        checked += 1;
    }
    c.require("1000 expressions checked", checked == 1000);
    c.le("worst relative error", worst, 1e-5);
    c.finish();
}

#[test]
fn criterion_10_autonomous_degeneration() {
    let mut c = Criterion::new("criterion 10 (autonomous degeneration)");

    // sigma membership with a t-free family equals the autonomous tangency
    let h = parse("(q1^2 + p1^2)/2").unwrap();
    let gamma = OneFormFamily::new(vec![parse("0.7").unwrap()]);
    let fam = TimeDependentFamily::new(gamma.clone());
    let qs = vec![vec![0.5], vec![-0.3], vec![1.1]];
    let r_td = sigma_membership(&h, &fam, 1.0, &qs).unwrap();
    let l = image_of_one_form(&gamma, None);
    let pts: Vec<PhasePoint> = qs
        .iter()
        .map(|q| PhasePoint::new(q.clone(), gamma.value(None, q).unwrap()))
        .collect();
    let auto = hj_residuals(&h, &l, &pts).unwrap();
    c.le("sigma vs tangency", (r_td - auto.max_tangency()).abs(), 1e-14);

    // W-equation with a t-free W equals the classical spread
    let w = parse("0.8*q1 + q1^2").unwrap();
    let h_free = parse("p1^2/2").unwrap();
    let rep = timedep_hj_residual(&h_free, &w, &[0.5, 1.0, 2.0], &qs).unwrap();
    let spread = classical_hj_residual_from_gamma(
        &h_free,
        &OneFormFamily::exact(&w, 1),
        None,
        &qs,
    )
    .unwrap();
    c.le("W-spread vs classical spread", (rep.max_spread - spread).abs(), 1e-14);

    // moi with a t-free family equals d(H o gamma) componentwise
    let gamma_s = OneFormFamily::exact(&w, 1);
    let fam_s = TimeDependentFamily::new(gamma_s.clone());
    let moi = max_moi_residual(&h_free, &fam_s, &[1.0], &qs).unwrap();
    let h_gamma = hjgeo::dynamics::substitute_momenta(&[h_free.clone()], &gamma_s, None)
        .pop()
        .unwrap();
    let grad = h_gamma.diff(&q_var(0));
    let mut direct: f64 = 0.0;
    for q in &qs {
        let b: Binding = [("q1", q[0])].into_iter().collect();
        direct = direct.max(grad.eval(&b).unwrap().abs());
    }
    c.le("moi vs d(H o gamma)", (moi - direct).abs(), 1e-14);

    // time-dependent nonholonomic check with a t-free section reproduces the
    // autonomous distribution check
    let sys = skate();
    let gamma_nh = OneFormFamily::new(vec![Expr::zero(), parse("0.8").unwrap(), Expr::zero()]);
    let fam_nh = TimeDependentFamily::new(gamma_nh.clone());
    let qs3: Vec<Vec<f64>> = halton_box(20, 3, -1.0, 1.0, 0);
    let td = timedep_nonholonomic_check(&sys, &fam_nh, &[1.0], &qs3, None, 1e-8).unwrap();
    let auto = distribution_hj_check(&sys, &gamma_nh, &qs3, None).unwrap();
    c.le("nh constraint", (td.r_constraint - auto.r_constraint).abs(), 1e-14);
    c.le("nh distribution", (td.r_distribution - auto.r_hj).abs(), 1e-14);
    c.le("nh membership", (td.r_membership - auto.r_tangency).abs(), 1e-14);

    // time-dependent holonomic pullback with a t-free W equals the autonomous
    // pullback on the same frames
    let diag = GraphSubmanifoldOfQ::new(2, vec![(1, parse("q1").unwrap())]);
    let sys_h = holonomic_extend(&diag, &parse("p1^2/2").unwrap()).unwrap();
    let s = parse("0.6*q1").unwrap();
    let base_qs: Vec<Vec<f64>> = vec![vec![0.2], vec![-0.7]];
    let grid = default_lambda_grid(1);
    let td = timedep_holonomic_check(&sys_h, &s, &[1.0], &base_qs, &grid, 1e-10).unwrap();
    let gamma_b = OneFormFamily::exact(&s, 1);
    let l_h = build_l_n_gamma(&diag, &gamma_b, None);
    let comps = gamma_b.at_time(None);
    let mut pts = Vec::new();
    for lambda in &grid {
        for q in &base_qs {
            pts.push(point_on_l(&diag, &comps, q, lambda).unwrap());
        }
    }
    let auto = hj_residuals(&sys_h.h_full, &l_h, &pts).unwrap();
    c.le(
        "holonomic extended vs pullback",
        (td.max_extended - auto.max_pullback()).abs(),
        1e-14,
    );

    // X_H is recovered from the constrained field with r = 0
    let lag = MechanicalLagrangian::new(
        vec![vec![Expr::one()]],
        parse("q1^2/2").unwrap(),
    )
    .unwrap();
    let dist = LinearDistribution::new(1, vec![]).unwrap();
    let free = build_hamiltonian_system(&lag, &dist).unwrap();
    let xh = hamiltonian_field(&free.h, 1).field_exprs();
    c.require("r = 0 gives X_H exactly", free.xi_field_exprs() == xh);

    // gamma-related flows agree between the general and Hamiltonian entry
    // points for the same t-free data
    let gamma1 = OneFormFamily::new(vec![parse("0.5").unwrap()]);
    let field = hamiltonian_field(&h_free, 1).field_exprs();
    let a = gamma_related_check(&field, &gamma1, &[0.0], 0.0, 1e-2, 50).unwrap();
    let b = gamma_related_check_hamiltonian(&h_free, &gamma1, &[0.0], 0.0, 1e-2, 50).unwrap();
    c.le("flow gap equality", (a.max_gap - b.max_gap).abs(), 1e-14);

    c.finish();
}
