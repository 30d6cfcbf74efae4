//! Numerical flows and the trajectory form of the Hamilton-Jacobi tests.
//!
//! Integration is classical fixed-step RK4 throughout; the tests here
//! compare short-horizon trajectories at tight tolerances, where order-4
//! accuracy makes oracle comparisons simple. Energy drift is monitored by
//! the callers, never corrected.

use crate::geometry::{p_var, phase_vars, q_var, T_VAR};
use crate::submanifold::OneFormFamily;
use crate::symexpr::{CompiledExpr, EvalError, Expr};
use std::collections::HashMap;
use std::fmt::Write as _;

#[derive(Debug, thiserror::Error)]
pub enum DynamicsError {
    #[error("non-finite state at step {step} (blow-up or domain violation)")]
    Blowup { step: usize },
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Fixed-step trajectory: `states[k]` is the state at `times[k]`.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub vars: Vec<String>,
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn endpoint(&self) -> &[f64] {
        self.states.last().expect("empty trajectory")
    }

    /// CSV with header `t,x1,...,xk`, 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push('t');
        for i in 1..=self.vars.len() {
            let _ = write!(out, ",x{i}");
        }
        out.push('\n');
        for (t, state) in self.times.iter().zip(&self.states) {
            let _ = write!(out, "{t:.16e}");
            for v in state {
                let _ = write!(out, ",{v:.16e}");
            }
            out.push('\n');
        }
        out
    }
}

/// A vector field on Q (or on any chart), components over `q1..qn` and
/// optionally `t`.
#[derive(Debug, Clone)]
pub struct VectorFieldOnQ {
    pub components: Vec<Expr>,
}

/// Classical RK4 with fixed step `h`. The field components may read the
/// state variables `vars` and the time variable `t`.
pub fn flow(
    field: &[Expr],
    vars: &[String],
    x0: &[f64],
    t0: f64,
    h: f64,
    steps: usize,
) -> Result<Trajectory, DynamicsError> {
    assert!(h > 0.0, "step size must be positive");
    assert_eq!(field.len(), x0.len(), "field dimension mismatch");
    assert_eq!(vars.len(), x0.len());
    let dim = x0.len();

    let mut slot_names: Vec<&str> = vars.iter().map(|s| s.as_str()).collect();
    slot_names.push(T_VAR);
    let compiled: Vec<CompiledExpr> = field.iter().map(|e| e.compile(&slot_names)).collect();

    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    times.push(t0);
    states.push(x0.to_vec());

    let mut x = x0.to_vec();
    let mut slots = vec![0.0; dim + 1];
    let mut stack: Vec<f64> = Vec::new();
    let mut k1 = vec![0.0; dim];
    let mut k2 = vec![0.0; dim];
    let mut k3 = vec![0.0; dim];
    let mut k4 = vec![0.0; dim];
    let mut scratch = vec![0.0; dim];

    let eval_into = |state: &[f64],
                         t: f64,
                         out: &mut Vec<f64>,
                         slots: &mut Vec<f64>,
                         stack: &mut Vec<f64>| {
        slots[..dim].copy_from_slice(state);
        slots[dim] = t;
        for (o, c) in out.iter_mut().zip(&compiled) {
            *o = c.eval_with(slots, stack);
        }
    };

    for step in 1..=steps {
        let t = t0 + (step - 1) as f64 * h;
        eval_into(&x, t, &mut k1, &mut slots, &mut stack);
        for i in 0..dim {
            scratch[i] = x[i] + 0.5 * h * k1[i];
        }
        eval_into(&scratch, t + 0.5 * h, &mut k2, &mut slots, &mut stack);
        for i in 0..dim {
            scratch[i] = x[i] + 0.5 * h * k2[i];
        }
        eval_into(&scratch, t + 0.5 * h, &mut k3, &mut slots, &mut stack);
        for i in 0..dim {
            scratch[i] = x[i] + h * k3[i];
        }
        eval_into(&scratch, t + h, &mut k4, &mut slots, &mut stack);
        for i in 0..dim {
            x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(DynamicsError::Blowup { step });
        }
        times.push(t0 + step as f64 * h);
        states.push(x.clone());
    }

    Ok(Trajectory {
        vars: vars.to_vec(),
        times,
        states,
    })
}

/// Substitute p_i -> gamma_i(t, q) in every given expression.
pub fn substitute_momenta(exprs: &[Expr], gamma: &OneFormFamily, t: Option<f64>) -> Vec<Expr> {
    let comps = gamma.at_time(t);
    let mut subs = HashMap::new();
    for (i, g) in comps.iter().enumerate() {
        subs.insert(p_var(i), g.clone());
    }
    exprs.iter().map(|e| e.substitute_all(&subs)).collect()
}

/// The projected vector field on Q: component i is dH/dp_i with the momenta
/// replaced by gamma(t, q).
pub fn projected_field(h: &Expr, gamma: &OneFormFamily, t: Option<f64>) -> VectorFieldOnQ {
    let n = gamma.n;
    let dh_dp: Vec<Expr> = (0..n).map(|i| h.diff(&p_var(i))).collect();
    VectorFieldOnQ {
        components: substitute_momenta(&dh_dp, gamma, t),
    }
}

/// Result of the integral-curve commutation test.
#[derive(Debug, Clone)]
pub struct GammaRelatedReport {
    /// max over steps of the phase-space distance between the lifted base
    /// curve and the independently integrated phase-space curve
    pub max_gap: f64,
    pub base: Trajectory,
    pub phase: Trajectory,
}

/// Integral-curve commutation test for an arbitrary phase-space field.
///
/// Integrates the base curve c(t) by the q-components of `phase_field`
/// restricted to Im gamma, lifts it to gamma(t, c(t)), independently
/// integrates `phase_field` from gamma(t0, q0), and reports the maximum gap.
/// `phase_field` has 2n components ordered `q1..qn, p1..pn`.
pub fn gamma_related_check(
    phase_field: &[Expr],
    gamma: &OneFormFamily,
    q0: &[f64],
    t0: f64,
    h: f64,
    steps: usize,
) -> Result<GammaRelatedReport, DynamicsError> {
    let n = gamma.n;
    assert_eq!(phase_field.len(), 2 * n);
    assert_eq!(q0.len(), n);

    let base_field = substitute_momenta(&phase_field[..n], gamma, None);
    let q_vars: Vec<String> = (0..n).map(q_var).collect();
    let base = flow(&base_field, &q_vars, q0, t0, h, steps)?;

    let p0 = gamma.value(Some(t0), q0)?;
    let x0: Vec<f64> = q0.iter().chain(&p0).copied().collect();
    let phase = flow(phase_field, &phase_vars(n), &x0, t0, h, steps)?;

    let mut max_gap: f64 = 0.0;
    for (k, (t, qk)) in base.times.iter().zip(&base.states).enumerate() {
        let lift_p = gamma.value(Some(*t), qk)?;
        let integrated = &phase.states[k];
        let mut gap2 = 0.0;
        for i in 0..n {
            gap2 += (qk[i] - integrated[i]).powi(2);
            gap2 += (lift_p[i] - integrated[n + i]).powi(2);
        }
        max_gap = max_gap.max(gap2.sqrt());
    }

    Ok(GammaRelatedReport {
        max_gap,
        base,
        phase,
    })
}

/// [`gamma_related_check`] specialised to the Hamiltonian field X_H.
pub fn gamma_related_check_hamiltonian(
    h: &Expr,
    gamma: &OneFormFamily,
    q0: &[f64],
    t0: f64,
    step: f64,
    steps: usize,
) -> Result<GammaRelatedReport, DynamicsError> {
    let field = crate::geometry::hamiltonian_field(h, gamma.n).field_exprs();
    gamma_related_check(&field, gamma, q0, t0, step, steps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::hamiltonian_field;
    use crate::symexpr::parse;

    #[test]
    fn oscillator_flow_matches_analytic_solution() {
        let h = parse("(q1^2 + p1^2)/2").unwrap();
        let field = hamiltonian_field(&h, 1).field_exprs();
        let traj = flow(&field, &phase_vars(1), &[1.0, 0.0], 0.0, 1e-3, 1000).unwrap();
        let end = traj.endpoint();
        assert!((end[0] - 1.0f64.cos()).abs() <= 1e-9);
        assert!((end[1] + 1.0f64.sin()).abs() <= 1e-9);
    }

    #[test]
    fn zero_field_is_constant() {
        let field = vec![Expr::zero(), Expr::zero()];
        let traj = flow(&field, &phase_vars(1), &[0.3, -0.7], 0.0, 0.1, 10).unwrap();
        for s in &traj.states {
            assert_eq!(s, &vec![0.3, -0.7]);
        }
    }

    #[test]
    fn free_translation_is_exact() {
        let h = parse("p1").unwrap();
        let field = hamiltonian_field(&h, 1).field_exprs();
        let traj = flow(&field, &phase_vars(1), &[0.0, 1.0], 0.0, 0.25, 8).unwrap();
        for (t, s) in traj.times.iter().zip(&traj.states) {
            assert!((s[0] - t).abs() <= 1e-15);
            assert_eq!(s[1], 1.0);
        }
    }

    #[test]
    fn blowup_is_reported_with_step_index() {
        // qdot = q^2 from q = 1 blows up at t = 1
        let field = vec![parse("q1^2").unwrap()];
        let err = flow(&field, &[q_var(0)], &[1.0], 0.0, 0.05, 100).unwrap_err();
        assert!(matches!(err, DynamicsError::Blowup { .. }));
    }

    #[test]
    fn projected_field_constant_section() {
        let h = parse("(q1^2 + p1^2)/2").unwrap();
        let gamma = OneFormFamily::new(vec![parse("0.75").unwrap()]);
        let f = projected_field(&h, &gamma, None);
        assert_eq!(f.components[0], parse("0.75").unwrap());
    }

    #[test]
    fn projected_field_time_dependent() {
        let h = parse("p1^2/2").unwrap();
        let w = parse("q1^2/(2*t)").unwrap();
        let gamma = OneFormFamily::exact(&w, 1);
        let f = projected_field(&h, &gamma, None);
        // dH/dp = p -> q/t
        let b: crate::symexpr::Binding = [("q1", 3.0), ("t", 2.0)].into_iter().collect();
        assert!((f.components[0].eval(&b).unwrap() - 1.5).abs() <= 1e-15);
    }

    #[test]
    fn projected_field_zero_section() {
        let h = parse("p1^2/2").unwrap();
        let gamma = OneFormFamily::new(vec![Expr::zero()]);
        let f = projected_field(&h, &gamma, None);
        assert!(f.components[0].is_zero());
    }

    #[test]
    fn commutation_linear_case_is_exact() {
        let h = parse("p1^2/2").unwrap();
        let gamma = OneFormFamily::new(vec![parse("0.5").unwrap()]);
        let rep = gamma_related_check_hamiltonian(&h, &gamma, &[0.0], 0.0, 1e-2, 100).unwrap();
        assert!(rep.max_gap <= 1e-12, "gap {}", rep.max_gap);
    }

    #[test]
    fn commutation_oscillator() {
        // S' = sqrt(2E - q^2), E = 1/2 solves the oscillator HJ equation
        let h = parse("(q1^2 + p1^2)/2").unwrap();
        let gamma = OneFormFamily::new(vec![parse("sqrt(1 - q1^2)").unwrap()]);
        let rep = gamma_related_check_hamiltonian(&h, &gamma, &[0.0], 0.0, 1e-3, 500).unwrap();
        assert!(rep.max_gap <= 1e-6, "gap {}", rep.max_gap);
    }

    #[test]
    fn commutation_time_dependent_free_particle() {
        // W = q^2/(2t): q(t) = t, p(t) = 1 from (q0, t0) = (1, 1)
        let h = parse("p1^2/2").unwrap();
        let gamma = OneFormFamily::exact(&parse("q1^2/(2*t)").unwrap(), 1);
        let rep = gamma_related_check_hamiltonian(&h, &gamma, &[1.0], 1.0, 1e-3, 500).unwrap();
        assert!(rep.max_gap <= 1e-6, "gap {}", rep.max_gap);
        let end = rep.phase.endpoint();
        let t_end = rep.phase.times.last().unwrap();
        assert!((end[0] - t_end).abs() <= 1e-9);
        assert!((end[1] - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn energy_conservation_and_rk4_order() {
        let h = parse("(q1^2 + p1^2)/2").unwrap();
        let field = hamiltonian_field(&h, 1).field_exprs();
        let traj = flow(&field, &phase_vars(1), &[1.0, 0.0], 0.0, 1e-3, 10_000).unwrap();
        let energy =
            |s: &[f64]| (s[0] * s[0] + s[1] * s[1]) / 2.0;
        let e0 = energy(&traj.states[0]);
        let drift = traj
            .states
            .iter()
            .map(|s| (energy(s) - e0).abs())
            .fold(0.0f64, f64::max);
        assert!(drift <= 1e-9, "drift {drift}");

        // halving h reduces the endpoint error by roughly 16x
        let exact = (1.0f64.cos(), -(1.0f64.sin()));
        let err_at = |h: f64| {
            let steps = (1.0 / h).round() as usize;
            let traj = flow(&field, &phase_vars(1), &[1.0, 0.0], 0.0, h, steps).unwrap();
            let end = traj.endpoint();
            ((end[0] - exact.0).powi(2) + (end[1] - exact.1).powi(2)).sqrt()
        };
        let ratio = err_at(2e-2) / err_at(1e-2);
        assert!((12.0..=20.0).contains(&ratio), "order ratio {ratio}");
    }

    #[test]
    fn csv_format() {
        let traj = Trajectory {
            vars: vec!["q1".into(), "p1".into()],
            times: vec![0.0, 0.5],
            states: vec![vec![1.0, 2.0], vec![3.0, 4.0]],
        };
        let csv = traj.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "t,x1,x2");
        let row = lines.next().unwrap();
        assert!(row.starts_with("0.0000000000000000e0,1.0000000000000000e0"));
    }
}
