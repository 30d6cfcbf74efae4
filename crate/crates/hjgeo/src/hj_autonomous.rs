//! The autonomous Hamilton-Jacobi conditions as computable residuals.
//!
//! For a Lagrangian submanifold L of T*Q and a Hamiltonian H, the following
//! are equivalent, and each becomes a per-point residual:
//!
//! - pullback: `T*i_L(dH|_L) = 0` — dH kills every tangent vector of L,
//! - annihilator: `Im(dH|_L) ⊂ (TL)^0` — dH lies in the span of the
//!   constraint differentials,
//! - tangency: `Im(X_H|_L) ⊂ TL` — the Hamiltonian field is tangent to L.
//!
//! The classical equation H ∘ dS = E is the special case L = Im dS, and the
//! holonomic setting pushes a Hamiltonian h on T*N to
//! H = h ∘ T*i_N on T*Q, where the fiber momenta play the role of Lagrange
//! multipliers that drop out of the equation.

use crate::geometry::{hamiltonian_field, p_var, q_var, PhasePoint};
use crate::numeric::{dmatrix_from_rows, span_residual};
use crate::submanifold::{
    build_l_n_gamma, ConstraintSubmanifold, GraphSubmanifoldOfQ, OneFormFamily, SubmanifoldError,
};
use crate::symexpr::{Binding, EvalError, Expr};
use nalgebra::DVector;
use std::collections::HashMap;

#[derive(Debug, thiserror::Error)]
pub enum HJError {
    #[error("submanifold is flagged non-Lagrangian; Hamilton-Jacobi residuals are undefined on it")]
    NotLagrangian,
    #[error("variable `{0}` collides with a fiber coordinate or momentum")]
    VariableCollision(String),
    #[error(transparent)]
    Submanifold(#[from] SubmanifoldError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Residuals of the three equivalent conditions at one sample point.
#[derive(Debug, Clone, serde::Serialize)]
pub struct HJPointRecord {
    pub point: PhasePoint,
    /// max over the tangent basis v of |<dH, v>|
    pub r_pullback: f64,
    /// distance from dH to the span of the annihilator basis
    pub r_annihilator: f64,
    /// distance from X_H to the span of the tangent basis
    pub r_tangency: f64,
    pub h_value: f64,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct HJReport {
    pub records: Vec<HJPointRecord>,
    /// max - min of H over the samples
    pub h_spread: f64,
}

impl HJReport {
    pub fn max_pullback(&self) -> f64 {
        self.records.iter().map(|r| r.r_pullback).fold(0.0, f64::max)
    }

    pub fn max_annihilator(&self) -> f64 {
        self.records
            .iter()
            .map(|r| r.r_annihilator)
            .fold(0.0, f64::max)
    }

    pub fn max_tangency(&self) -> f64 {
        self.records.iter().map(|r| r.r_tangency).fold(0.0, f64::max)
    }

    pub fn max_residual(&self) -> f64 {
        self.max_pullback()
            .max(self.max_annihilator())
            .max(self.max_tangency())
    }

    /// CSV summary: one row per point with the three residuals and H.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("r_pullback,r_annihilator,r_tangency,h_value\n");
        for r in &self.records {
            out.push_str(&format!(
                "{:.16e},{:.16e},{:.16e},{:.16e}\n",
                r.r_pullback, r.r_annihilator, r.r_tangency, r.h_value
            ));
        }
        out
    }
}

/// Evaluates the three Hamilton-Jacobi residuals of `h` on `l` at each
/// sample (samples must already lie on `l`).
pub fn hj_residuals(
    h: &Expr,
    l: &ConstraintSubmanifold,
    samples: &[PhasePoint],
) -> Result<HJReport, HJError> {
    if l.lagrangian == Some(false) {
        return Err(HJError::NotLagrangian);
    }
    let n = l.n;
    let field = hamiltonian_field(h, n);
    let dh_q: Vec<Expr> = (0..n).map(|i| h.diff(&q_var(i))).collect();
    let dh_p: Vec<Expr> = (0..n).map(|i| h.diff(&p_var(i))).collect();

    let mut records = Vec::with_capacity(samples.len());
    let mut h_min = f64::INFINITY;
    let mut h_max = f64::NEG_INFINITY;
    for x in samples {
        let b = x.binding();
        let frames = l.frames(x)?;
        let dh: Vec<f64> = dh_q
            .iter()
            .chain(&dh_p)
            .map(|e| e.eval(&b))
            .collect::<Result<_, _>>()?;
        let xh = field.at(x)?;
        let xh_vec: Vec<f64> = xh.dq.iter().chain(&xh.dp).copied().collect();

        let r_pullback = frames
            .tangent_basis
            .iter()
            .map(|v| {
                let mut s = 0.0;
                for i in 0..n {
                    s += dh[i] * v.dq[i] + dh[n + i] * v.dp[i];
                }
                s.abs()
            })
            .fold(0.0, f64::max);

        let ann_cols: Vec<Vec<f64>> = frames
            .annihilator_basis
            .iter()
            .map(|c| c.a.iter().chain(&c.b).copied().collect())
            .collect();
        let r_annihilator = span_residual(
            &dmatrix_from_rows(&ann_cols).transpose(),
            &DVector::from_vec(dh.clone()),
        );

        let tan_cols: Vec<Vec<f64>> = frames
            .tangent_basis
            .iter()
            .map(|v| v.dq.iter().chain(&v.dp).copied().collect())
            .collect();
        let r_tangency = span_residual(
            &dmatrix_from_rows(&tan_cols).transpose(),
            &DVector::from_vec(xh_vec),
        );

        let h_value = h.eval(&b)?;
        h_min = h_min.min(h_value);
        h_max = h_max.max(h_value);
        records.push(HJPointRecord {
            point: x.clone(),
            r_pullback,
            r_annihilator,
            r_tangency,
            h_value,
        });
    }
    let h_spread = if records.is_empty() { 0.0 } else { h_max - h_min };
    Ok(HJReport { records, h_spread })
}

/// Classical equation residual max |H(q, dS/dq) - E| over base samples.
pub fn classical_hj_residual(
    h: &Expr,
    s: &Expr,
    e: f64,
    samples_q: &[Vec<f64>],
) -> Result<f64, EvalError> {
    let n = samples_q.first().map(|q| q.len()).unwrap_or(1);
    classical_hj_residual_from_gamma(h, &OneFormFamily::exact(s, n), Some(e), samples_q)
}

/// Same residual through the 1-form interface (for generating functions
/// only available as dS). When `e` is `None` the spread max - min of
/// H ∘ gamma is returned instead.
pub fn classical_hj_residual_from_gamma(
    h: &Expr,
    gamma: &OneFormFamily,
    e: Option<f64>,
    samples_q: &[Vec<f64>],
) -> Result<f64, EvalError> {
    let mut values = Vec::with_capacity(samples_q.len());
    for q in samples_q {
        let p = gamma.value(None, q)?;
        let mut b = Binding::new();
        for (i, (&qi, &pi)) in q.iter().zip(&p).enumerate() {
            b.set(&q_var(i), qi);
            b.set(&p_var(i), pi);
        }
        values.push(h.eval(&b)?);
    }
    Ok(match e {
        Some(e) => values.iter().map(|v| (v - e).abs()).fold(0.0, f64::max),
        None => {
            let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let min = values.iter().copied().fold(f64::INFINITY, f64::min);
            if values.is_empty() {
                0.0
            } else {
                max - min
            }
        }
    })
}

/// A Hamiltonian h on T*N extended to H = h ∘ T*i_N on T*Q.
#[derive(Debug, Clone)]
pub struct HolonomicSystem {
    pub n_sub: GraphSubmanifoldOfQ,
    /// h over the base coordinates and their momenta
    pub h_base: Expr,
    /// H on T*Q: p_a replaced by p_a + (dPsi^alpha/dq^a) p_alpha
    pub h_full: Expr,
}

/// Cotangent-lift extension: H(q, p) = h(q^a, p_a + p_alpha dPsi^alpha/dq^a).
pub fn holonomic_extend(
    n_sub: &GraphSubmanifoldOfQ,
    h_base: &Expr,
) -> Result<HolonomicSystem, HJError> {
    let allowed: Vec<String> = n_sub
        .base
        .iter()
        .flat_map(|&a| [q_var(a), p_var(a)])
        .collect();
    for v in h_base.free_vars() {
        if !allowed.contains(&v) {
            return Err(HJError::VariableCollision(v));
        }
    }
    let mut subs = HashMap::new();
    for &a in &n_sub.base {
        let mut lifted = Expr::var(&p_var(a));
        for (alpha_pos, &alpha) in n_sub.fiber.iter().enumerate() {
            let dpsi = n_sub.psi[alpha_pos].diff(&q_var(a));
            lifted = Expr::add(lifted, Expr::mul(Expr::var(&p_var(alpha)), dpsi));
        }
        subs.insert(p_var(a), lifted);
    }
    let h_full = h_base.substitute_all(&subs);
    Ok(HolonomicSystem {
        n_sub: n_sub.clone(),
        h_base: h_base.clone(),
        h_full,
    })
}

/// Default multiplier grid: 5 values per fiber dimension in [-2, 2]
/// (cartesian product across fiber dimensions).
pub fn default_lambda_grid(fiber_dim: usize) -> Vec<Vec<f64>> {
    let line = [-2.0, -1.0, 0.0, 1.0, 2.0];
    let mut grid: Vec<Vec<f64>> = vec![vec![]];
    for _ in 0..fiber_dim {
        grid = grid
            .into_iter()
            .flat_map(|prefix| {
                line.iter().map(move |&v| {
                    let mut g = prefix.clone();
                    g.push(v);
                    g
                })
            })
            .collect();
    }
    grid
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct HolonomicCheckReport {
    /// spread of h(q^a, dS/dq^a) over the base samples
    pub base_residual: f64,
    /// max Hamilton-Jacobi residual on L_{N,gamma} across the lambda grid
    pub extended_residual: f64,
    /// per-lambda maxima, aligned with the supplied grid
    pub per_lambda: Vec<f64>,
    /// whether both sides agree at the given tolerance
    pub agreement: bool,
    pub tol: f64,
}

/// Verifies the multiplier independence of the holonomic equation:
/// the base equation h ∘ dS = const holds iff the extended residual on
/// L_{N,dS} vanishes, uniformly in the fiber momenta lambda.
pub fn holonomic_hj_check(
    sys: &HolonomicSystem,
    s_on_n: &Expr,
    base_samples: &[Vec<f64>],
    lambda_grid: &[Vec<f64>],
    tol: f64,
) -> Result<HolonomicCheckReport, HJError> {
    let n_sub = &sys.n_sub;
    let m = n_sub.base_dim();
    let gamma_comps: Vec<Expr> = n_sub
        .base
        .iter()
        .map(|&a| s_on_n.diff(&q_var(a)))
        .collect();
    let gamma = OneFormFamily::new(gamma_comps.clone());

    // base-level residual: spread of h over the base samples
    let mut base_values = Vec::new();
    for q_base in base_samples {
        assert_eq!(q_base.len(), m);
        let mut b = Binding::new();
        for (pos, &a) in n_sub.base.iter().enumerate() {
            b.set(&q_var(a), q_base[pos]);
        }
        let mut p_b = b.clone();
        for (pos, &a) in n_sub.base.iter().enumerate() {
            p_b.set(&p_var(a), gamma_comps[pos].eval(&b)?);
        }
        base_values.push(sys.h_base.eval(&p_b)?);
    }
    let base_residual = if base_values.is_empty() {
        0.0
    } else {
        base_values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
            - base_values.iter().copied().fold(f64::INFINITY, f64::min)
    };

    let l = build_l_n_gamma(n_sub, &gamma, None);
    let mut per_lambda = Vec::with_capacity(lambda_grid.len());
    let mut extended_residual: f64 = 0.0;
    for lambda in lambda_grid {
        assert_eq!(lambda.len(), n_sub.fiber.len());
        let mut points = Vec::with_capacity(base_samples.len());
        for q_base in base_samples {
            points.push(point_on_l(n_sub, &gamma_comps, q_base, lambda)?);
        }
        let report = hj_residuals(&sys.h_full, &l, &points)?;
        // the pullback condition tests constancy differentially; include the
        // H-spread so "constant" is also checked across the sample cluster
        let this = report.max_residual().max(report.h_spread);
        per_lambda.push(this);
        extended_residual = extended_residual.max(this);
    }

    Ok(HolonomicCheckReport {
        base_residual,
        extended_residual,
        per_lambda,
        agreement: (base_residual <= tol) == (extended_residual <= tol),
        tol,
    })
}

/// The point of L_{N,gamma} over base coordinates `q_base` with fiber
/// momenta `lambda`: q^alpha = Psi^alpha, p_alpha = lambda_alpha,
/// p_a = gamma_a - (dPsi^alpha/dq^a) lambda_alpha.
pub fn point_on_l(
    n_sub: &GraphSubmanifoldOfQ,
    gamma_comps: &[Expr],
    q_base: &[f64],
    lambda: &[f64],
) -> Result<PhasePoint, EvalError> {
    let mut b = Binding::new();
    for (pos, &a) in n_sub.base.iter().enumerate() {
        b.set(&q_var(a), q_base[pos]);
    }
    let mut q = vec![0.0; n_sub.n];
    let mut p = vec![0.0; n_sub.n];
    for (pos, &a) in n_sub.base.iter().enumerate() {
        q[a] = q_base[pos];
        let mut pa = gamma_comps[pos].eval(&b)?;
        for alpha_pos in 0..n_sub.fiber.len() {
            pa -= n_sub.psi[alpha_pos].diff(&q_var(a)).eval(&b)? * lambda[alpha_pos];
        }
        p[a] = pa;
    }
    for (alpha_pos, &alpha) in n_sub.fiber.iter().enumerate() {
        q[alpha] = n_sub.psi[alpha_pos].eval(&b)?;
        p[alpha] = lambda[alpha_pos];
    }
    Ok(PhasePoint::new(q, p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::submanifold::image_of_one_form;
    use crate::symexpr::parse;

    #[test]
    fn energy_level_set_is_invariant() {
        let h = parse("(q1^2 + p1^2)/2").unwrap();
        let l = ConstraintSubmanifold::new(1, vec![parse("(q1^2 + p1^2)/2 - 0.5").unwrap()]);
        let samples = l.sample_points(40, 0, 1.5);
        assert!(samples.len() >= 20);
        let rep = hj_residuals(&h, &l, &samples).unwrap();
        assert!(rep.max_residual() <= 1e-12, "max {}", rep.max_residual());
        assert!(rep.h_spread <= 1e-12);
    }

    #[test]
    fn constant_momentum_section_fails_for_oscillator() {
        // L = {p = k}: X_H = (p, -q) is not tangent wherever q != 0
        let h = parse("(q1^2 + p1^2)/2").unwrap();
        let gamma = OneFormFamily::new(vec![parse("0.7").unwrap()]);
        let l = image_of_one_form(&gamma, None);
        let x = PhasePoint::new(vec![0.5], vec![0.7]);
        let rep = hj_residuals(&h, &l, &[x]).unwrap();
        assert!(rep.max_tangency() > 0.3, "tangency {}", rep.max_tangency());
        assert!(rep.max_pullback() > 0.3);
    }

    #[test]
    fn free_particle_with_linear_s_passes() {
        let h = parse("p1^2/2").unwrap();
        let gamma = OneFormFamily::new(vec![parse("0.7").unwrap()]);
        let l = image_of_one_form(&gamma, None);
        let samples: Vec<PhasePoint> = [-1.0, -0.3, 0.2, 0.9]
            .iter()
            .map(|&q| PhasePoint::new(vec![q], vec![0.7]))
            .collect();
        let rep = hj_residuals(&h, &l, &samples).unwrap();
        assert!(rep.max_residual() <= 1e-12);
        assert!(rep.h_spread <= 1e-12);
    }

    #[test]
    fn classical_residual_examples() {
        // H = p^2/2, S = k q, E = k^2/2
        let h = parse("p1^2/2").unwrap();
        let s = parse("0.8*q1").unwrap();
        let r = classical_hj_residual(&h, &s, 0.32, &[vec![-1.0], vec![0.0], vec![2.0]]).unwrap();
        assert!(r <= 1e-15);

        // oscillator with gamma = sqrt(2E - q^2), E = 1/2
        let h = parse("(q1^2 + p1^2)/2").unwrap();
        let gamma = OneFormFamily::new(vec![parse("sqrt(1 - q1^2)").unwrap()]);
        let qs: Vec<Vec<f64>> = (-9..=9).map(|k| vec![k as f64 / 10.0]).collect();
        let r = classical_hj_residual_from_gamma(&h, &gamma, Some(0.5), &qs).unwrap();
        assert!(r <= 1e-12, "residual {r}");

        // wrong candidate: S = q^2 at q = 1 gives |1/2 + 2| = 2.5
        let s = parse("q1^2").unwrap();
        let r = classical_hj_residual(&h, &s, 0.0, &[vec![1.0]]).unwrap();
        assert!((r - 2.5).abs() <= 1e-15);
    }

    #[test]
    fn holonomic_extend_examples() {
        // N = {q2 = 0}: H = p1^2/2
        let flat = GraphSubmanifoldOfQ::new(2, vec![(1, Expr::zero())]);
        let sys = holonomic_extend(&flat, &parse("p1^2/2").unwrap()).unwrap();
        assert_eq!(sys.h_full, parse("p1^2/2").unwrap());

        // N = {q2 = q1}: H = (p1 + p2)^2/2
        let diag = GraphSubmanifoldOfQ::new(2, vec![(1, parse("q1").unwrap())]);
        let sys = holonomic_extend(&diag, &parse("p1^2/2").unwrap()).unwrap();
        let b: Binding = [("p1", 2.0), ("p2", 3.0), ("q1", 0.0), ("q2", 0.0)]
            .into_iter()
            .collect();
        assert!((sys.h_full.eval(&b).unwrap() - 12.5).abs() <= 1e-15);

        // constant h stays constant
        let sys = holonomic_extend(&diag, &parse("3").unwrap()).unwrap();
        assert_eq!(sys.h_full, parse("3").unwrap());

        // fiber variables are rejected
        let err = holonomic_extend(&diag, &parse("p2^2").unwrap()).unwrap_err();
        assert!(matches!(err, HJError::VariableCollision(_)));
    }

    #[test]
    fn holonomic_multiplier_independence() {
        let samples: Vec<Vec<f64>> = (-4..=4).map(|k| vec![k as f64 / 4.0]).collect();
        let grid = default_lambda_grid(1);
        assert_eq!(grid.len(), 5);

        // N = {q2 = 0}, h = p1^2/2, S = k q1: H independent of p2
        let flat = GraphSubmanifoldOfQ::new(2, vec![(1, Expr::zero())]);
        let sys = holonomic_extend(&flat, &parse("p1^2/2").unwrap()).unwrap();
        let rep =
            holonomic_hj_check(&sys, &parse("0.6*q1").unwrap(), &samples, &grid, 1e-10).unwrap();
        assert!(rep.base_residual <= 1e-12);
        assert!(rep.extended_residual <= 1e-12, "{}", rep.extended_residual);
        assert!(rep.agreement);

        // N = {q2 = q1}: H = (p1 + p2)^2/2 = k^2/2 on L for all lambda
        let diag = GraphSubmanifoldOfQ::new(2, vec![(1, parse("q1").unwrap())]);
        let sys = holonomic_extend(&diag, &parse("p1^2/2").unwrap()).unwrap();
        let rep =
            holonomic_hj_check(&sys, &parse("0.6*q1").unwrap(), &samples, &grid, 1e-10).unwrap();
        assert!(rep.extended_residual <= 1e-10, "{}", rep.extended_residual);
        assert!(rep.agreement);

        // non-solution: h ∘ dS = 2 q1^2 is not constant
        let bad: Vec<Vec<f64>> = [0.5, 0.75, 1.0].iter().map(|&q| vec![q]).collect();
        let rep =
            holonomic_hj_check(&sys, &parse("q1^2").unwrap(), &bad, &grid, 1e-10).unwrap();
        assert!(rep.base_residual > 0.1, "{}", rep.base_residual);
        assert!(rep.extended_residual > 0.1, "{}", rep.extended_residual);
        assert!(rep.agreement);
    }
}
