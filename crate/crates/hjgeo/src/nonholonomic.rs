//! Nonholonomic mechanics on the Hamiltonian side.
//!
//! A mechanical Lagrangian L = (1/2) v^T M(q) v - V(q) with linear velocity
//! constraints mu^a(q) . v = 0 transfers through the Legendre map to
//! momentum constraints C^a = mu^a . (M^{-1} p) and semibasic reaction
//! covectors F^a with dq-components -mu^a. The constrained field is
//!
//!   xi_nh = X_H - lambda_a sharp(F^a),
//!
//! where the multipliers solve A lambda = dC(X_H) with the compatibility
//! matrix A_ab = <dC^a, sharp(F^b)> = mu^a . M^{-1} mu^b. The solution test
//! for a section gamma of T*Q asks only for behavior along the distribution
//! D = ker mu: gamma lands in {C = 0}, d gamma vanishes on D x D, d(H o
//! gamma) vanishes on D, and xi_nh is tangent to gamma(D); the flow check
//! compares integral curves as in the unconstrained case.

use crate::dynamics::{gamma_related_check, DynamicsError};
use crate::geometry::{p_var, poisson_bracket, q_var, PhasePoint, TangentVector};
use crate::numeric::{self, dmatrix_from_rows, singular_values, span_residual};
use crate::submanifold::OneFormFamily;
use crate::symexpr::{Binding, EvalError, Expr};
use nalgebra::{DMatrix, DVector};

/// Name of the i-th velocity variable used by Lagrangian energies.
pub fn v_var(i: usize) -> String {
    format!("v{}", i + 1)
}

#[derive(Debug, thiserror::Error)]
pub enum NonholonomicError {
    #[error("mass matrix is not symmetric at entry ({i}, {j})")]
    AsymmetricMass { i: usize, j: usize },
    #[error("`{0}` may only depend on the configuration variables")]
    DependsOnPhase(String),
    #[error("mass matrix is numerically singular on the sampled configurations")]
    SingularMass,
    #[error("compatibility matrix is singular (min singular value {min_singular:.3e})")]
    IncompatibleConstraints { min_singular: f64 },
    #[error("constraint rows are linearly dependent at a sampled configuration")]
    DegenerateDistribution,
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

fn check_q_only(e: &Expr, n: usize, what: &str) -> Result<(), NonholonomicError> {
    let allowed: Vec<String> = (0..n).map(q_var).collect();
    for v in e.free_vars() {
        if !allowed.contains(&v) {
            return Err(NonholonomicError::DependsOnPhase(format!("{what} ({v})")));
        }
    }
    Ok(())
}

/// L = (1/2) v^T M(q) v - V(q) with M symmetric and q-dependent only.
#[derive(Debug, Clone)]
pub struct MechanicalLagrangian {
    pub n: usize,
    pub mass: Vec<Vec<Expr>>,
    pub potential: Expr,
}

impl MechanicalLagrangian {
    pub fn new(
        mass: Vec<Vec<Expr>>,
        potential: Expr,
    ) -> Result<MechanicalLagrangian, NonholonomicError> {
        let n = mass.len();
        assert!(n > 0);
        assert!(mass.iter().all(|row| row.len() == n));
        for i in 0..n {
            for j in (i + 1)..n {
                if mass[i][j] != mass[j][i] {
                    return Err(NonholonomicError::AsymmetricMass { i, j });
                }
            }
        }
        for (i, row) in mass.iter().enumerate() {
            for (j, e) in row.iter().enumerate() {
                check_q_only(e, n, &format!("mass entry ({i}, {j})"))?;
            }
        }
        check_q_only(&potential, n, "potential")?;
        Ok(MechanicalLagrangian { n, mass, potential })
    }

    /// Lagrangian energy E_L = (1/2) v^T M v + V over `q1.., v1..`.
    pub fn energy(&self) -> Expr {
        let mut kinetic = Expr::zero();
        for i in 0..self.n {
            for j in 0..self.n {
                kinetic = Expr::add(
                    kinetic,
                    Expr::mul(
                        Expr::mul(Expr::var(&v_var(i)), self.mass[i][j].clone()),
                        Expr::var(&v_var(j)),
                    ),
                );
            }
        }
        Expr::add(
            Expr::div(kinetic, Expr::constant(2.0)),
            self.potential.clone(),
        )
    }

    /// Symbolic inverse mass (adjugate over determinant). Errors when the
    /// determinant vanishes on a small configuration sample.
    pub fn inverse_mass(&self) -> Result<Vec<Vec<Expr>>, NonholonomicError> {
        let det = det_expr(&self.mass);
        let mut singular = true;
        for q in crate::sampling::halton_box(8, self.n, -1.0, 1.0, 0) {
            let mut b = Binding::new();
            for (i, &qi) in q.iter().enumerate() {
                b.set(&q_var(i), qi);
            }
            if let Ok(v) = det.eval(&b) {
                if v.abs() > 1e-12 {
                    singular = false;
                    break;
                }
            }
        }
        if singular {
            return Err(NonholonomicError::SingularMass);
        }
        let adj = adjugate_expr(&self.mass);
        Ok(adj
            .into_iter()
            .map(|row| row.into_iter().map(|e| Expr::div(e, det.clone())).collect())
            .collect())
    }

    /// Legendre transform: H(q, p) = (1/2) p^T M^{-1} p + V.
    pub fn legendre(&self) -> Result<Expr, NonholonomicError> {
        let inv = self.inverse_mass()?;
        let mut kinetic = Expr::zero();
        for i in 0..self.n {
            for j in 0..self.n {
                kinetic = Expr::add(
                    kinetic,
                    Expr::mul(
                        Expr::mul(Expr::var(&p_var(i)), inv[i][j].clone()),
                        Expr::var(&p_var(j)),
                    ),
                );
            }
        }
        Ok(Expr::add(
            Expr::div(kinetic, Expr::constant(2.0)),
            self.potential.clone(),
        ))
    }
}

/// Linear velocity constraints mu^a(q) . v = 0; D = ker mu.
#[derive(Debug, Clone)]
pub struct LinearDistribution {
    pub n: usize,
    /// r rows of n components each, functions of q
    pub mu: Vec<Vec<Expr>>,
}

impl LinearDistribution {
    pub fn new(n: usize, mu: Vec<Vec<Expr>>) -> Result<LinearDistribution, NonholonomicError> {
        assert!(mu.iter().all(|row| row.len() == n));
        for (a, row) in mu.iter().enumerate() {
            for e in row {
                check_q_only(e, n, &format!("constraint row {a}"))?;
            }
        }
        Ok(LinearDistribution { n, mu })
    }

    pub fn r(&self) -> usize {
        self.mu.len()
    }

    pub fn mu_at(&self, b: &Binding) -> Result<DMatrix<f64>, EvalError> {
        let rows: Vec<Vec<f64>> = self
            .mu
            .iter()
            .map(|row| row.iter().map(|e| e.eval(b)).collect::<Result<_, _>>())
            .collect::<Result<_, _>>()?;
        Ok(dmatrix_from_rows(&rows))
    }

    /// Orthonormal basis of D_q as matrix columns (identity for r = 0).
    pub fn basis_at(&self, b: &Binding) -> Result<DMatrix<f64>, NonholonomicError> {
        if self.r() == 0 {
            return Ok(DMatrix::identity(self.n, self.n));
        }
        let m = self.mu_at(b)?;
        numeric::nullspace(&m, self.r()).ok_or(NonholonomicError::DegenerateDistribution)
    }
}

/// The constrained Hamiltonian data: H, momentum constraints C^a, and the
/// everything needed to evaluate xi_nh symbolically.
#[derive(Debug, Clone)]
pub struct NonholonomicSystem {
    pub n: usize,
    pub h: Expr,
    pub distribution: LinearDistribution,
    /// C^a = mu^a . (M^{-1} p)
    pub constraints: Vec<Expr>,
    /// dq-components of the reaction covectors F^a (dp-components are zero)
    pub forces_dq: Vec<Vec<Expr>>,
    /// compatibility matrix A_ab = mu^a . M^{-1} mu^b, symbolic
    pub compatibility: Vec<Vec<Expr>>,
    /// multipliers solving A lambda = dC(X_H), symbolic
    pub multipliers: Vec<Expr>,
}

/// Assembles the constrained system from a mechanical Lagrangian and a
/// distribution.
pub fn build_hamiltonian_system(
    lagrangian: &MechanicalLagrangian,
    distribution: &LinearDistribution,
) -> Result<NonholonomicSystem, NonholonomicError> {
    assert_eq!(lagrangian.n, distribution.n);
    let n = lagrangian.n;
    let r = distribution.r();
    let h = lagrangian.legendre()?;
    let inv = lagrangian.inverse_mass()?;

    // (M^{-1} p)_i
    let inv_p: Vec<Expr> = (0..n)
        .map(|i| {
            let mut s = Expr::zero();
            for j in 0..n {
                s = Expr::add(s, Expr::mul(inv[i][j].clone(), Expr::var(&p_var(j))));
            }
            s
        })
        .collect();

    let constraints: Vec<Expr> = distribution
        .mu
        .iter()
        .map(|row| {
            let mut s = Expr::zero();
            for (i, m) in row.iter().enumerate() {
                s = Expr::add(s, Expr::mul(m.clone(), inv_p[i].clone()));
            }
            s
        })
        .collect();

    let forces_dq: Vec<Vec<Expr>> = distribution
        .mu
        .iter()
        .map(|row| row.iter().map(|m| Expr::neg(m.clone())).collect())
        .collect();

    // A_ab = <dC^a, sharp(F^b)> with sharp(F^b) = (0, mu^b), so only the
    // p-derivatives of C^a enter
    let mut compatibility = vec![vec![Expr::zero(); r]; r];
    for a in 0..r {
        for b in 0..r {
            let mut s = Expr::zero();
            for i in 0..n {
                s = Expr::add(
                    s,
                    Expr::mul(
                        constraints[a].diff(&p_var(i)),
                        distribution.mu[b][i].clone(),
                    ),
                );
            }
            compatibility[a][b] = s;
        }
    }

    // dC^a(X_H) = {C^a, H}; lambda = A^{-1} dC(X_H) via the adjugate
    let multipliers = if r == 0 {
        Vec::new()
    } else {
        let rhs: Vec<Expr> = constraints
            .iter()
            .map(|c| poisson_bracket(c, &h, n))
            .collect();
        let det = det_expr(&compatibility);
        let adj = adjugate_expr(&compatibility);
        (0..r)
            .map(|a| {
                let mut s = Expr::zero();
                for b in 0..r {
                    s = Expr::add(s, Expr::mul(adj[a][b].clone(), rhs[b].clone()));
                }
                Expr::div(s, det.clone())
            })
            .collect()
    };

    Ok(NonholonomicSystem {
        n,
        h,
        distribution: distribution.clone(),
        constraints,
        forces_dq,
        compatibility,
        multipliers,
    })
}

impl NonholonomicSystem {
    /// Components of xi_nh = X_H - lambda_a sharp(F^a), ordered
    /// `q1..qn, p1..pn`. Degenerates to X_H exactly when r = 0.
    pub fn xi_field_exprs(&self) -> Vec<Expr> {
        let mut out: Vec<Expr> = (0..self.n).map(|i| self.h.diff(&p_var(i))).collect();
        for i in 0..self.n {
            let mut c = Expr::neg(self.h.diff(&q_var(i)));
            for (a, lam) in self.multipliers.iter().enumerate() {
                // sharp(F^a) = (0, mu^a)
                c = Expr::sub(
                    c,
                    Expr::mul(lam.clone(), self.distribution.mu[a][i].clone()),
                );
            }
            out.push(c);
        }
        out
    }

    /// Numeric xi_nh and multipliers at a phase point.
    pub fn xi_at(&self, x: &PhasePoint) -> Result<(TangentVector, Vec<f64>), NonholonomicError> {
        let b = x.binding();
        let exprs = self.xi_field_exprs();
        let dq = exprs[..self.n]
            .iter()
            .map(|e| e.eval(&b))
            .collect::<Result<_, _>>()?;
        let dp = exprs[self.n..]
            .iter()
            .map(|e| e.eval(&b))
            .collect::<Result<_, _>>()?;
        let lambdas = self
            .multipliers
            .iter()
            .map(|e| e.eval(&b))
            .collect::<Result<_, _>>()?;
        Ok((TangentVector::new(x.clone(), dq, dp), lambdas))
    }

    pub fn compatibility_at(&self, b: &Binding) -> Result<DMatrix<f64>, EvalError> {
        let rows: Vec<Vec<f64>> = self
            .compatibility
            .iter()
            .map(|row| row.iter().map(|e| e.eval(b)).collect::<Result<_, _>>())
            .collect::<Result<_, _>>()?;
        Ok(dmatrix_from_rows(&rows))
    }

    /// Verifies invertibility of A over the given configuration samples.
    /// Returns the worst relative smallest singular value.
    pub fn check_compatibility(
        &self,
        q_samples: &[Vec<f64>],
    ) -> Result<f64, NonholonomicError> {
        if self.distribution.r() == 0 {
            return Ok(f64::INFINITY);
        }
        let mut worst = f64::INFINITY;
        for q in q_samples {
            let mut b = Binding::new();
            for (i, &qi) in q.iter().enumerate() {
                b.set(&q_var(i), qi);
            }
            let a = self.compatibility_at(&b)?;
            let sv = singular_values(&a);
            let smax = sv.first().copied().unwrap_or(0.0);
            let smin = sv.last().copied().unwrap_or(0.0);
            let rel = if smax > 0.0 { smin / smax } else { 0.0 };
            if rel <= 1e-10 {
                return Err(NonholonomicError::IncompatibleConstraints { min_singular: smin });
            }
            worst = worst.min(rel);
        }
        Ok(worst)
    }
}

/// Flow probe for the integral-curve comparison in the solution test.
#[derive(Debug, Clone)]
pub struct FlowProbe {
    pub q0: Vec<f64>,
    pub t0: f64,
    pub h: f64,
    pub steps: usize,
}

/// Residuals of the distribution-level Hamilton-Jacobi test for a section
/// gamma of T*Q.
#[derive(Debug, Clone, serde::Serialize)]
pub struct NonholonomicCheckReport {
    /// max |C^a(q, gamma(q))|
    pub r_constraint: f64,
    /// max |d gamma(u, v)| over D-basis pairs
    pub r_dgamma: f64,
    /// max |<d(H o gamma), u>| over the D-basis
    pub r_hj: f64,
    /// distance from xi_nh(gamma(q)) to T gamma(D_q)
    pub r_tangency: f64,
    /// integral-curve gap from the flow probe, when one was run
    pub flow_gap: Option<f64>,
}

impl NonholonomicCheckReport {
    pub fn max_residual(&self) -> f64 {
        self.r_constraint
            .max(self.r_dgamma)
            .max(self.r_hj)
            .max(self.r_tangency)
            .max(self.flow_gap.unwrap_or(0.0))
    }
}

/// Evaluates the four pointwise residuals over `q_samples` and optionally
/// runs the integral-curve probe along xi_nh.
pub fn distribution_hj_check(
    sys: &NonholonomicSystem,
    gamma: &OneFormFamily,
    q_samples: &[Vec<f64>],
    probe: Option<&FlowProbe>,
) -> Result<NonholonomicCheckReport, NonholonomicError> {
    let n = sys.n;
    assert_eq!(gamma.n, n);
    let xi = sys.xi_field_exprs();
    let h_gamma = crate::dynamics::substitute_momenta(std::slice::from_ref(&sys.h), gamma, None)
        .pop()
        .unwrap();
    let h_gamma_grad: Vec<Expr> = (0..n).map(|i| h_gamma.diff(&q_var(i))).collect();
    // d gamma needs d(gamma_j)/d(q_i)
    let jac_gamma: Vec<Vec<Expr>> = gamma
        .components
        .iter()
        .map(|g| (0..n).map(|i| g.diff(&q_var(i))).collect())
        .collect();

    let mut r_constraint: f64 = 0.0;
    let mut r_dgamma: f64 = 0.0;
    let mut r_hj: f64 = 0.0;
    let mut r_tangency: f64 = 0.0;

    for q in q_samples {
        let mut qb = Binding::new();
        for (i, &qi) in q.iter().enumerate() {
            qb.set(&q_var(i), qi);
        }
        let p = gamma.value(None, q)?;
        let x = PhasePoint::new(q.clone(), p);
        let xb = x.binding();

        for c in &sys.constraints {
            r_constraint = r_constraint.max(c.eval(&xb)?.abs());
        }

        let basis = sys.distribution.basis_at(&qb)?;
        let d = basis.ncols();

        // dgamma(u, v) = sum_ij (d gamma_j / d q_i)(u_i v_j - u_j v_i)
        let mut jg = vec![vec![0.0; n]; n];
        for (j, row) in jac_gamma.iter().enumerate() {
            for (i, e) in row.iter().enumerate() {
                jg[j][i] = e.eval(&qb)?;
            }
        }
        for a in 0..d {
            for b in (a + 1)..d {
                let u = basis.column(a);
                let v = basis.column(b);
                let mut val = 0.0;
                for i in 0..n {
                    for j in 0..n {
                        val += jg[j][i] * (u[i] * v[j] - u[j] * v[i]);
                    }
                }
                r_dgamma = r_dgamma.max(val.abs());
            }
        }

        for a in 0..d {
            let u = basis.column(a);
            let mut val = 0.0;
            for i in 0..n {
                val += h_gamma_grad[i].eval(&qb)? * u[i];
            }
            r_hj = r_hj.max(val.abs());
        }

        // T gamma(D_q) is spanned by (u, Jg u); xi_nh(gamma(q)) must lie in it
        let mut cols = Vec::with_capacity(d);
        for a in 0..d {
            let u = basis.column(a);
            let mut col = vec![0.0; 2 * n];
            for i in 0..n {
                col[i] = u[i];
                for k in 0..n {
                    col[n + i] += jg[i][k] * u[k];
                }
            }
            cols.push(col);
        }
        let span = dmatrix_from_rows(&cols).transpose();
        let xi_val: Vec<f64> = xi.iter().map(|e| e.eval(&xb)).collect::<Result<_, _>>()?;
        r_tangency = r_tangency.max(span_residual(&span, &DVector::from_vec(xi_val)));
    }

    let flow_gap = match probe {
        Some(pr) => Some(gamma_related_check(&xi, gamma, &pr.q0, pr.t0, pr.h, pr.steps)?.max_gap),
        None => None,
    };

    Ok(NonholonomicCheckReport {
        r_constraint,
        r_dgamma,
        r_hj,
        r_tangency,
        flow_gap,
    })
}

/// Determinant by Laplace expansion along the first row (matrices here are
/// tiny: n and r rarely exceed 3).
fn det_expr(m: &[Vec<Expr>]) -> Expr {
    let n = m.len();
    if n == 1 {
        return m[0][0].clone();
    }
    let mut det = Expr::zero();
    for j in 0..n {
        let minor = minor_matrix(m, 0, j);
        let term = Expr::mul(m[0][j].clone(), det_expr(&minor));
        det = if j % 2 == 0 {
            Expr::add(det, term)
        } else {
            Expr::sub(det, term)
        };
    }
    det
}

fn minor_matrix(m: &[Vec<Expr>], row: usize, col: usize) -> Vec<Vec<Expr>> {
    m.iter()
        .enumerate()
        .filter(|&(i, _)| i != row)
        .map(|(_, r)| {
            r.iter()
                .enumerate()
                .filter(|&(j, _)| j != col)
                .map(|(_, e)| e.clone())
                .collect()
        })
        .collect()
}

/// adj(M)[i][j] = (-1)^{i+j} det(minor_ji), so that M^{-1} = adj / det.
fn adjugate_expr(m: &[Vec<Expr>]) -> Vec<Vec<Expr>> {
    let n = m.len();
    if n == 1 {
        return vec![vec![Expr::one()]];
    }
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    let c = det_expr(&minor_matrix(m, j, i));
                    if (i + j) % 2 == 0 {
                        c
                    } else {
                        Expr::neg(c)
                    }
                })
                .collect()
        })
        .collect()
}
