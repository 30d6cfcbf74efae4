//! Time-dependent Hamilton-Jacobi conditions on T*Q, one time slice at a
//! time.
//!
//! A family of sections gamma_t of T*Q moves with velocity Tgamma(d/dt) =
//! (0, dgamma/dt); its flat is the semibasic 1-form alpha_t with
//! dq-components -dgamma_i/dt. The tangency condition of the autonomous
//! theory becomes membership of X_H in the affine distribution Sigma_t =
//! sharp(alpha_t) + T(Im gamma_t), which in coordinates is the equation
//!
//!   -dH/dq^i = dgamma_i/dt + (dgamma_i/dq^j)(dH/dp_j)   along Im gamma_t,
//!
//! and for exact families gamma_t = d(W(t, .)) it is the classical equation
//! H(q, dW/dq) + dW/dt = K(t). The holonomic and nonholonomic variants
//! subtract the pulled-back form Pi_t, respectively shift the distribution
//! residual by dgamma/dt.

use crate::dynamics::{gamma_related_check, substitute_momenta, DynamicsError};
use crate::geometry::{hamiltonian_field, p_var, q_var, PhasePoint, T_VAR};
use crate::hj_autonomous::{point_on_l, HJError, HolonomicSystem};
use crate::nonholonomic::{FlowProbe, NonholonomicError, NonholonomicSystem};
use crate::numeric::span_residual;
use crate::submanifold::{build_l_n_gamma, GraphSubmanifoldOfQ, OneFormFamily};
use crate::symexpr::{Binding, EvalError, Expr};
use nalgebra::{DMatrix, DVector};

#[derive(Debug, thiserror::Error)]
pub enum TimedepError {
    #[error("gamma leaves the momentum constraint set at t = {t} (|C| = {residual:.3e})")]
    OffConstraint { t: f64, residual: f64 },
    #[error(transparent)]
    Nonholonomic(#[from] NonholonomicError),
    #[error(transparent)]
    Holonomic(#[from] HJError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

/// A family gamma_t with the time derivatives cached.
#[derive(Debug, Clone)]
pub struct TimeDependentFamily {
    pub gamma: OneFormFamily,
    /// dgamma_i/dt, aligned with the components
    pub dt: Vec<Expr>,
}

impl TimeDependentFamily {
    pub fn new(gamma: OneFormFamily) -> TimeDependentFamily {
        let dt = gamma.components.iter().map(|c| c.diff(T_VAR)).collect();
        TimeDependentFamily { gamma, dt }
    }

    /// The exact family gamma_t = d(W(t, .)) for W over (t, q).
    pub fn exact(w: &Expr, n: usize) -> TimeDependentFamily {
        TimeDependentFamily::new(OneFormFamily::exact(w, n))
    }
}

/// The semibasic form alpha_t = flat(Tgamma(d/dt)): dq-components only.
#[derive(Debug, Clone)]
pub struct AlphaForm {
    pub components: Vec<Expr>,
}

/// alpha_t has dq-components -dgamma_i/dt (and zero dp-components).
pub fn alpha_t(fam: &TimeDependentFamily) -> AlphaForm {
    AlphaForm {
        components: fam.dt.iter().map(|d| Expr::neg(d.clone())).collect(),
    }
}

/// Membership residual of X_H in Sigma_t = sharp(alpha_t) + T(Im gamma_t)
/// at each q: distance from X_H(q, gamma_t(q)) - sharp(alpha_t) to the span
/// of the frame (e_j, dgamma/dq^j). Returns the maximum over the samples.
pub fn sigma_membership(
    h: &Expr,
    fam: &TimeDependentFamily,
    t: f64,
    samples_q: &[Vec<f64>],
) -> Result<f64, EvalError> {
    sigma_membership_with_alpha(h, &fam.gamma, &alpha_t(fam), t, samples_q)
}

/// General-alpha variant; `sharp(alpha)` contributes (0, -components).
pub fn sigma_membership_with_alpha(
    h: &Expr,
    gamma: &OneFormFamily,
    alpha: &AlphaForm,
    t: f64,
    samples_q: &[Vec<f64>],
) -> Result<f64, EvalError> {
    let n = gamma.n;
    let field = hamiltonian_field(h, n);
    let jac: Vec<Vec<Expr>> = gamma
        .components
        .iter()
        .map(|g| (0..n).map(|j| g.diff(&q_var(j))).collect())
        .collect();

    let mut worst: f64 = 0.0;
    for q in samples_q {
        let p = gamma.value(Some(t), q)?;
        let x = PhasePoint::new(q.clone(), p).at_time(t);
        let b = x.binding();
        let xh = field.at(&x)?;
        // target = X_H - sharp(alpha); sharp(a, 0) = (0, -a)
        let mut target = vec![0.0; 2 * n];
        for i in 0..n {
            target[i] = xh.dq[i];
            target[n + i] = xh.dp[i] + alpha.components[i].eval(&b)?;
        }
        let mut frame = DMatrix::zeros(2 * n, n);
        for j in 0..n {
            frame[(j, j)] = 1.0;
            for i in 0..n {
                frame[(n + i, j)] = jac[i][j].eval(&b)?;
            }
        }
        worst = worst.max(span_residual(&frame, &DVector::from_vec(target)));
    }
    Ok(worst)
}

/// Symbolic residuals of the coordinate equation
/// dH/dq^i + dgamma_i/dt + (dgamma_i/dq^j)(dH/dp_j), with p -> gamma(t, q).
pub fn moi_residual(h: &Expr, fam: &TimeDependentFamily) -> Vec<Expr> {
    let n = fam.gamma.n;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut r = Expr::add(h.diff(&q_var(i)), fam.dt[i].clone());
        for j in 0..n {
            r = Expr::add(
                r,
                Expr::mul(
                    fam.gamma.components[i].diff(&q_var(j)),
                    h.diff(&p_var(j)),
                ),
            );
        }
        out.push(r);
    }
    substitute_momenta(&out, &fam.gamma, None)
}

/// Max |moi residual| over a (t, q) grid.
pub fn max_moi_residual(
    h: &Expr,
    fam: &TimeDependentFamily,
    t_grid: &[f64],
    samples_q: &[Vec<f64>],
) -> Result<f64, EvalError> {
    let res = moi_residual(h, fam);
    let mut worst: f64 = 0.0;
    for &t in t_grid {
        for q in samples_q {
            let mut b = Binding::new();
            for (i, &qi) in q.iter().enumerate() {
                b.set(&q_var(i), qi);
            }
            b.set(T_VAR, t);
            for r in &res {
                worst = worst.max(r.eval(&b)?.abs());
            }
        }
    }
    Ok(worst)
}

/// Per-t spread of R(t, q) = H(q, dW/dq) + dW/dt over the q samples.
#[derive(Debug, Clone, serde::Serialize)]
pub struct TimedepHJReport {
    /// (t, spread over q) per grid time
    pub per_t: Vec<(f64, f64)>,
    pub max_spread: f64,
}

/// Evaluates the classical time-dependent equation; a solution gives zero
/// q-spread at every t (R may still depend on t).
pub fn timedep_hj_residual(
    h: &Expr,
    w: &Expr,
    t_grid: &[f64],
    samples_q: &[Vec<f64>],
) -> Result<TimedepHJReport, EvalError> {
    let n = samples_q.first().map(|q| q.len()).unwrap_or(1);
    let gamma = OneFormFamily::exact(w, n);
    let r = Expr::add(
        substitute_momenta(std::slice::from_ref(h), &gamma, None)
            .pop()
            .unwrap(),
        w.diff(T_VAR),
    );
    let mut per_t = Vec::with_capacity(t_grid.len());
    let mut max_spread: f64 = 0.0;
    for &t in t_grid {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for q in samples_q {
            let mut b = Binding::new();
            for (i, &qi) in q.iter().enumerate() {
                b.set(&q_var(i), qi);
            }
            b.set(T_VAR, t);
            let v = r.eval(&b)?;
            lo = lo.min(v);
            hi = hi.max(v);
        }
        let spread = if samples_q.is_empty() { 0.0 } else { hi - lo };
        per_t.push((t, spread));
        max_spread = max_spread.max(spread);
    }
    Ok(TimedepHJReport { per_t, max_spread })
}

/// Pullback Pi_t of a semibasic form on T*N through the momentum-lift map
/// (q^a, p_i) -> (q^a, p_a + p_alpha dPsi^alpha/dq^a): the dq^a-components
/// pass through unchanged and every other component vanishes. `alpha` has
/// one component per base coordinate of `n_sub`, in base order.
pub fn pi_t(alpha: &AlphaForm, n_sub: &GraphSubmanifoldOfQ) -> Vec<Expr> {
    assert_eq!(alpha.components.len(), n_sub.base_dim());
    let mut out = vec![Expr::zero(); n_sub.n];
    for (pos, &a) in n_sub.base.iter().enumerate() {
        out[a] = alpha.components[pos].clone();
    }
    out
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct TimedepHolonomicReport {
    /// per grid time: (t, base q-spread, extended pullback residual)
    pub per_t: Vec<(f64, f64, f64)>,
    pub max_base_spread: f64,
    pub max_extended: f64,
    pub agreement: bool,
    pub tol: f64,
}

/// Time-dependent holonomic check: the base equation
/// h(q^a, dW/dq^a) + dW/dt = K(t) against the extended pullback residual of
/// (dH - Pi_t) on the tangent frames of L_{N, gamma_t}, across the lambda
/// grid of fiber momenta.
pub fn timedep_holonomic_check(
    sys: &HolonomicSystem,
    w_on_n: &Expr,
    t_grid: &[f64],
    base_samples: &[Vec<f64>],
    lambda_grid: &[Vec<f64>],
    tol: f64,
) -> Result<TimedepHolonomicReport, TimedepError> {
    let n_sub = &sys.n_sub;
    let n = n_sub.n;
    let gamma_comps: Vec<Expr> = n_sub
        .base
        .iter()
        .map(|&a| w_on_n.diff(&q_var(a)))
        .collect();
    let gamma = OneFormFamily::new(gamma_comps.clone());
    let fam = TimeDependentFamily::new(gamma.clone());
    let pi = pi_t(&alpha_t(&fam), n_sub);
    let w_t = w_on_n.diff(T_VAR);
    let dh: Vec<Expr> = (0..n)
        .map(|i| sys.h_full.diff(&q_var(i)))
        .chain((0..n).map(|i| sys.h_full.diff(&p_var(i))))
        .collect();

    let mut per_t = Vec::with_capacity(t_grid.len());
    let mut max_base_spread: f64 = 0.0;
    let mut max_extended: f64 = 0.0;
    for &t in t_grid {
        // base residual: spread of h(q^a, dW/dq^a) + dW/dt over q
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for q_base in base_samples {
            let mut b = Binding::new();
            for (pos, &a) in n_sub.base.iter().enumerate() {
                b.set(&q_var(a), q_base[pos]);
            }
            b.set(T_VAR, t);
            for (pos, &a) in n_sub.base.iter().enumerate() {
                let pa = gamma_comps[pos].eval(&b)?;
                b.set(&p_var(a), pa);
            }
            let v = sys.h_base.eval(&b)? + w_t.eval(&b)?;
            lo = lo.min(v);
            hi = hi.max(v);
        }
        let spread = if base_samples.is_empty() { 0.0 } else { hi - lo };
        max_base_spread = max_base_spread.max(spread);

        // extended residual: |<dH - Pi_t, v>| over the tangent frames
        let l = build_l_n_gamma(n_sub, &gamma, Some(t));
        let gamma_at_t = gamma.at_time(Some(t));
        let mut extended: f64 = 0.0;
        for lambda in lambda_grid {
            for q_base in base_samples {
                let x = point_on_l(n_sub, &gamma_at_t, q_base, lambda)?.at_time(t);
                let frames = l.frames(&x).map_err(HJError::from)?;
                let b = x.binding();
                let mut cov = vec![0.0; 2 * n];
                for i in 0..n {
                    cov[i] = dh[i].eval(&b)? - pi[i].eval(&b)?;
                    cov[n + i] = dh[n + i].eval(&b)?;
                }
                for v in &frames.tangent_basis {
                    let mut s = 0.0;
                    for i in 0..n {
                        s += cov[i] * v.dq[i] + cov[n + i] * v.dp[i];
                    }
                    extended = extended.max(s.abs());
                }
            }
        }
        max_extended = max_extended.max(extended);
        per_t.push((t, spread, extended));
    }

    Ok(TimedepHolonomicReport {
        per_t,
        max_base_spread,
        max_extended,
        agreement: (max_base_spread <= tol) == (max_extended <= tol),
        tol,
    })
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct TimedepNonholonomicReport {
    /// max |C^a(q, gamma_t(q))|
    pub r_constraint: f64,
    /// max over D of |<d(H o gamma_t), v> + (dgamma_i/dt) v^i|
    pub r_distribution: f64,
    /// distance from xi_nh(gamma_t(q)) to Sigma_t = Tgamma(d/dt) + Tgamma_t(D)
    pub r_membership: f64,
    pub flow_gap: Option<f64>,
}

impl TimedepNonholonomicReport {
    pub fn max_residual(&self) -> f64 {
        self.r_constraint
            .max(self.r_distribution)
            .max(self.r_membership)
            .max(self.flow_gap.unwrap_or(0.0))
    }
}

/// Time-dependent nonholonomic check over a (t, q) grid; errors when
/// gamma_t leaves the momentum constraint set by more than `constraint_tol`.
pub fn timedep_nonholonomic_check(
    sys: &NonholonomicSystem,
    fam: &TimeDependentFamily,
    t_grid: &[f64],
    samples_q: &[Vec<f64>],
    probe: Option<&FlowProbe>,
    constraint_tol: f64,
) -> Result<TimedepNonholonomicReport, TimedepError> {
    let n = sys.n;
    let gamma = &fam.gamma;
    assert_eq!(gamma.n, n);
    let xi = sys.xi_field_exprs();
    let h_gamma = substitute_momenta(std::slice::from_ref(&sys.h), gamma, None)
        .pop()
        .unwrap();
    let h_gamma_grad: Vec<Expr> = (0..n).map(|i| h_gamma.diff(&q_var(i))).collect();
    let jac_gamma: Vec<Vec<Expr>> = gamma
        .components
        .iter()
        .map(|g| (0..n).map(|j| g.diff(&q_var(j))).collect())
        .collect();

    let mut r_constraint: f64 = 0.0;
    let mut r_distribution: f64 = 0.0;
    let mut r_membership: f64 = 0.0;

    for &t in t_grid {
        for q in samples_q {
            let p = gamma.value(Some(t), q)?;
            let x = PhasePoint::new(q.clone(), p).at_time(t);
            let b = x.binding();

            let mut c_here: f64 = 0.0;
            for c in &sys.constraints {
                c_here = c_here.max(c.eval(&b)?.abs());
            }
            if c_here > constraint_tol {
                return Err(TimedepError::OffConstraint { t, residual: c_here });
            }
            r_constraint = r_constraint.max(c_here);

            let basis = sys.distribution.basis_at(&b)?;
            let d = basis.ncols();

            for a in 0..d {
                let u = basis.column(a);
                let mut val = 0.0;
                for i in 0..n {
                    val += (h_gamma_grad[i].eval(&b)? + fam.dt[i].eval(&b)?) * u[i];
                }
                r_distribution = r_distribution.max(val.abs());
            }

            // Sigma_t membership: xi - (0, dgamma/dt) against (u, Jgamma u)
            let mut jg = vec![vec![0.0; n]; n];
            for (i, row) in jac_gamma.iter().enumerate() {
                for (j, e) in row.iter().enumerate() {
                    jg[i][j] = e.eval(&b)?;
                }
            }
            let mut target = vec![0.0; 2 * n];
            for (i, e) in xi.iter().enumerate() {
                target[i] = e.eval(&b)?;
            }
            for i in 0..n {
                target[n + i] -= fam.dt[i].eval(&b)?;
            }
            let mut span = DMatrix::zeros(2 * n, d);
            for a in 0..d {
                let u = basis.column(a);
                for i in 0..n {
                    span[(i, a)] = u[i];
                    for k in 0..n {
                        span[(n + i, a)] += jg[i][k] * u[k];
                    }
                }
            }
            r_membership = r_membership.max(span_residual(&span, &DVector::from_vec(target)));
        }
    }

    let flow_gap = match probe {
        Some(pr) => Some(gamma_related_check(&xi, gamma, &pr.q0, pr.t0, pr.h, pr.steps)?.max_gap),
        None => None,
    };

    Ok(TimedepNonholonomicReport {
        r_constraint,
        r_distribution,
        r_membership,
        flow_gap,
    })
}
