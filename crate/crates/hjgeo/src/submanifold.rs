//! Constraint-defined submanifolds of T*Q and Lagrangian-ness tests.
//!
//! A submanifold is cut out by independent constraints Φ^i(q, p) = 0. For
//! k = n constraints, being Lagrangian is equivalent to the vanishing of all
//! pairwise canonical Poisson brackets {Φ^i, Φ^j} on the submanifold. The
//! module also builds the two families used throughout: images of (closed)
//! 1-forms on Q, and the graph construction L_{N,γ} over a submanifold N of
//! Q, whose local constraints are q^α − Ψ^α(q^a) and
//! p_a − γ_a + (∂Ψ^α/∂q^a) p_α.

use crate::geometry::{p_var, phase_vars, poisson_bracket, q_var, CotangentVector, PhasePoint, TangentVector, T_VAR};
use crate::numeric::{self, dmatrix_from_rows, singular_values};
use crate::sampling::halton_box;
use crate::symexpr::{Binding, EvalError, Expr};
use nalgebra::{DMatrix, DVector};

/// Default Gauss-Newton projection tolerance.
pub const PROJECT_TOL: f64 = 1e-12;
/// Default Gauss-Newton iteration cap.
pub const PROJECT_MAX_ITER: usize = 50;

#[derive(Debug, thiserror::Error)]
pub enum SubmanifoldError {
    #[error("expected {n} constraints for a Lagrangian test, found {k}")]
    DimensionMismatch { k: usize, n: usize },
    #[error("sample {index} is off the submanifold: |Phi| = {residual:.3e} > tol {tol:.3e}")]
    OffSubmanifold {
        index: usize,
        residual: f64,
        tol: f64,
    },
    #[error("constraint Jacobian is rank-deficient at the evaluated point (rank {found} < {expected})")]
    RankDeficient { expected: usize, found: usize },
    #[error("singular normal equations in Gauss-Newton projection")]
    SingularNormalEquations,
    #[error("projection did not converge within {max_iter} iterations (|Phi| = {residual:.3e})")]
    NoConvergence { max_iter: usize, residual: f64 },
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// A (possibly time-dependent) 1-form on Q: n component expressions
/// γ_i(t, q).
#[derive(Debug, Clone)]
pub struct OneFormFamily {
    pub n: usize,
    pub components: Vec<Expr>,
}

impl OneFormFamily {
    pub fn new(components: Vec<Expr>) -> OneFormFamily {
        assert!(!components.is_empty());
        OneFormFamily {
            n: components.len(),
            components,
        }
    }

    /// Exterior derivative of a scalar on Q: γ = dS.
    pub fn exact(s: &Expr, n: usize) -> OneFormFamily {
        OneFormFamily::new((0..n).map(|i| s.diff(&q_var(i))).collect())
    }

    pub fn is_time_dependent(&self) -> bool {
        self.components
            .iter()
            .any(|c| c.free_vars().contains(T_VAR))
    }

    /// Components with the time variable substituted (if a time is given).
    pub fn at_time(&self, t: Option<f64>) -> Vec<Expr> {
        match t {
            Some(t) => self
                .components
                .iter()
                .map(|c| c.substitute(T_VAR, &Expr::constant(t)))
                .collect(),
            None => self.components.clone(),
        }
    }

    /// Numeric value γ(t, q).
    pub fn value(&self, t: Option<f64>, q: &[f64]) -> Result<Vec<f64>, EvalError> {
        let mut b = Binding::new();
        for (i, &qi) in q.iter().enumerate() {
            b.set(&q_var(i), qi);
        }
        if let Some(t) = t {
            b.set(T_VAR, t);
        }
        self.components.iter().map(|c| c.eval(&b)).collect()
    }

    /// Closedness check: symbolic equality of mixed partials first; when the
    /// conservative simplifier cannot match them syntactically, 200
    /// low-discrepancy points decide (tolerance 1e-10).
    pub fn is_closed(&self, t: Option<f64>) -> bool {
        let comps = self.at_time(t);
        let mut pending = Vec::new();
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                let dij = comps[i].diff(&q_var(j));
                let dji = comps[j].diff(&q_var(i));
                if dij != dji {
                    pending.push(Expr::sub(dij, dji));
                }
            }
        }
        if pending.is_empty() {
            return true;
        }
        let t_grid: &[f64] = if comps.iter().any(|c| c.free_vars().contains(T_VAR)) {
            &[0.5, 1.0, 2.0]
        } else {
            &[1.0]
        };
        for pt in halton_box(200, self.n, -1.0, 1.0, 0) {
            for &tv in t_grid {
                let mut b = Binding::new();
                for (i, &qi) in pt.iter().enumerate() {
                    b.set(&q_var(i), qi);
                }
                b.set(T_VAR, tv);
                for d in &pending {
                    match d.eval(&b) {
                        Ok(v) if v.abs() <= 1e-10 => {}
                        Ok(_) => return false,
                        Err(_) => {} // outside the domain, skip this point
                    }
                }
            }
        }
        true
    }
}

/// A submanifold of Q given as a graph: fiber coordinates q^α are functions
/// Ψ^α of the base coordinates q^a.
#[derive(Debug, Clone)]
pub struct GraphSubmanifoldOfQ {
    pub n: usize,
    /// indices of the base coordinates q^a (0-based)
    pub base: Vec<usize>,
    /// indices of the fibered coordinates q^α
    pub fiber: Vec<usize>,
    /// graph functions Ψ^α(q^a), aligned with `fiber`
    pub psi: Vec<Expr>,
}

impl GraphSubmanifoldOfQ {
    /// `graph` maps a fiber coordinate index to its graph function over the
    /// base coordinates.
    pub fn new(n: usize, graph: Vec<(usize, Expr)>) -> GraphSubmanifoldOfQ {
        let fiber: Vec<usize> = graph.iter().map(|(i, _)| *i).collect();
        let psi: Vec<Expr> = graph.into_iter().map(|(_, e)| e).collect();
        let base: Vec<usize> = (0..n).filter(|i| !fiber.contains(i)).collect();
        assert!(!base.is_empty(), "graph submanifold must have positive dimension");
        GraphSubmanifoldOfQ { n, base, fiber, psi }
    }

    pub fn base_dim(&self) -> usize {
        self.base.len()
    }
}

/// Submanifold of T*Q cut out by k independent constraints, with the
/// symbolic Jacobian cached.
#[derive(Debug, Clone)]
pub struct ConstraintSubmanifold {
    pub n: usize,
    pub constraints: Vec<Expr>,
    /// k x 2n matrix of partial derivatives, columns ordered q1..qn, p1..pn
    pub jacobian: Vec<Vec<Expr>>,
    /// set by the constructors that know the answer; `None` means untested
    pub lagrangian: Option<bool>,
}

/// Outcome of the pairwise-bracket Lagrangian test.
#[derive(Debug, Clone)]
pub struct LagrangianReport {
    pub verdict: bool,
    pub max_bracket_residual: f64,
}

/// Tangent and annihilator frames at a point of the submanifold.
#[derive(Debug, Clone)]
pub struct Frames {
    pub tangent_basis: Vec<TangentVector>,
    pub annihilator_basis: Vec<CotangentVector>,
}

impl ConstraintSubmanifold {
    pub fn new(n: usize, constraints: Vec<Expr>) -> ConstraintSubmanifold {
        let vars = phase_vars(n);
        let jacobian = constraints
            .iter()
            .map(|c| vars.iter().map(|v| c.diff(v)).collect())
            .collect();
        ConstraintSubmanifold {
            n,
            constraints,
            jacobian,
            lagrangian: None,
        }
    }

    pub fn k(&self) -> usize {
        self.constraints.len()
    }

    pub fn residual(&self, x: &PhasePoint) -> Result<Vec<f64>, EvalError> {
        let b = x.binding();
        self.constraints.iter().map(|c| c.eval(&b)).collect()
    }

    pub fn max_residual(&self, x: &PhasePoint) -> Result<f64, EvalError> {
        Ok(self
            .residual(x)?
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs())))
    }

    pub fn jacobian_at(&self, x: &PhasePoint) -> Result<DMatrix<f64>, EvalError> {
        let b = x.binding();
        let rows: Vec<Vec<f64>> = self
            .jacobian
            .iter()
            .map(|row| row.iter().map(|e| e.eval(&b)).collect::<Result<_, _>>())
            .collect::<Result<_, _>>()?;
        Ok(dmatrix_from_rows(&rows))
    }

    /// Pairwise-bracket Lagrangian test at sample points known to lie on the
    /// submanifold (within `tol`).
    pub fn is_lagrangian(
        &self,
        samples: &[PhasePoint],
        tol: f64,
    ) -> Result<LagrangianReport, SubmanifoldError> {
        if self.k() != self.n {
            return Err(SubmanifoldError::DimensionMismatch {
                k: self.k(),
                n: self.n,
            });
        }
        let mut brackets = Vec::new();
        for i in 0..self.k() {
            for j in (i + 1)..self.k() {
                brackets.push(poisson_bracket(
                    &self.constraints[i],
                    &self.constraints[j],
                    self.n,
                ));
            }
        }
        let mut max_residual: f64 = 0.0;
        for (index, x) in samples.iter().enumerate() {
            let residual = self.max_residual(x)?;
            if residual > tol {
                return Err(SubmanifoldError::OffSubmanifold {
                    index,
                    residual,
                    tol,
                });
            }
            let b = x.binding();
            for br in &brackets {
                max_residual = max_residual.max(br.eval(&b)?.abs());
            }
        }
        Ok(LagrangianReport {
            verdict: max_residual <= tol,
            max_bracket_residual: max_residual,
        })
    }

    /// Tangent basis (kernel of the Jacobian) and annihilator basis (rows of
    /// the Jacobian as covectors) at `x`.
    pub fn frames(&self, x: &PhasePoint) -> Result<Frames, SubmanifoldError> {
        let n = self.n;
        let j = self.jacobian_at(x)?;
        let found = numeric::rank(&j, numeric::RANK_TOL);
        if found < self.k() {
            return Err(SubmanifoldError::RankDeficient {
                expected: self.k(),
                found,
            });
        }
        let kernel = numeric::nullspace(&j, self.k()).ok_or(SubmanifoldError::RankDeficient {
            expected: self.k(),
            found,
        })?;
        let tangent_basis = (0..kernel.ncols())
            .map(|c| {
                let col = kernel.column(c);
                TangentVector::new(
                    x.clone(),
                    (0..n).map(|i| col[i]).collect(),
                    (0..n).map(|i| col[n + i]).collect(),
                )
            })
            .collect();
        let annihilator_basis = (0..self.k())
            .map(|r| {
                CotangentVector::new(
                    x.clone(),
                    (0..n).map(|i| j[(r, i)]).collect(),
                    (0..n).map(|i| j[(r, n + i)]).collect(),
                )
            })
            .collect();
        Ok(Frames {
            tangent_basis,
            annihilator_basis,
        })
    }

    /// Gauss-Newton least-squares projection of `x0` onto the submanifold.
    pub fn project(
        &self,
        x0: &PhasePoint,
        tol: f64,
        max_iter: usize,
    ) -> Result<PhasePoint, SubmanifoldError> {
        let mut x = x0.clone();
        for _ in 0..max_iter {
            let phi = self.residual(&x)?;
            let worst = phi.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if worst <= tol {
                return Ok(x);
            }
            let j = self.jacobian_at(&x)?;
            let sv = singular_values(&j);
            let smax = sv.first().copied().unwrap_or(0.0);
            if smax == 0.0 || sv.len() < self.k() || sv[self.k() - 1] <= 1e-12 * smax {
                return Err(SubmanifoldError::SingularNormalEquations);
            }
            let svd = j.clone().svd(true, true);
            let rhs = DVector::from_vec(phi);
            let step = svd
                .solve(&rhs, 1e-12 * smax)
                .map_err(|_| SubmanifoldError::SingularNormalEquations)?;
            let mut coords = x.coords();
            for (c, s) in coords.iter_mut().zip(step.iter()) {
                *c -= s;
            }
            let t = x.t;
            x = PhasePoint::from_coords(&coords);
            x.t = t;
        }
        let residual = self.max_residual(&x)?;
        if residual <= tol {
            Ok(x)
        } else {
            Err(SubmanifoldError::NoConvergence { max_iter, residual })
        }
    }

    /// Up to `count` points on the submanifold, projected from a
    /// low-discrepancy cloud in `[-half_width, half_width]^{2n}`.
    pub fn sample_points(&self, count: usize, seed: u64, half_width: f64) -> Vec<PhasePoint> {
        let mut out = Vec::new();
        let seeds = halton_box(count * 4, 2 * self.n, -half_width, half_width, seed);
        for raw in seeds {
            if out.len() >= count {
                break;
            }
            let x0 = PhasePoint::from_coords(&raw);
            if let Ok(x) = self.project(&x0, PROJECT_TOL, PROJECT_MAX_ITER) {
                if x.coords().iter().all(|v| v.is_finite()) {
                    out.push(x);
                }
            }
        }
        out
    }
}

/// The submanifold Im γ_t = {p = γ(t, q)} with constraints Φ_i = p_i − γ_i.
/// The `lagrangian` flag records the closedness verdict; a non-closed γ
/// still builds (flagged false).
pub fn image_of_one_form(gamma: &OneFormFamily, t: Option<f64>) -> ConstraintSubmanifold {
    let comps = gamma.at_time(t);
    let constraints = comps
        .iter()
        .enumerate()
        .map(|(i, g)| Expr::sub(Expr::var(&p_var(i)), g.clone()))
        .collect();
    let mut sub = ConstraintSubmanifold::new(gamma.n, constraints);
    sub.lagrangian = Some(gamma.is_closed(t));
    sub
}

/// The Lagrangian submanifold L_{N,γ} of T*Q: covectors whose pullback to N
/// equals γ. Local constraints: q^α − Ψ^α(q^a) and
/// p_a − γ_a + (∂Ψ^α/∂q^a) p_α. `gamma` has one component per base
/// coordinate of `N`, in base order.
pub fn build_l_n_gamma(
    n_sub: &GraphSubmanifoldOfQ,
    gamma: &OneFormFamily,
    t: Option<f64>,
) -> ConstraintSubmanifold {
    assert_eq!(
        gamma.n,
        n_sub.base_dim(),
        "one gamma component per base coordinate"
    );
    let gamma_comps = gamma.at_time(t);
    let mut constraints = Vec::with_capacity(n_sub.n);
    for (alpha_pos, &alpha) in n_sub.fiber.iter().enumerate() {
        constraints.push(Expr::sub(
            Expr::var(&q_var(alpha)),
            n_sub.psi[alpha_pos].clone(),
        ));
    }
    for (a_pos, &a) in n_sub.base.iter().enumerate() {
        let mut c = Expr::sub(Expr::var(&p_var(a)), gamma_comps[a_pos].clone());
        for (alpha_pos, &alpha) in n_sub.fiber.iter().enumerate() {
            let dpsi = n_sub.psi[alpha_pos].diff(&q_var(a));
            c = Expr::add(c, Expr::mul(dpsi, Expr::var(&p_var(alpha))));
        }
        constraints.push(c);
    }
    let mut sub = ConstraintSubmanifold::new(n_sub.n, constraints);
    sub.lagrangian = Some(gamma.is_closed(t));
    sub
}
