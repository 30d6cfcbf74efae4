//! Canonical symplectic structure on T*Q in a single global Darboux chart.
//!
//! Conventions, fixed once and used everywhere: Q = R^n with coordinates
//! `q1..qn`, fiber coordinates `p1..pn`, canonical 1-form theta = p_i dq^i,
//! symplectic form omega = dq^i ∧ dp_i = -d theta. The musical isomorphism
//! flat(v) = i_v omega sends (dq, dp) to (-dp, dq); sharp is its inverse.
//! The Hamiltonian vector field solves i_{X_H} omega = dH, giving
//! qdot_i = dH/dp_i, pdot_i = -dH/dq_i.

use crate::symexpr::{Binding, EvalError, Expr};

/// Name of the i-th configuration variable (1-based in the text form).
pub fn q_var(i: usize) -> String {
    format!("q{}", i + 1)
}

/// Name of the i-th momentum variable.
pub fn p_var(i: usize) -> String {
    format!("p{}", i + 1)
}

/// The time variable name used by every time-dependent object.
pub const T_VAR: &str = "t";

/// Phase-space variable names in slot order `q1..qn, p1..pn`.
pub fn phase_vars(n: usize) -> Vec<String> {
    (0..n).map(q_var).chain((0..n).map(p_var)).collect()
}

/// A point of T*Q in the global chart, optionally carrying a time.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PhasePoint {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
    pub t: Option<f64>,
}

impl PhasePoint {
    pub fn new(q: Vec<f64>, p: Vec<f64>) -> PhasePoint {
        assert_eq!(q.len(), p.len(), "q and p dimensions differ");
        assert!(!q.is_empty(), "dimension must be at least 1");
        PhasePoint { q, p, t: None }
    }

    pub fn at_time(mut self, t: f64) -> PhasePoint {
        self.t = Some(t);
        self
    }

    pub fn dim(&self) -> usize {
        self.q.len()
    }

    /// Binding of `q1..qn, p1..pn` (and `t` when present).
    pub fn binding(&self) -> Binding {
        let mut b = Binding::new();
        for (i, (&q, &p)) in self.q.iter().zip(&self.p).enumerate() {
            b.set(&q_var(i), q);
            b.set(&p_var(i), p);
        }
        if let Some(t) = self.t {
            b.set(T_VAR, t);
        }
        b
    }

    /// Chart coordinates as a flat vector `[q, p]`.
    pub fn coords(&self) -> Vec<f64> {
        self.q.iter().chain(&self.p).copied().collect()
    }

    pub fn from_coords(x: &[f64]) -> PhasePoint {
        let n = x.len() / 2;
        PhasePoint::new(x[..n].to_vec(), x[n..].to_vec())
    }
}

/// Tangent vector to T*Q at `base`.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentVector {
    pub base: PhasePoint,
    pub dq: Vec<f64>,
    pub dp: Vec<f64>,
}

/// Cotangent vector to T*Q at `base`: `a` are dq-components, `b` are
/// dp-components.
#[derive(Debug, Clone, PartialEq)]
pub struct CotangentVector {
    pub base: PhasePoint,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

impl TangentVector {
    pub fn new(base: PhasePoint, dq: Vec<f64>, dp: Vec<f64>) -> TangentVector {
        assert_eq!(dq.len(), base.dim());
        assert_eq!(dp.len(), base.dim());
        TangentVector { base, dq, dp }
    }
}

impl CotangentVector {
    pub fn new(base: PhasePoint, a: Vec<f64>, b: Vec<f64>) -> CotangentVector {
        assert_eq!(a.len(), base.dim());
        assert_eq!(b.len(), base.dim());
        CotangentVector { base, a, b }
    }

    /// Natural pairing with a tangent vector at the same base point.
    pub fn pair(&self, v: &TangentVector) -> f64 {
        self.a
            .iter()
            .zip(&v.dq)
            .chain(self.b.iter().zip(&v.dp))
            .map(|(c, x)| c * x)
            .sum()
    }
}

/// flat(v) = i_v omega: (dq, dp) -> (a, b) = (-dp, dq).
pub fn flat(v: &TangentVector) -> CotangentVector {
    CotangentVector {
        base: v.base.clone(),
        a: v.dp.iter().map(|x| -x).collect(),
        b: v.dq.clone(),
    }
}

/// sharp = flat^{-1}: (a, b) -> (dq, dp) = (b, -a).
pub fn sharp(c: &CotangentVector) -> TangentVector {
    TangentVector {
        base: c.base.clone(),
        dq: c.b.clone(),
        dp: c.a.iter().map(|x| -x).collect(),
    }
}

/// Canonical Poisson bracket {f, g} = sum_k df/dq^k dg/dp_k - df/dp_k dg/dq^k.
pub fn poisson_bracket(f: &Expr, g: &Expr, n: usize) -> Expr {
    let mut acc = Expr::zero();
    for k in 0..n {
        let (qk, pk) = (q_var(k), p_var(k));
        acc = Expr::add(
            acc,
            Expr::sub(
                Expr::mul(f.diff(&qk), g.diff(&pk)),
                Expr::mul(f.diff(&pk), g.diff(&qk)),
            ),
        );
    }
    acc
}

/// X_H with i_{X_H} omega = dH: components are exact symbolic derivatives
/// of `h`.
#[derive(Debug, Clone)]
pub struct HamiltonianField {
    pub n: usize,
    pub h: Expr,
    /// qdot_i = dH/dp_i
    pub xq: Vec<Expr>,
    /// pdot_i = -dH/dq_i
    pub xp: Vec<Expr>,
}

impl HamiltonianField {
    pub fn field_exprs(&self) -> Vec<Expr> {
        self.xq.iter().chain(&self.xp).cloned().collect()
    }

    /// Numeric value of X_H at a point.
    pub fn at(&self, x: &PhasePoint) -> Result<TangentVector, EvalError> {
        let b = x.binding();
        let dq = self.xq.iter().map(|e| e.eval(&b)).collect::<Result<_, _>>()?;
        let dp = self.xp.iter().map(|e| e.eval(&b)).collect::<Result<_, _>>()?;
        Ok(TangentVector {
            base: x.clone(),
            dq,
            dp,
        })
    }
}

pub fn hamiltonian_field(h: &Expr, n: usize) -> HamiltonianField {
    let xq = (0..n).map(|i| h.diff(&p_var(i))).collect();
    let xp = (0..n).map(|i| Expr::neg(h.diff(&q_var(i)))).collect();
    HamiltonianField {
        n,
        h: h.clone(),
        xq,
        xp,
    }
}

/// Checks that Im X_H is Lagrangian in (TT*Q, d_T omega).
///
/// Tangent vectors to the section Im X_H at a sample x are u_j = (e_j, J e_j)
/// where J is the Jacobian of X_H in chart coordinates; d_T omega =
/// dqdot ∧ dp + dq ∧ dpdot is evaluated on all pairs. Returns the maximum
/// absolute value over pairs and samples, which must vanish.
pub fn check_imxh_lagrangian(
    h: &Expr,
    n: usize,
    samples: &[PhasePoint],
) -> Result<f64, EvalError> {
    let field = hamiltonian_field(h, n);
    let components = field.field_exprs();
    let vars = phase_vars(n);
    // symbolic Jacobian of X_H, 2n x 2n
    let jac: Vec<Vec<Expr>> = components
        .iter()
        .map(|f| vars.iter().map(|v| f.diff(v)).collect())
        .collect();

    let mut max_residual: f64 = 0.0;
    for x in samples {
        let b = x.binding();
        let mut j = vec![vec![0.0; 2 * n]; 2 * n];
        for (r, row) in jac.iter().enumerate() {
            for (c, e) in row.iter().enumerate() {
                j[r][c] = e.eval(&b)?;
            }
        }
        // u_a = (e_a, J e_a); d_T omega(u_a, u_b) =
        //   sum_i (Jq_a)_i (e_b p)_i - (Jq_b)_i (e_a p)_i
        //        + (e_a q)_i (Jp_b)_i - (e_b q)_i (Jp_a)_i
        for a in 0..2 * n {
            for bb in (a + 1)..2 * n {
                let mut val = 0.0;
                for i in 0..n {
                    let ea_q = if a == i { 1.0 } else { 0.0 };
                    let eb_q = if bb == i { 1.0 } else { 0.0 };
                    let ea_p = if a == n + i { 1.0 } else { 0.0 };
                    let eb_p = if bb == n + i { 1.0 } else { 0.0 };
                    let ja_qdot = j[i][a];
                    let jb_qdot = j[i][bb];
                    let ja_pdot = j[n + i][a];
                    let jb_pdot = j[n + i][bb];
                    val += ja_qdot * eb_p - jb_qdot * ea_p + ea_q * jb_pdot - eb_q * ja_pdot;
                }
                max_residual = max_residual.max(val.abs());
            }
        }
    }
    Ok(max_residual)
}
