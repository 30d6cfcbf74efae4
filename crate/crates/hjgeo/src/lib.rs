//! Computable symplectic geometry on cotangent bundles.
//!
//! `hjgeo` turns the geometric formulation of the Hamilton-Jacobi equation
//! into numbers: canonical symplectic structure on T*Q, Lagrangian
//! submanifold tests via Poisson brackets, the three equivalent
//! Hamilton-Jacobi conditions as residuals, Lagrange-multiplier treatment of
//! holonomic constraints, Chetaev-type nonholonomic dynamics, and
//! time-dependent variants driven by families of 1-forms. A scenario-driven
//! CLI (`hjgeo`) runs bundled and user-supplied verification suites.
//!
//! The narrative guide lives in `book/`; each chapter's snippets are the
//! crate's runnable examples.
//!
//! ```
//! use hjgeo::symexpr::{parse, Binding};
//! use hjgeo::geometry::hamiltonian_field;
//!
//! let h = parse("(q1^2 + p1^2)/2").unwrap();
//! let xh = hamiltonian_field(&h, 1);
//! let at: Binding = [("q1", 0.3), ("p1", 0.8)].into_iter().collect();
//! // X_H = (dH/dp, -dH/dq) = (p, -q)
//! assert_eq!(xh.xq[0].eval(&at).unwrap(), 0.8);
//! assert_eq!(xh.xp[0].eval(&at).unwrap(), -0.3);
//! ```

pub mod dynamics;
pub mod geometry;
pub mod hj_autonomous;
pub mod nonholonomic;
pub mod numeric;
pub mod sampling;
pub mod scenario;
pub mod submanifold;
pub mod symexpr;
pub mod timedep;
