//! Scenario files: JSON descriptions of verification suites, and the runner
//! that turns them into reports.
//!
//! A scenario names a kind (which verification suite to run), the geometric
//! data as expression strings in the DSL, and a numeric block with
//! tolerances, grids and seeds. Reports are deterministic byte-for-byte for
//! a fixed scenario, seed and version: sampling is low-discrepancy (seeded),
//! and no wall-clock data enters the report body.

use crate::dynamics::flow;
use crate::geometry::{hamiltonian_field, phase_vars};
use crate::hj_autonomous::{
    classical_hj_residual_from_gamma, default_lambda_grid, hj_residuals, holonomic_extend,
    holonomic_hj_check, HolonomicSystem,
};
use crate::nonholonomic::{
    build_hamiltonian_system, distribution_hj_check, FlowProbe, LinearDistribution,
    MechanicalLagrangian, NonholonomicError, NonholonomicSystem,
};
use crate::sampling::halton_box;
use crate::submanifold::{image_of_one_form, ConstraintSubmanifold, GraphSubmanifoldOfQ, OneFormFamily};
use crate::symexpr::{parse, Expr};
use crate::timedep::{
    max_moi_residual, sigma_membership, timedep_hj_residual, timedep_holonomic_check,
    timedep_nonholonomic_check, TimeDependentFamily,
};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    /// Bad scenario file; the message names the offending field.
    #[error("{0}")]
    Validation(String),
    /// Blow-up, singular solve, or domain violation while running.
    #[error("{0}")]
    Numerical(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    AutonomousHj,
    Holonomic,
    Nonholonomic,
    TimedepHj,
    TimedepHolonomic,
    TimedepNonholonomic,
    LagrangianTest,
}

impl Kind {
    pub const ALL: [Kind; 7] = [
        Kind::AutonomousHj,
        Kind::Holonomic,
        Kind::Nonholonomic,
        Kind::TimedepHj,
        Kind::TimedepHolonomic,
        Kind::TimedepNonholonomic,
        Kind::LagrangianTest,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Kind::AutonomousHj => "autonomous_hj",
            Kind::Holonomic => "holonomic",
            Kind::Nonholonomic => "nonholonomic",
            Kind::TimedepHj => "timedep_hj",
            Kind::TimedepHolonomic => "timedep_holonomic",
            Kind::TimedepNonholonomic => "timedep_nonholonomic",
            Kind::LagrangianTest => "lagrangian_test",
        }
    }

    pub fn from_str(s: &str) -> Option<Kind> {
        Kind::ALL.iter().copied().find(|k| k.as_str() == s)
    }
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct NumericBlock {
    pub tol: Option<f64>,
    pub gap_tol: Option<f64>,
    pub h: Option<f64>,
    pub steps: Option<usize>,
    pub t_grid: Option<Vec<f64>>,
    pub lambda_grid: Option<Vec<Vec<f64>>>,
    pub seed: Option<u64>,
    pub samples: Option<usize>,
    pub half_width: Option<f64>,
    pub energy: Option<f64>,
    pub q0: Option<Vec<f64>>,
    pub t0: Option<f64>,
    pub x0: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    name: String,
    #[serde(default)]
    description: String,
    kind: String,
    dimension: usize,
    hamiltonian: Option<String>,
    constraints: Option<Vec<String>>,
    section: Option<Vec<String>>,
    generating_function: Option<String>,
    graph: Option<BTreeMap<String, String>>,
    mass: Option<Vec<Vec<String>>>,
    potential: Option<String>,
    mu: Option<Vec<Vec<String>>>,
    #[serde(default)]
    numeric: NumericBlock,
}

/// A validated scenario with all expressions parsed.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub description: String,
    pub kind: Kind,
    pub n: usize,
    pub hamiltonian: Option<Expr>,
    pub constraints: Option<Vec<Expr>>,
    pub section: Option<Vec<Expr>>,
    pub generating_function: Option<Expr>,
    pub graph: Option<Vec<(usize, Expr)>>,
    pub mass: Option<Vec<Vec<Expr>>>,
    pub potential: Option<Expr>,
    pub mu: Option<Vec<Vec<Expr>>>,
    pub numeric: NumericBlock,
}

fn parse_field(field: &str, text: &str) -> Result<Expr, ScenarioError> {
    parse(text).map_err(|e| ScenarioError::Validation(format!("{field}: {e}")))
}

fn parse_list(field: &str, texts: &[String]) -> Result<Vec<Expr>, ScenarioError> {
    texts
        .iter()
        .enumerate()
        .map(|(i, t)| parse_field(&format!("{field}[{i}]"), t))
        .collect()
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Scenario, ScenarioError> {
        let raw: RawScenario = serde_json::from_str(text)
            .map_err(|e| ScenarioError::Validation(format!("scenario: {e}")))?;
        Scenario::from_raw(raw)
    }

    fn from_raw(raw: RawScenario) -> Result<Scenario, ScenarioError> {
        let kind = Kind::from_str(&raw.kind).ok_or_else(|| {
            ScenarioError::Validation(format!(
                "kind: unknown value `{}` (expected one of {})",
                raw.kind,
                Kind::ALL.map(Kind::as_str).join(", ")
            ))
        })?;
        if raw.dimension == 0 {
            return Err(ScenarioError::Validation(
                "dimension: must be at least 1".into(),
            ));
        }
        let n = raw.dimension;

        let hamiltonian = raw
            .hamiltonian
            .as_deref()
            .map(|t| parse_field("hamiltonian", t))
            .transpose()?;
        let constraints = raw
            .constraints
            .as_deref()
            .map(|t| parse_list("constraints", t))
            .transpose()?;
        let section = raw
            .section
            .as_deref()
            .map(|t| parse_list("section", t))
            .transpose()?;
        let generating_function = raw
            .generating_function
            .as_deref()
            .map(|t| parse_field("generating_function", t))
            .transpose()?;
        let graph = raw
            .graph
            .as_ref()
            .map(|g| {
                g.iter()
                    .map(|(key, text)| {
                        let idx: usize = key
                            .strip_prefix('q')
                            .and_then(|s| s.parse::<usize>().ok())
                            .filter(|&i| i >= 1 && i <= n)
                            .ok_or_else(|| {
                                ScenarioError::Validation(format!(
                                    "graph.{key}: key must be a coordinate q1..q{n}"
                                ))
                            })?;
                        Ok((idx - 1, parse_field(&format!("graph.{key}"), text)?))
                    })
                    .collect::<Result<Vec<_>, ScenarioError>>()
            })
            .transpose()?;
        let mass = raw
            .mass
            .as_ref()
            .map(|m| {
                m.iter()
                    .enumerate()
                    .map(|(i, row)| parse_list(&format!("mass[{i}]"), row))
                    .collect::<Result<Vec<_>, _>>()
            })
            .transpose()?;
        let potential = raw
            .potential
            .as_deref()
            .map(|t| parse_field("potential", t))
            .transpose()?;
        let mu = raw
            .mu
            .as_ref()
            .map(|m| {
                m.iter()
                    .enumerate()
                    .map(|(i, row)| parse_list(&format!("mu[{i}]"), row))
                    .collect::<Result<Vec<_>, _>>()
            })
            .transpose()?;

        let sc = Scenario {
            name: raw.name,
            description: raw.description,
            kind,
            n,
            hamiltonian,
            constraints,
            section,
            generating_function,
            graph,
            mass,
            potential,
            mu,
            numeric: raw.numeric,
        };
        sc.validate()?;
        Ok(sc)
    }

    fn require(&self, present: bool, field: &str) -> Result<(), ScenarioError> {
        if present {
            Ok(())
        } else {
            Err(ScenarioError::Validation(format!(
                "{field}: missing (required for kind {})",
                self.kind.as_str()
            )))
        }
    }

    fn validate(&self) -> Result<(), ScenarioError> {
        if self.name.is_empty() {
            return Err(ScenarioError::Validation("name: must be non-empty".into()));
        }
        if let Some(s) = &self.section {
            if s.len() != self.n {
                return Err(ScenarioError::Validation(format!(
                    "section: expected {} components, found {}",
                    self.n,
                    s.len()
                )));
            }
        }
        if let Some(m) = &self.mass {
            if m.len() != self.n || m.iter().any(|r| r.len() != self.n) {
                return Err(ScenarioError::Validation(format!(
                    "mass: expected a {n} x {n} matrix",
                    n = self.n
                )));
            }
        }
        if let Some(m) = &self.mu {
            if m.iter().any(|r| r.len() != self.n) {
                return Err(ScenarioError::Validation(format!(
                    "mu: every row needs {} components",
                    self.n
                )));
            }
        }
        match self.kind {
            Kind::LagrangianTest => self.require(
                self.constraints.is_some() || self.section.is_some(),
                "constraints (or section)",
            )?,
            Kind::AutonomousHj => {
                self.require(self.hamiltonian.is_some(), "hamiltonian")?;
                self.require(
                    self.constraints.is_some()
                        || self.section.is_some()
                        || self.generating_function.is_some(),
                    "constraints (or section or generating_function)",
                )?;
            }
            Kind::Holonomic | Kind::TimedepHolonomic => {
                self.require(self.graph.is_some(), "graph")?;
                self.require(self.hamiltonian.is_some(), "hamiltonian")?;
                self.require(self.generating_function.is_some(), "generating_function")?;
            }
            Kind::Nonholonomic | Kind::TimedepNonholonomic => {
                self.require(self.mass.is_some(), "mass")?;
                self.require(self.mu.is_some(), "mu")?;
                self.require(
                    self.section.is_some() || self.generating_function.is_some(),
                    "section (or generating_function)",
                )?;
            }
            Kind::TimedepHj => {
                self.require(self.hamiltonian.is_some(), "hamiltonian")?;
                self.require(self.generating_function.is_some(), "generating_function")?;
            }
        }
        Ok(())
    }

    // numeric defaults
    pub fn tol(&self) -> f64 {
        self.numeric.tol.unwrap_or(1e-8)
    }
    pub fn gap_tol(&self) -> f64 {
        self.numeric.gap_tol.unwrap_or(1e-6)
    }
    pub fn seed(&self) -> u64 {
        self.numeric.seed.unwrap_or(0)
    }
    pub fn samples(&self) -> usize {
        self.numeric.samples.unwrap_or(100)
    }
    pub fn half_width(&self) -> f64 {
        self.numeric.half_width.unwrap_or(1.5)
    }
    pub fn t_grid(&self) -> Vec<f64> {
        self.numeric
            .t_grid
            .clone()
            .unwrap_or_else(|| vec![0.5, 1.0, 2.0])
    }
    pub fn step_size(&self) -> f64 {
        self.numeric.h.unwrap_or(1e-3)
    }
    pub fn steps(&self) -> usize {
        self.numeric.steps.unwrap_or(500)
    }
}

/// One residual check inside a report.
#[derive(Debug, Clone, Serialize)]
pub struct CheckRecord {
    pub id: String,
    pub residual: f64,
    pub tol: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub name: String,
    pub kind: Kind,
    pub seed: u64,
    pub checks: Vec<CheckRecord>,
    pub verdict: String,
}

impl Report {
    fn new(sc: &Scenario, seed: u64, checks: Vec<CheckRecord>) -> Report {
        let pass = checks.iter().all(|c| c.pass);
        Report {
            name: sc.name.clone(),
            kind: sc.kind,
            seed,
            checks,
            verdict: if pass { "pass" } else { "fail" }.into(),
        }
    }

    pub fn passed(&self) -> bool {
        self.verdict == "pass"
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serialization");
        s.push('\n');
        s
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("check,residual,tol,pass\n");
        for c in &self.checks {
            out.push_str(&format!(
                "{},{:.16e},{:.16e},{}\n",
                c.id, c.residual, c.tol, c.pass
            ));
        }
        out
    }
}

fn check(id: &str, residual: f64, tol: f64) -> CheckRecord {
    CheckRecord {
        id: id.into(),
        residual,
        tol,
        pass: residual.is_finite() && residual <= tol,
    }
}

fn numerical<E: std::fmt::Display>(e: E) -> ScenarioError {
    ScenarioError::Numerical(e.to_string())
}

fn build_submanifold(sc: &Scenario) -> Result<ConstraintSubmanifold, ScenarioError> {
    if let Some(cs) = &sc.constraints {
        Ok(ConstraintSubmanifold::new(sc.n, cs.clone()))
    } else if let Some(s) = &sc.section {
        Ok(image_of_one_form(&OneFormFamily::new(s.clone()), None))
    } else if let Some(g) = &sc.generating_function {
        Ok(image_of_one_form(&OneFormFamily::exact(g, sc.n), None))
    } else {
        Err(ScenarioError::Validation(
            "constraints: missing submanifold description".into(),
        ))
    }
}

fn build_nonholonomic(sc: &Scenario) -> Result<(NonholonomicSystem, OneFormFamily), ScenarioError> {
    let lag = MechanicalLagrangian::new(
        sc.mass.clone().unwrap(),
        sc.potential.clone().unwrap_or_else(Expr::zero),
    )
    .map_err(numerical)?;
    let dist = LinearDistribution::new(sc.n, sc.mu.clone().unwrap()).map_err(numerical)?;
    let sys = build_hamiltonian_system(&lag, &dist).map_err(numerical)?;
    let gamma = match (&sc.section, &sc.generating_function) {
        (Some(s), _) => OneFormFamily::new(s.clone()),
        (None, Some(w)) => OneFormFamily::exact(w, sc.n),
        (None, None) => unreachable!("validated"),
    };
    Ok((sys, gamma))
}

fn build_holonomic(sc: &Scenario) -> Result<HolonomicSystem, ScenarioError> {
    let n_sub = GraphSubmanifoldOfQ::new(sc.n, sc.graph.clone().unwrap());
    holonomic_extend(&n_sub, sc.hamiltonian.as_ref().unwrap()).map_err(numerical)
}

fn lambda_grid_for(sc: &Scenario, fiber_dim: usize) -> Vec<Vec<f64>> {
    sc.numeric
        .lambda_grid
        .clone()
        .unwrap_or_else(|| default_lambda_grid(fiber_dim))
}

fn flow_probe(sc: &Scenario) -> Option<FlowProbe> {
    sc.numeric.q0.as_ref().map(|q0| FlowProbe {
        q0: q0.clone(),
        t0: sc.numeric.t0.unwrap_or(0.0),
        h: sc.step_size(),
        steps: sc.steps(),
    })
}

/// Runs the scenario's suite. `tol_override` and `seed_override` come from
/// the CLI flags.
pub fn run_scenario(
    sc: &Scenario,
    tol_override: Option<f64>,
    seed_override: Option<u64>,
) -> Result<Report, ScenarioError> {
    let tol = tol_override.unwrap_or_else(|| sc.tol());
    let seed = seed_override.unwrap_or_else(|| sc.seed());
    let gap_tol = sc.gap_tol();
    let mut checks = Vec::new();

    match sc.kind {
        Kind::LagrangianTest => {
            let sub = build_submanifold(sc)?;
            let pts = sub.sample_points(sc.samples(), seed, sc.half_width());
            if pts.is_empty() {
                return Err(ScenarioError::Numerical(
                    "no sample points converged onto the submanifold".into(),
                ));
            }
            let rep = sub.is_lagrangian(&pts, tol.max(1e-10)).map_err(numerical)?;
            checks.push(check("bracket_residual", rep.max_bracket_residual, tol));
        }
        Kind::AutonomousHj => {
            let h = sc.hamiltonian.as_ref().unwrap();
            let sub = build_submanifold(sc)?;
            let pts = sub.sample_points(sc.samples(), seed, sc.half_width());
            if pts.is_empty() {
                return Err(ScenarioError::Numerical(
                    "no sample points converged onto the submanifold".into(),
                ));
            }
            let rep = hj_residuals(h, &sub, &pts).map_err(numerical)?;
            checks.push(check("pullback", rep.max_pullback(), tol));
            checks.push(check("annihilator", rep.max_annihilator(), tol));
            checks.push(check("tangency", rep.max_tangency(), tol));
            checks.push(check("h_spread", rep.h_spread, tol));
            if let Some(g) = &sc.generating_function {
                let gamma = OneFormFamily::exact(g, sc.n);
                let qs = halton_box(sc.samples(), sc.n, -sc.half_width(), sc.half_width(), seed);
                let r = classical_hj_residual_from_gamma(h, &gamma, sc.numeric.energy, &qs)
                    .map_err(numerical)?;
                checks.push(check("classical", r, tol));
            }
        }
        Kind::Holonomic => {
            let sys = build_holonomic(sc)?;
            let m = sys.n_sub.base_dim();
            let qs = halton_box(sc.samples(), m, -sc.half_width(), sc.half_width(), seed);
            let grid = lambda_grid_for(sc, sys.n_sub.fiber.len());
            let rep = holonomic_hj_check(
                &sys,
                sc.generating_function.as_ref().unwrap(),
                &qs,
                &grid,
                tol,
            )
            .map_err(numerical)?;
            checks.push(check("base_spread", rep.base_residual, tol));
            checks.push(check("extended", rep.extended_residual, tol));
            checks.push(check(
                "agreement",
                if rep.agreement { 0.0 } else { 1.0 },
                0.5,
            ));
        }
        Kind::Nonholonomic => {
            let (sys, gamma) = build_nonholonomic(sc)?;
            let qs = halton_box(sc.samples(), sc.n, -sc.half_width(), sc.half_width(), seed);
            match sys.check_compatibility(&qs) {
                Ok(_) => checks.push(check("compatibility", 0.0, 0.5)),
                Err(NonholonomicError::IncompatibleConstraints { .. }) => {
                    checks.push(check("compatibility", 1.0, 0.5))
                }
                Err(e) => return Err(numerical(e)),
            }
            let probe = flow_probe(sc);
            let rep = distribution_hj_check(&sys, &gamma, &qs, probe.as_ref()).map_err(numerical)?;
            checks.push(check("constraint", rep.r_constraint, tol));
            checks.push(check("dgamma", rep.r_dgamma, tol));
            checks.push(check("hj", rep.r_hj, tol));
            checks.push(check("tangency", rep.r_tangency, tol.max(1e-7)));
            if let Some(gap) = rep.flow_gap {
                checks.push(check("flow_gap", gap, gap_tol));
            }
        }
        Kind::TimedepHj => {
            let h = sc.hamiltonian.as_ref().unwrap();
            let w = sc.generating_function.as_ref().unwrap();
            let t_grid = sc.t_grid();
            let qs = halton_box(sc.samples(), sc.n, -sc.half_width(), sc.half_width(), seed);
            let rep = timedep_hj_residual(h, w, &t_grid, &qs).map_err(numerical)?;
            checks.push(check("w_spread", rep.max_spread, tol));
            let fam = TimeDependentFamily::exact(w, sc.n);
            let moi = max_moi_residual(h, &fam, &t_grid, &qs).map_err(numerical)?;
            checks.push(check("moi", moi, tol));
            let mut sigma: f64 = 0.0;
            for &t in &t_grid {
                sigma = sigma.max(sigma_membership(h, &fam, t, &qs).map_err(numerical)?);
            }
            checks.push(check("sigma", sigma, tol));
        }
        Kind::TimedepHolonomic => {
            let sys = build_holonomic(sc)?;
            let m = sys.n_sub.base_dim();
            let qs = halton_box(sc.samples(), m, -sc.half_width(), sc.half_width(), seed);
            let grid = lambda_grid_for(sc, sys.n_sub.fiber.len());
            let rep = timedep_holonomic_check(
                &sys,
                sc.generating_function.as_ref().unwrap(),
                &sc.t_grid(),
                &qs,
                &grid,
                tol,
            )
            .map_err(numerical)?;
            checks.push(check("base_spread", rep.max_base_spread, tol));
            checks.push(check("extended", rep.max_extended, tol));
            checks.push(check(
                "agreement",
                if rep.agreement { 0.0 } else { 1.0 },
                0.5,
            ));
        }
        Kind::TimedepNonholonomic => {
            let (sys, gamma) = build_nonholonomic(sc)?;
            let fam = TimeDependentFamily::new(gamma);
            let qs = halton_box(sc.samples(), sc.n, -sc.half_width(), sc.half_width(), seed);
            let probe = flow_probe(sc);
            let rep = timedep_nonholonomic_check(
                &sys,
                &fam,
                &sc.t_grid(),
                &qs,
                probe.as_ref(),
                1e-8,
            )
            .map_err(numerical)?;
            checks.push(check("constraint", rep.r_constraint, tol));
            checks.push(check("distribution", rep.r_distribution, tol));
            checks.push(check("membership", rep.r_membership, tol.max(1e-7)));
            if let Some(gap) = rep.flow_gap {
                checks.push(check("flow_gap", gap, gap_tol));
            }
        }
    }

    Ok(Report::new(sc, seed, checks))
}

/// Integrates the scenario's dynamical field (X_H, or xi_nh for the
/// nonholonomic kinds) from `numeric.x0`, returning the trajectory CSV.
pub fn run_flow(sc: &Scenario, tmax: f64, h: f64) -> Result<String, ScenarioError> {
    if tmax <= 0.0 || h <= 0.0 {
        return Err(ScenarioError::Validation(
            "flow: tmax and h must be positive".into(),
        ));
    }
    let x0 = sc.numeric.x0.clone().ok_or_else(|| {
        ScenarioError::Validation("numeric.x0: missing (required for flow)".into())
    })?;
    if x0.len() != 2 * sc.n {
        return Err(ScenarioError::Validation(format!(
            "numeric.x0: expected {} coordinates (q then p), found {}",
            2 * sc.n,
            x0.len()
        )));
    }
    let field = match sc.kind {
        Kind::Nonholonomic | Kind::TimedepNonholonomic => {
            let (sys, _) = build_nonholonomic(sc)?;
            sys.xi_field_exprs()
        }
        Kind::Holonomic | Kind::TimedepHolonomic => {
            let sys = build_holonomic(sc)?;
            hamiltonian_field(&sys.h_full, sc.n).field_exprs()
        }
        _ => {
            let h_expr = sc.hamiltonian.as_ref().ok_or_else(|| {
                ScenarioError::Validation("hamiltonian: missing (required for flow)".into())
            })?;
            hamiltonian_field(h_expr, sc.n).field_exprs()
        }
    };
    let steps = (tmax / h).round().max(1.0) as usize;
    let t0 = sc.numeric.t0.unwrap_or(0.0);
    let traj = flow(&field, &phase_vars(sc.n), &x0, t0, h, steps).map_err(numerical)?;
    Ok(traj.to_csv())
}

/// Bundled scenarios shipped with the binary: (file name, JSON text).
pub fn bundled() -> Vec<(&'static str, &'static str)> {
    vec![
        (
            "oscillator_hj.json",
            include_str!("../scenarios/oscillator_hj.json"),
        ),
        (
            "free_particle_ds.json",
            include_str!("../scenarios/free_particle_ds.json"),
        ),
        (
            "closed_form.json",
            include_str!("../scenarios/closed_form.json"),
        ),
        (
            "nonclosed_form.json",
            include_str!("../scenarios/nonclosed_form.json"),
        ),
        (
            "holonomic_diag.json",
            include_str!("../scenarios/holonomic_diag.json"),
        ),
        (
            "nonholonomic_skate.json",
            include_str!("../scenarios/nonholonomic_skate.json"),
        ),
        (
            "timedep_free.json",
            include_str!("../scenarios/timedep_free.json"),
        ),
        (
            "timedep_holonomic_flat.json",
            include_str!("../scenarios/timedep_holonomic_flat.json"),
        ),
        (
            "timedep_skate.json",
            include_str!("../scenarios/timedep_skate.json"),
        ),
    ]
}
