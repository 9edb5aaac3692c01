//! Solver-agnostic intermediate representation for convex programs with a
//! quadratic objective, linear equalities, nonnegativity and second-order
//! cone constraints, together with the solve contract.
//!
//! Objective: `xᵀ Q x + cᵀ x + k` (note: no factor ½).
//! A second-order cone block `(r₁, .., r_k)` requires `r₁ >= ||(r₂, .., r_k)||`.

use std::time::Instant;

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{min_eigenvalue, soc_margin, symmetric_part};

/// `Σ coeff·x[var] + constant`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LinearExpr {
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl LinearExpr {
    pub fn new(terms: Vec<(usize, f64)>, constant: f64) -> Self {
        LinearExpr { terms, constant }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|&(i, a)| a * x[i]).sum::<f64>() + self.constant
    }

    pub fn var(i: usize) -> Self {
        LinearExpr::new(vec![(i, 1.0)], 0.0)
    }
}

/// `row · x = rhs`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Equality {
    pub row: Vec<(usize, f64)>,
    pub rhs: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConeKind {
    Nonneg,
    Soc,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConeConstraint {
    pub kind: ConeKind,
    pub rows: Vec<LinearExpr>,
}

impl ConeConstraint {
    pub fn nonneg(rows: Vec<LinearExpr>) -> Self {
        ConeConstraint {
            kind: ConeKind::Nonneg,
            rows,
        }
    }
    pub fn soc(rows: Vec<LinearExpr>) -> Self {
        ConeConstraint {
            kind: ConeKind::Soc,
            rows,
        }
    }

    /// Worst margin: smallest entry for nonneg blocks, `r₁ - ||r₂:ₖ||` for cones.
    pub fn margin(&self, x: &[f64]) -> f64 {
        let v: Vec<f64> = self.rows.iter().map(|r| r.eval(x)).collect();
        match self.kind {
            ConeKind::Nonneg => v.iter().copied().fold(f64::INFINITY, f64::min),
            ConeKind::Soc => soc_margin(&v),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Objective {
    pub quadratic: DMatrix<f64>,
    pub linear: DVector<f64>,
    pub constant: f64,
}

impl Objective {
    pub fn eval(&self, x: &[f64]) -> f64 {
        let v = DVector::from_column_slice(x);
        v.dot(&(&self.quadratic * &v)) + self.linear.dot(&v) + self.constant
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConicProgram {
    pub n_vars: usize,
    pub objective: Objective,
    pub equalities: Vec<Equality>,
    pub cones: Vec<ConeConstraint>,
    /// Optional human-readable variable names (used in dumps).
    pub var_names: Vec<String>,
}

impl ConicProgram {
    /// Validates the program and replaces the quadratic form by its
    /// symmetric part.
    pub fn new(
        n_vars: usize,
        objective: Objective,
        equalities: Vec<Equality>,
        cones: Vec<ConeConstraint>,
    ) -> Result<Self> {
        let q = &objective.quadratic;
        if q.nrows() != n_vars || q.ncols() != n_vars || objective.linear.len() != n_vars {
            return Err(Error::InvalidProgram(format!(
                "objective dimensions ({}x{}, {}) do not match {n_vars} variables",
                q.nrows(),
                q.ncols(),
                objective.linear.len()
            )));
        }
        let sym = symmetric_part(q);
        let min_eig = min_eigenvalue(&sym);
        if min_eig < -1e-9 * (1.0 + sym.amax()) {
            return Err(Error::NotPsd(format!(
                "quadratic objective has eigenvalue {min_eig:.3e}"
            )));
        }
        let check = |terms: &[(usize, f64)]| -> Result<()> {
            match terms.iter().find(|&&(i, a)| i >= n_vars || !a.is_finite()) {
                Some(&(i, a)) => Err(Error::InvalidProgram(format!(
                    "term ({i}, {a}) is out of range or non-finite"
                ))),
                None => Ok(()),
            }
        };
        for e in &equalities {
            check(&e.row)?;
        }
        for c in &cones {
            if c.rows.is_empty() {
                return Err(Error::InvalidProgram("empty cone block".into()));
            }
            for r in &c.rows {
                check(&r.terms)?;
            }
        }
        Ok(ConicProgram {
            n_vars,
            objective: Objective {
                quadratic: sym,
                ..objective
            },
            equalities,
            cones,
            var_names: Vec::new(),
        })
    }

    pub fn with_names(mut self, names: Vec<String>) -> Self {
        assert_eq!(names.len(), self.n_vars);
        self.var_names = names;
        self
    }

    /// Equivalent program with a linear objective: `xᵀQx` is moved into an
    /// epigraph variable `τ` (appended last) through the cone
    /// `(τ + 1, τ - 1, 2Fx) ∈ K₂` with `Q = FᵀF`.
    pub fn to_epigraph(&self) -> ConicProgram {
        let n = self.n_vars;
        let tau = n;
        let eig = self.objective.quadratic.clone().symmetric_eigen();
        let cutoff = 1e-14 * (1.0 + eig.eigenvalues.amax());
        let mut rows = vec![
            LinearExpr::new(vec![(tau, 1.0)], 1.0),
            LinearExpr::new(vec![(tau, 1.0)], -1.0),
        ];
        for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
            if lambda <= cutoff {
                continue;
            }
            let scale = 2.0 * lambda.sqrt();
            let terms = (0..n)
                .map(|i| (i, scale * eig.eigenvectors[(i, k)]))
                .filter(|&(_, a)| a != 0.0)
                .collect();
            rows.push(LinearExpr::new(terms, 0.0));
        }
        let mut cones = self.cones.clone();
        cones.push(ConeConstraint::soc(rows));
        let mut linear = DVector::zeros(n + 1);
        linear.rows_mut(0, n).copy_from(&self.objective.linear);
        linear[tau] = 1.0;
        ConicProgram {
            n_vars: n + 1,
            objective: Objective {
                quadratic: DMatrix::zeros(n + 1, n + 1),
                linear,
                constant: self.objective.constant,
            },
            equalities: self.equalities.clone(),
            cones,
            var_names: Vec::new(),
        }
    }

    /// Plain JSON rendering for offline cross-solving.
    pub fn to_dump(&self) -> ProgramDump {
        let q = &self.objective.quadratic;
        let mut quadratic = Vec::new();
        for j in 0..self.n_vars {
            for i in 0..=j {
                if q[(i, j)] != 0.0 {
                    quadratic.push((i, j, q[(i, j)]));
                }
            }
        }
        ProgramDump {
            n_vars: self.n_vars,
            objective_form: "x'Qx + c'x + k, Q given as upper triangle",
            quadratic_upper: quadratic,
            linear: self.objective.linear.iter().copied().collect(),
            constant: self.objective.constant,
            equalities: self.equalities.clone(),
            cones: self.cones.clone(),
            var_names: self.var_names.clone(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ProgramDump {
    pub n_vars: usize,
    pub objective_form: &'static str,
    pub quadratic_upper: Vec<(usize, usize, f64)>,
    pub linear: Vec<f64>,
    pub constant: f64,
    pub equalities: Vec<Equality>,
    pub cones: Vec<ConeConstraint>,
    pub var_names: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub abs: f64,
    pub rel: f64,
    pub max_iter: u32,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            abs: 1e-8,
            rel: 1e-8,
            max_iter: 200,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    Inaccurate,
    Failed,
}

/// Independently recomputed residuals of a candidate point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    /// Largest equality violation.
    pub equality: f64,
    /// Worst cone margin (negative means violated); `None` without cones.
    pub cone_slack: Option<f64>,
    pub objective: f64,
}

impl ResidualReport {
    /// Size of the primal violation (zero when feasible).
    pub fn violation(&self) -> f64 {
        self.equality.max(-self.cone_slack.unwrap_or(0.0)).max(0.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub status: SolveStatus,
    pub x: Vec<f64>,
    /// Objective evaluated at `x`.
    pub objective: f64,
    pub residuals: ResidualReport,
    pub dual_residual: f64,
    pub gap: f64,
    pub iterations: u32,
    pub solve_time: f64,
    pub solver_status: String,
}

pub fn validate(p: &ConicProgram, x: &[f64]) -> ResidualReport {
    assert_eq!(x.len(), p.n_vars);
    let equality = p
        .equalities
        .iter()
        .map(|e| (e.row.iter().map(|&(i, a)| a * x[i]).sum::<f64>() - e.rhs).abs())
        .fold(0.0, f64::max);
    let cone_slack = p
        .cones
        .iter()
        .map(|c| c.margin(x))
        .reduce(f64::min);
    ResidualReport {
        equality,
        cone_slack,
        objective: p.objective.eval(x),
    }
}

fn map_status(s: SolverStatus) -> SolveStatus {
    match s {
        SolverStatus::Solved => SolveStatus::Optimal,
        SolverStatus::AlmostSolved => SolveStatus::Inaccurate,
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
            SolveStatus::Infeasible
        }
        SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => SolveStatus::Unbounded,
        _ => SolveStatus::Failed,
    }
}

/// Solves `p` with the Clarabel interior-point method and rechecks the
/// returned point against the IR.
pub fn solve(p: &ConicProgram, tol: &Tolerances) -> Result<SolveResult> {
    let n = p.n_vars;
    let start = Instant::now();

    // P = 2Q, upper triangle
    let (mut pi, mut pj, mut pv) = (Vec::new(), Vec::new(), Vec::new());
    let q = &p.objective.quadratic;
    for j in 0..n {
        for i in 0..=j {
            let v = q[(i, j)];
            if v != 0.0 {
                pi.push(i);
                pj.push(j);
                pv.push(2.0 * v);
            }
        }
    }
    let pmat = CscMatrix::new_from_triplets(n, n, pi, pj, pv);
    let lin: Vec<f64> = p.objective.linear.iter().copied().collect();

    // A x + s = b, s ∈ K
    let (mut ai, mut aj, mut av) = (Vec::new(), Vec::new(), Vec::new());
    let mut b = Vec::new();
    let mut cones: Vec<SupportedConeT<f64>> = Vec::new();
    if !p.equalities.is_empty() {
        for e in &p.equalities {
            let r = b.len();
            for &(i, a) in &e.row {
                ai.push(r);
                aj.push(i);
                av.push(a);
            }
            b.push(e.rhs);
        }
        cones.push(SupportedConeT::ZeroConeT(p.equalities.len()));
    }
    for c in &p.cones {
        for row in &c.rows {
            let r = b.len();
            for &(i, a) in &row.terms {
                ai.push(r);
                aj.push(i);
                av.push(-a);
            }
            b.push(row.constant);
        }
        let k = c.rows.len();
        cones.push(match c.kind {
            ConeKind::Soc if k >= 2 => SupportedConeT::SecondOrderConeT(k),
            _ => SupportedConeT::NonnegativeConeT(k),
        });
    }
    let amat = CscMatrix::new_from_triplets(b.len(), n, ai, aj, av);

    let settings = DefaultSettingsBuilder::default()
        .verbose(false)
        .max_iter(tol.max_iter)
        .tol_gap_abs(tol.abs)
        .tol_gap_rel(tol.rel)
        .tol_feas(tol.abs.min(tol.rel))
        .max_threads(1)
        .build()
        .map_err(|e| Error::Solver(format!("settings: {e}")))?;
    let mut solver = DefaultSolver::new(&pmat, &lin, &amat, &b, &cones, settings)
        .map_err(|e| Error::Solver(format!("setup: {e:?}")))?;
    solver.solve();

    let sol = &solver.solution;
    let mut status = map_status(sol.status);
    let x = sol.x.clone();
    let residuals = if x.iter().all(|v| v.is_finite()) {
        validate(p, &x)
    } else {
        status = SolveStatus::Failed;
        ResidualReport {
            equality: f64::NAN,
            cone_slack: None,
            objective: f64::NAN,
        }
    };
    if status == SolveStatus::Optimal {
        let scale = 1.0
            + b.iter().fold(0.0_f64, |a, v| a.max(v.abs()))
            + x.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        if residuals.violation() > 10.0 * tol.abs.max(tol.rel) * scale {
            status = SolveStatus::Inaccurate;
        }
    }
    Ok(SolveResult {
        status,
        objective: residuals.objective,
        x,
        residuals,
        dual_residual: solver.info.res_dual,
        gap: solver.info.gap_abs,
        iterations: solver.info.iterations,
        solve_time: start.elapsed().as_secs_f64(),
        solver_status: format!("{:?}", sol.status),
    })
}
