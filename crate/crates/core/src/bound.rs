//! Lower- and upper-bound programs over causal affine Youla parameters.
//!
//! With `u = QPξ` the expected cost is the trace form
//! `tr(PᵀQᵀRQPM + 2GᵀR_xBQPM + GᵀR_xGM)`, `R = R_u + BᵀR_xB`.
//!
//! The lower bound replaces the almost-sure constraint
//! `F_x x + F_u u + F_ξ ξ <= 0` by its moment shadow: a matrix `Z` with
//! `(F_u + F_xB)QP + F_xG + F_ξ + Z = 0`, `WMZᵀ ⪰_{K₂} 0` and `e₁ᵀMZᵀ >= 0`,
//! and optimizes over the pattern of the partially nested relaxation.
//!
//! The upper bound keeps the same objective but enforces every constraint
//! row robustly over the support ellipsoid via conic duality, over a
//! pattern the original information structure can implement.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::conic::{
    solve, ConeConstraint, ConicProgram, Equality, LinearExpr, Objective, SolveResult, SolveStatus,
    Tolerances,
};
use crate::disturbance::{DisturbanceModel, MomentEstimate};
use crate::error::{Error, Result};
use crate::graph::{
    is_partially_nested, largest_pn_subgraph, relax_information, relax_information_forced,
    InfoGraph,
};
use crate::linalg::{min_eigenvalue, symmetric_part, ZeroTest};
use crate::policy::{sparsity_pattern, youla_to_feedback, SparsityPattern};
use crate::system::{check_local_authority, coupling, stack_system, LtvSystem, NearThreshold, StackedSystem};

/// Rows of `F_x x + F_u u + F_ξ ξ <= 0`.
#[derive(Clone, Debug)]
pub struct ConstraintData {
    pub fx: DMatrix<f64>,
    pub fu: DMatrix<f64>,
    pub fxi: DMatrix<f64>,
}

impl ConstraintData {
    pub fn new(fx: DMatrix<f64>, fu: DMatrix<f64>, fxi: DMatrix<f64>) -> Result<Self> {
        let m = fx.nrows();
        if fu.nrows() != m || fxi.nrows() != m {
            return Err(Error::Dimension(format!(
                "constraint blocks have {}, {}, {} rows",
                fx.nrows(),
                fu.nrows(),
                fxi.nrows()
            )));
        }
        Ok(ConstraintData { fx, fu, fxi })
    }

    pub fn none(stk: &StackedSystem) -> Self {
        ConstraintData {
            fx: DMatrix::zeros(0, stk.n_states()),
            fu: DMatrix::zeros(0, stk.n_inputs()),
            fxi: DMatrix::zeros(0, stk.n_disturbances()),
        }
    }

    pub fn rows(&self) -> usize {
        self.fx.nrows()
    }

    fn check(&self, stk: &StackedSystem) -> Result<()> {
        let want = (stk.n_states(), stk.n_inputs(), stk.n_disturbances());
        let got = (self.fx.ncols(), self.fu.ncols(), self.fxi.ncols());
        if want != got {
            return Err(Error::Dimension(format!(
                "constraint columns (F_x, F_u, F_ξ) = {got:?}, expected {want:?}"
            )));
        }
        Ok(())
    }

    /// Row values `F_x x + F_u u + F_ξ ξ` for one trajectory.
    pub fn evaluate(&self, x: &DVector<f64>, u: &DVector<f64>, xi: &DVector<f64>) -> DVector<f64> {
        &self.fx * x + &self.fu * u + &self.fxi * xi
    }
}

/// Quadratic cost weights on the stacked state and input trajectories.
#[derive(Clone, Debug)]
pub struct CostData {
    pub rx: DMatrix<f64>,
    pub ru: DMatrix<f64>,
}

impl CostData {
    pub fn new(rx: DMatrix<f64>, ru: DMatrix<f64>) -> Result<Self> {
        let fix = |m: DMatrix<f64>, name: &str| -> Result<DMatrix<f64>> {
            if !m.is_square() {
                return Err(Error::Dimension(format!("{name} must be square")));
            }
            let sym = symmetric_part(&m);
            let min_eig = min_eigenvalue(&sym);
            if min_eig < -1e-9 {
                return Err(Error::NotPsd(format!("{name} has eigenvalue {min_eig:.3e}")));
            }
            Ok(sym)
        };
        Ok(CostData {
            rx: fix(rx, "R_x")?,
            ru: fix(ru, "R_u")?,
        })
    }

    fn check(&self, stk: &StackedSystem) -> Result<()> {
        if self.rx.nrows() != stk.n_states() || self.ru.nrows() != stk.n_inputs() {
            return Err(Error::Dimension(format!(
                "cost matrices are {}x{} and {}x{}, expected {n}x{n} and {k}x{k}",
                self.rx.nrows(),
                self.rx.ncols(),
                self.ru.nrows(),
                self.ru.ncols(),
                n = stk.n_states(),
                k = stk.n_inputs()
            )));
        }
        Ok(())
    }

    /// `xᵀR_x x + uᵀR_u u`.
    pub fn trajectory_cost(&self, x: &DVector<f64>, u: &DVector<f64>) -> f64 {
        x.dot(&(&self.rx * x)) + u.dot(&(&self.ru * u))
    }
}

/// Run-time options shared by the bound pipeline and simulation.
#[derive(Clone, Debug)]
pub struct Options {
    pub tol: Tolerances,
    pub zero: ZeroTest,
    pub seed: u64,
    pub samples: usize,
    /// Pattern graph for the upper bound; must be partially nested and a
    /// subgraph of the information graph.
    pub upper_graph: Option<InfoGraph>,
    /// Proceed when the local-authority check fails.
    pub force: bool,
    /// Robust constraint rows of the upper bound are tightened to
    /// `max_Ξ a_i(Q)ᵀξ <= -backoff·(1 + ||row||∞)`.
    pub robust_backoff: f64,
}

impl Default for Options {
    fn default() -> Self {
        Options {
            tol: Tolerances::default(),
            zero: ZeroTest::default(),
            seed: 0,
            samples: 100_000,
            upper_graph: None,
            force: false,
            robust_backoff: 1e-7,
        }
    }
}

/// A complete bound problem.
#[derive(Clone, Debug)]
pub struct Problem {
    pub system: LtvSystem,
    pub graph: InfoGraph,
    pub disturbance: DisturbanceModel,
    pub constraints: ConstraintData,
    pub cost: CostData,
    pub options: Options,
}

/// Derived data shared by every stage.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub stacked: StackedSystem,
    pub moments: MomentEstimate,
    pub support: DMatrix<f64>,
}

impl Prepared {
    pub fn m(&self) -> &DMatrix<f64> {
        &self.moments.matrix
    }
}

impl Problem {
    pub fn prepare(&self) -> Result<Prepared> {
        if self.graph.nodes() != self.system.subsystems() {
            return Err(Error::Dimension(format!(
                "graph has {} nodes, system has {} subsystems",
                self.graph.nodes(),
                self.system.subsystems()
            )));
        }
        let stacked = stack_system(&self.system);
        let d = self.system.n_xi() * self.system.horizon();
        if self.disturbance.dim() != d {
            return Err(Error::Dimension(format!(
                "disturbance trajectory has dimension {}, expected n_ξ·T = {d}",
                self.disturbance.dim()
            )));
        }
        self.constraints.check(&stacked)?;
        self.cost.check(&stacked)?;
        let moments = self.disturbance.moment_matrix()?;
        let support = self.disturbance.support_matrix()?;
        Ok(Prepared {
            stacked,
            moments,
            support,
        })
    }
}

fn lifted_r(stk: &StackedSystem, cost: &CostData) -> DMatrix<f64> {
    &cost.ru + stk.b.transpose() * &cost.rx * &stk.b
}

/// `tr(PᵀQᵀRQPM + 2GᵀR_xBQPM + GᵀR_xGM)`: the expected cost of `u = QPξ`.
pub fn objective_value(q: &DMatrix<f64>, stk: &StackedSystem, cost: &CostData, m: &DMatrix<f64>) -> f64 {
    let r = lifted_r(stk, cost);
    let qp = q * &stk.p;
    let gt_rx = stk.g.transpose() * &cost.rx;
    (qp.transpose() * &r * &qp * m).trace()
        + 2.0 * (&gt_rx * &stk.b * &qp * m).trace()
        + (&gt_rx * &stk.g * m).trace()
}

/// The trace objective as a quadratic form in the packed free entries of `Q`.
pub fn policy_objective(
    stk: &StackedSystem,
    cost: &CostData,
    m: &DMatrix<f64>,
    pat: &SparsityPattern,
    n_vars: usize,
) -> Objective {
    let r = lifted_r(stk, cost);
    let s = &stk.p * m * stk.p.transpose();
    let lin_full = stk.b.transpose() * &cost.rx * &stk.g * m * stk.p.transpose() * 2.0;
    let free = pat.free_entries();
    let mut quad = DMatrix::zeros(n_vars, n_vars);
    for (k1, &(a1, b1)) in free.iter().enumerate() {
        for (k2, &(a2, b2)) in free.iter().enumerate() {
            quad[(k1, k2)] = r[(a1, a2)] * s[(b1, b2)];
        }
    }
    let mut linear = DVector::zeros(n_vars);
    for (k, &(a, b)) in free.iter().enumerate() {
        linear[k] = lin_full[(a, b)];
    }
    let constant = (stk.g.transpose() * &cost.rx * &stk.g * m).trace();
    Objective {
        quadratic: quad,
        linear,
        constant,
    }
}

/// Coefficients of the affine map `Q ↦ (F_u + F_xB)QP + F_xG + F_ξ`.
struct ConstraintMap {
    /// For each `(row i, column c)`: sparse coefficients over packed `Q`.
    coeffs: Vec<Vec<(usize, f64)>>,
    offset: DMatrix<f64>,
}

impl ConstraintMap {
    fn new(stk: &StackedSystem, cons: &ConstraintData, pat: &SparsityPattern) -> Self {
        let e = &cons.fu + &cons.fx * &stk.b;
        let offset = &cons.fx * &stk.g + &cons.fxi;
        let (m, nxi) = (cons.rows(), stk.n_disturbances());
        let mut coeffs = vec![Vec::new(); m * nxi];
        for i in 0..m {
            for c in 0..nxi {
                let row = &mut coeffs[i * nxi + c];
                for (k, &(a, b)) in pat.free_entries().iter().enumerate() {
                    let v = e[(i, a)] * stk.p[(b, c)];
                    if v != 0.0 {
                        row.push((k, v));
                    }
                }
            }
        }
        ConstraintMap { coeffs, offset }
    }

    fn row_scale(&self, i: usize) -> f64 {
        let nxi = self.offset.ncols();
        let mut s = self.offset.row(i).amax();
        for c in 0..nxi {
            for &(_, v) in &self.coeffs[i * nxi + c] {
                s = s.max(v.abs());
            }
        }
        s
    }
}

/// Affine constraint image `(F_u + F_xB)QP + F_xG + F_ξ` for a concrete `Q`.
pub fn constraint_image(stk: &StackedSystem, cons: &ConstraintData, q: &DMatrix<f64>) -> DMatrix<f64> {
    (&cons.fu + &cons.fx * &stk.b) * q * &stk.p + &cons.fx * &stk.g + &cons.fxi
}

fn q_names(pat: &SparsityPattern) -> Vec<String> {
    pat.free_entries()
        .iter()
        .map(|(r, c)| format!("Q[{r},{c}]"))
        .collect()
}

pub fn build_lower_bound(
    stk: &StackedSystem,
    cons: &ConstraintData,
    cost: &CostData,
    m: &DMatrix<f64>,
    w: &DMatrix<f64>,
    pat: &SparsityPattern,
) -> Result<ConicProgram> {
    cons.check(stk)?;
    cost.check(stk)?;
    let nq = pat.n_free();
    let (rows, nxi) = (cons.rows(), stk.n_disturbances());
    let n_vars = nq + rows * nxi;
    let zvar = |i: usize, c: usize| nq + i * nxi + c;

    let map = ConstraintMap::new(stk, cons, pat);
    let mut equalities = Vec::with_capacity(rows * nxi);
    for i in 0..rows {
        for c in 0..nxi {
            let mut row = map.coeffs[i * nxi + c].clone();
            row.push((zvar(i, c), 1.0));
            equalities.push(Equality {
                row,
                rhs: -map.offset[(i, c)],
            });
        }
    }
    let wm = w * m;
    let mut cones = Vec::with_capacity(2 * rows);
    for i in 0..rows {
        let expr = |coef: &dyn Fn(usize) -> f64| {
            let terms = (0..nxi)
                .map(|c| (zvar(i, c), coef(c)))
                .filter(|&(_, v)| v != 0.0)
                .collect();
            LinearExpr::new(terms, 0.0)
        };
        cones.push(ConeConstraint::soc(
            (0..nxi).map(|r| expr(&|c| wm[(r, c)])).collect(),
        ));
        cones.push(ConeConstraint::nonneg(vec![expr(&|c| m[(0, c)])]));
    }

    let objective = policy_objective(stk, cost, m, pat, n_vars);
    let mut names = q_names(pat);
    for i in 0..rows {
        for c in 0..nxi {
            names.push(format!("Z[{i},{c}]"));
        }
    }
    Ok(ConicProgram::new(n_vars, objective, equalities, cones)?.with_names(names))
}

pub fn build_upper_bound(
    stk: &StackedSystem,
    cons: &ConstraintData,
    cost: &CostData,
    m: &DMatrix<f64>,
    w: &DMatrix<f64>,
    pat: &SparsityPattern,
    backoff: f64,
) -> Result<ConicProgram> {
    cons.check(stk)?;
    cost.check(stk)?;
    let nq = pat.n_free();
    let (rows, nxi) = (cons.rows(), stk.n_disturbances());
    let block = nxi + 1;
    let n_vars = nq + rows * block;
    let lambda = |i: usize, r: usize| nq + i * block + r;
    let tvar = |i: usize| nq + i * block + nxi;

    let map = ConstraintMap::new(stk, cons, pat);
    let mut equalities = Vec::with_capacity(rows * nxi);
    let mut cones = Vec::with_capacity(2 * rows);
    for i in 0..rows {
        // a_i(Q) + Wᵀλ_i - t_i e₁ = 0
        for c in 0..nxi {
            let mut row = map.coeffs[i * nxi + c].clone();
            for r in 0..nxi {
                if w[(r, c)] != 0.0 {
                    row.push((lambda(i, r), w[(r, c)]));
                }
            }
            if c == 0 {
                row.push((tvar(i), -1.0));
            }
            equalities.push(Equality {
                row,
                rhs: -map.offset[(i, c)],
            });
        }
        cones.push(ConeConstraint::soc(
            (0..nxi).map(|r| LinearExpr::var(lambda(i, r))).collect(),
        ));
        let margin = backoff * (1.0 + map.row_scale(i));
        cones.push(ConeConstraint::nonneg(vec![LinearExpr::new(
            vec![(tvar(i), -1.0)],
            -margin,
        )]));
    }

    let objective = policy_objective(stk, cost, m, pat, n_vars);
    let mut names = q_names(pat);
    for i in 0..rows {
        for r in 0..nxi {
            names.push(format!("lambda[{i},{r}]"));
        }
        names.push(format!("t[{i}]"));
    }
    Ok(ConicProgram::new(n_vars, objective, equalities, cones)?.with_names(names))
}

/// Outcome of one bound solve.
#[derive(Clone, Debug, Serialize)]
pub struct BoundSolve {
    pub status: SolveStatus,
    /// Certified value; `None` unless the solve was optimal or inaccurate.
    pub value: Option<f64>,
    /// Set when an inaccurate solve was downgraded by its residuals.
    pub downgraded: bool,
    pub solve: SolveResult,
}

fn interpret(solve: SolveResult, lower: bool) -> BoundSolve {
    let (value, downgraded) = match solve.status {
        SolveStatus::Optimal => (Some(solve.objective), false),
        SolveStatus::Inaccurate if solve.objective.is_finite() => {
            let slack = 10.0 * (solve.residuals.violation() + solve.gap.abs());
            let v = if lower {
                solve.objective - slack
            } else {
                solve.objective + slack
            };
            (Some(v), true)
        }
        _ => (None, false),
    };
    BoundSolve {
        status: solve.status,
        value,
        downgraded,
        solve,
    }
}

#[derive(Clone, Debug)]
pub struct LowerBound {
    pub graph: InfoGraph,
    pub pattern: SparsityPattern,
    pub result: BoundSolve,
    pub q: DMatrix<f64>,
    pub z: DMatrix<f64>,
}

#[derive(Clone, Debug)]
pub struct UpperBound {
    /// Graph whose pattern was used; `None` for the open-loop fallback.
    pub graph: Option<InfoGraph>,
    pub pattern: SparsityPattern,
    pub result: BoundSolve,
    pub q: DMatrix<f64>,
    pub k: DMatrix<f64>,
    /// Exact worst case `max_Ξ a_i(Q)ᵀξ` of every constraint row.
    pub robust_max: Vec<f64>,
}

/// Lower bound over an explicitly given (partially nested) pattern.
pub fn lower_bound_on(problem: &Problem, prep: &Prepared, graph: &InfoGraph) -> Result<LowerBound> {
    let stk = &prep.stacked;
    let pattern = sparsity_pattern(&stk.index, graph);
    let program = build_lower_bound(stk, &problem.constraints, &problem.cost, prep.m(), &prep.support, &pattern)?;
    let solve = solve(&program, &problem.options.tol)?;
    let nq = pattern.n_free();
    let (rows, nxi) = (problem.constraints.rows(), stk.n_disturbances());
    let (q, z) = if solve.x.len() == program.n_vars && solve.x.iter().all(|v| v.is_finite()) {
        (
            pattern.unpack(&solve.x[..nq]),
            DMatrix::from_row_slice(rows, nxi, &solve.x[nq..]),
        )
    } else {
        (DMatrix::zeros(pattern.rows(), pattern.cols()), DMatrix::zeros(rows, nxi))
    };
    Ok(LowerBound {
        graph: graph.clone(),
        pattern,
        result: interpret(solve, true),
        q,
        z,
    })
}

/// Relaxes the information graph, then solves the lower-bound program.
pub fn lower_bound(problem: &Problem) -> Result<LowerBound> {
    let prep = problem.prepare()?;
    let relaxed = relax(problem).map_err(|e| e.at("relaxation"))?;
    lower_bound_on(problem, &prep, &relaxed).map_err(|e| e.at("lower bound"))
}

fn relax(problem: &Problem) -> Result<InfoGraph> {
    let zero = problem.options.zero;
    if problem.options.force {
        relax_information_forced(&problem.system, &problem.graph, zero)
    } else {
        relax_information(&problem.system, &problem.graph, zero)
    }
}

/// Pattern graph for the upper bound: the user's choice, the information
/// graph itself when partially nested, else its largest partially nested
/// subgraph; `None` means open-loop.
pub fn upper_bound_graph(problem: &Problem) -> Result<Option<InfoGraph>> {
    let zero = problem.options.zero;
    let sys = &problem.system;
    if let Some(g) = &problem.options.upper_graph {
        if !g.is_subgraph_of(&problem.graph) {
            return Err(Error::InvalidGraph(format!(
                "upper-bound graph {g} is not a subgraph of the information graph {}",
                problem.graph
            )));
        }
        if !is_partially_nested(sys, g, zero) {
            return Err(Error::InvalidGraph(format!(
                "upper-bound graph {g} is not partially nested"
            )));
        }
        return Ok(Some(g.clone()));
    }
    // Under `force`, a graph that already contains its precedence edges and
    // is transitively closed keeps the Youla parameterization exact.
    if problem.options.force && relax_information_forced(sys, &problem.graph, zero)? == problem.graph {
        return Ok(Some(problem.graph.clone()));
    }
    Ok(largest_pn_subgraph(sys, &problem.graph, zero))
}

pub fn upper_bound_on(
    problem: &Problem,
    prep: &Prepared,
    graph: Option<&InfoGraph>,
) -> Result<UpperBound> {
    let stk = &prep.stacked;
    let pattern = match graph {
        Some(g) => sparsity_pattern(&stk.index, g),
        None => SparsityPattern::open_loop(&stk.index),
    };
    let program = build_upper_bound(
        stk,
        &problem.constraints,
        &problem.cost,
        prep.m(),
        &prep.support,
        &pattern,
        problem.options.robust_backoff,
    )?;
    let solve = solve(&program, &problem.options.tol)?;
    let nq = pattern.n_free();
    let q = if solve.x.len() == program.n_vars && solve.x.iter().all(|v| v.is_finite()) {
        pattern.unpack(&solve.x[..nq])
    } else {
        DMatrix::zeros(pattern.rows(), pattern.cols())
    };
    let k = youla_to_feedback(&q, stk);
    let image = constraint_image(stk, &problem.constraints, &q);
    let robust_max = (0..image.nrows())
        .map(|i| problem.disturbance.support_max(&image.row(i).transpose()))
        .collect();
    Ok(UpperBound {
        graph: graph.cloned(),
        pattern,
        result: interpret(solve, false),
        q,
        k,
        robust_max,
    })
}

pub fn upper_bound(problem: &Problem) -> Result<UpperBound> {
    let prep = problem.prepare()?;
    let g = upper_bound_graph(problem)?;
    upper_bound_on(problem, &prep, g.as_ref()).map_err(|e| e.at("upper bound"))
}

#[derive(Clone, Debug, Serialize)]
pub struct AssumptionSummary {
    /// Per subsystem: input causally reaches its own output.
    pub local_authority: Vec<bool>,
    pub self_loops: bool,
    pub disturbance_family: &'static str,
    pub moment_min_eigenvalue: f64,
    pub moment_warnings: Vec<String>,
    pub near_threshold: Vec<NearThreshold>,
}

impl AssumptionSummary {
    pub fn all_pass(&self) -> bool {
        self.self_loops && self.local_authority.iter().all(|&b| b)
    }
}

pub fn check_assumptions(problem: &Problem, prep: &Prepared) -> AssumptionSummary {
    let zero = problem.options.zero;
    AssumptionSummary {
        local_authority: check_local_authority(&problem.system, zero),
        self_loops: (0..problem.graph.nodes()).all(|i| problem.graph.contains(i, i)),
        disturbance_family: problem.disturbance.family.tag(),
        moment_min_eigenvalue: prep.moments.min_eigenvalue,
        moment_warnings: prep.moments.warnings.clone(),
        near_threshold: coupling(&problem.system, zero).near_threshold,
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Stages {
    pub lower: bool,
    pub upper: bool,
}

impl Default for Stages {
    fn default() -> Self {
        Stages {
            lower: true,
            upper: true,
        }
    }
}

#[derive(Clone, Debug)]
pub struct BoundReport {
    pub assumptions: AssumptionSummary,
    pub given_graph: InfoGraph,
    pub given_graph_pn: bool,
    pub relaxed_graph: InfoGraph,
    pub lower: Option<LowerBound>,
    pub upper: Option<UpperBound>,
    pub moments: MomentEstimate,
    /// Wall-clock seconds per stage; kept out of reproducible reports.
    pub wall: StageTimes,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct StageTimes {
    pub lower: f64,
    pub upper: f64,
}

impl BoundReport {
    pub fn j_d(&self) -> Option<f64> {
        self.lower.as_ref().and_then(|l| l.result.value)
    }
    pub fn j_up(&self) -> Option<f64> {
        self.upper.as_ref().and_then(|u| u.result.value)
    }
    pub fn gap_abs(&self) -> Option<f64> {
        Some(self.j_up()? - self.j_d()?)
    }
    pub fn gap_rel(&self) -> Option<f64> {
        Some(self.gap_abs()? / self.j_d()?.abs().max(1.0))
    }
    /// `J_d <= J_up + 1e-6·(1 + |J_d|)`, when both are available.
    pub fn ordering_holds(&self) -> Option<bool> {
        let (d, u) = (self.j_d()?, self.j_up()?);
        Some(d <= u + 1e-6 * (1.0 + d.abs()))
    }
}

/// Full pipeline: assumption checks, relaxation, lower bound on the relaxed
/// graph and (optionally) the robust affine upper bound.
pub fn certify(problem: &Problem, stages: Stages) -> Result<BoundReport> {
    let prep = problem.prepare().map_err(|e| e.at("validation"))?;
    let assumptions = check_assumptions(problem, &prep);
    if !assumptions.all_pass() && !problem.options.force {
        let subsystems = assumptions
            .local_authority
            .iter()
            .enumerate()
            .filter(|(_, &ok)| !ok)
            .map(|(i, _)| i + 1)
            .collect();
        return Err(Error::NoLocalAuthority { subsystems }.at("assumptions"));
    }
    let relaxed = relax(problem).map_err(|e| e.at("relaxation"))?;
    let given_graph_pn = is_partially_nested(&problem.system, &problem.graph, problem.options.zero);

    let mut wall = StageTimes::default();
    let lower = if stages.lower {
        let start = Instant::now();
        let lb = lower_bound_on(problem, &prep, &relaxed).map_err(|e| e.at("lower bound"))?;
        wall.lower = start.elapsed().as_secs_f64();
        Some(lb)
    } else {
        None
    };
    let upper = if stages.upper {
        let start = Instant::now();
        let g = upper_bound_graph(problem).map_err(|e| e.at("upper bound"))?;
        let ub = upper_bound_on(problem, &prep, g.as_ref()).map_err(|e| e.at("upper bound"))?;
        wall.upper = start.elapsed().as_secs_f64();
        Some(ub)
    } else {
        None
    };
    Ok(BoundReport {
        assumptions,
        given_graph: problem.graph.clone(),
        given_graph_pn,
        relaxed_graph: relaxed,
        lower,
        upper,
        moments: prep.moments,
        wall,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::{coupled_pair, scalar_problem};
    use crate::system::stack_system;

    #[test]
    fn scalar_instance_lower_bound_is_one_sixth() {
        let lb = lower_bound(&scalar_problem()).unwrap();
        assert_eq!(lb.result.status, SolveStatus::Optimal);
        assert!((lb.result.value.unwrap() - 1.0 / 6.0).abs() < 1e-7);
        assert!((lb.q[(0, 1)] + 0.5).abs() < 1e-5);
    }

    #[test]
    fn zero_policy_costs_the_open_loop_trace() {
        let p = scalar_problem();
        let prep = p.prepare().unwrap();
        let q = DMatrix::zeros(1, 2);
        assert!((objective_value(&q, &prep.stacked, &p.cost, prep.m()) - 1.0 / 3.0).abs() < 1e-14);
        let q = DMatrix::from_row_slice(1, 2, &[0.0, -0.5]);
        assert!((objective_value(&q, &prep.stacked, &p.cost, prep.m()) - 1.0 / 6.0).abs() < 1e-14);
    }

    #[test]
    fn packed_objective_matches_trace_form() {
        let p = scalar_problem();
        let prep = p.prepare().unwrap();
        let pat = sparsity_pattern(&prep.stacked.index, &p.graph);
        let obj = policy_objective(&prep.stacked, &p.cost, prep.m(), &pat, pat.n_free());
        let q = DMatrix::from_row_slice(1, 2, &[0.3, -0.7]);
        let direct = objective_value(&q, &prep.stacked, &p.cost, prep.m());
        assert!((obj.eval(pat.pack(&q).as_slice()) - direct).abs() < 1e-12);
    }

    #[test]
    fn unconstrained_bounds_coincide() {
        let r = certify(&scalar_problem(), Stages::default()).unwrap();
        assert!(r.gap_rel().unwrap().abs() < 1e-6);
        assert_eq!(r.ordering_holds(), Some(true));
    }

    fn with_input_cap(offset: f64) -> Problem {
        let mut p = scalar_problem();
        let stk = stack_system(&p.system);
        // u(0) + offset <= 0
        p.constraints = ConstraintData::new(
            DMatrix::zeros(1, stk.n_states()),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_row_slice(1, 2, &[offset, 0.0]),
        )
        .unwrap();
        p
    }

    #[test]
    fn robust_input_cap_forces_nonpositive_policy() {
        let p = with_input_cap(0.0);
        let ub = upper_bound(&p).unwrap();
        assert_eq!(ub.result.status, SolveStatus::Optimal);
        let (q0, q1) = (ub.q[(0, 0)], ub.q[(0, 1)]);
        assert!(q0 + q1.abs() <= 1e-9, "q0 + |q1| = {}", q0 + q1.abs());
        assert!(ub.robust_max[0] <= 0.0);
        let lb = lower_bound(&p).unwrap();
        assert!(lb.result.value.unwrap() <= ub.result.value.unwrap() + 1e-6);
        assert!(lb.result.value.unwrap() >= 1.0 / 6.0 - 1e-6);
    }

    #[test]
    fn constant_violation_is_robustly_infeasible() {
        let mut p = with_input_cap(1.0);
        p.constraints.fu[(0, 0)] = 0.0;
        let ub = upper_bound(&p).unwrap();
        assert_eq!(ub.result.status, SolveStatus::Infeasible);
        assert!(ub.result.value.is_none());
    }

    #[test]
    fn certify_reports_relaxed_graph_for_coupled_pair() {
        let sys = coupled_pair(3);
        let stk = stack_system(&sys);
        let problem = Problem {
            graph: InfoGraph::self_loops(2).unwrap(),
            disturbance: DisturbanceModel::uniform_ball(6, 1.0).unwrap(),
            constraints: ConstraintData::none(&stk),
            cost: CostData::new(
                DMatrix::identity(stk.n_states(), stk.n_states()),
                DMatrix::identity(stk.n_inputs(), stk.n_inputs()),
            )
            .unwrap(),
            system: sys,
            options: Options::default(),
        };
        let r = certify(&problem, Stages::default()).unwrap();
        assert!(!r.given_graph_pn);
        assert_eq!(r.relaxed_graph.labels(), vec![(1, 1), (1, 2), (2, 2)]);
        assert_eq!(r.ordering_holds(), Some(true));
    }
}
