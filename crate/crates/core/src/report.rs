//! Command layer behind the `decrelax` binary: problem-file ingestion,
//! pipeline orchestration and report rendering.
//!
//! Every command returns an [`Output`] carrying the text for stdout, any
//! diagnostics for stderr and the process exit code. JSON reports round
//! floats to 12 significant digits and omit wall-clock times, so equal
//! inputs give byte-identical reports.

use std::path::Path;
use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::bound::{
    build_lower_bound, build_upper_bound, certify, check_assumptions, objective_value, upper_bound_graph,
    BoundReport, BoundSolve, Options, Problem, Stages,
};
use crate::conic::SolveStatus;
use crate::error::Error;
use crate::graph::{is_partially_nested, relax_information, relax_information_forced};
use crate::policy::{sparsity_pattern, SparsityPattern};
use crate::problem_file::{load_problem, LoadedProblem};
use crate::sim::{ClosedLoop, SimOptions, SimulationResult};

pub const EXIT_OK: i32 = 0;
pub const EXIT_SCHEMA: i32 = 2;
pub const EXIT_ASSUMPTION: i32 = 3;
pub const EXIT_SOLVER: i32 = 4;
pub const EXIT_NO_UPPER_BOUND: i32 = 5;

/// Process exit code for a pipeline error.
pub fn exit_code(e: &Error) -> i32 {
    match e.root() {
        Error::MissingSelfLoop { .. }
        | Error::NoLocalAuthority { .. }
        | Error::NotPositiveDefinite { .. }
        | Error::SingularShape
        | Error::RelaxationUnstable(_) => EXIT_ASSUMPTION,
        Error::Solver(_) | Error::InvalidProgram(_) => EXIT_SOLVER,
        _ => EXIT_SCHEMA,
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Format {
    #[default]
    Json,
    Csv,
}

/// Command-line settings that take precedence over the problem file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub samples: Option<usize>,
    pub tol: Option<f64>,
    pub force: bool,
}

impl Overrides {
    pub fn apply(&self, o: &mut Options) {
        if let Some(s) = self.seed {
            o.seed = s;
        }
        if let Some(n) = self.samples {
            o.samples = n;
        }
        if let Some(t) = self.tol {
            o.tol.abs = t;
            o.tol.rel = t;
        }
        o.force |= self.force;
    }
}

#[derive(Clone, Debug, Default)]
pub struct Output {
    pub stdout: String,
    pub stderr: Vec<String>,
    pub code: i32,
}

impl Output {
    fn failure(e: &Error) -> Self {
        Output {
            stdout: String::new(),
            stderr: vec![format!("error: {e}")],
            code: exit_code(e),
        }
    }
}

/// Rounds to 12 significant digits; non-finite values become `null`.
pub fn round12(x: f64) -> Value {
    if !x.is_finite() {
        return Value::Null;
    }
    let r: f64 = format!("{x:.11e}").parse().expect("formatted float parses");
    json!(r)
}

fn round_all(v: Value) -> Value {
    match v {
        Value::Number(n) if n.is_f64() => round12(n.as_f64().expect("f64 number")),
        Value::Array(a) => Value::Array(a.into_iter().map(round_all).collect()),
        Value::Object(o) => Value::Object(o.into_iter().map(|(k, v)| (k, round_all(v))).collect()),
        v => v,
    }
}

/// Pretty JSON with every float rounded; ends with a newline.
pub fn render_json(v: Value) -> String {
    let mut s = serde_json::to_string_pretty(&round_all(v)).expect("values serialize");
    s.push('\n');
    s
}

fn to_value<T: Serialize>(x: &T) -> Value {
    serde_json::to_value(x).expect("report types serialize")
}

fn matrix_json(m: &DMatrix<f64>) -> Value {
    let data: Vec<f64> = (0..m.nrows())
        .flat_map(|r| (0..m.ncols()).map(move |c| m[(r, c)]))
        .collect();
    json!({"rows": m.nrows(), "cols": m.ncols(), "data": data})
}

fn opt(x: Option<f64>) -> Value {
    x.map_or(Value::Null, |v| json!(v))
}

fn status_name(s: SolveStatus) -> Value {
    to_value(&s)
}

fn solve_json(b: &BoundSolve) -> Value {
    let s = &b.solve;
    json!({
        "status": status_name(b.status),
        "value": opt(b.value),
        "downgraded": b.downgraded,
        "solver": {
            "solver_status": s.solver_status,
            "iterations": s.iterations,
            "objective": s.objective,
            "equality_residual": s.residuals.equality,
            "cone_slack": opt(s.residuals.cone_slack),
            "dual_residual": s.dual_residual,
            "gap": s.gap,
        }
    })
}

fn pattern_json(p: &SparsityPattern) -> Value {
    json!({"rows": p.rows(), "cols": p.cols(), "free_entries": p.n_free()})
}

fn options_json(o: &Options) -> Value {
    json!({
        "tol_abs": o.tol.abs,
        "tol_rel": o.tol.rel,
        "max_iter": o.tol.max_iter,
        "zero_tol": o.zero.rel,
        "robust_backoff": o.robust_backoff,
        "force": o.force,
        "samples": o.samples,
        "upper_graph": o.upper_graph.as_ref().map(to_value),
    })
}

fn problem_json(p: &Problem) -> Value {
    let s = &p.system;
    json!({
        "subsystems": s.subsystems(),
        "horizon": s.horizon(),
        "n_x": s.n_x(),
        "n_u": s.n_u(),
        "n_y": s.n_y(),
        "n_xi": s.n_xi(),
        "constraints": p.constraints.rows(),
        "disturbance_family": p.disturbance.family.tag(),
    })
}

fn load(text: &str, ov: &Overrides) -> Result<LoadedProblem, Error> {
    let mut lp = load_problem(text)?;
    ov.apply(&mut lp.problem.options);
    Ok(lp)
}

/// Assumption and information-structure checks without solving anything.
pub fn cmd_check(text: &str, ov: &Overrides, format: Format) -> Output {
    let lp = match load(text, ov) {
        Ok(lp) => lp,
        Err(e) => return Output::failure(&e),
    };
    let p = &lp.problem;
    let prep = match p.prepare() {
        Ok(prep) => prep,
        Err(e) => return Output::failure(&e),
    };
    let a = check_assumptions(p, &prep);
    let zero = p.options.zero;
    let pn = is_partially_nested(&p.system, &p.graph, zero);
    let (relaxed, mode) = if a.all_pass() {
        (relax_information(&p.system, &p.graph, zero), "standard")
    } else {
        (relax_information_forced(&p.system, &p.graph, zero), "forced")
    };
    let mut stderr = Vec::new();
    let failing: Vec<usize> = a
        .local_authority
        .iter()
        .enumerate()
        .filter(|(_, &ok)| !ok)
        .map(|(i, _)| i + 1)
        .collect();
    if !failing.is_empty() {
        stderr.push(format!("{}", Error::NoLocalAuthority { subsystems: failing }));
    }
    for w in &a.moment_warnings {
        stderr.push(format!("warning: {w}"));
    }
    let (relaxed_json, added) = match &relaxed {
        Ok(r) => (
            to_value(r),
            to_value(&r.difference(&p.graph).iter().map(|&(i, j)| (i + 1, j + 1)).collect::<Vec<_>>()),
        ),
        Err(e) => {
            stderr.push(format!("error: {e}"));
            (Value::Null, Value::Null)
        }
    };
    let code = if a.all_pass() && relaxed.is_ok() {
        EXIT_OK
    } else {
        EXIT_ASSUMPTION
    };

    let stdout = match format {
        Format::Json => render_json(json!({
            "input": {"sha256": lp.sha256},
            "problem": problem_json(p),
            "assumptions": {
                "local_authority": a.local_authority.iter().enumerate()
                    .map(|(i, &ok)| json!({"subsystem": i + 1, "pass": ok}))
                    .collect::<Vec<_>>(),
                "self_loops": a.self_loops,
                "elliptical_disturbance": {
                    "family": a.disturbance_family,
                    "moment_min_eigenvalue": a.moment_min_eigenvalue,
                    "moment_std_error": opt(prep.moments.std_error),
                    "warnings": a.moment_warnings,
                },
                "all_pass": a.all_pass(),
            },
            "near_threshold": to_value(&a.near_threshold),
            "given_graph": to_value(&p.graph),
            "partially_nested": pn,
            "relaxation": mode,
            "relaxed_graph": relaxed_json,
            "added_edges": added,
        })),
        Format::Csv => {
            let mut rows = vec!["check,subject,result".to_string()];
            for (i, ok) in a.local_authority.iter().enumerate() {
                rows.push(format!("local_authority,{},{}", i + 1, pass(*ok)));
            }
            rows.push(format!("self_loops,graph,{}", pass(a.self_loops)));
            rows.push(format!("moments_positive_definite,{},pass", a.disturbance_family));
            rows.push(format!("partially_nested,graph,{pn}"));
            if let Ok(r) = &relaxed {
                rows.push(format!("relaxed_graph,{mode},\"{r}\""));
            }
            rows.join("\n") + "\n"
        }
    };
    Output { stdout, stderr, code }
}

fn pass(ok: bool) -> &'static str {
    if ok {
        "pass"
    } else {
        "fail"
    }
}

/// Which stages `bound` runs; with no flag set, both bounds and the gap.
#[derive(Clone, Copy, Debug, Default)]
pub struct BoundFlags {
    pub lower: bool,
    pub upper: bool,
    pub gap: bool,
    pub simulate: Option<usize>,
}

impl BoundFlags {
    fn stages(&self) -> Stages {
        if !(self.lower || self.upper || self.gap) {
            return Stages::default();
        }
        Stages {
            lower: self.lower || self.gap,
            upper: self.upper || self.gap || self.simulate.is_some(),
        }
    }
}

fn simulate_upper(p: &Problem, r: &BoundReport, n: usize, seed: u64) -> Result<Option<(SimulationResult, f64)>, Error> {
    let Some(ub) = r.upper.as_ref().filter(|u| u.result.value.is_some()) else {
        return Ok(None);
    };
    let prep = p.prepare()?;
    let cl = ClosedLoop {
        system: &p.system,
        stacked: &prep.stacked,
        cost: &p.cost,
        constraints: &p.constraints,
        disturbance: &p.disturbance,
    };
    let sim = cl.simulate(&ub.k, prep.m(), n, seed, &SimOptions::default())?;
    let predicted = objective_value(&ub.q, &prep.stacked, &p.cost, prep.m());
    Ok(Some((sim, predicted)))
}

fn simulation_json(sim: &SimulationResult, predicted: f64) -> Value {
    let z = if sim.std_error > 0.0 {
        (sim.mean_cost - predicted) / sim.std_error
    } else {
        0.0
    };
    let mut v = to_value(sim);
    if let Value::Object(o) = &mut v {
        o.insert("predicted_cost".into(), json!(predicted));
        o.insert("cost_z_score".into(), json!(z));
    }
    v
}

/// Report JSON for a finished pipeline run.
pub fn bound_report_json(lp: &LoadedProblem, r: &BoundReport, sim: Option<&(SimulationResult, f64)>) -> Value {
    let p = &lp.problem;
    let mut out = Map::new();
    out.insert(
        "tool".into(),
        json!({"name": "decrelax", "version": env!("CARGO_PKG_VERSION")}),
    );
    out.insert("input".into(), json!({"sha256": lp.sha256}));
    out.insert(
        "seeds".into(),
        json!({
            "seed": p.options.seed,
            "moment_seed": r.moments.seed,
        }),
    );
    out.insert("options".into(), options_json(&p.options));
    out.insert("problem".into(), problem_json(p));
    out.insert("assumptions".into(), to_value(&r.assumptions));
    out.insert("moments".into(), to_value(&r.moments));
    out.insert("given_graph".into(), to_value(&r.given_graph));
    out.insert("given_graph_pn".into(), json!(r.given_graph_pn));
    out.insert("relaxed_graph".into(), to_value(&r.relaxed_graph));
    let added: Vec<(usize, usize)> = r
        .relaxed_graph
        .difference(&r.given_graph)
        .iter()
        .map(|&(i, j)| (i + 1, j + 1))
        .collect();
    out.insert("added_edges".into(), to_value(&added));

    if let Some(lb) = &r.lower {
        out.insert("J_d".into(), opt(lb.result.value));
        out.insert("J_d_status".into(), status_name(lb.result.status));
        let mut v = solve_json(&lb.result);
        let o = v.as_object_mut().expect("object");
        o.insert("graph".into(), to_value(&lb.graph));
        o.insert("pattern".into(), pattern_json(&lb.pattern));
        o.insert("Q".into(), matrix_json(&lb.q));
        o.insert("Z".into(), matrix_json(&lb.z));
        out.insert("lower".into(), v);
    }
    if let Some(ub) = &r.upper {
        out.insert("J_up".into(), opt(ub.result.value));
        out.insert("J_up_status".into(), status_name(ub.result.status));
        let mut v = solve_json(&ub.result);
        let o = v.as_object_mut().expect("object");
        o.insert(
            "pattern_graph".into(),
            ub.graph.as_ref().map_or(json!("open_loop"), to_value),
        );
        o.insert("pattern".into(), pattern_json(&ub.pattern));
        if ub.result.value.is_some() {
            o.insert("robust_max".into(), to_value(&ub.robust_max));
            o.insert("Q".into(), matrix_json(&ub.q));
            o.insert("K".into(), matrix_json(&ub.k));
        }
        if ub.result.status == SolveStatus::Infeasible {
            o.insert("message".into(), json!("no affine upper bound"));
        }
        out.insert("upper".into(), v);
    }
    if r.lower.is_some() && r.upper.is_some() {
        out.insert("gap_abs".into(), opt(r.gap_abs()));
        out.insert("gap_rel".into(), opt(r.gap_rel()));
        out.insert("ordering_holds".into(), json!(r.ordering_holds()));
    }
    if let Some(s) = sim {
        let mut v = simulation_json(&s.0, s.1);
        v.as_object_mut()
            .expect("object")
            .insert("seed".into(), json!(p.options.seed));
        out.insert("simulation".into(), v);
    }
    Value::Object(out)
}

fn bound_exit(r: &BoundReport, stderr: &mut Vec<String>) -> i32 {
    if let Some(ub) = &r.upper {
        if ub.result.status == SolveStatus::Infeasible {
            stderr.push("no affine upper bound: robust constraints are infeasible".into());
            return EXIT_NO_UPPER_BOUND;
        }
    }
    if let Some(lb) = &r.lower {
        if lb.result.status == SolveStatus::Infeasible {
            stderr.push("lower-bound program is infeasible, so the original problem is too".into());
        }
        if lb.result.status != SolveStatus::Optimal {
            stderr.push(format!("lower bound solve status: {:?}", lb.result.status));
            return EXIT_SOLVER;
        }
    }
    if let Some(ub) = &r.upper {
        if ub.result.status != SolveStatus::Optimal {
            stderr.push(format!("upper bound solve status: {:?}", ub.result.status));
            return EXIT_SOLVER;
        }
    }
    EXIT_OK
}

pub fn cmd_bound(text: &str, flags: &BoundFlags, ov: &Overrides, format: Format) -> Output {
    let lp = match load(text, ov) {
        Ok(lp) => lp,
        Err(e) => return Output::failure(&e),
    };
    let p = &lp.problem;
    let r = match certify(p, flags.stages()) {
        Ok(r) => r,
        Err(e) => return Output::failure(&e),
    };
    let sim = match flags.simulate {
        Some(n) if n > 0 => match simulate_upper(p, &r, n, p.options.seed) {
            Ok(s) => s,
            Err(e) => return Output::failure(&e.at("simulation")),
        },
        _ => None,
    };
    let mut stderr: Vec<String> = r.moments.warnings.iter().map(|w| format!("warning: {w}")).collect();
    let code = bound_exit(&r, &mut stderr);
    let stdout = match format {
        Format::Json => render_json(bound_report_json(&lp, &r, sim.as_ref())),
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["J_d", "J_d_status", "J_up", "J_up_status", "gap_abs", "gap_rel"])
                .expect("in-memory write");
            let status = |b: Option<&BoundSolve>| b.map_or(String::new(), |b| value_str(&status_name(b.status)));
            w.write_record([
                num_str(r.j_d()),
                status(r.lower.as_ref().map(|l| &l.result)),
                num_str(r.j_up()),
                status(r.upper.as_ref().map(|u| &u.result)),
                num_str(r.gap_abs()),
                num_str(r.gap_rel()),
            ])
            .expect("in-memory write");
            String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
        }
    };
    Output { stdout, stderr, code }
}

fn value_str(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        v => v.to_string(),
    }
}

fn num_str(x: Option<f64>) -> String {
    x.map_or(String::new(), |v| value_str(&round12(v)))
}

/// Closed-loop Monte Carlo of the upper-bound policy. In CSV mode the
/// output is a per-sample trace of the first `trace_rows` samples.
pub fn cmd_simulate(text: &str, ov: &Overrides, format: Format, trace_rows: usize) -> Output {
    let lp = match load(text, ov) {
        Ok(lp) => lp,
        Err(e) => return Output::failure(&e),
    };
    let p = &lp.problem;
    let r = match certify(p, Stages { lower: false, upper: true }) {
        Ok(r) => r,
        Err(e) => return Output::failure(&e),
    };
    let mut stderr = Vec::new();
    let code = bound_exit(&r, &mut stderr);
    let ub = r.upper.as_ref().expect("upper stage ran");
    if ub.result.value.is_none() {
        return Output {
            stdout: String::new(),
            stderr,
            code,
        };
    }
    let prep = match p.prepare() {
        Ok(prep) => prep,
        Err(e) => return Output::failure(&e),
    };
    let cl = ClosedLoop {
        system: &p.system,
        stacked: &prep.stacked,
        cost: &p.cost,
        constraints: &p.constraints,
        disturbance: &p.disturbance,
    };
    let opts = SimOptions {
        trace_rows: if format == Format::Csv { trace_rows } else { 0 },
        ..SimOptions::default()
    };
    let sim = match cl.simulate(&ub.k, prep.m(), p.options.samples, p.options.seed, &opts) {
        Ok(s) => s,
        Err(e) => return Output::failure(&e.at("simulation")),
    };
    let predicted = objective_value(&ub.q, &prep.stacked, &p.cost, prep.m());
    if sim.max_violation.is_some_and(|v| v > opts.violation_tol) {
        stderr.push(format!(
            "warning: constraint violation {:.3e} observed",
            sim.max_violation.unwrap_or(0.0)
        ));
    }
    let stdout = match format {
        Format::Json => render_json(json!({
            "input": {"sha256": lp.sha256},
            "seeds": {"seed": p.options.seed},
            "policy": "upper_bound",
            "J_up": opt(ub.result.value),
            "J_up_status": status_name(ub.result.status),
            "K": matrix_json(&ub.k),
            "simulation": simulation_json(&sim, predicted),
        })),
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            let nxi = prep.stacked.n_disturbances();
            let nu = prep.stacked.n_inputs();
            let mut header = vec!["sample".to_string(), "cost".into(), "max_constraint".into()];
            header.extend((0..nxi).map(|i| format!("xi{i}")));
            header.extend((0..nu).map(|i| format!("u{i}")));
            w.write_record(&header).expect("in-memory write");
            for row in &sim.trace {
                let mut rec = vec![row.sample.to_string(), num_str(Some(row.cost))];
                rec.push(if row.max_constraint.is_finite() {
                    num_str(Some(row.max_constraint))
                } else {
                    String::new()
                });
                rec.extend(row.xi.iter().map(|&x| num_str(Some(x))));
                rec.extend(row.u.iter().map(|&x| num_str(Some(x))));
                w.write_record(&rec).expect("in-memory write");
            }
            String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
        }
    };
    Output { stdout, stderr, code }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProgramKind {
    Lower,
    Upper,
}

/// The conic program of either bound, as plain JSON.
pub fn cmd_dump_ir(text: &str, kind: ProgramKind, ov: &Overrides) -> Output {
    let run = || -> Result<Value, Error> {
        let lp = load(text, ov)?;
        let p = &lp.problem;
        let prep = p.prepare()?;
        let stk = &prep.stacked;
        let program = match kind {
            ProgramKind::Lower => {
                let g = if p.options.force {
                    relax_information_forced(&p.system, &p.graph, p.options.zero)?
                } else {
                    relax_information(&p.system, &p.graph, p.options.zero)?
                };
                let pat = sparsity_pattern(&stk.index, &g);
                build_lower_bound(stk, &p.constraints, &p.cost, prep.m(), &prep.support, &pat)?
            }
            ProgramKind::Upper => {
                let pat = match upper_bound_graph(p)? {
                    Some(g) => sparsity_pattern(&stk.index, &g),
                    None => SparsityPattern::open_loop(&stk.index),
                };
                build_upper_bound(
                    stk,
                    &p.constraints,
                    &p.cost,
                    prep.m(),
                    &prep.support,
                    &pat,
                    p.options.robust_backoff,
                )?
            }
        };
        Ok(json!({
            "input": {"sha256": lp.sha256},
            "program": if kind == ProgramKind::Lower { "lower_bound" } else { "upper_bound" },
            "ir": to_value(&program.to_dump()),
        }))
    };
    match run() {
        Ok(v) => {
            let mut s = serde_json::to_string_pretty(&v).expect("values serialize");
            s.push('\n');
            Output {
                stdout: s,
                stderr: Vec::new(),
                code: EXIT_OK,
            }
        }
        Err(e) => Output::failure(&e),
    }
}

/// One sweep row; `error` is set when the file could not be processed.
#[derive(Clone, Debug, Default)]
pub struct SweepRow {
    pub file: String,
    pub subsystems: Option<usize>,
    pub horizon: Option<usize>,
    pub constraints: Option<usize>,
    pub partially_nested: Option<bool>,
    pub edges_added: Vec<(usize, usize)>,
    pub j_d: Option<f64>,
    pub j_up: Option<f64>,
    pub gap_rel: Option<f64>,
    pub status: String,
    pub lower_s: Option<f64>,
    pub upper_s: Option<f64>,
    pub total_s: f64,
    pub error: Option<String>,
}

pub const SWEEP_HEADER: [&str; 14] = [
    "file", "N", "T", "m", "PN", "edges_added", "J_d", "J_up", "gap_rel", "status", "lower_s", "upper_s",
    "total_s", "error",
];

fn sweep_one(path: &Path, name: String, ov: &Overrides) -> SweepRow {
    let start = Instant::now();
    let mut row = SweepRow {
        file: name,
        ..Default::default()
    };
    let result = std::fs::read_to_string(path)
        .map_err(Error::from)
        .and_then(|text| load(&text, ov))
        .and_then(|lp| {
            let p = &lp.problem;
            row.subsystems = Some(p.system.subsystems());
            row.horizon = Some(p.system.horizon());
            row.constraints = Some(p.constraints.rows());
            certify(p, Stages::default())
        });
    match result {
        Ok(r) => {
            row.partially_nested = Some(r.given_graph_pn);
            row.edges_added = r
                .relaxed_graph
                .difference(&r.given_graph)
                .iter()
                .map(|&(i, j)| (i + 1, j + 1))
                .collect();
            row.j_d = r.j_d();
            row.j_up = r.j_up();
            row.gap_rel = r.gap_rel();
            let mut notes = Vec::new();
            row.status = match bound_exit(&r, &mut notes) {
                EXIT_OK => "ok".into(),
                _ => notes.join("; "),
            };
            row.lower_s = Some(r.wall.lower);
            row.upper_s = Some(r.wall.upper);
        }
        Err(e) => {
            row.status = "error".into();
            row.error = Some(e.to_string());
        }
    }
    row.total_s = start.elapsed().as_secs_f64();
    row
}

/// Runs the full pipeline on every file in `dir` matching `pattern`, in
/// parallel; rows come back sorted by file name.
pub fn sweep(dir: &Path, pattern: &str, ov: &Overrides) -> Result<Vec<SweepRow>, Error> {
    let full = dir.join(pattern);
    let full = full
        .to_str()
        .ok_or_else(|| Error::Schema("sweep path is not valid UTF-8".into()))?;
    let mut files: Vec<(String, std::path::PathBuf)> = glob::glob(full)
        .map_err(|e| Error::Schema(format!("bad pattern: {e}")))?
        .filter_map(|p| p.ok())
        .filter(|p| p.is_file())
        .map(|p| {
            let name = p
                .strip_prefix(dir)
                .unwrap_or(&p)
                .to_string_lossy()
                .into_owned();
            (name, p)
        })
        .collect();
    files.sort();
    Ok(files
        .into_par_iter()
        .map(|(name, path)| sweep_one(&path, name, ov))
        .collect())
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(SWEEP_HEADER).expect("in-memory write");
    let num = |x: Option<usize>| x.map_or(String::new(), |v| v.to_string());
    let secs = |x: Option<f64>| x.map_or(String::new(), |v| format!("{v:.6}"));
    for r in rows {
        let edges = r
            .edges_added
            .iter()
            .map(|(i, j)| format!("({i},{j})"))
            .collect::<Vec<_>>()
            .join(" ");
        w.write_record([
            r.file.clone(),
            num(r.subsystems),
            num(r.horizon),
            num(r.constraints),
            r.partially_nested.map_or(String::new(), |b| b.to_string()),
            edges,
            num_str(r.j_d),
            num_str(r.j_up),
            num_str(r.gap_rel),
            r.status.clone(),
            secs(r.lower_s),
            secs(r.upper_s),
            format!("{:.6}", r.total_s),
            r.error.clone().unwrap_or_default(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}

/// Sweep summary as CSV. Per-file failures are recorded in their row and
/// counted in a warning; the exit code stays 0.
pub fn cmd_sweep(dir: &Path, pattern: &str, ov: &Overrides) -> Output {
    if !dir.is_dir() {
        return Output::failure(&Error::Schema(format!("{} is not a directory", dir.display())));
    }
    match sweep(dir, pattern, ov) {
        Ok(rows) => {
            let failed = rows.iter().filter(|r| r.error.is_some()).count();
            let stderr = if failed > 0 {
                vec![format!("warning: {failed} file(s) failed; see the error column")]
            } else {
                Vec::new()
            };
            Output {
                stdout: sweep_csv(&rows),
                stderr,
                code: EXIT_OK,
            }
        }
        Err(e) => Output::failure(&e),
    }
}
