//! JSON problem files.
//!
//! A file has the sections `system`, `graph`, `disturbance`, `cost` and the
//! optional `constraints` and `options`. Matrices are given either densely,
//! as `{"rows": r, "cols": c, "data": [..]}` (row-major) or as a list of rows,
//! or through a shorthand:
//!
//! ```text
//! 2.5                          scalar; 2.5·I when a square shape is expected
//! {"identity": n, "scale": s}  s·I (n may be omitted when the shape is known)
//! {"diag": [..]}
//! {"zeros": [r, c]}
//! {"block_diag": [m1, m2, ..]}
//! ```
//!
//! Time-varying system matrices use `{"per_step": [m0, m1, ..]}`; anything
//! else is held constant over the horizon. Graph edges are 1-based.

use nalgebra::{DMatrix, DVector};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::bound::{ConstraintData, CostData, Options, Problem};
use crate::conic::Tolerances;
use crate::disturbance::{DisturbanceModel, Family};
use crate::error::{Error, Result};
use crate::graph::InfoGraph;
use crate::instances;
use crate::linalg::ZeroTest;
use crate::system::{stack_system, LtvSystem, SubsystemDims, Trajectories};

/// A parsed problem together with the digest of its source text.
#[derive(Clone, Debug)]
pub struct LoadedProblem {
    pub problem: Problem,
    pub sha256: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn load_problem(text: &str) -> Result<LoadedProblem> {
    let root: Value = serde_json::from_str(text).map_err(|e| Error::Schema(format!("not valid JSON: {e}")))?;
    let problem = parse_problem(&root)?;
    Ok(LoadedProblem {
        problem,
        sha256: sha256_hex(text.as_bytes()),
    })
}

fn schema(msg: impl Into<String>) -> Error {
    Error::Schema(msg.into())
}

fn object<'a>(v: &'a Value, ctx: &str, allowed: &[&str]) -> Result<&'a Map<String, Value>> {
    let obj = v
        .as_object()
        .ok_or_else(|| schema(format!("{ctx}: expected an object")))?;
    if let Some(k) = obj.keys().find(|k| !allowed.contains(&k.as_str())) {
        return Err(schema(format!(
            "{ctx}: unknown key \"{k}\" (allowed: {})",
            allowed.join(", ")
        )));
    }
    Ok(obj)
}

fn number(v: &Value, ctx: &str) -> Result<f64> {
    v.as_f64()
        .ok_or_else(|| schema(format!("{ctx}: expected a number")))
}

fn count(v: &Value, ctx: &str) -> Result<usize> {
    v.as_u64()
        .map(|n| n as usize)
        .ok_or_else(|| schema(format!("{ctx}: expected a nonnegative integer")))
}

fn seed(v: &Value, ctx: &str) -> Result<u64> {
    v.as_u64()
        .ok_or_else(|| schema(format!("{ctx}: expected a nonnegative integer seed")))
}

fn boolean(v: &Value, ctx: &str) -> Result<bool> {
    v.as_bool()
        .ok_or_else(|| schema(format!("{ctx}: expected true or false")))
}

fn numbers(v: &Value, ctx: &str) -> Result<Vec<f64>> {
    let arr = v
        .as_array()
        .ok_or_else(|| schema(format!("{ctx}: expected an array of numbers")))?;
    arr.iter()
        .enumerate()
        .map(|(i, x)| number(x, &format!("{ctx}[{i}]")))
        .collect()
}

fn vector(v: &Value, ctx: &str, len: usize) -> Result<DVector<f64>> {
    let xs = numbers(v, ctx)?;
    if xs.len() != len {
        return Err(schema(format!("{ctx}: expected length {len}, got {}", xs.len())));
    }
    Ok(DVector::from_vec(xs))
}

/// Expands a matrix or shorthand. `square` is the dimension to use when a
/// bare scalar or a size-less identity stands for a multiple of `I`.
pub fn matrix(v: &Value, ctx: &str, square: Option<usize>) -> Result<DMatrix<f64>> {
    match v {
        Value::Number(_) => {
            let s = number(v, ctx)?;
            Ok(DMatrix::identity(square.unwrap_or(1), square.unwrap_or(1)) * s)
        }
        Value::Array(rows) => {
            let parsed: Vec<Vec<f64>> = rows
                .iter()
                .enumerate()
                .map(|(i, r)| numbers(r, &format!("{ctx}[{i}]")))
                .collect::<Result<_>>()?;
            let cols = parsed.first().map_or(0, Vec::len);
            if parsed.iter().any(|r| r.len() != cols) {
                return Err(schema(format!("{ctx}: rows have different lengths")));
            }
            Ok(DMatrix::from_row_iterator(
                parsed.len(),
                cols,
                parsed.into_iter().flatten(),
            ))
        }
        Value::Object(obj) => {
            if obj.contains_key("data") {
                object(v, ctx, &["rows", "cols", "data"])?;
                let rows = count(obj.get("rows").unwrap_or(&Value::Null), &format!("{ctx}.rows"))?;
                let cols = count(obj.get("cols").unwrap_or(&Value::Null), &format!("{ctx}.cols"))?;
                let data = numbers(&obj["data"], &format!("{ctx}.data"))?;
                if data.len() != rows * cols {
                    return Err(schema(format!(
                        "{ctx}: data has {} entries, expected {rows}x{cols} = {}",
                        data.len(),
                        rows * cols
                    )));
                }
                Ok(DMatrix::from_row_slice(rows, cols, &data))
            } else if let Some(n) = obj.get("identity") {
                object(v, ctx, &["identity", "scale"])?;
                let n = match n {
                    Value::Null => square.ok_or_else(|| schema(format!("{ctx}: identity size is required here")))?,
                    n => count(n, &format!("{ctx}.identity"))?,
                };
                let s = obj.get("scale").map_or(Ok(1.0), |s| number(s, &format!("{ctx}.scale")))?;
                Ok(DMatrix::identity(n, n) * s)
            } else if let Some(d) = obj.get("diag") {
                object(v, ctx, &["diag"])?;
                Ok(DMatrix::from_diagonal(&DVector::from_vec(numbers(d, &format!("{ctx}.diag"))?)))
            } else if let Some(z) = obj.get("zeros") {
                object(v, ctx, &["zeros"])?;
                let rc = z
                    .as_array()
                    .filter(|a| a.len() == 2)
                    .ok_or_else(|| schema(format!("{ctx}.zeros: expected [rows, cols]")))?;
                Ok(DMatrix::zeros(
                    count(&rc[0], &format!("{ctx}.zeros[0]"))?,
                    count(&rc[1], &format!("{ctx}.zeros[1]"))?,
                ))
            } else if let Some(b) = obj.get("block_diag") {
                object(v, ctx, &["block_diag"])?;
                let blocks = b
                    .as_array()
                    .ok_or_else(|| schema(format!("{ctx}.block_diag: expected an array")))?
                    .iter()
                    .enumerate()
                    .map(|(i, m)| matrix(m, &format!("{ctx}.block_diag[{i}]"), None))
                    .collect::<Result<Vec<_>>>()?;
                let r: usize = blocks.iter().map(|m| m.nrows()).sum();
                let c: usize = blocks.iter().map(|m| m.ncols()).sum();
                let mut out = DMatrix::zeros(r, c);
                let (mut i, mut j) = (0, 0);
                for m in blocks {
                    out.view_mut((i, j), m.shape()).copy_from(&m);
                    i += m.nrows();
                    j += m.ncols();
                }
                Ok(out)
            } else {
                Err(schema(format!(
                    "{ctx}: expected a matrix (rows/cols/data, identity, diag, zeros or block_diag)"
                )))
            }
        }
        _ => Err(schema(format!("{ctx}: expected a matrix"))),
    }
}

fn series(v: &Value, name: &str, horizon: usize, square: Option<usize>) -> Result<Vec<DMatrix<f64>>> {
    if let Some(steps) = v.as_object().and_then(|o| o.get("per_step")) {
        object(v, name, &["per_step"])?;
        let list = steps
            .as_array()
            .ok_or_else(|| schema(format!("{name}.per_step: expected an array")))?;
        if list.len() != horizon {
            return Err(schema(format!(
                "{name}.per_step has {} entries, expected horizon {horizon}",
                list.len()
            )));
        }
        list.iter()
            .enumerate()
            .map(|(t, m)| matrix(m, &format!("{name}({t})"), square))
            .collect()
    } else {
        Ok(vec![matrix(v, name, square)?; horizon])
    }
}

fn parse_system(v: &Value) -> Result<LtvSystem> {
    if v.get("generator").is_some() {
        return parse_generator(v);
    }
    let obj = object(
        v,
        "system",
        &["horizon", "subsystems", "n_xi", "x0", "A", "B", "G", "C", "H"],
    )?;
    let get = |k: &str| obj.get(k).ok_or_else(|| schema(format!("system: missing \"{k}\"")));
    let horizon = count(get("horizon")?, "system.horizon")?;
    let subs = get("subsystems")?
        .as_array()
        .ok_or_else(|| schema("system.subsystems: expected an array"))?;
    let dims: Vec<SubsystemDims> = subs
        .iter()
        .enumerate()
        .map(|(i, s)| {
            serde_json::from_value(s.clone())
                .map_err(|e| schema(format!("system.subsystems[{i}]: {e}")))
        })
        .collect::<Result<_>>()?;
    let n_xi = count(get("n_xi")?, "system.n_xi")?;
    let nx: usize = dims.iter().map(|d| d.nx).sum();
    let x0 = match obj.get("x0") {
        Some(x) => vector(x, "system.x0", nx)?,
        None => DVector::zeros(nx),
    };
    let mats = Trajectories {
        a: series(get("A")?, "A", horizon, Some(nx))?,
        b: series(get("B")?, "B", horizon, None)?,
        g: series(get("G")?, "G", horizon, None)?,
        c: series(get("C")?, "C", horizon, None)?,
        h: series(get("H")?, "H", horizon, None)?,
    };
    LtvSystem::new(dims, n_xi, x0, mats)
}

fn parse_generator(v: &Value) -> Result<LtvSystem> {
    let obj = object(v, "system", &["generator", "horizon", "nodes", "seed"])?;
    let name = obj["generator"]
        .as_str()
        .ok_or_else(|| schema("system.generator: expected a string"))?;
    let horizon = obj.get("horizon").map_or(Ok(3), |h| count(h, "system.horizon"))?;
    let nodes = obj.get("nodes").map_or(Ok(3), |n| count(n, "system.nodes"))?;
    if horizon == 0 || nodes == 0 || nodes > 64 {
        return Err(schema("system: horizon must be >= 1 and nodes in 1..=64"));
    }
    Ok(match name {
        "scalar" => instances::scalar_system(),
        "coupled_pair" => instances::coupled_pair(horizon),
        "chain" => instances::chain(nodes, horizon),
        "decoupled" => instances::decoupled(nodes, horizon),
        "random" => {
            use rand::SeedableRng;
            let s = obj.get("seed").map_or(Ok(0), |s| seed(s, "system.seed"))?;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(s);
            let spec = instances::RandomSpec {
                max_subsystems: nodes,
                min_horizon: horizon,
                max_horizon: horizon,
                ..Default::default()
            };
            instances::random_system(&mut rng, &spec)
        }
        other => {
            return Err(schema(format!(
                "system.generator: unknown generator \"{other}\" \
                 (known: scalar, coupled_pair, chain, decoupled, random)"
            )))
        }
    })
}

fn edge_list(v: &Value, ctx: &str) -> Result<Vec<(usize, usize)>> {
    let arr = v
        .as_array()
        .ok_or_else(|| schema(format!("{ctx}: expected an array of [from, to] pairs")))?;
    arr.iter()
        .enumerate()
        .map(|(k, e)| {
            let pair = e
                .as_array()
                .filter(|p| p.len() == 2)
                .ok_or_else(|| schema(format!("{ctx}[{k}]: expected [from, to]")))?;
            Ok((
                count(&pair[0], &format!("{ctx}[{k}][0]"))?,
                count(&pair[1], &format!("{ctx}[{k}][1]"))?,
            ))
        })
        .collect()
}

fn graph_from_edges(n: usize, labels: &[(usize, usize)], ctx: &str) -> Result<InfoGraph> {
    if let Some(&(i, j)) = labels.iter().find(|&&(i, j)| i == 0 || j == 0 || i > n || j > n) {
        return Err(schema(format!(
            "{ctx}: edge ({i},{j}) is out of range; nodes are numbered 1..={n}"
        )));
    }
    InfoGraph::from_labels(n, labels)
}

fn parse_graph(v: &Value, n: usize) -> Result<InfoGraph> {
    let obj = object(v, "graph", &["edges", "complete"])?;
    if let Some(c) = obj.get("complete") {
        if boolean(c, "graph.complete")? {
            return InfoGraph::complete(n);
        }
    }
    let edges = obj
        .get("edges")
        .ok_or_else(|| schema("graph: missing \"edges\""))?;
    graph_from_edges(n, &edge_list(edges, "graph.edges")?, "graph.edges")
}

fn parse_disturbance(v: &Value, d: usize) -> Result<DisturbanceModel> {
    let obj = object(
        v,
        "disturbance",
        &["family", "center", "shape", "radius", "covariance", "moments", "seed", "mc_samples"],
    )?;
    let center = match obj.get("center") {
        Some(c) => vector(c, "disturbance.center", d)?,
        None => DVector::zeros(d),
    };
    let shape = match (obj.get("shape"), obj.get("radius")) {
        (Some(_), Some(_)) => return Err(schema("disturbance: give either shape or radius, not both")),
        (Some(s), None) => matrix(s, "disturbance.shape", Some(d))?,
        (None, Some(r)) => DMatrix::identity(d, d) * number(r, "disturbance.radius")?,
        (None, None) => DMatrix::identity(d, d),
    };
    let family = match obj.get("family").map(|f| f.as_str()) {
        None | Some(Some("uniform_ellipsoid")) => Family::UniformEllipsoid,
        Some(Some("truncated_gaussian")) => Family::TruncatedGaussian {
            covariance: match obj.get("covariance") {
                Some(c) => matrix(c, "disturbance.covariance", Some(d))?,
                None => return Err(schema("disturbance: truncated_gaussian requires \"covariance\"")),
            },
        },
        Some(Some("user_moments")) => Family::UserMoments {
            moments: match obj.get("moments") {
                Some(m) => matrix(m, "disturbance.moments", Some(d + 1))?,
                None => return Err(schema("disturbance: user_moments requires \"moments\"")),
            },
        },
        Some(other) => {
            return Err(schema(format!(
                "disturbance.family: expected uniform_ellipsoid, truncated_gaussian or user_moments, got {}",
                other.map_or("a non-string".to_string(), |s| format!("\"{s}\""))
            )))
        }
    };
    let mut model = DisturbanceModel::new(family, center, shape)?;
    if let Some(s) = obj.get("seed") {
        model.mc_seed = seed(s, "disturbance.seed")?;
    }
    if let Some(n) = obj.get("mc_samples") {
        model.mc_samples = count(n, "disturbance.mc_samples")?;
        if model.mc_samples < 2 {
            return Err(schema("disturbance.mc_samples must be >= 2"));
        }
    }
    Ok(model)
}

fn bounds(v: Option<&Value>, ctx: &str, len: usize) -> Result<Vec<Option<f64>>> {
    match v {
        None | Some(Value::Null) => Ok(vec![None; len]),
        Some(Value::Number(_)) => Ok(vec![Some(number(v.unwrap(), ctx)?); len]),
        Some(Value::Array(a)) => {
            if a.len() != len {
                return Err(schema(format!("{ctx}: expected {len} entries, got {}", a.len())));
            }
            a.iter()
                .enumerate()
                .map(|(i, x)| match x {
                    Value::Null => Ok(None),
                    x => number(x, &format!("{ctx}[{i}]")).map(Some),
                })
                .collect()
        }
        Some(_) => Err(schema(format!("{ctx}: expected a number or an array"))),
    }
}

fn parse_constraints(v: Option<&Value>, sys: &LtvSystem) -> Result<ConstraintData> {
    let stk = stack_system(sys);
    let Some(v) = v else {
        return Ok(ConstraintData::none(&stk));
    };
    let obj = object(v, "constraints", &["F_x", "F_u", "F_xi", "box"])?;
    let (nxs, nus, nxis) = (stk.n_states(), stk.n_inputs(), stk.n_disturbances());
    let blocks = [("F_x", nxs), ("F_u", nus), ("F_xi", nxis)];
    let given: Vec<Option<DMatrix<f64>>> = blocks
        .iter()
        .map(|&(k, _)| obj.get(k).map(|m| matrix(m, &format!("constraints.{k}"), None)).transpose())
        .collect::<Result<_>>()?;
    let rows = given.iter().flatten().map(|m| m.nrows()).max().unwrap_or(0);
    let mut parts = Vec::new();
    for (m, &(k, cols)) in given.into_iter().zip(&blocks) {
        let m = m.unwrap_or_else(|| DMatrix::zeros(rows, cols));
        if m.shape() != (rows, cols) {
            return Err(schema(format!(
                "constraints.{k}: expected {rows}x{cols}, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        parts.push(m);
    }
    let mut fx_rows: Vec<DVector<f64>> = Vec::new();
    let mut fu_rows: Vec<DVector<f64>> = Vec::new();
    let mut fxi_rows: Vec<DVector<f64>> = Vec::new();
    for r in 0..rows {
        fx_rows.push(parts[0].row(r).transpose());
        fu_rows.push(parts[1].row(r).transpose());
        fxi_rows.push(parts[2].row(r).transpose());
    }

    if let Some(b) = obj.get("box") {
        let bo = object(b, "constraints.box", &["u_min", "u_max", "x_min", "x_max"])?;
        let (nu, nx, horizon) = (sys.n_u(), sys.n_x(), sys.horizon());
        let mut push = |fx: Option<(usize, f64)>, fu: Option<(usize, f64)>, rhs: f64| {
            let mut rx = DVector::zeros(nxs);
            let mut ru = DVector::zeros(nus);
            let mut rxi = DVector::zeros(nxis);
            if let Some((i, s)) = fx {
                rx[i] = s;
            }
            if let Some((i, s)) = fu {
                ru[i] = s;
            }
            rxi[0] = rhs;
            fx_rows.push(rx);
            fu_rows.push(ru);
            fxi_rows.push(rxi);
        };
        let umin = bounds(bo.get("u_min"), "constraints.box.u_min", nu)?;
        let umax = bounds(bo.get("u_max"), "constraints.box.u_max", nu)?;
        for t in 0..horizon {
            for k in 0..nu {
                if let Some(hi) = umax[k] {
                    push(None, Some((t * nu + k, 1.0)), -hi);
                }
                if let Some(lo) = umin[k] {
                    push(None, Some((t * nu + k, -1.0)), lo);
                }
            }
        }
        let xmin = bounds(bo.get("x_min"), "constraints.box.x_min", nx)?;
        let xmax = bounds(bo.get("x_max"), "constraints.box.x_max", nx)?;
        for t in 1..=horizon {
            for k in 0..nx {
                if let Some(hi) = xmax[k] {
                    push(Some((t * nx + k, 1.0)), None, -hi);
                }
                if let Some(lo) = xmin[k] {
                    push(Some((t * nx + k, -1.0)), None, lo);
                }
            }
        }
    }
    let stackrows = |rs: &[DVector<f64>], cols: usize| {
        let mut m = DMatrix::zeros(rs.len(), cols);
        for (i, r) in rs.iter().enumerate() {
            m.row_mut(i).copy_from(&r.transpose());
        }
        m
    };
    ConstraintData::new(
        stackrows(&fx_rows, nxs),
        stackrows(&fu_rows, nus),
        stackrows(&fxi_rows, nxis),
    )
}

fn block_repeat(stage: &DMatrix<f64>, copies: usize, last: Option<&DMatrix<f64>>) -> DMatrix<f64> {
    let n = stage.nrows();
    let total = copies + usize::from(last.is_some());
    let mut out = DMatrix::zeros(n * total, n * total);
    for t in 0..copies {
        out.view_mut((t * n, t * n), (n, n)).copy_from(stage);
    }
    if let Some(l) = last {
        out.view_mut((copies * n, copies * n), (n, n)).copy_from(l);
    }
    out
}

fn parse_cost(v: &Value, sys: &LtvSystem) -> Result<CostData> {
    let obj = object(
        v,
        "cost",
        &["R_x", "R_u", "state_weight", "terminal_weight", "input_weight"],
    )?;
    let (nx, nu, horizon) = (sys.n_x(), sys.n_u(), sys.horizon());
    let square = |m: DMatrix<f64>, ctx: &str, n: usize| -> Result<DMatrix<f64>> {
        if m.shape() != (n, n) {
            return Err(schema(format!(
                "{ctx}: expected {n}x{n}, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        Ok(m)
    };
    let rx = match (obj.get("R_x"), obj.get("state_weight")) {
        (Some(_), Some(_)) => return Err(schema("cost: give either R_x or state_weight, not both")),
        (Some(m), None) => {
            let n = nx * (horizon + 1);
            square(matrix(m, "cost.R_x", Some(n))?, "cost.R_x", n)?
        }
        (None, Some(m)) => {
            let stage = square(matrix(m, "cost.state_weight", Some(nx))?, "cost.state_weight", nx)?;
            let terminal = match obj.get("terminal_weight") {
                Some(t) => square(
                    matrix(t, "cost.terminal_weight", Some(nx))?,
                    "cost.terminal_weight",
                    nx,
                )?,
                None => stage.clone(),
            };
            block_repeat(&stage, horizon, Some(&terminal))
        }
        (None, None) => return Err(schema("cost: missing R_x or state_weight")),
    };
    let ru = match (obj.get("R_u"), obj.get("input_weight")) {
        (Some(_), Some(_)) => return Err(schema("cost: give either R_u or input_weight, not both")),
        (Some(m), None) => {
            let n = nu * horizon;
            square(matrix(m, "cost.R_u", Some(n))?, "cost.R_u", n)?
        }
        (None, Some(m)) => {
            let stage = square(matrix(m, "cost.input_weight", Some(nu))?, "cost.input_weight", nu)?;
            block_repeat(&stage, horizon, None)
        }
        (None, None) => return Err(schema("cost: missing R_u or input_weight")),
    };
    CostData::new(rx, ru)
}

fn parse_options(v: Option<&Value>, n: usize) -> Result<Options> {
    let mut o = Options::default();
    let Some(v) = v else {
        return Ok(o);
    };
    let obj = object(
        v,
        "options",
        &["tol", "max_iter", "zero_tol", "seed", "samples", "upper_graph", "force", "robust_backoff"],
    )?;
    if let Some(t) = obj.get("tol") {
        let t = number(t, "options.tol")?;
        if !(t > 0.0) {
            return Err(schema("options.tol must be positive"));
        }
        o.tol = Tolerances { abs: t, rel: t, ..o.tol };
    }
    if let Some(m) = obj.get("max_iter") {
        o.tol.max_iter = count(m, "options.max_iter")? as u32;
    }
    if let Some(z) = obj.get("zero_tol") {
        o.zero = ZeroTest { rel: number(z, "options.zero_tol")? };
    }
    if let Some(s) = obj.get("seed") {
        o.seed = seed(s, "options.seed")?;
    }
    if let Some(s) = obj.get("samples") {
        o.samples = count(s, "options.samples")?;
    }
    if let Some(g) = obj.get("upper_graph") {
        o.upper_graph = Some(graph_from_edges(n, &edge_list(g, "options.upper_graph")?, "options.upper_graph")?);
    }
    if let Some(f) = obj.get("force") {
        o.force = boolean(f, "options.force")?;
    }
    if let Some(b) = obj.get("robust_backoff") {
        o.robust_backoff = number(b, "options.robust_backoff")?;
    }
    Ok(o)
}

pub fn parse_problem(root: &Value) -> Result<Problem> {
    let obj = object(
        root,
        "problem",
        &["system", "graph", "disturbance", "constraints", "cost", "options"],
    )?;
    let section = |k: &str| obj.get(k).ok_or_else(|| schema(format!("missing section \"{k}\"")));
    let system = parse_system(section("system")?)?;
    let d = system.n_xi() * system.horizon();
    let disturbance = parse_disturbance(section("disturbance")?, d)?;
    let constraints = parse_constraints(obj.get("constraints"), &system)?;
    let cost = parse_cost(section("cost")?, &system)?;
    let options = parse_options(obj.get("options"), system.subsystems())?;
    // The graph goes last: a missing self-loop is an assumption failure, not
    // a schema error, and should only surface for an otherwise valid file.
    let graph = parse_graph(section("graph")?, system.subsystems())?;
    Ok(Problem {
        system,
        graph,
        disturbance,
        constraints,
        cost,
        options,
    })
}
