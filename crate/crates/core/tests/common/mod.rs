//! Independent reference implementations used by the integration tests.
//!
//! Nothing here calls the library's stacking, precedence, closure or solver
//! code; library types are used only as containers.

#![allow(dead_code)]

use std::collections::VecDeque;

use decrelax::bound::{objective_value, CostData};
use decrelax::policy::SparsityPattern;
use decrelax::{InfoGraph, LtvSystem, StackedSystem};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

pub fn gaussian_vector<R: Rng>(rng: &mut R, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

/// Plain time recursion `x(t+1) = A x + B u + G w`, `y(t) = C x + H w`,
/// with `ξ = (1, w(0), ..)` and the initial state scaled by `ξ₁`.
pub fn recursion(sys: &LtvSystem, u: &DVector<f64>, xi: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
    let (nx, nu, ny, nw) = (sys.n_x(), sys.n_u(), sys.n_y(), sys.n_xi());
    let horizon = sys.horizon();
    let mut xs = vec![sys.x0() * xi[0]];
    let mut ys = vec![xi[0]];
    for t in 0..horizon {
        let w = DVector::from_iterator(nw, (0..nw).map(|k| xi[1 + t * nw + k]));
        let ut = DVector::from_iterator(nu, (0..nu).map(|k| u[t * nu + k]));
        let y = sys.c(t) * &xs[t] + sys.h(t) * &w;
        ys.extend(y.iter());
        let next = sys.a(t) * &xs[t] + sys.b(t) * ut + sys.g(t) * w;
        xs.push(next);
    }
    let x = DVector::from_iterator(nx * (horizon + 1), xs.iter().flat_map(|v| v.iter().copied()));
    let y = DVector::from_vec(ys);
    assert_eq!(y.len(), 1 + ny * horizon);
    (x, y)
}

fn offsets(sizes: impl Iterator<Item = usize>) -> Vec<usize> {
    let mut out = vec![0];
    for s in sizes {
        out.push(out.last().unwrap() + s);
    }
    out
}

/// Precedence by definition: for every `(j, i, k, s, t)` form
/// `C(t) A(t-1)..A(s+1) B(s)` from scratch and test the `(k, j)` block.
pub fn brute_precedence(sys: &LtvSystem, g: &InfoGraph) -> InfoGraph {
    let n = sys.subsystems();
    let dims = sys.dims();
    let ou = offsets(dims.iter().map(|d| d.nu));
    let oy = offsets(dims.iter().map(|d| d.ny));
    let mut edges = Vec::new();
    for j in 0..n {
        for i in 0..n {
            let mut found = false;
            for k in 0..n {
                if !g.contains(k, i) {
                    continue;
                }
                for t in 1..sys.horizon() {
                    for s in 0..t {
                        let mut m = sys.b(s).clone();
                        for r in s + 1..t {
                            m = sys.a(r) * m;
                        }
                        let m = sys.c(t) * m;
                        let blk = m.view((oy[k], ou[j]), (dims[k].ny, dims[j].nu));
                        if blk.iter().any(|v| v.abs() > 1e-9) {
                            found = true;
                        }
                    }
                }
            }
            if found {
                edges.push((j, i));
            }
        }
    }
    graph_from_edges(n, &edges)
}

/// Graph with the given edges plus every self-loop. Oracles are only run on
/// systems where each subsystem reaches its own output, so precedence
/// graphs always carry their self-loops.
pub fn graph_from_edges(n: usize, edges: &[(usize, usize)]) -> InfoGraph {
    let mut loops: Vec<(usize, usize)> = edges.to_vec();
    for i in 0..n {
        if !loops.contains(&(i, i)) {
            loops.push((i, i));
        }
    }
    InfoGraph::new(n, &loops).unwrap()
}

/// Reachability closure by breadth-first search from every node.
pub fn bfs_closure(g: &InfoGraph) -> InfoGraph {
    let n = g.nodes();
    let mut edges = Vec::new();
    for src in 0..n {
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([src]);
        seen[src] = true;
        while let Some(v) = queue.pop_front() {
            for w in 0..n {
                if g.contains(v, w) && !seen[w] {
                    seen[w] = true;
                    queue.push_back(w);
                }
            }
        }
        for (dst, &s) in seen.iter().enumerate() {
            if s {
                edges.push((src, dst));
            }
        }
    }
    graph_from_edges(n, &edges)
}

/// Partial nestedness as the fixed point of the reference precedence and
/// closure.
pub fn oracle_is_pn(sys: &LtvSystem, g: &InfoGraph) -> bool {
    bfs_closure(&brute_precedence(sys, g)) == *g
}

/// All graphs on `n` nodes that contain every self-loop.
pub fn all_self_looped_graphs(n: usize) -> Vec<InfoGraph> {
    let extra: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .filter(|(i, j)| i != j)
        .collect();
    (0u32..1 << extra.len())
        .map(|mask| {
            let edges: Vec<(usize, usize)> = extra
                .iter()
                .enumerate()
                .filter(|(b, _)| mask >> b & 1 == 1)
                .map(|(_, &e)| e)
                .collect();
            graph_from_edges(n, &edges)
        })
        .collect()
}

/// Minimum of the expected cost over the free entries of `pat`, from the
/// normal equations of the quadratic recovered by finite probing of
/// `objective_value` (exact for a quadratic).
pub fn normal_equations_optimum(
    stk: &StackedSystem,
    cost: &CostData,
    m: &DMatrix<f64>,
    pat: &SparsityPattern,
) -> (f64, DVector<f64>) {
    let n = pat.n_free();
    let f = |v: &DVector<f64>| objective_value(&pat.unpack(v.as_slice()), stk, cost, m);
    let zero = DVector::zeros(n);
    let f0 = f(&zero);
    let unit = |i: usize| {
        let mut e = DVector::zeros(n);
        e[i] = 1.0;
        e
    };
    let fe: Vec<f64> = (0..n).map(|i| f(&unit(i))).collect();
    let fm: Vec<f64> = (0..n).map(|i| f(&(-unit(i)))).collect();
    let mut h = DMatrix::zeros(n, n);
    let mut c = DVector::zeros(n);
    for i in 0..n {
        h[(i, i)] = (fe[i] + fm[i] - 2.0 * f0) / 2.0;
        c[i] = (fe[i] - fm[i]) / 2.0;
        for j in 0..i {
            let fij = f(&(unit(i) + unit(j)));
            let v = (fij - fe[i] - fe[j] + f0) / 2.0;
            h[(i, j)] = v;
            h[(j, i)] = v;
        }
    }
    // f(q) = qᵀHq + cᵀq + f0, stationary at 2Hq = -c.
    let q = (h * 2.0).svd(true, true).solve(&(-&c), 1e-12).unwrap();
    (f(&q), q)
}
