//! Information graphs, precedence, transitive closure and the partially
//! nested information relaxation.
//!
//! Nodes are 0-based in this API. Problem and report files use 1-based
//! subsystem labels; conversion happens at the serialization boundary.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::ZeroTest;
use crate::system::{coupling, LtvSystem};

/// Directed graph on `n` subsystems; edge `(i, j)` means subsystem `j`
/// observes subsystem `i`'s outputs. Every node carries a self-loop.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct InfoGraph {
    n: usize,
    rows: Vec<u64>,
}

const MAX_NODES: usize = 64;

impl InfoGraph {
    /// Builds a graph from 0-based edges, rejecting graphs that lack a
    /// self-loop at some node.
    pub fn new(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let g = Self::from_edges_unchecked(n, edges)?;
        let missing: Vec<usize> = (0..n).filter(|&i| !g.contains(i, i)).map(|i| i + 1).collect();
        if !missing.is_empty() {
            return Err(Error::MissingSelfLoop { nodes: missing });
        }
        Ok(g)
    }

    /// Builds a graph from 1-based edge labels.
    pub fn from_labels(n: usize, labels: &[(usize, usize)]) -> Result<Self> {
        let edges = labels
            .iter()
            .map(|&(i, j)| {
                if i == 0 || j == 0 {
                    Err(Error::InvalidGraph(format!(
                        "edge ({i}, {j}): subsystem labels start at 1"
                    )))
                } else {
                    Ok((i - 1, j - 1))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(n, &edges)
    }

    fn empty(n: usize) -> Result<Self> {
        if n == 0 || n > MAX_NODES {
            return Err(Error::InvalidGraph(format!(
                "node count must be in 1..={MAX_NODES}, got {n}"
            )));
        }
        Ok(InfoGraph { n, rows: vec![0; n] })
    }

    fn from_edges_unchecked(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut g = Self::empty(n)?;
        for &(i, j) in edges {
            if i >= n || j >= n {
                return Err(Error::InvalidGraph(format!(
                    "edge ({}, {}) references a node outside 1..={n}",
                    i + 1,
                    j + 1
                )));
            }
            g.insert(i, j);
        }
        Ok(g)
    }

    pub fn self_loops(n: usize) -> Result<Self> {
        Self::new(n, &(0..n).map(|i| (i, i)).collect::<Vec<_>>())
    }

    pub fn complete(n: usize) -> Result<Self> {
        let mut g = Self::empty(n)?;
        let full = if n == 64 { u64::MAX } else { (1u64 << n) - 1 };
        g.rows.iter_mut().for_each(|r| *r = full);
        Ok(g)
    }

    pub fn nodes(&self) -> usize {
        self.n
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.rows[i] >> j & 1 == 1
    }

    fn insert(&mut self, i: usize, j: usize) {
        self.rows[i] |= 1 << j;
    }

    /// Adds an edge; self-loops are always present already.
    pub fn with_edge(mut self, i: usize, j: usize) -> Self {
        self.insert(i, j);
        self
    }

    /// Edges in canonical (row-major) order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        (0..self.n)
            .flat_map(|i| (0..self.n).map(move |j| (i, j)))
            .filter(|&(i, j)| self.contains(i, j))
            .collect()
    }

    /// Edges as 1-based labels.
    pub fn labels(&self) -> Vec<(usize, usize)> {
        self.edges().into_iter().map(|(i, j)| (i + 1, j + 1)).collect()
    }

    pub fn edge_count(&self) -> usize {
        self.rows.iter().map(|r| r.count_ones() as usize).sum()
    }

    pub fn is_subgraph_of(&self, other: &InfoGraph) -> bool {
        self.n == other.n && self.rows.iter().zip(&other.rows).all(|(a, b)| a & !b == 0)
    }

    /// Edges of `self` missing from `other`.
    pub fn difference(&self, other: &InfoGraph) -> Vec<(usize, usize)> {
        self.edges()
            .into_iter()
            .filter(|&(i, j)| !other.contains(i, j))
            .collect()
    }

    pub fn union(&self, other: &InfoGraph) -> InfoGraph {
        assert_eq!(self.n, other.n);
        InfoGraph {
            n: self.n,
            rows: self.rows.iter().zip(&other.rows).map(|(a, b)| a | b).collect(),
        }
    }

    /// Graphviz rendering with 1-based node labels.
    pub fn to_dot(&self, name: &str) -> String {
        let mut s = format!("digraph {name} {{\n");
        for i in 0..self.n {
            s.push_str(&format!("  {};\n", i + 1));
        }
        for (i, j) in self.edges() {
            s.push_str(&format!("  {} -> {};\n", i + 1, j + 1));
        }
        s.push_str("}\n");
        s
    }
}

impl fmt::Debug for InfoGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "InfoGraph{:?}", self.labels())
    }
}

impl fmt::Display for InfoGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .labels()
            .iter()
            .map(|(i, j)| format!("({i},{j})"))
            .collect();
        write!(f, "{{{}}}", parts.join(","))
    }
}

impl Serialize for InfoGraph {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Repr {
            nodes: usize,
            edges: Vec<(usize, usize)>,
        }
        Repr {
            nodes: self.n,
            edges: self.labels(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for InfoGraph {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Repr {
            nodes: usize,
            edges: Vec<(usize, usize)>,
        }
        let r = Repr::deserialize(d)?;
        InfoGraph::from_labels(r.nodes, &r.edges).map_err(serde::de::Error::custom)
    }
}

/// Warshall's algorithm over the adjacency bit-matrix.
pub fn transitive_closure(g: &InfoGraph) -> InfoGraph {
    let mut rows = g.rows.clone();
    for k in 0..g.n {
        let rk = rows[k];
        for row in rows.iter_mut() {
            if *row >> k & 1 == 1 {
                *row |= rk;
            }
        }
    }
    InfoGraph { n: g.n, rows }
}

fn precedence_rows(sys: &LtvSystem, g: &InfoGraph, zero: ZeroTest) -> Result<InfoGraph> {
    if sys.subsystems() != g.nodes() {
        return Err(Error::Dimension(format!(
            "graph has {} nodes but the system has {} subsystems",
            g.nodes(),
            sys.subsystems()
        )));
    }
    let cp = coupling(sys, zero);
    let n = g.nodes();
    let mut p = InfoGraph::empty(n)?;
    for i in 0..n {
        for k in 0..n {
            if !g.contains(k, i) {
                continue;
            }
            for j in 0..n {
                if cp.reaches(k, j) {
                    // j precedes i
                    p.insert(j, i);
                }
            }
        }
    }
    Ok(p)
}

/// Precedence graph: edge `(j, i)` iff the input of `j` reaches, at a later
/// time, an output that controller `i` observes.
pub fn precedence_graph(sys: &LtvSystem, g: &InfoGraph, zero: ZeroTest) -> Result<InfoGraph> {
    let p = precedence_rows(sys, g, zero)?;
    let missing: Vec<usize> = (0..p.n).filter(|&i| !p.contains(i, i)).map(|i| i + 1).collect();
    if !missing.is_empty() {
        return Err(Error::NoLocalAuthority { subsystems: missing });
    }
    Ok(p)
}

/// Partial-nestedness test via the fixed point `g = closure(precedence(g))`.
pub fn is_partially_nested(sys: &LtvSystem, g: &InfoGraph, zero: ZeroTest) -> bool {
    match precedence_rows(sys, g, zero) {
        Ok(p) => transitive_closure(&p) == *g,
        Err(_) => false,
    }
}

/// The smallest partially nested supergraph of `g`:
/// the transitive closure of its precedence graph.
pub fn relax_information(sys: &LtvSystem, g: &InfoGraph, zero: ZeroTest) -> Result<InfoGraph> {
    let relaxed = transitive_closure(&precedence_graph(sys, g, zero)?);
    if !g.is_subgraph_of(&relaxed) {
        return Err(Error::RelaxationUnstable(format!(
            "relaxed graph {relaxed} does not contain {g}; edges lost: {:?}",
            g.difference(&relaxed)
        )));
    }
    if !is_partially_nested(sys, &relaxed, zero) {
        let again = precedence_rows(sys, &relaxed, zero).map(|p| transitive_closure(&p));
        return Err(Error::RelaxationUnstable(format!(
            "closure {relaxed} is not a fixed point (next iterate {again:?}); \
             consider adjusting the zero tolerance"
        )));
    }
    Ok(relaxed)
}

/// Relaxation that tolerates subsystems without local input authority by
/// folding `g` itself into the precedence edges before closing.
///
/// Coincides with [`relax_information`] whenever every subsystem passes the
/// local-authority check.
pub fn relax_information_forced(sys: &LtvSystem, g: &InfoGraph, zero: ZeroTest) -> Result<InfoGraph> {
    let p = precedence_rows(sys, g, zero)?.union(g);
    Ok(transitive_closure(&p))
}

/// Largest partially nested subgraph of `g` (ties broken by canonical edge
/// order), or `None` if even the self-loop graph is not partially nested.
///
/// Exhaustive over subsets of the non-loop edges up to 16 of them; greedy
/// edge removal beyond that.
pub fn largest_pn_subgraph(sys: &LtvSystem, g: &InfoGraph, zero: ZeroTest) -> Option<InfoGraph> {
    if is_partially_nested(sys, g, zero) {
        return Some(g.clone());
    }
    let loops = InfoGraph::self_loops(g.nodes()).ok()?;
    let extra: Vec<(usize, usize)> = g.edges().into_iter().filter(|&(i, j)| i != j).collect();
    if extra.len() <= 16 {
        let mut best: Option<InfoGraph> = None;
        for mask in 0u32..(1 << extra.len()) {
            let mut cand = loops.clone();
            for (b, &(i, j)) in extra.iter().enumerate() {
                if mask >> b & 1 == 1 {
                    cand.insert(i, j);
                }
            }
            let better = best.as_ref().is_none_or(|b| cand.edge_count() > b.edge_count());
            if better && is_partially_nested(sys, &cand, zero) {
                best = Some(cand);
            }
        }
        return best;
    }
    let mut cur = g.clone();
    for &(i, j) in extra.iter().rev() {
        if is_partially_nested(sys, &cur, zero) {
            return Some(cur);
        }
        cur.rows[i] &= !(1 << j);
    }
    is_partially_nested(sys, &cur, zero).then_some(cur)
}
