//! Causal affine policies respecting an information graph, and the
//! conversion between Youla parameters `Q` (acting on purified outputs) and
//! output-feedback gains `K`.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::graph::InfoGraph;
use crate::linalg::{is_unit_lower_triangular, solve_right_unit_lower};
use crate::system::{StackIndex, StackedSystem};

/// Free entries of an `N_u × N_y` policy matrix.
///
/// Entry `(u_i(t), y_j(s))` is free iff `(j, i)` is an edge and `s <= t`.
/// The constant column is always free; it carries the affine offset.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SparsityPattern {
    rows: usize,
    cols: usize,
    /// Row-major mask.
    mask: Vec<bool>,
    /// Packed coordinate -> `(row, col)`, row-major order.
    free: Vec<(usize, usize)>,
    /// `(row, col)` -> packed coordinate.
    #[serde(skip)]
    slot: Vec<Option<usize>>,
}

impl SparsityPattern {
    pub fn from_mask(rows: usize, cols: usize, mask: Vec<bool>) -> Self {
        assert_eq!(mask.len(), rows * cols);
        let mut free = Vec::new();
        let mut slot = vec![None; rows * cols];
        for r in 0..rows {
            for c in 0..cols {
                if mask[r * cols + c] {
                    slot[r * cols + c] = Some(free.len());
                    free.push((r, c));
                }
            }
        }
        SparsityPattern {
            rows,
            cols,
            mask,
            free,
            slot,
        }
    }

    /// Only the constant column is free: open-loop affine policies, which
    /// every information structure can implement.
    pub fn open_loop(index: &StackIndex) -> Self {
        let (rows, cols) = (index.n_inputs(), index.n_outputs());
        let mask = (0..rows * cols).map(|k| k % cols == 0).collect();
        Self::from_mask(rows, cols, mask)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }
    pub fn cols(&self) -> usize {
        self.cols
    }
    pub fn n_free(&self) -> usize {
        self.free.len()
    }
    pub fn is_free(&self, r: usize, c: usize) -> bool {
        self.mask[r * self.cols + c]
    }
    pub fn slot(&self, r: usize, c: usize) -> Option<usize> {
        self.slot[r * self.cols + c]
    }
    pub fn free_entries(&self) -> &[(usize, usize)] {
        &self.free
    }

    pub fn pack(&self, q: &DMatrix<f64>) -> DVector<f64> {
        DVector::from_iterator(self.free.len(), self.free.iter().map(|&(r, c)| q[(r, c)]))
    }

    pub fn unpack(&self, v: &[f64]) -> DMatrix<f64> {
        assert_eq!(v.len(), self.free.len());
        let mut q = DMatrix::zeros(self.rows, self.cols);
        for (&(r, c), &x) in self.free.iter().zip(v) {
            q[(r, c)] = x;
        }
        q
    }

    /// Largest magnitude among entries outside the pattern.
    pub fn off_pattern_max(&self, q: &DMatrix<f64>) -> f64 {
        let mut worst = 0.0_f64;
        for r in 0..self.rows {
            for c in 0..self.cols {
                if !self.is_free(r, c) {
                    worst = worst.max(q[(r, c)].abs());
                }
            }
        }
        worst
    }

    /// Zeroes every entry outside the pattern.
    pub fn project(&self, q: &DMatrix<f64>) -> DMatrix<f64> {
        self.unpack(self.pack(q).as_slice())
    }

    pub fn mask_rows(&self) -> Vec<Vec<bool>> {
        self.mask.chunks(self.cols).map(|r| r.to_vec()).collect()
    }
}

/// Subspace of causal affine controllers respecting `g`.
pub fn sparsity_pattern(index: &StackIndex, g: &InfoGraph) -> SparsityPattern {
    let rows = index.n_inputs();
    let cols = index.n_outputs();
    let mut mask = vec![false; rows * cols];
    for r in 0..rows {
        let (i, t) = index.input_owner(r);
        mask[r * cols] = true;
        for c in 1..cols {
            let (j, s) = index.output_owner(c).expect("non-constant column");
            if s <= t && g.contains(j, i) {
                mask[r * cols + c] = true;
            }
        }
    }
    SparsityPattern::from_mask(rows, cols, mask)
}

/// `K = Q (I + CB Q)⁻¹`.
pub fn youla_to_feedback(q: &DMatrix<f64>, stk: &StackedSystem) -> DMatrix<f64> {
    let n = stk.n_outputs();
    let x = DMatrix::identity(n, n) + &stk.cb * q;
    assert!(
        is_unit_lower_triangular(&x),
        "I + CB Q must be unit lower triangular for a causal Q"
    );
    solve_right_unit_lower(q, &x)
}

/// `Q = K (I - CB K)⁻¹`.
pub fn feedback_to_youla(k: &DMatrix<f64>, stk: &StackedSystem) -> DMatrix<f64> {
    let n = stk.n_outputs();
    let x = DMatrix::identity(n, n) - &stk.cb * k;
    assert!(
        is_unit_lower_triangular(&x),
        "I - CB K must be unit lower triangular for a causal K"
    );
    solve_right_unit_lower(k, &x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::SubsystemDims;

    fn index(n: usize, horizon: usize) -> StackIndex {
        StackIndex {
            dims: vec![SubsystemDims { nx: 1, nu: 1, ny: 1 }; n],
            n_xi: 1,
            horizon,
        }
    }

    #[test]
    fn two_scalar_subsystems_one_step_self_loops() {
        let idx = index(2, 1);
        let pat = sparsity_pattern(&idx, &InfoGraph::self_loops(2).unwrap());
        // columns: const, y1(0), y2(0); rows: u1(0), u2(0)
        assert_eq!(pat.free_entries(), &[(0, 0), (0, 1), (1, 0), (1, 2)]);
        assert_eq!(pat.n_free(), 4);
    }

    #[test]
    fn complete_graph_is_causal_lower_triangle() {
        let idx = index(2, 3);
        let pat = sparsity_pattern(&idx, &InfoGraph::complete(2).unwrap());
        for r in 0..pat.rows() {
            let (_, t) = idx.input_owner(r);
            for c in 0..pat.cols() {
                let causal = idx.output_owner(c).is_none_or(|(_, s)| s <= t);
                assert_eq!(pat.is_free(r, c), causal);
            }
        }
        // 2 inputs per step, 2 outputs per step: sum over t of 2*(1 + 2(t+1))
        assert_eq!(pat.n_free(), 2 * (3 + 5 + 7));
    }

    #[test]
    fn added_edge_frees_exactly_cross_entries() {
        let idx = index(2, 3);
        let base = sparsity_pattern(&idx, &InfoGraph::self_loops(2).unwrap());
        let more = sparsity_pattern(&idx, &InfoGraph::self_loops(2).unwrap().with_edge(0, 1));
        for r in 0..base.rows() {
            for c in 0..base.cols() {
                let gained = more.is_free(r, c) && !base.is_free(r, c);
                let expected = match (idx.input_owner(r), idx.output_owner(c)) {
                    ((1, t), Some((0, s))) => s <= t,
                    _ => false,
                };
                assert_eq!(gained, expected, "entry ({r}, {c})");
                assert!(!base.is_free(r, c) || more.is_free(r, c));
            }
        }
    }

    #[test]
    fn open_loop_pattern_has_constant_column_only() {
        let idx = index(2, 2);
        let pat = SparsityPattern::open_loop(&idx);
        assert_eq!(pat.n_free(), idx.n_inputs());
        assert!(pat.free_entries().iter().all(|&(_, c)| c == 0));
    }
}
