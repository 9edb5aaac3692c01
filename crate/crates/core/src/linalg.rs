//! Small dense linear-algebra helpers shared across modules.

use nalgebra::{DMatrix, DVector};

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

/// Nonzero test for matrix blocks built from products of system data.
///
/// A block counts as nonzero when its largest entry exceeds
/// `rel * (1 + scale)`, where `scale` is the largest entry among the factors
/// that produced it.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ZeroTest {
    pub rel: f64,
}

impl Default for ZeroTest {
    fn default() -> Self {
        ZeroTest { rel: 1e-12 }
    }
}

impl ZeroTest {
    pub fn threshold(&self, scale: f64) -> f64 {
        self.rel * (1.0 + scale)
    }

    pub fn is_nonzero(&self, magnitude: f64, scale: f64) -> bool {
        magnitude > self.threshold(scale)
    }
}

/// Solves `K X = Q` for `K`, where `X` is unit lower triangular.
///
/// Back substitution over columns; entries of `X` above the diagonal are
/// never read.
pub fn solve_right_unit_lower(q: &DMatrix<f64>, x: &DMatrix<f64>) -> DMatrix<f64> {
    let n = x.nrows();
    assert_eq!(x.ncols(), n);
    assert_eq!(q.ncols(), n);
    let mut k = q.clone();
    for c in (0..n).rev() {
        for r in (c + 1)..n {
            let xr = x[(r, c)];
            if xr != 0.0 {
                for row in 0..k.nrows() {
                    let v = k[(row, r)];
                    k[(row, c)] -= v * xr;
                }
            }
        }
    }
    k
}

pub fn is_unit_lower_triangular(x: &DMatrix<f64>) -> bool {
    x.is_square()
        && (0..x.nrows()).all(|r| {
            x[(r, r)] == 1.0 && ((r + 1)..x.ncols()).all(|c| x[(r, c)] == 0.0)
        })
}

pub fn symmetric_part(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub fn min_eigenvalue(sym: &DMatrix<f64>) -> f64 {
    if sym.nrows() == 0 {
        return 0.0;
    }
    sym.clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .fold(f64::INFINITY, |a, &b| a.min(b))
}

/// Second-order cone margin `v[0] - ||v[1..]||`; nonnegative iff `v` is in the cone.
pub fn soc_margin(v: &[f64]) -> f64 {
    let tail = v[1..].iter().map(|x| x * x).sum::<f64>().sqrt();
    v[0] - tail
}

/// Entrywise Kahan-compensated accumulator.
#[derive(Clone, Debug, Default)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn add(&mut self, x: f64) {
        let y = x - self.comp;
        let t = self.sum + y;
        self.comp = (t - self.sum) - y;
        self.sum = t;
    }

    pub fn merge(&mut self, other: &KahanSum) {
        self.add(other.sum);
        self.add(-other.comp);
    }

    pub fn value(&self) -> f64 {
        self.sum
    }
}

pub fn quad_form(m: &DMatrix<f64>, x: &DVector<f64>) -> f64 {
    x.dot(&(m * x))
}
