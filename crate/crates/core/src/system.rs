//! Linear time-varying plant data and its trajectory-level (stacked) form.
//!
//! Trajectories follow the lifted convention
//! `x = (x(0), .., x(T))`, `u = (u(0), .., u(T-1))`,
//! `ξ = (1, ξ(0), .., ξ(T-1))` and `y = (1, y(0), .., y(T-1))`, so that
//! `x = B u + G ξ` and `y = C x + H ξ` hold exactly, with the initial state
//! folded into the first column of `G`.

use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{max_abs, ZeroTest};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubsystemDims {
    pub nx: usize,
    pub nu: usize,
    pub ny: usize,
}

/// Plant data `{A(t), B(t), G(t), C(t), H(t)}` over `t = 0..T-1`, plus `x(0)`.
#[derive(Clone, Debug)]
pub struct LtvSystem {
    dims: Vec<SubsystemDims>,
    n_xi: usize,
    x0: DVector<f64>,
    a: Vec<DMatrix<f64>>,
    b: Vec<DMatrix<f64>>,
    g: Vec<DMatrix<f64>>,
    c: Vec<DMatrix<f64>>,
    h: Vec<DMatrix<f64>>,
}

/// Per-timestep system matrices, one entry per `t`.
#[derive(Clone, Debug, Default)]
pub struct Trajectories {
    pub a: Vec<DMatrix<f64>>,
    pub b: Vec<DMatrix<f64>>,
    pub g: Vec<DMatrix<f64>>,
    pub c: Vec<DMatrix<f64>>,
    pub h: Vec<DMatrix<f64>>,
}

fn shape(m: &DMatrix<f64>) -> String {
    format!("{}x{}", m.nrows(), m.ncols())
}

impl LtvSystem {
    pub fn new(
        dims: Vec<SubsystemDims>,
        n_xi: usize,
        x0: DVector<f64>,
        mats: Trajectories,
    ) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::InvalidSystem("at least one subsystem is required".into()));
        }
        if let Some((i, _)) = dims
            .iter()
            .enumerate()
            .find(|(_, d)| d.nx == 0 || d.nu == 0 || d.ny == 0)
        {
            return Err(Error::InvalidSystem(format!(
                "subsystem {} has a zero dimension",
                i + 1
            )));
        }
        if n_xi == 0 {
            return Err(Error::InvalidSystem("disturbance dimension must be >= 1".into()));
        }
        let horizon = mats.a.len();
        if horizon == 0 {
            return Err(Error::InvalidSystem("horizon must be >= 1".into()));
        }
        let nx: usize = dims.iter().map(|d| d.nx).sum();
        let nu: usize = dims.iter().map(|d| d.nu).sum();
        let ny: usize = dims.iter().map(|d| d.ny).sum();
        if x0.len() != nx {
            return Err(Error::Dimension(format!(
                "x0 has length {}, expected {nx}",
                x0.len()
            )));
        }
        let series: [(&'static str, &Vec<DMatrix<f64>>, usize, usize); 5] = [
            ("A", &mats.a, nx, nx),
            ("B", &mats.b, nx, nu),
            ("G", &mats.g, nx, n_xi),
            ("C", &mats.c, ny, nx),
            ("H", &mats.h, ny, n_xi),
        ];
        for (name, list, r, c) in series {
            if list.len() != horizon {
                return Err(Error::Dimension(format!(
                    "{name} has {} timesteps, expected {horizon}",
                    list.len()
                )));
            }
            for (t, m) in list.iter().enumerate() {
                if m.nrows() != r || m.ncols() != c {
                    return Err(Error::TimestepDimension {
                        matrix: name,
                        t,
                        expected: format!("{r}x{c}"),
                        got: shape(m),
                    });
                }
                if m.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidSystem(format!(
                        "{name}({t}) contains a non-finite entry"
                    )));
                }
            }
        }
        if x0.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidSystem("x0 contains a non-finite entry".into()));
        }
        Ok(LtvSystem {
            dims,
            n_xi,
            x0,
            a: mats.a,
            b: mats.b,
            g: mats.g,
            c: mats.c,
            h: mats.h,
        })
    }

    pub fn subsystems(&self) -> usize {
        self.dims.len()
    }
    pub fn dims(&self) -> &[SubsystemDims] {
        &self.dims
    }
    pub fn horizon(&self) -> usize {
        self.a.len()
    }
    pub fn n_x(&self) -> usize {
        self.dims.iter().map(|d| d.nx).sum()
    }
    pub fn n_u(&self) -> usize {
        self.dims.iter().map(|d| d.nu).sum()
    }
    pub fn n_y(&self) -> usize {
        self.dims.iter().map(|d| d.ny).sum()
    }
    pub fn n_xi(&self) -> usize {
        self.n_xi
    }
    pub fn x0(&self) -> &DVector<f64> {
        &self.x0
    }
    pub fn a(&self, t: usize) -> &DMatrix<f64> {
        &self.a[t]
    }
    pub fn b(&self, t: usize) -> &DMatrix<f64> {
        &self.b[t]
    }
    pub fn g(&self, t: usize) -> &DMatrix<f64> {
        &self.g[t]
    }
    pub fn c(&self, t: usize) -> &DMatrix<f64> {
        &self.c[t]
    }
    pub fn h(&self, t: usize) -> &DMatrix<f64> {
        &self.h[t]
    }

    /// Offsets of each subsystem's coordinates inside `x(t)`, `u(t)` and `y(t)`.
    pub fn offsets(&self) -> (Vec<usize>, Vec<usize>, Vec<usize>) {
        let mut ox = Vec::with_capacity(self.dims.len());
        let mut ou = Vec::with_capacity(self.dims.len());
        let mut oy = Vec::with_capacity(self.dims.len());
        let (mut x, mut u, mut y) = (0, 0, 0);
        for d in &self.dims {
            ox.push(x);
            ou.push(u);
            oy.push(y);
            x += d.nx;
            u += d.nu;
            y += d.ny;
        }
        (ox, ou, oy)
    }

    /// `A_s^t = A(t-1) ... A(s)` for `s < t`, identity for `s = t`.
    pub fn state_transition(&self, s: usize, t: usize) -> Result<DMatrix<f64>> {
        if s > t || t > self.horizon() {
            return Err(Error::OutOfRange(format!(
                "state transition requires 0 <= s <= t <= T (got s={s}, t={t}, T={})",
                self.horizon()
            )));
        }
        let n = self.n_x();
        let mut phi = DMatrix::identity(n, n);
        for r in s..t {
            phi = &self.a[r] * phi;
        }
        Ok(phi)
    }

    /// Runs the time recursion for given input and disturbance trajectories,
    /// returning the stacked `(x, y)` (the latter with its leading 1).
    pub fn rollout(&self, u: &DVector<f64>, xi: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let (nx, nu, ny, nxi) = (self.n_x(), self.n_u(), self.n_y(), self.n_xi);
        let horizon = self.horizon();
        let mut x = DVector::zeros(nx * (horizon + 1));
        let mut y = DVector::zeros(1 + ny * horizon);
        y[0] = xi[0];
        let mut xt = self.x0.clone() * xi[0];
        x.rows_mut(0, nx).copy_from(&xt);
        for t in 0..horizon {
            let ut = u.rows(t * nu, nu);
            let wt = xi.rows(1 + t * nxi, nxi);
            let yt = &self.c[t] * &xt + &self.h[t] * wt;
            y.rows_mut(1 + t * ny, ny).copy_from(&yt);
            xt = &self.a[t] * &xt + &self.b[t] * ut + &self.g[t] * wt;
            x.rows_mut((t + 1) * nx, nx).copy_from(&xt);
        }
        (x, y)
    }
}

/// Maps `(subsystem, time)` pairs onto row/column ranges of stacked matrices.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StackIndex {
    pub dims: Vec<SubsystemDims>,
    pub n_xi: usize,
    pub horizon: usize,
}

impl StackIndex {
    fn totals(&self) -> (usize, usize, usize) {
        (
            self.dims.iter().map(|d| d.nx).sum(),
            self.dims.iter().map(|d| d.nu).sum(),
            self.dims.iter().map(|d| d.ny).sum(),
        )
    }
    pub fn n_states(&self) -> usize {
        self.totals().0 * (self.horizon + 1)
    }
    pub fn n_inputs(&self) -> usize {
        self.totals().1 * self.horizon
    }
    pub fn n_outputs(&self) -> usize {
        1 + self.totals().2 * self.horizon
    }
    pub fn n_disturbances(&self) -> usize {
        1 + self.n_xi * self.horizon
    }
    pub fn x_range(&self, i: usize, t: usize) -> Range<usize> {
        let nx = self.totals().0;
        let off: usize = self.dims[..i].iter().map(|d| d.nx).sum();
        let start = t * nx + off;
        start..start + self.dims[i].nx
    }
    pub fn u_range(&self, i: usize, t: usize) -> Range<usize> {
        let nu = self.totals().1;
        let off: usize = self.dims[..i].iter().map(|d| d.nu).sum();
        let start = t * nu + off;
        start..start + self.dims[i].nu
    }
    /// Range of `y_j(t)` inside the lifted output; index 0 is the constant entry.
    pub fn y_range(&self, j: usize, t: usize) -> Range<usize> {
        let ny = self.totals().2;
        let off: usize = self.dims[..j].iter().map(|d| d.ny).sum();
        let start = 1 + t * ny + off;
        start..start + self.dims[j].ny
    }
    pub fn xi_range(&self, t: usize) -> Range<usize> {
        let start = 1 + t * self.n_xi;
        start..start + self.n_xi
    }
    /// `(subsystem, time)` owning the given stacked input coordinate.
    pub fn input_owner(&self, row: usize) -> (usize, usize) {
        let nu = self.totals().1;
        let (t, mut r) = (row / nu, row % nu);
        for (i, d) in self.dims.iter().enumerate() {
            if r < d.nu {
                return (i, t);
            }
            r -= d.nu;
        }
        unreachable!("input coordinate {row} out of range")
    }
    /// `(subsystem, time)` owning the given lifted output coordinate, or
    /// `None` for the constant entry.
    pub fn output_owner(&self, col: usize) -> Option<(usize, usize)> {
        if col == 0 {
            return None;
        }
        let ny = self.totals().2;
        let (t, mut r) = ((col - 1) / ny, (col - 1) % ny);
        for (j, d) in self.dims.iter().enumerate() {
            if r < d.ny {
                return Some((j, t));
            }
            r -= d.ny;
        }
        unreachable!("output coordinate {col} out of range")
    }
}

/// Trajectory-level matrices `B, G, C, H`, the purified-output map
/// `P = CG + H` and the input-to-output map `CB`.
#[derive(Clone, Debug)]
pub struct StackedSystem {
    pub b: DMatrix<f64>,
    pub g: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub h: DMatrix<f64>,
    pub p: DMatrix<f64>,
    pub cb: DMatrix<f64>,
    pub index: StackIndex,
}

impl StackedSystem {
    pub fn n_states(&self) -> usize {
        self.b.nrows()
    }
    pub fn n_inputs(&self) -> usize {
        self.b.ncols()
    }
    pub fn n_outputs(&self) -> usize {
        self.c.nrows()
    }
    pub fn n_disturbances(&self) -> usize {
        self.g.ncols()
    }
}

pub fn stack_system(sys: &LtvSystem) -> StackedSystem {
    let horizon = sys.horizon();
    let (nx, nu, ny, nxi) = (sys.n_x(), sys.n_u(), sys.n_y(), sys.n_xi());
    let big_nx = nx * (horizon + 1);
    let big_nu = nu * horizon;
    let big_ny = 1 + ny * horizon;
    let big_nxi = 1 + nxi * horizon;

    let mut b = DMatrix::zeros(big_nx, big_nu);
    let mut g = DMatrix::zeros(big_nx, big_nxi);
    let mut c = DMatrix::zeros(big_ny, big_nx);
    let mut h = DMatrix::zeros(big_ny, big_nxi);

    for t in 0..=horizon {
        // transitions[s] = A_s^t for s = 0..=t
        let mut transitions = vec![DMatrix::identity(nx, nx); t + 1];
        for s in (0..t).rev() {
            transitions[s] = &transitions[s + 1] * sys.a(s);
        }
        g.view_mut((t * nx, 0), (nx, 1))
            .copy_from(&(&transitions[0] * sys.x0()));
        for s in 0..t {
            let phi = &transitions[s + 1];
            b.view_mut((t * nx, s * nu), (nx, nu))
                .copy_from(&(phi * sys.b(s)));
            g.view_mut((t * nx, 1 + s * nxi), (nx, nxi))
                .copy_from(&(phi * sys.g(s)));
        }
    }
    h[(0, 0)] = 1.0;
    for t in 0..horizon {
        c.view_mut((1 + t * ny, t * nx), (ny, nx)).copy_from(sys.c(t));
        h.view_mut((1 + t * ny, 1 + t * nxi), (ny, nxi))
            .copy_from(sys.h(t));
    }
    let p = &c * &g + &h;
    let cb = &c * &b;
    StackedSystem {
        b,
        g,
        c,
        h,
        p,
        cb,
        index: StackIndex {
            dims: sys.dims().to_vec(),
            n_xi: nxi,
            horizon,
        },
    }
}

/// A block of `C(t) A_{s+1}^t B(s)` whose magnitude sits close to the
/// nonzero threshold.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NearThreshold {
    /// Output subsystem (1-based).
    pub output: usize,
    /// Input subsystem (1-based).
    pub input: usize,
    pub s: usize,
    pub t: usize,
    pub magnitude: f64,
    pub threshold: f64,
}

/// Which input subsystems causally reach which output subsystems.
///
/// `reaches(k, j)` is true when some block `[C(t) A_{s+1}^t B(s)]_{kj}` with
/// `0 <= s < t <= T-1` passes the nonzero test.
#[derive(Clone, Debug)]
pub struct Coupling {
    n: usize,
    nonzero: Vec<bool>,
    pub near_threshold: Vec<NearThreshold>,
}

impl Coupling {
    pub fn reaches(&self, output: usize, input: usize) -> bool {
        self.nonzero[output * self.n + input]
    }
    pub fn len(&self) -> usize {
        self.n
    }
    pub fn is_empty(&self) -> bool {
        self.n == 0
    }
}

pub fn coupling(sys: &LtvSystem, zero: ZeroTest) -> Coupling {
    let n = sys.subsystems();
    let horizon = sys.horizon();
    let nx = sys.n_x();
    let (_, ou, oy) = sys.offsets();
    let dims = sys.dims();
    let mut nonzero = vec![false; n * n];
    let mut near = Vec::new();
    for t in 1..horizon {
        let mut phi = DMatrix::identity(nx, nx); // A_{s+1}^t, starting at s = t-1
        for s in (0..t).rev() {
            if s + 1 < t {
                phi = &phi * sys.a(s + 1);
            }
            let scale = max_abs(sys.c(t)).max(max_abs(&phi)).max(max_abs(sys.b(s)));
            let thr = zero.threshold(scale);
            let m = sys.c(t) * &phi * sys.b(s);
            for k in 0..n {
                for j in 0..n {
                    let blk = m.view((oy[k], ou[j]), (dims[k].ny, dims[j].nu));
                    let mag = blk.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
                    if zero.is_nonzero(mag, scale) {
                        nonzero[k * n + j] = true;
                    }
                    if mag > 0.0 && mag > thr * 1e-3 && mag < thr * 1e3 {
                        near.push(NearThreshold {
                            output: k + 1,
                            input: j + 1,
                            s,
                            t,
                            magnitude: mag,
                            threshold: thr,
                        });
                    }
                }
            }
        }
    }
    Coupling {
        n,
        nonzero,
        near_threshold: near,
    }
}

/// Entry `i` is true iff subsystem `i`'s input causally reaches its own output.
pub fn check_local_authority(sys: &LtvSystem, zero: ZeroTest) -> Vec<bool> {
    let cp = coupling(sys, zero);
    (0..sys.subsystems()).map(|i| cp.reaches(i, i)).collect()
}
