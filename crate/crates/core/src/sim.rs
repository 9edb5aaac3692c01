//! Monte Carlo closed-loop simulation under affine output feedback.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::bound::{ConstraintData, CostData};
use crate::disturbance::DisturbanceModel;
use crate::error::Result;
use crate::linalg::KahanSum;
use crate::system::{LtvSystem, StackedSystem};

#[derive(Clone, Copy, Debug)]
pub struct SimOptions {
    /// Samples per independently seeded stream (stream `k` uses `seed + k`).
    pub shard_size: usize,
    /// Constraint values above this count as violations.
    pub violation_tol: f64,
    /// Number of leading samples kept as a per-sample trace.
    pub trace_rows: usize,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            shard_size: 10_000,
            violation_tol: 1e-9,
            trace_rows: 0,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct TraceRow {
    pub sample: usize,
    pub cost: f64,
    pub max_constraint: f64,
    pub xi: Vec<f64>,
    pub u: Vec<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SimulationResult {
    pub samples: usize,
    pub mean_cost: f64,
    pub std_error: f64,
    /// Largest constraint value `max_i (F_x x + F_u u + F_ξ ξ)_i` over all samples.
    pub max_violation: Option<f64>,
    pub violation_frequency: Vec<f64>,
    /// Samples whose disturbance lies in the support (all, for exact samplers).
    pub in_support: usize,
    /// `max |Ê[ξξᵀ] - M|` and the same in units of its standard error.
    pub moment_residual: f64,
    pub moment_residual_z: f64,
    /// `max |(y - CB u) - Pξ|` along all sample paths.
    pub purified_deviation: f64,
    #[serde(skip)]
    pub trace: Vec<TraceRow>,
}

/// Plant, cost and constraints of one closed-loop experiment.
pub struct ClosedLoop<'a> {
    pub system: &'a LtvSystem,
    pub stacked: &'a StackedSystem,
    pub cost: &'a CostData,
    pub constraints: &'a ConstraintData,
    pub disturbance: &'a DisturbanceModel,
}

/// One trajectory under `u(t) = K_t · (1, y(0), .., y(t))`.
pub struct Rollout {
    pub x: DVector<f64>,
    pub u: DVector<f64>,
    pub y: DVector<f64>,
}

pub fn rollout_feedback(sys: &LtvSystem, k: &DMatrix<f64>, xi: &DVector<f64>) -> Rollout {
    let (nx, nu, ny, nxi) = (sys.n_x(), sys.n_u(), sys.n_y(), sys.n_xi());
    let horizon = sys.horizon();
    let mut x = DVector::zeros(nx * (horizon + 1));
    let mut u = DVector::zeros(nu * horizon);
    let mut y = DVector::zeros(1 + ny * horizon);
    y[0] = 1.0;
    let mut xt = sys.x0().clone();
    x.rows_mut(0, nx).copy_from(&xt);
    for t in 0..horizon {
        let wt = xi.rows(1 + t * nxi, nxi);
        let yt = sys.c(t) * &xt + sys.h(t) * wt;
        y.rows_mut(1 + t * ny, ny).copy_from(&yt);
        let seen = 1 + (t + 1) * ny;
        let ut = k.view((t * nu, 0), (nu, seen)) * y.rows(0, seen);
        u.rows_mut(t * nu, nu).copy_from(&ut);
        xt = sys.a(t) * &xt + sys.b(t) * &ut + sys.g(t) * wt;
        x.rows_mut((t + 1) * nx, nx).copy_from(&xt);
    }
    Rollout { x, u, y }
}

#[derive(Clone)]
struct Shard {
    n: usize,
    cost: KahanSum,
    cost_sq: KahanSum,
    max_violation: f64,
    violations: Vec<usize>,
    in_support: usize,
    moment: DMatrix<f64>,
    moment_sq: DMatrix<f64>,
    purified: f64,
    trace: Vec<TraceRow>,
}

impl ClosedLoop<'_> {
    fn run_shard(
        &self,
        k: &DMatrix<f64>,
        w: &DMatrix<f64>,
        first: usize,
        n: usize,
        seed: u64,
        opts: &SimOptions,
    ) -> Result<Shard> {
        let nxi = self.stacked.n_disturbances();
        let rows = self.constraints.rows();
        let mut sampler = self.disturbance.sampler(seed)?;
        let mut sh = Shard {
            n,
            cost: KahanSum::default(),
            cost_sq: KahanSum::default(),
            max_violation: f64::NEG_INFINITY,
            violations: vec![0; rows],
            in_support: 0,
            moment: DMatrix::zeros(nxi, nxi),
            moment_sq: DMatrix::zeros(nxi, nxi),
            purified: 0.0,
            trace: Vec::new(),
        };
        for s in 0..n {
            let xi = sampler.draw()?;
            let r = rollout_feedback(self.system, k, &xi);
            let c = self.cost.trajectory_cost(&r.x, &r.u);
            sh.cost.add(c);
            sh.cost_sq.add(c * c);

            let eta = &r.y - &self.stacked.cb * &r.u;
            let dev = (eta - &self.stacked.p * &xi).amax();
            sh.purified = sh.purified.max(dev);

            let outer = &xi * xi.transpose();
            sh.moment_sq += outer.component_mul(&outer);
            sh.moment += outer;

            let g = self.constraints.evaluate(&r.x, &r.u, &xi);
            let worst = g.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if self.disturbance.support_margin(w, &xi) >= -1e-12 {
                sh.in_support += 1;
                if rows > 0 {
                    sh.max_violation = sh.max_violation.max(worst);
                    for (i, &v) in g.iter().enumerate() {
                        if v > opts.violation_tol {
                            sh.violations[i] += 1;
                        }
                    }
                }
            }
            if first + s < opts.trace_rows {
                sh.trace.push(TraceRow {
                    sample: first + s,
                    cost: c,
                    max_constraint: worst,
                    xi: xi.iter().copied().collect(),
                    u: r.u.iter().copied().collect(),
                });
            }
        }
        Ok(sh)
    }

    /// Estimates cost and constraint satisfaction of `u = K y` over `n`
    /// disturbance draws. Deterministic given `seed` and `shard_size`.
    pub fn simulate(
        &self,
        k: &DMatrix<f64>,
        m: &DMatrix<f64>,
        n: usize,
        seed: u64,
        opts: &SimOptions,
    ) -> Result<SimulationResult> {
        let w = self.disturbance.support_matrix()?;
        let shard = opts.shard_size.max(1);
        let count = n.div_ceil(shard);
        let shards: Vec<Shard> = (0..count)
            .into_par_iter()
            .map(|s| {
                let first = s * shard;
                let len = shard.min(n - first);
                self.run_shard(k, &w, first, len, seed.wrapping_add(s as u64), opts)
            })
            .collect::<Result<_>>()?;

        let rows = self.constraints.rows();
        let nxi = m.nrows();
        let mut cost = KahanSum::default();
        let mut cost_sq = KahanSum::default();
        let mut max_violation = f64::NEG_INFINITY;
        let mut violations = vec![0usize; rows];
        let mut in_support = 0;
        let mut moment = DMatrix::zeros(nxi, nxi);
        let mut moment_sq = DMatrix::zeros(nxi, nxi);
        let mut purified = 0.0_f64;
        let mut trace = Vec::new();
        for sh in shards {
            cost.merge(&sh.cost);
            cost_sq.merge(&sh.cost_sq);
            max_violation = max_violation.max(sh.max_violation);
            for (a, b) in violations.iter_mut().zip(&sh.violations) {
                *a += b;
            }
            in_support += sh.in_support;
            moment += sh.moment;
            moment_sq += sh.moment_sq;
            purified = purified.max(sh.purified);
            trace.extend(sh.trace);
            debug_assert!(sh.n > 0);
        }
        let nf = n as f64;
        let mean = cost.value() / nf;
        let var = (cost_sq.value() / nf - mean * mean).max(0.0) * nf / (nf - 1.0).max(1.0);
        let emp = moment / nf;
        let emp_var = moment_sq / nf - emp.component_mul(&emp);
        let mut residual = 0.0_f64;
        let mut z = 0.0_f64;
        for idx in 0..emp.len() {
            let diff = (emp[idx] - m[idx]).abs();
            residual = residual.max(diff);
            let se = (emp_var[idx].max(0.0) / nf).sqrt();
            if se > 0.0 {
                z = z.max(diff / se);
            } else if diff > 1e-12 {
                z = f64::INFINITY;
            }
        }
        Ok(SimulationResult {
            samples: n,
            mean_cost: mean,
            std_error: (var / nf).sqrt(),
            max_violation: (rows > 0).then_some(max_violation),
            violation_frequency: violations.iter().map(|&v| v as f64 / nf).collect(),
            in_support,
            moment_residual: residual,
            moment_residual_z: z,
            purified_deviation: purified,
            trace,
        })
    }
}

/// Largest `||u_feedback - QPξ||∞` over `n` draws, where the feedback input
/// comes from running the plant under `u = K y`.
pub fn check_policy_equivalence(
    q: &DMatrix<f64>,
    k: &DMatrix<f64>,
    sys: &LtvSystem,
    stk: &StackedSystem,
    dist: &DisturbanceModel,
    n: usize,
    seed: u64,
) -> Result<f64> {
    let mut sampler = dist.sampler(seed)?;
    let qp = q * &stk.p;
    let mut worst = 0.0_f64;
    for _ in 0..n {
        let xi = sampler.draw()?;
        let r = rollout_feedback(sys, k, &xi);
        worst = worst.max((&r.u - &qp * &xi).amax());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::scalar_problem;
    use crate::system::stack_system;

    #[test]
    fn zero_gain_matches_open_loop_trace() {
        let p = scalar_problem();
        let stk = stack_system(&p.system);
        let m = p.disturbance.moment_matrix().unwrap().matrix;
        let cl = ClosedLoop {
            system: &p.system,
            stacked: &stk,
            cost: &p.cost,
            constraints: &p.constraints,
            disturbance: &p.disturbance,
        };
        let k = DMatrix::zeros(1, 2);
        let r = cl.simulate(&k, &m, 100_000, 3, &SimOptions::default()).unwrap();
        assert!((r.mean_cost - 1.0 / 3.0).abs() < 3.0 * r.std_error);
        assert!(r.purified_deviation < 1e-14);
        assert_eq!(r.in_support, 100_000);
        assert!(r.max_violation.is_none());
    }

    #[test]
    fn simulation_is_deterministic_in_seed() {
        let p = scalar_problem();
        let stk = stack_system(&p.system);
        let m = p.disturbance.moment_matrix().unwrap().matrix;
        let cl = ClosedLoop {
            system: &p.system,
            stacked: &stk,
            cost: &p.cost,
            constraints: &p.constraints,
            disturbance: &p.disturbance,
        };
        let k = DMatrix::from_row_slice(1, 2, &[0.1, -0.5]);
        let opts = SimOptions::default();
        let a = cl.simulate(&k, &m, 25_000, 11, &opts).unwrap();
        let b = cl.simulate(&k, &m, 25_000, 11, &opts).unwrap();
        assert_eq!(a.mean_cost.to_bits(), b.mean_cost.to_bits());
    }
}
