//! Named and randomly generated problem instances.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::bound::{ConstraintData, CostData, Options, Problem};
use crate::disturbance::DisturbanceModel;
use crate::error::Result;
use crate::graph::InfoGraph;
use crate::system::{stack_system, LtvSystem, StackedSystem, SubsystemDims, Trajectories};

fn constant(horizon: usize, m: DMatrix<f64>) -> Vec<DMatrix<f64>> {
    vec![m; horizon]
}

/// Time-invariant system with scalar subsystems and `B = C = G = H = I`.
pub fn scalar_network(a: DMatrix<f64>, horizon: usize) -> LtvSystem {
    let n = a.nrows();
    let eye = DMatrix::identity(n, n);
    LtvSystem::new(
        vec![SubsystemDims { nx: 1, nu: 1, ny: 1 }; n],
        n,
        DVector::zeros(n),
        Trajectories {
            a: constant(horizon, a),
            b: constant(horizon, eye.clone()),
            g: constant(horizon, eye.clone()),
            c: constant(horizon, eye.clone()),
            h: constant(horizon, eye),
        },
    )
    .expect("well-formed scalar network")
}

/// One-step scalar plant `x(1) = x(0) + u(0) + ξ(0)`, `y(0) = x(0) + ξ(0)`.
pub fn scalar_system() -> LtvSystem {
    scalar_network(DMatrix::identity(1, 1), 1)
}

/// The scalar plant with cost `x(1)² + u(0)²` and `ξ(0)` uniform on
/// `[-1, 1]`. Its optimal affine cost is `1/6` with `u = -y/2`.
///
/// With `T = 1` no input can reach a later output, so the local-authority
/// check fails by construction; `force` is set.
pub fn scalar_problem() -> Problem {
    let system = scalar_system();
    let stk = stack_system(&system);
    Problem {
        graph: InfoGraph::self_loops(1).expect("one node"),
        disturbance: DisturbanceModel::uniform_ball(1, 1.0).expect("unit interval"),
        constraints: ConstraintData::none(&stk),
        cost: CostData::new(
            DMatrix::from_diagonal(&DVector::from_vec(vec![0.0, 1.0])),
            DMatrix::identity(1, 1),
        )
        .expect("psd weights"),
        system,
        options: Options {
            force: true,
            ..Options::default()
        },
    }
}

/// Two scalar subsystems where subsystem 1 drives subsystem 2:
/// `A = [[1, 0], [1, 1]]`.
pub fn coupled_pair(horizon: usize) -> LtvSystem {
    scalar_network(DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 1.0, 1.0]), horizon)
}

/// `n` scalar subsystems, subsystem `i` driving `i + 1`.
pub fn chain(n: usize, horizon: usize) -> LtvSystem {
    let mut a = DMatrix::identity(n, n);
    for i in 1..n {
        a[(i, i - 1)] = 1.0;
    }
    scalar_network(a, horizon)
}

/// `n` identical uncoupled scalar subsystems.
pub fn decoupled(n: usize, horizon: usize) -> LtvSystem {
    scalar_network(DMatrix::identity(n, n), horizon)
}

fn gaussian<R: Rng + ?Sized>(rng: &mut R, r: usize, c: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| scale * rng.sample::<f64, _>(StandardNormal))
}

/// Ranges for random instances.
#[derive(Clone, Copy, Debug)]
pub struct RandomSpec {
    pub max_subsystems: usize,
    pub min_horizon: usize,
    pub max_horizon: usize,
    /// Upper bound on each of `nx`, `nu`, `ny` per subsystem.
    pub max_dim: usize,
    pub max_n_xi: usize,
    /// Probability that an off-diagonal block of `A` is nonzero.
    pub coupling: f64,
}

impl Default for RandomSpec {
    fn default() -> Self {
        RandomSpec {
            max_subsystems: 3,
            min_horizon: 1,
            max_horizon: 5,
            max_dim: 2,
            max_n_xi: 2,
            coupling: 0.5,
        }
    }
}

/// Random LTV plant with block-diagonal `B` and `C` (each subsystem actuates
/// and measures only itself), sparse block coupling in `A` and dense `G`, `H`.
pub fn random_system<R: Rng + ?Sized>(rng: &mut R, spec: &RandomSpec) -> LtvSystem {
    let n = rng.random_range(1..=spec.max_subsystems);
    let horizon = rng.random_range(spec.min_horizon..=spec.max_horizon);
    let dims: Vec<SubsystemDims> = (0..n)
        .map(|_| SubsystemDims {
            nx: rng.random_range(1..=spec.max_dim),
            nu: rng.random_range(1..=spec.max_dim),
            ny: rng.random_range(1..=spec.max_dim),
        })
        .collect();
    let n_xi = rng.random_range(1..=spec.max_n_xi);
    let ox: Vec<usize> = offsets(dims.iter().map(|d| d.nx));
    let ou: Vec<usize> = offsets(dims.iter().map(|d| d.nu));
    let oy: Vec<usize> = offsets(dims.iter().map(|d| d.ny));
    let (nx, nu, ny) = (ox[n], ou[n], oy[n]);
    let links: Vec<bool> = (0..n * n)
        .map(|k| k / n == k % n || rng.random_bool(spec.coupling))
        .collect();

    let mut mats = Trajectories::default();
    for _ in 0..horizon {
        let mut a = DMatrix::zeros(nx, nx);
        let mut b = DMatrix::zeros(nx, nu);
        let mut c = DMatrix::zeros(ny, nx);
        for i in 0..n {
            let di = dims[i];
            for j in 0..n {
                if links[i * n + j] {
                    let blk = gaussian(rng, di.nx, dims[j].nx, 0.6 / (nx as f64).sqrt());
                    a.view_mut((ox[i], ox[j]), (di.nx, dims[j].nx)).copy_from(&blk);
                }
            }
            b.view_mut((ox[i], ou[i]), (di.nx, di.nu))
                .copy_from(&gaussian(rng, di.nx, di.nu, 1.0));
            c.view_mut((oy[i], ox[i]), (di.ny, di.nx))
                .copy_from(&gaussian(rng, di.ny, di.nx, 1.0));
        }
        mats.a.push(a);
        mats.b.push(b);
        mats.c.push(c);
        mats.g.push(gaussian(rng, nx, n_xi, 0.5));
        mats.h.push(gaussian(rng, ny, n_xi, 0.3));
    }
    let x0 = DVector::from_iterator(nx, gaussian(rng, nx, 1, 0.5).iter().copied());
    LtvSystem::new(dims, n_xi, x0, mats).expect("generated shapes are consistent")
}

fn offsets(sizes: impl Iterator<Item = usize>) -> Vec<usize> {
    let mut out = vec![0];
    for s in sizes {
        out.push(out.last().unwrap() + s);
    }
    out
}

/// Self-looped graph with each off-diagonal edge present with probability `p`.
pub fn random_graph<R: Rng + ?Sized>(rng: &mut R, n: usize, p: f64) -> InfoGraph {
    let mut g = InfoGraph::self_loops(n).expect("n within range");
    for i in 0..n {
        for j in 0..n {
            if i != j && rng.random_bool(p) {
                g = g.with_edge(i, j);
            }
        }
    }
    g
}

/// Diagonal-plus-low-rank weights, with `R_u` positive definite.
pub fn random_cost<R: Rng + ?Sized>(rng: &mut R, stk: &StackedSystem) -> CostData {
    let weights = |rng: &mut R, n: usize, lo: f64| {
        let d = DVector::from_fn(n, |_, _| rng.random_range(lo..1.5));
        let v = gaussian(rng, n, 1, 0.5);
        DMatrix::from_diagonal(&d) + &v * v.transpose()
    };
    let rx = weights(rng, stk.n_states(), 0.0);
    let ru = weights(rng, stk.n_inputs(), 0.2);
    CostData::new(rx, ru).expect("positive semidefinite by construction")
}

/// Uniform distribution on a random, well-conditioned ellipsoid of dimension `d`.
pub fn random_disturbance<R: Rng + ?Sized>(rng: &mut R, d: usize) -> DisturbanceModel {
    let center = DVector::from_iterator(d, gaussian(rng, d, 1, 0.1).iter().copied());
    let shape = DMatrix::identity(d, d) * 0.5 + gaussian(rng, d, d, 0.1 / (d as f64).sqrt());
    DisturbanceModel::uniform(center, shape).expect("dimensions agree")
}

/// `rows` random constraints, shifted so that the zero policy satisfies each
/// one robustly with margin `margin`.
pub fn random_constraints<R: Rng + ?Sized>(
    rng: &mut R,
    stk: &StackedSystem,
    dist: &DisturbanceModel,
    rows: usize,
    margin: f64,
) -> ConstraintData {
    let sparse = |rng: &mut R, r: usize, c: usize| {
        DMatrix::from_fn(r, c, |_, _| {
            if rng.random_bool(0.3) {
                rng.sample::<f64, _>(StandardNormal)
            } else {
                0.0
            }
        })
    };
    let fx = sparse(rng, rows, stk.n_states());
    let fu = sparse(rng, rows, stk.n_inputs());
    let mut fxi = sparse(rng, rows, stk.n_disturbances());
    let image = &fx * &stk.g + &fxi;
    for i in 0..rows {
        let worst = dist.support_max(&image.row(i).transpose());
        fxi[(i, 0)] -= worst + margin;
    }
    ConstraintData::new(fx, fu, fxi).expect("row counts agree")
}

/// Random problem: plant, graph, uniform ellipsoidal disturbance, cost and
/// `rows` constraints under which the zero policy is robustly feasible.
pub fn random_problem<R: Rng + ?Sized>(rng: &mut R, spec: &RandomSpec, rows: usize) -> Result<Problem> {
    let system = random_system(rng, spec);
    let stk = stack_system(&system);
    let graph = random_graph(rng, system.subsystems(), 0.3);
    let disturbance = random_disturbance(rng, system.n_xi() * system.horizon());
    let cost = random_cost(rng, &stk);
    let constraints = random_constraints(rng, &stk, &disturbance, rows, 0.5);
    Ok(Problem {
        system,
        graph,
        disturbance,
        constraints,
        cost,
        options: Options::default(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::relax_information;
    use crate::linalg::ZeroTest;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn coupled_pair_relaxes_to_one_cross_edge() {
        let sys = coupled_pair(3);
        let g = relax_information(&sys, &InfoGraph::self_loops(2).unwrap(), ZeroTest::default()).unwrap();
        assert_eq!(g.labels(), vec![(1, 1), (1, 2), (2, 2)]);
    }

    #[test]
    fn random_constraints_hold_robustly_at_zero_policy() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = random_problem(&mut rng, &RandomSpec::default(), 5).unwrap();
        let stk = stack_system(&p.system);
        let image = &p.constraints.fx * &stk.g + &p.constraints.fxi;
        for i in 0..5 {
            let worst = p.disturbance.support_max(&image.row(i).transpose());
            assert!((worst + 0.5).abs() < 1e-9);
        }
    }

    #[test]
    fn random_systems_are_reproducible() {
        let a = random_system(&mut ChaCha8Rng::seed_from_u64(9), &RandomSpec::default());
        let b = random_system(&mut ChaCha8Rng::seed_from_u64(9), &RandomSpec::default());
        assert_eq!(a.dims(), b.dims());
        assert_eq!(a.a(0), b.a(0));
    }
}
