mod common;

use decrelax::bound::{lower_bound, objective_value, upper_bound};
use decrelax::disturbance::Family;
use decrelax::instances::{random_problem, scalar_problem, RandomSpec};
use decrelax::policy::{sparsity_pattern, youla_to_feedback};
use decrelax::sim::{ClosedLoop, SimOptions};
use decrelax::DisturbanceModel;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{gaussian_vector, recursion};

fn mean_and_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[test]
fn sampled_cost_of_random_policy_matches_trace_formula() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let p = random_problem(&mut rng, &RandomSpec { max_horizon: 3, ..RandomSpec::default() }, 0).unwrap();
    let prep = p.prepare().unwrap();
    let stk = &prep.stacked;
    let pat = sparsity_pattern(&stk.index, &p.graph);
    let v = gaussian_vector(&mut rng, pat.n_free()) * 0.3;
    let q = pat.unpack(v.as_slice());
    let exact = objective_value(&q, stk, &p.cost, prep.m());

    // Purified outputs are the outputs of the plant run open loop.
    let samples = p.disturbance.sample(40_000, 5).unwrap();
    let zero_u = DVector::zeros(stk.n_inputs());
    let costs: Vec<f64> = samples
        .row_iter()
        .map(|row| {
            let xi = row.transpose();
            let (_, y) = recursion(&p.system, &zero_u, &xi);
            let u = &q * y;
            let (x, _) = recursion(&p.system, &u, &xi);
            p.cost.trajectory_cost(&x, &u)
        })
        .collect();
    let (mean, se) = mean_and_se(&costs);
    assert!((mean - exact).abs() <= 3.5 * se, "{mean} vs {exact} (se {se})");
}

#[test]
fn tiny_support_gives_deterministic_cost() {
    let mut p = scalar_problem();
    p.disturbance = DisturbanceModel::uniform_ball(1, 1e-4).unwrap();
    let prep = p.prepare().unwrap();
    let k = DMatrix::from_row_slice(1, 2, &[0.3, -0.5]);
    let cl = ClosedLoop {
        system: &p.system,
        stacked: &prep.stacked,
        cost: &p.cost,
        constraints: &p.constraints,
        disturbance: &p.disturbance,
    };
    let r = cl.simulate(&k, prep.m(), 1000, 1, &SimOptions::default()).unwrap();
    // u = 0.3 and x(1) = 0.3 as ξ vanishes
    let deterministic = 2.0 * 0.3 * 0.3;
    assert!((r.mean_cost - deterministic).abs() < 1e-3);
}

#[test]
fn uniform_moments_match_samples() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let d = 3;
    let c = gaussian_vector(&mut rng, d) * 0.2;
    let l = DMatrix::identity(d, d) * 0.7 + DMatrix::from_fn(d, d, |_, _| rng.random_range(-0.2..0.2));
    let dist = DisturbanceModel::uniform(c.clone(), l.clone()).unwrap();
    let m = dist.moment_matrix().unwrap().matrix;
    let n = 100_000;
    let s = dist.sample(n, 2).unwrap();
    for a in 0..=d {
        for b in 0..=d {
            let prods: Vec<f64> = s.row_iter().map(|r| r[a] * r[b]).collect();
            let (mean, se) = mean_and_se(&prods);
            if se == 0.0 {
                assert!((mean - m[(a, b)]).abs() < 1e-12);
            } else {
                assert!((mean - m[(a, b)]).abs() < 4.0 * se, "({a},{b}): {mean} vs {}", m[(a, b)]);
            }
        }
    }
    // independent closed form of the centred second moment
    let cov = &l * l.transpose() / (d as f64 + 2.0);
    let expect = &cov + &c * c.transpose();
    assert!((m.view((1, 1), (d, d)) - expect).amax() < 1e-12);
}

#[test]
fn truncated_gaussian_draws_stay_in_support() {
    let d = 2;
    let dist = DisturbanceModel::new(
        Family::TruncatedGaussian {
            covariance: DMatrix::identity(d, d),
        },
        DVector::from_vec(vec![0.5, -0.2]),
        DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.0, 0.6]),
    )
    .unwrap();
    let w = dist.support_matrix().unwrap();
    let s = dist.sample(20_000, 9).unwrap();
    for row in s.row_iter() {
        let xi = row.transpose();
        assert_eq!(xi[0], 1.0);
        assert!(dist.support_margin(&w, &xi) >= -1e-12);
    }
}

#[test]
fn upper_policy_simulates_to_its_objective_without_violations() {
    let mut p = scalar_problem();
    // |u(0)| <= 0.2
    p.constraints = decrelax::ConstraintData::new(
        DMatrix::zeros(2, 2),
        DMatrix::from_column_slice(2, 1, &[1.0, -1.0]),
        DMatrix::from_row_slice(2, 2, &[-0.2, 0.0, -0.2, 0.0]),
    )
    .unwrap();
    let ub = upper_bound(&p).unwrap();
    let prep = p.prepare().unwrap();
    let cl = ClosedLoop {
        system: &p.system,
        stacked: &prep.stacked,
        cost: &p.cost,
        constraints: &p.constraints,
        disturbance: &p.disturbance,
    };
    let r = cl.simulate(&ub.k, prep.m(), 100_000, 4, &SimOptions::default()).unwrap();
    let exact = objective_value(&ub.q, &prep.stacked, &p.cost, prep.m());
    assert!((r.mean_cost - exact).abs() <= 3.0 * r.std_error);
    assert!(r.max_violation.unwrap() <= 1e-9);
    assert!(r.violation_frequency.iter().all(|&f| f == 0.0));
    assert!(r.purified_deviation < 1e-12);
}

#[test]
fn lower_bound_policy_feedback_reproduces_youla_inputs() {
    let p = scalar_problem();
    let lb = lower_bound(&p).unwrap();
    let prep = p.prepare().unwrap();
    let k = youla_to_feedback(&lb.q, &prep.stacked);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..100 {
        let xi = DVector::from_vec(vec![1.0, rng.random_range(-1.0..1.0)]);
        let (_, y) = recursion(&p.system, &DVector::zeros(1), &xi);
        let u_youla = &lb.q * &y;
        let u_fb = &k * &y;
        // T = 1: the feedback sees only the initial output, equal to the purified one
        assert!((u_youla - u_fb).amax() < 1e-12);
    }
}

#[test]
fn nonnegative_multiplier_moments_lie_in_support_cone() {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let d = 3;
    let dist = DisturbanceModel::uniform(
        gaussian_vector(&mut rng, d) * 0.1,
        DMatrix::identity(d, d) * 0.8,
    )
    .unwrap();
    let w = dist.support_matrix().unwrap();
    let s = dist.sample(50_000, 6).unwrap();
    for _ in 0..10 {
        let a = gaussian_vector(&mut rng, d + 1);
        let wx: Vec<DVector<f64>> = s.row_iter().map(|r| &w * r.transpose()).collect();
        let mult: Vec<f64> = s.row_iter().map(|r| (r * &a)[0].max(0.0)).collect();
        let n = s.nrows() as f64;
        let v = wx.iter().zip(&mult).fold(DVector::zeros(d + 1), |acc, (x, m)| acc + x * *m) / n;
        let tail = v.rows(1, d).into_owned();
        if tail.norm() == 0.0 {
            continue;
        }
        let dir = tail.normalize();
        let g: Vec<f64> = wx
            .iter()
            .zip(&mult)
            .map(|(x, m)| m * (x[0] - dir.dot(&x.rows(1, d))))
            .collect();
        let (mean, se) = mean_and_se(&g);
        assert!(mean >= -3.0 * se, "margin {mean} (se {se})");
    }
}
