//! Acceptance suite: one `[PASS]`/`[FAIL]` line per criterion, nonzero exit
//! if any criterion fails or exceeds its time budget.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use decrelax::bound::{certify, lower_bound, lower_bound_on, upper_bound, Options, Problem, Stages};
use decrelax::conic::SolveStatus;
use decrelax::graph::relax_information;
use decrelax::instances::{random_graph, random_problem, random_system, scalar_network, scalar_problem, RandomSpec};
use decrelax::policy::{feedback_to_youla, sparsity_pattern, youla_to_feedback};
use decrelax::report::{cmd_bound, BoundFlags, Format, Overrides};
use decrelax::sim::{check_policy_equivalence, ClosedLoop, SimOptions};
use decrelax::system::{check_local_authority, stack_system};
use decrelax::{DisturbanceModel, InfoGraph, LtvSystem, ZeroTest};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{all_self_looped_graphs, gaussian_vector, normal_equations_optimum, oracle_is_pn, recursion};

type Outcome = Result<String, String>;
type Criterion = (&'static str, u64, fn() -> Outcome);

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-6 * (1.0 + a.abs())
}

fn has_authority(sys: &LtvSystem) -> bool {
    check_local_authority(sys, ZeroTest::default()).iter().all(|&b| b)
}

/// Random problem with local authority, drawn from consecutive seeds.
fn authority_problem(seed: u64, spec: &RandomSpec, rows: usize) -> Problem {
    (0..)
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed * 1000 + k);
            random_problem(&mut rng, spec, rows).unwrap()
        })
        .find(|p| has_authority(&p.system))
        .unwrap()
}

fn spec() -> RandomSpec {
    RandomSpec {
        min_horizon: 2,
        max_horizon: 3,
        ..RandomSpec::default()
    }
}

fn stacking() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0_f64;
    for _ in 0..100 {
        let sys = random_system(&mut rng, &RandomSpec::default());
        let stk = stack_system(&sys);
        for _ in 0..100 {
            let u = gaussian_vector(&mut rng, stk.n_inputs());
            let mut xi = gaussian_vector(&mut rng, stk.n_disturbances());
            xi[0] = 1.0;
            let (x, y) = recursion(&sys, &u, &xi);
            let xs = &stk.b * &u + &stk.g * &xi;
            let ys = &stk.c * &xs + &stk.h * &xi;
            let ex = (&xs - &x).norm() / x.norm().max(1.0);
            let ey = (&ys - &y).norm() / y.norm().max(1.0);
            worst = worst.max(ex).max(ey);
        }
    }
    ensure(worst <= 1e-10, || format!("relative error {worst:.3e}"))?;
    Ok(format!("max relative error {worst:.2e}"))
}

fn least_pn_supergraph() -> Outcome {
    // subsystem 2 is driven by 1 and 3
    let sys = scalar_network(
        DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0, 0.0, 1.0]),
        3,
    );
    let graphs = all_self_looped_graphs(3);
    ensure(graphs.len() == 64, || format!("{} graphs", graphs.len()))?;
    let pn: Vec<bool> = graphs.iter().map(|h| oracle_is_pn(&sys, h)).collect();
    for g in &graphs {
        let r = relax_information(&sys, g, ZeroTest::default()).map_err(|e| e.to_string())?;
        ensure(oracle_is_pn(&sys, &r), || format!("{r} is not partially nested"))?;
        ensure(g.is_subgraph_of(&r), || format!("{r} does not contain {g}"))?;
        for (h, &h_pn) in graphs.iter().zip(&pn) {
            if h_pn && g.is_subgraph_of(h) {
                ensure(r.is_subgraph_of(h), || format!("{r} not inside {h}"))?;
            }
        }
    }
    Ok(format!("{} partially nested graphs", pn.iter().filter(|&&b| b).count()))
}

fn unconstrained_optimum() -> Outcome {
    let mut worst = 0.0_f64;
    for seed in 0..20 {
        let mut p = authority_problem(seed, &spec(), 0);
        p.graph = relax_information(&p.system, &p.graph, ZeroTest::default()).map_err(|e| e.to_string())?;
        let prep = p.prepare().map_err(|e| e.to_string())?;
        let pat = sparsity_pattern(&prep.stacked.index, &p.graph);
        let (oracle, _) = normal_equations_optimum(&prep.stacked, &p.cost, prep.m(), &pat);
        let r = certify(&p, Stages::default()).map_err(|e| e.to_string())?;
        let (jd, jup) = (r.j_d().ok_or("no J_d")?, r.j_up().ok_or("no J_up")?);
        ensure(close(jd, oracle), || format!("seed {seed}: J_d {jd} vs {oracle}"))?;
        ensure(close(jup, jd), || format!("seed {seed}: J_up {jup} vs J_d {jd}"))?;
        worst = worst.max((jd - oracle).abs() / (1.0 + jd.abs()));
    }
    Ok(format!("max scaled error {worst:.2e}"))
}

fn scalar_value() -> Outcome {
    let lb = lower_bound(&scalar_problem()).map_err(|e| e.to_string())?;
    let jd = lb.result.value.ok_or("no value")?;
    ensure((jd - 1.0 / 6.0).abs() <= 1e-6, || format!("J_d = {jd}"))?;
    Ok(format!("J_d = {jd:.9}"))
}

fn constrained_problems() -> Vec<Problem> {
    (0..20)
        .map(|seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(500 + seed);
            let mut p = random_problem(&mut rng, &spec(), 4).unwrap();
            p.options = Options {
                force: true,
                ..Options::default()
            };
            p
        })
        .collect()
}

fn ordering_and_monotonicity() -> Outcome {
    for (i, p) in constrained_problems().iter().enumerate() {
        let r = certify(p, Stages::default()).map_err(|e| e.to_string())?;
        let (jd, jup) = (r.j_d().ok_or("no J_d")?, r.j_up().ok_or("no J_up")?);
        ensure(jd <= jup + 1e-6 * (1.0 + jd.abs()), || format!("instance {i}: {jd} > {jup}"))?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut pairs = 0;
    while pairs < 20 {
        let mut p = random_problem(&mut rng, &spec(), 4).unwrap();
        let n = p.system.subsystems();
        let missing: Vec<(usize, usize)> = (0..n)
            .flat_map(|a| (0..n).map(move |b| (a, b)))
            .filter(|&(a, b)| !p.graph.contains(a, b))
            .collect();
        if missing.is_empty() {
            continue;
        }
        p.options.force = true;
        let (a, b) = missing[rng.random_range(0..missing.len())];
        let bigger = p.graph.clone().with_edge(a, b);
        let prep = p.prepare().map_err(|e| e.to_string())?;
        let solve = |g: &InfoGraph| -> Result<f64, String> {
            let r = decrelax::graph::relax_information_forced(&p.system, g, ZeroTest::default())
                .map_err(|e| e.to_string())?;
            let lb = lower_bound_on(&p, &prep, &r).map_err(|e| e.to_string())?;
            lb.result.value.ok_or_else(|| format!("status {:?}", lb.result.status))
        };
        let (small, large) = (solve(&p.graph)?, solve(&bigger)?);
        ensure(large <= small + 1e-6 * (1.0 + small.abs()), || {
            format!("pair {pairs}: {large} > {small}")
        })?;
        pairs += 1;
    }
    Ok("20 ordered instances, 20 nested pairs".into())
}

fn upper_policy_simulation() -> Outcome {
    let mut worst_z = 0.0_f64;
    let mut checked = 0;
    for (i, p) in constrained_problems().iter().enumerate() {
        let ub = upper_bound(p).map_err(|e| e.to_string())?;
        if ub.result.status != SolveStatus::Optimal {
            return Err(format!("instance {i}: upper bound {:?}", ub.result.status));
        }
        let prep = p.prepare().map_err(|e| e.to_string())?;
        let cl = ClosedLoop {
            system: &p.system,
            stacked: &prep.stacked,
            cost: &p.cost,
            constraints: &p.constraints,
            disturbance: &p.disturbance,
        };
        let sim = cl
            .simulate(&ub.k, prep.m(), 100_000, 11 + i as u64, &SimOptions::default())
            .map_err(|e| e.to_string())?;
        let exact = decrelax::bound::objective_value(&ub.q, &prep.stacked, &p.cost, prep.m());
        let z = (sim.mean_cost - exact).abs() / sim.std_error.max(f64::MIN_POSITIVE);
        ensure(z <= 3.0, || format!("instance {i}: {} vs {exact}, z = {z:.2}", sim.mean_cost))?;
        let viol = sim.violation_frequency.iter().sum::<f64>();
        ensure(viol == 0.0, || format!("instance {i}: violations observed"))?;
        ensure(sim.max_violation.unwrap_or(f64::NEG_INFINITY) <= 1e-9, || {
            format!("instance {i}: max constraint {:?}", sim.max_violation)
        })?;
        worst_z = worst_z.max(z);
        checked += 1;
    }
    Ok(format!("{checked} policies, max |z| {worst_z:.2}"))
}

fn multiplier_cone() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = f64::INFINITY;
    for k in 0..50 {
        let d = rng.random_range(1..=4);
        let c = gaussian_vector(&mut rng, d) * 0.2;
        let l = DMatrix::identity(d, d) * 0.6 + DMatrix::from_fn(d, d, |_, _| rng.random_range(-0.15..0.15));
        let dist = DisturbanceModel::uniform(c, l).map_err(|e| e.to_string())?;
        let w = dist.support_matrix().map_err(|e| e.to_string())?;
        let m = dist.moment_matrix().map_err(|e| e.to_string())?.matrix;
        let a = gaussian_vector(&mut rng, d + 1);
        let samples = dist.sample(100_000, k).map_err(|e| e.to_string())?;
        let n = samples.nrows() as f64;
        let xs: Vec<DVector<f64>> = samples.row_iter().map(|r| r.transpose()).collect();
        let s: Vec<f64> = xs.iter().map(|x| a.dot(x).max(0.0)).collect();
        let moment = xs.iter().zip(&s).fold(DVector::zeros(d + 1), |acc, (x, si)| acc + x * *si) / n;
        // z solves M z = E[s ξ], so W M z = W E[s ξ]
        let z = m.clone().lu().solve(&moment).ok_or("singular moment matrix")?;
        let v = &w * (&m * &z);
        ensure(m.row(0).dot(&z.transpose()) >= -1e-12, || format!("draw {k}: negative mass"))?;
        let tail = v.rows(1, d).into_owned();
        let dir = if tail.norm() > 0.0 { tail.normalize() } else { DVector::zeros(d) };
        let g: Vec<f64> = xs
            .iter()
            .zip(&s)
            .map(|(x, si)| {
                let wx = &w * x;
                si * (wx[0] - dir.dot(&wx.rows(1, d)))
            })
            .collect();
        let mean = g.iter().sum::<f64>() / n;
        let se = (g.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt();
        let margin = v[0] - tail.norm();
        ensure(margin >= -3.0 * se, || format!("draw {k}: margin {margin:.3e}, se {se:.3e}"))?;
        worst = worst.min(margin / se.max(f64::MIN_POSITIVE));
    }
    Ok(format!("min margin {worst:.1} standard errors"))
}

fn youla_round_trip() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (mut worst_trip, mut worst_policy) = (0.0_f64, 0.0_f64);
    let mut done = 0;
    while done < 100 {
        let sys = random_system(&mut rng, &RandomSpec::default());
        if !has_authority(&sys) {
            continue;
        }
        let g = random_graph(&mut rng, sys.subsystems(), 0.3);
        let g = relax_information(&sys, &g, ZeroTest::default()).map_err(|e| e.to_string())?;
        let stk = stack_system(&sys);
        let pat = sparsity_pattern(&stk.index, &g);
        let q = pat.unpack((gaussian_vector(&mut rng, pat.n_free()) * 0.5).as_slice());
        let k = youla_to_feedback(&q, &stk);
        let back = feedback_to_youla(&k, &stk);
        let trip = (&back - &q).amax() / (1.0 + q.amax());
        let dist = DisturbanceModel::uniform_ball(sys.n_xi() * sys.horizon(), 1.0).map_err(|e| e.to_string())?;
        let policy = check_policy_equivalence(&q, &k, &sys, &stk, &dist, 20, done).map_err(|e| e.to_string())?;
        ensure(trip <= 1e-12, || format!("instance {done}: round trip {trip:.2e}"))?;
        ensure(policy <= 1e-9, || format!("instance {done}: policy deviation {policy:.2e}"))?;
        worst_trip = worst_trip.max(trip);
        worst_policy = worst_policy.max(policy);
        done += 1;
    }
    Ok(format!("round trip {worst_trip:.1e}, policy {worst_policy:.1e}"))
}

fn deterministic_report() -> Outcome {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../problems/coupled_pair.json");
    let text = std::fs::read_to_string(path).map_err(|e| e.to_string())?;
    let run = || cmd_bound(&text, &BoundFlags::default(), &Overrides::default(), Format::Json);
    let (a, b) = (run(), run());
    ensure(a.code == 0, || format!("exit code {}", a.code))?;
    ensure(a.stdout == b.stdout, || "reports differ".into())?;
    Ok(format!("{} bytes", a.stdout.len()))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("stacking equivalence", 10, stacking),
        ("least partially nested supergraph", 5, least_pn_supergraph),
        ("unconstrained optimum", 60, unconstrained_optimum),
        ("scalar instance", 1, scalar_value),
        ("bound ordering and monotonicity", 300, ordering_and_monotonicity),
        ("upper policy simulation", 120, upper_policy_simulation),
        ("multiplier moment cone", 60, multiplier_cone),
        ("youla round trip", 10, youla_round_trip),
        ("deterministic report", 60, deterministic_report),
    ];
    let mut failed = 0;
    for (i, (name, budget, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|_| Err("panicked".into()));
        let elapsed = start.elapsed();
        let outcome = match outcome {
            Ok(_) if elapsed > Duration::from_secs(*budget) => {
                Err(format!("took {:.1}s, budget {budget}s", elapsed.as_secs_f64()))
            }
            o => o,
        };
        let (tag, detail) = match &outcome {
            Ok(d) => ("PASS", d),
            Err(d) => ("FAIL", d),
        };
        println!("[{tag}] {} {name}: {detail} ({:.2}s)", i + 1, elapsed.as_secs_f64());
        failed += usize::from(outcome.is_err());
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
