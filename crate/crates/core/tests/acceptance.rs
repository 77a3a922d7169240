//! Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Run with `cargo test -p bifunc-mpc --test acceptance`.

mod common;

use std::time::{Duration, Instant};

use bifunc_mpc::bifunction::{self, evaluate, point, ExtendedValue, QuadBifunction};
use bifunc_mpc::mpc::{assemble_stage, one_step, periodic_constraint, StageSpec, Terminal};
use bifunc_mpc::para::{close, para_power};
use bifunc_mpc::qp::{build_monolithic, compile, FlatQP};
use bifunc_mpc::sim::simulate;
use bifunc_mpc::solver::{self, farkas_residual, kkt_residuals, SolverOptions, Status};
use common::*;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn compositional(spec: &StageSpec, horizon: usize, x0: &DVector<f64>, terminal: &Terminal) -> FlatQP {
    let chain = para_power(&one_step(spec).unwrap(), horizon).unwrap();
    let term = terminal.to_bifunction(spec.state_dim()).unwrap();
    compile(&close(&chain, &point(x0), &term).unwrap()).unwrap()
}

fn max_control_gap(a: &FlatQP, za: &DVector<f64>, b: &FlatQP, zb: &DVector<f64>) -> f64 {
    let (ua, ub) = (a.controls(za), b.controls(zb));
    assert_eq!(ua.len(), ub.len());
    ua.iter()
        .zip(&ub)
        .map(|((ka, x), (kb, y))| {
            assert_eq!(ka, kb);
            (x - y).amax()
        })
        .fold(0.0, f64::max)
}

/// Solves both QPs and checks status, objective and control agreement.
fn agree(comp: &FlatQP, mono: &FlatQP, obj_tol: f64, u_tol: f64) -> Result<(Status, f64, f64), String> {
    let opts = SolverOptions::default();
    let a = solver::solve(comp, &opts).map_err(|e| e.to_string())?;
    let b = solver::solve(mono, &opts).map_err(|e| e.to_string())?;
    ensure(a.status == b.status, || format!("status {} vs oracle {}", a.status, b.status))?;
    if a.status != Status::Optimal {
        return Ok((a.status, 0.0, 0.0));
    }
    let gap = rel_gap(a.objective, b.objective);
    let ugap = max_control_gap(comp, &a.z, mono, &b.z);
    ensure(gap <= obj_tol, || format!("objective {} vs {} (rel gap {gap:e})", a.objective, b.objective))?;
    ensure(ugap <= u_tol, || format!("control gap {ugap:e}"))?;
    Ok((a.status, gap, ugap))
}

fn c1_example() -> Outcome {
    let spec = example1(None);
    let x0 = example1_x0();
    let comp = compositional(&spec, 10, &x0, &Terminal::None);
    let mono = build_monolithic(&spec, 10, &x0, &Terminal::None).unwrap();
    let (status, gap, ugap) = agree(&comp, &mono, 1e-5, 1e-4)?;
    ensure(status == Status::Optimal, || format!("status {status}"))?;
    Ok(format!("rel objective gap {gap:.1e}, control gap {ugap:.1e}"))
}

fn c2_randomized() -> Outcome {
    let mut r = rng(2);
    let (mut optimal, mut infeasible) = (0, 0);
    let mut worst = 0.0f64;
    for trial in 0..50 {
        let outside = trial % 5 == 4;
        let (spec, x0) = random_stage(&mut r, outside);
        let horizon = r.random_range(1..=5);
        let terminal = match trial % 3 {
            0 => Terminal::None,
            1 => Terminal::Quadratic(random_psd(&mut r, spec.state_dim(), 0.0)),
            _ => Terminal::Quadratic(DMatrix::identity(spec.state_dim(), spec.state_dim())),
        };
        let comp = compositional(&spec, horizon, &x0, &terminal);
        let mono = build_monolithic(&spec, horizon, &x0, &terminal).unwrap();
        let (status, gap, _) = agree(&comp, &mono, 1e-5, 1e-4).map_err(|e| format!("trial {trial}: {e}"))?;
        match status {
            Status::Optimal => optimal += 1,
            Status::PrimalInfeasible => infeasible += 1,
            s => return Err(format!("trial {trial}: unexpected status {s}")),
        }
        if outside {
            ensure(status == Status::PrimalInfeasible, || format!("trial {trial}: x0 outside box but {status}"))?;
        }
        worst = worst.max(gap);
    }
    Ok(format!("{optimal} optimal, {infeasible} infeasible, worst rel gap {worst:.1e}"))
}

fn value_agree(a: ExtendedValue, b: ExtendedValue, tol: f64) -> Result<(), String> {
    ensure(a.approx_eq(b, tol), || format!("{a} vs {b}"))
}

fn eval(f: &QuadBifunction, u: &DVector<f64>, x: &DVector<f64>) -> Result<ExtendedValue, String> {
    evaluate(f, u, x, &SolverOptions::default()).map_err(|e| e.to_string())
}

fn pick(r: &mut ChaCha8Rng, n_in: usize, n_out: usize) -> QuadBifunction {
    if r.random_bool(0.2) {
        random_constrained_bifunction(r, n_in, n_out)
    } else {
        random_bifunction(r, n_in, n_out)
    }
}

fn dim(r: &mut ChaCha8Rng) -> usize {
    r.random_range(1..=2)
}

fn c3_laws() -> Outcome {
    const TOL: f64 = 1e-6;
    let mut r = rng(3);
    let mut finite = 0;
    let mut total = 0;
    let mut tally = |v: ExtendedValue| {
        total += 1;
        if v.is_finite() {
            finite += 1;
        }
    };
    for t in 0..100 {
        let ctx = |law: &str, e: String| format!("{law} trial {t}: {e}");

        // associativity
        let (a, b, c, d) = (dim(&mut r), dim(&mut r), dim(&mut r), dim(&mut r));
        let (f, g, h) = (pick(&mut r, a, b), pick(&mut r, b, c), pick(&mut r, c, d));
        let left = bifunction::compose(&bifunction::compose(&h, &g).unwrap(), &f).unwrap();
        let right = bifunction::compose(&h, &bifunction::compose(&g, &f).unwrap()).unwrap();
        let (u, x) = (cube_point(&mut r, a), cube_point(&mut r, d));
        let lv = eval(&left, &u, &x)?;
        value_agree(lv, eval(&right, &u, &x)?, TOL).map_err(|e| ctx("associativity", e))?;
        tally(lv);

        // unitality
        let f = pick(&mut r, a, b);
        let (u, x) = (cube_point(&mut r, a), cube_point(&mut r, b));
        let base = eval(&f, &u, &x)?;
        for (side, comp) in [
            ("left", bifunction::compose(&bifunction::identity(b), &f).unwrap()),
            ("right", bifunction::compose(&f, &bifunction::identity(a)).unwrap()),
        ] {
            value_agree(eval(&comp, &u, &x)?, base, TOL).map_err(|e| ctx(&format!("{side} unitality"), e))?;
        }
        tally(base);

        // interchange
        let (a2, b2, c2) = (dim(&mut r), dim(&mut r), dim(&mut r));
        let (f1, g1) = (pick(&mut r, a, b), pick(&mut r, b, c));
        let (f2, g2) = (pick(&mut r, a2, b2), pick(&mut r, b2, c2));
        let lhs = bifunction::compose(&bifunction::oplus(&g1, &g2), &bifunction::oplus(&f1, &f2)).unwrap();
        let rhs = bifunction::oplus(&bifunction::compose(&g1, &f1).unwrap(), &bifunction::compose(&g2, &f2).unwrap());
        let (u, x) = (cube_point(&mut r, a + a2), cube_point(&mut r, c + c2));
        let lv = eval(&lhs, &u, &x)?;
        value_agree(lv, eval(&rhs, &u, &x)?, TOL).map_err(|e| ctx("interchange", e))?;
        tally(lv);

        // ⊕-separability
        let (f, g) = (pick(&mut r, a, b), pick(&mut r, c, d));
        let (u1, x1, u2, x2) = (cube_point(&mut r, a), cube_point(&mut r, b), cube_point(&mut r, c), cube_point(&mut r, d));
        let joint = eval(
            &bifunction::oplus(&f, &g),
            &bifunc_mpc::linalg::vconcat(&u1, &u2),
            &bifunc_mpc::linalg::vconcat(&x1, &x2),
        )?;
        let split = eval(&f, &u1, &x1)? + eval(&g, &u2, &x2)?;
        value_agree(joint, split, TOL).map_err(|e| ctx("separability", e))?;
        tally(joint);

        // swap involution
        let (n, m) = (r.random_range(0..=3), r.random_range(0..=3));
        let twice = bifunction::compose(&bifunction::swap(m, n), &bifunction::swap(n, m)).unwrap();
        let u = cube_point(&mut r, n + m);
        let x = if r.random_bool(0.5) { u.clone() } else { cube_point(&mut r, n + m) };
        let lv = eval(&twice, &u, &x)?;
        value_agree(lv, eval(&bifunction::identity(n + m), &u, &x)?, TOL).map_err(|e| ctx("swap involution", e))?;
        tally(lv);

        // δ-functor: δ_B ∘ δ_A = δ_{BA}, offsets included
        let (ma, mb) = (gauss_mat(&mut r, b, a), gauss_mat(&mut r, c, b));
        let (ca, cb) = (gauss_vec(&mut r, b), gauss_vec(&mut r, c));
        let composed = bifunction::compose(
            &bifunction::from_linear_map(&mb, Some(&cb)).unwrap(),
            &bifunction::from_linear_map(&ma, Some(&ca)).unwrap(),
        )
        .unwrap();
        let direct = bifunction::from_linear_map(&(&mb * &ma), Some(&(&mb * &ca + &cb))).unwrap();
        let u = cube_point(&mut r, a);
        let x = if r.random_bool(0.5) { &mb * (&ma * &u + &ca) + &cb } else { cube_point(&mut r, c) };
        let lv = eval(&composed, &u, &x)?;
        value_agree(lv, eval(&direct, &u, &x)?, TOL).map_err(|e| ctx("delta functor", e))?;
        tally(lv);
    }
    Ok(format!("6 laws x 100 trials, {finite}/{total} finite evaluations"))
}

fn c4_riccati() -> Outcome {
    let spec = example1(Some(1e6));
    let x0 = example1_x0();
    let qf = DMatrix::identity(2, 2) * 5.0;
    let mut worst = 0.0f64;
    for horizon in [1, 5, 10] {
        let qp = compositional(&spec, horizon, &x0, &Terminal::Quadratic(qf.clone()));
        let sol = solver::solve(&qp, &SolverOptions::default()).map_err(|e| e.to_string())?;
        ensure(sol.status == Status::Optimal, || format!("N={horizon}: {}", sol.status))?;
        let reference = riccati_controls(&spec.a, &spec.b, &spec.qx, &spec.ru, &qf, horizon, &x0);
        let ours = qp.controls(&sol.z);
        ensure(ours.len() == horizon, || format!("N={horizon}: {} controls", ours.len()))?;
        for ((k, u), v) in ours.iter().zip(&reference) {
            let gap = (u - v).amax();
            worst = worst.max(gap);
            ensure(gap <= 1e-5, || format!("N={horizon}, u[{k}] off by {gap:e}"))?;
        }
    }
    Ok(format!("N in {{1, 5, 10}}, worst control gap {worst:.1e}"))
}

fn c5_coupling() -> Outcome {
    let one = DMatrix::from_element(1, 1, 1.0);
    let spec = StageSpec::new(one.clone(), one.clone(), one.clone(), one);
    let x0 = v(&[2.0]);
    let stage = one_step(&spec).unwrap();
    let chain = periodic_constraint(&stage, 3, 1, 2, &bifunction::identity(1)).unwrap();
    let comp = compile(&close(&chain, &point(&x0), &bifunction::zero(1, 0)).unwrap()).unwrap();

    // Monolithic transcription plus the row x_1 − x_2 = 0; variables (u_0..u_2, x_0..x_3).
    let mut mono = build_monolithic(&spec, 3, &x0, &Terminal::None).unwrap();
    let mut row = DMatrix::zeros(1, mono.dim());
    row[(0, 3 + 1)] = 1.0;
    row[(0, 3 + 2)] = -1.0;
    mono.a_eq = bifunc_mpc::linalg::vstack(&mono.a_eq, &row);
    mono.b_eq = bifunc_mpc::linalg::vconcat(&mono.b_eq, &v(&[0.0]));

    let opts = SolverOptions::default();
    let a = solver::solve(&comp, &opts).map_err(|e| e.to_string())?;
    let b = solver::solve(&mono, &opts).map_err(|e| e.to_string())?;
    ensure(a.status == Status::Optimal && b.status == Status::Optimal, || format!("{} / {}", a.status, b.status))?;
    let gap = (a.objective - b.objective).abs();
    ensure(gap <= 1e-6, || format!("objective {} vs {}", a.objective, b.objective))?;
    let states = comp.states(&a.z);
    let at = |k: usize| states.iter().find(|(s, _)| *s == k).map(|(_, x)| x[0]);
    let (x1, x2) = (at(1).ok_or("x1 not reported")?, at(2).ok_or("x2 not reported")?);
    ensure((x1 - x2).abs() <= 1e-6, || format!("|x1 - x2| = {:e}", (x1 - x2).abs()))?;
    Ok(format!("objective gap {gap:.1e}, |x1 - x2| = {:.1e}", (x1 - x2).abs()))
}

fn c6_assembly() -> Outcome {
    let mut r = rng(6);
    let spec = example1(None);
    let (cost, dynamics, constraint) = spec.components().unwrap();
    let assembled = assemble_stage(&cost, &dynamics, &constraint).unwrap();
    let direct = one_step(&spec).unwrap();
    let mut finite = 0;
    let mut worst = 0.0f64;
    for t in 0..20 {
        let u = v(&[r.random_range(-1.3..1.3)]);
        let x = v(&[r.random_range(-3.5..3.5), r.random_range(-2.5..2.5)]);
        let next = if t % 4 == 3 { cube_point(&mut r, 2) } else { mpc_step(&spec, &x, &u) };
        let input = bifunc_mpc::linalg::vconcat(&u, &x);
        let a = eval(assembled.body(), &input, &next)?;
        let b = eval(direct.body(), &input, &next)?;
        value_agree(a, b, 1e-8).map_err(|e| format!("point {t}: {e}"))?;
        if let (Some(a), Some(b)) = (a.finite(), b.finite()) {
            finite += 1;
            worst = worst.max((a - b).abs());
        }
    }
    ensure(finite >= 5, || format!("only {finite} finite sample points"))?;
    Ok(format!("20 points, {finite} finite, worst gap {worst:.1e}"))
}

fn mpc_step(spec: &StageSpec, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
    &spec.a * x + &spec.b * u + &spec.c
}

fn c7_closed_loop() -> Outcome {
    let spec = example1(None);
    let x0 = example1_x0();
    let log = simulate(&spec, 10, &x0, 50, &Terminal::None, &SolverOptions::default()).map_err(|e| e.to_string())?;
    ensure(log.records.len() == 50, || format!("{} records", log.records.len()))?;
    ensure(log.all_optimal(), || "a solve was not optimal".into())?;
    let viol = log.worst_violation();
    ensure(viol <= 1e-6, || format!("constraint violation {viol:e}"))?;
    for w in log.records.windows(2) {
        let u = w[0].u.as_ref().unwrap();
        ensure(w[1].x == mpc_step(&spec, &w[0].x, u), || format!("plant mismatch at step {}", w[1].k))?;
    }
    let (start, end) = (x0.norm(), log.final_state.norm());
    ensure(end < start, || format!("final norm {end} not below {start}"))?;
    Ok(format!("50 optimal steps, worst violation {viol:.1e}, |x_50| = {end:.1e}"))
}

fn c8_solver() -> Outcome {
    let mut r = rng(8);
    let opts = SolverOptions::default();
    let mut worst_kkt = 0.0f64;
    let mut worst_oracle = 0.0f64;
    let mut compared = 0;
    for t in 0..200 {
        let dim = if t < 100 { r.random_range(1..=4) } else { r.random_range(5..=10) };
        let qp = random_qp(&mut r, dim);
        let sol = solver::solve(&qp, &opts).map_err(|e| e.to_string())?;
        ensure(sol.status == Status::Optimal, || format!("qp {t} (dim {dim}): {}", sol.status))?;
        let (s, p, c) = kkt_residuals(&qp, &sol);
        let k = s.max(p).max(c);
        worst_kkt = worst_kkt.max(k);
        ensure(k <= 1e-6, || format!("qp {t}: KKT residuals ({s:e}, {p:e}, {c:e})"))?;
        if dim <= 4 {
            let (z, f) = active_set_oracle(&qp).ok_or_else(|| format!("qp {t}: oracle found no KKT point"))?;
            let gap = (&sol.z - &z).amax().max(rel_gap(sol.objective, f));
            worst_oracle = worst_oracle.max(gap);
            ensure(gap <= 1e-6, || format!("qp {t}: oracle gap {gap:e}"))?;
            compared += 1;
        }
    }
    let mut worst_cert = 0.0f64;
    for t in 0..20 {
        let dim = r.random_range(1..=8);
        let qp = random_infeasible_qp(&mut r, dim);
        let sol = solver::solve(&qp, &opts).map_err(|e| e.to_string())?;
        ensure(sol.status == Status::PrimalInfeasible, || format!("infeasible {t}: {}", sol.status))?;
        let cert = sol.certificate.as_ref().ok_or_else(|| format!("infeasible {t}: no certificate"))?;
        let res = farkas_residual(&qp, cert).ok_or_else(|| format!("infeasible {t}: certificate rejected"))?;
        worst_cert = worst_cert.max(res);
        ensure(res <= 1e-6, || format!("infeasible {t}: certificate residual {res:e}"))?;
    }
    Ok(format!(
        "200 QPs ({compared} vs enumeration, worst {worst_oracle:.1e}), worst KKT {worst_kkt:.1e}, 20 certificates (worst {worst_cert:.1e})"
    ))
}

type Criterion = (&'static str, fn() -> Outcome, Option<Duration>);

fn main() {
    let criteria: [Criterion; 8] = [
        ("1 example equivalence", c1_example, Some(Duration::from_secs(1))),
        ("2 randomized equivalence", c2_randomized, Some(Duration::from_secs(30))),
        ("3 category laws", c3_laws, Some(Duration::from_secs(60))),
        ("4 riccati oracle", c4_riccati, Some(Duration::from_secs(1))),
        ("5 cross-timestep coupling", c5_coupling, None),
        ("6 hierarchical assembly", c6_assembly, None),
        ("7 closed-loop simulation", c7_closed_loop, Some(Duration::from_secs(5))),
        ("8 solver soundness", c8_solver, None),
    ];
    let mut failed = 0;
    for (name, run, limit) in criteria {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        let elapsed = start.elapsed();
        let outcome = match (outcome, limit) {
            (Ok(_), Some(l)) if elapsed > l => Err(format!("took {elapsed:.2?}, limit {l:?}")),
            (o, _) => o,
        };
        match outcome {
            Ok(detail) => println!("PASS [{name}] {detail} ({elapsed:.2?})"),
            Err(reason) => {
                failed += 1;
                println!("FAIL [{name}] {reason} ({elapsed:.2?})");
            }
        }
    }
    println!("acceptance: {} of 8 criteria passed", 8 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
