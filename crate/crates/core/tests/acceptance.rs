//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each,
//! and exits non-zero if any failed.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use lqswitch::adaptive::{adaptive_run, AdaptiveConfig};
use lqswitch::certificates::{
    bounded_cost_bound, build_common_certificate, build_fallback_certificate, check_common_certificate,
    check_fallback_certificate, fourth_moment_bound, process_gramian, tail_bound, threshold_floor, CERT_MARGIN,
};
use lqswitch::control::{dare_solve, linear_feedback_cost, spectral_radius, Cost, LQWeights, LinearPlant, Matrix};
use lqswitch::experiments::{
    example1_plant, example1_weights, gap_sweep, learning_gap_curve, standin_plant, standin_weights, SweepStatus,
};
use lqswitch::montecarlo::{estimate_cost, map_trajectories, mean_stderr, MonteCarloConfig};
use lqswitch::stats::theil_sen_slope;
use lqswitch::switching::{linear_policy, SwitchConfig, SwitchedController};

type Check = Result<String, String>;

fn m(rows: usize, cols: usize, data: &[f64]) -> Matrix {
    Matrix::from_row_slice(rows, cols, data)
}

fn gaussian(g: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| g.sample::<f64, _>(StandardNormal))
}

fn ensure(cond: bool, detail: String) -> Check {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(limit: Duration, start: Instant) -> Result<(), String> {
    let took = start.elapsed();
    if took > limit {
        Err(format!("took {took:.2?}, limit {limit:?}"))
    } else {
        Ok(())
    }
}

fn random_controllable_plant(g: &mut ChaCha8Rng, n: usize, m: usize, spread: f64) -> LinearPlant {
    loop {
        let a = gaussian(g, n, n) * (spread / (n as f64).sqrt());
        let b = gaussian(g, n, m);
        if let Ok(p) = LinearPlant::new(a, b, Matrix::identity(n, n)) {
            return p;
        }
    }
}

fn dare_correctness() -> Check {
    let start = Instant::now();
    let plant = LinearPlant::new(m(1, 1, &[1.0]), m(1, 1, &[1.0]), m(1, 1, &[1.0])).unwrap();
    let weights = LQWeights::new(m(1, 1, &[1.0]), m(1, 1, &[1.0])).unwrap();
    let golden = (1.0 + 5f64.sqrt()) / 2.0;
    let p = dare_solve(&plant, &weights).map_err(|e| e.to_string())?.p_star[(0, 0)];
    if (p - golden).abs() > 1e-12 {
        return Err(format!("scalar P* = {p}, expected {golden}"));
    }
    let mut g = ChaCha8Rng::seed_from_u64(101);
    let mut worst_residual: f64 = 0.0;
    let mut worst_rho: f64 = 0.0;
    for _ in 0..100 {
        let n = g.random_range(1..=6);
        let mm = g.random_range(1..=n.min(3));
        let spread = g.random_range(0.3..1.6);
        let plant = random_controllable_plant(&mut g, n, mm, spread);
        let weights = LQWeights::new(Matrix::identity(n, n), Matrix::identity(mm, mm)).unwrap();
        let sol = dare_solve(&plant, &weights).map_err(|e| e.to_string())?;
        worst_residual = worst_residual.max(sol.residual);
        worst_rho = worst_rho.max(spectral_radius(&plant.closed_loop(&sol.k_star).unwrap()).unwrap());
    }
    within(Duration::from_secs(5), start)?;
    ensure(
        worst_residual <= 1e-9 && worst_rho < 1.0,
        format!("|P*-golden|={:.1e}, 100 plants: max residual {worst_residual:.2e}, max rho {worst_rho:.4}", (p - golden).abs()),
    )
}

fn safety() -> Check {
    let start = Instant::now();
    let plant = example1_plant();
    let weights = example1_weights();
    let k0 = Matrix::zeros(1, 2);
    let k1 = m(1, 2, &[0.0, 0.7]);
    let rho1 = spectral_radius(&plant.closed_loop(&k1).unwrap()).unwrap();
    let cert0 = build_fallback_certificate(&plant, &k0, None).map_err(|e| e.to_string())?;
    let bound = bounded_cost_bound(&plant, &weights, &k0, &k1, 10.0, &cert0).map_err(|e| e.to_string())?;
    let mc = MonteCarloConfig::new(10_000, 200, 2);
    let switched = SwitchedController::new(SwitchConfig::new(k0, k1.clone(), 10.0, 30).unwrap());
    let est = estimate_cost(&plant, &weights, &switched, mc).map_err(|e| e.to_string())?;
    let unswitched = estimate_cost(&plant, &weights, &linear_policy(k1), mc).map_err(|e| e.to_string())?;
    within(Duration::from_secs(60), start)?;
    let mean = est.mean.to_f64();
    ensure(
        est.mean.is_finite() && mean <= bound && unswitched.diverged,
        format!(
            "rho(A+BK1)={rho1:.3}, switched cost {mean:.4} <= bound {bound:.4e}, unswitched diverged={}",
            unswitched.diverged
        ),
    )
}

fn dwell_effect() -> Check {
    let plant = example1_plant();
    let weights = example1_weights();
    let base = AdaptiveConfig::new(Matrix::zeros(1, 2));
    let mut diffs = Vec::new();
    let (mut t1, mut t30) = (0usize, 0usize);
    for seed in 0..100 {
        let a = adaptive_run(&plant, &weights, &base.clone().fixed(10.0, 1), 1000, seed).map_err(|e| e.to_string())?;
        let b = adaptive_run(&plant, &weights, &base.clone().fixed(10.0, 30), 1000, seed).map_err(|e| e.to_string())?;
        t1 += a.trigger_count;
        t30 += b.trigger_count;
        diffs.push(a.trigger_count as f64 - b.trigger_count as f64);
    }
    let (mean, se) = mean_stderr(&diffs);
    ensure(
        mean - 1.96 * se > 0.0,
        format!(
            "mean triggers t=1: {:.2}, t=30: {:.2}, paired difference {mean:.2} (95% lower limit {:.2})",
            t1 as f64 / 100.0,
            t30 as f64 / 100.0,
            mean - 1.96 * se
        ),
    )
}

struct StableSetting {
    plant: LinearPlant,
    weights: LQWeights,
    k0: Matrix,
    k1: Matrix,
}

fn example1_optimal() -> StableSetting {
    let plant = example1_plant();
    let weights = example1_weights();
    let k1 = dare_solve(&plant, &weights).unwrap().k_star;
    StableSetting {
        k0: Matrix::zeros(1, 2),
        plant,
        weights,
        k1,
    }
}

fn tail_probability() -> Check {
    let s = example1_optimal();
    let cert = build_common_certificate(&s.plant, &s.k0, &s.k1, None).map_err(|e| e.to_string())?;
    let w_tilde = process_gramian(&s.plant, &s.k0).unwrap();
    let m0 = threshold_floor(&w_tilde, &cert.p, cert.rho).unwrap();
    let mut lines = Vec::new();
    let mut ok = true;
    for (i, threshold) in [m0, m0 + 1.0, m0 + 2.0].into_iter().enumerate() {
        let bound = tail_bound(threshold, cert.t_min, 2, &cert.p, cert.rho, &w_tilde).unwrap();
        let ctrl = SwitchedController::new(SwitchConfig::new(s.k0.clone(), s.k1.clone(), threshold, cert.t_min).unwrap());
        let mc = MonteCarloConfig::new(1000, 200, 40 + i as u64);
        let est = estimate_cost(&s.plant, &s.weights, &ctrl, mc).map_err(|e| e.to_string())?;
        let p = est.fallback_fraction;
        let steps = (mc.horizon * mc.n_traj) as f64;
        let se = (p * (1.0 - p) / steps).sqrt();
        ok &= p <= bound + 3.0 * se;
        lines.push(format!("M={threshold:.2}: fraction {p:.3e} vs bound {bound:.3e}"));
    }
    ensure(ok, format!("t={} ; {}", cert.t_min, lines.join("; ")))
}

fn fourth_moment() -> Check {
    let s = example1_optimal();
    let cert0 = build_fallback_certificate(&s.plant, &s.k0, None).unwrap();
    let cert = build_common_certificate(&s.plant, &s.k0, &s.k1, None).map_err(|e| e.to_string())?;
    let w_tilde = process_gramian(&s.plant, &s.k0).unwrap();
    let m0 = threshold_floor(&w_tilde, &cert.p, cert.rho).unwrap();
    let bound = fourth_moment_bound(2, &cert.p, cert.rho, &cert0.p0, &w_tilde).unwrap().bound;
    let ctrl = SwitchedController::new(SwitchConfig::new(s.k0.clone(), s.k1.clone(), m0, cert.t_min).unwrap());
    let times = [10usize, 100, 1000];
    let p0 = cert0.p0.clone();
    let samples = map_trajectories(&s.plant, &s.weights, &ctrl, MonteCarloConfig::new(1001, 1000, 5), |_, rec| {
        times.map(|k| {
            let x = &rec.states[k];
            let q = (x.transpose() * &p0 * x)[(0, 0)];
            q * q
        })
    })
    .map_err(|e| e.to_string())?;
    let mut ok = true;
    let mut parts = Vec::new();
    for (j, k) in times.iter().enumerate() {
        let col: Vec<f64> = samples.iter().map(|s| s[j]).collect();
        let (mean, se) = mean_stderr(&col);
        ok &= mean <= bound + 3.0 * se;
        parts.push(format!("k={k}: {mean:.3e}±{se:.1e}"));
    }
    ensure(ok, format!("bound {bound:.3e}; {}", parts.join(", ")))
}

fn gap_decay() -> Check {
    let s = example1_optimal();
    let sweep = gap_sweep(&s.plant, &s.weights, &s.k0, &s.k1, None, None, MonteCarloConfig::new(100, 200, 6))
        .map_err(|e| e.to_string())?;
    let mut ok = true;
    for r in &sweep.rows {
        match (&r.status, &r.bound) {
            (SweepStatus::Ok, Some(b)) => ok &= r.mc_gap <= b.bound + 3.0 * r.mc_stderr,
            _ => ok = false,
        }
    }
    let fit = sweep.fit.ok_or("no rows in the linear regime")?;
    let rel = (fit.slope + sweep.decay_constant).abs() / sweep.decay_constant;
    ensure(
        ok && sweep.fit_points >= 3 && fit.r_squared >= 0.99 && rel <= 1e-2,
        format!(
            "{} rows, all gaps <= bound+3se: {ok}; slope {:.6e} vs -c {:.6e} over {} rows, R^2 {:.6}",
            sweep.rows.len(),
            fit.slope,
            -sweep.decay_constant,
            sweep.fit_points,
            fit.r_squared
        ),
    )
}

fn certificate_validity() -> Check {
    let mut g = ChaCha8Rng::seed_from_u64(707);
    let mut with_dwell = 0;
    for case in 0..50 {
        let n = g.random_range(2..=5);
        let mm = g.random_range(1..=2);
        let (plant, k0) = if case % 2 == 0 {
            // open-loop stable plant with K₀ = 0
            let raw = random_controllable_plant(&mut g, n, mm, 1.0);
            let target = g.random_range(0.3..0.97);
            let a = raw.a() * (target / spectral_radius(raw.a()).unwrap());
            let p = LinearPlant::new(a, raw.b().clone(), Matrix::identity(n, n)).unwrap();
            (p, Matrix::zeros(mm, n))
        } else {
            let p = random_controllable_plant(&mut g, n, mm, 1.3);
            let w = LQWeights::new(Matrix::identity(n, n), Matrix::identity(mm, mm)).unwrap();
            let ks = dare_solve(&p, &w).unwrap().k_star;
            let mut scale = 0.5;
            let k0 = loop {
                let cand = &ks + gaussian(&mut g, mm, n) * scale;
                if spectral_radius(&p.closed_loop(&cand).unwrap()).unwrap() < 0.99 {
                    break cand;
                }
                scale *= 0.5;
            };
            (p, k0)
        };
        let weights = LQWeights::new(Matrix::identity(n, n), Matrix::identity(mm, mm)).unwrap();
        let k1 = dare_solve(&plant, &weights).unwrap().k_star;
        let cert0 = build_fallback_certificate(&plant, &k0, None).map_err(|e| format!("case {case}: {e}"))?;
        let cert = build_common_certificate(&plant, &k0, &k1, None).map_err(|e| format!("case {case}: {e}"))?;
        let c0 = check_fallback_certificate(&plant, &k0, &cert0).unwrap();
        let c = check_common_certificate(&plant, &k0, &k1, &cert).unwrap();
        if !(c0.passed && c.passed && c.minimal) {
            return Err(format!("case {case}: fallback {c0:?}, common {c:?}"));
        }
        if cert.t_min > 1 {
            with_dwell += 1;
            if c.previous_dwell_margin.is_none_or(|m| m >= CERT_MARGIN) {
                return Err(format!("case {case}: t_min - 1 passes"));
            }
        }
    }
    Ok(format!("50 closed loops pass the eigenvalue checker; {with_dwell} with t_min > 1 fail at t_min - 1"))
}

fn estimator_consistency() -> Check {
    let mut parts = Vec::new();
    let mut ok = true;
    for (name, plant, weights) in [
        ("example", example1_plant(), example1_weights()),
        ("stand-in", standin_plant(), standin_weights()),
    ] {
        let k = dare_solve(&plant, &weights).unwrap().k_star;
        let exact = linear_feedback_cost(&plant, &weights, &k).unwrap().to_f64();
        let cfg = MonteCarloConfig::new(2000, 400, 8);
        let policy = linear_policy(k);
        let runs: Vec<_> = [1, 2, 4]
            .into_iter()
            .map(|t| estimate_cost(&plant, &weights, &policy, cfg.with_threads(t)).unwrap())
            .collect();
        let identical = runs.windows(2).all(|w| w[0] == w[1]);
        let mean = runs[0].mean.to_f64();
        let z = (mean - exact) / runs[0].stderr;
        ok &= identical && z.abs() <= 3.0;
        parts.push(format!("{name}: exact {exact:.5}, MC {mean:.5} (z={z:.2}), identical across 1/2/4 threads: {identical}"));
    }
    ensure(ok, parts.join("; "))
}

fn adaptive_shape() -> Check {
    let start = Instant::now();
    let (rec, points) =
        learning_gap_curve((1 << 14) + 1, 2026, MonteCarloConfig::new(100, 1000, 2027)).map_err(|e| e.to_string())?;
    within(Duration::from_secs(15 * 60), start)?;
    let all_finite = points.iter().all(|p| p.j_switched.is_finite());
    let destabilizing = points.iter().filter(|p| p.j_linear == Cost::Infinite).count();
    let tail = &points[points.len().saturating_sub(5)..];
    let last_k = points.last().map_or(0, |p| p.k);
    let logs: Option<Vec<(f64, f64)>> = tail
        .iter()
        .map(|p| p.gap.filter(|g| *g > 0.0).map(|g| ((p.k as f64).ln(), g.ln())))
        .collect();
    let gaps: Vec<String> = tail
        .iter()
        .map(|p| p.gap.map_or("none".into(), |g| format!("{g:.3e}")))
        .collect();
    let slope = logs.and_then(|v| {
        let (xs, ys): (Vec<f64>, Vec<f64>) = v.into_iter().unzip();
        theil_sen_slope(&xs, &ys)
    });
    ensure(
        all_finite && last_k == 1 << 14 && slope.is_some_and(|s| s < 0.0),
        format!(
            "{} updates to k={last_k}, switched cost finite at all: {all_finite}, destabilizing rows {destabilizing}, run triggers {}, last gaps [{}], Theil-Sen slope {}",
            points.len(),
            rec.trigger_count,
            gaps.join(", "),
            slope.map_or("undefined".into(), |s| format!("{s:.3}"))
        ),
    )
}

type Criterion = (&'static str, fn() -> Check);

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("DARE correctness", dare_correctness),
        ("safety under a destabilizing primary gain", safety),
        ("dwell-time effect", dwell_effect),
        ("fallback tail probability", tail_probability),
        ("fourth moment", fourth_moment),
        ("gap bound and decay", gap_decay),
        ("certificate validity", certificate_validity),
        ("cost estimator consistency", estimator_consistency),
        ("adaptive experiment shape", adaptive_shape),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("PASS criterion {} ({name}): {detail} [{secs:.2} s]", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {} ({name}): {detail} [{secs:.2} s]", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
