//! Reproducible experiments behind the command-line tool: text reports,
//! CSV writers and the bundled example runs.
//!
//! Every file produced here starts with a `#` provenance line naming the
//! command, the seed and the parameters that generated it. Floats are
//! written with 17 significant digits and infinite costs as `inf`.

use std::fmt::{Display, Write as _};
use std::fs;
use std::path::{Path, PathBuf};

use crate::adaptive::{adaptive_run, gap_curve, AdaptiveConfig, AdaptiveRecord, GapPoint};
use crate::certificates::{
    bounded_cost_bound, build_common_certificate, build_fallback_certificate, check_common_certificate,
    check_fallback_certificate, combined_weight, decay_constant, fourth_moment_bound, gap_bound, lemma1_bound,
    process_gramian, script_a, tail_bound, threshold_floor, GapBound,
};
use crate::control::{
    dare_solve, fmt_f64, spectral_radius, weighted_matrix_norm, LQWeights, LinearPlant,
    Matrix, Vector,
};
use crate::error::{Error, Result};
use crate::matio::{plant_from_set, weights_from_set, MatrixSet};
use crate::montecarlo::{estimate_cost, paired_compare, rollout, CostEstimate, MonteCarloConfig, TrajectoryRecord};
use crate::rng::RngStream;
use crate::stats::{fit_line, LineFit};
use crate::switching::{linear_policy, Action, Controller, LinearPolicy, SwitchConfig, SwitchedController};

const EXAMPLE1_PLANT: &str = include_str!("../data/example1_plant.txt");
const EXAMPLE1_WEIGHTS: &str = include_str!("../data/example1_weights.txt");
const STANDIN_PLANT: &str = include_str!("../data/standin_plant.txt");
const STANDIN_WEIGHTS: &str = include_str!("../data/standin_weights.txt");

/// A = [[0.8, 1], [0, 0.8]], B = [0; 1], W = I.
pub fn example1_plant() -> LinearPlant {
    plant_from_set(&MatrixSet::parse(EXAMPLE1_PLANT).expect("bundled data parses")).expect("bundled plant is valid")
}

/// Q = I, R = 10⁻⁴.
pub fn example1_weights() -> LQWeights {
    weights_from_set(&MatrixSet::parse(EXAMPLE1_WEIGHTS).expect("bundled data parses"))
        .expect("bundled weights are valid")
}

/// Fixed open-loop stable 8-state, 4-input plant with W = I.
pub fn standin_plant() -> LinearPlant {
    plant_from_set(&MatrixSet::parse(STANDIN_PLANT).expect("bundled data parses")).expect("bundled plant is valid")
}

/// Q = I₈, R = I₄.
pub fn standin_weights() -> LQWeights {
    weights_from_set(&MatrixSet::parse(STANDIN_WEIGHTS).expect("bundled data parses"))
        .expect("bundled weights are valid")
}

pub const STANDIN_PLANT_TEXT: &str = STANDIN_PLANT;
pub const STANDIN_WEIGHTS_TEXT: &str = STANDIN_WEIGHTS;
pub const EXAMPLE1_PLANT_TEXT: &str = EXAMPLE1_PLANT;
pub const EXAMPLE1_WEIGHTS_TEXT: &str = EXAMPLE1_WEIGHTS;

/// Command, seed and parameters of an output file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Provenance {
    pub command: String,
    pub seed: Option<u64>,
    pub params: Vec<(String, String)>,
}

impl Provenance {
    pub fn new(command: impl Into<String>) -> Self {
        Self {
            command: command.into(),
            ..Self::default()
        }
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn param(mut self, key: impl Into<String>, value: impl Display) -> Self {
        self.params.push((key.into(), value.to_string()));
        self
    }

    pub fn header(&self) -> String {
        let mut s = format!("# lqswitch {}", self.command);
        if let Some(seed) = self.seed {
            let _ = write!(s, " seed={seed}");
        }
        for (k, v) in &self.params {
            let _ = write!(s, " {k}={v}");
        }
        s.push('\n');
        s
    }
}

/// Ordered `key = value` lines.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    pub entries: Vec<(String, String)>,
}

impl Report {
    pub fn push(&mut self, key: &str, value: impl Display) {
        self.entries.push((key.to_string(), value.to_string()));
    }

    pub fn push_f64(&mut self, key: &str, value: f64) {
        self.push(key, fmt_f64(value));
    }

    pub fn push_matrix(&mut self, key: &str, m: &Matrix) {
        self.push(key, fmt_matrix(m));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn get_f64(&self, key: &str) -> Option<f64> {
        self.get(key).and_then(|v| v.parse().ok())
    }

    pub fn to_text(&self, provenance: &Provenance) -> String {
        let mut s = provenance.header();
        for (k, v) in &self.entries {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }
}

/// `[[a, b], [c, d]]` with 17 significant digits.
pub fn fmt_matrix(m: &Matrix) -> String {
    let rows: Vec<String> = (0..m.nrows())
        .map(|i| {
            let r: Vec<String> = m.row(i).iter().map(|v| fmt_f64(*v)).collect();
            format!("[{}]", r.join(", "))
        })
        .collect();
    format!("[{}]", rows.join(", "))
}

pub fn dare_report(plant: &LinearPlant, weights: &LQWeights) -> Result<Report> {
    let sol = dare_solve(plant, weights)?;
    let mut r = Report::default();
    r.push_matrix("P_star", &sol.p_star);
    r.push_matrix("K_star", &sol.k_star);
    r.push_f64("J_star", sol.j_star);
    r.push_f64("residual", sol.residual);
    r.push_f64("spectral_radius_closed_loop", spectral_radius(&plant.closed_loop(&sol.k_star)?)?);
    Ok(r)
}

/// Certificates for (K₀, K₁) and, when `hyper = Some((M, t))`, the bounds
/// at that threshold and dwell time.
pub fn certify_report(
    plant: &LinearPlant,
    weights: &LQWeights,
    k0: &Matrix,
    k1: &Matrix,
    hyper: Option<(f64, usize)>,
) -> Result<Report> {
    weights.check_plant(plant)?;
    plant.check_gain(k0)?;
    plant.check_gain(k1)?;
    let rho_fb = spectral_radius(&plant.closed_loop(k0)?)?;
    let rho_pr = spectral_radius(&plant.closed_loop(k1)?)?;
    let mut r = Report::default();
    r.push_f64("spectral_radius_fallback", rho_fb);
    r.push_f64("spectral_radius_primary", rho_pr);
    if rho_fb >= 1.0 {
        return Err(Error::NotStabilizing { rho: rho_fb });
    }

    let cert0 = build_fallback_certificate(plant, k0, None)?;
    let check0 = check_fallback_certificate(plant, k0, &cert0)?;
    r.push_f64("rho0", cert0.rho0);
    r.push_matrix("P0", &cert0.p0);
    r.push_f64("fallback_margin", check0.margin);
    r.push("fallback_certificate", if check0.passed { "passed" } else { "failed" });
    let sa = script_a(plant, k0, k1)?;
    r.push_f64("script_A", sa);
    r.push_f64(
        "norm_Q01_P0",
        weighted_matrix_norm(&combined_weight(weights, k0, k1), &cert0.p0)?,
    );
    if let Some((m, _)) = hyper {
        r.push_f64("second_moment_bound", lemma1_bound(m, sa, &cert0.p0, cert0.rho0, plant.w())?);
        r.push_f64("bounded_cost_bound", bounded_cost_bound(plant, weights, k0, k1, m, &cert0)?);
    }

    if rho_pr >= 1.0 {
        r.push(
            "common_certificate",
            format!("inapplicable (primary loop spectral radius {})", fmt_f64(rho_pr)),
        );
        return Ok(r);
    }
    let cert = build_common_certificate(plant, k0, k1, None)?;
    let check = check_common_certificate(plant, k0, k1, &cert)?;
    let w_tilde = process_gramian(plant, k0)?;
    let m0 = threshold_floor(&w_tilde, &cert.p, cert.rho)?;
    let fm = fourth_moment_bound(plant.n(), &cert.p, cert.rho, &cert0.p0, &w_tilde)?;
    r.push("common_certificate", if check.passed { "passed" } else { "failed" });
    r.push_f64("rho", cert.rho);
    r.push_matrix("P", &cert.p);
    r.push("t_min", cert.t_min);
    r.push_f64("primary_margin", check.primary_margin);
    r.push_f64("dwell_margin", check.dwell_margin);
    r.push(
        "dwell_margin_previous",
        check.previous_dwell_margin.map(fmt_f64).unwrap_or_else(|| "none".into()),
    );
    r.push("t_min_minimal", check.minimal);
    r.push_matrix("W_tilde", &w_tilde);
    r.push_f64("M0", m0);
    r.push_f64("script_Q", fm.script_q);
    r.push_f64("fourth_moment_bound", fm.bound);
    r.push_f64("decay_constant", decay_constant(cert.rho, &cert.p, &w_tilde)?);

    if let Some((m, t)) = hyper {
        r.push_f64("tail_bound", tail_bound(m, t, plant.n(), &cert.p, cert.rho, &w_tilde)?);
        match gap_bound(plant, weights, k0, k1, m, t, &cert0, &cert) {
            Ok(gb) => push_gap_bound(&mut r, &gb),
            Err(Error::Precondition(msg)) => r.push("gap_bound", format!("refused ({msg})")),
            Err(e) => return Err(e),
        }
    }
    Ok(r)
}

fn push_gap_bound(r: &mut Report, gb: &GapBound) {
    let a = &gb.analysis;
    r.push_f64("C1", a.c1);
    r.push_f64("C2", a.c2);
    r.push_f64("C2_weighted", a.c2_weighted);
    r.push_f64("C3", a.c3);
    r.push_f64("C4", a.c4);
    r.push_f64("power_series", a.power_series);
    r.push_f64("tail_factor", a.tail_factor);
    r.push_f64("script_G", a.g);
    r.push_f64("gap_bound", gb.bound);
}

/// The bounds at (M, t); the same content as the certificate report with
/// the hyper-parameters required.
pub fn bound_report(
    plant: &LinearPlant,
    weights: &LQWeights,
    k0: &Matrix,
    k1: &Matrix,
    threshold: f64,
    dwell: usize,
) -> Result<Report> {
    certify_report(plant, weights, k0, k1, Some((threshold, dwell)))
}

/// Either u = K₁x or the switched law; lets callers pick at run time.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyController {
    Linear(LinearPolicy),
    Switched(SwitchedController),
}

impl AnyController {
    pub fn new(k0: &Matrix, k1: &Matrix, threshold: f64, dwell: usize, switching: bool) -> Result<Self> {
        if switching {
            Ok(Self::Switched(SwitchedController::new(SwitchConfig::new(
                k0.clone(),
                k1.clone(),
                threshold,
                dwell,
            )?)))
        } else {
            Ok(Self::Linear(linear_policy(k1.clone())))
        }
    }
}

impl Controller for AnyController {
    fn reset(&mut self) {
        match self {
            Self::Linear(c) => c.reset(),
            Self::Switched(c) => c.reset(),
        }
    }

    fn act(&mut self, k: usize, x: &Vector, noise: &RngStream) -> Result<Action> {
        match self {
            Self::Linear(c) => c.act(k, x, noise),
            Self::Switched(c) => c.act(k, x, noise),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    /// Trajectory 0 of the Monte Carlo batch, recorded in full.
    pub trajectory: TrajectoryRecord,
    pub estimate: CostEstimate,
}

pub fn simulate(
    plant: &LinearPlant,
    weights: &LQWeights,
    controller: &AnyController,
    mc: MonteCarloConfig,
) -> Result<Simulation> {
    let mut c = controller.clone();
    let trajectory = rollout(plant, weights, &mut c, mc.horizon, &RngStream::new(mc.seed, 0))?;
    let estimate = estimate_cost(plant, weights, controller, mc)?;
    Ok(Simulation { trajectory, estimate })
}

fn numbered(prefix: &str, count: usize) -> Vec<String> {
    (1..=count).map(|i| format!("{prefix}_{i}")).collect()
}

fn push_values(row: &mut Vec<String>, v: &Vector) {
    row.extend(v.iter().map(|x| fmt_f64(*x)));
}

/// Columns k, x_1..x_n, u_1..u_m, mode, stage_cost.
pub fn trajectory_csv(rec: &TrajectoryRecord, provenance: &Provenance) -> String {
    let n = rec.states.first().map_or(0, |x| x.len());
    let m = rec.inputs.first().map_or(0, |u| u.len());
    let mut header = vec!["k".to_string()];
    header.extend(numbered("x", n));
    header.extend(numbered("u", m));
    header.extend(["mode".to_string(), "stage_cost".to_string()]);
    let mut s = provenance.header();
    let _ = writeln!(s, "{}", header.join(","));
    for k in 0..rec.steps() {
        let mut row = vec![k.to_string()];
        push_values(&mut row, &rec.states[k]);
        push_values(&mut row, &rec.inputs[k]);
        row.push(rec.modes[k].to_string());
        row.push(fmt_f64(rec.stage_costs[k]));
        let _ = writeln!(s, "{}", row.join(","));
    }
    s
}

pub fn estimate_text(est: &CostEstimate, provenance: &Provenance) -> String {
    let mut r = Report::default();
    r.push("mean", est.mean);
    r.push_f64("stderr", est.stderr);
    r.push("horizon", est.horizon);
    r.push("n_traj", est.n_traj);
    r.push("seed", est.seed);
    r.push_f64("fallback_fraction", est.fallback_fraction);
    r.push_f64("mean_triggers", est.mean_triggers);
    r.push("diverged", est.diverged);
    r.to_text(provenance)
}

#[derive(Debug, Clone, PartialEq)]
pub enum SweepStatus {
    Ok,
    /// Precondition of the bound not met (M < M₀ or dwell inequality fails).
    Skipped(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub threshold: f64,
    pub dwell: usize,
    pub bound: Option<GapBound>,
    /// Paired Monte Carlo estimate of J^{K₁,M,t} − J^{K₁}.
    pub mc_gap: f64,
    pub mc_stderr: f64,
    pub status: SweepStatus,
}

impl SweepRow {
    /// Share of the bound coming from the term linear in 𝒢.
    pub fn linear_share(&self) -> Option<f64> {
        let gb = self.bound.as_ref()?;
        let a = &gb.analysis;
        let lin = 2.0 * a.c1 * a.c2 * a.g;
        (gb.bound > 0.0).then(|| lin / gb.bound)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GapSweep {
    pub rows: Vec<SweepRow>,
    pub m0: f64,
    pub t_min: usize,
    pub decay_constant: f64,
    /// Fit of log(bound) against M² over rows where the 𝒢-linear term
    /// carries at least 99% of the bound.
    pub fit: Option<LineFit>,
    pub fit_points: usize,
}

/// Thresholds M₀·{1, 1.5, 2, 3, …, 16}.
pub fn default_sweep_thresholds(m0: f64) -> Vec<f64> {
    let mut f = vec![1.0, 1.5, 2.0];
    f.extend((3..=16).map(|i| i as f64));
    f.into_iter().map(|x| x * m0).collect()
}

/// Gap bound and paired Monte Carlo gap for each threshold at dwell time
/// `dwell` (t_min by default). `thresholds = None` uses
/// [`default_sweep_thresholds`].
pub fn gap_sweep(
    plant: &LinearPlant,
    weights: &LQWeights,
    k0: &Matrix,
    k1: &Matrix,
    thresholds: Option<&[f64]>,
    dwell: Option<usize>,
    mc: MonteCarloConfig,
) -> Result<GapSweep> {
    let cert0 = build_fallback_certificate(plant, k0, None)?;
    let cert = build_common_certificate(plant, k0, k1, None)?;
    let w_tilde = process_gramian(plant, k0)?;
    let m0 = threshold_floor(&w_tilde, &cert.p, cert.rho)?;
    let t = dwell.unwrap_or(cert.t_min);
    let defaults;
    let thresholds = match thresholds {
        Some(m) => m,
        None => {
            defaults = default_sweep_thresholds(m0);
            &defaults
        }
    };
    let linear = linear_policy(k1.clone());
    let mut rows = Vec::with_capacity(thresholds.len());
    for &m in thresholds {
        let (bound, status) = match gap_bound(plant, weights, k0, k1, m, t, &cert0, &cert) {
            Ok(gb) => (Some(gb), SweepStatus::Ok),
            Err(Error::Precondition(msg)) => (None, SweepStatus::Skipped(msg)),
            Err(e) => return Err(e),
        };
        let switched = SwitchedController::new(SwitchConfig::new(k0.clone(), k1.clone(), m, t)?);
        let cmp = paired_compare(plant, weights, &switched, &linear, mc)?;
        rows.push(SweepRow {
            threshold: m,
            dwell: t,
            bound,
            mc_gap: cmp.mean_difference,
            mc_stderr: cmp.stderr_difference,
            status,
        });
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = rows
        .iter()
        .filter(|r| r.linear_share().is_some_and(|s| s >= 0.99))
        .filter_map(|r| {
            let b = r.bound.as_ref()?.bound;
            (b > 0.0 && b.is_finite()).then(|| (r.threshold * r.threshold, b.ln()))
        })
        .unzip();
    Ok(GapSweep {
        m0,
        t_min: cert.t_min,
        decay_constant: decay_constant(cert.rho, &cert.p, &w_tilde)?,
        fit: fit_line(&xs, &ys),
        fit_points: xs.len(),
        rows,
    })
}

/// Columns M, t, bound, mc_gap, mc_stderr, status, followed by comment
/// lines with the fitted slope of log(bound) against M².
pub fn gap_sweep_csv(sweep: &GapSweep, provenance: &Provenance) -> String {
    let mut s = provenance.header();
    let _ = writeln!(s, "# M0={} t_min={}", fmt_f64(sweep.m0), sweep.t_min);
    let _ = writeln!(s, "M,t,bound,mc_gap,mc_stderr,status");
    for r in &sweep.rows {
        let (bound, status) = match &r.status {
            SweepStatus::Ok => (fmt_f64(r.bound.as_ref().map_or(f64::NAN, |b| b.bound)), "ok".to_string()),
            SweepStatus::Skipped(_) => (String::new(), "skipped".to_string()),
        };
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            fmt_f64(r.threshold),
            r.dwell,
            bound,
            fmt_f64(r.mc_gap),
            fmt_f64(r.mc_stderr),
            status
        );
    }
    match &sweep.fit {
        Some(fit) => {
            let _ = writeln!(
                s,
                "# fit log(bound) ~ M^2 over {} rows: slope={} intercept={} r_squared={} decay_constant={}",
                sweep.fit_points,
                fmt_f64(fit.slope),
                fmt_f64(fit.intercept),
                fmt_f64(fit.r_squared),
                fmt_f64(sweep.decay_constant)
            );
        }
        None => {
            let _ = writeln!(s, "# fit unavailable: fewer than two rows in the linear regime");
        }
    }
    s
}

fn csv_text(s: &str) -> String {
    s.replace([',', '\n'], ";")
}

/// Per-step log: k, x_1..x_n, state_norm, u_1..u_m, mode, triggered, M, t,
/// exploration_scale, zeta_1..zeta_m, w_1..w_n, stage_cost.
pub fn adaptive_steps_csv(rec: &AdaptiveRecord, provenance: &Provenance) -> String {
    let n = rec.config.k0.ncols();
    let m = rec.config.k0.nrows();
    let mut header = vec!["k".to_string()];
    header.extend(numbered("x", n));
    header.push("state_norm".into());
    header.extend(numbered("u", m));
    header.extend(["mode", "triggered", "M", "t", "exploration_scale"].map(String::from));
    header.extend(numbered("zeta", m));
    header.extend(numbered("w", n));
    header.push("stage_cost".into());
    let mut s = provenance.header();
    let _ = writeln!(s, "{}", header.join(","));
    for st in &rec.steps {
        let mut row = vec![st.k.to_string()];
        push_values(&mut row, &st.x);
        row.push(fmt_f64(st.x.norm()));
        push_values(&mut row, &st.u);
        row.push(st.mode.to_string());
        row.push(st.triggered.to_string());
        row.push(fmt_f64(st.threshold));
        row.push(st.dwell.to_string());
        row.push(fmt_f64(st.exploration_scale));
        push_values(&mut row, &st.zeta);
        push_values(&mut row, &st.w);
        row.push(fmt_f64(st.stage_cost));
        let _ = writeln!(s, "{}", row.join(","));
    }
    s
}

fn matrix_columns(prefix: &str, rows: usize, cols: usize) -> Vec<String> {
    let mut v = Vec::with_capacity(rows * cols);
    for i in 1..=rows {
        for j in 1..=cols {
            v.push(format!("{prefix}_{i}_{j}"));
        }
    }
    v
}

fn push_matrix_values(row: &mut Vec<String>, m: Option<&Matrix>, rows: usize, cols: usize) {
    match m {
        Some(m) => {
            for i in 0..rows {
                for j in 0..cols {
                    row.push(fmt_f64(m[(i, j)]));
                }
            }
        }
        None => row.extend(std::iter::repeat_n(String::new(), rows * cols)),
    }
}

/// Per-update log: k, updated, stabilizing, A_hat, B_hat and gain entries
/// (row-major), error.
pub fn adaptive_updates_csv(rec: &AdaptiveRecord, provenance: &Provenance) -> String {
    let n = rec.config.k0.ncols();
    let m = rec.config.k0.nrows();
    let mut header = vec!["k".to_string(), "updated".into(), "stabilizing".into()];
    header.extend(matrix_columns("A_hat", n, n));
    header.extend(matrix_columns("B_hat", n, m));
    header.extend(matrix_columns("K", m, n));
    header.push("error".into());
    let mut s = provenance.header();
    let _ = writeln!(s, "{}", header.join(","));
    for u in &rec.updates {
        let mut row = vec![u.k.to_string(), u.updated.to_string(), u.stabilizing.to_string()];
        push_matrix_values(&mut row, u.a_hat.as_ref(), n, n);
        push_matrix_values(&mut row, u.b_hat.as_ref(), n, m);
        push_matrix_values(&mut row, Some(&u.gain), m, n);
        row.push(u.error.as_deref().map(csv_text).unwrap_or_default());
        let _ = writeln!(s, "{}", row.join(","));
    }
    s
}

/// Columns k, M, t, J_switched, stderr, J_linear, gap, gap_stderr,
/// fallback_fraction, log_k, log_gap. Gap cells are empty when the linear
/// gain is destabilizing; log_gap is empty unless the gap is positive.
pub fn gap_curve_csv(points: &[GapPoint], provenance: &Provenance) -> String {
    let mut s = provenance.header();
    let _ = writeln!(
        s,
        "k,M,t,J_switched,stderr,J_linear,gap,gap_stderr,fallback_fraction,log_k,log_gap"
    );
    for p in points {
        let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
        let log_gap = p.gap.filter(|g| *g > 0.0).map(f64::ln);
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{}",
            p.k,
            fmt_f64(p.threshold),
            p.dwell,
            p.j_switched,
            fmt_f64(p.j_switched_stderr),
            p.j_linear,
            opt(p.gap),
            opt(p.gap_stderr),
            fmt_f64(p.fallback_fraction),
            fmt_f64((p.k as f64).ln()),
            opt(log_gap)
        );
    }
    s
}

/// The three learning controllers on the example plant, sharing noise.
#[derive(Debug, Clone, PartialEq)]
pub struct DwellComparison {
    pub seed: u64,
    pub no_switch: AdaptiveRecord,
    pub dwell_1: AdaptiveRecord,
    pub dwell_30: AdaptiveRecord,
}

/// Runs the unswitched learner and the switched learners (M = 10,
/// t ∈ {1, 30}, K₀ = 0) on the example plant with one seed.
pub fn dwell_comparison(seed: u64, horizon: usize) -> Result<DwellComparison> {
    let plant = example1_plant();
    let weights = example1_weights();
    let k0 = Matrix::zeros(1, 2);
    let base = AdaptiveConfig::new(k0);
    Ok(DwellComparison {
        seed,
        no_switch: adaptive_run(&plant, &weights, &base.clone().without_switching(), horizon, seed)?,
        dwell_1: adaptive_run(&plant, &weights, &base.clone().fixed(10.0, 1), horizon, seed)?,
        dwell_30: adaptive_run(&plant, &weights, &base.fixed(10.0, 30), horizon, seed)?,
    })
}

/// First seed in `start..start + tries` whose unswitched run diverges.
pub fn find_diverging_seed(start: u64, tries: u64, horizon: usize) -> Result<Option<u64>> {
    let plant = example1_plant();
    let weights = example1_weights();
    let cfg = AdaptiveConfig::new(Matrix::zeros(1, 2)).without_switching();
    for seed in start..start.saturating_add(tries) {
        if adaptive_run(&plant, &weights, &cfg, horizon, seed)?.diverged {
            return Ok(Some(seed));
        }
    }
    Ok(None)
}

/// Learning run on the stand-in plant with logarithmic schedules, and its
/// gap curve.
pub fn learning_gap_curve(
    horizon: usize,
    seed: u64,
    mc: MonteCarloConfig,
) -> Result<(AdaptiveRecord, Vec<GapPoint>)> {
    let plant = standin_plant();
    let weights = standin_weights();
    let cfg = AdaptiveConfig::new(Matrix::zeros(plant.m(), plant.n()));
    let rec = adaptive_run(&plant, &weights, &cfg, horizon, seed)?;
    let points = gap_curve(&plant, &weights, &rec, mc)?;
    Ok((rec, points))
}

/// Settings of the example bundle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BundleConfig {
    pub seed: u64,
    /// Length of the three dwell-comparison runs.
    pub dwell_horizon: usize,
    /// Length of the learning run (updates up to the largest power of two
    /// below it).
    pub learning_horizon: usize,
    pub eval_horizon: usize,
    pub eval_n_traj: usize,
    pub threads: Option<usize>,
}

impl Default for BundleConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            dwell_horizon: 1000,
            learning_horizon: (1 << 14) + 1,
            eval_horizon: 100,
            eval_n_traj: 1000,
            threads: None,
        }
    }
}

/// Writes `text` to `path`, creating missing parent directories.
pub fn write_file(path: &Path, text: &str) -> Result<PathBuf> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, text)?;
    Ok(path.to_path_buf())
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_os_string();
    s.push(suffix);
    PathBuf::from(s)
}

/// Writes the dwell-comparison runs (on the first seed at or after
/// `config.seed` whose unswitched run diverges, if one exists within 1000
/// seeds) and the learning gap curve on the stand-in plant. Returns the
/// written paths.
pub fn write_example_bundle(prefix: &Path, config: BundleConfig) -> Result<Vec<PathBuf>> {
    let seed = find_diverging_seed(config.seed, 1000, config.dwell_horizon)?.unwrap_or(config.seed);
    let cmp = dwell_comparison(seed, config.dwell_horizon)?;
    let mut written = Vec::new();
    for (name, rec, params) in [
        ("no_switch", &cmp.no_switch, "switch=off"),
        ("dwell_1", &cmp.dwell_1, "switch=on M=10 t=1"),
        ("dwell_30", &cmp.dwell_30, "switch=on M=10 t=30"),
    ] {
        let prov = Provenance::new("examples dwell-comparison")
            .seed(seed)
            .param("plant", "example1")
            .param("horizon", config.dwell_horizon)
            .param("controller", params.replace(' ', ";"));
        written.push(write_file(
            &with_suffix(prefix, &format!("dwell_{name}.csv")),
            &adaptive_steps_csv(rec, &prov),
        )?);
    }

    let mut mc = MonteCarloConfig::new(config.eval_horizon, config.eval_n_traj, config.seed.wrapping_add(1));
    mc.threads = config.threads;
    let (rec, points) = learning_gap_curve(config.learning_horizon, config.seed, mc)?;
    let prov = Provenance::new("examples learning")
        .seed(config.seed)
        .param("plant", "standin")
        .param("horizon", config.learning_horizon)
        .param("eval_horizon", config.eval_horizon)
        .param("eval_n_traj", config.eval_n_traj)
        .param("eval_seed", mc.seed);
    written.push(write_file(&with_suffix(prefix, "learning_gap.csv"), &gap_curve_csv(&points, &prov))?);
    written.push(write_file(
        &with_suffix(prefix, "learning_updates.csv"),
        &adaptive_updates_csv(&rec, &prov),
    )?);
    Ok(written)
}
