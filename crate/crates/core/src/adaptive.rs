//! Certainty-equivalent learning with the safety switch in the loop.
//!
//! (A, B) are re-estimated by regularized least squares from all past
//! transitions at steps k = 1, 2, 4, 8, …; the primary gain is the Riccati
//! gain of the estimate. Each step applies the switched law on the current
//! gain and adds exploration k^{-1/4} ζ_k with ζ_k ~ N(0, I_m). The
//! threshold and dwell time follow logarithmic schedules unless fixed.

use crate::control::{
    psd_factor, linear_feedback_cost, spectral_radius, Cost, DareOptions, LQWeights, LinearPlant, Matrix, Vector,
};
use crate::error::{Error, Result};
use crate::montecarlo::{estimate_cost, paired_compare, MonteCarloConfig, DIVERGENCE_GUARD};
use crate::rng::{sample_noise, RngStream, EXPLORATION_CHANNEL};
use crate::switching::{linear_policy, switch_step, Mode, SwitchConfig, SwitchState, SwitchedController};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThresholdSchedule {
    Fixed(f64),
    /// M_k = max(log_base(k+1), floor).
    Logarithmic { floor: f64, base: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DwellSchedule {
    Fixed(usize),
    /// t_k = max(⌊log_base(k+1)⌋, 1).
    Logarithmic { base: f64 },
}

impl ThresholdSchedule {
    pub fn at(&self, k: usize) -> f64 {
        match *self {
            ThresholdSchedule::Fixed(m) => m,
            ThresholdSchedule::Logarithmic { floor, base } => ((k as f64 + 1.0).ln() / base.ln()).max(floor),
        }
    }
}

impl DwellSchedule {
    pub fn at(&self, k: usize) -> usize {
        match *self {
            DwellSchedule::Fixed(t) => t,
            DwellSchedule::Logarithmic { base } => {
                let l = (k as f64 + 1.0).ln() / base.ln();
                // guard against ln(e^j)/ln(e) landing just below j
                let fl = (l + 1e-12).floor();
                (fl as usize).max(1)
            }
        }
    }
}

/// Default schedule: (max(ln(k+1), 1), max(⌊ln(k+1)⌋, 1)).
pub fn schedule(k: usize) -> (f64, usize) {
    let e = std::f64::consts::E;
    (
        ThresholdSchedule::Logarithmic { floor: 1.0, base: e }.at(k),
        DwellSchedule::Logarithmic { base: e }.at(k),
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveConfig {
    /// Certified fallback gain; also the primary gain before the first update.
    pub k0: Matrix,
    pub exploration_exponent: f64,
    pub threshold: ThresholdSchedule,
    pub dwell: DwellSchedule,
    pub ridge: f64,
    pub switching: bool,
}

impl AdaptiveConfig {
    pub fn new(k0: Matrix) -> Self {
        let e = std::f64::consts::E;
        Self {
            k0,
            exploration_exponent: -0.25,
            threshold: ThresholdSchedule::Logarithmic { floor: 1.0, base: e },
            dwell: DwellSchedule::Logarithmic { base: e },
            ridge: 1e-6,
            switching: true,
        }
    }

    pub fn fixed(mut self, threshold: f64, dwell: usize) -> Self {
        self.threshold = ThresholdSchedule::Fixed(threshold);
        self.dwell = DwellSchedule::Fixed(dwell);
        self
    }

    pub fn without_switching(mut self) -> Self {
        self.switching = false;
        self
    }

    pub fn hyper_at(&self, k: usize) -> (f64, usize) {
        (self.threshold.at(k), self.dwell.at(k))
    }

    /// Scale of the exploration term at step k (k = 0 uses scale 1).
    pub fn exploration_scale(&self, k: usize) -> f64 {
        (k.max(1) as f64).powf(self.exploration_exponent)
    }

    fn validate(&self) -> Result<()> {
        if self.ridge.is_nan() || self.ridge < 0.0 {
            return Err(Error::Invalid("ridge must be >= 0".into()));
        }
        if let ThresholdSchedule::Fixed(m) = self.threshold {
            if m.is_nan() || m < 0.0 {
                return Err(Error::Invalid("threshold must be >= 0".into()));
            }
        }
        if let ThresholdSchedule::Logarithmic { floor, base } = self.threshold {
            if !(base > 1.0 && base.is_finite()) || floor.is_nan() || floor < 0.0 {
                return Err(Error::Invalid("threshold schedule needs base > 1 and floor >= 0".into()));
            }
        }
        match self.dwell {
            DwellSchedule::Fixed(0) => Err(Error::Invalid("dwell time must be at least 1".into())),
            DwellSchedule::Logarithmic { base } if !(base > 1.0 && base.is_finite()) => {
                Err(Error::Invalid("dwell schedule needs base > 1".into()))
            }
            _ => Ok(()),
        }
    }
}

/// Gain update steps: k = 2ⁱ.
pub fn is_update_step(k: usize) -> bool {
    k >= 1 && k.is_power_of_two()
}

/// Running sums for the regression x_{k+1} ≈ [A B] [x_k; u_k].
#[derive(Debug, Clone, PartialEq)]
pub struct LeastSquares {
    n: usize,
    m: usize,
    /// Σ z zᵀ with z = [x; u].
    gram: Matrix,
    /// Σ x_{k+1} zᵀ.
    cross: Matrix,
    count: usize,
}

impl LeastSquares {
    pub fn new(n: usize, m: usize) -> Self {
        Self {
            n,
            m,
            gram: Matrix::zeros(n + m, n + m),
            cross: Matrix::zeros(n, n + m),
            count: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn push(&mut self, x: &Vector, u: &Vector, x_next: &Vector) -> Result<()> {
        if x.len() != self.n || x_next.len() != self.n || u.len() != self.m {
            return Err(Error::Dimension("transition does not match (n, m)".into()));
        }
        let z = Vector::from_iterator(self.n + self.m, x.iter().chain(u.iter()).copied());
        self.gram.ger(1.0, &z, &z, 1.0);
        self.cross.ger(1.0, x_next, &z, 1.0);
        self.count += 1;
        Ok(())
    }

    /// argmin Σ‖x_{k+1} − [Â B̂] z_k‖² + ridge‖[Â B̂]‖²_F.
    pub fn solve(&self, ridge: f64) -> Result<(Matrix, Matrix)> {
        if self.count == 0 {
            return Err(Error::Invalid("least squares needs at least one transition".into()));
        }
        let d = self.n + self.m;
        let reg = &self.gram + Matrix::identity(d, d) * ridge;
        if ridge == 0.0 {
            let eig = nalgebra::SymmetricEigen::new(reg.clone()).eigenvalues;
            if eig.min() <= 1e-12 * eig.max().max(f64::MIN_POSITIVE) {
                return Err(Error::RankDeficient);
            }
        }
        let chol = nalgebra::Cholesky::new(reg).ok_or(Error::RankDeficient)?;
        // Θ G = C  ⇔  G Θᵀ = Cᵀ
        let theta = chol.solve(&self.cross.transpose()).transpose();
        Ok((
            theta.columns(0, self.n).into_owned(),
            theta.columns(self.n, self.m).into_owned(),
        ))
    }
}

/// One observed transition.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub x: Vector,
    pub u: Vector,
    pub x_next: Vector,
}

pub fn least_squares_fit(history: &[Transition], ridge: f64) -> Result<(Matrix, Matrix)> {
    let first = history
        .first()
        .ok_or_else(|| Error::Invalid("least squares needs at least one transition".into()))?;
    let mut ls = LeastSquares::new(first.x.len(), first.u.len());
    for t in history {
        ls.push(&t.x, &t.u, &t.x_next)?;
    }
    ls.solve(ridge)
}

/// Riccati gain of the estimated model, or the solver's error when the
/// estimate is not stabilizable or the iteration fails.
pub fn certainty_equivalent_gain(a_hat: &Matrix, b_hat: &Matrix, weights: &LQWeights) -> Result<Matrix> {
    crate::control::dare(a_hat, b_hat, weights.q(), weights.r(), DareOptions::default()).map(|(_, k)| k)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepLog {
    pub k: usize,
    pub x: Vector,
    pub u: Vector,
    pub mode: Mode,
    pub triggered: bool,
    pub threshold: f64,
    pub dwell: usize,
    pub exploration_scale: f64,
    pub zeta: Vector,
    pub w: Vector,
    pub stage_cost: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UpdateLog {
    pub k: usize,
    pub a_hat: Option<Matrix>,
    pub b_hat: Option<Matrix>,
    /// Primary gain in force from step k on.
    pub gain: Matrix,
    /// False when estimation or the Riccati solve failed and the previous
    /// gain was kept.
    pub updated: bool,
    /// ρ(A + B K̂) < 1 on the true plant.
    pub stabilizing: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveRecord {
    pub config: AdaptiveConfig,
    pub seed: u64,
    pub horizon: usize,
    pub steps: Vec<StepLog>,
    pub updates: Vec<UpdateLog>,
    /// Last state reached (x_T, or the last finite state before divergence).
    pub final_state: Vector,
    pub trigger_count: usize,
    pub max_state_norm: f64,
    pub diverged: bool,
}

impl AdaptiveRecord {
    /// Gain that was in force at step k.
    pub fn gain_at(&self, k: usize) -> &Matrix {
        self.updates
            .iter()
            .rev()
            .find(|u| u.k <= k)
            .map(|u| &u.gain)
            .unwrap_or(&self.config.k0)
    }

    pub fn average_cost(&self) -> f64 {
        if self.steps.is_empty() {
            return 0.0;
        }
        self.steps.iter().map(|s| s.stage_cost).sum::<f64>() / self.steps.len() as f64
    }
}

/// One learning run from x₀ = 0 using noise stream (seed, 0).
pub fn adaptive_run(
    plant: &LinearPlant,
    weights: &LQWeights,
    config: &AdaptiveConfig,
    horizon: usize,
    seed: u64,
) -> Result<AdaptiveRecord> {
    if horizon == 0 {
        return Err(Error::Invalid("horizon must be at least 1".into()));
    }
    weights.check_plant(plant)?;
    plant.check_gain(&config.k0)?;
    config.validate()?;
    let (n, m) = (plant.n(), plant.m());
    let factor = psd_factor(plant.w())?;
    let rng = RngStream::new(seed, 0);

    let mut x = Vector::zeros(n);
    let mut gain = config.k0.clone();
    let mut state = SwitchState::default();
    let mut ls = LeastSquares::new(n, m);
    let mut rec = AdaptiveRecord {
        config: config.clone(),
        seed,
        horizon,
        steps: Vec::with_capacity(horizon),
        updates: Vec::new(),
        final_state: x.clone(),
        trigger_count: 0,
        max_state_norm: 0.0,
        diverged: false,
    };

    for k in 0..horizon {
        if is_update_step(k) {
            let (a_hat, b_hat, fitted) = match ls.solve(config.ridge) {
                Ok((a, b)) => (Some(a.clone()), Some(b.clone()), Ok((a, b))),
                Err(e) => (None, None, Err(e)),
            };
            let result = fitted.and_then(|(a, b)| certainty_equivalent_gain(&a, &b, weights));
            let (updated, error) = match result {
                Ok(kh) => {
                    gain = kh;
                    (true, None)
                }
                Err(e) => (false, Some(e.to_string())),
            };
            let stabilizing = spectral_radius(&plant.closed_loop(&gain)?)? < 1.0;
            rec.updates.push(UpdateLog {
                k,
                a_hat,
                b_hat,
                gain: gain.clone(),
                updated,
                stabilizing,
                error,
            });
        }

        let (threshold, dwell) = config.hyper_at(k);
        let (feedback, mode, triggered) = if config.switching {
            let cfg = SwitchConfig::new(config.k0.clone(), gain.clone(), threshold, dwell)?;
            let d = switch_step(&x, state, &cfg)?;
            state = d.next_state;
            (d.u, d.mode, d.triggered)
        } else {
            (&gain * &x, Mode::Primary, false)
        };
        let scale = config.exploration_scale(k);
        let zeta = rng.standard_normals(k as u64, EXPLORATION_CHANNEL, m);
        let u = feedback + &zeta * scale;
        let w = sample_noise(&factor, &rng, k as u64);
        let stage_cost = weights.stage_cost(&x, &u);
        let next = plant.a() * &x + plant.b() * &u + &w;
        let norm = next.norm();
        if !stage_cost.is_finite() || !norm.is_finite() || norm > DIVERGENCE_GUARD {
            rec.diverged = true;
            break;
        }
        ls.push(&x, &u, &next)?;
        if triggered {
            rec.trigger_count += 1;
        }
        rec.max_state_norm = rec.max_state_norm.max(norm);
        rec.steps.push(StepLog {
            k,
            x: x.clone(),
            u,
            mode,
            triggered,
            threshold,
            dwell,
            exploration_scale: scale,
            zeta,
            w,
            stage_cost,
        });
        x = next;
    }
    rec.final_state = x;
    Ok(rec)
}

/// Cost comparison at one gain update.
#[derive(Debug, Clone, PartialEq)]
pub struct GapPoint {
    pub k: usize,
    pub threshold: f64,
    pub dwell: usize,
    /// Monte Carlo cost of the frozen switched controller (K̂_k, M_k, t_k).
    pub j_switched: Cost,
    pub j_switched_stderr: f64,
    /// Exact cost of u = K̂_k x.
    pub j_linear: Cost,
    /// Paired Monte Carlo estimate of J_switched − J_linear; `None` when the
    /// linear gain is destabilizing.
    pub gap: Option<f64>,
    pub gap_stderr: Option<f64>,
    pub fallback_fraction: f64,
    pub stabilizing: bool,
}

/// Evaluates the switched and linear costs of every gain in `record`.
///
/// The gap is estimated from paired trajectories (same noise for the
/// switched and the linear controller), so the finite-horizon transient from
/// x₀ = 0 cancels instead of biasing the difference.
pub fn gap_curve(
    plant: &LinearPlant,
    weights: &LQWeights,
    record: &AdaptiveRecord,
    mc: MonteCarloConfig,
) -> Result<Vec<GapPoint>> {
    record
        .updates
        .iter()
        .map(|upd| {
            let (threshold, dwell) = record.config.hyper_at(upd.k);
            let cfg = SwitchConfig::new(record.config.k0.clone(), upd.gain.clone(), threshold, dwell)?;
            let switched = SwitchedController::new(cfg);
            let j_linear = linear_feedback_cost(plant, weights, &upd.gain)?;
            let (est, gap, gap_stderr) = if j_linear.is_finite() {
                let cmp = paired_compare(plant, weights, &switched, &linear_policy(upd.gain.clone()), mc)?;
                (cmp.a, Some(cmp.mean_difference), Some(cmp.stderr_difference))
            } else {
                (estimate_cost(plant, weights, &switched, mc)?, None, None)
            };
            Ok(GapPoint {
                k: upd.k,
                threshold,
                dwell,
                j_switched: est.mean,
                j_switched_stderr: est.stderr,
                j_linear,
                gap,
                gap_stderr,
                fallback_fraction: est.fallback_fraction,
                stabilizing: j_linear.is_finite(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: usize, cols: usize, data: &[f64]) -> Matrix {
        Matrix::from_row_slice(rows, cols, data)
    }

    #[test]
    fn schedule_values() {
        assert_eq!(schedule(0), (1.0, 1));
        assert_eq!(schedule(19).1, 2);
        assert_eq!(schedule(20).1, 3);
        assert!((schedule(20).0 - 21f64.ln()).abs() < 1e-15);
        let mut prev = schedule(0);
        for k in 1..5000 {
            let cur = schedule(k);
            assert!(cur.0 >= prev.0 && cur.1 >= prev.1);
            prev = cur;
        }
    }

    #[test]
    fn update_steps_are_powers_of_two() {
        let steps: Vec<usize> = (0..70).filter(|&k| is_update_step(k)).collect();
        assert_eq!(steps, vec![1, 2, 4, 8, 16, 32, 64]);
    }

    #[test]
    fn noiseless_fit_recovers_system() {
        let a = m(2, 2, &[0.8, 1.0, 0.0, 0.8]);
        let b = m(2, 1, &[0.0, 1.0]);
        let rng = RngStream::new(11, 0);
        let mut x = Vector::from_vec(vec![1.0, -1.0]);
        let mut hist = Vec::new();
        for k in 0..20 {
            let u = rng.standard_normals(k, 0, 1);
            let next = &a * &x + &b * &u;
            hist.push(Transition { x: x.clone(), u, x_next: next.clone() });
            x = next;
        }
        let (ah, bh) = least_squares_fit(&hist, 0.0).unwrap();
        assert!((ah - a).amax() < 1e-8);
        assert!((bh - b).amax() < 1e-8);
    }

    #[test]
    fn ridge_shrinks_unexcited_direction() {
        // input is never excited: its column has no data
        let hist: Vec<Transition> = (0..10)
            .map(|i| Transition {
                x: Vector::from_element(1, i as f64 + 1.0),
                u: Vector::zeros(1),
                x_next: Vector::from_element(1, 0.5 * (i as f64 + 1.0)),
            })
            .collect();
        let (ah, bh) = least_squares_fit(&hist, 1e-6).unwrap();
        assert!((ah[(0, 0)] - 0.5).abs() < 1e-6);
        assert!(bh[(0, 0)].abs() < 1e-12);
        assert!(matches!(least_squares_fit(&hist, 0.0), Err(Error::RankDeficient)));
    }

    #[test]
    fn scalar_estimate_is_consistent() {
        let rng = RngStream::new(5, 0);
        let mut x = 0.0;
        let mut hist = Vec::new();
        let mut sxx = 0.0;
        for k in 0..10_000u64 {
            let u = rng.standard_normals(k, 1, 1)[0];
            let w = rng.standard_normals(k, 0, 1)[0];
            let next = 0.8 * x + u + w;
            hist.push(Transition {
                x: Vector::from_element(1, x),
                u: Vector::from_element(1, u),
                x_next: Vector::from_element(1, next),
            });
            sxx += x * x;
            x = next;
        }
        let (ah, bh) = least_squares_fit(&hist, 0.0).unwrap();
        // asymptotic standard error of Â ≈ σ_w/√Σx²
        let se = 1.0 / sxx.sqrt();
        assert!((ah[(0, 0)] - 0.8).abs() < 3.0 * se, "{} ± {se}", ah[(0, 0)]);
        assert!((bh[(0, 0)] - 1.0).abs() < 0.05);
    }

    #[test]
    fn ce_gain_cases() {
        let weights = LQWeights::new(Matrix::identity(2, 2), m(1, 1, &[1e-4])).unwrap();
        let a = m(2, 2, &[0.8, 1.0, 0.0, 0.8]);
        let b = m(2, 1, &[0.0, 1.0]);
        let plant = LinearPlant::new(a.clone(), b.clone(), Matrix::identity(2, 2)).unwrap();
        let k = certainty_equivalent_gain(&a, &b, &weights).unwrap();
        let ks = crate::control::dare_solve(&plant, &weights).unwrap().k_star;
        assert!((k - ks).amax() < 1e-10);
        let k = certainty_equivalent_gain(&Matrix::zeros(2, 2), &m(2, 1, &[0.3, -2.0]), &weights).unwrap();
        assert!(k.amax() < 1e-12);
        assert!(certainty_equivalent_gain(&(Matrix::identity(2, 2) * 2.0), &Matrix::zeros(2, 1), &weights).is_err());
    }

    #[test]
    fn run_record_invariants() {
        let plant = LinearPlant::new(m(2, 2, &[0.8, 1.0, 0.0, 0.8]), m(2, 1, &[0.0, 1.0]), Matrix::identity(2, 2)).unwrap();
        let weights = LQWeights::new(Matrix::identity(2, 2), m(1, 1, &[1e-4])).unwrap();
        let cfg = AdaptiveConfig::new(Matrix::zeros(1, 2)).fixed(10.0, 30);
        let rec = adaptive_run(&plant, &weights, &cfg, 300, 4).unwrap();
        assert!(!rec.diverged);
        let ks: Vec<usize> = rec.updates.iter().map(|u| u.k).collect();
        assert_eq!(ks, vec![1, 2, 4, 8, 16, 32, 64, 128, 256]);
        for s in &rec.steps {
            assert!((s.exploration_scale - (s.k.max(1) as f64).powf(-0.25)).abs() < 1e-15);
            let g = rec.gain_at(s.k);
            let fb = match s.mode {
                Mode::Primary => g * &s.x,
                Mode::Fallback => &cfg.k0 * &s.x,
            };
            let expected = fb + &s.zeta * s.exploration_scale;
            assert!((&s.u - expected).amax() <= 1e-12 * (1.0 + s.u.amax()));
        }
        // gain constant between updates
        for w in rec.updates.windows(2) {
            for k in w[0].k..w[1].k {
                assert_eq!(rec.gain_at(k), &w[0].gain);
            }
        }
    }
}
