//! Seeded simulation of x_{k+1} = A x_k + B u_k + w_k under any
//! [`Controller`], with finite-horizon LQ cost estimation.
//!
//! Trajectory `i` of an estimate always uses stream id `i`, and per-trajectory
//! results are reduced in index order, so estimates are bit-identical for any
//! thread count.

use rayon::prelude::*;

use crate::control::{psd_factor, LQWeights, LinearPlant, Matrix, Vector, Cost};
use crate::error::{Error, Result};
use crate::rng::{sample_noise, RngStream};
use crate::switching::{Controller, Mode};

/// States with a norm above this are treated as divergent.
pub const DIVERGENCE_GUARD: f64 = 1e300;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrajectoryRecord {
    /// x_0 … x_T (shorter when the run diverged).
    pub states: Vec<Vector>,
    pub inputs: Vec<Vector>,
    /// Process noise w_k that drove each transition.
    pub noises: Vec<Vector>,
    pub modes: Vec<Mode>,
    pub stage_costs: Vec<f64>,
    pub trigger_count: usize,
    pub fallback_steps: usize,
    pub max_state_norm: f64,
    pub diverged: bool,
}

impl TrajectoryRecord {
    pub fn steps(&self) -> usize {
        self.stage_costs.len()
    }

    pub fn total_cost(&self) -> f64 {
        self.stage_costs.iter().sum()
    }
}

/// Per-trajectory summary kept by the estimators.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Summary {
    total_cost: f64,
    fallback_steps: usize,
    steps: usize,
    triggers: usize,
    diverged: bool,
}

#[allow(clippy::too_many_arguments)]
fn simulate<C: Controller>(
    plant: &LinearPlant,
    weights: &LQWeights,
    factor: &Matrix,
    controller: &mut C,
    horizon: usize,
    rng: &RngStream,
    x0: Option<&Vector>,
    keep: bool,
) -> Result<(Summary, TrajectoryRecord)> {
    let n = plant.n();
    let mut x = match x0 {
        Some(v) if v.len() != n => {
            return Err(Error::Dimension(format!("x0 has length {}, expected {n}", v.len())))
        }
        Some(v) => v.clone(),
        None => Vector::zeros(n),
    };
    let mut rec = TrajectoryRecord {
        max_state_norm: x.norm(),
        ..Default::default()
    };
    if keep {
        rec.states.reserve(horizon + 1);
        rec.states.push(x.clone());
    }
    let mut sum = Summary {
        total_cost: 0.0,
        fallback_steps: 0,
        steps: 0,
        triggers: 0,
        diverged: false,
    };
    for k in 0..horizon {
        let action = controller.act(k, &x, rng)?;
        if action.u.len() != plant.m() {
            return Err(Error::Dimension(format!(
                "controller produced {} inputs, plant has {}",
                action.u.len(),
                plant.m()
            )));
        }
        let cost = weights.stage_cost(&x, &action.u);
        let w = sample_noise(factor, rng, k as u64);
        let next = plant.a() * &x + plant.b() * &action.u + &w;
        let norm = next.norm();
        if !cost.is_finite() || !norm.is_finite() || norm > DIVERGENCE_GUARD {
            sum.diverged = true;
            break;
        }
        controller.observe(&x, &action.u, &next);
        sum.total_cost += cost;
        sum.steps += 1;
        if action.mode == Mode::Fallback {
            sum.fallback_steps += 1;
        }
        if action.triggered {
            sum.triggers += 1;
        }
        rec.max_state_norm = rec.max_state_norm.max(norm);
        if keep {
            rec.stage_costs.push(cost);
            rec.modes.push(action.mode);
            rec.inputs.push(action.u);
            rec.noises.push(w);
            rec.states.push(next.clone());
        }
        x = next;
    }
    rec.trigger_count = sum.triggers;
    rec.fallback_steps = sum.fallback_steps;
    rec.diverged = sum.diverged;
    Ok((sum, rec))
}

/// Simulates one trajectory from x₀ = 0.
pub fn rollout<C: Controller>(
    plant: &LinearPlant,
    weights: &LQWeights,
    controller: &mut C,
    horizon: usize,
    rng: &RngStream,
) -> Result<TrajectoryRecord> {
    rollout_inner(plant, weights, controller, horizon, rng, None)
}

/// [`rollout`] from a given initial state; a test hook, since the cost
/// model always starts at zero.
pub fn rollout_from<C: Controller>(
    plant: &LinearPlant,
    weights: &LQWeights,
    controller: &mut C,
    horizon: usize,
    rng: &RngStream,
    x0: &Vector,
) -> Result<TrajectoryRecord> {
    rollout_inner(plant, weights, controller, horizon, rng, Some(x0))
}

fn rollout_inner<C: Controller>(
    plant: &LinearPlant,
    weights: &LQWeights,
    controller: &mut C,
    horizon: usize,
    rng: &RngStream,
    x0: Option<&Vector>,
) -> Result<TrajectoryRecord> {
    if horizon == 0 {
        return Err(Error::Invalid("horizon must be at least 1".into()));
    }
    weights.check_plant(plant)?;
    let factor = psd_factor(plant.w())?;
    Ok(simulate(plant, weights, &factor, controller, horizon, rng, x0, true)?.1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MonteCarloConfig {
    pub horizon: usize,
    pub n_traj: usize,
    pub seed: u64,
    /// Worker threads; `None` uses the global rayon pool.
    pub threads: Option<usize>,
}

impl MonteCarloConfig {
    pub fn new(horizon: usize, n_traj: usize, seed: u64) -> Self {
        Self {
            horizon,
            n_traj,
            seed,
            threads: None,
        }
    }

    pub fn with_threads(mut self, threads: usize) -> Self {
        self.threads = Some(threads);
        self
    }

    fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::Invalid("horizon must be at least 1".into()));
        }
        if self.n_traj < 2 {
            return Err(Error::Invalid("need at least 2 trajectories".into()));
        }
        Ok(())
    }
}

fn in_pool<T: Send>(threads: Option<usize>, job: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(job()),
        Some(t) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(t.max(1))
                .build()
                .map_err(|e| Error::Invalid(format!("thread pool: {e}")))?;
            Ok(pool.install(job))
        }
    }
}

/// Runs every trajectory of `cfg` and maps each full record through `f`,
/// returning the results in trajectory order.
pub fn map_trajectories<C, T, F>(
    plant: &LinearPlant,
    weights: &LQWeights,
    controller: &C,
    cfg: MonteCarloConfig,
    f: F,
) -> Result<Vec<T>>
where
    C: Controller,
    T: Send,
    F: Fn(usize, &TrajectoryRecord) -> T + Sync,
{
    cfg.validate()?;
    weights.check_plant(plant)?;
    let factor = psd_factor(plant.w())?;
    in_pool(cfg.threads, || {
        (0..cfg.n_traj)
            .into_par_iter()
            .map(|i| {
                let mut c = controller.clone();
                c.reset();
                let rng = RngStream::new(cfg.seed, i as u64);
                let (_, rec) = simulate(plant, weights, &factor, &mut c, cfg.horizon, &rng, None, true)?;
                Ok(f(i, &rec))
            })
            .collect()
    })?
}

fn summaries<C: Controller>(
    plant: &LinearPlant,
    weights: &LQWeights,
    controller: &C,
    cfg: MonteCarloConfig,
) -> Result<Vec<Summary>> {
    cfg.validate()?;
    weights.check_plant(plant)?;
    let factor = psd_factor(plant.w())?;
    in_pool(cfg.threads, || {
        (0..cfg.n_traj)
            .into_par_iter()
            .map(|i| {
                let mut c = controller.clone();
                c.reset();
                let rng = RngStream::new(cfg.seed, i as u64);
                Ok(simulate(plant, weights, &factor, &mut c, cfg.horizon, &rng, None, false)?.0)
            })
            .collect()
    })?
}

/// Monte Carlo estimate of the time-averaged LQ cost.
#[derive(Debug, Clone, PartialEq)]
pub struct CostEstimate {
    /// Mean of per-trajectory averages; `Infinite` if any trajectory diverged.
    pub mean: Cost,
    /// Sample standard deviation of per-trajectory averages over √n_traj.
    pub stderr: f64,
    pub horizon: usize,
    pub n_traj: usize,
    pub seed: u64,
    /// Fallback steps over all simulated steps.
    pub fallback_fraction: f64,
    pub mean_triggers: f64,
    pub diverged: bool,
}

/// Sample mean and standard error, summed in index order.
pub fn mean_stderr(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    if samples.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = samples.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn summarize(cfg: MonteCarloConfig, sums: &[Summary]) -> (CostEstimate, Vec<f64>) {
    let diverged = sums.iter().any(|s| s.diverged);
    let averages: Vec<f64> = sums
        .iter()
        .map(|s| {
            if s.diverged {
                f64::INFINITY
            } else {
                s.total_cost / cfg.horizon as f64
            }
        })
        .collect();
    let (mean, stderr) = if diverged {
        (Cost::Infinite, f64::INFINITY)
    } else {
        let (m, s) = mean_stderr(&averages);
        (Cost::Finite(m), s)
    };
    let steps: usize = sums.iter().map(|s| s.steps).sum();
    let fallback: usize = sums.iter().map(|s| s.fallback_steps).sum();
    let triggers: usize = sums.iter().map(|s| s.triggers).sum();
    let est = CostEstimate {
        mean,
        stderr,
        horizon: cfg.horizon,
        n_traj: cfg.n_traj,
        seed: cfg.seed,
        fallback_fraction: if steps == 0 { 0.0 } else { fallback as f64 / steps as f64 },
        mean_triggers: triggers as f64 / cfg.n_traj as f64,
        diverged,
    };
    (est, averages)
}

pub fn estimate_cost<C: Controller>(
    plant: &LinearPlant,
    weights: &LQWeights,
    controller: &C,
    cfg: MonteCarloConfig,
) -> Result<CostEstimate> {
    let sums = summaries(plant, weights, controller, cfg)?;
    Ok(summarize(cfg, &sums).0)
}

/// Two controllers driven by identical noise streams.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedComparison {
    pub a: CostEstimate,
    pub b: CostEstimate,
    /// Per-trajectory average cost of A minus that of B (non-finite where
    /// either side diverged).
    pub differences: Vec<f64>,
    pub mean_difference: f64,
    pub stderr_difference: f64,
}

pub fn paired_compare<CA: Controller, CB: Controller>(
    plant: &LinearPlant,
    weights: &LQWeights,
    controller_a: &CA,
    controller_b: &CB,
    cfg: MonteCarloConfig,
) -> Result<PairedComparison> {
    let (a, avg_a) = summarize(cfg, &summaries(plant, weights, controller_a, cfg)?);
    let (b, avg_b) = summarize(cfg, &summaries(plant, weights, controller_b, cfg)?);
    let differences: Vec<f64> = avg_a.iter().zip(&avg_b).map(|(x, y)| x - y).collect();
    let (mean_difference, stderr_difference) = if differences.iter().all(|d| d.is_finite()) {
        mean_stderr(&differences)
    } else {
        (f64::NAN, f64::NAN)
    };
    Ok(PairedComparison {
        a,
        b,
        differences,
        mean_difference,
        stderr_difference,
    })
}
