//! The switched control law: apply the primary gain K₁ by default, and once
//! ‖x‖ reaches the threshold M hold the fallback gain K₀ for `dwell`
//! consecutive steps.

use std::fmt;

use crate::control::{Matrix, Vector};
use crate::error::{Error, Result};
use crate::rng::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    Primary,
    Fallback,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Primary => "primary",
            Mode::Fallback => "fallback",
        })
    }
}

/// Gains and hyper-parameters of the switched controller.
///
/// `threshold` may be `f64::INFINITY`, which disables switching. Whether K₀
/// actually stabilizes the plant is checked by the certificate constructors,
/// not here.
#[derive(Debug, Clone, PartialEq)]
pub struct SwitchConfig {
    k0: Matrix,
    k1: Matrix,
    threshold: f64,
    dwell: usize,
}

impl SwitchConfig {
    pub fn new(k0: Matrix, k1: Matrix, threshold: f64, dwell: usize) -> Result<Self> {
        if k0.shape() != k1.shape() {
            return Err(Error::Dimension(format!(
                "K0 is {:?} but K1 is {:?}",
                k0.shape(),
                k1.shape()
            )));
        }
        if k0.iter().chain(k1.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Invalid("gains must be finite".into()));
        }
        if threshold.is_nan() || threshold < 0.0 {
            return Err(Error::Invalid(format!("threshold must be >= 0, got {threshold}")));
        }
        if dwell == 0 {
            return Err(Error::Invalid("dwell time must be at least 1".into()));
        }
        Ok(Self {
            k0,
            k1,
            threshold,
            dwell,
        })
    }

    pub fn k0(&self) -> &Matrix {
        &self.k0
    }

    pub fn k1(&self) -> &Matrix {
        &self.k1
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn dwell(&self) -> usize {
        self.dwell
    }

    pub fn n(&self) -> usize {
        self.k0.ncols()
    }

    pub fn m(&self) -> usize {
        self.k0.nrows()
    }

    /// Same gains, new hyper-parameters.
    pub fn with_hyper(&self, threshold: f64, dwell: usize) -> Result<Self> {
        Self::new(self.k0.clone(), self.k1.clone(), threshold, dwell)
    }

    pub fn with_primary(&self, k1: Matrix) -> Result<Self> {
        Self::new(self.k0.clone(), k1, self.threshold, self.dwell)
    }
}

/// Remaining fallback steps after the current one.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SwitchState {
    pub xi: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlDecision {
    pub u: Vector,
    pub mode: Mode,
    /// True iff this step started a new fallback episode.
    pub triggered: bool,
    pub next_state: SwitchState,
}

pub fn switch_step(x: &Vector, state: SwitchState, config: &SwitchConfig) -> Result<ControlDecision> {
    if x.len() != config.n() {
        return Err(Error::Dimension(format!(
            "state has length {}, gains expect {}",
            x.len(),
            config.n()
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Invalid("state has non-finite entries".into()));
    }
    if state.xi > config.dwell {
        return Err(Error::Invalid(format!(
            "counter {} exceeds dwell time {}",
            state.xi, config.dwell
        )));
    }
    let mut xi = state.xi;
    let mut triggered = false;
    let mode = if xi > 0 {
        Mode::Fallback
    } else if x.norm() >= config.threshold {
        xi = config.dwell;
        triggered = true;
        Mode::Fallback
    } else {
        Mode::Primary
    };
    let u = match mode {
        Mode::Primary => &config.k1 * x,
        Mode::Fallback => &config.k0 * x,
    };
    Ok(ControlDecision {
        u,
        mode,
        triggered,
        next_state: SwitchState { xi: xi.saturating_sub(1) },
    })
}

/// One control action as seen by the simulator.
#[derive(Debug, Clone, PartialEq)]
pub struct Action {
    pub u: Vector,
    pub mode: Mode,
    pub triggered: bool,
}

/// A (possibly stateful) feedback law driven by the simulator. `noise` is the
/// trajectory's random stream, for controllers that inject exploration.
pub trait Controller: Clone + Send + Sync {
    fn reset(&mut self);

    fn act(&mut self, k: usize, x: &Vector, noise: &RngStream) -> Result<Action>;

    /// Called after each transition x_k, u_k → x_{k+1}.
    fn observe(&mut self, _x: &Vector, _u: &Vector, _x_next: &Vector) {}
}

/// Stateless u = K x.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearPolicy {
    k: Matrix,
}

pub fn linear_policy(k: Matrix) -> LinearPolicy {
    LinearPolicy { k }
}

impl LinearPolicy {
    pub fn gain(&self) -> &Matrix {
        &self.k
    }
}

impl Controller for LinearPolicy {
    fn reset(&mut self) {}

    fn act(&mut self, _k: usize, x: &Vector, _noise: &RngStream) -> Result<Action> {
        if x.len() != self.k.ncols() {
            return Err(Error::Dimension(format!(
                "state has length {}, gain expects {}",
                x.len(),
                self.k.ncols()
            )));
        }
        Ok(Action {
            u: &self.k * x,
            mode: Mode::Primary,
            triggered: false,
        })
    }
}

/// [`switch_step`] with its counter carried between steps.
#[derive(Debug, Clone, PartialEq)]
pub struct SwitchedController {
    config: SwitchConfig,
    state: SwitchState,
}

impl SwitchedController {
    pub fn new(config: SwitchConfig) -> Self {
        Self {
            config,
            state: SwitchState::default(),
        }
    }

    pub fn config(&self) -> &SwitchConfig {
        &self.config
    }

    pub fn state(&self) -> SwitchState {
        self.state
    }
}

impl Controller for SwitchedController {
    fn reset(&mut self) {
        self.state = SwitchState::default();
    }

    fn act(&mut self, _k: usize, x: &Vector, _noise: &RngStream) -> Result<Action> {
        let d = switch_step(x, self.state, &self.config)?;
        self.state = d.next_state;
        Ok(Action {
            u: d.u,
            mode: d.mode,
            triggered: d.triggered,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(dwell: usize) -> SwitchConfig {
        SwitchConfig::new(
            Matrix::from_row_slice(1, 2, &[0.0, 0.0]),
            Matrix::from_row_slice(1, 2, &[-0.5, -1.0]),
            10.0,
            dwell,
        )
        .unwrap()
    }

    fn v(a: f64, b: f64) -> Vector {
        Vector::from_vec(vec![a, b])
    }

    #[test]
    fn below_threshold_uses_primary() {
        let c = config(5);
        let d = switch_step(&v(1.0, 2.0), SwitchState { xi: 0 }, &c).unwrap();
        assert_eq!(d.mode, Mode::Primary);
        assert!(!d.triggered);
        assert_eq!(d.u, c.k1() * v(1.0, 2.0));
        assert_eq!(d.next_state.xi, 0);
    }

    #[test]
    fn reaching_threshold_triggers() {
        let c = config(5);
        // ‖(6, 8)‖ = 10 exactly: the comparison is inclusive
        let d = switch_step(&v(6.0, 8.0), SwitchState { xi: 0 }, &c).unwrap();
        assert_eq!(d.mode, Mode::Fallback);
        assert!(d.triggered);
        assert_eq!(d.u, c.k0() * v(6.0, 8.0));
        assert_eq!(d.next_state.xi, 4);
    }

    #[test]
    fn active_counter_holds_fallback() {
        let c = config(5);
        let d = switch_step(&v(0.0, 0.1), SwitchState { xi: 3 }, &c).unwrap();
        assert_eq!(d.mode, Mode::Fallback);
        assert!(!d.triggered);
        assert_eq!(d.next_state.xi, 2);
    }

    #[test]
    fn input_errors() {
        let c = config(2);
        assert!(matches!(
            switch_step(&Vector::zeros(3), SwitchState::default(), &c),
            Err(Error::Dimension(_))
        ));
        assert!(matches!(
            switch_step(&v(f64::NAN, 0.0), SwitchState::default(), &c),
            Err(Error::Invalid(_))
        ));
        assert!(SwitchConfig::new(Matrix::zeros(1, 2), Matrix::zeros(1, 2), 1.0, 0).is_err());
        assert!(SwitchConfig::new(Matrix::zeros(1, 2), Matrix::zeros(2, 2), 1.0, 1).is_err());
        assert!(SwitchConfig::new(Matrix::zeros(1, 2), Matrix::zeros(1, 2), -1.0, 1).is_err());
    }

    /// Enumerates every (counter, above/below threshold) input sequence of
    /// length `len` and checks the dwell-time contract on each.
    #[test]
    fn dwell_time_exhaustive() {
        let len = 9;
        for dwell in 1..=5 {
            let c = config(dwell);
            for pattern in 0u32..(1 << len) {
                let mut state = SwitchState::default();
                let mut episode_start: Option<usize> = None;
                for k in 0..len {
                    let above = pattern >> k & 1 == 1;
                    let x = if above { v(0.0, 10.0) } else { v(0.0, 1.0) };
                    let d = switch_step(&x, state, &c).unwrap();
                    assert!(d.next_state.xi <= dwell);
                    let in_episode = episode_start.is_some_and(|s| k < s + dwell);
                    if in_episode {
                        assert_eq!(d.mode, Mode::Fallback);
                        assert!(!d.triggered);
                    } else if above {
                        assert!(d.triggered);
                        assert_eq!(d.mode, Mode::Fallback);
                        episode_start = Some(k);
                    } else {
                        assert_eq!(d.mode, Mode::Primary);
                    }
                    if let Some(s) = episode_start {
                        let expected = (s + dwell).saturating_sub(k + 1);
                        assert_eq!(d.next_state.xi, expected);
                    }
                    state = d.next_state;
                }
            }
        }
    }

    #[test]
    fn infinite_threshold_matches_linear_policy() {
        let c = config(3).with_hyper(f64::INFINITY, 3).unwrap();
        let mut sw = SwitchedController::new(c.clone());
        let mut lin = linear_policy(c.k1().clone());
        let rng = RngStream::new(0, 0);
        for k in 0..20 {
            let x = v(1e6 * k as f64, -3.0);
            assert_eq!(sw.act(k, &x, &rng).unwrap(), lin.act(k, &x, &rng).unwrap());
        }
    }

    #[test]
    fn zero_gain_gives_zero_input() {
        let mut lin = linear_policy(Matrix::zeros(2, 3));
        let a = lin.act(0, &Vector::from_vec(vec![1.0, -2.0, 3.0]), &RngStream::new(1, 2)).unwrap();
        assert_eq!(a.u, Vector::zeros(2));
    }
}
