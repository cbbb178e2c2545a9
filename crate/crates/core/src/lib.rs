//! Safety switching for uncertified linear feedback gains on stochastic
//! linear plants.
//!
//! A primary gain K₁ (typically learned, possibly destabilizing) is applied
//! by default; whenever the state norm reaches a threshold M the controller
//! holds a certified fallback gain K₀ for `t` steps. This crate provides the
//! LQR numerics, the switched control law, Lyapunov certificates with the
//! associated cost and tail bounds, a reproducible Monte Carlo simulator,
//! and a certainty-equivalent adaptive learner built on top of them.

pub mod adaptive;
pub mod certificates;
pub mod control;
pub mod error;
pub mod experiments;
pub mod matio;
pub mod montecarlo;
pub mod rng;
pub mod stats;
pub mod switching;

pub use control::{Cost, LQWeights, LinearPlant, Matrix, RiccatiSolution, Vector};
pub use error::{Error, Result};
