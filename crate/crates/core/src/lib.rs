//! Bandit mirror descent for multi-player continuous games with delayed
//! feedback.
//!
//! Players only observe their own realized costs, possibly many iterations
//! late. Each player estimates its partial gradient from two consecutive
//! realized values ([`estimator::residual_estimate`]), buffers values and
//! estimates until they can be used ([`delay::PlayerQueues`]) and always
//! consumes the oldest available estimate in a mirror-descent step
//! ([`runner::run`]).

pub mod delay;
pub mod error;
pub mod estimator;
pub mod games;
pub mod geometry;
pub mod rng;
pub mod runner;
pub mod schedules;

pub use error::{DelayError, EstimatorError, GameError, GeometryError, RunError};
pub use games::{GameModel, Profile};
