//! Zeroth-order pseudo-gradient estimation from realized objective values.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::EstimatorError;
use crate::geometry::InteriorBall;

const UNIT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorKind {
    /// `(n/δ)(Ĵ_t − Ĵ_{t−1})u_t`, needs two consecutive values.
    #[default]
    Residual,
    /// `(n/δ)Ĵ_t u_t`, the classic one-value estimate.
    SinglePoint,
}

/// Uniform draw from the unit sphere in `dim` dimensions (normalized
/// Gaussian; an all-zero draw is rejected and redrawn).
pub fn sample_unit_sphere<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> DVector<f64> {
    assert!(dim >= 1, "sphere dimension must be positive");
    loop {
        let g = DVector::<f64>::from_fn(dim, |_, _| rng.sample(StandardNormal));
        let norm = g.norm();
        if norm > 0.0 && norm.is_finite() {
            return g / norm;
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct PerturbationContext<'a> {
    pub ball: &'a InteriorBall,
    /// Query radius δ_k.
    pub radius: f64,
    /// Unit direction u_k.
    pub direction: &'a DVector<f64>,
}

impl PerturbationContext<'_> {
    pub fn validate(&self) -> Result<(), EstimatorError> {
        if !(self.radius >= 0.0 && self.radius.is_finite()) {
            return Err(EstimatorError::NonPositiveRadius { radius: self.radius });
        }
        if self.radius > self.ball.radius {
            return Err(EstimatorError::RadiusExceedsBall {
                radius: self.radius,
                ball_radius: self.ball.radius,
            });
        }
        if self.direction.len() != self.ball.center.len() {
            return Err(EstimatorError::DimensionMismatch {
                expected: self.ball.center.len(),
                got: self.direction.len(),
            });
        }
        let norm = self.direction.norm();
        if (norm - 1.0).abs() > UNIT_TOL {
            return Err(EstimatorError::NotUnit { norm });
        }
        Ok(())
    }
}

/// Shrinks `x` toward the ball center and steps along the direction:
/// `x̄ = (1 − δ/r)x + (δ/r)p`, `x̂ = x̄ + δu`.
///
/// When the ball lies in the feasible set and `δ <= r`, `x̂` is a convex
/// combination of `x` and a point of the ball, hence feasible.
pub fn perturb(
    x: &DVector<f64>,
    ctx: &PerturbationContext<'_>,
) -> Result<(DVector<f64>, DVector<f64>), EstimatorError> {
    ctx.validate()?;
    if x.len() != ctx.direction.len() {
        return Err(EstimatorError::DimensionMismatch {
            expected: ctx.direction.len(),
            got: x.len(),
        });
    }
    let mix = ctx.radius / ctx.ball.radius;
    let x_bar = x * (1.0 - mix) + &ctx.ball.center * mix;
    let x_hat = &x_bar + ctx.direction * ctx.radius;
    Ok((x_bar, x_hat))
}

fn check_radius(radius: f64) -> Result<(), EstimatorError> {
    if radius > 0.0 && radius.is_finite() {
        Ok(())
    } else {
        Err(EstimatorError::NonPositiveRadius { radius })
    }
}

/// Residual pseudo-gradient estimate `(n/δ)(j_curr − j_prev)u` with
/// `n = dim(u)`.
pub fn residual_estimate(
    j_curr: f64,
    j_prev: f64,
    direction: &DVector<f64>,
    radius: f64,
) -> Result<DVector<f64>, EstimatorError> {
    check_radius(radius)?;
    let scale = direction.len() as f64 / radius * (j_curr - j_prev);
    Ok(direction * scale)
}

/// Single-point estimate `(n/δ)j_curr·u`.
pub fn single_point_estimate(
    j_curr: f64,
    direction: &DVector<f64>,
    radius: f64,
) -> Result<DVector<f64>, EstimatorError> {
    residual_estimate(j_curr, 0.0, direction, radius)
}
