//! Feasible-set geometry and the mirror-descent primitives built on it.
//!
//! A player's strategy space is a finite box optionally cut by halfspaces
//! `a·x <= b`. Euclidean projections onto such sets are computed with
//! Dykstra's alternating projections, which only needs the (closed-form)
//! projections onto the box and onto each individual halfspace.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::GeometryError;

/// Successive-iterate tolerance used by [`FeasibleSet::project`].
pub const DYKSTRA_TOL: f64 = 1e-10;
/// Sweep cap used by [`FeasibleSet::project`].
pub const DYKSTRA_MAX_ITER: usize = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub struct Halfspace {
    /// Stored unnormalized.
    pub normal: DVector<f64>,
    pub offset: f64,
}

impl Halfspace {
    pub fn new(normal: DVector<f64>, offset: f64) -> Result<Self, GeometryError> {
        let norm = normal.norm();
        if !(norm > 0.0 && norm.is_finite()) || !offset.is_finite() {
            return Err(GeometryError::DegenerateHalfspace);
        }
        Ok(Self { normal, offset })
    }

    /// `a·x - b`; positive means violated.
    pub fn violation(&self, x: &DVector<f64>) -> f64 {
        self.normal.dot(x) - self.offset
    }

    fn project_in_place(&self, x: &mut DVector<f64>) {
        let excess = self.violation(x);
        if excess > 0.0 {
            let scale = excess / self.normal.norm_squared();
            x.axpy(-scale, &self.normal, 1.0);
        }
    }
}

/// Box `[lower, upper]` intersected with a list of halfspaces.
#[derive(Debug, Clone, PartialEq)]
pub struct FeasibleSet {
    lower: DVector<f64>,
    upper: DVector<f64>,
    halfspaces: Vec<Halfspace>,
}

impl FeasibleSet {
    pub fn new_box(lower: DVector<f64>, upper: DVector<f64>) -> Result<Self, GeometryError> {
        if lower.len() != upper.len() {
            return Err(GeometryError::DimensionMismatch {
                expected: lower.len(),
                got: upper.len(),
            });
        }
        for (index, (&lo, &hi)) in lower.iter().zip(upper.iter()).enumerate() {
            if !lo.is_finite() {
                return Err(GeometryError::UnboundedBox { index, value: lo });
            }
            if !hi.is_finite() {
                return Err(GeometryError::UnboundedBox { index, value: hi });
            }
            if lo >= hi {
                return Err(GeometryError::EmptyInterior {
                    index,
                    lower: lo,
                    upper: hi,
                });
            }
        }
        Ok(Self {
            lower,
            upper,
            halfspaces: Vec::new(),
        })
    }

    pub fn with_halfspace(mut self, halfspace: Halfspace) -> Result<Self, GeometryError> {
        if halfspace.normal.len() != self.dim() {
            return Err(GeometryError::DimensionMismatch {
                expected: self.dim(),
                got: halfspace.normal.len(),
            });
        }
        self.halfspaces.push(halfspace);
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &DVector<f64> {
        &self.lower
    }

    pub fn upper(&self) -> &DVector<f64> {
        &self.upper
    }

    pub fn halfspaces(&self) -> &[Halfspace] {
        &self.halfspaces
    }

    pub fn center(&self) -> DVector<f64> {
        (&self.lower + &self.upper) * 0.5
    }

    /// Largest constraint violation (zero or negative when feasible).
    pub fn max_violation(&self, x: &DVector<f64>) -> f64 {
        let mut worst = f64::NEG_INFINITY;
        for ((&xi, &lo), &hi) in x.iter().zip(self.lower.iter()).zip(self.upper.iter()) {
            worst = worst.max(lo - xi).max(xi - hi);
        }
        for h in &self.halfspaces {
            worst = worst.max(h.violation(x));
        }
        worst
    }

    pub fn contains(&self, x: &DVector<f64>, tol: f64) -> bool {
        x.len() == self.dim() && self.max_violation(x) <= tol
    }

    fn clip_in_place(&self, x: &mut DVector<f64>) {
        for ((xi, &lo), &hi) in x.iter_mut().zip(self.lower.iter()).zip(self.upper.iter()) {
            *xi = xi.clamp(lo, hi);
        }
    }

    /// Euclidean projection with the default Dykstra settings.
    pub fn project(&self, z: &DVector<f64>) -> Result<DVector<f64>, GeometryError> {
        project_polytope(self, z, DYKSTRA_TOL, DYKSTRA_MAX_ITER)
    }
}

/// Euclidean projection of `z` onto a box∩halfspaces set by Dykstra's
/// alternating projections.
///
/// Feasible inputs are returned unchanged and pure boxes are clipped
/// directly. Otherwise the method sweeps box, then each halfspace, carrying
/// one correction vector per constraint set, and stops once the combined
/// movement of all stages in a sweep falls below `tol`.
pub fn project_polytope(
    set: &FeasibleSet,
    z: &DVector<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<DVector<f64>, GeometryError> {
    if z.len() != set.dim() {
        return Err(GeometryError::DimensionMismatch {
            expected: set.dim(),
            got: z.len(),
        });
    }
    if set.max_violation(z) <= 0.0 {
        return Ok(z.clone());
    }
    let mut x = z.clone();
    if set.halfspaces.is_empty() {
        set.clip_in_place(&mut x);
        return Ok(x);
    }

    let dim = set.dim();
    let mut corrections = vec![DVector::<f64>::zeros(dim); set.halfspaces.len() + 1];
    let mut y = DVector::<f64>::zeros(dim);
    let mut residual = f64::INFINITY;
    for _ in 0..max_iter {
        // Each stage changes its correction by exactly the distance it moves
        // the iterate; the sweep is a fixed point once all stages stand still.
        let mut moved = 0.0;

        y.copy_from(&x);
        y += &corrections[0];
        set.clip_in_place(&mut y);
        corrections[0] += &x;
        corrections[0] -= &y;
        moved += (&x - &y).norm_squared();
        x.copy_from(&y);

        for (h, p) in set.halfspaces.iter().zip(corrections[1..].iter_mut()) {
            y.copy_from(&x);
            y += &*p;
            h.project_in_place(&mut y);
            *p += &x;
            *p -= &y;
            moved += (&x - &y).norm_squared();
            x.copy_from(&y);
        }

        residual = moved.sqrt();
        if residual < tol {
            return Ok(x);
        }
    }
    Err(GeometryError::ProjectionNotConverged {
        iterations: max_iter,
        residual,
    })
}

/// A Euclidean ball `B(center, radius)` used for the perturbation step.
#[derive(Debug, Clone, PartialEq)]
pub struct InteriorBall {
    pub center: DVector<f64>,
    pub radius: f64,
}

impl InteriorBall {
    pub fn new(center: DVector<f64>, radius: f64) -> Self {
        Self { center, radius }
    }
}

/// Containment certificate: box margins and `a·p + r‖a‖₂ <= b` for every
/// halfspace.
pub fn verify_interior_ball(set: &FeasibleSet, ball: &InteriorBall) -> bool {
    let r = ball.radius;
    if !(r > 0.0 && r.is_finite()) || ball.center.len() != set.dim() {
        return false;
    }
    let box_ok = ball
        .center
        .iter()
        .zip(set.lower.iter().zip(set.upper.iter()))
        .all(|(&p, (&lo, &hi))| p - r >= lo && p + r <= hi);
    if !box_ok {
        return false;
    }
    set.halfspaces
        .iter()
        .all(|h| h.normal.dot(&ball.center) + r * h.normal.norm() <= h.offset)
}

/// Finds a ball centered at the box center by halving the radius, starting
/// from the half-width of the narrowest box side. Fails after `max_steps`
/// halvings.
pub fn shrink_to_interior_ball(
    set: &FeasibleSet,
    max_steps: usize,
) -> Result<InteriorBall, GeometryError> {
    let center = set.center();
    let mut radius = (&set.upper - &set.lower).min() * 0.5;
    for _ in 0..max_steps {
        let ball = InteriorBall::new(center.clone(), radius);
        if verify_interior_ball(set, &ball) {
            return Ok(ball);
        }
        radius *= 0.5;
    }
    Err(GeometryError::NoInteriorBall(format!(
        "box center {:?} admits no ball after {max_steps} shrink steps",
        center.as_slice()
    )))
}

/// Distance-generating function used by the prox step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MirrorStructure {
    /// `ψ(x) = ½‖x‖₂²`.
    #[default]
    Euclidean,
    /// Negative entropy `ψ(x) = Σ x ln x` on the probability simplex.
    Entropic,
}

impl MirrorStructure {
    /// Strong-convexity modulus of ψ (w.r.t. ℓ₂ for Euclidean, ℓ₁ for
    /// entropic).
    pub fn modulus(&self) -> f64 {
        1.0
    }
}

fn check_dims(a: &DVector<f64>, b: &DVector<f64>) -> Result<(), GeometryError> {
    if a.len() != b.len() {
        return Err(GeometryError::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    Ok(())
}

fn check_positive(x: &DVector<f64>) -> Result<(), GeometryError> {
    match x.iter().enumerate().find(|(_, v)| !(**v > 0.0 && v.is_finite())) {
        Some((index, &value)) => Err(GeometryError::OutsideDomain { index, value }),
        None => Ok(()),
    }
}

/// Bregman divergence `ψ(p) − ψ(x) − ⟨∇ψ(x), p − x⟩`.
pub fn bregman(
    structure: MirrorStructure,
    p: &DVector<f64>,
    x: &DVector<f64>,
) -> Result<f64, GeometryError> {
    check_dims(p, x)?;
    match structure {
        MirrorStructure::Euclidean => Ok(0.5 * (p - x).norm_squared()),
        MirrorStructure::Entropic => {
            check_positive(p)?;
            check_positive(x)?;
            let d = p
                .iter()
                .zip(x.iter())
                .map(|(&pi, &xi)| pi * (pi / xi).ln() - pi + xi)
                .sum::<f64>();
            Ok(d.max(0.0))
        }
    }
}

/// Prox-mapping `argmin_{x'∈set} ⟨y, x' − x⟩ + D(x', x)`.
///
/// `y` is the already-scaled dual step (`γ·G`), so the Euclidean case is
/// the projection of `x − y`. The entropic structure always acts on the
/// probability simplex (multiplicative-weights update) and ignores the box
/// description of `set` beyond its dimension.
pub fn prox_step(
    structure: MirrorStructure,
    set: &FeasibleSet,
    x: &DVector<f64>,
    y: &DVector<f64>,
) -> Result<DVector<f64>, GeometryError> {
    check_dims(x, y)?;
    if x.len() != set.dim() {
        return Err(GeometryError::DimensionMismatch {
            expected: set.dim(),
            got: x.len(),
        });
    }
    match structure {
        MirrorStructure::Euclidean => set.project(&(x - y)),
        MirrorStructure::Entropic => {
            check_positive(x)?;
            let logits: Vec<f64> = x.iter().zip(y.iter()).map(|(&xi, &yi)| xi.ln() - yi).collect();
            let top = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let weights: Vec<f64> = logits.iter().map(|l| (l - top).exp()).collect();
            let total: f64 = weights.iter().sum();
            Ok(DVector::from_iterator(x.len(), weights.into_iter().map(|w| w / total)))
        }
    }
}
