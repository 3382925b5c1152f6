use nalgebra::DVector;

use super::{ball_centers, profile_distance, GameModel, Profile};
use crate::error::GameError;
use crate::geometry::project_polytope;

/// Projection accuracy used inside the oracle; tighter than the runner's.
const ORACLE_PROJECTION_TOL: f64 = 1e-13;
const ORACLE_PROJECTION_MAX_ITER: usize = 100_000;

#[derive(Debug, Clone)]
pub struct CriticalPoint {
    pub profile: Profile,
    pub iterations: usize,
    /// Fixed step `η = 1/L̂` used by the solver and the residual probe.
    pub step: f64,
    /// `‖x* − Proj(x* − ηF(x*))‖₂`.
    pub residual: f64,
    pub potential: Option<f64>,
}

fn projected_step(game: &dyn GameModel, x: &[DVector<f64>], step: f64) -> Result<Profile, GameError> {
    let grad = game.pseudo_gradient(x).ok_or(GameError::NoPseudoGradient)?;
    x.iter()
        .zip(grad)
        .enumerate()
        .map(|(i, (xi, gi))| {
            project_polytope(
                game.feasible_set(i),
                &(xi - gi * step),
                ORACLE_PROJECTION_TOL,
                ORACLE_PROJECTION_MAX_ITER,
            )
            .map_err(GameError::from)
        })
        .collect()
}

/// Natural-map residual `‖x − Proj(x − ηF(x))‖₂`; zero exactly at solutions
/// of the variational inequality.
pub fn vi_residual(game: &dyn GameModel, x: &[DVector<f64>], step: f64) -> Result<f64, GameError> {
    let next = projected_step(game, x, step)?;
    Ok(profile_distance(x, &next))
}

/// Solves `VI(𝒳, F)` by projected gradient with the fixed step `1/L̂`,
/// starting from the interior-ball centers. Stops when an iteration moves
/// less than `tol`.
pub fn solve_critical_point(
    game: &dyn GameModel,
    tol: f64,
    max_iter: usize,
) -> Result<CriticalPoint, GameError> {
    let lipschitz = game
        .lipschitz_bound()
        .ok_or_else(|| GameError::Invalid("the oracle needs a Lipschitz bound".into()))?;
    let step = 1.0 / lipschitz;
    let mut x = ball_centers(game);
    let mut moved = f64::INFINITY;
    for iteration in 1..=max_iter {
        let next = projected_step(game, &x, step)?;
        moved = profile_distance(&x, &next);
        x = next;
        if moved < tol {
            let residual = vi_residual(game, &x, step)?;
            let potential = game.potential(&x);
            return Ok(CriticalPoint {
                profile: x,
                iterations: iteration,
                step,
                residual,
                potential,
            });
        }
    }
    Err(GameError::NotConverged {
        iterations: max_iter,
        residual: moved,
    })
}
