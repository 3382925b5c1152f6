//! Benchmark games and their first-order oracles.

mod oracle;
mod quadratic;
mod thermal;

use nalgebra::DVector;

use crate::geometry::{FeasibleSet, InteriorBall};

pub use oracle::{solve_critical_point, vi_residual, CriticalPoint};
pub use quadratic::QuadraticGame;
pub use thermal::{
    build_feasible_polytope, lse_value, shapley_weight, BuildingParams, ThermalGame,
    ThermalGameSpec,
};

/// One action block per player.
pub type Profile = Vec<DVector<f64>>;

/// An N-player continuous game in which each player only ever observes its
/// own realized objective value.
pub trait GameModel: Send + Sync {
    fn num_players(&self) -> usize;

    fn feasible_set(&self, player: usize) -> &FeasibleSet;

    fn interior_ball(&self, player: usize) -> &InteriorBall;

    fn player_dim(&self, player: usize) -> usize {
        self.feasible_set(player).dim()
    }

    /// `J^i(x)`.
    fn objective(&self, player: usize, x: &[DVector<f64>]) -> f64;

    /// `∇_{x^i} J^i(x)` when known analytically.
    fn player_gradient(&self, _player: usize, _x: &[DVector<f64>]) -> Option<DVector<f64>> {
        None
    }

    /// `F(x)`, the stack of the players' own-block gradients.
    fn pseudo_gradient(&self, x: &[DVector<f64>]) -> Option<Profile> {
        (0..self.num_players())
            .map(|i| self.player_gradient(i, x))
            .collect()
    }

    /// Potential function, for potential games.
    fn potential(&self, _x: &[DVector<f64>]) -> Option<f64> {
        None
    }

    /// Upper bound on the Lipschitz constant of `F`.
    fn lipschitz_bound(&self) -> Option<f64> {
        None
    }
}

/// Concatenates the action blocks.
pub fn stack(profile: &[DVector<f64>]) -> DVector<f64> {
    let n: usize = profile.iter().map(|b| b.len()).sum();
    DVector::from_iterator(n, profile.iter().flat_map(|b| b.iter().copied()))
}

/// Splits a stacked vector into blocks of the given sizes.
pub fn unstack(v: &DVector<f64>, dims: &[usize]) -> Profile {
    let mut offset = 0;
    dims.iter()
        .map(|&d| {
            let block = v.rows(offset, d).into_owned();
            offset += d;
            block
        })
        .collect()
}

/// Euclidean distance between two profiles.
pub fn profile_distance(a: &[DVector<f64>], b: &[DVector<f64>]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).norm_squared())
        .sum::<f64>()
        .sqrt()
}

pub fn profile_norm(a: &[DVector<f64>]) -> f64 {
    a.iter().map(|x| x.norm_squared()).sum::<f64>().sqrt()
}

/// Ball centers of every player.
pub fn ball_centers(game: &dyn GameModel) -> Profile {
    (0..game.num_players())
        .map(|i| game.interior_ball(i).center.clone())
        .collect()
}

/// Whether every block lies in its player's feasible set.
pub fn profile_feasible(game: &dyn GameModel, x: &[DVector<f64>], tol: f64) -> bool {
    x.len() == game.num_players()
        && x.iter()
            .enumerate()
            .all(|(i, xi)| game.feasible_set(i).contains(xi, tol))
}
