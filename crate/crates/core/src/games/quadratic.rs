use nalgebra::{DMatrix, DVector};

use super::{stack, unstack, GameModel, Profile};
use crate::error::GameError;
use crate::geometry::{verify_interior_ball, FeasibleSet, InteriorBall};

/// Quadratic game `J^i(x) = ½x^iᵀA_ii x^i + x^iᵀΣ_{j≠i}A_ij x^j + b_iᵀx^i`.
///
/// The blocks `A_ij` are stored as one stacked matrix `M`, so that the
/// pseudo-gradient is the affine map `F(x) = Mx + b`. Construction rejects
/// games whose `M` does not have a positive-definite symmetric part.
#[derive(Debug, Clone)]
pub struct QuadraticGame {
    dims: Vec<usize>,
    offsets: Vec<usize>,
    matrix: DMatrix<f64>,
    linear: DVector<f64>,
    sets: Vec<FeasibleSet>,
    balls: Vec<InteriorBall>,
    min_eigenvalue: f64,
    lipschitz: f64,
    symmetric: bool,
}

impl QuadraticGame {
    pub fn new(
        matrix: DMatrix<f64>,
        linear: DVector<f64>,
        sets: Vec<FeasibleSet>,
        balls: Vec<InteriorBall>,
    ) -> Result<Self, GameError> {
        let dims: Vec<usize> = sets.iter().map(|s| s.dim()).collect();
        let n: usize = dims.iter().sum();
        if sets.is_empty() {
            return Err(GameError::Invalid("a game needs at least one player".into()));
        }
        if matrix.nrows() != n || matrix.ncols() != n || linear.len() != n {
            return Err(GameError::Invalid(format!(
                "expected a {n}x{n} matrix and length-{n} linear term, got {}x{} and {}",
                matrix.nrows(),
                matrix.ncols(),
                linear.len()
            )));
        }
        if balls.len() != sets.len() {
            return Err(GameError::Invalid(format!(
                "{} players but {} interior balls",
                sets.len(),
                balls.len()
            )));
        }
        for (i, (set, ball)) in sets.iter().zip(&balls).enumerate() {
            if !verify_interior_ball(set, ball) {
                return Err(GameError::Invalid(format!(
                    "interior ball of player {i} is not contained in its feasible set"
                )));
            }
        }
        let mut offsets = Vec::with_capacity(dims.len());
        let mut acc = 0;
        for &d in &dims {
            offsets.push(acc);
            acc += d;
        }
        for (&o, &d) in offsets.iter().zip(&dims) {
            let block = matrix.view((o, o), (d, d));
            if (block - block.transpose()).amax() > 1e-12 {
                return Err(GameError::Invalid(format!(
                    "diagonal block at offset {o} must be symmetric"
                )));
            }
        }

        let sym = (&matrix + matrix.transpose()) * 0.5;
        let min_eigenvalue = sym.symmetric_eigenvalues().min();
        if !(min_eigenvalue > 0.0) {
            return Err(GameError::NotStronglyMonotone { min_eigenvalue });
        }
        let lipschitz = matrix.clone().svd(false, false).singular_values.max();
        let symmetric = (&matrix - matrix.transpose()).amax() <= 1e-12;
        Ok(Self {
            dims,
            offsets,
            matrix,
            linear,
            sets,
            balls,
            min_eigenvalue,
            lipschitz,
            symmetric,
        })
    }

    /// Same as [`Self::new`] with `b = −M·target`, so that `target` zeroes
    /// the pseudo-gradient.
    pub fn with_stationary_point(
        matrix: DMatrix<f64>,
        target: &[DVector<f64>],
        sets: Vec<FeasibleSet>,
        balls: Vec<InteriorBall>,
    ) -> Result<Self, GameError> {
        let linear = -(&matrix * stack(target));
        Self::new(matrix, linear, sets, balls)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn linear(&self) -> &DVector<f64> {
        &self.linear
    }

    /// Strong-monotonicity modulus: smallest eigenvalue of `(M + Mᵀ)/2`.
    pub fn min_eigenvalue(&self) -> f64 {
        self.min_eigenvalue
    }

    /// Whether `M` is symmetric, i.e. the game is a potential game.
    pub fn is_potential(&self) -> bool {
        self.symmetric
    }

    /// Pseudo-gradient on the stacked representation.
    pub fn affine_map(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.matrix * x + &self.linear
    }

    pub fn unstack(&self, v: &DVector<f64>) -> Profile {
        unstack(v, &self.dims)
    }
}

impl GameModel for QuadraticGame {
    fn num_players(&self) -> usize {
        self.dims.len()
    }

    fn feasible_set(&self, player: usize) -> &FeasibleSet {
        &self.sets[player]
    }

    fn interior_ball(&self, player: usize) -> &InteriorBall {
        &self.balls[player]
    }

    fn objective(&self, player: usize, x: &[DVector<f64>]) -> f64 {
        let (o, d) = (self.offsets[player], self.dims[player]);
        let own = &x[player];
        let mut value = self.linear.rows(o, d).dot(own);
        for (j, xj) in x.iter().enumerate() {
            let block = self.matrix.view((o, self.offsets[j]), (d, self.dims[j]));
            let coupled = own.dot(&(block * xj));
            value += if j == player { 0.5 * coupled } else { coupled };
        }
        value
    }

    fn player_gradient(&self, player: usize, x: &[DVector<f64>]) -> Option<DVector<f64>> {
        let (o, d) = (self.offsets[player], self.dims[player]);
        let mut g = self.linear.rows(o, d).into_owned();
        for (j, xj) in x.iter().enumerate() {
            g += self.matrix.view((o, self.offsets[j]), (d, self.dims[j])) * xj;
        }
        Some(g)
    }

    fn potential(&self, x: &[DVector<f64>]) -> Option<f64> {
        if !self.symmetric {
            return None;
        }
        let z = stack(x);
        Some(0.5 * z.dot(&(&self.matrix * &z)) + self.linear.dot(&z))
    }

    fn lipschitz_bound(&self) -> Option<f64> {
        Some(self.lipschitz)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(lo: f64, hi: f64) -> FeasibleSet {
        FeasibleSet::new_box(DVector::from_vec(vec![lo; 2]), DVector::from_vec(vec![hi; 2])).unwrap()
    }

    fn two_player(matrix: DMatrix<f64>) -> Result<QuadraticGame, GameError> {
        let ball = InteriorBall::new(DVector::from_vec(vec![0.0, 0.0]), 1.0);
        QuadraticGame::new(
            matrix,
            DVector::from_vec(vec![1.0, -1.0, 0.5, 0.0]),
            vec![square(-2.0, 2.0), square(-2.0, 2.0)],
            vec![ball.clone(), ball],
        )
    }

    #[test]
    fn rejects_non_monotone_coupling() {
        let mut m = DMatrix::<f64>::identity(4, 4);
        m[(0, 2)] = 3.0;
        m[(2, 0)] = 3.0;
        assert!(matches!(two_player(m), Err(GameError::NotStronglyMonotone { .. })));
    }

    #[test]
    fn objective_matches_gradient_by_finite_differences() {
        let mut m = DMatrix::<f64>::identity(4, 4) * 2.0;
        m[(0, 1)] = 0.3;
        m[(1, 0)] = 0.3;
        m[(0, 3)] = 0.4;
        m[(2, 1)] = -0.7;
        let game = two_player(m).unwrap();
        assert!(!game.is_potential());
        let x = vec![DVector::from_vec(vec![0.3, -0.2]), DVector::from_vec(vec![0.7, 1.1])];
        let h = 1e-6;
        for i in 0..2 {
            let g = game.player_gradient(i, &x).unwrap();
            for c in 0..2 {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[i][c] += h;
                xm[i][c] -= h;
                let fd = (game.objective(i, &xp) - game.objective(i, &xm)) / (2.0 * h);
                assert!((fd - g[c]).abs() < 1e-8, "player {i} coord {c}: {fd} vs {}", g[c]);
            }
        }
    }

    #[test]
    fn symmetric_games_expose_a_potential() {
        let mut m = DMatrix::<f64>::identity(4, 4) * 2.0;
        m[(0, 2)] = 0.5;
        m[(2, 0)] = 0.5;
        let game = two_player(m).unwrap();
        assert!(game.is_potential());
        let x = vec![DVector::from_vec(vec![0.1, 0.2]), DVector::from_vec(vec![-0.3, 0.4])];
        let h = 1e-6;
        let f = game.pseudo_gradient(&x).unwrap();
        for i in 0..2 {
            for c in 0..2 {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[i][c] += h;
                xm[i][c] -= h;
                let fd = (game.potential(&xp).unwrap() - game.potential(&xm).unwrap()) / (2.0 * h);
                assert!((fd - f[i][c]).abs() < 1e-8);
            }
        }
    }
}
