//! Thermal load management in a building complex.
//!
//! Building `i` chooses its power profile `x^i ∈ ℝ^T` and pays
//! `p_eᵀx^i + Σ_t λ_it (x^i_t)² + p_d·R^i(x)`, where `R^i` is a clique-based
//! Shapley-style share of the complex's smoothed peak demand. The smoothed
//! peak of a clique is the log-sum-exp `V(𝒞, x) = (1/C)·log Σ_t exp(C·Σ_{l∈𝒞} x^l_t)`.
//! Comfort constraints on the indoor temperature follow from linear
//! first-order dynamics and become halfspaces in `x^i`.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::GameModel;
use crate::error::{GameError, GeometryError};
use crate::geometry::{
    shrink_to_interior_ball, verify_interior_ball, FeasibleSet, Halfspace, InteriorBall,
};

/// Shrink steps allowed when deriving interior balls automatically.
pub const BALL_SHRINK_STEPS: usize = 50;

/// Thermal model and comfort zone of one building.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BuildingParams {
    /// State decay `a` in `r_t = a·r_{t−1} + b·x_t`.
    pub decay: f64,
    /// Input gain `b`.
    pub gain: f64,
    /// Output map `c` in `y_t = c·r_t`.
    pub output: f64,
    /// Initial thermal state `r_0`.
    pub initial_state: f64,
    /// Per-slot lower comfort bound; `-inf` drops the constraint.
    pub comfort_lower: Vec<f64>,
    /// Per-slot upper comfort bound; `inf` drops the constraint.
    pub comfort_upper: Vec<f64>,
    /// Power cap `x̄`.
    pub power_cap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThermalGameSpec {
    /// Energy price per slot (length `T`).
    pub energy_price: Vec<f64>,
    /// Peak-demand price `p_d`.
    pub peak_price: f64,
    /// Quadratic coefficients `λ_it`, one row per building.
    pub quadratic: Vec<Vec<f64>>,
    /// Cliques as lists of zero-based building indices.
    pub cliques: Vec<Vec<usize>>,
    /// Log-sum-exp sharpness `C`; the smoothing gap is at most `log(T)/C`.
    pub smoothing: f64,
    pub buildings: Vec<BuildingParams>,
}

impl ThermalGameSpec {
    pub fn num_buildings(&self) -> usize {
        self.buildings.len()
    }

    pub fn horizon(&self) -> usize {
        self.energy_price.len()
    }

    /// Twenty buildings, four slots, six cliques of sizes 3 through 8.
    /// Quadratic coefficients are drawn from `U[0.04, 0.06]` and the
    /// building dynamics and comfort zones are mildly randomized around a
    /// common profile; everything is a function of `seed`.
    pub fn default_instance(seed: u64) -> Self {
        const N: usize = 20;
        const T: usize = 4;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let quadratic = (0..N)
            .map(|_| (0..T).map(|_| rng.random_range(0.04..=0.06)).collect())
            .collect();
        let buildings = (0..N)
            .map(|_| {
                let lower = rng.random_range(1.8..=2.2);
                BuildingParams {
                    decay: rng.random_range(0.5..=0.7),
                    gain: 1.0,
                    output: 1.0,
                    initial_state: 1.0,
                    comfort_lower: vec![lower; T],
                    comfort_upper: vec![8.0; T],
                    power_cap: 5.0,
                }
            })
            .collect();
        Self {
            energy_price: vec![0.10, 0.15, 0.30, 0.20],
            peak_price: 1000.0,
            quadratic,
            cliques: vec![
                vec![0, 1, 2],
                vec![3, 4, 5, 6],
                vec![7, 8, 9, 10, 11],
                vec![12, 13, 14, 15, 16, 17],
                vec![18, 19, 0, 3, 7, 12, 15],
                vec![1, 4, 8, 13, 18, 2, 9, 16],
            ],
            smoothing: 10.0,
            buildings,
        }
    }

    pub fn validate(&self) -> Result<(), GameError> {
        let n = self.num_buildings();
        let t = self.horizon();
        let bad = |msg: String| Err(GameError::Invalid(msg));
        if n == 0 || t == 0 {
            return bad("need at least one building and one slot".into());
        }
        if !(self.smoothing > 0.0 && self.smoothing.is_finite()) {
            return bad(format!("smoothing constant must be positive, got {}", self.smoothing));
        }
        if !self.peak_price.is_finite() || self.energy_price.iter().any(|p| !p.is_finite()) {
            return bad("prices must be finite".into());
        }
        if self.quadratic.len() != n || self.quadratic.iter().any(|row| row.len() != t) {
            return bad(format!("quadratic coefficients must be a {n}x{t} table"));
        }
        if self.quadratic.iter().flatten().any(|&l| !(l >= 0.0 && l.is_finite())) {
            return bad("quadratic coefficients must be finite and nonnegative".into());
        }
        let mut covered = vec![false; n];
        for (j, clique) in self.cliques.iter().enumerate() {
            if clique.is_empty() {
                return bad(format!("clique {j} is empty"));
            }
            let mut seen = vec![false; n];
            for &b in clique {
                if b >= n {
                    return bad(format!("clique {j} references building {b}, only {n} exist"));
                }
                if seen[b] {
                    return bad(format!("clique {j} lists building {b} twice"));
                }
                seen[b] = true;
                covered[b] = true;
            }
        }
        if let Some(b) = covered.iter().position(|c| !c) {
            return bad(format!("building {b} belongs to no clique"));
        }
        for (i, b) in self.buildings.iter().enumerate() {
            if b.comfort_lower.len() != t || b.comfort_upper.len() != t {
                return bad(format!("building {i}: comfort bounds must have {t} entries"));
            }
            if b.gain == 0.0 || b.output == 0.0 {
                return bad(format!("building {i}: gain and output must be nonzero"));
            }
            if ![b.decay, b.gain, b.output, b.initial_state, b.power_cap]
                .iter()
                .all(|v| v.is_finite())
            {
                return bad(format!("building {i}: thermal parameters must be finite"));
            }
        }
        Ok(())
    }
}

/// `V(𝒞, x) = (1/C)·log Σ_t exp(C·Σ_{l∈𝒞} x^l_t)`, evaluated with the max
/// exponent factored out. The empty clique gives `log(T)/C`.
pub fn lse_value(members: &[usize], x: &[DVector<f64>], smoothing: f64, horizon: usize) -> f64 {
    lse(&slot_sums(members, x, horizon), smoothing)
}

fn slot_sums(members: &[usize], x: &[DVector<f64>], horizon: usize) -> Vec<f64> {
    let mut sums = vec![0.0; horizon];
    for &l in members {
        for (s, v) in sums.iter_mut().zip(x[l].iter()) {
            *s += v;
        }
    }
    sums
}

fn lse(sums: &[f64], smoothing: f64) -> f64 {
    let top = sums.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let total: f64 = sums.iter().map(|s| (smoothing * (s - top)).exp()).sum();
    top + total.ln() / smoothing
}

fn lse_and_softmax(sums: &[f64], smoothing: f64) -> (f64, Vec<f64>) {
    let top = sums.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = sums.iter().map(|s| (smoothing * (s - top)).exp()).collect();
    let total: f64 = weights.iter().sum();
    let value = top + total.ln() / smoothing;
    (value, weights.into_iter().map(|w| w / total).collect())
}

/// `(N − s)!(s − 1)!/N!` via log-gamma.
pub fn shapley_weight(clique_size: usize, num_players: usize) -> f64 {
    assert!(clique_size >= 1 && clique_size <= num_players);
    let n = num_players as f64;
    let s = clique_size as f64;
    (libm::lgamma(n - s + 1.0) + libm::lgamma(s) - libm::lgamma(n + 1.0)).exp()
}

/// Box `[0, x̄]` cut by the comfort constraints `y̲_t <= y_t <= ȳ_t`, where
/// `y_t = c(a^t r_0 + Σ_{s<=t} a^{t−s} b x_s)`.
///
/// Constraints that involve a single coordinate tighten the box instead of
/// becoming halfspaces, and infinite comfort bounds are dropped.
pub fn build_feasible_polytope(
    building: &BuildingParams,
    horizon: usize,
) -> Result<FeasibleSet, GeometryError> {
    let mut lower = DVector::<f64>::zeros(horizon);
    let mut upper = DVector::<f64>::from_element(horizon, building.power_cap);
    let mut rows: Vec<(DVector<f64>, f64)> = Vec::new();

    for t in 1..=horizon {
        let a = building.decay;
        let normal = DVector::from_fn(horizon, |s, _| {
            let s = s + 1;
            if s <= t {
                building.output * a.powi((t - s) as i32) * building.gain
            } else {
                0.0
            }
        });
        let free = building.output * a.powi(t as i32) * building.initial_state;
        let hi = building.comfort_upper[t - 1];
        let lo = building.comfort_lower[t - 1];
        if hi.is_finite() {
            rows.push((normal.clone(), hi - free));
        }
        if lo.is_finite() {
            rows.push((-normal, free - lo));
        }
    }

    let mut halfspaces = Vec::new();
    for (normal, offset) in rows {
        let support: Vec<usize> = (0..horizon).filter(|&s| normal[s] != 0.0).collect();
        match support.as_slice() {
            [] => {
                if offset < 0.0 {
                    return Err(GeometryError::NoInteriorBall(
                        "a comfort bound is violated by the free response".into(),
                    ));
                }
            }
            [s] => {
                let bound = offset / normal[*s];
                if normal[*s] > 0.0 {
                    upper[*s] = upper[*s].min(bound);
                } else {
                    lower[*s] = lower[*s].max(bound);
                }
            }
            _ => halfspaces.push(Halfspace::new(normal, offset)?),
        }
    }

    let mut set = FeasibleSet::new_box(lower, upper)?;
    for h in halfspaces {
        set = set.with_halfspace(h)?;
    }
    Ok(set)
}

/// The thermal load management game.
#[derive(Debug, Clone)]
pub struct ThermalGame {
    spec: ThermalGameSpec,
    weights: Vec<f64>,
    /// For each building, the cliques it belongs to.
    memberships: Vec<Vec<usize>>,
    sets: Vec<FeasibleSet>,
    balls: Vec<InteriorBall>,
    lipschitz: f64,
}

impl ThermalGame {
    /// Builds the game. Interior balls are verified when supplied, or
    /// derived with [`shrink_to_interior_ball`] otherwise.
    pub fn new(spec: ThermalGameSpec, balls: Option<Vec<InteriorBall>>) -> Result<Self, GameError> {
        spec.validate()?;
        let n = spec.num_buildings();
        let horizon = spec.horizon();
        let weights: Vec<f64> = spec
            .cliques
            .iter()
            .map(|c| shapley_weight(c.len(), n))
            .collect();
        let mut memberships = vec![Vec::new(); n];
        for (j, clique) in spec.cliques.iter().enumerate() {
            for &b in clique {
                memberships[b].push(j);
            }
        }
        let sets = spec
            .buildings
            .iter()
            .map(|b| build_feasible_polytope(b, horizon))
            .collect::<Result<Vec<_>, _>>()?;
        let balls = match balls {
            Some(balls) => {
                if balls.len() != n {
                    return Err(GameError::Invalid(format!(
                        "{n} buildings but {} interior balls",
                        balls.len()
                    )));
                }
                for (i, (set, ball)) in sets.iter().zip(&balls).enumerate() {
                    if !verify_interior_ball(set, ball) {
                        return Err(GameError::Invalid(format!(
                            "interior ball of building {i} is not contained in its feasible set"
                        )));
                    }
                }
                balls
            }
            None => sets
                .iter()
                .map(|s| shrink_to_interior_ball(s, BALL_SHRINK_STEPS))
                .collect::<Result<Vec<_>, _>>()?,
        };

        // ∇²Φ = diag(2λ) + p_d Σ_j w_j C E_jᵀ(diag σ − σσᵀ)E_j with ‖E_j‖² = |𝒞_j|.
        let max_lambda = spec.quadratic.iter().flatten().copied().fold(0.0, f64::max);
        let clique_term: f64 = spec
            .cliques
            .iter()
            .zip(&weights)
            .map(|(c, w)| w * c.len() as f64)
            .sum();
        let lipschitz = 2.0 * max_lambda + spec.peak_price.abs() * spec.smoothing * clique_term;

        Ok(Self {
            spec,
            weights,
            memberships,
            sets,
            balls,
            lipschitz,
        })
    }

    pub fn spec(&self) -> &ThermalGameSpec {
        &self.spec
    }

    pub fn clique_weights(&self) -> &[f64] {
        &self.weights
    }

    /// `R^i(x) = Σ_{𝒞_j ∋ i} w_j (V(𝒞_j, x) − V(𝒞_j∖{i}, x))`.
    pub fn shapley_share(&self, building: usize, x: &[DVector<f64>]) -> f64 {
        let horizon = self.spec.horizon();
        let c = self.spec.smoothing;
        self.memberships[building]
            .iter()
            .map(|&j| {
                let mut sums = slot_sums(&self.spec.cliques[j], x, horizon);
                let with = lse(&sums, c);
                for (s, v) in sums.iter_mut().zip(x[building].iter()) {
                    *s -= v;
                }
                self.weights[j] * (with - lse(&sums, c))
            })
            .sum()
    }

    fn private_cost(&self, building: usize, xi: &DVector<f64>) -> f64 {
        let linear: f64 = self.spec.energy_price.iter().zip(xi.iter()).map(|(p, v)| p * v).sum();
        let quadratic: f64 = self.spec.quadratic[building]
            .iter()
            .zip(xi.iter())
            .map(|(l, v)| l * v * v)
            .sum();
        linear + quadratic
    }
}

impl GameModel for ThermalGame {
    fn num_players(&self) -> usize {
        self.spec.num_buildings()
    }

    fn feasible_set(&self, player: usize) -> &FeasibleSet {
        &self.sets[player]
    }

    fn interior_ball(&self, player: usize) -> &InteriorBall {
        &self.balls[player]
    }

    fn objective(&self, player: usize, x: &[DVector<f64>]) -> f64 {
        self.private_cost(player, &x[player]) + self.spec.peak_price * self.shapley_share(player, x)
    }

    fn player_gradient(&self, player: usize, x: &[DVector<f64>]) -> Option<DVector<f64>> {
        let horizon = self.spec.horizon();
        let xi = &x[player];
        let mut g = DVector::from_fn(horizon, |t, _| {
            self.spec.energy_price[t] + 2.0 * self.spec.quadratic[player][t] * xi[t]
        });
        for &j in &self.memberships[player] {
            let sums = slot_sums(&self.spec.cliques[j], x, horizon);
            let (_, soft) = lse_and_softmax(&sums, self.spec.smoothing);
            let scale = self.spec.peak_price * self.weights[j];
            for (gt, s) in g.iter_mut().zip(soft) {
                *gt += scale * s;
            }
        }
        Some(g)
    }

    fn potential(&self, x: &[DVector<f64>]) -> Option<f64> {
        let horizon = self.spec.horizon();
        let private: f64 = (0..self.num_players())
            .map(|i| self.private_cost(i, &x[i]))
            .sum();
        let peak: f64 = self
            .spec
            .cliques
            .iter()
            .zip(&self.weights)
            .map(|(c, w)| w * lse_value(c, x, self.spec.smoothing, horizon))
            .sum();
        Some(private + self.spec.peak_price * peak)
    }

    fn lipschitz_bound(&self) -> Option<f64> {
        Some(self.lipschitz)
    }
}
