#![allow(dead_code)]

use delayed_md::estimator::{perturb, residual_estimate, sample_unit_sphere, PerturbationContext};
use delayed_md::games::{ball_centers, QuadraticGame};
use delayed_md::geometry::{prox_step, FeasibleSet, Halfspace, InteriorBall, MirrorStructure};
use delayed_md::rng::{stream, StreamPurpose};
use delayed_md::schedules::ScheduleParams;
use delayed_md::{GameModel, Profile};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

pub fn vector(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}

pub fn square(lo: f64, hi: f64, dim: usize) -> FeasibleSet {
    FeasibleSet::new_box(DVector::from_element(dim, lo), DVector::from_element(dim, hi)).unwrap()
}

/// Three players on `[-2, 2]²` with a non-symmetric, strongly monotone
/// coupling and an interior equilibrium.
pub fn three_player_game() -> QuadraticGame {
    #[rustfmt::skip]
    let m = DMatrix::from_row_slice(6, 6, &[
        2.0, 0.3, 0.4, -0.2, 0.1, 0.0,
        0.3, 1.8, 0.0, 0.3, -0.3, 0.2,
        -0.1, 0.2, 2.2, 0.1, 0.4, -0.2,
        0.3, 0.0, 0.1, 1.9, 0.0, 0.3,
        0.2, -0.2, 0.3, 0.1, 2.1, -0.1,
        0.1, 0.4, -0.3, 0.0, -0.1, 2.0,
    ]);
    let target = vec![vector(&[0.5, -0.3]), vector(&[-0.8, 0.6]), vector(&[1.0, 0.2])];
    let set = square(-2.0, 2.0, 2);
    let ball = InteriorBall::new(DVector::zeros(2), 1.0);
    QuadraticGame::with_stationary_point(
        m,
        &target,
        vec![set.clone(), set.clone(), set],
        vec![ball.clone(), ball.clone(), ball],
    )
    .unwrap()
}

/// Two players on `[-1, 1]²` with a symmetric (potential) coupling.
pub fn two_player_game() -> QuadraticGame {
    #[rustfmt::skip]
    let m = DMatrix::from_row_slice(4, 4, &[
        1.5, 0.2, 0.3, 0.0,
        0.2, 1.2, -0.1, 0.25,
        0.3, -0.1, 1.4, 0.1,
        0.0, 0.25, 0.1, 1.6,
    ]);
    let target = vec![vector(&[0.4, -0.2]), vector(&[-0.3, 0.5])];
    let set = square(-1.0, 1.0, 2);
    let ball = InteriorBall::new(DVector::zeros(2), 0.9);
    QuadraticGame::with_stationary_point(m, &target, vec![set.clone(), set], vec![ball.clone(), ball])
        .unwrap()
}

/// Random 2-D box cut by one halfspace that keeps the box center strictly
/// inside.
pub fn random_cut_box<R: Rng>(rng: &mut R) -> FeasibleSet {
    let lo = vector(&[rng.random_range(-2.0..0.0), rng.random_range(-2.0..0.0)]);
    let hi = &lo + vector(&[rng.random_range(0.5..3.0), rng.random_range(0.5..3.0)]);
    let center = (&lo + &hi) * 0.5;
    let angle: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let normal = vector(&[angle.cos(), angle.sin()]);
    let offset = normal.dot(&center) + rng.random_range(0.05..0.6);
    FeasibleSet::new_box(lo, hi)
        .unwrap()
        .with_halfspace(Halfspace::new(normal, offset).unwrap())
        .unwrap()
}

/// Zero-delay residual mirror descent written directly, without caches,
/// queues or delay channels.
pub fn reference_loop(
    game: &dyn GameModel,
    schedule: &ScheduleParams,
    seed: u64,
    horizon: u64,
) -> Vec<Profile> {
    let n = game.num_players();
    let mut rngs: Vec<_> = (0..n).map(|i| stream(seed, StreamPurpose::Directions, i)).collect();
    let mut x = ball_centers(game);
    let mut actions = vec![x.clone()];

    let play = |x: &Profile, delta: f64, rngs: &mut Vec<_>| -> (Profile, Vec<DVector<f64>>) {
        let mut played = Vec::new();
        let mut dirs = Vec::new();
        for i in 0..n {
            let u = sample_unit_sphere(x[i].len(), &mut rngs[i]);
            let ctx = PerturbationContext {
                ball: game.interior_ball(i),
                radius: delta,
                direction: &u,
            };
            played.push(perturb(&x[i], &ctx).unwrap().1);
            dirs.push(u);
        }
        (played, dirs)
    };

    let delta = schedule.query_radius(1);
    let (played, _) = play(&x, delta, &mut rngs);
    let mut previous: Vec<f64> = (0..n).map(|i| game.objective(i, &played)).collect();
    // G_1 does not exist, so X_2 = X_1.
    actions.push(x.clone());
    for k in 2..=horizon {
        let delta = schedule.query_radius(k);
        let (played, dirs) = play(&x, delta, &mut rngs);
        let gamma = schedule.step_size(k);
        for i in 0..n {
            let j = game.objective(i, &played);
            let g = residual_estimate(j, previous[i], &dirs[i], delta).unwrap();
            previous[i] = j;
            x[i] = prox_step(MirrorStructure::Euclidean, game.feasible_set(i), &x[i], &(g * gamma))
                .unwrap();
        }
        actions.push(x.clone());
    }
    actions
}

/// Brute-force projection. Points outside the set project onto its
/// boundary, so every supporting line (box edges and the halfspace line) is
/// scanned on a 1-D grid, keeping only feasible grid points, and the grid is
/// refined around the incumbent of each line.
pub fn grid_projection(set: &FeasibleSet, z: &DVector<f64>) -> DVector<f64> {
    if set.contains(z, 0.0) {
        return z.clone();
    }
    let (lo, hi) = (set.lower(), set.upper());
    let mut lines = Vec::new();
    for k in 0..2 {
        for bound in [lo[k], hi[k]] {
            let mut origin = vector(&[0.0, 0.0]);
            origin[k] = bound;
            let mut dir = vector(&[0.0, 0.0]);
            dir[1 - k] = 1.0;
            lines.push((origin, dir));
        }
    }
    for h in set.halfspaces() {
        let a = &h.normal;
        let origin = a * (h.offset / a.norm_squared());
        let dir = vector(&[-a[1], a[0]]) / a.norm();
        lines.push((origin, dir));
    }

    let mut best: Option<(f64, DVector<f64>)> = None;
    for (origin, dir) in &lines {
        let at = |t: f64| origin + dir * t;
        let mut line_best: Option<(f64, f64)> = None;
        let (mut from, mut to, steps) = (-20.0, 20.0, 4000);
        loop {
            let spacing = (to - from) / steps as f64;
            for s in 0..=steps {
                let t = from + spacing * s as f64;
                let p = at(t);
                if set.contains(&p, 1e-12) {
                    let d = (&p - z).norm();
                    if line_best.is_none_or(|(bd, _)| d < bd) {
                        line_best = Some((d, t));
                    }
                }
            }
            let Some((_, t)) = line_best else { break };
            if spacing < 1e-10 {
                break;
            }
            from = t - 2.0 * spacing;
            to = t + 2.0 * spacing;
        }
        if let Some((d, t)) = line_best {
            if best.as_ref().is_none_or(|(bd, _)| d < *bd) {
                best = Some((d, at(t)));
            }
        }
    }
    best.expect("some boundary line meets the set").1
}

/// Uniform-ish feasible point: a random box point pulled into the set.
pub fn random_feasible<R: Rng>(game: &dyn GameModel, rng: &mut R) -> Profile {
    (0..game.num_players())
        .map(|i| {
            let set = game.feasible_set(i);
            let raw = DVector::from_fn(set.dim(), |c, _| rng.random_range(set.lower()[c]..=set.upper()[c]));
            set.project(&raw).unwrap()
        })
        .collect()
}

/// Monte-Carlo mean of consecutive residual estimates at a fixed profile,
/// all players perturbing with the same radius.
pub fn mean_residual(game: &dyn GameModel, x: &[DVector<f64>], player: usize, radius: f64, draws: usize) -> DVector<f64> {
    let n = game.num_players();
    let mut rngs: Vec<_> = (0..n).map(|i| stream(7, StreamPurpose::Directions, i)).collect();
    let mut previous = None;
    let mut sum = DVector::zeros(x[player].len());
    for _ in 0..=draws {
        let dirs: Vec<_> = rngs.iter_mut().zip(x).map(|(r, xi)| sample_unit_sphere(xi.len(), r)).collect();
        let played: Vec<_> = (0..n)
            .map(|i| {
                let ctx = PerturbationContext { ball: game.interior_ball(i), radius, direction: &dirs[i] };
                perturb(&x[i], &ctx).unwrap().1
            })
            .collect();
        let j = game.objective(player, &played);
        if let Some(prev) = previous {
            sum += residual_estimate(j, prev, &dirs[player], radius).unwrap();
        }
        previous = Some(j);
    }
    sum / draws as f64
}
