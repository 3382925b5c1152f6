//! The delayed bandit mirror-descent loop.
//!
//! Every iteration `k`, each player
//! 1. receives the realized values whose delay expires at `k`,
//! 2. files them into its caches, forming residual estimates,
//! 3. consumes the earliest queued estimate (or stays put when none is
//!    available),
//! 4. takes the prox step `X_{k+1} = prox(X_k, γ_k·Ĝ_k)`,
//! 5. perturbs `X_{k+1}` with radius `δ_{k+1}`, plays it and sends the
//!    realized value into the delay channel.

use std::collections::BTreeMap;
use std::time::Instant;

use nalgebra::DVector;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::delay::{arrival_iteration, DelayChannel, DelayModel, FeedbackRecord, PlayerQueues};
use crate::error::{EstimatorError, RunError};
use crate::estimator::{perturb, sample_unit_sphere, EstimatorKind, PerturbationContext};
use crate::games::{ball_centers, profile_distance, profile_feasible, profile_norm, GameModel, Profile};
use crate::geometry::{prox_step, MirrorStructure};
use crate::rng::{stream, StreamPurpose};
use crate::schedules::{validate_params, ScheduleParams, ValidationReport};

/// Known solution used for the trace metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct Reference {
    pub profile: Profile,
    /// `Φ*`, when the game has a potential.
    pub potential: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub delays: DelayModel,
    pub schedule: ScheduleParams,
    pub horizon: u64,
    pub seed: u64,
    pub replications: usize,
    pub stride: u64,
    pub estimator: EstimatorKind,
    pub mirror: MirrorStructure,
    /// Refuse to run schedules that fail [`validate_params`].
    pub strict: bool,
    /// `X_1`; interior-ball centers when absent.
    pub initial: Option<Profile>,
    pub reference: Option<Reference>,
    /// Keep per-iteration consumption logs and estimate norms.
    pub record_history: bool,
}

impl RunConfig {
    pub fn new(delays: DelayModel, schedule: ScheduleParams, horizon: u64) -> Self {
        Self {
            delays,
            schedule,
            horizon,
            seed: 0,
            replications: 1,
            stride: 1,
            estimator: EstimatorKind::Residual,
            mirror: MirrorStructure::Euclidean,
            strict: false,
            initial: None,
            reference: None,
            record_history: false,
        }
    }

    fn min_ball_radius(game: &dyn GameModel) -> f64 {
        (0..game.num_players())
            .map(|i| game.interior_ball(i).radius)
            .fold(f64::INFINITY, f64::min)
    }

    /// Checks the configuration against `game`; returns the schedule report
    /// (which only blocks the run in strict mode).
    pub fn check(&self, game: &dyn GameModel) -> Result<ValidationReport, RunError> {
        if self.horizon < 2 {
            return Err(RunError::Config(format!("horizon must be >= 2, got {}", self.horizon)));
        }
        if self.stride < 1 {
            return Err(RunError::Config("stride must be >= 1".into()));
        }
        if self.replications < 1 {
            return Err(RunError::Config("replications must be >= 1".into()));
        }
        self.delays.validate().map_err(RunError::Config)?;
        self.schedule.check_well_formed().map_err(RunError::Config)?;
        let min_radius = Self::min_ball_radius(game);
        let delta_1 = self.schedule.query_radius(1);
        if delta_1 > min_radius {
            return Err(RunError::Estimator(EstimatorError::RadiusExceedsBall {
                radius: delta_1,
                ball_radius: min_radius,
            }));
        }
        if let Some(x1) = &self.initial {
            if !profile_feasible(game, x1, 1e-9) {
                return Err(RunError::Config("initial profile is not feasible".into()));
            }
        }
        if let Some(r) = &self.reference {
            if r.profile.len() != game.num_players()
                || r.profile.iter().enumerate().any(|(i, b)| b.len() != game.player_dim(i))
            {
                return Err(RunError::Config("reference profile has the wrong shape".into()));
            }
        }
        let report = validate_params(&self.schedule, self.delays.exponent, Some(min_radius));
        if self.strict && !report.is_valid() {
            let failed: Vec<String> = report.failures().map(|c| c.inequality.clone()).collect();
            return Err(RunError::Schedule(failed.join("; ")));
        }
        Ok(report)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub iteration: u64,
    /// `‖X̂_k − x*‖₂/‖x*‖₂`, NaN without a reference.
    pub rel_dist: f64,
    /// `Φ(X̂_k) − Φ*`, NaN without a potential.
    pub potential_gap: f64,
    /// `‖Ĝ_k‖₂` over all players.
    pub ghat_norm: f64,
    pub starved_players: usize,
    pub wall_ms: f64,
}

impl TraceRow {
    /// Equality of everything but the wall-clock column.
    pub fn same_values(&self, other: &Self) -> bool {
        let eq = |a: f64, b: f64| a.to_bits() == b.to_bits();
        self.iteration == other.iteration
            && eq(self.rel_dist, other.rel_dist)
            && eq(self.potential_gap, other.potential_gap)
            && eq(self.ghat_norm, other.ghat_norm)
            && self.starved_players == other.starved_players
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RunStats {
    /// Iterations with an empty estimate queue, per player.
    pub starvation: Vec<u64>,
    /// Largest `k − s^i(k)` over non-sentinel consumptions.
    pub max_lag: u64,
    /// Values still cached at the end of the run, per player.
    pub leftover_values: Vec<usize>,
    /// Estimates never consumed, per player.
    pub leftover_estimates: Vec<usize>,
    /// Values whose arrival falls after the horizon, per player.
    pub undelivered: Vec<u64>,
    pub peak_value_cache: Vec<usize>,
    pub estimates_formed: Vec<u64>,
    pub estimates_consumed: Vec<u64>,
    /// Iterations where the starvation count exceeded `min(k, ⌈d̄(k)⌉ + 1)`.
    pub starvation_bound_violations: u64,
    /// Consumptions with `s + d̄(s) + 1 < k`.
    pub lag_bound_violations: u64,
    /// Largest constraint violation over every `X_k` and `X̂_k`.
    pub max_infeasibility: f64,
    pub warnings: Vec<String>,
}

/// Per-iteration logs, kept when [`RunConfig::record_history`] is set.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct History {
    /// `consumed[i][k−1]` is the timestamp consumed by player `i` at `k`,
    /// `None` when it starved.
    pub consumed: Vec<Vec<Option<u64>>>,
    /// `‖Ĝ_k‖₂` for every iteration.
    pub ghat_norms: Vec<f64>,
    /// `X_k` for every iteration (plus `X_{K+1}`).
    pub actions: Vec<Profile>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub seed: u64,
    pub trace: Vec<TraceRow>,
    pub stats: RunStats,
    pub history: Option<History>,
    pub final_action: Profile,
}

struct Player {
    directions: ChaCha8Rng,
    queues: PlayerQueues,
    pending: BTreeMap<u64, Vec<FeedbackRecord>>,
    starved: u64,
}

fn play(
    game: &dyn GameModel,
    x: &[DVector<f64>],
    radius: f64,
    players: &mut [Player],
) -> Result<(Profile, Vec<DVector<f64>>), RunError> {
    let mut played = Vec::with_capacity(x.len());
    let mut directions = Vec::with_capacity(x.len());
    for (i, (xi, p)) in x.iter().zip(players.iter_mut()).enumerate() {
        let u = sample_unit_sphere(xi.len(), &mut p.directions);
        let ctx = PerturbationContext {
            ball: game.interior_ball(i),
            radius,
            direction: &u,
        };
        let (_, x_hat) = perturb(xi, &ctx)?;
        played.push(x_hat);
        directions.push(u);
    }
    Ok((played, directions))
}

fn max_violation(game: &dyn GameModel, x: &[DVector<f64>]) -> f64 {
    x.iter()
        .enumerate()
        .map(|(i, xi)| game.feasible_set(i).max_violation(xi))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Runs the loop for `config.horizon` iterations with `config.seed`.
pub fn run(game: &dyn GameModel, config: &RunConfig) -> Result<RunOutput, RunError> {
    let report = config.check(game)?;
    run_checked(game, config, config.seed, &report)
}

fn run_checked(
    game: &dyn GameModel,
    config: &RunConfig,
    seed: u64,
    report: &ValidationReport,
) -> Result<RunOutput, RunError> {
    let start = Instant::now();
    let n = game.num_players();
    let horizon = config.horizon;
    let schedule = &config.schedule;
    let model = config.delays;

    let mut stats = RunStats {
        undelivered: vec![0; n],
        max_infeasibility: f64::NEG_INFINITY,
        ..RunStats::default()
    };
    for c in report.failures() {
        stats
            .warnings
            .push(format!("schedule condition {} violated: {}", c.name, c.inequality));
    }

    let reference = config.reference.as_ref();
    let reference_norm = reference.map(|r| profile_norm(&r.profile));
    let phi_star = reference.and_then(|r| r.potential);
    if reference.is_none() {
        stats
            .warnings
            .push("no reference solution: rel_dist and potential_gap are NaN".into());
    } else if phi_star.is_none() || game.potential(&ball_centers(game)).is_none() {
        stats
            .warnings
            .push("no potential available: potential_gap is NaN".into());
    }

    let mut players: Vec<Player> = (0..n)
        .map(|i| Player {
            directions: stream(seed, StreamPurpose::Directions, i),
            queues: PlayerQueues::new(config.estimator),
            pending: BTreeMap::new(),
            starved: 0,
        })
        .collect();
    let mut channel = DelayChannel::new(
        model,
        (0..n).map(|i| stream(seed, StreamPurpose::Delays, i)).collect(),
        stream(seed, StreamPurpose::SharedDelays, 0),
    );

    let mut history = config.record_history.then(|| History {
        consumed: vec![Vec::with_capacity(horizon as usize); n],
        ghat_norms: Vec::with_capacity(horizon as usize),
        actions: Vec::with_capacity(horizon as usize + 1),
    });

    let mut x: Profile = config.initial.clone().unwrap_or_else(|| ball_centers(game));

    let dispatch = |t: u64,
                        played: &[DVector<f64>],
                        directions: Vec<DVector<f64>>,
                        radius: f64,
                        players: &mut [Player],
                        channel: &mut DelayChannel<ChaCha8Rng>,
                        stats: &mut RunStats| {
        for (i, u) in directions.into_iter().enumerate() {
            let value = game.objective(i, played);
            let delay = channel.sample_delay(i, t);
            let arrival = arrival_iteration(t, delay);
            if arrival > horizon {
                stats.undelivered[i] += 1;
                continue;
            }
            players[i]
                .pending
                .entry(arrival)
                .or_default()
                .push(FeedbackRecord::new(t, value, u, radius));
        }
    };

    let delta_1 = schedule.query_radius(1);
    let (mut x_hat, directions) = play(game, &x, delta_1, &mut players)?;
    dispatch(1, &x_hat, directions, delta_1, &mut players, &mut channel, &mut stats);

    let mut trace = Vec::with_capacity((horizon / config.stride) as usize);
    for k in 1..=horizon {
        stats.max_infeasibility = stats
            .max_infeasibility
            .max(max_violation(game, &x))
            .max(max_violation(game, &x_hat));
        if let Some(h) = history.as_mut() {
            h.actions.push(x.clone());
        }

        let starvation_cap = (k as f64).min(model.bound(k).ceil() + 1.0);
        let mut ghat = Vec::with_capacity(n);
        let mut starved_players = 0;
        for (i, p) in players.iter_mut().enumerate() {
            if let Some(batch) = p.pending.remove(&k) {
                p.queues.ingest(batch)?;
            }
            let consumed = p.queues.pop_earliest();
            match &consumed {
                Some(r) => {
                    let s = r.timestamp;
                    stats.max_lag = stats.max_lag.max(k.saturating_sub(s));
                    if (s as f64) + model.bound(s) + 1.0 < k as f64 {
                        stats.lag_bound_violations += 1;
                    }
                }
                None => {
                    p.starved += 1;
                    starved_players += 1;
                }
            }
            if p.starved as f64 > starvation_cap {
                stats.starvation_bound_violations += 1;
            }
            if let Some(h) = history.as_mut() {
                h.consumed[i].push(consumed.as_ref().map(|r| r.timestamp));
            }
            ghat.push(consumed.map(|r| r.estimate));
        }

        let ghat_norm = ghat
            .iter()
            .flatten()
            .map(|g| g.norm_squared())
            .sum::<f64>()
            .sqrt();
        if let Some(h) = history.as_mut() {
            h.ghat_norms.push(ghat_norm);
        }

        if k % config.stride == 0 {
            let rel_dist = match (reference, reference_norm) {
                (Some(r), Some(norm)) => profile_distance(&x_hat, &r.profile) / norm,
                _ => f64::NAN,
            };
            let potential_gap = phi_star
                .and_then(|star| game.potential(&x_hat).map(|phi| phi - star))
                .unwrap_or(f64::NAN);
            trace.push(TraceRow {
                iteration: k,
                rel_dist,
                potential_gap,
                ghat_norm,
                starved_players,
                wall_ms: start.elapsed().as_secs_f64() * 1e3,
            });
        }

        let gamma = schedule.step_size(k);
        for (i, g) in ghat.into_iter().enumerate() {
            if let Some(g) = g {
                x[i] = prox_step(config.mirror, game.feasible_set(i), &x[i], &(g * gamma))?;
            }
        }

        if k < horizon {
            let delta = schedule.query_radius(k + 1);
            let (played, directions) = play(game, &x, delta, &mut players)?;
            x_hat = played;
            dispatch(k + 1, &x_hat, directions, delta, &mut players, &mut channel, &mut stats);
        }
    }
    if let Some(h) = history.as_mut() {
        h.actions.push(x.clone());
    }
    stats.max_infeasibility = stats.max_infeasibility.max(max_violation(game, &x));

    for p in &players {
        stats.starvation.push(p.starved);
        stats.leftover_values.push(p.queues.value_cache_len());
        stats.leftover_estimates.push(p.queues.estimate_queue_len());
        stats.peak_value_cache.push(p.queues.peak_cache_len());
        stats.estimates_formed.push(p.queues.estimates_formed());
        stats.estimates_consumed.push(p.queues.estimates_consumed());
    }

    Ok(RunOutput {
        seed,
        trace,
        stats,
        history,
        final_action: x,
    })
}

/// Order statistics of one metric across replications.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
    pub min: f64,
    pub max: f64,
}

impl Summary {
    /// NaN entries are ignored; all-NaN input gives an all-NaN summary.
    pub fn of(values: &[f64]) -> Self {
        let mut v: Vec<f64> = values.iter().copied().filter(|x| !x.is_nan()).collect();
        if v.is_empty() {
            return Self {
                median: f64::NAN,
                q25: f64::NAN,
                q75: f64::NAN,
                min: f64::NAN,
                max: f64::NAN,
            };
        }
        v.sort_by(f64::total_cmp);
        Self {
            median: quantile(&v, 0.5),
            q25: quantile(&v, 0.25),
            q75: quantile(&v, 0.75),
            min: v[0],
            max: v[v.len() - 1],
        }
    }

    pub fn iqr(&self) -> f64 {
        self.q75 - self.q25
    }
}

/// Linearly interpolated quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub iteration: u64,
    pub rel_dist: Summary,
    pub potential_gap: Summary,
    pub ghat_norm: Summary,
}

#[derive(Debug, Clone)]
pub struct Replicated {
    pub runs: Vec<RunOutput>,
    pub aggregate: Vec<AggregateRow>,
}

/// Runs seeds `seed, seed+1, …, seed+R−1` (concurrently) and summarizes each
/// logged iteration across them. Results do not depend on scheduling.
pub fn replicate(game: &dyn GameModel, config: &RunConfig) -> Result<Replicated, RunError> {
    let report = config.check(game)?;
    let runs: Vec<RunOutput> = (0..config.replications as u64)
        .into_par_iter()
        .map(|r| run_checked(game, config, config.seed.wrapping_add(r), &report))
        .collect::<Result<_, _>>()?;
    let rows = runs[0].trace.len();
    let aggregate = (0..rows)
        .map(|row| {
            let column = |f: fn(&TraceRow) -> f64| -> Vec<f64> {
                runs.iter().map(|r| f(&r.trace[row])).collect()
            };
            AggregateRow {
                iteration: runs[0].trace[row].iteration,
                rel_dist: Summary::of(&column(|t| t.rel_dist)),
                potential_gap: Summary::of(&column(|t| t.potential_gap)),
                ghat_norm: Summary::of(&column(|t| t.ghat_norm)),
            }
        })
        .collect();
    Ok(Replicated { runs, aggregate })
}
