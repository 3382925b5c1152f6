//! Feedback delays and the per-player feedback utilization caches.
//!
//! Realized values travel through a delay channel and land in a value cache
//! (`P_J`). As soon as two consecutive timestamps `t−1, t` are both present
//! the residual estimate `G_t` is formed and pushed into a min-priority queue
//! keyed by timestamp (`P_G`). Every iteration the player consumes the
//! earliest estimate, or makes no move when the queue is empty.

use std::collections::{BTreeMap, HashSet};

use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::DelayError;
use crate::estimator::{residual_estimate, single_point_estimate, EstimatorKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DelayKind {
    /// Each player draws its own delay; the bound is meant to be a constant.
    HeterogeneousBounded,
    /// One delay per iteration shared by all players; may grow sublinearly.
    HomogeneousSublinear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DelayMode {
    /// The delay equals its bound.
    Deterministic,
    /// Uniform on `[0, bound(k)]`.
    UniformRandom,
}

/// Delay of the feedback produced at iteration `k` is bounded by
/// `bound(k) = coefficient·k^exponent + offset`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DelayModel {
    pub kind: DelayKind,
    pub mode: DelayMode,
    /// Constant part `d̄ >= 0`.
    #[serde(default)]
    pub offset: f64,
    /// Growth exponent `α_d ∈ [0, 1)`.
    #[serde(default)]
    pub exponent: f64,
    /// Growth coefficient `c >= 0`.
    #[serde(default)]
    pub coefficient: f64,
}

impl DelayModel {
    pub fn zero() -> Self {
        Self {
            kind: DelayKind::HeterogeneousBounded,
            mode: DelayMode::Deterministic,
            offset: 0.0,
            exponent: 0.0,
            coefficient: 0.0,
        }
    }

    /// Heterogeneous delays drawn uniformly on `[0, max]`.
    pub fn bounded_uniform(max: f64) -> Self {
        Self {
            kind: DelayKind::HeterogeneousBounded,
            mode: DelayMode::UniformRandom,
            offset: max,
            exponent: 0.0,
            coefficient: 0.0,
        }
    }

    /// Homogeneous deterministic delays `coefficient·k^exponent`.
    pub fn power_law(coefficient: f64, exponent: f64) -> Self {
        Self {
            kind: DelayKind::HomogeneousSublinear,
            mode: DelayMode::Deterministic,
            offset: 0.0,
            exponent,
            coefficient,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.offset >= 0.0 && self.offset.is_finite()) {
            return Err(format!("delay offset must be finite and >= 0, got {}", self.offset));
        }
        if !(0.0..1.0).contains(&self.exponent) {
            return Err(format!("delay exponent must lie in [0, 1), got {}", self.exponent));
        }
        if !(self.coefficient >= 0.0 && self.coefficient.is_finite()) {
            return Err(format!(
                "delay coefficient must be finite and >= 0, got {}",
                self.coefficient
            ));
        }
        Ok(())
    }

    pub fn bound(&self, k: u64) -> f64 {
        self.coefficient * (k as f64).powf(self.exponent) + self.offset
    }

    /// Draws the delay of feedback produced at iteration `k`.
    pub fn sample<R: Rng + ?Sized>(&self, k: u64, rng: &mut R) -> f64 {
        debug_assert!(k >= 1);
        let bound = self.bound(k);
        match self.mode {
            DelayMode::Deterministic => bound,
            DelayMode::UniformRandom => {
                if bound > 0.0 {
                    rng.random_range(0.0..=bound)
                } else {
                    0.0
                }
            }
        }
    }
}

/// Per-player delay sampling with the homogeneity contract: for
/// [`DelayKind::HomogeneousSublinear`] every player sees the same delay at
/// a given iteration (drawn once from the shared stream).
pub struct DelayChannel<R> {
    model: DelayModel,
    player_streams: Vec<R>,
    shared_stream: R,
    shared_draw: Option<(u64, f64)>,
}

impl<R: Rng> DelayChannel<R> {
    pub fn new(model: DelayModel, player_streams: Vec<R>, shared_stream: R) -> Self {
        Self {
            model,
            player_streams,
            shared_stream,
            shared_draw: None,
        }
    }

    pub fn model(&self) -> &DelayModel {
        &self.model
    }

    pub fn sample_delay(&mut self, player: usize, k: u64) -> f64 {
        match self.model.kind {
            DelayKind::HeterogeneousBounded => {
                self.model.sample(k, &mut self.player_streams[player])
            }
            DelayKind::HomogeneousSublinear => match self.shared_draw {
                Some((at, d)) if at == k => d,
                _ => {
                    let d = self.model.sample(k, &mut self.shared_stream);
                    self.shared_draw = Some((k, d));
                    d
                }
            },
        }
    }
}

/// The unique iteration `k` with `k − 1 < t + d <= k`.
pub fn arrival_iteration(t: u64, delay: f64) -> u64 {
    let at = (t as f64 + delay).ceil();
    if at >= u64::MAX as f64 {
        u64::MAX
    } else {
        at as u64
    }
}

/// How many estimates a realized value takes part in. The first value only
/// pairs forward (there is no `G_1`).
pub fn expected_uses(t: u64) -> u8 {
    if t <= 1 {
        1
    } else {
        2
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackRecord {
    pub timestamp: u64,
    pub value: f64,
    pub direction: DVector<f64>,
    /// Query radius in force when the value was produced.
    pub radius: f64,
    pub usage: u8,
}

impl FeedbackRecord {
    pub fn new(timestamp: u64, value: f64, direction: DVector<f64>, radius: f64) -> Self {
        Self {
            timestamp,
            value,
            direction,
            radius,
            usage: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateRecord {
    pub timestamp: u64,
    pub estimate: DVector<f64>,
}

/// Value cache, estimate queue and consumption state of one player.
#[derive(Debug, Clone)]
pub struct PlayerQueues {
    estimator: EstimatorKind,
    values: BTreeMap<u64, FeedbackRecord>,
    estimates: BTreeMap<u64, DVector<f64>>,
    ingested: HashSet<u64>,
    last_consumed: u64,
    formed: u64,
    consumed: u64,
    peak_cache: usize,
}

impl PlayerQueues {
    pub fn new(estimator: EstimatorKind) -> Self {
        Self {
            estimator,
            values: BTreeMap::new(),
            estimates: BTreeMap::new(),
            ingested: HashSet::new(),
            last_consumed: 0,
            formed: 0,
            consumed: 0,
            peak_cache: 0,
        }
    }

    pub fn value_cache_len(&self) -> usize {
        self.values.len()
    }

    pub fn value_cache_timestamps(&self) -> Vec<u64> {
        self.values.keys().copied().collect()
    }

    pub fn estimate_queue_len(&self) -> usize {
        self.estimates.len()
    }

    pub fn estimate_queue_timestamps(&self) -> Vec<u64> {
        self.estimates.keys().copied().collect()
    }

    /// Timestamp of the most recently consumed estimate (0 before any).
    pub fn last_consumed(&self) -> u64 {
        self.last_consumed
    }

    pub fn estimates_formed(&self) -> u64 {
        self.formed
    }

    pub fn estimates_consumed(&self) -> u64 {
        self.consumed
    }

    /// Largest value-cache size observed right after an ingest.
    pub fn peak_cache_len(&self) -> usize {
        self.peak_cache
    }

    /// Inserts arrivals one at a time and forms every estimate whose pair of
    /// values is now complete. Records that reached their expected number of
    /// uses are evicted. Returns the newly formed estimates (also queued).
    pub fn ingest(
        &mut self,
        arrivals: impl IntoIterator<Item = FeedbackRecord>,
    ) -> Result<Vec<EstimateRecord>, DelayError> {
        let mut created = Vec::new();
        for record in arrivals {
            let t = record.timestamp;
            if t == 0 {
                return Err(DelayError::ZeroTimestamp);
            }
            if !self.ingested.insert(t) {
                return Err(DelayError::DuplicateTimestamp { timestamp: t });
            }
            match self.estimator {
                EstimatorKind::Residual => self.ingest_residual(record, &mut created)?,
                EstimatorKind::SinglePoint => {
                    let estimate =
                        single_point_estimate(record.value, &record.direction, record.radius)?;
                    created.push(EstimateRecord { timestamp: t, estimate });
                }
            }
        }
        for e in &created {
            self.estimates.insert(e.timestamp, e.estimate.clone());
        }
        self.formed += created.len() as u64;
        self.peak_cache = self.peak_cache.max(self.values.len());
        Ok(created)
    }

    fn ingest_residual(
        &mut self,
        record: FeedbackRecord,
        created: &mut Vec<EstimateRecord>,
    ) -> Result<(), DelayError> {
        let t = record.timestamp;
        self.values.insert(t, record);

        if let Some(next) = self.values.get(&(t + 1)) {
            let estimate = residual_estimate(
                next.value,
                self.values[&t].value,
                &next.direction,
                next.radius,
            )?;
            created.push(EstimateRecord { timestamp: t + 1, estimate });
            self.mark_used(t + 1);
            self.mark_used(t);
        }
        if t >= 2 {
            if let Some(prev) = self.values.get(&(t - 1)) {
                let current = &self.values[&t];
                let estimate =
                    residual_estimate(current.value, prev.value, &current.direction, current.radius)?;
                created.push(EstimateRecord { timestamp: t, estimate });
                self.mark_used(t - 1);
                self.mark_used(t);
            }
        }
        Ok(())
    }

    fn mark_used(&mut self, t: u64) {
        let done = match self.values.get_mut(&t) {
            Some(r) => {
                r.usage += 1;
                r.usage >= expected_uses(t)
            }
            None => false,
        };
        if done {
            self.values.remove(&t);
        }
    }

    /// Removes and returns the earliest queued estimate, or `None` when the
    /// queue is empty (the caller then makes no move this iteration).
    pub fn pop_earliest(&mut self) -> Option<EstimateRecord> {
        let (timestamp, estimate) = self.estimates.pop_first()?;
        self.last_consumed = timestamp;
        self.consumed += 1;
        Some(EstimateRecord { timestamp, estimate })
    }

    /// [`Self::pop_earliest`] with the empty case mapped to the sentinel
    /// `(1, 0)`.
    pub fn pop_or_sentinel(&mut self, dim: usize) -> (u64, DVector<f64>) {
        match self.pop_earliest() {
            Some(r) => (r.timestamp, r.estimate),
            None => (1, DVector::zeros(dim)),
        }
    }
}

/// Number of starved iterations (`true` flags) among the first `k`.
pub fn starvation_count(history: &[bool], k: usize) -> usize {
    history[..k.min(history.len())].iter().filter(|&&s| s).count()
}
