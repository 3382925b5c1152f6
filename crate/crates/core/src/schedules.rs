//! Power-law step sizes `γ_k = γ₀/(k + K_γ)^{α_γ}` and query radii
//! `δ_k = δ₀/(k + K_δ)^{α_δ}`, plus the parameter conditions under which the
//! delayed bandit iteration converges.

use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleParams {
    pub step_scale: f64,
    #[serde(default)]
    pub step_offset: f64,
    pub step_exponent: f64,
    pub radius_scale: f64,
    #[serde(default)]
    pub radius_offset: f64,
    pub radius_exponent: f64,
}

impl ScheduleParams {
    /// `γ_k = 1/(k+10³)^0.9`, `δ_k = 1/(k+10)^0.6`.
    pub fn residual_default() -> Self {
        Self {
            step_scale: 1.0,
            step_offset: 1e3,
            step_exponent: 0.9,
            radius_scale: 1.0,
            radius_offset: 10.0,
            radius_exponent: 0.6,
        }
    }

    /// Same step sizes with the slower radius decay `δ_k = 1/(k+10)^0.35`
    /// required by the single-point method.
    pub fn single_point_default() -> Self {
        Self {
            radius_exponent: 0.35,
            ..Self::residual_default()
        }
    }

    pub fn step_size(&self, k: u64) -> f64 {
        self.step_scale / (k as f64 + self.step_offset).powf(self.step_exponent)
    }

    pub fn query_radius(&self, k: u64) -> f64 {
        self.radius_scale / (k as f64 + self.radius_offset).powf(self.radius_exponent)
    }

    /// Structural requirements (positivity, exponent ranges) independent of
    /// the convergence conditions.
    pub fn check_well_formed(&self) -> Result<(), String> {
        let positive = [("step_scale", self.step_scale), ("radius_scale", self.radius_scale)];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(format!("{name} must be positive and finite, got {v}"));
            }
        }
        for (name, v) in [("step_offset", self.step_offset), ("radius_offset", self.radius_offset)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(format!("{name} must be finite and >= 0, got {v}"));
            }
        }
        for (name, v) in [
            ("step_exponent", self.step_exponent),
            ("radius_exponent", self.radius_exponent),
        ] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(format!("{name} must lie in (0, 1], got {v}"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionCheck {
    pub name: &'static str,
    pub inequality: String,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport {
    pub checks: Vec<ConditionCheck>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &ConditionCheck> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&ConditionCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            let tag = if c.passed { "PASS" } else { "FAIL" };
            writeln!(f, "[{tag}] {:<22} {}", c.name, c.inequality)?;
        }
        Ok(())
    }
}

pub const STEP_EXPONENT_RANGE: &str = "step-exponent-range";
pub const STEP_DOMINATES_RADIUS: &str = "step-dominates-radius";
pub const EXPONENT_SUM: &str = "exponent-sum";
pub const DELAY_BUDGET: &str = "delay-budget";
pub const RADIUS_FITS_BALL: &str = "radius-fits-ball";

/// Checks `0.5 < α_γ <= 1`, `α_γ > α_δ`, `α_γ + α_δ > 1` and
/// `2α_γ − α_d > 1`. When `min_ball_radius` is given, also checks that the
/// largest query radius `δ_1` fits inside every interior ball.
pub fn validate_params(
    params: &ScheduleParams,
    delay_exponent: f64,
    min_ball_radius: Option<f64>,
) -> ValidationReport {
    let ag = params.step_exponent;
    let ad = params.radius_exponent;
    let mut checks = vec![
        ConditionCheck {
            name: STEP_EXPONENT_RANGE,
            inequality: format!("0.5 < alpha_gamma = {ag} <= 1"),
            passed: 0.5 < ag && ag <= 1.0,
        },
        ConditionCheck {
            name: STEP_DOMINATES_RADIUS,
            inequality: format!("alpha_gamma = {ag} > alpha_delta = {ad}"),
            passed: ag > ad,
        },
        ConditionCheck {
            name: EXPONENT_SUM,
            inequality: format!("alpha_gamma + alpha_delta = {} > 1", ag + ad),
            passed: ag + ad > 1.0,
        },
        ConditionCheck {
            name: DELAY_BUDGET,
            inequality: format!(
                "2 alpha_gamma - alpha_d = {} > 1 (alpha_d = {delay_exponent})",
                2.0 * ag - delay_exponent
            ),
            passed: 2.0 * ag - delay_exponent > 1.0,
        },
    ];
    if let Some(r) = min_ball_radius {
        let d1 = params.query_radius(1);
        checks.push(ConditionCheck {
            name: RADIUS_FITS_BALL,
            inequality: format!("delta_1 = {d1} <= min ball radius = {r}"),
            passed: d1 <= r,
        });
    }
    ValidationReport { checks }
}
