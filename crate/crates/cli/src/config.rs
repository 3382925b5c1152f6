//! Experiment configuration files (TOML).
//!
//! Every table rejects unknown keys. Relative paths are resolved against the
//! directory containing the configuration file.

use std::path::{Path, PathBuf};

use delayed_md::delay::DelayModel;
use delayed_md::estimator::EstimatorKind;
use delayed_md::games::{QuadraticGame, ThermalGame, ThermalGameSpec};
use delayed_md::geometry::{FeasibleSet, Halfspace, InteriorBall, MirrorStructure};
use delayed_md::GameError;
use delayed_md::schedules::ScheduleParams;
use delayed_md::GameModel;
use nalgebra::{DMatrix, DVector};
use serde::Deserialize;

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub game: GameConfig,
    /// Required by `run`; `sweep` takes its delays from the scenarios.
    pub delays: Option<DelayModel>,
    pub schedules: ScheduleParams,
    pub run: RunSection,
    #[serde(default)]
    pub reference: ReferenceSection,
    #[serde(default)]
    pub oracle: OracleSection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub scenarios: Vec<Scenario>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GameConfig {
    Quadratic(QuadraticConfig),
    Thermal(ThermalConfig),
}

/// `F(x) = Mx + b` over the stacked profile; give either `linear` (= b) or
/// `target`, a profile at which `F` vanishes.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadraticConfig {
    pub matrix: Vec<Vec<f64>>,
    pub linear: Option<Vec<f64>>,
    pub target: Option<Vec<Vec<f64>>>,
    pub players: Vec<PlayerGeometry>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlayerGeometry {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    #[serde(default)]
    pub halfspaces: Vec<HalfspaceConfig>,
    pub ball: BallConfig,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HalfspaceConfig {
    pub normal: Vec<f64>,
    pub offset: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BallConfig {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl BallConfig {
    fn to_ball(&self) -> InteriorBall {
        InteriorBall::new(DVector::from_vec(self.center.clone()), self.radius)
    }
}

/// Either the built-in instance for `instance_seed` or a full `spec`.
/// Interior balls are derived automatically unless `balls` is given.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThermalConfig {
    pub instance_seed: Option<u64>,
    pub spec: Option<ThermalGameSpec>,
    pub balls: Option<Vec<BallConfig>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub horizon: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub replications: usize,
    #[serde(default = "one_u64")]
    pub stride: u64,
    #[serde(default)]
    pub estimator: EstimatorKind,
    #[serde(default)]
    pub mirror: MirrorStructure,
    #[serde(default)]
    pub strict: bool,
}

fn one() -> usize {
    1
}

fn one_u64() -> u64 {
    1
}

/// Source of `x*` and `Φ*` for the trace metrics.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceSection {
    /// Oracle file written by the `oracle` command.
    pub file: Option<PathBuf>,
    /// Solve for the reference before running.
    #[serde(default)]
    pub solve: bool,
}

/// Projected-gradient solver limits for `oracle` and `reference.solve`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSection {
    #[serde(default = "default_oracle_tol")]
    pub tol: f64,
    #[serde(default = "default_oracle_max_iter")]
    pub max_iter: usize,
}

fn default_oracle_tol() -> f64 {
    1e-13
}

fn default_oracle_max_iter() -> usize {
    2_000_000
}

impl Default for OracleSection {
    fn default() -> Self {
        Self {
            tol: default_oracle_tol(),
            max_iter: default_oracle_max_iter(),
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    /// Trace CSV for `run`, output directory for `sweep`, JSON for `oracle`.
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub delays: DelayModel,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut config: Self = toml::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        if config.schema_version != SCHEMA_VERSION {
            return Err(CliError::Config(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                config.schema_version
            )));
        }
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut Option<PathBuf>| {
            if let Some(p) = p.as_mut() {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        };
        resolve(&mut config.reference.file);
        resolve(&mut config.output.path);
        if config.reference.solve && config.reference.file.is_some() {
            return Err(CliError::Config(
                "reference: set either `file` or `solve`, not both".into(),
            ));
        }
        for s in &config.scenarios {
            let ok = !s.name.is_empty()
                && s.name
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'));
            if !ok {
                return Err(CliError::Config(format!(
                    "scenario name {:?} must be non-empty and use only [A-Za-z0-9._-]",
                    s.name
                )));
            }
        }
        Ok(config)
    }
}

fn build_set(p: &PlayerGeometry) -> Result<FeasibleSet, GameError> {
    let mut set = FeasibleSet::new_box(DVector::from_vec(p.lower.clone()), DVector::from_vec(p.upper.clone()))?;
    for h in &p.halfspaces {
        set = set.with_halfspace(Halfspace::new(DVector::from_vec(h.normal.clone()), h.offset)?)?;
    }
    Ok(set)
}

impl GameConfig {
    pub fn build(&self) -> Result<Box<dyn GameModel>, CliError> {
        match self {
            GameConfig::Quadratic(q) => Ok(Box::new(q.build()?)),
            GameConfig::Thermal(t) => {
                let balls = t.balls.as_ref().map(|b| b.iter().map(BallConfig::to_ball).collect());
                Ok(Box::new(ThermalGame::new(t.resolve_spec()?, balls)?))
            }
        }
    }
}

impl QuadraticConfig {
    fn build(&self) -> Result<QuadraticGame, CliError> {
        let sets: Vec<FeasibleSet> = self.players.iter().map(build_set).collect::<Result<_, _>>()?;
        let balls = self.players.iter().map(|p| p.ball.to_ball()).collect();
        let n: usize = sets.iter().map(|s| s.dim()).sum();
        if self.matrix.len() != n || self.matrix.iter().any(|row| row.len() != n) {
            return Err(CliError::Config(format!("game.matrix must be {n}x{n}")));
        }
        let matrix = DMatrix::from_row_iterator(n, n, self.matrix.iter().flatten().copied());
        let game = match (&self.linear, &self.target) {
            (Some(b), None) => QuadraticGame::new(matrix, DVector::from_vec(b.clone()), sets, balls)?,
            (None, Some(t)) => {
                let target: Vec<DVector<f64>> = t.iter().map(|v| DVector::from_vec(v.clone())).collect();
                if target.len() != sets.len() || target.iter().zip(&sets).any(|(v, s)| v.len() != s.dim()) {
                    return Err(CliError::Config("game.target must match the players' dimensions".into()));
                }
                QuadraticGame::with_stationary_point(matrix, &target, sets, balls)?
            }
            _ => {
                return Err(CliError::Config(
                    "quadratic game: give exactly one of `linear` and `target`".into(),
                ))
            }
        };
        Ok(game)
    }
}

impl ThermalConfig {
    fn resolve_spec(&self) -> Result<ThermalGameSpec, CliError> {
        match (&self.spec, self.instance_seed) {
            (Some(spec), None) => Ok(spec.clone()),
            (None, Some(seed)) => Ok(ThermalGameSpec::default_instance(seed)),
            (None, None) => Ok(ThermalGameSpec::default_instance(0)),
            (Some(_), Some(_)) => Err(CliError::Config(
                "thermal game: give either `spec` or `instance_seed`, not both".into(),
            )),
        }
    }
}
