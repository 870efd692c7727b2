//! Logistic item response models.
//!
//! The item characteristic curve (ICC) gives the probability that an agent
//! of ability `theta` succeeds on an item:
//!
//! ```text
//! P(success | theta) = c + (1 - c) / (1 + exp(-a (theta - b)))
//! ```
//!
//! with difficulty `b` (location), discrimination `a` (steepness) and
//! guessing `c` (lower asymptote; 0 for the two-parameter model).
//!
//! Item parameters and abilities are estimated jointly by alternating an
//! item step (marginal maximum likelihood over a standard normal ability
//! distribution, integrated with Gauss-Hermite quadrature) and an ability
//! step (expected a posteriori scores on the same grid). See [`fit`].

mod ability;
mod estimate;
mod itemfit;
mod objective;
pub mod quadrature;

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataio::DataError;
use crate::indicators::DifficultyBinning;

pub use ability::{estimate_abilities, AbilityConfig, AbilityMethod};
pub use estimate::fit;
pub use itemfit::{item_fit, seed_consistency, SeedConsistencyReport};
pub use objective::{marginal_item_gradient, marginal_log_likelihood, ItemObjective};
pub use quadrature::{GaussHermite, NormalQuadrature};

/// Abilities of agents whose likelihood has no interior maximum are pinned here.
pub const ABILITY_CAP: f64 = 6.0;
/// Box applied to `a` and `b` during optimisation.
pub const PARAM_BOUND: f64 = 500.0;
/// Upper bound on the guessing parameter during optimisation.
pub const GUESSING_MAX: f64 = 0.95;

#[derive(Debug, Error)]
pub enum IrtError {
    #[error("response matrix has {agents} agents and {items} items; at least 2x2 is required")]
    TooSmall { agents: usize, items: usize },
    #[error("agent `{0}` has no observed responses")]
    NoResponses(String),
    #[error("items without parameters in the bank: {0:?}")]
    UnknownItems(Vec<String>),
    #[error("need at least 2 seeds, got {0}")]
    TooFewSeeds(usize),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid item parameters for `{id}`: {reason}")]
    InvalidItem { id: String, reason: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Data(#[from] DataError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "2PL")]
    TwoPL,
    #[serde(rename = "3PL")]
    ThreePL,
}

impl ModelKind {
    pub fn n_params(self) -> usize {
        match self {
            ModelKind::TwoPL => 2,
            ModelKind::ThreePL => 3,
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "2pl" => Ok(ModelKind::TwoPL),
            "3pl" => Ok(ModelKind::ThreePL),
            other => Err(format!("unknown model `{other}` (expected 2pl|3pl)")),
        }
    }
}

/// Chi-square item fit against ability groups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ItemFit {
    #[default]
    NotComputed,
    Defined {
        statistic: f64,
        dof: usize,
        p_value: f64,
        groups: usize,
    },
    Undefined {
        reason: String,
    },
}

impl ItemFit {
    pub fn p_value(&self) -> Option<f64> {
        match self {
            ItemFit::Defined { p_value, .. } => Some(*p_value),
            _ => None,
        }
    }
}

/// Fitted parameters of one item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawItemParams")]
pub struct ItemParams {
    #[serde(rename = "id")]
    pub item_id: String,
    #[serde(rename = "a")]
    pub discrimination: f64,
    #[serde(rename = "b")]
    pub difficulty: f64,
    #[serde(rename = "c")]
    pub guessing: f64,
    /// `a (1 - c) / 4`: slope of the ICC at `theta = b`.
    #[serde(rename = "slope")]
    pub slope_at_location: f64,
    pub fit_stat: ItemFit,
    /// Negative discrimination: better agents do worse.
    pub flagged_abstruse: bool,
    /// Parameters came from the bounded grid search after Newton failed.
    #[serde(default)]
    pub fallback: bool,
}

#[derive(Deserialize)]
struct RawItemParams {
    id: String,
    a: f64,
    b: f64,
    #[serde(default)]
    c: f64,
    #[serde(default)]
    fit_stat: ItemFit,
    #[serde(default)]
    fallback: bool,
}

impl TryFrom<RawItemParams> for ItemParams {
    type Error = IrtError;

    fn try_from(raw: RawItemParams) -> Result<Self, Self::Error> {
        let mut p = ItemParams::new(raw.id, raw.a, raw.b, raw.c)?;
        p.fit_stat = raw.fit_stat;
        p.fallback = raw.fallback;
        Ok(p)
    }
}

impl ItemParams {
    pub fn new(
        item_id: impl Into<String>,
        discrimination: f64,
        difficulty: f64,
        guessing: f64,
    ) -> Result<Self, IrtError> {
        let item_id = item_id.into();
        if !discrimination.is_finite() || !difficulty.is_finite() {
            return Err(IrtError::InvalidItem {
                id: item_id,
                reason: "non-finite a or b".into(),
            });
        }
        if !(0.0..1.0).contains(&guessing) {
            return Err(IrtError::InvalidItem {
                id: item_id,
                reason: format!("guessing {guessing} outside [0, 1)"),
            });
        }
        Ok(Self::from_parts(
            item_id,
            discrimination,
            difficulty,
            guessing,
        ))
    }

    /// Two-parameter item (`c = 0`).
    pub fn two_pl(
        item_id: impl Into<String>,
        discrimination: f64,
        difficulty: f64,
    ) -> Result<Self, IrtError> {
        Self::new(item_id, discrimination, difficulty, 0.0)
    }

    pub(crate) fn from_parts(item_id: String, a: f64, b: f64, c: f64) -> Self {
        Self {
            item_id,
            discrimination: a,
            difficulty: b,
            guessing: c,
            slope_at_location: a * (1.0 - c) / 4.0,
            fit_stat: ItemFit::NotComputed,
            flagged_abstruse: a < 0.0,
            fallback: false,
        }
    }

    pub fn prob(&self, theta: f64) -> f64 {
        icc(theta, self.discrimination, self.difficulty, self.guessing)
    }
}

/// Logistic sigmoid, stable for any finite input; saturates to exactly 0
/// or 1 far in the tails.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln sigmoid(x)` without overflow or cancellation.
#[inline]
pub(crate) fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

/// Probability of success under the three-parameter logistic ICC.
#[inline]
pub fn icc(theta: f64, a: f64, b: f64, c: f64) -> f64 {
    let z = a * (theta - b);
    let s = if z.is_nan() {
        // 0 * inf: zero discrimination at infinite ability
        0.5
    } else {
        sigmoid(z)
    };
    c + (1.0 - c) * s
}

/// [`icc`] for an [`ItemParams`].
pub fn icc_prob(theta: f64, p: &ItemParams) -> f64 {
    p.prob(theta)
}

/// One agent's estimated ability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbilityEstimate {
    #[serde(rename = "id")]
    pub agent_id: String,
    pub theta: f64,
    #[serde(rename = "se")]
    pub standard_error: f64,
    /// Likelihood had no interior maximum (all responses aligned with the
    /// item slopes); theta is pinned at ±[`ABILITY_CAP`].
    #[serde(default)]
    pub boundary: bool,
    #[serde(default)]
    pub n_responses: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    /// Stop when the largest absolute change of any item parameter or
    /// ability between cycles is at most this.
    pub tolerance: f64,
    pub max_iters: usize,
    pub quadrature_nodes: usize,
    /// Seeds the perturbation of the initial abilities.
    pub seed: u64,
    pub ability_method: AbilityMethod,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-4,
            max_iters: 1000,
            quadrature_nodes: 21,
            seed: 0,
            ability_method: AbilityMethod::Eap,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<(), IrtError> {
        if !(self.tolerance > 0.0 && self.tolerance.is_finite()) {
            return Err(IrtError::Config(format!(
                "tolerance must be positive, got {}",
                self.tolerance
            )));
        }
        if self.max_iters == 0 {
            return Err(IrtError::Config("max_iters must be at least 1".into()));
        }
        if self.quadrature_nodes == 0 || self.quadrature_nodes > 200 {
            return Err(IrtError::Config(format!(
                "quadrature_nodes must be in 1..=200, got {}",
                self.quadrature_nodes
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Convergence {
    pub iterations: usize,
    pub max_param_delta: f64,
    /// Marginal log-likelihood of the final item parameters.
    pub log_likelihood: f64,
    pub converged: bool,
    /// Marginal log-likelihood after every cycle.
    #[serde(default, skip_serializing)]
    pub trace: Vec<f64>,
}

/// Item bank plus abilities and convergence metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub model_kind: ModelKind,
    pub config: FitConfig,
    pub items: Vec<ItemParams>,
    pub abilities: Vec<AbilityEstimate>,
    pub convergence: Convergence,
    pub quadrature_nodes: usize,
    pub seed: u64,
    /// Difficulty binning used for generality when scoring new agents.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub binning: Option<DifficultyBinning>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl FittedModel {
    pub fn item(&self, id: &str) -> Option<&ItemParams> {
        self.items.iter().find(|p| p.item_id == id)
    }

    pub fn ability(&self, id: &str) -> Option<&AbilityEstimate> {
        self.abilities.iter().find(|a| a.agent_id == id)
    }

    pub fn abstruse_items(&self) -> Vec<&str> {
        self.items
            .iter()
            .filter(|p| p.flagged_abstruse)
            .map(|p| p.item_id.as_str())
            .collect()
    }

    pub fn to_json(&self) -> Result<String, IrtError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self, IrtError> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), IrtError> {
        let path = path.as_ref();
        fs::write(path, self.to_json()? + "\n").map_err(|source| IrtError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, IrtError> {
        let path = path.as_ref();
        let s = fs::read_to_string(path).map_err(|source| IrtError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&s)
    }
}
