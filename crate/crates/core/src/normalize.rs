//! Commensurate scores and binary success indicators.
//!
//! Raw benchmark scores live on incomparable per-item scales. Three
//! conversions are provided: per-column z-scores squashed through the
//! standard normal CDF, linear rescaling against per-item random and target
//! (e.g. human) reference scores, and win-rate aggregation of repeated
//! win/loss trials. [`binarize`] then thresholds any of them into 0/1
//! responses for IRT fitting.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataio::{
    check_grid_shape, check_labels, DataError, MinShape, ResultMatrix, TrialRecord,
};

/// Bound applied to stored reference-scaled values.
pub const REFERENCE_CLAMP: f64 = 10.0;

#[derive(Debug, Error)]
pub enum NormalizeError {
    #[error("item `{0}` has fewer than two distinct observed values; z-scores are undefined")]
    ConstantColumn(String),
    #[error("no {which} reference score for item `{item}`")]
    MissingReference { which: &'static str, item: String },
    #[error("item `{0}`: target reference equals random reference")]
    DegenerateReference(String),
    #[error("trial ({agent}, {item}) has win value {value}; expected 0 or 1")]
    InvalidWin {
        agent: String,
        item: String,
        value: f64,
    },
    #[error("value {value} at ({agent}, {item}) outside [0, 1]")]
    OutOfRange {
        agent: String,
        item: String,
        value: f64,
    },
    #[error("binarization threshold must be finite, got {0}")]
    InvalidThreshold(f64),
    #[error("majority-wins binarization needs win-rate input, got {0:?}")]
    NotWinrate(NormalizationMethod),
    #[error(transparent)]
    Data(#[from] DataError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalizationMethod {
    ZscoreErf,
    ReferenceScaled,
    Winrate,
    /// Scores already commensurate and in [0, 1].
    Identity,
}

/// Scores on a common scale, aligned with their source matrix.
///
/// All methods except `ReferenceScaled` store values in [0, 1].
/// Reference-scaled values are stored clamped to ±[`REFERENCE_CLAMP`] and the
/// unclamped values are kept for binarization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizedMatrix {
    agent_ids: Vec<String>,
    item_ids: Vec<String>,
    values: Vec<Vec<f64>>,
    missing_mask: Vec<Vec<bool>>,
    method: NormalizationMethod,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    unclamped: Option<Vec<Vec<f64>>>,
}

impl NormalizedMatrix {
    pub fn agent_ids(&self) -> &[String] {
        &self.agent_ids
    }

    pub fn item_ids(&self) -> &[String] {
        &self.item_ids
    }

    pub fn method(&self) -> NormalizationMethod {
        self.method
    }

    pub fn n_agents(&self) -> usize {
        self.agent_ids.len()
    }

    pub fn n_items(&self) -> usize {
        self.item_ids.len()
    }

    pub fn get(&self, agent: usize, item: usize) -> Option<f64> {
        (!self.missing_mask[agent][item]).then(|| self.values[agent][item])
    }

    /// Value used for thresholding (unclamped for reference-scaled data).
    pub fn get_unclamped(&self, agent: usize, item: usize) -> Option<f64> {
        if self.missing_mask[agent][item] {
            return None;
        }
        Some(match &self.unclamped {
            Some(u) => u[agent][item],
            None => self.values[agent][item],
        })
    }

    /// Observed scores of one agent keyed by item id.
    pub fn agent_scores(&self, agent: usize) -> BTreeMap<String, f64> {
        self.item_ids
            .iter()
            .enumerate()
            .filter_map(|(i, id)| self.get(agent, i).map(|v| (id.clone(), v)))
            .collect()
    }

    /// View as a result matrix (e.g. for CSV output).
    pub fn to_result_matrix(&self) -> Result<ResultMatrix, DataError> {
        ResultMatrix::with_min_shape(
            self.agent_ids.clone(),
            self.item_ids.clone(),
            self.values.clone(),
            self.missing_mask.clone(),
            MinShape::SCORING,
        )
    }
}

/// 0/1 responses (plus missing), input to IRT fitting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryResponseMatrix {
    agent_ids: Vec<String>,
    item_ids: Vec<String>,
    values: Vec<Vec<Option<u8>>>,
    #[serde(default)]
    rule: Option<BinarizePolicy>,
}

impl BinaryResponseMatrix {
    /// Cells must be 0, 1 or missing. Zero items are allowed so that a fully
    /// filtered matrix can be reported by the caller.
    pub fn new(
        agent_ids: Vec<String>,
        item_ids: Vec<String>,
        values: Vec<Vec<Option<u8>>>,
        rule: Option<BinarizePolicy>,
    ) -> Result<Self, DataError> {
        if agent_ids.is_empty() {
            return Err(DataError::Empty);
        }
        if !item_ids.is_empty() {
            check_labels(&agent_ids, &item_ids, MinShape::SCORING)?;
        }
        check_grid_shape(&values, agent_ids.len(), item_ids.len(), "responses")?;
        for (j, row) in values.iter().enumerate() {
            for (i, v) in row.iter().enumerate() {
                if matches!(v, Some(x) if *x > 1) {
                    return Err(DataError::Shape(format!(
                        "response at ({}, {}) is not 0/1",
                        agent_ids[j], item_ids[i]
                    )));
                }
            }
        }
        Ok(Self {
            agent_ids,
            item_ids,
            values,
            rule,
        })
    }

    /// Reads a result matrix whose observed values are exactly 0 or 1.
    pub fn from_result_matrix(rm: &ResultMatrix) -> Result<Self, DataError> {
        let values = (0..rm.n_agents())
            .map(|j| {
                rm.row(j)
                    .enumerate()
                    .map(|(i, c)| match c {
                        None => Ok(None),
                        Some(v) if v == 0.0 => Ok(Some(0)),
                        Some(v) if v == 1.0 => Ok(Some(1)),
                        Some(v) => Err(DataError::Shape(format!(
                            "value {v} at ({}, {}) is not 0/1",
                            rm.agent_ids()[j],
                            rm.item_ids()[i]
                        ))),
                    })
                    .collect::<Result<Vec<_>, _>>()
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(
            rm.agent_ids().to_vec(),
            rm.item_ids().to_vec(),
            values,
            None,
        )
    }

    pub fn agent_ids(&self) -> &[String] {
        &self.agent_ids
    }

    pub fn item_ids(&self) -> &[String] {
        &self.item_ids
    }

    pub fn n_agents(&self) -> usize {
        self.agent_ids.len()
    }

    pub fn n_items(&self) -> usize {
        self.item_ids.len()
    }

    pub fn rule(&self) -> Option<BinarizePolicy> {
        self.rule
    }

    pub fn get(&self, agent: usize, item: usize) -> Option<u8> {
        self.values[agent][item]
    }

    pub fn rows(&self) -> &[Vec<Option<u8>>] {
        &self.values
    }

    pub fn to_result_matrix(&self) -> Result<ResultMatrix, DataError> {
        let cells = self
            .values
            .iter()
            .map(|r| r.iter().map(|c| c.map(f64::from)).collect())
            .collect();
        ResultMatrix::from_cells_with_min_shape(
            self.agent_ids.clone(),
            self.item_ids.clone(),
            cells,
            MinShape::SCORING,
        )
    }

    /// Items whose observed responses are all equal (or absent).
    pub fn constant_items(&self) -> Vec<usize> {
        (0..self.n_items())
            .filter(|&i| {
                let mut seen = self.values.iter().filter_map(|r| r[i]);
                match seen.next() {
                    None => true,
                    Some(first) => seen.all(|v| v == first),
                }
            })
            .collect()
    }

    pub(crate) fn without_constant_items(&self) -> Result<(Self, Vec<String>), DataError> {
        let constant = self.constant_items();
        let removed: Vec<String> = constant.iter().map(|&i| self.item_ids[i].clone()).collect();
        let keep: Vec<usize> = (0..self.n_items())
            .filter(|i| !constant.contains(i))
            .collect();
        Ok((self.select(None, Some(&keep))?, removed))
    }

    /// Keeps the listed items in their current order.
    pub fn retain_items(&self, keep: &[String]) -> Result<Self, DataError> {
        let cols: Vec<usize> = (0..self.n_items())
            .filter(|&i| keep.contains(&self.item_ids[i]))
            .collect();
        self.select(None, Some(&cols))
    }

    /// Keeps the listed agents in their current order.
    pub fn retain_agents(&self, keep: &[String]) -> Result<Self, DataError> {
        let rows: Vec<usize> = (0..self.n_agents())
            .filter(|&j| keep.contains(&self.agent_ids[j]))
            .collect();
        self.select(Some(&rows), None)
    }

    /// Rows reordered by `order` (a permutation of agent indices).
    pub fn permute_agents(&self, order: &[usize]) -> Result<Self, DataError> {
        self.select(Some(order), None)
    }

    fn select(&self, rows: Option<&[usize]>, cols: Option<&[usize]>) -> Result<Self, DataError> {
        let all_rows: Vec<usize> = (0..self.n_agents()).collect();
        let all_cols: Vec<usize> = (0..self.n_items()).collect();
        let rows = rows.unwrap_or(&all_rows);
        let cols = cols.unwrap_or(&all_cols);
        Self::new(
            rows.iter().map(|&j| self.agent_ids[j].clone()).collect(),
            cols.iter().map(|&i| self.item_ids[i].clone()).collect(),
            rows.iter()
                .map(|&j| cols.iter().map(|&i| self.values[j][i]).collect())
                .collect(),
            self.rule,
        )
    }
}

/// Standard normal CDF, `(1 + erf(z/√2)) / 2`, evaluated through `erfc` so
/// that the lower tail keeps full relative precision.
pub fn standard_normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

/// Per-column z-scores (population SD over observed cells) mapped through
/// the standard normal CDF. A value at its column mean maps to 0.5.
pub fn zscore_erf(rm: &ResultMatrix) -> Result<NormalizedMatrix, NormalizeError> {
    let (m, n) = (rm.n_agents(), rm.n_items());
    let mut values = vec![vec![0.0; n]; m];
    for i in 0..n {
        let col: Vec<f64> = rm.column(i).flatten().collect();
        let distinct = col.iter().any(|&v| v != col[0]);
        if col.len() < 2 || !distinct {
            return Err(NormalizeError::ConstantColumn(rm.item_ids()[i].clone()));
        }
        let mean = crate::stats::mean(&col).unwrap_or(0.0);
        let sd = crate::stats::population_variance(&col)
            .unwrap_or(0.0)
            .sqrt();
        for (j, row) in values.iter_mut().enumerate() {
            if let Some(v) = rm.get(j, i) {
                row[i] = standard_normal_cdf((v - mean) / sd);
            }
        }
    }
    Ok(NormalizedMatrix {
        agent_ids: rm.agent_ids().to_vec(),
        item_ids: rm.item_ids().to_vec(),
        values,
        missing_mask: rm.missing_mask().to_vec(),
        method: NormalizationMethod::ZscoreErf,
        unclamped: None,
    })
}

/// `(v - random) / (target - random)` per item: 0 is random play, 1 is the
/// target (e.g. human) level.
pub fn reference_scale(
    rm: &ResultMatrix,
    random_ref: &BTreeMap<String, f64>,
    target_ref: &BTreeMap<String, f64>,
) -> Result<NormalizedMatrix, NormalizeError> {
    let (m, n) = (rm.n_agents(), rm.n_items());
    let mut unclamped = vec![vec![0.0; n]; m];
    for (i, item) in rm.item_ids().iter().enumerate() {
        if rm.column(i).all(|c| c.is_none()) {
            continue;
        }
        let lo = *random_ref
            .get(item)
            .ok_or_else(|| NormalizeError::MissingReference {
                which: "random",
                item: item.clone(),
            })?;
        let hi = *target_ref
            .get(item)
            .ok_or_else(|| NormalizeError::MissingReference {
                which: "target",
                item: item.clone(),
            })?;
        if hi == lo {
            return Err(NormalizeError::DegenerateReference(item.clone()));
        }
        for (j, row) in unclamped.iter_mut().enumerate() {
            if let Some(v) = rm.get(j, i) {
                row[i] = (v - lo) / (hi - lo);
            }
        }
    }
    let values = unclamped
        .iter()
        .map(|r| {
            r.iter()
                .map(|v| v.clamp(-REFERENCE_CLAMP, REFERENCE_CLAMP))
                .collect()
        })
        .collect();
    Ok(NormalizedMatrix {
        agent_ids: rm.agent_ids().to_vec(),
        item_ids: rm.item_ids().to_vec(),
        values,
        missing_mask: rm.missing_mask().to_vec(),
        method: NormalizationMethod::ReferenceScaled,
        unclamped: Some(unclamped),
    })
}

/// Accepts scores that are already in [0, 1] unchanged.
pub fn identity(rm: &ResultMatrix) -> Result<NormalizedMatrix, NormalizeError> {
    for j in 0..rm.n_agents() {
        for (i, c) in rm.row(j).enumerate() {
            if let Some(v) = c {
                if !(0.0..=1.0).contains(&v) {
                    return Err(NormalizeError::OutOfRange {
                        agent: rm.agent_ids()[j].clone(),
                        item: rm.item_ids()[i].clone(),
                        value: v,
                    });
                }
            }
        }
    }
    Ok(NormalizedMatrix {
        agent_ids: rm.agent_ids().to_vec(),
        item_ids: rm.item_ids().to_vec(),
        values: rm.values().to_vec(),
        missing_mask: rm.missing_mask().to_vec(),
        method: NormalizationMethod::Identity,
        unclamped: None,
    })
}

/// Averages win/loss trials per (agent, item). Labels keep first-appearance
/// order; pairs with no trials are missing.
pub fn winrate_aggregate(trials: &[TrialRecord]) -> Result<NormalizedMatrix, NormalizeError> {
    let mut agent_ids: Vec<String> = Vec::new();
    let mut item_ids: Vec<String> = Vec::new();
    let mut agent_pos: HashMap<&str, usize> = HashMap::new();
    let mut item_pos: HashMap<&str, usize> = HashMap::new();
    let mut tally: HashMap<(usize, usize), (u64, u64)> = HashMap::new();
    for t in trials {
        if t.win != 0.0 && t.win != 1.0 {
            return Err(NormalizeError::InvalidWin {
                agent: t.agent.clone(),
                item: t.item.clone(),
                value: t.win,
            });
        }
        let j = *agent_pos.entry(&t.agent).or_insert_with(|| {
            agent_ids.push(t.agent.clone());
            agent_ids.len() - 1
        });
        let i = *item_pos.entry(&t.item).or_insert_with(|| {
            item_ids.push(t.item.clone());
            item_ids.len() - 1
        });
        let e = tally.entry((j, i)).or_insert((0, 0));
        e.0 += (t.win == 1.0) as u64;
        e.1 += 1;
    }
    check_labels(&agent_ids, &item_ids, MinShape::SCORING)?;
    let (m, n) = (agent_ids.len(), item_ids.len());
    let mut values = vec![vec![0.0; n]; m];
    let mut missing_mask = vec![vec![true; n]; m];
    for (&(j, i), &(wins, count)) in &tally {
        values[j][i] = wins as f64 / count as f64;
        missing_mask[j][i] = false;
    }
    Ok(NormalizedMatrix {
        agent_ids,
        item_ids,
        values,
        missing_mask,
        method: NormalizationMethod::Winrate,
        unclamped: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum BinarizePolicy {
    /// Success iff value ≥ threshold.
    AtOrAbove { threshold: f64 },
    /// Success iff the win fraction is at least one half.
    MajorityWins,
}

impl std::str::FromStr for BinarizePolicy {
    type Err = String;

    /// Parses `at-or-above=<t>` or `majority`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "majority" {
            return Ok(BinarizePolicy::MajorityWins);
        }
        match s.strip_prefix("at-or-above=") {
            Some(t) => t
                .parse::<f64>()
                .map(|threshold| BinarizePolicy::AtOrAbove { threshold })
                .map_err(|e| format!("bad threshold `{t}`: {e}")),
            None => Err(format!(
                "unknown binarization `{s}` (expected at-or-above=<t>|majority)"
            )),
        }
    }
}

pub fn binarize(
    nm: &NormalizedMatrix,
    policy: BinarizePolicy,
) -> Result<BinaryResponseMatrix, NormalizeError> {
    let threshold = match policy {
        BinarizePolicy::AtOrAbove { threshold } if threshold.is_finite() => threshold,
        BinarizePolicy::AtOrAbove { threshold } => {
            return Err(NormalizeError::InvalidThreshold(threshold))
        }
        BinarizePolicy::MajorityWins if nm.method == NormalizationMethod::Winrate => 0.5,
        BinarizePolicy::MajorityWins => return Err(NormalizeError::NotWinrate(nm.method)),
    };
    let values = (0..nm.n_agents())
        .map(|j| {
            (0..nm.n_items())
                .map(|i| nm.get_unclamped(j, i).map(|v| u8::from(v >= threshold)))
                .collect()
        })
        .collect();
    Ok(BinaryResponseMatrix::new(
        nm.agent_ids.clone(),
        nm.item_ids.clone(),
        values,
        Some(policy),
    )?)
}
