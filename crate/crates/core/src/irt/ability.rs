//! Ability scoring against fixed item parameters.

use serde::{Deserialize, Serialize};

use super::objective::{align_items, posterior, Dense};
use super::{sigmoid, AbilityEstimate, IrtError, ItemParams, NormalQuadrature, ABILITY_CAP};
use crate::normalize::BinaryResponseMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AbilityMethod {
    /// Posterior mean under a standard normal prior.
    #[default]
    Eap,
    /// Maximum likelihood (Newton), capped at ±[`ABILITY_CAP`].
    Mle,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AbilityConfig {
    pub quadrature_nodes: usize,
    pub method: AbilityMethod,
}

impl Default for AbilityConfig {
    fn default() -> Self {
        Self {
            quadrature_nodes: 21,
            method: AbilityMethod::Eap,
        }
    }
}

/// `Some(±1)` when every informative response pushes the likelihood the
/// same way (successes on positive-slope items and failures on
/// negative-slope items, or the reverse), so it has no interior maximum.
pub(crate) fn boundary_direction(row: &[i8], params: &[[f64; 3]]) -> Option<f64> {
    let (mut up, mut down) = (false, false);
    for (&y, p) in row.iter().zip(params) {
        if y < 0 || p[0] == 0.0 {
            continue;
        }
        if (y == 1) == (p[0] > 0.0) {
            up = true;
        } else {
            down = true;
        }
    }
    match (up, down) {
        (true, false) => Some(1.0),
        (false, true) => Some(-1.0),
        _ => None,
    }
}

pub(crate) fn eap(post_row: &[f64], quad: &NormalQuadrature) -> (f64, f64) {
    let mean: f64 = post_row.iter().zip(&quad.points).map(|(w, t)| w * t).sum();
    let var: f64 = post_row
        .iter()
        .zip(&quad.points)
        .map(|(w, t)| w * (t - mean) * (t - mean))
        .sum();
    (mean, var.max(0.0).sqrt())
}

/// Score and information of the response likelihood at `theta`.
fn score_info(row: &[i8], params: &[[f64; 3]], theta: f64) -> (f64, f64) {
    let (mut score, mut info) = (0.0, 0.0);
    for (&y, &[a, b, c]) in row.iter().zip(params) {
        if y < 0 {
            continue;
        }
        let s = sigmoid(a * (theta - b));
        let p = c + (1.0 - c) * s;
        score += a * (f64::from(y) - p) * s / p;
        info += a * a * (1.0 - c) * s * s * (1.0 - s) / p;
    }
    (score, info)
}

fn log_lik(row: &[i8], params: &[[f64; 3]], theta: f64) -> f64 {
    row.iter()
        .zip(params)
        .filter(|(&y, _)| y >= 0)
        .map(|(&y, &[a, b, c])| {
            let p = super::icc(theta, a, b, c).clamp(1e-300, 1.0 - 1e-16);
            if y == 1 {
                p.ln()
            } else {
                (1.0 - p).ln()
            }
        })
        .sum()
}

fn mle(row: &[i8], params: &[[f64; 3]], start: f64) -> (f64, f64) {
    let mut theta = start.clamp(-ABILITY_CAP, ABILITY_CAP);
    let mut f = log_lik(row, params, theta);
    for _ in 0..100 {
        let (score, info) = score_info(row, params, theta);
        if info <= 0.0 || !score.is_finite() {
            break;
        }
        let step = score / info;
        let mut t = 1.0;
        let mut moved = false;
        for _ in 0..=20 {
            let cand = (theta + t * step).clamp(-ABILITY_CAP, ABILITY_CAP);
            let fc = log_lik(row, params, cand);
            if fc > f {
                moved = (cand - theta).abs() > 1e-12;
                theta = cand;
                f = fc;
                break;
            }
            t *= 0.5;
        }
        if !moved || step.abs() < 1e-10 {
            break;
        }
    }
    let (_, info) = score_info(row, params, theta);
    let se = if info > 0.0 {
        1.0 / info.sqrt()
    } else {
        f64::INFINITY
    };
    (theta, se)
}

pub(crate) fn score_rows(
    dense: &Dense,
    params: &[[f64; 3]],
    quad: &NormalQuadrature,
    method: AbilityMethod,
) -> Vec<(f64, f64, bool)> {
    let post = posterior(dense, params, quad);
    (0..dense.m)
        .map(|j| {
            let row = dense.row(j);
            let (t_eap, se_eap) = eap(post.row(j), quad);
            match boundary_direction(row, params) {
                Some(dir) => (dir * ABILITY_CAP, se_eap, true),
                None => match method {
                    AbilityMethod::Eap => (t_eap, se_eap, false),
                    AbilityMethod::Mle => {
                        let (t, se) = mle(row, params, t_eap);
                        (t, se, false)
                    }
                },
            }
        })
        .collect()
}

/// Scores every agent of `brm` against a fixed item bank. Item columns are
/// matched to parameters by id; the bank is never modified.
pub fn estimate_abilities(
    brm: &BinaryResponseMatrix,
    items: &[ItemParams],
    config: &AbilityConfig,
) -> Result<Vec<AbilityEstimate>, IrtError> {
    let aligned = align_items(brm, items)?;
    let params: Vec<[f64; 3]> = aligned
        .iter()
        .map(|p| [p.discrimination, p.difficulty, p.guessing])
        .collect();
    let dense = Dense::from_brm(brm);
    for j in 0..dense.m {
        if dense.row(j).iter().all(|&y| y < 0) {
            return Err(IrtError::NoResponses(brm.agent_ids()[j].clone()));
        }
    }
    let quad = NormalQuadrature::new(config.quadrature_nodes)?;
    Ok(score_rows(&dense, &params, &quad, config.method)
        .into_iter()
        .enumerate()
        .map(|(j, (theta, se, boundary))| AbilityEstimate {
            agent_id: brm.agent_ids()[j].clone(),
            theta,
            standard_error: se,
            boundary,
            n_responses: dense.row(j).iter().filter(|&&y| y >= 0).count(),
        })
        .collect())
}
