//! Item-fit statistics and seed-consistency checks.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::objective::{align_items, params_of, Dense, LogTables};
use super::{
    fit, FitConfig, FittedModel, IrtError, ItemFit, ItemParams, ModelKind, NormalQuadrature,
};
use crate::normalize::BinaryResponseMatrix;

const ABILITY_GROUPS: usize = 10;
const MIN_GROUP_SIZE: usize = 5;

/// Splits indices of `thetas` (sorted by value, ties by index) into deciles,
/// then merges adjacent groups until each holds at least
/// [`MIN_GROUP_SIZE`] members.
pub(crate) fn ability_groups(thetas: &[f64]) -> Vec<Vec<usize>> {
    let m = thetas.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&x, &y| thetas[x].total_cmp(&thetas[y]).then(x.cmp(&y)));
    let k = ABILITY_GROUPS.min(m.max(1));
    let mut deciles: Vec<Vec<usize>> = Vec::with_capacity(k);
    let (q, rem) = (m / k, m % k);
    let mut start = 0;
    for g in 0..k {
        let size = q + usize::from(g < rem);
        deciles.push(order[start..start + size].to_vec());
        start += size;
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut acc: Vec<usize> = Vec::new();
    for d in deciles {
        acc.extend(d);
        if acc.len() >= MIN_GROUP_SIZE {
            groups.push(std::mem::take(&mut acc));
        }
    }
    if !acc.is_empty() {
        match groups.last_mut() {
            Some(last) => last.extend(acc),
            None => groups.push(acc),
        }
    }
    groups
}

fn chi_square_sf(stat: f64, dof: usize) -> f64 {
    if stat <= 0.0 {
        return 1.0;
    }
    statrs::function::gamma::gamma_ur(dof as f64 / 2.0, stat / 2.0)
}

/// Per item: agents are grouped by their EAP ability computed *without*
/// that item, and the observed successes in each group are compared with
/// the model's prediction from the same item-excluded posterior,
/// `Σ_g (O_g - E_g)² / V_g` with `V_g` the summed Bernoulli variances.
/// Excluding the item keeps the grouping independent of the response
/// being tested.
pub(crate) fn item_fit_with(
    dense: &Dense,
    items: &[ItemParams],
    quad: &NormalQuadrature,
    kind: ModelKind,
) -> Vec<ItemFit> {
    let params = params_of(items);
    let tables = LogTables::new(&params, quad);
    let k = quad.len();
    let full: Vec<Vec<f64>> = (0..dense.m)
        .into_par_iter()
        .map(|j| {
            let mut ll = quad.log_weights.clone();
            for (i, &y) in dense.row(j).iter().enumerate() {
                let t = match y {
                    1 => &tables.lp[i * k..(i + 1) * k],
                    0 => &tables.lq[i * k..(i + 1) * k],
                    _ => continue,
                };
                for (acc, v) in ll.iter_mut().zip(t) {
                    *acc += v;
                }
            }
            ll
        })
        .collect();
    (0..items.len())
        .into_par_iter()
        .map(|i| {
            let lp = &tables.lp[i * k..(i + 1) * k];
            let lq = &tables.lq[i * k..(i + 1) * k];
            let (mut theta, mut pred, mut obs) = (Vec::new(), Vec::new(), Vec::new());
            let mut w = vec![0.0; k];
            for (j, ll) in full.iter().enumerate() {
                let y = dense.row(j)[i];
                if y < 0 {
                    continue;
                }
                let own = if y == 1 { lp } else { lq };
                for q in 0..k {
                    w[q] = ll[q] - own[q];
                }
                let max = w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let mut sum = 0.0;
                for v in w.iter_mut() {
                    *v = (*v - max).exp();
                    sum += *v;
                }
                let (mut t, mut p) = (0.0, 0.0);
                for q in 0..k {
                    t += w[q] * quad.points[q];
                    p += w[q] * lp[q].exp();
                }
                theta.push(t / sum);
                pred.push(p / sum);
                obs.push(f64::from(y));
            }
            let mut stat = 0.0;
            let mut used = 0;
            for g in ability_groups(&theta) {
                let o: f64 = g.iter().map(|&x| obs[x]).sum();
                let e: f64 = g.iter().map(|&x| pred[x]).sum();
                let v: f64 = g.iter().map(|&x| pred[x] * (1.0 - pred[x])).sum();
                if v <= 1e-12 {
                    continue;
                }
                used += 1;
                stat += (o - e) * (o - e) / v;
            }
            if used < 2 {
                return ItemFit::Undefined {
                    reason: format!("{used} informative ability group(s); at least 2 are needed"),
                };
            }
            let np = kind.n_params();
            if used <= np {
                return ItemFit::Undefined {
                    reason: format!(
                        "{used} groups leave no degrees of freedom for {np} parameters"
                    ),
                };
            }
            let dof = used - np;
            ItemFit::Defined {
                statistic: stat,
                dof,
                p_value: chi_square_sf(stat, dof),
                groups: used,
            }
        })
        .collect()
}

/// Chi-square item fit of `model` on `brm` (columns matched by item id).
/// Degrees of freedom are informative groups minus item parameters.
pub fn item_fit(brm: &BinaryResponseMatrix, model: &FittedModel) -> Result<Vec<ItemFit>, IrtError> {
    let items: Vec<ItemParams> = align_items(brm, &model.items)?
        .into_iter()
        .cloned()
        .collect();
    let quad = NormalQuadrature::new(model.quadrature_nodes)?;
    Ok(item_fit_with(
        &Dense::from_brm(brm),
        &items,
        &quad,
        model.model_kind,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamDeviation {
    pub id: String,
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

/// Refits under several seeds and compares the estimates pairwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedConsistencyReport {
    pub seeds: Vec<u64>,
    pub log_likelihoods: Vec<f64>,
    pub converged: Vec<bool>,
    /// Per item: largest pairwise absolute difference across seeds.
    pub item_deviations: Vec<ParamDeviation>,
    pub max_ability_deviation: f64,
    pub max_deviation: f64,
    /// `10 × tolerance`.
    pub threshold: f64,
    pub consistent: bool,
}

pub fn seed_consistency(
    brm: &BinaryResponseMatrix,
    kind: ModelKind,
    config: &FitConfig,
    seeds: &[u64],
) -> Result<SeedConsistencyReport, IrtError> {
    if seeds.len() < 2 {
        return Err(IrtError::TooFewSeeds(seeds.len()));
    }
    let fits: Vec<FittedModel> = seeds
        .iter()
        .map(|&seed| {
            fit(
                brm,
                kind,
                &FitConfig {
                    seed,
                    ..config.clone()
                },
            )
        })
        .collect::<Result<_, _>>()?;
    let spread = |f: &dyn Fn(&FittedModel) -> f64| {
        let vals: Vec<f64> = fits.iter().map(f).collect();
        let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
        hi - lo
    };
    let item_deviations: Vec<ParamDeviation> = (0..brm.n_items())
        .map(|i| ParamDeviation {
            id: brm.item_ids()[i].clone(),
            a: spread(&|m| m.items[i].discrimination),
            b: spread(&|m| m.items[i].difficulty),
            c: spread(&|m| m.items[i].guessing),
        })
        .collect();
    let max_ability_deviation = (0..brm.n_agents())
        .map(|j| spread(&|m| m.abilities[j].theta))
        .fold(0.0, f64::max);
    let max_deviation = item_deviations
        .iter()
        .flat_map(|d| [d.a, d.b, d.c])
        .chain(std::iter::once(max_ability_deviation))
        .fold(0.0, f64::max);
    let threshold = 10.0 * config.tolerance;
    Ok(SeedConsistencyReport {
        seeds: seeds.to_vec(),
        log_likelihoods: fits.iter().map(|f| f.convergence.log_likelihood).collect(),
        converged: fits.iter().map(|f| f.convergence.converged).collect(),
        item_deviations,
        max_ability_deviation,
        max_deviation,
        threshold,
        consistent: max_deviation <= threshold,
    })
}
