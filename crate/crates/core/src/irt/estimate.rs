//! Alternating estimation of item parameters and abilities.
//!
//! 1. Initial abilities: standardized proportion correct, perturbed by a
//!    seeded N(0, 0.25²) draw so that different seeds start from different
//!    points.
//! 2. Item step: per item, maximize the expected complete-data
//!    log-likelihood over the quadrature grid (Newton with step halving,
//!    bounded grid search if Newton breaks down).
//! 3. Ability step: posterior over the grid under the new items; EAP
//!    abilities.
//! 4. Repeat from 2 until no parameter or ability moves by more than the
//!    tolerance, or the iteration budget runs out.
//!
//! Each cycle is an EM step for the marginal likelihood, which therefore
//! never decreases from one cycle to the next.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use super::ability::{boundary_direction, eap, score_rows};
use super::itemfit::item_fit_with;
use super::objective::{expected_counts, posterior, Dense, InterceptObjective, ItemObjective};
use super::{
    AbilityEstimate, Convergence, FitConfig, FittedModel, IrtError, ItemParams, ModelKind,
    NormalQuadrature, ABILITY_CAP, GUESSING_MAX, PARAM_BOUND,
};
use crate::normalize::BinaryResponseMatrix;

const INIT_JITTER_SD: f64 = 0.25;
const INIT_KERNEL_SD: f64 = 0.5;
const NEWTON_ITERS: usize = 50;
const MAX_HALVINGS: usize = 20;
const GRID_POINTS: usize = 101;

/// Bound on the intercept `d = -a·b` used inside the item step.
const INTERCEPT_BOUND: f64 = PARAM_BOUND * PARAM_BOUND;

fn project(p: &mut [f64]) {
    p[0] = p[0].clamp(-PARAM_BOUND, PARAM_BOUND);
    p[1] = p[1].clamp(-INTERCEPT_BOUND, INTERCEPT_BOUND);
    if p.len() == 3 {
        p[2] = p[2].clamp(0.0, GUESSING_MAX);
    }
}

fn to_intercept(p: &[f64]) -> Vec<f64> {
    let mut q = p.to_vec();
    q[1] = -p[0] * p[1];
    q
}

fn from_intercept(q: &[f64]) -> Vec<f64> {
    let (a, d) = (q[0], q[1]);
    let b = if a != 0.0 {
        -d / a
    } else if d == 0.0 {
        0.0
    } else {
        -d.signum() * PARAM_BOUND
    };
    let mut p = q.to_vec();
    p[1] = b.clamp(-PARAM_BOUND, PARAM_BOUND);
    p
}

/// Solves `m x = g` for symmetric positive-definite `m` (Cholesky).
fn solve_spd(m: &[Vec<f64>], g: &[f64]) -> Option<Vec<f64>> {
    let n = g.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = m[i][j];
            for k in 0..j {
                s -= l[i][k] * l[j][k];
            }
            if i == j {
                if s <= 1e-12 * m[i][i].abs().max(1e-300) || !s.is_finite() {
                    return None;
                }
                l[i][i] = s.sqrt();
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    let mut y = vec![0.0; n];
    for i in 0..n {
        let s: f64 = (0..i).map(|k| l[i][k] * y[k]).sum();
        y[i] = (g[i] - s) / l[i][i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| l[k][i] * x[k]).sum();
        x[i] = (y[i] - s) / l[i][i];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

enum NewtonOutcome {
    Done(Vec<f64>),
    Failed,
}

fn solve_damped(m: &[Vec<f64>], g: &[f64]) -> Option<Vec<f64>> {
    solve_spd(m, g).or_else(|| {
        let scale = 1.0
            + m.iter()
                .enumerate()
                .map(|(i, r)| r[i].abs())
                .fold(0.0, f64::max);
        let mut damped = m.to_vec();
        for (i, r) in damped.iter_mut().enumerate() {
            r[i] += 1e-6 * scale;
        }
        solve_spd(&damped, g)
    })
}

/// Newton (2PL) or Fisher scoring (3PL) in intercept form with step
/// halving. A guessing parameter pinned at a bound by its gradient is held
/// fixed for that step.
fn newton(obj: &InterceptObjective<'_>, start: &[f64]) -> NewtonOutcome {
    let mut p = start.to_vec();
    project(&mut p);
    let mut f = obj.value(&p);
    if !f.is_finite() {
        return NewtonOutcome::Failed;
    }
    for _ in 0..NEWTON_ITERS {
        let g = obj.gradient(&p);
        if g.iter().any(|v| !v.is_finite()) {
            return NewtonOutcome::Failed;
        }
        let free: Vec<usize> = (0..p.len())
            .filter(|&u| {
                !(u == 2 && ((p[2] <= 0.0 && g[2] < 0.0) || (p[2] >= GUESSING_MAX && g[2] > 0.0)))
            })
            .collect();
        let gmax = free.iter().fold(0.0f64, |m, &u| m.max(g[u].abs()));
        if gmax <= 1e-9 * (1.0 + f.abs()) {
            break;
        }
        let info = obj.curvature(&p);
        let reduced: Vec<Vec<f64>> = free
            .iter()
            .map(|&u| free.iter().map(|&v| info[u][v]).collect())
            .collect();
        let gr: Vec<f64> = free.iter().map(|&u| g[u]).collect();
        let Some(step_free) = solve_damped(&reduced, &gr) else {
            return NewtonOutcome::Failed;
        };
        let mut dir = vec![0.0; p.len()];
        for (&u, d) in free.iter().zip(step_free) {
            dir[u] = d;
        }
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let mut trial: Vec<f64> = p.iter().zip(&dir).map(|(x, d)| x + step * d).collect();
            project(&mut trial);
            let ft = obj.value(&trial);
            if ft.is_finite() && ft > f {
                accepted = Some((trial, ft));
                break;
            }
            step *= 0.5;
        }
        match accepted {
            Some((trial, ft)) => {
                let moved = trial
                    .iter()
                    .zip(&p)
                    .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
                let gain = ft - f;
                p = trial;
                f = ft;
                if moved < 1e-12 || gain < 1e-15 * (1.0 + f.abs()) {
                    break;
                }
            }
            // No ascent along an ascent direction: numerically at the
            // (possibly box-constrained) optimum.
            None => break,
        }
    }
    NewtonOutcome::Done(p)
}

/// Exhaustive 101 x 101 search over `a ∈ [-10, 10]` and `b` spanning the
/// quadrature grid plus a margin of 2; `c` is kept from `start`.
fn grid_search(obj: &InterceptObjective<'_>, start: &[f64], points: &[f64]) -> Vec<f64> {
    let span_b = points.iter().fold(0.0f64, |m, t| m.max(t.abs())) + 2.0;
    let span_a = 10.0;
    let lin = |lo: f64, hi: f64, k: usize| lo + (hi - lo) * k as f64 / (GRID_POINTS - 1) as f64;
    let mut best = start.to_vec();
    project(&mut best);
    let mut best_f = obj.value(&best);
    if !best_f.is_finite() {
        best_f = f64::NEG_INFINITY;
    }
    for ka in 0..GRID_POINTS {
        for kb in 0..GRID_POINTS {
            let mut p = best.clone();
            let (a, b) = (lin(-span_a, span_a, ka), lin(-span_b, span_b, kb));
            p[0] = a;
            p[1] = -a * b;
            let f = obj.value(&p);
            if f.is_finite() && f > best_f {
                best_f = f;
                best = p;
            }
        }
    }
    best
}

/// Maximizes one item's objective from `start` (`[a, b]` or `[a, b, c]`);
/// the flag reports whether the grid fallback was needed.
fn maximize_item(obj: &ItemObjective<'_>, start: &[f64]) -> (Vec<f64>, bool) {
    let si = InterceptObjective { inner: obj.clone() };
    let q0 = to_intercept(start);
    let (q, fb) = match newton(&si, &q0) {
        NewtonOutcome::Done(q) => (q, false),
        NewtonOutcome::Failed => {
            let g = grid_search(&si, &q0, obj.points);
            match newton(&si, &g) {
                NewtonOutcome::Done(q) if si.value(&q) >= si.value(&g) => (q, true),
                _ => (g, true),
            }
        }
    };
    (from_intercept(&q), fb)
}

fn initial_abilities(dense: &Dense, seed: u64) -> Vec<f64> {
    let prop: Vec<f64> = (0..dense.m)
        .map(|j| {
            let row = dense.row(j);
            let obs = row.iter().filter(|&&y| y >= 0).count() as f64;
            let ok = row.iter().filter(|&&y| y == 1).count() as f64;
            ok / obs
        })
        .collect();
    let mean = prop.iter().sum::<f64>() / prop.len() as f64;
    let sd = (prop.iter().map(|p| (p - mean) * (p - mean)).sum::<f64>() / prop.len() as f64).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let jitter = Normal::new(0.0, INIT_JITTER_SD).expect("valid sd");
    prop.iter()
        .map(|p| {
            let z = if sd > 0.0 { (p - mean) / sd } else { 0.0 };
            z + jitter.sample(&mut rng)
        })
        .collect()
}

fn kernel_posterior(thetas: &[f64], quad: &NormalQuadrature) -> super::objective::Posterior {
    let k = quad.len();
    let mut weights = Vec::with_capacity(thetas.len() * k);
    for &t0 in thetas {
        let row: Vec<f64> = quad
            .points
            .iter()
            .zip(&quad.weights)
            .map(|(&t, &w)| {
                let z = (t - t0) / INIT_KERNEL_SD;
                w * (-0.5 * z * z).exp()
            })
            .collect();
        let s: f64 = row.iter().sum();
        if s > 0.0 {
            weights.extend(row.iter().map(|v| v / s));
        } else {
            weights.extend_from_slice(&quad.weights);
        }
    }
    super::objective::Posterior {
        k,
        weights,
        log_likelihood: f64::NAN,
    }
}

fn cycle_abilities(
    dense: &Dense,
    params: &[[f64; 3]],
    post: &super::objective::Posterior,
    quad: &NormalQuadrature,
) -> Vec<f64> {
    (0..dense.m)
        .map(|j| match boundary_direction(dense.row(j), params) {
            Some(dir) => dir * ABILITY_CAP,
            None => eap(post.row(j), quad).0,
        })
        .collect()
}

/// Fits a 2PL or 3PL model to a binary response matrix.
///
/// Constant items should be filtered out first; agents without any
/// observed response are rejected. Non-convergence within
/// `config.max_iters` is reported in [`Convergence`], not as an error.
pub fn fit(
    brm: &BinaryResponseMatrix,
    kind: ModelKind,
    config: &FitConfig,
) -> Result<FittedModel, IrtError> {
    config.validate()?;
    let (m, n) = (brm.n_agents(), brm.n_items());
    if m < 2 || n < 2 {
        return Err(IrtError::TooSmall {
            agents: m,
            items: n,
        });
    }
    let dense = Dense::from_brm(brm);
    for j in 0..m {
        if dense.row(j).iter().all(|&y| y < 0) {
            return Err(IrtError::NoResponses(brm.agent_ids()[j].clone()));
        }
    }
    let mut warnings = Vec::new();
    if m < 10 || n < 5 {
        warnings.push(format!(
            "{m} agents x {n} items is below the recommended 10 x 5; estimates may be unstable"
        ));
    }
    let constant = brm.constant_items();
    if !constant.is_empty() {
        warnings.push(format!(
            "{} constant item(s) were not filtered: {:?}",
            constant.len(),
            constant
                .iter()
                .map(|&i| &brm.item_ids()[i])
                .collect::<Vec<_>>()
        ));
    }

    let quad = NormalQuadrature::new(config.quadrature_nodes)?;
    let dim = kind.n_params();
    let init_c = if kind == ModelKind::ThreePL { 0.1 } else { 0.0 };
    let mut params: Vec<[f64; 3]> = vec![[1.0, 0.0, init_c]; n];
    let mut thetas = initial_abilities(&dense, config.seed);
    let mut post = kernel_posterior(&thetas, &quad);
    let mut fallback = vec![false; n];
    let mut trace = Vec::new();
    let mut delta = f64::INFINITY;
    let mut iterations = 0;
    let mut converged = false;

    while iterations < config.max_iters {
        iterations += 1;
        let (r, nn) = expected_counts(&dense, &post);
        let updated: Vec<([f64; 3], bool)> = (0..n)
            .into_par_iter()
            .map(|i| {
                let obj = ItemObjective::new(&quad.points, &r[i], &nn[i], kind);
                let (p, fb) = maximize_item(&obj, &params[i][..dim]);
                let mut out = [p[0], p[1], 0.0];
                if dim == 3 {
                    out[2] = p[2];
                }
                (out, fb)
            })
            .collect();
        let new_params: Vec<[f64; 3]> = updated.iter().map(|u| u.0).collect();
        for (f, u) in fallback.iter_mut().zip(&updated) {
            *f = u.1;
        }
        post = posterior(&dense, &new_params, &quad);
        trace.push(post.log_likelihood);
        let new_thetas = cycle_abilities(&dense, &new_params, &post, &quad);

        delta = new_params
            .iter()
            .zip(&params)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
            .chain(new_thetas.iter().zip(&thetas).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max);
        params = new_params;
        thetas = new_thetas;
        if delta <= config.tolerance {
            converged = true;
            break;
        }
    }

    let mut items: Vec<ItemParams> = brm
        .item_ids()
        .iter()
        .zip(&params)
        .zip(&fallback)
        .map(|((id, &[a, b, c]), &fb)| {
            let mut p = ItemParams::from_parts(id.clone(), a, b, c);
            p.fallback = fb;
            p
        })
        .collect();
    let abilities: Vec<AbilityEstimate> = score_rows(&dense, &params, &quad, config.ability_method)
        .into_iter()
        .enumerate()
        .map(|(j, (theta, se, boundary))| AbilityEstimate {
            agent_id: brm.agent_ids()[j].clone(),
            theta,
            standard_error: se,
            boundary,
            n_responses: dense.row(j).iter().filter(|&&y| y >= 0).count(),
        })
        .collect();
    let fits = item_fit_with(&dense, &items, &quad, kind);
    for (p, f) in items.iter_mut().zip(fits) {
        p.fit_stat = f;
    }
    if fallback.iter().any(|&f| f) {
        warnings.push(format!(
            "{} item(s) needed the grid-search fallback",
            fallback.iter().filter(|&&f| f).count()
        ));
    }

    Ok(FittedModel {
        model_kind: kind,
        config: config.clone(),
        items,
        abilities,
        convergence: Convergence {
            iterations,
            max_param_delta: delta,
            log_likelihood: post.log_likelihood,
            converged,
            trace,
        },
        quadrature_nodes: config.quadrature_nodes,
        seed: config.seed,
        binning: None,
        warnings,
    })
}
