//! Marginal likelihood machinery shared by fitting, scoring and item fit.
//!
//! With abilities integrated over a standard normal prior on the quadrature
//! points `θ_k`, the marginal log-likelihood of a response matrix is
//! `Σ_j ln Σ_k π_k Π_i P_i(θ_k)^y_ji (1-P_i(θ_k))^(1-y_ji)`. Its gradient with
//! respect to one item's parameters equals the gradient of the expected
//! complete-data objective [`ItemObjective`] built from the posterior weights
//! at the current parameters.

use rayon::prelude::*;

use super::{log_sigmoid, sigmoid, IrtError, ItemParams, ModelKind, NormalQuadrature};
use crate::normalize::BinaryResponseMatrix;

/// Responses as a dense row-major `i8` grid (`-1` = missing).
#[derive(Debug, Clone)]
pub(crate) struct Dense {
    pub m: usize,
    pub n: usize,
    pub y: Vec<i8>,
}

impl Dense {
    pub fn from_brm(brm: &BinaryResponseMatrix) -> Self {
        let (m, n) = (brm.n_agents(), brm.n_items());
        let mut y = Vec::with_capacity(m * n);
        for row in brm.rows() {
            y.extend(row.iter().map(|c| c.map_or(-1, |v| v as i8)));
        }
        Self { m, n, y }
    }

    #[inline]
    pub fn row(&self, j: usize) -> &[i8] {
        &self.y[j * self.n..(j + 1) * self.n]
    }
}

/// Per item and quadrature point: `ln P` and `ln(1-P)`, item-major.
pub(crate) struct LogTables {
    pub k: usize,
    pub lp: Vec<f64>,
    pub lq: Vec<f64>,
}

impl LogTables {
    pub fn new(params: &[[f64; 3]], quad: &NormalQuadrature) -> Self {
        let k = quad.len();
        let mut lp = Vec::with_capacity(params.len() * k);
        let mut lq = Vec::with_capacity(params.len() * k);
        for &[a, b, c] in params {
            for &t in &quad.points {
                let z = a * (t - b);
                if c == 0.0 {
                    lp.push(log_sigmoid(z));
                    lq.push(log_sigmoid(-z));
                } else {
                    lp.push((c + (1.0 - c) * sigmoid(z)).ln());
                    lq.push((1.0 - c).ln() + log_sigmoid(-z));
                }
            }
        }
        Self { k, lp, lq }
    }
}

/// Posterior weights over the quadrature points for every agent, plus the
/// marginal log-likelihood.
pub(crate) struct Posterior {
    pub k: usize,
    pub weights: Vec<f64>,
    pub log_likelihood: f64,
}

impl Posterior {
    #[inline]
    pub fn row(&self, j: usize) -> &[f64] {
        &self.weights[j * self.k..(j + 1) * self.k]
    }
}

fn agent_posterior(row: &[i8], tables: &LogTables, quad: &NormalQuadrature) -> (Vec<f64>, f64) {
    let k = tables.k;
    let mut ll = quad.log_weights.clone();
    for (i, &y) in row.iter().enumerate() {
        let t = match y {
            1 => &tables.lp[i * k..(i + 1) * k],
            0 => &tables.lq[i * k..(i + 1) * k],
            _ => continue,
        };
        for (acc, v) in ll.iter_mut().zip(t) {
            *acc += v;
        }
    }
    let max = ll.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in ll.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in ll.iter_mut() {
        *v /= sum;
    }
    (ll, max + sum.ln())
}

/// E-step. Agents are processed in parallel; the log-likelihood is summed
/// in agent order so the result does not depend on the worker count.
pub(crate) fn posterior(dense: &Dense, params: &[[f64; 3]], quad: &NormalQuadrature) -> Posterior {
    let tables = LogTables::new(params, quad);
    let rows: Vec<(Vec<f64>, f64)> = (0..dense.m)
        .into_par_iter()
        .map(|j| agent_posterior(dense.row(j), &tables, quad))
        .collect();
    let k = quad.len();
    let mut weights = Vec::with_capacity(dense.m * k);
    let mut log_likelihood = 0.0;
    for (w, ll) in rows {
        weights.extend(w);
        log_likelihood += ll;
    }
    Posterior {
        k,
        weights,
        log_likelihood,
    }
}

/// Expected success and response counts per item and quadrature point.
pub(crate) fn expected_counts(dense: &Dense, post: &Posterior) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let k = post.k;
    let mut r = vec![vec![0.0; k]; dense.n];
    let mut n = vec![vec![0.0; k]; dense.n];
    for j in 0..dense.m {
        let w = post.row(j);
        for (i, &y) in dense.row(j).iter().enumerate() {
            if y < 0 {
                continue;
            }
            let (ri, ni) = (&mut r[i], &mut n[i]);
            for q in 0..k {
                ni[q] += w[q];
                if y == 1 {
                    ri[q] += w[q];
                }
            }
        }
    }
    (r, n)
}

pub(crate) fn params_of(items: &[ItemParams]) -> Vec<[f64; 3]> {
    items
        .iter()
        .map(|p| [p.discrimination, p.difficulty, p.guessing])
        .collect()
}

pub(crate) fn align_items<'a>(
    brm: &BinaryResponseMatrix,
    items: &'a [ItemParams],
) -> Result<Vec<&'a ItemParams>, IrtError> {
    let mut out = Vec::with_capacity(brm.n_items());
    let mut unknown = Vec::new();
    for id in brm.item_ids() {
        match items.iter().find(|p| &p.item_id == id) {
            Some(p) => out.push(p),
            None => unknown.push(id.clone()),
        }
    }
    if unknown.is_empty() {
        Ok(out)
    } else {
        Err(IrtError::UnknownItems(unknown))
    }
}

/// Expected complete-data log-likelihood of one item,
/// `Q(a,b[,c]) = Σ_k r_k ln P(θ_k) + (n_k - r_k) ln(1 - P(θ_k))`,
/// where `r_k` and `n_k` are posterior-expected successes and responses at
/// quadrature point `θ_k`. Parameters are `[a, b]` or `[a, b, c]`.
#[derive(Debug, Clone)]
pub struct ItemObjective<'a> {
    pub points: &'a [f64],
    pub successes: &'a [f64],
    pub responses: &'a [f64],
    pub kind: ModelKind,
}

impl<'a> ItemObjective<'a> {
    pub fn new(
        points: &'a [f64],
        successes: &'a [f64],
        responses: &'a [f64],
        kind: ModelKind,
    ) -> Self {
        assert_eq!(points.len(), successes.len());
        assert_eq!(points.len(), responses.len());
        Self {
            points,
            successes,
            responses,
            kind,
        }
    }

    pub fn dim(&self) -> usize {
        self.kind.n_params()
    }

    fn abc(&self, p: &[f64]) -> (f64, f64, f64) {
        match self.kind {
            ModelKind::TwoPL => (p[0], p[1], 0.0),
            ModelKind::ThreePL => (p[0], p[1], p[2]),
        }
    }

    pub fn value(&self, p: &[f64]) -> f64 {
        let (a, b, c) = self.abc(p);
        let mut q = 0.0;
        for ((&t, &r), &n) in self.points.iter().zip(self.successes).zip(self.responses) {
            let z = a * (t - b);
            let (lp, lq) = if c == 0.0 {
                (log_sigmoid(z), log_sigmoid(-z))
            } else {
                (
                    (c + (1.0 - c) * sigmoid(z)).ln(),
                    (1.0 - c).ln() + log_sigmoid(-z),
                )
            };
            if r > 0.0 {
                q += r * lp;
            }
            if n - r > 0.0 {
                q += (n - r) * lq;
            }
        }
        q
    }

    pub fn gradient(&self, p: &[f64]) -> Vec<f64> {
        let (a, b, c) = self.abc(p);
        let mut g = vec![0.0; self.dim()];
        for ((&t, &r), &n) in self.points.iter().zip(self.successes).zip(self.responses) {
            let s = sigmoid(a * (t - b));
            let prob = c + (1.0 - c) * s;
            // dQ/dz = (r - nP) σ / P, which reduces to r - nσ when c = 0.
            let dz = if c == 0.0 {
                r - n * s
            } else {
                (r - n * prob) * s / prob
            };
            g[0] += dz * (t - b);
            g[1] -= dz * a;
            if self.kind == ModelKind::ThreePL {
                g[2] += (r - n * prob) / (prob * (1.0 - c));
            }
        }
        g
    }

    /// Observed Hessian (2PL only).
    pub fn hessian(&self, p: &[f64]) -> Option<Vec<Vec<f64>>> {
        if self.kind != ModelKind::TwoPL {
            return None;
        }
        let (a, b) = (p[0], p[1]);
        let (mut haa, mut hab, mut hbb) = (0.0, 0.0, 0.0);
        for ((&t, &r), &n) in self.points.iter().zip(self.successes).zip(self.responses) {
            let s = sigmoid(a * (t - b));
            let w = n * s * (1.0 - s);
            let e = r - n * s;
            let d = t - b;
            haa -= w * d * d;
            hbb -= w * a * a;
            hab += w * a * d - e;
        }
        Some(vec![vec![haa, hab], vec![hab, hbb]])
    }

    /// Expected information (positive semi-definite).
    pub fn fisher(&self, p: &[f64]) -> Vec<Vec<f64>> {
        let (a, b, c) = self.abc(p);
        let dim = self.dim();
        let mut info = vec![vec![0.0; dim]; dim];
        for ((&t, &_r), &n) in self.points.iter().zip(self.successes).zip(self.responses) {
            let s = sigmoid(a * (t - b));
            let prob = c + (1.0 - c) * s;
            let izz = n * (1.0 - c) * s * s * (1.0 - s) / prob;
            let d = [t - b, -a];
            for u in 0..2 {
                for v in 0..2 {
                    info[u][v] += izz * d[u] * d[v];
                }
            }
            if dim == 3 {
                let izc = n * s * (1.0 - s) / prob;
                let icc_ = n * (1.0 - s) / (prob * (1.0 - c));
                for u in 0..2 {
                    info[u][2] += izc * d[u];
                    info[2][u] += izc * d[u];
                }
                info[2][2] += icc_;
            }
        }
        info
    }
}

/// The same objective in slope-intercept form, `z = a·θ + d` (so
/// `d = -a·b`). For the 2PL it is concave in `(a, d)`, and stays well
/// conditioned as `a → 0`, where `b` is unidentified.
#[derive(Debug, Clone)]
pub(crate) struct InterceptObjective<'a> {
    pub inner: ItemObjective<'a>,
}

impl InterceptObjective<'_> {
    fn adc(&self, p: &[f64]) -> (f64, f64, f64) {
        (p[0], p[1], if p.len() == 3 { p[2] } else { 0.0 })
    }

    pub fn value(&self, p: &[f64]) -> f64 {
        let (a, d, c) = self.adc(p);
        let o = &self.inner;
        let mut q = 0.0;
        for ((&t, &r), &n) in o.points.iter().zip(o.successes).zip(o.responses) {
            let z = a * t + d;
            let (lp, lq) = if c == 0.0 {
                (log_sigmoid(z), log_sigmoid(-z))
            } else {
                (
                    (c + (1.0 - c) * sigmoid(z)).ln(),
                    (1.0 - c).ln() + log_sigmoid(-z),
                )
            };
            if r > 0.0 {
                q += r * lp;
            }
            if n - r > 0.0 {
                q += (n - r) * lq;
            }
        }
        q
    }

    pub fn gradient(&self, p: &[f64]) -> Vec<f64> {
        let (a, d, c) = self.adc(p);
        let o = &self.inner;
        let mut g = vec![0.0; p.len()];
        for ((&t, &r), &n) in o.points.iter().zip(o.successes).zip(o.responses) {
            let s = sigmoid(a * t + d);
            let prob = c + (1.0 - c) * s;
            let dz = if c == 0.0 {
                r - n * s
            } else {
                (r - n * prob) * s / prob
            };
            g[0] += dz * t;
            g[1] += dz;
            if p.len() == 3 {
                g[2] += (r - n * prob) / (prob * (1.0 - c));
            }
        }
        g
    }

    /// Negative Hessian for the 2PL (exact); expected information for the
    /// 3PL. Either way positive semi-definite.
    pub fn curvature(&self, p: &[f64]) -> Vec<Vec<f64>> {
        let (a, d, c) = self.adc(p);
        let o = &self.inner;
        let dim = p.len();
        let mut info = vec![vec![0.0; dim]; dim];
        for (&t, &n) in o.points.iter().zip(o.responses) {
            let s = sigmoid(a * t + d);
            let prob = c + (1.0 - c) * s;
            let izz = n * (1.0 - c) * s * s * (1.0 - s) / prob;
            let x = [t, 1.0];
            for u in 0..2 {
                for v in 0..2 {
                    info[u][v] += izz * x[u] * x[v];
                }
            }
            if dim == 3 {
                let izc = n * s * (1.0 - s) / prob;
                for u in 0..2 {
                    info[u][2] += izc * x[u];
                    info[2][u] += izc * x[u];
                }
                info[2][2] += n * (1.0 - s) / (prob * (1.0 - c));
            }
        }
        info
    }
}

/// Marginal log-likelihood of `brm` under `items` (matched by item id).
pub fn marginal_log_likelihood(
    brm: &BinaryResponseMatrix,
    items: &[ItemParams],
    quad: &NormalQuadrature,
) -> Result<f64, IrtError> {
    let aligned = align_items(brm, items)?;
    let params: Vec<[f64; 3]> = aligned
        .iter()
        .map(|p| [p.discrimination, p.difficulty, p.guessing])
        .collect();
    Ok(posterior(&Dense::from_brm(brm), &params, quad).log_likelihood)
}

/// Analytic gradient of [`marginal_log_likelihood`] with respect to the
/// parameters of item `item` (`[a, b]` or `[a, b, c]`).
pub fn marginal_item_gradient(
    brm: &BinaryResponseMatrix,
    items: &[ItemParams],
    item: usize,
    kind: ModelKind,
    quad: &NormalQuadrature,
) -> Result<Vec<f64>, IrtError> {
    let aligned = align_items(brm, items)?;
    let params: Vec<[f64; 3]> = aligned
        .iter()
        .map(|p| [p.discrimination, p.difficulty, p.guessing])
        .collect();
    let dense = Dense::from_brm(brm);
    let post = posterior(&dense, &params, quad);
    let (r, n) = expected_counts(&dense, &post);
    let obj = ItemObjective::new(&quad.points, &r[item], &n[item], kind);
    let p = params[item];
    Ok(obj.gradient(&p[..kind.n_params()]))
}
