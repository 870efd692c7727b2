//! Agent-side indicators: mean score, variance, regularity, generality and
//! empirical agent characteristic curves (ACCs).
//!
//! Regularity is the inverse of the population variance of an agent's
//! scores and ignores difficulty. Generality bins items by fitted difficulty
//! and inverts the *sum of within-bin variances*: an agent that is perfect
//! up to some difficulty and hopeless beyond it has zero variance in every
//! bin, and unbounded generality.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::irt::{icc, FittedModel};
use crate::stats;

#[derive(Debug, Error)]
pub enum IndicatorError {
    #[error("no scores given")]
    Empty,
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error("need at least {need} {what}, got {got}")]
    TooFew {
        what: &'static str,
        need: usize,
        got: usize,
    },
    #[error("agents are scored on different item sets; differing items: {0:?}")]
    MismatchedItems(Vec<String>),
    #[error("no binned item has a score for this agent")]
    NoScoredBins,
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// A non-negative indicator that may be unbounded (division by a zero
/// variance). Serialized as a number or the string `"unbounded"`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Indicator {
    Finite(f64),
    Unbounded,
}

impl Indicator {
    /// `1 / x`, unbounded at exactly zero.
    pub fn inverse_of(x: f64) -> Self {
        if x == 0.0 {
            Indicator::Unbounded
        } else {
            Indicator::Finite(1.0 / x)
        }
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            Indicator::Finite(v) => Some(v),
            Indicator::Unbounded => None,
        }
    }

    pub fn is_unbounded(self) -> bool {
        self == Indicator::Unbounded
    }
}

impl std::fmt::Display for Indicator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Indicator::Finite(v) => write!(f, "{v}"),
            Indicator::Unbounded => f.write_str("unbounded"),
        }
    }
}

impl Serialize for Indicator {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Indicator::Finite(v) => s.serialize_f64(*v),
            Indicator::Unbounded => s.serialize_str("unbounded"),
        }
    }
}

impl<'de> Deserialize<'de> for Indicator {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Str(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(Indicator::Finite(v)),
            Repr::Str(s) if s == "unbounded" => Ok(Indicator::Unbounded),
            Repr::Str(s) => Err(serde::de::Error::custom(format!(
                "expected number or \"unbounded\", got {s:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceSummary {
    pub mean: f64,
    pub variance: f64,
    pub regularity: Indicator,
}

/// Mean, population variance and regularity (inverse variance).
pub fn variance_and_regularity(scores: &[f64]) -> Result<VarianceSummary, IndicatorError> {
    let mean = stats::mean(scores).ok_or(IndicatorError::Empty)?;
    let variance = stats::population_variance(scores).ok_or(IndicatorError::Empty)?;
    Ok(VarianceSummary {
        mean,
        variance,
        regularity: Indicator::inverse_of(variance),
    })
}

/// Variance of a Bernoulli variable with the given mean: the largest
/// variance any [0,1]-valued score distribution with that mean can have.
pub fn bernoulli_variance(mean: f64) -> f64 {
    mean * (1.0 - mean)
}

/// Equal-frequency bins over item difficulty, shared by all agents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DifficultyBinning {
    /// `bins + 1` ascending edges: the extreme difficulties and the
    /// midpoints between neighbouring bins.
    pub bin_edges: Vec<f64>,
    pub bin_assignment: BTreeMap<String, usize>,
    pub bin_counts: Vec<usize>,
    pub bin_mean_difficulty: Vec<f64>,
    pub min_bins: usize,
    pub min_per_bin: usize,
    /// Items left out of the binning (e.g. negative discrimination).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub excluded: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl DifficultyBinning {
    pub fn n_bins(&self) -> usize {
        self.bin_counts.len()
    }

    pub fn bin_of(&self, item_id: &str) -> Option<usize> {
        self.bin_assignment.get(item_id).copied()
    }

    pub fn items_in(&self, bin: usize) -> Vec<&str> {
        self.bin_assignment
            .iter()
            .filter(|(_, &h)| h == bin)
            .map(|(id, _)| id.as_str())
            .collect()
    }
}

/// Number of equal-frequency bins for `n` items: `max(min_bins, n /
/// min_per_bin)`, lowered until every bin holds at least `min_per_bin`
/// items, never below one.
pub fn bin_count(n: usize, min_bins: usize, min_per_bin: usize) -> usize {
    let mut k = min_bins.max(n / min_per_bin.max(1)).max(1);
    while k > 1 && n / k < min_per_bin {
        k -= 1;
    }
    k
}

/// Equal-frequency binning on difficulty rank (ties broken by item id).
/// When `n % bins != 0` the lowest-difficulty bins take one extra item.
pub fn make_bins(
    items: &[(String, f64)],
    min_bins: usize,
    min_per_bin: usize,
) -> Result<DifficultyBinning, IndicatorError> {
    if items.is_empty() {
        return Err(IndicatorError::Empty);
    }
    if min_bins == 0 {
        return Err(IndicatorError::Invalid(
            "min_bins must be at least 1".into(),
        ));
    }
    if let Some((id, _)) = items.iter().find(|(_, d)| !d.is_finite()) {
        return Err(IndicatorError::Invalid(format!(
            "difficulty of `{id}` is not finite"
        )));
    }
    let mut sorted: Vec<&(String, f64)> = items.iter().collect();
    sorted.sort_by(|x, y| x.1.total_cmp(&y.1).then_with(|| x.0.cmp(&y.0)));
    let n = sorted.len();
    let k = bin_count(n, min_bins, min_per_bin);
    let mut warnings = Vec::new();
    if k < min_bins {
        warnings.push(format!(
            "{n} items cannot fill {min_bins} bins of {min_per_bin}; using {k} bin(s)"
        ));
    }
    let (q, rem) = (n / k, n % k);
    let mut bin_assignment = BTreeMap::new();
    let mut bin_counts = Vec::with_capacity(k);
    let mut bin_mean_difficulty = Vec::with_capacity(k);
    let mut bin_edges = vec![sorted[0].1];
    let mut start = 0;
    for h in 0..k {
        let size = q + usize::from(h < rem);
        let chunk = &sorted[start..start + size];
        for (id, _) in chunk.iter().map(|x| (&x.0, x.1)) {
            bin_assignment.insert(id.clone(), h);
        }
        bin_counts.push(size);
        bin_mean_difficulty.push(chunk.iter().map(|x| x.1).sum::<f64>() / size as f64);
        start += size;
        if h + 1 < k {
            bin_edges.push(0.5 * (chunk[size - 1].1 + sorted[start].1));
        }
    }
    bin_edges.push(sorted[n - 1].1);
    Ok(DifficultyBinning {
        bin_edges,
        bin_assignment,
        bin_counts,
        bin_mean_difficulty,
        min_bins,
        min_per_bin,
        excluded: Vec::new(),
        warnings,
    })
}

/// Bins a fitted model's items by difficulty. Negative-discrimination items
/// are excluded unless `keep_abstruse` is set.
pub fn binning_from_model(
    model: &FittedModel,
    min_bins: usize,
    min_per_bin: usize,
    keep_abstruse: bool,
) -> Result<DifficultyBinning, IndicatorError> {
    let (kept, excluded): (Vec<_>, Vec<_>) = model
        .items
        .iter()
        .partition(|p| keep_abstruse || !p.flagged_abstruse);
    let pairs: Vec<(String, f64)> = kept
        .iter()
        .map(|p| (p.item_id.clone(), p.difficulty))
        .collect();
    let mut b = make_bins(&pairs, min_bins, min_per_bin)?;
    b.excluded = excluded.iter().map(|p| p.item_id.clone()).collect();
    Ok(b)
}

fn scores_by_bin(
    agent_scores: &BTreeMap<String, f64>,
    binning: &DifficultyBinning,
) -> Vec<Vec<f64>> {
    let mut bins = vec![Vec::new(); binning.n_bins()];
    for (id, &h) in &binning.bin_assignment {
        if let Some(&s) = agent_scores.get(id) {
            bins[h].push(s);
        }
    }
    bins
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generality {
    pub value: Indicator,
    /// Bins in which the agent has no scored item.
    pub skipped_bins: Vec<usize>,
}

/// `1 / Σ_h σ_h²` with `σ_h²` the population variance of the agent's scores
/// within difficulty bin `h`. Items absent from the binning are ignored.
pub fn generality(
    agent_scores: &BTreeMap<String, f64>,
    binning: &DifficultyBinning,
) -> Result<Generality, IndicatorError> {
    let mut total = 0.0;
    let mut skipped_bins = Vec::new();
    for (h, scores) in scores_by_bin(agent_scores, binning).iter().enumerate() {
        match stats::population_variance(scores) {
            Some(v) => total += v,
            None => skipped_bins.push(h),
        }
    }
    if skipped_bins.len() == binning.n_bins() {
        return Err(IndicatorError::NoScoredBins);
    }
    Ok(Generality {
        value: Indicator::inverse_of(total),
        skipped_bins,
    })
}

/// Generality implied by a logistic ACC: with success probability
/// `σ(a_h(θ - h))` at bin difficulty `h`, each bin contributes the Bernoulli
/// variance `e^{-z}/(1+e^{-z})²`, `z = a_h(θ - h)`.
pub fn theoretical_generality(
    theta: f64,
    bin_difficulties: &[f64],
    bin_discriminations: &[f64],
) -> Result<Indicator, IndicatorError> {
    if bin_difficulties.len() != bin_discriminations.len() {
        return Err(IndicatorError::Invalid(format!(
            "{} difficulties but {} discriminations",
            bin_difficulties.len(),
            bin_discriminations.len()
        )));
    }
    let total: f64 = bin_difficulties
        .iter()
        .zip(bin_discriminations)
        .map(|(&h, &a)| {
            // symmetric in z; e^{-|z|} never overflows
            let e = (-(a * (theta - h)).abs()).exp();
            e / ((1.0 + e) * (1.0 + e))
        })
        .sum();
    Ok(Indicator::inverse_of(total))
}

/// One point of an empirical ACC.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccPoint {
    pub bin: usize,
    pub mean_difficulty: f64,
    pub mean_score: f64,
    pub variance: f64,
    pub n_items: usize,
}

impl AccPoint {
    /// Half-width of the ±σ²/2 ribbon.
    pub fn ribbon(&self) -> f64 {
        self.variance / 2.0
    }
}

/// Mean score and within-bin variance per non-empty bin, by increasing
/// difficulty.
pub fn empirical_acc(
    agent_scores: &BTreeMap<String, f64>,
    binning: &DifficultyBinning,
) -> Vec<AccPoint> {
    scores_by_bin(agent_scores, binning)
        .iter()
        .enumerate()
        .filter(|(_, s)| !s.is_empty())
        .map(|(h, s)| AccPoint {
            bin: h,
            mean_difficulty: binning.bin_mean_difficulty[h],
            mean_score: stats::mean(s).unwrap_or(0.0),
            variance: stats::population_variance(s).unwrap_or(0.0),
            n_items: s.len(),
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccSlope {
    pub slope: f64,
    /// No adjacent pair of points brackets 0.5; `slope` is the least-squares
    /// slope through all points.
    pub extrapolated: bool,
    /// Indices (into the point list) of the bracketing pair.
    pub bracket: Option<(usize, usize)>,
}

/// Slope of the empirical ACC where it crosses mean score 0.5: the line
/// through the first adjacent pair of points (by difficulty) whose mean
/// scores bracket 0.5. General agents have steep negative slopes.
pub fn acc_slope_at_half(acc: &[AccPoint]) -> Result<AccSlope, IndicatorError> {
    if acc.len() < 2 {
        return Err(IndicatorError::TooFew {
            what: "ACC points",
            need: 2,
            got: acc.len(),
        });
    }
    for (k, w) in acc.windows(2).enumerate() {
        let (p, q) = (&w[0], &w[1]);
        let lo = p.mean_score.min(q.mean_score);
        let hi = p.mean_score.max(q.mean_score);
        let dx = q.mean_difficulty - p.mean_difficulty;
        if lo <= 0.5 && 0.5 <= hi && dx != 0.0 {
            return Ok(AccSlope {
                slope: (q.mean_score - p.mean_score) / dx,
                extrapolated: false,
                bracket: Some((k, k + 1)),
            });
        }
    }
    let x: Vec<f64> = acc.iter().map(|p| p.mean_difficulty).collect();
    let y: Vec<f64> = acc.iter().map(|p| p.mean_score).collect();
    let slope = stats::ols_slope(&x, &y)
        .ok_or_else(|| IndicatorError::Invalid("ACC points share one difficulty".into()))?;
    Ok(AccSlope {
        slope,
        extrapolated: true,
        bracket: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dominance {
    Dominates,
    Dominated,
    Incomparable,
}

/// `a` dominates `b` when it scores at least as well on every item and
/// strictly better on at least one.
pub fn dominance(
    a: &BTreeMap<String, f64>,
    b: &BTreeMap<String, f64>,
) -> Result<Dominance, IndicatorError> {
    let mut differing: Vec<String> = a.keys().filter(|k| !b.contains_key(*k)).cloned().collect();
    differing.extend(b.keys().filter(|k| !a.contains_key(*k)).cloned());
    if !differing.is_empty() {
        return Err(IndicatorError::MismatchedItems(differing));
    }
    let (mut better, mut worse) = (false, false);
    for (k, &x) in a {
        let y = b[k];
        better |= x > y;
        worse |= x < y;
    }
    Ok(match (better, worse) {
        (true, false) => Dominance::Dominates,
        (false, true) => Dominance::Dominated,
        _ => Dominance::Incomparable,
    })
}

/// All agent-side indicators for one agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentIndicators {
    pub agent_id: String,
    pub n_items: usize,
    pub mean_score: f64,
    pub variance: f64,
    pub regularity: Indicator,
    pub generality: Indicator,
    pub acc_slope: Option<f64>,
    #[serde(default)]
    pub acc_slope_extrapolated: bool,
    pub theta: Option<f64>,
}

pub fn agent_indicators(
    agent_id: &str,
    scores: &BTreeMap<String, f64>,
    binning: &DifficultyBinning,
    theta: Option<f64>,
) -> Result<AgentIndicators, IndicatorError> {
    let values: Vec<f64> = scores.values().copied().collect();
    let summary = variance_and_regularity(&values)?;
    let gen = generality(scores, binning)?;
    let slope = acc_slope_at_half(&empirical_acc(scores, binning)).ok();
    Ok(AgentIndicators {
        agent_id: agent_id.to_string(),
        n_items: values.len(),
        mean_score: summary.mean,
        variance: summary.variance,
        regularity: summary.regularity,
        generality: gen.value,
        acc_slope: slope.map(|s| s.slope),
        acc_slope_extrapolated: slope.is_some_and(|s| s.extrapolated),
        theta,
    })
}

/// Pairwise Pearson correlations between labelled columns. Entries are
/// `None` where fewer than two complete pairs exist or a side is constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    pub labels: Vec<String>,
    pub values: Vec<Vec<Option<f64>>>,
    /// Number of agents used for each entry (rows with a missing or
    /// unbounded value on either side are dropped pairwise).
    pub pair_counts: Vec<Vec<usize>>,
}

impl CorrelationMatrix {
    pub fn get(&self, a: &str, b: &str) -> Option<f64> {
        let i = self.labels.iter().position(|l| l == a)?;
        let j = self.labels.iter().position(|l| l == b)?;
        self.values[i][j]
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), IndicatorError> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec![String::new()];
        header.extend(self.labels.iter().cloned());
        out.write_record(&header)?;
        for (i, l) in self.labels.iter().enumerate() {
            let mut rec = vec![l.clone()];
            rec.extend(
                self.values[i]
                    .iter()
                    .map(|v| v.map_or_else(|| "undefined".to_string(), |x| x.to_string())),
            );
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }
}

pub fn correlation_matrix(labels: Vec<String>, columns: &[Vec<Option<f64>>]) -> CorrelationMatrix {
    let k = columns.len();
    let mut values = vec![vec![None; k]; k];
    let mut pair_counts = vec![vec![0; k]; k];
    for i in 0..k {
        for j in i..k {
            let (x, y): (Vec<f64>, Vec<f64>) = columns[i]
                .iter()
                .zip(&columns[j])
                .filter_map(|(a, b)| Some(((*a)?, (*b)?)))
                .unzip();
            let r = stats::pearson(&x, &y);
            values[i][j] = r;
            values[j][i] = r;
            pair_counts[i][j] = x.len();
            pair_counts[j][i] = x.len();
        }
    }
    CorrelationMatrix {
        labels,
        values,
        pair_counts,
    }
}

pub const CORRELATION_LABELS: [&str; 4] = ["ability", "regularity", "generality", "mean_score"];

/// Correlations among ability, regularity, generality and mean score.
pub fn indicator_correlations(
    all: &[AgentIndicators],
) -> Result<CorrelationMatrix, IndicatorError> {
    if all.len() < 3 {
        return Err(IndicatorError::TooFew {
            what: "agents",
            need: 3,
            got: all.len(),
        });
    }
    let columns = vec![
        all.iter().map(|a| a.theta).collect(),
        all.iter().map(|a| a.regularity.finite()).collect(),
        all.iter().map(|a| a.generality.finite()).collect(),
        all.iter().map(|a| Some(a.mean_score)).collect(),
    ];
    Ok(correlation_matrix(
        CORRELATION_LABELS.iter().map(|s| s.to_string()).collect(),
        &columns,
    ))
}

pub fn write_indicators_csv<W: Write>(
    rows: &[AgentIndicators],
    w: W,
) -> Result<(), IndicatorError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "agent",
        "n_items",
        "mean_score",
        "variance",
        "regularity",
        "generality",
        "acc_slope",
        "acc_slope_extrapolated",
        "theta",
    ])?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in rows {
        out.write_record([
            r.agent_id.clone(),
            r.n_items.to_string(),
            r.mean_score.to_string(),
            r.variance.to_string(),
            r.regularity.to_string(),
            r.generality.to_string(),
            opt(r.acc_slope),
            r.acc_slope_extrapolated.to_string(),
            opt(r.theta),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Expected-response generality: `1 / Σ_h p_h(1-p_h)` with
/// `p_h = P(success | θ, a_h, b = h)`. Independent of
/// [`theoretical_generality`]'s closed form; used to cross-check it.
pub fn expected_response_generality(
    theta: f64,
    bin_difficulties: &[f64],
    bin_discriminations: &[f64],
) -> Indicator {
    let total: f64 = bin_difficulties
        .iter()
        .zip(bin_discriminations)
        .map(|(&h, &a)| bernoulli_variance(icc(theta, a, h, 0.0)))
        .sum();
    Indicator::inverse_of(total)
}
