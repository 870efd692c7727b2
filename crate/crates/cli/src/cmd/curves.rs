use std::path::PathBuf;

use benchirt::dataio::MinShape;
use benchirt::indicators::{bernoulli_variance, empirical_acc, DifficultyBinning};
use benchirt::irt::icc_prob;
use benchirt::{FittedModel, ItemParams};
use clap::{Args, ValueEnum};
use serde::Serialize;

use super::analyze::{prepare, IndicatorScale};
use super::{load_model, model_binning, BinningArgs};
use crate::error::{CliError, Result};
use crate::output::{warn, OutDir};
use crate::pipeline::{self, InputArgs};

/// Points on each ICC.
pub const ICC_POINTS: usize = 201;
/// Ability padding on both sides of the selected difficulties.
pub const ICC_PADDING: f64 = 4.0;
const ENVELOPE_POINTS: usize = 101;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TopBy {
    /// Largest difficulty.
    Difficulty,
    /// Largest absolute discrimination.
    Discrimination,
}

#[derive(Debug, Clone, Args)]
pub struct CurvesArgs {
    /// Fitted model (`model.json` from `fit`).
    #[arg(long)]
    pub model: PathBuf,
    /// Keep only the k items ranking highest by this parameter. Without
    /// --negative-discrimination-only, only positive-discrimination items
    /// are ranked.
    #[arg(long, value_enum)]
    pub top_k: Option<TopBy>,
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    /// Restrict ICCs to negative-discrimination items.
    #[arg(long)]
    pub negative_discrimination_only: bool,
    /// Result matrix for empirical ACCs (omit to skip them).
    #[arg(long)]
    pub scores: Option<PathBuf>,
    #[command(flatten)]
    pub input_args: InputArgs,
    #[command(flatten)]
    pub binning: BinningArgs,
    /// Rebuild the difficulty binning instead of using the model's.
    #[arg(long)]
    pub rebin: bool,
    #[arg(long, value_enum, default_value_t = IndicatorScale::Binary)]
    pub indicator_scale: IndicatorScale,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveKind {
    Icc,
    AccTheoretical,
    AccEmpirical,
    VarianceEnvelope,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvePoint {
    pub x: f64,
    pub y: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ribbon: Option<f64>,
}

/// One plottable series; `x` strictly increases.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurveSeries {
    pub kind: CurveKind,
    pub subject: String,
    pub points: Vec<CurvePoint>,
}

#[derive(Serialize)]
struct FlatPoint<'a> {
    kind: CurveKind,
    subject: &'a str,
    x: f64,
    y: f64,
    ribbon: Option<f64>,
}

fn write_series(out: &OutDir, stem: &str, series: &[CurveSeries]) -> Result<()> {
    if series.is_empty() {
        warn(format!("no {stem} series to write"));
        return Ok(());
    }
    out.write_custom(stem, series, |f| {
        let mut w = csv::Writer::from_writer(f);
        for s in series {
            for p in &s.points {
                w.serialize(FlatPoint {
                    kind: s.kind,
                    subject: &s.subject,
                    x: p.x,
                    y: p.y,
                    ribbon: p.ribbon,
                })?;
            }
        }
        w.flush()?;
        Ok(())
    })?;
    Ok(())
}

/// Items whose ICCs are drawn, in output order.
pub fn select_items<'a>(
    items: &'a [ItemParams],
    top_k: Option<TopBy>,
    k: usize,
    negative_only: bool,
) -> Vec<&'a ItemParams> {
    let mut pool: Vec<&ItemParams> = items
        .iter()
        .filter(|p| {
            if negative_only {
                p.discrimination < 0.0
            } else {
                top_k.is_none() || p.discrimination > 0.0
            }
        })
        .collect();
    if let Some(by) = top_k {
        let key = |p: &ItemParams| match by {
            TopBy::Difficulty => p.difficulty,
            TopBy::Discrimination => p.discrimination.abs(),
        };
        pool.sort_by(|x, y| {
            key(y)
                .total_cmp(&key(x))
                .then_with(|| x.item_id.cmp(&y.item_id))
        });
        pool.truncate(k);
    }
    pool
}

/// `n` evenly spaced points from `lo` to `hi` inclusive.
pub fn grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|t| lo + (hi - lo) * t as f64 / (n - 1) as f64)
        .collect()
}

pub fn icc_series(items: &[&ItemParams]) -> Vec<CurveSeries> {
    let Some(lo) = items.iter().map(|p| p.difficulty).reduce(f64::min) else {
        return Vec::new();
    };
    let hi = items.iter().map(|p| p.difficulty).fold(lo, f64::max);
    let xs = grid(lo - ICC_PADDING, hi + ICC_PADDING, ICC_POINTS);
    items
        .iter()
        .map(|p| CurveSeries {
            kind: CurveKind::Icc,
            subject: p.item_id.clone(),
            points: xs
                .iter()
                .map(|&x| CurvePoint {
                    x,
                    y: icc_prob(x, p),
                    ribbon: None,
                })
                .collect(),
        })
        .collect()
}

/// Keeps the first point at each abscissa so `x` strictly increases.
fn strictly_increasing(points: Vec<CurvePoint>) -> Vec<CurvePoint> {
    let mut out: Vec<CurvePoint> = Vec::with_capacity(points.len());
    for p in points {
        if out.last().is_none_or(|q| p.x > q.x) {
            out.push(p);
        }
    }
    out
}

/// Model-implied ACC per calibrated agent: the mean ICC value of each
/// bin's items, with a ribbon of half the Bernoulli variance.
pub fn theoretical_accs(model: &FittedModel, binning: &DifficultyBinning) -> Vec<CurveSeries> {
    let bins: Vec<Vec<&ItemParams>> = (0..binning.n_bins())
        .map(|h| {
            binning
                .items_in(h)
                .into_iter()
                .filter_map(|id| model.item(id))
                .collect()
        })
        .collect();
    model
        .abilities
        .iter()
        .map(|a| CurveSeries {
            kind: CurveKind::AccTheoretical,
            subject: a.agent_id.clone(),
            points: strictly_increasing(
                bins.iter()
                    .enumerate()
                    .filter(|(_, items)| !items.is_empty())
                    .map(|(h, items)| {
                        let y = items.iter().map(|p| icc_prob(a.theta, p)).sum::<f64>()
                            / items.len() as f64;
                        CurvePoint {
                            x: binning.bin_mean_difficulty[h],
                            y,
                            ribbon: Some(bernoulli_variance(y) / 2.0),
                        }
                    })
                    .collect(),
            ),
        })
        .collect()
}

pub fn variance_envelope() -> CurveSeries {
    CurveSeries {
        kind: CurveKind::VarianceEnvelope,
        subject: "bernoulli".into(),
        points: grid(0.0, 1.0, ENVELOPE_POINTS)
            .into_iter()
            .map(|x| CurvePoint {
                x,
                y: bernoulli_variance(x),
                ribbon: None,
            })
            .collect(),
    }
}

pub fn run(args: &CurvesArgs, out: &OutDir) -> Result<()> {
    let model = load_model(&args.model)?;
    let selected = select_items(
        &model.items,
        args.top_k,
        args.k,
        args.negative_discrimination_only,
    );
    if selected.is_empty() {
        warn("item selection is empty; no ICC file written");
    } else {
        write_series(out, "icc", &icc_series(&selected))?;
    }
    let binning = model_binning(&model, &args.binning, args.rebin)?;
    write_series(out, "acc_theoretical", &theoretical_accs(&model, &binning))?;
    if let Some(path) = &args.scores {
        let loaded = pipeline::load(path, &args.input_args, MinShape::SCORING)?;
        let prep = prepare(
            &model,
            &loaded.normalized,
            &args.input_args,
            args.indicator_scale,
        )
        .map_err(|e: CliError| e.at(path))?;
        let series: Vec<CurveSeries> = prep
            .responses
            .agent_ids()
            .iter()
            .zip(&prep.scores)
            .map(|(id, s)| CurveSeries {
                kind: CurveKind::AccEmpirical,
                subject: id.clone(),
                points: strictly_increasing(
                    empirical_acc(s, &binning)
                        .iter()
                        .map(|p| CurvePoint {
                            x: p.mean_difficulty,
                            y: p.mean_score,
                            ribbon: Some(p.ribbon()),
                        })
                        .collect(),
                ),
            })
            .collect();
        write_series(out, "acc_empirical", &series)?;
    }
    write_series(out, "variance_envelope", &[variance_envelope()])?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn item(id: &str, a: f64, b: f64) -> ItemParams {
        ItemParams::two_pl(id, a, b).unwrap()
    }

    #[test]
    fn icc_passes_through_its_midpoint() {
        let p = ItemParams::new("x", 2.0, 3.0, 0.1).unwrap();
        let s = icc_series(&[&p]);
        assert_eq!(s[0].points.len(), ICC_POINTS);
        assert_eq!(s[0].points[0].x, -1.0);
        assert_eq!(s[0].points[200].x, 7.0);
        let mid = &s[0].points[100];
        assert_eq!(mid.x, 3.0);
        assert!((mid.y - 0.55).abs() < 1e-12);
        assert!(s[0]
            .points
            .windows(2)
            .all(|w| w[1].x > w[0].x && w[1].y >= w[0].y));
    }

    #[test]
    fn envelope_peaks_at_a_quarter() {
        let e = variance_envelope();
        assert_eq!(e.points[50].x, 0.5);
        assert_eq!(e.points[50].y, 0.25);
    }

    #[test]
    fn top_k_ranks_positive_items() {
        let items = vec![
            item("a", 1.0, 0.0),
            item("b", 1.0, 2.0),
            item("c", -1.0, 9.0),
            item("d", 0.5, 1.0),
            item("e", 2.0, -1.0),
        ];
        let ids = |v: Vec<&ItemParams>| v.iter().map(|p| p.item_id.clone()).collect::<Vec<_>>();
        assert_eq!(
            ids(select_items(&items, Some(TopBy::Difficulty), 3, false)),
            ["b", "d", "a"]
        );
        assert_eq!(
            ids(select_items(&items, Some(TopBy::Discrimination), 1, false)),
            ["e"]
        );
        assert_eq!(ids(select_items(&items, None, 3, true)), ["c"]);
        assert_eq!(select_items(&items, None, 3, false).len(), 5);
        assert!(select_items(&items[..1], Some(TopBy::Difficulty), 3, true).is_empty());
    }

    #[test]
    fn repeated_abscissae_are_dropped() {
        let p = |x: f64| CurvePoint {
            x,
            y: 0.5,
            ribbon: None,
        };
        let s = strictly_increasing(vec![p(0.0), p(0.0), p(1.0)]);
        assert_eq!(s.len(), 2);
    }
}
