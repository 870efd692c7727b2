use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use benchirt::dataio::MinShape;
use benchirt::indicators::{
    agent_indicators, dominance, indicator_correlations, write_indicators_csv, Dominance,
};
use benchirt::irt::{estimate_abilities, AbilityConfig};
use benchirt::{AgentIndicators, BinaryResponseMatrix, FittedModel, NormalizedMatrix};
use clap::{Args, ValueEnum};
use serde::Serialize;

use super::{load_model, model_binning, BinningArgs};
use crate::error::{CliError, Result};
use crate::output::{warn, OutDir};
use crate::pipeline::{self, InputArgs};

/// Which scores the agent indicators are computed from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum IndicatorScale {
    /// The binarized successes the model was fitted on.
    Binary,
    /// The normalized scores before binarization.
    Normalized,
}

#[derive(Debug, Clone, Args)]
pub struct AnalyzeArgs {
    /// Fitted model (`model.json` from `fit`).
    #[arg(long)]
    pub model: PathBuf,
    /// Result matrix of the agents to analyze.
    #[arg(long)]
    pub scores: PathBuf,
    #[command(flatten)]
    pub input_args: InputArgs,
    #[command(flatten)]
    pub binning: BinningArgs,
    #[arg(long, value_enum, default_value_t = IndicatorScale::Binary)]
    pub indicator_scale: IndicatorScale,
}

#[derive(Debug, Serialize)]
struct DominanceRow<'a> {
    agent_a: &'a str,
    agent_b: &'a str,
    relation: Dominance,
    shared_items: usize,
}

/// Agents' responses restricted to the model's items, plus the score
/// maps the indicators are computed from.
pub struct Prepared {
    pub responses: BinaryResponseMatrix,
    pub scores: Vec<BTreeMap<String, f64>>,
    /// Score-file items the model does not know (ignored).
    pub extra_items: Vec<String>,
}

/// Aligns a score file with a model. Every model item must be present in
/// the scores; score items unknown to the model are dropped.
pub fn prepare(
    model: &FittedModel,
    nm: &NormalizedMatrix,
    input: &InputArgs,
    scale: IndicatorScale,
) -> Result<Prepared> {
    let bank: BTreeSet<&str> = model.items.iter().map(|p| p.item_id.as_str()).collect();
    let present: BTreeSet<&str> = nm.item_ids().iter().map(String::as_str).collect();
    let missing: Vec<&str> = bank.difference(&present).copied().collect();
    if !missing.is_empty() {
        return Err(CliError::Mismatch(format!(
            "model items missing from the scores: {}",
            missing.join(", ")
        )));
    }
    let extra_items: Vec<String> = present.difference(&bank).map(|s| s.to_string()).collect();
    let keep: Vec<String> = bank.iter().map(|s| s.to_string()).collect();
    let responses = pipeline::binarize(nm, input)?.retain_items(&keep)?;
    let scores = (0..nm.n_agents())
        .map(|j| match scale {
            IndicatorScale::Binary => responses
                .item_ids()
                .iter()
                .zip(&responses.rows()[j])
                .filter_map(|(id, y)| y.map(|y| (id.clone(), f64::from(y))))
                .collect(),
            IndicatorScale::Normalized => {
                let mut s = nm.agent_scores(j);
                s.retain(|id, _| bank.contains(id.as_str()));
                s
            }
        })
        .collect();
    Ok(Prepared {
        responses,
        scores,
        extra_items,
    })
}

pub fn run(args: &AnalyzeArgs, out: &OutDir) -> Result<()> {
    let model = load_model(&args.model)?;
    let loaded = pipeline::load(&args.scores, &args.input_args, MinShape::SCORING)?;
    let prep = prepare(
        &model,
        &loaded.normalized,
        &args.input_args,
        args.indicator_scale,
    )
    .map_err(|e| e.at(&args.scores))?;
    if !prep.extra_items.is_empty() {
        warn(format!(
            "ignoring {} item(s) not in the model: {}",
            prep.extra_items.len(),
            prep.extra_items.join(", ")
        ));
    }
    let binning = model_binning(&model, &args.binning, true)?;
    for w in &binning.warnings {
        warn(w);
    }
    let abilities = estimate_abilities(
        &prep.responses,
        &model.items,
        &AbilityConfig {
            quadrature_nodes: model.quadrature_nodes,
            method: model.config.ability_method,
        },
    )?;
    let rows: Vec<AgentIndicators> = abilities
        .iter()
        .zip(&prep.scores)
        .map(|(a, s)| agent_indicators(&a.agent_id, s, &binning, Some(a.theta)))
        .collect::<std::result::Result<_, _>>()?;

    out.write_json("binning.json", &binning)?;
    out.write_custom("indicators", &rows, |f| Ok(write_indicators_csv(&rows, f)?))?;
    match indicator_correlations(&rows) {
        Ok(cm) => {
            out.write_custom("correlations", &cm, |f| Ok(cm.write_csv(f)?))?;
        }
        Err(e) => warn(format!("no correlations: {e}")),
    }
    let general: Vec<usize> = (0..rows.len())
        .filter(|&j| rows[j].generality.is_unbounded())
        .collect();
    let mut pairs = Vec::new();
    for (k, &x) in general.iter().enumerate() {
        for &y in &general[k + 1..] {
            let (sa, sb) = (&prep.scores[x], &prep.scores[y]);
            let a: BTreeMap<String, f64> = sa
                .iter()
                .filter(|(id, _)| sb.contains_key(*id))
                .map(|(id, v)| (id.clone(), *v))
                .collect();
            let b: BTreeMap<String, f64> = sb
                .iter()
                .filter(|(id, _)| sa.contains_key(*id))
                .map(|(id, v)| (id.clone(), *v))
                .collect();
            pairs.push(DominanceRow {
                agent_a: &rows[x].agent_id,
                agent_b: &rows[y].agent_id,
                relation: dominance(&a, &b)?,
                shared_items: a.len(),
            });
        }
    }
    out.write_table(
        "dominance",
        &["agent_a", "agent_b", "relation", "shared_items"],
        &pairs,
    )?;
    Ok(())
}
