use std::collections::BTreeSet;
use std::path::PathBuf;

use benchirt::dataio::MinShape;
use benchirt::indicators::agent_indicators;
use benchirt::irt::{estimate_abilities, AbilityConfig};
use benchirt::{AbilityEstimate, AgentIndicators};
use clap::Args;
use serde::Serialize;

use super::{load_model, model_binning, BinningArgs};
use crate::error::{CliError, Result};
use crate::output::OutDir;
use crate::pipeline::{self, InputArgs};

#[derive(Debug, Clone, Args)]
pub struct ScoreArgs {
    /// Frozen item bank (`model.json` from `fit`); never modified.
    #[arg(long)]
    pub bank: PathBuf,
    /// Responses of the agents to score; items must all be in the bank.
    #[arg(long)]
    pub responses: PathBuf,
    #[command(flatten)]
    pub input_args: InputArgs,
    /// Used only when the bank carries no stored binning.
    #[command(flatten)]
    pub binning: BinningArgs,
}

#[derive(Debug, Serialize)]
pub struct ScoredAgent {
    pub ability: AbilityEstimate,
    pub indicators: AgentIndicators,
}

pub fn run(args: &ScoreArgs, out: &OutDir) -> Result<()> {
    let bank = load_model(&args.bank)?;
    let loaded = pipeline::load(&args.responses, &args.input_args, MinShape::SCORING)?;
    let brm = pipeline::binarize(&loaded.normalized, &args.input_args)?;
    let known: BTreeSet<&str> = bank.items.iter().map(|p| p.item_id.as_str()).collect();
    let unknown: Vec<&str> = brm
        .item_ids()
        .iter()
        .map(String::as_str)
        .filter(|id| !known.contains(id))
        .collect();
    if !unknown.is_empty() {
        return Err(CliError::Mismatch(format!(
            "item ids not in the bank: {}",
            unknown.join(", ")
        ))
        .at(&args.responses));
    }
    let abilities = estimate_abilities(
        &brm,
        &bank.items,
        &AbilityConfig {
            quadrature_nodes: bank.quadrature_nodes,
            method: bank.config.ability_method,
        },
    )
    .map_err(|e| CliError::from(e).at(&args.responses))?;
    let binning = model_binning(&bank, &args.binning, false)?;
    let scored: Vec<ScoredAgent> = abilities
        .into_iter()
        .enumerate()
        .map(|(j, ability)| {
            let scores = brm
                .item_ids()
                .iter()
                .zip(&brm.rows()[j])
                .filter_map(|(id, y)| y.map(|y| (id.clone(), f64::from(y))))
                .collect();
            let indicators =
                agent_indicators(&ability.agent_id, &scores, &binning, Some(ability.theta))?;
            Ok(ScoredAgent {
                ability,
                indicators,
            })
        })
        .collect::<Result<_>>()?;
    out.write_json("scored_agents.json", &scored)?;
    Ok(())
}
