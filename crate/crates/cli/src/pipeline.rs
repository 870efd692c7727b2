//! Loading, curation and scaling shared by the subcommands.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use benchirt::dataio::{self, DedupeRule, MinShape};
use benchirt::normalize;
use benchirt::{
    BinarizePolicy, BinaryResponseMatrix, FilterReport, Layout, NormalizedMatrix, ResultMatrix,
};
use clap::{Args, ValueEnum};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Normalize {
    /// Scores are already in [0, 1].
    Identity,
    /// Per-item population z-score mapped through the normal CDF.
    ZscoreErf,
    /// `(v - random) / (target - random)` per item; needs --random-ref and --target-ref.
    Reference,
    /// Input is `agent,item,win` trials, averaged into win rates.
    Winrate,
}

impl Normalize {
    /// Binarization used when `--binarize` is not given.
    pub fn default_policy(self) -> BinarizePolicy {
        match self {
            Normalize::Identity | Normalize::ZscoreErf => {
                BinarizePolicy::AtOrAbove { threshold: 0.5 }
            }
            Normalize::Reference => BinarizePolicy::AtOrAbove { threshold: 1.0 },
            Normalize::Winrate => BinarizePolicy::MajorityWins,
        }
    }
}

pub fn parse_dedupe(s: &str) -> std::result::Result<DedupeRule, String> {
    if s == "exact" {
        return Ok(DedupeRule::Exact);
    }
    let x = s
        .strip_prefix("correlation=")
        .ok_or_else(|| format!("unknown dedupe rule `{s}` (expected exact|correlation=<x>)"))?;
    let v: f64 = x
        .parse()
        .map_err(|e| format!("bad correlation `{x}`: {e}"))?;
    DedupeRule::correlation(v).map_err(|e| e.to_string())
}

#[derive(Debug, Clone, Args)]
pub struct InputArgs {
    /// CSV layout: wide (agent column then one column per item) or long
    /// (agent,item,value rows). Ignored for --normalize winrate.
    #[arg(long, default_value = "wide")]
    pub layout: Layout,
    /// Score normalization.
    #[arg(long, value_enum, default_value_t = Normalize::Identity)]
    pub normalize: Normalize,
    /// Two-column item,value CSV of random-play scores (reference scaling).
    #[arg(long)]
    pub random_ref: Option<PathBuf>,
    /// Two-column item,value CSV of target (e.g. human) scores.
    #[arg(long)]
    pub target_ref: Option<PathBuf>,
    /// `at-or-above=<t>` or `majority`. Defaults: 0.5 for identity and
    /// zscore-erf, 1.0 for reference, majority for winrate.
    #[arg(long)]
    pub binarize: Option<BinarizePolicy>,
    /// Remove repeated agents: `exact` or `correlation=<x>`.
    #[arg(long, value_parser = parse_dedupe)]
    pub dedupe: Option<DedupeRule>,
}

impl InputArgs {
    pub fn policy(&self) -> BinarizePolicy {
        self.binarize
            .unwrap_or_else(|| self.normalize.default_policy())
    }
}

pub struct Loaded {
    pub normalized: NormalizedMatrix,
    pub report: FilterReport,
}

fn dedupe(rm: ResultMatrix, rule: Option<DedupeRule>) -> Result<(ResultMatrix, FilterReport)> {
    match rule {
        Some(rule) => Ok(dataio::dedupe_agents(&rm, rule)?),
        None => Ok((rm, FilterReport::default())),
    }
}

fn load_inner(path: &Path, args: &InputArgs, min: MinShape) -> Result<Loaded> {
    if args.normalize == Normalize::Winrate {
        let mut trials = dataio::load_trials(path)?;
        let (rm, report) = dedupe(
            normalize::winrate_aggregate(&trials)?.to_result_matrix()?,
            args.dedupe,
        )?;
        let kept: BTreeSet<&str> = rm.agent_ids().iter().map(String::as_str).collect();
        trials.retain(|t| kept.contains(t.agent.as_str()));
        return Ok(Loaded {
            normalized: normalize::winrate_aggregate(&trials)?,
            report,
        });
    }
    let rm = dataio::load_results_with_min(path, args.layout, min)?;
    let (rm, report) = dedupe(rm, args.dedupe)?;
    let normalized = match args.normalize {
        Normalize::Identity => normalize::identity(&rm)?,
        Normalize::ZscoreErf => normalize::zscore_erf(&rm)?,
        Normalize::Reference => {
            let (Some(lo), Some(hi)) = (&args.random_ref, &args.target_ref) else {
                return Err(CliError::input(
                    "--normalize reference needs --random-ref and --target-ref",
                ));
            };
            let lo = dataio::load_reference(lo).map_err(|e| CliError::from(e).at(lo))?;
            let hi = dataio::load_reference(hi).map_err(|e| CliError::from(e).at(hi))?;
            normalize::reference_scale(&rm, &lo, &hi)?
        }
        Normalize::Winrate => unreachable!("handled above"),
    };
    Ok(Loaded { normalized, report })
}

/// Reads `path`, removes repeated agents and normalizes.
pub fn load(path: &Path, args: &InputArgs, min: MinShape) -> Result<Loaded> {
    load_inner(path, args, min).map_err(|e| e.at(path))
}

pub fn binarize(nm: &NormalizedMatrix, args: &InputArgs) -> Result<BinaryResponseMatrix> {
    Ok(normalize::binarize(nm, args.policy())?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dedupe_rules_parse() {
        assert_eq!(parse_dedupe("exact"), Ok(DedupeRule::Exact));
        assert_eq!(
            parse_dedupe("correlation=0.99"),
            Ok(DedupeRule::Correlation { max_corr: 0.99 })
        );
        assert!(parse_dedupe("correlation=1.5").is_err());
        assert!(parse_dedupe("fuzzy").is_err());
    }

    #[test]
    fn default_policies() {
        assert_eq!(
            Normalize::Winrate.default_policy(),
            BinarizePolicy::MajorityWins
        );
        assert_eq!(
            Normalize::Reference.default_policy(),
            BinarizePolicy::AtOrAbove { threshold: 1.0 }
        );
    }
}
