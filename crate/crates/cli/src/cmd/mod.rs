pub mod analyze;
pub mod curves;
pub mod fit;
pub mod score;
pub mod simulate;

use std::path::Path;

use benchirt::indicators::{binning_from_model, DifficultyBinning};
use benchirt::FittedModel;
use clap::Args;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Args)]
pub struct BinningArgs {
    /// Minimum number of equal-frequency difficulty bins.
    #[arg(long, default_value_t = 4)]
    pub min_bins: usize,
    /// Minimum items per bin; the bin count is lowered to honour it.
    #[arg(long, default_value_t = 10)]
    pub min_per_bin: usize,
    /// Keep negative-discrimination items in the binning.
    #[arg(long)]
    pub keep_abstruse: bool,
}

impl BinningArgs {
    pub fn build(&self, model: &FittedModel) -> Result<DifficultyBinning> {
        Ok(binning_from_model(
            model,
            self.min_bins,
            self.min_per_bin,
            self.keep_abstruse,
        )?)
    }
}

pub fn load_model(path: &Path) -> Result<FittedModel> {
    FittedModel::load(path).map_err(|e| CliError::from(e).at(path))
}

/// The model's stored binning, or one built from its difficulties.
pub fn model_binning(
    model: &FittedModel,
    args: &BinningArgs,
    rebuild: bool,
) -> Result<DifficultyBinning> {
    match (&model.binning, rebuild) {
        (Some(b), false) => Ok(b.clone()),
        _ => args.build(model),
    }
}
