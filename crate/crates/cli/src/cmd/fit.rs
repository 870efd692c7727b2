use std::path::PathBuf;

use benchirt::dataio::{filter_constant_items, MinShape};
use benchirt::irt::{self, AbilityMethod};
use benchirt::{FitConfig, ModelKind};
use clap::Args;
use serde::Serialize;

use super::BinningArgs;
use crate::error::{CliError, Result};
use crate::output::{warn, OutDir};
use crate::pipeline::{self, InputArgs};
use crate::Cli;

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    /// Result matrix (CSV).
    pub input: PathBuf,
    #[command(flatten)]
    pub input_args: InputArgs,
    /// Item model: 2pl or 3pl.
    #[arg(long, default_value = "2pl")]
    pub kind: ModelKind,
    /// Convergence threshold on the largest parameter change per cycle.
    #[arg(long, default_value_t = 1e-4)]
    pub tolerance: f64,
    #[arg(long, default_value_t = 1000)]
    pub max_iters: usize,
    #[arg(long, default_value_t = 21)]
    pub quadrature_nodes: usize,
    /// Report maximum-likelihood abilities instead of posterior means.
    #[arg(long)]
    pub ability_mle: bool,
    /// Refit with this many consecutive seeds (starting at --seed) and
    /// write a consistency report.
    #[arg(long)]
    pub seeds: Option<usize>,
    #[command(flatten)]
    pub binning: BinningArgs,
}

#[derive(Serialize)]
struct ConvergenceReport<'a> {
    converged: bool,
    iterations: usize,
    max_param_delta: f64,
    tolerance: f64,
    max_iters: usize,
    log_likelihood: f64,
    log_likelihood_trace: &'a [f64],
    agents: usize,
    items: usize,
    abstruse_items: Vec<&'a str>,
    warnings: &'a [String],
}

pub fn run(args: &FitArgs, cli: &Cli, out: &OutDir) -> Result<()> {
    let loaded = pipeline::load(&args.input, &args.input_args, MinShape::FIT)?;
    let brm = pipeline::binarize(&loaded.normalized, &args.input_args)?;
    let (brm, constant) = filter_constant_items(&loaded.normalized.to_result_matrix()?, &brm)?;
    let report = loaded.report.merge(constant);
    out.write_json("filter_report.json", &report)?;
    if brm.n_items() < 2 {
        return Err(CliError::input(format!(
            "{} item(s) left after removing constant items; at least 2 are needed",
            brm.n_items()
        ))
        .at(&args.input));
    }
    let config = FitConfig {
        tolerance: args.tolerance,
        max_iters: args.max_iters,
        quadrature_nodes: args.quadrature_nodes,
        seed: cli.seed,
        ability_method: if args.ability_mle {
            AbilityMethod::Mle
        } else {
            AbilityMethod::Eap
        },
    };
    let mut model = irt::fit(&brm, args.kind, &config)?;
    match args.binning.build(&model) {
        Ok(b) => model.binning = Some(b),
        Err(e) => model
            .warnings
            .push(format!("no difficulty binning stored: {e}")),
    }
    out.write_json("model.json", &model)?;
    let c = &model.convergence;
    out.write_json(
        "convergence.json",
        &ConvergenceReport {
            converged: c.converged,
            iterations: c.iterations,
            max_param_delta: c.max_param_delta,
            tolerance: config.tolerance,
            max_iters: config.max_iters,
            log_likelihood: c.log_likelihood,
            log_likelihood_trace: &c.trace,
            agents: brm.n_agents(),
            items: brm.n_items(),
            abstruse_items: model.abstruse_items(),
            warnings: &model.warnings,
        },
    )?;
    for w in &model.warnings {
        warn(w);
    }
    if let Some(k) = args.seeds {
        let seeds: Vec<u64> = (0..k as u64).map(|s| cli.seed.wrapping_add(s)).collect();
        let sc = irt::seed_consistency(&brm, args.kind, &config, &seeds)?;
        if !sc.consistent {
            warn(format!(
                "fits disagree across seeds: max deviation {:.3e} > {:.3e}",
                sc.max_deviation, sc.threshold
            ));
        }
        out.write_json("seed_consistency.json", &sc)?;
    }
    if !c.converged {
        return Err(CliError::NotConverged(format!(
            "no convergence after {} iterations (max change {:.3e} > {:.3e}); outputs written",
            c.iterations, c.max_param_delta, config.tolerance
        )));
    }
    Ok(())
}
