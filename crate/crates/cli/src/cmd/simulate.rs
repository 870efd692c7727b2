use benchirt::dataio::{save_results, MinShape};
use benchirt::stats;
use benchirt::synth::{parse_sim_spec, sample_2pl_matrix, sample_scores, SimSpec};
use benchirt::{Layout, ResultMatrix, ScoreModel, TwoPLWorld};
use clap::Args;
use serde::Serialize;

use crate::error::{CliError, Result};
use crate::output::OutDir;
use crate::Cli;

/// Draws per score model when neither the spec nor --n says otherwise.
pub const DEFAULT_DRAWS: usize = 100;

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    /// `constant:0.75`, `categorical:0:0.3,1:0.7`, `uniform:0.3,1`, `random`,
    /// `mix:<w>:<m1>:<m2>` (optionally followed by ` n=<count>`), or
    /// `2pl:agents=500,items=60,seed=7`.
    pub spec: String,
    /// Number of draws for a score model; overrides `n=` in the spec.
    #[arg(long)]
    pub n: Option<usize>,
}

#[derive(Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum Sidecar<'a> {
    Scores {
        spec: &'a str,
        seed: u64,
        model: &'a ScoreModel,
        n: usize,
        analytic_mean: f64,
        analytic_variance: f64,
        sample_mean: f64,
        sample_variance: f64,
    },
    TwoPl {
        spec: &'a str,
        seed: u64,
        agents: Vec<TrueAgent<'a>>,
        items: Vec<TrueItem<'a>>,
    },
}

#[derive(Serialize)]
struct TrueAgent<'a> {
    id: &'a str,
    theta: f64,
}

#[derive(Serialize)]
struct TrueItem<'a> {
    id: &'a str,
    a: f64,
    b: f64,
}

fn draw_ids(n: usize) -> Vec<String> {
    let width = n.to_string().len();
    (0..n).map(|k| format!("draw{k:0width$}")).collect()
}

pub fn run(args: &SimulateArgs, cli: &Cli, out: &OutDir) -> Result<()> {
    let spec = parse_sim_spec(&args.spec)
        .map_err(|e| CliError::input(format!("spec `{}`: {e}", args.spec)))?;
    let csv_path = out.path("simulated.csv");
    match spec {
        SimSpec::Scores { model, n } => {
            let n = args.n.or(n).unwrap_or(DEFAULT_DRAWS);
            let values = sample_scores(&model, n, cli.seed)?;
            let rm = ResultMatrix::with_min_shape(
                vec!["sim".into()],
                draw_ids(n),
                vec![values.clone()],
                vec![vec![false; n]],
                MinShape::SCORING,
            )?;
            save_results(&rm, &csv_path, Layout::Wide)?;
            out.write_json(
                "simulated.json",
                &Sidecar::Scores {
                    spec: &args.spec,
                    seed: cli.seed,
                    model: &model,
                    n,
                    analytic_mean: model.analytic_mean(),
                    analytic_variance: model.analytic_variance(),
                    sample_mean: stats::mean(&values).unwrap_or(f64::NAN),
                    sample_variance: stats::population_variance(&values).unwrap_or(f64::NAN),
                },
            )?;
        }
        SimSpec::TwoPL {
            agents,
            items,
            seed,
        } => {
            let seed = seed.unwrap_or(cli.seed);
            let world = TwoPLWorld::generate(agents, items, seed);
            let rm = sample_2pl_matrix(&world)?.to_result_matrix()?;
            save_results(&rm, &csv_path, Layout::Wide)?;
            out.write_json(
                "simulated.json",
                &Sidecar::TwoPl {
                    spec: &args.spec,
                    seed,
                    agents: world
                        .agent_ids
                        .iter()
                        .zip(&world.true_abilities)
                        .map(|(id, &theta)| TrueAgent { id, theta })
                        .collect(),
                    items: world
                        .item_ids
                        .iter()
                        .zip(&world.true_items)
                        .map(|(id, &(a, b))| TrueItem { id, a, b })
                        .collect(),
                },
            )?;
        }
    }
    Ok(())
}
