//! `capnas search`: NSGA-II over a search space with table-backed scoring.

use std::io::Write;
use std::path::PathBuf;

use clap::Args;
use serde::Serialize;
use serde_json::json;

use capnas_core::archspace::{ArchitectureSpec, DimValue, SearchSpaceDef};
use capnas_core::capacity::{
    build_lookup_table, combine, score_blocks, score_blocks_with_table, CapacityError,
    LookupTable, WeightInitPolicy,
};
use capnas_core::search::{nsga2_search, Objectives, ParamBounds, SearchConfig};
use capnas_cli::formats;
use capnas_cli::manifest::RunManifest;

use super::CliError;

#[derive(Args)]
pub struct SearchArgs {
    /// Search-space definition file.
    #[arg(long)]
    pub space: PathBuf,
    /// Balance parameter for the combined proxy objective.
    #[arg(long, default_value_t = 0.5, allow_negative_numbers = true)]
    pub alpha: f64,
    /// Population size (even).
    #[arg(long, default_value_t = 64)]
    pub pop: usize,
    /// Number of generations.
    #[arg(long, default_value_t = 50)]
    pub gens: usize,
    /// Crossover probability per mating pair.
    #[arg(long, default_value_t = 0.9)]
    pub crossover_rate: f64,
    /// Per-dimension mutation probability.
    #[arg(long, default_value_t = 0.1)]
    pub mutation_rate: f64,
    /// Lower parameter bound (strict).
    #[arg(long, default_value_t = 0)]
    pub params_low: u64,
    /// Upper parameter bound (strict).
    #[arg(long, default_value_t = u64::MAX)]
    pub params_high: u64,
    /// Run seed (GA randomness).
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Init policy: `gaussian[:STD]` or `fanin`.
    #[arg(long, default_value = "gaussian:0.02")]
    pub init: String,
    /// Weight-initialization seed (scoring streams).
    #[arg(long, default_value_t = 0)]
    pub init_seed: u64,
    /// Sequence length for the TFLOPs objective.
    #[arg(long, default_value_t = 128)]
    pub seq_len: usize,
    /// Count embedding/norm parameters toward the bound.
    #[arg(long)]
    pub include_other_params: bool,
    /// Disable the precomputed module-score lookup table.
    #[arg(long)]
    pub no_table: bool,
    /// Pareto front output (JSON lines).
    #[arg(long, default_value = "front.jsonl")]
    pub front: PathBuf,
    /// Per-generation history CSV.
    #[arg(long, default_value = "history.csv")]
    pub history: PathBuf,
    /// Run manifest path.
    #[arg(long, default_value = "manifest.json")]
    pub manifest: PathBuf,
}

#[derive(Serialize)]
struct FrontRecord<'a> {
    id: &'a str,
    num_layers: usize,
    globals: &'a std::collections::BTreeMap<String, DimValue>,
    layers: &'a [std::collections::BTreeMap<String, DimValue>],
    #[serde(skip_serializing_if = "Option::is_none")]
    embedding_config: &'a Option<std::collections::BTreeMap<String, DimValue>>,
    proxy: f64,
    tflops: f64,
    params: u64,
    rank: usize,
    crowding: f64,
}

fn evaluator<'a>(
    space: &'a SearchSpaceDef,
    policy: &'a WeightInitPolicy,
    table: Option<&'a LookupTable>,
    alpha: f64,
    seq_len: usize,
    include_other: bool,
) -> impl Fn(&ArchitectureSpec) -> Result<Objectives, CapacityError> + 'a {
    move |arch| {
        let blocks = match table {
            Some(t) => score_blocks_with_table(space, arch, t)?,
            None => score_blocks(space, arch, policy)?,
        };
        Ok(Objectives {
            proxy: combine(&blocks, alpha),
            tflops: space.estimate_tflops(arch, seq_len)?,
            params: space.count_params(arch, include_other)?,
        })
    }
}

pub fn run(args: SearchArgs, _workers: Option<usize>) -> Result<(), CliError> {
    let space = formats::load_space(&args.space)?;
    let policy = super::parse_init(&args.init, args.init_seed)?;
    let cfg = SearchConfig {
        population: args.pop,
        generations: args.gens,
        crossover_rate: args.crossover_rate,
        mutation_rate: args.mutation_rate,
        param_bounds: ParamBounds {
            low: args.params_low,
            high: args.params_high,
        },
        alpha: args.alpha,
        seed: args.seed,
    };

    let table = if args.no_table {
        None
    } else {
        match build_lookup_table(&space, &policy) {
            Ok(t) => {
                eprintln!("lookup table: {} module entries", t.len());
                Some(t)
            }
            Err(CapacityError::UnsupportedSpace { reason }) => {
                eprintln!("lookup table unavailable ({reason}); scoring directly");
                None
            }
            Err(e) => return Err(e.into()),
        }
    };

    let config = json!({
        "space": space.name,
        "alpha": args.alpha,
        "population": args.pop,
        "generations": args.gens,
        "crossover_rate": args.crossover_rate,
        "mutation_rate": args.mutation_rate,
        "params_low": args.params_low,
        "params_high": args.params_high,
        "seed": args.seed,
        "init": policy.descriptor(),
        "init_seed": args.init_seed,
        "seq_len": args.seq_len,
        "include_other_params": args.include_other_params,
        "lookup_table": table.is_some(),
    });
    let mut manifest = RunManifest::start("search", config);

    let eval = evaluator(
        &space,
        &policy,
        table.as_ref(),
        args.alpha,
        args.seq_len,
        args.include_other_params,
    );
    let outcome = nsga2_search(&space, eval, &cfg)?;

    let mut out = Vec::new();
    let header = json!({
        "schema_version": 1,
        "kind": "pareto_front",
        "space": space.name,
        "manifest": manifest.manifest_id,
        "alpha": args.alpha,
        "members": outcome.front.members.len(),
        "evaluations": outcome.evaluations,
    });
    writeln!(out, "{header}").expect("vec write");
    for c in &outcome.front.members {
        let record = FrontRecord {
            id: &c.arch.id,
            num_layers: c.arch.num_layers,
            globals: &c.arch.globals,
            layers: &c.arch.layers,
            embedding_config: &c.arch.embedding_config,
            proxy: c.proxy,
            tflops: c.tflops,
            params: c.params,
            rank: c.rank,
            crowding: c.crowding,
        };
        writeln!(out, "{}", serde_json::to_string(&record).expect("front serializes"))
            .expect("vec write");
    }
    super::write_io(&args.front, &out)?;
    manifest.add_output(&args.front);

    let mut csv = format!("# manifest: {}\n", manifest.manifest_id);
    csv.push_str("generation,best_proxy,median_proxy\n");
    for s in &outcome.history {
        csv.push_str(&format!(
            "{},{},{}\n",
            s.generation,
            s.best_proxy.map_or(String::new(), |v| v.to_string()),
            s.median_proxy.map_or(String::new(), |v| v.to_string()),
        ));
    }
    super::write_io(&args.history, csv.as_bytes())?;
    manifest.add_output(&args.history);

    eprintln!(
        "front: {} member(s) from {} evaluations [manifest {}]",
        outcome.front.members.len(),
        outcome.evaluations,
        manifest.manifest_id
    );
    eprintln!("{:<20} {:>14} {:>12} {:>14}", "id", "proxy", "tflops", "params");
    for c in &outcome.front.members {
        eprintln!(
            "{:<20} {:>14.6} {:>12.6} {:>14}",
            c.arch.id, c.proxy, c.tflops, c.params
        );
    }

    manifest.finish();
    manifest.write(&args.manifest).map_err(CliError::from)?;
    Ok(())
}
