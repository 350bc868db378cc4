//! `capnas tune-alpha`: tune the attention/FFN balance parameter, either by
//! benchmark sampling (grid search on Kendall tau) or by the benchmark-free
//! correlation heuristic.

use std::path::PathBuf;

use clap::Args;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use capnas_core::alphaopt::{
    heuristic_alpha_with_mode, optimize_alpha_sampling, AlphaResult, ExtremumMode,
    HeuristicInputs,
};
use capnas_core::archspace::ArchitectureSpec;
use capnas_core::rng::{seeded, uniform_index};
use capnas_cli::benchio::{
    blocks_for, heuristic_inputs_from_archs, resolve_workers, BenchmarkRecord, ScoreMode,
};
use capnas_cli::formats;
use capnas_cli::manifest::RunManifest;

use super::{CliError, parse_grid, parse_init};

#[derive(Args)]
pub struct TuneAlphaArgs {
    /// `sampling` (needs a benchmark) or `heuristic` (needs only a space).
    #[arg(long, default_value = "sampling")]
    pub method: String,
    /// Benchmark file with ground-truth metrics (sampling method).
    #[arg(long)]
    pub bench: Option<PathBuf>,
    /// Search-space definition file.
    #[arg(long)]
    pub space: PathBuf,
    /// Metric name for the sampling method.
    #[arg(long)]
    pub metric: Option<String>,
    /// Sample size; 0 means the whole benchmark (sampling method).
    #[arg(long, default_value_t = 50)]
    pub k: usize,
    /// Alpha grid as `lo:hi:step`.
    #[arg(long, default_value = "-1.5:1.5:0.1", allow_hyphen_values = true)]
    pub grid: String,
    /// Seed for record/architecture sampling.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Init policy: `gaussian[:STD]` or `fanin`.
    #[arg(long, default_value = "gaussian:0.02")]
    pub init: String,
    /// Weight-initialization seed (independent of the sampling seed).
    #[arg(long, default_value_t = 0)]
    pub init_seed: u64,
    /// Use the analytic expected score instead of sampled weights.
    #[arg(long)]
    pub expected: bool,
    /// Compare the heuristic's min/max by magnitude instead of signed value.
    #[arg(long)]
    pub abs_extremum: bool,
    /// Write the result JSON here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write the alpha -> tau curve as CSV (sampling method).
    #[arg(long)]
    pub curve: Option<PathBuf>,
    /// Write the run manifest here.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Serialize)]
struct TuneOutput {
    #[serde(flatten)]
    result: AlphaResult,
    k: usize,
    init_policy: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    heuristic_inputs: Option<HeuristicInputs>,
    manifest: String,
}

/// Sample `k` distinct indices without replacement (partial Fisher-Yates).
fn sample_indices(n: usize, k: usize, seed: u64) -> Vec<usize> {
    let mut rng = seeded(seed);
    let mut idx: Vec<usize> = (0..n).collect();
    let k = k.min(n);
    for i in 0..k {
        let j = i + uniform_index(&mut rng, n - i);
        idx.swap(i, j);
    }
    idx.truncate(k);
    idx
}

pub fn run(args: TuneAlphaArgs, workers: Option<usize>) -> Result<(), CliError> {
    let space = formats::load_space(&args.space)?;
    let policy = parse_init(&args.init, args.init_seed)?;
    let mode = if args.expected {
        ScoreMode::Expected
    } else {
        ScoreMode::Sampled
    };
    let grid = parse_grid(&args.grid)?;

    let config = json!({
        "method": args.method,
        "space": space.name,
        "bench": args.bench.as_ref().map(|p| p.display().to_string()),
        "metric": args.metric,
        "k": args.k,
        "grid": args.grid,
        "seed": args.seed,
        "init": policy.descriptor(),
        "init_seed": args.init_seed,
        "score_mode": if args.expected { "expected" } else { "sampled" },
        "abs_extremum": args.abs_extremum,
    });
    let mut manifest = RunManifest::start("tune-alpha", config);

    let (result, inputs, k_used) = match args.method.as_str() {
        "sampling" => {
            let bench_path = args.bench.as_ref().ok_or_else(|| {
                CliError::usage("--method sampling requires --bench with ground-truth metrics")
            })?;
            let records = formats::load_benchmark(bench_path, &space)?;
            if records.is_empty() {
                return Err(CliError::usage(
                    "benchmark is empty; sampling needs ground truth (or use --method heuristic)",
                ));
            }
            let metric = super::eval::resolve_metric(&records, args.metric.as_deref())
                .map_err(|e| CliError {
                    code: e.code,
                    message: format!(
                        "{}; ground truth is required for --method sampling (the heuristic method needs no benchmark)",
                        e.message
                    ),
                })?;
            let k = if args.k == 0 { records.len() } else { args.k.min(records.len()) };
            let picked = sample_indices(records.len(), k, args.seed);
            let subset: Vec<&BenchmarkRecord> = picked.iter().map(|&i| &records[i]).collect();

            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(resolve_workers(workers))
                .build()
                .expect("thread pool");
            let blocks: Vec<Result<(f64, f64), CliError>> = pool.install(|| {
                subset
                    .par_iter()
                    .map(|r| {
                        let b = blocks_for(&space, &r.arch, &policy, mode)?;
                        Ok((b.total_attn, b.total_ffn))
                    })
                    .collect()
            });
            let mut s_attn = Vec::with_capacity(subset.len());
            let mut s_ffn = Vec::with_capacity(subset.len());
            for b in blocks {
                let (a, f) = b?;
                s_attn.push(a);
                s_ffn.push(f);
            }
            let truth: Vec<f64> = subset.iter().map(|r| r.metrics[&metric]).collect();
            let mut result = optimize_alpha_sampling(&truth, &s_attn, &s_ffn, &grid)?;
            result.sample_ids = subset.iter().map(|r| r.arch.id.clone()).collect();
            (result, None, k)
        }
        "heuristic" => {
            if args.k < 10 {
                return Err(CliError::usage("--method heuristic requires --k of at least 10"));
            }
            let mut rng = seeded(args.seed);
            let archs: Vec<ArchitectureSpec> =
                (0..args.k).map(|_| space.sample_with(&mut rng)).collect();
            let inputs = heuristic_inputs_from_archs(&archs, &space, &policy, mode)?;
            let extremum = if args.abs_extremum {
                ExtremumMode::Absolute
            } else {
                ExtremumMode::Signed
            };
            let alpha = heuristic_alpha_with_mode(&inputs, extremum)?;
            let result = AlphaResult {
                alpha_star: alpha,
                grid_curve: Vec::new(),
                top1: None,
                top2: None,
                method: capnas_core::alphaopt::AlphaMethod::Heuristic,
                sample_ids: archs.iter().map(|a| a.id.clone()).collect(),
            };
            (result, Some(inputs), args.k)
        }
        other => {
            return Err(CliError::usage(format!(
                "unknown method `{other}` (expected `sampling` or `heuristic`)"
            )))
        }
    };

    if let Some(path) = &args.curve {
        let mut csv = format!("# manifest: {}\n", manifest.manifest_id);
        csv.push_str("alpha,tau\n");
        for p in &result.grid_curve {
            match p.tau {
                Some(t) => csv.push_str(&format!("{},{}\n", p.alpha, t)),
                None => csv.push_str(&format!("{},\n", p.alpha)),
            }
        }
        super::write_io(path, csv.as_bytes())?;
        manifest.add_output(path);
    }

    let output = TuneOutput {
        result,
        k: k_used,
        init_policy: policy.descriptor(),
        heuristic_inputs: inputs,
        manifest: manifest.manifest_id.clone(),
    };
    let mut text = serde_json::to_string_pretty(&output).expect("result serializes");
    text.push('\n');
    match &args.out {
        Some(path) => {
            super::write_io(path, text.as_bytes())?;
            manifest.add_output(path);
        }
        None => print!("{text}"),
    }
    eprintln!(
        "alpha_star {} via {} (k={}) [manifest {}]",
        output.result.alpha_star, args.method, k_used, manifest.manifest_id
    );

    manifest.finish();
    if let Some(path) = &args.manifest {
        manifest.write(path).map_err(CliError::from)?;
    }
    Ok(())
}
