//! `capnas gen`: emit canonical space files and synthetic benchmarks.

use std::path::PathBuf;

use clap::Args;
use serde_json::json;

use capnas_cli::benchio::synth_benchmark;
use capnas_cli::formats::{
    save_benchmark_file, save_space, BenchmarkFile, BenchmarkHeader, BENCH_SCHEMA_VERSION,
};
use capnas_cli::manifest::RunManifest;
use capnas_cli::templates;

use super::CliError;

#[derive(Args)]
pub struct GenArgs {
    /// Emit a canonical space file for a named template.
    #[arg(long, conflicts_with = "synth_benchmark")]
    pub template: Option<String>,
    /// Emit a synthetic benchmark instead.
    #[arg(long, requires = "space")]
    pub synth_benchmark: bool,
    /// Search-space file the synthetic benchmark samples from.
    #[arg(long)]
    pub space: Option<PathBuf>,
    /// Number of synthetic records.
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    /// True balance parameter used to construct the metric.
    #[arg(long, default_value_t = 0.5, allow_negative_numbers = true)]
    pub true_alpha: f64,
    /// Gaussian noise added to the standardized metric.
    #[arg(long, default_value_t = 0.0)]
    pub noise_sigma: f64,
    /// Sampling/noise seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Init policy: `gaussian[:STD]` or `fanin`.
    #[arg(long, default_value = "gaussian:0.02")]
    pub init: String,
    /// Weight-initialization seed (kept separate from the sampling seed so
    /// benchmarks stay scoreable with other commands' default init).
    #[arg(long, default_value_t = 0)]
    pub init_seed: u64,
    /// Output path (defaults: `<template>.space.json` / `synth.jsonl`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write the run manifest here.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

pub fn run(args: GenArgs, _workers: Option<usize>) -> Result<(), CliError> {
    match (&args.template, args.synth_benchmark) {
        (Some(name), false) => gen_space(name, &args),
        (None, true) => gen_synth(&args),
        _ => Err(CliError::usage(
            "provide --template NAME or --synth-benchmark --space FILE",
        )),
    }
}

fn gen_space(name: &str, args: &GenArgs) -> Result<(), CliError> {
    let space = templates::template(name).ok_or_else(|| {
        CliError::usage(format!(
            "unknown template `{name}`; available: {}",
            templates::TEMPLATE_NAMES.join(", ")
        ))
    })?;
    let out = args
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(format!("{name}.space.json")));
    let mut manifest = RunManifest::start("gen", json!({"template": name, "out": out.display().to_string()}));
    save_space(&out, &space)?;
    manifest.add_output(&out);
    println!(
        "space `{}`: {} architectures -> {}",
        space.name,
        space.space_size(),
        out.display()
    );
    manifest.finish();
    if let Some(path) = &args.manifest {
        manifest.write(path).map_err(CliError::from)?;
    }
    Ok(())
}

fn gen_synth(args: &GenArgs) -> Result<(), CliError> {
    let space_path = args.space.as_ref().expect("clap requires --space");
    let space = capnas_cli::formats::load_space(space_path)?;
    let policy = super::parse_init(&args.init, args.init_seed)?;
    let out = args.out.clone().unwrap_or_else(|| PathBuf::from("synth.jsonl"));

    let config = json!({
        "space": space.name,
        "n": args.n,
        "true_alpha": args.true_alpha,
        "noise_sigma": args.noise_sigma,
        "seed": args.seed,
        "init": policy.descriptor(),
        "init_seed": args.init_seed,
        "out": out.display().to_string(),
    });
    let mut manifest = RunManifest::start("gen", config);

    let records = synth_benchmark(
        &space,
        args.n,
        args.true_alpha,
        args.noise_sigma,
        args.seed,
        &policy,
    )?;
    let file = BenchmarkFile {
        header: BenchmarkHeader {
            schema_version: BENCH_SCHEMA_VERSION,
            space: space.name.clone(),
            manifest: Some(manifest.manifest_id.clone()),
        },
        records,
    };
    save_benchmark_file(&out, &file)?;
    manifest.add_output(&out);
    println!(
        "synthetic benchmark: {} records (true_alpha {}, noise {}) -> {}",
        file.records.len(),
        args.true_alpha,
        args.noise_sigma,
        out.display()
    );
    manifest.finish();
    if let Some(path) = &args.manifest {
        manifest.write(path).map_err(CliError::from)?;
    }
    Ok(())
}
