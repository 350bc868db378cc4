//! `capnas score`: per-architecture capacity report.

use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use clap::Args;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use capnas_core::archspace::ArchitectureSpec;
use capnas_core::capacity::combine;
use capnas_core::rng::seeded;
use capnas_cli::benchio::{blocks_for, resolve_workers, ScoreMode};
use capnas_cli::formats;
use capnas_cli::manifest::RunManifest;

use super::CliError;

#[derive(Args)]
pub struct ScoreArgs {
    /// Search-space definition file.
    #[arg(long)]
    pub space: PathBuf,
    /// Score a single architecture file.
    #[arg(long, conflicts_with = "sample")]
    pub arch: Option<PathBuf>,
    /// Sample N architectures from the space instead.
    #[arg(long)]
    pub sample: Option<usize>,
    /// Seed for sampling and weight initialization.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Init policy: `gaussian[:STD]` or `fanin`.
    #[arg(long, default_value = "gaussian:0.02")]
    pub init: String,
    /// Balance parameter for the combined proxy.
    #[arg(long, default_value_t = 0.5, allow_negative_numbers = true)]
    pub alpha: f64,
    /// Sequence length for the TFLOPs estimate.
    #[arg(long, default_value_t = 128)]
    pub seq_len: usize,
    /// Use the analytic expected score instead of sampled weights.
    #[arg(long)]
    pub expected: bool,
    /// Write the JSONL report here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write a CSV report (includes per-architecture wall-clock micros).
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Write the run manifest here.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Serialize)]
struct ScoreRecord {
    id: String,
    s_attn: f64,
    s_ffn: f64,
    s_proxy: f64,
    params: u64,
    tflops: f64,
    per_layer_attn: Vec<f64>,
    per_layer_ffn: Vec<f64>,
    #[serde(skip)]
    micros: f64,
}

pub fn run(args: ScoreArgs, workers: Option<usize>) -> Result<(), CliError> {
    let space = formats::load_space(&args.space)?;
    let policy = super::parse_init(&args.init, args.seed)?;
    let mode = if args.expected {
        ScoreMode::Expected
    } else {
        ScoreMode::Sampled
    };

    let archs: Vec<ArchitectureSpec> = match (&args.arch, args.sample) {
        (Some(path), None) => vec![formats::load_arch(path, &space)?],
        (None, Some(n)) => {
            let mut rng = seeded(args.seed);
            (0..n).map(|_| space.sample_with(&mut rng)).collect()
        }
        (None, None) => {
            return Err(CliError::usage("provide --arch FILE or --sample N"));
        }
        (Some(_), Some(_)) => unreachable!("clap conflicts_with"),
    };

    let config = json!({
        "space": space.name,
        "alpha": args.alpha,
        "init": policy.descriptor(),
        "seed": args.seed,
        "seq_len": args.seq_len,
        "score_mode": if args.expected { "expected" } else { "sampled" },
        "sample": args.sample,
        "arch": args.arch.as_ref().map(|p| p.display().to_string()),
    });
    let mut manifest = RunManifest::start("score", config);

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(resolve_workers(workers))
        .build()
        .expect("thread pool");
    let scored: Vec<Result<ScoreRecord, CliError>> = pool.install(|| {
        archs
            .par_iter()
            .map(|arch| {
                let t0 = Instant::now();
                let blocks = blocks_for(&space, arch, &policy, mode)?;
                let micros = t0.elapsed().as_secs_f64() * 1e6;
                Ok(ScoreRecord {
                    id: arch.id.clone(),
                    s_proxy: combine(&blocks, args.alpha),
                    s_attn: blocks.total_attn,
                    s_ffn: blocks.total_ffn,
                    params: space.count_params(arch, false)?,
                    tflops: space.estimate_tflops(arch, args.seq_len)?,
                    per_layer_attn: blocks.per_layer_attn,
                    per_layer_ffn: blocks.per_layer_ffn,
                    micros,
                })
            })
            .collect()
    });
    let mut records = Vec::with_capacity(scored.len());
    for r in scored {
        records.push(r?);
    }
    // Canonical order so worker parallelism never changes bytes.
    records.sort_by(|a, b| a.id.cmp(&b.id));

    let header = json!({
        "schema_version": 1,
        "kind": "score_report",
        "space": space.name,
        "manifest": manifest.manifest_id,
        "alpha": args.alpha,
        "init": policy.descriptor(),
        "seq_len": args.seq_len,
        "score_mode": if args.expected { "expected" } else { "sampled" },
    });
    let mut out = Vec::new();
    writeln!(out, "{header}").expect("vec write");
    for r in &records {
        writeln!(out, "{}", serde_json::to_string(r).expect("record serializes")).expect("vec write");
    }
    match &args.out {
        Some(path) => {
            super::write_io(path, &out)?;
            manifest.add_output(path);
        }
        None => {
            std::io::stdout().write_all(&out)?;
        }
    }

    if let Some(path) = &args.csv {
        let mut csv = String::new();
        csv.push_str(&format!("# manifest: {}\n", manifest.manifest_id));
        csv.push_str("id,s_attn,s_ffn,s_proxy,params,tflops,micros\n");
        for r in &records {
            csv.push_str(&format!(
                "{},{},{},{},{},{},{:.1}\n",
                r.id, r.s_attn, r.s_ffn, r.s_proxy, r.params, r.tflops, r.micros
            ));
        }
        super::write_io(path, csv.as_bytes())?;
        manifest.add_output(path);
    }

    let mean_micros = if records.is_empty() {
        0.0
    } else {
        records.iter().map(|r| r.micros).sum::<f64>() / records.len() as f64
    };
    eprintln!(
        "scored {} architecture(s), mean {:.1} us/arch [manifest {}]",
        records.len(),
        mean_micros,
        manifest.manifest_id
    );

    manifest.finish();
    if let Some(path) = &args.manifest {
        manifest.write(path).map_err(CliError::from)?;
    }
    Ok(())
}
