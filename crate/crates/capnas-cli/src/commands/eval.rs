//! `capnas eval`: correlation of a proxy against benchmark ground truth.

use std::path::PathBuf;

use clap::Args;
use serde_json::json;

use capnas_cli::benchio::{
    evaluate_proxy, resolve_workers, BenchmarkRecord, ProxyKind, ScoreMode,
};
use capnas_cli::formats;
use capnas_cli::manifest::RunManifest;

use super::CliError;

#[derive(Args)]
pub struct EvalArgs {
    /// Benchmark file (line-delimited records with metrics).
    #[arg(long)]
    pub bench: PathBuf,
    /// Search-space definition the benchmark belongs to.
    #[arg(long)]
    pub space: PathBuf,
    /// Proxy: zerolm | attn | ffn | params | params-all | logc.
    #[arg(long, default_value = "zerolm")]
    pub proxy: String,
    /// Balance parameter for the zerolm proxy.
    #[arg(long, default_value_t = 0.5, allow_negative_numbers = true)]
    pub alpha: f64,
    /// Metric name; may be omitted when records carry exactly one metric.
    #[arg(long)]
    pub metric: Option<String>,
    /// Init policy: `gaussian[:STD]` or `fanin`.
    #[arg(long, default_value = "gaussian:0.02")]
    pub init: String,
    /// Weight-initialization seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Use the analytic expected score instead of sampled weights.
    #[arg(long)]
    pub expected: bool,
    /// Write the correlation report as CSV.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Write per-record scatter data (ranks) as CSV.
    #[arg(long)]
    pub scatter: Option<PathBuf>,
    /// Write the run manifest here.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

pub fn parse_proxy(spec: &str, alpha: f64) -> Result<ProxyKind, CliError> {
    Ok(match spec {
        "zerolm" => ProxyKind::Zerolm { alpha },
        "attn" => ProxyKind::AttnOnly,
        "ffn" => ProxyKind::FfnOnly,
        "params" => ProxyKind::Params { include_other: false },
        "params-all" => ProxyKind::Params { include_other: true },
        "logc" => ProxyKind::LogComplexity,
        other => {
            return Err(CliError::usage(format!(
                "unknown proxy `{other}` (expected zerolm, attn, ffn, params, params-all, logc)"
            )))
        }
    })
}

/// Picks the metric: the flag when present, otherwise the single metric name
/// shared by every record. Exit 2 with the available list otherwise.
pub fn resolve_metric(
    records: &[BenchmarkRecord],
    flag: Option<&str>,
) -> Result<String, CliError> {
    let available: std::collections::BTreeSet<String> = records
        .iter()
        .flat_map(|r| r.metrics.keys().cloned())
        .collect();
    match flag {
        Some(name) => {
            let name = formats::normalize_metric_name(name)?;
            if available.contains(&name) {
                Ok(name)
            } else {
                Err(CliError::usage(format!(
                    "metric `{name}` not present; available: {}",
                    available.into_iter().collect::<Vec<_>>().join(", ")
                )))
            }
        }
        None if available.len() == 1 => Ok(available.into_iter().next().unwrap()),
        None => Err(CliError::usage(format!(
            "--metric required; available: {}",
            available.into_iter().collect::<Vec<_>>().join(", ")
        ))),
    }
}

pub fn run(args: EvalArgs, workers: Option<usize>) -> Result<(), CliError> {
    let space = formats::load_space(&args.space)?;
    let records = formats::load_benchmark(&args.bench, &space)?;
    if records.is_empty() {
        eprintln!("warning: benchmark file is empty");
    }
    let metric = resolve_metric(&records, args.metric.as_deref())?;
    let proxy = parse_proxy(&args.proxy, args.alpha)?;
    let policy = super::parse_init(&args.init, args.seed)?;
    let mode = if args.expected {
        ScoreMode::Expected
    } else {
        ScoreMode::Sampled
    };

    let config = json!({
        "bench": args.bench.display().to_string(),
        "space": space.name,
        "proxy": proxy.name(),
        "metric": metric,
        "alpha": proxy.alpha(),
        "init": policy.descriptor(),
        "seed": args.seed,
        "score_mode": if args.expected { "expected" } else { "sampled" },
        "n": records.len(),
    });
    let mut manifest = RunManifest::start("eval", config);

    let (report, scatter) = evaluate_proxy(
        &records,
        &space,
        &proxy,
        &metric,
        &policy,
        mode,
        resolve_workers(workers),
    )?;

    println!("{}", serde_json::to_string(&report).expect("report serializes"));
    eprintln!(
        "{} vs {}: SPR {:.4}  KT {:.4}  (n={}, {:.4} s/arch) [manifest {}]",
        report.proxy_name,
        report.metric_name,
        report.spr,
        report.kt,
        report.n,
        report.mean_score_time_s,
        manifest.manifest_id
    );

    if let Some(path) = &args.report {
        let mut csv = format!("# manifest: {}\n", manifest.manifest_id);
        csv.push_str("proxy,metric,spr,kt,n,mean_score_time_s,alpha,init_policy\n");
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            report.proxy_name,
            report.metric_name,
            report.spr,
            report.kt,
            report.n,
            report.mean_score_time_s,
            report.alpha.map_or(String::new(), |a| a.to_string()),
            report.init_policy
        ));
        super::write_io(path, csv.as_bytes())?;
        manifest.add_output(path);
    }

    if let Some(path) = &args.scatter {
        let mut csv = format!("# manifest: {}\n", manifest.manifest_id);
        csv.push_str("id,gt_value,gt_rank,score,score_rank\n");
        for p in &scatter {
            csv.push_str(&format!(
                "{},{},{},{},{}\n",
                p.id, p.gt_value, p.gt_rank, p.score, p.score_rank
            ));
        }
        super::write_io(path, csv.as_bytes())?;
        manifest.add_output(path);
    }

    manifest.finish();
    if let Some(path) = &args.manifest {
        manifest.write(path).map_err(CliError::from)?;
    }
    Ok(())
}
