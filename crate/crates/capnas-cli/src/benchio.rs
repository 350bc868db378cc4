//! Benchmark ingestion and the proxy evaluation harness: correlation reports
//! with per-architecture timing, synthetic benchmark generation, and the
//! sampled inputs for the heuristic alpha route.

use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use capnas_core::alphaopt::{AlphaError, HeuristicInputs};
use capnas_core::archspace::{ArchitectureSpec, SearchSpaceDef, SpaceError};
use capnas_core::capacity::{
    combine, log_complexity, score_blocks, score_blocks_expected, BlockScores, CapacityError,
    WeightInitPolicy,
};
use capnas_core::rankstats::{
    average_ranks, kendall_tau, spearman_rho, PairedSample, RankError,
};
use capnas_core::rng::{seeded, NormalSampler};

/// An architecture paired with one or more ground-truth metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRecord {
    pub arch: ArchitectureSpec,
    pub metrics: BTreeMap<String, f64>,
}

/// Proxy selector for [`evaluate_proxy`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProxyKind {
    /// Combined capacity proxy `alpha * S_attn + (1 - alpha) * S_ffn`.
    Zerolm { alpha: f64 },
    /// Parameter-count baseline (no RNG involved).
    Params { include_other: bool },
    /// Sum of log Frobenius norms over scored matrices.
    LogComplexity,
    AttnOnly,
    FfnOnly,
}

impl ProxyKind {
    pub fn name(&self) -> String {
        match self {
            ProxyKind::Zerolm { alpha } => format!("zerolm({alpha})"),
            ProxyKind::Params { include_other: true } => "params(all)".to_string(),
            ProxyKind::Params { include_other: false } => "params".to_string(),
            ProxyKind::LogComplexity => "log_complexity".to_string(),
            ProxyKind::AttnOnly => "attn_only".to_string(),
            ProxyKind::FfnOnly => "ffn_only".to_string(),
        }
    }

    pub fn alpha(&self) -> Option<f64> {
        match self {
            ProxyKind::Zerolm { alpha } => Some(*alpha),
            _ => None,
        }
    }
}

/// Whether scoring samples weights or uses the analytic expectation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreMode {
    #[default]
    Sampled,
    Expected,
}

/// SPR/KT of one proxy against one metric, with mean scoring time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub proxy_name: String,
    pub metric_name: String,
    pub spr: f64,
    pub kt: f64,
    pub n: usize,
    pub mean_score_time_s: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    pub init_policy: String,
}

/// One scatter point: ground-truth rank vs proxy rank for a record.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScatterPoint {
    pub id: String,
    pub gt_value: f64,
    pub gt_rank: f64,
    pub score: f64,
    pub score_rank: f64,
}

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: malformed record: {message}")]
    Malformed {
        path: String,
        line: usize,
        message: String,
    },
    #[error("{path}:{line}: {source}")]
    InvalidArch {
        path: String,
        line: usize,
        #[source]
        source: SpaceError,
    },
    #[error("{path}:{line}: duplicate architecture id `{id}`")]
    DuplicateId {
        path: String,
        line: usize,
        id: String,
    },
    #[error("benchmark file belongs to space `{file_space}`, expected `{space}`")]
    SpaceNameMismatch { file_space: String, space: String },
    #[error("unsupported schema_version {version}")]
    UnsupportedSchema { version: u32 },
    #[error("metric name `{name}` does not normalize to a lowercase identifier")]
    BadMetricName { name: String },
    #[error("record `{id}` lacks metric `{metric}`; available: {available}")]
    MissingMetric {
        id: String,
        metric: String,
        available: String,
    },
    #[error("need at least {need} records for this operation, got {got}")]
    TooFewRecords { need: usize, got: usize },
    #[error("noise sigma must be non-negative, got {sigma}")]
    NegativeNoise { sigma: f64 },
    #[error("could not draw {n} distinct architectures after {attempts} attempts; space too small")]
    SamplingExhausted { n: usize, attempts: usize },
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error(transparent)]
    Capacity(#[from] CapacityError),
    #[error(transparent)]
    Rank(#[from] RankError),
    #[error(transparent)]
    Alpha(#[from] AlphaError),
}

impl BenchError {
    /// Stable process exit code: 1 IO, 2 validation/usage, 3 degeneracy.
    pub fn exit_code(&self) -> i32 {
        match self {
            BenchError::Io { .. } => 1,
            BenchError::Rank(RankError::Degenerate { .. }) => 3,
            BenchError::Alpha(
                AlphaError::OptimizationFailed
                | AlphaError::DivisionDegeneracy { .. }
                | AlphaError::InsufficientValidGrid { .. },
            ) => 3,
            _ => 2,
        }
    }
}

/// Resolves the scoring worker count: explicit flag, then the
/// `CAPNAS_WORKERS` environment variable, then the rayon default.
pub fn resolve_workers(flag: Option<usize>) -> usize {
    flag.or_else(|| {
        std::env::var("CAPNAS_WORKERS")
            .ok()
            .and_then(|v| v.parse().ok())
    })
    .unwrap_or(0)
}

fn pool(workers: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .expect("thread pool")
}

pub fn blocks_for(
    space: &SearchSpaceDef,
    arch: &ArchitectureSpec,
    policy: &WeightInitPolicy,
    mode: ScoreMode,
) -> Result<BlockScores, CapacityError> {
    match mode {
        ScoreMode::Sampled => score_blocks(space, arch, policy),
        ScoreMode::Expected => score_blocks_expected(space, arch, policy),
    }
}

fn proxy_score(
    space: &SearchSpaceDef,
    arch: &ArchitectureSpec,
    proxy: &ProxyKind,
    policy: &WeightInitPolicy,
    mode: ScoreMode,
) -> Result<f64, BenchError> {
    let score = match proxy {
        ProxyKind::Zerolm { alpha } => combine(&blocks_for(space, arch, policy, mode)?, *alpha),
        ProxyKind::AttnOnly => blocks_for(space, arch, policy, mode)?.total_attn,
        ProxyKind::FfnOnly => blocks_for(space, arch, policy, mode)?.total_ffn,
        ProxyKind::Params { include_other } => space.count_params(arch, *include_other)? as f64,
        ProxyKind::LogComplexity => log_complexity(space, arch, policy)?,
    };
    Ok(score)
}

/// Scores every record with `proxy` and correlates against `metric_name`.
/// Record scoring runs on `workers` threads; results are order-canonical.
pub fn evaluate_proxy(
    records: &[BenchmarkRecord],
    space: &SearchSpaceDef,
    proxy: &ProxyKind,
    metric_name: &str,
    policy: &WeightInitPolicy,
    mode: ScoreMode,
    workers: usize,
) -> Result<(CorrelationReport, Vec<ScatterPoint>), BenchError> {
    if records.len() < 3 {
        return Err(BenchError::TooFewRecords {
            need: 3,
            got: records.len(),
        });
    }
    let mut truth = Vec::with_capacity(records.len());
    for r in records {
        let value = r.metrics.get(metric_name).ok_or_else(|| BenchError::MissingMetric {
            id: r.arch.id.clone(),
            metric: metric_name.to_string(),
            available: r.metrics.keys().cloned().collect::<Vec<_>>().join(", "),
        })?;
        truth.push(*value);
    }

    let scored: Vec<Result<(f64, f64), BenchError>> = pool(workers).install(|| {
        records
            .par_iter()
            .map(|r| {
                let t0 = Instant::now();
                let score = proxy_score(space, &r.arch, proxy, policy, mode)?;
                Ok((score, t0.elapsed().as_secs_f64()))
            })
            .collect()
    });
    let mut scores = Vec::with_capacity(records.len());
    let mut total_time = 0.0;
    for item in scored {
        let (score, secs) = item?;
        scores.push(score);
        total_time += secs;
    }

    let sample = PairedSample::new(&truth, &scores)?;
    let kt = kendall_tau(sample)?;
    let spr = spearman_rho(sample)?;

    let gt_ranks = average_ranks(&truth);
    let score_ranks = average_ranks(&scores);
    let scatter = records
        .iter()
        .enumerate()
        .map(|(i, r)| ScatterPoint {
            id: r.arch.id.clone(),
            gt_value: truth[i],
            gt_rank: gt_ranks[i],
            score: scores[i],
            score_rank: score_ranks[i],
        })
        .collect();

    let init_policy = match proxy {
        ProxyKind::Params { .. } => "none".to_string(),
        _ => match mode {
            ScoreMode::Sampled => policy.descriptor(),
            ScoreMode::Expected => format!("expected[{}]", policy.descriptor()),
        },
    };
    Ok((
        CorrelationReport {
            proxy_name: proxy.name(),
            metric_name: metric_name.to_string(),
            spr,
            kt,
            n: records.len(),
            mean_score_time_s: total_time / records.len() as f64,
            alpha: proxy.alpha(),
            init_policy,
        },
        scatter,
    ))
}

/// Metric name used by [`synth_benchmark`].
pub const SYNTH_METRIC: &str = "synthetic";

/// Samples `n` distinct architectures and assigns the metric
/// `true_alpha * S_attn + (1 - true_alpha) * S_ffn`, standardized, plus
/// Gaussian noise of `noise_sigma`. Deterministic under `seed`.
pub fn synth_benchmark(
    space: &SearchSpaceDef,
    n: usize,
    true_alpha: f64,
    noise_sigma: f64,
    seed: u64,
    policy: &WeightInitPolicy,
) -> Result<Vec<BenchmarkRecord>, BenchError> {
    if n < 10 {
        return Err(BenchError::TooFewRecords { need: 10, got: n });
    }
    if noise_sigma < 0.0 {
        return Err(BenchError::NegativeNoise { sigma: noise_sigma });
    }
    space.validate()?;

    let mut rng = seeded(seed);
    let mut seen = std::collections::BTreeSet::new();
    let mut archs = Vec::with_capacity(n);
    let max_attempts = 100 * n;
    let mut attempts = 0;
    while archs.len() < n {
        if attempts >= max_attempts {
            return Err(BenchError::SamplingExhausted { n, attempts });
        }
        attempts += 1;
        let arch = space.sample_with(&mut rng);
        if seen.insert(arch.id.clone()) {
            archs.push(arch);
        }
    }

    let mut raw = Vec::with_capacity(n);
    for arch in &archs {
        let blocks = score_blocks(space, arch, policy)?;
        raw.push(combine(&blocks, true_alpha));
    }
    let mean = raw.iter().sum::<f64>() / n as f64;
    let var = raw.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    let std = var.sqrt();
    let mut sampler = NormalSampler::new();
    let records = archs
        .into_iter()
        .zip(raw)
        .map(|(arch, value)| {
            let standardized = if std > 0.0 { (value - mean) / std } else { 0.0 };
            let noisy = standardized + noise_sigma * sampler.next(&mut rng);
            BenchmarkRecord {
                arch,
                metrics: BTreeMap::from([(SYNTH_METRIC.to_string(), noisy)]),
            }
        })
        .collect();
    Ok(records)
}

/// Attention-only, FFN-only and parameter-count vectors for `archs`, reduced
/// to the three pairwise Kendall correlations the heuristic needs. Uses
/// proxies only; no ground-truth metrics are read.
pub fn heuristic_inputs_from_archs(
    archs: &[ArchitectureSpec],
    space: &SearchSpaceDef,
    policy: &WeightInitPolicy,
    mode: ScoreMode,
) -> Result<HeuristicInputs, BenchError> {
    if archs.len() < 10 {
        return Err(BenchError::TooFewRecords {
            need: 10,
            got: archs.len(),
        });
    }
    let mut attn = Vec::with_capacity(archs.len());
    let mut ffn = Vec::with_capacity(archs.len());
    let mut params = Vec::with_capacity(archs.len());
    for arch in archs {
        let blocks = blocks_for(space, arch, policy, mode)?;
        attn.push(blocks.total_attn);
        ffn.push(blocks.total_ffn);
        params.push(space.count_params(arch, false)? as f64);
    }
    let tau_ap = kendall_tau(PairedSample::new(&attn, &params)?)?;
    let tau_fp = kendall_tau(PairedSample::new(&ffn, &params)?)?;
    let tau_af = kendall_tau(PairedSample::new(&attn, &ffn)?)?;
    Ok(HeuristicInputs::new(tau_ap, tau_fp, tau_af)?)
}

/// [`heuristic_inputs_from_archs`] over a benchmark-record subset.
pub fn heuristic_inputs_from_sample(
    records: &[BenchmarkRecord],
    space: &SearchSpaceDef,
    policy: &WeightInitPolicy,
    mode: ScoreMode,
) -> Result<HeuristicInputs, BenchError> {
    let archs: Vec<ArchitectureSpec> = records.iter().map(|r| r.arch.clone()).collect();
    heuristic_inputs_from_archs(&archs, space, policy, mode)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::templates;
    use capnas_core::alphaopt::{optimize_alpha_sampling, AlphaGrid};
    use capnas_core::archspace::DimValue;

    fn toy() -> SearchSpaceDef {
        templates::template("toy").unwrap()
    }

    fn policy() -> WeightInitPolicy {
        WeightInitPolicy::default_with_seed(11)
    }

    #[test]
    fn self_correlation_is_one_and_negation_flips() {
        let space = toy();
        let records = synth_benchmark(&space, 30, 0.4, 0.0, 5, &policy()).unwrap();
        // define truth as the proxy's own score
        let proxy = ProxyKind::Zerolm { alpha: 0.4 };
        let mut self_records = records.clone();
        for r in &mut self_records {
            let s = proxy_score(&space, &r.arch, &proxy, &policy(), ScoreMode::Sampled).unwrap();
            r.metrics.insert("self".to_string(), s);
            r.metrics.insert("neg".to_string(), -s);
        }
        let (rep, scatter) =
            evaluate_proxy(&self_records, &space, &proxy, "self", &policy(), ScoreMode::Sampled, 1)
                .unwrap();
        assert_eq!(rep.kt, 1.0);
        assert_eq!(rep.spr, 1.0);
        assert_eq!(scatter.len(), 30);
        let (rep, _) =
            evaluate_proxy(&self_records, &space, &proxy, "neg", &policy(), ScoreMode::Sampled, 1)
                .unwrap();
        assert_eq!(rep.kt, -1.0);
        assert_eq!(rep.spr, -1.0);
    }

    #[test]
    fn noiseless_synth_gives_exact_kt_for_true_alpha() {
        let space = toy();
        let records = synth_benchmark(&space, 40, 0.3, 0.0, 9, &policy()).unwrap();
        let proxy = ProxyKind::Zerolm { alpha: 0.3 };
        let (rep, _) =
            evaluate_proxy(&records, &space, &proxy, SYNTH_METRIC, &policy(), ScoreMode::Sampled, 2)
                .unwrap();
        assert_eq!(rep.kt, 1.0);
    }

    #[test]
    fn zerolm_beats_params_on_synthetic() {
        let space = toy();
        let records = synth_benchmark(&space, 60, 0.3, 0.01, 13, &policy()).unwrap();
        let (z, _) = evaluate_proxy(
            &records,
            &space,
            &ProxyKind::Zerolm { alpha: 0.3 },
            SYNTH_METRIC,
            &policy(),
            ScoreMode::Sampled,
            0,
        )
        .unwrap();
        let (p, _) = evaluate_proxy(
            &records,
            &space,
            &ProxyKind::Params { include_other: false },
            SYNTH_METRIC,
            &policy(),
            ScoreMode::Sampled,
            0,
        )
        .unwrap();
        assert!(z.kt > p.kt, "zerolm {} vs params {}", z.kt, p.kt);
        assert_eq!(p.init_policy, "none");
    }

    #[test]
    fn params_proxy_is_policy_independent() {
        let space = toy();
        let records = synth_benchmark(&space, 20, 0.5, 0.0, 3, &policy()).unwrap();
        let p1 = WeightInitPolicy::default_with_seed(1);
        let p2 = WeightInitPolicy::fan_in(999);
        let proxy = ProxyKind::Params { include_other: false };
        let (a, _) =
            evaluate_proxy(&records, &space, &proxy, SYNTH_METRIC, &p1, ScoreMode::Sampled, 1)
                .unwrap();
        let (b, _) =
            evaluate_proxy(&records, &space, &proxy, SYNTH_METRIC, &p2, ScoreMode::Sampled, 1)
                .unwrap();
        assert_eq!(a.kt, b.kt);
        assert_eq!(a.spr, b.spr);
    }

    #[test]
    fn kt_invariant_under_record_reordering() {
        let space = toy();
        let records = synth_benchmark(&space, 25, 0.2, 0.02, 21, &policy()).unwrap();
        let proxy = ProxyKind::Zerolm { alpha: 0.2 };
        let (a, _) =
            evaluate_proxy(&records, &space, &proxy, SYNTH_METRIC, &policy(), ScoreMode::Sampled, 1)
                .unwrap();
        let mut shuffled = records.clone();
        shuffled.reverse();
        shuffled.swap(0, 5);
        let (b, _) =
            evaluate_proxy(&shuffled, &space, &proxy, SYNTH_METRIC, &policy(), ScoreMode::Sampled, 1)
                .unwrap();
        assert_eq!(a.kt, b.kt);
        assert_eq!(a.spr, b.spr);
    }

    #[test]
    fn synth_seeds_give_nearly_disjoint_ids() {
        let space = toy(); // 4096 architectures
        let a = synth_benchmark(&space, 50, 0.3, 0.0, 1, &policy()).unwrap();
        let b = synth_benchmark(&space, 50, 0.3, 0.0, 2, &policy()).unwrap();
        let ids_a: std::collections::BTreeSet<_> = a.iter().map(|r| r.arch.id.clone()).collect();
        let collisions = b.iter().filter(|r| ids_a.contains(&r.arch.id)).count();
        // expected collisions ~ 50*50/4096 < 1; allow generous slack
        assert!(collisions <= 5, "collisions {collisions}");
    }

    #[test]
    fn noiseless_recovery_of_true_alpha() {
        let space = toy();
        let records = synth_benchmark(&space, 200, 0.3, 0.0, 4, &policy()).unwrap();
        let truth: Vec<f64> = records.iter().map(|r| r.metrics[SYNTH_METRIC]).collect();
        let mut attn = Vec::new();
        let mut ffn = Vec::new();
        for r in &records {
            let b = score_blocks(&space, &r.arch, &policy()).unwrap();
            attn.push(b.total_attn);
            ffn.push(b.total_ffn);
        }
        let res = optimize_alpha_sampling(&truth, &attn, &ffn, &AlphaGrid::default()).unwrap();
        assert!(
            (res.alpha_star - 0.3).abs() <= 0.1 + 1e-9,
            "alpha_star {}",
            res.alpha_star
        );
    }

    #[test]
    fn heuristic_inputs_deterministic_and_degenerate_cases() {
        let space = toy();
        let records = synth_benchmark(&space, 50, 0.5, 0.0, 8, &policy()).unwrap();
        let a = heuristic_inputs_from_sample(&records, &space, &policy(), ScoreMode::Sampled)
            .unwrap();
        let b = heuristic_inputs_from_sample(&records, &space, &policy(), ScoreMode::Sampled)
            .unwrap();
        assert_eq!(a, b);

        // force every FFN config identical -> params vs ffn degenerates
        let mut frozen = records.clone();
        for r in &mut frozen {
            for layer in &mut r.arch.layers {
                layer.insert("ffn_dim".to_string(), DimValue::Int(96));
                layer.insert("attn_dim".to_string(), DimValue::Int(64));
            }
            r.arch.recompute_id();
        }
        frozen.truncate(12);
        // all archs identical now: every vector fully tied
        let err = heuristic_inputs_from_sample(&frozen, &space, &policy(), ScoreMode::Sampled);
        assert!(matches!(err, Err(BenchError::Rank(RankError::Degenerate { .. }))));
    }

    #[test]
    fn monotone_params_vs_ffn_width_gives_tau_one() {
        // One layer, attention fixed: parameter count and ffn capacity are
        // both strictly monotone in the single ffn width, so tau_fp = 1.
        // (tau_ap degenerates on such a space, so the correlation is
        // computed directly.)
        let mut space = toy();
        space.num_layers = capnas_core::archspace::LayerCount::Fixed(1);
        space.dimensions[0].values = vec![DimValue::Int(64)];
        space.dimensions[1].values = (0..12).map(|i| DimValue::Int(64 + 16 * i)).collect();
        space.validate().unwrap();
        let records = synth_benchmark(&space, 10, 0.5, 0.0, 10, &policy()).unwrap();
        let mut ffn = Vec::new();
        let mut params = Vec::new();
        for r in &records {
            let b = score_blocks(&space, &r.arch, &policy()).unwrap();
            ffn.push(b.total_ffn);
            params.push(space.count_params(&r.arch, false).unwrap() as f64);
        }
        let tau_fp = kendall_tau(PairedSample::new(&ffn, &params).unwrap()).unwrap();
        assert!((tau_fp - 1.0).abs() < 1e-12, "tau_fp {tau_fp}");
    }

    #[test]
    fn missing_metric_lists_available() {
        let space = toy();
        let records = synth_benchmark(&space, 12, 0.5, 0.0, 2, &policy()).unwrap();
        let err = evaluate_proxy(
            &records,
            &space,
            &ProxyKind::Params { include_other: false },
            "glue_score",
            &policy(),
            ScoreMode::Sampled,
            1,
        )
        .unwrap_err();
        match err {
            BenchError::MissingMetric { available, .. } => assert!(available.contains(SYNTH_METRIC)),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let space = toy();
        let records = synth_benchmark(&space, 24, 0.4, 0.01, 17, &policy()).unwrap();
        let proxy = ProxyKind::Zerolm { alpha: 0.4 };
        let (one, _) =
            evaluate_proxy(&records, &space, &proxy, SYNTH_METRIC, &policy(), ScoreMode::Sampled, 1)
                .unwrap();
        let (four, _) =
            evaluate_proxy(&records, &space, &proxy, SYNTH_METRIC, &policy(), ScoreMode::Sampled, 4)
                .unwrap();
        assert_eq!(one.kt, four.kt);
        assert_eq!(one.spr, four.spr);
    }
}
