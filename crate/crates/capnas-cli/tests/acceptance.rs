//! Acceptance suite: one test per release criterion, each printing a
//! PASS/FAIL line through the harness. Every tolerance is pinned here.
//!
//! Criterion 9 additionally runs against a user-supplied 500-record GLUE
//! benchmark when `CAPNAS_FLEXIBERT_BENCH` points at one.

use std::sync::Mutex;
use std::time::Instant;

use capnas_core::alphaopt::{
    flag, heuristic_alpha, optimize_alpha_sampling, AlphaGrid, HeuristicInputs,
};
use capnas_core::archspace::{
    ArchitectureSpec, BlockTag, DimExpr, DimValue, DimensionDef, LayerCount, ModuleShape,
    ModuleTemplate, SearchSpaceDef, SpaceKind, SCHEMA_VERSION,
};
use capnas_core::capacity::{
    build_lookup_table, combine, generate_weight, instrument, module_capacity,
    module_capacity_svd, score_blocks, score_blocks_expected, score_blocks_with_table,
    CapacityError, WeightInitPolicy,
};
use capnas_core::rankstats::{
    kendall_tau, kendall_tau_naive, spearman_rho, spearman_rho_naive, PairedSample,
};
use capnas_core::rng::{seeded, uniform01, uniform_index};
use capnas_core::search::{
    exhaustive_pareto, nsga2_search, Objectives, ParamBounds, ParetoFront, SearchConfig,
};
use capnas_cli::benchio::{synth_benchmark, BenchmarkRecord, SYNTH_METRIC};
use capnas_cli::manifest::RunManifest;
use capnas_cli::templates;

/// Weight generation feeds a process-wide instrumentation counter, so tests
/// that generate weights serialize on this lock; criterion 7 needs exclusive
/// access while it asserts a zero generation delta.
static GEN_LOCK: Mutex<()> = Mutex::new(());

fn gen_lock() -> std::sync::MutexGuard<'static, ()> {
    GEN_LOCK.lock().unwrap_or_else(|e| e.into_inner())
}

fn budget(name: &str, started: Instant, limit_s: f64) {
    let elapsed = started.elapsed().as_secs_f64();
    assert!(
        elapsed < limit_s,
        "{name} exceeded its runtime budget: {elapsed:.1}s >= {limit_s}s"
    );
    println!("PASS {name} ({elapsed:.1}s)");
}

#[test]
fn c1_capacity_frobenius_matches_svd_oracle_rel_1e9() {
    let _g = gen_lock();
    let t0 = Instant::now();
    let mut rng = seeded(0xC1);
    let mut shapes = vec![(1usize, 1usize), (512, 2048), (1, 2048), (512, 1)];
    while shapes.len() < 1000 {
        let rows = (2.0f64).powf(uniform01(&mut rng) * 9.0).round() as usize;
        let cols = (2.0f64).powf(uniform01(&mut rng) * 11.0).round() as usize;
        shapes.push((rows.max(1), cols.max(1)));
    }
    let policy = WeightInitPolicy::gaussian(0.05, 0xC1).unwrap();
    for (i, (rows, cols)) in shapes.iter().enumerate() {
        let shape = ModuleShape {
            name: format!("m{i}"),
            rows: *rows,
            cols: *cols,
            block: BlockTag::Attention,
        };
        let w = generate_weight(&shape, &policy, i);
        let fast = module_capacity(&w).unwrap();
        let svd = module_capacity_svd(&w).unwrap();
        assert!(
            (fast - svd).abs() <= 1e-9 * svd.abs(),
            "{rows}x{cols}: frobenius {fast} vs svd {svd}"
        );
    }
    budget("C1 capacity-vs-svd (1000 matrices, 1x1..512x2048, rel 1e-9)", t0, 60.0);
}

#[test]
fn c2_rank_statistics_match_quadratic_oracles_1e12() {
    let t0 = Instant::now();
    let mut rng = seeded(0xC2);
    for round in 0..1000 {
        let n = 2 + uniform_index(&mut rng, 499); // length <= 500
        let levels = 1 + uniform_index(&mut rng, 12); // frequent ties
        let x: Vec<f64> = (0..n).map(|_| uniform_index(&mut rng, levels) as f64).collect();
        let y: Vec<f64> = (0..n)
            .map(|_| uniform_index(&mut rng, levels) as f64 + uniform01(&mut rng))
            .collect();
        let s = PairedSample::new(&x, &y).unwrap();
        match (kendall_tau(s), kendall_tau_naive(s)) {
            (Ok(a), Ok(b)) => assert!((a - b).abs() <= 1e-12, "round {round}: kt {a} vs {b}"),
            (Err(a), Err(b)) => assert_eq!(a, b),
            (a, b) => panic!("round {round}: kt fast {a:?} vs naive {b:?}"),
        }
        match (spearman_rho(s), spearman_rho_naive(s)) {
            (Ok(a), Ok(b)) => assert!((a - b).abs() <= 1e-12, "round {round}: rho {a} vs {b}"),
            (Err(a), Err(b)) => assert_eq!(a, b),
            (a, b) => panic!("round {round}: rho fast {a:?} vs naive {b:?}"),
        }
    }
    budget("C2 rank statistics vs naive oracles (1000 vectors, 1e-12)", t0, 30.0);
}

fn recovered_alpha(
    space: &SearchSpaceDef,
    true_alpha: f64,
    noise_sigma: f64,
    seed: u64,
    policy: &WeightInitPolicy,
) -> f64 {
    let records = synth_benchmark(space, 200, true_alpha, noise_sigma, seed, policy).unwrap();
    let truth: Vec<f64> = records.iter().map(|r| r.metrics[SYNTH_METRIC]).collect();
    let mut s_attn = Vec::with_capacity(records.len());
    let mut s_ffn = Vec::with_capacity(records.len());
    for r in &records {
        let b = score_blocks(space, &r.arch, policy).unwrap();
        s_attn.push(b.total_attn);
        s_ffn.push(b.total_ffn);
    }
    optimize_alpha_sampling(&truth, &s_attn, &s_ffn, &AlphaGrid::default())
        .unwrap()
        .alpha_star
}

#[test]
fn c3_benchmark_sampling_recovers_true_alpha() {
    let _g = gen_lock();
    let t0 = Instant::now();
    let space = templates::template("toy").unwrap();
    let policy = WeightInitPolicy::default_with_seed(0);
    let settings = [-0.5, 0.0, 0.3, 0.8];

    // noiseless: within one grid step in every run
    for &true_alpha in &settings {
        for seed in 1..=3 {
            let got = recovered_alpha(&space, true_alpha, 0.0, seed, &policy);
            assert!(
                (got - true_alpha).abs() <= 0.1 + 1e-9,
                "noiseless true_alpha {true_alpha} seed {seed}: got {got}"
            );
        }
    }

    // 1% noise: at least 18 of 20 seeded runs per setting
    for &true_alpha in &settings {
        let mut hits = 0;
        for seed in 100..120 {
            let got = recovered_alpha(&space, true_alpha, 0.01, seed, &policy);
            if (got - true_alpha).abs() <= 0.1 + 1e-9 {
                hits += 1;
            }
        }
        assert!(hits >= 18, "true_alpha {true_alpha}: only {hits}/20 runs recovered");
        println!("  true_alpha {true_alpha}: {hits}/20 noisy runs within one grid step");
    }
    budget("C3 alpha recovery (noiseless exact, 1% noise >= 18/20)", t0, 300.0);
}

#[test]
fn c4_heuristic_alpha_worked_values_and_flag_boundary() {
    let t0 = Instant::now();
    let a = heuristic_alpha(&HeuristicInputs::new(0.5, 0.8, 0.4).unwrap()).unwrap();
    assert!((a - (-0.34)).abs() <= 1e-12, "case 1 gave {a}");
    let b = heuristic_alpha(&HeuristicInputs::new(0.2, 0.3, 0.0).unwrap()).unwrap();
    assert!((b - 0.86).abs() <= 1e-12, "case 2 gave {b}");
    // determinism: bit-equal on repetition
    let b2 = heuristic_alpha(&HeuristicInputs::new(0.2, 0.3, 0.0).unwrap()).unwrap();
    assert_eq!(b.to_bits(), b2.to_bits());
    // boundary: phi == tau_ap maps to -1
    assert_eq!(flag(0.5, 0.5), -1);
    assert_eq!(flag(0.6, 0.5), 1);
    assert_eq!(flag(-0.1, 0.0), -1);
    budget("C4 heuristic alpha worked values and flag boundary", t0, 10.0);
}

#[test]
fn c5_seed_stability_on_flexibert_architectures() {
    let _g = gen_lock();
    let t0 = Instant::now();
    let space = templates::template("flexibert").unwrap();
    let probe = WeightInitPolicy::default_with_seed(0);

    // Pick 10 architectures with well-separated expected proxies, mirroring
    // a decile spread; expected-mode scoring generates no weights.
    let mut rng = seeded(5);
    let mut picked: Vec<(ArchitectureSpec, f64)> = Vec::new();
    while picked.len() < 10 {
        let arch = space.sample_with(&mut rng);
        let expected = combine(&score_blocks_expected(&space, &arch, &probe).unwrap(), 0.5);
        if picked
            .iter()
            .all(|(_, e)| (expected - e).abs() > 0.05 * e.abs().max(expected.abs()))
        {
            picked.push((arch, expected));
        }
    }

    let mut per_seed_scores: Vec<Vec<f64>> = Vec::new();
    let mut per_seed_ranking: Vec<Vec<usize>> = Vec::new();
    for seed in 0..10u64 {
        let policy = WeightInitPolicy::default_with_seed(seed);
        let scores: Vec<f64> = picked
            .iter()
            .map(|(arch, _)| combine(&score_blocks(&space, arch, &policy).unwrap(), 0.5))
            .collect();
        let mut order: Vec<usize> = (0..scores.len()).collect();
        order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
        per_seed_ranking.push(order);
        per_seed_scores.push(scores);
    }

    // per-architecture relative std over the 10 seeds
    for arch_idx in 0..10 {
        let series: Vec<f64> = per_seed_scores.iter().map(|s| s[arch_idx]).collect();
        let mean = series.iter().sum::<f64>() / series.len() as f64;
        let var = series.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
            / series.len() as f64;
        let rel_std = var.sqrt() / mean;
        assert!(rel_std <= 0.02, "architecture {arch_idx}: relative std {rel_std}");
    }
    for ranking in &per_seed_ranking[1..] {
        assert_eq!(ranking, &per_seed_ranking[0], "ranking changed across seeds");
    }
    budget("C5 seed stability (10 archs x 10 seeds, rel std <= 2%, stable ranking)", t0, 120.0);
}

fn capacity_evaluator<'a>(
    space: &'a SearchSpaceDef,
    table: Option<&'a capnas_core::capacity::LookupTable>,
    policy: &'a WeightInitPolicy,
    alpha: f64,
) -> impl Fn(&ArchitectureSpec) -> Result<Objectives, CapacityError> + 'a {
    move |arch| {
        let blocks = match table {
            Some(t) => score_blocks_with_table(space, arch, t)?,
            None => score_blocks(space, arch, policy)?,
        };
        Ok(Objectives {
            proxy: combine(&blocks, alpha),
            tflops: space.estimate_tflops(arch, 64)?,
            params: space.count_params(arch, false)?,
        })
    }
}

fn assert_front_matches_oracle(
    space: &SearchSpaceDef,
    policy: &WeightInitPolicy,
    bounds: ParamBounds,
    population: usize,
) {
    let table = build_lookup_table(space, policy).unwrap();
    let eval = capacity_evaluator(space, Some(&table), policy, 0.5);
    let oracle = exhaustive_pareto(space, &eval, &bounds, 10_000).unwrap();
    let cfg = SearchConfig {
        population,
        generations: 5,
        param_bounds: bounds,
        seed: 7,
        alpha: 0.5,
        ..Default::default()
    };
    let outcome = nsga2_search(space, &eval, &cfg).unwrap();
    let ids = |f: &ParetoFront| -> Vec<String> {
        f.members.iter().map(|c| c.arch.id.clone()).collect()
    };
    assert_eq!(
        ids(&outcome.front),
        ids(&oracle),
        "front differs from exhaustive oracle on space `{}`",
        space.name
    );
    assert!(!oracle.members.is_empty(), "oracle front empty on `{}`", space.name);
    for c in &outcome.front.members {
        assert!(bounds.feasible(c.params), "member outside bounds on `{}`", space.name);
    }
}

#[test]
fn c6_nsga2_front_equals_exhaustive_pareto_on_three_toy_spaces() {
    let _g = gen_lock();
    let t0 = Instant::now();
    let policy = WeightInitPolicy::default_with_seed(3);

    // (a) nine architectures, unconstrained
    let dim = |name: &str, values: &[u64]| DimensionDef {
        name: name.to_string(),
        layer_scoped: true,
        embedding: false,
        values: values.iter().copied().map(DimValue::Int).collect(),
        per_layer_values: None,
    };
    let square = |name: &str, block: BlockTag, d: &str| ModuleTemplate {
        name: name.to_string(),
        block,
        rows: DimExpr::Ref(d.to_string()),
        cols: DimExpr::Ref(d.to_string()),
        repeat: None,
        per_layer: true,
    };
    let nine = SearchSpaceDef {
        schema_version: SCHEMA_VERSION,
        name: "nine".to_string(),
        kind: SpaceKind::Homogeneous,
        num_layers: LayerCount::Fixed(1),
        constants: Default::default(),
        dimensions: vec![dim("attn_dim", &[16, 32, 64]), dim("ffn_dim", &[24, 48, 96])],
        modules: vec![
            square("q", BlockTag::Attention, "attn_dim"),
            square("f1", BlockTag::Ffn, "ffn_dim"),
        ],
        attn_score_dim: None,
        count_bias: false,
    };
    nine.validate().unwrap();
    assert_front_matches_oracle(&nine, &policy, ParamBounds::unbounded(), 16);

    // (b) the 4096-architecture toy template with biting bounds
    let toy = templates::template("toy").unwrap();
    assert_front_matches_oracle(&toy, &policy, ParamBounds { low: 50_000, high: 250_000 }, 4096);

    // (c) a 3456-architecture space with a global width and bounds
    let mut medium = SearchSpaceDef {
        schema_version: SCHEMA_VERSION,
        name: "medium".to_string(),
        kind: SpaceKind::Homogeneous,
        num_layers: LayerCount::Fixed(3),
        constants: Default::default(),
        dimensions: vec![
            dim("attn_dim", &[16, 32, 48, 64]),
            dim("ffn_dim", &[24, 48, 72]),
        ],
        modules: vec![
            square("q", BlockTag::Attention, "attn_dim"),
            square("k", BlockTag::Attention, "attn_dim"),
            square("f1", BlockTag::Ffn, "ffn_dim"),
        ],
        attn_score_dim: None,
        count_bias: false,
    };
    medium.dimensions.push(DimensionDef {
        name: "hidden".to_string(),
        layer_scoped: false,
        embedding: false,
        values: vec![DimValue::Int(64), DimValue::Int(96)],
        per_layer_values: None,
    });
    medium.modules.push(ModuleTemplate {
        name: "o".to_string(),
        block: BlockTag::Attention,
        rows: DimExpr::Ref("attn_dim".to_string()),
        cols: DimExpr::Ref("hidden".to_string()),
        repeat: None,
        per_layer: true,
    });
    medium.validate().unwrap();
    assert_front_matches_oracle(&medium, &policy, ParamBounds { low: 10_000, high: 40_000 }, 3456);

    budget("C6 NSGA-II equals exhaustive Pareto set on three toy spaces", t0, 180.0);
}

#[test]
fn c7_lookup_table_scoring_bitwise_equal_and_generation_free() {
    let _g = gen_lock();
    let t0 = Instant::now();
    let space = templates::template("toy").unwrap();
    let policy = WeightInitPolicy::default_with_seed(17);
    let table = build_lookup_table(&space, &policy).unwrap();

    let mut rng = seeded(42);
    let archs: Vec<ArchitectureSpec> = (0..1000).map(|_| space.sample_with(&mut rng)).collect();

    let direct: Vec<_> = archs
        .iter()
        .map(|a| score_blocks(&space, a, &policy).unwrap())
        .collect();

    let before = instrument::weight_generations();
    let tabled: Vec<_> = archs
        .iter()
        .map(|a| score_blocks_with_table(&space, a, &table).unwrap())
        .collect();
    let after = instrument::weight_generations();
    assert_eq!(after, before, "table-backed scoring generated weights");

    for (d, t) in direct.iter().zip(&tabled) {
        assert_eq!(d.total_attn.to_bits(), t.total_attn.to_bits());
        assert_eq!(d.total_ffn.to_bits(), t.total_ffn.to_bits());
        assert_eq!(d.per_layer_attn, t.per_layer_attn);
        assert_eq!(d.per_layer_ffn, t.per_layer_ffn);
    }
    budget("C7 lookup-table scoring bitwise equal, zero generations (1000 archs)", t0, 120.0);
}

#[test]
fn c8_throughput_mean_proxy_time_on_flexibert_samples() {
    let _g = gen_lock();
    let t0 = Instant::now();
    let space = templates::template("flexibert").unwrap();
    let policy = WeightInitPolicy::default_with_seed(0);
    let mut rng = seeded(88);
    let archs: Vec<ArchitectureSpec> = (0..25).map(|_| space.sample_with(&mut rng)).collect();

    let run = Instant::now();
    for arch in &archs {
        let blocks = score_blocks(&space, arch, &policy).unwrap();
        let _ = combine(&blocks, 0.5);
    }
    let mean = run.elapsed().as_secs_f64() / archs.len() as f64;
    println!(
        "  mean proxy time {mean:.4} s/arch; soft target 1.0 s (published reference 0.883 s)"
    );
    assert!(mean < 2.0, "mean proxy time {mean:.3} s exceeds the 2 s hard ceiling");
    if mean > 1.0 {
        println!("  note: above the 1.0 s soft target (logged, not a failure)");
    }
    budget("C8 throughput (mean per-architecture proxy time)", t0, 120.0);
}

#[test]
fn c9_paper_number_pathway_consistency() {
    let _g = gen_lock();
    let t0 = Instant::now();
    let space = templates::template("flexibert").unwrap();
    let policy = WeightInitPolicy::default_with_seed(0);

    // Stand-in records exercise the pathway unconditionally; a user-supplied
    // file (CAPNAS_FLEXIBERT_BENCH) is used instead when present.
    let (records, metric, source): (Vec<BenchmarkRecord>, String, String) =
        match std::env::var("CAPNAS_FLEXIBERT_BENCH") {
            Ok(path) => {
                let records =
                    capnas_cli::formats::load_benchmark(std::path::Path::new(&path), &space)
                        .expect("user benchmark loads");
                let metric = records
                    .first()
                    .and_then(|r| r.metrics.keys().next().cloned())
                    .expect("benchmark has a metric");
                (records, metric, format!("user file {path}"))
            }
            Err(_) => {
                let records = synth_benchmark(&space, 120, 0.4, 0.02, 31, &policy).unwrap();
                (records, SYNTH_METRIC.to_string(), "synthetic stand-in".to_string())
            }
        };
    println!("  pathway source: {source} ({} records)", records.len());

    // Algorithm-1 alpha on a 50-record sample
    let k = 50.min(records.len());
    let subset = &records[..k];
    let truth: Vec<f64> = subset.iter().map(|r| r.metrics[&metric]).collect();
    let mut s_attn = Vec::with_capacity(k);
    let mut s_ffn = Vec::with_capacity(k);
    for r in subset {
        let b = score_blocks(&space, &r.arch, &policy).unwrap();
        s_attn.push(b.total_attn);
        s_ffn.push(b.total_ffn);
    }
    let tuned = optimize_alpha_sampling(&truth, &s_attn, &s_ffn, &AlphaGrid::default()).unwrap();

    // Evaluate the tuned proxy on the full record set
    let (report, scatter) = capnas_cli::benchio::evaluate_proxy(
        &records,
        &space,
        &capnas_cli::benchio::ProxyKind::Zerolm { alpha: tuned.alpha_star },
        &metric,
        &policy,
        capnas_cli::benchio::ScoreMode::Sampled,
        0,
    )
    .unwrap();

    // internal consistency only; reference point for the public 500-record
    // GLUE benchmark is KT 0.532 / SPR 0.765, documented but not asserted
    assert!((-1.0..=1.0).contains(&report.kt), "kt {}", report.kt);
    assert!((-1.0..=1.0).contains(&report.spr), "spr {}", report.spr);
    assert_eq!(report.n, records.len());
    assert_eq!(scatter.len(), records.len());
    assert!(report.mean_score_time_s > 0.0);
    println!(
        "  tuned alpha {:.3}; KT {:.3} SPR {:.3} (reference point 0.532 / 0.765, not asserted)",
        tuned.alpha_star, report.kt, report.spr
    );

    // manifest completeness
    let mut manifest = RunManifest::start(
        "eval",
        serde_json::json!({
            "space": space.name,
            "proxy": format!("zerolm({})", tuned.alpha_star),
            "metric": metric,
            "alpha": tuned.alpha_star,
            "init": policy.descriptor(),
            "k": k,
            "grid": "-1.5:1.5:0.1",
        }),
    );
    manifest.finish();
    assert!(manifest.manifest_id.starts_with('m'));
    assert!(!manifest.tool_version.is_empty());
    assert!(!manifest.started.is_empty() && !manifest.finished.is_empty());
    for key in ["alpha", "init", "metric", "grid", "k"] {
        assert!(!manifest.config[key].is_null(), "manifest config missing {key}");
    }
    budget("C9 benchmark pathway internal consistency (reference documented)", t0, 300.0);
}
