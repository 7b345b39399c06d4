//! Acceptance criteria of the engine, one PASS/FAIL line each.
//!
//! Run with `cargo test -p condra --test acceptance`; pass criterion names
//! as arguments to run a subset.

mod common;

use std::sync::Arc;
use std::time::{Duration, Instant};

use condra::bench::{
    accuracy_at_n, measure_memory, noise_features, run_speed_benchmark, shape_check,
    space_model_64, ClusteredData, SpeedConfig,
};
use condra::condra_core::analytics::{
    blind_spots, frechet_distance, matched_moment_pair, rcd_report, theorem1_experiment,
    theorem1_fraction, PairKind, DEFAULT_RCD_LEAF_SIZE,
};
use condra::condra_core::corpus::generate::{generate_blobs, generate_content_style, MixtureSpec};
use condra::condra_core::tree::{build_ball_tree, build_rp_tree, build_tree, Tree, TreeKind};
use condra::condra_core::{
    build_cond_index, cknn_query, condition_members, distance, resolve_node_set, Attribute,
    Condition, Corpus, Engine, IdSet, Metric, NodeSetCache, QueryOptions, Strategy,
};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

type Outcome = Result<String, String>;

const STRATEGIES: [Strategy; 6] = [
    Strategy::Conditional,
    Strategy::QueryThenFilter,
    Strategy::Reconfigured,
    Strategy::BruteForce,
    Strategy::Dedicated,
    Strategy::Batched,
];

const KINDS: [TreeKind; 3] = [TreeKind::Ball, TreeKind::Kd, TreeKind::RpMax];

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Nearest members of `expr` by exhaustive scan: predicate evaluated on the
/// metadata, sorted by distance then id.
fn oracle(c: &Corpus, q: &[f32], expr: &Condition, k: usize) -> Vec<(u32, f64)> {
    let q = c.prepare_query(q).unwrap();
    let mut all: Vec<(u32, f64)> = (0..c.len())
        .filter(|&i| expr.matches(&|a: &str| c.attribute(a).map(|col| col.value_of(i))))
        .map(|i| (i as u32, distance(c.metric(), &q, c.point(i)).unwrap()))
        .collect();
    all.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    all.truncate(k);
    all
}

fn random_points(rng: &mut ChaCha8Rng, n: usize, d: usize, grid: bool) -> Vec<f32> {
    let mut points: Vec<f32> = (0..n * d)
        .map(|_| {
            let x = normal(rng);
            if grid {
                ((x * 2.0).round() / 2.0) as f32
            } else {
                x as f32
            }
        })
        .collect();
    for row in points.chunks_mut(d) {
        if row.iter().all(|x| *x == 0.0) {
            row[0] = 1.0;
        }
    }
    points
}

/// Random condition over attributes `sel` (yes/no) and `mix` (m0..m4),
/// including values that never occur.
fn random_condition(rng: &mut ChaCha8Rng, depth: u32) -> Condition {
    let term = |rng: &mut ChaCha8Rng| {
        if rng.random_bool(0.5) {
            Condition::term("sel", ["yes", "no"][rng.random_range(0..2)])
        } else {
            Condition::term("mix", format!("m{}", rng.random_range(0..6)))
        }
    };
    match if depth == 0 {
        0
    } else {
        rng.random_range(0..5)
    } {
        0 => term(rng),
        1 => Condition::And(vec![
            random_condition(rng, depth - 1),
            random_condition(rng, depth - 1),
        ]),
        2 => Condition::Or(vec![
            random_condition(rng, depth - 1),
            random_condition(rng, depth - 1),
        ]),
        3 => Condition::Not(Box::new(term(rng))),
        _ => Condition::Not(Box::new(Condition::any_of(
            "mix",
            (0..rng.random_range(1..4)).map(|_| format!("m{}", rng.random_range(0..5))),
        ))),
    }
}

fn instance_corpus(
    rng: &mut ChaCha8Rng,
    n: usize,
    d: usize,
    metric: Metric,
    members: usize,
    grid: bool,
) -> Arc<Corpus> {
    let chosen = sample(rng, n, members);
    let mut sel = vec!["no"; n];
    for i in chosen.iter() {
        sel[i] = "yes";
    }
    let mix: Vec<String> = (0..n)
        .map(|_| format!("m{}", rng.random_range(0..5)))
        .collect();
    Arc::new(
        Corpus::new(
            d,
            random_points(rng, n, d, grid),
            metric,
            vec![
                Attribute::from_values("sel", sel).unwrap(),
                Attribute::from_values("mix", mix).unwrap(),
            ],
        )
        .unwrap(),
    )
}

fn exactness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut queries, mut min_frac, mut max_frac) = (0usize, 1.0f64, 0.0f64);
    for inst in 0..1000 {
        let n = rng.random_range(100..=5000);
        let d = rng.random_range(2..=64);
        let metric = if inst % 2 == 0 {
            Metric::Euclidean
        } else {
            Metric::Angular
        };
        let target = 10f64.powf(rng.random_range(-3.0..=0.0));
        let members = ((target * n as f64).round() as usize).clamp(1, n);
        let grid = rng.random_bool(0.5);
        let corpus = instance_corpus(&mut rng, n, d, metric, members, grid);
        let kind = KINDS[inst % 3];
        let leaf = rng.random_range(1..=64);
        let tree = build_tree(corpus.clone(), kind, leaf, inst as u64).unwrap();
        let index = build_cond_index(&tree, &corpus, &["sel", "mix"]).unwrap();
        let engine = Engine::from_parts(Arc::new(tree), index).unwrap();
        let expr = match rng.random_range(0..5) {
            0 | 1 => Condition::term("sel", "yes"),
            2 => Condition::All,
            3 => Condition::And(vec![
                Condition::term("sel", "yes"),
                Condition::Not(Box::new(Condition::term("mix", "m0"))),
            ]),
            _ => random_condition(&mut rng, 2),
        };
        let fraction = condition_members(&expr, &corpus).unwrap().count() as f64 / n as f64;
        if fraction > 0.0 {
            min_frac = min_frac.min(fraction);
            max_frac = max_frac.max(fraction);
        }
        let k = rng.random_range(1..=20);
        let opts = QueryOptions {
            threshold: rng.random_range(0..=n),
            leaf_size: rng.random_range(1..=64),
            ..QueryOptions::default()
        };
        let p = rng.random_range(0..n);
        let fresh = random_points(&mut rng, 1, d, grid);
        let perturbed: Vec<f32> = corpus.point(p).iter().map(|x| x + 0.01).collect();
        for q in [corpus.point(p), &perturbed[..], &fresh[..]] {
            let want = oracle(&corpus, q, &expr, k);
            for s in STRATEGIES {
                let got = engine
                    .query(s, q, &expr, k, &opts)
                    .map_err(|e| format!("instance {inst}: {s}: {e}"))?;
                let ids_ok = got.neighbors.len() == want.len()
                    && got.neighbors.iter().zip(&want).all(|(g, w)| {
                        g.id == w.0 && (g.distance - w.1).abs() <= 1e-5 * w.1.max(f64::MIN_POSITIVE)
                    });
                if !ids_ok {
                    return Err(format!(
                        "instance {inst} (n={n} d={d} {metric} {kind} leaf={leaf} k={k} cond={}): {s} returned {:?}, oracle {:?}",
                        expr.canonical(),
                        got.ids(),
                        want.iter().map(|w| w.0).collect::<Vec<_>>()
                    ));
                }
                queries += 1;
            }
        }
    }
    Ok(format!(
        "1000 instances, {queries} strategy queries identical to the oracle; nonempty condition fractions {min_frac:.5}..{max_frac}"
    ))
}

fn ancestors_of(tree: &Tree, members: &IdSet) -> Vec<u32> {
    let mut seen = vec![false; tree.node_count()];
    for p in members.iter() {
        for node in tree.path_to_root(tree.leaf_of(p)) {
            if seen[node as usize] {
                break;
            }
            seen[node as usize] = true;
        }
    }
    (0..tree.node_count() as u32)
        .filter(|&i| seen[i as usize])
        .collect()
}

fn pruning_soundness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut conditions, mut queries, mut max_ratio) = (0usize, 0usize, 0.0f64);
    for t in 0..200 {
        let n = rng.random_range(200..=3000);
        let d = rng.random_range(2..=16);
        let members = rng.random_range(1..=n);
        let grid = rng.random_bool(0.3);
        let corpus = instance_corpus(&mut rng, n, d, Metric::Euclidean, members, grid);
        let kind = KINDS[t % 3];
        let tree = build_tree(corpus.clone(), kind, rng.random_range(1..=50), t as u64).unwrap();
        let index = build_cond_index(&tree, &corpus, &["sel", "mix"]).unwrap();
        let cache = NodeSetCache::new(&index);
        for _ in 0..10 {
            let expr = random_condition(&mut rng, 3);
            let resolved = resolve_node_set(&index, &expr, &cache).map_err(|e| e.to_string())?;
            let needed = ancestors_of(&tree, &resolved.members);
            if let Some(missing) = needed
                .iter()
                .find(|&&v| !resolved.nodes.contains(v as usize))
            {
                return Err(format!(
                    "tree {t} ({kind}): node {missing} holds a member of {} but is not valid",
                    expr.canonical()
                ));
            }
            let valid = resolved.nodes.count();
            for _ in 0..3 {
                let q = random_points(&mut rng, 1, d, false);
                let k = rng.random_range(1..=20);
                let r =
                    cknn_query(&tree, &index, &q, &expr, k, &cache).map_err(|e| e.to_string())?;
                if r.counters.nodes_visited as usize > valid {
                    return Err(format!(
                        "tree {t}: visited {} nodes with only {valid} valid for {}",
                        r.counters.nodes_visited,
                        expr.canonical()
                    ));
                }
                if valid > 0 {
                    max_ratio = max_ratio.max(r.counters.nodes_visited as f64 / valid as f64);
                }
                queries += 1;
            }
            conditions += 1;
        }
    }
    Ok(format!(
        "200 trees, {conditions} conditions, {queries} queries; largest visited/valid ratio {max_ratio:.3}"
    ))
}

fn space_model() -> Outcome {
    let (n, l) = (100_000, 500);
    let data = ClusteredData::generate(n, 16, 200, 3).map_err(|e| e.to_string())?;
    let corpus = Arc::new(data.corpus);
    let values = corpus.attribute("label").unwrap().values().len();
    if values != 200 {
        return Err(format!("expected 200 label values, generated {values}"));
    }
    let tree = build_ball_tree(corpus.clone(), l).unwrap();
    let index = build_cond_index(&tree, &corpus, &["label"]).unwrap();
    let m = measure_memory(&tree, &index, &corpus);
    let exact = 2 * n.div_ceil(l) - 1;
    if m.node_count != exact || m.node_count > 2 * n / l {
        return Err(format!(
            "node_count {} (expected {exact}, bound {})",
            m.node_count,
            2 * n / l
        ));
    }
    let bound = 200 * m.node_count as u64 / 8;
    if m.index_bytes > 2 * bound {
        return Err(format!(
            "index is {} bytes, twice the bit bound is {}",
            m.index_bytes,
            2 * bound
        ));
    }
    let (data64, tree64, index64) = space_model_64(1_000_000, 2048, 500, 200);
    Ok(format!(
        "node_count {} = 2*ceil(n/l)-1 <= 2n/l = {}; index {} bytes vs c*nodes/8 = {bound} ({:.2}x); \
         64-bit arithmetic at n=1e6 d=2048: data {:.1} GB, tree {:.1} MB, index {:.1} MB (reported, not asserted)",
        m.node_count,
        2 * n / l,
        m.index_bytes,
        m.index_bytes as f64 / bound as f64,
        data64 as f64 / 1e9,
        tree64 as f64 / 1e6,
        index64 as f64 / 1e6
    ))
}

fn strategy_shape() -> Outcome {
    let mut passes = 0;
    let mut lines = Vec::new();
    for run in 0..3u64 {
        let data =
            ClusteredData::generate(100_000, 64, 200, 10 + run).map_err(|e| e.to_string())?;
        let conditions = data.conditions();
        let queries = data.queries(1000);
        let engine = Engine::build(Arc::new(data.corpus), 40).map_err(|e| e.to_string())?;
        let cfg = SpeedConfig {
            repetitions: 3,
            seed: run,
            ..SpeedConfig::default()
        };
        let report =
            run_speed_benchmark(&engine, &conditions, &queries, &cfg).map_err(|e| e.to_string())?;
        let shape = shape_check(&report).ok_or("a strategy is missing from the report")?;
        let ok = shape.passed();
        passes += usize::from(ok);
        lines.push(format!(
            "run {run}: (a) cond {:.0}us vs qtf {:.0}us {}; (b) cond {:.0}us vs dedicated {:.0}us {}; (c) reconf worst {:.2}x {} [threshold {}]",
            shape.small_cond_us,
            shape.small_qtf_us,
            if shape.small_ok { "ok" } else { "FAIL" },
            shape.large_cond_us,
            shape.large_dedicated_us,
            if shape.large_ok { "ok" } else { "FAIL" },
            shape.reconf_worst_ratio,
            if shape.reconf_ok { "ok" } else { "FAIL" },
            report.environment.threshold,
        ));
        if passes == 2 || (run as usize + 1 - passes) == 2 {
            break;
        }
    }
    let text = format!(
        "{passes} of {} runs pass; {}",
        lines.len(),
        lines.join("; ")
    );
    if passes >= 2 {
        Ok(text)
    } else {
        Err(text)
    }
}

fn accuracy() -> Outcome {
    let trials = 10_000;
    let corpus = generate_content_style(63, 249, 32, 0.5, 0.1, 4).map_err(|e| e.to_string())?;
    let noise = noise_features(&corpus, 5).map_err(|e| e.to_string())?;
    let real =
        accuracy_at_n(Arc::new(corpus), &[1, 10], trials, 40, 6).map_err(|e| e.to_string())?;
    let random =
        accuracy_at_n(Arc::new(noise), &[1, 10], trials, 40, 7).map_err(|e| e.to_string())?;
    let (a1, a10) = (real.at(1).unwrap(), real.at(10).unwrap());
    let r1 = random.at(1).unwrap();
    let p = 1.0 / 63.0;
    let sigma = (p * (1.0 - p) / trials as f64).sqrt();
    let z = (r1 - p) / sigma;
    let text = format!(
        "separable: acc@1 {a1:.4}, acc@10 {a10:.4}; noise: acc@1 {r1:.4} vs 1/63 = {p:.4} ({z:+.2} sigma)"
    );
    if a1 >= 0.9 && a10 >= a1 && z.abs() <= 4.0 {
        Ok(text)
    } else {
        Err(text)
    }
}

fn rcd_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    // Root value and conservation on random trees.
    for t in 0..100u64 {
        let n = rng.random_range(100..=20_000);
        let c = generate_blobs(
            &MixtureSpec::standard_normal(rng.random_range(1..=6), n, "x"),
            t,
        )
        .unwrap();
        let tree = build_tree(
            Arc::new(c),
            KINDS[t as usize % 3],
            rng.random_range(1..=600),
            t,
        )
        .unwrap();
        let m = rng.random_range(1..n);
        let members = IdSet::from_ids(n, sample(&mut rng, n, m).iter());
        let report = rcd_report(&tree, &members, 0.01).map_err(|e| e.to_string())?;
        if report.nodes[0].rcd != 1.0 {
            return Err(format!("tree {t}: root RCD {}", report.nodes[0].rcd));
        }
        for (id, node) in tree.nodes().iter().enumerate() {
            let r = &report.nodes[id];
            if r.node as usize != id {
                return Err(format!("tree {t}: report out of node order"));
            }
            if let Some([a, b]) = node.children {
                let (a, b) = (&report.nodes[a as usize], &report.nodes[b as usize]);
                let weighted = a.count as f64 * a.rcd + b.count as f64 * b.rcd;
                if r.members != a.members + b.members
                    || r.count != a.count + b.count
                    || (weighted - r.count as f64 * r.rcd).abs()
                        > 1e-9 * r.count as f64 * r.rcd.max(1.0)
                {
                    return Err(format!("tree {t}: conservation fails at node {id}"));
                }
            }
        }
    }
    // Null calibration: real and generated from one distribution.
    let mut null_rates = Vec::new();
    for seed in 0..20 {
        let (real, generated) = matched_moment_pair(PairKind::Identical, 50_000, 100 + seed)
            .map_err(|e| e.to_string())?;
        let all = Arc::new(Corpus::concat(&[&real, &generated]).unwrap());
        let members = condition_members(&Condition::term("source", "generated"), &all).unwrap();
        let tree = build_ball_tree(all, DEFAULT_RCD_LEAF_SIZE).unwrap();
        null_rates.push(
            rcd_report(&tree, &members, 0.01)
                .unwrap()
                .flagged_fraction(),
        );
    }
    let null_rate = null_rates.iter().sum::<f64>() / null_rates.len() as f64;
    if null_rate > 0.03 {
        return Err(format!(
            "null runs flag {:.2}% of nodes on average",
            100.0 * null_rate
        ));
    }
    // Ring against blob with equal first and second moments.
    let (mut good, mut worst_frechet, mut min_flagged) = (0, 0.0f64, 1.0f64);
    let mut failures = Vec::new();
    for seed in 0..20 {
        let (real, generated) = matched_moment_pair(PairKind::RingVsBlob, 50_000, 200 + seed)
            .map_err(|e| e.to_string())?;
        let fd = frechet_distance(&real, &generated).map_err(|e| e.to_string())?;
        let all = Arc::new(Corpus::concat(&[&real, &generated]).unwrap());
        let members = condition_members(&Condition::term("source", "generated"), &all).unwrap();
        let tree = build_ball_tree(all, DEFAULT_RCD_LEAF_SIZE).unwrap();
        let report = rcd_report(&tree, &members, 0.01).unwrap();
        let spots = blind_spots(&report, &tree, 0.6).len();
        let flagged = report.flagged_fraction();
        worst_frechet = worst_frechet.max(fd);
        min_flagged = min_flagged.min(flagged);
        if fd < 0.05 && flagged > 10.0 * null_rate && spots >= 1 {
            good += 1;
        } else {
            failures.push(format!(
                "seed {seed}: frechet {fd:.4}, flagged {flagged:.3}, blind spots {spots}"
            ));
        }
    }
    let text = format!(
        "root RCD exactly 1 and conservation on 100 trees; null flagged {:.2}% (max run {:.2}%); \
         ring_vs_blob: {good}/20 seeds pass, Frechet <= {worst_frechet:.4}, flagged >= {:.1}% vs 10x null {:.1}%{}",
        100.0 * null_rate,
        100.0 * null_rates.iter().cloned().fold(0.0, f64::max),
        100.0 * min_flagged,
        1000.0 * null_rate,
        if failures.is_empty() { String::new() } else { format!("; {}", failures.join("; ")) }
    );
    if good >= 18 {
        Ok(text)
    } else {
        Err(text)
    }
}

fn theorem1() -> Outcome {
    let radii = [0.5, 0.25, 0.1, 0.05];
    let seeds: Vec<u64> = (0..20).collect();
    let mut parts = Vec::new();
    for d in [2, 8] {
        let c = Arc::new(
            generate_blobs(&MixtureSpec::standard_normal(d, 10_000, "x"), 30 + d as u64).unwrap(),
        );
        let curve =
            theorem1_experiment(c.clone(), &radii, 10, &seeds).map_err(|e| e.to_string())?;
        let means: Vec<f64> = curve.points.iter().map(|p| p.mean).collect();
        if !means.windows(2).all(|w| w[0] > w[1]) {
            return Err(format!("{d}D means not strictly decreasing: {means:?}"));
        }
        // Single points cover exactly their root-to-leaf path.
        let tree = build_rp_tree(c.clone(), 10, 99).unwrap();
        for p in (0..c.len()).step_by(499) {
            let f = theorem1_fraction(&tree, &IdSet::from_ids(c.len(), [p])).unwrap();
            let leaf = tree.node(tree.leaf_of(p));
            let want = (leaf.depth as f64 + 1.0) / tree.node_count() as f64;
            if f != want {
                return Err(format!("{d}D point {p}: fraction {f}, path gives {want}"));
            }
        }
        parts.push(format!(
            "{d}D W={:.2}: {}",
            curve.diameter,
            curve
                .points
                .iter()
                .map(|p| format!("{:.4}", p.mean))
                .collect::<Vec<_>>()
                .join(" > ")
        ));
    }
    Ok(format!(
        "{}; single-point fractions equal (depth+1)/node_count",
        parts.join("; ")
    ))
}

fn service() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let fx = common::art_fixture();
    let app = common::service_checks::build_app(&fx, dir.path());
    let rt = tokio::runtime::Runtime::new().map_err(|e| e.to_string())?;
    let checks = common::service_checks::all_checks();
    let total = checks.len();
    rt.block_on(async {
        for (name, check) in checks {
            check(&app, &fx).await.map_err(|e| format!("{name}: {e}"))?;
        }
        Ok(format!(
            "{total} endpoint checks on the {}-point fixture, all error shapes included",
            fx.n()
        ))
    })
}

struct Criterion {
    name: &'static str,
    budget: Duration,
    run: fn() -> Outcome,
}

fn main() {
    let criteria = [
        Criterion {
            name: "exactness",
            budget: Duration::from_secs(120),
            run: exactness,
        },
        Criterion {
            name: "pruning_soundness",
            budget: Duration::from_secs(60),
            run: pruning_soundness,
        },
        Criterion {
            name: "space_model",
            budget: Duration::from_secs(60),
            run: space_model,
        },
        Criterion {
            name: "strategy_shape",
            budget: Duration::from_secs(15 * 60),
            run: strategy_shape,
        },
        Criterion {
            name: "accuracy_at_n",
            budget: Duration::from_secs(5 * 60),
            run: accuracy,
        },
        Criterion {
            name: "rcd_suite",
            budget: Duration::from_secs(10 * 60),
            run: rcd_suite,
        },
        Criterion {
            name: "theorem1",
            budget: Duration::from_secs(5 * 60),
            run: theorem1,
        },
        Criterion {
            name: "service_contract",
            budget: Duration::from_secs(60),
            run: service,
        },
    ];
    let filters: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let mut failed = 0;
    for c in &criteria {
        if !filters.is_empty() && !filters.iter().any(|f| c.name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(c.run).unwrap_or_else(|_| Err("panicked".into()));
        let elapsed = start.elapsed();
        let outcome = match outcome {
            Ok(text) if elapsed > c.budget => {
                Err(format!("{text}; over the {:?} budget", c.budget))
            }
            other => other,
        };
        match outcome {
            Ok(text) => println!("PASS {} [{:.1}s] {text}", c.name, elapsed.as_secs_f64()),
            Err(text) => {
                failed += 1;
                println!("FAIL {} [{:.1}s] {text}", c.name, elapsed.as_secs_f64());
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
