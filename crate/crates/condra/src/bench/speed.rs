//! Strategy latency comparison across condition sizes.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Instant;

use condra_core::corpus::Corpus;
use condra_core::{
    brute_force_cknn, condition_members, knn_query, Condition, Engine, QueryOptions, ResultList,
    Strategy, DEFAULT_RECONFIGURE_THRESHOLD,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use super::{median, percentile, SCHEMA_VERSION};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct SpeedConfig {
    pub k: usize,
    /// Timed runs per (query, strategy); the median is kept.
    pub repetitions: usize,
    /// Untimed queries per strategy before measuring.
    pub warmup: usize,
    /// Leaf size of dedicated trees.
    pub leaf_size: usize,
    /// Share of queries whose results are checked against brute force.
    pub exact_fraction: f64,
    pub strategies: Vec<Strategy>,
    /// Fixed reconfiguration threshold; calibrated from the brute-force and
    /// query-then-filter timings when `None`.
    pub threshold: Option<usize>,
    pub seed: u64,
}

impl Default for SpeedConfig {
    fn default() -> Self {
        SpeedConfig {
            k: 10,
            repetitions: 5,
            warmup: 100,
            leaf_size: condra_core::DEFAULT_LEAF_SIZE,
            exact_fraction: 0.05,
            strategies: Strategy::ALL.to_vec(),
            threshold: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ConditionInfo {
    pub text: String,
    pub members: usize,
    pub fraction: f64,
    /// `floor(log10(fraction))`: -3 holds 0.1%..1%, 0 holds 100%.
    pub bucket: i32,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchRow {
    pub strategy: String,
    pub condition: usize,
    pub fraction: f64,
    pub bucket: i32,
    pub queries: usize,
    pub median_us: f64,
    pub p90_us: f64,
    /// Brute-force median over this strategy's median, same condition.
    pub speedup: Option<f64>,
    pub mean_nodes_visited: f64,
    pub mean_points_scored: f64,
    pub exactness_checked: usize,
    pub exact: bool,
    /// Per-query median latencies in microseconds.
    #[serde(skip)]
    pub samples: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Environment {
    pub n: usize,
    pub d: usize,
    pub leaf_size: usize,
    pub dedicated_leaf_size: usize,
    pub metric: String,
    pub k: usize,
    pub queries: usize,
    pub repetitions: usize,
    pub warmup: usize,
    pub threshold: usize,
    pub threshold_calibrated: bool,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub schema_version: u32,
    pub environment: Environment,
    pub conditions: Vec<ConditionInfo>,
    pub rows: Vec<BenchRow>,
}

impl BenchReport {
    pub fn row(&self, strategy: &str, condition: usize) -> Option<&BenchRow> {
        self.rows
            .iter()
            .find(|r| r.strategy == strategy && r.condition == condition)
    }

    /// Median of the per-query latencies of `strategy`, pooled over every
    /// condition whose fraction satisfies `keep`.
    pub fn pooled_median(&self, strategy: Strategy, keep: impl Fn(f64) -> bool) -> Option<f64> {
        let mut pooled: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.strategy == strategy.as_str() && keep(r.fraction))
            .flat_map(|r| r.samples.iter().copied())
            .collect();
        (!pooled.is_empty()).then(|| median(&mut pooled))
    }
}

fn bucket(fraction: f64) -> i32 {
    fraction.log10().floor() as i32
}

fn same(a: &ResultList, b: &ResultList) -> bool {
    a.neighbors.len() == b.neighbors.len()
        && a.neighbors.iter().zip(&b.neighbors).all(|(x, y)| {
            x.id == y.id && (x.distance - y.distance).abs() <= 1e-5 * y.distance.max(1e-30)
        })
}

struct Cell {
    samples: Vec<f64>,
    nodes: u64,
    scored: u64,
    checked: usize,
}

struct Pass<'a> {
    engine: &'a Engine,
    conditions: &'a [Condition],
    queries: &'a [f32],
    checked: &'a [bool],
    cfg: &'a SpeedConfig,
}

impl Pass<'_> {
    fn run(
        &self,
        strategies: &[Strategy],
        opts: &QueryOptions,
        cells: &mut BTreeMap<(Strategy, usize), Cell>,
    ) -> Result<()> {
        let Pass {
            engine,
            conditions,
            queries,
            checked,
            cfg,
        } = *self;
        let corpus = engine.corpus();
        let d = corpus.dim();
        let m = queries.len() / d;
        let query = |i: usize| &queries[i * d..(i + 1) * d];
        for i in 0..cfg.warmup {
            let (q, c) = (query(i % m), &conditions[i % conditions.len()]);
            for &s in strategies {
                engine.query(s, q, c, cfg.k, opts)?;
            }
        }
        for (i, &check) in checked.iter().enumerate().take(m) {
            let ci = i % conditions.len();
            let (q, c) = (query(i), &conditions[ci]);
            let oracle = if check {
                Some(brute_force_cknn(corpus, q, c, cfg.k)?)
            } else {
                None
            };
            for &s in strategies {
                let mut times = Vec::with_capacity(cfg.repetitions);
                let mut last = None;
                for _ in 0..cfg.repetitions {
                    let start = Instant::now();
                    let r = engine.query(s, q, c, cfg.k, opts)?;
                    times.push(start.elapsed().as_secs_f64() * 1e6);
                    last = Some(r);
                }
                let result = last.expect("at least one repetition");
                let cell = cells.entry((s, ci)).or_insert(Cell {
                    samples: Vec::new(),
                    nodes: 0,
                    scored: 0,
                    checked: 0,
                });
                cell.samples.push(median(&mut times));
                cell.nodes += result.counters.nodes_visited;
                cell.scored += result.counters.points_scored;
                if let Some(want) = &oracle {
                    cell.checked += 1;
                    if !same(&result, want) {
                        let instance = json!({
                            "strategy": s.as_str(),
                            "condition": c.canonical(),
                            "k": cfg.k,
                            "query_index": i,
                            "query": q,
                            "threshold": opts.threshold,
                            "expected": want.neighbors.iter().map(|x| (x.id, x.distance)).collect::<Vec<_>>(),
                            "got": result.neighbors.iter().map(|x| (x.id, x.distance)).collect::<Vec<_>>(),
                        });
                        return Err(Error::Mismatch(instance.to_string()));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Times every strategy in `cfg` on `queries` (row-major) with conditions
/// assigned round-robin, after a warmup pass.
///
/// Fails with [`Error::Mismatch`] on the first sampled result that differs
/// from the exhaustive scan.
pub fn run_speed_benchmark(
    engine: &Engine,
    conditions: &[Condition],
    queries: &[f32],
    cfg: &SpeedConfig,
) -> Result<BenchReport> {
    let corpus: &Arc<Corpus> = engine.corpus();
    let d = corpus.dim();
    let n = corpus.len();
    let m = queries.len() / d;
    if conditions.is_empty() || m == 0 || cfg.repetitions == 0 {
        return Err(Error::Config(
            "benchmark needs conditions, queries and repetitions".into(),
        ));
    }
    let infos: Vec<ConditionInfo> = conditions
        .iter()
        .map(|c| {
            let members = condition_members(c, corpus)?.count();
            let fraction = members as f64 / n as f64;
            Ok(ConditionInfo {
                text: c.canonical(),
                members,
                fraction,
                bucket: bucket(fraction.max(1e-12)),
            })
        })
        .collect::<Result<_>>()?;
    let query = |i: usize| &queries[i * d..(i + 1) * d];
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let checked: Vec<bool> = (0..m)
        .map(|_| rng.random::<f64>() < cfg.exact_fraction)
        .collect();
    let mut opts = QueryOptions {
        leaf_size: cfg.leaf_size,
        threshold: cfg.threshold.unwrap_or(DEFAULT_RECONFIGURE_THRESHOLD),
        ..QueryOptions::default()
    };

    let mut first: Vec<Strategy> = cfg
        .strategies
        .iter()
        .copied()
        .filter(|s| *s != Strategy::Reconfigured)
        .collect();
    first.dedup();
    let mut cells: BTreeMap<(Strategy, usize), Cell> = BTreeMap::new();
    let pass = Pass {
        engine,
        conditions,
        queries,
        checked: &checked,
        cfg,
    };
    pass.run(&first, &opts, &mut cells)?;

    let calibrated = cfg.threshold.is_none()
        && cfg.strategies.contains(&Strategy::Reconfigured)
        && first.contains(&Strategy::BruteForce)
        && first.contains(&Strategy::QueryThenFilter);
    if calibrated {
        let med =
            |s: Strategy, ci: usize| cells.get(&(s, ci)).map(|c| median(&mut c.samples.clone()));
        let costs: Vec<(usize, f64, f64)> = (0..conditions.len())
            .filter_map(|ci| {
                Some((
                    infos[ci].members,
                    med(Strategy::BruteForce, ci)?,
                    med(Strategy::QueryThenFilter, ci)?,
                ))
            })
            .collect();
        opts.threshold = calibrate_threshold(&costs);
    }
    if cfg.strategies.contains(&Strategy::Reconfigured) {
        pass.run(&[Strategy::Reconfigured], &opts, &mut cells)?;
    }

    // Unconditional reference on the `ALL` condition, if present.
    let mut knn_cell = None;
    if let Some(all) = conditions.iter().position(|c| *c == Condition::All) {
        let mut samples = Vec::new();
        for i in (all..m).step_by(conditions.len()) {
            let mut times = Vec::with_capacity(cfg.repetitions);
            for _ in 0..cfg.repetitions {
                let start = Instant::now();
                knn_query(engine.tree(), query(i), cfg.k)?;
                times.push(start.elapsed().as_secs_f64() * 1e6);
            }
            samples.push(median(&mut times));
        }
        knn_cell = Some((all, samples));
    }

    let brute_median: BTreeMap<usize, f64> = cells
        .iter()
        .filter(|((s, _), _)| *s == Strategy::BruteForce)
        .map(|((_, ci), c)| (*ci, median(&mut c.samples.clone())))
        .collect();
    let mut rows = Vec::new();
    let row =
        |name: &str, ci: usize, mut samples: Vec<f64>, nodes: u64, scored: u64, checked: usize| {
            let count = samples.len();
            let med = median(&mut samples.clone());
            BenchRow {
                strategy: name.to_owned(),
                condition: ci,
                fraction: infos[ci].fraction,
                bucket: infos[ci].bucket,
                queries: count,
                median_us: med,
                p90_us: percentile(&mut samples, 0.9),
                speedup: brute_median.get(&ci).map(|b| b / med),
                mean_nodes_visited: nodes as f64 / count as f64,
                mean_points_scored: scored as f64 / count as f64,
                exactness_checked: checked,
                exact: true,
                samples,
            }
        };
    for s in cfg.strategies.iter().copied() {
        for ci in 0..conditions.len() {
            if let Some(c) = cells.get(&(s, ci)) {
                rows.push(row(
                    s.as_str(),
                    ci,
                    c.samples.clone(),
                    c.nodes,
                    c.scored,
                    c.checked,
                ));
            }
        }
    }
    if let Some((ci, samples)) = knn_cell {
        rows.push(row("knn", ci, samples, 0, 0, 0));
    }

    Ok(BenchReport {
        schema_version: SCHEMA_VERSION,
        environment: Environment {
            n,
            d,
            leaf_size: engine.tree().leaf_size(),
            dedicated_leaf_size: cfg.leaf_size,
            metric: corpus.metric().to_string(),
            k: cfg.k,
            queries: m,
            repetitions: cfg.repetitions,
            warmup: cfg.warmup,
            threshold: opts.threshold,
            threshold_calibrated: calibrated,
            seed: cfg.seed,
        },
        conditions: infos,
        rows,
    })
}

/// Picks the single switch point that best serves every condition: the
/// threshold minimizing the summed ratio of the chosen branch's latency to
/// the faster branch's, over `(members, brute, qtf)` per condition.
pub fn calibrate_threshold(costs: &[(usize, f64, f64)]) -> usize {
    let mut candidates: Vec<usize> = costs.iter().map(|c| c.0 + 1).collect();
    candidates.push(0);
    candidates.sort_unstable();
    candidates.dedup();
    let regret = |t: usize| -> f64 {
        costs
            .iter()
            .map(|&(members, brute, qtf)| {
                let chosen = if members < t { brute } else { qtf };
                chosen / brute.min(qtf).max(1e-9)
            })
            .sum()
    };
    candidates
        .into_iter()
        .min_by(|&a, &b| regret(a).total_cmp(&regret(b)).then(a.cmp(&b)))
        .unwrap_or(DEFAULT_RECONFIGURE_THRESHOLD)
}
