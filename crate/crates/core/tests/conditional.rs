use std::sync::Arc;

use condra_core::{
    distance, parse_condition, resolve_node_set, Attribute, Condition, Corpus, Engine, Metric,
    NodeSetCache, QueryOptions, Strategy,
};
use proptest::prelude::*;

const ALL_STRATEGIES: [Strategy; 6] = [
    Strategy::Conditional,
    Strategy::QueryThenFilter,
    Strategy::Reconfigured,
    Strategy::BruteForce,
    Strategy::Dedicated,
    Strategy::Batched,
];

fn corpus(n: usize, d: usize, metric: Metric, seed: u64) -> Arc<Corpus> {
    let mut s = seed ^ 0x9e37_79b9_7f4a_7c15;
    let mut next = move || {
        s ^= s << 13;
        s ^= s >> 7;
        s ^= s << 17;
        s
    };
    let points: Vec<f32> = (0..n * d)
        .map(|_| ((next() % 17) as f32 - 8.0) / 4.0 + 0.125)
        .collect();
    // `color` has a rare value; `shape` is uniform.
    let color: Vec<&str> = (0..n)
        .map(|_| match next() % 100 {
            0..=1 => "red",
            2..=30 => "green",
            _ => "blue",
        })
        .collect();
    let shape: Vec<String> = (0..n).map(|_| format!("s{}", next() % 4)).collect();
    Arc::new(
        Corpus::new(
            d,
            points,
            metric,
            vec![
                Attribute::from_values("color", color).unwrap(),
                Attribute::from_values("shape", shape).unwrap(),
            ],
        )
        .unwrap(),
    )
}

const CONDITIONS: [&str; 10] = [
    "ALL",
    r#"color="red""#,
    r#"color="green" OR color="red""#,
    r#"NOT color="blue""#,
    r#"shape="s1" AND color="blue""#,
    r#"(shape="s0" OR shape="s3") AND NOT color="green""#,
    r#"color="red" AND shape="s2""#,
    r#"color="purple""#,
    r#"NOT (shape="s0" OR shape="s1") OR color="red""#,
    r#"shape = "s2" and not color = "red""#,
];

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

#[test]
fn resolved_nodes_contain_every_member_path() {
    let c = corpus(3000, 4, Metric::Euclidean, 11);
    let engine = Engine::build(c.clone(), 8).unwrap();
    let cache = NodeSetCache::new(engine.index());
    for text in CONDITIONS {
        let expr = parse_condition(text).unwrap();
        let r = resolve_node_set(engine.index(), &expr, &cache).unwrap();
        for p in r.members.iter() {
            for node in engine.tree().path_to_root(engine.tree().leaf_of(p)) {
                assert!(
                    r.nodes.contains(node as usize),
                    "{text}: node {node} above member {p} missing"
                );
            }
        }
    }
}

#[test]
fn strategies_agree_with_many_ties() {
    // Coordinates on a coarse grid: exact distance ties everywhere.
    let c = corpus(2000, 3, Metric::Euclidean, 4);
    let engine = Engine::build(c.clone(), 5).unwrap();
    let opts = QueryOptions {
        threshold: 300,
        ..QueryOptions::default()
    };
    for text in CONDITIONS {
        let expr = parse_condition(text).unwrap();
        for i in (0..c.len()).step_by(211) {
            let want = oracle(&c, c.point(i), &expr, 15);
            for s in ALL_STRATEGIES {
                let got = engine.query(s, c.point(i), &expr, 15, &opts).unwrap();
                let got: Vec<(u32, f64)> =
                    got.neighbors.iter().map(|n| (n.id, n.distance)).collect();
                assert_eq!(got, want, "{s} on {text} from {i}");
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn every_strategy_matches_the_oracle(
        n in 1usize..700,
        d in 1usize..7,
        leaf in 1usize..20,
        angular in any::<bool>(),
        seed in any::<u64>(),
        k in 1usize..21,
        threshold in 0usize..800,
        cond in 0usize..CONDITIONS.len(),
    ) {
        let metric = if angular { Metric::Angular } else { Metric::Euclidean };
        let c = corpus(n, d, metric, seed);
        let engine = Engine::build(c.clone(), leaf).unwrap();
        let opts = QueryOptions { threshold, leaf_size: leaf, ..QueryOptions::default() };
        let expr = parse_condition(CONDITIONS[cond]).unwrap();
        let q: Vec<f32> = c.point(seed as usize % n).iter().map(|x| x * 0.9 + 0.05).collect();
        let want = oracle(&c, &q, &expr, k);
        for s in ALL_STRATEGIES {
            let got = engine.query(s, &q, &expr, k, &opts).unwrap();
            let got: Vec<(u32, f64)> = got.neighbors.iter().map(|n| (n.id, n.distance)).collect();
            prop_assert_eq!(&got, &want, "{}", s);
        }
    }
}
