use std::fs;
use std::io::{self, BufWriter, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{ArgGroup, Args, Parser, Subcommand};
use condra::bench::{
    accuracy_at_n, measure_memory, noise_features, run_speed_benchmark, shape_check,
    space_model_64, ClusteredData, SpeedConfig,
};
use condra::condra_core::analytics::{
    blind_spots, matched_moment_pair, rcd_report, theorem1_experiment, PairKind, DEFAULT_ALPHA,
    DEFAULT_BLIND_SPOT_THRESHOLD, DEFAULT_RCD_LEAF_SIZE,
};
use condra::condra_core::corpus::generate::{generate_blobs, generate_content_style, MixtureSpec};
use condra::condra_core::tree::build_tree;
use condra::condra_core::{
    build_cond_index, condition_members, parse_condition, Corpus, Engine, QueryOptions, Strategy,
    TreeKind, DEFAULT_LEAF_SIZE,
};
use condra::format::{load_bundle, load_corpus, load_tree, save_corpus, save_tree};
use condra::{Error, Result};
use serde::Serialize;

#[derive(Parser)]
#[command(
    name = "condra",
    version,
    about = "Exact conditional nearest-neighbor retrieval"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic corpus bundle.
    #[command(subcommand)]
    Generate(Generate),
    /// Build a tree and conditional index for a bundle.
    Index(IndexArgs),
    /// Conditional nearest neighbors of one point or vector, as TSV.
    Query(QueryArgs),
    /// Relative conditioner density of one attribute value per tree node.
    Rcd(RcdArgs),
    /// Covered-node fraction of shrinking balls on random-projection trees, as CSV.
    Theorem1(Theorem1Args),
    /// Benchmarks with JSON reports.
    #[command(subcommand)]
    Bench(Bench),
    /// Serve collections over HTTP.
    Serve(ServeArgs),
}

#[derive(Subcommand)]
enum Generate {
    /// Standard normal points with a single `source` value.
    Blobs {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        d: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Zipf-weighted Gaussian clusters with `label` and `group` attributes.
    Clustered {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        d: usize,
        #[arg(long, default_value_t = 200)]
        labels: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// One point per (content, style) pair.
    ContentStyle {
        #[arg(long, default_value_t = 63)]
        contents: usize,
        #[arg(long, default_value_t = 249)]
        styles: usize,
        #[arg(long, default_value_t = 32)]
        d: usize,
        #[arg(long, default_value_t = 0.5)]
        style_strength: f64,
        #[arg(long, default_value_t = 0.1)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Real and generated samples with equal mean and covariance, in one
    /// bundle distinguished by `source`.
    Pair {
        /// ring_vs_blob, mode_drop, cluster_split or identical
        #[arg(long)]
        kind: PairKind,
        #[arg(long, default_value_t = 50_000)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct TreeOpts {
    #[arg(long, default_value = "ball")]
    kind: TreeKind,
    #[arg(long)]
    leaf_size: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct IndexArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    tree: TreeOpts,
    /// Attributes to index; all when omitted.
    #[arg(long, value_delimiter = ',')]
    attributes: Vec<String>,
}

#[derive(Args)]
#[command(group(ArgGroup::new("query").required(true).multiple(false)))]
struct QueryArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Tree file from `condra index`; a ball tree is built when omitted.
    #[arg(long, visible_alias = "index")]
    tree: Option<PathBuf>,
    #[arg(long, visible_alias = "cond", default_value = "ALL")]
    condition: String,
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[arg(long, default_value = "cond")]
    strategy: Strategy,
    #[arg(long, group = "query")]
    point_id: Option<usize>,
    /// Comma-separated coordinates.
    #[arg(
        long,
        group = "query",
        value_delimiter = ',',
        allow_hyphen_values = true
    )]
    vector: Option<Vec<f32>>,
    /// A point id, or a file of whitespace- or comma-separated coordinates.
    #[arg(long, group = "query")]
    q: Option<String>,
    #[arg(long, default_value_t = condra::condra_core::DEFAULT_RECONFIGURE_THRESHOLD)]
    threshold: usize,
}

#[derive(Args)]
struct RcdArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, visible_alias = "label-attr", default_value = "source")]
    attribute: String,
    #[arg(long, visible_alias = "positive", default_value = "generated")]
    value: String,
    #[arg(long, default_value = "rp")]
    kind: TreeKind,
    #[arg(long, default_value_t = DEFAULT_RCD_LEAF_SIZE)]
    leaf_size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    alpha: f64,
    #[arg(long, default_value_t = DEFAULT_BLIND_SPOT_THRESHOLD)]
    threshold: f64,
    /// Where to write the JSON summary; stderr when omitted.
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Args)]
struct Theorem1Args {
    /// Bundle to use; a standard normal corpus is generated when omitted.
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long, default_value_t = 10_000)]
    n: usize,
    #[arg(long, default_value_t = 2)]
    d: usize,
    #[arg(long, value_delimiter = ',', default_values_t = [0.5, 0.25, 0.1, 0.05])]
    radii: Vec<f64>,
    #[arg(long, default_value_t = 20)]
    seeds: u64,
    #[arg(long, default_value_t = 10)]
    leaf_size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Subcommand)]
enum Bench {
    /// Latency of every strategy across condition sizes.
    Speed {
        #[arg(long, default_value_t = 100_000)]
        n: usize,
        #[arg(long, default_value_t = 64)]
        d: usize,
        #[arg(long, default_value_t = 200)]
        labels: usize,
        #[arg(long, default_value_t = 1000)]
        queries: usize,
        #[arg(long, default_value_t = 10)]
        k: usize,
        #[arg(long, default_value_t = 5)]
        repetitions: usize,
        #[arg(long, default_value_t = DEFAULT_LEAF_SIZE)]
        leaf_size: usize,
        /// Fixed reconfiguration threshold instead of calibrating one.
        #[arg(long)]
        threshold: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Accuracy@N on a content/style corpus and on noise features.
    Accuracy {
        #[arg(long, default_value_t = 63)]
        contents: usize,
        #[arg(long, default_value_t = 249)]
        styles: usize,
        #[arg(long, default_value_t = 32)]
        d: usize,
        #[arg(long, default_value_t = 10_000)]
        trials: usize,
        #[arg(long, value_delimiter = ',', default_values_t = [1, 5, 10])]
        ns: Vec<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Storage of data, tree and index.
    Memory {
        #[arg(long, default_value_t = 100_000)]
        n: usize,
        #[arg(long, default_value_t = 16)]
        d: usize,
        #[arg(long, default_value_t = 200)]
        labels: usize,
        #[arg(long, default_value_t = 500)]
        leaf_size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = "127.0.0.1:8080")]
    addr: SocketAddr,
}

fn write_json(value: &impl Serialize, out: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match out {
        Some(p) => fs::write(p, text + "\n").map_err(|e| Error::io(p, e)),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn stdout_err(e: io::Error) -> Error {
    Error::io("<stdout>", e)
}

fn generate(cmd: Generate) -> Result<()> {
    let (corpus, out) = match cmd {
        Generate::Blobs { n, d, seed, out } => (
            generate_blobs(&MixtureSpec::standard_normal(d, n, "real"), seed)?,
            out,
        ),
        Generate::Clustered {
            n,
            d,
            labels,
            seed,
            out,
        } => (ClusteredData::generate(n, d, labels, seed)?.corpus, out),
        Generate::ContentStyle {
            contents,
            styles,
            d,
            style_strength,
            noise,
            seed,
            out,
        } => (
            generate_content_style(contents, styles, d, style_strength, noise, seed)?,
            out,
        ),
        Generate::Pair { kind, n, seed, out } => {
            let (real, generated) = matched_moment_pair(kind, n, seed)?;
            (Corpus::concat(&[&real, &generated])?, out)
        }
    };
    save_corpus(&corpus, &out)?;
    eprintln!(
        "wrote {} points of dimension {} to {}",
        corpus.len(),
        corpus.dim(),
        out.display()
    );
    Ok(())
}

fn index(args: IndexArgs) -> Result<()> {
    let corpus = Arc::new(load_corpus(&args.corpus)?);
    let leaf = args.tree.leaf_size.unwrap_or(DEFAULT_LEAF_SIZE);
    let tree = build_tree(corpus.clone(), args.tree.kind, leaf, args.tree.seed)?;
    let names: Vec<&str> = if args.attributes.is_empty() {
        corpus.attributes().iter().map(|a| a.name()).collect()
    } else {
        args.attributes.iter().map(String::as_str).collect()
    };
    let index = build_cond_index(&tree, &corpus, &names)?;
    save_tree(&args.out, &tree, Some(&index))?;
    eprintln!(
        "{} nodes, {} attributes indexed",
        tree.node_count(),
        names.len()
    );
    Ok(())
}

fn engine_for(corpus: Arc<Corpus>, tree: Option<&Path>) -> Result<Engine> {
    match tree {
        None => Ok(Engine::build(corpus, DEFAULT_LEAF_SIZE)?),
        Some(path) => {
            let (tree, index) = load_tree(path, corpus.clone())?;
            let index = match index {
                Some(i) => i,
                None => {
                    let names: Vec<&str> = corpus.attributes().iter().map(|a| a.name()).collect();
                    build_cond_index(&tree, &corpus, &names)?
                }
            };
            Ok(Engine::from_parts(Arc::new(tree), index)?)
        }
    }
}

fn query(args: QueryArgs) -> Result<()> {
    let corpus = Arc::new(load_bundle(&args.corpus)?.corpus);
    let engine = engine_for(corpus.clone(), args.tree.as_deref())?;
    let expr = parse_condition(&args.condition).map_err(condra::condra_core::Error::from)?;
    let point_id = match &args.q {
        Some(q) => q.parse::<usize>().ok(),
        None => args.point_id,
    };
    let q: Vec<f32> = match (point_id, &args.vector, &args.q) {
        (Some(p), _, _) if p < corpus.len() => corpus.point(p).to_vec(),
        (Some(p), _, _) => {
            return Err(Error::Config(format!(
                "point {p} outside 0..{}",
                corpus.len()
            )))
        }
        (None, Some(v), _) => v.clone(),
        (None, None, Some(path)) => read_vector(Path::new(path))?,
        (None, None, None) => unreachable!("clap requires one of the three"),
    };
    let opts = QueryOptions {
        threshold: args.threshold,
        ..QueryOptions::default()
    };
    let result = engine.query(args.strategy, &q, &expr, args.k, &opts)?;
    let mut out = BufWriter::new(io::stdout().lock());
    writeln!(out, "rank\tpoint_id\tdistance").map_err(stdout_err)?;
    for (rank, n) in result.neighbors.iter().enumerate() {
        writeln!(out, "{}\t{}\t{}", rank + 1, n.id, n.distance).map_err(stdout_err)?;
    }
    out.flush().map_err(stdout_err)?;
    let c = result.counters;
    eprintln!(
        "{} on {}: {} nodes visited, {} points scored",
        result.strategy, result.condition, c.nodes_visited, c.points_scored
    );
    Ok(())
}

fn read_vector(path: &Path) -> Result<Vec<f32>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<f32>()
                .map_err(|_| Error::Config(format!("{}: `{t}` is not a number", path.display())))
        })
        .collect()
}

#[derive(Serialize)]
struct RcdSummary {
    nodes: usize,
    flagged: usize,
    flagged_fraction: f64,
    blind_spot_count: usize,
    blind_spot_nodes: Vec<u32>,
}

fn rcd(args: RcdArgs) -> Result<()> {
    let corpus = Arc::new(load_corpus(&args.corpus)?);
    let members = condition_members(
        &condra::condra_core::Condition::term(&args.attribute, &args.value),
        &corpus,
    )?;
    let tree = build_tree(corpus, args.kind, args.leaf_size, args.seed)?;
    let report = rcd_report(&tree, &members, args.alpha)?;
    let spots = blind_spots(&report, &tree, args.threshold);
    let mut out = BufWriter::new(io::stdout().lock());
    writeln!(out, "node_id\tdepth\tcount\tmembers\trcd\tp_value\tflag").map_err(stdout_err)?;
    for r in &report.nodes {
        let flag = if !r.significant {
            "-"
        } else if r.rcd < 1.0 {
            "low"
        } else {
            "high"
        };
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{:e}\t{}",
            r.node, r.depth, r.count, r.members, r.rcd, r.p_value, flag
        )
        .map_err(stdout_err)?;
    }
    out.flush().map_err(stdout_err)?;
    let summary = RcdSummary {
        nodes: report.nodes.len(),
        flagged: report.flagged(),
        flagged_fraction: report.flagged_fraction(),
        blind_spot_count: spots.len(),
        blind_spot_nodes: spots.iter().map(|s| s.node).collect(),
    };
    match &args.summary {
        Some(p) => write_json(&summary, Some(p)),
        None => {
            eprintln!("{}", serde_json::to_string(&summary)?);
            Ok(())
        }
    }
}

fn theorem1(args: Theorem1Args) -> Result<()> {
    let corpus = match &args.corpus {
        Some(p) => load_corpus(p)?,
        None => generate_blobs(
            &MixtureSpec::standard_normal(args.d, args.n, "real"),
            args.seed,
        )?,
    };
    let seeds: Vec<u64> = (0..args.seeds).map(|s| args.seed.wrapping_add(s)).collect();
    let curve = theorem1_experiment(Arc::new(corpus), &args.radii, args.leaf_size, &seeds)?;
    let mut out = BufWriter::new(io::stdout().lock());
    writeln!(
        out,
        "radius,radius_abs,mean_fraction,min_fraction,max_fraction,reference,mean_subset,seeds"
    )
    .map_err(stdout_err)?;
    for p in &curve.points {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            p.radius,
            p.radius * curve.diameter,
            p.mean,
            p.min,
            p.max,
            p.reference,
            p.mean_subset,
            p.seeds
        )
        .map_err(stdout_err)?;
    }
    out.flush().map_err(stdout_err)
}

fn bench(cmd: Bench) -> Result<()> {
    match cmd {
        Bench::Speed {
            n,
            d,
            labels,
            queries,
            k,
            repetitions,
            leaf_size,
            threshold,
            seed,
            out,
        } => {
            let data = ClusteredData::generate(n, d, labels, seed)?;
            let conditions = data.conditions();
            let qs = data.queries(queries);
            let engine = Engine::build(Arc::new(data.corpus), leaf_size)?;
            let cfg = SpeedConfig {
                k,
                repetitions,
                leaf_size,
                threshold,
                seed,
                ..SpeedConfig::default()
            };
            let report = run_speed_benchmark(&engine, &conditions, &qs, &cfg)?;
            let shape = shape_check(&report);
            write_json(
                &serde_json::json!({ "report": report, "shape": shape }),
                out.as_deref(),
            )
        }
        Bench::Accuracy {
            contents,
            styles,
            d,
            trials,
            ns,
            seed,
            out,
        } => {
            let corpus = generate_content_style(contents, styles, d, 0.5, 0.1, seed)?;
            let noise = noise_features(&corpus, seed ^ 1)?;
            let real = accuracy_at_n(Arc::new(corpus), &ns, trials, DEFAULT_LEAF_SIZE, seed)?;
            let random = accuracy_at_n(Arc::new(noise), &ns, trials, DEFAULT_LEAF_SIZE, seed)?;
            write_json(
                &serde_json::json!({ "separable": real, "noise": random }),
                out.as_deref(),
            )
        }
        Bench::Memory {
            n,
            d,
            labels,
            leaf_size,
            seed,
            out,
        } => {
            let corpus = Arc::new(ClusteredData::generate(n, d, labels, seed)?.corpus);
            let tree = build_tree(corpus.clone(), TreeKind::Ball, leaf_size, seed)?;
            let index = build_cond_index(&tree, &corpus, &["label"])?;
            let table = measure_memory(&tree, &index, &corpus);
            let (data, centroids, idx) = space_model_64(1_000_000, 2048, leaf_size as u64, 200);
            let reference = serde_json::json!({
                "n": 1_000_000, "d": 2048, "leaf_size": leaf_size, "values": 200,
                "data_bytes_64": data, "centroid_bytes_64": centroids, "index_bytes_64": idx,
            });
            write_json(
                &serde_json::json!({ "measured": table, "reference": reference }),
                out.as_deref(),
            )
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate(g) => generate(g),
        Command::Index(a) => index(a),
        Command::Query(a) => query(a),
        Command::Rcd(a) => rcd(a),
        Command::Theorem1(a) => theorem1(a),
        Command::Bench(b) => bench(b),
        Command::Serve(a) => {
            let rt = tokio::runtime::Runtime::new().map_err(|e| Error::Config(e.to_string()))?;
            rt.block_on(condra::service::serve(&a.config, a.addr))
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
