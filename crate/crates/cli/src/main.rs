//! Command-line interface: factorization, synthetic benchmarking, corpus
//! ingestion, and Gram statistics.
//!
//! Exit codes: 0 on success, 1 on compute/input errors (the message names
//! the failing stage), 2 on flag errors. With a fixed `--seed`, output
//! files are byte-identical for any `--threads` value.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use xray_core::ingest::{read_docterm_triples, read_vocab, write_anchor_report, write_vocab};
use xray_core::{
    build_docterm, gram, model_select, noise_sweep, normalize_columns, read_coordinate_matrix,
    refine, write_coordinate_matrix, write_coordinate_matrix_dense, xray_run_observed,
    CriterionKind, GramCache, NnlsSettings, NormalizationMode, SelectionCriterion, SparseMatrix,
    SyntheticSpec, XrayConfig, XrayResult, DEFAULT_DENSE_THRESHOLD,
};

#[derive(Parser)]
#[command(
    name = "xray",
    about = "Conical-hull anchor selection for separable non-negative matrix factorization",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Factorize a matrix: select anchor columns and fit coefficients.
    Factorize(FactorizeArgs),
    /// Recovery benchmark on synthetic noisy separable data.
    Sweep(SweepArgs),
    /// Build a TF-IDF document-term matrix from doc/term/count triples.
    Ingest(IngestArgs),
    /// Print size and density statistics of a matrix and its Gram matrix.
    GramStats(GramStatsArgs),
}

#[derive(Args)]
struct FactorizeArgs {
    /// Input matrix in MatrixMarket coordinate format.
    #[arg(long)]
    input: PathBuf,

    /// Number of anchors to select.
    #[arg(long)]
    rank: Option<usize>,

    /// Stop when the relative residual improvement of a new anchor falls
    /// below this threshold; `--rank` then acts as the upper bound
    /// (default: the column count).
    #[arg(long, value_name = "THRESHOLD")]
    auto_rank: Option<f64>,

    /// Detection criterion.
    #[arg(long, default_value = "greedy")]
    variant: CriterionKind,

    /// Column normalization applied before factorization.
    #[arg(long, default_value = "none")]
    normalize: NormalizationMode,

    /// Seed for the rand criterion.
    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Worker threads for all parallel sections (0 = all cores).
    #[arg(long, default_value_t = 0)]
    threads: usize,

    /// Objective-stall tolerance of the projection solver
    /// (0 = run to per-column fixed points).
    #[arg(long, default_value_t = 0.0)]
    tol: f64,

    /// Cycle cap per column for the projection solver.
    #[arg(long, default_value_t = 2000)]
    max_cycles: usize,

    /// Alternating-minimization sweeps applied after selection.
    #[arg(long, default_value_t = 0)]
    refine_iters: usize,

    /// Density at or above which the Gram matrix is stored dense.
    #[arg(long, default_value_t = DEFAULT_DENSE_THRESHOLD)]
    dense_threshold: f64,

    /// Vocabulary file (from `ingest --out-vocab`) used to label anchors.
    #[arg(long)]
    vocab: Option<PathBuf>,

    /// Anchor report output path.
    #[arg(long)]
    out_anchors: PathBuf,

    /// Coefficient matrix output path (MatrixMarket).
    #[arg(long)]
    out_h: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    /// Rows of the synthetic matrix.
    #[arg(long, default_value_t = 200)]
    m: usize,

    /// Number of true anchors.
    #[arg(long, default_value_t = 20)]
    r: usize,

    /// Columns of the synthetic matrix.
    #[arg(long, default_value_t = 210)]
    n: usize,

    /// Noise levels: comma list and/or `start:stop:step` ranges.
    #[arg(long, default_value = "0:1.5:0.1")]
    deltas: String,

    /// Trials per (delta, variant) cell.
    #[arg(long, default_value_t = 10)]
    trials: usize,

    /// Comma-separated detection criteria.
    #[arg(long, default_value = "rand,max,dist,greedy")]
    variants: String,

    /// Master seed; per-run seeds are derived from it.
    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    threads: usize,

    /// Per-run CSV output path.
    #[arg(long)]
    out: PathBuf,

    /// Aggregate CSV output path (default: `<out>` with `.agg.csv` suffix).
    #[arg(long)]
    out_aggregate: Option<PathBuf>,
}

#[derive(Args)]
struct IngestArgs {
    /// Input `doc<TAB>term<TAB>count` file; `#` lines are comments.
    #[arg(long)]
    triples: PathBuf,

    /// Drop terms present in fewer than this many documents.
    #[arg(long, default_value_t = 1)]
    min_df: usize,

    /// Drop terms present in more than this fraction of documents.
    #[arg(long, default_value_t = 1.0)]
    max_df_frac: f64,

    /// Output matrix path (MatrixMarket).
    #[arg(long)]
    out: PathBuf,

    /// Output vocabulary path (`index<TAB>term` lines).
    #[arg(long)]
    out_vocab: PathBuf,
}

#[derive(Args)]
struct GramStatsArgs {
    /// Input matrix in MatrixMarket coordinate format.
    #[arg(long)]
    input: PathBuf,

    /// Density at or above which the Gram matrix is stored dense.
    #[arg(long, default_value_t = DEFAULT_DENSE_THRESHOLD)]
    dense_threshold: f64,

    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    threads: usize,
}

struct Failure {
    code: u8,
    message: String,
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: 2,
        message: message.into(),
    }
}

fn stage(name: &str, err: impl std::fmt::Display) -> Failure {
    Failure {
        code: 1,
        message: format!("{name}: {err}"),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Factorize(args) => cmd_factorize(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Ingest(args) => cmd_ingest(args),
        Command::GramStats(args) => cmd_gram_stats(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn init_threads(threads: usize) -> Result<(), Failure> {
    if threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| usage(format!("--threads: {e}")))?;
    }
    Ok(())
}

fn emit_timing(stage: &str, start: Instant) {
    eprintln!("{stage},{:.3}", start.elapsed().as_secs_f64());
}

fn load_matrix(path: &Path) -> Result<SparseMatrix, Failure> {
    read_coordinate_matrix(path).map_err(|e| stage("read-input", e))
}

fn cmd_factorize(args: FactorizeArgs) -> Result<(), Failure> {
    let total = Instant::now();
    init_threads(args.threads)?;
    if args.rank.is_none() && args.auto_rank.is_none() {
        return Err(usage("one of --rank or --auto-rank is required"));
    }
    if let Some(rank) = args.rank {
        if rank < 1 {
            return Err(usage("rank must be >= 1"));
        }
    }
    if let Some(t) = args.auto_rank {
        if !(t >= 0.0) {
            return Err(usage("--auto-rank threshold must be >= 0"));
        }
    }
    if args.max_cycles < 1 {
        return Err(usage("--max-cycles must be >= 1"));
    }
    if !(args.tol >= 0.0) {
        return Err(usage("--tol must be >= 0"));
    }

    let x = load_matrix(&args.input)?;
    let vocab = match &args.vocab {
        Some(path) => Some(read_vocab(path).map_err(|e| stage("read-vocab", e))?),
        None => None,
    };

    let (x, _zero_cols) = normalize_columns(&x, args.normalize);

    let settings = NnlsSettings {
        tol: args.tol,
        maxcycles: args.max_cycles,
    };
    let criterion = SelectionCriterion::new(args.variant, args.seed);
    let config = XrayConfig {
        rank: args.rank.unwrap_or_else(|| x.n_cols()),
        criterion,
        nnls: settings,
        early_stop_tol: 1e-10,
        refine_iters: args.refine_iters,
        improvement_threshold: args.auto_rank,
    };

    let fact_start = Instant::now();
    let result: XrayResult = if args.auto_rank.is_some() {
        let rank_max = config.rank;
        model_select(&x, &config, rank_max).map_err(|e| stage("factorize", e))?
    } else {
        let gram_start = Instant::now();
        let cache = gram(&x, args.dense_threshold);
        emit_timing("gram", gram_start);
        xray_run_observed(&cache, &config, |ev| {
            eprintln!(
                "# iter {}: anchor {} residual {:.6e}",
                ev.iteration + 1,
                ev.report.chosen + 1,
                ev.objective
            );
        })
        .map_err(|e| stage("factorize", e))?
    };
    emit_timing("factorize", fact_start);

    let h = if args.refine_iters > 0 {
        let refine_start = Instant::now();
        let refined = refine(&x, &result.anchors, &result.h, args.refine_iters, &settings)
            .map_err(|e| stage("refine", e))?;
        emit_timing("refine", refine_start);
        for (sweep, obj) in refined.objective_history.iter().enumerate() {
            eprintln!("# refine sweep {sweep}: objective {obj:.6e}");
        }
        refined.h
    } else {
        result.h.clone()
    };

    let write_start = Instant::now();
    write_anchor_report(&args.out_anchors, &result.anchors, vocab.as_deref())
        .map_err(|e| stage("write-anchors", e))?;
    write_coordinate_matrix_dense(&h, &args.out_h).map_err(|e| stage("write-h", e))?;
    emit_timing("write", write_start);
    emit_timing("total", total);
    Ok(())
}

/// Parse `--deltas`: comma-separated values where each token is either a
/// number or an inclusive `start:stop:step` range.
fn parse_deltas(spec: &str) -> Result<Vec<f64>, Failure> {
    let mut out = Vec::new();
    for token in spec.split(',') {
        let token = token.trim();
        if token.is_empty() {
            continue;
        }
        if token.contains(':') {
            let parts: Vec<&str> = token.split(':').collect();
            if parts.len() != 3 {
                return Err(usage(format!("bad delta range '{token}', want start:stop:step")));
            }
            let start: f64 = parts[0]
                .parse()
                .map_err(|_| usage(format!("bad delta range start '{}'", parts[0])))?;
            let stop: f64 = parts[1]
                .parse()
                .map_err(|_| usage(format!("bad delta range stop '{}'", parts[1])))?;
            let step: f64 = parts[2]
                .parse()
                .map_err(|_| usage(format!("bad delta range step '{}'", parts[2])))?;
            if !(step > 0.0) || stop < start {
                return Err(usage(format!("bad delta range '{token}'")));
            }
            let count = ((stop - start) / step).round() as usize;
            for i in 0..=count {
                let v = start + step * i as f64;
                if v <= stop + 1e-12 {
                    out.push(v);
                }
            }
        } else {
            out.push(
                token
                    .parse()
                    .map_err(|_| usage(format!("bad delta value '{token}'")))?,
            );
        }
    }
    if out.is_empty() {
        return Err(usage("no deltas given"));
    }
    if out.iter().any(|v| *v < 0.0 || !v.is_finite()) {
        return Err(usage("deltas must be finite and >= 0"));
    }
    Ok(out)
}

fn parse_variants(spec: &str) -> Result<Vec<CriterionKind>, Failure> {
    let mut out = Vec::new();
    for token in spec.split(',') {
        let token = token.trim();
        if token.is_empty() {
            continue;
        }
        out.push(token.parse::<CriterionKind>().map_err(usage)?);
    }
    if out.is_empty() {
        return Err(usage("no variants given"));
    }
    Ok(out)
}

fn cmd_sweep(args: SweepArgs) -> Result<(), Failure> {
    let total = Instant::now();
    init_threads(args.threads)?;
    if args.trials < 1 {
        return Err(usage("--trials must be >= 1"));
    }
    let deltas = parse_deltas(&args.deltas)?;
    let variants = parse_variants(&args.variants)?;
    let template = SyntheticSpec {
        m: args.m,
        r_true: args.r,
        n: args.n,
        seed: args.seed,
        ..SyntheticSpec::default()
    };

    let sweep_start = Instant::now();
    let result =
        noise_sweep(&template, &deltas, &variants, args.trials).map_err(|e| stage("sweep", e))?;
    emit_timing("sweep", sweep_start);

    let runs = std::fs::File::create(&args.out).map_err(|e| stage("write-csv", e))?;
    result
        .write_runs_csv(std::io::BufWriter::new(runs))
        .map_err(|e| stage("write-csv", e))?;
    let agg_path = args
        .out_aggregate
        .clone()
        .unwrap_or_else(|| derive_aggregate_path(&args.out));
    let agg = std::fs::File::create(&agg_path).map_err(|e| stage("write-csv", e))?;
    result
        .write_aggregates_csv(std::io::BufWriter::new(agg))
        .map_err(|e| stage("write-csv", e))?;
    emit_timing("total", total);
    Ok(())
}

fn derive_aggregate_path(out: &Path) -> PathBuf {
    let mut name = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "sweep".into());
    name.push_str(".agg.csv");
    out.with_file_name(name)
}

fn cmd_ingest(args: IngestArgs) -> Result<(), Failure> {
    if args.min_df < 1 {
        return Err(usage("--min-df must be >= 1"));
    }
    if !(args.max_df_frac > 0.0 && args.max_df_frac <= 1.0) {
        return Err(usage("--max-df-frac must be in (0, 1]"));
    }
    let triples = read_docterm_triples(&args.triples).map_err(|e| stage("read-triples", e))?;
    let (x, stats) =
        build_docterm(&triples, args.min_df, args.max_df_frac).map_err(|e| stage("build", e))?;
    write_coordinate_matrix(&x, &args.out).map_err(|e| stage("write-matrix", e))?;
    write_vocab(&args.out_vocab, &stats.terms).map_err(|e| stage("write-vocab", e))?;
    eprintln!(
        "# ingested {} docs x {} terms, {} nonzeros",
        stats.n_docs,
        stats.n_terms,
        x.nnz()
    );
    Ok(())
}

fn cmd_gram_stats(args: GramStatsArgs) -> Result<(), Failure> {
    init_threads(args.threads)?;
    let x = load_matrix(&args.input)?;
    let gram_start = Instant::now();
    let cache: GramCache = gram(&x, args.dense_threshold);
    emit_timing("gram", gram_start);
    let n = cache.n();
    println!("rows,{}", x.n_rows());
    println!("cols,{n}");
    println!("nnz_x,{}", x.nnz());
    println!("nnz_c,{}", cache.nnz());
    let density = if n == 0 {
        0.0
    } else {
        cache.nnz() as f64 / (n as f64 * n as f64)
    };
    println!("density_c,{density:.6}");
    println!("dense_stored,{}", cache.is_dense());
    println!("frob_sq,{:.6e}", cache.frob_sq());
    Ok(())
}
