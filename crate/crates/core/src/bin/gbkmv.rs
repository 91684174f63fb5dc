use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use gbkmv::dataset::{generate_zipf_dataset, ingest_path, Dataset, Dictionary, ZipfConfig};
use gbkmv::eval::{budget_units, run_eval, EvalConfig, EvalReport, Method};
use gbkmv::gbkmv::{build_gbkmv_index, BufferSize};
use gbkmv::lshe::{build_lshe_index, lshe_query, DEFAULT_K_PRIME};
use gbkmv::persist::{load_index, save_index};
use gbkmv::search::{query, QueryScratch, SizePartitionIndex, DEFAULT_PARTITIONS};
use gbkmv::tuner::{choose_buffer_size, predict_grid, CostModelInputs};
use gbkmv::{GbkmvError, HashSource, Record, Result};

#[derive(Parser, Debug)]
#[command(name = "gbkmv", version, about = "Containment similarity search with GB-KMV sketches")]
struct Cli {
    /// Seed for hashing, sampling and generation.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Space budget as a fraction of the total number of element occurrences.
    #[arg(long, global = true, default_value_t = 0.1)]
    budget: f64,
    /// Containment threshold t*.
    #[arg(long, global = true, default_value_t = 0.5)]
    threshold: f64,
    /// Records with fewer distinct tokens are dropped on ingest.
    #[arg(long, global = true, default_value_t = 10)]
    min_size: usize,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Build a GB-KMV index from a dataset file (one record per line).
    Build(BuildArgs),
    /// Search an index with one query record per line; prints TSV.
    Query(QueryArgs),
    /// Score one or more methods against exact search.
    Eval(EvalArgs),
    /// Print the predicted variance for every candidate buffer width as CSV.
    Tune(TuneArgs),
    /// Search with the LSH Ensemble baseline; prints TSV.
    Baseline(BaselineArgs),
    /// Write a synthetic dataset with Zipf element frequencies and record sizes.
    GenZipf(GenZipfArgs),
}

#[derive(Args, Debug)]
struct BuildArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    /// Buffer width in bits, or `auto`.
    #[arg(long, default_value = "auto")]
    r: String,
    /// Two-column `token hash` file replacing the computed hash.
    #[arg(long)]
    hash_fixture: Option<PathBuf>,
    /// Budget in element units; overrides `--budget`.
    #[arg(long)]
    budget_units: Option<u64>,
}

#[derive(Args, Debug)]
struct QueryArgs {
    #[arg(long)]
    index: PathBuf,
    #[arg(long)]
    query_file: PathBuf,
    #[arg(long, default_value_t = DEFAULT_PARTITIONS)]
    partitions: usize,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, num_args = 1.., default_values_t = [Method::Gbkmv])]
    method: Vec<Method>,
    #[arg(long, default_value_t = 200)]
    queries: usize,
    /// Buffer width for gbkmv; the tuner picks one when omitted.
    #[arg(long)]
    r: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_K_PRIME)]
    k_prime: usize,
    #[arg(long, default_value_t = DEFAULT_PARTITIONS)]
    partitions: usize,
    /// JSON-lines report; stdout when omitted.
    #[arg(long)]
    report: Option<PathBuf>,
    /// CSV with one aggregate row per method.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TuneArgs {
    #[arg(long)]
    input: PathBuf,
}

#[derive(Args, Debug)]
struct BaselineArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    query_file: PathBuf,
    #[arg(long, default_value_t = DEFAULT_K_PRIME)]
    k_prime: usize,
    #[arg(long, default_value_t = DEFAULT_PARTITIONS)]
    partitions: usize,
}

#[derive(Args, Debug)]
struct GenZipfArgs {
    #[arg(long)]
    output: PathBuf,
    #[arg(long, default_value_t = 10_000)]
    records: usize,
    /// Element frequency exponent.
    #[arg(long, default_value_t = 1.1)]
    alpha1: f64,
    /// Record size exponent.
    #[arg(long, default_value_t = 2.5)]
    alpha2: f64,
    /// Number of distinct elements.
    #[arg(long, default_value_t = 100_000)]
    universe: usize,
    #[arg(long, default_value_t = 10)]
    size_min: usize,
    #[arg(long, default_value_t = 1000)]
    size_max: usize,
}

fn parse_width(s: &str) -> Result<BufferSize> {
    if s == "auto" {
        return Ok(BufferSize::Auto);
    }
    s.parse()
        .map(BufferSize::Bits)
        .map_err(|_| GbkmvError::InvalidParameter(format!("--r expects a bit count or `auto`, got {s:?}")))
}

fn read_queries(path: &Path, dict: &Dictionary) -> Result<Vec<Option<Record>>> {
    let file = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for line in file.lines() {
        let line = line?;
        out.push(gbkmv::dataset::QueryEncoder::new(dict).encode_line(&line));
    }
    Ok(out)
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn build(cli: &Cli, a: &BuildArgs) -> Result<()> {
    let ds = ingest_path(&a.input, cli.min_size)?;
    let hash = match &a.hash_fixture {
        Some(p) => {
            let mut enc = ds.query_encoder();
            HashSource::load_fixture(cli.seed, BufReader::new(File::open(p)?), |t| enc.id_of(t))?
        }
        None => HashSource::computed(cli.seed),
    };
    let b = match a.budget_units {
        Some(b) => b,
        None => budget_units(cli.budget, ds.stats.total)?,
    };
    let idx = build_gbkmv_index(&ds, b, parse_width(&a.r)?, &hash)?;
    save_index(&idx, &a.output)?;
    eprintln!(
        "records={} elements={} budget={} r={} tau={} units={}",
        idx.len(),
        idx.dictionary().len(),
        b,
        idx.r(),
        idx.tau(),
        idx.stored_units()
    );
    Ok(())
}

fn run_query(cli: &Cli, a: &QueryArgs) -> Result<()> {
    let idx = load_index(&a.index)?;
    let accel = SizePartitionIndex::build(&idx, a.partitions)?;
    let mut scratch = QueryScratch::default();
    let mut out = output(None)?;
    for (i, q) in read_queries(&a.query_file, idx.dictionary())?.into_iter().enumerate() {
        let Some(q) = q else { continue };
        for (id, c) in query(&idx, &accel, &q, cli.threshold, &mut scratch)? {
            writeln!(out, "{i}\t{id}\t{c:.6}")?;
        }
    }
    out.flush()?;
    Ok(())
}

fn eval(cli: &Cli, a: &EvalArgs) -> Result<()> {
    let ds = ingest_path(&a.input, cli.min_size)?;
    let mut reports: Vec<EvalReport> = Vec::new();
    for &method in &a.method {
        let cfg = EvalConfig {
            method,
            budget_ratio: cli.budget,
            t_star: cli.threshold,
            num_queries: a.queries.min(ds.stats.m),
            seed: cli.seed,
            r: a.r,
            k_prime: a.k_prime,
            partitions: a.partitions,
        };
        reports.push(run_eval(&ds, &cfg)?);
    }
    let mut out = output(a.report.as_deref())?;
    for r in &reports {
        serde_json::to_writer(&mut out, r).map_err(io::Error::from)?;
        writeln!(out)?;
    }
    out.flush()?;
    if let Some(p) = &a.csv {
        let mut w = BufWriter::new(File::create(p)?);
        writeln!(w, "{}", EvalReport::csv_header())?;
        for r in &reports {
            writeln!(w, "{}", r.csv_row())?;
        }
        w.flush()?;
    }
    Ok(())
}

fn tune(cli: &Cli, a: &TuneArgs) -> Result<()> {
    let ds = ingest_path(&a.input, cli.min_size)?;
    let inputs = CostModelInputs::from_dataset(&ds, budget_units(cli.budget, ds.stats.total)?, cli.seed)?;
    let chosen = choose_buffer_size(&inputs)?;
    let mut out = output(None)?;
    writeln!(out, "r,predicted_variance,delta_vs_r0,chosen")?;
    for p in predict_grid(&inputs)? {
        writeln!(out, "{},{},{},{}", p.r, p.var_gbkmv, p.delta_vs_gkmv, u8::from(p.r == chosen))?;
    }
    out.flush()?;
    Ok(())
}

fn baseline(cli: &Cli, a: &BaselineArgs) -> Result<()> {
    let ds = ingest_path(&a.input, cli.min_size)?;
    let idx = build_lshe_index(&ds, a.k_prime, a.partitions, &HashSource::computed(cli.seed))?;
    let mut out = output(None)?;
    for (i, q) in read_queries(&a.query_file, &ds.dictionary)?.into_iter().enumerate() {
        let Some(q) = q else { continue };
        for (id, c) in lshe_query(&idx, &q, cli.threshold)? {
            writeln!(out, "{i}\t{id}\t{c:.6}")?;
        }
    }
    out.flush()?;
    Ok(())
}

fn write_dataset(ds: &Dataset, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for rec in &ds.records {
        let line: Vec<&str> = rec.elements().iter().map(|&e| ds.dictionary.token(e).unwrap_or("?")).collect();
        writeln!(w, "{}", line.join(" "))?;
    }
    w.flush()?;
    Ok(())
}

fn gen_zipf(cli: &Cli, a: &GenZipfArgs) -> Result<()> {
    let ds = generate_zipf_dataset(&ZipfConfig {
        m: a.records,
        alpha1: a.alpha1,
        alpha2: a.alpha2,
        n: a.universe,
        size_min: a.size_min,
        size_max: a.size_max,
        seed: cli.seed,
    })?;
    write_dataset(&ds, &a.output)?;
    eprintln!("records={} elements={} occurrences={}", ds.stats.m, ds.stats.n, ds.stats.total);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match &cli.cmd {
        Cmd::Build(a) => build(&cli, a),
        Cmd::Query(a) => run_query(&cli, a),
        Cmd::Eval(a) => eval(&cli, a),
        Cmd::Tune(a) => tune(&cli, a),
        Cmd::Baseline(a) => baseline(&cli, a),
        Cmd::GenZipf(a) => gen_zipf(&cli, a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
