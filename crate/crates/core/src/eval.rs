//! Accuracy, space and latency evaluation of the search methods against
//! the exact answer.

use std::time::Instant;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{GbkmvError, Result};
use crate::gbkmv::{build_gbkmv_index, BufferSize};
use crate::hashing::HashSource;
use crate::kmv::{build_kmv, build_kmv_index, estimate_intersection_kmv};
use crate::lshe::{build_lshe_index, lshe_query, DEFAULT_K_PRIME};
use crate::search::{exact_search, query, QueryScratch, SearchThresholds, SizePartitionIndex, DEFAULT_PARTITIONS};

/// Bytes per stored hash entry (32-bit id plus 64-bit hash).
const ENTRY_BYTES: usize = 12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Gbkmv,
    Gkmv,
    Kmv,
    Lshe,
    Exact,
}

/// Weighted harmonic mean of precision and recall; 0 when both are 0.
pub fn f_alpha(precision: f64, recall: f64, alpha: f64) -> f64 {
    let a2 = alpha * alpha;
    let den = a2 * precision + recall;
    if den == 0.0 {
        return 0.0;
    }
    (1.0 + a2) * precision * recall / den
}

/// Precision and recall of `result` against `truth` (both sorted). An empty
/// result has precision 1; an empty truth has recall 1.
pub fn precision_recall(result: &[usize], truth: &[usize]) -> (f64, f64) {
    let (mut i, mut j, mut hit) = (0, 0, 0usize);
    while i < result.len() && j < truth.len() {
        match result[i].cmp(&truth[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                hit += 1;
                i += 1;
                j += 1;
            }
        }
    }
    let p = if result.is_empty() { 1.0 } else { hit as f64 / result.len() as f64 };
    let r = if truth.is_empty() { 1.0 } else { hit as f64 / truth.len() as f64 };
    (p, r)
}

/// `⌊ratio · N⌋`.
pub fn budget_units(ratio: f64, total: u64) -> Result<u64> {
    if ratio.is_nan() || ratio <= 0.0 {
        return Err(GbkmvError::InvalidParameter(format!("budget ratio {ratio} must be positive")));
    }
    Ok((ratio * total as f64).floor() as u64)
}

/// `num` distinct record ids drawn uniformly, in draw order.
pub fn sample_queries(m: usize, num: usize, seed: u64) -> Result<Vec<usize>> {
    if num > m {
        return Err(GbkmvError::InvalidParameter(format!("{num} queries requested from {m} records")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(sample(&mut rng, m, num).into_vec())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub method: Method,
    pub budget_ratio: f64,
    pub t_star: f64,
    pub num_queries: usize,
    pub seed: u64,
    /// Buffer width for `gbkmv`; `None` lets the tuner pick.
    pub r: Option<usize>,
    pub k_prime: usize,
    pub partitions: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            method: Method::Gbkmv,
            budget_ratio: 0.1,
            t_star: 0.5,
            num_queries: 200,
            seed: 0,
            r: None,
            k_prime: DEFAULT_K_PRIME,
            partitions: DEFAULT_PARTITIONS,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryMetrics {
    pub record: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub f05: f64,
    pub result_size: usize,
    pub truth_size: usize,
    pub latency_us: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: Method,
    pub num_queries: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub f05: f64,
    pub mean_latency_us: f64,
    pub median_latency_us: f64,
    pub build_ms: f64,
    pub space_units: f64,
    pub space_bytes: usize,
    pub budget_units: u64,
    pub budget_ratio: f64,
    pub seed: u64,
    pub t_star: f64,
    pub r: Option<usize>,
    pub tau: Option<f64>,
    pub k_prime: Option<usize>,
    pub partitions: Option<usize>,
    pub alpha1: Option<f64>,
    pub alpha2: Option<f64>,
    pub deviations: Vec<String>,
    pub per_query: Vec<QueryMetrics>,
}

impl EvalReport {
    /// Aggregate fields only, as a flat CSV row.
    pub fn csv_header() -> &'static str {
        "method,num_queries,precision,recall,f1,f05,mean_latency_us,median_latency_us,build_ms,space_units,space_bytes,budget_units,budget_ratio,t_star,r,tau,k_prime"
    }

    pub fn csv_row(&self) -> String {
        let opt = |v: Option<String>| v.unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            serde_json::to_value(self.method).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default(),
            self.num_queries,
            self.precision,
            self.recall,
            self.f1,
            self.f05,
            self.mean_latency_us,
            self.median_latency_us,
            self.build_ms,
            self.space_units,
            self.space_bytes,
            self.budget_units,
            self.budget_ratio,
            self.t_star,
            opt(self.r.map(|v| v.to_string())),
            opt(self.tau.map(|v| v.to_string())),
            opt(self.k_prime.map(|v| v.to_string())),
        )
    }
}

/// Built index for one method, answering sorted record-id lists.
enum Engine {
    Gbkmv(crate::gbkmv::GbkmvIndex, SizePartitionIndex, QueryScratch),
    Kmv(Vec<crate::kmv::KmvSketch>, usize, HashSource),
    Lshe(crate::lshe::LsheIndex),
    Exact,
}

impl Engine {
    fn run(&mut self, ds: &Dataset, q: &crate::dataset::Record, t_star: f64) -> Result<Vec<usize>> {
        let hits = match self {
            Engine::Gbkmv(idx, accel, scratch) => query(idx, accel, q, t_star, scratch)?,
            Engine::Kmv(sketches, k, h) => {
                let th = SearchThresholds::new(t_star, q.len())?;
                let lq = build_kmv(q, *k, h)?;
                let mut hits = Vec::new();
                for (id, lx) in sketches.iter().enumerate() {
                    let d = match estimate_intersection_kmv(&lq, lx) {
                        Ok(e) => e.d_cap_hat,
                        Err(GbkmvError::InsufficientSketch { .. }) => 0.0,
                        Err(e) => return Err(e),
                    };
                    if th.accepts(d) {
                        hits.push((id, d / q.len() as f64));
                    }
                }
                hits
            }
            Engine::Lshe(idx) => lshe_query(idx, q, t_star)?,
            Engine::Exact => exact_search(ds, q, t_star)?,
        };
        Ok(hits.into_iter().map(|h| h.0).collect())
    }
}

fn median(v: &mut [f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Builds the method's index over `ds`, runs sampled record queries and
/// scores them against exact search.
pub fn run_eval(ds: &Dataset, cfg: &EvalConfig) -> Result<EvalReport> {
    let budget = budget_units(cfg.budget_ratio, ds.stats.total)?;
    let queries = sample_queries(ds.stats.m, cfg.num_queries, cfg.seed)?;
    let h = HashSource::computed(cfg.seed);
    let mut deviations = vec!["power-law exponents use a discrete maximum-likelihood fit".to_owned()];
    let (mut r, mut tau, mut k_prime, mut partitions) = (None, None, None, None);

    let start = Instant::now();
    let (mut engine, space_units, space_bytes) = match cfg.method {
        Method::Gbkmv | Method::Gkmv => {
            let width = match (cfg.method, cfg.r) {
                (Method::Gkmv, _) => BufferSize::Bits(0),
                (_, Some(w)) => BufferSize::Bits(w),
                (_, None) => BufferSize::Auto,
            };
            let idx = build_gbkmv_index(ds, budget, width, &h)?;
            let accel = SizePartitionIndex::build(&idx, cfg.partitions)?;
            r = Some(idx.r());
            tau = Some(idx.tau());
            partitions = Some(cfg.partitions);
            let tails: usize = idx.sketches().iter().map(|s| s.tail.len()).sum();
            let bytes = idx.len() * idx.r().div_ceil(32) * 4 + tails * ENTRY_BYTES;
            let units = idx.stored_units();
            (Engine::Gbkmv(idx, accel, QueryScratch::default()), units, bytes)
        }
        Method::Kmv => {
            let sketches = build_kmv_index(ds, budget, &h)?;
            let k = (budget / ds.stats.m as u64) as usize;
            let entries: usize = sketches.iter().map(|s| s.len()).sum();
            (Engine::Kmv(sketches, k, h.clone()), entries as f64, entries * ENTRY_BYTES)
        }
        Method::Lshe => {
            let idx = build_lshe_index(ds, cfg.k_prime, cfg.partitions, &h)?;
            k_prime = Some(cfg.k_prime);
            partitions = Some(cfg.partitions);
            deviations.push("LSH-E candidates are found by comparing signatures directly, without banding".to_owned());
            let units = idx.stored_units();
            (Engine::Lshe(idx), units, units as usize * 8)
        }
        Method::Exact => (Engine::Exact, ds.stats.total as f64, ds.stats.total as usize * 4),
    };
    let build_ms = start.elapsed().as_secs_f64() * 1e3;

    let mut per_query = Vec::with_capacity(queries.len());
    for &qid in &queries {
        let q = &ds.records[qid];
        let truth: Vec<usize> = exact_search(ds, q, cfg.t_star)?.into_iter().map(|h| h.0).collect();
        let t0 = Instant::now();
        let result = engine.run(ds, q, cfg.t_star)?;
        let latency_us = t0.elapsed().as_secs_f64() * 1e6;
        let (precision, recall) = precision_recall(&result, &truth);
        per_query.push(QueryMetrics {
            record: qid,
            precision,
            recall,
            f1: f_alpha(precision, recall, 1.0),
            f05: f_alpha(precision, recall, 0.5),
            result_size: result.len(),
            truth_size: truth.len(),
            latency_us,
        });
    }

    let n = per_query.len().max(1) as f64;
    let mean = |f: fn(&QueryMetrics) -> f64| per_query.iter().map(f).sum::<f64>() / n;
    let mut lat: Vec<f64> = per_query.iter().map(|m| m.latency_us).collect();
    Ok(EvalReport {
        method: cfg.method,
        num_queries: per_query.len(),
        precision: mean(|m| m.precision),
        recall: mean(|m| m.recall),
        f1: mean(|m| m.f1),
        f05: mean(|m| m.f05),
        mean_latency_us: mean(|m| m.latency_us),
        median_latency_us: median(&mut lat),
        build_ms,
        space_units,
        space_bytes,
        budget_units: budget,
        budget_ratio: cfg.budget_ratio,
        seed: cfg.seed,
        t_star: cfg.t_star,
        r,
        tau,
        k_prime,
        partitions,
        alpha1: ds.stats.alpha1,
        alpha2: ds.stats.alpha2,
        deviations,
        per_query,
    })
}
