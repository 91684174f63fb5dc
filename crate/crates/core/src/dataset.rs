//! Records, dictionary encoding, dataset statistics and synthetic Zipf workloads.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{GbkmvError, Result};

/// Dense identifier of an element, assigned at ingestion.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ElementId(pub u32);

impl ElementId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for ElementId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "e#{}", self.0)
    }
}

/// A set of elements, stored strictly increasing.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Record {
    elements: Vec<ElementId>,
}

impl Record {
    /// Builds a record from arbitrary ids; duplicates are collapsed.
    /// Returns `None` for an empty set.
    pub fn new(mut elements: Vec<ElementId>) -> Option<Self> {
        elements.sort_unstable();
        elements.dedup();
        if elements.is_empty() {
            None
        } else {
            Some(Record { elements })
        }
    }

    pub fn from_ids<I: IntoIterator<Item = u32>>(ids: I) -> Option<Self> {
        Self::new(ids.into_iter().map(ElementId).collect())
    }

    pub fn elements(&self) -> &[ElementId] {
        &self.elements
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn contains(&self, e: ElementId) -> bool {
        self.elements.binary_search(&e).is_ok()
    }

    /// |self ∩ other| by sorted merge.
    pub fn intersection_size(&self, other: &Record) -> usize {
        let (a, b) = (&self.elements, &other.elements);
        let (mut i, mut j, mut n) = (0, 0, 0);
        while i < a.len() && j < b.len() {
            match a[i].cmp(&b[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    n += 1;
                    i += 1;
                    j += 1;
                }
            }
        }
        n
    }
}

/// Token <-> id mapping; ids are handed out in first-seen order.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Dictionary {
    tokens: Vec<String>,
    index: HashMap<String, ElementId>,
}

impl Dictionary {
    pub fn new() -> Self {
        Self::default()
    }

    /// Dictionary whose tokens are the decimal ids `0..n`.
    pub fn numeric(n: usize) -> Self {
        Self::from_tokens((0..n).map(|i| i.to_string()).collect())
            .expect("numeric tokens are distinct")
    }

    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), ElementId(i as u32)).is_some() {
                return Err(GbkmvError::InvalidParameter(format!(
                    "duplicate dictionary token {t:?}"
                )));
            }
        }
        Ok(Dictionary { tokens, index })
    }

    pub fn intern(&mut self, token: &str) -> ElementId {
        if let Some(&id) = self.index.get(token) {
            return id;
        }
        let id = ElementId(self.tokens.len() as u32);
        self.tokens.push(token.to_owned());
        self.index.insert(token.to_owned(), id);
        id
    }

    pub fn get(&self, token: &str) -> Option<ElementId> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: ElementId) -> Option<&str> {
        self.tokens.get(id.index()).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Encodes query lines against a fixed dictionary. Tokens the dictionary
/// has never seen get ids `n, n+1, ...` that stay stable for the lifetime
/// of the encoder; such ids never occur in any indexed record.
#[derive(Debug)]
pub struct QueryEncoder<'a> {
    dict: &'a Dictionary,
    extra: HashMap<String, ElementId>,
}

impl<'a> QueryEncoder<'a> {
    pub fn new(dict: &'a Dictionary) -> Self {
        QueryEncoder { dict, extra: HashMap::new() }
    }

    pub fn id_of(&mut self, token: &str) -> ElementId {
        if let Some(id) = self.dict.get(token) {
            return id;
        }
        let next = ElementId((self.dict.len() + self.extra.len()) as u32);
        *self.extra.entry(token.to_owned()).or_insert(next)
    }

    pub fn encode_line(&mut self, line: &str) -> Option<Record> {
        let ids = line.split_ascii_whitespace().map(|t| self.id_of(t)).collect();
        Record::new(ids)
    }

    pub fn is_known(&self, id: ElementId) -> bool {
        id.index() < self.dict.len()
    }
}

/// Global frequency and size statistics of a dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetStats {
    /// Number of records.
    pub m: usize,
    /// Number of distinct elements.
    pub n: usize,
    /// Total element occurrences, Σ f_i = Σ x_j.
    pub total: u64,
    pub freq: Vec<u64>,
    pub sizes: Vec<u32>,
    /// Rank exponent of the element-frequency distribution.
    pub alpha1: Option<f64>,
    /// Exponent of the record-size distribution.
    pub alpha2: Option<f64>,
    /// Elements by descending frequency, ties by ascending id.
    pub rank: Vec<ElementId>,
    /// `f_prefix[r]` = Σ_{i<r} f_(i) / N over `rank` order; length n + 1.
    pub f_prefix: Vec<f64>,
    /// `f_prefix_sq[r]` = Σ_{i<r} f_(i)² / N²; length n + 1.
    pub f_prefix_sq: Vec<f64>,
}

impl DatasetStats {
    pub fn compute(records: &[Record], n: usize) -> Self {
        let mut freq = vec![0u64; n];
        let mut sizes = Vec::with_capacity(records.len());
        for rec in records {
            sizes.push(rec.len() as u32);
            for e in rec.elements() {
                freq[e.index()] += 1;
            }
        }
        let total: u64 = freq.iter().sum();

        let mut rank: Vec<ElementId> = (0..n as u32).map(ElementId).collect();
        rank.sort_by(|a, b| freq[b.index()].cmp(&freq[a.index()]).then(a.cmp(b)));

        // Integer prefix sums keep f_prefix[n] == 1 exactly.
        let nt = total as f64;
        let nt2 = nt * nt;
        let mut f_prefix = Vec::with_capacity(n + 1);
        let mut f_prefix_sq = Vec::with_capacity(n + 1);
        let (mut cum, mut cum_sq) = (0u64, 0u128);
        f_prefix.push(0.0);
        f_prefix_sq.push(0.0);
        for e in &rank {
            let f = freq[e.index()];
            cum += f;
            cum_sq += (f as u128) * (f as u128);
            f_prefix.push(cum as f64 / nt);
            f_prefix_sq.push(cum_sq as f64 / nt2);
        }

        let alpha1 = fit_rank_exponent(&freq).ok();
        let sizes_u64: Vec<u64> = sizes.iter().map(|&s| s as u64).collect();
        let alpha2 = fit_power_law(&sizes_u64).ok();

        DatasetStats {
            m: records.len(),
            n,
            total,
            freq,
            sizes,
            alpha1,
            alpha2,
            rank,
            f_prefix,
            f_prefix_sq,
        }
    }

    /// Σ f_i² / N² over the whole universe.
    pub fn f_n2(&self) -> f64 {
        self.f_prefix_sq[self.n]
    }

    /// The `r` most frequent elements (fewer if `r > n`).
    pub fn top_elements(&self, r: usize) -> &[ElementId] {
        &self.rank[..r.min(self.n)]
    }
}

/// An encoded collection of records plus its statistics.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub records: Vec<Record>,
    pub dictionary: Dictionary,
    pub stats: DatasetStats,
}

impl Dataset {
    pub fn from_records(records: Vec<Record>, dictionary: Dictionary) -> Result<Self> {
        if records.is_empty() {
            return Err(GbkmvError::EmptyDataset);
        }
        let n = dictionary.len();
        if let Some(bad) = records
            .iter()
            .flat_map(|r| r.elements())
            .find(|e| e.index() >= n)
        {
            return Err(GbkmvError::InvalidParameter(format!(
                "element {bad} is outside the dictionary of {n} tokens"
            )));
        }
        let stats = DatasetStats::compute(&records, n);
        Ok(Dataset { records, dictionary, stats })
    }

    /// Builds a dataset over numeric tokens; the universe is `0..=max id`.
    pub fn from_id_records(records: Vec<Record>) -> Result<Self> {
        let n = records
            .iter()
            .flat_map(|r| r.elements().last())
            .map(|e| e.index() + 1)
            .max()
            .unwrap_or(0);
        Self::from_records(records, Dictionary::numeric(n))
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn query_encoder(&self) -> QueryEncoder<'_> {
        QueryEncoder::new(&self.dictionary)
    }
}

/// Reads one record per line, tokens split on ASCII whitespace. Records
/// with fewer than `min_size` distinct tokens are dropped before any token
/// is assigned an id.
pub fn ingest<R: BufRead>(source: R, min_size: usize) -> Result<Dataset> {
    ingest_filtered(source, min_size, |_| true)
}

/// As [`ingest`], keeping only tokens accepted by `keep` (e.g. a stop-word
/// filter supplied by the caller).
pub fn ingest_filtered<R, F>(source: R, min_size: usize, mut keep: F) -> Result<Dataset>
where
    R: BufRead,
    F: FnMut(&str) -> bool,
{
    if min_size == 0 {
        return Err(GbkmvError::InvalidParameter("min_size must be >= 1".into()));
    }
    let mut dict = Dictionary::new();
    let mut records = Vec::new();
    let mut seen: HashSet<String> = HashSet::new();
    let mut distinct: Vec<String> = Vec::new();
    for line in source.lines() {
        let line = line?;
        seen.clear();
        distinct.clear();
        for tok in line.split_ascii_whitespace() {
            if keep(tok) && seen.insert(tok.to_owned()) {
                distinct.push(tok.to_owned());
            }
        }
        if distinct.len() < min_size {
            continue;
        }
        let ids = distinct.iter().map(|t| dict.intern(t)).collect();
        records.extend(Record::new(ids));
    }
    Dataset::from_records(records, dict)
}

pub fn ingest_path<P: AsRef<Path>>(path: P, min_size: usize) -> Result<Dataset> {
    let file = File::open(path)?;
    ingest(BufReader::new(file), min_size)
}

const ALPHA_MIN: f64 = 0.05;
const ALPHA_MAX: f64 = 20.0;

/// Fits a discrete power law p(v) ∝ v^-α on the support
/// `[min(values), max(values)]` by maximum likelihood. The result is
/// clamped to `[0.05, 20]`.
pub fn fit_power_law(values: &[u64]) -> Result<f64> {
    if values.is_empty() {
        return Err(GbkmvError::InvalidParameter("no values to fit".into()));
    }
    if values.contains(&0) {
        return Err(GbkmvError::InvalidParameter("values must be >= 1".into()));
    }
    fit_weighted(values.iter().map(|&v| (v, 1.0)))
}

/// Fits the Zipf exponent s of a rank-frequency table, f_(i) ∝ i^-s, by
/// treating every occurrence as a draw of its element's rank.
pub fn fit_rank_exponent(freq: &[u64]) -> Result<f64> {
    let mut sorted: Vec<u64> = freq.iter().copied().filter(|&f| f > 0).collect();
    if sorted.is_empty() {
        return Err(GbkmvError::InvalidParameter("no values to fit".into()));
    }
    sorted.sort_unstable_by(|a, b| b.cmp(a));
    if sorted.first() == sorted.last() {
        return Err(GbkmvError::DegenerateFit);
    }
    fit_weighted(
        sorted
            .iter()
            .enumerate()
            .map(|(i, &f)| (i as u64 + 1, f as f64)),
    )
}

fn fit_weighted<I: Iterator<Item = (u64, f64)>>(samples: I) -> Result<f64> {
    let (mut lo, mut hi) = (u64::MAX, 0u64);
    let (mut wsum, mut lnsum) = (0.0f64, 0.0f64);
    for (v, w) in samples {
        lo = lo.min(v);
        hi = hi.max(v);
        wsum += w;
        lnsum += w * (v as f64).ln();
    }
    if lo == hi {
        return Err(GbkmvError::DegenerateFit);
    }
    let target = lnsum / wsum - (lo as f64).ln();

    // Mean of ln(k/lo) under the truncated law; strictly decreasing in α.
    let mean_log = |alpha: f64| {
        let (mut z, mut acc) = (0.0f64, 0.0f64);
        for k in lo..=hi {
            let l = (k as f64 / lo as f64).ln();
            let p = (-alpha * l).exp();
            z += p;
            acc += p * l;
        }
        acc / z
    };

    if target >= mean_log(ALPHA_MIN) {
        return Ok(ALPHA_MIN);
    }
    if target <= mean_log(ALPHA_MAX) {
        return Ok(ALPHA_MAX);
    }
    let (mut a, mut b) = (ALPHA_MIN, ALPHA_MAX);
    for _ in 0..60 {
        let mid = 0.5 * (a + b);
        if mean_log(mid) > target {
            a = mid;
        } else {
            b = mid;
        }
    }
    Ok(0.5 * (a + b))
}

/// Inverse-CDF sampler for p(v) ∝ v^-α on `lo..=hi`.
#[derive(Clone, Debug)]
pub struct PowerLawSampler {
    lo: u64,
    cdf: Vec<f64>,
}

impl PowerLawSampler {
    pub fn new(lo: u64, hi: u64, alpha: f64) -> Result<Self> {
        if lo == 0 || hi < lo {
            return Err(GbkmvError::InvalidParameter(format!(
                "power-law support [{lo}, {hi}] is invalid"
            )));
        }
        let mut cdf = Vec::with_capacity((hi - lo + 1) as usize);
        let mut acc = 0.0;
        for v in lo..=hi {
            acc += (v as f64).powf(-alpha);
            cdf.push(acc);
        }
        for c in &mut cdf {
            *c /= acc;
        }
        Ok(PowerLawSampler { lo, cdf })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        let u: f64 = rng.gen();
        let idx = self.cdf.partition_point(|&c| c <= u).min(self.cdf.len() - 1);
        self.lo + idx as u64
    }
}

/// Parameters of a synthetic Zipf workload.
#[derive(Clone, Debug, PartialEq)]
pub struct ZipfConfig {
    pub m: usize,
    /// Rank exponent of element popularity.
    pub alpha1: f64,
    /// Exponent of the record-size distribution.
    pub alpha2: f64,
    /// Universe size.
    pub n: usize,
    pub size_min: usize,
    pub size_max: usize,
    pub seed: u64,
}

/// Generates `m` records. Sizes follow p(x) ∝ x^-alpha2 on
/// `[size_min, size_max]`; elements are drawn without replacement with
/// P(id i) ∝ (i+1)^-alpha1, so id 0 is the most popular element.
pub fn generate_zipf(cfg: &ZipfConfig) -> Result<Vec<Record>> {
    if cfg.m == 0 || cfg.n == 0 {
        return Err(GbkmvError::InvalidParameter("m and n must be >= 1".into()));
    }
    if cfg.size_min == 0 || cfg.size_min > cfg.size_max || cfg.size_max > cfg.n {
        return Err(GbkmvError::InvalidParameter(format!(
            "size range [{}, {}] must lie within [1, {}]",
            cfg.size_min, cfg.size_max, cfg.n
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let sizes = PowerLawSampler::new(cfg.size_min as u64, cfg.size_max as u64, cfg.alpha2)?;
    let ranks = PowerLawSampler::new(1, cfg.n as u64, cfg.alpha1)?;

    let mut out = Vec::with_capacity(cfg.m);
    let mut chosen: HashSet<u32> = HashSet::new();
    for _ in 0..cfg.m {
        let size = sizes.sample(&mut rng) as usize;
        chosen.clear();
        let mut attempts = 0usize;
        while chosen.len() < size && attempts < 64 * size {
            chosen.insert((ranks.sample(&mut rng) - 1) as u32);
            attempts += 1;
        }
        if chosen.len() < size {
            // Rejection stalled (size close to n): finish with uniform picks
            // among the unused ids.
            let mut rest: Vec<u32> = (0..cfg.n as u32).filter(|i| !chosen.contains(i)).collect();
            while chosen.len() < size {
                let j = rng.gen_range(0..rest.len());
                chosen.insert(rest.swap_remove(j));
            }
        }
        out.extend(Record::from_ids(chosen.iter().copied()));
    }
    Ok(out)
}

/// [`generate_zipf`] wrapped into a [`Dataset`]. Ids are re-assigned in
/// first-seen order so that the dictionary holds only drawn elements.
pub fn generate_zipf_dataset(cfg: &ZipfConfig) -> Result<Dataset> {
    let records = generate_zipf(cfg)?;
    let mut dict = Dictionary::new();
    let records = records
        .into_iter()
        .map(|r| {
            let ids = r
                .elements()
                .iter()
                .map(|e| dict.intern(&e.0.to_string()))
                .collect();
            Record::new(ids).expect("non-empty")
        })
        .collect();
    Dataset::from_records(records, dict)
}
