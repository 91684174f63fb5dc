//! Threshold containment search over a GB-KMV index, and the exact oracle.

use std::collections::HashMap;

use crate::dataset::{Dataset, ElementId, Record};
use crate::error::{GbkmvError, Result};
use crate::gbkmv::{estimate_overlap_gbkmv, GbkmvIndex, GbkmvRecordSketch};

/// Default number of equal-depth size partitions.
pub const DEFAULT_PARTITIONS: usize = 32;

/// Slack on the count filter so rounding can only admit extra candidates.
const PRUNE_SLACK: f64 = 1e-9;

/// One search hit: record id and estimated (or exact) containment.
pub type Hit = (usize, f64);

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SearchThresholds {
    pub t_star: f64,
    pub q: usize,
    /// `t_star · q`.
    pub theta: f64,
}

impl SearchThresholds {
    pub fn new(t_star: f64, q: usize) -> Result<Self> {
        if !(0.0..=1.0).contains(&t_star) {
            return Err(GbkmvError::InvalidParameter(format!("threshold {t_star} is outside [0, 1]")));
        }
        if q == 0 {
            return Err(GbkmvError::InvalidParameter("query is empty".into()));
        }
        Ok(SearchThresholds { t_star, q, theta: t_star * q as f64 })
    }

    /// Whether an overlap estimate clears the threshold. Every search path
    /// decides through here so they agree bit for bit.
    #[inline]
    pub fn accepts(&self, d_hat: f64) -> bool {
        d_hat.clamp(0.0, self.q as f64) >= self.theta
    }

    /// Tail matches a record needs given buffer overlap `o1` and a lower
    /// bound on U(k).
    pub fn residual(&self, o1: u32, u_lower: f64) -> f64 {
        ((self.theta - o1 as f64) * u_lower).max(0.0)
    }
}

#[derive(Clone, Debug)]
struct Partition {
    /// Record ids, ascending.
    records: Vec<u32>,
    min_size: u32,
    max_size: u32,
    /// Smallest tail maximum in the partition (0 for an empty tail).
    min_tail_max: f64,
    /// Element → positions in `records`, ascending.
    postings: HashMap<ElementId, Vec<u32>>,
    /// Buffer words, record-major.
    buffers: Vec<u32>,
}

/// Size-partitioned inverted index over the tails of a [`GbkmvIndex`].
#[derive(Clone, Debug)]
pub struct SizePartitionIndex {
    partitions: Vec<Partition>,
    words: usize,
    m: usize,
}

/// Splits record ids into `g` groups of consecutive sizes whose lengths
/// differ by at most one. Ties in size are broken by id.
pub fn equal_depth_partitions(sizes: &[u32], g: usize) -> Vec<Vec<u32>> {
    let mut order: Vec<u32> = (0..sizes.len() as u32).collect();
    order.sort_by_key(|&i| (sizes[i as usize], i));
    let g = g.clamp(1, sizes.len().max(1));
    let (base, extra) = (sizes.len() / g, sizes.len() % g);
    let mut out = Vec::with_capacity(g);
    let mut start = 0;
    for p in 0..g {
        let len = base + usize::from(p < extra);
        let mut part = order[start..start + len].to_vec();
        part.sort_unstable();
        out.push(part);
        start += len;
    }
    out
}

impl SizePartitionIndex {
    pub fn build(index: &GbkmvIndex, g: usize) -> Result<Self> {
        if g == 0 {
            return Err(GbkmvError::InvalidParameter("at least one partition is required".into()));
        }
        let words = index.r().div_ceil(32);
        let sketches = index.sketches();
        let partitions = equal_depth_partitions(index.sizes(), g)
            .into_iter()
            .map(|records| {
                let mut postings: HashMap<ElementId, Vec<u32>> = HashMap::new();
                let mut buffers = Vec::with_capacity(records.len() * words);
                let mut min_tail_max = f64::INFINITY;
                for (pos, &id) in records.iter().enumerate() {
                    let s = &sketches[id as usize];
                    buffers.extend_from_slice(s.buffer.words());
                    min_tail_max = min_tail_max.min(s.tail.max_hash().unwrap_or(0.0));
                    for e in s.tail.entries() {
                        postings.entry(e.element).or_default().push(pos as u32);
                    }
                }
                let sz = |i: &u32| index.sizes()[*i as usize];
                Partition {
                    min_size: records.iter().map(sz).min().unwrap_or(0),
                    max_size: records.iter().map(sz).max().unwrap_or(0),
                    min_tail_max: if records.is_empty() { 0.0 } else { min_tail_max },
                    records,
                    postings,
                    buffers,
                }
            })
            .collect();
        Ok(SizePartitionIndex { partitions, words, m: sketches.len() })
    }

    pub fn num_partitions(&self) -> usize {
        self.partitions.len()
    }

    /// (record ids, smallest size, largest size) of partition `p`.
    pub fn partition(&self, p: usize) -> (&[u32], u32, u32) {
        let part = &self.partitions[p];
        (&part.records, part.min_size, part.max_size)
    }
}

/// Per-query working memory, reusable across queries.
#[derive(Clone, Debug, Default)]
pub struct QueryScratch {
    counts: Vec<u32>,
    overlap: Vec<u32>,
}

fn estimate(sq: &GbkmvRecordSketch, sx: &GbkmvRecordSketch, th: &SearchThresholds) -> Result<Option<f64>> {
    let d_hat = estimate_overlap_gbkmv(sq, sx)?.d_hat();
    Ok(th.accepts(d_hat).then(|| (d_hat / th.q as f64).clamp(0.0, 1.0)))
}

/// Records whose estimated containment of `q` is at least `t_star`, in id
/// order.
pub fn query(
    index: &GbkmvIndex,
    accel: &SizePartitionIndex,
    q: &Record,
    t_star: f64,
    scratch: &mut QueryScratch,
) -> Result<Vec<Hit>> {
    let th = SearchThresholds::new(t_star, q.len())?;
    if accel.m != index.len() || accel.words != index.r().div_ceil(32) {
        return Err(GbkmvError::IncompatibleSketch("accelerator was built for another index".into()));
    }
    let sq = index.sketch_query(q)?;
    let q_words = sq.buffer.words();
    let q_tail_max = sq.tail.max_hash().unwrap_or(0.0);
    let sketches = index.sketches();
    let mut hits = Vec::new();

    for part in &accel.partitions {
        let n = part.records.len();
        scratch.counts.clear();
        scratch.counts.resize(n, 0);
        scratch.overlap.clear();
        scratch.overlap.resize(n, 0);
        if accel.words > 0 {
            for (o, w) in scratch.overlap.iter_mut().zip(part.buffers.chunks_exact(accel.words)) {
                *o = w.iter().zip(q_words).map(|(a, b)| (a & b).count_ones()).sum();
            }
        }
        for e in sq.tail.entries() {
            if let Some(list) = part.postings.get(&e.element) {
                for &pos in list {
                    scratch.counts[pos as usize] += 1;
                }
            }
        }
        let u_lower = q_tail_max.max(part.min_tail_max);
        for pos in 0..n {
            let o1 = scratch.overlap[pos];
            let k_cap = scratch.counts[pos] as f64;
            let candidate = o1 as f64 >= th.theta
                || (k_cap >= 1.0 && k_cap * (1.0 + PRUNE_SLACK) >= th.residual(o1, u_lower));
            if !candidate {
                continue;
            }
            let id = part.records[pos] as usize;
            if let Some(c) = estimate(&sq, &sketches[id], &th)? {
                hits.push((id, c));
            }
        }
    }
    hits.sort_unstable_by_key(|h| h.0);
    Ok(hits)
}

/// Same answer as [`query`] by estimating against every record.
pub fn full_scan_query(index: &GbkmvIndex, q: &Record, t_star: f64) -> Result<Vec<Hit>> {
    let th = SearchThresholds::new(t_star, q.len())?;
    let sq = index.sketch_query(q)?;
    let mut hits = Vec::new();
    for (id, sx) in index.sketches().iter().enumerate() {
        if let Some(c) = estimate(&sq, sx, &th)? {
            hits.push((id, c));
        }
    }
    Ok(hits)
}

/// Records with exact containment `|Q ∩ X| / |Q| >= t_star`, in id order.
pub fn exact_search(ds: &Dataset, q: &Record, t_star: f64) -> Result<Vec<Hit>> {
    let th = SearchThresholds::new(t_star, q.len())?;
    Ok(ds
        .records
        .iter()
        .enumerate()
        .filter_map(|(id, x)| {
            let d = q.intersection_size(x) as f64;
            th.accepts(d).then(|| (id, d / th.q as f64))
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_zipf_dataset, ZipfConfig};
    use crate::fixtures::worked_example;
    use crate::gbkmv::{build_gbkmv_index, BufferSize};
    use crate::hashing::HashSource;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ids(hits: &[Hit]) -> Vec<usize> {
        hits.iter().map(|h| h.0).collect()
    }

    #[test]
    fn exact_search_on_worked_example() {
        let ex = worked_example();
        let all = exact_search(&ex.dataset, &ex.query, 0.0).unwrap();
        let c: Vec<f64> = all.iter().map(|h| (h.1 * 100.0).round() / 100.0).collect();
        assert_eq!(c, vec![0.67, 0.5, 0.33, 0.33]);
        assert_eq!(ids(&exact_search(&ex.dataset, &ex.query, 0.5).unwrap()), vec![0, 1]);
        let x = &ex.dataset.records[2];
        assert_eq!(exact_search(&ex.dataset, x, 1.0).unwrap(), vec![(2, 1.0)]);
    }

    #[test]
    fn worked_example_gbkmv_search() {
        let ex = worked_example();
        let idx = build_gbkmv_index(&ex.dataset, 7, BufferSize::Bits(2), &ex.hash).unwrap();
        let accel = SizePartitionIndex::build(&idx, DEFAULT_PARTITIONS).unwrap();
        let hits = query(&idx, &accel, &ex.query, 0.5, &mut QueryScratch::default()).unwrap();
        assert!(ids(&hits).contains(&0));
        assert_eq!(hits, full_scan_query(&idx, &ex.query, 0.5).unwrap());
    }

    #[test]
    fn zero_threshold_returns_everything() {
        let ex = worked_example();
        let idx = build_gbkmv_index(&ex.dataset, 7, BufferSize::Bits(2), &ex.hash).unwrap();
        let accel = SizePartitionIndex::build(&idx, 3).unwrap();
        let hits = query(&idx, &accel, &ex.query, 0.0, &mut QueryScratch::default()).unwrap();
        assert_eq!(ids(&hits), vec![0, 1, 2, 3]);
    }

    #[test]
    fn bad_thresholds() {
        let ex = worked_example();
        assert!(exact_search(&ex.dataset, &ex.query, 1.5).is_err());
        assert!(exact_search(&ex.dataset, &ex.query, -0.1).is_err());
    }

    #[test]
    fn equal_depth_shape() {
        let sizes: Vec<u32> = (0..103).map(|i| (i * 37 % 50) as u32 + 1).collect();
        let parts = equal_depth_partitions(&sizes, 32);
        assert_eq!(parts.len(), 32);
        let lens: Vec<usize> = parts.iter().map(Vec::len).collect();
        assert!(lens.iter().max().unwrap() - lens.iter().min().unwrap() <= 1);
        let mut all: Vec<u32> = parts.concat();
        all.sort_unstable();
        assert_eq!(all, (0..103).collect::<Vec<_>>());
        for w in parts.windows(2) {
            let hi = w[0].iter().map(|&i| sizes[i as usize]).max().unwrap();
            let lo = w[1].iter().map(|&i| sizes[i as usize]).min().unwrap();
            assert!(hi <= lo);
        }
        assert_eq!(equal_depth_partitions(&sizes[..3], 32).len(), 3);
    }

    fn random_case(rng: &mut ChaCha8Rng) -> (Dataset, usize, u64) {
        let cfg = ZipfConfig {
            m: rng.gen_range(20..200),
            alpha1: rng.gen_range(0.6..1.4),
            alpha2: rng.gen_range(1.5..3.0),
            n: rng.gen_range(50..400),
            size_min: 1,
            size_max: 40,
            seed: rng.gen(),
        };
        let ds = generate_zipf_dataset(&cfg).unwrap();
        let r = 8 * rng.gen_range(0..5usize);
        let budget = ((ds.stats.m * r) as u64).div_ceil(32) + rng.gen_range(0..ds.stats.total);
        (ds, r, budget)
    }

    #[test]
    fn accelerated_equals_full_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let mut scratch = QueryScratch::default();
        for _ in 0..1000 {
            let (ds, r, budget) = random_case(&mut rng);
            let h = HashSource::computed(rng.gen());
            let idx = build_gbkmv_index(&ds, budget, BufferSize::Bits(r), &h).unwrap();
            let accel = SizePartitionIndex::build(&idx, rng.gen_range(1..40)).unwrap();
            let q = &ds.records[rng.gen_range(0..ds.stats.m)];
            let t = rng.gen_range(0.0..=1.0);
            assert_eq!(query(&idx, &accel, q, t, &mut scratch).unwrap(), full_scan_query(&idx, q, t).unwrap());
        }
    }

    #[test]
    fn perfect_sketch_equals_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let (ds, _, _) = random_case(&mut rng);
            let idx = build_gbkmv_index(&ds, ds.stats.total, BufferSize::Bits(0), &HashSource::computed(1)).unwrap();
            assert_eq!(idx.tau(), 1.0);
            let accel = SizePartitionIndex::build(&idx, 8).unwrap();
            let q = &ds.records[rng.gen_range(0..ds.stats.m)];
            let t = rng.gen_range(0.0..=1.0);
            let got = query(&idx, &accel, q, t, &mut QueryScratch::default()).unwrap();
            assert_eq!(got, exact_search(&ds, q, t).unwrap());
        }
    }

    /// Containment through dense bitsets.
    fn bitset_containment(q: &Record, x: &Record, n: usize) -> f64 {
        let mut bits = vec![0u64; n.div_ceil(64)];
        for e in x.elements() {
            bits[e.index() / 64] |= 1 << (e.index() % 64);
        }
        let hit = q.elements().iter().filter(|e| bits[e.index() / 64] >> (e.index() % 64) & 1 == 1).count();
        hit as f64 / q.len() as f64
    }

    #[test]
    fn exact_matches_bitset_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..30 {
            let (ds, _, _) = random_case(&mut rng);
            let q = &ds.records[rng.gen_range(0..ds.stats.m)];
            let all = exact_search(&ds, q, 0.0).unwrap();
            for (id, c) in all {
                assert_eq!(c, bitset_containment(q, &ds.records[id], ds.stats.n));
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn results_shrink_as_threshold_grows(seed in any::<u64>(), t1 in 0.0f64..=1.0, t2 in 0.0f64..=1.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (ds, r, budget) = random_case(&mut rng);
            let idx = build_gbkmv_index(&ds, budget, BufferSize::Bits(r), &HashSource::computed(seed)).unwrap();
            let accel = SizePartitionIndex::build(&idx, DEFAULT_PARTITIONS).unwrap();
            let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            let q = &ds.records[0];
            let mut s = QueryScratch::default();
            let a = ids(&query(&idx, &accel, q, lo, &mut s).unwrap());
            let b = ids(&query(&idx, &accel, q, hi, &mut s).unwrap());
            prop_assert!(b.iter().all(|i| a.contains(i)));
        }
    }
}
