//! MinHash signatures and the LSH Ensemble baseline: equal-depth size
//! partitions, each searched with a Jaccard threshold derived from the
//! partition's largest record size.

use crate::dataset::{Dataset, Record};
use crate::error::{GbkmvError, Result};
use crate::hashing::HashSource;
use crate::search::{equal_depth_partitions, Hit};

pub const DEFAULT_K_PRIME: usize = 256;

/// Minimum of each of `k′` hash functions over a set.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MinHashSignature {
    values: Vec<u64>,
}

impl MinHashSignature {
    pub fn new(record: &Record, k_prime: usize, h: &HashSource) -> Result<Self> {
        if k_prime == 0 {
            return Err(GbkmvError::InvalidParameter("k' must be >= 1".into()));
        }
        let mut values = vec![u64::MAX; k_prime];
        for &e in record.elements() {
            for (i, v) in values.iter_mut().enumerate() {
                *v = (*v).min(h.family(i as u32, e));
            }
        }
        Ok(MinHashSignature { values })
    }

    pub fn values(&self) -> &[u64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Fraction of positions where the two signatures agree.
pub fn estimate_jaccard(a: &MinHashSignature, b: &MinHashSignature) -> Result<f64> {
    if a.len() != b.len() {
        return Err(GbkmvError::IncompatibleSketch(format!(
            "signature lengths differ: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let same = a.values.iter().zip(&b.values).filter(|(x, y)| x == y).count();
    Ok(same as f64 / a.len() as f64)
}

/// Jaccard similarity equivalent to containment `t` of a size-`q` query in
/// a size-`x` record.
pub fn jaccard_from_containment(t: f64, x: f64, q: f64) -> Result<f64> {
    let den = x / q + 1.0 - t;
    if !(q > 0.0 && x > 0.0 && den > 0.0) {
        return Err(GbkmvError::Domain(format!("no Jaccard for t = {t}, x = {x}, q = {q}")));
    }
    Ok(t / den)
}

/// Inverse of [`jaccard_from_containment`].
pub fn containment_from_jaccard(s: f64, x: f64, q: f64) -> Result<f64> {
    if !(q > 0.0 && x > 0.0 && s > -1.0) {
        return Err(GbkmvError::Domain(format!("no containment for s = {s}, x = {x}, q = {q}")));
    }
    Ok((x / q + 1.0) * s / (1.0 + s))
}

#[derive(Clone, Debug, PartialEq)]
pub struct LshePartition {
    pub records: Vec<u32>,
    /// Largest record size in the partition.
    pub upper: u32,
}

#[derive(Clone, Debug)]
pub struct LsheIndex {
    k_prime: usize,
    signatures: Vec<MinHashSignature>,
    sizes: Vec<u32>,
    partitions: Vec<LshePartition>,
    hash: HashSource,
}

pub fn build_lshe_index(ds: &Dataset, k_prime: usize, g: usize, h: &HashSource) -> Result<LsheIndex> {
    if g == 0 {
        return Err(GbkmvError::InvalidParameter("at least one partition is required".into()));
    }
    let signatures = ds
        .records
        .iter()
        .map(|r| MinHashSignature::new(r, k_prime, h))
        .collect::<Result<Vec<_>>>()?;
    let sizes = ds.stats.sizes.clone();
    let partitions = equal_depth_partitions(&sizes, g)
        .into_iter()
        .map(|records| {
            let upper = records.iter().map(|&i| sizes[i as usize]).max().unwrap_or(0);
            LshePartition { records, upper }
        })
        .collect();
    Ok(LsheIndex { k_prime, signatures, sizes, partitions, hash: h.clone() })
}

impl LsheIndex {
    pub fn k_prime(&self) -> usize {
        self.k_prime
    }

    pub fn partitions(&self) -> &[LshePartition] {
        &self.partitions
    }

    pub fn signatures(&self) -> &[MinHashSignature] {
        &self.signatures
    }

    pub fn sizes(&self) -> &[u32] {
        &self.sizes
    }

    /// One unit per stored hash value.
    pub fn stored_units(&self) -> f64 {
        (self.signatures.len() * self.k_prime) as f64
    }

    pub fn signature(&self, q: &Record) -> Result<MinHashSignature> {
        MinHashSignature::new(q, self.k_prime, &self.hash)
    }
}

/// MinHash containment estimate using the record's own size.
pub fn estimate_containment_minhash(sq: &MinHashSignature, sx: &MinHashSignature, q: usize, x: usize) -> Result<f64> {
    containment_from_jaccard(estimate_jaccard(sq, sx)?, x as f64, q as f64)
}

/// LSH-E containment estimate, with the partition upper bound `u` standing
/// in for the record size.
pub fn estimate_containment_lshe(sq: &MinHashSignature, sx: &MinHashSignature, q: usize, u: usize) -> Result<f64> {
    containment_from_jaccard(estimate_jaccard(sq, sx)?, u as f64, q as f64)
}

/// Union over partitions of the records whose estimated Jaccard reaches
/// the partition's converted threshold. Hits carry the LSH-E containment
/// estimate clamped to [0, 1], in id order.
pub fn lshe_query(index: &LsheIndex, q: &Record, t_star: f64) -> Result<Vec<Hit>> {
    if !(0.0..=1.0).contains(&t_star) {
        return Err(GbkmvError::InvalidParameter(format!("threshold {t_star} is outside [0, 1]")));
    }
    if q.is_empty() {
        return Err(GbkmvError::InvalidParameter("query is empty".into()));
    }
    let sq = index.signature(q)?;
    let qf = q.len() as f64;
    let mut hits = Vec::new();
    for part in &index.partitions {
        let u = part.upper as f64;
        let s_star = jaccard_from_containment(t_star, u, qf)?;
        for &id in &part.records {
            let s = estimate_jaccard(&sq, &index.signatures[id as usize])?;
            if s >= s_star {
                hits.push((id as usize, containment_from_jaccard(s, u, qf)?.min(1.0)));
            }
        }
    }
    hits.sort_unstable_by_key(|h| h.0);
    Ok(hits)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::generate_zipf_dataset;
    use crate::dataset::ZipfConfig;
    use crate::fixtures::worked_example;
    use crate::search::exact_search;
    use proptest::prelude::*;

    #[test]
    fn identical_signatures() {
        let h = HashSource::computed(3);
        let x = Record::from_ids(0..50).unwrap();
        let a = MinHashSignature::new(&x, 64, &h).unwrap();
        assert_eq!(estimate_jaccard(&a, &a).unwrap(), 1.0);
        let b = MinHashSignature::new(&x, 32, &h).unwrap();
        assert!(estimate_jaccard(&a, &b).is_err());
    }

    #[test]
    fn disjoint_sets_rarely_collide() {
        let x = Record::from_ids(0..300).unwrap();
        let y = Record::from_ids(300..600).unwrap();
        let mut worst: f64 = 0.0;
        for seed in 0..50 {
            let h = HashSource::computed(seed);
            let a = MinHashSignature::new(&x, 256, &h).unwrap();
            let b = MinHashSignature::new(&y, 256, &h).unwrap();
            worst = worst.max(estimate_jaccard(&a, &b).unwrap());
        }
        assert!(worst <= 0.02, "{worst}");
    }

    #[test]
    fn planted_jaccard_mean_and_variance() {
        // |X ∩ Y| = 200, |X ∪ Y| = 400.
        let x = Record::from_ids(0..300).unwrap();
        let y = Record::from_ids(100..400).unwrap();
        let (k, seeds) = (256usize, 200u64);
        let est: Vec<f64> = (0..seeds)
            .map(|s| {
                let h = HashSource::computed(s);
                estimate_jaccard(&MinHashSignature::new(&x, k, &h).unwrap(), &MinHashSignature::new(&y, k, &h).unwrap())
                    .unwrap()
            })
            .collect();
        let mean = est.iter().sum::<f64>() / seeds as f64;
        let var = est.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / (seeds - 1) as f64;
        let theory = 0.5 * 0.5 / k as f64;
        assert!((mean - 0.5).abs() <= 3.0 * (theory / seeds as f64).sqrt(), "mean {mean}");
        assert!((var / theory - 1.0).abs() < 0.3, "var {var} vs {theory}");
    }

    #[test]
    fn transform_examples() {
        assert_eq!(jaccard_from_containment(1.0, 10.0, 10.0).unwrap(), 1.0);
        assert!((jaccard_from_containment(0.5, 10.0, 10.0).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!(jaccard_from_containment(0.5, 10.0, 0.0).is_err());
    }

    proptest! {
        #[test]
        fn transforms_round_trip(s in 0.0f64..=1.0, x in 1.0f64..1e5, q in 1.0f64..1e5) {
            let t = containment_from_jaccard(s, x, q).unwrap();
            let back = jaccard_from_containment(t, x, q).unwrap();
            prop_assert!((back - s).abs() <= 1e-12);
        }

        #[test]
        fn upper_bound_inflates(s in 0.0f64..=1.0, x in 1.0f64..1e4, extra in 0.0f64..1e4, q in 1.0f64..1e4) {
            let t = containment_from_jaccard(s, x, q).unwrap();
            let t2 = containment_from_jaccard(s, x + extra, q).unwrap();
            prop_assert!(t2 >= t);
            if extra == 0.0 {
                prop_assert_eq!(t, t2);
            }
        }
    }

    #[test]
    fn equal_depth_bounds_increase() {
        let ds = generate_zipf_dataset(&ZipfConfig { m: 500, alpha1: 1.0, alpha2: 2.0, n: 300, size_min: 1, size_max: 80, seed: 3 })
            .unwrap();
        let idx = build_lshe_index(&ds, 16, 32, &HashSource::computed(1)).unwrap();
        let lens: Vec<usize> = idx.partitions().iter().map(|p| p.records.len()).collect();
        assert!(lens.iter().max().unwrap() - lens.iter().min().unwrap() <= 1);
        for w in idx.partitions().windows(2) {
            assert!(w[0].upper <= w[1].upper);
        }
    }

    #[test]
    fn singleton_partition_matches_minhash() {
        let ex = worked_example();
        let h = HashSource::computed(5);
        let idx = build_lshe_index(&ex.dataset, 64, 4, &h).unwrap();
        let sq = idx.signature(&ex.query).unwrap();
        for p in idx.partitions() {
            assert_eq!(p.records.len(), 1);
            let id = p.records[0] as usize;
            let sx = &idx.signatures()[id];
            let x = ex.dataset.records[id].len();
            assert_eq!(p.upper as usize, x);
            assert_eq!(
                estimate_containment_lshe(&sq, sx, 6, p.upper as usize).unwrap(),
                estimate_containment_minhash(&sq, sx, 6, x).unwrap()
            );
        }
    }

    /// P[Bin(n, p) >= c].
    fn binomial_tail(n: u64, p: f64, c: u64) -> f64 {
        let mut total = 0.0;
        for i in c..=n {
            let ln_choose: f64 = (1..=i).map(|j| ((n - i + j) as f64 / j as f64).ln()).sum();
            total += (ln_choose + i as f64 * p.ln() + (n - i) as f64 * (1.0 - p).ln()).exp();
        }
        total
    }

    #[test]
    fn worked_example_recall() {
        // Four records in 32 partitions: each partition is a singleton with
        // u = x. X1 (J = 4/7) needs ŝ >= 0.375, X2 (J = 1/2) needs ŝ >= 1/2.
        let ex = worked_example();
        let truth: Vec<usize> = exact_search(&ex.dataset, &ex.query, 0.5).unwrap().iter().map(|h| h.0).collect();
        assert_eq!(truth, vec![0, 1]);
        let seeds = 400u64;
        let (mut x1, mut full) = (0u64, 0u64);
        for seed in 0..seeds {
            let idx = build_lshe_index(&ex.dataset, 256, 32, &HashSource::computed(seed)).unwrap();
            let got: Vec<usize> = lshe_query(&idx, &ex.query, 0.5).unwrap().iter().map(|h| h.0).collect();
            x1 += u64::from(got.contains(&0));
            full += u64::from(truth.iter().all(|t| got.contains(t)));
        }
        assert!(x1 as f64 >= 0.9 * seeds as f64);
        let p = binomial_tail(256, 4.0 / 7.0, 96) * binomial_tail(256, 0.5, 128);
        let sd = (seeds as f64 * p * (1.0 - p)).sqrt();
        assert!((full as f64 - seeds as f64 * p).abs() <= 4.0 * sd, "{full}/{seeds} vs p = {p}");
    }

    #[test]
    fn zero_threshold_returns_everything() {
        let ex = worked_example();
        let idx = build_lshe_index(&ex.dataset, 32, 2, &HashSource::computed(0)).unwrap();
        assert_eq!(lshe_query(&idx, &ex.query, 0.0).unwrap().len(), 4);
    }
}
