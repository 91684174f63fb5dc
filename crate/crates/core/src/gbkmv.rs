//! G-KMV (global threshold) and GB-KMV (frequency buffer + G-KMV tail)
//! sketches: index construction, query sketching and estimation.

use crate::dataset::{Dataset, Dictionary, ElementId, Record};
use crate::error::{GbkmvError, Result};
use crate::hashing::HashSource;
use crate::kmv::{kmv_estimate, merge_union, Entry, EstimatorKind, IntersectionEstimate, KmvSketch, SketchMode};
use crate::tuner::{choose_buffer_size, CostModelInputs};

/// One element unit pays for 32 buffer bits.
pub const BITS_PER_UNIT: usize = 32;

const NO_SLOT: u32 = u32::MAX;

/// Fixed-width bitmap over the buffered elements; bit `i` stands for the
/// `i`-th most frequent element.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BufferBitmap {
    words: Vec<u32>,
    bits: usize,
}

impl BufferBitmap {
    pub fn new(bits: usize) -> Self {
        BufferBitmap { words: vec![0; bits.div_ceil(32)], bits }
    }

    pub fn from_words(words: Vec<u32>, bits: usize) -> Result<Self> {
        if words.len() != bits.div_ceil(32) {
            return Err(GbkmvError::InvalidParameter(format!(
                "{} words cannot hold exactly {bits} bits",
                words.len()
            )));
        }
        if !bits.is_multiple_of(32) {
            if let Some(&last) = words.last() {
                if last >> (bits % 32) != 0 {
                    return Err(GbkmvError::InvalidParameter("bits set past bitmap width".into()));
                }
            }
        }
        Ok(BufferBitmap { words, bits })
    }

    pub fn set(&mut self, i: usize) {
        assert!(i < self.bits, "bit {i} out of range");
        self.words[i / 32] |= 1 << (i % 32);
    }

    pub fn get(&self, i: usize) -> bool {
        i < self.bits && self.words[i / 32] & (1 << (i % 32)) != 0
    }

    pub fn len(&self) -> usize {
        self.bits
    }

    pub fn is_empty(&self) -> bool {
        self.bits == 0
    }

    pub fn words(&self) -> &[u32] {
        &self.words
    }

    pub fn popcount(&self) -> u32 {
        self.words.iter().map(|w| w.count_ones()).sum()
    }

    /// |H_a ∩ H_b|.
    pub fn and_count(&self, other: &BufferBitmap) -> u32 {
        self.words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a & b).count_ones())
            .sum()
    }
}

/// Buffer plus threshold-mode tail over the non-buffered elements.
#[derive(Clone, Debug, PartialEq)]
pub struct GbkmvRecordSketch {
    pub buffer: BufferBitmap,
    pub tail: KmvSketch,
}

/// Requested buffer width.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BufferSize {
    Bits(usize),
    /// Pick the width with the variance cost model.
    Auto,
}

/// A built GB-KMV index. With `r = 0` it is a plain G-KMV index.
#[derive(Clone, Debug, PartialEq)]
pub struct GbkmvIndex {
    r: usize,
    e_h: Vec<ElementId>,
    slots: Vec<u32>,
    tau: f64,
    sketches: Vec<GbkmvRecordSketch>,
    hash: HashSource,
    budget: u64,
    sizes: Vec<u32>,
    dictionary: Dictionary,
}

fn slot_table(n: usize, e_h: &[ElementId]) -> Vec<u32> {
    let mut slots = vec![NO_SLOT; n];
    for (i, e) in e_h.iter().enumerate() {
        slots[e.index()] = i as u32;
    }
    slots
}

/// Largest threshold on the grid of element hashes such that the tail
/// entries it retains (all non-buffered occurrences with `h <= τ`) fit in
/// `⌊tail_budget⌋`. Returns 0 when nothing fits and 1 when everything does.
pub fn compute_tau(ds: &Dataset, e_h: &[ElementId], tail_budget: f64, h: &HashSource) -> Result<f64> {
    if tail_budget.is_nan() || tail_budget < 0.0 {
        return Err(GbkmvError::InvalidParameter(format!("tail budget {tail_budget} is negative")));
    }
    let slots = slot_table(ds.stats.n, e_h);
    let mut grid: Vec<(f64, u64)> = Vec::with_capacity(ds.stats.n);
    for (i, &f) in ds.stats.freq.iter().enumerate() {
        if f > 0 && slots[i] == NO_SLOT {
            grid.push((h.hash(ElementId(i as u32))?.value(), f));
        }
    }
    let total: u64 = grid.iter().map(|g| g.1).sum();
    let cap = tail_budget.floor() as u64;
    if cap >= total {
        return Ok(1.0);
    }
    grid.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
    let mut tau = 0.0;
    let mut used = 0u64;
    for (hash, f) in grid {
        if used + f > cap {
            break;
        }
        used += f;
        tau = hash;
    }
    Ok(tau)
}

/// Builds the index: buffer of the `r` most frequent elements, global
/// threshold from the remaining budget, then one sketch per record.
pub fn build_gbkmv_index(ds: &Dataset, budget: u64, r: BufferSize, h: &HashSource) -> Result<GbkmvIndex> {
    let r = match r {
        BufferSize::Bits(r) => r,
        BufferSize::Auto => choose_buffer_size(&CostModelInputs::from_dataset(ds, budget, h.seed())?)?,
    };
    let m = ds.records.len();
    let buffer_cost = (m * r) as f64 / BITS_PER_UNIT as f64;
    if buffer_cost > budget as f64 {
        return Err(GbkmvError::BudgetExhausted { budget: budget as f64, bits: r, records: m });
    }
    let e_h = ds.stats.top_elements(r).to_vec();
    let tau = compute_tau(ds, &e_h, budget as f64 - buffer_cost, h)?;
    let slots = slot_table(ds.stats.n, &e_h);

    let sketches = ds
        .records
        .iter()
        .map(|rec| sketch_with(rec, r, &slots, tau, h))
        .collect::<Result<Vec<_>>>()?;

    Ok(GbkmvIndex {
        r,
        e_h,
        slots,
        tau,
        sketches,
        hash: h.clone(),
        budget,
        sizes: ds.stats.sizes.clone(),
        dictionary: ds.dictionary.clone(),
    })
}

fn sketch_with(rec: &Record, r: usize, slots: &[u32], tau: f64, h: &HashSource) -> Result<GbkmvRecordSketch> {
    let mut buffer = BufferBitmap::new(r);
    let mut rest = Vec::with_capacity(rec.len());
    for &e in rec.elements() {
        match slots.get(e.index()) {
            Some(&s) if s != NO_SLOT => buffer.set(s as usize),
            _ => rest.push(e),
        }
    }
    let tail = KmvSketch::threshold(rest, tau, h)?;
    Ok(GbkmvRecordSketch { buffer, tail })
}

impl GbkmvIndex {
    /// Reassembles an index from stored parts; used by the index file reader.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        r: usize,
        e_h: Vec<ElementId>,
        tau: f64,
        sketches: Vec<GbkmvRecordSketch>,
        hash: HashSource,
        budget: u64,
        sizes: Vec<u32>,
        dictionary: Dictionary,
    ) -> Result<Self> {
        let n = dictionary.len();
        if e_h.len() > r || e_h.iter().any(|e| e.index() >= n) {
            return Err(GbkmvError::InvalidParameter("buffered elements do not fit the index".into()));
        }
        if sizes.len() != sketches.len() {
            return Err(GbkmvError::InvalidParameter("one size per record sketch is required".into()));
        }
        for s in &sketches {
            if s.buffer.len() != r {
                return Err(GbkmvError::InvalidParameter("buffer width mismatch".into()));
            }
            if s.tail.mode() != SketchMode::Threshold(tau) {
                return Err(GbkmvError::InvalidParameter("tail threshold mismatch".into()));
            }
        }
        let slots = slot_table(n, &e_h);
        Ok(GbkmvIndex { r, e_h, slots, tau, sketches, hash, budget, sizes, dictionary })
    }

    pub fn sketch_query(&self, q: &Record) -> Result<GbkmvRecordSketch> {
        if q.is_empty() {
            return Err(GbkmvError::InvalidParameter("query is empty".into()));
        }
        sketch_with(q, self.r, &self.slots, self.tau, &self.hash)
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn buffered_elements(&self) -> &[ElementId] {
        &self.e_h
    }

    pub fn sketches(&self) -> &[GbkmvRecordSketch] {
        &self.sketches
    }

    pub fn hash(&self) -> &HashSource {
        &self.hash
    }

    pub fn budget(&self) -> u64 {
        self.budget
    }

    pub fn sizes(&self) -> &[u32] {
        &self.sizes
    }

    pub fn dictionary(&self) -> &Dictionary {
        &self.dictionary
    }

    pub fn len(&self) -> usize {
        self.sketches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sketches.is_empty()
    }

    /// m·r/32 + Σ|tail|, in element units.
    pub fn stored_units(&self) -> f64 {
        let tails: usize = self.sketches.iter().map(|s| s.tail.len()).sum();
        (self.len() * self.r) as f64 / BITS_PER_UNIT as f64 + tails as f64
    }
}

/// Overlap estimate between two threshold-mode sketches built with the
/// same τ and hash function.
pub fn estimate_intersection_gkmv(lq: &KmvSketch, lx: &KmvSketch) -> Result<IntersectionEstimate> {
    let tau = match (lq.mode(), lx.mode()) {
        (SketchMode::Threshold(a), SketchMode::Threshold(b)) if a.to_bits() == b.to_bits() => a,
        (SketchMode::Threshold(a), SketchMode::Threshold(b)) => {
            return Err(GbkmvError::IncompatibleSketch(format!("thresholds differ: {a} vs {b}")))
        }
        _ => {
            return Err(GbkmvError::IncompatibleSketch(
                "G-KMV estimator needs threshold sketches".into(),
            ))
        }
    };
    let (k, k_cap, u_k) = merge_union(lq.entries(), lx.entries(), usize::MAX);
    if tau >= 1.0 {
        return Ok(IntersectionEstimate {
            k,
            k_cap,
            u_k,
            d_cap_hat: k_cap as f64,
            variance_hat: Some(0.0),
            kind: EstimatorKind::Exact,
        });
    }
    if k >= 2 {
        return Ok(kmv_estimate(k, k_cap, u_k));
    }
    let d_cap_hat = if tau > 0.0 { k_cap as f64 / tau } else { 0.0 };
    Ok(IntersectionEstimate {
        k,
        k_cap,
        u_k: if k == 0 { tau } else { u_k },
        d_cap_hat,
        variance_hat: None,
        kind: EstimatorKind::ThresholdFallback,
    })
}

/// Buffer part and tail part of a GB-KMV overlap estimate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OverlapEstimate {
    pub buffer_overlap: u32,
    pub tail: IntersectionEstimate,
}

impl OverlapEstimate {
    /// Estimated |Q ∩ X|.
    pub fn d_hat(&self) -> f64 {
        self.buffer_overlap as f64 + self.tail.d_cap_hat
    }
}

pub fn estimate_overlap_gbkmv(sq: &GbkmvRecordSketch, sx: &GbkmvRecordSketch) -> Result<OverlapEstimate> {
    if sq.buffer.len() != sx.buffer.len() {
        return Err(GbkmvError::IncompatibleSketch(format!(
            "buffer widths differ: {} vs {}",
            sq.buffer.len(),
            sx.buffer.len()
        )));
    }
    Ok(OverlapEstimate {
        buffer_overlap: sq.buffer.and_count(&sx.buffer),
        tail: estimate_intersection_gkmv(&sq.tail, &sx.tail)?,
    })
}

/// Estimated containment of Q (of size `q`) in X, clamped to [0, 1].
pub fn estimate_containment_gbkmv(sq: &GbkmvRecordSketch, sx: &GbkmvRecordSketch, q: usize) -> Result<f64> {
    if q == 0 {
        return Err(GbkmvError::InvalidParameter("query size must be >= 1".into()));
    }
    let est = estimate_overlap_gbkmv(sq, sx)?;
    Ok((est.d_hat() / q as f64).clamp(0.0, 1.0))
}

/// Checks that `Lq ∪ Lx` is exactly the `|Lq ∪ Lx|` smallest hashes of
/// X ∪ Y, given every `(hash, element)` of X ∪ Y in `full`.
pub fn validate_gkmv_union(lq: &KmvSketch, lx: &KmvSketch, full: &[Entry]) -> bool {
    let mut union: Vec<Entry> = lq.entries().iter().chain(lx.entries()).copied().collect();
    union.sort_unstable_by(Entry::order);
    union.dedup_by(|a, b| a.element == b.element);
    let mut oracle = full.to_vec();
    oracle.sort_unstable_by(Entry::order);
    oracle.dedup_by(|a, b| a.element == b.element);
    if union.len() > oracle.len() {
        return false;
    }
    union
        .iter()
        .zip(&oracle[..union.len()])
        .all(|(a, b)| a.element == b.element && a.hash == b.hash)
}
