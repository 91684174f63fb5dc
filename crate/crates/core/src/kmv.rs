//! Bottom-k (KMV) sketches, their union/intersection estimators and the
//! equal-allocation KMV index.

use std::cmp::Ordering;

use serde::Serialize;

use crate::dataset::{Dataset, ElementId, Record};
use crate::error::{GbkmvError, Result};
use crate::hashing::HashSource;

/// One retained `(element, h(element))` pair.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Entry {
    pub hash: f64,
    pub element: ElementId,
}

impl Entry {
    /// Entries order by hash, then by element id. Two sketches built with
    /// the same hash function agree on an entry iff they hold the same element.
    #[inline]
    pub fn order(&self, other: &Entry) -> Ordering {
        self.hash.total_cmp(&other.hash).then(self.element.cmp(&other.element))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SketchMode {
    /// Keep the `k` smallest hashes.
    BottomK(usize),
    /// Keep every hash `<= tau`.
    Threshold(f64),
}

/// A KMV synopsis: entries sorted strictly ascending by `(hash, element)`.
#[derive(Clone, Debug, PartialEq)]
pub struct KmvSketch {
    entries: Vec<Entry>,
    mode: SketchMode,
    /// The sketch holds every hash of its set.
    complete: bool,
}

impl KmvSketch {
    /// Assembles a sketch from stored entries (e.g. when loading an index).
    pub fn from_parts(entries: Vec<Entry>, mode: SketchMode, complete: bool) -> Result<Self> {
        if entries.windows(2).any(|w| w[0].order(&w[1]) != Ordering::Less) {
            return Err(GbkmvError::InvalidParameter("sketch entries are not sorted".into()));
        }
        Ok(KmvSketch { entries, mode, complete })
    }

    /// Threshold-mode sketch of the elements yielded by `elements`.
    pub fn threshold<I>(elements: I, tau: f64, h: &HashSource) -> Result<Self>
    where
        I: IntoIterator<Item = ElementId>,
    {
        let mut entries = Vec::new();
        for e in elements {
            let hash = h.hash(e)?.value();
            if hash <= tau {
                entries.push(Entry { hash, element: e });
            }
        }
        entries.sort_unstable_by(Entry::order);
        Ok(KmvSketch { entries, mode: SketchMode::Threshold(tau), complete: tau >= 1.0 })
    }

    pub fn entries(&self) -> &[Entry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn mode(&self) -> SketchMode {
        self.mode
    }

    pub fn is_complete(&self) -> bool {
        self.complete
    }

    pub fn max_hash(&self) -> Option<f64> {
        self.entries.last().map(|e| e.hash)
    }

    pub fn contains(&self, e: ElementId) -> bool {
        self.entries.iter().any(|x| x.element == e)
    }
}

/// Which estimator produced an [`IntersectionEstimate`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    /// (K∩/k)·(k−1)/U(k).
    Kmv,
    /// Both sketches hold their whole sets; K∩ is the exact overlap.
    Exact,
    /// Threshold sketches with k < 2: K∩/τ.
    ThresholdFallback,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IntersectionEstimate {
    /// Size of the union sketch used.
    pub k: usize,
    /// Matching entries within the union sketch.
    pub k_cap: usize,
    /// k-th smallest hash of the union sketch (1.0 when k = 0).
    pub u_k: f64,
    pub d_cap_hat: f64,
    /// Plug-in variance, present for the KMV estimator when k >= 3.
    pub variance_hat: Option<f64>,
    pub kind: EstimatorKind,
}

/// Walks the union of two sorted sketches in hash order, stopping after
/// `limit` distinct entries. Returns (k, K∩, U(k)).
pub(crate) fn merge_union(a: &[Entry], b: &[Entry], limit: usize) -> (usize, usize, f64) {
    let (mut i, mut j) = (0, 0);
    let (mut k, mut common) = (0usize, 0usize);
    let mut last = 0.0;
    while k < limit && (i < a.len() || j < b.len()) {
        let ord = match (a.get(i), b.get(j)) {
            (Some(x), Some(y)) => x.order(y),
            (Some(_), None) => Ordering::Less,
            _ => Ordering::Greater,
        };
        match ord {
            Ordering::Less => {
                last = a[i].hash;
                i += 1;
            }
            Ordering::Greater => {
                last = b[j].hash;
                j += 1;
            }
            Ordering::Equal => {
                last = a[i].hash;
                common += 1;
                i += 1;
                j += 1;
            }
        }
        k += 1;
    }
    (k, common, last)
}

/// The `min(k, |X|)` smallest hashes of `record`.
pub fn build_kmv(record: &Record, k: usize, h: &HashSource) -> Result<KmvSketch> {
    if k == 0 {
        return Err(GbkmvError::InvalidParameter("sketch capacity must be >= 1".into()));
    }
    let mut entries = record
        .elements()
        .iter()
        .map(|&e| Ok(Entry { hash: h.hash(e)?.value(), element: e }))
        .collect::<Result<Vec<_>>>()?;
    let complete = k >= entries.len();
    if !complete {
        entries.select_nth_unstable_by(k - 1, Entry::order);
        entries.truncate(k);
    }
    entries.sort_unstable_by(Entry::order);
    Ok(KmvSketch { entries, mode: SketchMode::BottomK(k), complete })
}

/// Distinct-count estimate (k−1)/U(k); exact `|L|` when the sketch holds
/// the whole set.
pub fn estimate_distinct(l: &KmvSketch) -> Result<f64> {
    if l.len() < 2 {
        return Err(GbkmvError::InsufficientSketch { len: l.len() });
    }
    if l.complete {
        return Ok(l.len() as f64);
    }
    let u_k = l.entries[l.len() - 1].hash;
    Ok((l.len() - 1) as f64 / u_k)
}

/// Intersection estimate for two bottom-k sketches, using the
/// `min(|Lx|, |Ly|)` smallest entries of their union.
pub fn estimate_intersection_kmv(lx: &KmvSketch, ly: &KmvSketch) -> Result<IntersectionEstimate> {
    for l in [lx, ly] {
        if let SketchMode::Threshold(_) = l.mode {
            return Err(GbkmvError::IncompatibleSketch(
                "bottom-k estimator needs bottom-k sketches".into(),
            ));
        }
    }
    if lx.complete && ly.complete {
        let (k, k_cap, u_k) = merge_union(&lx.entries, &ly.entries, usize::MAX);
        return Ok(IntersectionEstimate {
            k,
            k_cap,
            u_k,
            d_cap_hat: k_cap as f64,
            variance_hat: Some(0.0),
            kind: EstimatorKind::Exact,
        });
    }
    let k = lx.len().min(ly.len());
    if k < 2 {
        return Err(GbkmvError::InsufficientSketch { len: k });
    }
    let (k, k_cap, u_k) = merge_union(&lx.entries, &ly.entries, k);
    Ok(kmv_estimate(k, k_cap, u_k))
}

pub(crate) fn kmv_estimate(k: usize, k_cap: usize, u_k: f64) -> IntersectionEstimate {
    debug_assert!(k >= 2);
    let d_cup_hat = (k - 1) as f64 / u_k;
    let d_cap_hat = k_cap as f64 / k as f64 * d_cup_hat;
    let variance_hat = if k >= 3 { variance_kmv(d_cap_hat, d_cup_hat, k).ok() } else { None };
    IntersectionEstimate { k, k_cap, u_k, d_cap_hat, variance_hat, kind: EstimatorKind::Kmv }
}

/// Variance of the KMV intersection estimator for true overlap `d_cap`,
/// true union `d_cup` and union-sketch size `k`.
pub fn variance_kmv(d_cap: f64, d_cup: f64, k: usize) -> Result<f64> {
    if k < 3 {
        return Err(GbkmvError::Domain(format!("variance needs k >= 3, got {k}")));
    }
    if d_cap < 0.0 || d_cap > d_cup {
        return Err(GbkmvError::Domain(format!(
            "need 0 <= D_cap <= D_cup, got {d_cap} and {d_cup}"
        )));
    }
    let k = k as f64;
    Ok(d_cap * (k * d_cup - k * k - d_cup + k + d_cap) / (k * (k - 2.0)))
}

/// KMV index with the same capacity ⌊b/m⌋ for every record.
pub fn build_kmv_index(ds: &Dataset, budget: u64, h: &HashSource) -> Result<Vec<KmvSketch>> {
    let m = ds.records.len() as u64;
    if budget < 2 * m {
        return Err(GbkmvError::InvalidParameter(format!(
            "KMV index needs a budget of at least 2m = {}, got {budget}",
            2 * m
        )));
    }
    let k = (budget / m) as usize;
    ds.records.iter().map(|r| build_kmv(r, k, h)).collect()
}
