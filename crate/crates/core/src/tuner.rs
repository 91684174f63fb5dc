//! Variance cost model for picking the buffer width, plus the analytical
//! variance of the MinHash and LSH-E containment estimators.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::dataset::Dataset;
use crate::error::{GbkmvError, Result};
use crate::gbkmv::{build_gbkmv_index, estimate_containment_gbkmv, BufferSize, BITS_PER_UNIT};
use crate::hashing::HashSource;

/// Ordered record pairs sampled for the size terms.
pub const PAIR_SAMPLES: usize = 10_000;
/// Spacing of candidate buffer widths.
pub const GRID_STEP: usize = 8;

/// Everything the cost model reads from a dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct CostModelInputs {
    /// Budget in element units.
    pub b: u64,
    pub m: usize,
    /// Total element occurrences.
    pub total: u64,
    /// `f_prefix[r]`: share of occurrences held by the `r` most frequent elements.
    pub f_prefix: Vec<f64>,
    /// `f_prefix_sq[r]`: sum of squared shares of the `r` most frequent elements.
    pub f_prefix_sq: Vec<f64>,
    /// Sampled ordered size pairs `(x_j, x_l)`, each pair present in both orders.
    pub pairs: Vec<(f64, f64)>,
    pub grid: Vec<usize>,
    pub pair_seed: u64,
}

impl CostModelInputs {
    pub fn from_dataset(ds: &Dataset, b: u64, pair_seed: u64) -> Result<Self> {
        let st = &ds.stats;
        let mut rng = ChaCha8Rng::seed_from_u64(pair_seed);
        let mut pairs = Vec::with_capacity(PAIR_SAMPLES);
        while pairs.len() < PAIR_SAMPLES {
            let a = st.sizes[rng.gen_range(0..st.m)] as f64;
            let c = st.sizes[rng.gen_range(0..st.m)] as f64;
            pairs.push((a, c));
            pairs.push((c, a));
        }
        let mut grid = Vec::new();
        let mut r = 0;
        while ((st.m * r) as f64 / BITS_PER_UNIT as f64) < b as f64 {
            grid.push(r);
            if r >= st.n {
                break;
            }
            r += GRID_STEP;
        }
        if grid.is_empty() {
            return Err(GbkmvError::InvalidParameter("budget must be positive".into()));
        }
        Ok(CostModelInputs {
            b,
            m: st.m,
            total: st.total,
            f_prefix: st.f_prefix.clone(),
            f_prefix_sq: st.f_prefix_sq.clone(),
            pairs,
            grid,
            pair_seed,
        })
    }

    fn n(&self) -> usize {
        self.f_prefix.len() - 1
    }

    fn f_n2(&self) -> f64 {
        self.f_prefix_sq[self.n()]
    }

    /// Threshold implied by spending the rest of the budget on the tail.
    pub fn tau(&self, r: usize) -> Result<f64> {
        let r = r.min(self.n());
        let tail_budget = self.b as f64 - (self.m * r) as f64 / BITS_PER_UNIT as f64;
        let tail_total = self.total as f64 * (1.0 - self.f_prefix[r]);
        if tail_budget <= 0.0 {
            return Err(GbkmvError::InfeasibleBuffer { r });
        }
        if tail_total <= 0.0 {
            return Ok(1.0);
        }
        Ok(tail_budget / tail_total)
    }
}

/// Averages of the size terms over the sampled pairs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SizeTerms {
    pub l1: f64,
    pub l2: f64,
    pub l3: f64,
}

fn size_terms(pairs: &[(f64, f64)], tau: f64, f1: f64) -> SizeTerms {
    let (mut l1, mut l2, mut l3) = (0.0, 0.0, 0.0);
    for &(xj, xl) in pairs {
        let k = tau * (xj + xl) - tau * tau * xj * xl * f1;
        l1 += (xj + xl) * xl / (k * xj);
        l2 += xl * xl / k;
        l3 += xl / xj;
    }
    let n = pairs.len() as f64;
    SizeTerms { l1: l1 / n, l2: l2 / n, l3: l3 / n }
}

pub fn size_terms_at(inputs: &CostModelInputs, r: usize) -> Result<SizeTerms> {
    let tau = inputs.tau(r)?;
    let f1 = inputs.f_n2() - inputs.f_prefix_sq[r.min(inputs.n())];
    Ok(size_terms(&inputs.pairs, tau, f1))
}

/// Predicted average containment variance with an `r`-bit buffer.
pub fn predict_var_gbkmv(inputs: &CostModelInputs, r: usize) -> Result<f64> {
    let tau = inputs.tau(r)?;
    if tau >= 1.0 {
        return Ok(0.0);
    }
    let f1 = inputs.f_n2() - inputs.f_prefix_sq[r.min(inputs.n())];
    let f2 = -f1 * f1;
    let f3 = -f1;
    let l = size_terms(&inputs.pairs, tau, f1);
    Ok(l.l1 * f1 + l.l2 * f2 + l.l3 * f3)
}

/// Predicted average containment variance of plain G-KMV under the same
/// budget, written in the per-pair form with `τ = b/N`.
pub fn predict_var_gkmv(inputs: &CostModelInputs) -> Result<f64> {
    let tau = inputs.b as f64 / inputs.total as f64;
    if tau >= 1.0 {
        return Ok(0.0);
    }
    let f = inputs.f_n2();
    let mut sum = 0.0;
    for &(xj, xl) in &inputs.pairs {
        let k = tau * (xj + xl) - tau * tau * xj * xl * f;
        let jl = xj * xl;
        sum += (xj + xl) * jl / (k * xj * xj) * f - jl * jl / (k * xj * xj) * f * f - jl / (xj * xj) * f;
    }
    Ok(sum / inputs.pairs.len() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct VariancePrediction {
    pub r: usize,
    pub var_gbkmv: f64,
    /// Prediction at `r` minus prediction at `r = 0`.
    pub delta_vs_gkmv: f64,
}

pub fn predict_grid(inputs: &CostModelInputs) -> Result<Vec<VariancePrediction>> {
    let base = predict_var_gbkmv(inputs, 0)?;
    inputs
        .grid
        .iter()
        .map(|&r| {
            let v = predict_var_gbkmv(inputs, r)?;
            Ok(VariancePrediction { r, var_gbkmv: v, delta_vs_gkmv: v - base })
        })
        .collect()
}

/// Grid argmin of the prediction, never worse than `r = 0`; ties go to the
/// smaller width.
pub fn choose_buffer_size(inputs: &CostModelInputs) -> Result<usize> {
    let preds = predict_grid(inputs)?;
    let mut best = VariancePrediction { r: 0, var_gbkmv: f64::INFINITY, delta_vs_gkmv: 0.0 };
    for p in preds {
        if p.delta_vs_gkmv <= 0.0 && p.var_gbkmv < best.var_gbkmv {
            best = p;
        }
    }
    Ok(best.r)
}

/// Mean squared error of GB-KMV containment estimates over `pairs`
/// (query index, record index), averaged over one index per hash seed.
pub fn empirical_mse(ds: &Dataset, b: u64, r: usize, pairs: &[(usize, usize)], seeds: &[u64]) -> Result<f64> {
    let mut sum = 0.0;
    for &seed in seeds {
        let idx = build_gbkmv_index(ds, b, BufferSize::Bits(r), &HashSource::computed(seed))?;
        let sk = idx.sketches();
        for &(j, l) in pairs {
            let q = &ds.records[j];
            let exact = q.intersection_size(&ds.records[l]) as f64 / q.len() as f64;
            let est = estimate_containment_gbkmv(&sk[j], &sk[l], q.len())?;
            sum += (est - exact) * (est - exact);
        }
    }
    Ok(sum / (pairs.len() * seeds.len()) as f64)
}

fn jaccard_of(q: f64, x: f64, d_cap: f64) -> Result<f64> {
    if !(q > 0.0 && x > 0.0 && d_cap >= 0.0 && d_cap <= q.min(x)) {
        return Err(GbkmvError::Domain(format!("no sets with q = {q}, x = {x}, overlap = {d_cap}")));
    }
    Ok(d_cap / (q + x - d_cap))
}

/// Approximate variance of the MinHash containment estimate of Q (size `q`)
/// in X (size `x`) with overlap `d_cap` and `k_prime` hash functions.
pub fn predict_var_minhash(q: f64, x: f64, d_cap: f64, k_prime: usize) -> Result<f64> {
    if k_prime == 0 {
        return Err(GbkmvError::InvalidParameter("k' must be >= 1".into()));
    }
    let s = jaccard_of(q, x, d_cap)?;
    if s <= 0.0 || s >= 1.0 {
        return Err(GbkmvError::DegenerateSimilarity);
    }
    let k = k_prime as f64;
    let p = (1.0 + s) * (1.0 + s);
    Ok(d_cap * d_cap * (1.0 - s) * (k * p - s * (1.0 - s)) / (q * q * k * k * s * p * p))
}

/// As [`predict_var_minhash`] with the partition upper bound `u` in place
/// of the record size.
pub fn predict_var_lshe(q: f64, x: f64, u: f64, d_cap: f64, k_prime: usize) -> Result<f64> {
    if u < x {
        return Err(GbkmvError::Domain(format!("upper bound {u} is below the record size {x}")));
    }
    let f = (u + q) / (x + q);
    Ok(f * f * predict_var_minhash(q, x, d_cap, k_prime)?)
}
