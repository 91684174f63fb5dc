//! Seedable hashing of elements onto the unit interval.

use std::collections::HashMap;
use std::io::BufRead;

use crate::dataset::ElementId;
use crate::error::{GbkmvError, Result};

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Maps 64 random bits onto (0, 1]. Only the top 53 bits are used so the
/// map is exact in f64: `(u >> 11) + 1` over 2^53.
#[inline]
pub fn unit_from_bits(u: u64) -> f64 {
    ((u >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// A hash value in (0, 1].
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct UnitHash(f64);

impl UnitHash {
    pub fn new(value: f64) -> Result<Self> {
        if value > 0.0 && value <= 1.0 {
            Ok(UnitHash(value))
        } else {
            Err(GbkmvError::InvalidParameter(format!(
                "hash value {value} is outside (0, 1]"
            )))
        }
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum HashMode {
    Computed,
    Fixture(HashMap<ElementId, f64>),
}

/// The single hash function shared by every sketch of an index.
#[derive(Clone, Debug, PartialEq)]
pub struct HashSource {
    seed: u64,
    mode: HashMode,
}

impl HashSource {
    pub fn computed(seed: u64) -> Self {
        HashSource { seed, mode: HashMode::Computed }
    }

    pub fn fixture(seed: u64, table: HashMap<ElementId, f64>) -> Result<Self> {
        for &v in table.values() {
            UnitHash::new(v)?;
        }
        Ok(HashSource { seed, mode: HashMode::Fixture(table) })
    }

    /// Reads a two-column `token hash` table. `resolve` turns tokens into
    /// ids (typically [`crate::dataset::QueryEncoder::id_of`]). Blank lines
    /// and lines starting with `#` are skipped.
    pub fn load_fixture<R, F>(seed: u64, source: R, mut resolve: F) -> Result<Self>
    where
        R: BufRead,
        F: FnMut(&str) -> ElementId,
    {
        let mut table = HashMap::new();
        for (lineno, line) in source.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut cols = line.split_ascii_whitespace();
            let (Some(tok), Some(val), None) = (cols.next(), cols.next(), cols.next()) else {
                return Err(GbkmvError::InvalidParameter(format!(
                    "fixture line {}: expected `token hash`",
                    lineno + 1
                )));
            };
            let val: f64 = val.parse().map_err(|_| {
                GbkmvError::InvalidParameter(format!("fixture line {}: bad hash {val:?}", lineno + 1))
            })?;
            table.insert(resolve(tok), UnitHash::new(val)?.value());
        }
        Self::fixture(seed, table)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn mode(&self) -> &HashMode {
        &self.mode
    }

    #[inline]
    pub fn hash(&self, e: ElementId) -> Result<UnitHash> {
        match &self.mode {
            HashMode::Computed => Ok(UnitHash(unit_from_bits(self.bits(e)))),
            HashMode::Fixture(t) => t
                .get(&e)
                .map(|&v| UnitHash(v))
                .ok_or(GbkmvError::MissingFixture(e)),
        }
    }

    #[inline]
    fn bits(&self, e: ElementId) -> u64 {
        mix64(mix64(self.seed ^ GOLDEN) ^ (e.0 as u64).wrapping_mul(GOLDEN))
    }

    /// The `i`-th member of a family of independent 64-bit hash functions,
    /// derived from the same core as [`HashSource::hash`]. Used by MinHash.
    #[inline]
    pub fn family(&self, i: u32, e: ElementId) -> u64 {
        let key = mix64(self.seed ^ GOLDEN.wrapping_mul(i as u64 + 2));
        mix64(key ^ (e.0 as u64).wrapping_mul(GOLDEN))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fig2() -> HashSource {
        // e1 and e6 are not printed in the worked example; any value above
        // 0.5 reproduces every sketch shown there.
        let t: HashMap<ElementId, f64> = [
            (1, 0.62),
            (2, 0.24),
            (3, 0.85),
            (4, 0.47),
            (5, 0.10),
            (6, 0.71),
            (7, 0.33),
            (9, 0.56),
            (10, 0.18),
        ]
        .into_iter()
        .map(|(k, v)| (ElementId(k), v))
        .collect();
        HashSource::fixture(0, t).unwrap()
    }

    #[test]
    fn fixture_lookup() {
        let h = fig2();
        assert_eq!(h.hash(ElementId(5)).unwrap().value(), 0.10);
        assert_eq!(h.hash(ElementId(2)).unwrap().value(), 0.24);
        assert_eq!(h.hash(ElementId(7)).unwrap().value(), 0.33);
        assert_eq!(h.hash(ElementId(4)).unwrap().value(), 0.47);
        assert_eq!(h.hash(ElementId(9)).unwrap().value(), 0.56);
        assert!(matches!(h.hash(ElementId(8)), Err(GbkmvError::MissingFixture(_))));
    }

    #[test]
    fn fixture_file_parsing() {
        let text = "# token hash\ne5 0.10\n\ne2 0.24\n";
        let mut ids = HashMap::new();
        let h = HashSource::load_fixture(0, text.as_bytes(), |t| {
            let n = ids.len() as u32;
            *ids.entry(t.to_owned()).or_insert(ElementId(n))
        })
        .unwrap();
        assert_eq!(h.hash(ElementId(0)).unwrap().value(), 0.10);
        assert_eq!(h.hash(ElementId(1)).unwrap().value(), 0.24);
        assert!(HashSource::load_fixture(0, "a 0.0\n".as_bytes(), |_| ElementId(0)).is_err());
        assert!(HashSource::load_fixture(0, "a\n".as_bytes(), |_| ElementId(0)).is_err());
    }

    #[test]
    fn unit_map_bounds() {
        assert!(unit_from_bits(0) > 0.0);
        assert_eq!(unit_from_bits(u64::MAX), 1.0);
    }

    #[test]
    fn deterministic_and_seeded() {
        let a = HashSource::computed(42);
        let b = HashSource::computed(42);
        let c = HashSource::computed(43);
        let e = ElementId(12345);
        assert_eq!(a.hash(e).unwrap(), b.hash(e).unwrap());
        assert_ne!(a.hash(e).unwrap(), c.hash(e).unwrap());
        assert_ne!(a.family(0, e), a.family(1, e));
    }

    #[test]
    fn computed_hashes_are_uniform() {
        let h = HashSource::computed(7);
        let n = 1_000_000usize;
        let mut v: Vec<f64> = (0..n as u32).map(|i| h.hash(ElementId(i)).unwrap().value()).collect();
        v.sort_by(f64::total_cmp);
        assert!(v[0] > 0.0);
        let mut d: f64 = 0.0;
        for (i, x) in v.iter().enumerate() {
            let lo = i as f64 / n as f64;
            let hi = (i + 1) as f64 / n as f64;
            d = d.max((x - lo).abs()).max((hi - x).abs());
        }
        assert!(d < 0.005, "KS distance {d}");
        v.dedup();
        assert_eq!(v.len(), n, "hash collision");
    }
}
