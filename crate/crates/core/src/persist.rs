//! Binary index file. All integers are little-endian and every variable
//! section is prefixed by its length.
//!
//! ```text
//! "GBKM" u32:version u64:seed u64:m u64:n u64:r f64:tau u64:budget
//! u8:hash_mode [u64:count (u32:id f64:hash)*]      fixture table, by id
//! u64:count (u32:len bytes)*                        dictionary
//! u64:count u32*                                    buffered elements
//! u32*m                                             record sizes
//! per record: u32*ceil(r/32) u32:len (u32:id f64:hash)*
//! ```

use std::fs;
use std::path::Path;

use crate::dataset::{Dictionary, ElementId};
use crate::error::{GbkmvError, Result};
use crate::gbkmv::{BufferBitmap, GbkmvIndex, GbkmvRecordSketch};
use crate::hashing::{HashMode, HashSource};
use crate::kmv::{Entry, KmvSketch, SketchMode};

pub const MAGIC: &[u8; 4] = b"GBKM";
pub const VERSION: u32 = 1;

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_bits().to_le_bytes());
    }
    fn len(&mut self, v: usize) {
        self.u64(v as u64);
    }
}

pub fn to_bytes(idx: &GbkmvIndex) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(MAGIC);
    w.u32(VERSION);
    w.u64(idx.hash().seed());
    w.len(idx.len());
    w.len(idx.dictionary().len());
    w.len(idx.r());
    w.f64(idx.tau());
    w.u64(idx.budget());
    match idx.hash().mode() {
        HashMode::Computed => w.u8(0),
        HashMode::Fixture(t) => {
            w.u8(1);
            let mut rows: Vec<(&ElementId, &f64)> = t.iter().collect();
            rows.sort_unstable_by_key(|r| *r.0);
            w.len(rows.len());
            for (e, v) in rows {
                w.u32(e.0);
                w.f64(*v);
            }
        }
    }
    w.len(idx.dictionary().len());
    for tok in idx.dictionary().tokens() {
        w.u32(tok.len() as u32);
        w.0.extend_from_slice(tok.as_bytes());
    }
    w.len(idx.buffered_elements().len());
    for e in idx.buffered_elements() {
        w.u32(e.0);
    }
    for &s in idx.sizes() {
        w.u32(s);
    }
    for s in idx.sketches() {
        for &word in s.buffer.words() {
            w.u32(word);
        }
        w.u32(s.tail.len() as u32);
        for e in s.tail.entries() {
            w.u32(e.element.0);
            w.f64(e.hash);
        }
    }
    w.0
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| {
            GbkmvError::Corrupt(format!("truncated at byte {} (wanted {n} more)", self.pos))
        })?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_bits(self.u64()?))
    }
    /// A length that must fit in what is left, at `unit` bytes per item.
    fn len(&mut self, unit: usize) -> Result<usize> {
        let n = self.u64()?;
        let left = (self.buf.len() - self.pos) as u64;
        if n.saturating_mul(unit as u64) > left {
            return Err(GbkmvError::Corrupt(format!("length {n} runs past the end of the file")));
        }
        Ok(n as usize)
    }
}

pub fn from_bytes(buf: &[u8]) -> Result<GbkmvIndex> {
    let mut r = Reader { buf, pos: 0 };
    if r.take(4).map_err(|_| GbkmvError::Format("file too short for a header".into()))? != MAGIC {
        return Err(GbkmvError::Format("bad magic".into()));
    }
    let version = r.u32().map_err(|_| GbkmvError::Format("file too short for a header".into()))?;
    if version != VERSION {
        return Err(GbkmvError::Format(format!("unsupported version {version}")));
    }
    let seed = r.u64()?;
    let m = r.len(4)?;
    let n = r.u64()? as usize;
    let width = r.u64()? as usize;
    let tau = r.f64()?;
    let budget = r.u64()?;
    let hash = match r.u8()? {
        0 => HashSource::computed(seed),
        1 => {
            let count = r.len(12)?;
            let mut t = std::collections::HashMap::with_capacity(count);
            for _ in 0..count {
                let e = ElementId(r.u32()?);
                t.insert(e, r.f64()?);
            }
            HashSource::fixture(seed, t).map_err(|e| GbkmvError::Corrupt(e.to_string()))?
        }
        other => return Err(GbkmvError::Format(format!("unknown hash mode {other}"))),
    };
    let count = r.len(4)?;
    if count != n {
        return Err(GbkmvError::Corrupt(format!("dictionary holds {count} tokens, header says {n}")));
    }
    let mut tokens = Vec::with_capacity(count);
    for _ in 0..count {
        let len = r.u32()? as usize;
        let bytes = r.take(len)?;
        tokens.push(
            String::from_utf8(bytes.to_vec()).map_err(|_| GbkmvError::Corrupt("token is not UTF-8".into()))?,
        );
    }
    let dictionary = Dictionary::from_tokens(tokens).map_err(|e| GbkmvError::Corrupt(e.to_string()))?;
    let count = r.len(4)?;
    let e_h = (0..count).map(|_| r.u32().map(ElementId)).collect::<Result<Vec<_>>>()?;
    let sizes = (0..m).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
    let words = width.div_ceil(32);
    let mut sketches = Vec::with_capacity(m);
    for _ in 0..m {
        let w = (0..words).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
        let buffer = BufferBitmap::from_words(w, width).map_err(|e| GbkmvError::Corrupt(e.to_string()))?;
        let len = r.u32()? as usize;
        let mut entries = Vec::with_capacity(len.min(buf.len() / 12));
        for _ in 0..len {
            let element = ElementId(r.u32()?);
            entries.push(Entry { hash: r.f64()?, element });
        }
        let tail = KmvSketch::from_parts(entries, SketchMode::Threshold(tau), tau >= 1.0)
            .map_err(|e| GbkmvError::Corrupt(e.to_string()))?;
        sketches.push(GbkmvRecordSketch { buffer, tail });
    }
    if r.pos != buf.len() {
        return Err(GbkmvError::Corrupt(format!("{} trailing bytes", buf.len() - r.pos)));
    }
    GbkmvIndex::from_parts(width, e_h, tau, sketches, hash, budget, sizes, dictionary)
        .map_err(|e| GbkmvError::Corrupt(e.to_string()))
}

pub fn save_index<P: AsRef<Path>>(idx: &GbkmvIndex, path: P) -> Result<()> {
    fs::write(path, to_bytes(idx))?;
    Ok(())
}

pub fn load_index<P: AsRef<Path>>(path: P) -> Result<GbkmvIndex> {
    from_bytes(&fs::read(path)?)
}
