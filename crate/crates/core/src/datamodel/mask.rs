//! Binary rasters: dense form for random access and a run-length form that
//! is stored inline in manifests.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense binary raster, one byte per pixel (0 or 1).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BitMask {
    pub width: u32,
    pub height: u32,
    pub data: Vec<u8>,
}

impl BitMask {
    pub fn new(width: u32, height: u32) -> Self {
        BitMask {
            width,
            height,
            data: vec![0; width as usize * height as usize],
        }
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> bool {
        self.data[y as usize * self.width as usize + x as usize] != 0
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, v: bool) {
        self.data[y as usize * self.width as usize + x as usize] = v as u8;
    }

    pub fn count_ones(&self) -> u64 {
        self.data.iter().map(|&v| (v != 0) as u64).sum()
    }

    /// In-place union with another mask of the same size.
    pub fn union_with(&mut self, other: &BitMask) {
        assert_eq!((self.width, self.height), (other.width, other.height));
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a |= (b != 0) as u8;
        }
    }
}

/// Run-length encoded binary raster. Runs alternate 0,1,0,... in row-major
/// order, starting with a (possibly empty) run of zeros.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RleMask {
    pub width: u32,
    pub height: u32,
    runs: Vec<u32>,
}

impl RleMask {
    pub fn empty(width: u32, height: u32) -> Self {
        RleMask {
            width,
            height,
            runs: vec![width * height],
        }
    }

    pub fn runs(&self) -> &[u32] {
        &self.runs
    }

    pub fn from_runs(width: u32, height: u32, runs: Vec<u32>) -> Result<Self> {
        let total: u64 = runs.iter().map(|&r| r as u64).sum();
        if total != width as u64 * height as u64 {
            return Err(Error::Format(format!(
                "mask runs cover {total} pixels, expected {}",
                width as u64 * height as u64
            )));
        }
        Ok(RleMask {
            width,
            height,
            runs,
        }
        .canonical())
    }

    /// Builds a mask from per-row half-open `[x0, x1)` spans; spans may overlap and be unsorted.
    pub fn from_row_spans(width: u32, height: u32, rows: &[Vec<(u32, u32)>]) -> Self {
        let mut intervals: Vec<(u64, u64)> = Vec::new();
        let mut merged: Vec<(u32, u32)> = Vec::new();
        for (y, spans) in rows.iter().enumerate().take(height as usize) {
            merged.clear();
            merged.extend(
                spans
                    .iter()
                    .map(|&(a, b)| (a.min(width), b.min(width)))
                    .filter(|&(a, b)| a < b),
            );
            merged.sort_unstable();
            let base = y as u64 * width as u64;
            for &(a, b) in &merged {
                let (s, e) = (base + a as u64, base + b as u64);
                match intervals.last_mut() {
                    Some(last) if s <= last.1 => last.1 = last.1.max(e),
                    _ => intervals.push((s, e)),
                }
            }
        }
        let mut runs = Vec::with_capacity(intervals.len() * 2 + 1);
        let mut prev = 0u64;
        for (s, e) in intervals {
            runs.push((s - prev) as u32);
            runs.push((e - s) as u32);
            prev = e;
        }
        runs.push((width as u64 * height as u64 - prev) as u32);
        RleMask {
            width,
            height,
            runs,
        }
        .canonical()
    }

    pub fn from_bits(bits: &BitMask) -> Self {
        let mut runs = Vec::new();
        let mut current = 0u8;
        let mut len = 0u32;
        for &v in &bits.data {
            let v = (v != 0) as u8;
            if v == current {
                len += 1;
            } else {
                runs.push(len);
                current = v;
                len = 1;
            }
        }
        runs.push(len);
        RleMask {
            width: bits.width,
            height: bits.height,
            runs,
        }
        .canonical()
    }

    /// Drops empty interior runs so equal rasters have equal run lists.
    fn canonical(self) -> Self {
        let mut out: Vec<u32> = Vec::with_capacity(self.runs.len());
        for (i, &r) in self.runs.iter().enumerate() {
            if i == 0 {
                out.push(r);
                continue;
            }
            if r == 0 {
                continue;
            }
            if out.len() % 2 == i % 2 {
                out.push(r);
            } else {
                *out.last_mut().unwrap() += r;
            }
        }
        if out.len() % 2 == 0 {
            out.push(0);
        }
        RleMask {
            width: self.width,
            height: self.height,
            runs: out,
        }
    }

    /// Iterator over half-open `[start, end)` flat index ranges of ones.
    pub fn ones(&self) -> impl Iterator<Item = (u64, u64)> + '_ {
        let mut pos = 0u64;
        self.runs.iter().enumerate().filter_map(move |(i, &r)| {
            let start = pos;
            pos += r as u64;
            (i % 2 == 1 && r > 0).then_some((start, pos))
        })
    }

    pub fn to_bits(&self) -> BitMask {
        let mut bits = BitMask::new(self.width, self.height);
        for (s, e) in self.ones() {
            bits.data[s as usize..e as usize].fill(1);
        }
        bits
    }

    pub fn count_ones(&self) -> u64 {
        self.ones().map(|(s, e)| e - s).sum()
    }

    /// Counts ones of row `y` inside the inclusive column span returned by `span(y)`.
    pub fn count_in_spans(&self, span: impl Fn(u32) -> Option<(u32, u32)>) -> u64 {
        let w = self.width as u64;
        let mut count = 0;
        for (s, e) in self.ones() {
            let mut p = s;
            while p < e {
                let row = p / w;
                let row_end = ((row + 1) * w).min(e);
                if let Some((lo, hi)) = span(row as u32) {
                    let x0 = (p - row * w).max(lo as u64);
                    let x1 = (row_end - row * w).min(hi as u64 + 1);
                    if x1 > x0 {
                        count += x1 - x0;
                    }
                }
                p = row_end;
            }
        }
        count
    }
}

impl fmt::Display for RleMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "rle:{}x{}:", self.width, self.height)?;
        for (i, r) in self.runs.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{r}")?;
        }
        Ok(())
    }
}

/// Mask as referenced from a manifest: inline RLE or an external 8-bit raster
/// (nonzero = set) whose path is relative to the manifest directory.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Mask {
    Rle(RleMask),
    External(String),
}

impl Mask {
    pub fn dims(&self) -> Option<(u32, u32)> {
        match self {
            Mask::Rle(m) => Some((m.width, m.height)),
            Mask::External(_) => None,
        }
    }

    pub fn to_bits(&self, base: &Path) -> Result<BitMask> {
        match self {
            Mask::Rle(m) => Ok(m.to_bits()),
            Mask::External(rel) => {
                let path = base.join(rel);
                let img = image::open(&path)?.into_luma8();
                let (width, height) = img.dimensions();
                Ok(BitMask {
                    width,
                    height,
                    data: img.into_raw().into_iter().map(|v| (v != 0) as u8).collect(),
                })
            }
        }
    }

    pub fn to_rle(&self, base: &Path) -> Result<RleMask> {
        match self {
            Mask::Rle(m) => Ok(m.clone()),
            Mask::External(_) => Ok(RleMask::from_bits(&self.to_bits(base)?)),
        }
    }
}

impl From<Mask> for String {
    fn from(m: Mask) -> String {
        match m {
            Mask::Rle(r) => r.to_string(),
            Mask::External(p) => format!("file:{p}"),
        }
    }
}

impl TryFrom<String> for Mask {
    type Error = String;

    fn try_from(s: String) -> std::result::Result<Self, String> {
        if let Some(p) = s.strip_prefix("file:") {
            return Ok(Mask::External(p.to_string()));
        }
        let body = s
            .strip_prefix("rle:")
            .ok_or_else(|| format!("mask must start with rle: or file:, got {:.20}", s))?;
        let (dims, runs) = body.split_once(':').ok_or("missing run list")?;
        let (w, h) = dims.split_once('x').ok_or("bad mask dimensions")?;
        let w: u32 = w.parse().map_err(|_| "bad mask width")?;
        let h: u32 = h.parse().map_err(|_| "bad mask height")?;
        let runs = runs
            .split(',')
            .map(|r| r.parse::<u32>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| format!("bad run length: {e}"))?;
        RleMask::from_runs(w, h, runs)
            .map(Mask::Rle)
            .map_err(|e| e.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn spans_merge_across_rows() {
        let rows = vec![vec![(2, 4)], vec![(0, 4), (3, 4)], vec![], vec![(1, 2)]];
        let m = RleMask::from_row_spans(4, 4, &rows);
        let bits = m.to_bits();
        let expect = [0, 0, 1, 1, 1, 1, 1, 1, 0, 0, 0, 0, 0, 1, 0, 0];
        assert_eq!(bits.data, expect);
        assert_eq!(m, RleMask::from_bits(&bits));
        assert_eq!(m.count_ones(), 7);
    }

    #[test]
    fn text_form() {
        let m = Mask::Rle(RleMask::from_row_spans(3, 2, &[vec![(1, 2)], vec![]]));
        let s: String = m.clone().into();
        assert_eq!(s, "rle:3x2:1,1,4");
        assert_eq!(Mask::try_from(s).unwrap(), m);
        assert!(Mask::try_from("rle:3x2:1,1".to_string()).is_err());
        assert_eq!(
            Mask::try_from("file:m/a.png".to_string()).unwrap(),
            Mask::External("m/a.png".into())
        );
    }

    #[test]
    fn empty_mask() {
        let m = RleMask::empty(5, 5);
        assert_eq!(m.count_ones(), 0);
        assert_eq!(m, RleMask::from_bits(&BitMask::new(5, 5)));
    }

    proptest! {
        #[test]
        fn rle_round_trip(w in 1u32..12, h in 1u32..12, seed in any::<u64>()) {
            let mut bits = BitMask::new(w, h);
            let mut s = seed;
            for v in bits.data.iter_mut() {
                s = crate::seed::splitmix64(s);
                *v = (s % 3 == 0) as u8;
            }
            let rle = RleMask::from_bits(&bits);
            prop_assert_eq!(rle.to_bits(), bits.clone());
            let text: String = Mask::Rle(rle.clone()).into();
            prop_assert_eq!(Mask::try_from(text).unwrap(), Mask::Rle(rle.clone()));
            // Span counting equals a direct count.
            let span = |y: u32| (y % 2 == 0).then_some((1u32, w.saturating_sub(2)));
            let direct = (0..h).filter_map(|y| span(y).map(|(lo, hi)| (y, lo, hi)))
                .map(|(y, lo, hi)| (lo..=hi).filter(|&x| x < w && bits.get(x, y)).count() as u64)
                .sum::<u64>();
            prop_assert_eq!(rle.count_in_spans(span), direct);
        }
    }
}
