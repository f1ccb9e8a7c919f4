//! Iriscodes, embeddings and the binary template store.
//!
//! Store layout (little-endian): magic `IRTB`, version byte, kind byte
//! (0 gabor, 1 ordinal, 2 embedding), layout header (`rows, grid_cols,
//! bits_per_position` as u32 for codes, `dims` as u32 for embeddings),
//! record count as u64, then per record a u32-prefixed UTF-8 id and a
//! u32-prefixed payload. Code payloads are the logical bits then the mask,
//! each packed LSB-first into bytes; embedding payloads are f64 values.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const STORE_MAGIC: &[u8; 4] = b"IRTB";
pub const STORE_VERSION: u8 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CodeKind {
    Gabor,
    Ordinal,
}

/// Row-major code geometry. Bits of one row are contiguous so an angular
/// shift of one grid column is a rotation of each row by `bits_per_position`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct CodeLayout {
    pub rows: u32,
    pub grid_cols: u32,
    pub bits_per_position: u32,
}

impl CodeLayout {
    pub fn new(rows: u32, grid_cols: u32, bits_per_position: u32) -> Self {
        CodeLayout {
            rows,
            grid_cols,
            bits_per_position,
        }
    }

    #[inline]
    pub fn row_bits(&self) -> usize {
        self.grid_cols as usize * self.bits_per_position as usize
    }

    #[inline]
    pub fn words_per_row(&self) -> usize {
        self.row_bits().div_ceil(64)
    }

    #[inline]
    pub fn n_bits(&self) -> usize {
        self.rows as usize * self.row_bits()
    }

    #[inline]
    pub fn n_words(&self) -> usize {
        self.rows as usize * self.words_per_row()
    }

    #[inline]
    fn locate(&self, index: usize) -> (usize, u64) {
        let rb = self.row_bits();
        let (row, within) = (index / rb, index % rb);
        (
            row * self.words_per_row() + within / 64,
            1u64 << (within % 64),
        )
    }

    /// Logical bit index of bit `k` at grid position `(row, col)`.
    #[inline]
    pub fn index(&self, row: usize, col: usize, k: usize) -> usize {
        row * self.row_bits() + col * self.bits_per_position as usize + k
    }
}

/// Binary template with a parallel validity mask (1 = valid).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IrisCode {
    pub kind: CodeKind,
    pub layout: CodeLayout,
    /// Row-padded words; padding bits are zero in both vectors.
    bits: Vec<u64>,
    mask: Vec<u64>,
}

impl IrisCode {
    pub fn zeroed(kind: CodeKind, layout: CodeLayout) -> Self {
        IrisCode {
            kind,
            layout,
            bits: vec![0; layout.n_words()],
            mask: vec![0; layout.n_words()],
        }
    }

    /// Builds a code from `0`/`1` strings, bit 0 first.
    pub fn from_bit_strings(
        kind: CodeKind,
        layout: CodeLayout,
        bits: &str,
        mask: &str,
    ) -> Result<Self> {
        let n = layout.n_bits();
        if bits.len() != n || mask.len() != n {
            return Err(Error::DimMismatch {
                expected: n,
                found: bits.len().max(mask.len()),
            });
        }
        let mut code = IrisCode::zeroed(kind, layout);
        for (i, (b, m)) in bits.bytes().zip(mask.bytes()).enumerate() {
            code.set(i, b == b'1', m == b'1');
        }
        Ok(code)
    }

    #[inline]
    pub fn n_bits(&self) -> usize {
        self.layout.n_bits()
    }

    #[inline]
    pub fn set(&mut self, index: usize, bit: bool, valid: bool) {
        let (w, m) = self.layout.locate(index);
        if bit {
            self.bits[w] |= m;
        } else {
            self.bits[w] &= !m;
        }
        if valid {
            self.mask[w] |= m;
        } else {
            self.mask[w] &= !m;
        }
    }

    #[inline]
    pub fn bit(&self, index: usize) -> bool {
        let (w, m) = self.layout.locate(index);
        self.bits[w] & m != 0
    }

    #[inline]
    pub fn valid(&self, index: usize) -> bool {
        let (w, m) = self.layout.locate(index);
        self.mask[w] & m != 0
    }

    pub fn words(&self) -> &[u64] {
        &self.bits
    }

    pub fn mask_words(&self) -> &[u64] {
        &self.mask
    }

    pub fn count_valid(&self) -> u64 {
        self.mask.iter().map(|w| w.count_ones() as u64).sum()
    }

    /// Code rotated by `shift` grid columns: position `c` of the result holds position `c - shift` of `self`.
    pub fn rotated(&self, shift: i32) -> IrisCode {
        let mut out = IrisCode::zeroed(self.kind, self.layout);
        let cols = self.layout.grid_cols as i64;
        let bpp = self.layout.bits_per_position as usize;
        for r in 0..self.layout.rows as usize {
            for c in 0..cols as usize {
                let src = (c as i64 - shift as i64).rem_euclid(cols) as usize;
                for k in 0..bpp {
                    let from = self.layout.index(r, src, k);
                    out.set(self.layout.index(r, c, k), self.bit(from), self.valid(from));
                }
            }
        }
        out
    }

    fn pack_logical(&self, words: &[u64]) -> Vec<u8> {
        let n = self.n_bits();
        let mut out = vec![0u8; n.div_ceil(8)];
        for i in 0..n {
            let (w, m) = self.layout.locate(i);
            if words[w] & m != 0 {
                out[i / 8] |= 1 << (i % 8);
            }
        }
        out
    }

    fn from_packed(kind: CodeKind, layout: CodeLayout, bits: &[u8], mask: &[u8]) -> Self {
        let mut code = IrisCode::zeroed(kind, layout);
        for i in 0..layout.n_bits() {
            let b = bits[i / 8] >> (i % 8) & 1 == 1;
            let m = mask[i / 8] >> (i % 8) & 1 == 1;
            code.set(i, b, m);
        }
        code
    }
}

/// Unit-norm real template.
#[derive(Clone, Debug, PartialEq)]
pub struct Embedding<T> {
    values: Vec<T>,
}

impl<T: Scalar> Embedding<T> {
    /// Scales `values` to unit L2 norm; `None` for a zero or non-finite vector.
    pub fn normalized(values: Vec<T>) -> Option<Self> {
        let norm = values.iter().map(|&v| v * v).sum::<T>().sqrt();
        if !(norm.is_finite() && norm > T::zero()) {
            return None;
        }
        Some(Embedding {
            values: values.into_iter().map(|v| v / norm).collect(),
        })
    }

    /// First basis vector of the given dimension.
    pub fn basis(dims: usize, axis: usize) -> Self {
        let mut values = vec![T::zero(); dims];
        values[axis] = T::one();
        Embedding { values }
    }

    /// Wraps values that are already unit norm; renormalizes when off by more than 1e-6.
    pub fn from_unit(values: Vec<T>) -> Option<Self> {
        let norm = values.iter().map(|&v| v * v).sum::<T>().sqrt();
        if (norm - T::one()).abs() > T::lit(1e-6) {
            Self::normalized(values)
        } else {
            Some(Embedding { values })
        }
    }

    pub fn dims(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn norm(&self) -> T {
        self.values.iter().map(|&v| v * v).sum::<T>().sqrt()
    }

    pub fn cast<U: Scalar>(&self) -> Embedding<U> {
        Embedding {
            values: self.values.iter().map(|v| U::lit(v.as_f64())).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Template {
    Code(IrisCode),
    Embedding(Embedding<f64>),
}

impl Template {
    fn header(&self) -> (u8, [u32; 3]) {
        match self {
            Template::Code(c) => (
                match c.kind {
                    CodeKind::Gabor => 0,
                    CodeKind::Ordinal => 1,
                },
                [
                    c.layout.rows,
                    c.layout.grid_cols,
                    c.layout.bits_per_position,
                ],
            ),
            Template::Embedding(e) => (2, [e.dims() as u32, 0, 0]),
        }
    }
}

pub type TemplateMap = BTreeMap<String, Template>;

fn encode_store(templates: &TemplateMap) -> Result<Vec<u8>> {
    let header = templates
        .values()
        .next()
        .map(Template::header)
        .unwrap_or((0, [0, 0, 0]));
    if templates.values().any(|t| t.header() != header) {
        return Err(Error::MixedKinds);
    }
    let mut out = Vec::new();
    out.extend_from_slice(STORE_MAGIC);
    out.push(STORE_VERSION);
    out.push(header.0);
    let layout_words = if header.0 == 2 { 1 } else { 3 };
    for v in &header.1[..layout_words] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&(templates.len() as u64).to_le_bytes());
    for (id, t) in templates {
        out.extend_from_slice(&(id.len() as u32).to_le_bytes());
        out.extend_from_slice(id.as_bytes());
        let payload = match t {
            Template::Code(c) => {
                let mut p = c.pack_logical(&c.bits);
                p.extend(c.pack_logical(&c.mask));
                p
            }
            Template::Embedding(e) => e.values().iter().flat_map(|v| v.to_le_bytes()).collect(),
        };
        out.extend_from_slice(&(payload.len() as u32).to_le_bytes());
        out.extend_from_slice(&payload);
    }
    Ok(out)
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.data.len())
            .ok_or_else(|| Error::Format("truncated template store".into()))?;
        let s = &self.data[self.pos..end];
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
}

fn decode_store(data: &[u8]) -> Result<TemplateMap> {
    let mut map = TemplateMap::new();
    if data.is_empty() {
        return Ok(map);
    }
    let mut cur = Cursor { data, pos: 0 };
    if cur.take(4)? != STORE_MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let version = cur.u8()?;
    if version != STORE_VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let kind = cur.u8()?;
    let (code_kind, layout, dims) = match kind {
        0 | 1 => {
            let layout = CodeLayout::new(cur.u32()?, cur.u32()?, cur.u32()?);
            let k = if kind == 0 {
                CodeKind::Gabor
            } else {
                CodeKind::Ordinal
            };
            (Some(k), layout, 0)
        }
        2 => (None, CodeLayout::new(0, 0, 0), cur.u32()? as usize),
        k => return Err(Error::Format(format!("unknown template kind {k}"))),
    };
    let count = cur.u64()?;
    for _ in 0..count {
        let id_len = cur.u32()? as usize;
        let id = std::str::from_utf8(cur.take(id_len)?)
            .map_err(|_| Error::Format("template id is not UTF-8".into()))?
            .to_string();
        let len = cur.u32()? as usize;
        let payload = cur.take(len)?;
        let template = match code_kind {
            Some(k) => {
                let half = layout.n_bits().div_ceil(8);
                if len != 2 * half {
                    return Err(Error::DimMismatch {
                        expected: 2 * half,
                        found: len,
                    });
                }
                Template::Code(IrisCode::from_packed(
                    k,
                    layout,
                    &payload[..half],
                    &payload[half..],
                ))
            }
            None => {
                if len != dims * 8 {
                    return Err(Error::DimMismatch {
                        expected: dims,
                        found: len / 8,
                    });
                }
                let values = payload
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                    .collect();
                Template::Embedding(Embedding { values })
            }
        };
        if map.insert(id.clone(), template).is_some() {
            return Err(Error::DuplicateId(id));
        }
    }
    if cur.pos != data.len() {
        return Err(Error::Format("trailing bytes after last record".into()));
    }
    Ok(map)
}

/// Writes all templates; they must share kind and layout (or dimension).
pub fn save_templates(path: impl AsRef<Path>, templates: &TemplateMap) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_store(templates)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_templates(path: impl AsRef<Path>) -> Result<TemplateMap> {
    let path = path.as_ref();
    let data = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_store(&data)
}

/// Loads an embedding store, renormalizing vectors whose norm is off by more than 1e-6.
pub fn import_embeddings(path: impl AsRef<Path>) -> Result<BTreeMap<String, Embedding<f64>>> {
    let mut out = BTreeMap::new();
    let mut dims = None;
    for (id, t) in load_templates(path)? {
        let Template::Embedding(e) = t else {
            return Err(Error::MixedKinds);
        };
        let d = *dims.get_or_insert(e.dims());
        if e.dims() != d {
            return Err(Error::DimMismatch {
                expected: d,
                found: e.dims(),
            });
        }
        let e = Embedding::from_unit(e.values)
            .ok_or_else(|| Error::Format(format!("embedding {id} has zero norm")))?;
        out.insert(id, e);
    }
    Ok(out)
}
