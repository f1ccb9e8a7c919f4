//! Template comparison: rotation-compensated masked fractional Hamming
//! distance for iriscodes, cosine similarity for embeddings, and the batch
//! engine that scores pair lists.

mod io;

pub use io::{load_scores, save_scores, ScoresMeta};

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datamodel::{Embedding, IrisCode, Template, TemplateMap};
use crate::error::{Error, Result};
use crate::protocols::{Pair, SampleRef};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MatchScore<T> {
    /// Higher is more similar; `1 - HD` for iriscodes, cosine for embeddings.
    pub similarity: T,
    /// Grid-column shift of the reference that achieved the score.
    pub best_shift: i32,
    /// Jointly valid bits at the best shift (embedding dimension for cosine).
    pub valid_bits: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatcherConfig {
    pub max_shift: u32,
    pub min_valid_fraction: f64,
}

impl Default for MatcherConfig {
    fn default() -> Self {
        MatcherConfig {
            max_shift: 8,
            min_valid_fraction: 0.25,
        }
    }
}

/// Reference-side code with every row stored twice back to back, so any
/// rotation reads a contiguous window.
#[derive(Clone, Debug)]
pub struct PreparedCode {
    code: IrisCode,
    ext_bits: Vec<u64>,
    ext_mask: Vec<u64>,
}

impl PreparedCode {
    pub fn new(code: &IrisCode) -> Self {
        let wpr = code.layout.words_per_row();
        let mut ext_bits = Vec::with_capacity(2 * code.layout.n_words());
        let mut ext_mask = Vec::with_capacity(2 * code.layout.n_words());
        for (b, m) in code.words().chunks(wpr).zip(code.mask_words().chunks(wpr)) {
            ext_bits.extend_from_slice(b);
            ext_bits.extend_from_slice(b);
            ext_mask.extend_from_slice(m);
            ext_mask.extend_from_slice(m);
        }
        PreparedCode {
            code: code.clone(),
            ext_bits,
            ext_mask,
        }
    }

    pub fn code(&self) -> &IrisCode {
        &self.code
    }
}

/// Rows whose length is a multiple of 64 bits: a rotation by `k` bits reads
/// two overlapping windows of the doubled row and funnel-shifts them.
#[inline(always)]
fn aligned_fixed<const W: usize>(
    a_bits: &[u64],
    a_mask: &[u64],
    eb: &[u64],
    em: &[u64],
    k: usize,
) -> (u64, u64) {
    let q = k / 64;
    let r = (k % 64) as u32;
    let arr = |s: &[u64], at: usize| -> [u64; W] { <[u64; W]>::try_from(&s[at..at + W]).unwrap() };
    let (mut d, mut v) = (0u64, 0u64);
    for row in 0..a_bits.len() / W {
        let base = row * 2 * W + W - q;
        let (aw, am) = (arr(a_bits, row * W), arr(a_mask, row * W));
        let (hb, hm) = (arr(eb, base), arr(em, base));
        if r == 0 {
            for j in 0..W {
                let jm = am[j] & hm[j];
                d += ((aw[j] ^ hb[j]) & jm).count_ones() as u64;
                v += jm.count_ones() as u64;
            }
        } else {
            // r > 0 leaves base >= 1 even when q = 0.
            let (lb, lm) = (arr(eb, base - 1), arr(em, base - 1));
            for j in 0..W {
                let bw = (hb[j] << r) | (lb[j] >> (64 - r));
                let mw = (hm[j] << r) | (lm[j] >> (64 - r));
                let jm = am[j] & mw;
                d += ((aw[j] ^ bw) & jm).count_ones() as u64;
                v += jm.count_ones() as u64;
            }
        }
    }
    (d, v)
}

fn aligned_dynamic(
    a_bits: &[u64],
    a_mask: &[u64],
    eb: &[u64],
    em: &[u64],
    wpr: usize,
    k: usize,
) -> (u64, u64) {
    let q = k / 64;
    let r = (k % 64) as u32;
    let (mut d, mut v) = (0u64, 0u64);
    for row in 0..a_bits.len() / wpr {
        let base = row * 2 * wpr + wpr - q;
        for j in 0..wpr {
            let (bw, mw) = if r == 0 {
                (eb[base + j], em[base + j])
            } else {
                (
                    (eb[base + j] << r) | (eb[base + j - 1] >> (64 - r)),
                    (em[base + j] << r) | (em[base + j - 1] >> (64 - r)),
                )
            };
            let jm = a_mask[row * wpr + j] & mw;
            d += ((a_bits[row * wpr + j] ^ bw) & jm).count_ones() as u64;
            v += jm.count_ones() as u64;
        }
    }
    (d, v)
}

/// Word-aligned rows, every bit offset in `ks`, results into `out`.
#[inline(always)]
fn aligned_all(
    a: &[u64],
    am: &[u64],
    eb: &[u64],
    em: &[u64],
    wpr: usize,
    ks: &[usize],
    out: &mut [(u64, u64)],
) {
    for (k, o) in ks.iter().zip(out.iter_mut()) {
        *o = match wpr {
            1 => aligned_fixed::<1>(a, am, eb, em, *k),
            2 => aligned_fixed::<2>(a, am, eb, em, *k),
            4 => aligned_fixed::<4>(a, am, eb, em, *k),
            8 => aligned_fixed::<8>(a, am, eb, em, *k),
            _ => aligned_dynamic(a, am, eb, em, wpr, *k),
        };
    }
}

#[cfg(target_arch = "x86_64")]
mod simd {
    use std::arch::x86_64::*;

    /// AVX-512 kernel over 8-word row chunks; requires `wpr % 8 == 0`.
    #[target_feature(enable = "avx512f,avx512vpopcntdq")]
    pub(super) fn all_avx512(
        a: &[u64],
        am: &[u64],
        eb: &[u64],
        em: &[u64],
        wpr: usize,
        ks: &[usize],
        out: &mut [(u64, u64)],
    ) {
        assert!(wpr % 8 == 0 && a.len() % wpr == 0 && am.len() == a.len());
        assert!(eb.len() == 2 * a.len() && em.len() == eb.len());
        assert!(ks.iter().all(|&k| k < 64 * wpr) && out.len() >= ks.len());
        let rows = a.len() / wpr;
        for (&k, o) in ks.iter().zip(out.iter_mut()) {
            let q = k / 64;
            let r = (k % 64) as i64;
            // SAFETY: loads read 8 words at row*wpr + c (c + 8 <= wpr) from a/am and at
            // row*2*wpr + wpr - q + c - {0, 1} from eb/em; q < wpr keeps both inside the
            // asserted lengths, and the `- 1` load only happens when r > 0.
            unsafe {
                let sl = _mm_cvtsi64_si128(r);
                let sr = _mm_cvtsi64_si128(64 - r);
                let mut dacc = _mm512_setzero_si512();
                let mut vacc = _mm512_setzero_si512();
                for row in 0..rows {
                    let base = row * 2 * wpr + wpr - q;
                    for c in (0..wpr).step_by(8) {
                        let aw = _mm512_loadu_si512(a.as_ptr().add(row * wpr + c) as *const _);
                        let ma = _mm512_loadu_si512(am.as_ptr().add(row * wpr + c) as *const _);
                        let hb = _mm512_loadu_si512(eb.as_ptr().add(base + c) as *const _);
                        let hm = _mm512_loadu_si512(em.as_ptr().add(base + c) as *const _);
                        let (bw, mb) = if r == 0 {
                            (hb, hm)
                        } else {
                            let lb = _mm512_loadu_si512(eb.as_ptr().add(base + c - 1) as *const _);
                            let lm = _mm512_loadu_si512(em.as_ptr().add(base + c - 1) as *const _);
                            (
                                _mm512_or_si512(_mm512_sll_epi64(hb, sl), _mm512_srl_epi64(lb, sr)),
                                _mm512_or_si512(_mm512_sll_epi64(hm, sl), _mm512_srl_epi64(lm, sr)),
                            )
                        };
                        let jm = _mm512_and_si512(ma, mb);
                        let diff = _mm512_and_si512(_mm512_xor_si512(aw, bw), jm);
                        dacc = _mm512_add_epi64(dacc, _mm512_popcnt_epi64(diff));
                        vacc = _mm512_add_epi64(vacc, _mm512_popcnt_epi64(jm));
                    }
                }
                *o = (
                    _mm512_reduce_add_epi64(dacc) as u64,
                    _mm512_reduce_add_epi64(vacc) as u64,
                );
            }
        }
    }

    #[target_feature(enable = "popcnt")]
    pub(super) fn all_popcnt(
        a: &[u64],
        am: &[u64],
        eb: &[u64],
        em: &[u64],
        wpr: usize,
        ks: &[usize],
        out: &mut [(u64, u64)],
    ) {
        super::aligned_all(a, am, eb, em, wpr, ks, out)
    }

    #[derive(Clone, Copy, PartialEq, Eq)]
    pub(super) enum Level {
        Avx512,
        Popcnt,
        Portable,
    }

    pub(super) fn level() -> Level {
        static LEVEL: std::sync::OnceLock<Level> = std::sync::OnceLock::new();
        *LEVEL.get_or_init(|| {
            if is_x86_feature_detected!("avx512f") && is_x86_feature_detected!("avx512vpopcntdq") {
                Level::Avx512
            } else if is_x86_feature_detected!("popcnt") {
                Level::Popcnt
            } else {
                Level::Portable
            }
        })
    }
}

fn aligned_counts(a: &IrisCode, b: &PreparedCode, ks: &[usize], out: &mut [(u64, u64)]) {
    let wpr = a.layout.words_per_row();
    let (aw, am, eb, em) = (a.words(), a.mask_words(), &b.ext_bits[..], &b.ext_mask[..]);
    #[cfg(target_arch = "x86_64")]
    {
        use simd::Level;
        // SAFETY: each kernel runs only when `level()` detected the features it enables.
        unsafe {
            match simd::level() {
                Level::Avx512 if wpr % 8 == 0 => {
                    return simd::all_avx512(aw, am, eb, em, wpr, ks, out)
                }
                Level::Avx512 | Level::Popcnt => {
                    return simd::all_popcnt(aw, am, eb, em, wpr, ks, out)
                }
                Level::Portable => {}
            }
        }
    }
    aligned_all(aw, am, eb, em, wpr, ks, out)
}

fn counts_single_word(a: &IrisCode, b: &PreparedCode, k: usize, n: usize) -> (u64, u64) {
    let full = if n == 64 { u64::MAX } else { (1u64 << n) - 1 };
    let rot = |x: u64| {
        if k == 0 {
            x
        } else {
            ((x << k) | (x >> (n - k))) & full
        }
    };
    let (mut d, mut v) = (0u64, 0u64);
    for ((aw, am), (bw, bm)) in a
        .words()
        .iter()
        .zip(a.mask_words())
        .zip(b.code.words().iter().zip(b.code.mask_words()))
    {
        let j = am & rot(*bm);
        d += ((aw ^ rot(*bw)) & j).count_ones() as u64;
        v += j.count_ones() as u64;
    }
    (d, v)
}

fn counts_rotated(a: &IrisCode, b: &PreparedCode, shift: i32) -> (u64, u64) {
    let rb = b.code.rotated(shift);
    let (mut d, mut v) = (0u64, 0u64);
    for ((aw, am), (bw, bm)) in a
        .words()
        .iter()
        .zip(a.mask_words())
        .zip(rb.words().iter().zip(rb.mask_words()))
    {
        let j = am & bm;
        d += ((aw ^ bw) & j).count_ones() as u64;
        v += j.count_ones() as u64;
    }
    (d, v)
}

/// Differing and jointly valid bit counts of `a` against `b` rotated by each shift.
fn shifted_counts(a: &IrisCode, b: &PreparedCode, shifts: &[i32], out: &mut [(u64, u64)]) {
    let n = a.layout.row_bits();
    let bpp = a.layout.bits_per_position as i64;
    let bit_offset = |s: i32| (s as i64 * bpp).rem_euclid(n as i64) as usize;
    if n % 64 == 0 {
        let mut ks = [0usize; SHIFT_CHUNK];
        for (k, &s) in ks.iter_mut().zip(shifts) {
            *k = bit_offset(s);
        }
        aligned_counts(a, b, &ks[..shifts.len()], out);
    } else {
        for (o, &s) in out.iter_mut().zip(shifts) {
            *o = if n < 64 {
                counts_single_word(a, b, bit_offset(s), n)
            } else {
                counts_rotated(a, b, s)
            };
        }
    }
}

const SHIFT_CHUNK: usize = 32;

/// Shift search order: 0, -1, +1, -2, +2, ... so the first strict minimum
/// honors the tie rule (smallest magnitude, negative first).
fn shift_order(max_shift: u32) -> impl Iterator<Item = i32> {
    std::iter::once(0).chain((1..=max_shift as i32).flat_map(|s| [-s, s]))
}

/// Matches `a` against a prepared reference.
pub fn match_prepared<T: Scalar>(
    a: &IrisCode,
    b: &PreparedCode,
    cfg: &MatcherConfig,
) -> Result<MatchScore<T>> {
    if a.kind != b.code.kind || a.layout != b.code.layout {
        return Err(Error::LayoutMismatch);
    }
    let floor = cfg.min_valid_fraction * a.n_bits() as f64;
    let mut best: Option<(u64, u64, i32)> = None;
    let mut order = shift_order(cfg.max_shift).peekable();
    let mut shifts = [0i32; SHIFT_CHUNK];
    let mut counts = [(0u64, 0u64); SHIFT_CHUNK];
    while order.peek().is_some() {
        let mut len = 0;
        for (slot, s) in shifts.iter_mut().zip(order.by_ref()) {
            *slot = s;
            len += 1;
        }
        shifted_counts(a, b, &shifts[..len], &mut counts[..len]);
        for (&s, &(d, v)) in shifts[..len].iter().zip(&counts[..len]) {
            if v == 0 || (v as f64) < floor {
                continue;
            }
            // d / v < bd / bv, compared exactly.
            let better = match best {
                None => true,
                Some((bd, bv, _)) => (d as u128) * (bv as u128) < (bd as u128) * (v as u128),
            };
            if better {
                best = Some((d, v, s));
            }
        }
    }
    let (d, v, s) = best.ok_or(Error::InsufficientOverlap)?;
    Ok(MatchScore {
        similarity: T::one() - T::lit(d as f64) / T::lit(v as f64),
        best_shift: s,
        valid_bits: v as u32,
    })
}

/// Rotation-compensated masked fractional Hamming similarity.
pub fn hamming_match<T: Scalar>(
    a: &IrisCode,
    b: &IrisCode,
    cfg: &MatcherConfig,
) -> Result<MatchScore<T>> {
    if a.kind != b.kind || a.layout != b.layout {
        return Err(Error::LayoutMismatch);
    }
    match_prepared(a, &PreparedCode::new(b), cfg)
}

/// Cosine similarity of two unit embeddings.
pub fn cosine_match<T: Scalar>(a: &Embedding<T>, b: &Embedding<T>) -> Result<MatchScore<T>> {
    if a.dims() != b.dims() {
        return Err(Error::DimMismatch {
            expected: a.dims(),
            found: b.dims(),
        });
    }
    let dot = a
        .values()
        .iter()
        .zip(b.values())
        .map(|(&x, &y)| x * y)
        .sum::<T>();
    Ok(MatchScore {
        similarity: dot.max(-T::one()).min(T::one()),
        best_shift: 0,
        valid_bits: a.dims() as u32,
    })
}

/// Score of one pair; `right` is present for dual-eye pairs.
#[derive(Clone, Debug, PartialEq)]
pub struct PairScore<T> {
    pub probe: SampleRef,
    pub reference: SampleRef,
    pub genuine: bool,
    pub left: MatchScore<T>,
    pub right: Option<MatchScore<T>>,
}

/// Similarity recorded for pairs that cannot be matched; the global minimum
/// of the template kind, so such pairs always count as rejections.
pub fn failure_score<T: Scalar>(template: &Template) -> MatchScore<T> {
    let similarity = match template {
        Template::Code(_) => T::zero(),
        Template::Embedding(_) => -T::one(),
    };
    MatchScore {
        similarity,
        best_shift: 0,
        valid_bits: 0,
    }
}

enum Prepared<'a> {
    Code(PreparedCode),
    Embedding(&'a Embedding<f64>),
}

fn compare<T: Scalar>(
    probe: &Template,
    reference: &Prepared<'_>,
    cfg: &MatcherConfig,
) -> Result<MatchScore<T>> {
    match (probe, reference) {
        (Template::Code(a), Prepared::Code(b)) => match match_prepared(a, b, cfg) {
            Err(Error::InsufficientOverlap) => Ok(failure_score(probe)),
            other => other,
        },
        (Template::Embedding(a), Prepared::Embedding(b)) => {
            let s = cosine_match(a, b)?;
            Ok(MatchScore {
                similarity: T::lit(s.similarity),
                best_shift: 0,
                valid_bits: s.valid_bits,
            })
        }
        _ => Err(Error::MixedKinds),
    }
}

/// Scores every pair in order. Output is independent of the size of the
/// rayon pool the call runs in.
pub fn match_pairs<T: Scalar>(
    pairs: &[Pair],
    templates: &TemplateMap,
    cfg: &MatcherConfig,
) -> Result<Vec<PairScore<T>>> {
    let lookup = |id: &str| {
        templates
            .get(id)
            .ok_or_else(|| Error::MissingTemplate(id.to_string()))
    };
    for p in pairs {
        for id in p.probe.ids().chain(p.reference.ids()) {
            lookup(id)?;
        }
    }
    let mut reference_ids: Vec<&str> = pairs.iter().flat_map(|p| p.reference.ids()).collect();
    reference_ids.sort_unstable();
    reference_ids.dedup();
    let prepared: HashMap<&str, Prepared<'_>> = reference_ids
        .par_iter()
        .map(|&id| {
            let p = match &templates[id] {
                Template::Code(c) => Prepared::Code(PreparedCode::new(c)),
                Template::Embedding(e) => Prepared::Embedding(e),
            };
            (id, p)
        })
        .collect();
    pairs
        .par_iter()
        .map(|p| {
            let left = compare(
                &templates[p.probe.id.as_str()],
                &prepared[p.reference.id.as_str()],
                cfg,
            )?;
            let right = match (&p.probe.id_r, &p.reference.id_r) {
                (Some(a), Some(b)) => {
                    Some(compare(&templates[a.as_str()], &prepared[b.as_str()], cfg)?)
                }
                (None, None) => None,
                _ => {
                    return Err(Error::InvalidSpec(
                        "pair mixes single and dual sides".into(),
                    ))
                }
            };
            Ok(PairScore {
                probe: p.probe.clone(),
                reference: p.reference.clone(),
                genuine: p.genuine,
                left,
                right,
            })
        })
        .collect()
}
