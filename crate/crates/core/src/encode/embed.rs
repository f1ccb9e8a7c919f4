//! Deterministic reference extractor for the normalization-free pipeline.
//!
//! It stands in for a trained network: area-average the input to a 16×16
//! grid, remove the mean and scale to unit length.

use image::GrayImage;

use crate::datamodel::Embedding;
use crate::scalar::Scalar;

pub const EMBED_GRID: usize = 16;
pub const EMBED_DIMS: usize = EMBED_GRID * EMBED_GRID;

/// Area-weighted downsample of a `w`×`h` 8-bit image to `n`×`n` cells.
fn area_average<T: Scalar>(img: &GrayImage, n: usize) -> Vec<T> {
    let (w, h) = img.dimensions();
    let (w, h) = (w as usize, h as usize);
    // Coverage of source pixel `p` by cell `c` along one axis.
    let coverage = |len: usize| -> Vec<Vec<(usize, T)>> {
        let step = len as f64 / n as f64;
        (0..n)
            .map(|c| {
                let (lo, hi) = (c as f64 * step, (c + 1) as f64 * step);
                (lo.floor() as usize..(hi.ceil() as usize).min(len))
                    .filter_map(|p| {
                        let overlap = (hi.min(p as f64 + 1.0) - lo.max(p as f64)).max(0.0);
                        (overlap > 0.0).then_some((p, T::lit(overlap)))
                    })
                    .collect()
            })
            .collect()
    };
    let cols = coverage(w);
    let rows = coverage(h);
    let raw = img.as_raw();
    let mut out = Vec::with_capacity(n * n);
    for row_cov in &rows {
        for col_cov in &cols {
            let mut sum = T::zero();
            let mut area = T::zero();
            for &(y, wy) in row_cov {
                for &(x, wx) in col_cov {
                    let wgt = wy * wx;
                    sum = sum + wgt * T::lit(raw[y * w + x] as f64);
                    area = area + wgt;
                }
            }
            out.push(sum / area);
        }
    }
    out
}

/// 256-dimensional unit embedding of a single-channel image. Constant images
/// map to the first basis vector.
pub fn reference_embed<T: Scalar>(img: &GrayImage) -> Embedding<T> {
    let cells = area_average::<T>(img, EMBED_GRID);
    let mean = cells.iter().copied().sum::<T>() / T::lit(cells.len() as f64);
    let centered: Vec<T> = cells.iter().map(|&v| v - mean).collect();
    let spread = centered.iter().fold(T::zero(), |m, v| m.max(v.abs()));
    if spread <= T::lit(1e-9) * (T::one() + mean.abs()) {
        return Embedding::basis(EMBED_DIMS, 0);
    }
    Embedding::normalized(centered).unwrap_or_else(|| Embedding::basis(EMBED_DIMS, 0))
}
