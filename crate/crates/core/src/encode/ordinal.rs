//! Ordinal-measure code: signs of zero-sum multi-lobe differential filters.

use super::band::{row_bands, Band};
use crate::datamodel::{CodeKind, CodeLayout, IrisCode};
use crate::error::{Error, Result};
use crate::preprocess::{NormalizedIris, NORM_COLS, NORM_ROWS};
use crate::scalar::Scalar;

/// Lobe coefficients of one ordinal filter, laid out at `lobe_spacing` steps
/// symmetric about the grid center. Coefficients must sum to zero.
#[derive(Clone, Debug, PartialEq)]
pub struct OrdinalFilter {
    pub coefficients: Vec<i32>,
}

impl OrdinalFilter {
    pub fn di_lobe() -> Self {
        OrdinalFilter {
            coefficients: vec![1, -1],
        }
    }

    pub fn tri_lobe() -> Self {
        OrdinalFilter {
            coefficients: vec![1, -2, 1],
        }
    }

    /// Lobe center offsets relative to the grid center.
    pub fn offsets<T: Scalar>(&self, spacing: T) -> Vec<T> {
        let n = self.coefficients.len();
        let mid = T::lit((n as f64 - 1.0) / 2.0);
        (0..n).map(|i| (T::lit(i as f64) - mid) * spacing).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OrdinalConfig<T> {
    pub input_rows: usize,
    pub input_cols: usize,
    pub grid_rows: usize,
    pub grid_cols: usize,
    pub filters: Vec<OrdinalFilter>,
    pub lobe_spacing: T,
    pub lobe_sigma: T,
    pub support_sigmas: T,
    pub min_valid_fraction: T,
}

impl<T: Scalar> Default for OrdinalConfig<T> {
    fn default() -> Self {
        OrdinalConfig {
            input_rows: NORM_ROWS,
            input_cols: NORM_COLS,
            grid_rows: 8,
            grid_cols: 128,
            filters: vec![OrdinalFilter::di_lobe(), OrdinalFilter::tri_lobe()],
            lobe_spacing: T::lit(12.0),
            lobe_sigma: T::lit(4.0),
            support_sigmas: T::lit(3.0),
            min_valid_fraction: T::lit(0.7),
        }
    }
}

impl<T: Scalar> OrdinalConfig<T> {
    pub fn layout(&self) -> CodeLayout {
        CodeLayout::new(
            self.grid_rows as u32,
            self.grid_cols as u32,
            self.filters.len() as u32,
        )
    }
}

/// Gaussian lobe weights over integer offsets `-half..=half`.
pub(crate) fn lobe_weights<T: Scalar>(sigma: T, support_sigmas: T) -> (isize, Vec<T>) {
    let half = (support_sigmas * sigma)
        .ceil()
        .to_isize()
        .unwrap_or(1)
        .max(1);
    let w = (-half..=half)
        .map(|t| {
            let tf = T::lit(t as f64);
            (-(tf * tf) / (T::lit(2.0) * sigma * sigma)).exp()
        })
        .collect();
    (half, w)
}

/// Valid-weighted lobe mean and the lobe's valid fraction.
#[inline]
fn lobe_mean<T: Scalar>(band: &Band<T>, center: isize, half: isize, weights: &[T]) -> (T, T) {
    let mut num = T::zero();
    let mut den = T::zero();
    let mut valid = T::zero();
    for (k, t) in (-half..=half).enumerate() {
        let (v, w) = band.at(center + t);
        let gw = weights[k] * w;
        num = num + gw * v;
        den = den + gw;
        valid = valid + w;
    }
    let mean = if den > T::zero() {
        num / den
    } else {
        T::zero()
    };
    (mean, valid / T::lit(weights.len() as f64))
}

/// Encodes the normalized iris; bit `k` of a position is `response_k > 0`.
pub fn ordinal_encode<T: Scalar>(
    norm: &NormalizedIris<T>,
    cfg: &OrdinalConfig<T>,
) -> Result<IrisCode> {
    let shape = (norm.rows(), norm.cols());
    let expected = (cfg.input_rows, cfg.input_cols);
    if shape != expected
        || cfg.grid_rows == 0
        || cfg.grid_cols == 0
        || expected.0 % cfg.grid_rows != 0
        || expected.1 % cfg.grid_cols != 0
    {
        return Err(Error::ShapeMismatch {
            expected,
            found: shape,
        });
    }
    debug_assert!(cfg
        .filters
        .iter()
        .all(|f| f.coefficients.iter().sum::<i32>() == 0));
    let layout = cfg.layout();
    let mut code = IrisCode::zeroed(CodeKind::Ordinal, layout);
    let (half, weights) = lobe_weights(cfg.lobe_sigma, cfg.support_sigmas);
    let stride = cfg.input_cols / cfg.grid_cols;
    let offsets: Vec<Vec<isize>> = cfg
        .filters
        .iter()
        .map(|f| {
            f.offsets(cfg.lobe_spacing)
                .into_iter()
                .map(|o| o.round().to_isize().unwrap_or(0))
                .collect()
        })
        .collect();
    for (r, band) in row_bands(norm, cfg.grid_rows).iter().enumerate() {
        for c in 0..cfg.grid_cols {
            let center = (c * stride + stride / 2) as isize;
            for (k, filter) in cfg.filters.iter().enumerate() {
                let mut response = T::zero();
                let mut valid = T::zero();
                for (&coef, &off) in filter.coefficients.iter().zip(&offsets[k]) {
                    let (m, v) = lobe_mean(band, center + off, half, &weights);
                    response = response + T::lit(coef as f64) * m;
                    valid = valid + v;
                }
                valid = valid / T::lit(filter.coefficients.len() as f64);
                code.set(
                    layout.index(r, c, k),
                    response > T::zero(),
                    valid >= cfg.min_valid_fraction,
                );
            }
        }
    }
    Ok(code)
}
