//! Gabor-phase iriscode: two phase bits per wavelength at every grid position.

use super::band::{row_bands, Band};
use crate::datamodel::{CodeKind, CodeLayout, IrisCode};
use crate::error::{Error, Result};
use crate::preprocess::{NormalizedIris, NORM_COLS, NORM_ROWS};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub struct GaborConfig<T> {
    pub input_rows: usize,
    pub input_cols: usize,
    pub grid_rows: usize,
    pub grid_cols: usize,
    /// Carrier wavelengths along the angular axis, in texels.
    pub wavelengths: Vec<T>,
    /// Envelope sigma as a fraction of the wavelength.
    pub sigma_ratio: T,
    /// Kernel half-width in sigmas.
    pub support_sigmas: T,
    /// Minimum valid fraction of a filter's support for its bits to count.
    pub min_valid_fraction: T,
}

impl<T: Scalar> Default for GaborConfig<T> {
    fn default() -> Self {
        GaborConfig {
            input_rows: NORM_ROWS,
            input_cols: NORM_COLS,
            grid_rows: 8,
            grid_cols: 128,
            wavelengths: vec![T::lit(18.0), T::lit(36.0)],
            sigma_ratio: T::lit(0.5),
            support_sigmas: T::lit(3.0),
            min_valid_fraction: T::lit(0.7),
        }
    }
}

impl<T: Scalar> GaborConfig<T> {
    pub fn layout(&self) -> CodeLayout {
        CodeLayout::new(
            self.grid_rows as u32,
            self.grid_cols as u32,
            2 * self.wavelengths.len() as u32,
        )
    }
}

/// Complex kernel sampled at integer offsets `-half..=half`; the real part is made zero-mean.
pub(crate) struct GaborKernel<T> {
    pub half: isize,
    pub re: Vec<T>,
    pub im: Vec<T>,
}

impl<T: Scalar> GaborKernel<T> {
    pub fn new(wavelength: T, sigma_ratio: T, support_sigmas: T) -> Self {
        let sigma = wavelength * sigma_ratio;
        let half = (support_sigmas * sigma)
            .ceil()
            .to_isize()
            .unwrap_or(1)
            .max(1);
        let two_pi = T::lit(2.0) * T::PI();
        let mut env = Vec::new();
        let mut re = Vec::new();
        let mut im = Vec::new();
        for t in -half..=half {
            let tf = T::lit(t as f64);
            let e = (-(tf * tf) / (T::lit(2.0) * sigma * sigma)).exp();
            let (s, c) = (two_pi * tf / wavelength).sin_cos();
            env.push(e);
            re.push(e * c);
            im.push(e * s);
        }
        let dc = re.iter().copied().sum::<T>() / env.iter().copied().sum::<T>();
        for (r, e) in re.iter_mut().zip(&env) {
            *r = *r - dc * *e;
        }
        GaborKernel { half, re, im }
    }

    /// Masked response at `center` and the valid fraction of the support.
    #[inline]
    pub fn respond(&self, band: &Band<T>, center: isize) -> (T, T, T) {
        let mut re = T::zero();
        let mut im = T::zero();
        let mut valid = T::zero();
        for (k, t) in (-self.half..=self.half).enumerate() {
            let (v, w) = band.at(center + t);
            let vw = v * w;
            re = re + self.re[k] * vw;
            im = im + self.im[k] * vw;
            valid = valid + w;
        }
        (re, im, valid / T::lit(self.re.len() as f64))
    }
}

/// Encodes the normalized iris. Bit order per position: for each wavelength,
/// `[Re >= 0, Im >= 0]`; both share the wavelength's support validity.
pub fn gabor_encode<T: Scalar>(norm: &NormalizedIris<T>, cfg: &GaborConfig<T>) -> Result<IrisCode> {
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
    let layout = cfg.layout();
    let mut code = IrisCode::zeroed(CodeKind::Gabor, layout);
    let kernels: Vec<_> = cfg
        .wavelengths
        .iter()
        .map(|&w| GaborKernel::new(w, cfg.sigma_ratio, cfg.support_sigmas))
        .collect();
    let stride = cfg.input_cols / cfg.grid_cols;
    for (r, band) in row_bands(norm, cfg.grid_rows).iter().enumerate() {
        for c in 0..cfg.grid_cols {
            let center = (c * stride + stride / 2) as isize;
            for (k, kernel) in kernels.iter().enumerate() {
                let (re, im, valid) = kernel.respond(band, center);
                let ok = valid >= cfg.min_valid_fraction;
                code.set(layout.index(r, c, 2 * k), re >= T::zero(), ok);
                code.set(layout.index(r, c, 2 * k + 1), im >= T::zero(), ok);
            }
        }
    }
    Ok(code)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datamodel::BitMask;
    use crate::raster::Raster;

    fn textured(shift: usize, offset: f64) -> NormalizedIris<f64> {
        let texture = Raster::from_fn(512, 64, |x, y| {
            let x = (x + 512 - shift) % 512;
            let a = 2.0 * std::f64::consts::PI * x as f64 / 512.0;
            let r = y as f64 / 64.0;
            offset
                + 0.3
                + 0.1 * (17.0 * a + 5.0 * r).sin()
                + 0.08 * (23.0 * a - 3.0 * r + 1.0).cos()
                + 0.05 * (9.0 * a + 11.0 * r).sin()
        });
        let mut validity = BitMask::new(512, 64);
        validity.data.fill(1);
        NormalizedIris { texture, validity }
    }

    #[test]
    fn code_length() {
        let code = gabor_encode(&textured(0, 0.0), &GaborConfig::default()).unwrap();
        assert_eq!(code.n_bits(), 4096);
        assert_eq!(code.layout, CodeLayout::new(8, 128, 4));
        assert_eq!(code.count_valid(), 4096);
    }

    #[test]
    fn invalid_input_masks_everything() {
        let mut n = textured(0, 0.0);
        n.validity.data.fill(0);
        let code = gabor_encode(&n, &GaborConfig::default()).unwrap();
        assert_eq!(code.count_valid(), 0);
    }

    #[test]
    fn one_grid_column_shift_rotates_code() {
        let cfg = GaborConfig::default();
        let base = gabor_encode(&textured(0, 0.0), &cfg).unwrap();
        let shifted = gabor_encode(&textured(4, 0.0), &cfg).unwrap();
        assert_eq!(shifted, base.rotated(1));
    }

    #[test]
    fn brightness_offset_barely_flips_bits() {
        let cfg = GaborConfig::default();
        let a = gabor_encode(&textured(0, 0.0), &cfg).unwrap();
        let b = gabor_encode(&textured(0, 0.2), &cfg).unwrap();
        let flips = (0..4096).filter(|&i| a.bit(i) != b.bit(i)).count();
        assert!(flips < 41, "{flips} flips");
    }

    #[test]
    fn wrong_shape() {
        let n = NormalizedIris {
            texture: Raster::<f64>::new(256, 64),
            validity: BitMask::new(256, 64),
        };
        assert!(matches!(
            gabor_encode(&n, &GaborConfig::default()),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn kernel_real_part_is_zero_mean() {
        let k = GaborKernel::new(18.0f64, 0.5, 3.0);
        assert_eq!(k.half, 27);
        assert!(k.re.iter().sum::<f64>().abs() < 1e-12);
        assert!(k.im.iter().sum::<f64>().abs() < 1e-12);
    }
}
