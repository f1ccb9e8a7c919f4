//! Dense single-channel rasters and bilinear sampling.

use std::path::Path;

use image::GrayImage;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub struct Raster<T> {
    pub width: usize,
    pub height: usize,
    pub data: Vec<T>,
}

impl<T: Scalar> Raster<T> {
    pub fn new(width: usize, height: usize) -> Self {
        Raster {
            width,
            height,
            data: vec![T::zero(); width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Raster {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> T {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: T) {
        self.data[y * self.width + x] = v;
    }

    #[inline]
    fn get_or_zero(&self, x: i64, y: i64) -> T {
        if x < 0 || y < 0 || x >= self.width as i64 || y >= self.height as i64 {
            T::zero()
        } else {
            self.data[y as usize * self.width + x as usize]
        }
    }

    /// Whether `(x, y)` lies within the convex hull of pixel centers.
    #[inline]
    pub fn in_bounds(&self, x: T, y: T) -> bool {
        x >= T::zero()
            && y >= T::zero()
            && x <= T::lit((self.width - 1) as f64)
            && y <= T::lit((self.height - 1) as f64)
    }

    /// Bilinear interpolation with pixel centers at integer coordinates;
    /// pixels outside the raster read as zero.
    #[inline]
    pub fn bilinear(&self, x: T, y: T) -> T {
        let xf = x.floor();
        let yf = y.floor();
        let fx = x - xf;
        let fy = y - yf;
        let (Some(x0), Some(y0)) = (xf.to_i64(), yf.to_i64()) else {
            return T::zero();
        };
        let p00 = self.get_or_zero(x0, y0);
        let p10 = self.get_or_zero(x0 + 1, y0);
        let p01 = self.get_or_zero(x0, y0 + 1);
        let p11 = self.get_or_zero(x0 + 1, y0 + 1);
        let one = T::one();
        let top = p00 * (one - fx) + p10 * fx;
        let bottom = p01 * (one - fx) + p11 * fx;
        top * (one - fy) + bottom * fy
    }

    pub fn from_gray(img: &GrayImage) -> Self {
        let (w, h) = img.dimensions();
        Raster {
            width: w as usize,
            height: h as usize,
            data: img.as_raw().iter().map(|&v| T::lit(v as f64)).collect(),
        }
    }

    /// Rounds and clamps to 8 bits.
    pub fn to_gray(&self) -> GrayImage {
        let data = self
            .data
            .iter()
            .map(|v| v.as_f64().round().clamp(0.0, 255.0) as u8)
            .collect();
        GrayImage::from_raw(self.width as u32, self.height as u32, data).expect("raster size")
    }
}

/// Loads an 8-bit grayscale PNG or PGM (any other format is converted to luma).
pub fn load_gray(path: impl AsRef<Path>) -> Result<GrayImage> {
    Ok(image::open(path.as_ref())?.into_luma8())
}

/// Saves as PNG or PGM according to the file extension.
pub fn save_gray(path: impl AsRef<Path>, img: &GrayImage) -> Result<()> {
    let path = path.as_ref();
    match path.extension().and_then(|e| e.to_str()) {
        Some("png") | Some("pgm") => Ok(img.save(path)?),
        _ => Err(Error::ImageRef(path.display().to_string())),
    }
}
