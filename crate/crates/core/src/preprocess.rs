//! Front ends: normalization-free square crop of the iris box, and
//! rubber-sheet unwrapping of the iris annulus.

use image::GrayImage;

use crate::datamodel::{BBox, BitMask, Ellipse};
use crate::error::{Error, Result};
use crate::raster::Raster;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CropConfig<T> {
    /// Growth factor of the square window around the iris box, `>= 1`.
    pub expand_factor: T,
    pub out_size: usize,
}

impl<T: Scalar> Default for CropConfig<T> {
    fn default() -> Self {
        CropConfig {
            expand_factor: T::lit(1.2),
            out_size: 112,
        }
    }
}

/// Square window: top-left corner and side, in source pixel units.
pub fn crop_window<T: Scalar>(bbox: &BBox<T>, expand_factor: T) -> (T, T, T) {
    let side = bbox.w.max(bbox.h) * expand_factor;
    let (cx, cy) = bbox.center();
    let half = side * T::lit(0.5);
    (cx - half, cy - half, side)
}

/// Crops the expanded square window around `iris_bbox` and resamples it to
/// `out_size`×`out_size` with bilinear interpolation. Source pixels outside
/// the image read as zero.
pub fn bbox_crop<T: Scalar>(
    image: &GrayImage,
    iris_bbox: &BBox<T>,
    cfg: &CropConfig<T>,
) -> Result<GrayImage> {
    if cfg.out_size == 0 || cfg.expand_factor < T::one() || !iris_bbox.is_valid() {
        return Err(Error::DegenerateGeometry(
            "invalid crop configuration".into(),
        ));
    }
    let (w, h) = image.dimensions();
    if !iris_bbox.overlaps_image(w, h) {
        return Err(Error::NoOverlap);
    }
    let src = Raster::<T>::from_gray(image);
    let (x0, y0, side) = crop_window(iris_bbox, cfg.expand_factor);
    let n = cfg.out_size;
    let scale = side / T::lit(n as f64);
    let half = T::lit(0.5);
    let mut out = Raster::<T>::new(n, n);
    for i in 0..n {
        let sy = y0 + (T::lit(i as f64) + half) * scale - half;
        for j in 0..n {
            let sx = x0 + (T::lit(j as f64) + half) * scale - half;
            out.set(j, i, src.bilinear(sx, sy));
        }
    }
    Ok(out.to_gray())
}

/// Unwrapped iris: `rows`×`cols` texture in `[0, 1]` plus a validity raster.
/// Row 0 touches the pupil, the last row the limbus.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalizedIris<T> {
    pub texture: Raster<T>,
    pub validity: BitMask,
}

impl<T: Scalar> NormalizedIris<T> {
    pub fn rows(&self) -> usize {
        self.texture.height
    }

    pub fn cols(&self) -> usize {
        self.texture.width
    }

    #[inline]
    pub fn is_valid(&self, row: usize, col: usize) -> bool {
        self.validity.get(col as u32, row as u32)
    }
}

pub const NORM_ROWS: usize = 64;
pub const NORM_COLS: usize = 512;

/// Rubber-sheet normalization. Column `c` samples the ray at image angle
/// `2πc/cols`; row `r` sits at fraction `(r + 0.5)/rows` between the pupil
/// and iris boundary points of that ray.
pub fn rubber_sheet<T: Scalar>(
    image: &GrayImage,
    pupil: &Ellipse<T>,
    iris: &Ellipse<T>,
    occlusion: Option<&BitMask>,
    rows: usize,
    cols: usize,
) -> Result<NormalizedIris<T>> {
    if !iris.encloses(pupil) || !pupil.is_valid() || !iris.is_valid() {
        return Err(Error::DegenerateGeometry(
            "pupil is not inside the iris".into(),
        ));
    }
    let (w, h) = image.dimensions();
    if let Some(m) = occlusion {
        if (m.width, m.height) != (w, h) {
            return Err(Error::ShapeMismatch {
                expected: (w as usize, h as usize),
                found: (m.width as usize, m.height as usize),
            });
        }
    }
    let src = Raster::<T>::from_gray(image);
    let mut texture = Raster::<T>::new(cols, rows);
    let mut validity = BitMask::new(cols as u32, rows as u32);
    let inv255 = T::one() / T::lit(255.0);
    let two_pi = T::lit(2.0) * T::PI();
    for c in 0..cols {
        let theta = two_pi * T::lit(c as f64) / T::lit(cols as f64);
        let (ix, iy) = pupil.boundary_point(theta);
        let (ox, oy) = iris.boundary_point(theta);
        for r in 0..rows {
            let t = (T::lit(r as f64) + T::lit(0.5)) / T::lit(rows as f64);
            let x = ix + t * (ox - ix);
            let y = iy + t * (oy - iy);
            if !src.in_bounds(x, y) {
                continue;
            }
            texture.set(c, r, src.bilinear(x, y) * inv255);
            let occluded = occlusion.is_some_and(|m| {
                let px = x.round().to_u32().unwrap_or(0);
                let py = y.round().to_u32().unwrap_or(0);
                m.get(px, py)
            });
            if !occluded {
                validity.set(c as u32, r as u32, true);
            }
        }
    }
    Ok(NormalizedIris { texture, validity })
}

/// Bilinear resize with edge clamping, pixel-center aligned.
pub fn resize_bilinear<T: Scalar>(src: &Raster<T>, out_w: usize, out_h: usize) -> Raster<T> {
    let sx_scale = T::lit(src.width as f64 / out_w as f64);
    let sy_scale = T::lit(src.height as f64 / out_h as f64);
    let half = T::lit(0.5);
    let max_x = T::lit((src.width - 1) as f64);
    let max_y = T::lit((src.height - 1) as f64);
    Raster::from_fn(out_w, out_h, |j, i| {
        let sx = ((T::lit(j as f64) + half) * sx_scale - half)
            .max(T::zero())
            .min(max_x);
        let sy = ((T::lit(i as f64) + half) * sy_scale - half)
            .max(T::zero())
            .min(max_y);
        src.bilinear(sx, sy)
    })
}

/// Normalization-based front end: the unwrapped texture resized to a square
/// 8-bit image of side `out_size`.
pub fn normalized_to_input<T: Scalar>(norm: &NormalizedIris<T>, out_size: usize) -> GrayImage {
    let mut r = resize_bilinear(&norm.texture, out_size, out_size);
    for v in r.data.iter_mut() {
        *v = *v * T::lit(255.0);
    }
    r.to_gray()
}
