//! Record-level extraction: pixels plus annotation in, template out.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use image::GrayImage;
use rayon::prelude::*;

use super::{gabor_encode, ordinal_encode, reference_embed, GaborConfig, OrdinalConfig};
use crate::datamodel::{Annotation, BBox, BitMask, SampleRecord, Template, TemplateMap};
use crate::error::{Error, Result};
use crate::preprocess::{
    bbox_crop, crop_window, normalized_to_input, rubber_sheet, CropConfig, NormalizedIris,
};
use crate::scalar::Scalar;
use crate::synthgen::load_image_region;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Method {
    Gabor,
    Ordinal,
    /// Reference embedding of the square iris crop (normalization-free).
    IrBBox,
    /// Reference embedding of the unwrapped iris.
    IrNorm,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::Gabor,
        Method::Ordinal,
        Method::IrBBox,
        Method::IrNorm,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Gabor => "gabor",
            Method::Ordinal => "ordinal",
            Method::IrBBox => "ir-bbox",
            Method::IrNorm => "ir-norm",
        }
    }

    pub fn needs_normalization(self) -> bool {
        self != Method::IrBBox
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown method {s:?} (gabor, ordinal, ir-bbox, ir-norm)"))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExtractConfig<T> {
    pub gabor: GaborConfig<T>,
    pub ordinal: OrdinalConfig<T>,
    pub crop: CropConfig<T>,
}

impl<T: Scalar> Default for ExtractConfig<T> {
    fn default() -> Self {
        ExtractConfig {
            gabor: GaborConfig::default(),
            ordinal: OrdinalConfig::default(),
            crop: CropConfig::default(),
        }
    }
}

/// Eyelid/eyelash occlusion together with specular reflections: everything
/// that hides iris texture.
pub fn noise_mask(ann: &Annotation, base: &Path) -> Result<BitMask> {
    let mut m = ann.occlusion_mask.to_bits(base)?;
    m.union_with(&ann.reflection_mask.to_bits(base)?);
    Ok(m)
}

pub fn normalize<T: Scalar>(
    image: &GrayImage,
    ann: &Annotation,
    base: &Path,
    rows: usize,
    cols: usize,
) -> Result<NormalizedIris<T>> {
    let mask = noise_mask(ann, base)?;
    rubber_sheet(
        image,
        &ann.pupil_ellipse.cast::<T>(),
        &ann.iris_ellipse.cast::<T>(),
        Some(&mask),
        rows,
        cols,
    )
}

/// Template of one capture. `base` resolves external mask files.
pub fn extract<T: Scalar>(
    method: Method,
    image: &GrayImage,
    ann: &Annotation,
    base: &Path,
    cfg: &ExtractConfig<T>,
) -> Result<Template> {
    let (rows, cols) = (cfg.gabor.input_rows, cfg.gabor.input_cols);
    Ok(match method {
        Method::Gabor => Template::Code(gabor_encode(
            &normalize::<T>(image, ann, base, rows, cols)?,
            &cfg.gabor,
        )?),
        Method::Ordinal => {
            let (rows, cols) = (cfg.ordinal.input_rows, cfg.ordinal.input_cols);
            Template::Code(ordinal_encode(
                &normalize::<T>(image, ann, base, rows, cols)?,
                &cfg.ordinal,
            )?)
        }
        Method::IrBBox => {
            let bbox = ann.iris_bbox;
            let bbox = crate::datamodel::BBox::new(
                T::lit(bbox.x),
                T::lit(bbox.y),
                T::lit(bbox.w),
                T::lit(bbox.h),
            );
            let crop = bbox_crop(image, &bbox, &cfg.crop)?;
            Template::Embedding(reference_embed::<T>(&crop).cast())
        }
        Method::IrNorm => {
            let norm = normalize::<T>(image, ann, base, rows, cols)?;
            Template::Embedding(
                reference_embed::<T>(&normalized_to_input(&norm, cfg.crop.out_size)).cast(),
            )
        }
    })
}

/// Pixels `method` can read, with a two-pixel margin for interpolation.
pub fn support<T: Scalar>(method: Method, ann: &Annotation, cfg: &ExtractConfig<T>) -> BBox<f64> {
    let b = ann.iris_bbox;
    let (x, y, w, h) = match method {
        Method::IrBBox => {
            let (x0, y0, side) = crop_window(&b, cfg.crop.expand_factor.as_f64());
            (x0, y0, side, side)
        }
        _ => (b.x, b.y, b.w, b.h),
    };
    BBox::new(x - 2.0, y - 2.0, w + 4.0, h + 4.0)
}

/// Template of an annotated record; `base` resolves image and mask paths.
pub fn extract_record<T: Scalar>(
    method: Method,
    record: &SampleRecord,
    base: &Path,
    cfg: &ExtractConfig<T>,
) -> Result<Template> {
    let ann = record
        .annotation
        .as_ref()
        .ok_or_else(|| Error::MissingAnnotation(record.sample_id.clone()))?;
    let image = load_image_region(record, base, Some(&support(method, ann, cfg)))?;
    extract(method, &image, ann, base, cfg)
}

/// Templates of all records, keyed by sample id (parallel).
pub fn extract_records<T: Scalar>(
    method: Method,
    records: &[SampleRecord],
    base: &Path,
    cfg: &ExtractConfig<T>,
) -> Result<TemplateMap> {
    records
        .par_iter()
        .map(|r| Ok((r.sample_id.clone(), extract_record(method, r, base, cfg)?)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.as_str().parse::<Method>(), Ok(m));
        }
        assert!("daugman".parse::<Method>().is_err());
        assert!(!Method::IrBBox.needs_normalization());
    }

    #[test]
    fn region_rendering_does_not_change_templates() {
        use crate::synthgen::{generate_session, load_image, SubjectModel};
        let s = SubjectModel::from_index(5, 1, 20.0);
        let recs: Vec<_> = generate_session(&s, None)
            .unwrap()
            .into_iter()
            .step_by(97)
            .take(4)
            .collect();
        let base = Path::new(".");
        let cfg = ExtractConfig::<f64>::default();
        for m in Method::ALL {
            for r in &recs {
                let full = load_image(r, base).unwrap();
                let want = extract(m, &full, r.annotation.as_ref().unwrap(), base, &cfg).unwrap();
                assert_eq!(
                    extract_record(m, r, base, &cfg).unwrap(),
                    want,
                    "{m} {}",
                    r.sample_id
                );
            }
        }
    }
}
