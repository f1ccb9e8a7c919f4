use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::geometry::{BBox, Ellipse};
use super::mask::Mask;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Eye {
    L,
    R,
}

impl Eye {
    pub const BOTH: [Eye; 2] = [Eye::L, Eye::R];

    pub fn as_str(self) -> &'static str {
        match self {
            Eye::L => "L",
            Eye::R => "R",
        }
    }
}

impl fmt::Display for Eye {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Eye {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "L" | "l" | "left" => Ok(Eye::L),
            "R" | "r" | "right" => Ok(Eye::R),
            _ => Err(format!("unknown eye {s:?}")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Standard,
    Challenging,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// Ground-truth or detector geometry for one capture.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub ocular_bbox: BBox<f64>,
    pub iris_bbox: BBox<f64>,
    pub iris_ellipse: Ellipse<f64>,
    pub pupil_ellipse: Ellipse<f64>,
    /// Pixels hidden by eyelids or eyelashes.
    pub occlusion_mask: Mask,
    /// Eyelash subset of `occlusion_mask`.
    pub eyelash_mask: Mask,
    /// Specular saturation.
    pub reflection_mask: Mask,
}

impl Annotation {
    /// Geometry and mask-consistency checks; the field name of the first failure is returned.
    pub fn check(&self) -> std::result::Result<(), &'static str> {
        if !self.ocular_bbox.is_valid() {
            return Err("annotation.ocular_bbox");
        }
        if !self.iris_bbox.is_valid() {
            return Err("annotation.iris_bbox");
        }
        if !self.iris_ellipse.is_valid() {
            return Err("annotation.iris_ellipse");
        }
        if !self.pupil_ellipse.is_valid() {
            return Err("annotation.pupil_ellipse");
        }
        if !self.iris_ellipse.encloses(&self.pupil_ellipse) {
            return Err("annotation.pupil_ellipse (not inside iris)");
        }
        let dims = [
            self.occlusion_mask.dims(),
            self.eyelash_mask.dims(),
            self.reflection_mask.dims(),
        ];
        let known: Vec<_> = dims.iter().flatten().collect();
        if known.windows(2).any(|w| w[0] != w[1]) {
            return Err("annotation masks (dimension mismatch)");
        }
        Ok(())
    }
}

/// Five quality dimensions, each in `[0, 1]`, higher = more challenging.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QualityScores {
    pub eyelid_occ: f64,
    pub eyelash_occ: f64,
    pub pupil_ratio: f64,
    pub gaze_dev: f64,
    pub reflection: f64,
}

impl QualityScores {
    pub fn as_array(&self) -> [f64; 5] {
        [
            self.eyelid_occ,
            self.eyelash_occ,
            self.pupil_ratio,
            self.gaze_dev,
            self.reflection,
        ]
    }

    pub fn is_valid(&self) -> bool {
        self.as_array().iter().all(|v| (0.0..=1.0).contains(v))
    }
}

/// One ocular capture. The recognition class is `(subject_id, eye)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub sample_id: String,
    pub subject_id: String,
    pub eye: Eye,
    pub gaze_point: u8,
    pub brightness_level: u8,
    pub frame_idx: u8,
    pub image_ref: String,
    pub annotation: Option<Annotation>,
    pub quality: Option<QualityScores>,
    pub category: Option<Category>,
    pub split: Option<Split>,
}

/// Class label: the two eyes of a subject are distinct classes.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ClassLabel {
    pub subject_id: String,
    pub eye: Eye,
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}_{}", self.subject_id, self.eye)
    }
}

impl SampleRecord {
    pub fn class_label(&self) -> ClassLabel {
        ClassLabel {
            subject_id: self.subject_id.clone(),
            eye: self.eye,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let id = &self.sample_id;
        if self.sample_id.is_empty() {
            return Err(Error::invariant(id, "sample_id"));
        }
        if !(1..=9).contains(&self.gaze_point) {
            return Err(Error::invariant(id, "gaze_point"));
        }
        if self.brightness_level > 10 {
            return Err(Error::invariant(id, "brightness_level"));
        }
        if self.frame_idx > 4 {
            return Err(Error::invariant(id, "frame_idx"));
        }
        if let Some(a) = &self.annotation {
            a.check().map_err(|f| Error::invariant(id, f))?;
        }
        if let Some(q) = &self.quality {
            if !q.is_valid() {
                return Err(Error::invariant(id, "quality"));
            }
        }
        Ok(())
    }
}
