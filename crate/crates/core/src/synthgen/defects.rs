//! Capture failures that defeat annotation: the cleaning stage removes them.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::datamodel::SampleRecord;
use crate::error::{Error, Result};
use crate::seed::{derive, hash_str};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Defect {
    ClosedEye,
    OutOfFrame,
    MotionBlur,
}

impl Defect {
    pub const ALL: [Defect; 3] = [Defect::ClosedEye, Defect::OutOfFrame, Defect::MotionBlur];

    pub fn as_str(self) -> &'static str {
        match self {
            Defect::ClosedEye => "closed_eye",
            Defect::OutOfFrame => "out_of_frame",
            Defect::MotionBlur => "motion_blur",
        }
    }
}

impl fmt::Display for Defect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Defect {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Defect::ALL
            .into_iter()
            .find(|d| d.as_str() == s)
            .ok_or_else(|| format!("unknown defect {s:?}"))
    }
}

/// Per-record probability of each defect; at most one defect hits a record.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DefectProfile {
    pub closed_eye: f64,
    pub out_of_frame: f64,
    pub motion_blur: f64,
}

impl Default for DefectProfile {
    /// 6.8% in total, the failure rate of real headset captures.
    fn default() -> Self {
        DefectProfile {
            closed_eye: 0.03,
            out_of_frame: 0.02,
            motion_blur: 0.018,
        }
    }
}

impl DefectProfile {
    pub fn none() -> Self {
        DefectProfile {
            closed_eye: 0.0,
            out_of_frame: 0.0,
            motion_blur: 0.0,
        }
    }

    pub fn total(&self) -> f64 {
        self.closed_eye + self.out_of_frame + self.motion_blur
    }

    pub fn validate(&self) -> Result<()> {
        let ps = [self.closed_eye, self.out_of_frame, self.motion_blur];
        if ps.iter().any(|p| !(0.0..=1.0).contains(p)) || self.total() > 1.0 + 1e-12 {
            return Err(Error::InvalidSpec(format!(
                "defect probabilities {ps:?} must lie in [0, 1] and sum to at most 1"
            )));
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: f64) -> Result<()> {
        match key {
            "closed_eye" => self.closed_eye = value,
            "out_of_frame" => self.out_of_frame = value,
            "motion_blur" => self.motion_blur = value,
            _ => return Err(Error::InvalidSpec(format!("unknown defect {key:?}"))),
        }
        self.validate()
    }

    /// Defect for a uniform draw `u` in `[0, 1)`.
    pub fn pick(&self, u: f64) -> Option<Defect> {
        let mut edge = 0.0;
        for (d, p) in
            Defect::ALL
                .into_iter()
                .zip([self.closed_eye, self.out_of_frame, self.motion_blur])
        {
            edge += p;
            if u < edge {
                return Some(d);
            }
        }
        None
    }
}

/// Uniform `[0, 1)` draw keyed by the sample id.
fn draw(seed: u64, sample_id: &str) -> f64 {
    (hash_str(derive(seed, "defect"), sample_id) >> 11) as f64 / (1u64 << 53) as f64
}

/// Marks a seeded subset of records as defective: the annotation and any
/// downstream fields are removed and virtual image references are extended
/// so the rendered image shows the defect.
pub fn inject_degradations(
    records: Vec<SampleRecord>,
    profile: &DefectProfile,
    seed: u64,
) -> Vec<SampleRecord> {
    records
        .into_par_iter()
        .map(|mut r| {
            if let Some(d) = profile.pick(draw(seed, &r.sample_id)) {
                r.annotation = None;
                r.quality = None;
                r.category = None;
                if super::is_virtual(&r.image_ref) {
                    r.image_ref = super::with_defect(&r.image_ref, d);
                }
            }
            r
        })
        .collect()
}

/// Defect recorded in a virtual image reference, if any.
pub fn defect_of(record: &SampleRecord) -> Option<Defect> {
    super::ImageRef::parse(&record.image_ref)
        .ok()
        .and_then(|r| r.defect)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datamodel::Eye;

    fn dummy(n: usize) -> Vec<SampleRecord> {
        (0..n)
            .map(|i| SampleRecord {
                sample_id: format!("x{i}"),
                subject_id: "S".into(),
                eye: Eye::L,
                gaze_point: 5,
                brightness_level: 0,
                frame_idx: 0,
                image_ref: format!("img/{i}.png"),
                annotation: None,
                quality: None,
                category: None,
                split: None,
            })
            .collect()
    }

    fn affected(records: &[SampleRecord], profile: &DefectProfile, seed: u64) -> usize {
        records
            .iter()
            .filter(|r| profile.pick(draw(seed, &r.sample_id)).is_some())
            .count()
    }

    #[test]
    fn zero_and_saturated_profiles() {
        let rs = dummy(500);
        assert_eq!(affected(&rs, &DefectProfile::none(), 1), 0);
        let all = DefectProfile {
            closed_eye: 1.0,
            ..DefectProfile::none()
        };
        assert_eq!(affected(&rs, &all, 1), 500);
        assert!(rs
            .iter()
            .all(|r| all.pick(draw(1, &r.sample_id)) == Some(Defect::ClosedEye)));
    }

    #[test]
    fn binomial_rate_within_three_sigma() {
        let rs = dummy(10_000);
        let p = DefectProfile::default();
        assert!((p.total() - 0.068).abs() < 1e-12);
        let sigma = (10_000.0 * 0.068 * 0.932f64).sqrt();
        for seed in 0..5 {
            let k = affected(&rs, &p, seed) as f64;
            assert!((k - 680.0).abs() <= 3.0 * sigma, "seed {seed}: {k}");
        }
    }

    #[test]
    fn profile_validation() {
        let mut p = DefectProfile::none();
        assert!(p.set("motion_blur", 0.5).is_ok());
        assert!(p.set("closed_eye", 0.6).is_err());
        assert!(p.set("nope", 0.1).is_err());
        assert_eq!("out_of_frame".parse::<Defect>(), Ok(Defect::OutOfFrame));
    }
}
