//! Data cleaning, five-dimension quality scoring and the standard /
//! challenging split.

use std::fmt;
use std::io::BufRead;
use std::path::Path;

use rayon::prelude::*;

use crate::datamodel::{Category, QualityScores, SampleRecord};
use crate::error::{Error, Result};

/// Yaw offset of the outer gaze columns, degrees.
pub const GAZE_YAW_DEG: f64 = 15.0;
/// Pitch offset of the outer gaze rows, degrees.
pub const GAZE_PITCH_DEG: f64 = 10.0;

/// Gaze offset `(yaw, pitch)` in degrees of grid point `g` (1..=9, row-major,
/// point 1 top-left). Positive yaw looks right, positive pitch looks up.
pub fn gaze_offset_deg(g: u8) -> (f64, f64) {
    let i = (g.clamp(1, 9) - 1) as i32;
    let (row, col) = (i / 3, i % 3);
    (
        (col - 1) as f64 * GAZE_YAW_DEG,
        (1 - row) as f64 * GAZE_PITCH_DEG,
    )
}

/// Angular distance from the center point, scaled so corners are 1.
pub fn gaze_deviation(g: u8) -> f64 {
    let (yaw, pitch) = gaze_offset_deg(g);
    yaw.hypot(pitch) / GAZE_YAW_DEG.hypot(GAZE_PITCH_DEG)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QualityThresholds {
    pub eyelid_occ: f64,
    pub eyelash_occ: f64,
    pub pupil_ratio: f64,
    pub gaze_dev: f64,
    pub reflection: f64,
}

impl Default for QualityThresholds {
    /// Gaze sits between the edge (0.83) and corner (1.0) deviations so only
    /// corner captures count as off-axis; pupil flags only the darkest level.
    fn default() -> Self {
        QualityThresholds {
            eyelid_occ: 0.20,
            eyelash_occ: 0.15,
            pupil_ratio: 0.62,
            gaze_dev: 0.85,
            reflection: 0.10,
        }
    }
}

pub const DIMENSIONS: [&str; 5] = [
    "eyelid_occ",
    "eyelash_occ",
    "pupil_ratio",
    "gaze_dev",
    "reflection",
];

impl QualityThresholds {
    pub fn as_array(&self) -> [f64; 5] {
        [
            self.eyelid_occ,
            self.eyelash_occ,
            self.pupil_ratio,
            self.gaze_dev,
            self.reflection,
        ]
    }

    pub fn set(&mut self, key: &str, value: f64) -> Result<()> {
        if !(value > 0.0 && value < 1.0) {
            return Err(Error::InvalidSpec(format!(
                "threshold {key}={value} outside (0,1)"
            )));
        }
        let slot = match key {
            "eyelid_occ" => &mut self.eyelid_occ,
            "eyelash_occ" => &mut self.eyelash_occ,
            "pupil_ratio" => &mut self.pupil_ratio,
            "gaze_dev" => &mut self.gaze_dev,
            "reflection" => &mut self.reflection,
            _ => {
                return Err(Error::InvalidSpec(format!(
                    "unknown quality dimension `{key}`"
                )))
            }
        };
        *slot = value;
        Ok(())
    }

    /// Reads `key=value` lines over the defaults. Blank lines and `#` comments are skipped.
    pub fn parse(reader: impl BufRead) -> Result<Self> {
        let mut t = Self::default();
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parse_err = |message: String| Error::Parse {
                line: i + 1,
                message,
            };
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| parse_err(format!("expected key=value, got `{line}`")))?;
            let v: f64 = v
                .trim()
                .parse()
                .map_err(|_| parse_err(format!("bad number `{}`", v.trim())))?;
            t.set(k.trim(), v).map_err(|e| parse_err(e.to_string()))?;
        }
        Ok(t)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::parse(std::io::BufReader::new(f))
    }
}

/// Dimensions that exceeded their threshold, one bit per entry of [`DIMENSIONS`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct Flags(pub u8);

impl Flags {
    pub const EYELID: Flags = Flags(1);
    pub const EYELASH: Flags = Flags(2);
    pub const PUPIL: Flags = Flags(4);
    pub const GAZE: Flags = Flags(8);
    pub const REFLECTION: Flags = Flags(16);

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn contains(self, other: Flags) -> bool {
        self.0 & other.0 == other.0
    }

    /// True when every set flag is within `allowed`.
    pub fn within(self, allowed: Flags) -> bool {
        self.0 & !allowed.0 == 0
    }
}

impl std::ops::BitOr for Flags {
    type Output = Flags;
    fn bitor(self, rhs: Flags) -> Flags {
        Flags(self.0 | rhs.0)
    }
}

impl fmt::Display for Flags {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = DIMENSIONS
            .iter()
            .enumerate()
            .filter(|(i, _)| self.0 & (1 << i) != 0)
            .map(|(_, n)| *n)
            .collect();
        write!(f, "{{{}}}", names.join(","))
    }
}

/// Challenging iff some score is strictly above its threshold.
pub fn categorize(scores: &QualityScores, thresholds: &QualityThresholds) -> (Category, Flags) {
    let mut flags = 0u8;
    for (i, (s, t)) in scores
        .as_array()
        .iter()
        .zip(thresholds.as_array())
        .enumerate()
    {
        if *s > t {
            flags |= 1 << i;
        }
    }
    let cat = if flags == 0 {
        Category::Standard
    } else {
        Category::Challenging
    };
    (cat, Flags(flags))
}

/// Flags of a scored record, cross-checked against its stored category.
pub fn record_flags(record: &SampleRecord, thresholds: &QualityThresholds) -> Result<Flags> {
    let q = record
        .quality
        .as_ref()
        .ok_or_else(|| Error::invariant(&record.sample_id, "quality (missing)"))?;
    let (cat, flags) = categorize(q, thresholds);
    match record.category {
        Some(c) if c != cat => Err(Error::invariant(
            &record.sample_id,
            "category (disagrees with quality thresholds)",
        )),
        _ => Ok(flags),
    }
}

/// Keeps records whose annotation is present and consistent, in order.
pub fn clean(records: Vec<SampleRecord>) -> (Vec<SampleRecord>, usize) {
    let n = records.len();
    let kept: Vec<SampleRecord> = records
        .into_iter()
        .filter(|r| r.annotation.as_ref().is_some_and(|a| a.check().is_ok()))
        .collect();
    let dropped = n - kept.len();
    (kept, dropped)
}

/// Scores one annotated record. Mask areas are counted over the pixel
/// centers inside the iris ellipse; `base` resolves external mask files.
pub fn score_quality(record: &SampleRecord, base: &Path) -> Result<QualityScores> {
    let ann = record
        .annotation
        .as_ref()
        .ok_or_else(|| Error::MissingAnnotation(record.sample_id.clone()))?;
    let occlusion = ann.occlusion_mask.to_rle(base)?;
    let eyelash = ann.eyelash_mask.to_rle(base)?;
    let reflection = ann.reflection_mask.to_rle(base)?;
    let (w, h) = (occlusion.width, occlusion.height);
    let iris = &ann.iris_ellipse;
    let span = |y: u32| iris.pixel_span(y as i64, w);
    let area = iris.pixel_area(w, h);
    let frac = |n: u64| {
        if area == 0 {
            0.0
        } else {
            (n as f64 / area as f64).clamp(0.0, 1.0)
        }
    };
    let lash = eyelash.count_in_spans(span);
    // Eyelash pixels are a subset of the occlusion mask; the rest is eyelid.
    let lid = occlusion.count_in_spans(span).saturating_sub(lash);
    Ok(QualityScores {
        eyelid_occ: frac(lid),
        eyelash_occ: frac(lash),
        pupil_ratio: (ann.pupil_ellipse.a / iris.a).clamp(0.0, 1.0),
        gaze_dev: gaze_deviation(record.gaze_point),
        reflection: frac(reflection.count_in_spans(span)),
    })
}

/// Scores and categorizes every record in place (parallel, order kept).
pub fn score_all(
    records: &mut [SampleRecord],
    thresholds: &QualityThresholds,
    base: &Path,
) -> Result<()> {
    records.par_iter_mut().try_for_each(|r| {
        let q = score_quality(r, base)?;
        r.category = Some(categorize(&q, thresholds).0);
        r.quality = Some(q);
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datamodel::{Annotation, BBox, Ellipse, Eye, Mask, RleMask};

    fn record(occlusion: RleMask, eyelash: RleMask, gaze: u8) -> SampleRecord {
        let (w, h) = (occlusion.width, occlusion.height);
        SampleRecord {
            sample_id: "s".into(),
            subject_id: "p".into(),
            eye: Eye::L,
            gaze_point: gaze,
            brightness_level: 0,
            frame_idx: 0,
            image_ref: "x.png".into(),
            annotation: Some(Annotation {
                ocular_bbox: BBox::new(0.0, 0.0, 200.0, 200.0),
                iris_bbox: BBox::new(40.0, 40.0, 120.0, 120.0),
                iris_ellipse: Ellipse::circle(100.0, 100.0, 60.0),
                pupil_ellipse: Ellipse::circle(100.0, 100.0, 30.0),
                occlusion_mask: Mask::Rle(occlusion),
                eyelash_mask: Mask::Rle(eyelash),
                reflection_mask: Mask::Rle(RleMask::empty(w, h)),
            }),
            quality: None,
            category: None,
            split: None,
        }
    }

    #[test]
    fn empty_masks_center_gaze() {
        let r = record(RleMask::empty(200, 200), RleMask::empty(200, 200), 5);
        let q = score_quality(&r, Path::new(".")).unwrap();
        assert_eq!(q.as_array(), [0.0, 0.0, 0.5, 0.0, 0.0]);
    }

    #[test]
    fn half_lid_pixel_oracle() {
        // Upper half of the image occluded (rows 0..100).
        let rows: Vec<Vec<(u32, u32)>> = (0..200)
            .map(|y| if y < 100 { vec![(0, 200)] } else { vec![] })
            .collect();
        let occ = RleMask::from_row_spans(200, 200, &rows);
        let r = record(occ.clone(), RleMask::empty(200, 200), 5);
        let q = score_quality(&r, Path::new(".")).unwrap();
        // Independent pixel count over the disc.
        let (mut inside, mut covered) = (0u32, 0u32);
        for y in 0..200 {
            for x in 0..200 {
                let (dx, dy) = (x as f64 - 100.0, y as f64 - 100.0);
                if dx * dx + dy * dy <= 3600.0 {
                    inside += 1;
                    covered += (y < 100) as u32;
                }
            }
        }
        assert!((q.eyelid_occ - covered as f64 / inside as f64).abs() < 1e-12);
        assert!((q.eyelid_occ - 0.5).abs() < 0.02);

        // Same pixels labeled eyelash move to the eyelash dimension.
        let r = record(occ.clone(), occ, 5);
        let q = score_quality(&r, Path::new(".")).unwrap();
        assert_eq!(q.eyelid_occ, 0.0);
        assert!((q.eyelash_occ - 0.5).abs() < 0.02);
    }

    #[test]
    fn missing_annotation() {
        let mut r = record(RleMask::empty(4, 4), RleMask::empty(4, 4), 5);
        r.annotation = None;
        assert!(matches!(
            score_quality(&r, Path::new(".")),
            Err(Error::MissingAnnotation(_))
        ));
    }

    #[test]
    fn gaze_deviation_grid() {
        assert_eq!(gaze_deviation(5), 0.0);
        for g in [1, 3, 7, 9] {
            assert!((gaze_deviation(g) - 1.0).abs() < 1e-12);
        }
        assert!(gaze_deviation(4) > gaze_deviation(2));
        assert!(gaze_deviation(4) < QualityThresholds::default().gaze_dev);
    }

    #[test]
    fn categorize_boundaries() {
        let t = QualityThresholds::default();
        let zero = QualityScores {
            eyelid_occ: 0.0,
            eyelash_occ: 0.0,
            pupil_ratio: 0.0,
            gaze_dev: 0.0,
            reflection: 0.0,
        };
        assert_eq!(categorize(&zero, &t), (Category::Standard, Flags(0)));
        let at = QualityScores {
            eyelid_occ: t.eyelid_occ,
            ..zero
        };
        assert_eq!(categorize(&at, &t).0, Category::Standard);
        let over = QualityScores {
            eyelid_occ: t.eyelid_occ + 1e-9,
            ..zero
        };
        assert_eq!(
            categorize(&over, &t),
            (Category::Challenging, Flags::EYELID)
        );
    }

    #[test]
    fn clean_counts() {
        let a = record(RleMask::empty(4, 4), RleMask::empty(4, 4), 5);
        let mut b = a.clone();
        b.annotation = None;
        let (kept, dropped) = clean(vec![a.clone(), a.clone()]);
        assert_eq!((kept.len(), dropped), (2, 0));
        let (kept, dropped) = clean(vec![b.clone(), b]);
        assert_eq!((kept.len(), dropped), (0, 2));
    }

    #[test]
    fn thresholds_file() {
        let t =
            QualityThresholds::parse("# comment\n\ngaze_dev = 0.7\nreflection=0.2\n".as_bytes())
                .unwrap();
        assert_eq!((t.gaze_dev, t.reflection, t.eyelid_occ), (0.7, 0.2, 0.20));
        assert!(matches!(
            QualityThresholds::parse("foo=0.5\n".as_bytes()),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(QualityThresholds::parse("gaze_dev=1.0\n".as_bytes()).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn raising_a_score_never_clears_challenging(
                s in proptest::array::uniform5(0.0f64..1.0),
                dim in 0usize..5,
                bump in 0.0f64..1.0,
            ) {
                let t = QualityThresholds::default();
                let mk = |a: [f64; 5]| QualityScores {
                    eyelid_occ: a[0], eyelash_occ: a[1], pupil_ratio: a[2], gaze_dev: a[3], reflection: a[4],
                };
                let (c0, f0) = categorize(&mk(s), &t);
                let mut s2 = s;
                s2[dim] = (s2[dim] + bump).min(1.0);
                let (c1, f1) = categorize(&mk(s2), &t);
                prop_assert!(!(c0 == Category::Challenging && c1 == Category::Standard));
                prop_assert_eq!(c0 == Category::Challenging, !f0.is_empty());
                prop_assert_eq!(c1 == Category::Challenging, !f1.is_empty());
            }
        }
    }
}
