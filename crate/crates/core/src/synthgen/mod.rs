//! Deterministic synthetic ocular acquisition.
//!
//! A headset camera looks at each eye from below at a fixed tilt while the
//! subject fixates nine targets on a 3×3 grid under eleven brightness levels,
//! five frames each: 990 captures per subject. Captures come with exact
//! annotations (ellipses, boxes, occlusion/eyelash/reflection masks).
//!
//! Images are virtual by default: a record's `image_ref` is a `synth:` URI
//! holding everything needed to re-render it bit-exactly, and
//! [`load_image`] renders on demand. [`write_images`] materializes PNGs.

mod defects;
mod render;
mod scene;
mod subject;

use std::collections::HashMap;
use std::path::Path;
use std::sync::{Arc, Mutex};

use image::GrayImage;
use rayon::prelude::*;

pub use defects::{defect_of, inject_degradations, Defect, DefectProfile};
pub use scene::{
    axis_ratio, is_far_column, off_axis, pupil_ratio, CaptureParams, FAR_COLUMN_YAW_WEIGHT,
    IMAGE_SIZE, PX_PER_DEG,
};
pub use subject::{subject_id, SubjectModel, TEX_COLS, TEX_ROWS};

use crate::datamodel::{Annotation, BBox, Eye, SampleRecord};
use crate::error::{Error, Result};
use crate::raster::{load_gray, save_gray};
use crate::seed::{derive, hash_parts};
use scene::{Scene, Window};

pub const DEFAULT_CAMERA_TILT_DEG: f64 = 20.0;
pub const GAZE_POINTS: u8 = 9;
pub const BRIGHTNESS_LEVELS: u8 = 11;
pub const FRAMES: u8 = 5;
pub const CAPTURES_PER_SUBJECT: usize =
    2 * GAZE_POINTS as usize * BRIGHTNESS_LEVELS as usize * FRAMES as usize;

const URI_PREFIX: &str = "synth:v1?";

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub subjects: usize,
    pub seed: u64,
    pub camera_tilt_deg: f64,
    pub defects: DefectProfile,
}

impl SynthConfig {
    pub fn new(subjects: usize, seed: u64) -> Self {
        SynthConfig {
            subjects,
            seed,
            camera_tilt_deg: DEFAULT_CAMERA_TILT_DEG,
            defects: DefectProfile::default(),
        }
    }
}

/// Renders one capture with its ground truth.
pub fn render_ocular(subject: &SubjectModel, params: &CaptureParams) -> (GrayImage, Annotation) {
    let scene = Scene::new(subject, params, None);
    (
        render::render(&scene, subject.eye(params.eye), params.noise_seed, None),
        scene.annotation(),
    )
}

/// Ground truth of a capture without synthesizing pixels.
pub fn annotate(subject: &SubjectModel, params: &CaptureParams) -> Annotation {
    Scene::new(subject, params, None).annotation()
}

/// Renders a capture, optionally spoiled by a defect.
pub fn render_capture(
    subject: &SubjectModel,
    params: &CaptureParams,
    defect: Option<Defect>,
) -> GrayImage {
    render_region(subject, params, defect, None)
}

/// Like [`render_capture`] but only pixels inside `region` are synthesized
/// (identically to the full frame); everything else is black.
pub fn render_region(
    subject: &SubjectModel,
    params: &CaptureParams,
    defect: Option<Defect>,
    region: Option<&BBox<f64>>,
) -> GrayImage {
    let scene = Scene::new(subject, params, defect);
    let win = region.map(|b| Window::around(b, 0.0, scene.width, scene.height));
    render::render(&scene, subject.eye(params.eye), params.noise_seed, win)
}

pub fn sample_id(subject_id: &str, eye: Eye, gaze: u8, level: u8, frame: u8) -> String {
    format!("{subject_id}_{eye}_g{gaze}_b{level:02}_f{frame}")
}

/// Sensor-noise seed of a capture slot.
pub fn noise_seed(subject: &SubjectModel, eye: Eye, gaze: u8, level: u8, frame: u8) -> u64 {
    hash_parts(
        subject.identity_seed,
        &[
            "noise",
            eye.as_str(),
            &gaze.to_string(),
            &level.to_string(),
            &frame.to_string(),
        ],
    )
}

/// Parsed `synth:` image reference.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageRef {
    pub subject_id: String,
    pub identity_seed: u64,
    pub camera_tilt_deg: f64,
    pub params: CaptureParams,
    pub defect: Option<Defect>,
}

pub fn is_virtual(image_ref: &str) -> bool {
    image_ref.starts_with(URI_PREFIX)
}

fn with_defect(image_ref: &str, d: Defect) -> String {
    match ImageRef::parse(image_ref) {
        Ok(mut r) => {
            r.defect = Some(d);
            r.to_string()
        }
        Err(_) => image_ref.to_string(),
    }
}

impl ImageRef {
    pub fn new(subject: &SubjectModel, params: CaptureParams) -> Self {
        ImageRef {
            subject_id: subject.subject_id.clone(),
            identity_seed: subject.identity_seed,
            camera_tilt_deg: subject.camera_tilt_deg,
            params,
            defect: None,
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        let bad = || Error::ImageRef(s.to_string());
        let query = s.strip_prefix(URI_PREFIX).ok_or_else(bad)?;
        let mut kv = HashMap::new();
        for part in query.split('&') {
            let (k, v) = part.split_once('=').ok_or_else(bad)?;
            kv.insert(k, v);
        }
        let get = |k: &str| kv.get(k).copied().ok_or_else(bad);
        let num = |k: &str| get(k).and_then(|v| v.parse::<u64>().map_err(|_| bad()));
        let small = |k: &str| num(k).and_then(|v| u8::try_from(v).map_err(|_| bad()));
        let params = CaptureParams::new(
            get("eye")?.parse().map_err(|_| bad())?,
            small("gaze")?,
            small("level")?,
            small("frame")?,
            num("noise")?,
        )
        .map_err(|_| bad())?;
        Ok(ImageRef {
            subject_id: get("subject")?.to_string(),
            identity_seed: num("identity")?,
            camera_tilt_deg: get("tilt")?.parse().map_err(|_| bad())?,
            params,
            defect: kv
                .get("defect")
                .map(|d| d.parse())
                .transpose()
                .map_err(|_| bad())?,
        })
    }
}

impl std::fmt::Display for ImageRef {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let p = &self.params;
        write!(
            f,
            "{URI_PREFIX}subject={}&identity={}&tilt={}&eye={}&gaze={}&level={}&frame={}&noise={}",
            self.subject_id,
            self.identity_seed,
            self.camera_tilt_deg,
            p.eye,
            p.gaze_point,
            p.brightness_level,
            p.frame_idx,
            p.noise_seed
        )?;
        if let Some(d) = self.defect {
            write!(f, "&defect={d}")?;
        }
        Ok(())
    }
}

fn capture_slots() -> impl Iterator<Item = (Eye, u8, u8, u8)> {
    Eye::BOTH.into_iter().flat_map(|eye| {
        (1..=GAZE_POINTS).flat_map(move |g| {
            (0..BRIGHTNESS_LEVELS).flat_map(move |l| (0..FRAMES).map(move |f| (eye, g, l, f)))
        })
    })
}

/// All 990 captures of a subject, ordered by (eye, gaze point, level, frame).
/// With `out_dir`, images are rendered to `out_dir/images/` and referenced by
/// relative path; otherwise references are virtual.
pub fn generate_session(
    subject: &SubjectModel,
    out_dir: Option<&Path>,
) -> Result<Vec<SampleRecord>> {
    let slots: Vec<_> = capture_slots().collect();
    if let Some(dir) = out_dir {
        let images = dir.join("images");
        std::fs::create_dir_all(&images).map_err(|e| Error::io(&images, e))?;
    }
    slots
        .par_iter()
        .map(|&(eye, g, l, f)| {
            let params = CaptureParams::new(eye, g, l, f, noise_seed(subject, eye, g, l, f))?;
            let id = sample_id(&subject.subject_id, eye, g, l, f);
            let (image_ref, annotation) = match out_dir {
                Some(dir) => {
                    let (img, ann) = render_ocular(subject, &params);
                    let rel = format!("images/{id}.png");
                    save_gray(dir.join(&rel), &img)?;
                    (rel, ann)
                }
                None => (
                    ImageRef::new(subject, params).to_string(),
                    annotate(subject, &params),
                ),
            };
            Ok(SampleRecord {
                sample_id: id,
                subject_id: subject.subject_id.clone(),
                eye,
                gaze_point: g,
                brightness_level: l,
                frame_idx: f,
                image_ref,
                annotation: Some(annotation),
                quality: None,
                category: None,
                split: None,
            })
        })
        .collect()
}

/// Full corpus with virtual images and injected defects, sorted by subject.
pub fn generate_corpus(cfg: &SynthConfig) -> Result<Vec<SampleRecord>> {
    cfg.defects.validate()?;
    let sessions: Vec<Vec<SampleRecord>> = (0..cfg.subjects)
        .into_par_iter()
        .map(|i| {
            generate_session(
                &SubjectModel::from_index(cfg.seed, i, cfg.camera_tilt_deg),
                None,
            )
        })
        .collect::<Result<_>>()?;
    let records = sessions.into_iter().flatten().collect();
    Ok(inject_degradations(
        records,
        &cfg.defects,
        derive(cfg.seed, "defects"),
    ))
}

const CACHE_CAPACITY: usize = 64;

fn cached_subject(r: &ImageRef) -> Arc<SubjectModel> {
    static CACHE: Mutex<Option<HashMap<(u64, u64), Arc<SubjectModel>>>> = Mutex::new(None);
    let key = (r.identity_seed, r.camera_tilt_deg.to_bits());
    let mut guard = CACHE.lock().unwrap_or_else(|e| e.into_inner());
    let map = guard.get_or_insert_with(HashMap::new);
    if let Some(m) = map.get(&key) {
        return m.clone();
    }
    if map.len() >= CACHE_CAPACITY {
        map.clear();
    }
    let m = Arc::new(SubjectModel::new(
        r.subject_id.clone(),
        r.identity_seed,
        r.camera_tilt_deg,
    ));
    map.insert(key, m.clone());
    m
}

pub fn render_ref(r: &ImageRef) -> GrayImage {
    render_capture(&cached_subject(r), &r.params, r.defect)
}

/// Pixels of a record: rendered for virtual references, read from disk
/// (relative to `base`) otherwise.
pub fn load_image(record: &SampleRecord, base: &Path) -> Result<GrayImage> {
    load_image_region(record, base, None)
}

/// As [`load_image`], but a virtual image may be rendered only inside
/// `region` (black elsewhere). Files are always read whole.
pub fn load_image_region(
    record: &SampleRecord,
    base: &Path,
    region: Option<&BBox<f64>>,
) -> Result<GrayImage> {
    if is_virtual(&record.image_ref) {
        let r = ImageRef::parse(&record.image_ref)?;
        Ok(render_region(
            &cached_subject(&r),
            &r.params,
            r.defect,
            region,
        ))
    } else {
        load_gray(base.join(&record.image_ref))
    }
}

/// Renders every virtual record to `out_dir/<subdir>/<sample_id>.png` and
/// points its `image_ref` at the file (relative to `out_dir`).
pub fn write_images(records: &mut [SampleRecord], out_dir: &Path, subdir: &str) -> Result<()> {
    let dir = out_dir.join(subdir);
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    records.par_iter_mut().try_for_each(|r| {
        if !is_virtual(&r.image_ref) {
            return Ok(());
        }
        let img = load_image(r, out_dir)?;
        let rel = format!("{subdir}/{}.png", r.sample_id);
        save_gray(out_dir.join(&rel), &img)?;
        r.image_ref = rel;
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datamodel::BitMask;

    fn subject() -> SubjectModel {
        SubjectModel::from_index(42, 3, DEFAULT_CAMERA_TILT_DEG)
    }

    fn params(gaze: u8, level: u8, noise: u64) -> CaptureParams {
        CaptureParams::new(Eye::L, gaze, level, 0, noise).unwrap()
    }

    #[test]
    fn renders_are_deterministic() {
        let s = subject();
        let (a, ann_a) = render_ocular(&s, &params(5, 4, 9));
        let (b, ann_b) = render_ocular(
            &SubjectModel::from_index(42, 3, DEFAULT_CAMERA_TILT_DEG),
            &params(5, 4, 9),
        );
        assert_eq!(a.dimensions(), (IMAGE_SIZE, IMAGE_SIZE));
        assert_eq!(a, b);
        assert_eq!(ann_a, ann_b);
        let (c, ann_c) = render_ocular(&s, &params(5, 4, 10));
        assert_ne!(a, c);
        // Sensor noise does not move the geometry.
        assert_eq!(ann_a, ann_c);
    }

    #[test]
    fn pupil_ratio_follows_brightness() {
        let s = subject();
        for (level, want) in [(0, 0.65), (10, 0.30)] {
            let ann = annotate(&s, &params(5, level, 0));
            assert!((ann.pupil_ellipse.a / ann.iris_ellipse.a - want).abs() < 1e-12);
        }
        let radii: Vec<f64> = (0..=10)
            .map(|l| annotate(&s, &params(5, l, 0)).pupil_ellipse.a)
            .collect();
        assert!(radii.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn corner_gaze_is_more_elliptical() {
        let s = subject();
        let ratio = |g| {
            let e = annotate(&s, &params(g, 3, 0)).iris_ellipse;
            e.b / e.a
        };
        let center = ratio(5);
        assert!((center - 20f64.to_radians().cos()).abs() < 1e-12);
        for g in [1, 3, 7, 9] {
            assert!(ratio(g) < center);
        }
    }

    #[test]
    fn annotation_is_consistent_with_pixels() {
        let s = subject();
        let (img, ann) = render_ocular(&s, &params(5, 6, 1));
        assert!(ann.check().is_ok());
        let base = Path::new(".");
        let occ: BitMask = ann.occlusion_mask.to_bits(base).unwrap();
        let lash = ann.eyelash_mask.to_bits(base).unwrap();
        let refl = ann.reflection_mask.to_bits(base).unwrap();
        assert!(lash.data.iter().zip(&occ.data).all(|(&l, &o)| l <= o));
        // Reflections are saturated, visible pupil pixels are dark.
        for (i, &v) in refl.data.iter().enumerate() {
            if v != 0 {
                assert!(img.as_raw()[i] >= 240);
            }
        }
        let p = &ann.pupil_ellipse;
        let (px, py) = (p.cx.round() as u32, p.cy.round() as u32);
        if occ.get(px, py) == false && refl.get(px, py) == false {
            assert!(img.get_pixel(px, py).0[0] < 50);
        }
    }

    #[test]
    fn session_covers_every_slot_once() {
        let s = subject();
        let recs = generate_session(&s, None).unwrap();
        assert_eq!(recs.len(), CAPTURES_PER_SUBJECT);
        assert_eq!(recs.len(), 990);
        let ids: std::collections::HashSet<_> = recs.iter().map(|r| r.sample_id.clone()).collect();
        assert_eq!(ids.len(), 990);
        for g in 1..=9 {
            assert_eq!(recs.iter().filter(|r| r.gaze_point == g).count(), 110);
        }
        let mut keys: Vec<_> = recs
            .iter()
            .map(|r| (r.eye, r.gaze_point, r.brightness_level, r.frame_idx))
            .collect();
        let sorted = {
            let mut k = keys.clone();
            k.sort();
            k
        };
        assert_eq!(keys, sorted);
        keys.dedup();
        assert_eq!(keys.len(), 990);
        assert!(recs.iter().all(|r| r.validate().is_ok()));
    }

    #[test]
    fn image_refs_round_trip_and_render() {
        let s = subject();
        let p = params(7, 2, 77);
        let mut r = ImageRef::new(&s, p);
        assert_eq!(ImageRef::parse(&r.to_string()).unwrap(), r);
        r.defect = Some(Defect::MotionBlur);
        let text = r.to_string();
        assert_eq!(ImageRef::parse(&text).unwrap(), r);
        assert!(ImageRef::parse("synth:v1?subject=x").is_err());
        assert!(ImageRef::parse("a.png").is_err());
        r.defect = None;
        assert_eq!(render_ref(&r), render_ocular(&s, &p).0);
    }

    #[test]
    fn defects_spoil_images() {
        let s = subject();
        let p = params(5, 5, 3);
        let clean = render_capture(&s, &p, None);
        for d in Defect::ALL {
            assert_ne!(render_capture(&s, &p, Some(d)), clean, "{d}");
        }
    }

    #[test]
    fn saturated_closed_eye_profile_drops_all_annotations() {
        let s = subject();
        let recs: Vec<_> = generate_session(&s, None)
            .unwrap()
            .into_iter()
            .take(40)
            .collect();
        let all = DefectProfile {
            closed_eye: 1.0,
            ..DefectProfile::none()
        };
        let out = inject_degradations(recs.clone(), &all, 5);
        assert!(out.iter().all(|r| r.annotation.is_none()));
        assert!(out.iter().all(|r| defect_of(r) == Some(Defect::ClosedEye)));
        let same = inject_degradations(recs.clone(), &DefectProfile::none(), 5);
        assert_eq!(same, recs);
    }

    #[test]
    fn written_images_match_virtual_renders() {
        let dir = tempfile::tempdir().unwrap();
        let s = subject();
        let mut recs: Vec<_> = generate_session(&s, None)
            .unwrap()
            .into_iter()
            .take(2)
            .collect();
        let virt = recs.clone();
        write_images(&mut recs, dir.path(), "images").unwrap();
        for (w, v) in recs.iter().zip(&virt) {
            assert!(w.image_ref.ends_with(".png"));
            assert_eq!(
                load_image(w, dir.path()).unwrap(),
                load_image(v, dir.path()).unwrap()
            );
        }
    }

    #[test]
    fn region_render_matches_full_frame_inside_region() {
        let s = subject();
        let p = params(4, 6, 77);
        let full = render_capture(&s, &p, None);
        let b = BBox::new(200.3, 180.0, 150.0, 121.7);
        let part = render_region(&s, &p, None, Some(&b));
        let mut inside = 0;
        for (x, y, px) in part.enumerate_pixels() {
            let (xf, yf) = (x as f64, y as f64);
            if xf >= 200.0 && xf < 351.0 && yf >= 180.0 && yf < 302.0 {
                assert_eq!(px, full.get_pixel(x, y), "({x}, {y})");
                inside += 1;
            } else if xf < 199.0 || xf > 352.0 || yf < 179.0 || yf > 303.0 {
                assert_eq!(px.0[0], 0);
            }
        }
        assert!(inside > 150 * 120);
        // Motion blur needs the neighborhood, so the frame is rendered whole.
        let blurred = render_region(&s, &p, Some(Defect::MotionBlur), Some(&b));
        assert_eq!(blurred, render_capture(&s, &p, Some(Defect::MotionBlur)));
    }
}
