//! Geometry of one capture: iris and pupil ellipses, eyelids, lashes and
//! specular spots, plus the exact ground-truth annotation derived from them.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::defects::Defect;
use super::subject::SubjectModel;
use crate::datamodel::{Annotation, BBox, BitMask, Ellipse, Eye, Mask, RleMask};
use crate::error::{Error, Result};
use crate::quality::gaze_offset_deg;
use crate::seed::{hash_parts, rng};

pub const IMAGE_SIZE: u32 = 640;
/// Image displacement of the iris per degree of eye rotation.
pub const PX_PER_DEG: f64 = 2.2;
/// Yaw gain of the gaze column farthest from the camera.
pub const FAR_COLUMN_YAW_WEIGHT: f64 = 1.4;

const JITTER_PX: f64 = 3.0;
const TORSION_DEG: f64 = 2.0;
const DROOPY_RATE: f64 = 0.05;
const HEAVY_LASH_RATE: f64 = 0.02;
const GLARE_RATE: f64 = 0.015;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct CaptureParams {
    pub eye: Eye,
    pub gaze_point: u8,
    pub brightness_level: u8,
    pub frame_idx: u8,
    pub noise_seed: u64,
}

impl CaptureParams {
    pub fn new(
        eye: Eye,
        gaze_point: u8,
        brightness_level: u8,
        frame_idx: u8,
        noise_seed: u64,
    ) -> Result<Self> {
        let p = CaptureParams {
            eye,
            gaze_point,
            brightness_level,
            frame_idx,
            noise_seed,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |f: &str| Err(Error::invariant("capture", f));
        if !(1..=9).contains(&self.gaze_point) {
            return bad("gaze_point");
        }
        if self.brightness_level > 10 {
            return bad("brightness_level");
        }
        if self.frame_idx > 4 {
            return bad("frame_idx");
        }
        Ok(())
    }
}

/// Pupil-to-iris diameter ratio at a brightness level.
pub fn pupil_ratio(level: u8) -> f64 {
    0.65 - 0.035 * level as f64
}

/// The gaze column on the far side of the camera: right column for the left
/// eye, left column for the right eye.
pub fn is_far_column(eye: Eye, gaze_point: u8) -> bool {
    let col = (gaze_point.clamp(1, 9) - 1) % 3;
    match eye {
        Eye::L => col == 2,
        Eye::R => col == 0,
    }
}

/// Total off-axis angle (degrees) and the image direction of foreshortening
/// (radians, counterclockwise from +x). Tilt, weighted yaw and pitch add in
/// quadrature.
pub fn off_axis(eye: Eye, gaze_point: u8, tilt_deg: f64) -> (f64, f64) {
    let (yaw, pitch) = gaze_offset_deg(gaze_point);
    let w = if is_far_column(eye, gaze_point) {
        FAR_COLUMN_YAW_WEIGHT
    } else {
        1.0
    };
    let h = w * yaw;
    let total = (tilt_deg * tilt_deg + h * h + pitch * pitch).sqrt();
    let dir = (tilt_deg + pitch).atan2(h);
    (total, dir)
}

/// Minor-to-major axis ratio of the imaged iris.
pub fn axis_ratio(eye: Eye, gaze_point: u8, tilt_deg: f64) -> f64 {
    off_axis(eye, gaze_point, tilt_deg).0.to_radians().cos()
}

/// Palpebral opening bounded by two parabolic lids meeting at the corners
/// `(ox ± half_w, oy)`.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Opening {
    pub ox: f64,
    pub oy: f64,
    pub half_w: f64,
    pub upper_apex: f64,
    pub lower_apex: f64,
}

impl Opening {
    #[inline]
    fn bulge(&self, x: f64) -> Option<f64> {
        let t = (x - self.ox) / self.half_w;
        (t.abs() < 1.0).then(|| 1.0 - t * t)
    }

    /// Lid margin height at column `x` (upper), if inside the corners.
    #[inline]
    pub fn upper(&self, x: f64) -> Option<f64> {
        self.bulge(x)
            .map(|k| self.oy + (self.upper_apex - self.oy) * k)
    }

    #[inline]
    pub fn contains(&self, x: f64, y: f64) -> bool {
        match self.bulge(x) {
            Some(k) => {
                y > self.oy + (self.upper_apex - self.oy) * k
                    && y < self.oy + (self.lower_apex - self.oy) * k
            }
            None => false,
        }
    }

    /// Horizontal position relative to the corners, `0` at the center.
    pub fn across(&self, x: f64) -> f64 {
        (x - self.ox) / self.half_w
    }
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct Lash {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
    pub half_width: f64,
}

impl Lash {
    #[inline]
    pub fn covers(&self, x: f64, y: f64) -> bool {
        let (dx, dy) = (self.x1 - self.x0, self.y1 - self.y0);
        let len2 = dx * dx + dy * dy;
        let t = if len2 > 0.0 {
            (((x - self.x0) * dx + (y - self.y0) * dy) / len2).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let (px, py) = (self.x0 + t * dx - x, self.y0 + t * dy - y);
        px * px + py * py <= self.half_width * self.half_width
    }

    /// Inclusive integer pixel bounds.
    pub fn bounds(&self) -> (i64, i64, i64, i64) {
        let h = self.half_width;
        (
            (self.x0.min(self.x1) - h).floor() as i64,
            (self.y0.min(self.y1) - h).floor() as i64,
            (self.x0.max(self.x1) + h).ceil() as i64,
            (self.y0.max(self.y1) + h).ceil() as i64,
        )
    }
}

/// Rectangle of pixels `[x0, x1) × [y0, y1)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct Window {
    pub x0: u32,
    pub y0: u32,
    pub x1: u32,
    pub y1: u32,
}

impl Window {
    pub fn full(width: u32, height: u32) -> Self {
        Window {
            x0: 0,
            y0: 0,
            x1: width,
            y1: height,
        }
    }

    pub fn around(b: &BBox<f64>, pad: f64, width: u32, height: u32) -> Self {
        let clip = |v: f64, hi: u32| v.clamp(0.0, hi as f64) as u32;
        Window {
            x0: clip((b.x - pad).floor(), width),
            y0: clip((b.y - pad).floor(), height),
            x1: clip((b.x + b.w + pad).ceil() + 1.0, width),
            y1: clip((b.y + b.h + pad).ceil() + 1.0, height),
        }
    }

    pub fn width(&self) -> u32 {
        self.x1.saturating_sub(self.x0)
    }

    pub fn height(&self) -> u32 {
        self.y1.saturating_sub(self.y0)
    }
}

#[derive(Clone, Debug)]
pub(crate) struct Scene {
    pub width: u32,
    pub height: u32,
    pub iris: Ellipse<f64>,
    pub pupil: Ellipse<f64>,
    /// Pupil-to-iris ratio.
    pub rho: f64,
    pub torsion: f64,
    pub opening: Opening,
    pub lashes: Vec<Lash>,
    /// Corneal reflections of the illuminators: `(x, y, radius)`.
    pub glints: Vec<(f64, f64, f64)>,
    pub glare: Option<Ellipse<f64>>,
    pub gain: f64,
    /// Motion blur: horizontal flag and box length.
    pub blur: Option<(bool, usize)>,
}

fn capture_seed(subject: &SubjectModel, p: &CaptureParams) -> u64 {
    hash_parts(
        subject.identity_seed,
        &[
            "capture",
            p.eye.as_str(),
            &p.gaze_point.to_string(),
            &p.brightness_level.to_string(),
            &p.frame_idx.to_string(),
        ],
    )
}

impl Scene {
    pub fn new(subject: &SubjectModel, p: &CaptureParams, defect: Option<Defect>) -> Scene {
        let em = subject.eye(p.eye);
        let mut r = rng(capture_seed(subject, p));
        let unit = Normal::new(0.0, 1.0).expect("unit normal");
        let gauss = |r: &mut rand_chacha::ChaCha8Rng, sd: f64, lim: f64| {
            (unit.sample(r) * sd).clamp(-lim, lim)
        };

        let big_r = subject.iris_radius;
        let (yaw, pitch) = gaze_offset_deg(p.gaze_point);
        let gaze_dx = yaw * PX_PER_DEG;
        let gaze_dy = -pitch * PX_PER_DEG;
        let jitter = (
            gauss(&mut r, JITTER_PX, 3.0 * JITTER_PX),
            gauss(&mut r, JITTER_PX, 3.0 * JITTER_PX),
        );
        let torsion = gauss(&mut r, TORSION_DEG, 3.0 * TORSION_DEG).to_radians();
        let upper_noise = gauss(&mut r, 0.06, 0.2);
        let lower_noise = gauss(&mut r, 0.05, 0.2);

        let (w, h) = (IMAGE_SIZE, IMAGE_SIZE);
        let mut ox = w as f64 / 2.0 + em.offset.0;
        let mut oy = h as f64 / 2.0 + em.offset.1;
        if defect == Some(Defect::OutOfFrame) {
            let push = w as f64 / 2.0 + r.random_range(0.0..0.4) * big_r;
            let sign = if r.random_bool(0.5) { 1.0 } else { -1.0 };
            if r.random_bool(0.5) {
                ox += sign * push;
            } else {
                oy += sign * push;
            }
        }

        let (total, dir) = off_axis(p.eye, p.gaze_point, subject.camera_tilt_deg);
        let ratio = total.to_radians().cos();
        let phi = dir + std::f64::consts::FRAC_PI_2;
        let cx = ox + gaze_dx + jitter.0;
        let cy = oy + gaze_dy + jitter.1;
        let rho = pupil_ratio(p.brightness_level);
        let iris = Ellipse::new(cx, cy, big_r, big_r * ratio, phi);
        let pupil = Ellipse::new(cx, cy, rho * big_r, rho * big_r * ratio, phi);

        let droopy = r.random_bool(DROOPY_RATE);
        let upper_open = if droopy {
            r.random_range(0.35..0.75)
        } else {
            em.upper_open + upper_noise
        };
        let lower_open = em.lower_open + lower_noise;
        let mut opening = Opening {
            ox,
            oy,
            half_w: em.half_width * big_r,
            upper_apex: oy - upper_open * big_r + 0.6 * gaze_dy,
            lower_apex: oy + lower_open * big_r + 0.3 * gaze_dy,
        };
        if defect == Some(Defect::ClosedEye) {
            opening.upper_apex = oy + 0.1 * big_r;
            opening.lower_apex = opening.upper_apex;
        }

        let heavy = r.random_bool(HEAVY_LASH_RATE);
        let n_lashes = (36.0 * em.lash_density * if heavy { 3.5 } else { 1.0 }).round() as usize;
        let lashes = (0..n_lashes)
            .map(|_| {
                let t = r.random_range(-0.75..0.75);
                let x0 = ox + t * opening.half_w;
                let y0 = opening.upper(x0).unwrap_or(oy) - 1.0;
                let angle = unit.sample(&mut r) * 0.35 + 0.3 * t;
                let len = big_r * r.random_range(0.10..0.26) * if heavy { 2.6 } else { 1.0 };
                Lash {
                    x0,
                    y0,
                    x1: x0 + len * angle.sin(),
                    y1: y0 + len * angle.cos(),
                    half_width: if heavy { 1.4 } else { 0.7 },
                }
            })
            .collect();

        let glints = [-1.0, 1.0]
            .iter()
            .map(|&side| {
                (
                    cx + side * 0.25 * big_r + unit.sample(&mut r) * 1.5,
                    cy + 0.05 * big_r + unit.sample(&mut r) * 1.5,
                    r.random_range(3.5..5.5),
                )
            })
            .collect();
        let glare = r.random_bool(GLARE_RATE).then(|| {
            let rad = r.random_range(0.33..0.5) * big_r;
            let off = r.random_range(0.0..0.4) * big_r;
            let ang = r.random_range(0.0..std::f64::consts::TAU);
            Ellipse::new(
                cx + off * ang.cos(),
                cy - off * ang.sin(),
                rad,
                rad * r.random_range(0.8..1.0),
                r.random_range(0.0..std::f64::consts::PI),
            )
        });
        let blur = (defect == Some(Defect::MotionBlur))
            .then(|| (r.random_bool(0.5), 2 * r.random_range(8..16) + 1));

        Scene {
            width: w,
            height: h,
            iris,
            pupil,
            rho,
            torsion,
            opening,
            lashes,
            glints,
            glare,
            gain: 0.75 + 0.05 * p.brightness_level as f64,
            blur,
        }
    }

    #[inline]
    pub fn is_specular(&self, x: f64, y: f64) -> bool {
        self.glints
            .iter()
            .any(|&(gx, gy, gr)| (x - gx) * (x - gx) + (y - gy) * (y - gy) <= gr * gr)
            || self.glare.as_ref().is_some_and(|g| g.contains(x, y))
    }

    /// Lash coverage over `win`, row-major.
    pub fn lash_coverage(&self, win: Window) -> BitMask {
        let mut m = BitMask::new(win.width(), win.height());
        for l in &self.lashes {
            let (bx0, by0, bx1, by1) = l.bounds();
            let xs = bx0.max(win.x0 as i64)..=bx1.min(win.x1 as i64 - 1);
            for y in by0.max(win.y0 as i64)..=by1.min(win.y1 as i64 - 1) {
                for x in xs.clone() {
                    if l.covers(x as f64, y as f64) {
                        m.set(x as u32 - win.x0, y as u32 - win.y0, true);
                    }
                }
            }
        }
        m
    }

    /// Ground truth. Masks are exact within the iris box (plus a margin) and empty elsewhere.
    pub fn annotation(&self) -> Annotation {
        let (w, h) = (self.width, self.height);
        let win = Window::around(&self.iris.bbox(), 2.0, w, h);
        let lash = self.lash_coverage(win);
        let mut occ_rows = vec![Vec::new(); h as usize];
        let mut lash_rows = vec![Vec::new(); h as usize];
        let mut refl_rows = vec![Vec::new(); h as usize];
        let push = |rows: &mut Vec<Vec<(u32, u32)>>, y: u32, x: u32| {
            let row = &mut rows[y as usize];
            match row.last_mut() {
                Some((_, end)) if *end == x => *end = x + 1,
                _ => row.push((x, x + 1)),
            }
        };
        for y in win.y0..win.y1 {
            for x in win.x0..win.x1 {
                let (xf, yf) = (x as f64, y as f64);
                let lid = !self.opening.contains(xf, yf);
                let lashed = !lid && lash.get(x - win.x0, y - win.y0);
                if lid || lashed {
                    push(&mut occ_rows, y, x);
                }
                if lashed {
                    push(&mut lash_rows, y, x);
                }
                if !lid && !lashed && self.is_specular(xf, yf) {
                    push(&mut refl_rows, y, x);
                }
            }
        }
        let o = &self.opening;
        Annotation {
            ocular_bbox: BBox::new(
                o.ox - o.half_w,
                o.upper_apex,
                2.0 * o.half_w,
                (o.lower_apex - o.upper_apex).max(1.0),
            ),
            iris_bbox: self.iris.bbox(),
            iris_ellipse: self.iris,
            pupil_ellipse: self.pupil,
            occlusion_mask: Mask::Rle(RleMask::from_row_spans(w, h, &occ_rows)),
            eyelash_mask: Mask::Rle(RleMask::from_row_spans(w, h, &lash_rows)),
            reflection_mask: Mask::Rle(RleMask::from_row_spans(w, h, &refl_rows)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corners_are_more_oblique_than_center() {
        for eye in Eye::BOTH {
            let center = axis_ratio(eye, 5, 20.0);
            assert!((center - 20f64.to_radians().cos()).abs() < 1e-12);
            for g in [1, 3, 7, 9] {
                assert!(axis_ratio(eye, g, 20.0) < center);
            }
        }
        // The far column is the most oblique for each eye.
        assert!(axis_ratio(Eye::L, 6, 20.0) < axis_ratio(Eye::L, 4, 20.0));
        assert!(axis_ratio(Eye::R, 4, 20.0) < axis_ratio(Eye::R, 6, 20.0));
    }

    #[test]
    fn pupil_map_endpoints() {
        assert!((pupil_ratio(0) - 0.65).abs() < 1e-12);
        assert!((pupil_ratio(10) - 0.30).abs() < 1e-12);
        for l in 0..10 {
            assert!(pupil_ratio(l + 1) < pupil_ratio(l));
        }
    }

    #[test]
    fn lash_segment_distance() {
        let l = Lash {
            x0: 0.0,
            y0: 0.0,
            x1: 10.0,
            y1: 0.0,
            half_width: 1.0,
        };
        assert!(l.covers(5.0, 1.0));
        assert!(!l.covers(5.0, 1.01));
        assert!(l.covers(11.0, 0.0));
        assert!(!l.covers(-1.5, 0.0));
    }

    #[test]
    fn capture_params_are_validated() {
        assert!(CaptureParams::new(Eye::L, 5, 10, 4, 0).is_ok());
        assert!(CaptureParams::new(Eye::L, 0, 0, 0, 0).is_err());
        assert!(CaptureParams::new(Eye::L, 1, 11, 0, 0).is_err());
        assert!(CaptureParams::new(Eye::L, 1, 0, 5, 0).is_err());
    }
}
