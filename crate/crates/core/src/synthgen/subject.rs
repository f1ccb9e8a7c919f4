//! Per-identity appearance: iris texture field, tones and eyelid shape.

use std::f64::consts::TAU;
use std::sync::OnceLock;

use rand::Rng;

use crate::datamodel::Eye;
use crate::seed::{derive, derive_index, hash_parts, rng};

/// Radial samples of the texture table (pupil edge to limbus).
pub const TEX_ROWS: usize = 64;
/// Angular samples of the texture table.
pub const TEX_COLS: usize = 1024;

const WAVES: usize = 160;
/// Angular frequencies in cycles per turn: 2 to 8 per quadrant.
const MIN_CYCLES: u32 = 8;
const MAX_CYCLES: u32 = 32;
/// Radial cycles across the annulus.
const MAX_RADIAL_CYCLES: u32 = 6;
/// Pigment variation: a few slow waves, at most one cycle per quadrant.
const PIGMENT_WAVES: usize = 6;
const PIGMENT_MAX_CYCLES: u32 = 4;

const SKIN_GRID: usize = 81;

/// Gaussian spot in texture coordinates: crypts are dark, nevi bright or dark.
#[derive(Clone, Copy, Debug)]
struct Spot {
    s: f64,
    alpha: f64,
    sigma_s: f64,
    sigma_alpha: f64,
    /// Gray-level offset at the center.
    gray: f64,
}

#[derive(Debug)]
pub(crate) struct EyeModel {
    pub texture_seed: u64,
    pub iris_gray: f64,
    pub iris_contrast: f64,
    pub pigment_contrast: f64,
    pub sclera_gray: f64,
    pub skin_gray: f64,
    pub pupil_gray: f64,
    /// Half width of the palpebral opening, in iris radii.
    pub half_width: f64,
    /// Typical upper and lower lid apex distance from the opening center, in iris radii.
    pub upper_open: f64,
    pub lower_open: f64,
    /// Opening center offset from the image center (placement in the headset), pixels.
    pub offset: (f64, f64),
    pub lash_density: f64,
    spots: Vec<Spot>,
    texture: OnceLock<Vec<f32>>,
    skin: OnceLock<Vec<f32>>,
}

/// A synthetic identity. Everything is a pure function of `identity_seed`;
/// tables are built on first use.
#[derive(Debug)]
pub struct SubjectModel {
    pub subject_id: String,
    pub identity_seed: u64,
    /// Iris semi-major axis in pixels for a frontal view.
    pub iris_radius: f64,
    /// Fixed camera tilt of the rig, degrees.
    pub camera_tilt_deg: f64,
    eyes: [EyeModel; 2],
}

pub fn subject_id(index: usize) -> String {
    format!("S{index:04}")
}

impl SubjectModel {
    pub fn new(subject_id: impl Into<String>, identity_seed: u64, camera_tilt_deg: f64) -> Self {
        let mut r = rng(derive(identity_seed, "subject"));
        let iris_radius = r.random_range(95.0..115.0);
        let eyes = Eye::BOTH.map(|eye| EyeModel::new(identity_seed, eye));
        SubjectModel {
            subject_id: subject_id.into(),
            identity_seed,
            iris_radius,
            camera_tilt_deg,
            eyes,
        }
    }

    /// Subject number `index` of the corpus seeded by `seed`.
    pub fn from_index(seed: u64, index: usize, camera_tilt_deg: f64) -> Self {
        let identity = derive_index(derive(seed, "subjects"), index as u64);
        SubjectModel::new(subject_id(index), identity, camera_tilt_deg)
    }

    pub(crate) fn eye(&self, eye: Eye) -> &EyeModel {
        &self.eyes[eye as usize]
    }

    pub fn texture_seed(&self, eye: Eye) -> u64 {
        self.eye(eye).texture_seed
    }
}

impl EyeModel {
    fn new(identity_seed: u64, eye: Eye) -> Self {
        let texture_seed = hash_parts(identity_seed, &["texture", eye.as_str()]);
        let mut r = rng(derive(texture_seed, "tones"));
        let iris_contrast = r.random_range(16.0..24.0);
        let mut spots: Vec<Spot> = (0..r.random_range(8..=14))
            .map(|_| Spot {
                s: r.random_range(0.15..0.85),
                alpha: r.random_range(0.0..TAU),
                sigma_s: r.random_range(0.06..0.14),
                sigma_alpha: r.random_range(0.08..0.2),
                gray: -iris_contrast * r.random_range(0.8..1.6),
            })
            .collect();
        spots.extend((0..r.random_range(3..=6)).map(|_| Spot {
            s: r.random_range(0.2..0.9),
            alpha: r.random_range(0.0..TAU),
            sigma_s: r.random_range(0.08..0.16),
            sigma_alpha: r.random_range(0.15..0.35),
            gray: r.random_range(30.0..60.0) * if r.random_bool(0.5) { 1.0 } else { -1.0 },
        }));
        EyeModel {
            texture_seed,
            iris_gray: r.random_range(45.0..135.0),
            iris_contrast,
            pigment_contrast: r.random_range(20.0..40.0),
            sclera_gray: r.random_range(160.0..185.0),
            skin_gray: r.random_range(115.0..150.0),
            pupil_gray: r.random_range(10.0..20.0),
            half_width: r.random_range(1.9..2.2),
            upper_open: r.random_range(0.86..1.0),
            lower_open: r.random_range(1.0..1.12),
            offset: (r.random_range(-12.0..12.0), r.random_range(-12.0..12.0)),
            lash_density: r.random_range(0.6..1.4),
            spots,
            texture: OnceLock::new(),
            skin: OnceLock::new(),
        }
    }

    /// Sum of unit-variance random waves `cos(m·alpha + 2π·n·s + phase)`,
    /// tabulated `TEX_ROWS`×`TEX_COLS`.
    fn waves(
        seed: u64,
        count: usize,
        cycles: std::ops::RangeInclusive<u32>,
        radial: u32,
    ) -> Vec<f64> {
        let mut r = rng(seed);
        let mut acc = vec![0f64; TEX_ROWS * TEX_COLS];
        let mut power = 0.0;
        let mut col_cos = vec![0f64; TEX_COLS];
        let mut col_sin = vec![0f64; TEX_COLS];
        for _ in 0..count {
            let m = r.random_range(cycles.clone()) as f64;
            let n = r.random_range(0..=radial) as f64;
            let phase = r.random_range(0.0..TAU);
            let amp = r.random_range(0.5..1.0);
            power += amp * amp / 2.0;
            // cos(A + B) with A angular and B radial, tabulated separately.
            for (c, (cc, cs)) in col_cos.iter_mut().zip(col_sin.iter_mut()).enumerate() {
                let a = m * TAU * c as f64 / TEX_COLS as f64;
                (*cs, *cc) = a.sin_cos();
            }
            for row in 0..TEX_ROWS {
                let b = TAU * n * row as f64 / (TEX_ROWS - 1) as f64 + phase;
                let (bs, bc) = b.sin_cos();
                let (bs, bc) = (amp * bs, amp * bc);
                let out = &mut acc[row * TEX_COLS..(row + 1) * TEX_COLS];
                for ((o, cc), cs) in out.iter_mut().zip(&col_cos).zip(&col_sin) {
                    *o += cc * bc - cs * bs;
                }
            }
        }
        let norm = 1.0 / power.sqrt();
        acc.iter_mut().for_each(|v| *v *= norm);
        acc
    }

    /// Stroma gray-level offsets over `(s, alpha)`: fine band-limited texture,
    /// slow pigment variation and spots.
    fn texture(&self) -> &[f32] {
        self.texture.get_or_init(|| {
            let fine = Self::waves(
                derive(self.texture_seed, "waves"),
                WAVES,
                MIN_CYCLES..=MAX_CYCLES,
                MAX_RADIAL_CYCLES,
            );
            let pigment = Self::waves(
                derive(self.texture_seed, "pigment"),
                PIGMENT_WAVES,
                1..=PIGMENT_MAX_CYCLES,
                1,
            );
            let mut table: Vec<f32> = fine
                .iter()
                .zip(&pigment)
                .map(|(f, p)| (self.iris_contrast * f + self.pigment_contrast * p) as f32)
                .collect();
            for k in &self.spots {
                for row in 0..TEX_ROWS {
                    let s = row as f64 / (TEX_ROWS - 1) as f64;
                    let ds = (s - k.s) / k.sigma_s;
                    if ds.abs() > 3.0 {
                        continue;
                    }
                    for c in 0..TEX_COLS {
                        let a = TAU * c as f64 / TEX_COLS as f64;
                        let mut da = (a - k.alpha).rem_euclid(TAU);
                        if da > std::f64::consts::PI {
                            da -= TAU;
                        }
                        let da = da / k.sigma_alpha;
                        if da.abs() > 3.0 {
                            continue;
                        }
                        table[row * TEX_COLS + c] +=
                            (k.gray * (-0.5 * (ds * ds + da * da)).exp()) as f32;
                    }
                }
            }
            table
        })
    }

    /// Stroma offset at radial fraction `s` in `[0, 1]` and angle `alpha` (radians, any range).
    pub fn texture_at(&self, s: f64, alpha: f64) -> f64 {
        let t = self.texture();
        let y = s.clamp(0.0, 1.0) * (TEX_ROWS - 1) as f64;
        let x = alpha.rem_euclid(TAU) / TAU * TEX_COLS as f64;
        let (y0, x0) = (y.floor(), x.floor());
        let (fy, fx) = (y - y0, x - x0);
        let y0 = (y0 as usize).min(TEX_ROWS - 1);
        let y1 = (y0 + 1).min(TEX_ROWS - 1);
        let x0 = x0 as usize % TEX_COLS;
        let x1 = (x0 + 1) % TEX_COLS;
        let at = |r: usize, c: usize| t[r * TEX_COLS + c] as f64;
        let top = at(y0, x0) * (1.0 - fx) + at(y0, x1) * fx;
        let bottom = at(y1, x0) * (1.0 - fx) + at(y1, x1) * fx;
        top * (1.0 - fy) + bottom * fy
    }

    /// Coarse periodic skin shading in `[-1, 1]`, head-fixed, over a `size`-pixel square.
    pub fn skin_at(&self, x: f64, y: f64, size: f64) -> f64 {
        let grid = self.skin.get_or_init(|| {
            let mut r = rng(derive(self.texture_seed, "skin"));
            (0..SKIN_GRID * SKIN_GRID)
                .map(|_| r.random_range(-1.0f32..1.0))
                .collect()
        });
        let step = size / (SKIN_GRID - 1) as f64;
        let gx = (x / step).clamp(0.0, (SKIN_GRID - 1) as f64);
        let gy = (y / step).clamp(0.0, (SKIN_GRID - 1) as f64);
        let (x0, y0) = (gx.floor() as usize, gy.floor() as usize);
        let (x1, y1) = ((x0 + 1).min(SKIN_GRID - 1), (y0 + 1).min(SKIN_GRID - 1));
        let (fx, fy) = (gx - x0 as f64, gy - y0 as f64);
        let at = |c: usize, r: usize| grid[r * SKIN_GRID + c] as f64;
        let top = at(x0, y0) * (1.0 - fx) + at(x1, y0) * fx;
        let bottom = at(x0, y1) * (1.0 - fx) + at(x1, y1) * fx;
        top * (1.0 - fy) + bottom * fy
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identities_are_reproducible_and_distinct() {
        let a = SubjectModel::from_index(3, 0, 20.0);
        let b = SubjectModel::from_index(3, 0, 20.0);
        let c = SubjectModel::from_index(3, 1, 20.0);
        assert_eq!(a.identity_seed, b.identity_seed);
        assert_eq!(a.subject_id, "S0000");
        assert_ne!(a.identity_seed, c.identity_seed);
        assert_ne!(a.texture_seed(Eye::L), a.texture_seed(Eye::R));
        let ea = a.eye(Eye::L);
        assert_eq!(ea.texture(), b.eye(Eye::L).texture());
        assert_ne!(ea.texture(), c.eye(Eye::L).texture());
        assert_ne!(ea.texture(), a.eye(Eye::R).texture());
    }

    #[test]
    fn waves_are_unit_variance_and_texture_periodic() {
        // Unit variance in expectation; repeated frequencies interfere per seed.
        let mut total = 0.0;
        for seed in 0..8 {
            let w = EyeModel::waves(seed, 40, MIN_CYCLES..=MAX_CYCLES, 3);
            let mean = w.iter().sum::<f64>() / w.len() as f64;
            assert!(mean.abs() < 0.05, "mean {mean}");
            total += w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / w.len() as f64;
        }
        assert!((total / 8.0 - 1.0).abs() < 0.15, "var {}", total / 8.0);
        let m = SubjectModel::from_index(11, 4, 20.0);
        let e = m.eye(Eye::R);
        assert!((e.texture_at(0.4, 0.1) - e.texture_at(0.4, 0.1 + TAU)).abs() < 1e-9);
    }
}
