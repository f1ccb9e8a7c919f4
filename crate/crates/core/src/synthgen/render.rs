//! Pixel synthesis of a scene.

use std::f64::consts::TAU;

use image::GrayImage;

use super::scene::{Scene, Window};
use super::subject::EyeModel;
use crate::seed::splitmix64;

const SENSOR_NOISE: f64 = 3.0;
const LASH_GRAY: f64 = 28.0;
const LIMBUS_DARKENING: f64 = 18.0;
const COLLARETTE_GAIN: f64 = 6.0;

fn smoothstep(e0: f64, e1: f64, x: f64) -> f64 {
    let t = ((x - e0) / (e1 - e0)).clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

/// Radiance of the open eye at a pixel: sclera, iris or pupil, with a
/// one-pixel blend at both boundaries.
fn eyeball(
    scene: &Scene,
    em: &EyeModel,
    x: f64,
    y: f64,
    across: f64,
    sin_phi: f64,
    cos_phi: f64,
) -> f64 {
    let sclera = em.sclera_gray - 30.0 * across * across;
    let iris = &scene.iris;
    let dx = x - iris.cx;
    let dy = iris.cy - y;
    let (u, v) = (dx * cos_phi + dy * sin_phi, dy * cos_phi - dx * sin_phi);
    let (un, vn) = (u / iris.a, v / iris.b);
    let r = un.hypot(vn);
    // Distance to a boundary of unit radius `k`, roughly in pixels.
    let edge = |k: f64| ((k - r) * iris.b + 0.5).clamp(0.0, 1.0);
    let iris_alpha = edge(1.0);
    if iris_alpha == 0.0 {
        return sclera;
    }
    let pupil_alpha = edge(scene.rho);
    let s = ((r - scene.rho) / (1.0 - scene.rho)).clamp(0.0, 1.0);
    let alpha = vn.atan2(un) + iris.phi - scene.torsion;
    let stroma = em.iris_gray + em.texture_at(s, alpha)
        - LIMBUS_DARKENING * smoothstep(0.85, 1.0, s)
        + COLLARETTE_GAIN * (-((s - 0.3) / 0.06).powi(2)).exp();
    let inner = stroma * (1.0 - pupil_alpha) + em.pupil_gray * pupil_alpha;
    sclera * (1.0 - iris_alpha) + inner * iris_alpha
}

fn box_blur(buf: &mut [f64], width: usize, height: usize, horizontal: bool, len: usize) {
    let half = (len / 2) as isize;
    let (outer, inner) = if horizontal {
        (height, width)
    } else {
        (width, height)
    };
    let idx = |o: usize, i: usize| {
        if horizontal {
            o * width + i
        } else {
            i * width + o
        }
    };
    let mut line = vec![0.0; inner];
    for o in 0..outer {
        for (i, v) in line.iter_mut().enumerate() {
            *v = buf[idx(o, i)];
        }
        for i in 0..inner {
            let lo = (i as isize - half).max(0) as usize;
            let hi = ((i as isize + half) as usize).min(inner - 1);
            let sum: f64 = line[lo..=hi].iter().sum();
            buf[idx(o, i)] = sum / (hi - lo + 1) as f64;
        }
    }
}

/// Standard normal sensor noise of pixel `index`, a pure function of
/// `(seed, index)` so any window renders the same values as the full frame.
fn pixel_noise(seed: u64, index: u64) -> f64 {
    let h = splitmix64(seed ^ splitmix64(index));
    let u1 = ((h >> 11) as f64 + 0.5) / (1u64 << 53) as f64;
    let u2 = (splitmix64(h) >> 11) as f64 / (1u64 << 53) as f64;
    (-2.0 * u1.ln()).sqrt() * (TAU * u2).cos()
}

/// Renders the pixels of `region` (whole frame if `None`); the rest of the
/// frame stays black. Blurred scenes are always rendered whole.
pub(crate) fn render(
    scene: &Scene,
    em: &EyeModel,
    noise_seed: u64,
    region: Option<Window>,
) -> GrayImage {
    let (w, h) = (scene.width as usize, scene.height as usize);
    let win = match region {
        Some(r) if scene.blur.is_none() => r,
        _ => Window::full(scene.width, scene.height),
    };
    let lash = scene.lash_coverage(win);
    let (sin_phi, cos_phi) = scene.iris.phi.sin_cos();
    let size = scene.width.max(scene.height) as f64;
    let o = &scene.opening;
    let mut buf = vec![0.0f64; w * h];
    for y in win.y0 as usize..win.y1 as usize {
        let yf = y as f64;
        for x in win.x0 as usize..win.x1 as usize {
            let xf = x as f64;
            let open = o.contains(xf, yf);
            let lashed = lash.get(x as u32 - win.x0, y as u32 - win.y0);
            let base = if lashed {
                LASH_GRAY
            } else if open {
                eyeball(scene, em, xf, yf, o.across(xf), sin_phi, cos_phi)
            } else {
                let skin = em.skin_gray + 12.0 * em.skin_at(xf, yf, size);
                // Lash line just above the upper margin.
                match o.upper(xf) {
                    Some(m) if yf <= m && m - yf < 4.0 => 0.45 * skin,
                    _ => skin,
                }
            };
            let mut v = base * scene.gain;
            if open && !lashed && scene.is_specular(xf, yf) {
                v = 255.0;
            }
            buf[y * w + x] = v;
        }
    }
    if let Some((horizontal, len)) = scene.blur {
        box_blur(&mut buf, w, h, horizontal, len);
    }
    let mut data = vec![0u8; w * h];
    for y in win.y0 as usize..win.y1 as usize {
        for x in win.x0 as usize..win.x1 as usize {
            let i = y * w + x;
            let v = buf[i] + SENSOR_NOISE * pixel_noise(noise_seed, i as u64);
            data[i] = v.round().clamp(0.0, 255.0) as u8;
        }
    }
    GrayImage::from_raw(scene.width, scene.height, data).expect("image size")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blur_preserves_constants_and_spreads_impulses() {
        let mut b = vec![10.0; 25];
        box_blur(&mut b, 5, 5, true, 3);
        assert!(b.iter().all(|&v| (v - 10.0).abs() < 1e-12));
        let mut b = vec![0.0; 25];
        b[12] = 9.0;
        box_blur(&mut b, 5, 5, false, 3);
        assert_eq!(b[7], 3.0);
        assert_eq!(b[17], 3.0);
        assert_eq!(b[11], 0.0);
    }

    #[test]
    fn pixel_noise_is_standard_normal() {
        let n = 200_000;
        let v: Vec<f64> = (0..n).map(|i| pixel_noise(9, i)).collect();
        let mean = v.iter().sum::<f64>() / n as f64;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.01, "mean {mean}");
        assert!((var - 1.0).abs() < 0.02, "var {var}");
        assert_ne!(pixel_noise(9, 5), pixel_noise(10, 5));
    }

    #[test]
    fn smoothstep_ends() {
        assert_eq!(smoothstep(0.0, 1.0, -1.0), 0.0);
        assert_eq!(smoothstep(0.0, 1.0, 2.0), 1.0);
        assert_eq!(smoothstep(0.0, 1.0, 0.5), 0.5);
    }
}
