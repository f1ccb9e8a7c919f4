//! Ellipses and boxes in image coordinates.
//!
//! Pixel `(x, y)` has its center at integer coordinates, `y` grows downward.
//! Angles (`phi` and boundary angles) are counterclockwise as seen on screen,
//! measured from the positive x-axis.

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ellipse<T> {
    pub cx: T,
    pub cy: T,
    /// Semi-major axis.
    pub a: T,
    /// Semi-minor axis.
    pub b: T,
    /// Rotation of the major axis, in `[0, π)`.
    pub phi: T,
}

impl<T: Scalar> Ellipse<T> {
    /// Builds an ellipse, swapping axes if needed and folding `phi` into `[0, π)`.
    pub fn new(cx: T, cy: T, a: T, b: T, phi: T) -> Self {
        let (a, b, phi) = if b > a {
            (b, a, phi + T::FRAC_PI_2())
        } else {
            (a, b, phi)
        };
        let pi = T::PI();
        let mut phi = phi % pi;
        if phi < T::zero() {
            phi = phi + pi;
        }
        if phi >= pi {
            phi = T::zero();
        }
        Ellipse { cx, cy, a, b, phi }
    }

    pub fn circle(cx: T, cy: T, r: T) -> Self {
        Ellipse {
            cx,
            cy,
            a: r,
            b: r,
            phi: T::zero(),
        }
    }

    pub fn is_valid(&self) -> bool {
        let finite = [self.cx, self.cy, self.a, self.b, self.phi]
            .iter()
            .all(|v| v.is_finite());
        finite
            && self.a >= self.b
            && self.b > T::zero()
            && self.phi >= T::zero()
            && self.phi < T::PI()
    }

    /// Distance from the center to the boundary along image angle `theta`.
    pub fn radius_at(&self, theta: T) -> T {
        let t = theta - self.phi;
        let (s, c) = t.sin_cos();
        let bc = self.b * c;
        let as_ = self.a * s;
        self.a * self.b / (bc * bc + as_ * as_).sqrt()
    }

    /// Boundary point hit by the ray from the center at image angle `theta`.
    pub fn boundary_point(&self, theta: T) -> (T, T) {
        let r = self.radius_at(theta);
        let (s, c) = theta.sin_cos();
        (self.cx + r * c, self.cy - r * s)
    }

    /// Coordinates of `(x, y)` in the ellipse frame (major axis along the first component).
    pub fn to_local(&self, x: T, y: T) -> (T, T) {
        let dx = x - self.cx;
        let dy = self.cy - y;
        let (s, c) = self.phi.sin_cos();
        (dx * c + dy * s, dy * c - dx * s)
    }

    pub fn contains(&self, x: T, y: T) -> bool {
        let (u, v) = self.to_local(x, y);
        let (u, v) = (u / self.a, v / self.b);
        u * u + v * v <= T::one()
    }

    /// Closed x-interval of row `y` that lies inside the ellipse.
    pub fn row_span(&self, y: T) -> Option<(T, T)> {
        let q = self.cy - y;
        let (s, c) = self.phi.sin_cos();
        let ia = T::one() / (self.a * self.a);
        let ib = T::one() / (self.b * self.b);
        let qa = c * c * ia + s * s * ib;
        let qb = T::lit(2.0) * q * c * s * (ia - ib);
        let qc = q * q * (s * s * ia + c * c * ib) - T::one();
        let disc = qb * qb - T::lit(4.0) * qa * qc;
        if disc < T::zero() {
            return None;
        }
        let root = disc.sqrt();
        let two_a = T::lit(2.0) * qa;
        let x0 = (-qb - root) / two_a;
        let x1 = (-qb + root) / two_a;
        Some((self.cx + x0, self.cx + x1))
    }

    /// Integer pixel span `[lo, hi]` of row `y` inside the ellipse, clipped to `[0, width)`.
    pub fn pixel_span(&self, y: i64, width: u32) -> Option<(u32, u32)> {
        let (lo, hi) = self.row_span(T::from_i64(y)?)?;
        let lo = lo.ceil().to_i64()?.max(0);
        let hi = hi.floor().to_i64()?.min(width as i64 - 1);
        (lo <= hi).then_some((lo as u32, hi as u32))
    }

    /// Number of pixel centers inside the ellipse within a `width`×`height` raster.
    pub fn pixel_area(&self, width: u32, height: u32) -> u64 {
        let bb = self.bbox();
        let y0 = bb.y.floor().to_i64().unwrap_or(0).max(0);
        let y1 = (bb.y + bb.h)
            .ceil()
            .to_i64()
            .unwrap_or(-1)
            .min(height as i64 - 1);
        (y0..=y1)
            .filter_map(|y| self.pixel_span(y, width))
            .map(|(lo, hi)| (hi - lo + 1) as u64)
            .sum()
    }

    pub fn area(&self) -> T {
        T::PI() * self.a * self.b
    }

    /// Axis-aligned bounding box.
    pub fn bbox(&self) -> BBox<T> {
        let (s, c) = self.phi.sin_cos();
        let hx = (self.a * self.a * c * c + self.b * self.b * s * s).sqrt();
        let hy = (self.a * self.a * s * s + self.b * self.b * c * c).sqrt();
        BBox {
            x: self.cx - hx,
            y: self.cy - hy,
            w: hx + hx,
            h: hy + hy,
        }
    }

    /// True when `inner` lies strictly inside `self` (center offset plus inner semi-major below outer semi-major).
    pub fn encloses(&self, inner: &Ellipse<T>) -> bool {
        let dx = self.cx - inner.cx;
        let dy = self.cy - inner.cy;
        (dx * dx + dy * dy).sqrt() + inner.a < self.a
    }

    pub fn cast<U: Scalar>(&self) -> Ellipse<U> {
        Ellipse {
            cx: U::lit(self.cx.as_f64()),
            cy: U::lit(self.cy.as_f64()),
            a: U::lit(self.a.as_f64()),
            b: U::lit(self.b.as_f64()),
            phi: U::lit(self.phi.as_f64()),
        }
    }
}

/// Axis-aligned box: top-left corner and size in pixels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BBox<T> {
    pub x: T,
    pub y: T,
    pub w: T,
    pub h: T,
}

impl<T: Scalar> BBox<T> {
    pub fn new(x: T, y: T, w: T, h: T) -> Self {
        BBox { x, y, w, h }
    }

    pub fn is_valid(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.w > T::zero() && self.h > T::zero()
    }

    pub fn center(&self) -> (T, T) {
        let half = T::lit(0.5);
        (self.x + self.w * half, self.y + self.h * half)
    }

    /// Whether any part of the box covers the pixel area `[0, width) × [0, height)`.
    pub fn overlaps_image(&self, width: u32, height: u32) -> bool {
        self.x < T::from_u32(width).unwrap_or(T::zero())
            && self.y < T::from_u32(height).unwrap_or(T::zero())
            && self.x + self.w > T::zero()
            && self.y + self.h > T::zero()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn circle_boundary_and_angle_convention() {
        let c = Ellipse::circle(320.0, 320.0, 50.0);
        let (x, y) = c.boundary_point(0.0);
        assert_abs_diff_eq!(x, 370.0, epsilon = 1e-12);
        assert_abs_diff_eq!(y, 320.0, epsilon = 1e-12);
        // Counterclockwise on screen: a quarter turn points up (smaller y).
        let (x, y) = c.boundary_point(std::f64::consts::FRAC_PI_2);
        assert_abs_diff_eq!(x, 320.0, epsilon = 1e-9);
        assert_abs_diff_eq!(y, 270.0, epsilon = 1e-9);
    }

    #[test]
    fn rotated_ellipse_axes() {
        let e = Ellipse::new(0.0, 0.0, 40.0, 20.0, std::f64::consts::FRAC_PI_2);
        assert_abs_diff_eq!(
            e.radius_at(std::f64::consts::FRAC_PI_2),
            40.0,
            epsilon = 1e-9
        );
        assert_abs_diff_eq!(e.radius_at(0.0), 20.0, epsilon = 1e-9);
        let bb = e.bbox();
        assert_abs_diff_eq!(bb.w, 40.0, epsilon = 1e-9);
        assert_abs_diff_eq!(bb.h, 80.0, epsilon = 1e-9);
        assert!(e.contains(0.0, -39.0));
        assert!(!e.contains(21.0, 0.0));
    }

    #[test]
    fn new_normalizes_axes_and_angle() {
        let e = Ellipse::new(0.0, 0.0, 10.0, 30.0, -0.2f64);
        assert!(e.is_valid());
        assert_eq!(e.a, 30.0);
        assert!(e.phi >= 0.0 && e.phi < std::f64::consts::PI);
    }

    #[test]
    fn row_span_matches_contains() {
        let e = Ellipse::new(100.0, 80.0, 50.0, 30.0, 0.7f64);
        for y in 40..120 {
            let yf = y as f64;
            if let Some((lo, hi)) = e.row_span(yf) {
                assert!(e.contains(lo + 1e-6 * (hi - lo).signum(), yf) || (hi - lo) < 1e-6);
                assert!(e.contains((lo + hi) / 2.0, yf));
                assert!(!e.contains(lo - 0.01, yf));
                assert!(!e.contains(hi + 0.01, yf));
            }
        }
        let direct = (0..200)
            .flat_map(|y| (0..200).map(move |x| (x, y)))
            .filter(|&(x, y)| e.contains(x as f64, y as f64))
            .count() as u64;
        assert_eq!(e.pixel_area(200, 200), direct);
    }

    #[test]
    fn enclosure() {
        let iris = Ellipse::circle(0.0, 0.0, 100.0);
        assert!(iris.encloses(&Ellipse::circle(5.0, 0.0, 60.0)));
        assert!(!iris.encloses(&Ellipse::circle(45.0, 0.0, 60.0)));
    }
}
