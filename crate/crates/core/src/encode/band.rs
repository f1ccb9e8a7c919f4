//! Row-band averaging shared by the 1-D angular filters.

use crate::preprocess::NormalizedIris;
use crate::scalar::Scalar;

/// One row band collapsed to a periodic 1-D signal: mean of valid texels per
/// column and the valid fraction of the band at that column.
pub(crate) struct Band<T> {
    pub values: Vec<T>,
    pub weights: Vec<T>,
}

impl<T: Scalar> Band<T> {
    #[inline]
    pub fn len(&self) -> usize {
        self.values.len()
    }

    #[inline]
    pub fn at(&self, x: isize) -> (T, T) {
        let i = x.rem_euclid(self.len() as isize) as usize;
        (self.values[i], self.weights[i])
    }
}

pub(crate) fn row_bands<T: Scalar>(norm: &NormalizedIris<T>, grid_rows: usize) -> Vec<Band<T>> {
    let rows_per_band = norm.rows() / grid_rows;
    let cols = norm.cols();
    let inv = T::one() / T::lit(rows_per_band as f64);
    (0..grid_rows)
        .map(|b| {
            let mut values = vec![T::zero(); cols];
            let mut weights = vec![T::zero(); cols];
            for x in 0..cols {
                let mut sum = T::zero();
                let mut n = 0usize;
                for r in b * rows_per_band..(b + 1) * rows_per_band {
                    if norm.is_valid(r, x) {
                        sum = sum + norm.texture.get(x, r);
                        n += 1;
                    }
                }
                if n > 0 {
                    values[x] = sum / T::lit(n as f64);
                }
                weights[x] = T::lit(n as f64) * inv;
            }
            Band { values, weights }
        })
        .collect()
}
