//! Small-kernel convolutions over scalar fields with replicate-edge padding.

use crate::scalar::Real;

/// 3x3 discrete Gaussian with a zero center whose weights sum to one.
///
/// The derived kernel `lambda_1 = 1 + lambda` has center weight one and sums
/// to two.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MrfKernel<T: Real> {
    weights: [[T; 3]; 3],
}

impl<T: Real> MrfKernel<T> {
    pub fn gaussian(sigma: T) -> Self {
        let mut weights = [[T::zero(); 3]; 3];
        let mut sum = T::zero();
        for (r, row) in weights.iter_mut().enumerate() {
            for (c, w) in row.iter_mut().enumerate() {
                if r == 1 && c == 1 {
                    continue;
                }
                let d2 = T::from_count((r as isize - 1).pow(2) as usize + (c as isize - 1).pow(2) as usize);
                *w = (-d2 / (T::c(2.0) * sigma * sigma)).exp();
                sum += *w;
            }
        }
        for w in weights.iter_mut().flatten() {
            *w /= sum;
        }
        Self { weights }
    }

    pub fn weights(&self) -> &[[T; 3]; 3] {
        &self.weights
    }

    /// `lambda_1`: the same kernel with its center set to one.
    pub fn with_unit_center(&self) -> [[T; 3]; 3] {
        let mut w = self.weights;
        w[1][1] = T::one();
        w
    }
}

impl<T: Real> Default for MrfKernel<T> {
    fn default() -> Self {
        Self::gaussian(T::one())
    }
}

#[inline]
fn clamp_idx(i: isize, n: usize) -> usize {
    i.clamp(0, n as isize - 1) as usize
}

/// Correlates `field` (row-major, `width x height`) with a 3x3 kernel.
/// The kernels used here are symmetric, so this equals convolution.
pub fn convolve3x3<T: Real>(field: &[T], width: usize, height: usize, kernel: &[[T; 3]; 3]) -> Vec<T> {
    debug_assert_eq!(field.len(), width * height);
    let mut out = vec![T::zero(); field.len()];
    for y in 0..height {
        let rows = [
            clamp_idx(y as isize - 1, height),
            y,
            clamp_idx(y as isize + 1, height),
        ];
        for x in 0..width {
            let cols = [
                clamp_idx(x as isize - 1, width),
                x,
                clamp_idx(x as isize + 1, width),
            ];
            let mut acc = T::zero();
            for (kr, &r) in rows.iter().enumerate() {
                let base = r * width;
                for (kc, &c) in cols.iter().enumerate() {
                    acc += kernel[kr][kc] * field[base + c];
                }
            }
            out[y * width + x] = acc;
        }
    }
    out
}

/// Normalized 1-D Gaussian taps with radius `ceil(3 sigma)`.
pub fn gaussian_taps<T: Real>(sigma: T) -> Vec<T> {
    if !(sigma > T::zero()) {
        return vec![T::one()];
    }
    let radius = (sigma * T::c(3.0)).ceil().as_f64() as usize;
    let mut taps: Vec<T> = (0..=2 * radius)
        .map(|i| {
            let d = T::from_count(i) - T::from_count(radius);
            (-(d * d) / (T::c(2.0) * sigma * sigma)).exp()
        })
        .collect();
    let sum = taps.iter().fold(T::zero(), |a, &b| a + b);
    for t in &mut taps {
        *t /= sum;
    }
    taps
}

/// Separable Gaussian blur with replicate padding; `sigma <= 0` copies the input.
pub fn gaussian_blur<T: Real>(field: &[T], width: usize, height: usize, sigma: T) -> Vec<T> {
    let taps = gaussian_taps(sigma);
    if taps.len() == 1 {
        return field.to_vec();
    }
    let r = (taps.len() / 2) as isize;
    let mut tmp = vec![T::zero(); field.len()];
    for y in 0..height {
        let row = &field[y * width..(y + 1) * width];
        for x in 0..width {
            let mut acc = T::zero();
            for (k, &t) in taps.iter().enumerate() {
                acc += t * row[clamp_idx(x as isize + k as isize - r, width)];
            }
            tmp[y * width + x] = acc;
        }
    }
    let mut out = vec![T::zero(); field.len()];
    for y in 0..height {
        for x in 0..width {
            let mut acc = T::zero();
            for (k, &t) in taps.iter().enumerate() {
                acc += t * tmp[clamp_idx(y as isize + k as isize - r, height) * width + x];
            }
            out[y * width + x] = acc;
        }
    }
    out
}
