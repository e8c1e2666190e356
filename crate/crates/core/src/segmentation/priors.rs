//! Horizon-conditioned label priors and Gaussian hyper-priors.

use nalgebra::{Matrix2, Matrix5, Vector2, Vector5};

use super::filter::gaussian_blur;
use super::{Component, NUM_LABELS};
use crate::geometry::HorizonLine;
use crate::scalar::Real;

/// Per-pixel `p(x_i = k | h)` for the four labels.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalPriorMasks<T: Real> {
    pub width: usize,
    pub height: usize,
    /// One row-major raster per label (sky, middle, water, outlier).
    pub masks: [Vec<T>; NUM_LABELS],
}

impl<T: Real> ConditionalPriorMasks<T> {
    pub fn uniform(width: usize, height: usize) -> Self {
        let ones = vec![T::one(); width * height];
        Self {
            width,
            height,
            masks: [ones.clone(), ones.clone(), ones.clone(), ones],
        }
    }

    #[inline]
    pub fn at(&self, i: usize) -> [T; NUM_LABELS] {
        [self.masks[0][i], self.masks[1][i], self.masks[2][i], self.masks[3][i]]
    }

    pub fn mask(&self, c: Component) -> &[T] {
        &self.masks[c as usize]
    }
}

/// Water is forbidden above the horizon and sky below it; middle and outlier
/// labels are unconstrained. All four rasters are then blurred by a Gaussian
/// of `blur_sigma` pixels. Pixels whose center lies exactly on the line keep
/// both labels. An invalid horizon yields all-ones masks.
pub fn build_conditional_priors<T: Real>(
    h: &HorizonLine<T>,
    width: usize,
    height: usize,
    blur_sigma: T,
) -> ConditionalPriorMasks<T> {
    let mut out = ConditionalPriorMasks::uniform(width, height);
    if !h.valid {
        return out;
    }
    for col in 0..width {
        let line = h.row_at(T::from_count(col));
        for row in 0..height {
            let r = T::from_count(row);
            let i = row * width + col;
            if r < line {
                out.masks[Component::Water as usize][i] = T::zero();
            } else if r > line {
                out.masks[Component::Sky as usize][i] = T::zero();
            }
        }
    }
    for m in out.masks.iter_mut() {
        *m = gaussian_blur(m, width, height, blur_sigma);
    }
    out
}

/// Gaussian prior on the spatial part `[u, v]` of a component mean.
/// `cov = None` is a flat prior (zero precision). Color dimensions are never
/// constrained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HyperPrior<T: Real> {
    pub mean: Vector2<T>,
    pub cov: Option<Matrix2<T>>,
}

impl<T: Real> HyperPrior<T> {
    pub fn flat(mean: Vector2<T>) -> Self {
        Self { mean, cov: None }
    }

    /// 5-D mean with neutral color.
    pub fn mean5(&self) -> Vector5<T> {
        let half = T::c(0.5);
        Vector5::new(self.mean.x, self.mean.y, half, half, half)
    }

    /// 5x5 precision; zero outside the spatial block.
    pub fn precision5(&self) -> Matrix5<T> {
        let mut p = Matrix5::zeros();
        if let Some(inv) = self.cov.and_then(|c| c.try_inverse()) {
            p.fixed_view_mut::<2, 2>(0, 0).copy_from(&inv);
        }
        p
    }
}

/// Hyper-priors for the three Gaussian components together with the vertical
/// displacement of each mean from the horizon (fraction of image height).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HyperPriorSet<T: Real> {
    pub components: [HyperPrior<T>; 3],
    pub displacements: [T; 3],
}

impl<T: Real> HyperPriorSet<T> {
    /// Scene template: sky well above the horizon, a thin middle band just
    /// above it, water below.
    pub fn default_template() -> Self {
        let diag = |a: f64, b: f64| Matrix2::new(T::c(a), T::zero(), T::zero(), T::c(b));
        let half = T::c(0.5);
        Self {
            components: [
                HyperPrior {
                    mean: Vector2::new(half, T::c(0.2)),
                    cov: Some(diag(0.09, 0.01)),
                },
                HyperPrior {
                    mean: Vector2::new(half, T::c(0.45)),
                    cov: Some(diag(0.09, 0.0025)),
                },
                HyperPrior {
                    mean: Vector2::new(half, T::c(0.75)),
                    cov: Some(diag(0.09, 0.01)),
                },
            ],
            displacements: [T::c(-0.25), T::c(-0.04), T::c(0.25)],
        }
    }

    /// Same set with every prior flat.
    pub fn flat(&self) -> Self {
        let mut out = *self;
        for c in out.components.iter_mut() {
            c.cov = None;
        }
        out
    }
}

/// Projection of a 2x2 covariance onto matrices whose principal axes are the
/// horizon direction `(cos angle, sin angle)` and its normal:
/// `R^T ((R S R^T) o I) R` with `R` the rotation by `angle`.
pub fn proximal_projection<T: Real>(cov: &Matrix2<T>, angle: T) -> Matrix2<T> {
    let (s, c) = angle.sin_cos();
    let rot = Matrix2::new(c, s, -s, c);
    let rotated = rot * cov * rot.transpose();
    let diag = Matrix2::new(rotated[(0, 0)], T::zero(), T::zero(), rotated[(1, 1)]);
    let out = rot.transpose() * diag * rot;
    (out + out.transpose()) * T::c(0.5)
}

/// Places each component's mean prior at its learned displacement from the
/// horizon and aligns the middle component's spatial covariance with the
/// horizon slope. `h` is expressed in pixels of the `width x height` working
/// grid. An invalid horizon returns the template unchanged.
pub fn build_hyper_priors<T: Real>(
    h: &HorizonLine<T>,
    width: usize,
    height: usize,
    template: &HyperPriorSet<T>,
) -> HyperPriorSet<T> {
    if !h.valid {
        return *template;
    }
    let (w, hh) = (T::from_count(width), T::from_count(height));
    let half = T::c(0.5);
    let mut out = *template;
    for (prior, d) in out.components.iter_mut().zip(template.displacements) {
        let col = prior.mean.x * w - half;
        let row = h.row_at(col);
        prior.mean.y = (row + half) / hh + d;
    }
    // slope in normalized feature coordinates
    let angle = (h.slope() * w / hh).atan();
    let middle = &mut out.components[Component::Middle as usize];
    if let Some(cov) = middle.cov {
        middle.cov = Some(proximal_projection(&cov, angle));
    }
    out
}
