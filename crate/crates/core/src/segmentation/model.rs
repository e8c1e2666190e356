use std::fs;
use std::path::Path;

use nalgebra::{Matrix5, SymmetricEigen, Vector5};
use serde::{Deserialize, Serialize};

use super::features::FeatureImage;
use super::priors::{ConditionalPriorMasks, HyperPriorSet};
use super::{Component, NUM_LABELS};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Eigenvalue floor applied to every covariance before inversion.
pub const COV_FLOOR: f64 = 1e-6;

/// Color variance of a freshly initialized component.
pub const INIT_COLOR_VAR: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianComponent<T: Real> {
    pub mean: Vector5<T>,
    pub cov: Matrix5<T>,
}

impl<T: Real> GaussianComponent<T> {
    /// Symmetrizes `cov` and clamps its eigenvalues at [`COV_FLOOR`].
    pub fn new(mean: Vector5<T>, cov: Matrix5<T>) -> Result<Self> {
        if !mean.iter().chain(cov.iter()).all(|v| v.is_finite()) {
            return Err(Error::InvalidInput("non-finite Gaussian parameters".into()));
        }
        Ok(Self {
            mean,
            cov: floor_covariance(&cov),
        })
    }

    /// Evaluates densities over many points with one factorization.
    pub fn evaluator(&self) -> Option<DensityEval<T>> {
        let chol = self.cov.cholesky()?;
        let det = chol.l().diagonal().iter().fold(T::one(), |a, &d| a * d);
        let log_norm = -(T::c(5.0) * T::two_pi().ln()) * T::c(0.5) - det.ln();
        Some(DensityEval {
            mean: self.mean,
            precision: chol.inverse(),
            log_norm,
        })
    }

    pub fn cast<U: Real>(&self) -> GaussianComponent<U> {
        GaussianComponent {
            mean: self.mean.map(|v| U::c(v.as_f64())),
            cov: self.cov.map(|v| U::c(v.as_f64())),
        }
    }
}

pub(crate) fn floor_covariance<T: Real>(cov: &Matrix5<T>) -> Matrix5<T> {
    let sym = (cov + cov.transpose()) * T::c(0.5);
    let eig = SymmetricEigen::new(sym);
    let floor = T::c(COV_FLOOR);
    if eig.eigenvalues.iter().all(|&l| l >= floor) {
        return sym;
    }
    let clamped = eig.eigenvalues.map(|l| if l > floor { l } else { floor });
    let out = eig.eigenvectors * Matrix5::from_diagonal(&clamped) * eig.eigenvectors.transpose();
    (out + out.transpose()) * T::c(0.5)
}

pub struct DensityEval<T: Real> {
    mean: Vector5<T>,
    precision: Matrix5<T>,
    log_norm: T,
}

impl<T: Real> DensityEval<T> {
    #[inline]
    pub fn density(&self, y: &Vector5<T>) -> T {
        let d = y - self.mean;
        (self.log_norm - d.dot(&(self.precision * d)) * T::c(0.5)).exp()
    }
}

/// Three Gaussians (sky, middle, water) plus a uniform outlier density, with
/// per-pixel label priors and posteriors over a working grid.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureModel<T: Real> {
    pub components: [GaussianComponent<T>; 3],
    /// Outlier density; features live in the unit hypercube so this is one.
    pub uniform: T,
    pub width: usize,
    pub height: usize,
    pub priors: Vec<[T; NUM_LABELS]>,
    pub posteriors: Vec<[T; NUM_LABELS]>,
    /// EM iterations spent producing this model.
    pub iterations: usize,
    pub converged: bool,
    /// Mean absolute prior change of each iteration.
    pub changes: Vec<T>,
}

impl<T: Real> MixtureModel<T> {
    /// Cold-start model: spatial parameters from the hyper-priors, neutral
    /// color, uniform priors.
    pub fn initial(width: usize, height: usize, hyp: &HyperPriorSet<T>) -> Self {
        let components = std::array::from_fn(|k| {
            let prior = &hyp.components[k];
            let mut cov = Matrix5::from_diagonal_element(T::c(INIT_COLOR_VAR));
            let spatial = prior
                .cov
                .unwrap_or_else(|| nalgebra::Matrix2::from_diagonal_element(T::c(1.0 / 12.0)));
            cov.fixed_view_mut::<2, 2>(0, 0).copy_from(&spatial);
            GaussianComponent {
                mean: prior.mean5(),
                cov: floor_covariance(&cov),
            }
        });
        let uniform_row = [T::c(0.25); NUM_LABELS];
        Self {
            components,
            uniform: T::one(),
            width,
            height,
            priors: vec![uniform_row; width * height],
            posteriors: vec![uniform_row; width * height],
            iterations: 0,
            converged: false,
            changes: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.priors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.priors.is_empty()
    }

    /// Arg-max label per pixel of the posteriors; ties resolve to the lower
    /// label index.
    pub fn labels(&self) -> Vec<Component> {
        self.posteriors.iter().map(argmax_label).collect()
    }

    pub fn to_state(&self) -> ModelState {
        ModelState::from_model(self)
    }
}

pub(crate) fn argmax_label<T: Real>(row: &[T; NUM_LABELS]) -> Component {
    let mut best = 0;
    for k in 1..NUM_LABELS {
        if row[k] > row[best] {
            best = k;
        }
    }
    Component::ALL[best]
}

/// Normalizes each row to sum one. Rows without mass become uniform; returns
/// how many rows that happened to.
pub(crate) fn normalize_rows<T: Real>(rows: &mut [[T; NUM_LABELS]]) -> usize {
    let mut degenerate = 0;
    for row in rows.iter_mut() {
        let sum = row.iter().fold(T::zero(), |a, &b| a + b);
        if sum > T::zero() && sum.is_finite() {
            for v in row.iter_mut() {
                *v /= sum;
            }
        } else {
            *row = [T::c(0.25); NUM_LABELS];
            degenerate += 1;
        }
    }
    degenerate
}

/// Per-pixel posterior over the four labels given the model's priors gated
/// by the horizon masks:
/// `p_ik ~ phi(y_i | mu_k, Sigma_k) * pi_ik * mask_ik` and `p_i4 ~ U * pi_i4 * mask_i4`.
pub fn posterior_responsibilities<T: Real>(
    model: &MixtureModel<T>,
    img: &FeatureImage<T>,
    masks: &ConditionalPriorMasks<T>,
) -> Result<Vec<[T; NUM_LABELS]>> {
    check_dims(model, img, masks)?;
    let evals = evaluators(&model.components)?;
    let mut out: Vec<[T; NUM_LABELS]> = img
        .features
        .iter()
        .zip(&model.priors)
        .enumerate()
        .map(|(i, (y, pi))| {
            let m = masks.at(i);
            [
                evals[0].density(y) * pi[0] * m[0],
                evals[1].density(y) * pi[1] * m[1],
                evals[2].density(y) * pi[2] * m[2],
                model.uniform * pi[3] * m[3],
            ]
        })
        .collect();
    let degenerate = normalize_rows(&mut out);
    if degenerate > 0 {
        log::debug!("{degenerate} pixels had no posterior mass; set to uniform");
    }
    Ok(out)
}

pub(crate) fn evaluators<T: Real>(components: &[GaussianComponent<T>; 3]) -> Result<[DensityEval<T>; 3]> {
    let mk = |k: usize| {
        components[k].evaluator().ok_or_else(|| Error::NumericalDegeneracy {
            component: Component::ALL[k].name(),
            reason: "covariance is not positive definite".into(),
        })
    };
    Ok([mk(0)?, mk(1)?, mk(2)?])
}

pub(crate) fn check_dims<T: Real>(
    model: &MixtureModel<T>,
    img: &FeatureImage<T>,
    masks: &ConditionalPriorMasks<T>,
) -> Result<()> {
    if model.width != img.width
        || model.height != img.height
        || masks.width != img.width
        || masks.height != img.height
    {
        return Err(Error::DimensionMismatch(format!(
            "model {}x{}, features {}x{}, masks {}x{}",
            model.width, model.height, img.width, img.height, masks.width, masks.height
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentState {
    pub label: String,
    pub mean: [f64; 5],
    /// Row-major 5x5.
    pub cov: Vec<f64>,
}

/// Serializable snapshot of a fitted model, used for warm starts across runs
/// and for debugging.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelState {
    pub width: usize,
    pub height: usize,
    pub components: Vec<ComponentState>,
    pub uniform: f64,
    pub iterations: usize,
    pub converged: bool,
    pub changes: Vec<f64>,
    pub priors: Vec<[f64; NUM_LABELS]>,
    pub posteriors: Vec<[f64; NUM_LABELS]>,
}

impl ModelState {
    pub fn from_model<T: Real>(m: &MixtureModel<T>) -> Self {
        let rows = |v: &[[T; NUM_LABELS]]| v.iter().map(|r| r.map(|x| x.as_f64())).collect();
        Self {
            width: m.width,
            height: m.height,
            components: m
                .components
                .iter()
                .enumerate()
                .map(|(k, c)| ComponentState {
                    label: Component::ALL[k].name().to_string(),
                    mean: std::array::from_fn(|i| c.mean[i].as_f64()),
                    cov: (0..25).map(|i| c.cov[(i / 5, i % 5)].as_f64()).collect(),
                })
                .collect(),
            uniform: m.uniform.as_f64(),
            iterations: m.iterations,
            converged: m.converged,
            changes: m.changes.iter().map(|c| c.as_f64()).collect(),
            priors: rows(&m.priors),
            posteriors: rows(&m.posteriors),
        }
    }

    pub fn to_model<T: Real>(&self) -> Result<MixtureModel<T>> {
        let n = self.width * self.height;
        if self.components.len() != 3 || self.priors.len() != n || self.posteriors.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "model state for {}x{} has {} components, {} priors, {} posteriors",
                self.width,
                self.height,
                self.components.len(),
                self.priors.len(),
                self.posteriors.len()
            )));
        }
        let mut comps = Vec::with_capacity(3);
        for c in &self.components {
            if c.cov.len() != 25 {
                return Err(Error::DimensionMismatch(format!("covariance of {} has {} entries", c.label, c.cov.len())));
            }
            comps.push(GaussianComponent::new(
                Vector5::from_iterator(c.mean.iter().map(|&v| T::c(v))),
                Matrix5::from_row_iterator(c.cov.iter().map(|&v| T::c(v))),
            )?);
        }
        let rows = |v: &[[f64; NUM_LABELS]]| v.iter().map(|r| r.map(T::c)).collect();
        Ok(MixtureModel {
            components: [comps[0], comps[1], comps[2]],
            uniform: T::c(self.uniform),
            width: self.width,
            height: self.height,
            priors: rows(&self.priors),
            posteriors: rows(&self.posteriors),
            iterations: self.iterations,
            converged: self.converged,
            changes: self.changes.iter().map(|&c| T::c(c)).collect(),
        })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, serde_json::to_string(self)? + "\n").map_err(|e| Error::io(path, e))
    }
}
