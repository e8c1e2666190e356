use nalgebra::{Matrix5, Vector5};

use super::features::FeatureImage;
use super::filter::{convolve3x3, MrfKernel};
use super::model::{check_dims, floor_covariance, normalize_rows, posterior_responsibilities, GaussianComponent, MixtureModel};
use super::priors::{ConditionalPriorMasks, HyperPriorSet};
use super::{Component, NUM_LABELS};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Form of the hyper-prior mean update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MeanUpdate {
    /// `mu = Lambda (P_mu mu_mu + Sigma^-1 ybar)`, `Lambda = (Sigma^-1 + P_mu)^-1`,
    /// with `ybar` the responsibility-weighted mean.
    #[default]
    Conjugate,
    /// `mu = beta^-1 (Lambda Sigma^-1 sum_i q_i y_i - P_mu mu_mu)`, kept for comparison.
    Literal,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmParams<T: Real> {
    pub max_iters: usize,
    /// Stop once the mean absolute change of the priors falls below this.
    pub tol: T,
    pub mean_update: MeanUpdate,
}

impl<T: Real> Default for EmParams<T> {
    fn default() -> Self {
        Self {
            max_iters: 10,
            tol: T::c(1e-3),
            mean_update: MeanUpdate::Conjugate,
        }
    }
}

/// `rownorm(conv(xi o x o conv(x, lambda), lambda_1))` applied per label.
fn smooth<T: Real>(
    field: &[[T; NUM_LABELS]],
    width: usize,
    height: usize,
    kernel: &MrfKernel<T>,
) -> Vec<[T; NUM_LABELS]> {
    let lambda1 = kernel.with_unit_center();
    let n = field.len();
    let mut coupled = vec![[T::zero(); NUM_LABELS]; n];
    let mut channel = vec![T::zero(); n];
    for k in 0..NUM_LABELS {
        for (c, row) in channel.iter_mut().zip(field) {
            *c = row[k];
        }
        let neigh = convolve3x3(&channel, width, height, kernel.weights());
        for i in 0..n {
            coupled[i][k] = field[i][k] * neigh[i];
        }
    }
    normalize_rows(&mut coupled);
    let mut out = vec![[T::zero(); NUM_LABELS]; n];
    for k in 0..NUM_LABELS {
        for (c, row) in channel.iter_mut().zip(&coupled) {
            *c = row[k];
        }
        let spread = convolve3x3(&channel, width, height, &lambda1);
        for i in 0..n {
            out[i][k] = spread[i];
        }
    }
    normalize_rows(&mut out);
    out
}

/// Smoothed priors `s`, smoothed posteriors `q` and the updated prior field
/// `rownorm((s + q) o mask / 4)`.
pub fn e_step<T: Real>(
    priors: &[[T; NUM_LABELS]],
    posteriors: &[[T; NUM_LABELS]],
    masks: &ConditionalPriorMasks<T>,
    kernel: &MrfKernel<T>,
) -> (Vec<[T; NUM_LABELS]>, Vec<[T; NUM_LABELS]>, Vec<[T; NUM_LABELS]>) {
    let (w, h) = (masks.width, masks.height);
    let s = smooth(priors, w, h, kernel);
    let q = smooth(posteriors, w, h, kernel);
    let quarter = T::c(0.25);
    let mut pi: Vec<[T; NUM_LABELS]> = (0..s.len())
        .map(|i| {
            let m = masks.at(i);
            std::array::from_fn(|k| (s[i][k] + q[i][k]) * quarter * m[k])
        })
        .collect();
    normalize_rows(&mut pi);
    (s, q, pi)
}

/// Re-estimates the three Gaussians from responsibilities `q`. A component
/// without responsibility mass keeps its previous parameters.
pub fn m_step<T: Real>(
    img: &FeatureImage<T>,
    q: &[[T; NUM_LABELS]],
    previous: &[GaussianComponent<T>; 3],
    hyp: &HyperPriorSet<T>,
    mode: MeanUpdate,
) -> Result<[GaussianComponent<T>; 3]> {
    let mut out = *previous;
    for k in 0..3 {
        let name = Component::ALL[k].name();
        let degenerate = |reason: &str| Error::NumericalDegeneracy {
            component: name,
            reason: reason.to_string(),
        };
        let mut beta = T::zero();
        let mut sum = Vector5::zeros();
        for (y, row) in img.features.iter().zip(q) {
            beta += row[k];
            sum += y * row[k];
        }
        if !(beta > T::c(1e-9)) {
            continue;
        }
        let prior = &hyp.components[k];
        let p_mu = prior.precision5();
        let mu_mu = prior.mean5();
        let sigma_inv = previous[k]
            .cov
            .try_inverse()
            .ok_or_else(|| degenerate("covariance not invertible"))?;
        let lambda = (sigma_inv + p_mu)
            .try_inverse()
            .ok_or_else(|| degenerate("posterior precision not invertible"))?;
        let mean = match mode {
            MeanUpdate::Conjugate => lambda * (p_mu * mu_mu + sigma_inv * (sum / beta)),
            MeanUpdate::Literal => (lambda * sigma_inv * sum - p_mu * mu_mu) / beta,
        };
        let mut cov = Matrix5::zeros();
        for (y, row) in img.features.iter().zip(q) {
            let d = y - mean;
            cov += d * d.transpose() * row[k];
        }
        cov /= beta;
        if !mean.iter().chain(cov.iter()).all(|v| v.is_finite()) {
            return Err(degenerate("non-finite parameters after update"));
        }
        out[k] = GaussianComponent {
            mean,
            cov: floor_covariance(&cov),
        };
    }
    Ok(out)
}

/// Fits the mixture to one image. Each iteration computes posteriors under
/// the current model, smooths priors and posteriors through the MRF kernel,
/// and re-estimates the Gaussians. `observer` sees the model after every
/// iteration.
pub fn em_fit_observed<T: Real>(
    img: &FeatureImage<T>,
    masks: &ConditionalPriorMasks<T>,
    hyp: &HyperPriorSet<T>,
    warm_start: Option<&MixtureModel<T>>,
    kernel: &MrfKernel<T>,
    params: &EmParams<T>,
    mut observer: impl FnMut(&MixtureModel<T>),
) -> Result<MixtureModel<T>> {
    let mut model = match warm_start {
        Some(prev) if prev.width == img.width && prev.height == img.height => MixtureModel {
            iterations: 0,
            converged: false,
            changes: Vec::new(),
            ..prev.clone()
        },
        _ => MixtureModel::initial(img.width, img.height, hyp),
    };
    check_dims(&model, img, masks)?;
    let n = T::from_count(img.len() * NUM_LABELS);
    for _ in 0..params.max_iters {
        let p = posterior_responsibilities(&model, img, masks)?;
        let (_, q, pi) = e_step(&model.priors, &p, masks, kernel);
        model.components = m_step(img, &q, &model.components, hyp, params.mean_update)?;
        let change = model
            .priors
            .iter()
            .zip(&pi)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (*x - *y).abs()))
            .fold(T::zero(), |a, b| a + b)
            / n;
        model.priors = pi;
        model.posteriors = q;
        model.iterations += 1;
        model.changes.push(change);
        observer(&model);
        if change < params.tol {
            model.converged = true;
            break;
        }
    }
    Ok(model)
}

pub fn em_fit<T: Real>(
    img: &FeatureImage<T>,
    masks: &ConditionalPriorMasks<T>,
    hyp: &HyperPriorSet<T>,
    warm_start: Option<&MixtureModel<T>>,
    kernel: &MrfKernel<T>,
    params: &EmParams<T>,
) -> Result<MixtureModel<T>> {
    em_fit_observed(img, masks, hyp, warm_start, kernel, params, |_| {})
}
