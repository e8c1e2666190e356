//! Four-label scene model (sky, middle, water, outlier) fitted by EM with
//! MRF-coupled per-pixel priors gated by the horizon.

mod em;
mod features;
pub mod filter;
mod model;
mod priors;

pub use em::{e_step, em_fit, em_fit_observed, m_step, EmParams, MeanUpdate};
pub use features::FeatureImage;
pub use filter::MrfKernel;
pub use model::{
    posterior_responsibilities, ComponentState, DensityEval, GaussianComponent, MixtureModel, ModelState, COV_FLOOR,
    INIT_COLOR_VAR,
};
pub use priors::{
    build_conditional_priors, build_hyper_priors, proximal_projection, ConditionalPriorMasks, HyperPrior,
    HyperPriorSet,
};

pub const NUM_LABELS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Component {
    Sky = 0,
    Middle = 1,
    Water = 2,
    Outlier = 3,
}

impl Component {
    pub const ALL: [Component; NUM_LABELS] = [Component::Sky, Component::Middle, Component::Water, Component::Outlier];

    pub fn name(self) -> &'static str {
        match self {
            Component::Sky => "sky",
            Component::Middle => "middle",
            Component::Water => "water",
            Component::Outlier => "outlier",
        }
    }
}
