//! Nuisance estimators: conditional survival `S_n`, conditional censoring
//! survival `G_n` and the conditional exposure density `g_n`.

mod cox;
mod density;
mod step;

pub use cox::{fit_cox, fit_cox_raw, CoxModel, MAX_ITERATIONS, SCORE_TOLERANCE};
pub use density::{fit_conditional_density, silverman_bandwidth, DensityModel};
pub use step::StepCurve;

use crate::data::{Dataset, TestConfig};
use crate::diagnostics::{Clip, ClipCounter};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct NuisanceFit {
    /// Event-time model.
    pub survival: CoxModel,
    /// Censoring-time model, fitted on `1 - delta`.
    pub censoring: CoxModel,
    pub density: DensityModel,
}

impl NuisanceFit {
    /// Fits all three nuisances; returns fit-time warnings alongside.
    pub fn fit(dataset: &Dataset, config: &TestConfig) -> Result<(Self, Vec<String>)> {
        let (survival, censoring) =
            rayon::join(|| fit_cox(dataset, false), || fit_censoring(dataset));
        let (density, warnings) = fit_conditional_density(dataset, config)?;
        Ok((Self { survival: survival?, censoring: censoring?, density }, warnings))
    }

    pub fn floor(&self) -> f64 {
        self.density.floor
    }
}

/// A dataset without any censored subject has `G_n = 1` everywhere.
fn fit_censoring(dataset: &Dataset) -> Result<CoxModel> {
    if dataset.observations().iter().all(|o| o.delta) {
        return Ok(CoxModel {
            coefficients: vec![0.0; dataset.d() + 1],
            regressor_means: vec![0.0; dataset.d() + 1],
            jump_times: Vec::new(),
            baseline_increments: Vec::new(),
            iterations: 0,
            max_abs_score: 0.0,
        });
    }
    fit_cox(dataset, true)
}

/// `S_n(t|a,w)`, right-continuous in `t`.
pub fn conditional_survival(model: &CoxModel, t: f64, a: f64, w: &[f64]) -> f64 {
    model.survival_for_risk(t, model.relative_risk(a, w))
}

/// `S_n(t-|a,w)`.
pub fn conditional_survival_leftlim(model: &CoxModel, t: f64, a: f64, w: &[f64]) -> f64 {
    model.survival_left_for_risk(t, model.relative_risk(a, w))
}

/// `G_n(t-|a,w)`, raised to `floor` (and counted) when smaller.
pub fn conditional_censoring_surv_leftlim(
    model: &CoxModel,
    t: f64,
    a: f64,
    w: &[f64],
    floor: f64,
    clips: &ClipCounter,
) -> f64 {
    let g = model.survival_left_for_risk(t, model.relative_risk(a, w));
    clips.floor(g, floor, Clip::Censoring)
}

/// `R_n(y|a,w) = S_n(y-|a,w) G_n(y-|a,w)`, raised to the density floor.
pub fn at_risk_prob(fit: &NuisanceFit, y: f64, a: f64, w: &[f64], clips: &ClipCounter) -> f64 {
    let s = conditional_survival_leftlim(&fit.survival, y, a, w);
    let g = fit.censoring.survival_left_for_risk(y, fit.censoring.relative_risk(a, w));
    clips.floor(s * g, fit.floor(), Clip::AtRisk)
}
