//! Plug-in and one-step estimation of linear contrasts of the centered
//! counterfactual survival curve.
//!
//! For a contrast `h`, the plug-in is `psi_n(h) = n^-1 sum_i thetabar(A_i) h(A_i)`
//! and the one-step adds the empirical mean of
//!
//! ```text
//! D_n(O_i; h) = [H_n(t ^ Y_i, A_i, W_i) - 1(Y_i <= t, D_i = 1) S_n(Y_i-) / (S_n(Y_i) R_n(Y_i))] Z_n(O_i; h)
//! Z_n(O_i; h) = (h(A_i) - mean h) S_n(t|A_i,W_i) [n^-1 sum_j g_n(A_i|W_j)] / g_n(A_i|W_i)
//! ```
//!
//! Everything that does not depend on `h` is computed once per subject, so a
//! batch of contrasts costs `O(n)` per contrast.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::data::{Dataset, Observation};
use crate::diagnostics::{Clip, ClipCounter, ClipCounts};
use crate::nuisance::{CoxModel, NuisanceFit};

/// A real-valued function of the exposure.
pub trait Contrast: Sync {
    fn eval(&self, a: f64) -> f64;
}

impl<F: Fn(f64) -> f64 + Sync> Contrast for F {
    fn eval(&self, a: f64) -> f64 {
        self(a)
    }
}

/// Plug-in counterfactual survival curve at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaCurve {
    /// The observed exposures in row order, followed by any extra levels.
    pub eval_exposures: Vec<f64>,
    pub theta: Vec<f64>,
    /// `theta` minus its mean over the observed exposures.
    pub theta_bar: Vec<f64>,
    pub t: f64,
    pub n_observed: usize,
}

impl ThetaCurve {
    pub fn observed_bar(&self) -> &[f64] {
        &self.theta_bar[..self.n_observed]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EifMatrix {
    /// `n x m`, entry `(i, j) = D_n(O_i; h_j)`.
    pub values: DMatrix<f64>,
    /// `values` with every column centered at zero.
    pub centered: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PsiVector {
    pub plugin: Vec<f64>,
    pub onestep: Vec<f64>,
    pub eif: EifMatrix,
}

/// Survival at the evaluation time for relative risk `r`, using the model's
/// increments up to and including `t`.
fn survival_through(model: &CoxModel, end: usize, r: f64) -> f64 {
    (0..end).map(|k| 1.0 - model.hazard_increment(k, r)).product::<f64>().clamp(0.0, 1.0)
}

/// Splits the event model's linear predictor into an exposure part and a
/// covariate part so `S_n(t|a, W_k)` can be swept over `a` cheaply.
struct SurvivalSweep<'a> {
    model: &'a CoxModel,
    end: usize,
    covariate_risk: Vec<f64>,
}

impl<'a> SurvivalSweep<'a> {
    fn new(model: &'a CoxModel, dataset: &Dataset, t: f64) -> Self {
        let end = model.jump_times.partition_point(|&u| u <= t);
        let covariate_risk = dataset
            .observations()
            .iter()
            .map(|o| model.linear_predictor(model.regressor_means[0], &o.w).exp())
            .collect();
        Self { model, end, covariate_risk }
    }

    /// `theta_n^a(t) = n^-1 sum_k S_n(t|a, W_k)`.
    fn theta(&self, a: f64) -> f64 {
        let ra = (self.model.coefficients[0] * (a - self.model.regressor_means[0])).exp();
        let n = self.covariate_risk.len() as f64;
        self.covariate_risk.iter().map(|&rw| survival_through(self.model, self.end, ra * rw)).sum::<f64>() / n
    }
}

/// `theta_n^a(t)` for a single exposure level.
pub fn theta_plugin(fit: &NuisanceFit, dataset: &Dataset, t: f64, a: f64) -> f64 {
    SurvivalSweep::new(&fit.survival, dataset, t).theta(a)
}

/// Plug-in curve at every observed exposure plus the `extra` levels.
pub fn theta_curve(fit: &NuisanceFit, dataset: &Dataset, t: f64, extra: &[f64]) -> ThetaCurve {
    let sweep = SurvivalSweep::new(&fit.survival, dataset, t);
    let eval_exposures: Vec<f64> =
        dataset.observations().iter().map(|o| o.a).chain(extra.iter().copied()).collect();
    let theta: Vec<f64> = eval_exposures.par_iter().map(|&a| sweep.theta(a)).collect();
    let n = dataset.n();
    let mean = theta[..n].iter().sum::<f64>() / n as f64;
    let theta_bar = theta.iter().map(|v| v - mean).collect();
    ThetaCurve { eval_exposures, theta, theta_bar, t, n_observed: n }
}

/// `H_n(t ^ y, a, w)`: the sum over event-model jumps `u <= t ^ y` of
/// `dLambda_n(u|a,w) / (S_n(u|a,w) G_n(u-|a,w))`. Both denominators are
/// raised to the floor when smaller.
pub fn martingale_integral(
    fit: &NuisanceFit,
    t: f64,
    y: f64,
    a: f64,
    w: &[f64],
    clips: &ClipCounter,
) -> f64 {
    let floor = fit.floor();
    let surv = &fit.survival;
    let cens = &fit.censoring;
    let horizon = t.min(y);
    let rs = surv.relative_risk(a, w);
    let rc = cens.relative_risk(a, w);
    let mut s = 1.0;
    let mut g = 1.0;
    let mut next_c = 0;
    let mut total = 0.0;
    for (k, &u) in surv.jump_times.iter().enumerate() {
        if u > horizon {
            break;
        }
        while next_c < cens.jump_times.len() && cens.jump_times[next_c] < u {
            g *= 1.0 - cens.hazard_increment(next_c, rc);
            next_c += 1;
        }
        let dl = surv.hazard_increment(k, rs);
        if surv.baseline_increments[k] * rs > 1.0 {
            clips.record(Clip::Hazard);
        }
        s *= 1.0 - dl;
        let s_guarded = clips.floor(s.clamp(0.0, 1.0), floor, Clip::Survival);
        let g_guarded = clips.floor(g.clamp(0.0, 1.0), floor, Clip::Censoring);
        total += dl / (s_guarded * g_guarded);
    }
    total
}

/// The bracket of the EIF: `H_n(t ^ Y) - 1(Y <= t, D = 1) S_n(Y-) / (S_n(Y) R_n(Y))`.
fn eif_bracket(fit: &NuisanceFit, t: f64, obs: &Observation, clips: &ClipCounter) -> f64 {
    let h = martingale_integral(fit, t, obs.y, obs.a, &obs.w, clips);
    if !(obs.delta && obs.y <= t) {
        return h;
    }
    let floor = fit.floor();
    let rs = fit.survival.relative_risk(obs.a, &obs.w);
    let s_left = fit.survival.survival_left_for_risk(obs.y, rs);
    let s_at = clips.floor(fit.survival.survival_for_risk(obs.y, rs), floor, Clip::Survival);
    let r = crate::nuisance::at_risk_prob(fit, obs.y, obs.a, &obs.w, clips);
    h - s_left / (s_at * r)
}

/// `D_n(O_i; h)` computed from scratch for row `i`, given `h(A_i)` and the
/// sample mean of `h(A_m)`.
pub fn eif_row(
    fit: &NuisanceFit,
    dataset: &Dataset,
    t: f64,
    i: usize,
    h_value: f64,
    h_mean: f64,
    clips: &ClipCounter,
) -> f64 {
    let obs = &dataset.observations()[i];
    let floor = fit.floor();
    let n = dataset.n() as f64;
    let bracket = eif_bracket(fit, t, obs, clips);
    let s_t = crate::nuisance::conditional_survival(&fit.survival, t, obs.a, &obs.w);
    let g_mean = dataset
        .observations()
        .iter()
        .map(|o| clips.floor(fit.density.eval_raw(obs.a, &o.w), floor, Clip::Density))
        .sum::<f64>()
        / n;
    let g_own = clips.floor(fit.density.eval_raw(obs.a, &obs.w), floor, Clip::Density);
    bracket * (h_value - h_mean) * s_t * g_mean / g_own
}

/// `n^-1 sum_i thetabar(A_i) h(A_i)` over the observed exposures.
pub fn psi_plugin(theta: &ThetaCurve, h_values: &[f64]) -> f64 {
    let bar = theta.observed_bar();
    assert_eq!(bar.len(), h_values.len(), "one contrast value per observation");
    bar.iter().zip(h_values).map(|(t, h)| t * h).sum::<f64>() / bar.len() as f64
}

/// Per-subject factors shared by every contrast, plus the plug-in curve.
#[derive(Debug, Clone)]
pub struct OneStepEstimator {
    theta: ThetaCurve,
    exposures: Vec<f64>,
    /// `D_n(O_i; h) = (h(A_i) - mean h) * factor_i`.
    factor: Vec<f64>,
    clips: ClipCounts,
}

impl OneStepEstimator {
    pub fn new(fit: &NuisanceFit, dataset: &Dataset, t: f64) -> Self {
        let clips = ClipCounter::default();
        let floor = fit.floor();
        let obs = dataset.observations();
        let n = obs.len();
        let theta = theta_curve(fit, dataset, t, &[]);
        let exposures = dataset.exposures();
        let ws: Vec<Vec<f64>> = obs.iter().map(|o| o.w.clone()).collect();
        let g = fit.density.pairwise_raw(&exposures, &ws);
        let factor = (0..n)
            .into_par_iter()
            .map(|i| {
                let o = &obs[i];
                let bracket = eif_bracket(fit, t, o, &clips);
                let s_t = fit.survival.survival_for_risk(t, fit.survival.relative_risk(o.a, &o.w));
                let g_mean =
                    g.row(i).iter().map(|&v| clips.floor(v, floor, Clip::Density)).sum::<f64>() / n as f64;
                let g_own = clips.floor(g[(i, i)], floor, Clip::Density);
                bracket * s_t * g_mean / g_own
            })
            .collect();
        Self { theta, exposures, factor, clips: clips.snapshot() }
    }

    pub fn theta(&self) -> &ThetaCurve {
        &self.theta
    }

    pub fn clips(&self) -> ClipCounts {
        self.clips
    }

    /// The `h`-free factor of row `i`.
    pub fn factor(&self, i: usize) -> f64 {
        self.factor[i]
    }

    pub fn eif_row(&self, i: usize, h_value: f64, h_mean: f64) -> f64 {
        (h_value - h_mean) * self.factor[i]
    }

    pub fn psi_plugin<C: Contrast + ?Sized>(&self, h: &C) -> f64 {
        let values: Vec<f64> = self.exposures.iter().map(|&a| h.eval(a)).collect();
        psi_plugin(&self.theta, &values)
    }

    pub fn psi_onestep_batch<C: Contrast>(&self, generators: &[C]) -> PsiVector {
        let n = self.exposures.len();
        let nf = n as f64;
        let columns: Vec<(f64, f64, Vec<f64>)> = generators
            .par_iter()
            .map(|gen| {
                let h: Vec<f64> = self.exposures.iter().map(|&a| gen.eval(a)).collect();
                let h_mean = h.iter().sum::<f64>() / nf;
                let plugin = psi_plugin(&self.theta, &h);
                let col: Vec<f64> = (0..n).map(|i| self.eif_row(i, h[i], h_mean)).collect();
                let correction = col.iter().sum::<f64>() / nf;
                (plugin, plugin + correction, col)
            })
            .collect();
        let m = columns.len();
        let values = DMatrix::from_fn(n, m, |i, j| columns[j].2[i]);
        let mut centered = values.clone();
        for mut col in centered.column_iter_mut() {
            let mean = col.sum() / nf;
            col.add_scalar_mut(-mean);
        }
        PsiVector {
            plugin: columns.iter().map(|c| c.0).collect(),
            onestep: columns.iter().map(|c| c.1).collect(),
            eif: EifMatrix { values, centered },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nuisance::DensityModel;

    fn cox(beta: f64, times: Vec<f64>, incs: Vec<f64>) -> CoxModel {
        CoxModel {
            coefficients: vec![beta],
            regressor_means: vec![0.0],
            jump_times: times,
            baseline_increments: incs,
            iterations: 0,
            max_abs_score: 0.0,
        }
    }

    fn kde(train: Vec<f64>) -> DensityModel {
        let n = train.len();
        DensityModel {
            bandwidth_a: 0.5,
            bandwidth_w: vec![],
            train_a: train,
            train_w: vec![vec![]; n],
            floor: 1e-3,
        }
    }

    #[test]
    fn martingale_integral_single_jump() {
        let fit = NuisanceFit {
            survival: cox(0.0, vec![1.0], vec![0.25]),
            censoring: cox(0.0, vec![], vec![]),
            density: kde(vec![0.0, 1.0]),
        };
        let clips = ClipCounter::default();
        assert_eq!(martingale_integral(&fit, 5.0, 0.5, 0.0, &[], &clips), 0.0);
        let h = martingale_integral(&fit, 5.0, 2.0, 0.0, &[], &clips);
        assert!((h - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn martingale_integral_monotone_in_y() {
        let fit = NuisanceFit {
            survival: cox(0.4, vec![1.0, 2.0, 3.0, 5.0], vec![0.1, 0.2, 0.15, 0.3]),
            censoring: cox(-0.2, vec![1.5, 2.0, 4.0], vec![0.1, 0.3, 0.2]),
            density: kde(vec![0.0, 1.0]),
        };
        let clips = ClipCounter::default();
        let mut prev = 0.0;
        for k in 0..40 {
            let y = k as f64 * 0.2;
            let h = martingale_integral(&fit, 4.0, y, 0.7, &[], &clips);
            assert!(h >= prev);
            prev = h;
        }
    }

    #[test]
    fn psi_plugin_two_terms() {
        let theta = ThetaCurve {
            eval_exposures: vec![0.0, 1.0],
            theta: vec![0.6, 0.4],
            theta_bar: vec![0.1, -0.1],
            t: 1.0,
            n_observed: 2,
        };
        assert!((psi_plugin(&theta, &[1.0, -1.0]) - 0.1).abs() < 1e-15);
        assert!(psi_plugin(&theta, &[3.0, 3.0]).abs() < 1e-15);
    }

    #[test]
    fn theta_averages_covariate_profiles() {
        // S(t|a,w) depends on w only: profile risks chosen so S = 0.2 and 0.6.
        let model = CoxModel {
            coefficients: vec![0.0, 1.0],
            regressor_means: vec![0.0, 0.0],
            jump_times: vec![1.0],
            baseline_increments: vec![0.4],
            iterations: 0,
            max_abs_score: 0.0,
        };
        // 1 - 0.4 r = 0.2 -> r = 2; 1 - 0.4 r = 0.6 -> r = 1
        let w_hi = 2f64.ln();
        let rows = vec![
            Observation { w: vec![w_hi], a: 0.0, y: 2.0, delta: true },
            Observation { w: vec![0.0], a: 1.0, y: 2.0, delta: true },
            Observation { w: vec![w_hi], a: 2.0, y: 2.0, delta: true },
            Observation { w: vec![0.0], a: 3.0, y: 2.0, delta: true },
        ];
        let ds = Dataset::new(rows).unwrap();
        let fit = NuisanceFit { survival: model.clone(), censoring: cox(0.0, vec![], vec![]), density: kde(vec![0.0, 1.0]) };
        assert!((theta_plugin(&fit, &ds, 1.5, 0.7) - 0.4).abs() < 1e-12);
        assert_eq!(theta_plugin(&fit, &ds, 0.0, 0.7), 1.0);
    }
}
