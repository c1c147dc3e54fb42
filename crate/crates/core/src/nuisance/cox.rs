//! Cox proportional hazards with Breslow ties and the Breslow baseline.
//!
//! Regressors are `(a, w1..wd)`, centered at their sample means. Constant
//! columns carry an identically zero score and are pinned at coefficient 0.

use nalgebra::{DMatrix, DVector};

use super::step::StepCurve;
use crate::data::Dataset;
use crate::error::{Error, Result};

pub const SCORE_TOLERANCE: f64 = 1e-8;
pub const MAX_ITERATIONS: usize = 50;

#[derive(Debug, Clone, PartialEq)]
pub struct CoxModel {
    /// One coefficient per regressor `(a, w1..wd)`.
    pub coefficients: Vec<f64>,
    pub regressor_means: Vec<f64>,
    /// Distinct times with at least one modeled event, increasing.
    pub jump_times: Vec<f64>,
    /// Breslow increments `dLambda_0(u)` on the centered scale.
    pub baseline_increments: Vec<f64>,
    pub iterations: usize,
    /// Sup-norm of the partial-likelihood score at the returned coefficients.
    pub max_abs_score: f64,
}

/// Fits the event model, or the censoring model when
/// `use_censoring_indicator` is set (indicator `1 - delta`).
pub fn fit_cox(dataset: &Dataset, use_censoring_indicator: bool) -> Result<CoxModel> {
    let obs = dataset.observations();
    let times: Vec<f64> = obs.iter().map(|o| o.y).collect();
    let events: Vec<bool> = obs.iter().map(|o| o.delta != use_censoring_indicator).collect();
    let x: Vec<Vec<f64>> = obs
        .iter()
        .map(|o| std::iter::once(o.a).chain(o.w.iter().copied()).collect())
        .collect();
    fit_cox_raw(&times, &events, &x)
}

/// Sorted view of the data grouped by distinct time, largest first.
struct RiskSets {
    /// Subject indices in decreasing time order.
    order: Vec<usize>,
    /// `(start, end)` ranges into `order` sharing one time value.
    groups: Vec<(usize, usize)>,
}

impl RiskSets {
    fn new(times: &[f64]) -> Self {
        let mut order: Vec<usize> = (0..times.len()).collect();
        order.sort_by(|&i, &j| times[j].total_cmp(&times[i]).then(i.cmp(&j)));
        let mut groups = Vec::new();
        let mut start = 0;
        for k in 1..=order.len() {
            if k == order.len() || times[order[k]] != times[order[start]] {
                groups.push((start, k));
                start = k;
            }
        }
        Self { order, groups }
    }
}

struct Evaluation {
    loglik: f64,
    score: DVector<f64>,
    information: DMatrix<f64>,
}

struct Problem<'a> {
    events: &'a [bool],
    /// Centered regressors restricted to the active columns.
    x: Vec<Vec<f64>>,
    risk: RiskSets,
}

impl Problem<'_> {
    fn eta(&self, beta: &DVector<f64>) -> Vec<f64> {
        self.x.iter().map(|xi| xi.iter().zip(beta.iter()).map(|(a, b)| a * b).sum()).collect()
    }

    fn loglik(&self, beta: &DVector<f64>) -> f64 {
        self.evaluate(beta, false).loglik
    }

    fn evaluate(&self, beta: &DVector<f64>, derivatives: bool) -> Evaluation {
        let p = beta.len();
        let eta = self.eta(beta);
        let shift = eta.iter().copied().fold(f64::NEG_INFINITY, f64::max).max(0.0);
        let mut s0 = 0.0;
        let mut s1 = DVector::<f64>::zeros(p);
        let mut s2 = DMatrix::<f64>::zeros(p, p);
        let mut loglik = 0.0;
        let mut score = DVector::<f64>::zeros(p);
        let mut information = DMatrix::<f64>::zeros(p, p);
        for &(start, end) in &self.risk.groups {
            let mut d = 0usize;
            let mut xsum = DVector::<f64>::zeros(p);
            let mut eta_sum = 0.0;
            for &i in &self.risk.order[start..end] {
                let r = (eta[i] - shift).exp();
                s0 += r;
                if derivatives {
                    for a in 0..p {
                        s1[a] += r * self.x[i][a];
                        for b in 0..=a {
                            s2[(a, b)] += r * self.x[i][a] * self.x[i][b];
                        }
                    }
                }
                if self.events[i] {
                    d += 1;
                    eta_sum += eta[i];
                    if derivatives {
                        for a in 0..p {
                            xsum[a] += self.x[i][a];
                        }
                    }
                }
            }
            if d == 0 {
                continue;
            }
            let df = d as f64;
            loglik += eta_sum - df * (s0.ln() + shift);
            if derivatives {
                let mean = &s1 / s0;
                score += xsum - &mean * df;
                for a in 0..p {
                    for b in 0..=a {
                        let v = df * (s2[(a, b)] / s0 - mean[a] * mean[b]);
                        information[(a, b)] += v;
                        if a != b {
                            information[(b, a)] += v;
                        }
                    }
                }
            }
        }
        Evaluation { loglik, score, information }
    }
}

fn newton_direction(information: &DMatrix<f64>, score: &DVector<f64>) -> DVector<f64> {
    if let Some(ch) = information.clone().cholesky() {
        return ch.solve(score);
    }
    let trace = information.trace().abs().max(1.0);
    let ridged = information + DMatrix::identity(score.len(), score.len()) * (1e-8 * trace);
    ridged.lu().solve(score).unwrap_or_else(|| score * (1.0 / trace))
}

/// Fits from raw arrays; `x` holds one regressor row per subject.
pub fn fit_cox_raw(times: &[f64], events: &[bool], x: &[Vec<f64>]) -> Result<CoxModel> {
    fit_cox_limited(times, events, x, MAX_ITERATIONS)
}

fn fit_cox_limited(
    times: &[f64],
    events: &[bool],
    x: &[Vec<f64>],
    max_iterations: usize,
) -> Result<CoxModel> {
    let n = times.len();
    if n == 0 || events.len() != n || x.len() != n {
        return Err(Error::InvalidData("Cox fit: mismatched or empty inputs".into()));
    }
    if !events.iter().any(|&e| e) {
        return Err(Error::NoEvents);
    }
    let p_all = x[0].len();
    let means: Vec<f64> = (0..p_all)
        .map(|k| x.iter().map(|r| r[k]).sum::<f64>() / n as f64)
        .collect();
    let active: Vec<usize> = (0..p_all).filter(|&k| x.iter().any(|r| r[k] != x[0][k])).collect();
    let problem = Problem {
        events,
        x: x.iter()
            .map(|r| active.iter().map(|&k| r[k] - means[k]).collect())
            .collect(),
        risk: RiskSets::new(times),
    };

    let p = active.len();
    let mut beta = DVector::zeros(p);
    let mut iterations = 0;
    let max_abs_score = loop {
        let ev = problem.evaluate(&beta, true);
        let max_score = ev.score.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if ev.score.iter().any(|v| !v.is_finite()) {
            return Err(Error::CoxNonConvergence { iterations, gradient_norm: f64::NAN });
        }
        if max_score < SCORE_TOLERANCE {
            break max_score;
        }
        if iterations == max_iterations {
            return Err(Error::CoxNonConvergence { iterations, gradient_norm: max_score });
        }
        iterations += 1;
        let direction = newton_direction(&ev.information, &ev.score);
        let slack = 1e-10 * (1.0 + ev.loglik.abs());
        let mut step = 1.0;
        loop {
            let candidate = &beta + &direction * step;
            let ll = problem.loglik(&candidate);
            if (ll.is_finite() && ll >= ev.loglik - slack) || step < 1e-10 {
                beta = candidate;
                break;
            }
            step *= 0.5;
        }
    };

    let mut coefficients = vec![0.0; p_all];
    for (slot, &k) in active.iter().enumerate() {
        coefficients[k] = beta[slot];
    }

    // Breslow increments at each distinct event time, on the centered scale.
    let eta = problem.eta(&beta);
    let mut s0 = 0.0;
    let mut jumps: Vec<(f64, f64)> = Vec::new();
    for &(start, end) in &problem.risk.groups {
        let mut d = 0usize;
        for &i in &problem.risk.order[start..end] {
            s0 += eta[i].exp();
            d += events[i] as usize;
        }
        if d > 0 {
            jumps.push((times[problem.risk.order[start]], d as f64 / s0));
        }
    }
    jumps.reverse();
    let (jump_times, baseline_increments) = jumps.into_iter().unzip();

    Ok(CoxModel {
        coefficients,
        regressor_means: means,
        jump_times,
        baseline_increments,
        iterations,
        max_abs_score,
    })
}

impl CoxModel {
    /// `exp(beta' (x - mean))` for regressors `x = (a, w)`.
    pub fn relative_risk(&self, a: f64, w: &[f64]) -> f64 {
        self.linear_predictor(a, w).exp()
    }

    pub fn linear_predictor(&self, a: f64, w: &[f64]) -> f64 {
        let mut eta = self.coefficients[0] * (a - self.regressor_means[0]);
        for (k, &wk) in w.iter().enumerate() {
            eta += self.coefficients[k + 1] * (wk - self.regressor_means[k + 1]);
        }
        eta
    }

    /// Hazard increment at jump `k` for a subject with relative risk `r`,
    /// clamped to 1 so every product-limit factor stays in `[0, 1]`.
    #[inline]
    pub fn hazard_increment(&self, k: usize, r: f64) -> f64 {
        (self.baseline_increments[k] * r).min(1.0)
    }

    /// Product-limit survival `prod_{u <= t} (1 - dLambda(u))` for relative risk `r`.
    pub fn survival_for_risk(&self, t: f64, r: f64) -> f64 {
        let end = self.jump_times.partition_point(|&u| u <= t);
        (0..end).map(|k| 1.0 - self.hazard_increment(k, r)).product::<f64>().clamp(0.0, 1.0)
    }

    /// Left limit `prod_{u < t} (1 - dLambda(u))` for relative risk `r`.
    pub fn survival_left_for_risk(&self, t: f64, r: f64) -> f64 {
        let end = self.jump_times.partition_point(|&u| u < t);
        (0..end).map(|k| 1.0 - self.hazard_increment(k, r)).product::<f64>().clamp(0.0, 1.0)
    }

    /// Number of increments that needed clamping for relative risk `r`.
    pub fn clamped_increments(&self, r: f64) -> usize {
        self.baseline_increments.iter().filter(|&&dl| dl * r > 1.0).count()
    }

    pub fn survival_curve(&self, a: f64, w: &[f64]) -> StepCurve {
        let r = self.relative_risk(a, w);
        let clamped = self.clamped_increments(r);
        if clamped > 0 {
            log::debug!("{clamped} hazard increments clamped at 1 for a = {a}");
        }
        let mut s = 1.0;
        let values = (0..self.jump_times.len())
            .map(|k| {
                s *= 1.0 - self.hazard_increment(k, r);
                s
            })
            .collect();
        StepCurve::new_unchecked(self.jump_times.clone(), values, 1.0)
    }
}
