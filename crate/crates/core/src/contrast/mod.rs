//! Approximated contrast classes and the supremum statistic over them.
//!
//! The one-step estimator is linear in the contrast, so over a bin basis
//! `h = sum_j beta_j b_j` every class reduces to an optimization of
//! `c' beta` with `c_j = psi(b_j)`:
//!
//! - `BoxOnly`: `|beta_j| <= 1`; the optimum is `sum_j |c_j|`.
//! - `BoxTv`: additionally `sum_j |beta_j - beta_{j-1}| <= lambda`; a small LP.
//! - `MonotoneVariance`: `beta` non-decreasing with empirical variance `<= 1`.
//!
//! The indicator class is a finite set and is maximized by enumeration.

mod grid;
mod isotonic;
pub mod lp;

pub use grid::{build_grid, ExposureGrid, Generator};
pub use isotonic::isotonic_regression;

use serde::{Deserialize, Serialize};

use crate::data::{ClassKind, Dataset, TestConfig};
use crate::error::{Error, Result};
use crate::estimator::{OneStepEstimator, PsiVector};
use crate::nuisance::NuisanceFit;

pub const FEASIBILITY_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverStatus {
    Exact,
    Converged,
    MaxIter,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Argmax {
    /// Index into the generator list (indicator class).
    Index(usize),
    /// Basis coefficients.
    Beta(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SupResult {
    pub value: f64,
    pub argmax: Argmax,
    pub status: SolverStatus,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassSpec {
    pub kind: ClassKind,
    pub grid: ExposureGrid,
    /// Variation bound; only read for `BoxTv`.
    pub lambda: Option<f64>,
}

impl ClassSpec {
    pub fn new(kind: ClassKind, grid: ExposureGrid, lambda: Option<f64>) -> Result<Self> {
        if grid.kappa() < 2 && kind != ClassKind::Indicator {
            return Err(Error::Config("basis classes need kappa >= 2".into()));
        }
        if kind == ClassKind::BoxTv && !lambda.is_some_and(|l| l > 0.0) {
            return Err(Error::Config("box_tv requires lambda > 0".into()));
        }
        Ok(Self { kind, grid, lambda })
    }

    /// Generating functions whose one-step estimates feed the optimizer:
    /// `2 kappa` signed indicators, or `kappa` bins.
    pub fn generators(&self) -> Vec<Generator> {
        match self.kind {
            ClassKind::Indicator => self.grid.indicator_generators(),
            _ => self.grid.bin_generators(),
        }
    }

    /// Generators spanning the null covariance: the `kappa` indicators
    /// `h_j` (their mirrored partners are `-h_j` up to ties), or the bins.
    pub fn covariance_generators(&self) -> Vec<Generator> {
        let mut g = self.generators();
        if self.kind == ClassKind::Indicator {
            g.truncate(self.grid.kappa());
        }
        g
    }

    /// `sup_h |sum_j beta_j c_j|` over the class, or `max_j |c_j|` for the
    /// indicator class.
    pub fn solve(&self, c: &[f64]) -> SupResult {
        match self.kind {
            ClassKind::Indicator => sup_indicator(c),
            ClassKind::BoxOnly => sup_box_tv(c, None),
            ClassKind::BoxTv => sup_box_tv(c, self.lambda),
            ClassKind::MonotoneVariance => sup_monotone_variance(c, &self.grid.bin_masses),
        }
    }

    /// Whether `beta` satisfies the class constraints to `tol`.
    pub fn is_feasible(&self, beta: &[f64], tol: f64) -> bool {
        match self.kind {
            ClassKind::Indicator => true,
            ClassKind::BoxOnly => beta.iter().all(|b| b.abs() <= 1.0 + tol),
            ClassKind::BoxTv => {
                beta.iter().all(|b| b.abs() <= 1.0 + tol)
                    && total_variation(beta) <= self.lambda.unwrap_or(f64::INFINITY) + tol
            }
            ClassKind::MonotoneVariance => {
                beta.windows(2).all(|w| w[0] <= w[1] + tol)
                    && weighted_variance(beta, &self.grid.bin_masses) <= 1.0 + tol
            }
        }
    }
}

pub fn total_variation(beta: &[f64]) -> f64 {
    beta.windows(2).map(|w| (w[1] - w[0]).abs()).sum()
}

/// `sum p b^2 - (sum p b)^2`.
pub fn weighted_variance(beta: &[f64], masses: &[f64]) -> f64 {
    let mean: f64 = beta.iter().zip(masses).map(|(b, p)| b * p).sum();
    let second: f64 = beta.iter().zip(masses).map(|(b, p)| b * b * p).sum();
    second - mean * mean
}

/// Largest absolute value of a finite set.
pub fn sup_indicator(values: &[f64]) -> SupResult {
    let (idx, value) = values
        .iter()
        .enumerate()
        .fold((0, 0.0), |(bi, bv), (i, v)| if v.abs() > bv { (i, v.abs()) } else { (bi, bv) });
    SupResult { value, argmax: Argmax::Index(idx), status: SolverStatus::Exact }
}

/// `max |c' beta|` subject to `|beta_j| <= 1` and, when `lambda` is given,
/// `sum_j |beta_j - beta_{j-1}| <= lambda`.
///
/// The feasible set is symmetric under `beta -> -beta`, so the infimum side
/// of the supremum mirrors the maximum and one LP suffices.
pub fn sup_box_tv(c: &[f64], lambda: Option<f64>) -> SupResult {
    let k = c.len();
    let box_only = SupResult {
        value: c.iter().map(|v| v.abs()).sum(),
        argmax: Argmax::Beta(c.iter().map(|&v| if v < 0.0 { -1.0 } else { 1.0 }).collect()),
        status: SolverStatus::Exact,
    };
    // Any box-feasible beta has variation at most 2 (k - 1).
    let lambda = match lambda {
        Some(l) if l < 2.0 * (k.saturating_sub(1)) as f64 => l,
        _ => return box_only,
    };
    let scale = c.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return SupResult { value: 0.0, argmax: Argmax::Beta(vec![0.0; k]), status: SolverStatus::Exact };
    }

    // Variables: x_j = beta_j + 1 in [0, 2], then d_j >= |beta_{j+1} - beta_j|.
    let nv = 2 * k - 1;
    let mut rows = Vec::with_capacity(3 * k);
    let mut rhs = Vec::with_capacity(3 * k);
    for j in 0..k {
        let mut r = vec![0.0; nv];
        r[j] = 1.0;
        rows.push(r);
        rhs.push(2.0);
    }
    for j in 0..k - 1 {
        for sign in [1.0, -1.0] {
            let mut r = vec![0.0; nv];
            r[j + 1] = sign;
            r[j] = -sign;
            r[k + j] = -1.0;
            rows.push(r);
            rhs.push(0.0);
        }
    }
    let mut r = vec![0.0; nv];
    r[k..].iter_mut().for_each(|v| *v = 1.0);
    rows.push(r);
    rhs.push(lambda);

    let mut obj = vec![0.0; nv];
    for j in 0..k {
        obj[j] = c[j] / scale;
    }
    let sol = lp::maximize(&obj, &rows, &rhs);
    let beta: Vec<f64> = sol.x[..k].iter().map(|x| (x - 1.0).clamp(-1.0, 1.0)).collect();
    let value = c.iter().zip(&beta).map(|(a, b)| a * b).sum::<f64>().abs();
    let status = match sol.status {
        lp::LpStatus::Optimal => SolverStatus::Exact,
        _ => SolverStatus::MaxIter,
    };
    SupResult { value, argmax: Argmax::Beta(beta), status }
}

/// Restriction of the problem to bins with positive mass, with `c` shifted to
/// sum to zero. Adding a constant to `beta` keeps it monotone with the same
/// variance, so only the centered part of `c` is identified; the shift
/// `c - (sum c) p` restricts the search to centered `beta` and leaves
/// `c' beta` unchanged there.
struct MonotoneProblem {
    active: Vec<usize>,
    masses: Vec<f64>,
    /// `c_j / p_j` after centering, the gradient in the `p`-weighted metric.
    gradient: Vec<f64>,
}

impl MonotoneProblem {
    fn new(c: &[f64], masses: &[f64]) -> Self {
        let active: Vec<usize> = (0..c.len()).filter(|&j| masses[j] > 0.0).collect();
        let total_mass: f64 = active.iter().map(|&j| masses[j]).sum();
        let masses: Vec<f64> = active.iter().map(|&j| masses[j] / total_mass).collect();
        let total: f64 = active.iter().map(|&j| c[j]).sum();
        let gradient = active
            .iter()
            .zip(&masses)
            .map(|(&j, &p)| (c[j] - total * p) / p)
            .collect();
        Self { active, masses, gradient }
    }

    fn norm(&self, v: &[f64]) -> f64 {
        v.iter().zip(&self.masses).map(|(x, p)| p * x * x).sum::<f64>().sqrt()
    }

    /// Projection onto {monotone, centered, p-norm <= 1}: isotonic projection
    /// (which keeps the weighted mean), centering, then radial shrink.
    fn project(&self, z: &[f64]) -> Vec<f64> {
        let mut iso = isotonic_regression(z, &self.masses);
        let mean: f64 = iso.iter().zip(&self.masses).map(|(x, p)| x * p).sum();
        iso.iter_mut().for_each(|x| *x -= mean);
        let norm = self.norm(&iso);
        if norm > 1.0 {
            iso.iter_mut().for_each(|x| *x /= norm);
        }
        iso
    }

    fn objective(&self, beta: &[f64]) -> f64 {
        beta.iter().zip(&self.gradient).zip(&self.masses).map(|((b, g), p)| b * g * p).sum()
    }

    /// Full-length coefficients; empty bins copy their left neighbour (or the
    /// first active bin), which keeps the sequence monotone.
    fn expand(&self, beta: &[f64], k: usize) -> Vec<f64> {
        let mut out = vec![0.0; k];
        let mut next = 0;
        let mut current = beta.first().copied().unwrap_or(0.0);
        for (j, slot) in out.iter_mut().enumerate() {
            if next < self.active.len() && self.active[next] == j {
                current = beta[next];
                next += 1;
            }
            *slot = current;
        }
        out
    }
}

/// `max |c' beta|` over non-decreasing `beta` with `p`-weighted variance at
/// most one.
///
/// With `v = c / p`, the maximum of `<v, beta>_p` over the monotone cone
/// intersected with the unit ball is `||P(v)||_p`, where `P` is the weighted
/// isotonic projection, attained at `P(v) / ||P(v)||_p`. The decreasing side
/// is the same problem for `-v`.
pub fn sup_monotone_variance(c: &[f64], masses: &[f64]) -> SupResult {
    assert_eq!(c.len(), masses.len());
    let prob = MonotoneProblem::new(c, masses);
    let best = [1.0, -1.0]
        .into_iter()
        .map(|sign| {
            let v: Vec<f64> = prob.gradient.iter().map(|g| sign * g).collect();
            let fit = isotonic_regression(&v, &prob.masses);
            let norm = prob.norm(&fit);
            let beta: Vec<f64> = if norm > 0.0 {
                fit.iter().map(|x| x / norm).collect()
            } else {
                vec![0.0; fit.len()]
            };
            (norm, beta)
        })
        .fold((f64::NEG_INFINITY, Vec::new()), |acc, x| if x.0 > acc.0 { x } else { acc });
    SupResult {
        value: best.0.max(0.0),
        argmax: Argmax::Beta(prob.expand(&best.1, c.len())),
        status: SolverStatus::Exact,
    }
}

/// Projected-gradient ascent for the same problem as
/// [`sup_monotone_variance`], alternating the isotonic and variance-ball
/// projections. Stops when an iteration improves the objective by less than
/// `tol`, or after `max_iter` iterations.
pub fn sup_monotone_variance_iterative(c: &[f64], masses: &[f64], max_iter: usize, tol: f64) -> SupResult {
    let prob = MonotoneProblem::new(c, masses);
    let step = 1.0 / prob.norm(&prob.gradient).max(f64::MIN_POSITIVE);
    let mut best: Option<(f64, Vec<f64>, SolverStatus)> = None;
    for sign in [1.0, -1.0] {
        let v: Vec<f64> = prob.gradient.iter().map(|g| sign * g).collect();
        let mut beta = vec![0.0; v.len()];
        let mut value = 0.0;
        let mut status = SolverStatus::MaxIter;
        for _ in 0..max_iter {
            let z: Vec<f64> = beta.iter().zip(&v).map(|(b, g)| b + step * g).collect();
            let next = prob.project(&z);
            let next_value = sign * prob.objective(&next);
            let improvement = next_value - value;
            beta = next;
            value = next_value;
            if improvement.abs() < tol {
                status = SolverStatus::Converged;
                break;
            }
        }
        if best.as_ref().is_none_or(|b| value > b.0) {
            best = Some((value, beta, status));
        }
    }
    let (value, beta, status) = best.expect("two signs tried");
    SupResult {
        value: value.max(0.0),
        argmax: Argmax::Beta(prob.expand(&beta, c.len())),
        status,
    }
}

/// The statistic together with the one-step estimates it was computed from.
#[derive(Debug, Clone)]
pub struct Statistic {
    /// `Psi = sup_h |psi(h)|`, unscaled.
    pub sup: SupResult,
    pub psi: PsiVector,
    pub spec: ClassSpec,
    pub estimator: OneStepEstimator,
    pub warnings: Vec<String>,
}

/// Builds the class from the data, estimates `psi` for every generator and
/// takes the supremum.
pub fn sup_statistic(dataset: &Dataset, fit: &NuisanceFit, config: &TestConfig) -> Result<Statistic> {
    let (grid, warnings) = build_grid(dataset, config.kappa)?;
    let spec = ClassSpec::new(config.class_kind, grid, config.lambda)?;
    let estimator = OneStepEstimator::new(fit, dataset, config.t);
    Ok(statistic_with(&estimator, spec, warnings))
}

pub(crate) fn statistic_with(estimator: &OneStepEstimator, spec: ClassSpec, warnings: Vec<String>) -> Statistic {
    let psi = estimator.psi_onestep_batch(&spec.generators());
    let sup = spec.solve(&psi.onestep);
    if let Argmax::Beta(beta) = &sup.argmax {
        if !spec.is_feasible(beta, FEASIBILITY_TOLERANCE) {
            log::warn!("optimizer returned an infeasible point for {}", spec.kind);
        }
    }
    Statistic { sup, psi, spec, estimator: estimator.clone(), warnings }
}
