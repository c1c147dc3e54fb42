//! Monte Carlo approximation of the null distribution of `sqrt(n) Psi`.
//!
//! Draws `xi ~ N(0, Sigma_n)` with `Sigma_n = n^-1 Dbar' Dbar` built from the
//! centered EIF columns, push each draw through the same supremum as the
//! statistic, and compare. Both sides live on the `sqrt(n)` scale.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::contrast::{statistic_with, ClassSpec, SolverStatus, SupResult};
use crate::data::{validate, ClassKind, Dataset, TestConfig};
use crate::diagnostics::ClipCounts;
use crate::error::{Error, Result, StageExt};
use crate::estimator::{EifMatrix, OneStepEstimator};
use crate::nuisance::NuisanceFit;

pub const JITTER_SCHEDULE: [f64; 7] = [1e-12, 1e-11, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6];

pub const SCALE_CONVENTION: &str =
    "statistic = sqrt(n) * sup|psi|; null draws from N(0, Sigma_n) pushed through the same supremum";

#[derive(Debug, Clone, PartialEq)]
pub struct NullSampler {
    pub covariance: DMatrix<f64>,
    /// Lower-triangular `L` with `L L' = covariance + jitter I`.
    pub cholesky_factor: DMatrix<f64>,
    pub seed: u64,
    pub jitter_used: f64,
}

/// `n^-1 Dbar' Dbar` from the column-centered EIF matrix.
pub fn covariance(centered: &DMatrix<f64>) -> DMatrix<f64> {
    let n = centered.nrows() as f64;
    let mut cov = centered.tr_mul(centered) / n;
    // exact symmetry
    for i in 0..cov.nrows() {
        for j in 0..i {
            let v = 0.5 * (cov[(i, j)] + cov[(j, i)]);
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    cov
}

pub fn build_covariance(eif: &EifMatrix, seed: u64) -> Result<NullSampler> {
    NullSampler::from_covariance(covariance(&eif.centered), seed)
}

impl NullSampler {
    /// Factors `covariance + jitter I`, escalating the jitter until the
    /// Cholesky factorization succeeds.
    pub fn from_covariance(covariance: DMatrix<f64>, seed: u64) -> Result<Self> {
        let m = covariance.nrows();
        for &jitter in &JITTER_SCHEDULE {
            let shifted = &covariance + DMatrix::identity(m, m) * jitter;
            if let Some(ch) = shifted.cholesky() {
                return Ok(Self { cholesky_factor: ch.unpack(), covariance, seed, jitter_used: jitter });
            }
        }
        Err(Error::DegenerateCovariance { jitter: JITTER_SCHEDULE[JITTER_SCHEDULE.len() - 1] })
    }

    pub fn dim(&self) -> usize {
        self.covariance.nrows()
    }

    /// Gaussian draw number `u`. The normal stream is keyed by `(seed, u)`,
    /// so draws do not depend on evaluation order.
    pub fn draw(&self, u: u64) -> DVector<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(u);
        let z = DVector::from_iterator(self.dim(), (0..self.dim()).map(|_| StandardNormal.sample(&mut rng)));
        &self.cholesky_factor * z
    }
}

/// `M^(u)`: the class supremum evaluated at the `u`-th Gaussian draw.
pub fn draw_null_sup(sampler: &NullSampler, spec: &ClassSpec, u: u64) -> SupResult {
    let xi = sampler.draw(u);
    spec.solve(xi.as_slice())
}

/// `(1 + #{u : M_u >= statistic}) / (U + 1)`.
pub fn p_value(statistic: f64, draws: &[f64]) -> f64 {
    let exceed = draws.iter().filter(|&&m| m >= statistic).count();
    (1 + exceed) as f64 / (draws.len() + 1) as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassEcho {
    pub kind: ClassKind,
    pub kappa_requested: usize,
    pub kappa_used: usize,
    pub lambda: Option<f64>,
    pub thresholds: Vec<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatusCounts {
    pub exact: usize,
    pub converged: usize,
    pub max_iter: usize,
}

impl StatusCounts {
    fn add(&mut self, s: SolverStatus) {
        match s {
            SolverStatus::Exact => self.exact += 1,
            SolverStatus::Converged => self.converged += 1,
            SolverStatus::MaxIter => self.max_iter += 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestDiagnostics {
    pub clips: ClipCounts,
    pub statistic_status: SolverStatus,
    pub draw_status: StatusCounts,
    pub jitter: f64,
    pub survival_cox_iterations: usize,
    pub censoring_cox_iterations: usize,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    /// `sqrt(n) * Psi`.
    pub statistic: f64,
    /// `Psi` on the estimator's own scale.
    pub sup_value: f64,
    pub p_value: f64,
    pub alpha: f64,
    pub reject: bool,
    pub n: usize,
    pub num_draws: usize,
    pub scale: String,
    pub class: ClassEcho,
    pub config: TestConfig,
    pub diagnostics: TestDiagnostics,
    pub draws: Vec<f64>,
}

/// Full pipeline: validation, nuisance fits, one-step estimates, statistic,
/// null draws and p-value.
pub fn run_test(dataset: &Dataset, config: &TestConfig) -> Result<TestResult> {
    let warnings = validate(dataset, config).stage("validation")?.0;
    let (fit, fit_warnings) = NuisanceFit::fit(dataset, config).stage("nuisance estimation")?;
    let estimator = OneStepEstimator::new(&fit, dataset, config.t);
    let mut all = warnings;
    all.extend(fit_warnings);
    test_from_estimator(&estimator, &fit, config, all)
}

/// Everything after the nuisance fit; lets several class configurations
/// share one fit and one set of EIF factors.
pub fn test_from_estimator(
    estimator: &OneStepEstimator,
    fit: &NuisanceFit,
    config: &TestConfig,
    mut warnings: Vec<String>,
) -> Result<TestResult> {
    let n = estimator.theta().n_observed;
    let (grid, grid_warnings) =
        crate::contrast::ExposureGrid::from_exposures(&estimator.theta().eval_exposures[..n], config.kappa)
            .stage("contrast class")?;
    warnings.extend(grid_warnings);
    let spec = ClassSpec::new(config.class_kind, grid, config.lambda).stage("contrast class")?;
    let stat = statistic_with(estimator, spec, Vec::new());
    let spec = stat.spec;
    let root_n = (n as f64).sqrt();
    let statistic = root_n * stat.sup.value;

    let m = spec.covariance_generators().len();
    let centered = stat.psi.eif.centered.columns(0, m).into_owned();
    let sampler = NullSampler::from_covariance(covariance(&centered), config.seed).stage("null distribution")?;
    let sups: Vec<SupResult> = (0..config.num_null_draws as u64)
        .into_par_iter()
        .map(|u| draw_null_sup(&sampler, &spec, u))
        .collect();
    let mut draw_status = StatusCounts::default();
    for s in &sups {
        draw_status.add(s.status);
    }
    let draws: Vec<f64> = sups.iter().map(|s| s.value).collect();
    let p = p_value(statistic, &draws);

    Ok(TestResult {
        statistic,
        sup_value: stat.sup.value,
        p_value: p,
        alpha: config.alpha,
        reject: p <= config.alpha,
        n,
        num_draws: draws.len(),
        scale: SCALE_CONVENTION.to_string(),
        class: ClassEcho {
            kind: spec.kind,
            kappa_requested: config.kappa,
            kappa_used: spec.grid.kappa(),
            lambda: spec.lambda,
            thresholds: spec.grid.thresholds.clone(),
        },
        config: config.clone(),
        diagnostics: TestDiagnostics {
            clips: estimator.clips(),
            statistic_status: stat.sup.status,
            draw_status,
            jitter: sampler.jitter_used,
            survival_cox_iterations: fit.survival.iterations,
            censoring_cox_iterations: fit.censoring.iterations,
            warnings,
        },
        draws,
    })
}
