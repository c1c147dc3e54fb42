//! Gaussian-kernel conditional density of the exposure given covariates.
//!
//! `g(a|w) = sum_k K_a(a - A_k) K_w(w - W_k) / sum_k K_w(w - W_k)`, with
//! Silverman bandwidths per dimension. A covariate with zero sample variance
//! gets an infinite bandwidth, i.e. a uniform kernel weight.

use nalgebra::DMatrix;

use crate::data::{Dataset, TestConfig};
use crate::error::{Error, Result};

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

#[derive(Debug, Clone, PartialEq)]
pub struct DensityModel {
    pub bandwidth_a: f64,
    /// Per covariate; `f64::INFINITY` for a degenerate covariate.
    pub bandwidth_w: Vec<f64>,
    pub train_a: Vec<f64>,
    pub train_w: Vec<Vec<f64>>,
    pub floor: f64,
}

/// `1.06 * sd * n^(-1/5)`, or `None` when the sample is constant.
pub fn silverman_bandwidth(values: &[f64]) -> Option<f64> {
    let n = values.len() as f64;
    if values.len() < 2 {
        return None;
    }
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let sd = var.sqrt();
    (sd > 0.0).then(|| 1.06 * sd * n.powf(-0.2))
}

pub fn fit_conditional_density(
    dataset: &Dataset,
    config: &TestConfig,
) -> Result<(DensityModel, Vec<String>)> {
    let n = dataset.n();
    if n < 10 {
        return Err(Error::InvalidData(format!(
            "conditional density needs at least 10 observations, got {n}"
        )));
    }
    let train_a = dataset.exposures();
    let train_w: Vec<Vec<f64>> = dataset.observations().iter().map(|o| o.w.clone()).collect();
    let bandwidth_a = silverman_bandwidth(&train_a)
        .ok_or_else(|| Error::InvalidData("degenerate exposure range".into()))?;
    let mut warnings = Vec::new();
    let bandwidth_w = (0..dataset.d())
        .map(|j| {
            let col: Vec<f64> = train_w.iter().map(|w| w[j]).collect();
            silverman_bandwidth(&col).unwrap_or_else(|| {
                warnings.push(format!("covariate w{} has zero variance; kernel weight uniform", j + 1));
                log::warn!("covariate w{} has zero variance", j + 1);
                f64::INFINITY
            })
        })
        .collect();
    Ok((
        DensityModel {
            bandwidth_a,
            bandwidth_w,
            train_a,
            train_w,
            floor: config.density_floor,
        },
        warnings,
    ))
}

impl DensityModel {
    fn kernel_a(&self, a: f64, ak: f64) -> f64 {
        let z = (a - ak) / self.bandwidth_a;
        INV_SQRT_2PI * (-0.5 * z * z).exp() / self.bandwidth_a
    }

    /// Unnormalized product kernel; normalizing constants cancel in the ratio.
    fn kernel_w(&self, w: &[f64], wk: &[f64]) -> f64 {
        let mut q = 0.0;
        for ((x, y), h) in w.iter().zip(wk).zip(&self.bandwidth_w) {
            if h.is_finite() {
                let z = (x - y) / h;
                q += z * z;
            }
        }
        (-0.5 * q).exp()
    }

    /// Kernel estimate before the floor is applied.
    pub fn eval_raw(&self, a: f64, w: &[f64]) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for (ak, wk) in self.train_a.iter().zip(&self.train_w) {
            let kw = self.kernel_w(w, wk);
            num += self.kernel_a(a, *ak) * kw;
            den += kw;
        }
        if den > 0.0 {
            num / den
        } else {
            0.0
        }
    }

    /// `max(g_n(a|w), floor)`.
    pub fn eval(&self, a: f64, w: &[f64]) -> f64 {
        self.eval_raw(a, w).max(self.floor)
    }

    /// Unfloored `g_n(a_i | w_j)` for every pair: rows index `a_points`,
    /// columns index `w_points`.
    pub fn pairwise_raw(&self, a_points: &[f64], w_points: &[Vec<f64>]) -> DMatrix<f64> {
        let m = self.train_a.len();
        let ka = DMatrix::from_fn(a_points.len(), m, |i, k| self.kernel_a(a_points[i], self.train_a[k]));
        let kw = DMatrix::from_fn(m, w_points.len(), |k, j| self.kernel_w(&w_points[j], &self.train_w[k]));
        let mut num = ka * &kw;
        for (j, col) in kw.column_iter().enumerate() {
            let den: f64 = col.sum();
            let scale = if den > 0.0 { 1.0 / den } else { 0.0 };
            num.column_mut(j).scale_mut(scale);
        }
        num
    }
}
