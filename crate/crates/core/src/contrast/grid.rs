use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::estimator::Contrast;

/// Thresholds `a_0 < a_1 < ... < a_kappa` spanning the observed exposures,
/// with the empirical mass of each bin `[a_{j-1}, a_j)` (last bin closed).
#[derive(Debug, Clone, PartialEq)]
pub struct ExposureGrid {
    pub thresholds: Vec<f64>,
    pub bin_masses: Vec<f64>,
}

/// Sample quantile with linear interpolation between order statistics.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn build_grid(dataset: &Dataset, kappa: usize) -> Result<(ExposureGrid, Vec<String>)> {
    ExposureGrid::from_exposures(&dataset.exposures(), kappa)
}

impl ExposureGrid {
    /// Interior thresholds are the empirical `j / kappa` quantiles. Coinciding
    /// thresholds are merged, which lowers the effective `kappa` (reported as a
    /// warning).
    pub fn from_exposures(exposures: &[f64], kappa: usize) -> Result<(Self, Vec<String>)> {
        if kappa < 2 {
            return Err(Error::Config(format!("kappa = {kappa} must be at least 2")));
        }
        let mut sorted = exposures.to_vec();
        sorted.sort_by(f64::total_cmp);
        let distinct = {
            let mut d = sorted.clone();
            d.dedup();
            d.len()
        };
        if distinct < 2 {
            return Err(Error::InvalidData("fewer than 2 distinct exposure values".into()));
        }
        let mut thresholds: Vec<f64> = (0..=kappa)
            .map(|j| match j {
                0 => sorted[0],
                j if j == kappa => sorted[sorted.len() - 1],
                j => quantile(&sorted, j as f64 / kappa as f64),
            })
            .collect();
        thresholds.dedup();
        let mut warnings = Vec::new();
        if thresholds.len() - 1 < kappa {
            let msg = format!(
                "tied exposures: kappa reduced from {kappa} to {}",
                thresholds.len() - 1
            );
            log::warn!("{msg}");
            warnings.push(msg);
        }
        let mut grid = Self { bin_masses: Vec::new(), thresholds };
        let mut counts = vec![0usize; grid.kappa()];
        for &a in exposures {
            counts[grid.bin_of(a)] += 1;
        }
        let n = exposures.len() as f64;
        grid.bin_masses = counts.into_iter().map(|c| c as f64 / n).collect();
        Ok((grid, warnings))
    }

    pub fn kappa(&self) -> usize {
        self.thresholds.len() - 1
    }

    /// Bin index of `a`, clamped to the first/last bin outside the range.
    pub fn bin_of(&self, a: f64) -> usize {
        let interior = &self.thresholds[1..self.kappa()];
        interior.partition_point(|&t| t <= a)
    }

    /// `h_j(a) = (-1)^{1(a <= a_j)}` for `j = 1..kappa`, then
    /// `h'_j(a) = (-1)^{1(a >= a_j)}` for `j = 1..kappa`.
    pub fn indicator_generators(&self) -> Vec<Generator> {
        let upper = &self.thresholds[1..];
        upper
            .iter()
            .map(|&t| Generator::AtOrBelow(t))
            .chain(upper.iter().map(|&t| Generator::AtOrAbove(t)))
            .collect()
    }

    /// `b_j(a) = 1{a in [a_{j-1}, a_j)}`, last bin closed.
    pub fn bin_generators(&self) -> Vec<Generator> {
        let k = self.kappa();
        (0..k)
            .map(|j| Generator::Bin {
                lo: self.thresholds[j],
                hi: self.thresholds[j + 1],
                closed: j + 1 == k,
            })
            .collect()
    }
}

/// The generating functions of the approximated contrast classes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Generator {
    /// `-1` when `a <= threshold`, else `+1`.
    AtOrBelow(f64),
    /// `-1` when `a >= threshold`, else `+1`.
    AtOrAbove(f64),
    Bin { lo: f64, hi: f64, closed: bool },
}

impl Contrast for Generator {
    fn eval(&self, a: f64) -> f64 {
        match *self {
            Generator::AtOrBelow(t) => if a <= t { -1.0 } else { 1.0 },
            Generator::AtOrAbove(t) => if a >= t { -1.0 } else { 1.0 },
            Generator::Bin { lo, hi, closed } => {
                let inside = a >= lo && (a < hi || (closed && a == hi));
                if inside { 1.0 } else { 0.0 }
            }
        }
    }
}
