//! Synthetic data generators for the null and two alternatives, and a
//! replication driver for rejection rates.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{validate, Dataset, Observation, TestConfig};
use crate::error::{Error, Result, StageExt};
use crate::estimator::OneStepEstimator;
use crate::nuisance::NuisanceFit;
use crate::nulldist::test_from_estimator;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SettingKind {
    /// Flat null: exposure uniform and unrelated to the outcome.
    A,
    /// Survival increasing in the exposure.
    B,
    /// Survival quadratic in the exposure.
    C,
}

impl fmt::Display for SettingKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SettingKind::A => "A",
            SettingKind::B => "B",
            SettingKind::C => "C",
        };
        f.write_str(s)
    }
}

impl FromStr for SettingKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "A" | "a" => Ok(SettingKind::A),
            "B" | "b" => Ok(SettingKind::B),
            "C" | "c" => Ok(SettingKind::C),
            other => Err(Error::Config(format!("unknown setting `{other}` (expected A, B or C)"))),
        }
    }
}

/// How `T ~ s exp{l}` is turned into a distribution.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeReading {
    /// `s * E` with `E` exponential of rate `exp{l}` (mean `s exp{-l}`).
    #[default]
    ScaledRate,
    /// Exponential with mean `s exp{l}`.
    Mean,
}

impl FromStr for TimeReading {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "scaled_rate" | "scaled-rate" | "rate" => Ok(TimeReading::ScaledRate),
            "mean" => Ok(TimeReading::Mean),
            other => Err(Error::Config(format!("unknown time reading `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimSetting {
    pub kind: SettingKind,
    pub n: usize,
    /// Administrative censoring horizon.
    pub tau: f64,
    pub t_eval: f64,
    pub reading: TimeReading,
}

impl SimSetting {
    pub fn new(kind: SettingKind, n: usize) -> Self {
        Self { kind, n, tau: 35.0, t_eval: 25.0, reading: TimeReading::default() }
    }
}

fn expit(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `log(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub fn f1(w: &[f64]) -> f64 {
    -3.0 + 0.3 * w[0] + 1.1 * w[1]
}

pub fn f2(kind: SettingKind, a: f64) -> f64 {
    match kind {
        SettingKind::A => 0.0,
        SettingKind::B => a,
        SettingKind::C => 1.2 - 2.0 * a * a,
    }
}

/// Tilt of the exposure density, `5 (expit(-1 + w1 - w2) - 0.5)`.
pub fn exposure_tilt(w: &[f64]) -> f64 {
    5.0 * (expit(-1.0 + w[0] - w[1]) - 0.5)
}

/// Density `expit(alpha a) / int_{-1}^{1} expit(alpha x) dx` on `[-1, 1]`.
pub fn exposure_density(alpha: f64, a: f64) -> f64 {
    if !(-1.0..=1.0).contains(&a) {
        return 0.0;
    }
    if alpha.abs() < 1e-10 {
        return 0.5;
    }
    let norm = (softplus(alpha) - softplus(-alpha)) / alpha;
    expit(alpha * a) / norm
}

/// Inverse CDF of [`exposure_density`] at `u in [0, 1]`.
pub fn exposure_quantile(alpha: f64, u: f64) -> f64 {
    if alpha.abs() < 1e-10 {
        return 2.0 * u - 1.0;
    }
    let lo = softplus(-alpha);
    let c = lo + u * (softplus(alpha) - lo);
    // log(e^c - 1) = c + log(1 - e^-c)
    let a = (c + (-(-c).exp()).ln_1p()) / alpha;
    a.clamp(-1.0, 1.0)
}

/// `W1 ~ U(1, 2)`, `W2 ~ Bernoulli(1/2)`.
pub fn gen_covariates<R: Rng>(n: usize, rng: &mut R) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            let w1 = rng.random_range(1.0..2.0);
            let w2 = if rng.random_bool(0.5) { 1.0 } else { 0.0 };
            vec![w1, w2]
        })
        .collect()
}

pub fn gen_exposure<R: Rng>(kind: SettingKind, w: &[Vec<f64>], rng: &mut R) -> Vec<f64> {
    w.iter()
        .map(|wi| match kind {
            SettingKind::A => rng.random_range(-1.0..1.0),
            _ => exposure_quantile(exposure_tilt(wi), rng.random::<f64>()),
        })
        .collect()
}

fn draw_time<R: Rng>(reading: TimeReading, scale: f64, lin: f64, rng: &mut R) -> f64 {
    let e: f64 = Exp1.sample(rng);
    match reading {
        TimeReading::ScaledRate => scale * e / lin.exp(),
        TimeReading::Mean => scale * lin.exp() * e,
    }
}

/// Rounded latent `(T, C)` per subject, with `C` capped at `tau`.
pub fn gen_latent_times<R: Rng>(setting: &SimSetting, a: &[f64], w: &[Vec<f64>], rng: &mut R) -> Vec<(f64, f64)> {
    a.iter()
        .zip(w)
        .map(|(&ai, wi)| {
            let f1w = f1(wi);
            let f2a = f2(setting.kind, ai);
            let (st, lt, sc, lc) = match setting.kind {
                SettingKind::A => (10.0, 0.2 * f1w, 9.0, -0.2 + 0.4 * f1w),
                _ => (3.5, 0.6 * f1w - 0.75 * f2a, 3.15, -1.2 + 0.4 * f1w - 0.5 * f2a),
            };
            let t = draw_time(setting.reading, st, lt, rng).ceil().max(1.0);
            let c = draw_time(setting.reading, sc, lc, rng).ceil().max(1.0).min(setting.tau);
            (t, c)
        })
        .collect()
}

/// `(Y, Delta)` per subject. Times are rounded up to integers and censoring
/// is capped at `tau`; ties count as events.
pub fn gen_times<R: Rng>(setting: &SimSetting, a: &[f64], w: &[Vec<f64>], rng: &mut R) -> Vec<(f64, bool)> {
    gen_latent_times(setting, a, w, rng)
        .into_iter()
        .map(|(t, c)| (t.min(c), t <= c))
        .collect()
}

pub fn generate(setting: &SimSetting, seed: u64) -> Result<Dataset> {
    if setting.n == 0 {
        return Err(Error::Config("n must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = gen_covariates(setting.n, &mut rng);
    let a = gen_exposure(setting.kind, &w, &mut rng);
    let yd = gen_times(setting, &a, &w, &mut rng);
    let obs = w
        .into_iter()
        .zip(a)
        .zip(yd)
        .map(|((w, a), (y, delta))| Observation { w, a, y, delta })
        .collect();
    Dataset::new(obs)
}

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of replication `rep`; depends only on `(master, rep)`.
pub fn rep_seed(master: u64, rep: usize) -> u64 {
    mix(mix(master) ^ (rep as u64).wrapping_mul(0xD1B5_4A32_D192_ED03))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepOutcome {
    pub rep: usize,
    pub seed: u64,
    pub statistic: f64,
    pub p_value: f64,
    pub reject: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepFailure {
    pub rep: usize,
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub setting: SimSetting,
    pub reps: usize,
    pub completed: usize,
    pub rejections: usize,
    /// `rejections / completed`; failed replications are excluded.
    pub rejection_rate: f64,
    pub master_seed: u64,
    pub config: TestConfig,
    pub per_rep: Vec<RepOutcome>,
    pub failures: Vec<RepFailure>,
}

impl SimReport {
    fn assemble(setting: SimSetting, master_seed: u64, config: TestConfig, results: Vec<(usize, u64, std::result::Result<RepOutcome, String>)>) -> Self {
        let reps = results.len();
        let mut per_rep = Vec::new();
        let mut failures = Vec::new();
        for (rep, seed, r) in results {
            match r {
                Ok(o) => per_rep.push(o),
                Err(error) => failures.push(RepFailure { rep, seed, error }),
            }
        }
        let rejections = per_rep.iter().filter(|o| o.reject).count();
        let completed = per_rep.len();
        let rejection_rate = if completed == 0 { f64::NAN } else { rejections as f64 / completed as f64 };
        Self { setting, reps, completed, rejections, rejection_rate, master_seed, config, per_rep, failures }
    }

    pub fn p_values(&self) -> Vec<f64> {
        self.per_rep.iter().map(|o| o.p_value).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// One row per completed replication: `seed,statistic,p_value,reject`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["rep", "seed", "statistic", "p_value", "reject"])?;
        for o in &self.per_rep {
            w.write_record([
                o.rep.to_string(),
                o.seed.to_string(),
                format!("{:?}", o.statistic),
                format!("{:?}", o.p_value),
                (o.reject as u8).to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn one_rep(setting: &SimSetting, configs: &[TestConfig], seed: u64) -> Result<Vec<RepOutcome>> {
    let ds = generate(setting, seed).stage("simulation")?;
    let base = &configs[0];
    validate(&ds, base).stage("validation")?;
    let (fit, _) = NuisanceFit::fit(&ds, base).stage("nuisance estimation")?;
    let estimator = OneStepEstimator::new(&fit, &ds, base.t);
    configs
        .iter()
        .map(|cfg| {
            let mut cfg = cfg.clone();
            cfg.seed = mix(seed);
            let r = test_from_estimator(&estimator, &fit, &cfg, Vec::new())?;
            Ok(RepOutcome { rep: 0, seed, statistic: r.statistic, p_value: r.p_value, reject: r.reject })
        })
        .collect()
}

/// Runs `reps` independent replications of the full test, in parallel on the
/// current rayon pool. Output does not depend on the number of threads.
pub fn run_replications(setting: &SimSetting, reps: usize, config: &TestConfig, master_seed: u64) -> Result<SimReport> {
    let mut out = run_replications_paired(setting, reps, std::slice::from_ref(config), master_seed)?;
    Ok(out.remove(0))
}

/// Several test configurations on the same simulated datasets, sharing the
/// nuisance fits. All configurations must agree on `t` and the density floor.
pub fn run_replications_paired(
    setting: &SimSetting,
    reps: usize,
    configs: &[TestConfig],
    master_seed: u64,
) -> Result<Vec<SimReport>> {
    if reps == 0 {
        return Err(Error::Config("reps must be at least 1".into()));
    }
    let Some(base) = configs.first() else {
        return Err(Error::Config("at least one test configuration is required".into()));
    };
    if configs.iter().any(|c| c.t != base.t || c.density_floor != base.density_floor) {
        return Err(Error::Config("paired configurations must share t and density_floor".into()));
    }
    let results: Vec<(u64, std::result::Result<Vec<RepOutcome>, String>)> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let seed = rep_seed(master_seed, rep);
            let r = one_rep(setting, configs, seed).map_err(|e| e.to_string());
            if let Err(e) = &r {
                log::warn!("replication {rep} failed: {e}");
            }
            (seed, r)
        })
        .collect();
    Ok(configs
        .iter()
        .enumerate()
        .map(|(k, cfg)| {
            let per: Vec<_> = results
                .iter()
                .enumerate()
                .map(|(rep, (seed, r))| {
                    let r = r.as_ref().map(|v| RepOutcome { rep, ..v[k].clone() }).map_err(Clone::clone);
                    (rep, *seed, r)
                })
                .collect();
            let mut echo = cfg.clone();
            echo.seed = master_seed;
            SimReport::assemble(*setting, master_seed, echo, per)
        })
        .collect())
}
