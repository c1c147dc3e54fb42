//! Independent oracles shared by the integration tests. Nothing here calls
//! into the estimator or optimizer code paths it is used to check.

#![allow(dead_code)]

use flatsurv::nuisance::{CoxModel, DensityModel, NuisanceFit};
use flatsurv::sim::{self, SettingKind, SimSetting};
use flatsurv::{Dataset, Observation};

pub fn obs(w: &[f64], a: f64, y: f64, delta: bool) -> Observation {
    Observation { w: w.to_vec(), a, y, delta }
}

pub fn simulated(kind: SettingKind, n: usize, seed: u64) -> Dataset {
    sim::generate(&SimSetting::new(kind, n), seed).unwrap()
}

pub fn cox(coefficients: Vec<f64>, means: Vec<f64>, jumps: Vec<f64>, increments: Vec<f64>) -> CoxModel {
    CoxModel {
        coefficients,
        regressor_means: means,
        jump_times: jumps,
        baseline_increments: increments,
        iterations: 0,
        max_abs_score: 0.0,
    }
}

/// A five-subject dataset with one covariate, ties, censoring and fixed
/// nuisance models chosen by hand.
pub fn hand_case() -> (Dataset, NuisanceFit, f64) {
    let ds = Dataset::new(vec![
        obs(&[0.0], -0.8, 1.0, true),
        obs(&[1.0], -0.1, 2.0, false),
        obs(&[0.0], 0.3, 2.0, true),
        obs(&[1.0], 0.6, 3.0, true),
        obs(&[0.5], 0.9, 4.0, false),
    ])
    .unwrap();
    let survival = cox(vec![0.4, -0.3], vec![0.18, 0.5], vec![1.0, 2.0, 3.0], vec![0.15, 0.25, 0.3]);
    let censoring = cox(vec![-0.2, 0.5], vec![0.18, 0.5], vec![2.0, 4.0], vec![0.2, 0.35]);
    let density = DensityModel {
        bandwidth_a: 0.6,
        bandwidth_w: vec![0.7],
        train_a: ds.exposures(),
        train_w: ds.observations().iter().map(|o| o.w.clone()).collect(),
        floor: 1e-3,
    };
    (ds, NuisanceFit { survival, censoring, density }, 2.5)
}

fn risk(m: &CoxModel, a: f64, w: &[f64]) -> f64 {
    let mut eta = m.coefficients[0] * (a - m.regressor_means[0]);
    for k in 0..w.len() {
        eta += m.coefficients[k + 1] * (w[k] - m.regressor_means[k + 1]);
    }
    eta.exp()
}

/// Product over jumps `u` with `keep(u)`.
fn product(m: &CoxModel, r: f64, keep: impl Fn(f64) -> bool) -> f64 {
    let mut s = 1.0;
    for k in 0..m.jump_times.len() {
        if keep(m.jump_times[k]) {
            let dl = (m.baseline_increments[k] * r).min(1.0);
            s *= 1.0 - dl;
        }
    }
    s
}

fn gauss(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

fn density(d: &DensityModel, a: f64, w: &[f64]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for k in 0..d.train_a.len() {
        let mut q = 0.0;
        for j in 0..w.len() {
            if d.bandwidth_w[j].is_finite() {
                let z = (w[j] - d.train_w[k][j]) / d.bandwidth_w[j];
                q += z * z;
            }
        }
        let kw = (-0.5 * q).exp();
        num += gauss((a - d.train_a[k]) / d.bandwidth_a) / d.bandwidth_a * kw;
        den += kw;
    }
    num / den
}

/// Plug-in and one-step estimates of `psi(h)` written out term by term.
pub fn straight_line_psi(ds: &Dataset, fit: &NuisanceFit, t: f64, h: &dyn Fn(f64) -> f64) -> (f64, f64, Vec<f64>) {
    let o = ds.observations();
    let n = o.len();
    let nf = n as f64;
    let floor = fit.density.floor;
    let sm = &fit.survival;
    let cm = &fit.censoring;

    let theta = |a: f64| -> f64 {
        let mut total = 0.0;
        for k in 0..n {
            total += product(sm, risk(sm, a, &o[k].w), |u| u <= t);
        }
        total / nf
    };
    let thetas: Vec<f64> = o.iter().map(|x| theta(x.a)).collect();
    let theta_mean = thetas.iter().sum::<f64>() / nf;
    let hs: Vec<f64> = o.iter().map(|x| h(x.a)).collect();
    let h_mean = hs.iter().sum::<f64>() / nf;
    let mut plugin = 0.0;
    for i in 0..n {
        plugin += (thetas[i] - theta_mean) * hs[i];
    }
    plugin /= nf;

    let mut eif = Vec::with_capacity(n);
    for i in 0..n {
        let x = &o[i];
        let rs = risk(sm, x.a, &x.w);
        let rc = risk(cm, x.a, &x.w);
        let horizon = if t < x.y { t } else { x.y };
        let mut hsum = 0.0;
        for k in 0..sm.jump_times.len() {
            let u = sm.jump_times[k];
            if u > horizon {
                continue;
            }
            let dl = (sm.baseline_increments[k] * rs).min(1.0);
            let s_u = product(sm, rs, |v| v <= u).max(floor);
            let g_u = product(cm, rc, |v| v < u).max(floor);
            hsum += dl / (s_u * g_u);
        }
        let mut bracket = hsum;
        if x.delta && x.y <= t {
            let s_left = product(sm, rs, |v| v < x.y);
            let s_at = product(sm, rs, |v| v <= x.y).max(floor);
            let g_left = product(cm, rc, |v| v < x.y);
            let r = (s_left * g_left).max(floor);
            bracket -= s_left / (s_at * r);
        }
        let s_t = product(sm, rs, |v| v <= t);
        let mut g_bar = 0.0;
        for j in 0..n {
            g_bar += density(&fit.density, x.a, &o[j].w).max(floor);
        }
        g_bar /= nf;
        let g_own = density(&fit.density, x.a, &x.w).max(floor);
        eif.push(bracket * (hs[i] - h_mean) * s_t * g_bar / g_own);
    }
    let onestep = plugin + eif.iter().sum::<f64>() / nf;
    (plugin, onestep, eif)
}

/// Solves a square system by Gaussian elimination with partial pivoting.
pub fn solve_dense(mut m: Vec<Vec<f64>>, mut rhs: Vec<f64>) -> Option<Vec<f64>> {
    let n = rhs.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))?;
        if m[piv][col].abs() < 1e-12 {
            return None;
        }
        m.swap(col, piv);
        rhs.swap(col, piv);
        for r in col + 1..n {
            let f = m[r][col] / m[col][col];
            for c in col..n {
                m[r][c] -= f * m[col][c];
            }
            rhs[r] -= f * rhs[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let mut v = rhs[r];
        for c in r + 1..n {
            v -= m[r][c] * x[c];
        }
        x[r] = v / m[r][r];
    }
    Some(x)
}

/// `max |c' beta|` over `|beta_j| <= 1`, `|b2 - b1| + |b3 - b2| <= lambda`,
/// by enumerating every vertex of the lifted polytope in
/// `(b1, b2, b3, d1, d2)`.
pub fn box_tv_vertex_oracle(c: &[f64; 3], lambda: f64) -> f64 {
    let mut g: Vec<[f64; 5]> = Vec::new();
    let mut h: Vec<f64> = Vec::new();
    for j in 0..3 {
        let mut up = [0.0; 5];
        up[j] = 1.0;
        g.push(up);
        h.push(1.0);
        let mut lo = [0.0; 5];
        lo[j] = -1.0;
        g.push(lo);
        h.push(1.0);
    }
    for j in 0..2 {
        for s in [1.0, -1.0] {
            let mut r = [0.0; 5];
            r[j + 1] = s;
            r[j] = -s;
            r[3 + j] = -1.0;
            g.push(r);
            h.push(0.0);
        }
        let mut nonneg = [0.0; 5];
        nonneg[3 + j] = -1.0;
        g.push(nonneg);
        h.push(0.0);
    }
    g.push([0.0, 0.0, 0.0, 1.0, 1.0]);
    h.push(lambda);

    let m = g.len();
    let mut best = 0.0f64;
    let mut idx = [0usize; 5];
    fn next(idx: &mut [usize; 5], m: usize) -> bool {
        let k = idx.len();
        for i in (0..k).rev() {
            if idx[i] < m - k + i {
                idx[i] += 1;
                for j in i + 1..k {
                    idx[j] = idx[j - 1] + 1;
                }
                return true;
            }
        }
        false
    }
    for (i, v) in idx.iter_mut().enumerate() {
        *v = i;
    }
    loop {
        let rows: Vec<Vec<f64>> = idx.iter().map(|&r| g[r].to_vec()).collect();
        let rhs: Vec<f64> = idx.iter().map(|&r| h[r]).collect();
        if let Some(z) = solve_dense(rows, rhs) {
            let feasible = g
                .iter()
                .zip(&h)
                .all(|(row, &b)| row.iter().zip(&z).map(|(a, x)| a * x).sum::<f64>() <= b + 1e-9);
            if feasible {
                let v = c[0] * z[0] + c[1] * z[1] + c[2] * z[2];
                best = best.max(v.abs());
            }
        }
        if !next(&mut idx, m) {
            break;
        }
    }
    best
}

/// `max |c' beta|` over non-decreasing `beta` with `p`-weighted variance at
/// most one, for three bins and `sum c = 0`. Increasing directions are
/// `(0, cos phi, cos phi + sin phi)` for `phi in [0, pi/2]`; the optimum lies
/// on the unit-variance boundary. Random search followed by golden-section
/// refinement.
pub fn monotone_sampling_oracle(c: &[f64; 3], p: &[f64; 3], seed: u64) -> f64 {
    use rand::{Rng, SeedableRng};
    let value = |phi: f64| -> f64 {
        let b = [0.0, phi.cos(), phi.cos() + phi.sin()];
        let mean: f64 = (0..3).map(|j| p[j] * b[j]).sum();
        let var: f64 = (0..3).map(|j| p[j] * (b[j] - mean).powi(2)).sum();
        let sd = var.sqrt();
        (0..3).map(|j| c[j] * (b[j] - mean) / sd).sum::<f64>().abs()
    };
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let half_pi = std::f64::consts::FRAC_PI_2;
    let mut best_phi = 0.0;
    let mut best = value(0.0).max(value(half_pi));
    if value(half_pi) > value(0.0) {
        best_phi = half_pi;
    }
    for _ in 0..20_000 {
        let phi = rng.random::<f64>() * half_pi;
        let v = value(phi);
        if v > best {
            best = v;
            best_phi = phi;
        }
    }
    let (mut lo, mut hi) = ((best_phi - 1e-3).max(0.0), (best_phi + 1e-3).min(half_pi));
    let r = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..100 {
        let x1 = hi - r * (hi - lo);
        let x2 = lo + r * (hi - lo);
        if value(x1) < value(x2) {
            lo = x1;
        } else {
            hi = x2;
        }
    }
    best.max(value(0.5 * (lo + hi)))
}

/// Random contrast `sum_k amp_k sin(freq_k a + phase_k)`.
#[derive(Debug, Clone)]
pub struct Wave(pub Vec<(f64, f64, f64)>);

impl Wave {
    pub fn random(seed: u64) -> Self {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        Wave(
            (0..3)
                .map(|_| (rng.random_range(-1.0..1.0), rng.random_range(0.5..6.0), rng.random_range(0.0..6.3)))
                .collect(),
        )
    }

    pub fn scaled(&self, s: f64) -> Self {
        Wave(self.0.iter().map(|&(a, f, p)| (s * a, f, p)).collect())
    }

    pub fn plus(&self, other: &Wave) -> Self {
        Wave(self.0.iter().chain(&other.0).copied().collect())
    }
}

impl flatsurv::Contrast for Wave {
    fn eval(&self, a: f64) -> f64 {
        self.0.iter().map(|&(amp, f, p)| amp * (f * a + p).sin()).sum()
    }
}
