//! Observed-data records, CSV ingestion and run configuration.
//!
//! Input files carry a header naming the columns `w1..wd, a, y, delta`; the
//! covariate dimension is inferred from the `w*` columns. Times are kept
//! exactly as read and ties are preserved.

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One subject: covariates, exposure level, follow-up time and event flag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub w: Vec<f64>,
    pub a: f64,
    pub y: f64,
    /// `true` when the event was observed, `false` when censored.
    pub delta: bool,
}

/// A validated, immutable sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    observations: Vec<Observation>,
    d: usize,
}

impl Dataset {
    pub fn new(observations: Vec<Observation>) -> Result<Self> {
        let first = observations
            .first()
            .ok_or_else(|| Error::InvalidData("dataset is empty".into()))?;
        let d = first.w.len();
        for (i, obs) in observations.iter().enumerate() {
            check_observation(obs, d).map_err(|message| Error::Row { row: i + 1, message })?;
        }
        let (lo, hi) = exposure_bounds(&observations);
        if lo >= hi {
            return Err(Error::InvalidData("degenerate exposure range".into()));
        }
        Ok(Self { observations, d })
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    pub fn n(&self) -> usize {
        self.observations.len()
    }

    /// Covariate dimension.
    pub fn d(&self) -> usize {
        self.d
    }

    /// Empirical (min, max) of the exposure.
    pub fn exposure_range(&self) -> (f64, f64) {
        exposure_bounds(&self.observations)
    }

    pub fn max_time(&self) -> f64 {
        self.observations.iter().map(|o| o.y).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn exposures(&self) -> Vec<f64> {
        self.observations.iter().map(|o| o.a).collect()
    }

    pub fn into_observations(self) -> Vec<Observation> {
        self.observations
    }
}

fn exposure_bounds(obs: &[Observation]) -> (f64, f64) {
    obs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), o| {
        (lo.min(o.a), hi.max(o.a))
    })
}

fn check_observation(obs: &Observation, d: usize) -> std::result::Result<(), String> {
    if obs.w.len() != d {
        return Err(format!("expected {d} covariates, found {}", obs.w.len()));
    }
    if let Some(j) = obs.w.iter().position(|v| !v.is_finite()) {
        return Err(format!("covariate w{} is not finite", j + 1));
    }
    if !obs.a.is_finite() {
        return Err("exposure a is not finite".into());
    }
    if !obs.y.is_finite() || obs.y < 0.0 {
        return Err(format!("follow-up time y = {} must be finite and >= 0", obs.y));
    }
    Ok(())
}

/// Reads a dataset from a CSV file.
pub fn load_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    let file = std::fs::File::open(path)?;
    read_csv(file)
}

pub fn read_csv<R: Read>(reader: R) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let a_col = find("a")?;
    let y_col = find("y")?;
    let delta_col = find("delta")?;
    let d = headers
        .iter()
        .filter(|h| h.strip_prefix('w').is_some_and(|s| s.parse::<usize>().is_ok()))
        .count();
    let w_cols = (1..=d).map(|j| find(&format!("w{j}"))).collect::<Result<Vec<_>>>()?;

    let mut observations = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let row = i + 1;
        let record = record?;
        let cell = |col: usize, name: &str| -> Result<f64> {
            let raw = record.get(col).unwrap_or("");
            raw.parse::<f64>().map_err(|_| Error::Row {
                row,
                message: format!("column `{name}`: non-numeric value {raw:?}"),
            })
        };
        let w = w_cols
            .iter()
            .enumerate()
            .map(|(j, &c)| cell(c, &format!("w{}", j + 1)))
            .collect::<Result<Vec<_>>>()?;
        let a = cell(a_col, "a")?;
        let y = cell(y_col, "y")?;
        let delta = match cell(delta_col, "delta")? {
            v if v == 0.0 => false,
            v if v == 1.0 => true,
            v => {
                return Err(Error::Row {
                    row,
                    message: format!("delta = {v} is not 0 or 1"),
                })
            }
        };
        if y < 0.0 {
            return Err(Error::Row {
                row,
                message: format!("follow-up time y = {y} is negative"),
            });
        }
        observations.push(Observation { w, a, y, delta });
    }
    Dataset::new(observations)
}

/// Writes the dataset in the same layout `read_csv` accepts. Floats use the
/// shortest representation that parses back to the identical value.
pub fn write_csv<W: Write>(dataset: &Dataset, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = (1..=dataset.d()).map(|j| format!("w{j}")).collect();
    header.extend(["a", "y", "delta"].map(String::from));
    wtr.write_record(&header)?;
    for obs in dataset.observations() {
        let mut rec: Vec<String> = obs.w.iter().map(|v| format!("{v:?}")).collect();
        rec.push(format!("{:?}", obs.a));
        rec.push(format!("{:?}", obs.y));
        rec.push(if obs.delta { "1" } else { "0" }.to_string());
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn save_csv(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_csv(dataset, std::io::BufWriter::new(file))
}

/// Shape of the contrast class the supremum is taken over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassKind {
    /// Signed threshold indicators `(-1)^{1(a <= a_j)}` and `(-1)^{1(a >= a_j)}`.
    Indicator,
    /// Bin-basis functions with `|beta_j| <= 1` and total variation `<= lambda`.
    BoxTv,
    /// Monotone bin-basis functions with empirical variance `<= 1`.
    MonotoneVariance,
    /// Bin-basis functions with `|beta_j| <= 1` only.
    BoxOnly,
}

impl FromStr for ClassKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "indicator" => Ok(ClassKind::Indicator),
            "box_tv" | "box-tv" => Ok(ClassKind::BoxTv),
            "monotone_variance" | "monotone-variance" | "monotone" => Ok(ClassKind::MonotoneVariance),
            "box_only" | "box-only" => Ok(ClassKind::BoxOnly),
            other => Err(Error::Config(format!("unknown contrast class `{other}`"))),
        }
    }
}

impl fmt::Display for ClassKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ClassKind::Indicator => "indicator",
            ClassKind::BoxTv => "box_tv",
            ClassKind::MonotoneVariance => "monotone_variance",
            ClassKind::BoxOnly => "box_only",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestConfig {
    /// Evaluation time, in the units of `y`.
    pub t: f64,
    pub kappa: usize,
    /// Variation bound; `None` means unbounded.
    pub lambda: Option<f64>,
    pub class_kind: ClassKind,
    pub num_null_draws: usize,
    pub alpha: f64,
    pub seed: u64,
    pub density_floor: f64,
}

impl Default for TestConfig {
    fn default() -> Self {
        Self {
            t: 25.0,
            kappa: 20,
            lambda: Some(4.0),
            class_kind: ClassKind::Indicator,
            num_null_draws: 1000,
            alpha: 0.05,
            seed: 0,
            density_floor: 1e-3,
        }
    }
}

impl TestConfig {
    fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.t > 0.0) || !self.t.is_finite() {
            out.push(format!("evaluation time t = {} must be positive", self.t));
        }
        if self.kappa < 2 {
            out.push(format!("kappa = {} must be at least 2", self.kappa));
        }
        if let Some(l) = self.lambda {
            if !(l > 0.0) {
                out.push(format!("lambda = {l} must be positive"));
            }
        } else if self.class_kind == ClassKind::BoxTv {
            out.push("box_tv class requires a finite lambda".into());
        }
        if self.num_null_draws == 0 {
            out.push("num_null_draws must be at least 1".into());
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            out.push(format!("alpha = {} must lie in (0, 1)", self.alpha));
        }
        if !(self.density_floor > 0.0) || !self.density_floor.is_finite() {
            out.push(format!("density_floor = {} must be positive", self.density_floor));
        }
        out
    }
}

/// Non-fatal findings from [`validate`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Warnings(pub Vec<String>);

/// Checks a dataset against a configuration. Either every check passes, or
/// the error lists every failed check.
pub fn validate(dataset: &Dataset, config: &TestConfig) -> Result<Warnings> {
    let mut problems = config.problems();
    let d = dataset.d();
    for (i, obs) in dataset.observations().iter().enumerate() {
        if let Err(m) = check_observation(obs, d) {
            problems.push(format!("row {}: {m}", i + 1));
        }
    }
    let (lo, hi) = dataset.exposure_range();
    if lo >= hi {
        problems.push("degenerate exposure range".into());
    }
    let max_y = dataset.max_time();
    if config.t >= max_y {
        problems.push(format!(
            "evaluation time beyond follow-up (t = {} >= max y = {max_y})",
            config.t
        ));
    } else if !dataset.observations().iter().any(|o| o.y >= config.t) {
        problems.push("no subject at risk at the evaluation time".into());
    }
    if !problems.is_empty() {
        return Err(Error::Validation(problems));
    }
    let mut warnings = Vec::new();
    if !dataset.observations().iter().any(|o| o.delta && o.y <= config.t) {
        warnings.push("no events before t; statistic degenerate".to_string());
    }
    Ok(Warnings(warnings))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn csv_text(rows: &[&str]) -> String {
        let mut s = String::from("w1,w2,a,y,delta\n");
        for r in rows {
            s.push_str(r);
            s.push('\n');
        }
        s
    }

    fn obs(a: f64, y: f64, delta: bool) -> Observation {
        Observation { w: vec![], a, y, delta }
    }

    #[test]
    fn loads_well_formed_file() {
        let text = csv_text(&["1.5,0,0.2,3,1", "1.2,1,-0.4,5,0", "1.9,0,0.9,2,1"]);
        let ds = read_csv(text.as_bytes()).unwrap();
        assert_eq!(ds.n(), 3);
        assert_eq!(ds.d(), 2);
        assert_eq!(ds.observations()[1].a, -0.4);
        assert!(!ds.observations()[1].delta);
    }

    #[test]
    fn column_order_is_free() {
        let text = "delta,y,a,w1\n1,2,0.5,3\n0,4,0.1,2\n";
        let ds = read_csv(text.as_bytes()).unwrap();
        assert_eq!(ds.d(), 1);
        assert_eq!(ds.observations()[0].w, vec![3.0]);
    }

    #[test]
    fn bad_delta_names_row() {
        let text = csv_text(&[
            "1,0,0.1,1,1",
            "1,0,0.2,1,1",
            "1,0,0.3,1,1",
            "1,0,0.4,1,1",
            "1,0,0.5,1,2",
        ]);
        let err = read_csv(text.as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Row { row: 5, .. }), "{err}");
        assert!(err.to_string().contains("row 5"));
    }

    #[test]
    fn non_numeric_and_negative_time() {
        let err = read_csv(csv_text(&["1,0,x,1,1"]).as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Row { row: 1, .. }));
        let err = read_csv(csv_text(&["1,0,0,1,1", "1,0,1,-2,1"]).as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Row { row: 2, .. }));
    }

    #[test]
    fn missing_column() {
        let err = read_csv("w1,a,y\n1,2,3\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::MissingColumn(ref c) if c == "delta"));
    }

    #[test]
    fn degenerate_exposure() {
        let err = read_csv(csv_text(&["1,0,0.5,1,1", "2,1,0.5,2,0"]).as_bytes()).unwrap_err();
        assert!(err.to_string().contains("degenerate exposure range"));
    }

    fn ladder(n: usize) -> Dataset {
        Dataset::new(
            (0..n)
                .map(|i| obs(i as f64 / n as f64, 1.0 + i as f64, i % 3 != 0))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn validate_passes_midway() {
        let ds = ladder(100);
        let cfg = TestConfig { t: 0.5 * ds.max_time(), ..Default::default() };
        let w = validate(&ds, &cfg).unwrap();
        assert!(w.0.is_empty());
    }

    #[test]
    fn validate_rejects_late_t_and_lists_everything() {
        let ds = ladder(10);
        let cfg = TestConfig { t: 1e3, kappa: 1, alpha: 2.0, ..Default::default() };
        match validate(&ds, &cfg).unwrap_err() {
            Error::Validation(list) => {
                assert_eq!(list.len(), 3);
                assert!(list.iter().any(|m| m.contains("evaluation time beyond follow-up")));
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn validate_warns_without_events() {
        let ds = Dataset::new((0..5).map(|i| obs(i as f64, 10.0 + i as f64, false)).collect()).unwrap();
        let cfg = TestConfig { t: 5.0, ..Default::default() };
        let w = validate(&ds, &cfg).unwrap();
        assert_eq!(w.0, vec!["no events before t; statistic degenerate".to_string()]);
    }

    #[test]
    fn validate_is_pure() {
        let ds = ladder(20);
        let before = ds.clone();
        let _ = validate(&ds, &TestConfig { t: 5.0, ..Default::default() });
        assert_eq!(ds, before);
    }

    mod roundtrip {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn csv_roundtrip_is_bit_identical(
                rows in prop::collection::vec(
                    (prop::collection::vec(-1e6f64..1e6, 2), -50.0f64..50.0, 0.0f64..1e4, any::<bool>()),
                    2..30,
                )
            ) {
                let mut observations: Vec<Observation> = rows
                    .into_iter()
                    .map(|(w, a, y, delta)| Observation { w, a, y, delta })
                    .collect();
                observations[0].a = -60.0;
                observations[1].a = 60.0;
                let ds = Dataset::new(observations).unwrap();
                let mut buf = Vec::new();
                write_csv(&ds, &mut buf).unwrap();
                let back = read_csv(buf.as_slice()).unwrap();
                for (x, y) in ds.observations().iter().zip(back.observations()) {
                    prop_assert_eq!(x.a.to_bits(), y.a.to_bits());
                    prop_assert_eq!(x.y.to_bits(), y.y.to_bits());
                    prop_assert_eq!(x.delta, y.delta);
                    for (u, v) in x.w.iter().zip(&y.w) {
                        prop_assert_eq!(u.to_bits(), v.to_bits());
                    }
                }
            }
        }
    }
}
