//! One-step estimation and supremum testing of a flat counterfactual
//! survival curve over a continuous exposure, from right-censored data.

pub mod contrast;
pub mod data;
pub mod diagnostics;
pub mod error;
pub mod estimator;
pub mod nuisance;
pub mod nulldist;
pub mod sim;

pub use contrast::{ClassSpec, ExposureGrid, SolverStatus, SupResult};
pub use data::{load_csv, read_csv, save_csv, validate, write_csv, ClassKind, Dataset, Observation, TestConfig};
pub use error::{Error, Result};
pub use estimator::{Contrast, OneStepEstimator, PsiVector, ThetaCurve};
pub use nuisance::NuisanceFit;
pub use nulldist::{p_value, run_test, NullSampler, TestResult};
pub use sim::{run_replications, SettingKind, SimReport, SimSetting, TimeReading};
