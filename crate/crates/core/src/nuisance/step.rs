use crate::error::{Error, Result};

/// A non-increasing right-continuous step function with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepCurve {
    jump_times: Vec<f64>,
    values: Vec<f64>,
    initial_value: f64,
}

impl StepCurve {
    pub fn new(jump_times: Vec<f64>, values: Vec<f64>, initial_value: f64) -> Result<Self> {
        if jump_times.len() != values.len() {
            return Err(Error::InvalidData("step curve: times and values differ in length".into()));
        }
        if jump_times.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidData("step curve: jump times not strictly increasing".into()));
        }
        let mut prev = initial_value;
        if !(0.0..=1.0).contains(&prev) {
            return Err(Error::InvalidData("step curve: initial value outside [0, 1]".into()));
        }
        for &v in &values {
            if !(0.0..=1.0).contains(&v) || v > prev {
                return Err(Error::InvalidData(
                    "step curve: values must be non-increasing in [0, 1]".into(),
                ));
            }
            prev = v;
        }
        Ok(Self { jump_times, values, initial_value })
    }

    pub(crate) fn new_unchecked(jump_times: Vec<f64>, values: Vec<f64>, initial_value: f64) -> Self {
        debug_assert_eq!(jump_times.len(), values.len());
        Self { jump_times, values, initial_value }
    }

    pub fn jump_times(&self) -> &[f64] {
        &self.jump_times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn initial_value(&self) -> f64 {
        self.initial_value
    }

    /// Value at `t`, including a jump located exactly at `t`.
    pub fn eval(&self, t: f64) -> f64 {
        let k = self.jump_times.partition_point(|&u| u <= t);
        if k == 0 {
            self.initial_value
        } else {
            self.values[k - 1]
        }
    }

    /// Left limit at `t`: excludes a jump located exactly at `t`.
    pub fn left_limit(&self, t: f64) -> f64 {
        let k = self.jump_times.partition_point(|&u| u < t);
        if k == 0 {
            self.initial_value
        } else {
            self.values[k - 1]
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn right_continuity_and_left_limits() {
        let c = StepCurve::new(vec![1.0, 2.0], vec![0.5, 0.25], 1.0).unwrap();
        assert_eq!(c.eval(0.5), 1.0);
        assert_eq!(c.eval(1.0), 0.5);
        assert_eq!(c.left_limit(1.0), 1.0);
        assert_eq!(c.eval(1.5), 0.5);
        assert_eq!(c.left_limit(2.0), 0.5);
        assert_eq!(c.eval(9.0), 0.25);
        assert_eq!(c.left_limit(9.0), 0.25);
    }

    #[test]
    fn rejects_increasing_values() {
        assert!(StepCurve::new(vec![1.0, 2.0], vec![0.3, 0.4], 1.0).is_err());
        assert!(StepCurve::new(vec![2.0, 1.0], vec![0.3, 0.2], 1.0).is_err());
        assert!(StepCurve::new(vec![1.0], vec![1.2], 1.0).is_err());
    }
}
