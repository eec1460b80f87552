use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trajectory::delayed_activation_target;

/// Delayed-activation task for the RNN: no input, uniform initial rate `x0`,
/// target 0 on `[0, T)` and 1 on `[T, 2T)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub t_delay: f64,
    pub dt: f64,
    pub x0: f64,
}

impl Default for TaskSpec {
    fn default() -> Self {
        Self {
            t_delay: 100.0,
            dt: 5.0,
            x0: -0.3,
        }
    }
}

impl TaskSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_delay > 0.0 && self.dt > 0.0) || !self.x0.is_finite() {
            return Err(Error::InvalidConfig(
                "task needs positive T and dt and a finite x0".into(),
            ));
        }
        let ratio = 2.0 * self.t_delay / self.dt;
        if (ratio - ratio.round()).abs() > 1e-9 * ratio.max(1.0) || ratio.round() < 1.0 {
            return Err(Error::InvalidConfig(format!(
                "dt = {} does not divide 2T = {}",
                self.dt,
                2.0 * self.t_delay
            )));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (2.0 * self.t_delay / self.dt).round() as usize
    }

    pub fn targets(&self) -> Vec<f64> {
        (0..self.steps())
            .map(|k| delayed_activation_target(k, self.dt, self.t_delay))
            .collect()
    }
}
