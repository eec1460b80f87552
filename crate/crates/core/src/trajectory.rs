//! Time-indexed record of a simulated run, shared by the toy model and the RNN.

use serde::{Deserialize, Serialize};

/// Delayed-activation target: 0 before the delay `t_delay`, 1 from it onward.
pub fn delayed_activation_target(step: usize, dt: f64, t_delay: f64) -> f64 {
    // tolerate rounding in k*dt at the boundary step
    if step as f64 * dt >= t_delay - 1e-9 * dt {
        1.0
    } else {
        0.0
    }
}

/// Numerically stable logistic function.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Per-step states, optional latent coordinate, outputs and targets.
///
/// States are stored flat, row-major: step `k` occupies
/// `states[k * state_dim..(k + 1) * state_dim]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub dt: f64,
    pub state_dim: usize,
    pub states: Vec<f64>,
    pub latent: Option<Vec<f64>>,
    pub outputs: Vec<f64>,
    pub targets: Vec<f64>,
    pub loss: f64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.outputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outputs.is_empty()
    }

    pub fn state(&self, step: usize) -> &[f64] {
        &self.states[step * self.state_dim..(step + 1) * self.state_dim]
    }

    /// Riemann-sum squared error with `dt` weight.
    pub fn squared_error(outputs: &[f64], targets: &[f64], dt: f64) -> f64 {
        outputs
            .iter()
            .zip(targets)
            .map(|(o, t)| (o - t) * (o - t))
            .sum::<f64>()
            * dt
    }

    /// Replace the targets and recompute the attached loss.
    pub fn with_targets(mut self, targets: Vec<f64>) -> Self {
        assert_eq!(targets.len(), self.outputs.len());
        self.loss = Self::squared_error(&self.outputs, &targets, self.dt);
        self.targets = targets;
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn target_switches_at_delay() {
        let dt = 5.0;
        assert_eq!(delayed_activation_target(19, dt, 100.0), 0.0);
        assert_eq!(delayed_activation_target(20, dt, 100.0), 1.0);
        // 0.1 is not exact in binary; 1000 * 0.1 must still count as t >= 100
        assert_eq!(delayed_activation_target(1000, 0.1, 100.0), 1.0);
        assert_eq!(delayed_activation_target(999, 0.1, 100.0), 0.0);
    }

    #[test]
    fn sigmoid_is_stable_at_extremes() {
        assert_eq!(sigmoid(-1000.0), 0.0);
        assert_eq!(sigmoid(1000.0), 1.0);
        assert!((sigmoid(0.0) - 0.5).abs() < 1e-15);
        assert!((sigmoid(2.0) + sigmoid(-2.0) - 1.0).abs() < 1e-15);
    }
}
