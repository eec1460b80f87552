//! The saddle-node toy model `dx/dt = x^2 + r` trained on the delayed-activation task.
//!
//! In the sharp-readout limit the loss has a closed form in the single learnable
//! parameter `r`:
//!
//! ```text
//! L(r) = |T - pi / (2 sqrt(r))|   for r >= r*/4
//!      = T                        otherwise,       with r* = pi^2 / (4 T^2)
//! ```
//!
//! Three regimes follow: a flat no-learning zone below `r*/4`, an ascending
//! branch up to the optimum, and a descending branch above it. The kink at `r*`
//! bounds the learning rate of naive gradient descent by `3 pi^4 / 32 * T^-5`.
//! [`simulate_toy`] is the finite-confidence numerical twin used to check the
//! closed form.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trajectory::{delayed_activation_target, sigmoid, Trajectory};

/// Relative width of the band around `r*` labelled [`Regime::AtOptimum`].
pub const DEFAULT_OPTIMUM_TOL_REL: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToyConfig {
    /// Delay duration.
    pub t_delay: f64,
    /// Output threshold on the state.
    pub x_star: f64,
    /// Readout confidence (sigmoid sharpness).
    pub confidence: f64,
    /// Euler step.
    pub dt: f64,
    /// State clamp used once the trajectory has escaped.
    pub x_cap: f64,
}

impl Default for ToyConfig {
    fn default() -> Self {
        Self::new(100.0, 10.0, 25.0, 0.1)
    }
}

impl ToyConfig {
    /// Config with the default clamp of `100 * x_star`.
    pub fn new(t_delay: f64, x_star: f64, confidence: f64, dt: f64) -> Self {
        Self {
            t_delay,
            x_star,
            confidence,
            dt,
            x_cap: 100.0 * x_star,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(format!("toy: {msg}")));
        if !(self.t_delay > 0.0) {
            return bad("T must be positive");
        }
        if !(self.dt > 0.0 && self.dt < self.t_delay) {
            return bad("dt must lie in (0, T)");
        }
        if !(self.x_star > 0.0) {
            return bad("x_star must be positive");
        }
        if !(self.confidence > 0.0) {
            return bad("confidence must be positive");
        }
        if !(self.x_cap >= 10.0 * self.x_star) {
            return bad("x_cap must be at least 10 * x_star");
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (2.0 * self.t_delay / self.dt).round() as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Regime {
    NoLearningZone,
    AscendingBranch,
    DescendingBranch,
    AtOptimum,
}

impl Regime {
    pub fn as_str(&self) -> &'static str {
        match self {
            Regime::NoLearningZone => "no_learning_zone",
            Regime::AscendingBranch => "ascending_branch",
            Regime::DescendingBranch => "descending_branch",
            Regime::AtOptimum => "at_optimum",
        }
    }
}

/// The two points where the closed-form loss is not differentiable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Kink {
    /// `r = r*/4`, the boundary of the no-learning zone.
    PointOfNoReturn,
    /// `r = r*`, the global minimum.
    Optimum,
}

/// Value of `dL/dr`; at a kink the right limit is returned and `kink` is set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToyGradient {
    pub value: f64,
    pub kink: Option<Kink>,
}

fn r_star(t_delay: f64) -> f64 {
    PI * PI / (4.0 * t_delay * t_delay)
}

/// Global minimiser `r* = pi^2 / (4 T^2)`.
pub fn optimal_r(t_delay: f64) -> Result<f64> {
    if !(t_delay > 0.0) || !t_delay.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "delay T must be positive and finite, got {t_delay}"
        )));
    }
    Ok(r_star(t_delay))
}

/// Time at which `x(t) = sqrt(r) tan(sqrt(r) t)` diverges; infinite for `r <= 0`.
pub fn escape_time(r: f64) -> f64 {
    if r > 0.0 {
        PI / (2.0 * r.sqrt())
    } else {
        f64::INFINITY
    }
}

/// `|T - pi / (2 sqrt r)|` above `r*/4`, and exactly `T` at or below it.
pub fn analytical_loss(r: f64, t_delay: f64) -> f64 {
    if r > r_star(t_delay) / 4.0 {
        (t_delay - escape_time(r)).abs()
    } else {
        t_delay
    }
}

pub fn analytical_gradient(r: f64, t_delay: f64) -> ToyGradient {
    let rs = r_star(t_delay);
    let slope = |r: f64| PI / (4.0 * r.powf(1.5));
    let kink = if r == rs / 4.0 {
        Some(Kink::PointOfNoReturn)
    } else if r == rs {
        Some(Kink::Optimum)
    } else {
        None
    };
    let value = if r < rs / 4.0 {
        0.0
    } else if r < rs {
        -slope(r)
    } else {
        slope(r)
    };
    ToyGradient { value, kink }
}

/// Largest learning rate for which one step from `r*+` stays out of the
/// no-learning zone: `3 pi^4 / 32 * T^-5`.
pub fn critical_learning_rate(t_delay: f64) -> Result<f64> {
    optimal_r(t_delay)?;
    Ok(3.0 * PI.powi(4) / 32.0 * t_delay.powi(-5))
}

pub fn classify_regime(r: f64, t_delay: f64, tol: f64) -> Regime {
    let rs = r_star(t_delay);
    if (r - rs).abs() <= tol {
        Regime::AtOptimum
    } else if r < rs / 4.0 {
        Regime::NoLearningZone
    } else if r < rs {
        Regime::AscendingBranch
    } else {
        Regime::DescendingBranch
    }
}

/// Explicit-Euler simulation of the toy model with a finite-confidence readout
/// `sigma(c (x - x*))` over `[0, 2T)`, starting from `x = 0`.
pub fn simulate_toy(cfg: &ToyConfig, r: f64) -> Result<Trajectory> {
    cfg.validate()?;
    let steps = cfg.steps();
    let mut states = Vec::with_capacity(steps);
    let mut outputs = Vec::with_capacity(steps);
    let mut targets = Vec::with_capacity(steps);
    let mut x = 0.0f64;
    for k in 0..steps {
        states.push(x);
        outputs.push(sigmoid(cfg.confidence * (x - cfg.x_star)));
        targets.push(delayed_activation_target(k, cfg.dt, cfg.t_delay));
        let next = x + cfg.dt * (x * x + r);
        // an overflowing step is still ordered, so clamping to the cap is safe
        x = if next.is_nan() {
            cfg.x_cap
        } else {
            next.clamp(-cfg.x_cap, cfg.x_cap)
        };
    }
    let loss = Trajectory::squared_error(&outputs, &targets, cfg.dt);
    Ok(Trajectory {
        dt: cfg.dt,
        state_dim: 1,
        states,
        latent: None,
        outputs,
        targets,
        loss,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToyEpoch {
    pub epoch: usize,
    pub r: f64,
    pub loss: f64,
    pub gradient: f64,
    pub regime: Regime,
}

/// One row per epoch, holding the parameter *before* that epoch's update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyTrainRecord {
    pub t_delay: f64,
    pub alpha: f64,
    pub epochs: Vec<ToyEpoch>,
    pub final_r: f64,
    pub terminated_early: bool,
}

impl ToyTrainRecord {
    pub fn final_loss(&self) -> f64 {
        analytical_loss(self.final_r, self.t_delay)
    }

    pub fn final_regime(&self) -> Regime {
        let tol = DEFAULT_OPTIMUM_TOL_REL * r_star(self.t_delay);
        classify_regime(self.final_r, self.t_delay, tol)
    }

    /// Losses at every epoch followed by the loss at the final parameter.
    pub fn loss_trace(&self) -> Vec<f64> {
        self.epochs
            .iter()
            .map(|e| e.loss)
            .chain(std::iter::once(self.final_loss()))
            .collect()
    }
}

/// Naive gradient descent `r <- r - alpha dL/dr` on the closed-form loss for a
/// fixed number of epochs.
pub fn train_toy_gd(t_delay: f64, r0: f64, alpha: f64, epochs: usize) -> Result<ToyTrainRecord> {
    let rs = optimal_r(t_delay)?;
    if epochs == 0 {
        return Err(Error::InvalidConfig("toy training needs at least one epoch".into()));
    }
    if !r0.is_finite() || !alpha.is_finite() {
        return Err(Error::InvalidConfig("r0 and alpha must be finite".into()));
    }
    let tol = DEFAULT_OPTIMUM_TOL_REL * rs;
    let mut r = r0;
    let mut log = Vec::with_capacity(epochs);
    let mut terminated_early = false;
    for epoch in 0..epochs {
        let gradient = analytical_gradient(r, t_delay).value;
        log.push(ToyEpoch {
            epoch,
            r,
            loss: analytical_loss(r, t_delay),
            gradient,
            regime: classify_regime(r, t_delay, tol),
        });
        let next = r - alpha * gradient;
        if !next.is_finite() {
            terminated_early = true;
            break;
        }
        r = next;
    }
    Ok(ToyTrainRecord {
        t_delay,
        alpha,
        epochs: log,
        final_r: r,
        terminated_early,
    })
}
