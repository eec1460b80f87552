//! Self-test behind the `check` subcommand: closed-form toy identities,
//! gradient agreement with central differences, the factored update against
//! the dense one, latent exactness and the state bound.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::latent::latent_step_consistency;
use crate::rnn::{bptt_gradient, forward, InitSpec, Readout, ReadoutKind, RnnParams, TaskSpec};
use crate::toy::{analytical_gradient, analytical_loss, critical_learning_rate, optimal_r};

/// `passed` iff `value <= threshold`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckItem {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub items: Vec<CheckItem>,
}

impl CheckReport {
    pub fn all_passed(&self) -> bool {
        self.items.iter().all(|i| i.passed)
    }

    pub fn render(&self) -> String {
        self.items
            .iter()
            .map(|i| {
                format!(
                    "{} {:<22} {:e} (limit {:e})\n",
                    if i.passed { "PASS" } else { "FAIL" },
                    i.name,
                    i.value,
                    i.threshold
                )
            })
            .collect()
    }

    fn push(&mut self, name: &str, value: f64, threshold: f64) {
        self.items.push(CheckItem {
            name: name.to_string(),
            value,
            threshold,
            passed: value <= threshold,
        });
    }
}

fn entry_mut(p: &mut RnnParams, mut i: usize) -> &mut f64 {
    let (n, k) = (p.neurons(), p.rank());
    if i < n * k {
        return &mut p.m[(i / k, i % k)];
    }
    i -= n * k;
    if i < k * n {
        return &mut p.nfac[(i / n, i % n)];
    }
    i -= k * n;
    if i < n {
        return &mut p.b[i];
    }
    i -= n;
    match &mut p.readout {
        Readout::LatentThreshold { confidence, .. } => confidence,
        Readout::LinearSigmoid { w_out, b_out, .. } => {
            if i < n {
                &mut w_out[i]
            } else {
                b_out
            }
        }
    }
}

/// Central differences of the forward loss with step `h`, in the order of
/// [`crate::rnn::GradientBundle::flatten`]. Frozen blocks are differentiated too.
pub fn finite_difference_gradient(params: &RnnParams, task: &TaskSpec, h: f64) -> Vec<f64> {
    let (n, k) = (params.neurons(), params.rank());
    let readout_len = match params.readout {
        Readout::LatentThreshold { .. } => 1,
        Readout::LinearSigmoid { .. } => n + 1,
    };
    (0..2 * n * k + n + readout_len)
        .map(|i| {
            let mut plus = params.clone();
            *entry_mut(&mut plus, i) += h;
            let mut minus = params.clone();
            *entry_mut(&mut minus, i) -= h;
            (forward(&plus, task).loss - forward(&minus, task).loss) / (2.0 * h)
        })
        .collect()
}

/// `|a - b| / max(|a|, |b|)` in the Euclidean norm; zero when both vanish.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let scale = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(b.iter().map(|x| x * x).sum::<f64>().sqrt());
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

/// States from the dense update `x <- (1 - d) x + d tanh(W x + b)`, flat row-major.
pub fn dense_states(params: &RnnParams, task: &TaskSpec) -> Vec<f64> {
    let w = params.weight_matrix();
    let delta = task.dt / params.tau;
    let mut x = DVector::from_element(params.neurons(), task.x0);
    let mut out = Vec::with_capacity(task.steps() * params.neurons());
    for _ in 0..task.steps() {
        out.extend(x.iter());
        let drive = (&w * &x + &params.b).map(f64::tanh);
        x = &x * (1.0 - delta) + drive * delta;
    }
    out
}

/// Random small net with nonzero bias and a trainable confidence.
pub fn random_small_net(seed: u64, neurons: usize, rank: usize, readout: ReadoutKind) -> Result<RnnParams> {
    let spec = InitSpec {
        scale: 1.5,
        confidence: 2.0,
        confidence_trainable: true,
        ..InitSpec::new(neurons, rank, readout)
    };
    let mut p = RnnParams::init(seed, &spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let normal = Normal::new(0.0, 0.3).expect("positive sd");
    p.b = DVector::from_fn(neurons, |_, _| normal.sample(&mut rng));
    Ok(p)
}

pub fn run_checks(seed: u64) -> Result<CheckReport> {
    let mut report = CheckReport { items: Vec::new() };
    let t = 100.0;
    let rs = optimal_r(t)?;
    report.push("toy_loss_at_optimum", analytical_loss(rs, t).abs(), 1e-12 * t);
    report.push("toy_loss_in_dead_zone", (analytical_loss(rs / 8.0, t) - t).abs(), 0.0);
    let alpha = critical_learning_rate(t)?;
    let landed = rs - alpha * analytical_gradient(rs, t).value;
    report.push("toy_catapult", ((landed - rs / 4.0) / (rs / 4.0)).abs(), 1e-9);

    let mut grad_err: f64 = 0.0;
    let mut dense_err: f64 = 0.0;
    let mut bound_excess = f64::NEG_INFINITY;
    for (i, (n, k, steps)) in [(2, 1, 4), (3, 2, 16), (5, 1, 40), (5, 2, 40)].into_iter().enumerate() {
        for readout in [ReadoutKind::LatentThreshold, ReadoutKind::LinearSigmoid] {
            let p = random_small_net(seed.wrapping_add(i as u64), n, k, readout)?;
            let task = TaskSpec {
                t_delay: steps as f64 * 2.5,
                ..TaskSpec::default()
            };
            let fd = finite_difference_gradient(&p, &task, 1e-5);
            grad_err = grad_err.max(relative_error(&bptt_gradient(&p, &task).flatten(), &fd));
            let traj = forward(&p, &task);
            let dense = dense_states(&p, &task);
            for (a, b) in traj.states.iter().zip(&dense) {
                dense_err = dense_err.max((a - b).abs());
            }
            let peak = traj.states.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            bound_excess = bound_excess.max(peak - task.x0.abs().max(1.0));
        }
    }
    report.push("bptt_vs_fd", grad_err, 1e-4);
    report.push("factored_vs_dense", dense_err, 1e-12);
    report.push("state_bound_excess", bound_excess, 0.0);

    let mut latent_err: f64 = 0.0;
    for i in 0..5 {
        let p = random_small_net(seed.wrapping_add(100 + i), 20, 1, ReadoutKind::LatentThreshold)?;
        latent_err = latent_err.max(latent_step_consistency(&p, &TaskSpec::default())?);
    }
    report.push("latent_consistency", latent_err, 1e-10);
    Ok(report)
}
