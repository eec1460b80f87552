//! Euler-discretized forward pass, reverse-mode gradients through the unrolled
//! recursion, and plain gradient-descent updates.
//!
//! The update is `x[k+1] = (1 - d) x[k] + d tanh(M (Nfac x[k]) + b)` with
//! `d = dt / tau`. `W = M Nfac` is never formed; each step costs two thin
//! matrix-vector products.

use nalgebra::{DMatrix, DVector};

use super::params::{Readout, RnnParams};
use super::task::TaskSpec;
use crate::error::{Error, Result};
use crate::trajectory::{sigmoid, Trajectory};

/// One Euler step of the network dynamics.
pub fn step(params: &RnnParams, x: &DVector<f64>, dt: f64) -> DVector<f64> {
    let delta = dt / params.tau;
    let mut pre = &params.m * (&params.nfac * x);
    pre += &params.b;
    pre.apply(|v| *v = v.tanh());
    x * (1.0 - delta) + pre * delta
}

/// Readout pre-activation and output for a single state.
fn readout(params: &RnnParams, x: &DVector<f64>) -> (f64, f64) {
    match &params.readout {
        Readout::LatentThreshold {
            kappa_star,
            confidence,
            ..
        } => {
            let kappa = params.nfac.row(0).dot(&x.transpose());
            let z = confidence * (kappa - kappa_star);
            (z, sigmoid(z))
        }
        Readout::LinearSigmoid {
            w_out,
            b_out,
            sigmoid: squash,
        } => {
            let z = w_out.dot(x) + b_out;
            (z, if *squash { sigmoid(z) } else { z })
        }
    }
}

/// Stored activations of one forward pass.
struct ForwardPass {
    /// `N x S`, column k is the state at step k.
    xs: DMatrix<f64>,
    /// `K x S`, column k is `Nfac x[k]`.
    us: DMatrix<f64>,
    /// `N x S`, column k is `tanh(M u[k] + b)`; the last column is unused.
    hs: DMatrix<f64>,
    outputs: Vec<f64>,
}

fn run_forward(params: &RnnParams, task: &TaskSpec) -> ForwardPass {
    let (n, k) = (params.neurons(), params.rank());
    let steps = task.steps();
    let delta = task.dt / params.tau;
    let mut xs = DMatrix::zeros(n, steps);
    let mut us = DMatrix::zeros(k, steps);
    let mut hs = DMatrix::zeros(n, steps);
    let mut outputs = Vec::with_capacity(steps);
    let mut x = DVector::from_element(n, task.x0);
    for s in 0..steps {
        xs.set_column(s, &x);
        outputs.push(readout(params, &x).1);
        if s + 1 == steps {
            break;
        }
        let u = &params.nfac * &x;
        let mut h = &params.m * &u;
        h += &params.b;
        h.apply(|v| *v = v.tanh());
        x *= 1.0 - delta;
        x.axpy(delta, &h, 1.0);
        us.set_column(s, &u);
        hs.set_column(s, &h);
    }
    ForwardPass {
        xs,
        us,
        hs,
        outputs,
    }
}

fn into_trajectory(params: &RnnParams, task: &TaskSpec, pass: ForwardPass, targets: Vec<f64>) -> Trajectory {
    let latent = (params.rank() == 1).then(|| {
        let n = params.latent_projection();
        (0..pass.xs.ncols())
            .map(|s| n.dot(&pass.xs.column(s)))
            .collect()
    });
    let loss = Trajectory::squared_error(&pass.outputs, &targets, task.dt);
    Trajectory {
        dt: task.dt,
        state_dim: params.neurons(),
        states: pass.xs.as_slice().to_vec(),
        latent,
        outputs: pass.outputs,
        targets,
        loss,
    }
}

/// Simulate the task from `x0 * ones` and attach the `dt`-weighted squared error.
pub fn forward(params: &RnnParams, task: &TaskSpec) -> Trajectory {
    let pass = run_forward(params, task);
    into_trajectory(params, task, pass, task.targets())
}

/// Gradient of the readout parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum ReadoutGradient {
    LatentThreshold { confidence: f64 },
    LinearSigmoid { w_out: DVector<f64>, b_out: f64 },
}

/// Loss gradient for every block of [`RnnParams`]. Frozen blocks are zero and
/// `norm` is the Euclidean norm over trainable entries only.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientBundle {
    pub m: DMatrix<f64>,
    pub nfac: DMatrix<f64>,
    pub b: DVector<f64>,
    pub readout: ReadoutGradient,
    pub norm: f64,
}

impl GradientBundle {
    /// All entries in a fixed order: M, Nfac (row-major), b, then readout.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self.m.transpose().iter().copied().collect();
        out.extend(self.nfac.transpose().iter());
        out.extend(self.b.iter());
        match &self.readout {
            ReadoutGradient::LatentThreshold { confidence } => out.push(*confidence),
            ReadoutGradient::LinearSigmoid { w_out, b_out } => {
                out.extend(w_out.iter());
                out.push(*b_out);
            }
        }
        out
    }
}

/// Forward pass plus exact reverse-mode gradient against arbitrary targets.
pub fn loss_and_gradient_with_targets(
    params: &RnnParams,
    task: &TaskSpec,
    targets: &[f64],
) -> (Trajectory, GradientBundle) {
    assert_eq!(targets.len(), task.steps(), "one target per step");
    let pass = run_forward(params, task);
    let steps = pass.outputs.len();
    let (n, k) = (params.neurons(), params.rank());
    let delta = task.dt / params.tau;

    let mut d_nfac = DMatrix::zeros(k, n);
    // dL/dz per step, then the direct contribution of the readout to dL/dx[k]
    let dz: Vec<f64> = pass
        .outputs
        .iter()
        .zip(targets)
        .map(|(&o, &t)| {
            let dl_do = 2.0 * (o - t) * task.dt;
            match &params.readout {
                Readout::LinearSigmoid { sigmoid: false, .. } => dl_do,
                _ => dl_do * o * (1.0 - o),
            }
        })
        .collect();
    let mut direct = DMatrix::zeros(n, steps);
    let readout_grad = match &params.readout {
        Readout::LatentThreshold {
            kappa_star,
            confidence,
            ..
        } => {
            let proj = params.latent_projection();
            let mut d_conf = 0.0;
            for s in 0..steps {
                let x = pass.xs.column(s);
                let kappa = proj.dot(&x);
                let d_kappa = dz[s] * confidence;
                d_conf += dz[s] * (kappa - kappa_star);
                direct.column_mut(s).axpy(d_kappa, &proj, 0.0);
                for (dst, xi) in d_nfac.row_mut(0).iter_mut().zip(x.iter()) {
                    *dst += d_kappa * xi;
                }
            }
            ReadoutGradient::LatentThreshold { confidence: d_conf }
        }
        Readout::LinearSigmoid { w_out, .. } => {
            let mut d_w = DVector::zeros(n);
            let mut d_b = 0.0;
            for s in 0..steps {
                d_w.axpy(dz[s], &pass.xs.column(s), 1.0);
                d_b += dz[s];
                direct.column_mut(s).axpy(dz[s], w_out, 0.0);
            }
            ReadoutGradient::LinearSigmoid {
                w_out: d_w,
                b_out: d_b,
            }
        }
    };

    // adjoint recursion; column s of `g` is d(1 - h^2) * lambda[s+1]
    let transitions = steps.saturating_sub(1);
    let mut g = DMatrix::zeros(n, transitions);
    let mut lambda: DVector<f64> = direct.column(steps - 1).into_owned();
    for s in (0..transitions).rev() {
        let h = pass.hs.column(s);
        let gs = DVector::from_iterator(
            n,
            h.iter()
                .zip(lambda.iter())
                .map(|(h, l)| delta * (1.0 - h * h) * l),
        );
        let back = params.nfac.tr_mul(&params.m.tr_mul(&gs));
        lambda *= 1.0 - delta;
        lambda += direct.column(s);
        lambda += back;
        g.set_column(s, &gs);
    }

    let xs_t = pass.xs.columns(0, transitions);
    let us_t = pass.us.columns(0, transitions);
    let mut d_m = &g * us_t.transpose();
    d_nfac += (params.m.tr_mul(&g)) * xs_t.transpose();
    let mut d_b = g.column_sum();

    let mask = params.trainable;
    if !mask.m {
        d_m.fill(0.0);
    }
    if !mask.nfac {
        d_nfac.fill(0.0);
    }
    if !mask.b {
        d_b.fill(0.0);
    }
    let readout_grad = match (readout_grad, &params.readout) {
        (
            ReadoutGradient::LatentThreshold { confidence },
            Readout::LatentThreshold {
                confidence_trainable,
                ..
            },
        ) => ReadoutGradient::LatentThreshold {
            confidence: if *confidence_trainable { confidence } else { 0.0 },
        },
        (ReadoutGradient::LinearSigmoid { mut w_out, b_out }, _) => {
            if !mask.readout {
                w_out.fill(0.0);
            }
            ReadoutGradient::LinearSigmoid {
                w_out,
                b_out: if mask.readout { b_out } else { 0.0 },
            }
        }
        (other, _) => other,
    };
    let readout_sq = match &readout_grad {
        ReadoutGradient::LatentThreshold { confidence } => confidence * confidence,
        ReadoutGradient::LinearSigmoid { w_out, b_out } => w_out.norm_squared() + b_out * b_out,
    };
    let norm = (d_m.norm_squared() + d_nfac.norm_squared() + d_b.norm_squared() + readout_sq).sqrt();

    let traj = into_trajectory(params, task, pass, targets.to_vec());
    let grads = GradientBundle {
        m: d_m,
        nfac: d_nfac,
        b: d_b,
        readout: readout_grad,
        norm,
    };
    (traj, grads)
}

/// Forward pass plus gradient on the task's own targets.
pub fn loss_and_gradient(params: &RnnParams, task: &TaskSpec) -> (Trajectory, GradientBundle) {
    loss_and_gradient_with_targets(params, task, &task.targets())
}

/// Exact BPTT gradient of the discretized task loss.
pub fn bptt_gradient(params: &RnnParams, task: &TaskSpec) -> GradientBundle {
    loss_and_gradient(params, task).1
}

fn check_shape(block: &'static str, expected: (usize, usize), found: (usize, usize)) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::ShapeMismatch {
            block,
            expected,
            found,
        })
    }
}

/// `params - alpha * grads` on trainable blocks; frozen blocks are copied as is.
pub fn sgd_step(params: &RnnParams, grads: &GradientBundle, alpha: f64) -> Result<RnnParams> {
    check_shape("m", params.m.shape(), grads.m.shape())?;
    check_shape("nfac", params.nfac.shape(), grads.nfac.shape())?;
    check_shape("b", params.b.shape(), grads.b.shape())?;
    let mut next = params.clone();
    let mask = params.trainable;
    if mask.m {
        next.m -= &grads.m * alpha;
    }
    if mask.nfac {
        next.nfac -= &grads.nfac * alpha;
    }
    if mask.b {
        next.b.axpy(-alpha, &grads.b, 1.0);
    }
    match (&mut next.readout, &grads.readout) {
        (
            Readout::LatentThreshold {
                confidence,
                confidence_trainable,
                ..
            },
            ReadoutGradient::LatentThreshold { confidence: dc },
        ) => {
            if *confidence_trainable {
                *confidence -= alpha * dc;
            }
        }
        (
            Readout::LinearSigmoid { w_out, b_out, .. },
            ReadoutGradient::LinearSigmoid {
                w_out: dw,
                b_out: db,
            },
        ) => {
            check_shape("w_out", w_out.shape(), dw.shape())?;
            if mask.readout {
                w_out.axpy(-alpha, dw, 1.0);
                *b_out -= alpha * db;
            }
        }
        _ => {
            return Err(Error::ReadoutMismatch {
                expected: match params.readout {
                    Readout::LatentThreshold { .. } => "latent-threshold",
                    Readout::LinearSigmoid { .. } => "linear-sigmoid",
                },
            })
        }
    }
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rnn::params::{init_params, ReadoutKind};

    fn hand_net(m: &[f64], n: &[f64], tau: f64) -> RnnParams {
        let mut p = init_params(0, m.len(), 1, ReadoutKind::LatentThreshold, tau).unwrap();
        p.m = DMatrix::from_column_slice(m.len(), 1, m);
        p.nfac = DMatrix::from_row_slice(1, n.len(), n);
        p
    }

    #[test]
    fn origin_is_fixed_without_drive() {
        let p = hand_net(&[0.0, 0.0, 0.0], &[0.4, -1.0, 2.0], 10.0);
        let x = DVector::zeros(3);
        assert_eq!(step(&p, &x, 5.0), x);
    }

    #[test]
    fn full_step_is_the_nonlinearity() {
        let mut p = init_params(3, 6, 2, ReadoutKind::LatentThreshold, 5.0).unwrap();
        p.b = DVector::from_fn(6, |i, _| 0.1 * i as f64 - 0.2);
        let x = DVector::from_fn(6, |i, _| (i as f64 * 0.7).sin());
        let mut expected = &p.m * (&p.nfac * &x) + &p.b;
        expected.apply(|v| *v = v.tanh());
        assert_eq!(step(&p, &x, 5.0), expected);
        let mut dense = p.weight_matrix() * &x + &p.b;
        dense.apply(|v| *v = v.tanh());
        assert!((step(&p, &x, 5.0) - dense).amax() < 1e-12);
    }

    #[test]
    fn hand_computed_step() {
        let p = hand_net(&[1.0, 0.0], &[0.0, 1.0], 10.0);
        let x = DVector::from_column_slice(&[0.5, -0.5]);
        let next = step(&p, &x, 5.0);
        assert_eq!(next[0], 0.25 + 0.5 * (-0.5f64).tanh());
        assert_eq!(next[1], -0.25);
        assert!((next[0] - 0.0189).abs() < 1e-4);
    }

    #[test]
    fn decoupled_latent_decays_geometrically() {
        let n = [0.3, -0.1, 0.5, 0.2];
        let p = hand_net(&[0.0; 4], &n, 10.0);
        let task = TaskSpec::default();
        let traj = forward(&p, &task);
        let kappa0 = -0.3 * n.iter().sum::<f64>();
        let latent = traj.latent.as_ref().unwrap();
        for k in 0..3 {
            let kappa = kappa0 * 0.5f64.powi(k as i32);
            assert!((latent[k] - kappa).abs() < 1e-15);
            assert!((traj.outputs[k] - sigmoid(10.0 * (kappa - 1.0))).abs() < 1e-15);
        }
    }

    #[test]
    fn own_output_as_target_gives_zero_loss_and_gradient() {
        for kind in [ReadoutKind::LatentThreshold, ReadoutKind::LinearSigmoid] {
            let p = init_params(9, 8, 2, kind, 10.0).unwrap();
            let task = TaskSpec::default();
            let own = forward(&p, &task).outputs;
            let (traj, g) = loss_and_gradient_with_targets(&p, &task, &own);
            assert_eq!(traj.loss, 0.0);
            assert_eq!(g.norm, 0.0);
        }
    }

    #[test]
    fn untrained_loss_is_order_t() {
        let task = TaskSpec::default();
        for seed in 0..20 {
            let p = init_params(seed, 100, 1, ReadoutKind::LatentThreshold, 10.0).unwrap();
            let loss = forward(&p, &task).loss;
            assert!(loss > 30.0 && loss < 130.0, "seed {seed}: {loss}");
        }
    }

    #[test]
    fn small_step_descends() {
        let task = TaskSpec::default();
        for seed in 0..10 {
            let p = init_params(seed, 20, 1, ReadoutKind::LinearSigmoid, 10.0).unwrap();
            let (traj, g) = loss_and_gradient(&p, &task);
            let next = sgd_step(&p, &g, 1e-4).unwrap();
            assert!(forward(&next, &task).loss < traj.loss, "seed {seed}");
        }
    }

    #[test]
    fn zero_rate_and_frozen_blocks_leave_params_unchanged() {
        let task = TaskSpec::default();
        let mut p = init_params(4, 10, 2, ReadoutKind::LinearSigmoid, 10.0).unwrap();
        let g = bptt_gradient(&p, &task);
        assert_eq!(sgd_step(&p, &g, 0.0).unwrap(), p);
        p.trainable.m = false;
        p.trainable.readout = false;
        let g = bptt_gradient(&p, &task);
        assert!(g.m.iter().all(|&v| v == 0.0));
        match &g.readout {
            ReadoutGradient::LinearSigmoid { w_out, b_out } => {
                assert!(w_out.iter().all(|&v| v == 0.0) && *b_out == 0.0)
            }
            _ => unreachable!(),
        }
        let expected = (g.nfac.norm_squared() + g.b.norm_squared()).sqrt();
        assert!((g.norm - expected).abs() <= 1e-12 * expected);
        let next = sgd_step(&p, &g, 0.1).unwrap();
        assert_eq!(next.m, p.m);
        assert_eq!(next.readout, p.readout);
        assert_ne!(next.nfac, p.nfac);
    }

    #[test]
    fn confidence_gradient_only_when_trainable() {
        let task = TaskSpec::default();
        let mut p = init_params(1, 10, 1, ReadoutKind::LatentThreshold, 10.0).unwrap();
        let g = bptt_gradient(&p, &task);
        assert_eq!(g.readout, ReadoutGradient::LatentThreshold { confidence: 0.0 });
        if let Readout::LatentThreshold { confidence_trainable, .. } = &mut p.readout {
            *confidence_trainable = true;
        }
        let g = bptt_gradient(&p, &task);
        assert!(matches!(g.readout, ReadoutGradient::LatentThreshold { confidence } if confidence != 0.0));
    }

    #[test]
    fn sgd_rejects_mismatched_shapes() {
        let task = TaskSpec::default();
        let p = init_params(0, 6, 1, ReadoutKind::LatentThreshold, 10.0).unwrap();
        let q = init_params(0, 6, 2, ReadoutKind::LatentThreshold, 10.0).unwrap();
        let g = bptt_gradient(&q, &task);
        assert!(matches!(sgd_step(&p, &g, 0.1), Err(Error::ShapeMismatch { .. })));
        let lin = init_params(0, 6, 1, ReadoutKind::LinearSigmoid, 10.0).unwrap();
        let g = bptt_gradient(&lin, &task);
        assert!(matches!(sgd_step(&p, &g, 0.1), Err(Error::ReadoutMismatch { .. })));
    }

    #[test]
    fn latent_output_increases_with_kappa() {
        let p = hand_net(&[0.0, 0.0], &[1.0, 0.0], 10.0);
        let outs: Vec<f64> = [-2.0, 0.5, 0.99, 1.01, 3.0]
            .iter()
            .map(|&k| readout(&p, &DVector::from_column_slice(&[k, 0.0])).1)
            .collect();
        assert!(outs.windows(2).all(|w| w[0] < w[1]));
    }
}
