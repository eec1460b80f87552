//! Oracles shared by the integration test targets.
#![allow(dead_code)]

use ghostlab::rnn::{forward, InitSpec, Readout, ReadoutKind, RnnParams, TaskSpec};
use nalgebra::DVector;

pub fn net(seed: u64, n: usize, k: usize, readout: ReadoutKind, scale: f64) -> RnnParams {
    let spec = InitSpec {
        scale,
        confidence: 2.0,
        confidence_trainable: true,
        ..InitSpec::new(n, k, readout)
    };
    let mut p = RnnParams::init(seed, &spec).unwrap();
    // deterministic nonzero bias so the origin is not special
    p.b = DVector::from_fn(n, |i, _| 0.2 * ((seed as f64 + 1.0) * (i as f64 + 0.5)).sin());
    p
}

pub fn task_with_steps(steps: usize) -> TaskSpec {
    let t = TaskSpec::default();
    TaskSpec {
        t_delay: steps as f64 * t.dt / 2.0,
        ..t
    }
}

pub fn param_count(p: &RnnParams) -> usize {
    let (n, k) = (p.neurons(), p.rank());
    let readout = match p.readout {
        Readout::LatentThreshold { .. } => 1,
        Readout::LinearSigmoid { .. } => n + 1,
    };
    2 * n * k + n + readout
}

/// Parameter `i` in the order of `GradientBundle::flatten`: M and Nfac row-major, b, readout.
pub fn slot(p: &mut RnnParams, i: usize) -> &mut f64 {
    let (n, k) = (p.neurons(), p.rank());
    let blocks = [n * k, k * n, n];
    match i {
        i if i < blocks[0] => &mut p.m[(i / k, i % k)],
        i if i < blocks[0] + blocks[1] => {
            let j = i - blocks[0];
            &mut p.nfac[(j / n, j % n)]
        }
        i if i < blocks.iter().sum() => &mut p.b[i - blocks[0] - blocks[1]],
        i => {
            let j = i - blocks.iter().sum::<usize>();
            match &mut p.readout {
                Readout::LatentThreshold { confidence, .. } => confidence,
                Readout::LinearSigmoid { w_out, b_out, .. } => {
                    if j < n {
                        &mut w_out[j]
                    } else {
                        b_out
                    }
                }
            }
        }
    }
}

pub fn central_difference(p: &RnnParams, task: &TaskSpec, h: f64) -> Vec<f64> {
    (0..param_count(p))
        .map(|i| {
            let mut plus = p.clone();
            *slot(&mut plus, i) += h;
            let mut minus = p.clone();
            *slot(&mut minus, i) -= h;
            (forward(&plus, task).loss - forward(&minus, task).loss) / (2.0 * h)
        })
        .collect()
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}
