//! Training orchestration: per-epoch logs, accuracy, stuck detection, the
//! confidence intervention and the abrupt-drop detector.
//!
//! Epoch `e` of a log describes the parameters *before* the `e`-th update, so
//! a run of `E` epochs logs `E` rows and applies `E` updates.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::latent::{
    find_fixed_points, find_ghosts, latent_flow, FixedPointSet, FlowAnalysis, Grid, LatentFlow,
    RankOneCircuit, DEFAULT_EPS_GHOST, DEFAULT_ROOT_TOL,
};
use crate::output::fmt_f64;
use crate::rnn::{loss_and_gradient, sgd_step, Readout, RnnParams, TaskSpec};
use crate::trajectory::Trajectory;

pub const STUCK_WINDOW: usize = 50;
pub const STUCK_THRESHOLD: f64 = 0.5;
/// Relative single-epoch loss drop that counts as abrupt.
pub const ABRUPT_DROP: f64 = 0.25;
pub const DEFAULT_INTERVENTION_CONFIDENCE: f64 = 1.0;
pub const DEFAULT_RECOVERY_EPOCHS: usize = 4000;

pub const CSV_HEADER: &str = "epoch,loss,grad_norm,accuracy,confidence,fp_count,ghost_absf,ghost_kappa";

/// Fraction of steps where `output > 0.5` agrees with `target == 1`.
pub fn accuracy(traj: &Trajectory) -> f64 {
    if traj.is_empty() {
        return 0.0;
    }
    let hits = traj
        .outputs
        .iter()
        .zip(&traj.targets)
        .filter(|(o, t)| (**o > 0.5) == (**t == 1.0))
        .count();
    hits as f64 / traj.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GhostSummary {
    pub kappa: f64,
    pub abs_flow: f64,
    pub curvature: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss: f64,
    pub grad_norm: f64,
    pub accuracy: f64,
    pub confidence: Option<f64>,
    pub fp_count: Option<usize>,
    pub ghost: Option<GhostSummary>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Learned,
    Stuck,
    Neither,
}

impl Outcome {
    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Learned => "learned",
            Outcome::Stuck => "stuck",
            Outcome::Neither => "neither",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intervention {
    /// First epoch trained under the new value.
    pub epoch: usize,
    pub old_confidence: f64,
    pub new_confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub seed: u64,
    pub config_hash: String,
    pub logs: Vec<EpochLog>,
    pub checkpoint: Option<String>,
    pub interventions: Vec<Intervention>,
    /// Set when a non-finite loss or gradient stopped the run.
    pub aborted: Option<String>,
}

impl RunRecord {
    pub fn new(seed: u64, config_hash: impl Into<String>) -> Self {
        Self {
            seed,
            config_hash: config_hash.into(),
            logs: Vec::new(),
            checkpoint: None,
            interventions: Vec::new(),
            aborted: None,
        }
    }

    pub fn learned(&self) -> bool {
        self.logs.iter().any(|l| l.accuracy == 1.0)
    }

    pub fn epochs_to_learned(&self) -> Option<usize> {
        self.logs.iter().find(|l| l.accuracy == 1.0).map(|l| l.epoch)
    }

    /// Stuck at the final epoch wins over having learned earlier.
    pub fn outcome(&self) -> Outcome {
        if detect_stuck(self, STUCK_WINDOW, STUCK_THRESHOLD).unwrap_or(false) {
            Outcome::Stuck
        } else if self.learned() {
            Outcome::Learned
        } else {
            Outcome::Neither
        }
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.logs.last().map(|l| l.loss)
    }

    pub fn losses(&self) -> Vec<f64> {
        self.logs.iter().map(|l| l.loss).collect()
    }

    /// Epochs whose loss fell by more than [`ABRUPT_DROP`] of the previous epoch's.
    pub fn abrupt_drops(&self) -> Vec<usize> {
        abrupt_drops(&self.losses(), ABRUPT_DROP)
            .into_iter()
            .map(|i| self.logs[i].epoch)
            .collect()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> std::io::Result<()> {
        write_epoch_csv(&self.logs, out)
    }

    pub fn metadata(&self) -> RunMetadata {
        RunMetadata {
            seed: self.seed,
            config_hash: self.config_hash.clone(),
            epochs: self.logs.len(),
            outcome: self.outcome(),
            epochs_to_learned: self.epochs_to_learned(),
            final_loss: self.final_loss(),
            checkpoint: self.checkpoint.clone(),
            interventions: self.interventions.clone(),
            aborted: self.aborted.clone(),
        }
    }
}

/// JSON sidecar of a [`RunRecord`]; the per-epoch rows go to CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub seed: u64,
    pub config_hash: String,
    pub epochs: usize,
    pub outcome: Outcome,
    pub epochs_to_learned: Option<usize>,
    pub final_loss: Option<f64>,
    pub checkpoint: Option<String>,
    pub interventions: Vec<Intervention>,
    pub aborted: Option<String>,
}

/// True iff every accuracy in the trailing `window` epochs is `<= threshold`.
pub fn detect_stuck(record: &RunRecord, window: usize, threshold: f64) -> Result<bool> {
    let found = record.logs.len();
    if window == 0 || found < window {
        return Err(Error::RecordTooShort {
            needed: window.max(1),
            found,
        });
    }
    Ok(record.logs[found - window..]
        .iter()
        .all(|l| l.accuracy <= threshold))
}

/// Indices `i >= 1` with `losses[i-1] - losses[i] > rel * losses[i-1]`.
pub fn abrupt_drops(losses: &[f64], rel: f64) -> Vec<usize> {
    (1..losses.len())
        .filter(|&i| {
            let prev = losses[i - 1];
            prev > 0.0 && prev - losses[i] > rel * prev
        })
        .collect()
}

/// Same parameters with the readout confidence replaced.
pub fn lower_confidence(params: &RnnParams, new_c: f64) -> Result<RnnParams> {
    let mut next = params.clone();
    match &mut next.readout {
        Readout::LatentThreshold { confidence, .. } => *confidence = new_c,
        Readout::LinearSigmoid { .. } => {
            return Err(Error::ReadoutMismatch {
                expected: "latent-threshold",
            })
        }
    }
    Ok(next)
}

/// Applies [`lower_confidence`] and records the event on `record`.
pub fn intervene(record: &mut RunRecord, params: &RnnParams, new_c: f64) -> Result<RnnParams> {
    let old = params.readout.confidence().ok_or(Error::ReadoutMismatch {
        expected: "latent-threshold",
    })?;
    let next = lower_confidence(params, new_c)?;
    record.interventions.push(Intervention {
        epoch: record.logs.last().map_or(0, |l| l.epoch + 1),
        old_confidence: old,
        new_confidence: new_c,
    });
    Ok(next)
}

/// Optional latent-circuit analysis during training (rank-one nets only).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentHooks {
    /// Analyze every `stride` epochs and at the last epoch.
    pub stride: usize,
    pub snapshot_epochs: Vec<usize>,
    pub grid: Grid,
    pub root_tol: f64,
    pub eps_ghost: f64,
}

impl Default for LatentHooks {
    fn default() -> Self {
        Self {
            stride: 50,
            snapshot_epochs: Vec::new(),
            grid: Grid::default(),
            root_tol: DEFAULT_ROOT_TOL,
            eps_ghost: DEFAULT_EPS_GHOST,
        }
    }
}

/// Sampled flow kept at a requested snapshot epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowSnapshot {
    pub epoch: usize,
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    pub analysis: FlowAnalysis,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSpec {
    pub alpha: f64,
    pub epochs: usize,
    /// Epoch number of the first logged row, for continued runs.
    pub start_epoch: usize,
    pub latent: Option<LatentHooks>,
}

impl TrainingSpec {
    pub fn new(alpha: f64, epochs: usize) -> Self {
        Self {
            alpha,
            epochs,
            start_epoch: 0,
            latent: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainingOutput {
    pub params: RnnParams,
    /// Fixed points at each analyzed epoch.
    pub fixed_points: Vec<(usize, FixedPointSet)>,
    pub snapshots: Vec<FlowSnapshot>,
}

fn summarize_ghost(params: &RnnParams, analysis: &FlowAnalysis) -> Option<GhostSummary> {
    let g = match &params.readout {
        Readout::LatentThreshold { kappa_star, .. } => analysis.ghosts.nearest(*kappa_star),
        Readout::LinearSigmoid { .. } => analysis.ghosts.slowest(),
    }?;
    Some(GhostSummary {
        kappa: g.kappa,
        abs_flow: g.abs_flow,
        curvature: g.curvature,
    })
}

/// Full-batch gradient descent for `spec.epochs` epochs, appending to `record`.
pub fn run_training(
    params: &RnnParams,
    task: &TaskSpec,
    spec: &TrainingSpec,
    record: &mut RunRecord,
) -> Result<TrainingOutput> {
    params.validate()?;
    task.validate()?;
    if !(spec.alpha >= 0.0 && spec.alpha.is_finite()) {
        return Err(Error::InvalidConfig(format!("learning rate {} is not a finite non-negative number", spec.alpha)));
    }
    let hooks = match &spec.latent {
        Some(h) if params.rank() == 1 => {
            if h.stride == 0 {
                return Err(Error::InvalidConfig("latent analysis stride must be positive".into()));
            }
            Some(h)
        }
        Some(_) => return Err(Error::RankPrecondition(params.rank())),
        None => None,
    };
    let mut out = TrainingOutput {
        params: params.clone(),
        fixed_points: Vec::new(),
        snapshots: Vec::new(),
    };
    for i in 0..spec.epochs {
        let epoch = spec.start_epoch + i;
        let (traj, grads) = loss_and_gradient(&out.params, task);
        if !traj.loss.is_finite() || !grads.norm.is_finite() {
            record.aborted = Some(format!("non-finite loss or gradient at epoch {epoch}"));
            break;
        }
        let mut row = EpochLog {
            epoch,
            loss: traj.loss,
            grad_norm: grads.norm,
            accuracy: accuracy(&traj),
            confidence: out.params.readout.confidence(),
            fp_count: None,
            ghost: None,
        };
        if let Some(h) = hooks {
            let snapshot = h.snapshot_epochs.contains(&epoch);
            if i % h.stride == 0 || i + 1 == spec.epochs || snapshot {
                let circuit = RankOneCircuit::from_params(&out.params)?;
                let flow: LatentFlow<RankOneCircuit> = latent_flow(circuit, &h.grid)?;
                let analysis = FlowAnalysis {
                    epoch: Some(epoch),
                    fixed_points: find_fixed_points(&flow, h.root_tol),
                    ghosts: find_ghosts(&flow, h.eps_ghost),
                };
                row.fp_count = Some(analysis.fixed_points.count());
                row.ghost = summarize_ghost(&out.params, &analysis);
                out.fixed_points.push((epoch, analysis.fixed_points.clone()));
                if snapshot {
                    out.snapshots.push(FlowSnapshot {
                        epoch,
                        grid: flow.grid,
                        values: flow.values,
                        analysis,
                    });
                }
            }
        }
        record.logs.push(row);
        out.params = sgd_step(&out.params, &grads, spec.alpha)?;
    }
    Ok(out)
}

fn opt<T>(v: Option<T>, f: impl FnOnce(T) -> String) -> String {
    v.map(f).unwrap_or_default()
}

pub fn write_epoch_csv<W: Write>(logs: &[EpochLog], mut out: W) -> std::io::Result<()> {
    let mut buf = String::with_capacity(64 * (logs.len() + 1));
    buf.push_str(CSV_HEADER);
    buf.push('\n');
    for l in logs {
        buf.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            l.epoch,
            fmt_f64(l.loss),
            fmt_f64(l.grad_norm),
            fmt_f64(l.accuracy),
            opt(l.confidence, fmt_f64),
            opt(l.fp_count, |c| c.to_string()),
            opt(l.ghost, |g| fmt_f64(g.abs_flow)),
            opt(l.ghost, |g| fmt_f64(g.kappa)),
        ));
    }
    out.write_all(buf.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rnn::{init_params, ReadoutKind};
    use crate::trajectory::sigmoid;

    fn traj(outputs: Vec<f64>) -> Trajectory {
        let task = TaskSpec::default();
        Trajectory {
            dt: task.dt,
            state_dim: 1,
            states: vec![0.0; outputs.len()],
            latent: None,
            targets: task.targets(),
            loss: 0.0,
            outputs,
        }
    }

    fn record(accs: &[f64]) -> RunRecord {
        let mut r = RunRecord::new(0, "h");
        r.logs = accs
            .iter()
            .enumerate()
            .map(|(epoch, &accuracy)| EpochLog {
                epoch,
                loss: 1.0,
                grad_norm: 0.0,
                accuracy,
                confidence: None,
                fp_count: None,
                ghost: None,
            })
            .collect();
        r
    }

    #[test]
    fn accuracy_examples() {
        assert_eq!(accuracy(&traj(vec![0.0; 40])), 0.5);
        assert_eq!(accuracy(&traj(TaskSpec::default().targets())), 1.0);
        let mut late = TaskSpec::default().targets();
        late[20] = 0.0;
        assert_eq!(accuracy(&traj(late)), 39.0 / 40.0);
    }

    #[test]
    fn stuck_detection() {
        assert!(detect_stuck(&record(&[0.5; 60]), 50, 0.5).unwrap());
        let mut accs = vec![0.5; 60];
        accs[40] = 0.51;
        assert!(!detect_stuck(&record(&accs), 50, 0.5).unwrap());
        // the window only looks at the tail
        accs[5] = 1.0;
        accs[40] = 0.5;
        assert!(detect_stuck(&record(&accs), 50, 0.5).unwrap());
        assert!(matches!(
            detect_stuck(&record(&[0.5; 10]), 50, 0.5),
            Err(Error::RecordTooShort { needed: 50, found: 10 })
        ));
    }

    #[test]
    fn outcome_precedence() {
        let mut accs = vec![0.5; 100];
        accs[10] = 1.0;
        assert_eq!(record(&accs).outcome(), Outcome::Stuck);
        accs[99] = 0.975;
        assert_eq!(record(&accs).outcome(), Outcome::Learned);
        assert_eq!(record(&[0.9; 100]).outcome(), Outcome::Neither);
        assert_eq!(record(&[0.5; 10]).outcome(), Outcome::Neither);
    }

    #[test]
    fn abrupt_drop_detector() {
        assert_eq!(abrupt_drops(&[10.0, 9.0, 8.0, 5.0, 4.9], 0.25), vec![3]);
        assert!(abrupt_drops(&[10.0, 7.5, 5.625], 0.25).is_empty());
        assert!(abrupt_drops(&[0.0, 0.0], 0.25).is_empty());
    }

    #[test]
    fn lowering_confidence_desaturates() {
        let p = init_params(0, 10, 1, ReadoutKind::LatentThreshold, 10.0).unwrap();
        assert_eq!(lower_confidence(&p, 10.0).unwrap(), p);
        let q = lower_confidence(&p, 1.0).unwrap();
        assert_eq!(q.readout.confidence(), Some(1.0));
        assert_eq!((&q.m, &q.nfac, &q.b, q.tau), (&p.m, &p.nfac, &p.b, p.tau));
        for kappa in [-3.0, 0.0, 0.9, 1.1, 5.0] {
            let hi = (sigmoid(10.0 * (kappa - 1.0)) - 0.5).abs();
            let lo = (sigmoid(1.0 * (kappa - 1.0)) - 0.5).abs();
            assert!(lo < hi, "{kappa}");
        }
        let lin = init_params(0, 10, 1, ReadoutKind::LinearSigmoid, 10.0).unwrap();
        assert!(lower_confidence(&lin, 1.0).is_err());
    }

    #[test]
    fn intervention_is_logged() {
        let p = init_params(0, 10, 1, ReadoutKind::LatentThreshold, 10.0).unwrap();
        let mut rec = RunRecord::new(0, "h");
        let out = run_training(&p, &TaskSpec::default(), &TrainingSpec::new(1e-3, 3), &mut rec).unwrap();
        intervene(&mut rec, &out.params, 1.0).unwrap();
        assert_eq!(
            rec.interventions,
            vec![Intervention {
                epoch: 3,
                old_confidence: 10.0,
                new_confidence: 1.0
            }]
        );
    }

    #[test]
    fn zero_epochs_is_a_no_op() {
        let p = init_params(2, 10, 1, ReadoutKind::LatentThreshold, 10.0).unwrap();
        let mut rec = RunRecord::new(2, "h");
        let out = run_training(&p, &TaskSpec::default(), &TrainingSpec::new(1e-3, 0), &mut rec).unwrap();
        assert!(rec.logs.is_empty());
        assert_eq!(out.params, p);
    }

    #[test]
    fn training_is_deterministic_and_hooks_fill_columns() {
        let p = init_params(5, 20, 1, ReadoutKind::LatentThreshold, 10.0).unwrap();
        let mut spec = TrainingSpec::new(1e-3, 25);
        spec.latent = Some(LatentHooks {
            stride: 10,
            snapshot_epochs: vec![3],
            ..LatentHooks::default()
        });
        let run = || {
            let mut rec = RunRecord::new(5, "h");
            let out = run_training(&p, &TaskSpec::default(), &spec, &mut rec).unwrap();
            let mut csv = Vec::new();
            rec.write_csv(&mut csv).unwrap();
            (csv, out)
        };
        let (a, out) = run();
        let (b, _) = run();
        assert_eq!(a, b);
        let text = String::from_utf8(a).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some(CSV_HEADER));
        let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
        assert_eq!(rows.len(), 25);
        let analyzed: Vec<usize> = out.fixed_points.iter().map(|(e, _)| *e).collect();
        assert_eq!(analyzed, vec![0, 3, 10, 20, 24]);
        assert!(!rows[0][5].is_empty() && rows[1][5].is_empty());
        assert_eq!(out.snapshots.len(), 1);
        assert_eq!(out.snapshots[0].grid.len(), 3001);
    }

    #[test]
    fn non_finite_loss_aborts() {
        let mut p = init_params(1, 10, 1, ReadoutKind::LatentThreshold, 10.0).unwrap();
        p.b[0] = f64::NAN;
        let mut rec = RunRecord::new(1, "h");
        run_training(&p, &TaskSpec::default(), &TrainingSpec::new(1e-3, 5), &mut rec).unwrap();
        assert!(rec.logs.is_empty());
        assert!(rec.aborted.is_some());
    }

    #[test]
    fn hooks_require_rank_one() {
        let p = init_params(1, 10, 2, ReadoutKind::LatentThreshold, 10.0).unwrap();
        let mut spec = TrainingSpec::new(1e-3, 5);
        spec.latent = Some(LatentHooks::default());
        let mut rec = RunRecord::new(1, "h");
        assert!(matches!(
            run_training(&p, &TaskSpec::default(), &spec, &mut rec),
            Err(Error::RankPrecondition(2))
        ));
    }
}
