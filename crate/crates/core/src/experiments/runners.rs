//! One runner per preset. Each resolves the config, writes `config.json`,
//! its data files and finally `manifest.json` under `config.out_dir`, and
//! returns an in-memory report.
//!
//! Jobs run on the rayon pool and hand back the bytes of their files; the
//! calling thread writes them in job order.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{
    config_hash, derive_seed, mean, ordered_map, sem, CellSummary, ExperimentConfig,
    ExperimentKind, OutcomeCounts, OutputSink, SeedSummary, SweepResult,
};
use crate::error::{Error, Result};
use crate::latent::{track_bifurcations, write_flow_columns, BifurcationEvent};
use crate::output::fmt_f64;
use crate::protocol::{
    abrupt_drops, intervene, run_training, write_epoch_csv, EpochLog, GhostSummary, Outcome,
    RunMetadata, RunRecord, TrainingOutput, TrainingSpec, ABRUPT_DROP,
};
use crate::rnn::{Checkpoint, RnnParams};
use crate::toy::{analytical_loss, optimal_r, simulate_toy, train_toy_gd, ToyTrainRecord};

type Files = Vec<(String, Vec<u8>)>;

fn json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(bytes)
}

fn csv_bytes(logs: &[EpochLog]) -> Vec<u8> {
    let mut buf = Vec::new();
    write_epoch_csv(logs, &mut buf).expect("writing to a Vec cannot fail");
    buf
}

struct Session {
    config: ExperimentConfig,
    hash: String,
    sink: OutputSink,
}

impl Session {
    fn open(config: &ExperimentConfig, kind: ExperimentKind) -> Result<Self> {
        if config.kind != kind {
            return Err(Error::InvalidConfig(format!(
                "config is for `{}`, not `{}`",
                config.kind.as_str(),
                kind.as_str()
            )));
        }
        let config = config.clone().resolve()?;
        let hash = config_hash(&config)?;
        let mut sink = OutputSink::new(&config.out_dir);
        sink.write_json("config.json", &config)?;
        Ok(Self { config, hash, sink })
    }

    fn write_all(&mut self, files: Files) -> Result<()> {
        for (rel, bytes) in files {
            self.sink.write(&rel, &bytes)?;
        }
        Ok(())
    }

    fn finish(self) -> Result<()> {
        self.sink.finish(self.config.kind, &self.hash)?;
        Ok(())
    }
}

fn seed_summary(seed_index: u64, run_seed: u64, record: &RunRecord) -> SeedSummary {
    SeedSummary {
        seed_index,
        run_seed,
        final_loss: record.final_loss().unwrap_or(f64::NAN),
        epochs_to_learned: record.epochs_to_learned(),
        outcome: Some(record.outcome()),
        final_regime: None,
    }
}

// ---------------------------------------------------------------------------
// toy loss profile

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileRow {
    pub r: f64,
    pub r_over_r_star: f64,
    pub analytic: f64,
    /// Numeric loss, one entry per overlay confidence.
    pub numeric: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fig2aReport {
    pub config_hash: String,
    pub r_star: f64,
    pub confidences: Vec<f64>,
    pub rows: Vec<ProfileRow>,
    /// Per confidence, `max |numeric - analytic|` over the grid.
    pub max_deviation: Vec<f64>,
}

/// `points` values from `lo` to `hi`, evenly spaced in `ln r`, with exact endpoints.
pub fn log_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..points)
        .map(|k| match k {
            0 => lo,
            k if k + 1 == points => hi,
            k => (a + (b - a) * k as f64 / (points - 1) as f64).exp(),
        })
        .collect()
}

pub fn run_fig2a(config: &ExperimentConfig) -> Result<Fig2aReport> {
    let mut s = Session::open(config, ExperimentKind::Fig2a)?;
    let toy = s.config.toy.clone();
    let r_star = optimal_r(toy.t_delay)?;
    let rs = log_grid(toy.profile_min * r_star, toy.profile_max * r_star, toy.profile_points);
    let rows: Vec<Result<ProfileRow>> = ordered_map(&rs, |&r| {
        let numeric = toy
            .overlay_confidences
            .iter()
            .map(|&c| simulate_toy(&toy.toy_config(c), r).map(|t| t.loss))
            .collect::<Result<Vec<f64>>>()?;
        Ok(ProfileRow {
            r,
            r_over_r_star: r / r_star,
            analytic: analytical_loss(r, toy.t_delay),
            numeric,
        })
    });
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    let max_deviation = (0..toy.overlay_confidences.len())
        .map(|j| {
            rows.iter()
                .map(|row| (row.numeric[j] - row.analytic).abs())
                .fold(0.0, f64::max)
        })
        .collect();

    let mut csv = String::from("r,r_over_r_star,analytic");
    for c in &toy.overlay_confidences {
        csv.push_str(&format!(",numeric_c{c}"));
    }
    csv.push('\n');
    for row in &rows {
        csv.push_str(&format!("{},{},{}", fmt_f64(row.r), fmt_f64(row.r_over_r_star), fmt_f64(row.analytic)));
        for v in &row.numeric {
            csv.push(',');
            csv.push_str(&fmt_f64(*v));
        }
        csv.push('\n');
    }
    s.sink.write("profile.csv", csv.as_bytes())?;
    let report = Fig2aReport {
        config_hash: s.hash.clone(),
        r_star,
        confidences: toy.overlay_confidences.clone(),
        rows,
        max_deviation,
    };
    s.sink.write_json("summary.json", &report)?;
    s.finish()?;
    Ok(report)
}

// ---------------------------------------------------------------------------
// toy gradient descent sweep

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fig2Report {
    pub sweep: SweepResult,
    /// `records[cell][seed]`, cells in learning-rate order.
    pub records: Vec<Vec<ToyTrainRecord>>,
}

fn toy_trace_csv(rec: &ToyTrainRecord) -> String {
    let mut csv = String::from("epoch,r,loss,gradient,regime\n");
    for e in &rec.epochs {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            e.epoch,
            fmt_f64(e.r),
            fmt_f64(e.loss),
            fmt_f64(e.gradient),
            e.regime.as_str()
        ));
    }
    csv
}

pub fn run_fig2(config: &ExperimentConfig) -> Result<Fig2Report> {
    let mut s = Session::open(config, ExperimentKind::Fig2)?;
    let toy = s.config.toy.clone();
    let r_star = optimal_r(toy.t_delay)?;
    let master = s.config.master_seed;
    let jobs: Vec<(usize, u64)> = (0..toy.alphas.len())
        .flat_map(|cell| s.config.seeds.iter().map(move |&i| (cell, i)))
        .collect();
    let results: Vec<Result<(u64, f64, ToyTrainRecord)>> = ordered_map(&jobs, |&(cell, idx)| {
        let run_seed = derive_seed(master, ExperimentKind::Fig2, cell, idx);
        let r0 = if toy.r0_std > 0.0 {
            let normal = Normal::new(toy.r0_mean * r_star, toy.r0_std * r_star)
                .map_err(|e| Error::InvalidConfig(format!("initial r distribution: {e}")))?;
            normal.sample(&mut ChaCha8Rng::seed_from_u64(run_seed))
        } else {
            toy.r0_mean * r_star
        };
        Ok((run_seed, r0, train_toy_gd(toy.t_delay, r0, toy.alphas[cell], toy.epochs)?))
    });

    let mut table = String::from("alpha,seed,r0,final_r,final_loss,final_regime,first_abrupt_drop\n");
    let mut cells = Vec::new();
    let mut records: Vec<Vec<ToyTrainRecord>> = vec![Vec::new(); toy.alphas.len()];
    let mut seeds: Vec<Vec<SeedSummary>> = vec![Vec::new(); toy.alphas.len()];
    for (&(cell, idx), res) in jobs.iter().zip(results) {
        let (run_seed, r0, rec) = res?;
        let drop = abrupt_drops(&rec.loss_trace(), ABRUPT_DROP).first().copied();
        table.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            fmt_f64(rec.alpha),
            idx,
            fmt_f64(r0),
            fmt_f64(rec.final_r),
            fmt_f64(rec.final_loss()),
            rec.final_regime().as_str(),
            drop.map(|d| d.to_string()).unwrap_or_default()
        ));
        seeds[cell].push(SeedSummary {
            seed_index: idx,
            run_seed,
            final_loss: rec.final_loss(),
            epochs_to_learned: None,
            outcome: None,
            final_regime: Some(rec.final_regime().as_str().to_string()),
        });
        records[cell].push(rec);
    }
    for (cell, seed_rows) in seeds.into_iter().enumerate() {
        // one representative trace per rate: the first seed
        s.sink.write(&format!("traces/alpha_{cell:02}.csv"), toy_trace_csv(&records[cell][0]).as_bytes())?;
        cells.push(CellSummary::new(
            cell,
            BTreeMap::from([("alpha".to_string(), toy.alphas[cell])]),
            seed_rows,
        ));
    }
    s.sink.write("final_loss.csv", table.as_bytes())?;
    let sweep = SweepResult {
        kind: ExperimentKind::Fig2,
        config_hash: s.hash.clone(),
        cells,
    };
    s.sink.write_json("sweep.json", &sweep)?;
    s.finish()?;
    Ok(Fig2Report { sweep, records })
}

// ---------------------------------------------------------------------------
// latent dynamics during training at two rates

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fig3RunSummary {
    pub seed_index: u64,
    pub run_seed: u64,
    pub metadata: RunMetadata,
    /// `(epoch, fixed-point count)` at every analyzed epoch.
    pub fp_counts: Vec<(usize, usize)>,
    pub bifurcations: Vec<BifurcationEvent>,
    pub abrupt_drops: Vec<usize>,
    /// Ghost nearest `kappa*` at the last analyzed epoch.
    pub final_ghost: Option<GhostSummary>,
    #[serde(skip)]
    pub logs: Vec<EpochLog>,
}

impl Fig3RunSummary {
    /// Analyzed epochs, in order, with their ghost summary.
    pub fn analyzed(&self) -> impl Iterator<Item = &EpochLog> {
        self.logs.iter().filter(|l| l.fp_count.is_some())
    }

    pub fn final_grad_norm(&self) -> Option<f64> {
        self.logs.last().map(|l| l.grad_norm)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fig3ArmReport {
    pub label: String,
    pub alpha: f64,
    pub epochs: usize,
    pub stride: usize,
    pub runs: Vec<Fig3RunSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fig3Report {
    pub config_hash: String,
    pub arms: Vec<Fig3ArmReport>,
}

fn checkpoint_bytes(params: &RnnParams, run_seed: u64, config: &ExperimentConfig) -> Result<Vec<u8>> {
    json_bytes(&Checkpoint::new(params, run_seed, serde_json::to_value(config)?))
}

pub fn run_fig3(config: &ExperimentConfig) -> Result<Fig3Report> {
    let mut s = Session::open(config, ExperimentKind::Fig3)?;
    let cfg = s.config.clone();
    if cfg.latent.stride == 0 {
        return Err(Error::InvalidConfig("fig3 needs latent analysis (latent.stride > 0)".into()));
    }
    let init = cfg.model.init_spec(cfg.model.rank);
    let mut arms = Vec::new();
    for arm in &cfg.fig3.arms {
        let spec = TrainingSpec {
            latent: cfg.latent.hooks(arm.snapshot_epochs.clone()),
            ..TrainingSpec::new(arm.alpha, arm.epochs)
        };
        let results: Vec<Result<(Fig3RunSummary, Files)>> = ordered_map(&cfg.seeds, |&idx| {
            // both arms share cell 0, so they start from the same networks
            let run_seed = derive_seed(cfg.master_seed, ExperimentKind::Fig3, 0, idx);
            let params = RnnParams::init(run_seed, &init)?;
            let mut record = RunRecord::new(run_seed, s.hash.clone());
            let out: TrainingOutput = run_training(&params, &cfg.task, &spec, &mut record)?;
            let stem = format!("{}/seed_{idx:03}", arm.label);
            let mut files: Files = Vec::new();
            record.checkpoint = Some(format!("{stem}_final.ckpt.json"));
            files.push((format!("{stem}_final.ckpt.json"), checkpoint_bytes(&out.params, run_seed, &cfg)?));
            for snap in &out.snapshots {
                let mut text = Vec::new();
                write_flow_columns(&snap.grid, &snap.values, &mut text).expect("writing to a Vec cannot fail");
                let flow_stem = format!("{}/flow_s{idx:03}_e{:05}", arm.label, snap.epoch);
                files.push((format!("{flow_stem}.txt"), text));
                files.push((format!("{flow_stem}.json"), json_bytes(&snap.analysis)?));
            }
            files.push((format!("{stem}.csv"), csv_bytes(&record.logs)));
            let summary = Fig3RunSummary {
                seed_index: idx,
                run_seed,
                metadata: record.metadata(),
                fp_counts: out.fixed_points.iter().map(|(e, f)| (*e, f.count())).collect(),
                bifurcations: track_bifurcations(out.fixed_points.iter().map(|(e, f)| (*e, f))),
                abrupt_drops: record.abrupt_drops(),
                final_ghost: record.logs.iter().rev().find(|l| l.fp_count.is_some()).and_then(|l| l.ghost),
                logs: record.logs,
            };
            files.push((format!("{stem}.json"), json_bytes(&summary)?));
            Ok((summary, files))
        });
        let mut runs = Vec::new();
        for res in results {
            let (summary, files) = res?;
            s.write_all(files)?;
            runs.push(summary);
        }
        arms.push(Fig3ArmReport {
            label: arm.label.clone(),
            alpha: arm.alpha,
            epochs: arm.epochs,
            stride: cfg.latent.stride,
            runs,
        });
    }
    let report = Fig3Report {
        config_hash: s.hash.clone(),
        arms,
    };
    s.sink.write_json("summary.json", &report)?;
    s.finish()?;
    Ok(report)
}

// ---------------------------------------------------------------------------
// confidence intervention on stuck runs

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fig4StuckRun {
    pub seed_index: u64,
    pub run_seed: u64,
    /// Accuracy exceeded 0.5 at some epoch after the intervention.
    pub recovered: bool,
    pub recovery_epoch: Option<usize>,
    pub control_recovered: Option<bool>,
    pub grad_norm_before: f64,
    pub grad_norm_after: f64,
    pub control_grad_norm_after: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fig4Report {
    pub sweep: SweepResult,
    pub cohort: usize,
    pub outcomes: OutcomeCounts,
    pub stuck: Vec<Fig4StuckRun>,
}

fn first_above_half(logs: &[EpochLog]) -> Option<usize> {
    logs.iter().find(|l| l.accuracy > 0.5).map(|l| l.epoch)
}

/// Mean and standard error per epoch over runs of possibly different lengths.
fn curve_csv<'a>(runs: impl IntoIterator<Item = &'a [EpochLog]>) -> String {
    let mut by_epoch: BTreeMap<usize, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for logs in runs {
        for l in logs {
            let e = by_epoch.entry(l.epoch).or_default();
            e.0.push(l.loss);
            e.1.push(l.accuracy);
        }
    }
    let mut csv = String::from("epoch,n,loss_mean,loss_sem,accuracy_mean,accuracy_sem\n");
    for (epoch, (loss, acc)) in by_epoch {
        csv.push_str(&format!(
            "{epoch},{},{},{},{},{}\n",
            loss.len(),
            fmt_f64(mean(&loss)),
            fmt_f64(sem(&loss)),
            fmt_f64(mean(&acc)),
            fmt_f64(sem(&acc))
        ));
    }
    csv
}

struct Fig4Run {
    idx: u64,
    run_seed: u64,
    phase1: RunRecord,
    intervention: Option<(Vec<EpochLog>, RunMetadata)>,
    control: Option<Vec<EpochLog>>,
}

pub fn run_fig4(config: &ExperimentConfig) -> Result<Fig4Report> {
    let mut s = Session::open(config, ExperimentKind::Fig4)?;
    let cfg = s.config.clone();
    let f4 = cfg.fig4.clone();
    let init = cfg.model.init_spec(cfg.model.rank);
    let results: Vec<Result<Fig4Run>> = ordered_map(&cfg.seeds, |&idx| {
        let run_seed = derive_seed(cfg.master_seed, ExperimentKind::Fig4, 0, idx);
        let params = RnnParams::init(run_seed, &init)?;
        let mut phase1 = RunRecord::new(run_seed, s.hash.clone());
        let out = run_training(&params, &cfg.task, &TrainingSpec::new(f4.alpha, f4.epochs), &mut phase1)?;
        let mut run = Fig4Run {
            idx,
            run_seed,
            intervention: None,
            control: None,
            phase1: phase1.clone(),
        };
        if phase1.outcome() != Outcome::Stuck || phase1.aborted.is_some() {
            return Ok(run);
        }
        let spec = TrainingSpec {
            start_epoch: f4.epochs,
            ..TrainingSpec::new(f4.alpha, f4.recovery_epochs)
        };
        let mut rec = phase1.clone();
        let lowered = intervene(&mut rec, &out.params, f4.new_confidence)?;
        run_training(&lowered, &cfg.task, &spec, &mut rec)?;
        let meta = rec.metadata();
        run.intervention = Some((rec.logs.split_off(f4.epochs), meta));
        if f4.control {
            let mut ctrl = phase1.clone();
            run_training(&out.params, &cfg.task, &spec, &mut ctrl)?;
            run.control = Some(ctrl.logs.split_off(f4.epochs));
        }
        Ok(run)
    });
    let mut runs = Vec::new();
    for res in results {
        runs.push(res?);
    }

    let mut seeds = Vec::new();
    let mut stuck = Vec::new();
    for run in &runs {
        let stem = format!("runs/seed_{:03}", run.idx);
        s.sink.write(&format!("{stem}.csv"), &csv_bytes(&run.phase1.logs))?;
        s.sink.write_json(&format!("{stem}.json"), &run.phase1.metadata())?;
        seeds.push(seed_summary(run.idx, run.run_seed, &run.phase1));
        if let Some((logs, meta)) = &run.intervention {
            s.sink.write(&format!("{stem}_intervention.csv"), &csv_bytes(logs))?;
            s.sink.write_json(&format!("{stem}_intervention.json"), meta)?;
            if let Some(ctrl) = &run.control {
                s.sink.write(&format!("{stem}_control.csv"), &csv_bytes(ctrl))?;
            }
            let recovery_epoch = first_above_half(logs);
            stuck.push(Fig4StuckRun {
                seed_index: run.idx,
                run_seed: run.run_seed,
                recovered: recovery_epoch.is_some(),
                recovery_epoch,
                control_recovered: run.control.as_ref().map(|c| first_above_half(c).is_some()),
                grad_norm_before: run.phase1.logs.last().map_or(f64::NAN, |l| l.grad_norm),
                grad_norm_after: logs.first().map_or(f64::NAN, |l| l.grad_norm),
                control_grad_norm_after: run.control.as_ref().and_then(|c| c.first()).map(|l| l.grad_norm),
            });
        }
    }
    s.sink.write("curve_cohort.csv", curve_csv(runs.iter().map(|r| r.phase1.logs.as_slice())).as_bytes())?;
    s.sink.write(
        "curve_phase1.csv",
        curve_csv(runs.iter().filter(|r| r.intervention.is_some()).map(|r| r.phase1.logs.as_slice())).as_bytes(),
    )?;
    s.sink.write(
        "curve_intervention.csv",
        curve_csv(runs.iter().filter_map(|r| r.intervention.as_ref()).map(|(l, _)| l.as_slice())).as_bytes(),
    )?;
    if f4.control {
        s.sink.write(
            "curve_control.csv",
            curve_csv(runs.iter().filter_map(|r| r.control.as_deref())).as_bytes(),
        )?;
    }
    let cell = CellSummary::new(
        0,
        BTreeMap::from([
            ("alpha".to_string(), f4.alpha),
            ("confidence".to_string(), cfg.model.confidence),
            ("new_confidence".to_string(), f4.new_confidence),
        ]),
        seeds,
    );
    let report = Fig4Report {
        cohort: runs.len(),
        outcomes: cell.outcomes,
        sweep: SweepResult {
            kind: ExperimentKind::Fig4,
            config_hash: s.hash.clone(),
            cells: vec![cell],
        },
        stuck,
    };
    s.sink.write_json("summary.json", &report)?;
    s.finish()?;
    Ok(report)
}

// ---------------------------------------------------------------------------
// learning-rate and rank sweeps

fn run_rnn_sweep(config: &ExperimentConfig, kind: ExperimentKind) -> Result<SweepResult> {
    let mut s = Session::open(config, kind)?;
    let cfg = s.config.clone();
    if cfg.training.epochs == 0 {
        return Err(Error::InvalidConfig("training.epochs must be positive".into()));
    }
    let ranks = match kind {
        ExperimentKind::FigS2 => cfg.training.ranks.clone(),
        _ => vec![cfg.model.rank],
    };
    let grid: Vec<(f64, usize)> = cfg
        .training
        .alphas
        .iter()
        .flat_map(|&a| ranks.iter().map(move |&k| (a, k)))
        .collect();
    let jobs: Vec<(usize, u64)> = (0..grid.len())
        .flat_map(|cell| cfg.seeds.iter().map(move |&i| (cell, i)))
        .collect();
    let save_checkpoints = kind == ExperimentKind::Custom;
    let results: Vec<Result<(SeedSummary, Files)>> = ordered_map(&jobs, |&(cell, idx)| {
        let (alpha, rank) = grid[cell];
        let run_seed = derive_seed(cfg.master_seed, kind, cell, idx);
        let params = RnnParams::init(run_seed, &cfg.model.init_spec(rank))?;
        let spec = TrainingSpec {
            latent: if rank == 1 { cfg.latent.hooks(Vec::new()) } else { None },
            ..TrainingSpec::new(alpha, cfg.training.epochs)
        };
        let mut record = RunRecord::new(run_seed, s.hash.clone());
        let out = run_training(&params, &cfg.task, &spec, &mut record)?;
        let stem = format!("runs/c{cell:02}_s{idx:03}");
        let mut files: Files = Vec::new();
        if save_checkpoints {
            record.checkpoint = Some(format!("{stem}_final.ckpt.json"));
            files.push((format!("{stem}_final.ckpt.json"), checkpoint_bytes(&out.params, run_seed, &cfg)?));
        }
        files.push((format!("{stem}.csv"), csv_bytes(&record.logs)));
        files.push((format!("{stem}.json"), json_bytes(&record.metadata())?));
        Ok((seed_summary(idx, run_seed, &record), files))
    });

    let mut table = String::from("cell,alpha,rank,seed,outcome,epochs_to_learned,final_loss\n");
    let mut per_cell: Vec<Vec<SeedSummary>> = vec![Vec::new(); grid.len()];
    for (&(cell, idx), res) in jobs.iter().zip(results) {
        let (summary, files) = res?;
        s.write_all(files)?;
        let (alpha, rank) = grid[cell];
        table.push_str(&format!(
            "{cell},{},{rank},{idx},{},{},{}\n",
            fmt_f64(alpha),
            summary.outcome.map_or("", |o| o.as_str()),
            summary.epochs_to_learned.map(|e| e.to_string()).unwrap_or_default(),
            fmt_f64(summary.final_loss)
        ));
        per_cell[cell].push(summary);
    }
    s.sink.write("summary.csv", table.as_bytes())?;
    let cells = per_cell
        .into_iter()
        .enumerate()
        .map(|(cell, seeds)| {
            let (alpha, rank) = grid[cell];
            let params = BTreeMap::from([("alpha".to_string(), alpha), ("rank".to_string(), rank as f64)]);
            CellSummary::new(cell, params, seeds)
        })
        .collect();
    let sweep = SweepResult {
        kind,
        config_hash: s.hash.clone(),
        cells,
    };
    s.sink.write_json("sweep.json", &sweep)?;
    s.finish()?;
    Ok(sweep)
}

pub fn run_fig_s1(config: &ExperimentConfig) -> Result<SweepResult> {
    run_rnn_sweep(config, ExperimentKind::FigS1)
}

pub fn run_fig_s2(config: &ExperimentConfig) -> Result<SweepResult> {
    run_rnn_sweep(config, ExperimentKind::FigS2)
}

pub fn run_custom(config: &ExperimentConfig) -> Result<SweepResult> {
    run_rnn_sweep(config, ExperimentKind::Custom)
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExperimentReport {
    Fig2a(Fig2aReport),
    Fig2(Fig2Report),
    Fig3(Fig3Report),
    Fig4(Fig4Report),
    Sweep(SweepResult),
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    Ok(match config.kind {
        ExperimentKind::Fig2a => ExperimentReport::Fig2a(run_fig2a(config)?),
        ExperimentKind::Fig2 => ExperimentReport::Fig2(run_fig2(config)?),
        ExperimentKind::Fig3 => ExperimentReport::Fig3(run_fig3(config)?),
        ExperimentKind::Fig4 => ExperimentReport::Fig4(run_fig4(config)?),
        ExperimentKind::FigS1 => ExperimentReport::Sweep(run_fig_s1(config)?),
        ExperimentKind::FigS2 => ExperimentReport::Sweep(run_fig_s2(config)?),
        ExperimentKind::Custom => ExperimentReport::Sweep(run_custom(config)?),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_grid_has_exact_endpoints() {
        let g = log_grid(0.5, 8.0, 5);
        assert_eq!(g.first(), Some(&0.5));
        assert_eq!(g.last(), Some(&8.0));
        for (got, want) in g.iter().zip([0.5, 1.0, 2.0, 4.0, 8.0]) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn curve_averages_per_epoch() {
        let row = |epoch, loss, accuracy| EpochLog {
            epoch,
            loss,
            grad_norm: 0.0,
            accuracy,
            confidence: None,
            fp_count: None,
            ghost: None,
        };
        let a = [row(0, 1.0, 0.0), row(1, 3.0, 1.0)];
        let b = [row(0, 3.0, 1.0)];
        let csv = curve_csv([&a[..], &b[..]]);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[1], "0,2,2.0,1.0,0.5,0.5");
        assert_eq!(lines[2], "1,1,3.0,0.0,1.0,0.0");
    }

    #[test]
    fn mismatched_kind_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = ExperimentConfig::preset(ExperimentKind::Fig2);
        c.out_dir = dir.path().to_path_buf();
        assert!(matches!(run_fig2a(&c), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn small_custom_run_writes_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = ExperimentConfig::preset(ExperimentKind::Custom);
        c.out_dir = dir.path().to_path_buf();
        for o in ["N=10", "epochs=60", "latent.nodes=301", "seeds=[0,1]"] {
            c.apply_override(o).unwrap();
        }
        let sweep = run_custom(&c).unwrap();
        assert_eq!(sweep.entry_count(), 2);
        let manifest: super::super::Manifest =
            crate::output::read_json(&dir.path().join("manifest.json")).unwrap();
        assert!(manifest.files.contains(&"runs/c00_s001.csv".to_string()));
        assert!(manifest.files.contains(&"runs/c00_s000_final.ckpt.json".to_string()));
        for f in &manifest.files {
            assert!(dir.path().join(f).is_file(), "{f}");
        }
        let ckpt = Checkpoint::load(&dir.path().join("runs/c00_s000_final.ckpt.json")).unwrap();
        assert_eq!(ckpt.params().unwrap().neurons(), 10);
    }
}
