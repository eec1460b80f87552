//! Figure presets, deterministic sweeps and plot-ready outputs.
//!
//! Every run seed is `derive_seed(master, kind, cell, seed_index)`: the first
//! eight bytes (little endian) of SHA-256 over
//! `"ghostlab-seed-v1|{master}|{kind}|{cell}|{seed_index}"`. Runs are
//! independent and may execute on a thread pool; results are always collected
//! in (cell, seed) order, so aggregates do not depend on scheduling.

mod check;
mod cli;
mod config;
mod runners;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::Result;
use crate::output::{write_atomic, write_json};
use crate::protocol::Outcome;

pub use check::{
    dense_states, finite_difference_gradient, random_small_net, relative_error, run_checks,
    CheckItem, CheckReport,
};
pub use cli::cli_main;
pub use config::{
    Derived, ExperimentConfig, ExperimentKind, Fig3Arm, Fig3Section, Fig4Section, LatentSection,
    ModelSection, ToySection, TrainingSection, FIG_S1_ALPHAS, FIG_S2_ALPHAS, FIG_S2_RANKS,
    FULL_COHORT,
};
pub use runners::{
    log_grid, run_custom, run_experiment, run_fig2, run_fig2a, run_fig3, run_fig4, run_fig_s1,
    run_fig_s2, ExperimentReport, Fig2Report, Fig2aReport, Fig3ArmReport, Fig3Report,
    Fig3RunSummary, Fig4Report, Fig4StuckRun, ProfileRow,
};

pub fn derive_seed(master: u64, kind: ExperimentKind, cell: usize, seed_index: u64) -> u64 {
    let digest = Sha256::digest(format!(
        "ghostlab-seed-v1|{master}|{}|{cell}|{seed_index}",
        kind.as_str()
    ));
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

/// SHA-256 of the config's JSON form with `out_dir` cleared, hex encoded.
pub fn config_hash(config: &ExperimentConfig) -> Result<String> {
    let mut c = config.clone();
    c.out_dir = PathBuf::new();
    let digest = Sha256::digest(serde_json::to_vec(&c)?);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Standard error of the mean with the `n - 1` sample variance; zero for one sample.
pub fn sem(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return if n == 1 { 0.0 } else { f64::NAN };
    }
    let m = mean(xs);
    let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64;
    (var / n as f64).sqrt()
}

pub fn median(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

/// Run `f` over `jobs` on the rayon pool, returning results in job order.
pub fn ordered_map<J, R, F>(jobs: &[J], f: F) -> Vec<R>
where
    J: Sync,
    R: Send,
    F: Fn(&J) -> R + Sync + Send,
{
    jobs.par_iter().map(f).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub seed_index: u64,
    pub run_seed: u64,
    pub final_loss: f64,
    pub epochs_to_learned: Option<usize>,
    /// Protocol outcome for RNN runs; toy runs report their final regime instead.
    pub outcome: Option<Outcome>,
    pub final_regime: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct OutcomeCounts {
    pub learned: usize,
    pub stuck: usize,
    pub neither: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub cell: usize,
    pub params: BTreeMap<String, f64>,
    pub seeds: Vec<SeedSummary>,
    pub final_loss_mean: f64,
    pub final_loss_sem: f64,
    pub median_epochs_to_learned: Option<f64>,
    pub outcomes: OutcomeCounts,
}

impl CellSummary {
    pub fn new(cell: usize, params: BTreeMap<String, f64>, seeds: Vec<SeedSummary>) -> Self {
        let losses: Vec<f64> = seeds.iter().map(|s| s.final_loss).collect();
        let learned: Vec<f64> = seeds
            .iter()
            .filter_map(|s| s.epochs_to_learned.map(|e| e as f64))
            .collect();
        let mut outcomes = OutcomeCounts::default();
        for s in &seeds {
            match s.outcome {
                Some(Outcome::Learned) => outcomes.learned += 1,
                Some(Outcome::Stuck) => outcomes.stuck += 1,
                Some(Outcome::Neither) => outcomes.neither += 1,
                None => {}
            }
        }
        Self {
            cell,
            params,
            final_loss_mean: mean(&losses),
            final_loss_sem: sem(&losses),
            median_epochs_to_learned: median(&learned),
            outcomes,
            seeds,
        }
    }

    pub fn param(&self, name: &str) -> Option<f64> {
        self.params.get(name).copied()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub kind: ExperimentKind,
    pub config_hash: String,
    pub cells: Vec<CellSummary>,
}

impl SweepResult {
    /// Number of (cell, seed) entries.
    pub fn entry_count(&self) -> usize {
        self.cells.iter().map(|c| c.seeds.len()).sum()
    }

    pub fn cell_where(&self, name: &str, value: f64) -> Vec<&CellSummary> {
        self.cells.iter().filter(|c| c.param(name) == Some(value)).collect()
    }
}

/// Collects the files of one experiment and writes `manifest.json` last.
#[derive(Debug)]
pub struct OutputSink {
    root: PathBuf,
    files: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub kind: ExperimentKind,
    pub config_hash: String,
    pub files: Vec<String>,
}

impl OutputSink {
    pub fn new(root: &Path) -> Self {
        Self {
            root: root.to_path_buf(),
            files: Vec::new(),
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write(&mut self, rel: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.root.join(rel);
        write_atomic(&path, bytes)?;
        self.files.push(rel.to_string());
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<PathBuf> {
        let path = self.root.join(rel);
        write_json(&path, value)?;
        self.files.push(rel.to_string());
        Ok(path)
    }

    pub fn finish(mut self, kind: ExperimentKind, config_hash: &str) -> Result<Manifest> {
        self.files.sort();
        self.files.dedup();
        let manifest = Manifest {
            kind,
            config_hash: config_hash.to_string(),
            files: self.files,
        };
        write_json(&self.root.join("manifest.json"), &manifest)?;
        Ok(manifest)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds_are_stable_and_distinct() {
        let a = derive_seed(0, ExperimentKind::Fig3, 0, 0);
        assert_eq!(a, derive_seed(0, ExperimentKind::Fig3, 0, 0));
        let others = [
            derive_seed(1, ExperimentKind::Fig3, 0, 0),
            derive_seed(0, ExperimentKind::Fig4, 0, 0),
            derive_seed(0, ExperimentKind::Fig3, 1, 0),
            derive_seed(0, ExperimentKind::Fig3, 0, 1),
        ];
        assert!(others.iter().all(|&o| o != a));
    }

    #[test]
    fn summary_statistics() {
        assert_eq!(mean(&[1.0, 2.0, 3.0]), 2.0);
        // sample sd of 1,2,3 is 1, so sem = 1/sqrt(3)
        assert!((sem(&[1.0, 2.0, 3.0]) - 1.0 / 3f64.sqrt()).abs() < 1e-15);
        assert_eq!(sem(&[4.0]), 0.0);
        assert_eq!(sem(&[100.0; 10]), 0.0);
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(&[]), None);
    }

    #[test]
    fn ordered_map_keeps_job_order() {
        let jobs: Vec<u64> = (0..64).collect();
        let out = ordered_map(&jobs, |j| j * j);
        assert_eq!(out, jobs.iter().map(|j| j * j).collect::<Vec<_>>());
    }

    #[test]
    fn cell_summary_counts() {
        let s = |loss: f64, e: Option<usize>, o: Outcome| SeedSummary {
            seed_index: 0,
            run_seed: 0,
            final_loss: loss,
            epochs_to_learned: e,
            outcome: Some(o),
            final_regime: None,
        };
        let c = CellSummary::new(
            0,
            BTreeMap::from([("alpha".to_string(), 1e-3)]),
            vec![
                s(1.0, Some(10), Outcome::Learned),
                s(100.0, Some(30), Outcome::Stuck),
                s(100.0, None, Outcome::Stuck),
            ],
        );
        assert_eq!(c.outcomes, OutcomeCounts { learned: 1, stuck: 2, neither: 0 });
        assert_eq!(c.median_epochs_to_learned, Some(20.0));
        assert_eq!(c.final_loss_mean, 67.0);
    }
}
