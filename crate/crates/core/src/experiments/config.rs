//! Declarative experiment description, presets and `key=value` overrides.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::latent::Grid;
use crate::protocol::{LatentHooks, DEFAULT_INTERVENTION_CONFIDENCE, DEFAULT_RECOVERY_EPOCHS};
use crate::rnn::{InitSpec, ReadoutKind, TaskSpec, DEFAULT_CONFIDENCE, DEFAULT_KAPPA_STAR, DEFAULT_TAU};
use crate::toy::{critical_learning_rate, optimal_r, ToyConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ExperimentKind {
    #[serde(rename = "fig2a")]
    Fig2a,
    #[serde(rename = "fig2", alias = "fig2bcd")]
    Fig2,
    #[serde(rename = "fig3")]
    Fig3,
    #[serde(rename = "fig4")]
    Fig4,
    #[serde(rename = "figS1")]
    FigS1,
    #[serde(rename = "figS2")]
    FigS2,
    #[serde(rename = "custom")]
    Custom,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 7] = [
        ExperimentKind::Fig2a,
        ExperimentKind::Fig2,
        ExperimentKind::Fig3,
        ExperimentKind::Fig4,
        ExperimentKind::FigS1,
        ExperimentKind::FigS2,
        ExperimentKind::Custom,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::Fig2a => "fig2a",
            ExperimentKind::Fig2 => "fig2",
            ExperimentKind::Fig3 => "fig3",
            ExperimentKind::Fig4 => "fig4",
            ExperimentKind::FigS1 => "figS1",
            ExperimentKind::FigS2 => "figS2",
            ExperimentKind::Custom => "custom",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        if s == "fig2bcd" {
            return Some(ExperimentKind::Fig2);
        }
        Self::ALL.into_iter().find(|k| k.as_str() == s)
    }
}

/// Toy-model settings for the loss profile and the gradient-descent sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToySection {
    pub t_delay: f64,
    pub x_star: f64,
    pub dt: f64,
    /// Readout confidences of the numeric loss overlay.
    pub overlay_confidences: Vec<f64>,
    pub profile_points: usize,
    /// Profile range as multiples of `r*`.
    pub profile_min: f64,
    pub profile_max: f64,
    /// Initial `r` is drawn from `Normal(r0_mean * r*, (r0_std * r*)^2)`.
    pub r0_mean: f64,
    pub r0_std: f64,
    pub alphas: Vec<f64>,
    pub epochs: usize,
}

impl Default for ToySection {
    fn default() -> Self {
        Self {
            t_delay: 100.0,
            x_star: 10.0,
            dt: 0.1,
            overlay_confidences: vec![1.0, 5.0, 25.0],
            profile_points: 200,
            profile_min: 1.0 / 16.0,
            profile_max: 100.0,
            r0_mean: 10.0,
            r0_std: 0.1,
            alphas: vec![
                1e-11, 2e-11, 5e-11, 1e-10, 2e-10, 5e-10, 8e-10, 9e-10, 9.2e-10, 1e-9, 2e-9,
            ],
            epochs: 3000,
        }
    }
}

impl ToySection {
    /// Numeric twin at confidence `c` with the default clamp.
    pub fn toy_config(&self, confidence: f64) -> ToyConfig {
        ToyConfig::new(self.t_delay, self.x_star, confidence, self.dt)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub neurons: usize,
    pub rank: usize,
    pub readout: ReadoutKind,
    pub tau: f64,
    pub init_scale: f64,
    pub kappa_star: f64,
    pub confidence: f64,
    pub confidence_trainable: bool,
    pub readout_sigmoid: bool,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            neurons: 100,
            rank: 1,
            readout: ReadoutKind::LatentThreshold,
            tau: DEFAULT_TAU,
            init_scale: 1.0,
            kappa_star: DEFAULT_KAPPA_STAR,
            confidence: DEFAULT_CONFIDENCE,
            confidence_trainable: false,
            readout_sigmoid: true,
        }
    }
}

impl ModelSection {
    pub fn init_spec(&self, rank: usize) -> InitSpec {
        InitSpec {
            neurons: self.neurons,
            rank,
            readout: self.readout,
            tau: self.tau,
            scale: self.init_scale,
            kappa_star: self.kappa_star,
            confidence: self.confidence,
            confidence_trainable: self.confidence_trainable,
            readout_sigmoid: self.readout_sigmoid,
        }
    }
}

/// Learning-rate and rank grid of RNN sweeps (figS1, figS2, custom).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingSection {
    pub alphas: Vec<f64>,
    pub ranks: Vec<usize>,
    pub epochs: usize,
}

impl Default for TrainingSection {
    fn default() -> Self {
        Self {
            alphas: vec![1e-4],
            ranks: vec![1],
            epochs: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Fig3Arm {
    pub label: String,
    pub alpha: f64,
    pub epochs: usize,
    pub snapshot_epochs: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Fig3Section {
    pub arms: Vec<Fig3Arm>,
}

impl Default for Fig3Section {
    fn default() -> Self {
        Self {
            arms: vec![
                Fig3Arm {
                    label: "low".into(),
                    alpha: 1e-4,
                    epochs: 16000,
                    snapshot_epochs: vec![0, 8000, 15999],
                },
                Fig3Arm {
                    label: "high".into(),
                    alpha: 1e-3,
                    epochs: 2000,
                    snapshot_epochs: vec![0, 1000, 1999],
                },
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Fig4Section {
    pub alpha: f64,
    pub epochs: usize,
    pub new_confidence: f64,
    pub recovery_epochs: usize,
    /// Also continue the stuck runs at the unchanged confidence.
    pub control: bool,
}

impl Default for Fig4Section {
    fn default() -> Self {
        Self {
            alpha: 0.02,
            epochs: 6000,
            new_confidence: DEFAULT_INTERVENTION_CONFIDENCE,
            recovery_epochs: DEFAULT_RECOVERY_EPOCHS,
            control: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatentSection {
    /// `0` disables the per-epoch analysis.
    pub stride: usize,
    pub half_width: f64,
    pub nodes: usize,
    pub root_tol: f64,
    pub eps_ghost: f64,
}

impl Default for LatentSection {
    fn default() -> Self {
        let h = LatentHooks::default();
        Self {
            stride: h.stride,
            half_width: -h.grid.min,
            nodes: h.grid.nodes,
            root_tol: h.root_tol,
            eps_ghost: h.eps_ghost,
        }
    }
}

impl LatentSection {
    pub fn grid(&self) -> Grid {
        Grid::symmetric(self.half_width, self.nodes)
    }

    pub fn hooks(&self, snapshot_epochs: Vec<usize>) -> Option<LatentHooks> {
        (self.stride > 0).then(|| LatentHooks {
            stride: self.stride,
            snapshot_epochs,
            grid: self.grid(),
            root_tol: self.root_tol,
            eps_ghost: self.eps_ghost,
        })
    }
}

/// Quantities computed from the inputs, recorded so the emitted config lists
/// every number a run used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct Derived {
    pub toy_r_star: f64,
    pub toy_alpha_star: f64,
    pub toy_steps: usize,
    pub rnn_steps: usize,
    pub rnn_delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub master_seed: u64,
    /// Seed indices; run seeds are derived from these.
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
    pub toy: ToySection,
    pub task: TaskSpec,
    pub model: ModelSection,
    pub training: TrainingSection,
    pub fig3: Fig3Section,
    pub fig4: Fig4Section,
    pub latent: LatentSection,
    #[serde(default)]
    pub derived: Derived,
}

/// Learning rates of the rank sweep, in units of the `dt`-weighted loss.
pub const FIG_S2_ALPHAS: [f64; 3] = [5e-4, 1e-3, 2e-3];
pub const FIG_S2_RANKS: [usize; 9] = [1, 2, 3, 4, 5, 10, 30, 50, 100];
pub const FIG_S1_ALPHAS: [f64; 5] = [1e-4, 2e-4, 5e-4, 1e-3, 2e-3];
pub const FULL_COHORT: u64 = 100;

fn seed_range(n: u64) -> Vec<u64> {
    (0..n).collect()
}

impl ExperimentConfig {
    pub fn preset(kind: ExperimentKind) -> Self {
        let mut c = Self {
            kind,
            master_seed: 0,
            seeds: seed_range(10),
            out_dir: PathBuf::from("out").join(kind.as_str()),
            toy: ToySection::default(),
            task: TaskSpec::default(),
            model: ModelSection::default(),
            training: TrainingSection::default(),
            fig3: Fig3Section::default(),
            fig4: Fig4Section::default(),
            latent: LatentSection::default(),
            derived: Derived::default(),
        };
        match kind {
            ExperimentKind::Fig2a | ExperimentKind::Fig2 | ExperimentKind::Fig3 => {}
            ExperimentKind::Fig4 => {
                c.seeds = seed_range(20);
                c.latent.stride = 0;
            }
            ExperimentKind::FigS1 => {
                c.training.alphas = FIG_S1_ALPHAS.to_vec();
                c.training.epochs = 16000;
                c.latent.stride = 0;
            }
            ExperimentKind::FigS2 => {
                c.model.readout = ReadoutKind::LinearSigmoid;
                c.training.alphas = FIG_S2_ALPHAS.to_vec();
                c.training.ranks = FIG_S2_RANKS.to_vec();
                c.training.epochs = 3000;
                c.seeds = seed_range(5);
                c.latent.stride = 0;
            }
            ExperimentKind::Custom => {
                c.seeds = seed_range(1);
            }
        }
        c
    }

    /// Full-size cohorts: 100 runs for fig4.
    pub fn apply_full_scale(&mut self) {
        if self.kind == ExperimentKind::Fig4 {
            self.seeds = seed_range(FULL_COHORT);
        }
    }

    pub fn set_seed_count(&mut self, n: u64) {
        self.seeds = seed_range(n);
    }

    /// Apply `key=value`. Keys are dotted paths into the JSON form
    /// (`toy.alphas`, `fig4.alpha`) or one of the short aliases
    /// `T`, `N`, `K`, `c`, `tau`, `x0`, `alpha`, `epochs`, `seed`.
    /// Values are parsed as JSON, falling back to a plain string.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (key, raw) = assignment
            .split_once('=')
            .ok_or_else(|| Error::InvalidConfig(format!("override `{assignment}` is not key=value")))?;
        let value: Value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        let paths: Vec<&str> = match key {
            "T" => vec!["toy.t_delay", "task.t_delay"],
            "N" => vec!["model.neurons"],
            "K" => vec!["model.rank"],
            "c" => vec!["model.confidence"],
            "tau" => vec!["model.tau"],
            "x0" => vec!["task.x0"],
            "seed" => vec!["master_seed"],
            "alpha" => match self.kind {
                ExperimentKind::Fig2 => vec!["toy.alphas"],
                ExperimentKind::Fig4 => vec!["fig4.alpha"],
                _ => vec!["training.alphas"],
            },
            "epochs" => match self.kind {
                ExperimentKind::Fig2 => vec!["toy.epochs"],
                ExperimentKind::Fig4 => vec!["fig4.epochs"],
                _ => vec!["training.epochs"],
            },
            other => vec![other],
        };
        let mut doc = serde_json::to_value(&*self)?;
        for path in paths {
            let slot = path
                .split('.')
                .try_fold(&mut doc, |node, part| node.get_mut(part))
                .ok_or_else(|| Error::InvalidConfig(format!("unknown config key `{key}`")))?;
            // a scalar given for a list-valued key becomes a one-element list
            *slot = match (&*slot, &value) {
                (Value::Array(_), v) if !v.is_array() => Value::Array(vec![v.clone()]),
                _ => value.clone(),
            };
        }
        *self = serde_json::from_value(doc)
            .map_err(|e| Error::InvalidConfig(format!("override `{assignment}`: {e}")))?;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.seeds.is_empty() {
            return bad("seed list is empty".into());
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            return bad("seed list has duplicates".into());
        }
        match self.kind {
            ExperimentKind::Fig2a | ExperimentKind::Fig2 => {
                optimal_r(self.toy.t_delay)?;
                for &c in &self.toy.overlay_confidences {
                    self.toy.toy_config(c).validate()?;
                }
                if self.toy.profile_points < 2 || !(0.0 < self.toy.profile_min && self.toy.profile_min < self.toy.profile_max) {
                    return bad("toy profile needs >= 2 points over a positive increasing range".into());
                }
                if self.kind == ExperimentKind::Fig2 && (self.toy.alphas.is_empty() || self.toy.epochs == 0) {
                    return bad("toy sweep needs learning rates and epochs".into());
                }
                if self.toy.alphas.iter().any(|a| !(a.is_finite() && *a >= 0.0)) {
                    return bad("toy learning rates must be finite and non-negative".into());
                }
            }
            _ => {
                self.task.validate()?;
                let ranks: Vec<usize> = match self.kind {
                    ExperimentKind::FigS2 => self.training.ranks.clone(),
                    _ => vec![self.model.rank],
                };
                if ranks.is_empty() {
                    return bad("rank list is empty".into());
                }
                for k in ranks {
                    if k == 0 || k > self.model.neurons {
                        return Err(Error::InvalidRank {
                            rank: k,
                            neurons: self.model.neurons,
                        });
                    }
                }
                let alphas: Vec<f64> = match self.kind {
                    ExperimentKind::Fig3 => self.fig3.arms.iter().map(|a| a.alpha).collect(),
                    ExperimentKind::Fig4 => vec![self.fig4.alpha],
                    _ => self.training.alphas.clone(),
                };
                if alphas.is_empty() || alphas.iter().any(|a| !(a.is_finite() && *a >= 0.0)) {
                    return bad("learning rates must be a non-empty list of finite non-negative values".into());
                }
                let needs_latent = matches!(self.kind, ExperimentKind::Fig4)
                    || (self.kind == ExperimentKind::Fig3);
                if needs_latent && self.model.readout != ReadoutKind::LatentThreshold {
                    return bad(format!("{} needs the latent-threshold readout", self.kind.as_str()));
                }
                if self.kind == ExperimentKind::Fig3 && self.model.rank != 1 {
                    return Err(Error::RankPrecondition(self.model.rank));
                }
                if self.latent.stride > 0 && self.latent.nodes < 3 {
                    return bad("latent grid needs at least 3 nodes".into());
                }
            }
        }
        Ok(())
    }

    /// Validate and fill the [`Derived`] block.
    pub fn resolve(mut self) -> Result<Self> {
        self.validate()?;
        let (r_star, alpha_star) = match (optimal_r(self.toy.t_delay), critical_learning_rate(self.toy.t_delay)) {
            (Ok(r), Ok(a)) => (r, a),
            _ => (f64::NAN, f64::NAN),
        };
        self.derived = Derived {
            toy_r_star: r_star,
            toy_alpha_star: alpha_star,
            toy_steps: self.toy.toy_config(1.0).steps(),
            rnn_steps: self.task.steps(),
            rnn_delta: self.task.dt / self.model.tau,
        };
        Ok(self)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}
