use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Defaults of the rank-one latent readout.
pub const DEFAULT_KAPPA_STAR: f64 = 1.0;
pub const DEFAULT_CONFIDENCE: f64 = 10.0;
pub const DEFAULT_TAU: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReadoutKind {
    LatentThreshold,
    LinearSigmoid,
}

/// How the network state is mapped to the scalar output.
#[derive(Debug, Clone, PartialEq)]
pub enum Readout {
    /// `sigma(c (kappa - kappa*))` with `kappa` the projection of the state on
    /// the first row of the right factor.
    LatentThreshold {
        kappa_star: f64,
        confidence: f64,
        confidence_trainable: bool,
    },
    /// `sigma(w_out . x + b_out)`, or the bare affine map when `sigmoid` is off.
    LinearSigmoid {
        w_out: DVector<f64>,
        b_out: f64,
        sigmoid: bool,
    },
}

impl Readout {
    pub fn kind(&self) -> ReadoutKind {
        match self {
            Readout::LatentThreshold { .. } => ReadoutKind::LatentThreshold,
            Readout::LinearSigmoid { .. } => ReadoutKind::LinearSigmoid,
        }
    }

    pub fn confidence(&self) -> Option<f64> {
        match self {
            Readout::LatentThreshold { confidence, .. } => Some(*confidence),
            Readout::LinearSigmoid { .. } => None,
        }
    }
}

/// Which parameter blocks receive gradient updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainableMask {
    pub m: bool,
    pub nfac: bool,
    pub b: bool,
    /// `w_out`/`b_out` of the linear readout. The latent readout's confidence
    /// has its own flag on [`Readout::LatentThreshold`].
    pub readout: bool,
}

impl Default for TrainableMask {
    fn default() -> Self {
        Self {
            m: true,
            nfac: true,
            b: true,
            readout: true,
        }
    }
}

/// Low-rank RNN `tau dx/dt = -x + tanh(M Nfac x + b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RnnParams {
    /// Left factor, `N x K`.
    pub m: DMatrix<f64>,
    /// Right factor, `K x N`.
    pub nfac: DMatrix<f64>,
    pub b: DVector<f64>,
    pub readout: Readout,
    pub tau: f64,
    pub trainable: TrainableMask,
}

/// Initialization settings. Factor entries are drawn i.i.d. from
/// `Normal(0, (scale / sqrt(N))^2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitSpec {
    pub neurons: usize,
    pub rank: usize,
    pub readout: ReadoutKind,
    pub tau: f64,
    pub scale: f64,
    pub kappa_star: f64,
    pub confidence: f64,
    pub confidence_trainable: bool,
    pub readout_sigmoid: bool,
}

impl InitSpec {
    pub fn new(neurons: usize, rank: usize, readout: ReadoutKind) -> Self {
        Self {
            neurons,
            rank,
            readout,
            tau: DEFAULT_TAU,
            scale: 1.0,
            kappa_star: DEFAULT_KAPPA_STAR,
            confidence: DEFAULT_CONFIDENCE,
            confidence_trainable: false,
            readout_sigmoid: true,
        }
    }
}

impl RnnParams {
    pub fn init(seed: u64, spec: &InitSpec) -> Result<Self> {
        let (n, k) = (spec.neurons, spec.rank);
        if k == 0 || k > n {
            return Err(Error::InvalidRank { rank: k, neurons: n });
        }
        if !(spec.tau > 0.0) {
            return Err(Error::InvalidConfig("tau must be positive".into()));
        }
        if !(spec.scale >= 0.0) {
            return Err(Error::InvalidConfig("init scale must be non-negative".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, spec.scale / (n as f64).sqrt())
            .map_err(|e| Error::InvalidConfig(e.to_string()))?;
        // draw order is part of the determinism contract: M, Nfac (row-major), w_out
        let m = DMatrix::from_row_iterator(n, k, (0..n * k).map(|_| normal.sample(&mut rng)));
        let nfac = DMatrix::from_row_iterator(k, n, (0..n * k).map(|_| normal.sample(&mut rng)));
        let readout = match spec.readout {
            ReadoutKind::LatentThreshold => Readout::LatentThreshold {
                kappa_star: spec.kappa_star,
                confidence: spec.confidence,
                confidence_trainable: spec.confidence_trainable,
            },
            ReadoutKind::LinearSigmoid => Readout::LinearSigmoid {
                w_out: DVector::from_iterator(n, (0..n).map(|_| normal.sample(&mut rng))),
                b_out: 0.0,
                sigmoid: spec.readout_sigmoid,
            },
        };
        Ok(Self {
            m,
            nfac,
            b: DVector::zeros(n),
            readout,
            tau: spec.tau,
            trainable: TrainableMask::default(),
        })
    }

    pub fn neurons(&self) -> usize {
        self.m.nrows()
    }

    pub fn rank(&self) -> usize {
        self.m.ncols()
    }

    /// Dense recurrent matrix `W = M Nfac`.
    pub fn weight_matrix(&self) -> DMatrix<f64> {
        &self.m * &self.nfac
    }

    /// Projection vector defining the latent coordinate (first row of `Nfac`).
    pub fn latent_projection(&self) -> DVector<f64> {
        self.nfac.row(0).transpose()
    }

    pub fn validate(&self) -> Result<()> {
        let (n, k) = (self.neurons(), self.rank());
        if k == 0 || k > n {
            return Err(Error::InvalidRank { rank: k, neurons: n });
        }
        if self.nfac.shape() != (k, n) {
            return Err(Error::ShapeMismatch {
                block: "nfac",
                expected: (k, n),
                found: self.nfac.shape(),
            });
        }
        if self.b.len() != n {
            return Err(Error::ShapeMismatch {
                block: "b",
                expected: (n, 1),
                found: (self.b.len(), 1),
            });
        }
        if let Readout::LinearSigmoid { w_out, .. } = &self.readout {
            if w_out.len() != n {
                return Err(Error::ShapeMismatch {
                    block: "w_out",
                    expected: (n, 1),
                    found: (w_out.len(), 1),
                });
            }
        }
        if !(self.tau > 0.0) {
            return Err(Error::InvalidConfig("tau must be positive".into()));
        }
        Ok(())
    }
}

/// Positional convenience over [`RnnParams::init`] with default scale and readout settings.
pub fn init_params(
    seed: u64,
    neurons: usize,
    rank: usize,
    readout: ReadoutKind,
    tau: f64,
) -> Result<RnnParams> {
    let mut spec = InitSpec::new(neurons, rank, readout);
    spec.tau = tau;
    RnnParams::init(seed, &spec)
}
