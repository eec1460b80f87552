//! JSON checkpoints of [`RnnParams`].
//!
//! Layout: `format`, `seed`, `config` (free-form JSON of the producing run),
//! `tau`, `readout` (scalars and flags), `trainable`, and `arrays`, a map from
//! block name (`m`, `nfac`, `b`, optional `w_out`) to `{shape, data}` with
//! `data` in row-major order. Floats are written as shortest round-trip
//! decimals, so a load reproduces the parameters bit for bit.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::params::{Readout, RnnParams, TrainableMask};
use crate::error::{Error, Result};
use crate::output::{read_json, write_json};

pub const CHECKPOINT_FORMAT: &str = "ghostlab-checkpoint-v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedArray {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ReadoutHeader {
    LatentThreshold {
        kappa_star: f64,
        confidence: f64,
        confidence_trainable: bool,
    },
    LinearSigmoid {
        b_out: f64,
        sigmoid: bool,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub seed: u64,
    pub config: serde_json::Value,
    pub tau: f64,
    pub readout: ReadoutHeader,
    pub trainable: TrainableMask,
    pub arrays: BTreeMap<String, NamedArray>,
}

fn matrix(m: &DMatrix<f64>) -> NamedArray {
    NamedArray {
        shape: vec![m.nrows(), m.ncols()],
        data: m.transpose().iter().copied().collect(),
    }
}

fn vector(v: &DVector<f64>) -> NamedArray {
    NamedArray {
        shape: vec![v.len()],
        data: v.iter().copied().collect(),
    }
}

impl Checkpoint {
    pub fn new(params: &RnnParams, seed: u64, config: serde_json::Value) -> Self {
        let mut arrays = BTreeMap::new();
        arrays.insert("m".to_string(), matrix(&params.m));
        arrays.insert("nfac".to_string(), matrix(&params.nfac));
        arrays.insert("b".to_string(), vector(&params.b));
        let readout = match &params.readout {
            Readout::LatentThreshold {
                kappa_star,
                confidence,
                confidence_trainable,
            } => ReadoutHeader::LatentThreshold {
                kappa_star: *kappa_star,
                confidence: *confidence,
                confidence_trainable: *confidence_trainable,
            },
            Readout::LinearSigmoid {
                w_out,
                b_out,
                sigmoid,
            } => {
                arrays.insert("w_out".to_string(), vector(w_out));
                ReadoutHeader::LinearSigmoid {
                    b_out: *b_out,
                    sigmoid: *sigmoid,
                }
            }
        };
        Self {
            format: CHECKPOINT_FORMAT.to_string(),
            seed,
            config,
            tau: params.tau,
            readout,
            trainable: params.trainable,
            arrays,
        }
    }

    fn array(&self, name: &str, rank: usize) -> Result<&NamedArray> {
        let a = self
            .arrays
            .get(name)
            .ok_or_else(|| Error::Checkpoint(format!("missing array `{name}`")))?;
        if a.shape.len() != rank || a.shape.iter().product::<usize>() != a.data.len() {
            return Err(Error::Checkpoint(format!(
                "array `{name}` has shape {:?} and {} entries",
                a.shape,
                a.data.len()
            )));
        }
        Ok(a)
    }

    fn matrix(&self, name: &str) -> Result<DMatrix<f64>> {
        let a = self.array(name, 2)?;
        Ok(DMatrix::from_row_slice(a.shape[0], a.shape[1], &a.data))
    }

    fn vector(&self, name: &str) -> Result<DVector<f64>> {
        Ok(DVector::from_column_slice(&self.array(name, 1)?.data))
    }

    pub fn params(&self) -> Result<RnnParams> {
        if self.format != CHECKPOINT_FORMAT {
            return Err(Error::Checkpoint(format!("unknown format `{}`", self.format)));
        }
        let readout = match &self.readout {
            ReadoutHeader::LatentThreshold {
                kappa_star,
                confidence,
                confidence_trainable,
            } => Readout::LatentThreshold {
                kappa_star: *kappa_star,
                confidence: *confidence,
                confidence_trainable: *confidence_trainable,
            },
            ReadoutHeader::LinearSigmoid { b_out, sigmoid } => Readout::LinearSigmoid {
                w_out: self.vector("w_out")?,
                b_out: *b_out,
                sigmoid: *sigmoid,
            },
        };
        let params = RnnParams {
            m: self.matrix("m")?,
            nfac: self.matrix("nfac")?,
            b: self.vector("b")?,
            readout,
            tau: self.tau,
            trainable: self.trainable,
        };
        params
            .validate()
            .map_err(|e| Error::Checkpoint(e.to_string()))?;
        Ok(params)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        read_json(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rnn::{init_params, ReadoutKind};

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        for (i, kind) in [ReadoutKind::LatentThreshold, ReadoutKind::LinearSigmoid]
            .into_iter()
            .enumerate()
        {
            let mut p = init_params(11, 7, 2, kind, 10.0).unwrap();
            p.b[3] = -1.0 / 3.0;
            p.trainable.b = false;
            let path = dir.path().join(format!("ck{i}.json"));
            let config = serde_json::json!({"alpha": 1e-4});
            Checkpoint::new(&p, 11, config.clone()).save(&path).unwrap();
            let back = Checkpoint::load(&path).unwrap();
            assert_eq!(back.seed, 11);
            assert_eq!(back.config, config);
            assert_eq!(back.params().unwrap(), p);
        }
    }

    #[test]
    fn rejects_inconsistent_shapes() {
        let p = init_params(0, 4, 1, ReadoutKind::LatentThreshold, 10.0).unwrap();
        let mut ck = Checkpoint::new(&p, 0, serde_json::Value::Null);
        ck.arrays.get_mut("nfac").unwrap().data.pop();
        assert!(matches!(ck.params(), Err(Error::Checkpoint(_))));
        let mut ck = Checkpoint::new(&p, 0, serde_json::Value::Null);
        ck.arrays.remove("b");
        assert!(matches!(ck.params(), Err(Error::Checkpoint(_))));
    }
}
