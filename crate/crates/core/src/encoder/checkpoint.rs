use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EncoderParams, ProjectorParams};
use crate::error::{Gp2fError, Result};
use crate::numerics::DenseMatrix;

pub const CHECKPOINT_FORMAT: &str = "gp2f-checkpoint";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorRecord {
    name: String,
    shape: [usize; 2],
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointFile {
    format: String,
    version: u32,
    frozen: bool,
    pretrain_seed: u64,
    tensors: Vec<TensorRecord>,
}

/// Pre-trained encoder and projector.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub encoder: EncoderParams,
    pub projector: ProjectorParams,
    pub pretrain_seed: u64,
}

const NAMES: [&str; 6] = [
    "encoder.w1",
    "encoder.w2",
    "projector.w1",
    "projector.b1",
    "projector.w2",
    "projector.b2",
];

impl Checkpoint {
    pub fn to_json(&self) -> Result<String> {
        let p = &self.projector;
        let mats = [&self.encoder.w1, &self.encoder.w2, &p.w1, &p.b1, &p.w2, &p.b2];
        let file = CheckpointFile {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            frozen: self.encoder.is_frozen(),
            pretrain_seed: self.pretrain_seed,
            tensors: NAMES
                .iter()
                .zip(mats)
                .map(|(name, m)| TensorRecord {
                    name: (*name).into(),
                    shape: [m.rows(), m.cols()],
                    data: m.data().to_vec(),
                })
                .collect(),
        };
        let mut s = serde_json::to_string(&file).map_err(|e| Gp2fError::json("checkpoint", e))?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: CheckpointFile = serde_json::from_str(text).map_err(|e| Gp2fError::json("checkpoint", e))?;
        if file.format != CHECKPOINT_FORMAT || file.version != CHECKPOINT_VERSION {
            return Err(Gp2fError::Validation(format!(
                "unsupported checkpoint {} v{}",
                file.format, file.version
            )));
        }
        let mut mats = Vec::with_capacity(NAMES.len());
        for name in NAMES {
            let rec = file
                .tensors
                .iter()
                .find(|t| t.name == name)
                .ok_or_else(|| Gp2fError::Validation(format!("checkpoint lacks tensor {name}")))?;
            mats.push(DenseMatrix::from_vec(rec.shape[0], rec.shape[1], rec.data.clone())?);
        }
        if file.tensors.len() != NAMES.len() {
            return Err(Gp2fError::Validation("checkpoint has unexpected tensors".into()));
        }
        let mut it = mats.into_iter();
        let mut encoder = EncoderParams::new(it.next().unwrap(), it.next().unwrap())?;
        if file.frozen {
            encoder.freeze();
        }
        let projector = ProjectorParams {
            w1: it.next().unwrap(),
            b1: it.next().unwrap(),
            w2: it.next().unwrap(),
            b2: it.next().unwrap(),
        };
        if projector.output_dim() != encoder.hidden_dim() || projector.w1.cols() != encoder.hidden_dim() {
            return Err(Gp2fError::Validation("projector and encoder widths disagree".into()));
        }
        Ok(Self {
            encoder,
            projector,
            pretrain_seed: file.pretrain_seed,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?).map_err(|e| Gp2fError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Gp2fError::io(path, e))?;
        Self::from_json(&text)
    }
}
