use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Architecture, Dense, Fusion, FusionGates, ModelParams, Scalar, Scaler, TrainConfig};

pub const CHECKPOINT_FORMAT: &str = "icdnet-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint i/o: {0}")]
    Io(#[from] io::Error),
    #[error("checkpoint is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("not a checkpoint (format {0:?})")]
    Format(String),
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("tensor {name}: {message}")]
    Tensor { name: String, message: String },
}

/// One parameter tensor, little-endian bytes in base64.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorRecord {
    pub name: String,
    pub shape: Vec<usize>,
    pub dtype: String,
    pub data: String,
}

/// Everything needed to score new notes with a trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub mode: String,
    pub architecture: Architecture,
    pub train_config: TrainConfig,
    pub scaler: Option<Scaler>,
    /// Content hashes of the embedding tables the inputs were built from.
    pub embedding_hashes: BTreeMap<String, String>,
    /// Content hash of the TF-IDF vocabulary, when used.
    pub feature_hash: Option<String>,
    pub tensors: Vec<TensorRecord>,
}

fn shapes<F>(params: &ModelParams<F>) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if let Some(g) = &params.gates {
        out.push(vec![g.first.len()]);
        out.push(vec![g.second.len()]);
    }
    for l in &params.layers {
        out.push(vec![l.weight.nrows(), l.weight.ncols()]);
        out.push(vec![l.bias.len()]);
    }
    out
}

impl Checkpoint {
    pub fn new<F: Scalar>(mode: &str, params: &ModelParams<F>, train_config: TrainConfig) -> Self {
        let tensors = params
            .tensors()
            .into_iter()
            .zip(shapes(params))
            .map(|((name, values), shape)| {
                let mut bytes = Vec::with_capacity(values.len() * F::BYTES);
                for &v in values {
                    v.write_le(&mut bytes);
                }
                TensorRecord {
                    name,
                    shape,
                    dtype: F::DTYPE.to_string(),
                    data: STANDARD.encode(bytes),
                }
            })
            .collect();
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            mode: mode.to_string(),
            architecture: params.arch.clone(),
            train_config,
            scaler: None,
            embedding_hashes: BTreeMap::new(),
            feature_hash: None,
            tensors,
        }
    }

    /// Rebuilds the parameters, checking every name, shape and dtype against the architecture.
    pub fn params<F: Scalar>(&self) -> Result<ModelParams<F>, CheckpointError> {
        let mut params = ModelParams::<F> {
            arch: self.architecture.clone(),
            gates: (self.architecture.fusion == Fusion::Gated).then(|| FusionGates {
                first: Array1::zeros(self.architecture.input_width),
                second: Array1::zeros(self.architecture.input_width),
            }),
            layers: self
                .architecture
                .layer_shapes()
                .into_iter()
                .map(|(i, o)| Dense {
                    weight: Array2::zeros((i, o)),
                    bias: Array1::zeros(o),
                })
                .collect(),
        };
        let expected = shapes(&params);
        if expected.len() != self.tensors.len() {
            return Err(CheckpointError::Tensor {
                name: "*".into(),
                message: format!("expected {} tensors, found {}", expected.len(), self.tensors.len()),
            });
        }
        for (((name, slot), shape), record) in params.tensors_mut().into_iter().zip(expected).zip(&self.tensors) {
            let fail = |message: String| CheckpointError::Tensor {
                name: record.name.clone(),
                message,
            };
            if record.name != name {
                return Err(fail(format!("expected tensor {name}")));
            }
            if record.shape != shape {
                return Err(fail(format!("shape {:?}, expected {:?}", record.shape, shape)));
            }
            if record.dtype != F::DTYPE {
                return Err(fail(format!("dtype {}, expected {}", record.dtype, F::DTYPE)));
            }
            let bytes = STANDARD.decode(&record.data).map_err(|e| fail(e.to_string()))?;
            if bytes.len() != slot.len() * F::BYTES {
                return Err(fail(format!("{} bytes for {} values", bytes.len(), slot.len())));
            }
            for (dst, chunk) in slot.iter_mut().zip(bytes.chunks_exact(F::BYTES)) {
                *dst = F::read_le(chunk);
            }
        }
        if !params.is_finite() {
            return Err(CheckpointError::Tensor {
                name: "*".into(),
                message: "non-finite parameter".into(),
            });
        }
        Ok(params)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("checkpoint serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, CheckpointError> {
        let ckpt: Checkpoint = serde_json::from_str(text)?;
        if ckpt.format != CHECKPOINT_FORMAT {
            return Err(CheckpointError::Format(ckpt.format));
        }
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(CheckpointError::Version(ckpt.version));
        }
        Ok(ckpt)
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{ChannelScaler, Inputs};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trip_is_bit_exact() {
        let p = ModelParams::<f32>::init(Architecture::hybrid(200), 11);
        let mut ckpt = Checkpoint::new("hybrid", &p, TrainConfig::default());
        ckpt.embedding_hashes.insert("word2vec".into(), "ab".into());
        ckpt.scaler = Some(Scaler {
            channels: vec![ChannelScaler {
                mins: vec![-0.25, 0.1],
                maxs: vec![1.0 / 3.0, 0.7],
            }],
        });
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        ckpt.save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap();
        assert_eq!(back, ckpt);
        let q: ModelParams<f32> = back.params().unwrap();
        assert_eq!(q, p);

        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = Array2::from_shape_simple_fn((4, 200), || rng.random_range(-1.0f32..1.0));
        let a = p.predict(Inputs::pair(x.view(), x.view())).unwrap();
        let b = q.predict(Inputs::pair(x.view(), x.view())).unwrap();
        assert_eq!(
            a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn rejects_mismatches() {
        let p = ModelParams::<f64>::init(Architecture::single(30), 1);
        let ckpt = Checkpoint::new("tfidf", &p, TrainConfig::default());
        assert!(matches!(ckpt.params::<f32>(), Err(CheckpointError::Tensor { .. })));
        let mut wrong = ckpt.clone();
        wrong.architecture.input_width = 31;
        assert!(wrong.params::<f64>().is_err());
        let mut truncated = ckpt.clone();
        truncated.tensors[0].data = STANDARD.encode([0u8; 8]);
        assert!(truncated.params::<f64>().is_err());
        let text = ckpt.to_json().replace(CHECKPOINT_FORMAT, "other");
        assert!(matches!(Checkpoint::from_json(&text), Err(CheckpointError::Format(_))));
        assert!(matches!(Checkpoint::from_json("{"), Err(CheckpointError::Json(_))));
    }
}
