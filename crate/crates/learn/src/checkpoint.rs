//! JSON checkpoints holding every parameter tensor plus the run's config.

use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::model::{Linear, ModelDims, ModelState, TENSOR_NAMES};
use crate::train::TrainConfig;
use crate::LearnError;

pub const FORMAT: &str = "mgdil-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub seed: u64,
    /// Encoder used to produce the inputs, e.g. `hashing:4096`.
    pub encoder: String,
    pub best_epoch: usize,
    pub config: TrainConfig,
    pub dims: ModelDims,
    pub tensors: Vec<NamedTensor>,
}

impl Checkpoint {
    pub fn new(state: &ModelState, config: &TrainConfig, seed: u64, encoder: &str, best_epoch: usize) -> Self {
        let tensors = TENSOR_NAMES
            .iter()
            .zip(state.tensors())
            .zip(shapes(state))
            .map(|(((name, _), data), shape)| NamedTensor {
                name: name.to_string(),
                shape,
                data: data.to_vec(),
            })
            .collect();
        Checkpoint {
            format: FORMAT.into(),
            version: VERSION,
            seed,
            encoder: encoder.into(),
            best_epoch,
            config: config.clone(),
            dims: state.dims(),
            tensors,
        }
    }

    pub fn state(&self) -> Result<ModelState, LearnError> {
        if self.format != FORMAT || self.version != VERSION {
            return Err(LearnError::Checkpoint(format!(
                "unsupported checkpoint {} v{}",
                self.format, self.version
            )));
        }
        let template = ModelState::init(self.dims, 0).zeros_like();
        let expected = shapes(&template);
        if self.tensors.len() != expected.len() {
            return Err(LearnError::Checkpoint(format!(
                "{} tensors, expected {}",
                self.tensors.len(),
                expected.len()
            )));
        }
        let mut it = self.tensors.iter().zip(expected).zip(TENSOR_NAMES);
        let mut next = || -> Result<Linear, LearnError> {
            let mut take = || {
                let ((t, shape), (name, _)) = it.next().expect("length checked");
                if t.name != name || t.shape != shape || t.data.len() != shape.iter().product::<usize>() {
                    return Err(LearnError::Checkpoint(format!(
                        "tensor {} with shape {:?} does not match {name} {shape:?}",
                        t.name, t.shape
                    )));
                }
                Ok((t.data.clone(), shape))
            };
            let (w, ws) = take()?;
            let (b, _) = take()?;
            Ok(Linear {
                w: Array2::from_shape_vec((ws[0], ws[1]), w).expect("shape checked"),
                b: Array1::from(b),
            })
        };
        Ok(ModelState {
            enc1: next()?,
            enc2: next()?,
            domain: next()?,
            proj: next()?,
            cls: next()?,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serializes") + "\n"
    }

    pub fn save(&self, path: &Path) -> Result<(), LearnError> {
        std::fs::write(path, self.to_json()).map_err(|e| LearnError::Io(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self, LearnError> {
        let text = std::fs::read_to_string(path).map_err(|e| LearnError::Io(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| LearnError::Checkpoint(format!("{}: {e}", path.display())))
    }
}

fn shapes(state: &ModelState) -> Vec<Vec<usize>> {
    [&state.enc1, &state.enc2, &state.domain, &state.proj, &state.cls]
        .into_iter()
        .flat_map(|l| [l.w.shape().to_vec(), l.b.shape().to_vec()])
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let dims = ModelDims { input: 7, hidden: 5, latent: 4, domains: 3, projection: 3, classes: 2 };
        let s = ModelState::init(dims, 9);
        let c = Checkpoint::new(&s, &TrainConfig::default(), 9, "hashing:7", 2);
        let back: Checkpoint = serde_json::from_str(&c.to_json()).unwrap();
        assert_eq!(back.state().unwrap(), s);
        assert_eq!(back.to_json(), c.to_json());
    }

    #[test]
    fn rejects_mismatched_shapes() {
        let dims = ModelDims { input: 7, hidden: 5, latent: 4, domains: 3, projection: 3, classes: 2 };
        let mut c = Checkpoint::new(&ModelState::init(dims, 9), &TrainConfig::default(), 9, "x", 1);
        c.tensors[2].shape = vec![4, 5];
        assert!(c.state().is_err());
    }
}
