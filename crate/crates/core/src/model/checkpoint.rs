use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{Scalar, Tensor};

use super::config::ModelConfig;
use super::network::Quantformer;
use super::params::ModelParameters;

const FORMAT: &str = "quantformer-checkpoint";
const VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct StoredTensor {
    name: String,
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    scalar: String,
    config: ModelConfig,
    tensors: Vec<StoredTensor>,
}

impl<T: Scalar> Quantformer<T> {
    /// JSON container with the config and every named tensor. Values are
    /// written as shortest round-trip decimals, so reloading is bit-exact.
    pub fn to_checkpoint_json(&self) -> Result<String> {
        let ckpt = Checkpoint {
            format: FORMAT.into(),
            version: VERSION,
            scalar: T::NAME.into(),
            config: self.config,
            tensors: self
                .params
                .named()
                .into_iter()
                .map(|(name, t)| StoredTensor {
                    name,
                    shape: t.shape().to_vec(),
                    data: t.data().iter().map(|x| x.as_f64()).collect(),
                })
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&ckpt)?)
    }

    pub fn from_checkpoint_json(text: &str) -> Result<Self> {
        let ckpt: Checkpoint = serde_json::from_str(text)?;
        if ckpt.format != FORMAT {
            return Err(Error::Data(format!("not a checkpoint: format {:?}", ckpt.format)));
        }
        if ckpt.version != VERSION {
            return Err(Error::Data(format!("unsupported checkpoint version {}", ckpt.version)));
        }
        if ckpt.scalar != T::NAME {
            return Err(Error::Data(format!(
                "checkpoint holds {} values, expected {}",
                ckpt.scalar,
                T::NAME
            )));
        }
        ckpt.config.validate()?;
        let mut params = ModelParameters::<T>::init(&ckpt.config);
        let names: Vec<String> = params.named().into_iter().map(|(n, _)| n).collect();
        if names.len() != ckpt.tensors.len() {
            return Err(Error::Data(format!(
                "checkpoint has {} tensors, config needs {}",
                ckpt.tensors.len(),
                names.len()
            )));
        }
        for ((slot, name), stored) in params.tensors_mut().into_iter().zip(&names).zip(ckpt.tensors) {
            if &stored.name != name || stored.shape != slot.shape() {
                return Err(Error::Data(format!(
                    "tensor {} {:?} does not match expected {name} {:?}",
                    stored.name,
                    stored.shape,
                    slot.shape()
                )));
            }
            let data = stored
                .data
                .into_iter()
                .map(|x| T::from_f64(x).ok_or_else(|| Error::Data(format!("value {x} in {name}"))))
                .collect::<Result<Vec<T>>>()?;
            *slot = Tensor::new(stored.shape, data)?;
        }
        Ok(Quantformer::from_parts(ckpt.config, params))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_checkpoint_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_checkpoint_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let cfg = ModelConfig {
            layers: 2,
            ..ModelConfig::with_classes(5)
        };
        let m = Quantformer::<f64>::new(cfg).unwrap();
        let back = Quantformer::<f64>::from_checkpoint_json(&m.to_checkpoint_json().unwrap()).unwrap();
        assert_eq!(back.config, m.config);
        for (a, b) in back.params.tensors().iter().zip(m.params.tensors()) {
            let bits_a: Vec<u64> = a.data().iter().map(|x| x.to_bits()).collect();
            let bits_b: Vec<u64> = b.data().iter().map(|x| x.to_bits()).collect();
            assert_eq!(bits_a, bits_b);
        }
    }

    #[test]
    fn scalar_type_is_checked() {
        let m = Quantformer::<f32>::new(ModelConfig::with_classes(3)).unwrap();
        let text = m.to_checkpoint_json().unwrap();
        assert_eq!(Quantformer::<f32>::from_checkpoint_json(&text).unwrap(), m);
        assert!(Quantformer::<f64>::from_checkpoint_json(&text).is_err());
    }

    #[test]
    fn tampered_shapes_are_rejected() {
        let m = Quantformer::<f64>::new(ModelConfig::with_classes(3)).unwrap();
        let text = m.to_checkpoint_json().unwrap().replacen("\"d_model\": 16", "\"d_model\": 8", 1);
        assert!(matches!(Quantformer::<f64>::from_checkpoint_json(&text), Err(Error::Data(_))));
    }
}
