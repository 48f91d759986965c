use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::market_data::FEATURES;
use crate::numeric::{Scalar, Tensor};

use super::config::ModelConfig;

/// Weights of one encoder block.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockParameters<T> {
    /// Per-head projections, each `d × head_dim`.
    pub query: Vec<Tensor<T>>,
    pub key: Vec<Tensor<T>>,
    pub value: Vec<Tensor<T>>,
    /// `(H·head_dim) × d`
    pub output: Tensor<T>,
    pub norm1_gain: Tensor<T>,
    pub norm1_bias: Tensor<T>,
    pub ffn_in: Tensor<T>,
    pub ffn_in_bias: Tensor<T>,
    pub ffn_out: Tensor<T>,
    pub ffn_out_bias: Tensor<T>,
    pub norm2_gain: Tensor<T>,
    pub norm2_bias: Tensor<T>,
}

/// Every trainable tensor of the network.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParameters<T> {
    /// `2 × d`
    pub embed_weight: Tensor<T>,
    pub embed_bias: Tensor<T>,
    pub blocks: Vec<BlockParameters<T>>,
    /// `d × classes`
    pub head_weight: Tensor<T>,
    pub head_bias: Tensor<T>,
}

struct Init {
    rng: ChaCha8Rng,
}

impl Init {
    /// Glorot-uniform matrix.
    fn matrix<T: Scalar>(&mut self, rows: usize, cols: usize) -> Tensor<T> {
        let bound = (6.0 / (rows + cols) as f64).sqrt();
        let data = (0..rows * cols)
            .map(|_| T::lit(self.rng.random_range(-bound..bound)))
            .collect();
        Tensor::new(vec![rows, cols], data).expect("sized")
    }
}

impl<T: Scalar> ModelParameters<T> {
    /// Seeded initialization: Glorot-uniform weights, zero biases, unit
    /// normalization gains.
    pub fn init(config: &ModelConfig) -> Self {
        let mut init = Init {
            rng: ChaCha8Rng::seed_from_u64(config.seed),
        };
        let (d, hd, f) = (config.d_model, config.head_dim, config.ffn_width);
        let embed_weight = init.matrix(FEATURES, d);
        let blocks = (0..config.layers)
            .map(|_| {
                let mut per_head = || (0..config.heads).map(|_| init.matrix(d, hd)).collect::<Vec<_>>();
                let query = per_head();
                let key = per_head();
                let value = per_head();
                BlockParameters {
                    query,
                    key,
                    value,
                    output: init.matrix(config.heads * hd, d),
                    norm1_gain: Tensor::full(&[d], T::one()),
                    norm1_bias: Tensor::zeros(&[d]),
                    ffn_in: init.matrix(d, f),
                    ffn_in_bias: Tensor::zeros(&[f]),
                    ffn_out: init.matrix(f, d),
                    ffn_out_bias: Tensor::zeros(&[d]),
                    norm2_gain: Tensor::full(&[d], T::one()),
                    norm2_bias: Tensor::zeros(&[d]),
                }
            })
            .collect();
        Self {
            embed_weight,
            embed_bias: Tensor::zeros(&[d]),
            blocks,
            head_weight: init.matrix(d, config.classes),
            head_bias: Tensor::zeros(&[config.classes]),
        }
    }

    /// All tensors with stable names, in a fixed order shared with
    /// [`ModelParameters::tensors_mut`].
    pub fn named(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out = vec![
            ("embed.weight".to_string(), &self.embed_weight),
            ("embed.bias".to_string(), &self.embed_bias),
        ];
        for (b, block) in self.blocks.iter().enumerate() {
            for (kind, set) in [("query", &block.query), ("key", &block.key), ("value", &block.value)] {
                for (h, t) in set.iter().enumerate() {
                    out.push((format!("blocks.{b}.heads.{h}.{kind}"), t));
                }
            }
            let rest = [
                ("output", &block.output),
                ("norm1.gain", &block.norm1_gain),
                ("norm1.bias", &block.norm1_bias),
                ("ffn.in", &block.ffn_in),
                ("ffn.in_bias", &block.ffn_in_bias),
                ("ffn.out", &block.ffn_out),
                ("ffn.out_bias", &block.ffn_out_bias),
                ("norm2.gain", &block.norm2_gain),
                ("norm2.bias", &block.norm2_bias),
            ];
            for (name, t) in rest {
                out.push((format!("blocks.{b}.{name}"), t));
            }
        }
        out.push(("head.weight".to_string(), &self.head_weight));
        out.push(("head.bias".to_string(), &self.head_bias));
        out
    }

    pub fn tensors(&self) -> Vec<&Tensor<T>> {
        self.named().into_iter().map(|(_, t)| t).collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut out: Vec<&mut Tensor<T>> = vec![&mut self.embed_weight, &mut self.embed_bias];
        for block in &mut self.blocks {
            out.extend(block.query.iter_mut());
            out.extend(block.key.iter_mut());
            out.extend(block.value.iter_mut());
            out.extend([
                &mut block.output,
                &mut block.norm1_gain,
                &mut block.norm1_bias,
                &mut block.ffn_in,
                &mut block.ffn_in_bias,
                &mut block.ffn_out,
                &mut block.ffn_out_bias,
                &mut block.norm2_gain,
                &mut block.norm2_bias,
            ]);
        }
        out.push(&mut self.head_weight);
        out.push(&mut self.head_bias);
        out
    }

    pub fn scalar_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.is_finite())
    }
}
