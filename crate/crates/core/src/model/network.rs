use crate::error::{Error, Result};
use crate::market_data::{WindowMatrix, FEATURES, WINDOW_LEN};
use crate::numeric::{Gradients, Scalar, Tape, Tensor, Var};

use super::config::{ModelConfig, Pooling};
use super::params::ModelParameters;

const NORM_EPS: f64 = 1e-5;

/// Windows per tape during inference.
const INFERENCE_CHUNK: usize = 256;

/// ŷ: one probability per class.
pub type PredictionDistribution<T> = Vec<T>;

struct BlockVars {
    query: Vec<Var>,
    key: Vec<Var>,
    value: Vec<Var>,
    output: Var,
    norm1_gain: Var,
    norm1_bias: Var,
    ffn_in: Var,
    ffn_in_bias: Var,
    ffn_out: Var,
    ffn_out_bias: Var,
    norm2_gain: Var,
    norm2_bias: Var,
}

/// Parameter handles on a tape, registered in [`ModelParameters::named`]
/// order so gradient slots line up with `tensors_mut`.
struct ParamVars {
    embed_weight: Var,
    embed_bias: Var,
    blocks: Vec<BlockVars>,
    head_weight: Var,
    head_bias: Var,
}

impl ParamVars {
    fn register<T: Scalar>(tape: &mut Tape<T>, p: &ModelParameters<T>) -> Self {
        let mut param = |t: &Tensor<T>| tape.param(t.clone());
        let embed_weight = param(&p.embed_weight);
        let embed_bias = param(&p.embed_bias);
        let blocks = p
            .blocks
            .iter()
            .map(|b| {
                let query = b.query.iter().map(&mut param).collect();
                let key = b.key.iter().map(&mut param).collect();
                let value = b.value.iter().map(&mut param).collect();
                BlockVars {
                    query,
                    key,
                    value,
                    output: param(&b.output),
                    norm1_gain: param(&b.norm1_gain),
                    norm1_bias: param(&b.norm1_bias),
                    ffn_in: param(&b.ffn_in),
                    ffn_in_bias: param(&b.ffn_in_bias),
                    ffn_out: param(&b.ffn_out),
                    ffn_out_bias: param(&b.ffn_out_bias),
                    norm2_gain: param(&b.norm2_gain),
                    norm2_bias: param(&b.norm2_bias),
                }
            })
            .collect();
        let head_weight = param(&p.head_weight);
        let head_bias = param(&p.head_bias);
        Self {
            embed_weight,
            embed_bias,
            blocks,
            head_weight,
            head_bias,
        }
    }
}

/// The encoder-only classifier: linear embedding, `L` attention blocks,
/// pooling, softmax head.
#[derive(Debug, Clone, PartialEq)]
pub struct Quantformer<T> {
    pub config: ModelConfig,
    pub params: ModelParameters<T>,
}

fn windows_tensor<T: Scalar>(windows: &[&WindowMatrix]) -> Result<Tensor<T>> {
    let mut data = Vec::with_capacity(windows.len() * WINDOW_LEN * FEATURES);
    for w in windows {
        for row in w.iter() {
            for &x in row {
                if !x.is_finite() {
                    return Err(Error::InvalidInput("feature window is not finite".into()));
                }
                data.push(T::lit(x));
            }
        }
    }
    Tensor::new(vec![windows.len() * WINDOW_LEN, FEATURES], data)
}

impl<T: Scalar> Quantformer<T> {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            params: ModelParameters::init(&config),
            config,
        })
    }

    pub fn from_parts(config: ModelConfig, params: ModelParameters<T>) -> Self {
        Self { config, params }
    }

    fn embed_graph(&self, tape: &mut Tape<T>, v: &ParamVars, input: Var) -> Result<Var> {
        let x = tape.matmul(input, v.embed_weight)?;
        tape.add_row(x, v.embed_bias)
    }

    /// Multi-head self-attention over `[B·20, d]` rows, no mask.
    fn attention_graph(&self, tape: &mut Tape<T>, b: &BlockVars, x: Var, batch: usize) -> Result<Var> {
        let hd = self.config.head_dim;
        let inv_scale = T::lit(1.0 / self.config.score_divisor());
        let mut heads = Vec::with_capacity(self.config.heads);
        for h in 0..self.config.heads {
            let q = tape.matmul(x, b.query[h])?;
            let k = tape.matmul(x, b.key[h])?;
            let v = tape.matmul(x, b.value[h])?;
            let q = tape.reshape(q, &[batch, WINDOW_LEN, hd])?;
            let k = tape.reshape(k, &[batch, WINDOW_LEN, hd])?;
            let v = tape.reshape(v, &[batch, WINDOW_LEN, hd])?;
            let scores = tape.batch_matmul(q, k, true)?;
            let scores = tape.scale(scores, inv_scale);
            let weights = tape.softmax(scores);
            let a = tape.batch_matmul(weights, v, false)?;
            heads.push(tape.reshape(a, &[batch * WINDOW_LEN, hd])?);
        }
        let concat = tape.concat_cols(&heads)?;
        tape.matmul(concat, b.output)
    }

    fn block_graph(&self, tape: &mut Tape<T>, b: &BlockVars, x: Var, batch: usize) -> Result<Var> {
        let eps = T::lit(NORM_EPS);
        let attn = self.attention_graph(tape, b, x, batch)?;
        let x = if self.config.use_residual_norm {
            let s = tape.add(x, attn)?;
            let n = tape.normalize_rows(s, eps);
            let n = tape.mul_row(n, b.norm1_gain)?;
            tape.add_row(n, b.norm1_bias)?
        } else {
            attn
        };
        let hidden = tape.matmul(x, b.ffn_in)?;
        let hidden = tape.add_row(hidden, b.ffn_in_bias)?;
        let hidden = tape.relu(hidden);
        let ffn = tape.matmul(hidden, b.ffn_out)?;
        let ffn = tape.add_row(ffn, b.ffn_out_bias)?;
        if self.config.use_residual_norm {
            let s = tape.add(x, ffn)?;
            let n = tape.normalize_rows(s, eps);
            let n = tape.mul_row(n, b.norm2_gain)?;
            tape.add_row(n, b.norm2_bias)
        } else {
            Ok(ffn)
        }
    }

    /// Full network on `batch` stacked windows; returns `[batch, classes]`
    /// probabilities.
    fn forward_graph(&self, tape: &mut Tape<T>, v: &ParamVars, input: Var, batch: usize) -> Result<Var> {
        let mut x = self.embed_graph(tape, v, input)?;
        for (i, b) in v.blocks.iter().enumerate() {
            x = self.block_graph(tape, b, x, batch)?;
            if !tape.value(x).is_finite() {
                return Err(Error::Numeric { block: i });
            }
        }
        let seq = tape.reshape(x, &[batch, WINDOW_LEN, self.config.d_model])?;
        let pooled = match self.config.pooling {
            Pooling::Mean => tape.mean_axis1(seq)?,
            Pooling::Last => tape.select_axis1(seq, WINDOW_LEN - 1)?,
        };
        let logits = tape.matmul(pooled, v.head_weight)?;
        let logits = tape.add_row(logits, v.head_bias)?;
        if !tape.value(logits).is_finite() {
            return Err(Error::Numeric {
                block: self.config.layers,
            });
        }
        Ok(tape.softmax(logits))
    }

    /// ŷ for each window.
    pub fn forward(&self, windows: &[&WindowMatrix]) -> Result<Vec<PredictionDistribution<T>>> {
        let mut out = Vec::with_capacity(windows.len());
        for chunk in windows.chunks(INFERENCE_CHUNK) {
            let mut tape = Tape::new();
            let vars = ParamVars::register(&mut tape, &self.params);
            let input = tape.constant(windows_tensor(chunk)?);
            let probs = self.forward_graph(&mut tape, &vars, input, chunk.len())?;
            let classes = self.config.classes;
            out.extend(tape.value(probs).data().chunks(classes).map(<[T]>::to_vec));
        }
        Ok(out)
    }

    pub fn forward_one(&self, window: &WindowMatrix) -> Result<PredictionDistribution<T>> {
        Ok(self.forward(&[window])?.remove(0))
    }

    /// Linear embedding of one window: `X·W_E + θ_E`, shape `20 × d`.
    pub fn embed(&self, window: &WindowMatrix) -> Result<Tensor<T>> {
        let mut tape = Tape::new();
        let vars = ParamVars::register(&mut tape, &self.params);
        let input = tape.constant(windows_tensor(&[window])?);
        let x = self.embed_graph(&mut tape, &vars, input)?;
        Ok(tape.value(x).clone())
    }

    /// Multi-head attention of block `block` applied to a `20 × d` input.
    pub fn multi_head_attention(&self, block: usize, x: &Tensor<T>) -> Result<Tensor<T>> {
        if x.shape() != [WINDOW_LEN, self.config.d_model] {
            return Err(Error::Contract(format!("attention input shape {:?}", x.shape())));
        }
        let mut tape = Tape::new();
        let vars = ParamVars::register(&mut tape, &self.params);
        let b = vars
            .blocks
            .get(block)
            .ok_or_else(|| Error::Contract(format!("no block {block}")))?;
        let input = tape.constant(x.clone());
        let out = self.attention_graph(&mut tape, b, input, 1)?;
        Ok(tape.value(out).clone())
    }

    /// Mean squared error of a batch and its gradient for every parameter
    /// tensor, in [`ModelParameters::tensors_mut`] order.
    pub fn loss_and_gradients(
        &self,
        windows: &[&WindowMatrix],
        targets: &[Vec<f64>],
    ) -> Result<(T, Gradients<T>)> {
        let (tape, loss) = self.loss_tape(windows, targets)?;
        let grads = tape.gradient(loss)?;
        Ok((tape.value(loss).item(), grads))
    }

    /// Batch MSE without gradients.
    pub fn loss(&self, windows: &[&WindowMatrix], targets: &[Vec<f64>]) -> Result<T> {
        let preds = self.forward(windows)?;
        let targets: Vec<Vec<T>> = targets
            .iter()
            .map(|t| t.iter().map(|&x| T::lit(x)).collect())
            .collect();
        mse_loss(&preds, &targets)
    }

    fn loss_tape(&self, windows: &[&WindowMatrix], targets: &[Vec<f64>]) -> Result<(Tape<T>, Var)> {
        let batch = windows.len();
        if batch == 0 || targets.len() != batch {
            return Err(Error::Contract(format!(
                "loss needs a non-empty batch, got {batch} windows and {} targets",
                targets.len()
            )));
        }
        let classes = self.config.classes;
        if targets.iter().any(|t| t.len() != classes) {
            return Err(Error::Contract(format!("targets must have {classes} entries")));
        }
        let mut tape = Tape::new();
        let vars = ParamVars::register(&mut tape, &self.params);
        let input = tape.constant(windows_tensor(windows)?);
        let probs = self.forward_graph(&mut tape, &vars, input, batch)?;
        let y = Tensor::new(
            vec![batch, classes],
            targets.iter().flatten().map(|&x| T::lit(x)).collect(),
        )?;
        let y = tape.constant(y);
        let diff = tape.sub(probs, y)?;
        let sq = tape.mul(diff, diff)?;
        let total = tape.sum(sq);
        let loss = tape.scale(total, T::one() / T::from_usize_lossy(batch));
        Ok((tape, loss))
    }
}

/// (1/N)·Σ‖y − ŷ‖² over a batch.
pub fn mse_loss<T: Scalar>(predicted: &[Vec<T>], targets: &[Vec<T>]) -> Result<T> {
    if predicted.is_empty() || predicted.len() != targets.len() {
        return Err(Error::Contract(format!(
            "mse over {} predictions and {} targets",
            predicted.len(),
            targets.len()
        )));
    }
    let mut total = T::zero();
    for (p, y) in predicted.iter().zip(targets) {
        if p.len() != y.len() {
            return Err(Error::Contract("prediction and target widths differ".into()));
        }
        total += p.iter().zip(y).map(|(&a, &b)| (b - a) * (b - a)).sum::<T>();
    }
    Ok(total / T::from_usize_lossy(predicted.len()))
}
