use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Divisor applied to attention scores before the softmax.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttentionScale {
    /// √d, the hidden width.
    SqrtD,
    /// √head_dim.
    SqrtHeadDim,
}

/// Reduction over the 20 encoded time steps before the classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pooling {
    Mean,
    Last,
}

/// Width of each head's query/key/value projection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum HeadDim {
    Rule(HeadDimRule),
    Fixed(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadDimRule {
    /// One column per output class.
    Classes,
    /// d / H.
    DOverHeads,
}

/// Architecture settings that do not depend on the label scheme.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelSettings {
    pub d_model: usize,
    pub heads: usize,
    pub layers: usize,
    pub head_dim: HeadDim,
    pub attention_scale: AttentionScale,
    pub pooling: Pooling,
    /// Inner feed-forward width; `None` means 4·d.
    pub ffn_width: Option<usize>,
    pub use_residual_norm: bool,
    pub model_seed: u64,
}

impl Default for ModelSettings {
    fn default() -> Self {
        Self {
            d_model: 16,
            heads: 16,
            layers: 6,
            head_dim: HeadDim::Rule(HeadDimRule::Classes),
            attention_scale: AttentionScale::SqrtD,
            pooling: Pooling::Mean,
            ffn_width: None,
            use_residual_norm: true,
            model_seed: 0,
        }
    }
}

impl ModelSettings {
    pub fn resolve(&self, classes: usize) -> Result<ModelConfig> {
        let head_dim = match self.head_dim {
            HeadDim::Fixed(n) => n,
            HeadDim::Rule(HeadDimRule::Classes) => classes,
            HeadDim::Rule(HeadDimRule::DOverHeads) => {
                if self.heads == 0 || !self.d_model.is_multiple_of(self.heads) {
                    return Err(Error::config(
                        "head_dim",
                        format!("d_model {} is not divisible by heads {}", self.d_model, self.heads),
                    ));
                }
                self.d_model / self.heads
            }
        };
        let config = ModelConfig {
            d_model: self.d_model,
            heads: self.heads,
            layers: self.layers,
            classes,
            head_dim,
            attention_scale: self.attention_scale,
            pooling: self.pooling,
            ffn_width: self.ffn_width.unwrap_or(4 * self.d_model),
            use_residual_norm: self.use_residual_norm,
            seed: self.model_seed,
        };
        config.validate()?;
        Ok(config)
    }
}

/// Fully resolved architecture.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub d_model: usize,
    pub heads: usize,
    pub layers: usize,
    pub classes: usize,
    pub head_dim: usize,
    pub attention_scale: AttentionScale,
    pub pooling: Pooling,
    pub ffn_width: usize,
    pub use_residual_norm: bool,
    pub seed: u64,
}

impl ModelConfig {
    /// Defaults with `classes` output bins (head_dim = classes).
    pub fn with_classes(classes: usize) -> Self {
        ModelSettings::default()
            .resolve(classes)
            .expect("default settings are valid")
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("d_model", self.d_model),
            ("heads", self.heads),
            ("layers", self.layers),
            ("classes", self.classes),
            ("head_dim", self.head_dim),
            ("ffn_width", self.ffn_width),
        ];
        for (name, value) in fields {
            if value == 0 {
                return Err(Error::config(name, "must be at least 1"));
            }
        }
        Ok(())
    }

    pub(crate) fn score_divisor(&self) -> f64 {
        match self.attention_scale {
            AttentionScale::SqrtD => (self.d_model as f64).sqrt(),
            AttentionScale::SqrtHeadDim => (self.head_dim as f64).sqrt(),
        }
    }

    pub fn parameter_count(&self) -> usize {
        let (d, h, hd, f, c) = (self.d_model, self.heads, self.head_dim, self.ffn_width, self.classes);
        let block = 3 * h * d * hd + h * hd * d + d * f + f + f * d + d + 4 * d;
        2 * d + d + self.layers * block + d * c + c
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn head_dim_follows_classes_by_default() {
        let c = ModelSettings::default().resolve(5).unwrap();
        assert_eq!(c.head_dim, 5);
        assert_eq!(c.ffn_width, 64);
    }

    #[test]
    fn head_dim_rules_parse() {
        let s: ModelSettings = serde_json::from_str(r#"{"head_dim":"d_over_heads","heads":4}"#).unwrap();
        assert_eq!(s.resolve(3).unwrap().head_dim, 4);
        let s: ModelSettings = serde_json::from_str(r#"{"head_dim":7}"#).unwrap();
        assert_eq!(s.resolve(3).unwrap().head_dim, 7);
        let s: ModelSettings = serde_json::from_str(r#"{"head_dim":"d_over_heads","heads":5}"#).unwrap();
        assert!(s.resolve(3).is_err());
    }

    #[test]
    fn zero_width_is_rejected() {
        let s = ModelSettings {
            layers: 0,
            ..ModelSettings::default()
        };
        assert!(matches!(s.resolve(3), Err(Error::Config { field, .. }) if field == "layers"));
    }
}
