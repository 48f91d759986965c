//! Cross-sectional stock ranking with a small transformer encoder, from
//! daily bars to backtest metrics.
//!
//! The numeric core is generic over [`numeric::Scalar`] (`f32` or `f64`);
//! label boundaries are exact rationals. The aliases below fix the common
//! choices.

// `!(x > 0)` style guards are deliberate: they also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod labeling;
pub mod market_data;
pub mod metrics;
pub mod model;
pub mod numeric;
pub mod strategy;
pub mod synthetic;
pub mod trainer;

pub use error::{Error, Result};

pub type Tensor64 = numeric::Tensor<f64>;
pub type Tensor32 = numeric::Tensor<f32>;
pub type Tape64 = numeric::Tape<f64>;
pub type Quantformer64 = model::Quantformer<f64>;
pub type Quantformer32 = model::Quantformer<f32>;
pub type ModelParameters64 = model::ModelParameters<f64>;
pub type ModelParameters32 = model::ModelParameters<f32>;
pub type ReturnSeries64 = metrics::ReturnSeries<f64>;
/// Exact ratio used for bin boundaries and quantiles.
pub type Rational = labeling::Rational;
