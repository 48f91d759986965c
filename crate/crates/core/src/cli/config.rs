use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::labeling::{Fraction, LabelScheme};
use crate::market_data::Frequency;
use crate::metrics::VarMethod;
use crate::model::{ModelConfig, ModelSettings};
use crate::strategy::StrategyConfig;
use crate::synthetic::{SignalRule, SyntheticSpec};
use crate::trainer::TrainConfig;

/// Synthetic-market keys, prefixed so they sit in the flat config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSettings {
    pub synth_seed: u64,
    pub synth_stocks: usize,
    pub synth_periods: usize,
    pub synth_frequency: Frequency,
    pub synth_volatility: f64,
    pub synth_drift: f64,
    pub synth_turnover: f64,
    pub signal_strength: f64,
    pub signal_rule: SignalRule,
    pub synth_start: NaiveDate,
}

impl Default for SynthSettings {
    fn default() -> Self {
        let d = SyntheticSpec::default();
        Self {
            synth_seed: d.seed,
            synth_stocks: d.stocks,
            synth_periods: d.periods,
            synth_frequency: d.frequency,
            synth_volatility: d.base_volatility,
            synth_drift: d.drift,
            synth_turnover: d.turnover_level,
            signal_strength: d.signal_strength,
            signal_rule: d.signal_rule,
            synth_start: d.start,
        }
    }
}

impl SynthSettings {
    pub fn spec(&self) -> SyntheticSpec {
        SyntheticSpec {
            seed: self.synth_seed,
            stocks: self.synth_stocks,
            periods: self.synth_periods,
            frequency: self.synth_frequency,
            base_volatility: self.synth_volatility,
            drift: self.synth_drift,
            turnover_level: self.synth_turnover,
            signal_strength: self.signal_strength,
            signal_rule: self.signal_rule,
            start: self.synth_start,
        }
    }
}

/// Everything one pipeline run needs, read from a flat JSON object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub name: Option<String>,
    /// Daily bar CSV. Without it the stages read `market.csv` written by
    /// `synth` into the output directory.
    pub data_path: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub frequency: Frequency,
    pub bins: usize,
    pub fraction: Fraction,
    pub include_null: bool,
    /// Share of decision periods, taken from the end, kept for the backtest.
    pub test_fraction: f64,
    pub grid_search: bool,
    pub risk_free_rate: f64,
    /// Optional `timestamp,return` CSV replacing the equal-weight benchmark.
    pub benchmark_path: Option<PathBuf>,
    pub var_method: VarMethod,
    #[serde(flatten)]
    pub synth: SynthSettings,
    #[serde(flatten)]
    pub model: ModelSettings,
    #[serde(flatten)]
    pub train: TrainConfig,
    #[serde(flatten)]
    pub strategy: StrategyConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            name: None,
            data_path: None,
            output_dir: PathBuf::from("out"),
            frequency: Frequency::Monthly,
            bins: 3,
            fraction: Fraction::new(1, 5).expect("nonzero denominator"),
            include_null: false,
            test_fraction: 0.2,
            grid_search: false,
            risk_free_rate: 0.0,
            benchmark_path: None,
            var_method: VarMethod::Historical,
            synth: SynthSettings::default(),
            model: ModelSettings::default(),
            train: TrainConfig::default(),
            strategy: StrategyConfig::default(),
        }
    }
}

fn known_keys() -> Map<String, Value> {
    match serde_json::to_value(RunConfig::default()) {
        Ok(Value::Object(m)) => m,
        _ => unreachable!("config serializes to an object"),
    }
}

impl RunConfig {
    /// Parses and validates a config. Relative paths are resolved against
    /// `base`.
    pub fn from_json(text: &str, base: &Path) -> Result<Self> {
        let value: Value = serde_json::from_str(text).map_err(|e| Error::config("config", e.to_string()))?;
        let Value::Object(user) = value else {
            return Err(Error::config("config", "expected a JSON object"));
        };
        let known = known_keys();
        if let Some(k) = user.keys().find(|k| !known.contains_key(*k)) {
            return Err(Error::config(k.clone(), "unknown key"));
        }
        let mut cfg: RunConfig = match serde_json::from_value(Value::Object(user.clone())) {
            Ok(c) => c,
            Err(whole) => {
                // find the first key that fails on its own
                for (k, v) in &user {
                    let mut probe = known.clone();
                    probe.insert(k.clone(), v.clone());
                    if let Err(e) = serde_json::from_value::<RunConfig>(Value::Object(probe)) {
                        return Err(Error::config(k.clone(), e.to_string()));
                    }
                }
                return Err(Error::config("config", whole.to_string()));
            }
        };
        for p in [&mut cfg.data_path, &mut cfg.benchmark_path].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if cfg.output_dir.is_relative() {
            cfg.output_dir = base.join(&cfg.output_dir);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_json(&text, base)
    }

    pub fn scheme(&self) -> Result<LabelScheme> {
        if self.bins < 3 {
            return Err(Error::config("bins", "need at least 3 bins"));
        }
        LabelScheme::new(self.bins, self.fraction, self.include_null).map_err(|e| match e {
            Error::Scheme(msg) => Error::config("fraction", msg),
            other => other,
        })
    }

    pub fn model_config(&self) -> Result<ModelConfig> {
        self.model.resolve(self.bins)
    }

    /// Checks every field before any stage does work.
    pub fn validate(&self) -> Result<()> {
        self.scheme()?;
        self.model_config()?;
        self.train.validate()?;
        self.strategy.validate(self.bins)?;
        self.synth.spec().validate().map_err(|e| match e {
            Error::Config { field, message } => {
                let key = match field.as_str() {
                    "stocks" => "synth_stocks",
                    "periods" => "synth_periods",
                    "base_volatility" => "synth_volatility",
                    "turnover_level" => "synth_turnover",
                    other => other,
                };
                Error::config(key, message)
            }
            other => other,
        })?;
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::config("test_fraction", "must lie strictly between 0 and 1"));
        }
        if !self.risk_free_rate.is_finite() {
            return Err(Error::config("risk_free_rate", "must be finite"));
        }
        if let Some(p) = &self.data_path {
            if !p.is_file() {
                return Err(Error::config("data_path", format!("{} does not exist", p.display())));
            }
        }
        if let Some(p) = &self.benchmark_path {
            if !p.is_file() {
                return Err(Error::config("benchmark_path", format!("{} does not exist", p.display())));
            }
        }
        Ok(())
    }

    /// Canonical JSON used for hashing.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }
}
