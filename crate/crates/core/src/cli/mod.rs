//! Pipeline stages behind the `quantformer` binary.
//!
//! Each stage reads its inputs from and writes its outputs to the
//! configured output directory, plus a `manifest_<stage>.json` recording
//! hashes of the config, inputs and outputs.

mod config;
mod svg;
mod table1;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::ops::Range;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use config::{RunConfig, SynthSettings};
pub use svg::equity_svg;
pub use table1::{format_table1, replicate_table1, Table1Row};

use crate::error::{Error, Result};
use crate::labeling::{build_dataset, prepare_sections, SectionWithReturns};
use crate::market_data::{aggregate_period, ingest_daily_csv, Frequency, Panel, PeriodTable};
use crate::metrics::{turnover, MetricsReport, ReportInputs, ReturnSeries};
use crate::model::Quantformer;
use crate::strategy::{
    daily_portfolio_returns, read_equity_csv, read_weights_csv, run_backtest, run_benchmark, EquityCurve,
    EquityPoint,
};
use crate::synthetic::generate_universe;
use crate::trainer::{default_grid, grid_search, train, write_loss_history, TrainConfig};

pub const MARKET_CSV: &str = "market.csv";
pub const PERIODS_CSV: &str = "periods.csv";
pub const CHECKPOINT: &str = "checkpoint.json";
pub const LOSS_CSV: &str = "loss_history.csv";
pub const EQUITY_CSV: &str = "equity_curve.csv";
pub const WEIGHTS_CSV: &str = "weights_history.csv";
pub const BENCHMARK_CSV: &str = "benchmark_curve.csv";
pub const DAILY_CSV: &str = "daily_returns.csv";
pub const METRICS_JSON: &str = "metrics.json";
pub const EQUITY_SVG: &str = "equity_curve.svg";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Synth,
    Ingest,
    Train,
    Backtest,
    Report,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Synth => "synth",
            Stage::Ingest => "ingest",
            Stage::Train => "train",
            Stage::Backtest => "backtest",
            Stage::Report => "report",
        }
    }
}

/// Loads the config at `config_path` and runs one stage.
pub fn run(stage: Stage, config_path: &Path) -> Result<()> {
    let cfg = RunConfig::load(config_path)?;
    run_with(stage, &cfg)
}

pub fn run_with(stage: Stage, cfg: &RunConfig) -> Result<()> {
    std::fs::create_dir_all(&cfg.output_dir).map_err(|e| Error::io(&cfg.output_dir, e))?;
    log::info!("running {} into {}", stage.name(), cfg.output_dir.display());
    match stage {
        Stage::Synth => synth(cfg),
        Stage::Ingest => ingest(cfg),
        Stage::Train => train_stage(cfg),
        Stage::Backtest => backtest(cfg),
        Stage::Report => report(cfg),
    }
}

/// Record of one stage run, enough to reproduce its artifacts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub stage: String,
    pub version: String,
    pub config_sha256: String,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: BTreeMap<String, String>,
    pub artifacts: BTreeMap<String, String>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn file_hash(path: &Path) -> Result<String> {
    Ok(sha256_hex(&std::fs::read(path).map_err(|e| Error::io(path, e))?))
}

fn write_manifest(cfg: &RunConfig, stage: Stage, inputs: &[PathBuf], artifacts: &[&str]) -> Result<()> {
    let hashes = |paths: Vec<PathBuf>| -> Result<BTreeMap<String, String>> {
        paths
            .iter()
            .map(|p| {
                let name = p.file_name().map_or_else(|| p.display().to_string(), |n| n.to_string_lossy().into());
                Ok((name, file_hash(p)?))
            })
            .collect()
    };
    let manifest = Manifest {
        stage: stage.name().into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config_sha256: sha256_hex(cfg.canonical_json().as_bytes()),
        seeds: BTreeMap::from([
            ("synth_seed".to_string(), cfg.synth.synth_seed),
            ("model_seed".to_string(), cfg.model.model_seed),
            ("shuffle_seed".to_string(), cfg.train.shuffle_seed),
        ]),
        inputs: hashes(inputs.to_vec())?,
        artifacts: hashes(artifacts.iter().map(|a| cfg.output_dir.join(a)).collect())?,
    };
    let path = cfg.output_dir.join(format!("manifest_{}.json", stage.name()));
    std::fs::write(&path, serde_json::to_string_pretty(&manifest)?).map_err(|e| Error::io(&path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?))
}

fn open(path: &Path, stage: Stage) -> Result<File> {
    if !path.is_file() {
        return Err(Error::MissingArtifact {
            path: path.to_path_buf(),
            stage: stage.name().into(),
        });
    }
    File::open(path).map_err(|e| Error::io(path, e))
}

/// Path of the daily bar source: the configured data file or the
/// synthetic market in the output directory.
fn market_path(cfg: &RunConfig) -> PathBuf {
    cfg.data_path.clone().unwrap_or_else(|| cfg.output_dir.join(MARKET_CSV))
}

fn load_panel(cfg: &RunConfig) -> Result<Panel> {
    let path = market_path(cfg);
    if !path.is_file() {
        return Err(Error::MissingArtifact {
            path,
            stage: Stage::Synth.name().into(),
        });
    }
    ingest_daily_csv(path)
}

fn label_frequency(label: &str) -> Option<Frequency> {
    match label.len() {
        7 => Some(Frequency::Monthly),
        8 if label.as_bytes()[5] == b'W' => Some(Frequency::Weekly),
        10 => Some(Frequency::Daily),
        _ => None,
    }
}

/// The cached period store if present, otherwise a fresh aggregation.
fn load_periods(cfg: &RunConfig) -> Result<(PeriodTable, PathBuf)> {
    let cached = cfg.output_dir.join(PERIODS_CSV);
    if cached.is_file() {
        let table = PeriodTable::read_csv(open(&cached, Stage::Ingest)?, cfg.frequency)?;
        if let Some(found) = table.labels.first().and_then(|l| label_frequency(l)) {
            if found != cfg.frequency {
                return Err(Error::config(
                    "frequency",
                    format!("{} holds {found} periods, config asks for {}", cached.display(), cfg.frequency),
                ));
            }
        }
        return Ok((table, cached));
    }
    let panel = load_panel(cfg)?;
    Ok((aggregate_period(&panel, cfg.frequency)?, market_path(cfg)))
}

/// Every usable section plus the backtest decision range, which covers
/// the trailing `test_fraction` of decision periods. Training uses the
/// sections before it.
pub fn split_sections(
    table: &PeriodTable,
    test_fraction: f64,
) -> Result<(Vec<SectionWithReturns>, Range<usize>)> {
    let sections = prepare_sections(table, 0..table.period_count())?;
    let n = sections.len();
    if n < 2 {
        return Err(Error::Data(format!("only {n} usable cross-sections; need at least 2")));
    }
    let held = ((n as f64 * test_fraction).ceil() as usize).clamp(1, n - 1);
    let first = sections[n - held].section.decision_time;
    let last = sections[n - 1].section.decision_time;
    Ok((sections, first..last + 1))
}

fn synth(cfg: &RunConfig) -> Result<()> {
    let panel = generate_universe(&cfg.synth.spec())?;
    let path = cfg.output_dir.join(MARKET_CSV);
    panel.write_csv(create(&path)?)?;
    log::info!("wrote {} bars for {} stocks", panel.bar_count(), panel.ticker_count());
    write_manifest(cfg, Stage::Synth, &[], &[MARKET_CSV])
}

fn ingest(cfg: &RunConfig) -> Result<()> {
    let panel = load_panel(cfg)?;
    let table = aggregate_period(&panel, cfg.frequency)?;
    table.write_csv(create(&cfg.output_dir.join(PERIODS_CSV))?)?;
    log::info!("aggregated {} periods", table.period_count());
    write_manifest(cfg, Stage::Ingest, &[market_path(cfg)], &[PERIODS_CSV])
}

fn train_stage(cfg: &RunConfig) -> Result<()> {
    let (table, source) = load_periods(cfg)?;
    let scheme = cfg.scheme()?;
    let (sections, test) = split_sections(&table, cfg.test_fraction)?;
    let cutoff = test.start - 1;
    let fit: Vec<SectionWithReturns> = sections
        .into_iter()
        .filter(|s| s.section.decision_time <= cutoff)
        .collect();
    let dataset = build_dataset(&fit, &scheme)?;
    log::info!(
        "{} training samples from {} sections ({} null labels)",
        dataset.samples.len(),
        dataset.sections,
        dataset.null_labels
    );
    let train_config = TrainConfig {
        cutoff: Some(cutoff),
        ..cfg.train
    };
    let mut model_config = cfg.model_config()?;
    if cfg.grid_search {
        let grid = default_grid(&cfg.model, cfg.bins, &train_config)?;
        let result = grid_search::<f64>(&grid, &dataset.samples)?;
        model_config = grid[result.best].0;
        log::info!("grid search picked candidate {} {:?}", result.best, model_config);
    }
    let outcome = train::<f64>(&dataset.samples, &model_config, &train_config)?;
    outcome.model.save(cfg.output_dir.join(CHECKPOINT))?;
    write_loss_history(&outcome.loss_history, create(&cfg.output_dir.join(LOSS_CSV))?)?;
    write_manifest(cfg, Stage::Train, &[source], &[CHECKPOINT, LOSS_CSV])
}

/// Benchmark curve from an external `timestamp,return` file, aligned to
/// the strategy's holding periods.
fn external_benchmark(path: &Path, curve: &EquityCurve) -> Result<EquityCurve> {
    let mut rdr = csv::Reader::from_reader(File::open(path).map_err(|e| Error::io(path, e))?);
    let mut by_label = BTreeMap::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        let r: f64 = row.get(1).and_then(|x| x.trim().parse().ok()).ok_or(Error::Parse {
            line,
            message: "expected timestamp,return".into(),
        })?;
        by_label.insert(row.get(0).unwrap_or_default().trim().to_string(), r);
    }
    let mut value = curve.initial_value;
    let mut points = Vec::with_capacity(curve.points.len());
    for p in &curve.points {
        let r = *by_label
            .get(&p.timestamp)
            .ok_or_else(|| Error::Data(format!("benchmark has no return for {}", p.timestamp)))?;
        let start = value;
        value *= 1.0 + r;
        points.push(EquityPoint {
            decision_time: p.decision_time,
            timestamp: p.timestamp.clone(),
            start_value: start,
            value,
            period_return: r,
            fee: 0.0,
            turnover: 0.0,
            weights: Vec::new(),
        });
    }
    Ok(EquityCurve {
        tickers: Vec::new(),
        start_label: curve.start_label.clone(),
        initial_value: curve.initial_value,
        points,
        ruined: false,
    })
}

fn backtest(cfg: &RunConfig) -> Result<()> {
    let checkpoint = cfg.output_dir.join(CHECKPOINT);
    open(&checkpoint, Stage::Train)?;
    let model = Quantformer::<f64>::load(&checkpoint)?;
    if model.config.classes != cfg.bins {
        return Err(Error::config(
            "bins",
            format!("checkpoint predicts {} bins, config has {}", model.config.classes, cfg.bins),
        ));
    }
    let (table, source) = load_periods(cfg)?;
    let scheme = cfg.scheme()?;
    let (_, test) = split_sections(&table, cfg.test_fraction)?;
    let curve = run_backtest(&model, &table, test.clone(), &scheme, &cfg.strategy)?;
    let benchmark = match &cfg.benchmark_path {
        Some(p) => external_benchmark(p, &curve)?,
        None => run_benchmark(&table, test, &cfg.strategy)?,
    };
    curve.write_csv(create(&cfg.output_dir.join(EQUITY_CSV))?)?;
    curve.write_weights_csv(create(&cfg.output_dir.join(WEIGHTS_CSV))?)?;
    benchmark.write_csv(create(&cfg.output_dir.join(BENCHMARK_CSV))?)?;
    let mut artifacts = vec![EQUITY_CSV, WEIGHTS_CSV, BENCHMARK_CSV];

    let daily_path = cfg.output_dir.join(DAILY_CSV);
    if market_path(cfg).is_file() {
        let panel = load_panel(cfg)?;
        let daily = daily_portfolio_returns(&panel, &table, &curve)?;
        let mut w = csv::Writer::from_writer(create(&daily_path)?);
        w.write_record(["day", "return"])?;
        for (i, r) in daily.iter().enumerate() {
            w.write_record([i.to_string(), r.to_string()])?;
        }
        w.flush().map_err(|e| Error::io(&daily_path, e))?;
        artifacts.push(DAILY_CSV);
    } else if daily_path.is_file() {
        std::fs::remove_file(&daily_path).map_err(|e| Error::io(&daily_path, e))?;
    }
    log::info!(
        "final equity {:.6} vs benchmark {:.6}",
        curve.final_value(),
        benchmark.final_value()
    );
    write_manifest(cfg, Stage::Backtest, &[checkpoint, source], &artifacts)
}

fn read_daily(path: &Path) -> Result<Vec<f64>> {
    let mut rdr = csv::Reader::from_reader(File::open(path).map_err(|e| Error::io(path, e))?);
    rdr.records()
        .map(|row| {
            let row = row?;
            let line = row.position().map_or(0, |p| p.line());
            row.get(1).and_then(|x| x.parse().ok()).ok_or(Error::Parse {
                line,
                message: "bad daily return".into(),
            })
        })
        .collect()
}

fn report(cfg: &RunConfig) -> Result<()> {
    let dir = &cfg.output_dir;
    let equity = read_equity_csv(open(&dir.join(EQUITY_CSV), Stage::Backtest)?)?;
    let bench = read_equity_csv(open(&dir.join(BENCHMARK_CSV), Stage::Backtest)?)?;
    let weights = read_weights_csv(open(&dir.join(WEIGHTS_CSV), Stage::Backtest)?)?;
    let tr = turnover(&weights)?;
    let daily_path = dir.join(DAILY_CSV);
    let daily = if daily_path.is_file() { Some(read_daily(&daily_path)?) } else { None };
    let series = ReturnSeries::new(
        equity.returns.clone(),
        bench.returns.clone(),
        cfg.frequency.periods_per_year(),
        cfg.risk_free_rate,
    )?;
    let metrics = MetricsReport::compute(
        &series,
        ReportInputs {
            equity: &equity.values,
            turnover: &tr,
            var_returns: daily.as_deref(),
            var_method: cfg.var_method,
        },
    )?;
    let json_path = dir.join(METRICS_JSON);
    std::fs::write(&json_path, serde_json::to_string_pretty(&metrics)?).map_err(|e| Error::io(&json_path, e))?;
    let svg_path = dir.join(EQUITY_SVG);
    let title = cfg.name.clone().unwrap_or_else(|| "strategy".into());
    std::fs::write(&svg_path, equity_svg(&title, &equity.timestamps, &equity.values, &bench.values))
        .map_err(|e| Error::io(&svg_path, e))?;
    let mut inputs = vec![dir.join(EQUITY_CSV), dir.join(BENCHMARK_CSV), dir.join(WEIGHTS_CSV)];
    if daily.is_some() {
        inputs.push(daily_path);
    }
    write_manifest(cfg, Stage::Report, &inputs, &[METRICS_JSON, EQUITY_SVG])
}
