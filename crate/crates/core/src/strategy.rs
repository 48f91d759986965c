//! Prediction-sorted portfolio construction and fee-aware backtesting.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labeling::{assign_label, empirical_quantiles, LabelScheme, LabelVector};
use crate::market_data::{
    build_cross_section, normalize_cross_section, CrossSection, Panel, PeriodTable, WindowMatrix,
};
use crate::model::Quantformer;
use crate::numeric::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StrategyConfig {
    /// 0/1 indicator over the ϱ bins; `None` selects bin 1 only.
    pub selection: Option<Vec<u8>>,
    pub fee_rate: f64,
    pub initial_cash: f64,
    pub require_persistence: bool,
}

impl Default for StrategyConfig {
    fn default() -> Self {
        Self {
            selection: None,
            fee_rate: 0.003,
            initial_cash: 1.0,
            require_persistence: false,
        }
    }
}

impl StrategyConfig {
    /// The selection indicator resolved against `bins`.
    pub fn phi(&self, bins: usize) -> Result<Vec<bool>> {
        let phi: Vec<bool> = match &self.selection {
            None => (0..bins).map(|i| i == 0).collect(),
            Some(v) => {
                if v.len() != bins {
                    return Err(Error::config(
                        "selection",
                        format!("has {} entries, label scheme has {bins} bins", v.len()),
                    ));
                }
                v.iter()
                    .map(|&x| match x {
                        0 => Ok(false),
                        1 => Ok(true),
                        _ => Err(Error::config("selection", "entries must be 0 or 1")),
                    })
                    .collect::<Result<_>>()?
            }
        };
        let b = phi.iter().filter(|&&x| x).count();
        if b == 0 || b >= bins {
            return Err(Error::config(
                "selection",
                format!("must select between 1 and {} bins, selects {b}", bins - 1),
            ));
        }
        Ok(phi)
    }

    pub fn validate(&self, bins: usize) -> Result<()> {
        self.phi(bins)?;
        if !(self.fee_rate >= 0.0 && self.fee_rate.is_finite()) {
            return Err(Error::config("fee_rate", "must be finite and non-negative"));
        }
        if !(self.initial_cash > 0.0 && self.initial_cash.is_finite()) {
            return Err(Error::config("initial_cash", "must be positive"));
        }
        Ok(())
    }
}

/// Anything that maps a normalized cross-section to one distribution per
/// stock, in section order.
pub trait Predictor {
    fn predict(&self, section: &CrossSection) -> Result<Vec<Vec<f64>>>;
}

impl<T: Scalar> Predictor for Quantformer<T> {
    fn predict(&self, section: &CrossSection) -> Result<Vec<Vec<f64>>> {
        let windows: Vec<&WindowMatrix> = section.windows.iter().map(|w| &w.matrix).collect();
        Ok(self
            .forward(&windows)?
            .into_iter()
            .map(|p| p.into_iter().map(Scalar::as_f64).collect())
            .collect())
    }
}

/// Peeks at the realized next-period returns. Only useful as an upper
/// reference in comparisons.
#[derive(Debug, Clone, Copy)]
pub struct OraclePredictor<'a> {
    pub table: &'a PeriodTable,
    pub classes: usize,
}

impl Predictor for OraclePredictor<'_> {
    fn predict(&self, section: &CrossSection) -> Result<Vec<Vec<f64>>> {
        let t = section.decision_time + 1;
        Ok(section
            .windows
            .iter()
            .map(|w| {
                let r = self.table.valid_return(&w.ticker, t).unwrap_or(0.0);
                // probability of the worst bin falls as the return rises
                let p1 = 0.5 * (1.0 - r.tanh());
                let rest = (1.0 - p1) / (self.classes - 1) as f64;
                std::iter::once(p1).chain(std::iter::repeat_n(rest, self.classes - 1)).collect()
            })
            .collect())
    }
}

/// Emits the uniform distribution for every stock.
#[derive(Debug, Clone, Copy)]
pub struct UniformPredictor {
    pub classes: usize,
}

impl Predictor for UniformPredictor {
    fn predict(&self, section: &CrossSection) -> Result<Vec<Vec<f64>>> {
        Ok(vec![vec![1.0 / self.classes as f64; self.classes]; section.len()])
    }
}

/// Bins stocks by the empirical quantile of their first predicted
/// probability, using the same φ/ξ layout as the training labels.
pub fn sort_label(predictions: &[Vec<f64>], scheme: &LabelScheme) -> Result<Vec<LabelVector>> {
    if predictions.is_empty() {
        return Err(Error::Contract("cannot sort an empty section".into()));
    }
    let first = predictions
        .iter()
        .map(|p| {
            p.first()
                .copied()
                .filter(|x| x.is_finite())
                .ok_or_else(|| Error::Contract("prediction without a finite first component".into()))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(empirical_quantiles(&first)?
        .into_iter()
        .map(|q| assign_label(q, scheme))
        .collect())
}

fn selected(label: &LabelVector, phi: &[bool]) -> bool {
    label.active().is_some_and(|b| phi.get(b).copied().unwrap_or(false))
}

/// Equal weights over the selected stocks, or all cash when none is
/// selected. `previous` must be aligned with `current`.
pub fn compute_weights(
    previous: Option<&[LabelVector]>,
    current: &[LabelVector],
    phi: &[bool],
    require_persistence: bool,
) -> Vec<f64> {
    let picks: Vec<bool> = current
        .iter()
        .enumerate()
        .map(|(n, label)| {
            let now = selected(label, phi);
            match (require_persistence, previous) {
                (true, Some(prev)) => now && prev.get(n).is_some_and(|p| selected(p, phi)),
                _ => now,
            }
        })
        .collect();
    let count = picks.iter().filter(|&&x| x).count();
    if count == 0 {
        return vec![0.0; current.len()];
    }
    let w = 1.0 / count as f64;
    picks.into_iter().map(|x| if x { w } else { 0.0 }).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PortfolioState {
    pub period: usize,
    pub value: f64,
    /// Holdings as fractions of `value` after the last period's drift.
    pub weights: Vec<f64>,
}

impl PortfolioState {
    pub fn all_cash(period: usize, value: f64, stocks: usize) -> Self {
        Self {
            period,
            value,
            weights: vec![0.0; stocks],
        }
    }
}

/// Result of one rebalance-and-hold step.
#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub state: PortfolioState,
    /// Fee paid at the rebalance.
    pub fee: f64,
}

const WEIGHT_TOL: f64 = 1e-12;

/// Rebalances to `target`, paying `fee_rate` on the traded notional, then
/// lets the positions earn `returns` over one period. Cash earns nothing.
pub fn step_portfolio(
    state: &PortfolioState,
    target: &[f64],
    returns: &[f64],
    fee_rate: f64,
) -> Result<Step> {
    let n = state.weights.len();
    if target.len() != n || returns.len() != n {
        return Err(Error::Contract(format!(
            "state has {n} stocks, got {} weights and {} returns",
            target.len(),
            returns.len()
        )));
    }
    if target.iter().any(|&w| !(w >= 0.0)) || target.iter().sum::<f64>() > 1.0 + WEIGHT_TOL {
        return Err(Error::Contract("weights must be non-negative and sum to at most 1".into()));
    }
    if let Some(r) = returns.iter().find(|&&r| !(r > -1.0 && r.is_finite())) {
        return Err(Error::Contract(format!("return {r} is not above -1")));
    }
    let traded: f64 = target.iter().zip(&state.weights).map(|(a, b)| (a - b).abs()).sum();
    let fee = fee_rate * traded * state.value;
    let after_fee = state.value - fee;
    let cash = (1.0 - target.iter().sum::<f64>()).max(0.0);
    let gross = cash + target.iter().zip(returns).map(|(w, r)| w * (1.0 + r)).sum::<f64>();
    let value = after_fee * gross;
    let weights = target.iter().zip(returns).map(|(w, r)| w * (1.0 + r) / gross).collect();
    Ok(Step {
        state: PortfolioState {
            period: state.period + 1,
            value,
            weights,
        },
        fee,
    })
}

/// One rebalance at `decision_time` and the period that followed.
#[derive(Debug, Clone, PartialEq)]
pub struct EquityPoint {
    pub decision_time: usize,
    /// Label of the holding period.
    pub timestamp: String,
    /// Value before the rebalance fee.
    pub start_value: f64,
    pub value: f64,
    pub period_return: f64,
    pub fee: f64,
    /// Half the L1 change of target weights against the previous target.
    pub turnover: f64,
    /// Target weights set at the rebalance, over [`EquityCurve::tickers`].
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquityCurve {
    pub tickers: Vec<String>,
    /// Label of the first decision period.
    pub start_label: String,
    pub initial_value: f64,
    pub points: Vec<EquityPoint>,
    pub ruined: bool,
}

impl EquityCurve {
    /// Initial value followed by every period-end value.
    pub fn values(&self) -> Vec<f64> {
        std::iter::once(self.initial_value)
            .chain(self.points.iter().map(|p| p.value))
            .collect()
    }

    pub fn returns(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.period_return).collect()
    }

    pub fn turnover(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.turnover).collect()
    }

    /// Weight snapshots starting from the all-cash state.
    pub fn weight_history(&self) -> Vec<Vec<f64>> {
        std::iter::once(vec![0.0; self.tickers.len()])
            .chain(self.points.iter().map(|p| p.weights.clone()))
            .collect()
    }

    pub fn final_value(&self) -> f64 {
        self.points.last().map_or(self.initial_value, |p| p.value)
    }

    /// `timestamp,value,period_return,turnover`; the first row is the
    /// starting point and leaves the last two columns empty.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["timestamp", "value", "period_return", "turnover"])?;
        w.write_record([self.start_label.as_str(), &self.initial_value.to_string(), "", ""])?;
        for p in &self.points {
            w.write_record([
                p.timestamp.clone(),
                p.value.to_string(),
                p.period_return.to_string(),
                p.turnover.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }

    /// Wide format: one row per snapshot, one column per ticker.
    pub fn write_weights_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(std::iter::once("timestamp").chain(self.tickers.iter().map(String::as_str)))?;
        let labels = std::iter::once(&self.start_label).chain(self.points.iter().map(|p| &p.timestamp));
        for (label, weights) in labels.zip(self.weight_history()) {
            w.write_record(std::iter::once(label.clone()).chain(weights.iter().map(f64::to_string)))?;
        }
        w.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }
}

/// Equity curve columns read back from CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct EquityTable {
    pub timestamps: Vec<String>,
    pub values: Vec<f64>,
    pub returns: Vec<f64>,
    pub turnover: Vec<f64>,
}

fn parse_field(row: &csv::StringRecord, i: usize) -> Result<Option<f64>> {
    let line = row.position().map_or(0, |p| p.line());
    let raw = row.get(i).ok_or(Error::Parse {
        line,
        message: format!("missing column {i}"),
    })?;
    if raw.is_empty() {
        return Ok(None);
    }
    raw.parse().map(Some).map_err(|_| Error::Parse {
        line,
        message: format!("not a number: {raw:?}"),
    })
}

pub fn read_equity_csv<R: Read>(reader: R) -> Result<EquityTable> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut out = EquityTable {
        timestamps: Vec::new(),
        values: Vec::new(),
        returns: Vec::new(),
        turnover: Vec::new(),
    };
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        out.timestamps.push(row.get(0).unwrap_or_default().to_string());
        out.values.push(parse_field(&row, 1)?.ok_or_else(|| Error::Data("equity row without value".into()))?);
        if i > 0 {
            out.returns.push(parse_field(&row, 2)?.unwrap_or(f64::NAN));
            out.turnover.push(parse_field(&row, 3)?.unwrap_or(f64::NAN));
        }
    }
    if out.values.is_empty() {
        return Err(Error::Data("equity curve is empty".into()));
    }
    Ok(out)
}

/// Weight snapshots from the wide CSV, in file order.
pub fn read_weights_csv<R: Read>(reader: R) -> Result<Vec<Vec<f64>>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let weights = (1..row.len())
            .map(|i| parse_field(&row, i).map(|x| x.unwrap_or(0.0)))
            .collect::<Result<Vec<f64>>>()?;
        out.push(weights);
    }
    Ok(out)
}

fn simulate<F>(
    table: &PeriodTable,
    decisions: Range<usize>,
    config: &StrategyConfig,
    mut choose: F,
) -> Result<EquityCurve>
where
    F: FnMut(&CrossSection) -> Result<Vec<f64>>,
{
    if decisions.is_empty() {
        return Err(Error::Contract("backtest range is empty".into()));
    }
    if !(config.fee_rate >= 0.0) || !(config.initial_cash > 0.0) {
        return Err(Error::config("strategy", "fee_rate must be >= 0 and initial_cash > 0"));
    }
    let tickers: Vec<String> = table.series.keys().cloned().collect();
    let index: HashMap<&str, usize> = tickers.iter().enumerate().map(|(i, t)| (t.as_str(), i)).collect();
    let label = |t: usize| table.labels.get(t).cloned().unwrap_or_else(|| format!("#{t}"));
    let mut curve = EquityCurve {
        tickers: tickers.clone(),
        start_label: label(decisions.start),
        initial_value: config.initial_cash,
        points: Vec::new(),
        ruined: false,
    };
    let mut state = PortfolioState::all_cash(decisions.start, config.initial_cash, tickers.len());
    let mut previous_target = vec![0.0; tickers.len()];

    for t in decisions {
        if t + 1 >= table.period_count() {
            return Err(Error::Gap(format!("{} (no following period to realize returns)", label(t))));
        }
        let section = build_cross_section(table, t);
        if section.len() < 2 {
            return Err(Error::Gap(format!(
                "{} ({} complete windows, need at least 2)",
                label(t),
                section.len()
            )));
        }
        let local = choose(&section)?;
        let mut target = vec![0.0; tickers.len()];
        for (w, x) in section.windows.iter().zip(&local) {
            target[index[w.ticker.as_str()]] = *x;
        }
        let returns: Vec<f64> = tickers
            .iter()
            .zip(&target)
            .map(|(tk, &w)| match table.valid_return(tk, t + 1) {
                Some(r) => r,
                None => {
                    if w > 0.0 {
                        log::warn!("{tk} has no return in {}; held at zero", label(t + 1));
                    }
                    0.0
                }
            })
            .collect();
        let start_value = state.value;
        let step = step_portfolio(&state, &target, &returns, config.fee_rate)?;
        let turnover = 0.5 * target.iter().zip(&previous_target).map(|(a, b)| (a - b).abs()).sum::<f64>();
        curve.points.push(EquityPoint {
            decision_time: t,
            timestamp: label(t + 1),
            start_value,
            value: step.state.value,
            period_return: step.state.value / start_value - 1.0,
            fee: step.fee,
            turnover,
            weights: target.clone(),
        });
        previous_target = target;
        state = step.state;
        if state.value <= 0.0 {
            log::warn!("portfolio ruined in {}", label(t + 1));
            curve.ruined = true;
            break;
        }
    }
    Ok(curve)
}

/// Runs the sort-select-rebalance loop for every decision period in
/// `decisions`, holding each portfolio over the following period.
pub fn run_backtest<P: Predictor + ?Sized>(
    predictor: &P,
    table: &PeriodTable,
    decisions: Range<usize>,
    scheme: &LabelScheme,
    config: &StrategyConfig,
) -> Result<EquityCurve> {
    config.validate(scheme.bins())?;
    let phi = config.phi(scheme.bins())?;
    let mut previous: HashMap<String, LabelVector> = HashMap::new();
    simulate(table, decisions, config, |section| {
        let normalized = normalize_cross_section(section)?;
        let preds = predictor.predict(&normalized)?;
        if preds.len() != section.len() {
            return Err(Error::Contract(format!(
                "predictor returned {} rows for {} stocks",
                preds.len(),
                section.len()
            )));
        }
        let labels = sort_label(&preds, scheme)?;
        let prev: Option<Vec<LabelVector>> = (!previous.is_empty()).then(|| {
            section
                .tickers()
                .map(|tk| previous.get(tk).cloned().unwrap_or_else(|| LabelVector::null(scheme.bins())))
                .collect()
        });
        let weights = compute_weights(prev.as_deref(), &labels, &phi, config.require_persistence);
        previous = section.tickers().map(str::to_string).zip(labels).collect();
        Ok(weights)
    })
}

/// Equal weight on every stock of each cross-section, with the same fees.
pub fn run_benchmark(
    table: &PeriodTable,
    decisions: Range<usize>,
    config: &StrategyConfig,
) -> Result<EquityCurve> {
    simulate(table, decisions, config, |section| {
        Ok(vec![1.0 / section.len() as f64; section.len()])
    })
}

/// Day-by-day portfolio returns implied by the curve's holdings.
///
/// Within a holding period positions drift with their daily closes (last
/// close carried over untraded days) and the rebalance fee lands on the
/// first day, so the daily returns of a period compound to its period
/// return.
pub fn daily_portfolio_returns(
    panel: &Panel,
    table: &PeriodTable,
    curve: &EquityCurve,
) -> Result<Vec<f64>> {
    let mut dates: Vec<_> = panel.series().values().flatten().map(|b| b.date).collect();
    dates.sort_unstable();
    dates.dedup();
    let mut out = Vec::new();
    for p in &curve.points {
        let held = p.decision_time + 1;
        let days: Vec<_> = dates.iter().copied().filter(|&d| table.period_of(d) == Some(held)).collect();
        let invested = p.start_value - p.fee;
        let cash = (1.0 - p.weights.iter().sum::<f64>()).max(0.0);
        // (weight, entry close, closes on each day)
        let mut legs = Vec::new();
        for (tk, &w) in curve.tickers.iter().zip(&p.weights) {
            if w == 0.0 {
                continue;
            }
            let bars = panel
                .bars(tk)
                .ok_or_else(|| Error::Data(format!("{tk} is held but missing from the panel")))?;
            let before = bars.partition_point(|b| table.period_of(b.date).is_some_and(|q| q < held));
            let entry = before
                .checked_sub(1)
                .map(|i| bars[i].close_adj)
                .ok_or_else(|| Error::Data(format!("{tk} has no close before {}", p.timestamp)))?;
            let mut j = before;
            let mut last = entry;
            let closes: Vec<f64> = days
                .iter()
                .map(|&d| {
                    while j < bars.len() && bars[j].date <= d {
                        last = bars[j].close_adj;
                        j += 1;
                    }
                    last
                })
                .collect();
            legs.push((w, entry, closes));
        }
        let mut prev = p.start_value;
        for k in 0..days.len() {
            let v = invested * (cash + legs.iter().map(|(w, e, c)| w * c[k] / e).sum::<f64>());
            out.push(v / prev - 1.0);
            prev = v;
        }
        if days.is_empty() {
            out.push(p.value / p.start_value - 1.0);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labeling::Fraction;

    fn scheme(bins: usize, f: &str) -> LabelScheme {
        LabelScheme::new(bins, f.parse::<Fraction>().unwrap(), false).unwrap()
    }

    fn firsts(xs: &[f64]) -> Vec<Vec<f64>> {
        xs.iter().map(|&x| vec![x, 1.0 - x]).collect()
    }

    #[test]
    fn one_stock_per_bin() {
        let labels = sort_label(&firsts(&[0.5, 0.1, 0.9, 0.3, 0.7]), &scheme(5, "0.2")).unwrap();
        let bins: Vec<usize> = labels.iter().map(|l| l.active().unwrap()).collect();
        assert_eq!(bins, [2, 0, 4, 1, 3]);
    }

    #[test]
    fn ties_land_in_top_bin() {
        let labels = sort_label(&firsts(&[0.4; 6]), &scheme(3, "1/3")).unwrap();
        assert!(labels.iter().all(|l| l.active() == Some(2)));
        let w = compute_weights(None, &labels, &[true, false, false], false);
        assert!(w.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn weights_examples() {
        let s = scheme(3, "1/3");
        let phi = [true, false, false];
        let one = [LabelVector::one_hot(0, 3), LabelVector::one_hot(2, 3), LabelVector::null(3)];
        assert_eq!(compute_weights(None, &one, &phi, false), [1.0, 0.0, 0.0]);
        let two = [LabelVector::one_hot(0, 3), LabelVector::one_hot(0, 3), LabelVector::one_hot(1, 3)];
        assert_eq!(compute_weights(None, &two, &phi, false), [0.5, 0.5, 0.0]);
        // persistence keeps only names selected twice in a row
        let prev = [LabelVector::one_hot(1, 3), LabelVector::one_hot(0, 3), LabelVector::one_hot(0, 3)];
        assert_eq!(compute_weights(Some(&prev), &two, &phi, true), [0.0, 1.0, 0.0]);
        // without a previous period persistence falls back to the current pick
        assert_eq!(compute_weights(None, &two, &phi, true), [0.5, 0.5, 0.0]);
        assert_eq!(s.bins(), 3);
    }

    #[test]
    fn phi_validation() {
        let c = StrategyConfig::default();
        assert_eq!(c.phi(3).unwrap(), [true, false, false]);
        let bad = |v: Vec<u8>| StrategyConfig {
            selection: Some(v),
            ..StrategyConfig::default()
        };
        assert!(bad(vec![1, 1, 1]).phi(3).is_err());
        assert!(bad(vec![0, 0, 0]).phi(3).is_err());
        assert!(bad(vec![1, 0]).phi(3).is_err());
        assert!(bad(vec![2, 0, 0]).phi(3).is_err());
        assert_eq!(bad(vec![1, 1, 0, 0, 0]).phi(5).unwrap().iter().filter(|&&x| x).count(), 2);
    }

    #[test]
    fn step_examples() {
        let cash = PortfolioState::all_cash(0, 100.0, 2);
        let s = step_portfolio(&cash, &[1.0, 0.0], &[0.10, 0.5], 0.0).unwrap();
        assert!((s.state.value - 110.0).abs() < 1e-12);
        assert_eq!(s.state.weights, [1.0, 0.0]);

        let s = step_portfolio(&cash, &[1.0, 0.0], &[0.0, 0.0], 0.003).unwrap();
        assert!((s.state.value - 99.7).abs() < 1e-12);
        assert!((s.fee - 0.3).abs() < 1e-12);

        let held = PortfolioState {
            period: 3,
            value: 50.0,
            weights: vec![0.25, 0.75],
        };
        let s = step_portfolio(&held, &[0.25, 0.75], &[0.0, 0.0], 0.003).unwrap();
        assert_eq!(s.state.value, 50.0);
        assert_eq!(s.fee, 0.0);
    }

    #[test]
    fn step_rejects_bad_inputs() {
        let cash = PortfolioState::all_cash(0, 1.0, 2);
        assert!(step_portfolio(&cash, &[0.7, 0.7], &[0.0, 0.0], 0.0).is_err());
        assert!(step_portfolio(&cash, &[-0.1, 0.5], &[0.0, 0.0], 0.0).is_err());
        assert!(step_portfolio(&cash, &[0.5, 0.5], &[-1.0, 0.0], 0.0).is_err());
        assert!(step_portfolio(&cash, &[1.0], &[0.0], 0.0).is_err());
    }

    #[test]
    fn drifted_weights_follow_returns() {
        let cash = PortfolioState::all_cash(0, 1.0, 2);
        let s = step_portfolio(&cash, &[0.5, 0.5], &[1.0, 0.0], 0.0).unwrap();
        // 0.5·2 = 1.0 and 0.5·1 = 0.5 of a 1.5 total
        assert!((s.state.weights[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((s.state.weights[1] - 1.0 / 3.0).abs() < 1e-15);
        // rebalancing back to 50/50 trades 1/3 of the value
        let s2 = step_portfolio(&s.state, &[0.5, 0.5], &[0.0, 0.0], 0.01).unwrap();
        assert!((s2.fee - 0.01 * (1.0 / 3.0) * 1.5).abs() < 1e-15);
    }
}
