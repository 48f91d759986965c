//! Seeded synthetic markets with a plantable cross-sectional signal.
//!
//! Each period's turnover is drawn first. The next period's returns are
//! then drawn i.i.d. and handed out by rank of a score that mixes the
//! signal rule with noise, so at full signal strength the ranking of next
//! returns is fixed exactly by the rule.

use chrono::{Datelike, Days, Months, NaiveDate, Weekday};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market_data::{DailyBar, Frequency, Panel, WINDOW_LEN};

/// Which trailing quantity decides the next period's return ranking.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalRule {
    /// Cross-sectional z-score of the last period's turnover.
    LastTurnover,
    /// Mean z-scored turnover over the trailing window.
    WindowMeanTurnover,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub seed: u64,
    pub stocks: usize,
    pub periods: usize,
    /// Granularity at which returns and the signal are generated.
    pub frequency: Frequency,
    /// Standard deviation of per-period log returns.
    pub base_volatility: f64,
    /// Mean per-period log return.
    pub drift: f64,
    /// Mean per-period turnover fraction.
    pub turnover_level: f64,
    pub signal_strength: f64,
    pub signal_rule: SignalRule,
    pub start: NaiveDate,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            stocks: 50,
            periods: 120,
            frequency: Frequency::Monthly,
            base_volatility: 0.08,
            drift: 0.005,
            turnover_level: 0.2,
            signal_strength: 1.0,
            signal_rule: SignalRule::LastTurnover,
            start: NaiveDate::from_ymd_opt(2010, 1, 1).expect("valid date"),
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.stocks < 2 {
            return Err(Error::config("stocks", "need at least 2 stocks"));
        }
        if self.periods < WINDOW_LEN + 5 {
            return Err(Error::config("periods", format!("need at least {} periods", WINDOW_LEN + 5)));
        }
        if !(0.0..=1.0).contains(&self.signal_strength) {
            return Err(Error::config("signal_strength", "must lie in [0, 1]"));
        }
        if !(self.base_volatility >= 0.0 && self.base_volatility.is_finite()) {
            return Err(Error::config("base_volatility", "must be finite and non-negative"));
        }
        if !(self.turnover_level > 0.0 && self.turnover_level.is_finite()) {
            return Err(Error::config("turnover_level", "must be positive"));
        }
        Ok(())
    }
}

fn weekdays(from: NaiveDate, until_exclusive: NaiveDate) -> Vec<NaiveDate> {
    from.iter_days()
        .take_while(|d| *d < until_exclusive)
        .filter(|d| !matches!(d.weekday(), Weekday::Sat | Weekday::Sun))
        .collect()
}

/// Trading days of each generated period.
fn period_days(spec: &SyntheticSpec) -> Vec<Vec<NaiveDate>> {
    let mut out = Vec::with_capacity(spec.periods);
    match spec.frequency {
        Frequency::Monthly => {
            let mut m = spec.start.with_day(1).expect("day 1");
            while out.len() < spec.periods {
                let next = m + Months::new(1);
                let days = weekdays(m.max(spec.start), next);
                if !days.is_empty() {
                    out.push(days);
                }
                m = next;
            }
        }
        Frequency::Weekly => {
            let mut m = spec.start - Days::new(u64::from(spec.start.weekday().num_days_from_monday()));
            while out.len() < spec.periods {
                let next = m + Days::new(7);
                let days = weekdays(m.max(spec.start), next);
                if !days.is_empty() {
                    out.push(days);
                }
                m = next;
            }
        }
        Frequency::Daily => {
            let mut d = spec.start;
            while out.len() < spec.periods {
                if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
                    out.push(vec![d]);
                }
                d = d + Days::new(1);
            }
        }
    }
    out
}

fn zscores(x: &[f64]) -> Vec<f64> {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let std = (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    if std == 0.0 {
        return vec![0.0; x.len()];
    }
    x.iter().map(|v| (v - mean) / std).collect()
}

/// Per-period turnover and return matrices, `[stock][period]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodPaths {
    pub turnover: Vec<Vec<f64>>,
    pub returns: Vec<Vec<f64>>,
}

impl PeriodPaths {
    /// Rule value per stock at period `t`; higher means a higher next
    /// return at full signal strength.
    pub fn rule_value(&self, rule: SignalRule, t: usize) -> Vec<f64> {
        let column = |s: usize| -> Vec<f64> { self.turnover.iter().map(|row| row[s]).collect() };
        match rule {
            SignalRule::LastTurnover => zscores(&column(t)),
            SignalRule::WindowMeanTurnover => {
                let first = (t + 1).saturating_sub(WINDOW_LEN);
                let mut acc = vec![0.0; self.turnover.len()];
                for s in first..=t {
                    for (a, z) in acc.iter_mut().zip(zscores(&column(s))) {
                        *a += z;
                    }
                }
                acc
            }
        }
    }
}

/// Turnover and returns at `spec.frequency`.
pub fn generate_paths(spec: &SyntheticSpec) -> Result<PeriodPaths> {
    spec.validate()?;
    let (n, periods) = (spec.stocks, spec.periods);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut paths = PeriodPaths {
        turnover: vec![vec![0.0; periods]; n],
        returns: vec![vec![0.0; periods]; n],
    };
    let mut perm: Vec<usize> = (0..n).collect();
    let draw_return = |rng: &mut ChaCha8Rng| {
        let z: f64 = StandardNormal.sample(rng);
        (spec.drift + spec.base_volatility * z).exp() - 1.0
    };

    for t in 0..periods {
        // jittered stratified draw: turnover levels spread evenly over the
        // cross-section every period
        perm.shuffle(&mut rng);
        for (stock, &slot) in perm.iter().enumerate() {
            let u: f64 = rng.random();
            paths.turnover[stock][t] = spec.turnover_level * (0.5 + (slot as f64 + u) / n as f64);
        }

        let mut draws: Vec<f64> = (0..n).map(|_| draw_return(&mut rng)).collect();
        if t == 0 {
            for (stock, r) in draws.into_iter().enumerate() {
                paths.returns[stock][0] = r;
            }
            continue;
        }
        draws.sort_by(f64::total_cmp);
        let signal = paths.rule_value(spec.signal_rule, t - 1);
        let noise: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let noise = zscores(&noise);
        let s = spec.signal_strength;
        let score: Vec<f64> = signal
            .iter()
            .zip(&noise)
            .map(|(a, b)| s * a + (1.0 - s) * b)
            .collect();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| score[a].total_cmp(&score[b]).then(a.cmp(&b)));
        for (rank, stock) in order.into_iter().enumerate() {
            paths.returns[stock][t] = draws[rank];
        }
    }
    Ok(paths)
}

/// Daily bars whose period aggregates reproduce [`generate_paths`].
pub fn generate_universe(spec: &SyntheticSpec) -> Result<Panel> {
    let paths = generate_paths(spec)?;
    let days = period_days(spec);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x9e37_79b9_7f4a_7c15);
    let width = spec.stocks.to_string().len().max(3);
    let mut bars = Vec::new();

    for stock in 0..spec.stocks {
        let ticker = format!("S{stock:0width$}");
        let z: f64 = StandardNormal.sample(&mut rng);
        let mut price = 20.0 * (0.5 * z).exp();
        for (t, period) in days.iter().enumerate() {
            let k = period.len();
            let target = (1.0 + paths.returns[stock][t]).ln();
            let shocks: Vec<f64> = (0..k).map(|_| StandardNormal.sample(&mut rng)).collect();
            let mean_shock = shocks.iter().sum::<f64>() / k as f64;
            let daily_sigma = spec.base_volatility / (k as f64).sqrt();
            let weights: Vec<f64> = (0..k).map(|_| rng.random_range(0.5..1.5)).collect();
            let weight_sum: f64 = weights.iter().sum();
            let log_start = price.ln();
            let mut cumulative = 0.0;
            for (i, date) in period.iter().enumerate() {
                cumulative += daily_sigma * (shocks[i] - mean_shock) + target / k as f64;
                // the last close lands on the period target up to rounding
                let close = if i + 1 == k {
                    (log_start + target).exp()
                } else {
                    (log_start + cumulative).exp()
                };
                bars.push(DailyBar {
                    ticker: ticker.clone(),
                    date: *date,
                    close_adj: close,
                    turnover_rate: paths.turnover[stock][t] * weights[i] / weight_sum,
                });
            }
            price = (log_start + target).exp();
        }
    }
    Panel::from_bars(bars)
}

/// Spearman rank correlation (average ranks for ties).
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    fn ranks(x: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..x.len()).collect();
        idx.sort_by(|&i, &j| x[i].total_cmp(&x[j]));
        let mut r = vec![0.0; x.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0;
            for &k in &idx[i..=j] {
                r[k] = avg;
            }
            i = j + 1;
        }
        r
    }
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}
