use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use chrono::{Datelike, Days, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::bars::Panel;

/// Sampling frequency of period records.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Frequency {
    Monthly,
    Weekly,
    Daily,
}

impl Frequency {
    pub fn periods_per_year(self) -> u32 {
        match self {
            Frequency::Monthly => 12,
            Frequency::Weekly => 52,
            Frequency::Daily => 252,
        }
    }

    /// Calendar label of the period containing `date`.
    pub fn label(self, date: NaiveDate) -> String {
        match self {
            Frequency::Monthly => format!("{:04}-{:02}", date.year(), date.month()),
            Frequency::Weekly => {
                let w = date.iso_week();
                format!("{:04}-W{:02}", w.year(), w.week())
            }
            Frequency::Daily => date.format("%Y-%m-%d").to_string(),
        }
    }
}

impl fmt::Display for Frequency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Frequency::Monthly => "monthly",
            Frequency::Weekly => "weekly",
            Frequency::Daily => "daily",
        })
    }
}

impl FromStr for Frequency {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "monthly" | "month" => Ok(Frequency::Monthly),
            "weekly" | "week" => Ok(Frequency::Weekly),
            "daily" | "day" => Ok(Frequency::Daily),
            other => Err(Error::config("frequency", format!("unknown frequency {other:?}"))),
        }
    }
}

/// One stock over one period.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodRecord {
    pub ticker: String,
    pub period_index: usize,
    /// Accumulated return over the period (NaN when invalid).
    pub r: f64,
    /// Accumulated turnover over the period (NaN when invalid).
    pub v: f64,
    /// False when the stock did not trade at all in the period.
    pub valid: bool,
}

impl PeriodRecord {
    fn missing(ticker: &str, period_index: usize) -> Self {
        Self {
            ticker: ticker.to_string(),
            period_index,
            r: f64::NAN,
            v: f64::NAN,
            valid: false,
        }
    }
}

/// Period records for every ticker over one shared calendar.
///
/// Every series has exactly `labels.len()` entries, indexed by period.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodTable {
    pub frequency: Frequency,
    pub labels: Vec<String>,
    pub series: BTreeMap<String, Vec<PeriodRecord>>,
}

impl PeriodTable {
    pub fn period_count(&self) -> usize {
        self.labels.len()
    }

    pub fn record(&self, ticker: &str, t: usize) -> Option<&PeriodRecord> {
        self.series.get(ticker).and_then(|s| s.get(t))
    }

    /// Index of the period containing `date`, if it is on the calendar.
    pub fn period_of(&self, date: NaiveDate) -> Option<usize> {
        self.labels.binary_search(&self.frequency.label(date)).ok()
    }

    /// Realized return of `ticker` over period `t`, if it traded.
    pub fn valid_return(&self, ticker: &str, t: usize) -> Option<f64> {
        self.record(ticker, t).filter(|r| r.valid).map(|r| r.r)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["ticker", "period_index", "period_label", "r", "v", "valid"])?;
        for rec in self.series.values().flatten() {
            w.write_record([
                rec.ticker.clone(),
                rec.period_index.to_string(),
                self.labels[rec.period_index].clone(),
                rec.r.to_string(),
                rec.v.to_string(),
                rec.valid.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R, frequency: Frequency) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let mut series: BTreeMap<String, Vec<PeriodRecord>> = BTreeMap::new();
        let mut labels: BTreeMap<usize, String> = BTreeMap::new();
        for row in rdr.records() {
            let row = row?;
            let line = row.position().map_or(0, |p| p.line());
            let bad = |m: &str| Error::Parse {
                line,
                message: m.to_string(),
            };
            let get = |i: usize| row.get(i).ok_or_else(|| bad("missing field"));
            let period_index: usize = get(1)?.parse().map_err(|_| bad("bad period_index"))?;
            let rec = PeriodRecord {
                ticker: get(0)?.to_string(),
                period_index,
                r: get(3)?.parse().map_err(|_| bad("bad r"))?,
                v: get(4)?.parse().map_err(|_| bad("bad v"))?,
                valid: get(5)?.parse().map_err(|_| bad("bad valid flag"))?,
            };
            labels.entry(period_index).or_insert_with(|| row[2].to_string());
            series.entry(rec.ticker.clone()).or_default().push(rec);
        }
        let count = labels.len();
        if labels.keys().copied().ne(0..count) {
            return Err(Error::Data("period store has non-contiguous indices".into()));
        }
        for (ticker, recs) in &mut series {
            recs.sort_by_key(|r| r.period_index);
            if recs.len() != count {
                return Err(Error::Data(format!(
                    "{ticker} has {} records for {count} periods",
                    recs.len()
                )));
            }
        }
        Ok(Self {
            frequency,
            labels: labels.into_values().collect(),
            series,
        })
    }
}

/// Ordered list of period start dates plus a lookup from any trading date.
fn calendar(panel: &Panel, frequency: Frequency) -> (Vec<String>, HashMap<String, usize>) {
    let mut labels = Vec::new();
    if let Some((first, last)) = panel.date_range() {
        match frequency {
            Frequency::Daily => {
                let mut dates: Vec<NaiveDate> = panel
                    .series()
                    .values()
                    .flatten()
                    .map(|b| b.date)
                    .collect();
                dates.sort_unstable();
                dates.dedup();
                labels = dates.into_iter().map(|d| frequency.label(d)).collect();
            }
            Frequency::Monthly => {
                let mut d = first.with_day(1).expect("day 1 exists");
                while d <= last {
                    labels.push(frequency.label(d));
                    d = d.checked_add_months(chrono::Months::new(1)).expect("in range");
                }
            }
            Frequency::Weekly => {
                let monday = first - Days::new(u64::from(first.weekday().num_days_from_monday()));
                let mut d = monday;
                while d <= last {
                    labels.push(frequency.label(d));
                    d = d + Days::new(7);
                }
            }
        }
    }
    let index = labels.iter().enumerate().map(|(i, l)| (l.clone(), i)).collect();
    (labels, index)
}

/// Aggregates daily bars into period records on a shared calendar.
///
/// The return of a period is measured from the last close before the
/// period to the last close inside it. A stock's first traded period has
/// no earlier close and is measured from its first close in the period.
/// Periods without a single bar are marked invalid.
pub fn aggregate_period(panel: &Panel, frequency: Frequency) -> Result<PeriodTable> {
    if panel.is_empty() {
        return Err(Error::InvalidInput("cannot aggregate an empty panel".into()));
    }
    let (labels, index) = calendar(panel, frequency);
    let mut series = BTreeMap::new();

    for (ticker, bars) in panel.series() {
        let mut records: Vec<PeriodRecord> = (0..labels.len())
            .map(|t| PeriodRecord::missing(ticker, t))
            .collect();
        let mut prior_close: Option<f64> = None;
        let mut i = 0;
        while i < bars.len() {
            let t = index[&frequency.label(bars[i].date)];
            let start = i;
            while i < bars.len() && index[&frequency.label(bars[i].date)] == t {
                i += 1;
            }
            let group = &bars[start..i];
            let reference = prior_close.unwrap_or(group[0].close_adj);
            let close = group[group.len() - 1].close_adj;
            records[t] = PeriodRecord {
                ticker: ticker.clone(),
                period_index: t,
                r: (close - reference) / reference,
                v: group.iter().map(|b| b.turnover_rate).sum(),
                valid: true,
            };
            prior_close = Some(close);
        }
        series.insert(ticker.clone(), records);
    }

    Ok(PeriodTable {
        frequency,
        labels,
        series,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market_data::DailyBar;

    fn bar(t: &str, y: i32, m: u32, d: u32, close: f64, turnover: f64) -> DailyBar {
        DailyBar {
            ticker: t.into(),
            date: NaiveDate::from_ymd_opt(y, m, d).unwrap(),
            close_adj: close,
            turnover_rate: turnover,
        }
    }

    #[test]
    fn monthly_return_uses_last_closes() {
        let panel = Panel::from_bars([
            bar("A", 2020, 1, 30, 95.0, 0.01),
            bar("A", 2020, 1, 31, 100.0, 0.02),
            bar("A", 2020, 2, 3, 104.0, 0.03),
            bar("A", 2020, 2, 28, 110.0, 0.04),
        ])
        .unwrap();
        let table = aggregate_period(&panel, Frequency::Monthly).unwrap();
        assert_eq!(table.labels, ["2020-01", "2020-02"]);
        let feb = table.record("A", 1).unwrap();
        assert!((feb.r - 0.10).abs() < 1e-15);
        assert!((feb.v - 0.07).abs() < 1e-15);
        // listing month: measured from the first close in the month
        let jan = table.record("A", 0).unwrap();
        assert!((jan.r - (100.0 / 95.0 - 1.0)).abs() < 1e-15);
        assert!(jan.valid);
    }

    #[test]
    fn untraded_month_is_invalid() {
        let panel = Panel::from_bars([
            bar("A", 2020, 1, 31, 100.0, 0.01),
            bar("A", 2020, 3, 31, 120.0, 0.01),
            bar("B", 2020, 2, 28, 50.0, 0.01),
        ])
        .unwrap();
        let table = aggregate_period(&panel, Frequency::Monthly).unwrap();
        assert_eq!(table.period_count(), 3);
        let feb = table.record("A", 1).unwrap();
        assert!(!feb.valid);
        assert!(feb.r.is_nan());
        // resumption: measured from the last close before the gap
        assert!((table.record("A", 2).unwrap().r - 0.2).abs() < 1e-15);
    }

    #[test]
    fn daily_frequency_is_single_day() {
        let panel = Panel::from_bars([
            bar("A", 2020, 1, 2, 100.0, 0.01),
            bar("A", 2020, 1, 3, 101.0, 0.02),
            bar("A", 2020, 1, 6, 99.99, 0.03),
        ])
        .unwrap();
        let table = aggregate_period(&panel, Frequency::Daily).unwrap();
        assert_eq!(table.period_count(), 3);
        let r = table.record("A", 2).unwrap();
        assert!((r.r - (99.99 - 101.0) / 101.0).abs() < 1e-15);
        assert_eq!(r.v, 0.03);
    }

    #[test]
    fn weekly_uses_iso_weeks() {
        // 2021-01-01 is a Friday in ISO week 2020-W53
        let panel = Panel::from_bars([
            bar("A", 2021, 1, 1, 10.0, 0.1),
            bar("A", 2021, 1, 4, 11.0, 0.1),
            bar("A", 2021, 1, 8, 12.0, 0.1),
            bar("A", 2021, 1, 11, 12.0, 0.1),
        ])
        .unwrap();
        let table = aggregate_period(&panel, Frequency::Weekly).unwrap();
        assert_eq!(table.labels, ["2020-W53", "2021-W01", "2021-W02"]);
        let w1 = table.record("A", 1).unwrap();
        assert!((w1.r - 0.2).abs() < 1e-15);
        assert!((w1.v - 0.2).abs() < 1e-15);
    }

    #[test]
    fn unknown_frequency_is_a_config_error() {
        assert!(matches!("hourly".parse::<Frequency>(), Err(Error::Config { .. })));
        assert_eq!("Monthly".parse::<Frequency>().unwrap(), Frequency::Monthly);
    }

    #[test]
    fn period_store_round_trips() {
        let panel = Panel::from_bars([
            bar("A", 2020, 1, 31, 100.0, 0.01),
            bar("A", 2020, 3, 31, 120.3, 0.013),
            bar("B", 2020, 2, 28, 50.0, 0.01),
        ])
        .unwrap();
        let table = aggregate_period(&panel, Frequency::Monthly).unwrap();
        let mut buf = Vec::new();
        table.write_csv(&mut buf).unwrap();
        let back = PeriodTable::read_csv(buf.as_slice(), Frequency::Monthly).unwrap();
        assert_eq!(back.labels, table.labels);
        for (a, b) in back.series.values().flatten().zip(table.series.values().flatten()) {
            assert_eq!(a.valid, b.valid);
            assert!(a.r.to_bits() == b.r.to_bits() || (a.r.is_nan() && b.r.is_nan()));
            assert!(a.v.to_bits() == b.v.to_bits() || (a.v.is_nan() && b.v.is_nan()));
        }
    }
}
