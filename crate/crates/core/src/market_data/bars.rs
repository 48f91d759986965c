use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CSV_HEADER: [&str; 4] = ["ticker", "date", "close_adj", "turnover_rate"];

/// One stock on one trading day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailyBar {
    pub ticker: String,
    pub date: NaiveDate,
    /// Adjusted close, strictly positive.
    pub close_adj: f64,
    /// Fraction of float traded that day (0.013 = 1.3%).
    pub turnover_rate: f64,
}

impl DailyBar {
    fn check(&self) -> std::result::Result<(), String> {
        if self.ticker.is_empty() {
            return Err("empty ticker".into());
        }
        if !(self.close_adj.is_finite() && self.close_adj > 0.0) {
            return Err(format!("close_adj must be positive, got {}", self.close_adj));
        }
        if !(self.turnover_rate.is_finite() && self.turnover_rate >= 0.0) {
            return Err(format!(
                "turnover_rate must be non-negative, got {}",
                self.turnover_rate
            ));
        }
        Ok(())
    }
}

/// Daily bars grouped by ticker, each series sorted by date.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Panel {
    series: BTreeMap<String, Vec<DailyBar>>,
}

impl Panel {
    /// Groups and sorts bars; rejects duplicate `(ticker, date)` keys and
    /// invalid prices.
    pub fn from_bars(bars: impl IntoIterator<Item = DailyBar>) -> Result<Self> {
        let mut series: BTreeMap<String, Vec<DailyBar>> = BTreeMap::new();
        for bar in bars {
            bar.check().map_err(Error::Data)?;
            series.entry(bar.ticker.clone()).or_default().push(bar);
        }
        for (ticker, bars) in &mut series {
            bars.sort_by_key(|b| b.date);
            if let Some(w) = bars.windows(2).find(|w| w[0].date == w[1].date) {
                return Err(Error::Data(format!(
                    "duplicate bar for {ticker} on {}",
                    w[0].date
                )));
            }
        }
        Ok(Self { series })
    }

    pub fn tickers(&self) -> impl Iterator<Item = &str> {
        self.series.keys().map(String::as_str)
    }

    pub fn series(&self) -> &BTreeMap<String, Vec<DailyBar>> {
        &self.series
    }

    pub fn bars(&self, ticker: &str) -> Option<&[DailyBar]> {
        self.series.get(ticker).map(Vec::as_slice)
    }

    pub fn ticker_count(&self) -> usize {
        self.series.len()
    }

    pub fn bar_count(&self) -> usize {
        self.series.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.series.is_empty()
    }

    pub fn date_range(&self) -> Option<(NaiveDate, NaiveDate)> {
        let first = self.series.values().filter_map(|s| s.first()).map(|b| b.date).min()?;
        let last = self.series.values().filter_map(|s| s.last()).map(|b| b.date).max()?;
        Some((first, last))
    }

    /// Writes the panel in the ingest CSV schema, ticker-major.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(CSV_HEADER)?;
        for bar in self.series.values().flatten() {
            w.write_record([
                bar.ticker.as_str(),
                &bar.date.format("%Y-%m-%d").to_string(),
                &bar.close_adj.to_string(),
                &bar.turnover_rate.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }
}

/// Reads `ticker,date,close_adj,turnover_rate` rows from a file.
pub fn ingest_daily_csv(path: impl AsRef<Path>) -> Result<Panel> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_daily_csv(std::io::BufReader::new(file))
}

pub fn read_daily_csv<R: Read>(reader: R) -> Result<Panel> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header = rdr.headers()?.clone();
    let names: Vec<&str> = header.iter().map(str::trim).collect();
    if names != CSV_HEADER {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header {}, got {}", CSV_HEADER.join(","), names.join(",")),
        });
    }

    let mut bars = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let bar = parse_row(&record).map_err(|message| Error::Parse { line, message })?;
        bar.check().map_err(|message| Error::Parse { line, message })?;
        bars.push(bar);
    }
    Panel::from_bars(bars)
}

fn parse_row(record: &csv::StringRecord) -> std::result::Result<DailyBar, String> {
    if record.len() != 4 {
        return Err(format!("expected 4 fields, got {}", record.len()));
    }
    let field = |i: usize| record.get(i).unwrap_or_default().trim();
    let date = NaiveDate::parse_from_str(field(1), "%Y-%m-%d")
        .map_err(|e| format!("bad date {:?}: {e}", field(1)))?;
    let close_adj = field(2)
        .parse::<f64>()
        .map_err(|e| format!("bad close_adj {:?}: {e}", field(2)))?;
    let turnover_rate = field(3)
        .parse::<f64>()
        .map_err(|e| format!("bad turnover_rate {:?}: {e}", field(3)))?;
    Ok(DailyBar {
        ticker: field(0).to_string(),
        date,
        close_adj,
        turnover_rate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "ticker,date,close_adj,turnover_rate\n";

    #[test]
    fn two_valid_rows() {
        let csv = format!("{HEADER}AAA,2020-01-03,10.5,0.01\nAAA,2020-01-02,10.0,0.02\n");
        let panel = read_daily_csv(csv.as_bytes()).unwrap();
        assert_eq!(panel.ticker_count(), 1);
        let bars = panel.bars("AAA").unwrap();
        assert_eq!(bars.len(), 2);
        assert!(bars[0].date < bars[1].date);
    }

    #[test]
    fn negative_close_is_a_parse_error_with_line() {
        let csv = format!("{HEADER}AAA,2020-01-02,10.0,0.02\nAAA,2020-01-03,-1,0.01\n");
        match read_daily_csv(csv.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_fields_are_rejected() {
        for row in ["AAA,2020-13-01,1,0", "AAA,2020-01-01,abc,0", "AAA,2020-01-01,1,-0.1"] {
            let csv = format!("{HEADER}{row}\n");
            assert!(matches!(read_daily_csv(csv.as_bytes()), Err(Error::Parse { .. })), "{row}");
        }
    }

    #[test]
    fn duplicate_key_is_a_data_error() {
        let csv = format!("{HEADER}AAA,2020-01-02,10,0\nAAA,2020-01-02,11,0\n");
        assert!(matches!(read_daily_csv(csv.as_bytes()), Err(Error::Data(_))));
    }

    #[test]
    fn wrong_header_is_rejected() {
        let csv = "ticker,day,close,turnover\nAAA,2020-01-02,10,0\n";
        assert!(matches!(read_daily_csv(csv.as_bytes()), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn three_tickers_thirty_days() {
        let mut csv = String::from(HEADER);
        let start = NaiveDate::from_ymd_opt(2021, 3, 1).unwrap();
        // rows deliberately emitted newest-first and interleaved
        for day in (0..30).rev() {
            for t in ["CCC", "AAA", "BBB"] {
                let d = start + chrono::Days::new(day);
                csv.push_str(&format!("{t},{d},{},0.01\n", 10.0 + day as f64));
            }
        }
        let panel = read_daily_csv(csv.as_bytes()).unwrap();
        assert_eq!(panel.bar_count(), 90);
        assert_eq!(panel.tickers().collect::<Vec<_>>(), ["AAA", "BBB", "CCC"]);
        for bars in panel.series().values() {
            assert_eq!(bars.len(), 30);
            assert!(bars.windows(2).all(|w| w[0].date < w[1].date));
        }
    }

    #[test]
    fn csv_round_trip() {
        let csv = format!("{HEADER}AAA,2020-01-02,10.123456789,0.0125\nBBB,2020-01-02,3,0\n");
        let panel = read_daily_csv(csv.as_bytes()).unwrap();
        let mut out = Vec::new();
        panel.write_csv(&mut out).unwrap();
        assert_eq!(read_daily_csv(out.as_slice()).unwrap(), panel);
    }
}
