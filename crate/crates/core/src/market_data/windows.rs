use crate::error::{Error, Result};

use super::periods::PeriodTable;

/// Number of consecutive periods in a feature window.
pub const WINDOW_LEN: usize = 20;

/// Features per period: accumulated return, accumulated turnover.
pub const FEATURES: usize = 2;

pub type WindowMatrix = [[f64; FEATURES]; WINDOW_LEN];

/// The 20×2 feature matrix of one stock at one decision time, oldest row
/// first.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureWindow {
    pub ticker: String,
    pub decision_time: usize,
    pub matrix: WindowMatrix,
    pub complete: bool,
}

/// All feature windows sharing one decision time.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossSection {
    pub decision_time: usize,
    pub windows: Vec<FeatureWindow>,
    pub normalized: bool,
}

impl CrossSection {
    pub fn new(decision_time: usize, windows: Vec<FeatureWindow>) -> Self {
        Self {
            decision_time,
            windows,
            normalized: false,
        }
    }

    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    pub fn tickers(&self) -> impl Iterator<Item = &str> {
        self.windows.iter().map(|w| w.ticker.as_str())
    }
}

/// Windows for every ticker with 20 consecutive valid periods ending at
/// `t`. Tickers with any untraded period in the span are left out.
pub fn build_windows(table: &PeriodTable, t: usize) -> Vec<FeatureWindow> {
    if t + 1 < WINDOW_LEN || t >= table.period_count() {
        return Vec::new();
    }
    let first = t + 1 - WINDOW_LEN;
    table
        .series
        .iter()
        .filter_map(|(ticker, records)| {
            let span = &records[first..=t];
            if !span.iter().all(|r| r.valid) {
                return None;
            }
            let mut matrix = [[0.0; FEATURES]; WINDOW_LEN];
            for (row, rec) in matrix.iter_mut().zip(span) {
                *row = [rec.r, rec.v];
            }
            Some(FeatureWindow {
                ticker: ticker.clone(),
                decision_time: t,
                matrix,
                complete: true,
            })
        })
        .collect()
}

pub fn build_cross_section(table: &PeriodTable, t: usize) -> CrossSection {
    CrossSection::new(t, build_windows(table, t))
}

/// Z-scores each (time step, feature) slice across the stocks of a section.
///
/// Uses the population standard deviation. A slice with no spread maps to
/// zero.
pub fn normalize_cross_section(section: &CrossSection) -> Result<CrossSection> {
    let n = section.windows.len();
    if n < 2 {
        return Err(Error::DegenerateSection(format!(
            "period {} has {n} stock(s); normalization needs at least 2",
            section.decision_time
        )));
    }
    let nf = n as f64;
    let mut out = section.clone();
    for step in 0..WINDOW_LEN {
        for feature in 0..FEATURES {
            let values = || section.windows.iter().map(|w| w.matrix[step][feature]);
            let mean = values().sum::<f64>() / nf;
            let var = values().map(|x| (x - mean) * (x - mean)).sum::<f64>() / nf;
            let std = var.sqrt();
            let flat = std <= 1e-12 * (1.0 + mean.abs());
            for w in &mut out.windows {
                let x = &mut w.matrix[step][feature];
                *x = if flat { 0.0 } else { (*x - mean) / std };
            }
        }
    }
    out.normalized = true;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market_data::{Frequency, PeriodRecord};
    use std::collections::BTreeMap;

    /// `(return, turnover)` per period, `None` for a non-trading period.
    type Rows<'a> = [(&'a str, Vec<Option<(f64, f64)>>)];

    fn table(rows: &Rows) -> PeriodTable {
        let periods = rows[0].1.len();
        let mut series = BTreeMap::new();
        for (ticker, recs) in rows {
            let v = recs
                .iter()
                .enumerate()
                .map(|(t, rv)| match rv {
                    Some((r, v)) => PeriodRecord {
                        ticker: ticker.to_string(),
                        period_index: t,
                        r: *r,
                        v: *v,
                        valid: true,
                    },
                    None => PeriodRecord {
                        ticker: ticker.to_string(),
                        period_index: t,
                        r: f64::NAN,
                        v: f64::NAN,
                        valid: false,
                    },
                })
                .collect();
            series.insert(ticker.to_string(), v);
        }
        PeriodTable {
            frequency: Frequency::Monthly,
            labels: (0..periods).map(|t| t.to_string()).collect(),
            series,
        }
    }

    fn ramp(n: usize) -> Vec<Option<(f64, f64)>> {
        (0..n).map(|t| Some((t as f64 * 0.01, t as f64))).collect()
    }

    #[test]
    fn insufficient_history_is_omitted() {
        let mut short = ramp(25);
        for slot in short.iter_mut().take(6) {
            *slot = None;
        }
        let tb = table(&[("A", ramp(25)), ("B", short)]);
        // B trades from period 6: 19 valid periods up to t = 24
        let w = build_windows(&tb, 24);
        assert_eq!(w.len(), 1);
        assert_eq!(w[0].ticker, "A");
        assert!(build_windows(&tb, 18).is_empty());
    }

    #[test]
    fn window_rows_are_oldest_first() {
        let tb = table(&[("A", ramp(30))]);
        let w = &build_windows(&tb, 24)[0];
        assert_eq!(w.matrix[0], [5.0 * 0.01, 5.0]);
        assert_eq!(w.matrix[19], [24.0 * 0.01, 24.0]);
        assert!(w.complete);
    }

    #[test]
    fn gap_inside_window_omits_ticker() {
        let mut gappy = ramp(30);
        gappy[24 - 7] = None;
        let tb = table(&[("A", ramp(30)), ("B", gappy)]);
        let tickers: Vec<_> = build_windows(&tb, 24).into_iter().map(|w| w.ticker).collect();
        assert_eq!(tickers, ["A"]);
    }

    fn section_with(values: &[f64]) -> CrossSection {
        let windows = values
            .iter()
            .enumerate()
            .map(|(i, &x)| FeatureWindow {
                ticker: format!("S{i}"),
                decision_time: 0,
                matrix: [[x, 2.0 * x]; WINDOW_LEN],
                complete: true,
            })
            .collect();
        CrossSection::new(0, windows)
    }

    #[test]
    fn two_stocks_map_to_plus_minus_one() {
        let s = normalize_cross_section(&section_with(&[1.0, 3.0])).unwrap();
        assert!(s.normalized);
        assert_eq!(s.windows[0].matrix[5], [-1.0, -1.0]);
        assert_eq!(s.windows[1].matrix[5], [1.0, 1.0]);
    }

    #[test]
    fn identical_values_normalize_to_zero() {
        let s = normalize_cross_section(&section_with(&[0.1, 0.1, 0.1])).unwrap();
        for w in &s.windows {
            assert!(w.matrix.iter().flatten().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn single_stock_is_degenerate() {
        assert!(matches!(
            normalize_cross_section(&section_with(&[1.0])),
            Err(Error::DegenerateSection(_))
        ));
    }
}
