//! Empirical-quantile labels for next-period returns.
//!
//! Bin boundaries are evaluated in exact rational arithmetic: the per-bin
//! fraction is kept as a ratio, and an empirical quantile is the ratio
//! `count / n`, so no stock lands on the wrong side of a boundary because
//! of rounding.

use std::fmt;
use std::str::FromStr;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market_data::{
    build_cross_section, normalize_cross_section, CrossSection, FeatureWindow, PeriodTable,
};

pub type Rational = Ratio<i128>;

/// Exact per-bin fraction φ, written as a decimal (`0.2`) or a ratio
/// (`1/3`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Fraction(Rational);

impl Fraction {
    pub fn new(numer: i128, denom: i128) -> Result<Self> {
        if denom == 0 {
            return Err(Error::Scheme("fraction with zero denominator".into()));
        }
        Ok(Self(Rational::new(numer, denom)))
    }

    pub fn ratio(self) -> Rational {
        self.0
    }

    pub fn to_f64(self) -> f64 {
        ratio_to_f64(self.0)
    }
}

pub(crate) fn ratio_to_f64(r: Rational) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

impl FromStr for Fraction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::Scheme(format!("cannot read fraction {s:?}"));
        if let Some((n, d)) = s.split_once('/') {
            let n: i128 = n.trim().parse().map_err(|_| bad())?;
            let d: i128 = d.trim().parse().map_err(|_| bad())?;
            return Fraction::new(n, d);
        }
        let (int, frac) = s.split_once('.').unwrap_or((s, ""));
        if frac.len() > 18 || !frac.chars().all(|c| c.is_ascii_digit()) {
            return Err(bad());
        }
        let scale = 10_i128.pow(frac.len() as u32);
        let int: i128 = if int.is_empty() { 0 } else { int.parse().map_err(|_| bad())? };
        let frac: i128 = if frac.is_empty() { 0 } else { frac.parse().map_err(|_| bad())? };
        Fraction::new(int * scale + frac, scale)
    }
}

impl fmt::Display for Fraction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.0.numer(), self.0.denom())
    }
}

impl Serialize for Fraction {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Fraction {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Number(f64),
            Text(String),
        }
        let text = match Raw::deserialize(d)? {
            // shortest round-trip decimal, e.g. 0.2 -> "0.2"
            Raw::Number(x) => x.to_string(),
            Raw::Text(s) => s,
        };
        text.parse().map_err(serde::de::Error::custom)
    }
}

/// Bin count ϱ, per-bin fraction φ and whether null-labelled samples are
/// kept.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawScheme", into = "RawScheme")]
pub struct LabelScheme {
    bins: usize,
    fraction: Fraction,
    include_null: bool,
}

#[derive(Serialize, Deserialize)]
struct RawScheme {
    bins: usize,
    fraction: Fraction,
    #[serde(default)]
    include_null: bool,
}

impl TryFrom<RawScheme> for LabelScheme {
    type Error = Error;
    fn try_from(r: RawScheme) -> Result<Self> {
        LabelScheme::new(r.bins, r.fraction, r.include_null)
    }
}

impl From<LabelScheme> for RawScheme {
    fn from(s: LabelScheme) -> Self {
        RawScheme {
            bins: s.bins,
            fraction: s.fraction,
            include_null: s.include_null,
        }
    }
}

impl LabelScheme {
    pub fn new(bins: usize, fraction: Fraction, include_null: bool) -> Result<Self> {
        if bins < 3 {
            return Err(Error::Scheme(format!("need at least 3 bins, got {bins}")));
        }
        if fraction.0 <= Rational::from_integer(0) {
            return Err(Error::Scheme(format!("bin fraction must be positive, got {fraction}")));
        }
        boundary_term(bins, fraction)?;
        Ok(Self {
            bins,
            fraction,
            include_null,
        })
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn fraction(&self) -> Fraction {
        self.fraction
    }

    pub fn include_null(&self) -> bool {
        self.include_null
    }

    /// Gap ξ between consecutive bins.
    pub fn gap(&self) -> Rational {
        boundary_term(self.bins, self.fraction).expect("validated at construction")
    }

    /// `(lower, upper]` quantile bounds of bin `i` (0-based).
    pub fn bin_bounds(&self, i: usize) -> (Rational, Rational) {
        let phi = self.fraction.0;
        let xi = self.gap();
        let i = i as i128;
        let lower = (phi + xi) * i;
        (lower, lower + phi)
    }

    /// Bin whose interval holds `psi`, or `None` when it falls in a gap.
    pub fn bin_of(&self, psi: Quantile) -> Option<usize> {
        let q = psi.ratio();
        (0..self.bins).find(|&i| {
            let (lo, hi) = self.bin_bounds(i);
            lo < q && q <= hi
        })
    }
}

/// ξ = (1 − φϱ)/(ϱ − 1), exactly.
pub fn boundary_term(bins: usize, fraction: Fraction) -> Result<Rational> {
    if bins < 2 {
        return Err(Error::Scheme(format!("need at least 2 bins, got {bins}")));
    }
    let one = Rational::from_integer(1);
    let covered = fraction.0 * bins as i128;
    if covered > one {
        return Err(Error::Scheme(format!(
            "bins cover {} of the cross-section (φ·ϱ = {fraction}·{bins} > 1)",
            ratio_to_f64(covered)
        )));
    }
    Ok((one - covered) / (bins as i128 - 1))
}

/// Empirical CDF value `count / n`, where `count = #{i : x_i ≤ x}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Quantile {
    count: usize,
    n: usize,
}

impl Quantile {
    pub fn new(count: usize, n: usize) -> Result<Self> {
        if n == 0 || count == 0 || count > n {
            return Err(Error::Contract(format!("quantile {count}/{n} outside (0, 1]")));
        }
        Ok(Self { count, n })
    }

    pub fn ratio(self) -> Rational {
        Rational::new(self.count as i128, self.n as i128)
    }

    pub fn value(self) -> f64 {
        self.count as f64 / self.n as f64
    }
}

/// Ψ(x) over `values`; `x` must be one of them.
pub fn empirical_quantile(values: &[f64], x: f64) -> Result<Quantile> {
    if !values.contains(&x) {
        return Err(Error::Contract(format!("{x} is not in the quantile population")));
    }
    Quantile::new(values.iter().filter(|&&v| v <= x).count(), values.len())
}

/// Ψ of every element, in input order, in O(n log n).
pub fn empirical_quantiles(values: &[f64]) -> Result<Vec<Quantile>> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("quantile population is not finite".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    values
        .iter()
        .map(|&x| Quantile::new(sorted.partition_point(|&s| s <= x), values.len()))
        .collect()
}

/// One-hot target over ϱ bins, or all zeros for a stock in a gap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LabelVector {
    active: Option<usize>,
    bins: usize,
}

impl LabelVector {
    pub fn one_hot(bin: usize, bins: usize) -> Self {
        assert!(bin < bins);
        Self {
            active: Some(bin),
            bins,
        }
    }

    pub fn null(bins: usize) -> Self {
        Self { active: None, bins }
    }

    pub fn active(&self) -> Option<usize> {
        self.active
    }

    pub fn is_null(&self) -> bool {
        self.active.is_none()
    }

    pub fn len(&self) -> usize {
        self.bins
    }

    pub fn is_empty(&self) -> bool {
        self.bins == 0
    }

    pub fn to_dense(&self) -> Vec<f64> {
        (0..self.bins)
            .map(|i| if Some(i) == self.active { 1.0 } else { 0.0 })
            .collect()
    }
}

pub fn assign_label(psi: Quantile, scheme: &LabelScheme) -> LabelVector {
    match scheme.bin_of(psi) {
        Some(b) => LabelVector::one_hot(b, scheme.bins),
        None => LabelVector::null(scheme.bins),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub ticker: String,
    pub decision_time: usize,
    pub features: FeatureWindow,
    pub target: LabelVector,
    pub next_return: f64,
}

/// A normalized cross-section with the following period's returns, aligned
/// with `section.windows` (`None` when the stock did not trade).
#[derive(Debug, Clone, PartialEq)]
pub struct SectionWithReturns {
    pub section: CrossSection,
    pub next_returns: Vec<Option<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub samples: Vec<LabeledSample>,
    /// Windowed stocks without a next-period return.
    pub dropped_missing_next: usize,
    /// Null-labelled samples: kept when the scheme includes them, dropped
    /// otherwise.
    pub null_labels: usize,
    pub sections: usize,
}

/// Normalized sections with next returns for every decision time in
/// `range` that has at least two complete windows and a following period.
pub fn prepare_sections(
    table: &PeriodTable,
    range: std::ops::Range<usize>,
) -> Result<Vec<SectionWithReturns>> {
    let mut out = Vec::new();
    for t in range {
        if t + 1 >= table.period_count() {
            break;
        }
        let raw = build_cross_section(table, t);
        if raw.len() < 2 {
            continue;
        }
        let section = normalize_cross_section(&raw)?;
        let next_returns = section
            .windows
            .iter()
            .map(|w| table.valid_return(&w.ticker, t + 1))
            .collect();
        out.push(SectionWithReturns {
            section,
            next_returns,
        });
    }
    Ok(out)
}

pub fn build_dataset(sections: &[SectionWithReturns], scheme: &LabelScheme) -> Result<Dataset> {
    let mut ds = Dataset::default();
    for s in sections {
        if !s.section.normalized {
            return Err(Error::Contract(format!(
                "section {} is not normalized",
                s.section.decision_time
            )));
        }
        if s.next_returns.len() != s.section.windows.len() {
            return Err(Error::Contract("next returns not aligned with windows".into()));
        }
        let present: Vec<(&FeatureWindow, f64)> = s
            .section
            .windows
            .iter()
            .zip(&s.next_returns)
            .filter_map(|(w, r)| r.map(|r| (w, r)))
            .collect();
        ds.dropped_missing_next += s.section.windows.len() - present.len();
        if present.is_empty() {
            continue;
        }
        ds.sections += 1;
        let returns: Vec<f64> = present.iter().map(|(_, r)| *r).collect();
        for ((w, r), psi) in present.iter().zip(empirical_quantiles(&returns)?) {
            let target = assign_label(psi, scheme);
            if target.is_null() {
                ds.null_labels += 1;
                if !scheme.include_null {
                    continue;
                }
            }
            ds.samples.push(LabeledSample {
                ticker: w.ticker.clone(),
                decision_time: w.decision_time,
                features: (*w).clone(),
                target,
                next_return: *r,
            });
        }
    }
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frac(s: &str) -> Fraction {
        s.parse().unwrap()
    }

    fn scheme(bins: usize, f: &str, null: bool) -> LabelScheme {
        LabelScheme::new(bins, frac(f), null).unwrap()
    }

    #[test]
    fn quantile_examples() {
        let r = [0.01, 0.02, 0.03];
        assert_eq!(empirical_quantile(&r, 0.02).unwrap().ratio(), Rational::new(2, 3));
        assert_eq!(empirical_quantile(&r, 0.03).unwrap().value(), 1.0);
        let ties = [1.0, 1.0, 2.0];
        assert_eq!(empirical_quantile(&ties, 1.0).unwrap().ratio(), Rational::new(2, 3));
        assert!(matches!(empirical_quantile(&r, 0.5), Err(Error::Contract(_))));
    }

    #[test]
    fn sorted_quantiles_match_direct_count() {
        let v = [0.3, -0.1, 0.3, 0.0, 2.0, -0.1, 0.7];
        let fast = empirical_quantiles(&v).unwrap();
        for (x, q) in v.iter().zip(fast) {
            assert_eq!(q, empirical_quantile(&v, *x).unwrap());
        }
    }

    #[test]
    fn boundary_terms() {
        assert_eq!(boundary_term(3, frac("0.2")).unwrap(), Rational::new(1, 5));
        assert_eq!(ratio_to_f64(boundary_term(3, frac("0.2")).unwrap()), 0.2);
        assert_eq!(boundary_term(5, frac("0.2")).unwrap(), Rational::from_integer(0));
        assert_eq!(boundary_term(3, frac("1/3")).unwrap(), Rational::from_integer(0));
        assert!(matches!(boundary_term(3, frac("0.4")), Err(Error::Scheme(_))));
    }

    #[test]
    fn three_bins_with_gaps() {
        let s = scheme(3, "0.2", false);
        let q = |c, n| Quantile::new(c, n).unwrap();
        assert_eq!(assign_label(q(1, 10), &s).active(), Some(0));
        assert_eq!(assign_label(q(5, 10), &s).active(), Some(1));
        assert_eq!(assign_label(q(9, 10), &s).active(), Some(2));
        assert!(assign_label(q(3, 10), &s).is_null());
        assert!(assign_label(q(7, 10), &s).is_null());
        assert_eq!(assign_label(q(10, 10), &s).active(), Some(2));
        assert_eq!(assign_label(q(1, 10), &s).to_dense(), vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn five_bins_without_gaps() {
        let s = scheme(5, "0.2", false);
        let top = assign_label(Quantile::new(19, 20).unwrap(), &s);
        assert_eq!(top.to_dense(), vec![0.0, 0.0, 0.0, 0.0, 1.0]);
        for c in 1..=100 {
            assert!(!assign_label(Quantile::new(c, 100).unwrap(), &s).is_null());
        }
    }

    #[test]
    fn fraction_parsing() {
        assert_eq!(frac("0.2").ratio(), Rational::new(1, 5));
        assert_eq!(frac("1/3").ratio(), Rational::new(1, 3));
        assert_eq!(frac(".25").ratio(), Rational::new(1, 4));
        assert!("0.2.1".parse::<Fraction>().is_err());
        assert!("1/0".parse::<Fraction>().is_err());
        let s: LabelScheme =
            serde_json::from_str(r#"{"bins":3,"fraction":0.2,"include_null":true}"#).unwrap();
        assert_eq!(s.fraction().ratio(), Rational::new(1, 5));
        assert!(serde_json::from_str::<LabelScheme>(r#"{"bins":3,"fraction":0.5}"#).is_err());
        assert!(serde_json::from_str::<LabelScheme>(r#"{"bins":2,"fraction":0.5}"#).is_err());
    }
}
