//! Return, risk and turnover statistics of a backtest.
//!
//! Every function works on per-period simple returns and annualizes with
//! the series' periods-per-year factor. Standard deviations use the
//! sample (T − 1) convention.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::Scalar;

/// Portfolio and benchmark returns over the same periods.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnSeries<T> {
    pub portfolio: Vec<T>,
    pub benchmark: Vec<T>,
    pub periods_per_year: u32,
    /// Annualized.
    pub risk_free_rate: T,
}

impl<T: Scalar> ReturnSeries<T> {
    pub fn new(portfolio: Vec<T>, benchmark: Vec<T>, periods_per_year: u32, risk_free_rate: T) -> Result<Self> {
        if portfolio.len() != benchmark.len() {
            return Err(Error::Contract(format!(
                "portfolio has {} returns, benchmark {}",
                portfolio.len(),
                benchmark.len()
            )));
        }
        if periods_per_year == 0 {
            return Err(Error::Contract("periods_per_year must be positive".into()));
        }
        if let Some(r) = portfolio.iter().chain(&benchmark).find(|r| !(**r > -T::one()) || !r.is_finite()) {
            return Err(Error::Contract(format!("return {r} is not a finite value above -1")));
        }
        Ok(Self {
            portfolio,
            benchmark,
            periods_per_year,
            risk_free_rate,
        })
    }

    fn ppy(&self) -> T {
        T::from_u32(self.periods_per_year).expect("small integer")
    }
}

fn nonempty<T>(xs: &[T], what: &str) -> Result<()> {
    if xs.is_empty() {
        Err(Error::Contract(format!("{what} needs at least one return")))
    } else {
        Ok(())
    }
}

fn mean<T: Scalar>(xs: &[T]) -> T {
    xs.iter().copied().sum::<T>() / T::from_usize_lossy(xs.len())
}

/// Sample variance.
fn variance<T: Scalar>(xs: &[T]) -> T {
    let m = mean(xs);
    xs.iter().map(|&x| (x - m) * (x - m)).sum::<T>() / T::from_usize_lossy(xs.len() - 1)
}

/// (Π(1 + D))^(ppy / T) − 1
pub fn annualized_return<T: Scalar>(returns: &[T], periods_per_year: u32) -> Result<T> {
    nonempty(returns, "annualized return")?;
    let growth = returns.iter().fold(T::one(), |acc, &r| acc * (T::one() + r));
    let exponent = T::from_u32(periods_per_year).expect("small integer") / T::from_usize_lossy(returns.len());
    Ok(growth.powf(exponent) - T::one())
}

pub fn annual_excess_return<T: Scalar>(series: &ReturnSeries<T>) -> Result<T> {
    Ok(annualized_return(&series.portfolio, series.periods_per_year)?
        - annualized_return(&series.benchmark, series.periods_per_year)?)
}

/// Annualized sample standard deviation.
pub fn volatility<T: Scalar>(returns: &[T], periods_per_year: u32) -> Result<T> {
    if returns.len() < 2 {
        return Err(Error::Contract("volatility needs at least two returns".into()));
    }
    Ok(variance(returns).sqrt() * T::from_u32(periods_per_year).expect("small integer").sqrt())
}

/// (annualized mean − R_f) / annualized standard deviation.
pub fn sharpe<T: Scalar>(series: &ReturnSeries<T>) -> Result<T> {
    let d = &series.portfolio;
    if d.len() < 2 {
        return Err(Error::UndefinedMetric("Sharpe ratio needs at least two returns".into()));
    }
    let sd = variance(d).sqrt();
    if !(sd > T::zero()) {
        return Err(Error::UndefinedMetric("Sharpe ratio of a zero-variance series".into()));
    }
    let ppy = series.ppy();
    Ok((mean(d) * ppy - series.risk_free_rate) / (sd * ppy.sqrt()))
}

/// Like the Sharpe ratio but scaled by the root-mean-square of the
/// negative per-period excess returns.
pub fn sortino<T: Scalar>(series: &ReturnSeries<T>) -> Result<T> {
    let d = &series.portfolio;
    nonempty(d, "Sortino ratio")?;
    let ppy = series.ppy();
    let rf = series.risk_free_rate / ppy;
    let downside: T = d
        .iter()
        .map(|&x| (x - rf).min(T::zero()))
        .map(|e| e * e)
        .sum();
    if !(downside > T::zero()) {
        return Err(Error::UndefinedMetric("Sortino ratio without a single loss".into()));
    }
    let dd = (downside / T::from_usize_lossy(d.len())).sqrt();
    Ok((mean(d) * ppy - series.risk_free_rate) / (dd * ppy.sqrt()))
}

/// β = Cov(D_p, D_m) / Var(D_m); α = (R_p − R_f) − β(R_m − R_f) with
/// annualized arithmetic means.
pub fn alpha_beta<T: Scalar>(series: &ReturnSeries<T>) -> Result<(T, T)> {
    let (p, m) = (&series.portfolio, &series.benchmark);
    if p.len() < 2 {
        return Err(Error::UndefinedMetric("alpha/beta need at least two returns".into()));
    }
    let var_m = variance(m);
    if !(var_m > T::zero()) {
        return Err(Error::UndefinedMetric("beta against a zero-variance benchmark".into()));
    }
    let (mp, mm) = (mean(p), mean(m));
    let cov = p.iter().zip(m).map(|(&a, &b)| (a - mp) * (b - mm)).sum::<T>() / T::from_usize_lossy(p.len() - 1);
    let beta = cov / var_m;
    let ppy = series.ppy();
    let rf = series.risk_free_rate;
    let alpha = (mp * ppy - rf) - beta * (mm * ppy - rf);
    Ok((alpha, beta))
}

/// Share of periods with a strictly positive return.
pub fn win_rate<T: Scalar>(returns: &[T]) -> Result<T> {
    nonempty(returns, "win rate")?;
    let wins = returns.iter().filter(|&&r| r > T::zero()).count();
    Ok(T::from_usize_lossy(wins) / T::from_usize_lossy(returns.len()))
}

/// Largest fractional fall from a running peak.
pub fn max_drawdown<T: Scalar>(values: &[T]) -> Result<T> {
    nonempty(values, "max drawdown")?;
    if values.iter().any(|&v| !(v > T::zero())) {
        return Err(Error::Contract("equity values must be positive".into()));
    }
    let mut peak = values[0];
    let mut worst = T::zero();
    for &v in values {
        peak = peak.max(v);
        worst = worst.max((peak - v) / peak);
    }
    Ok(worst)
}

/// ½·Σ|wᵗ − wᵗ⁻¹| between consecutive snapshots.
pub fn turnover<T: Scalar>(history: &[Vec<T>]) -> Result<Vec<T>> {
    if history.len() < 2 {
        return Err(Error::Contract("turnover needs at least two weight snapshots".into()));
    }
    history
        .windows(2)
        .map(|pair| {
            if pair[0].len() != pair[1].len() {
                return Err(Error::Contract("weight snapshots differ in length".into()));
            }
            let l1: T = pair[0].iter().zip(&pair[1]).map(|(&a, &b)| (b - a).abs()).sum();
            Ok(l1 / T::lit(2.0))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarMethod {
    /// Empirical loss quantile.
    #[default]
    Historical,
    /// −mean + 2.326·σ under a normal fit.
    Parametric,
}

/// One-period loss not exceeded with 99% confidence, as a positive
/// number for a loss.
///
/// Historical mode takes the smallest loss `x` whose empirical CDF
/// reaches 0.99.
pub fn var_99<T: Scalar>(returns: &[T], method: VarMethod) -> Result<T> {
    nonempty(returns, "VaR")?;
    if returns.len() < 100 {
        log::warn!("VaR99 from only {} observations", returns.len());
    }
    match method {
        VarMethod::Historical => {
            let mut losses: Vec<T> = returns.iter().map(|&r| -r).collect();
            losses.sort_by(|a, b| a.partial_cmp(b).expect("finite returns"));
            // smallest j with j / T ≥ 0.99, 1-based
            let n = losses.len();
            let j = n - n / 100;
            Ok(losses[j - 1])
        }
        VarMethod::Parametric => {
            let sd = if returns.len() > 1 { variance(returns).sqrt() } else { T::zero() };
            Ok(-mean(returns) + T::lit(2.326) * sd)
        }
    }
}

/// The summary reported for a backtest. Metrics that are undefined for
/// the series serialize as `null`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    #[serde(rename = "AR")]
    pub ar: f64,
    #[serde(rename = "AER")]
    pub aer: f64,
    #[serde(rename = "TR")]
    pub tr: Option<f64>,
    #[serde(rename = "WR")]
    pub wr: f64,
    #[serde(rename = "SR")]
    pub sr: Option<f64>,
    #[serde(rename = "Alpha")]
    pub alpha: Option<f64>,
    #[serde(rename = "Beta")]
    pub beta: Option<f64>,
    #[serde(rename = "MD")]
    pub md: f64,
    #[serde(rename = "Sigma")]
    pub sigma: Option<f64>,
    #[serde(rename = "Sortino")]
    pub sortino: Option<f64>,
    #[serde(rename = "VaR99")]
    pub var99: f64,
}

fn defined<T>(r: Result<T>) -> Result<Option<T>> {
    match r {
        Ok(x) => Ok(Some(x)),
        Err(Error::UndefinedMetric(msg)) => {
            log::warn!("{msg}");
            Ok(None)
        }
        Err(e) => Err(e),
    }
}

/// Inputs for [`MetricsReport::compute`] beyond the return series.
#[derive(Debug, Clone, Copy)]
pub struct ReportInputs<'a> {
    /// Equity values including the starting value.
    pub equity: &'a [f64],
    pub turnover: &'a [f64],
    /// Returns used for VaR; the portfolio series when `None`.
    pub var_returns: Option<&'a [f64]>,
    pub var_method: VarMethod,
}

impl MetricsReport {
    pub fn compute(series: &ReturnSeries<f64>, inputs: ReportInputs<'_>) -> Result<Self> {
        let ppy = series.periods_per_year;
        let ab = defined(alpha_beta(series))?;
        let sigma = match volatility(&series.portfolio, ppy) {
            Ok(s) => Some(s),
            Err(Error::Contract(_)) => None,
            Err(e) => return Err(e),
        };
        Ok(Self {
            ar: annualized_return(&series.portfolio, ppy)?,
            aer: annual_excess_return(series)?,
            tr: (!inputs.turnover.is_empty()).then(|| mean(inputs.turnover)),
            wr: win_rate(&series.portfolio)?,
            sr: defined(sharpe(series))?,
            alpha: ab.map(|x| x.0),
            beta: ab.map(|x| x.1),
            md: max_drawdown(inputs.equity)?,
            sigma,
            sortino: defined(sortino(series))?,
            var99: var_99(inputs.var_returns.unwrap_or(&series.portfolio), inputs.var_method)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(p: Vec<f64>, m: Vec<f64>, ppy: u32, rf: f64) -> ReturnSeries<f64> {
        ReturnSeries::new(p, m, ppy, rf).unwrap()
    }

    #[test]
    fn ar_closed_form() {
        let ar = annualized_return(&[0.01; 12], 12).unwrap();
        assert!((ar - (1.01f64.powi(12) - 1.0)).abs() < 1e-14);
        assert!((ar - 0.126_825).abs() < 1e-6);
        assert!(annualized_return::<f64>(&[], 12).is_err());
    }

    #[test]
    fn aer_zero_for_identical_series() {
        let s = series(vec![0.02, -0.01, 0.03], vec![0.02, -0.01, 0.03], 12, 0.0);
        assert_eq!(annual_excess_return(&s).unwrap(), 0.0);
    }

    #[test]
    fn sharpe_zero_excess_and_guard() {
        // mean 0.02 per month equals a 24% annual risk-free rate
        let s = series(vec![0.01, 0.03, 0.01, 0.03], vec![0.0; 4], 12, 0.24);
        assert!(sharpe(&s).unwrap().abs() < 1e-12);
        let flat = series(vec![0.01; 5], vec![0.0; 5], 12, 0.0);
        assert!(matches!(sharpe(&flat), Err(Error::UndefinedMetric(_))));
    }

    #[test]
    fn beta_examples() {
        let m = vec![0.01, -0.02, 0.03, 0.005, -0.01];
        let (a, b) = alpha_beta(&series(m.clone(), m.clone(), 12, 0.02)).unwrap();
        assert!((b - 1.0).abs() < 1e-12);
        assert!(a.abs() < 1e-12);
        let p: Vec<f64> = m.iter().map(|x| 2.0 * x).collect();
        let (a, b) = alpha_beta(&series(p, m, 12, 0.0)).unwrap();
        assert!((b - 2.0).abs() < 1e-12);
        assert!(a.abs() < 1e-12);
        let flat = series(vec![0.01, 0.02], vec![0.01, 0.01], 12, 0.0);
        assert!(matches!(alpha_beta(&flat), Err(Error::UndefinedMetric(_))));
    }

    #[test]
    fn turnover_examples() {
        assert_eq!(turnover(&[vec![0.5, 0.5], vec![1.0, 0.0]]).unwrap(), [0.5]);
        assert_eq!(turnover(&[vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap(), [0.0]);
        assert_eq!(turnover(&[vec![0.5, 0.5, 0.0, 0.0], vec![0.0, 0.0, 0.5, 0.5]]).unwrap(), [1.0]);
        assert!(turnover(&[vec![1.0]]).is_err());
    }

    #[test]
    fn win_rate_examples() {
        assert_eq!(win_rate(&[0.1, 0.2]).unwrap(), 1.0);
        assert_eq!(win_rate(&[0.1, -0.1, 0.1, -0.1]).unwrap(), 0.5);
        assert_eq!(win_rate(&[0.0, 0.0, 1.0]).unwrap(), 1.0 / 3.0);
    }

    #[test]
    fn drawdown_examples() {
        assert_eq!(max_drawdown(&[1.0, 2.0, 3.0]).unwrap(), 0.0);
        assert_eq!(max_drawdown(&[100.0, 120.0, 90.0, 130.0]).unwrap(), 0.25);
        assert!(max_drawdown(&[1.0, 0.0]).is_err());
    }

    #[test]
    fn sortino_guard() {
        let s = series(vec![0.01, 0.02, 0.03], vec![0.0; 3], 12, 0.0);
        assert!(matches!(sortino(&s), Err(Error::UndefinedMetric(_))));
    }

    #[test]
    fn var_examples() {
        assert_eq!(var_99(&[0.02; 150], VarMethod::Historical).unwrap(), -0.02);
        assert_eq!(var_99(&[-0.03; 10], VarMethod::Historical).unwrap(), 0.03);
        let v = var_99(&[0.02f64; 150], VarMethod::Parametric).unwrap();
        assert!((v + 0.02).abs() < 1e-15);
        // 1000 losses 1..=1000: the 990th smallest
        let r: Vec<f64> = (1..=1000).map(|i| -(i as f64)).collect();
        assert_eq!(var_99(&r, VarMethod::Historical).unwrap(), 990.0);
    }

    #[test]
    fn alternating_volatility() {
        let r: Vec<f64> = (0..24).map(|i| if i % 2 == 0 { 0.01 } else { -0.01 }).collect();
        let expected = 0.01 * (24.0f64 / 23.0).sqrt() * 12f64.sqrt();
        assert!((volatility(&r, 12).unwrap() - expected).abs() < 1e-12);
        assert_eq!(volatility(&[0.01; 5], 12).unwrap(), 0.0);
    }

    #[test]
    fn f32_instantiation() {
        let ar = annualized_return(&[0.01f32; 12], 12).unwrap();
        assert!((ar - 0.126_825).abs() < 1e-5);
    }

    #[test]
    fn report_keys() {
        let s = series(vec![0.01, -0.02, 0.03], vec![0.0, 0.01, 0.0], 12, 0.0);
        let rep = MetricsReport::compute(
            &s,
            ReportInputs {
                equity: &[1.0, 1.01, 0.9898, 1.019494],
                turnover: &[0.5, 0.0, 1.0],
                var_returns: None,
                var_method: VarMethod::Historical,
            },
        )
        .unwrap();
        let json = serde_json::to_value(&rep).unwrap();
        for k in ["AR", "AER", "TR", "WR", "SR", "Alpha", "Beta", "MD", "Sigma", "Sortino", "VaR99"] {
            assert!(json.get(k).is_some(), "{k}");
        }
        assert_eq!(rep.tr, Some(0.5));
    }
}
