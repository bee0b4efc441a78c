//! ARMA/ARIMA comparison models with BIC order selection, and a
//! seasonal-naive reference.
//!
//! Coefficients are estimated in two stages: a long autoregression supplies
//! proxy innovations, then the series is regressed jointly on its own lags
//! and the lagged proxies. With `q = 0` this reduces to ordinary least
//! squares on the lags.

use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::timeseries::HourlyTrafficSeries;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ArmaOrder {
    pub p: usize,
    pub d: usize,
    pub q: usize,
}

impl ArmaOrder {
    pub fn new(p: usize, d: usize, q: usize) -> Result<Self> {
        if d > 1 {
            return Err(Error::Argument(format!(
                "differencing order {d} not supported (0 or 1)"
            )));
        }
        if d == 0 && p + q == 0 {
            return Err(Error::Argument("ARMA(0,0) has no dynamics; need p + q >= 1".into()));
        }
        Ok(Self { p, d, q })
    }

    /// Number of estimated coefficients including the intercept.
    pub fn num_coefficients(&self) -> usize {
        self.p + self.q + 1
    }
}

impl std::fmt::Display for ArmaOrder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({},{},{})", self.p, self.d, self.q)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArmaModel {
    pub order: ArmaOrder,
    pub ar_coeffs: Vec<f64>,
    pub ma_coeffs: Vec<f64>,
    pub intercept: f64,
    pub noise_variance: f64,
    /// False when an AR root lies on or outside the unit circle.
    pub stationary: bool,
}

fn difference(x: &[f64], d: usize) -> Vec<f64> {
    if d == 0 {
        x.to_vec()
    } else {
        x.windows(2).map(|w| w[1] - w[0]).collect()
    }
}

impl ArmaModel {
    pub fn new(
        order: ArmaOrder,
        ar_coeffs: Vec<f64>,
        ma_coeffs: Vec<f64>,
        intercept: f64,
        noise_variance: f64,
    ) -> Result<Self> {
        if ar_coeffs.len() != order.p || ma_coeffs.len() != order.q {
            return Err(Error::Argument(format!(
                "order {order} needs {} AR and {} MA coefficients",
                order.p, order.q
            )));
        }
        if noise_variance.is_nan() || noise_variance <= 0.0 {
            return Err(Error::Argument("noise variance must be positive".into()));
        }
        let stationary = ar_is_stationary(&ar_coeffs);
        Ok(Self {
            order,
            ar_coeffs,
            ma_coeffs,
            intercept,
            noise_variance,
            stationary,
        })
    }

    /// One-step innovations of the (already differenced) series, with shocks
    /// before index `p` taken as zero.
    pub fn innovations(&self, x: &[f64]) -> Vec<f64> {
        let (p, q) = (self.order.p, self.order.q);
        let mut e = vec![0.0; x.len()];
        for t in p..x.len() {
            let mut pred = self.intercept;
            for i in 0..p {
                pred += self.ar_coeffs[i] * x[t - 1 - i];
            }
            for j in 0..q.min(t) {
                pred += self.ma_coeffs[j] * e[t - 1 - j];
            }
            e[t] = x[t] - pred;
        }
        e
    }

    /// In-sample one-step-ahead predictions on the original scale. Entry `t`
    /// predicts `series[t]` from data before `t`; the first `p + d` entries
    /// echo the observations.
    pub fn one_step_predictions(&self, series: &[f64]) -> Vec<f64> {
        let d = self.order.d;
        let x = difference(series, d);
        let e = self.innovations(&x);
        let mut out = series.to_vec();
        for t in self.order.p..x.len() {
            out[t + d] = series[t + d] - e[t];
        }
        out
    }

    /// Long-run mean of the (differenced) process.
    pub fn process_mean(&self) -> f64 {
        self.intercept / (1.0 - self.ar_coeffs.iter().sum::<f64>())
    }
}

fn ar_is_stationary(ar: &[f64]) -> bool {
    if ar.is_empty() {
        return true;
    }
    let p = ar.len();
    let mut companion = DMatrix::zeros(p, p);
    for (j, &a) in ar.iter().enumerate() {
        companion[(0, j)] = a;
    }
    for i in 1..p {
        companion[(i, i - 1)] = 1.0;
    }
    companion.complex_eigenvalues().iter().all(|z| z.norm() < 1.0)
}

/// Reflects roots of the MA polynomial that lie outside the unit circle to
/// their inverse conjugates, so the innovation recursion is stable while the
/// autocorrelation structure is kept.
fn make_invertible(ma: &[f64]) -> Vec<f64> {
    let q = ma.len();
    if q == 0 {
        return Vec::new();
    }
    let mut companion = DMatrix::zeros(q, q);
    for (j, &b) in ma.iter().enumerate() {
        companion[(0, j)] = -b;
    }
    for i in 1..q {
        companion[(i, i - 1)] = 1.0;
    }
    let roots = companion.complex_eigenvalues();
    if roots.iter().all(|z| z.norm() <= 1.0) {
        return ma.to_vec();
    }
    let mut coeffs = vec![Complex::new(1.0, 0.0)];
    for z in roots.iter() {
        let z = if z.norm() > 1.0 { z.conj().inv() } else { *z };
        let mut next = vec![Complex::new(0.0, 0.0); coeffs.len() + 1];
        for (k, c) in coeffs.iter().enumerate() {
            next[k] += c;
            next[k + 1] -= c * z;
        }
        coeffs = next;
    }
    coeffs[1..].iter().map(|c| c.re).collect()
}

/// OLS of `y` on the rows of `x` (row-major, `k` columns).
fn least_squares(rows: &[f64], y: &[f64], k: usize) -> Result<Vec<f64>> {
    let n = y.len();
    let x = DMatrix::from_row_slice(n, k, rows);
    let xtx = x.tr_mul(&x);
    let xty = x.tr_mul(&DVector::from_column_slice(y));
    let diag_max = (0..k).map(|i| xtx[(i, i)]).fold(0.0, f64::max);
    let svd = xtx.clone().svd(false, false);
    let smin = svd.singular_values.min();
    if diag_max == 0.0 || smin <= diag_max * 1e-13 {
        return Err(Error::Degenerate("regressor matrix is rank deficient".into()));
    }
    let chol = xtx
        .cholesky()
        .ok_or_else(|| Error::Degenerate("normal equations not positive definite".into()))?;
    Ok(chol.solve(&xty).iter().copied().collect())
}

/// AR(m) residuals by OLS; entries before `m` are zero.
fn long_ar_residuals(x: &[f64], m: usize) -> Result<Vec<f64>> {
    let mut rows = Vec::new();
    let mut y = Vec::new();
    for t in m..x.len() {
        rows.push(1.0);
        rows.extend((1..=m).map(|i| x[t - i]));
        y.push(x[t]);
    }
    let beta = least_squares(&rows, &y, m + 1)?;
    let mut e = vec![0.0; x.len()];
    for t in m..x.len() {
        let pred: f64 = beta[0] + (1..=m).map(|i| beta[i] * x[t - i]).sum::<f64>();
        e[t] = x[t] - pred;
    }
    Ok(e)
}

pub fn fit_arma(series: &HourlyTrafficSeries, order: ArmaOrder) -> Result<ArmaModel> {
    fit_arma_values(series.values(), order)
}

fn fit_arma_values(series: &[f64], order: ArmaOrder) -> Result<ArmaModel> {
    let x = difference(series, order.d);
    let (p, q) = (order.p, order.q);
    let need = 10 * order.num_coefficients();
    if x.len() < need {
        return Err(Error::InsufficientData(format!(
            "order {order} needs at least {need} (differenced) samples, got {}",
            x.len()
        )));
    }
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    if x.iter().all(|v| (v - mean).abs() <= f64::EPSILON * mean.abs().max(1.0)) {
        return Err(Error::Degenerate("series has zero variance".into()));
    }

    let (proxy, start) = if q > 0 {
        let m = ((10.0 * (x.len() as f64).log10()).ceil() as usize)
            .max(p + q + 2)
            .min(x.len() / 4);
        (long_ar_residuals(&x, m)?, m + q)
    } else {
        (vec![0.0; x.len()], p)
    };
    let start = start.max(p);
    if x.len() - start < order.num_coefficients() + 1 {
        return Err(Error::InsufficientData(format!(
            "too few usable samples for order {order}"
        )));
    }

    let k = order.num_coefficients();
    let mut rows = Vec::with_capacity((x.len() - start) * k);
    let mut y = Vec::with_capacity(x.len() - start);
    for t in start..x.len() {
        rows.push(1.0);
        rows.extend((1..=p).map(|i| x[t - i]));
        rows.extend((1..=q).map(|j| proxy[t - j]));
        y.push(x[t]);
    }
    let beta = least_squares(&rows, &y, k)?;

    let mut model = ArmaModel {
        order,
        ar_coeffs: beta[1..=p].to_vec(),
        ma_coeffs: make_invertible(&beta[p + 1..]),
        intercept: beta[0],
        noise_variance: 1.0,
        stationary: ar_is_stationary(&beta[1..=p]),
    };
    let e = model.innovations(&x);
    let tail = &e[p..];
    let variance = tail.iter().map(|v| v * v).sum::<f64>() / tail.len() as f64;
    if !(variance > 0.0 && variance.is_finite()) {
        return Err(Error::Degenerate(format!(
            "order {order} fits the series exactly or diverges"
        )));
    }
    model.noise_variance = variance;
    Ok(model)
}

/// BIC `n ln(sse/n) + k ln(n)` for every order on the grid that fits.
///
/// All cells score the innovations from the same start index so their
/// sample counts agree.
pub fn bic_table(series: &HourlyTrafficSeries, p_max: usize, q_max: usize, d: usize) -> Result<Vec<(ArmaOrder, f64)>> {
    if p_max > 5 || q_max > 5 {
        return Err(Error::Argument("p_max and q_max must not exceed 5".into()));
    }
    let x = difference(series.values(), d);
    let t0 = p_max + q_max;
    let mut table = Vec::new();
    for p in 0..=p_max {
        for q in 0..=q_max {
            let Ok(order) = ArmaOrder::new(p, d, q) else { continue };
            let Ok(model) = fit_arma_values(series.values(), order) else {
                continue;
            };
            let e = model.innovations(&x);
            if e.len() <= t0 {
                continue;
            }
            let n = (e.len() - t0) as f64;
            let sse: f64 = e[t0..].iter().map(|v| v * v).sum();
            let bic = n * (sse / n).ln() + order.num_coefficients() as f64 * n.ln();
            if bic.is_finite() {
                table.push((order, bic));
            }
        }
    }
    Ok(table)
}

pub fn select_order_bic(series: &HourlyTrafficSeries, p_max: usize, q_max: usize, d: usize) -> Result<ArmaOrder> {
    bic_table(series, p_max, q_max, d)?
        .into_iter()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(o, _)| o)
        .ok_or_else(|| {
            Error::Selection(format!(
                "no order in grid p<={p_max}, q<={q_max}, d={d} could be fitted"
            ))
        })
}

/// Iterated forecasts with future shocks set to zero; for `d = 1` the
/// differenced forecasts are accumulated from the last observed level.
pub fn forecast(model: &ArmaModel, history: &HourlyTrafficSeries, steps: usize) -> Result<HourlyTrafficSeries> {
    let (p, d, q) = (model.order.p, model.order.d, model.order.q);
    if steps == 0 {
        return Err(Error::Argument("steps must be positive".into()));
    }
    if history.len() < (p + d).max(1) {
        return Err(Error::InsufficientData(format!(
            "forecast needs at least {} history samples, got {}",
            (p + d).max(1),
            history.len()
        )));
    }
    let mut x = difference(history.values(), d);
    let mut e = model.innovations(&x);
    let n = x.len();
    for _ in 0..steps {
        let t = x.len();
        let mut next = model.intercept;
        for i in 0..p {
            next += model.ar_coeffs[i] * x[t - 1 - i];
        }
        for j in 0..q.min(t) {
            next += model.ma_coeffs[j] * e[t - 1 - j];
        }
        x.push(next);
        e.push(0.0);
    }
    let mut out = x[n..].to_vec();
    if d == 1 {
        let mut level = *history.values().last().expect("non-empty history");
        for v in out.iter_mut() {
            level += *v;
            *v = level;
        }
    }
    HourlyTrafficSeries::new(history.end(), out)
}

/// Repeats the last `period` hours of history.
pub fn seasonal_naive(history: &HourlyTrafficSeries, steps: usize, period: usize) -> Result<HourlyTrafficSeries> {
    if period == 0 || steps == 0 {
        return Err(Error::Argument("period and steps must be positive".into()));
    }
    let n = history.len();
    if n < period {
        return Err(Error::InsufficientData(format!(
            "history of {n} hours is shorter than period {period}"
        )));
    }
    let v = history.values();
    let out = (0..steps).map(|h| v[n - period + h % period]).collect();
    HourlyTrafficSeries::new(history.end(), out)
}
