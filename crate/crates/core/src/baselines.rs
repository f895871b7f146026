//! Per-series regression of LAI on VH/VV: a polynomial fitted by QR and an
//! offset exponential `y = a·exp(b·x) + c` fitted by Gauss–Newton.
//!
//! Both fits standardize x first. The polynomial keeps its coefficients in
//! the standardized variable; the exponential is converted back to raw x.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::kv::KvMap;
use crate::series::{gaussian_smooth, interpolate_to_times, TimeSeriesRecord};

/// Relative size below which a diagonal entry of R counts as zero.
const RANK_TOL: f64 = 1e-12;
const GN_MAX_ITER: usize = 200;
const GN_REL_TOL: f64 = 1e-10;
const MAX_HALVINGS: usize = 40;

fn standardize(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let scale = if var > 0.0 { var.sqrt() } else { 1.0 };
    (mean, scale)
}

fn distinct(x: &[f64]) -> usize {
    let mut v = x.to_vec();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v.len()
}

fn check_xy(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::dims(format!("x has {} points, y has {}", x.len(), y.len())));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::param("non-finite fit input"));
    }
    Ok(())
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolyModel {
    /// Ascending powers of the standardized variable `(x - x_mean) / x_scale`.
    pub coefficients: Vec<f64>,
    pub x_mean: f64,
    pub x_scale: f64,
}

impl PolyModel {
    /// Model from ascending raw-power coefficients.
    pub fn from_raw(coefficients: Vec<f64>) -> Self {
        Self {
            coefficients,
            x_mean: 0.0,
            x_scale: 1.0,
        }
    }

    pub fn degree(&self) -> usize {
        self.coefficients.len().saturating_sub(1)
    }

    /// Horner evaluation at raw `x`.
    pub fn eval(&self, x: f64) -> f64 {
        let z = (x - self.x_mean) / self.x_scale;
        self.coefficients.iter().rev().fold(0.0, |acc, c| acc * z + c)
    }

    /// Coefficients of the same polynomial in ascending powers of raw x.
    pub fn raw_coefficients(&self) -> Vec<f64> {
        let d = self.coefficients.len();
        let mut raw = vec![0.0; d];
        for (k, &c) in self.coefficients.iter().enumerate() {
            let s = self.x_scale.powi(k as i32);
            for (j, slot) in raw.iter_mut().enumerate().take(k + 1) {
                *slot += c * binomial(k, j) * (-self.x_mean).powi((k - j) as i32) / s;
            }
        }
        raw
    }
}

pub fn poly_eval(model: &PolyModel, x: f64) -> f64 {
    model.eval(x)
}

/// Least-squares polynomial of the given degree, solved through a QR
/// factorization of the standardized Vandermonde matrix.
pub fn poly_fit(x: &[f64], y: &[f64], degree: usize) -> Result<PolyModel> {
    check_xy(x, y)?;
    let k = degree + 1;
    if x.len() < k || distinct(x) < k {
        return Err(Error::Rank(format!(
            "degree {degree} needs {k} distinct x values, got {} of {} points",
            distinct(x),
            x.len()
        )));
    }
    let (x_mean, x_scale) = standardize(x);
    let v = DMatrix::from_fn(x.len(), k, |i, j| ((x[i] - x_mean) / x_scale).powi(j as i32));
    let qr = v.qr();
    let r = qr.r();
    let diag_max = (0..k).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    if (0..k).any(|i| r[(i, i)].abs() <= RANK_TOL * diag_max) {
        return Err(Error::Rank("Vandermonde matrix is numerically rank deficient".into()));
    }
    let qtb = qr.q().transpose() * DVector::from_column_slice(y);
    let coef = r
        .solve_upper_triangular(&qtb)
        .ok_or_else(|| Error::Rank("singular triangular factor".into()))?;
    Ok(PolyModel {
        coefficients: coef.iter().copied().collect(),
        x_mean,
        x_scale,
    })
}

/// `y = a·exp(b·x) + c` in raw x.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpModel {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl ExpModel {
    pub fn eval(&self, x: f64) -> f64 {
        self.a * (self.b * x).exp() + self.c
    }

    /// Same curve in the variable `z = (x - mean) / scale`.
    fn to_standardized(self, mean: f64, scale: f64) -> Self {
        Self {
            a: self.a * (self.b * mean).exp(),
            b: self.b * scale,
            c: self.c,
        }
    }

    fn unstandardize(self, mean: f64, scale: f64) -> Self {
        let b = self.b / scale;
        Self {
            a: self.a * (-b * mean).exp(),
            b,
            c: self.c,
        }
    }
}

pub fn exp_eval(model: &ExpModel, x: f64) -> f64 {
    model.eval(x)
}

fn sum_sq(m: &ExpModel, z: &[f64], y: &[f64]) -> f64 {
    z.iter().zip(y).map(|(&zi, &yi)| (yi - m.eval(zi)).powi(2)).sum()
}

/// Log-linear fit of `ln(sign·(y − c0)) = ln|a| + b z` with the offset `c0`
/// placed just beyond the data on the side given by `sign`.
fn log_linear(z: &[f64], y: &[f64], sign: f64) -> Option<ExpModel> {
    let (lo, hi) = y
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    let margin = (0.1 * (hi - lo)).max(1e-3 * (1.0 + lo.abs().max(hi.abs())));
    let c0 = if sign > 0.0 { lo - margin } else { hi + margin };
    let ly: Vec<f64> = y.iter().map(|&v| (sign * (v - c0)).ln()).collect();
    let n = z.len() as f64;
    let mz = z.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let szz: f64 = z.iter().map(|v| (v - mz) * (v - mz)).sum();
    let szy: f64 = z.iter().zip(&ly).map(|(a, b)| (a - mz) * (b - my)).sum();
    let b = if szz > 0.0 { szy / szz } else { 0.0 };
    let m = ExpModel {
        a: sign * (my - b * mz).exp(),
        b,
        c: c0,
    };
    (m.a.is_finite() && m.b.is_finite() && m.a != 0.0).then_some(m)
}

/// Result of [`exp_fit_traced`].
#[derive(Debug, Clone, PartialEq)]
pub struct ExpFit {
    pub model: ExpModel,
    /// Log-linear starting point.
    pub init: ExpModel,
    /// Residual sum of squares at the start and after each accepted step.
    pub trace: Vec<f64>,
    pub iterations: usize,
}

/// Log-linear initializer of [`exp_fit`], in raw x.
pub fn exp_init(x: &[f64], y: &[f64]) -> Result<ExpModel> {
    check_xy(x, y)?;
    if x.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "exponential fit needs 3 points, got {}",
            x.len()
        )));
    }
    let (mean, scale) = standardize(x);
    let z: Vec<f64> = x.iter().map(|v| (v - mean) / scale).collect();
    let best = [1.0, -1.0]
        .into_iter()
        .filter_map(|s| log_linear(&z, y, s))
        .min_by(|p, q| sum_sq(p, &z, y).total_cmp(&sum_sq(q, &z, y)))
        .ok_or_else(|| Error::param("log-linear initialization failed"))?;
    Ok(best.unstandardize(mean, scale))
}

/// Least-squares exponential fit: log-linear start, then Gauss–Newton with
/// step halving. Stops when the relative decrease of the residual sum of
/// squares drops below 1e-10 or no halved step improves it.
pub fn exp_fit(x: &[f64], y: &[f64]) -> Result<ExpModel> {
    exp_fit_traced(x, y).map(|f| f.model)
}

pub fn exp_fit_traced(x: &[f64], y: &[f64]) -> Result<ExpFit> {
    let init = exp_init(x, y)?;
    let (mean, scale) = standardize(x);
    let z: Vec<f64> = x.iter().map(|v| (v - mean) / scale).collect();
    let mut m = init.to_standardized(mean, scale);
    let mut ss = sum_sq(&m, &z, y);
    let mut trace = vec![ss];
    let tiny = 1e-28 * (1.0 + y.iter().map(|v| v * v).sum::<f64>());
    let n = z.len();
    for iter in 0..GN_MAX_ITER {
        if ss <= tiny {
            return Ok(finish(m, init, trace, iter, mean, scale));
        }
        let mut jac = DMatrix::zeros(n, 3);
        let mut res = DVector::zeros(n);
        for i in 0..n {
            let e = (m.b * z[i]).exp();
            jac[(i, 0)] = e;
            jac[(i, 1)] = m.a * z[i] * e;
            jac[(i, 2)] = 1.0;
            res[i] = y[i] - (m.a * e + m.c);
        }
        let svd = jac.svd(true, true);
        let smax = svd.singular_values.max();
        let delta = svd
            .solve(&res, smax * 1e-12)
            .map_err(|e| Error::param(format!("Gauss-Newton step: {e}")))?;
        let mut lambda = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let trial = ExpModel {
                a: m.a + lambda * delta[0],
                b: m.b + lambda * delta[1],
                c: m.c + lambda * delta[2],
            };
            let tss = sum_sq(&trial, &z, y);
            if tss.is_finite() && tss <= ss {
                accepted = Some((trial, tss));
                break;
            }
            lambda *= 0.5;
        }
        let Some((next, next_ss)) = accepted else {
            // no descent left along the Gauss-Newton direction
            return Ok(finish(m, init, trace, iter, mean, scale));
        };
        let rel = (ss - next_ss) / ss;
        m = next;
        ss = next_ss;
        trace.push(ss);
        if rel < GN_REL_TOL {
            return Ok(finish(m, init, trace, iter + 1, mean, scale));
        }
    }
    let raw = m.unstandardize(mean, scale);
    Err(Error::NoConvergence {
        iterations: GN_MAX_ITER,
        a: raw.a,
        b: raw.b,
        c: raw.c,
    })
}

fn finish(m: ExpModel, init: ExpModel, trace: Vec<f64>, iterations: usize, mean: f64, scale: f64) -> ExpFit {
    ExpFit {
        model: m.unstandardize(mean, scale),
        init,
        trace,
        iterations,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Poly,
    Exp,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Poly => "poly",
            Method::Exp => "exp",
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "poly" | "polynomial" => Ok(Method::Poly),
            "exp" | "exponential" => Ok(Method::Exp),
            other => Err(Error::param(format!("unknown baseline method {other:?}"))),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BaselineModel {
    Poly(PolyModel),
    Exp(ExpModel),
}

impl BaselineModel {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            BaselineModel::Poly(m) => m.eval(x),
            BaselineModel::Exp(m) => m.eval(x),
        }
    }

    pub fn to_kv(&self) -> KvMap {
        let mut kv = KvMap::new();
        match self {
            BaselineModel::Poly(m) => {
                kv.insert("method", "poly");
                kv.insert("degree", m.degree());
                kv.insert("x_mean", m.x_mean);
                kv.insert("x_scale", m.x_scale);
                for (i, c) in m.coefficients.iter().enumerate() {
                    kv.insert(format!("c{i}"), c);
                }
            }
            BaselineModel::Exp(m) => {
                kv.insert("method", "exp");
                kv.insert("a", m.a);
                kv.insert("b", m.b);
                kv.insert("c", m.c);
            }
        }
        kv
    }

    pub fn from_kv(kv: &KvMap) -> Result<Self> {
        let method: Method = kv.require::<String>("method")?.parse()?;
        match method {
            Method::Poly => {
                let degree: usize = kv.require("degree")?;
                let coefficients = (0..=degree)
                    .map(|i| kv.require(&format!("c{i}")))
                    .collect::<Result<_>>()?;
                Ok(BaselineModel::Poly(PolyModel {
                    coefficients,
                    x_mean: kv.require("x_mean")?,
                    x_scale: kv.require("x_scale")?,
                }))
            }
            Method::Exp => Ok(BaselineModel::Exp(ExpModel {
                a: kv.require("a")?,
                b: kv.require("b")?,
                c: kv.require("c")?,
            })),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineConfig {
    pub method: Method,
    /// Polynomial degree (ignored by the exponential).
    pub degree: usize,
    /// Gaussian smoothing window applied to VH/VV before fitting; 1 disables.
    pub smooth_window: usize,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            method: Method::Poly,
            degree: 3,
            smooth_window: 5,
        }
    }
}

/// VH/VV at every step of `record`: smoothed, then linearly interpolated
/// across its own gaps.
pub fn dense_vhvv(record: &TimeSeriesRecord, smooth_window: usize) -> Result<Vec<f64>> {
    let smoothed = gaussian_smooth(record.vhvv(), record.vhvv_mask(), smooth_window)?;
    interpolate_to_times(record.times(), &smoothed, record.vhvv_mask(), record.times())
}

/// Fits the configured model to the (VH/VV, LAI) pairs at observed LAI steps.
pub fn fit_record(record: &TimeSeriesRecord, config: &BaselineConfig) -> Result<BaselineModel> {
    let x_all = dense_vhvv(record, config.smooth_window)?;
    let (x, y): (Vec<f64>, Vec<f64>) = x_all
        .iter()
        .zip(record.lai())
        .zip(record.lai_mask())
        .filter(|(_, &m)| m)
        .map(|((&x, &y), _)| (x, y))
        .unzip();
    match config.method {
        Method::Poly => poly_fit(&x, &y, config.degree).map(BaselineModel::Poly),
        Method::Exp => exp_fit(&x, &y).map(BaselineModel::Exp),
    }
}

/// Fills LAI gaps with model predictions at the interpolated VH/VV value.
/// Observed LAI is passed through; the output LAI mask is all true.
pub fn baseline_impute(record: &TimeSeriesRecord, config: &BaselineConfig) -> Result<TimeSeriesRecord> {
    if record.lai_mask().iter().all(|&m| m) {
        return Ok(record.clone());
    }
    let model = fit_record(record, config)?;
    let x = dense_vhvv(record, config.smooth_window)?;
    let lai = record
        .lai()
        .iter()
        .zip(record.lai_mask())
        .zip(&x)
        .map(|((&v, &m), &xi)| if m { v } else { model.eval(xi) })
        .collect();
    record.with_lai(lai, vec![true; record.len()])
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn poly_ss(m: &PolyModel, x: &[f64], y: &[f64]) -> f64 {
        x.iter().zip(y).map(|(&a, &b)| (b - m.eval(a)).powi(2)).sum()
    }

    #[test]
    fn eval_examples() {
        assert_eq!(poly_eval(&PolyModel::from_raw(vec![1.0, 2.0, 3.0]), 2.0), 17.0);
        let one = ExpModel { a: 1.0, b: 0.0, c: 0.0 };
        assert_eq!(exp_eval(&one, -3.7), 1.0);
        let m = ExpModel { a: 2.0, b: 0.5, c: 1.0 };
        assert_abs_diff_eq!(exp_eval(&m, 2.0), 2.0 * std::f64::consts::E + 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(exp_eval(&m, 2.0), 6.43656, epsilon = 1e-5);
    }

    #[test]
    fn recovers_square() {
        let x: Vec<f64> = (-3..=4).map(|i| i as f64 * 0.7).collect();
        let y: Vec<f64> = x.iter().map(|v| v * v).collect();
        let raw = poly_fit(&x, &y, 2).unwrap().raw_coefficients();
        assert_abs_diff_eq!(raw[0], 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(raw[1], 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(raw[2], 1.0, epsilon = 1e-9);
    }

    #[test]
    fn degree_zero_is_mean() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y = [2.0, 7.0, 1.0, 6.0];
        let m = poly_fit(&x, &y, 0).unwrap();
        assert_abs_diff_eq!(m.coefficients[0], 4.0, epsilon = 1e-14);
    }

    #[test]
    fn rank_errors() {
        assert!(matches!(
            poly_fit(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0], 1),
            Err(Error::Rank(_))
        ));
        assert!(matches!(poly_fit(&[1.0, 2.0], &[1.0, 2.0], 2), Err(Error::Rank(_))));
    }

    #[test]
    fn optimality_probe() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let x: Vec<f64> = (0..30).map(|_| rng.random_range(-12.0..-5.0)).collect();
        let y: Vec<f64> = x
            .iter()
            .map(|v| 0.3 * v * v + v + rng.random_range(-1.0..1.0))
            .collect();
        let m = poly_fit(&x, &y, 3).unwrap();
        let best = poly_ss(&m, &x, &y);
        for _ in 0..100_000 {
            let scale = 10f64.powf(rng.random_range(-6.0..0.0));
            let mut p = m.clone();
            for c in p.coefficients.iter_mut() {
                *c += scale * rng.random_range(-1.0..1.0);
            }
            assert!(poly_ss(&p, &x, &y) >= best);
        }
    }

    #[test]
    fn stationarity_probe() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x: Vec<f64> = (0..25).map(|_| rng.random_range(-14.0..-6.0)).collect();
        let y: Vec<f64> = x
            .iter()
            .map(|v| (0.4 * v).exp() * 50.0 + rng.random_range(-0.2..0.2))
            .collect();
        let m = poly_fit(&x, &y, 3).unwrap();
        let base = poly_ss(&m, &x, &y);
        for k in 0..m.coefficients.len() {
            for d in [1e-6, -1e-6] {
                let mut p = m.clone();
                p.coefficients[k] += d;
                assert!(base - poly_ss(&p, &x, &y) <= 1e-12, "coefficient {k}");
            }
        }
    }

    #[test]
    fn recovers_exponential() {
        let x: Vec<f64> = (0..=5).map(f64::from).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 * (0.5 * v).exp()).collect();
        let fit = exp_fit_traced(&x, &y).unwrap();
        assert_abs_diff_eq!(fit.model.a, 2.0, epsilon = 1e-6);
        assert_abs_diff_eq!(fit.model.b, 0.5, epsilon = 1e-6);
        assert_abs_diff_eq!(fit.model.c, 0.0, epsilon = 1e-6);
        assert!(fit.trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn constant_data() {
        let x = [-10.0, -9.0, -8.0, -7.0];
        let y = [3.0; 4];
        let m = exp_fit(&x, &y).unwrap();
        assert_abs_diff_eq!(m.b, 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(m.a + m.c, 3.0, epsilon = 1e-9);
    }

    #[test]
    fn exp_needs_three_points() {
        assert!(exp_fit(&[1.0, 2.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn model_kv_round_trip() {
        let x: Vec<f64> = (0..10).map(|i| -12.0 + i as f64 * 0.61).collect();
        let y: Vec<f64> = x.iter().map(|v| 0.1 * v * v * v + 0.3).collect();
        for m in [
            BaselineModel::Poly(poly_fit(&x, &y, 3).unwrap()),
            BaselineModel::Exp(ExpModel {
                a: 0.1,
                b: 0.37,
                c: -0.2,
            }),
        ] {
            let text = m.to_kv().to_text();
            let back = BaselineModel::from_kv(&KvMap::parse(&text).unwrap()).unwrap();
            assert_eq!(back, m);
        }
    }

    fn gapped(lai: Vec<f64>, mask: Vec<bool>, vhvv: Vec<f64>) -> TimeSeriesRecord {
        let n = lai.len();
        let t: Vec<f64> = (0..n).map(|i| 3.0 * i as f64).collect();
        TimeSeriesRecord::new("g", t, lai, mask, vhvv, vec![true; n]).unwrap()
    }

    #[test]
    fn affine_relation_is_exact() {
        let vhvv: Vec<f64> = (0..12).map(|i| -13.0 + (i as f64 * 0.9).sin() * 3.0).collect();
        let truth: Vec<f64> = vhvv.iter().map(|v| 0.7 * v + 10.0).collect();
        let mask: Vec<bool> = (0..12).map(|i| i % 3 != 1).collect();
        let r = gapped(truth.clone(), mask, vhvv);
        let cfg = BaselineConfig {
            degree: 1,
            smooth_window: 1,
            ..BaselineConfig::default()
        };
        let out = baseline_impute(&r, &cfg).unwrap();
        for (a, b) in out.lai().iter().zip(&truth) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-9);
        }
    }

    #[test]
    fn all_observed_is_unchanged() {
        let r = gapped(vec![1.0, 2.0, 3.0], vec![true; 3], vec![-9.0, -8.0, -7.0]);
        for method in [Method::Poly, Method::Exp] {
            let cfg = BaselineConfig {
                method,
                ..BaselineConfig::default()
            };
            assert_eq!(baseline_impute(&r, &cfg).unwrap(), r);
        }
    }

    proptest! {
        #[test]
        fn exact_polynomials_are_recovered(
            coef in proptest::collection::vec(-3.0f64..3.0, 1..=4),
            x0 in -14.0f64..-4.0,
        ) {
            let deg = coef.len() - 1;
            let x: Vec<f64> = (0..12).map(|i| x0 + i as f64 * 0.5).collect();
            let y: Vec<f64> = x.iter().map(|&v| PolyModel::from_raw(coef.clone()).eval(v)).collect();
            let m = poly_fit(&x, &y, deg).unwrap();
            for &v in &x {
                let want = PolyModel::from_raw(coef.clone()).eval(v);
                prop_assert!((m.eval(v) - want).abs() <= 1e-9 * (1.0 + want.abs()));
            }
        }

        #[test]
        fn gauss_newton_is_monotone(
            a in 0.05f64..3.0,
            b in 0.1f64..0.6,
            c in -1.0f64..1.0,
            seed in 0u64..1000,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x: Vec<f64> = (0..15).map(|i| -14.0 + i as f64 * 0.6).collect();
            let y: Vec<f64> = x.iter().map(|v| a * (b * (v + 10.0)).exp() + c + rng.random_range(-0.1..0.1)).collect();
            if let Ok(fit) = exp_fit_traced(&x, &y) {
                prop_assert!(fit.trace.windows(2).all(|w| w[1] <= w[0]));
                let init_ss: f64 = x.iter().zip(&y).map(|(&xi, &yi)| (yi - fit.init.eval(xi)).powi(2)).sum();
                let fit_ss: f64 = x.iter().zip(&y).map(|(&xi, &yi)| (yi - fit.model.eval(xi)).powi(2)).sum();
                prop_assert!(fit_ss <= init_ss * (1.0 + 1e-9) + 1e-12);
            }
        }

        #[test]
        fn observed_lai_never_altered(seed in 0u64..500, method in prop_oneof![Just(Method::Poly), Just(Method::Exp)]) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = 20;
            let vhvv: Vec<f64> = (0..n).map(|_| rng.random_range(-14.0..-6.0)).collect();
            let lai: Vec<f64> = vhvv.iter().map(|v| (v + 15.0) * 0.6 + rng.random_range(0.0..0.3)).collect();
            let mask: Vec<bool> = (0..n).map(|i| i < 2 || rng.random::<f64>() < 0.6).collect();
            let r = gapped(lai, mask, vhvv);
            let cfg = BaselineConfig { method, ..BaselineConfig::default() };
            if let Ok(out) = baseline_impute(&r, &cfg) {
                for i in 0..n {
                    if r.lai_mask()[i] {
                        prop_assert_eq!(out.lai()[i], r.lai()[i]);
                    }
                }
            }
        }
    }
}
