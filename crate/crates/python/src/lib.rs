//! Python bindings: records, CSV I/O, synthetic data, training and
//! imputation, baselines, the speckle filter and the benchmark.

use std::collections::BTreeMap;

use laimpute::baselines::{self, BaselineConfig};
use laimpute::eval::{self, BenchmarkConfig};
use laimpute::kv::{KvConfig, KvMap};
use laimpute::net::{self, init_params, Arch, Dims};
use laimpute::sar::{self, QueganParams, RasterStack};
use laimpute::series::{self, TimeSeriesRecord};
use laimpute::synth::{self, PhenologyConfig};
use laimpute::train::{self, GradProblem, TrainConfig, FEATURES};
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyBool, PyDict};

fn py_err(e: laimpute::Error) -> PyErr {
    match e {
        laimpute::Error::Io(io) => PyIOError::new_err(io.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

/// `{key: value}` to a key-value map; values go through `str()`, booleans
/// become `true`/`false`.
fn kv_from_dict(dict: Option<&Bound<'_, PyDict>>) -> PyResult<KvMap> {
    let mut map = KvMap::new();
    if let Some(d) = dict {
        for (k, v) in d.iter() {
            let key: String = k.extract()?;
            let value = if v.is_instance_of::<PyBool>() {
                v.extract::<bool>()?.to_string()
            } else {
                v.str()?.to_string()
            };
            map.insert(key, value);
        }
    }
    Ok(map)
}

fn config<T: KvConfig>(dict: Option<&Bound<'_, PyDict>>) -> PyResult<T> {
    T::from_kv(&kv_from_dict(dict)?).map_err(py_err)
}

fn split_optional(values: &[Option<f64>]) -> (Vec<f64>, Vec<bool>) {
    values.iter().map(|v| (v.unwrap_or(0.0), v.is_some())).unzip()
}

fn join_optional(values: &[f64], mask: &[bool]) -> Vec<Option<f64>> {
    values.iter().zip(mask).map(|(&v, &m)| m.then_some(v)).collect()
}

/// One series; missing values are `None`.
#[pyclass(name = "Record", frozen, from_py_object, module = "laimpute_py")]
#[derive(Clone)]
struct Record {
    inner: TimeSeriesRecord,
}

#[pymethods]
impl Record {
    #[new]
    fn new(series_id: String, times: Vec<f64>, lai: Vec<Option<f64>>, vhvv: Vec<Option<f64>>) -> PyResult<Self> {
        let (lai, lai_mask) = split_optional(&lai);
        let (vhvv, vhvv_mask) = split_optional(&vhvv);
        TimeSeriesRecord::new(series_id, times, lai, lai_mask, vhvv, vhvv_mask)
            .map(|inner| Self { inner })
            .map_err(py_err)
    }

    #[getter]
    fn series_id(&self) -> &str {
        self.inner.series_id()
    }

    #[getter]
    fn times(&self) -> Vec<f64> {
        self.inner.times().to_vec()
    }

    #[getter]
    fn lai(&self) -> Vec<Option<f64>> {
        join_optional(self.inner.lai(), self.inner.lai_mask())
    }

    #[getter]
    fn vhvv(&self) -> Vec<Option<f64>> {
        join_optional(self.inner.vhvv(), self.inner.vhvv_mask())
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __eq__(&self, other: &Record) -> bool {
        self.inner == other.inner
    }

    fn __repr__(&self) -> String {
        let observed = self.inner.lai_mask().iter().filter(|&&m| m).count();
        format!(
            "Record({:?}, steps={}, lai_observed={observed})",
            self.inner.series_id(),
            self.inner.len()
        )
    }
}

fn wrap(records: Vec<TimeSeriesRecord>) -> Vec<Record> {
    records.into_iter().map(|inner| Record { inner }).collect()
}

fn unwrap(records: &[Record]) -> Vec<TimeSeriesRecord> {
    records.iter().map(|r| r.inner.clone()).collect()
}

/// A trained network with its normalization statistics.
#[pyclass(name = "Imputer", frozen, module = "laimpute_py")]
struct Imputer {
    inner: train::Imputer,
    loss_trace: Vec<f64>,
}

#[pymethods]
impl Imputer {
    /// Train on `records`; `config` holds training keys such as `epochs`.
    #[staticmethod]
    #[pyo3(signature = (records, arch = "bilstm", config = None))]
    fn train(py: Python<'_>, records: Vec<Record>, arch: &str, config: Option<&Bound<'_, PyDict>>) -> PyResult<Self> {
        let arch: Arch = arch.parse().map_err(py_err)?;
        let cfg: TrainConfig = self::config(config)?;
        let records = unwrap(&records);
        let outcome = py.detach(|| train::train(&records, arch, &cfg)).map_err(py_err)?;
        Ok(Self {
            inner: outcome.imputer,
            loss_trace: outcome.loss_trace,
        })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let ckpt = net::load_checkpoint(path).map_err(py_err)?;
        Ok(Self {
            inner: train::Imputer::from_checkpoint(ckpt).map_err(py_err)?,
            loss_trace: Vec::new(),
        })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        net::save_checkpoint(&self.inner.to_checkpoint(), path).map_err(py_err)
    }

    fn impute(&self, record: &Record) -> PyResult<Record> {
        self.inner
            .impute(&record.inner)
            .map(|inner| Record { inner })
            .map_err(py_err)
    }

    /// Masked half-MSE in inference mode, averaged over records.
    fn loss(&self, records: Vec<Record>) -> PyResult<f64> {
        train::evaluate_loss(&self.inner, &unwrap(&records)).map_err(py_err)
    }

    #[getter]
    fn arch(&self) -> String {
        self.inner.params.arch().to_string()
    }

    #[getter]
    fn n_params(&self) -> usize {
        self.inner.params.len()
    }

    /// Per-epoch training loss; empty for a loaded checkpoint.
    #[getter]
    fn loss_trace(&self) -> Vec<f64> {
        self.loss_trace.clone()
    }
}

#[pyfunction]
fn read_csv(path: &str) -> PyResult<Vec<Record>> {
    series::read_csv(path).map(wrap).map_err(py_err)
}

#[pyfunction]
fn write_csv(records: Vec<Record>, path: &str) -> PyResult<()> {
    series::write_csv(&unwrap(&records), path).map_err(py_err)
}

/// Synthetic corpus: returns `(gapped, truth)`.
#[pyfunction]
#[pyo3(signature = (n_series, config = None))]
fn simulate(n_series: usize, config: Option<&Bound<'_, PyDict>>) -> PyResult<(Vec<Record>, Vec<Record>)> {
    let cfg: PhenologyConfig = self::config(config)?;
    let data = synth::gen_dataset(&cfg, n_series).map_err(py_err)?;
    Ok((wrap(data.gapped), wrap(data.truth)))
}

#[pyfunction]
#[pyo3(signature = (record, method = "poly", degree = 3, smooth_window = 5))]
fn baseline_impute(record: &Record, method: &str, degree: usize, smooth_window: usize) -> PyResult<Record> {
    let cfg = BaselineConfig {
        method: method.parse().map_err(py_err)?,
        degree,
        smooth_window,
    };
    baselines::baseline_impute(&record.inner, &cfg)
        .map(|inner| Record { inner })
        .map_err(py_err)
}

/// Raw-x polynomial coefficients, constant term first.
#[pyfunction]
fn poly_fit(x: Vec<f64>, y: Vec<f64>, degree: usize) -> PyResult<Vec<f64>> {
    baselines::poly_fit(&x, &y, degree)
        .map(|m| m.raw_coefficients())
        .map_err(py_err)
}

/// `(a, b, c)` of `a·exp(b·x) + c`.
#[pyfunction]
fn exp_fit(x: Vec<f64>, y: Vec<f64>) -> PyResult<(f64, f64, f64)> {
    baselines::exp_fit(&x, &y).map(|m| (m.a, m.b, m.c)).map_err(py_err)
}

/// Band-sequential row-major intensities in, `(denoised, variance)` out.
#[pyfunction]
#[pyo3(signature = (width, height, times, data, window = 14, looks = 4.0))]
fn quegan_filter(
    width: usize,
    height: usize,
    times: Vec<f64>,
    data: Vec<f32>,
    window: usize,
    looks: f64,
) -> PyResult<(Vec<f32>, Vec<f32>)> {
    let stack = RasterStack::new(width, height, times, data).map_err(py_err)?;
    let params = QueganParams {
        window,
        looks,
        ..QueganParams::default()
    };
    let out = sar::quegan_filter(&stack, &params).map_err(py_err)?;
    Ok((out.denoised.data().to_vec(), out.variance.data().to_vec()))
}

/// Worst relative error between analytic and central-difference gradients.
#[pyfunction]
#[pyo3(signature = (arch = "bilstm", hidden = 60, dense = 50, steps = 3, seed = 0))]
fn gradient_check(py: Python<'_>, arch: &str, hidden: usize, dense: usize, steps: usize, seed: u64) -> PyResult<f64> {
    let arch: Arch = arch.parse().map_err(py_err)?;
    py.detach(|| {
        let params = init_params(seed, arch, Dims::new(FEATURES, hidden, dense, 1), 0.5)?;
        let problem = GradProblem::random(seed, steps, FEATURES, 1);
        train::gradient_check(&params, &problem, 1e-5, 1e-6).map(|r| r.worst_rel_error)
    })
    .map_err(py_err)
}

/// Runs the benchmark and returns the flat report.
#[pyfunction]
#[pyo3(signature = (gapped, truth, methods = "bilstm,lstm,poly,exp", config = None))]
fn benchmark(
    py: Python<'_>,
    gapped: Vec<Record>,
    truth: Vec<Record>,
    methods: &str,
    config: Option<&Bound<'_, PyDict>>,
) -> PyResult<BTreeMap<String, String>> {
    let cfg: BenchmarkConfig = self::config(config)?;
    let methods = eval::Method::parse_list(methods).map_err(py_err)?;
    let (gapped, truth) = (unwrap(&gapped), unwrap(&truth));
    let outcome = py
        .detach(|| eval::run_benchmark(&gapped, &truth, &methods, &cfg))
        .map_err(py_err)?;
    let kv = outcome.report.to_kv();
    Ok(kv
        .keys()
        .map(|k| (k.to_string(), kv.get_str(k).unwrap_or_default().to_string()))
        .collect())
}

#[pymodule]
fn laimpute_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Record>()?;
    m.add_class::<Imputer>()?;
    m.add_function(wrap_pyfunction!(read_csv, m)?)?;
    m.add_function(wrap_pyfunction!(write_csv, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(baseline_impute, m)?)?;
    m.add_function(wrap_pyfunction!(poly_fit, m)?)?;
    m.add_function(wrap_pyfunction!(exp_fit, m)?)?;
    m.add_function(wrap_pyfunction!(quegan_filter, m)?)?;
    m.add_function(wrap_pyfunction!(gradient_check, m)?)?;
    m.add_function(wrap_pyfunction!(benchmark, m)?)?;
    Ok(())
}
