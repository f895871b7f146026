//! RMSE scoring and the four-method imputation benchmark.
//!
//! Only points whose LAI was masked in the gapped corpus are scored; observed
//! points are passed through by every method and would deflate the error.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;

use crate::baselines::{self, BaselineConfig};
use crate::error::{Error, Result};
use crate::kv::{KvConfig, KvMap};
use crate::net::Arch;
use crate::series::TimeSeriesRecord;
use crate::synth::PhenologyConfig;
use crate::train::{train, TrainConfig};

/// `sqrt(mean((pred - reference)^2))` over the selected points.
pub fn rmse(pred: &[f64], reference: &[f64], selector: &[bool]) -> Result<f64> {
    if pred.len() != reference.len() || pred.len() != selector.len() {
        return Err(Error::dims(format!(
            "pred {}, reference {}, selector {} differ in length",
            pred.len(),
            reference.len(),
            selector.len()
        )));
    }
    let mut acc = SquaredError::default();
    for ((&p, &r), &s) in pred.iter().zip(reference).zip(selector) {
        if s {
            acc.add(p - r);
        }
    }
    acc.rmse()
        .ok_or_else(|| Error::InsufficientData("no selected points".into()))
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct SquaredError {
    sum: f64,
    count: usize,
}

impl SquaredError {
    fn add(&mut self, d: f64) {
        self.sum += d * d;
        self.count += 1;
    }

    fn merge(&mut self, o: SquaredError) {
        self.sum += o.sum;
        self.count += o.count;
    }

    fn rmse(&self) -> Option<f64> {
        (self.count > 0).then(|| (self.sum / self.count as f64).sqrt())
    }

    fn score(&self) -> Score {
        Score {
            rmse: self.rmse(),
            count: self.count,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    BiLstm,
    Lstm,
    Poly,
    Exp,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::BiLstm, Method::Lstm, Method::Poly, Method::Exp];

    pub fn name(self) -> &'static str {
        match self {
            Method::BiLstm => "bilstm",
            Method::Lstm => "lstm",
            Method::Poly => "poly",
            Method::Exp => "exp",
        }
    }

    /// Parses a comma-separated method list.
    pub fn parse_list(s: &str) -> Result<Vec<Method>> {
        let mut out: Vec<Method> = Vec::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let m: Method = part.parse()?;
            if !out.contains(&m) {
                out.push(m);
            }
        }
        if out.is_empty() {
            return Err(Error::param("empty method list"));
        }
        Ok(out)
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bilstm" => Ok(Method::BiLstm),
            "lstm" => Ok(Method::Lstm),
            "poly" | "polynomial" => Ok(Method::Poly),
            "exp" | "exponential" => Ok(Method::Exp),
            other => Err(Error::param(format!("unknown method {other:?}"))),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkConfig {
    /// The first `n_train` series train the networks; the rest are scored.
    pub n_train: usize,
    /// Scored points at or after this day count as senescence.
    pub senescence_start: f64,
    pub degree: usize,
    pub smooth_window: usize,
    pub train: TrainConfig,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            n_train: 200,
            senescence_start: PhenologyConfig::default().t2,
            degree: 3,
            smooth_window: 5,
            train: TrainConfig {
                epochs: 60,
                ..TrainConfig::default()
            },
        }
    }
}

impl BenchmarkConfig {
    fn baseline(&self, method: baselines::Method) -> BaselineConfig {
        BaselineConfig {
            method,
            degree: self.degree,
            smooth_window: self.smooth_window,
        }
    }
}

impl KvConfig for BenchmarkConfig {
    const KEYS: &'static [&'static str] = &[
        "n_train",
        "senescence_start",
        "degree",
        "smooth_window",
        "batch_size",
        "epochs",
        "learning_rate",
        "seed",
        "min_len",
        "max_len",
        "beta1",
        "beta2",
        "eps",
        "clip",
        "hidden",
        "dense",
        "dropout",
        "hide_rate",
        "hide_mean_run",
    ];

    fn apply(&mut self, m: &KvMap) -> Result<()> {
        m.update("n_train", &mut self.n_train)?;
        m.update("senescence_start", &mut self.senescence_start)?;
        m.update("degree", &mut self.degree)?;
        m.update("smooth_window", &mut self.smooth_window)?;
        self.train.apply(m)
    }

    fn to_kv(&self) -> KvMap {
        let mut m = self.train.to_kv();
        m.insert("n_train", self.n_train);
        m.insert("senescence_start", self.senescence_start);
        m.insert("degree", self.degree);
        m.insert("smooth_window", self.smooth_window);
        m
    }
}

/// Phenology of the standard benchmark: 40% cloud cover in contiguous runs
/// over the main season.
pub fn benchmark_phenology(seed: u64) -> PhenologyConfig {
    PhenologyConfig {
        gap_prob: 0.4,
        gap_mean_run: 6.0,
        gap_window: (40.0, 200.0),
        seed,
        ..PhenologyConfig::default()
    }
}

/// RMSE and number of scored points; `rmse` is `None` for an empty set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Score {
    pub rmse: Option<f64>,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodReport {
    pub method: Method,
    pub overall: Score,
    pub green_up: Score,
    pub senescence: Score,
    /// Per test series: `None` when nothing was scored or the method failed.
    pub per_series: Vec<(String, Option<f64>)>,
    /// Test series the method could not impute.
    pub failed: usize,
    /// First failure message, if any.
    pub first_error: Option<String>,
}

impl MethodReport {
    /// Every test series failed.
    pub fn wholly_failed(&self) -> bool {
        !self.per_series.is_empty() && self.failed == self.per_series.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub methods: Vec<MethodReport>,
    pub metadata: KvMap,
}

fn fmt_rmse(r: Option<f64>) -> String {
    r.map_or_else(|| "empty".into(), |v| v.to_string())
}

impl EvalReport {
    pub fn method(&self, m: Method) -> Option<&MethodReport> {
        self.methods.iter().find(|r| r.method == m)
    }

    pub fn to_kv(&self) -> KvMap {
        let mut kv = KvMap::new();
        for k in self.metadata.keys() {
            kv.insert(format!("meta.{k}"), self.metadata.get_str(k).unwrap_or_default());
        }
        for r in &self.methods {
            let p = format!("method.{}", r.method);
            for (seg, s) in [
                ("overall", r.overall),
                ("green_up", r.green_up),
                ("senescence", r.senescence),
            ] {
                kv.insert(format!("{p}.{seg}.rmse"), fmt_rmse(s.rmse));
                kv.insert(format!("{p}.{seg}.count"), s.count);
            }
            kv.insert(format!("{p}.failed"), r.failed);
            if let Some(e) = &r.first_error {
                kv.insert(format!("{p}.first_error"), e.replace('\n', " "));
            }
            for (id, v) in &r.per_series {
                kv.insert(format!("{p}.series.{id}"), fmt_rmse(*v));
            }
        }
        kv
    }

    pub fn to_text(&self) -> String {
        self.to_kv().to_text()
    }
}

/// Report plus the imputed test series, `None` where a method failed.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkOutcome {
    pub report: EvalReport,
    pub test_gapped: Vec<TimeSeriesRecord>,
    pub test_truth: Vec<TimeSeriesRecord>,
    pub imputations: BTreeMap<Method, Vec<Option<TimeSeriesRecord>>>,
}

fn check_pairs(gapped: &[TimeSeriesRecord], truth: &[TimeSeriesRecord]) -> Result<()> {
    if gapped.len() != truth.len() {
        return Err(Error::Alignment(format!(
            "{} gapped series but {} truth series",
            gapped.len(),
            truth.len()
        )));
    }
    for (g, t) in gapped.iter().zip(truth) {
        if g.series_id() != t.series_id() || g.times() != t.times() {
            return Err(Error::Alignment(format!(
                "series {:?} does not pair with truth {:?}",
                g.series_id(),
                t.series_id()
            )));
        }
        if let Some(i) = (0..g.len()).find(|&i| !g.lai_mask()[i] && !t.lai_mask()[i]) {
            return Err(Error::Alignment(format!(
                "truth for {:?} lacks LAI at step {i}",
                g.series_id()
            )));
        }
    }
    Ok(())
}

/// Trains the network methods on the first `n_train` gapped series, fits the
/// baselines per test series, imputes every test gap and scores the imputed
/// values against the truth corpus.
pub fn run_benchmark(
    gapped: &[TimeSeriesRecord],
    truth: &[TimeSeriesRecord],
    methods: &[Method],
    config: &BenchmarkConfig,
) -> Result<BenchmarkOutcome> {
    check_pairs(gapped, truth)?;
    if methods.is_empty() {
        return Err(Error::param("no methods requested"));
    }
    let needs_training = methods.iter().any(|m| matches!(m, Method::BiLstm | Method::Lstm));
    if needs_training && config.n_train == 0 {
        return Err(Error::InsufficientData("network methods need n_train > 0".into()));
    }
    if config.n_train >= gapped.len() {
        return Err(Error::InsufficientData(format!(
            "n_train = {} leaves no test series out of {}",
            config.n_train,
            gapped.len()
        )));
    }
    let (train_set, test_gapped) = gapped.split_at(config.n_train);
    let test_truth = &truth[config.n_train..];

    let mut imputations = BTreeMap::new();
    let mut reports = Vec::new();
    for &method in methods {
        let (outputs, errors): (Vec<Option<TimeSeriesRecord>>, Vec<Option<String>>) = match method {
            Method::BiLstm | Method::Lstm => {
                let arch = if method == Method::BiLstm {
                    Arch::BiLstm
                } else {
                    Arch::Lstm
                };
                match train(train_set, arch, &config.train) {
                    Ok(outcome) => test_gapped
                        .par_iter()
                        .map(|r| split(outcome.imputer.impute(r)))
                        .collect::<Vec<_>>()
                        .into_iter()
                        .unzip(),
                    Err(e) => (
                        vec![None; test_gapped.len()],
                        vec![Some(e.to_string()); test_gapped.len()],
                    ),
                }
            }
            Method::Poly | Method::Exp => {
                let bm = if method == Method::Poly {
                    baselines::Method::Poly
                } else {
                    baselines::Method::Exp
                };
                let cfg = config.baseline(bm);
                test_gapped
                    .par_iter()
                    .map(|r| split(baselines::baseline_impute(r, &cfg)))
                    .collect::<Vec<_>>()
                    .into_iter()
                    .unzip()
            }
        };
        reports.push(score(
            method,
            test_gapped,
            test_truth,
            &outputs,
            &errors,
            config.senescence_start,
        ));
        imputations.insert(method, outputs);
    }

    let mut metadata = KvMap::new();
    metadata.insert("n_train", config.n_train);
    metadata.insert("n_test", test_gapped.len());
    metadata.insert("train_seed", config.train.seed);
    metadata.insert("senescence_start", config.senescence_start);
    metadata.insert("config_digest", format!("{:016x}", config.to_kv().digest()));
    metadata.insert(
        "methods",
        methods.iter().map(|m| m.name()).collect::<Vec<_>>().join(","),
    );
    Ok(BenchmarkOutcome {
        report: EvalReport {
            methods: reports,
            metadata,
        },
        test_gapped: test_gapped.to_vec(),
        test_truth: test_truth.to_vec(),
        imputations,
    })
}

fn split(r: Result<TimeSeriesRecord>) -> (Option<TimeSeriesRecord>, Option<String>) {
    match r {
        Ok(v) => (Some(v), None),
        Err(e) => (None, Some(e.to_string())),
    }
}

fn score(
    method: Method,
    gapped: &[TimeSeriesRecord],
    truth: &[TimeSeriesRecord],
    outputs: &[Option<TimeSeriesRecord>],
    errors: &[Option<String>],
    boundary: f64,
) -> MethodReport {
    let mut overall = SquaredError::default();
    let mut green = SquaredError::default();
    let mut sen = SquaredError::default();
    let mut per_series = Vec::with_capacity(gapped.len());
    for ((g, t), out) in gapped.iter().zip(truth).zip(outputs) {
        let Some(out) = out else {
            per_series.push((g.series_id().to_string(), None));
            continue;
        };
        let mut series = SquaredError::default();
        for i in (0..g.len()).filter(|&i| !g.lai_mask()[i]) {
            let d = out.lai()[i] - t.lai()[i];
            series.add(d);
            if g.times()[i] < boundary {
                green.add(d);
            } else {
                sen.add(d);
            }
        }
        overall.merge(series);
        per_series.push((g.series_id().to_string(), series.rmse()));
    }
    MethodReport {
        method,
        overall: overall.score(),
        green_up: green.score(),
        senescence: sen.score(),
        per_series,
        failed: outputs.iter().filter(|o| o.is_none()).count(),
        first_error: errors.iter().flatten().next().cloned(),
    }
}

fn cell(v: f64) -> String {
    v.to_string()
}

/// Writes `<dir>/<series_id>.csv` for each selected series with columns
/// `time,truth,observed,<method>...` (empty where unobserved or failed) and
/// the report as `<dir>/report.txt`. Returns the written paths.
pub fn emit_plot_data(
    outcome: &BenchmarkOutcome,
    series_ids: &[String],
    dir: impl AsRef<Path>,
) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    let mut picks = Vec::with_capacity(series_ids.len());
    for id in series_ids {
        let idx = outcome
            .test_gapped
            .iter()
            .position(|r| r.series_id() == id)
            .ok_or_else(|| Error::param(format!("unknown test series {id:?}")))?;
        picks.push(idx);
    }
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for (id, idx) in series_ids.iter().zip(picks) {
        let g = &outcome.test_gapped[idx];
        let t = &outcome.test_truth[idx];
        let mut text = String::from("time,truth,observed");
        for m in outcome.imputations.keys() {
            text.push(',');
            text.push_str(m.name());
        }
        text.push('\n');
        for i in 0..g.len() {
            let observed = if g.lai_mask()[i] {
                cell(g.lai()[i])
            } else {
                String::new()
            };
            text.push_str(&format!("{},{},{}", cell(g.times()[i]), cell(t.lai()[i]), observed));
            for outs in outcome.imputations.values() {
                text.push(',');
                if let Some(r) = &outs[idx] {
                    text.push_str(&cell(r.lai()[i]));
                }
            }
            text.push('\n');
        }
        let path = dir.join(format!("{id}.csv"));
        fs::write(&path, text)?;
        written.push(path);
    }
    let report = dir.join("report.txt");
    fs::write(&report, outcome.report.to_text())?;
    written.push(report);
    Ok(written)
}
