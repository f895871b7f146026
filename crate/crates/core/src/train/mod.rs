//! Loss, backpropagation, gradient checking, the mini-batch training loop
//! and imputation with a trained network.
//!
//! Each time step feeds four features to the network:
//! `[vhvv, vhvv_mask, lai, lai_mask]`, values normalized and missing entries
//! zero. The target is the normalized LAI, masked where LAI is missing.

pub mod backward;
pub mod gradcheck;
pub mod loss;
pub mod optim;
pub mod subsample;

pub use backward::backward;
pub use gradcheck::{compare_gradients, gradient_check, GradCheckReport, GradProblem};
pub use loss::{batch_loss, half_mse_loss, LossValue};
pub use optim::{clip_global_norm, Adam};
pub use subsample::{hide_lai_inputs, subsample};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kv::{KvConfig, KvMap};
use crate::net::{forward_cached, init_params, predict, Arch, Checkpoint, Dims, NetworkParams};
use crate::series::{compute_stats, normalize, NormStats, TimeSeriesRecord};
use backward::gradient_from_cache;

pub const FEATURES: usize = 4;
pub const VHVV: usize = 0;
pub const VHVV_MASK: usize = 1;
pub const LAI: usize = 2;
pub const LAI_MASK: usize = 3;

/// Stream of the training-loop generator; init uses streams 1..=12.
const TRAIN_STREAM: u64 = 1 << 20;

fn bit(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

/// T × [`FEATURES`] input matrix of an (already normalized) record.
pub fn features(record: &TimeSeriesRecord) -> Vec<f64> {
    let mut out = Vec::with_capacity(record.len() * FEATURES);
    for i in 0..record.len() {
        out.extend_from_slice(&[
            record.vhvv()[i],
            bit(record.vhvv_mask()[i]),
            record.lai()[i],
            bit(record.lai_mask()[i]),
        ]);
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub min_len: usize,
    pub max_len: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Global gradient-norm cap; `0` disables clipping.
    pub clip: f64,
    pub hidden: usize,
    pub dense: usize,
    pub dropout: f64,
    /// Stationary fraction of observed LAI inputs hidden per training window.
    pub hide_rate: f64,
    /// Mean length (steps) of a hidden run.
    pub hide_mean_run: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 8,
            epochs: 100,
            learning_rate: 1e-3,
            seed: 0,
            min_len: 8,
            max_len: 69,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip: 5.0,
            hidden: 60,
            dense: 50,
            dropout: 0.5,
            hide_rate: 0.3,
            hide_mean_run: 3.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, msg: &str| {
            Err(Error::Config {
                key: key.into(),
                msg: msg.into(),
            })
        };
        if self.batch_size == 0 {
            return bad("batch_size", "must be positive");
        }
        if self.epochs == 0 {
            return bad("epochs", "must be positive");
        }
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate", "must be positive");
        }
        if self.min_len < 2 {
            return bad("min_len", "must be at least 2");
        }
        if self.min_len > self.max_len {
            return bad("max_len", "must be at least min_len");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("beta1", "betas must lie in [0, 1)");
        }
        if !(self.eps > 0.0) {
            return bad("eps", "must be positive");
        }
        if !(self.clip >= 0.0) {
            return bad("clip", "must be non-negative");
        }
        if self.hidden == 0 || self.dense == 0 {
            return bad("hidden", "layer sizes must be positive");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout", "must lie in [0, 1)");
        }
        if !(0.0..1.0).contains(&self.hide_rate) {
            return bad("hide_rate", "must lie in [0, 1)");
        }
        if !(self.hide_mean_run >= 1.0) {
            return bad("hide_mean_run", "must be at least 1");
        }
        Ok(())
    }

    pub fn dims(&self) -> Dims {
        Dims::new(FEATURES, self.hidden, self.dense, 1)
    }
}

impl KvConfig for TrainConfig {
    const KEYS: &'static [&'static str] = &[
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

    fn apply(&mut self, map: &KvMap) -> Result<()> {
        map.update("batch_size", &mut self.batch_size)?;
        map.update("epochs", &mut self.epochs)?;
        map.update("learning_rate", &mut self.learning_rate)?;
        map.update("seed", &mut self.seed)?;
        map.update("min_len", &mut self.min_len)?;
        map.update("max_len", &mut self.max_len)?;
        map.update("beta1", &mut self.beta1)?;
        map.update("beta2", &mut self.beta2)?;
        map.update("eps", &mut self.eps)?;
        map.update("clip", &mut self.clip)?;
        map.update("hidden", &mut self.hidden)?;
        map.update("dense", &mut self.dense)?;
        map.update("dropout", &mut self.dropout)?;
        map.update("hide_rate", &mut self.hide_rate)?;
        map.update("hide_mean_run", &mut self.hide_mean_run)?;
        self.validate()
    }

    fn to_kv(&self) -> KvMap {
        let mut m = KvMap::new();
        m.insert("batch_size", self.batch_size);
        m.insert("epochs", self.epochs);
        m.insert("learning_rate", self.learning_rate);
        m.insert("seed", self.seed);
        m.insert("min_len", self.min_len);
        m.insert("max_len", self.max_len);
        m.insert("beta1", self.beta1);
        m.insert("beta2", self.beta2);
        m.insert("eps", self.eps);
        m.insert("clip", self.clip);
        m.insert("hidden", self.hidden);
        m.insert("dense", self.dense);
        m.insert("dropout", self.dropout);
        m.insert("hide_rate", self.hide_rate);
        m.insert("hide_mean_run", self.hide_mean_run);
        m
    }
}

/// A trained network together with the normalization it was trained under.
#[derive(Debug, Clone, PartialEq)]
pub struct Imputer {
    pub params: NetworkParams,
    pub stats: NormStats,
}

impl Imputer {
    pub fn impute(&self, record: &TimeSeriesRecord) -> Result<TimeSeriesRecord> {
        impute(record, &self.params, &self.stats)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            params: self.params.clone(),
            stats: Some(self.stats),
        }
    }

    pub fn from_checkpoint(ckpt: Checkpoint) -> Result<Self> {
        let stats = ckpt
            .stats
            .ok_or_else(|| Error::Checkpoint("checkpoint carries no normalization statistics".into()))?;
        check_layout(&ckpt.params)?;
        stats.validate()?;
        Ok(Self {
            params: ckpt.params,
            stats,
        })
    }
}

fn check_layout(params: &NetworkParams) -> Result<()> {
    let d = params.dims();
    if d.input != FEATURES || d.output != 1 {
        return Err(Error::FeatureLayout(format!(
            "network maps {} inputs to {} outputs, imputation needs {FEATURES} -> 1",
            d.input, d.output
        )));
    }
    Ok(())
}

/// Fills every LAI gap with the denormalized network prediction. Observed
/// LAI values are copied through unchanged; the output LAI mask is all true.
pub fn impute(record: &TimeSeriesRecord, params: &NetworkParams, stats: &NormStats) -> Result<TimeSeriesRecord> {
    check_layout(params)?;
    if record.lai_mask().iter().all(|&m| m) {
        return Ok(record.clone());
    }
    let norm = normalize(record, stats)?;
    let pred = predict(params, &features(&norm))?;
    let lai = record
        .lai()
        .iter()
        .zip(record.lai_mask())
        .zip(&pred)
        .map(|((&v, &m), &z)| if m { v } else { stats.lai.denormalize(z) })
        .collect();
    record.with_lai(lai, vec![true; record.len()])
}

/// Inference-mode masked loss of `records` under `imputer`, averaged over the
/// records that have at least one observed LAI value.
pub fn evaluate_loss(imputer: &Imputer, records: &[TimeSeriesRecord]) -> Result<f64> {
    let losses = records
        .par_iter()
        .filter(|r| subsample::has_lai(r))
        .map(|r| {
            let norm = normalize(r, &imputer.stats)?;
            let pred = predict(&imputer.params, &features(&norm))?;
            half_mse_loss(&pred, norm.lai(), norm.lai_mask(), 1)
        })
        .collect::<Result<Vec<_>>>()?;
    batch_loss(&losses)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub imputer: Imputer,
    /// Mean training-mode batch loss per epoch.
    pub loss_trace: Vec<f64>,
    /// Window draws dropped because they held no observed LAI.
    pub skipped: usize,
}

/// One prepared training sequence.
struct Item {
    inputs: Vec<f64>,
    target: Vec<f64>,
    mask: Vec<bool>,
    dropout_seed: u64,
}

/// Trains a fresh network on `records`. Normalization statistics come from
/// the whole corpus; every random choice (initialization, shuffling,
/// windows, hiding, dropout) derives from `config.seed`, and per-sequence
/// gradients are reduced in batch order, so results do not depend on the
/// thread count.
pub fn train(records: &[TimeSeriesRecord], arch: Arch, config: &TrainConfig) -> Result<TrainOutcome> {
    train_with(records, arch, config, |_, _| {})
}

/// [`train`] with a callback receiving `(epoch, mean_loss)` after each epoch.
pub fn train_with(
    records: &[TimeSeriesRecord],
    arch: Arch,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(usize, f64),
) -> Result<TrainOutcome> {
    config.validate()?;
    if records.is_empty() {
        return Err(Error::InsufficientData("empty training corpus".into()));
    }
    let stats = compute_stats(records)?;
    let usable: Vec<TimeSeriesRecord> = records
        .iter()
        .filter(|r| r.len() >= config.min_len && subsample::has_lai(r))
        .map(|r| normalize(r, &stats))
        .collect::<Result<_>>()?;
    if usable.is_empty() {
        return Err(Error::InsufficientData(format!(
            "no record has {} or more steps and an observed LAI value",
            config.min_len
        )));
    }

    let mut params = init_params(config.seed, arch, config.dims(), config.dropout)?;
    let mut adam = Adam::new(
        params.len(),
        config.learning_rate,
        config.beta1,
        config.beta2,
        config.eps,
    );
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(TRAIN_STREAM);

    let mut order: Vec<usize> = (0..usable.len()).collect();
    let mut loss_trace = Vec::with_capacity(config.epochs);
    let mut skipped = 0;
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_sum = 0.0;
        let mut epoch_batches = 0usize;
        for chunk in order.chunks(config.batch_size) {
            let mut items = Vec::with_capacity(chunk.len());
            for &idx in chunk {
                let window = match subsample(&usable[idx], &mut rng, config.min_len, config.max_len) {
                    Ok(w) => w,
                    Err(Error::NoObservation) => {
                        skipped += 1;
                        continue;
                    }
                    Err(e) => return Err(e),
                };
                let mut inputs = features(&window);
                hide_lai_inputs(&mut inputs, &mut rng, config.hide_rate, config.hide_mean_run);
                items.push(Item {
                    inputs,
                    target: window.lai().to_vec(),
                    mask: window.lai_mask().to_vec(),
                    dropout_seed: rng.random(),
                });
            }
            if items.is_empty() {
                continue;
            }
            let results = items
                .par_iter()
                .map(|it| {
                    let mut drng = ChaCha8Rng::seed_from_u64(it.dropout_seed);
                    let cache = forward_cached(&params, &it.inputs, true, &mut drng)?;
                    gradient_from_cache(&params, &it.inputs, &it.target, &it.mask, &cache)
                })
                .collect::<Result<Vec<_>>>()?;
            let mut grad = vec![0.0; params.len()];
            let mut losses = Vec::with_capacity(results.len());
            for (loss, g) in &results {
                losses.push(*loss);
                for (a, b) in grad.iter_mut().zip(g) {
                    *a += b;
                }
            }
            let inv = 1.0 / results.len() as f64;
            grad.iter_mut().for_each(|g| *g *= inv);
            clip_global_norm(&mut grad, config.clip);
            adam.step(params.values_mut(), &grad);
            epoch_sum += batch_loss(&losses)?;
            epoch_batches += 1;
        }
        let mean = if epoch_batches > 0 {
            epoch_sum / epoch_batches as f64
        } else {
            f64::NAN
        };
        loss_trace.push(mean);
        on_epoch(epoch, mean);
    }
    Ok(TrainOutcome {
        imputer: Imputer { params, stats },
        loss_trace,
        skipped,
    })
}

/// `epoch,mean_loss` CSV text of a loss trace.
pub fn loss_trace_csv(trace: &[f64]) -> String {
    let mut out = String::from("epoch,mean_loss\n");
    for (i, v) in trace.iter().enumerate() {
        out.push_str(&format!("{i},{v}\n"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::ChannelStats;

    fn sparse_example() -> TimeSeriesRecord {
        let nan = f64::NAN;
        let lai = [0.32, nan, 0.43, 0.53, nan, nan, nan, 1.8, 2.16, nan, nan];
        let vhvv = [nan, -8.28, nan, -7.85, -7.56, -7.21, -6.84, nan, -6.12, -5.83, -5.65];
        let times: Vec<f64> = (0..11).map(|i| 31.0 + 5.0 * i as f64).collect();
        TimeSeriesRecord::new(
            "sparse",
            times,
            lai.iter().map(|v| if v.is_nan() { 0.0 } else { *v }).collect(),
            lai.iter().map(|v| !v.is_nan()).collect(),
            vhvv.iter().map(|v| if v.is_nan() { 0.0 } else { *v }).collect(),
            vhvv.iter().map(|v| !v.is_nan()).collect(),
        )
        .unwrap()
    }

    fn small_config() -> TrainConfig {
        TrainConfig {
            epochs: 3,
            hidden: 5,
            dense: 4,
            batch_size: 2,
            min_len: 4,
            max_len: 8,
            ..TrainConfig::default()
        }
    }

    fn corpus() -> Vec<TimeSeriesRecord> {
        (0..5)
            .map(|k| {
                let n = 12;
                let t: Vec<f64> = (0..n).map(|i| i as f64 * 3.0).collect();
                let lai: Vec<f64> = (0..n).map(|i| 1.0 + (i as f64 * 0.4 + k as f64).sin()).collect();
                let vh: Vec<f64> = lai.iter().map(|l| -12.0 + l).collect();
                let mask: Vec<bool> = (0..n).map(|i| (i + k) % 3 != 0).collect();
                TimeSeriesRecord::new(format!("s{k}"), t, lai, mask, vh, vec![true; n]).unwrap()
            })
            .collect()
    }

    #[test]
    fn feature_layout() {
        let f = features(&sparse_example());
        assert_eq!(f.len(), 11 * FEATURES);
        assert_eq!(&f[0..4], &[0.0, 0.0, 0.32, 1.0]);
        assert_eq!(&f[4..8], &[-8.28, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn sparse_example_pass_through() {
        let r = sparse_example();
        let stats = compute_stats(std::slice::from_ref(&r)).unwrap();
        let params = init_params(0, Arch::BiLstm, TrainConfig::default().dims(), 0.5).unwrap();
        let out = impute(&r, &params, &stats).unwrap();
        for (i, v) in [(0, 0.32), (2, 0.43), (3, 0.53), (7, 1.8), (8, 2.16)] {
            assert_eq!(out.lai()[i], v);
        }
        assert!(out.lai().iter().all(|v| v.is_finite()));
        assert!(out.lai_mask().iter().all(|&m| m));
        // second pass sees a complete record
        assert_eq!(impute(&out, &params, &stats).unwrap(), out);
    }

    #[test]
    fn fully_observed_is_unchanged() {
        let r = TimeSeriesRecord::fully_observed("a", vec![0.0, 1.0], vec![1.0, 2.0], vec![-9.0, -8.0]).unwrap();
        let params = init_params(0, Arch::Lstm, Dims::new(4, 3, 2, 1), 0.0).unwrap();
        assert_eq!(impute(&r, &params, &NormStats::IDENTITY).unwrap(), r);
    }

    #[test]
    fn layout_mismatch_is_rejected() {
        let params = init_params(0, Arch::Lstm, Dims::new(3, 3, 2, 1), 0.0).unwrap();
        assert!(matches!(
            impute(&sparse_example(), &params, &NormStats::IDENTITY),
            Err(Error::FeatureLayout(_))
        ));
    }

    #[test]
    fn training_is_deterministic() {
        let c = corpus();
        let a = train(&c, Arch::BiLstm, &small_config()).unwrap();
        let b = train(&c, Arch::BiLstm, &small_config()).unwrap();
        let bits = |t: &[f64]| t.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a.loss_trace), bits(&b.loss_trace));
        assert_eq!(a.imputer, b.imputer);
        let other = train(
            &c,
            Arch::BiLstm,
            &TrainConfig {
                seed: 1,
                ..small_config()
            },
        )
        .unwrap();
        assert_ne!(bits(&a.loss_trace), bits(&other.loss_trace));
    }

    #[test]
    fn empty_and_short_corpora_fail() {
        assert!(train(&[], Arch::Lstm, &small_config()).is_err());
        let short = TimeSeriesRecord::fully_observed("s", vec![0.0, 1.0], vec![1.0, 2.0], vec![-9.0, -8.0]).unwrap();
        assert!(matches!(
            train(&[short], Arch::Lstm, &small_config()),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn checkpoint_conversion() {
        let imp = Imputer {
            params: init_params(2, Arch::BiLstm, Dims::new(4, 3, 2, 1), 0.5).unwrap(),
            stats: NormStats {
                lai: ChannelStats { mean: 2.0, std: 1.5 },
                vhvv: ChannelStats { mean: -9.0, std: 1.2 },
            },
        };
        assert_eq!(Imputer::from_checkpoint(imp.to_checkpoint()).unwrap(), imp);
        let bare = Checkpoint {
            params: imp.params.clone(),
            stats: None,
        };
        assert!(Imputer::from_checkpoint(bare).is_err());
    }

    #[test]
    fn config_kv_round_trip() {
        let cfg = TrainConfig {
            epochs: 7,
            learning_rate: 2.5e-4,
            clip: 0.0,
            ..TrainConfig::default()
        };
        assert_eq!(TrainConfig::from_kv(&cfg.to_kv()).unwrap(), cfg);
        let bad = KvMap::parse("epochz=3").unwrap();
        assert!(TrainConfig::from_kv(&bad).is_err());
        let inverted = KvMap::parse("min_len=10\nmax_len=9").unwrap();
        assert!(TrainConfig::from_kv(&inverted).is_err());
    }

    #[test]
    fn loss_trace_csv_format() {
        assert_eq!(loss_trace_csv(&[0.5, 0.25]), "epoch,mean_loss\n0,0.5\n1,0.25\n");
    }
}
