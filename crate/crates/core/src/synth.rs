//! Synthetic stand-ins for Sentinel data: double-logistic LAI phenology, a
//! saturating VH/VV response, cloud-gap masking and gamma speckle stacks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kv::{KvConfig, KvMap};
use crate::net::math::sigmoid;
use crate::sar::RasterStack;
use crate::series::TimeSeriesRecord;

/// Redraws allowed when a gap draw hides every LAI value.
const GAP_RETRIES: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct PhenologyConfig {
    pub season_start: f64,
    pub season_end: f64,
    /// Spacing of the acquisition grid (days).
    pub step_days: f64,
    pub lai_min: f64,
    pub lai_max: f64,
    /// Green-up inflection (days).
    pub t1: f64,
    /// Senescence inflection (days).
    pub t2: f64,
    pub k1: f64,
    pub k2: f64,
    /// VH/VV floor at zero LAI (dB).
    pub alpha: f64,
    /// VH/VV dynamic range (dB).
    pub beta: f64,
    /// LAI scale of the exponential saturation.
    pub gamma: f64,
    /// LAI above which VH/VV stops responding; infinite disables.
    pub saturation_lai: f64,
    pub lai_noise_sd: f64,
    pub vhvv_noise_sd: f64,
    /// Stationary probability that an optical step is cloudy.
    pub gap_prob: f64,
    /// Mean cloudy run length (steps).
    pub gap_mean_run: f64,
    /// Days between which the cloud chain is active.
    pub gap_window: (f64, f64),
    /// Window (days) in which LAI is always masked.
    pub forced_gap: Option<(f64, f64)>,
    /// Probability of dropping a single VH/VV value where LAI is observed.
    pub vhvv_dropout: f64,
    /// Per-series uniform jitter of t1 and t2 (± days).
    pub t_jitter: f64,
    /// Per-series relative jitter of k1 and k2 (± fraction).
    pub k_jitter: f64,
    /// Per-series jitter of lai_max (± LAI).
    pub lai_max_jitter: f64,
    pub seed: u64,
}

impl Default for PhenologyConfig {
    fn default() -> Self {
        Self {
            season_start: 0.0,
            season_end: 240.0,
            step_days: 3.0,
            lai_min: 0.1,
            lai_max: 5.5,
            t1: 60.0,
            t2: 160.0,
            k1: 0.12,
            k2: 0.10,
            alpha: -14.0,
            beta: 8.0,
            gamma: 2.0,
            saturation_lai: f64::INFINITY,
            lai_noise_sd: 0.05,
            vhvv_noise_sd: 0.3,
            gap_prob: 0.3,
            gap_mean_run: 4.0,
            gap_window: (0.0, 240.0),
            forced_gap: None,
            vhvv_dropout: 0.05,
            t_jitter: 10.0,
            k_jitter: 0.2,
            lai_max_jitter: 0.8,
            seed: 0,
        }
    }
}

impl PhenologyConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, msg: String| Err(Error::Config { key: key.into(), msg });
        if !(self.lai_min >= 0.0) {
            return bad("lai_min", "must be non-negative".into());
        }
        if !(self.lai_max > self.lai_min) {
            return bad("lai_max", "must exceed lai_min".into());
        }
        if !(self.t1 < self.t2) {
            return bad("t1", "green-up must precede senescence".into());
        }
        if !(self.k1 > 0.0 && self.k2 > 0.0) {
            return bad("k1", "slopes must be positive".into());
        }
        if !(self.gamma > 0.0) {
            return bad("gamma", "must be positive".into());
        }
        if !(self.step_days > 0.0 && self.season_end > self.season_start) {
            return bad("step_days", "season grid is empty".into());
        }
        if !(self.lai_noise_sd >= 0.0 && self.vhvv_noise_sd >= 0.0) {
            return bad("lai_noise_sd", "noise must be non-negative".into());
        }
        if !(self.gap_mean_run >= 1.0) {
            return bad("gap_mean_run", "must be at least 1".into());
        }
        let max_p = self.gap_mean_run / (self.gap_mean_run + 1.0);
        if !(0.0..=max_p).contains(&self.gap_prob) || self.gap_prob >= 1.0 {
            return bad(
                "gap_prob",
                format!("must lie in [0, {max_p}] for mean run {}", self.gap_mean_run),
            );
        }
        if !(0.0..1.0).contains(&self.vhvv_dropout) {
            return bad("vhvv_dropout", "must lie in [0, 1)".into());
        }
        if !(self.t_jitter >= 0.0 && self.k_jitter >= 0.0 && self.k_jitter < 1.0 && self.lai_max_jitter >= 0.0) {
            return bad("t_jitter", "jitter must be non-negative (k_jitter < 1)".into());
        }
        if let Some((a, b)) = self.forced_gap {
            if !(a <= b) {
                return bad("forced_gap", "start after end".into());
            }
            if a <= self.season_start && b >= self.season_end {
                return bad("forced_gap", "would mask every LAI value".into());
            }
        }
        Ok(())
    }

    /// Acquisition grid `season_start, season_start + step, ...` up to
    /// `season_end` inclusive.
    pub fn times(&self) -> Vec<f64> {
        let n = ((self.season_end - self.season_start) / self.step_days + 1e-9).floor() as usize + 1;
        (0..n).map(|i| self.season_start + i as f64 * self.step_days).collect()
    }
}

fn fmt_window(w: Option<(f64, f64)>) -> String {
    match w {
        Some((a, b)) => format!("{a},{b}"),
        None => "none".into(),
    }
}

fn parse_window(key: &str, s: &str) -> Result<Option<(f64, f64)>> {
    if s.eq_ignore_ascii_case("none") {
        return Ok(None);
    }
    let parsed = s
        .split_once(',')
        .and_then(|(a, b)| Some((a.trim().parse().ok()?, b.trim().parse().ok()?)));
    parsed.map(Some).ok_or_else(|| Error::Config {
        key: key.into(),
        msg: format!("expected `start,end` or `none`, got {s:?}"),
    })
}

impl KvConfig for PhenologyConfig {
    const KEYS: &'static [&'static str] = &[
        "season_start",
        "season_end",
        "step_days",
        "lai_min",
        "lai_max",
        "t1",
        "t2",
        "k1",
        "k2",
        "alpha",
        "beta",
        "gamma",
        "saturation_lai",
        "lai_noise_sd",
        "vhvv_noise_sd",
        "gap_prob",
        "gap_mean_run",
        "gap_window",
        "forced_gap",
        "vhvv_dropout",
        "t_jitter",
        "k_jitter",
        "lai_max_jitter",
        "seed",
    ];

    fn apply(&mut self, m: &KvMap) -> Result<()> {
        m.update("season_start", &mut self.season_start)?;
        m.update("season_end", &mut self.season_end)?;
        m.update("step_days", &mut self.step_days)?;
        m.update("lai_min", &mut self.lai_min)?;
        m.update("lai_max", &mut self.lai_max)?;
        m.update("t1", &mut self.t1)?;
        m.update("t2", &mut self.t2)?;
        m.update("k1", &mut self.k1)?;
        m.update("k2", &mut self.k2)?;
        m.update("alpha", &mut self.alpha)?;
        m.update("beta", &mut self.beta)?;
        m.update("gamma", &mut self.gamma)?;
        m.update("saturation_lai", &mut self.saturation_lai)?;
        m.update("lai_noise_sd", &mut self.lai_noise_sd)?;
        m.update("vhvv_noise_sd", &mut self.vhvv_noise_sd)?;
        m.update("gap_prob", &mut self.gap_prob)?;
        m.update("gap_mean_run", &mut self.gap_mean_run)?;
        if let Some(s) = m.get_str("gap_window") {
            self.gap_window = parse_window("gap_window", s)?.ok_or_else(|| Error::Config {
                key: "gap_window".into(),
                msg: "cannot be none".into(),
            })?;
        }
        if let Some(s) = m.get_str("forced_gap") {
            self.forced_gap = parse_window("forced_gap", s)?;
        }
        m.update("vhvv_dropout", &mut self.vhvv_dropout)?;
        m.update("t_jitter", &mut self.t_jitter)?;
        m.update("k_jitter", &mut self.k_jitter)?;
        m.update("lai_max_jitter", &mut self.lai_max_jitter)?;
        m.update("seed", &mut self.seed)?;
        self.validate()
    }

    fn to_kv(&self) -> KvMap {
        let mut m = KvMap::new();
        m.insert("season_start", self.season_start);
        m.insert("season_end", self.season_end);
        m.insert("step_days", self.step_days);
        m.insert("lai_min", self.lai_min);
        m.insert("lai_max", self.lai_max);
        m.insert("t1", self.t1);
        m.insert("t2", self.t2);
        m.insert("k1", self.k1);
        m.insert("k2", self.k2);
        m.insert("alpha", self.alpha);
        m.insert("beta", self.beta);
        m.insert("gamma", self.gamma);
        m.insert("saturation_lai", self.saturation_lai);
        m.insert("lai_noise_sd", self.lai_noise_sd);
        m.insert("vhvv_noise_sd", self.vhvv_noise_sd);
        m.insert("gap_prob", self.gap_prob);
        m.insert("gap_mean_run", self.gap_mean_run);
        m.insert("gap_window", fmt_window(Some(self.gap_window)));
        m.insert("forced_gap", fmt_window(self.forced_gap));
        m.insert("vhvv_dropout", self.vhvv_dropout);
        m.insert("t_jitter", self.t_jitter);
        m.insert("k_jitter", self.k_jitter);
        m.insert("lai_max_jitter", self.lai_max_jitter);
        m.insert("seed", self.seed);
        m
    }
}

/// `lai_min + (lai_max − lai_min)·[σ(k1(t − t1)) − σ(k2(t − t2))]`
pub fn gen_lai_curve(config: &PhenologyConfig, times: &[f64]) -> Result<Vec<f64>> {
    config.validate()?;
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::param("times must be strictly increasing"));
    }
    let amp = config.lai_max - config.lai_min;
    Ok(times
        .iter()
        .map(|&t| config.lai_min + amp * (sigmoid(config.k1 * (t - config.t1)) - sigmoid(config.k2 * (t - config.t2))))
        .collect())
}

/// Noiseless VH/VV response `alpha + beta·(1 − exp(−lai/gamma))`, with LAI
/// capped at `saturation_lai`.
pub fn vhvv_response(config: &PhenologyConfig, lai: f64) -> f64 {
    let l = lai.min(config.saturation_lai);
    config.alpha + config.beta * (1.0 - (-l / config.gamma).exp())
}

/// VH/VV (dB) for each LAI value plus Gaussian noise of `vhvv_noise_sd`.
pub fn gen_vhvv_curve<R: Rng + ?Sized>(config: &PhenologyConfig, lai: &[f64], rng: &mut R) -> Result<Vec<f64>> {
    if !(config.gamma > 0.0) {
        return Err(Error::param("gamma must be positive"));
    }
    if lai.iter().any(|&l| !(l >= 0.0)) {
        return Err(Error::param("LAI values must be non-negative"));
    }
    let noise = Normal::new(0.0, config.vhvv_noise_sd).map_err(|e| Error::param(e.to_string()))?;
    Ok(lai
        .iter()
        .map(|&l| {
            let v = vhvv_response(config, l);
            if config.vhvv_noise_sd > 0.0 {
                v + noise.sample(rng)
            } else {
                v
            }
        })
        .collect())
}

/// Masks LAI of a fully observed record with the cloud model: a two-state
/// Markov chain (stationary cloudy probability `gap_prob`, mean run
/// `gap_mean_run`) active inside `gap_window`, plus the optional forced gap.
/// Where LAI survives, VH/VV is dropped independently with probability
/// `vhvv_dropout`. Draws that would hide every LAI value are repeated.
pub fn apply_gaps<R: Rng + ?Sized>(
    record: &TimeSeriesRecord,
    config: &PhenologyConfig,
    rng: &mut R,
) -> Result<TimeSeriesRecord> {
    config.validate()?;
    if record.lai_mask().iter().any(|&m| !m) || record.vhvv_mask().iter().any(|&m| !m) {
        return Err(Error::param("apply_gaps needs a fully observed record"));
    }
    let times = record.times();
    let forced = |t: f64| config.forced_gap.is_some_and(|(a, b)| t >= a && t <= b);
    if times.iter().all(|&t| forced(t)) {
        return Err(Error::param("forced gap covers the whole record"));
    }
    let (p, run) = (config.gap_prob, config.gap_mean_run);
    let stay = 1.0 - 1.0 / run;
    let enter = if p > 0.0 { p / (run * (1.0 - p)) } else { 0.0 };
    let (w0, w1) = config.gap_window;
    for _ in 0..GAP_RETRIES {
        let mut cloudy = rng.random::<f64>() < p;
        let mut lai_mask = Vec::with_capacity(times.len());
        for &t in times {
            let in_window = t >= w0 && t <= w1;
            lai_mask.push(!(forced(t) || (in_window && cloudy)));
            if in_window {
                let u = rng.random::<f64>();
                cloudy = if cloudy { u < stay } else { u < enter };
            }
        }
        if !lai_mask.iter().any(|&m| m) {
            continue;
        }
        let vhvv_mask: Vec<bool> = lai_mask
            .iter()
            .map(|&l| !(l && config.vhvv_dropout > 0.0 && rng.random::<f64>() < config.vhvv_dropout))
            .collect();
        let gapped = record.with_lai(record.lai().to_vec(), lai_mask)?;
        return gapped.with_vhvv(record.vhvv().to_vec(), vhvv_mask);
    }
    Err(Error::param(format!(
        "gap model masked every LAI value in {GAP_RETRIES} draws"
    )))
}

/// Each pixel and time drawn as `truth × Gamma(shape = looks, mean 1)`.
pub fn gen_speckle_stack(
    width: usize,
    height: usize,
    truth: &[f32],
    times: Vec<f64>,
    looks: f64,
    seed: u64,
) -> Result<RasterStack> {
    if truth.len() != width * height {
        return Err(Error::dims(format!(
            "truth has {} pixels, grid {width}×{height}",
            truth.len()
        )));
    }
    if truth.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::param("truth intensities must be positive"));
    }
    if !(looks > 0.0) {
        return Err(Error::param("looks must be positive"));
    }
    let gamma = Gamma::new(looks, 1.0 / looks).map_err(|e| Error::param(e.to_string()))?;
    let mut data = Vec::with_capacity(truth.len() * times.len());
    for band in 0..times.len() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(band as u64 + 1);
        data.extend(truth.iter().map(|&v| (f64::from(v) * gamma.sample(&mut rng)) as f32));
    }
    RasterStack::new(width, height, times, data)
}

/// Gapped corpus with its fully observed ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub gapped: Vec<TimeSeriesRecord>,
    pub truth: Vec<TimeSeriesRecord>,
}

fn jittered(config: &PhenologyConfig, rng: &mut ChaCha8Rng) -> PhenologyConfig {
    let mut u = |half: f64| {
        if half > 0.0 {
            rng.random_range(-half..=half)
        } else {
            0.0
        }
    };
    let mut c = config.clone();
    c.t1 += u(config.t_jitter);
    c.t2 += u(config.t_jitter);
    c.k1 *= 1.0 + u(config.k_jitter);
    c.k2 *= 1.0 + u(config.k_jitter);
    c.lai_max += u(config.lai_max_jitter);
    if c.t2 <= c.t1 {
        c.t2 = c.t1 + 1.0;
    }
    c.lai_max = c.lai_max.max(c.lai_min + 0.1);
    c
}

/// One series: jittered phenology, noise, gaps. Deterministic in
/// `(config.seed, index)`.
pub fn gen_series(config: &PhenologyConfig, index: usize) -> Result<(TimeSeriesRecord, TimeSeriesRecord)> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(index as u64 + 1);
    let cfg = jittered(config, &mut rng);
    let times = config.times();
    let clean = gen_lai_curve(&cfg, &times)?;
    let vhvv = gen_vhvv_curve(&cfg, &clean, &mut rng)?;
    let lai: Vec<f64> = if cfg.lai_noise_sd > 0.0 {
        let noise = Normal::new(0.0, cfg.lai_noise_sd).map_err(|e| Error::param(e.to_string()))?;
        clean.iter().map(|&l| (l + noise.sample(&mut rng)).max(0.0)).collect()
    } else {
        clean
    };
    let truth = TimeSeriesRecord::fully_observed(format!("s{index:04}"), times, lai, vhvv)?;
    let gapped = apply_gaps(&truth, &cfg, &mut rng)?;
    Ok((gapped, truth))
}

/// `n_series` series generated in parallel from per-series streams.
pub fn gen_dataset(config: &PhenologyConfig, n_series: usize) -> Result<Dataset> {
    config.validate()?;
    if n_series == 0 {
        return Err(Error::param("n_series must be at least 1"));
    }
    let pairs = (0..n_series)
        .into_par_iter()
        .map(|i| gen_series(config, i))
        .collect::<Result<Vec<_>>>()?;
    let (gapped, truth) = pairs.into_iter().unzip();
    Ok(Dataset { gapped, truth })
}
