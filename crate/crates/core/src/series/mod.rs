//! Two-channel irregular time series with per-channel observation masks.
//!
//! Masked entries are stored as `0.0`. That is a storage convention only:
//! every computation here consults the masks.

mod csv;

pub use self::csv::{read_csv, read_csv_from, write_csv, write_csv_to};

use crate::error::{Error, Result};

/// Which value channel of a [`TimeSeriesRecord`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channel {
    Lai,
    Vhvv,
}

impl Channel {
    pub fn name(self) -> &'static str {
        match self {
            Channel::Lai => "lai",
            Channel::Vhvv => "vhvv",
        }
    }
}

/// One geolocated series: acquisition times (days since season start), the
/// sparse target channel (LAI) and the dense companion channel (VH/VV, dB).
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesRecord {
    series_id: String,
    times: Vec<f64>,
    lai: Vec<f64>,
    lai_mask: Vec<bool>,
    vhvv: Vec<f64>,
    vhvv_mask: Vec<bool>,
}

impl TimeSeriesRecord {
    /// Builds a record, checking every invariant. Values at masked positions
    /// are replaced by the `0.0` sentinel.
    pub fn new(
        series_id: impl Into<String>,
        times: Vec<f64>,
        mut lai: Vec<f64>,
        lai_mask: Vec<bool>,
        mut vhvv: Vec<f64>,
        vhvv_mask: Vec<bool>,
    ) -> Result<Self> {
        let series_id = series_id.into();
        let bad = |reason: String| Error::InvalidRecord {
            series_id: series_id.clone(),
            reason,
        };
        let n = times.len();
        if n == 0 {
            return Err(bad("empty record".into()));
        }
        if lai.len() != n || lai_mask.len() != n || vhvv.len() != n || vhvv_mask.len() != n {
            return Err(bad(format!(
                "length mismatch: times {n}, lai {}, lai_mask {}, vhvv {}, vhvv_mask {}",
                lai.len(),
                lai_mask.len(),
                vhvv.len(),
                vhvv_mask.len()
            )));
        }
        if let Some(i) = times.iter().position(|t| !t.is_finite()) {
            return Err(bad(format!("non-finite time at index {i}")));
        }
        if let Some(i) = times.windows(2).position(|w| w[1] <= w[0]) {
            return Err(bad(format!("times not strictly increasing at index {}", i + 1)));
        }
        for i in 0..n {
            if !lai_mask[i] && !vhvv_mask[i] {
                return Err(bad(format!("no observation at index {i}")));
            }
            if (lai_mask[i] && !lai[i].is_finite()) || (vhvv_mask[i] && !vhvv[i].is_finite()) {
                return Err(bad(format!("non-finite observed value at index {i}")));
            }
            if !lai_mask[i] {
                lai[i] = 0.0;
            }
            if !vhvv_mask[i] {
                vhvv[i] = 0.0;
            }
        }
        Ok(Self {
            series_id,
            times,
            lai,
            lai_mask,
            vhvv,
            vhvv_mask,
        })
    }

    /// Record with both channels observed everywhere.
    pub fn fully_observed(
        series_id: impl Into<String>,
        times: Vec<f64>,
        lai: Vec<f64>,
        vhvv: Vec<f64>,
    ) -> Result<Self> {
        let n = times.len();
        Self::new(series_id, times, lai, vec![true; n], vhvv, vec![true; n])
    }

    pub fn series_id(&self) -> &str {
        &self.series_id
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn lai(&self) -> &[f64] {
        &self.lai
    }

    pub fn lai_mask(&self) -> &[bool] {
        &self.lai_mask
    }

    pub fn vhvv(&self) -> &[f64] {
        &self.vhvv
    }

    pub fn vhvv_mask(&self) -> &[bool] {
        &self.vhvv_mask
    }

    pub fn values(&self, channel: Channel) -> &[f64] {
        match channel {
            Channel::Lai => &self.lai,
            Channel::Vhvv => &self.vhvv,
        }
    }

    pub fn mask(&self, channel: Channel) -> &[bool] {
        match channel {
            Channel::Lai => &self.lai_mask,
            Channel::Vhvv => &self.vhvv_mask,
        }
    }

    pub fn observed_count(&self, channel: Channel) -> usize {
        self.mask(channel).iter().filter(|&&m| m).count()
    }

    /// Contiguous sub-record `[start, start + len)`.
    pub fn window(&self, start: usize, len: usize) -> Result<Self> {
        if len == 0 || start + len > self.len() {
            return Err(Error::param(format!(
                "window [{start}, {}) outside record of length {}",
                start + len,
                self.len()
            )));
        }
        let r = start..start + len;
        Ok(Self {
            series_id: self.series_id.clone(),
            times: self.times[r.clone()].to_vec(),
            lai: self.lai[r.clone()].to_vec(),
            lai_mask: self.lai_mask[r.clone()].to_vec(),
            vhvv: self.vhvv[r.clone()].to_vec(),
            vhvv_mask: self.vhvv_mask[r].to_vec(),
        })
    }

    /// Same record with the LAI channel replaced.
    pub fn with_lai(&self, lai: Vec<f64>, lai_mask: Vec<bool>) -> Result<Self> {
        Self::new(
            self.series_id.clone(),
            self.times.clone(),
            lai,
            lai_mask,
            self.vhvv.clone(),
            self.vhvv_mask.clone(),
        )
    }

    /// Same record with the VH/VV channel replaced.
    pub fn with_vhvv(&self, vhvv: Vec<f64>, vhvv_mask: Vec<bool>) -> Result<Self> {
        Self::new(
            self.series_id.clone(),
            self.times.clone(),
            self.lai.clone(),
            self.lai_mask.clone(),
            vhvv,
            vhvv_mask,
        )
    }

    fn map_observed(&self, lai: impl Fn(f64) -> f64, vhvv: impl Fn(f64) -> f64) -> Self {
        let apply = |vals: &[f64], mask: &[bool], f: &dyn Fn(f64) -> f64| -> Vec<f64> {
            vals.iter()
                .zip(mask)
                .map(|(&v, &m)| if m { f(v) } else { 0.0 })
                .collect()
        };
        Self {
            series_id: self.series_id.clone(),
            times: self.times.clone(),
            lai: apply(&self.lai, &self.lai_mask, &lai),
            lai_mask: self.lai_mask.clone(),
            vhvv: apply(&self.vhvv, &self.vhvv_mask, &vhvv),
            vhvv_mask: self.vhvv_mask.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelStats {
    pub mean: f64,
    /// Standard deviation (population convention).
    pub std: f64,
}

impl ChannelStats {
    pub const IDENTITY: ChannelStats = ChannelStats { mean: 0.0, std: 1.0 };

    fn check(&self, channel: Channel) -> Result<()> {
        if !(self.std > 0.0) || !self.std.is_finite() || !self.mean.is_finite() {
            return Err(Error::DegenerateChannel {
                channel: channel.name(),
                std: self.std,
            });
        }
        Ok(())
    }

    pub fn normalize(&self, v: f64) -> f64 {
        (v - self.mean) / self.std
    }

    pub fn denormalize(&self, z: f64) -> f64 {
        z * self.std + self.mean
    }
}

/// Per-channel normalization statistics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormStats {
    pub lai: ChannelStats,
    pub vhvv: ChannelStats,
}

impl NormStats {
    pub const IDENTITY: NormStats = NormStats {
        lai: ChannelStats::IDENTITY,
        vhvv: ChannelStats::IDENTITY,
    };

    pub fn channel(&self, channel: Channel) -> ChannelStats {
        match channel {
            Channel::Lai => self.lai,
            Channel::Vhvv => self.vhvv,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.lai.check(Channel::Lai)?;
        self.vhvv.check(Channel::Vhvv)
    }
}

/// Mean and population standard deviation over observed entries, pooled
/// across all records.
pub fn compute_stats(records: &[TimeSeriesRecord]) -> Result<NormStats> {
    let channel_stats = |channel: Channel| -> Result<ChannelStats> {
        let observed = || {
            records.iter().flat_map(|r| {
                r.values(channel)
                    .iter()
                    .zip(r.mask(channel))
                    .filter(|(_, &m)| m)
                    .map(|(&v, _)| v)
            })
        };
        let count = observed().count();
        if count == 0 {
            return Err(Error::EmptyChannel {
                channel: channel.name(),
            });
        }
        let mean = observed().sum::<f64>() / count as f64;
        let var = observed().map(|v| (v - mean) * (v - mean)).sum::<f64>() / count as f64;
        Ok(ChannelStats { mean, std: var.sqrt() })
    };
    Ok(NormStats {
        lai: channel_stats(Channel::Lai)?,
        vhvv: channel_stats(Channel::Vhvv)?,
    })
}

/// Maps observed entries to `(v - mean) / std`; masks and sentinels are left
/// alone.
pub fn normalize(record: &TimeSeriesRecord, stats: &NormStats) -> Result<TimeSeriesRecord> {
    stats.validate()?;
    Ok(record.map_observed(|v| stats.lai.normalize(v), |v| stats.vhvv.normalize(v)))
}

pub fn denormalize(record: &TimeSeriesRecord, stats: &NormStats) -> Result<TimeSeriesRecord> {
    stats.validate()?;
    Ok(record.map_observed(|z| stats.lai.denormalize(z), |z| stats.vhvv.denormalize(z)))
}

/// Gaussian kernel weights for an odd `window`, `sigma = window / 5`,
/// normalized to sum to one.
pub fn gaussian_kernel(window: usize) -> Result<Vec<f64>> {
    if window == 0 || window.is_multiple_of(2) {
        return Err(Error::param(format!(
            "smoothing window must be odd and positive, got {window}"
        )));
    }
    let half = (window / 2) as isize;
    let sigma = window as f64 / 5.0;
    let w: Vec<f64> = (-half..=half)
        .map(|k| (-((k * k) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = w.iter().sum();
    Ok(w.into_iter().map(|x| x / total).collect())
}

/// Mask-aware Gaussian smoothing by sample index. Each observed entry becomes
/// the weighted mean of the observed entries inside its window, with the
/// kernel renormalized over whatever is available; masked entries are
/// returned untouched.
pub fn gaussian_smooth(values: &[f64], mask: &[bool], window: usize) -> Result<Vec<f64>> {
    if values.len() != mask.len() {
        return Err(Error::dims(format!(
            "values ({}) and mask ({}) differ in length",
            values.len(),
            mask.len()
        )));
    }
    let kernel = gaussian_kernel(window)?;
    if window == 1 {
        return Ok(values.to_vec());
    }
    let half = window / 2;
    let n = values.len();
    let mut out = values.to_vec();
    for i in (0..n).filter(|&i| mask[i]) {
        let lo = i.saturating_sub(half);
        let hi = (i + half).min(n - 1);
        // weighted mean of offsets from the centre value, so constant
        // neighbourhoods come back bit-exact
        let mut acc = 0.0;
        let mut wsum = 0.0;
        for j in (lo..=hi).filter(|&j| mask[j]) {
            let w = kernel[j + half - i];
            acc += w * (values[j] - values[i]);
            wsum += w;
        }
        out[i] = values[i] + acc / wsum;
    }
    Ok(out)
}

/// Piecewise-linear interpolation through the observed source points.
/// Queries outside the observed hull take the nearest observed value.
pub fn interpolate_to_times(
    src_times: &[f64],
    src_values: &[f64],
    src_mask: &[bool],
    query_times: &[f64],
) -> Result<Vec<f64>> {
    if src_times.len() != src_values.len() || src_times.len() != src_mask.len() {
        return Err(Error::dims("source times, values and mask differ in length"));
    }
    let (ts, vs): (Vec<f64>, Vec<f64>) = src_times
        .iter()
        .zip(src_values)
        .zip(src_mask)
        .filter(|(_, &m)| m)
        .map(|((&t, &v), _)| (t, v))
        .unzip();
    if ts.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "interpolation needs two observed points, got {}",
            ts.len()
        )));
    }
    if ts.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::param("observed source times must be strictly increasing"));
    }
    let last = ts.len() - 1;
    Ok(query_times
        .iter()
        .map(|&q| {
            if q <= ts[0] {
                return vs[0];
            }
            if q >= ts[last] {
                return vs[last];
            }
            // first index with t > q; q lies in [ts[k-1], ts[k])
            let k = ts.partition_point(|&t| t <= q);
            let (t0, t1) = (ts[k - 1], ts[k]);
            let frac = (q - t0) / (t1 - t0);
            vs[k - 1] + frac * (vs[k] - vs[k - 1])
        })
        .collect())
}
