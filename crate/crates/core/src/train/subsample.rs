//! Random training windows and input hiding.

use rand::Rng;

use super::{FEATURES, LAI, LAI_MASK, VHVV_MASK};
use crate::error::{Error, Result};
use crate::series::{Channel, TimeSeriesRecord};

/// Draws before giving up on finding a window with an observed LAI value.
pub const MAX_RETRIES: usize = 32;

/// Contiguous window with length uniform in `[min_len, min(max_len, len)]`
/// and a uniform start. Windows without any observed LAI are redrawn up to
/// [`MAX_RETRIES`] times, after which [`Error::NoObservation`] is returned.
pub fn subsample<R: Rng + ?Sized>(
    record: &TimeSeriesRecord,
    rng: &mut R,
    min_len: usize,
    max_len: usize,
) -> Result<TimeSeriesRecord> {
    if min_len == 0 || min_len > max_len {
        return Err(Error::param(format!("bad window bounds [{min_len}, {max_len}]")));
    }
    let n = record.len();
    if n < min_len {
        return Err(Error::TooShort { len: n, min_len });
    }
    let upper = max_len.min(n);
    for _ in 0..MAX_RETRIES {
        let len = rng.random_range(min_len..=upper);
        let start = rng.random_range(0..=n - len);
        if record.lai_mask()[start..start + len].iter().any(|&m| m) {
            return record.window(start, len);
        }
    }
    Err(Error::NoObservation)
}

/// Hides observed LAI inputs in contiguous runs: a two-state Markov chain
/// with stationary hidden probability `rate` and mean run length `mean_run`
/// walks over the steps, and each observed LAI value it covers is zeroed
/// together with its mask bit. Steps whose VH/VV is missing are never hidden,
/// so every step still carries at least one observation. Returns the number
/// of hidden steps.
pub fn hide_lai_inputs<R: Rng + ?Sized>(features: &mut [f64], rng: &mut R, rate: f64, mean_run: f64) -> usize {
    if rate <= 0.0 {
        return 0;
    }
    let rate = rate.min(0.999);
    let mean_run = mean_run.max(1.0);
    let stay = 1.0 - 1.0 / mean_run;
    let enter = (rate / (mean_run * (1.0 - rate))).min(1.0);
    let mut hidden = rng.random::<f64>() < rate;
    let mut count = 0;
    for row in features.chunks_exact_mut(FEATURES) {
        if hidden && row[LAI_MASK] == 1.0 && row[VHVV_MASK] == 1.0 {
            row[LAI] = 0.0;
            row[LAI_MASK] = 0.0;
            count += 1;
        }
        let u = rng.random::<f64>();
        hidden = if hidden { u < stay } else { u < enter };
    }
    count
}

/// Observed LAI count, used to skip records that cannot contribute a loss.
pub(crate) fn has_lai(record: &TimeSeriesRecord) -> bool {
    record.observed_count(Channel::Lai) > 0
}
