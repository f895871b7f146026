//! Multitemporal SAR preprocessing: boxcar multilooking, the temporal ratio
//! (Quegan) speckle filter with its variance estimate, and the VH/VV ratio in
//! dB.
//!
//! Intensities are stored as `f32` in linear power units; all arithmetic is
//! carried out in `f64`.

mod io;

pub use io::{read_raster, write_raster};

use crate::error::{Error, Result};

/// `bands` co-registered images over one grid, band-sequential, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterStack {
    width: usize,
    height: usize,
    times: Vec<f64>,
    data: Vec<f32>,
}

impl RasterStack {
    pub fn new(width: usize, height: usize, times: Vec<f64>, data: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::param(format!(
                "raster dimensions must be positive, got {width}x{height}"
            )));
        }
        if times.is_empty() {
            return Err(Error::param("raster stack needs at least one band"));
        }
        let expected = width * height * times.len();
        if data.len() != expected {
            return Err(Error::dims(format!(
                "{} bands of {width}x{height} need {expected} values, got {}",
                times.len(),
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            times,
            data,
        })
    }

    /// Stack built from per-band closures `f(band, row, col)`.
    pub fn from_fn(
        width: usize,
        height: usize,
        times: Vec<f64>,
        f: impl Fn(usize, usize, usize) -> f32,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height * times.len());
        for b in 0..times.len() {
            for r in 0..height {
                for c in 0..width {
                    data.push(f(b, r, c));
                }
            }
        }
        Self::new(width, height, times, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bands(&self) -> usize {
        self.times.len()
    }

    pub fn pixels(&self) -> usize {
        self.width * self.height
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn band(&self, b: usize) -> &[f32] {
        let n = self.pixels();
        &self.data[b * n..(b + 1) * n]
    }

    pub fn get(&self, band: usize, row: usize, col: usize) -> f32 {
        self.data[band * self.pixels() + row * self.width + col]
    }

    fn same_shape(&self, other: &RasterStack) -> bool {
        self.width == other.width && self.height == other.height && self.times == other.times
    }

    fn check_linear(&self) -> Result<()> {
        match self.data.iter().position(|v| !(*v >= 0.0) || !v.is_finite()) {
            Some(i) => Err(Error::param(format!(
                "intensity {} at flat index {i} is not a finite non-negative linear value",
                self.data[i]
            ))),
            None => Ok(()),
        }
    }
}

/// Row/column span of a `window`-wide box around `i`, clipped to `[0, n)`.
/// Odd windows are centered; even windows extend one further after `i`.
fn span(i: usize, window: usize, n: usize) -> (usize, usize) {
    let before = (window - 1) / 2;
    let after = window / 2;
    (i.saturating_sub(before), (i + after).min(n - 1))
}

/// Edge-clipped boxcar mean of one band, in `f64`.
fn boxcar(band: &[f32], width: usize, height: usize, window: usize) -> Vec<f64> {
    // separable: horizontal sums, then vertical sums of those, then divide by
    // the clipped pixel count
    let mut rows = vec![0.0f64; band.len()];
    for r in 0..height {
        let line = &band[r * width..(r + 1) * width];
        for c in 0..width {
            let (lo, hi) = span(c, window, width);
            rows[r * width + c] = line[lo..=hi].iter().map(|&v| f64::from(v)).sum();
        }
    }
    let mut out = vec![0.0f64; band.len()];
    for r in 0..height {
        let (rlo, rhi) = span(r, window, height);
        for c in 0..width {
            let (clo, chi) = span(c, window, width);
            let count = ((rhi - rlo + 1) * (chi - clo + 1)) as f64;
            let sum: f64 = (rlo..=rhi).map(|rr| rows[rr * width + c]).sum();
            out[r * width + c] = sum / count;
        }
    }
    out
}

fn check_window(stack: &RasterStack, window: usize) -> Result<()> {
    if window == 0 || window > stack.width.min(stack.height) {
        return Err(Error::param(format!(
            "multilook window {window} must be in 1..={}",
            stack.width.min(stack.height)
        )));
    }
    Ok(())
}

/// Per-band boxcar mean over a `window`×`window` neighborhood, shrinking at
/// the image borders.
pub fn multilook(stack: &RasterStack, window: usize) -> Result<RasterStack> {
    check_window(stack, window)?;
    if window == 1 {
        return Ok(stack.clone());
    }
    let mut data = Vec::with_capacity(stack.data.len());
    for b in 0..stack.bands() {
        data.extend(
            boxcar(stack.band(b), stack.width, stack.height, window)
                .into_iter()
                .map(|v| v as f32),
        );
    }
    RasterStack::new(stack.width, stack.height, stack.times.clone(), data)
}

/// Leading factor of the variance estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum VarianceMode {
    /// Multilooked denoised value to the first power.
    #[default]
    Linear,
    /// Multilooked denoised value squared.
    Squared,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QueganParams {
    pub window: usize,
    /// Equivalent number of looks of the input imagery.
    pub looks: f64,
    pub variance_mode: VarianceMode,
}

impl Default for QueganParams {
    fn default() -> Self {
        Self {
            window: 14,
            looks: 4.0,
            variance_mode: VarianceMode::Linear,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterOutput {
    pub denoised: RasterStack,
    pub variance: RasterStack,
    /// Per pixel; false where some band's local mean is zero. Invalid pixels
    /// carry 0.0 in both outputs.
    pub valid: Vec<bool>,
    pub looks: f64,
    /// Nominal pixel count of the multilook window (`window²`).
    pub window_pixels: usize,
}

/// Multitemporal ratio filter:
///
/// `J_t(s) = μ_t(s) / M · Σ_t' I_t'(s) / μ_t'(s)`, with `μ` the boxcar mean,
///
/// and its variance `m_t(s)^k · (M + N − 1) / (M·N·L)` where `m` is the boxcar
/// mean of `J`, `N = window²`, `L = looks` and `k` is 1 or 2 per
/// [`VarianceMode`].
pub fn quegan_filter(stack: &RasterStack, params: &QueganParams) -> Result<FilterOutput> {
    if !(params.looks > 0.0) || !params.looks.is_finite() {
        return Err(Error::param(format!("looks must be positive, got {}", params.looks)));
    }
    check_window(stack, params.window)?;
    stack.check_linear()?;

    let m = stack.bands();
    let n_pix = stack.pixels();
    let means: Vec<Vec<f64>> = (0..m)
        .map(|b| {
            if params.window == 1 {
                stack.band(b).iter().map(|&v| f64::from(v)).collect()
            } else {
                boxcar(stack.band(b), stack.width, stack.height, params.window)
            }
        })
        .collect();

    let valid: Vec<bool> = (0..n_pix).map(|s| means.iter().all(|mu| mu[s] > 0.0)).collect();
    let mut ratio_mean = vec![0.0f64; n_pix];
    for (b, mu) in means.iter().enumerate() {
        let band = stack.band(b);
        for s in (0..n_pix).filter(|&s| valid[s]) {
            ratio_mean[s] += f64::from(band[s]) / mu[s];
        }
    }
    for r in ratio_mean.iter_mut() {
        *r /= m as f64;
    }

    let mut denoised = Vec::with_capacity(stack.data.len());
    for mu in &means {
        denoised.extend((0..n_pix).map(|s| if valid[s] { (mu[s] * ratio_mean[s]) as f32 } else { 0.0 }));
    }
    let denoised = RasterStack::new(stack.width, stack.height, stack.times.clone(), denoised)?;

    let n = params.window * params.window;
    let factor = (m + n - 1) as f64 / (m as f64 * n as f64 * params.looks);
    let mut variance = Vec::with_capacity(stack.data.len());
    for b in 0..m {
        let local = if params.window == 1 {
            denoised.band(b).iter().map(|&v| f64::from(v)).collect()
        } else {
            boxcar(denoised.band(b), stack.width, stack.height, params.window)
        };
        variance.extend(local.into_iter().enumerate().map(|(s, j)| {
            if !valid[s] {
                return 0.0;
            }
            let lead = match params.variance_mode {
                VarianceMode::Linear => j,
                VarianceMode::Squared => j * j,
            };
            (lead * factor) as f32
        }));
    }
    let variance = RasterStack::new(stack.width, stack.height, stack.times.clone(), variance)?;

    Ok(FilterOutput {
        denoised,
        variance,
        valid,
        looks: params.looks,
        window_pixels: n,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RatioOutput {
    /// `10·log10(vh / vv)`; 0.0 where invalid.
    pub ratio_db: RasterStack,
    /// Per band and pixel (same layout as the data); false where either
    /// intensity is zero.
    pub valid: Vec<bool>,
}

/// Dual-polarization ratio `10·log10(vh/vv)` per band and pixel.
pub fn dualpol_ratio_db(vh: &RasterStack, vv: &RasterStack) -> Result<RatioOutput> {
    if !vh.same_shape(vv) {
        return Err(Error::Alignment(format!(
            "vh {}x{}x{} vs vv {}x{}x{} (or differing times)",
            vh.width,
            vh.height,
            vh.bands(),
            vv.width,
            vv.height,
            vv.bands()
        )));
    }
    vh.check_linear()?;
    vv.check_linear()?;
    let mut valid = Vec::with_capacity(vh.data.len());
    let data = vh
        .data
        .iter()
        .zip(&vv.data)
        .map(|(&h, &v)| {
            let ok = h > 0.0 && v > 0.0;
            valid.push(ok);
            if ok {
                (10.0 * (f64::from(h) / f64::from(v)).log10()) as f32
            } else {
                0.0
            }
        })
        .collect();
    Ok(RatioOutput {
        ratio_db: RasterStack::new(vh.width, vh.height, vh.times.clone(), data)?,
        valid,
    })
}

/// Per-band values of one pixel with the stack timestamps.
pub fn extract_series(stack: &RasterStack, row: usize, col: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if row >= stack.height || col >= stack.width {
        return Err(Error::param(format!(
            "pixel ({row}, {col}) outside {}x{} raster",
            stack.height, stack.width
        )));
    }
    let values = (0..stack.bands()).map(|b| f64::from(stack.get(b, row, col))).collect();
    Ok((stack.times.clone(), values))
}

/// Mean over pixels of the per-pixel temporal sample variance.
pub fn mean_temporal_variance(stack: &RasterStack) -> f64 {
    let m = stack.bands();
    if m < 2 {
        return 0.0;
    }
    let n_pix = stack.pixels();
    let mut total = 0.0;
    for s in 0..n_pix {
        let vals = (0..m).map(|b| f64::from(stack.data[b * n_pix + s]));
        let mean = vals.clone().sum::<f64>() / m as f64;
        total += vals.map(|v| (v - mean) * (v - mean)).sum::<f64>() / (m - 1) as f64;
    }
    total / n_pix as f64
}

/// Spatial mean of each band.
pub fn band_means(stack: &RasterStack) -> Vec<f64> {
    (0..stack.bands())
        .map(|b| stack.band(b).iter().map(|&v| f64::from(v)).sum::<f64>() / stack.pixels() as f64)
        .collect()
}
