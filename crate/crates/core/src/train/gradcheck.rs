//! Central finite-difference verification of the analytic gradient.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::backward::gradient_from_cache;
use super::loss::half_mse_loss;
use crate::error::{Error, Result};
use crate::net::{forward_cached, NetworkParams, ParamBlock};

/// Lower bound on the denominator of the relative error. Components whose
/// analytic and numeric values are both below it are compared on an
/// absolute scale, where finite-difference round-off (about 1e-11 for an
/// O(1) loss at step 1e-5) would otherwise dominate.
pub const REL_FLOOR: f64 = 1e-4;

/// `|a - n| / max(|a|, |n|, REL_FLOOR)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(REL_FLOOR);
    (analytic - numeric).abs() / denom
}

/// One loss evaluation problem: a T × input sequence with T × output
/// targets and target mask.
#[derive(Debug, Clone, PartialEq)]
pub struct GradProblem {
    pub sequence: Vec<f64>,
    pub target: Vec<f64>,
    pub mask: Vec<bool>,
    /// Dropout seed; `None` runs in inference mode.
    pub dropout_seed: Option<u64>,
}

impl GradProblem {
    /// Inputs uniform in [-1, 1], standard normal targets, roughly 70% of
    /// targets observed (the first always is).
    pub fn random(seed: u64, steps: usize, input: usize, output: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sequence = (0..steps * input).map(|_| rng.random_range(-1.0..=1.0)).collect();
        let target = (0..steps * output)
            .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
            .collect();
        let mut mask: Vec<bool> = (0..steps * output).map(|_| rng.random::<f64>() < 0.7).collect();
        if let Some(m) = mask.first_mut() {
            *m = true;
        }
        Self {
            sequence,
            target,
            mask,
            dropout_seed: None,
        }
    }

    fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.dropout_seed.unwrap_or(0))
    }

    fn training(&self) -> bool {
        self.dropout_seed.is_some()
    }

    /// Loss at `params`; the dropout mask is redrawn from the same seed on
    /// every call, so it is pinned across evaluations.
    pub fn loss(&self, params: &NetworkParams) -> Result<f64> {
        let cache = forward_cached(params, &self.sequence, self.training(), &mut self.rng())?;
        Ok(half_mse_loss(&cache.output, &self.target, &self.mask, params.dims().output)?.value)
    }

    pub fn analytic_gradient(&self, params: &NetworkParams) -> Result<Vec<f64>> {
        let cache = forward_cached(params, &self.sequence, self.training(), &mut self.rng())?;
        Ok(gradient_from_cache(params, &self.sequence, &self.target, &self.mask, &cache)?.1)
    }

    /// Central differences `(L(θ+h e_i) − L(θ−h e_i)) / 2h` for every index.
    pub fn numeric_gradient(&self, params: &NetworkParams, step: f64) -> Result<Vec<f64>> {
        if !(step > 0.0) {
            return Err(Error::param(format!(
                "finite-difference step must be positive, got {step}"
            )));
        }
        let mut work = params.clone();
        let mut out = vec![0.0; params.len()];
        for (i, slot) in out.iter_mut().enumerate() {
            let orig = work.values()[i];
            work.values_mut()[i] = orig + step;
            let up = self.loss(&work)?;
            work.values_mut()[i] = orig - step;
            let down = self.loss(&work)?;
            work.values_mut()[i] = orig;
            *slot = (up - down) / (2.0 * step);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockReport {
    pub block: ParamBlock,
    pub count: usize,
    pub worst_rel_error: f64,
    /// Flat index of the worst entry.
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub blocks: Vec<BlockReport>,
    pub tolerance: f64,
    pub worst_rel_error: f64,
    pub passed: bool,
}

impl GradCheckReport {
    pub fn block(&self, block: ParamBlock) -> Option<&BlockReport> {
        self.blocks.iter().find(|b| b.block == block)
    }
}

/// Per-block comparison of two gradients laid out like `params`.
pub fn compare_gradients(
    params: &NetworkParams,
    analytic: &[f64],
    numeric: &[f64],
    tolerance: f64,
) -> Result<GradCheckReport> {
    if analytic.len() != params.len() || numeric.len() != params.len() {
        return Err(Error::dims(format!(
            "gradients of length {} / {} for {} parameters",
            analytic.len(),
            numeric.len(),
            params.len()
        )));
    }
    let mut blocks = Vec::new();
    for (block, range) in params.layout().blocks() {
        let mut worst = (0.0f64, range.start);
        for i in range.clone() {
            let e = relative_error(analytic[i], numeric[i]);
            // NaN must register as a failure
            if e.is_nan() || e > worst.0 {
                worst = (if e.is_nan() { f64::INFINITY } else { e }, i);
            }
        }
        blocks.push(BlockReport {
            block: *block,
            count: range.len(),
            worst_rel_error: worst.0,
            worst_index: worst.1,
            analytic: analytic[worst.1],
            numeric: numeric[worst.1],
            passed: worst.0 < tolerance,
        });
    }
    let worst_rel_error = blocks.iter().map(|b| b.worst_rel_error).fold(0.0, f64::max);
    Ok(GradCheckReport {
        passed: blocks.iter().all(|b| b.passed),
        blocks,
        tolerance,
        worst_rel_error,
    })
}

/// Checks every parameter of `params` on `problem`.
pub fn gradient_check(
    params: &NetworkParams,
    problem: &GradProblem,
    step: f64,
    tolerance: f64,
) -> Result<GradCheckReport> {
    let analytic = problem.analytic_gradient(params)?;
    let numeric = problem.numeric_gradient(params, step)?;
    compare_gradients(params, &analytic, &numeric, tolerance)
}
