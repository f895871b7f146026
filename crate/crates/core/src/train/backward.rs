//! Exact gradients of the masked half-MSE loss by backpropagation through
//! time. Missing inputs (sentinel zeros plus mask bits) are ordinary graph
//! values; only the loss is masked.

use rand::Rng;

use super::loss::{half_mse_loss, LossValue};
use crate::error::{Error, Result};
use crate::net::math::axpy;
use crate::net::{forward_cached, DirCache, ForwardCache, LstmCellParams, NetworkParams, ParamBlock};

/// Gradient slices of one cell, in layout order.
struct CellGrads<'a> {
    w_ih: &'a mut [f64],
    w_hh: &'a mut [f64],
    b_ih: &'a mut [f64],
    b_hh: &'a mut [f64],
}

fn cell_grads<'a>(params: &NetworkParams, grad: &'a mut [f64], first: ParamBlock, last: ParamBlock) -> CellGrads<'a> {
    let layout = params.layout();
    let start = layout.range(first).unwrap().start;
    let end = layout.range(last).unwrap().end;
    let (ni, nh) = (params.dims().input, params.dims().hidden);
    let slice = &mut grad[start..end];
    let (w_ih, rest) = slice.split_at_mut(4 * nh * ni);
    let (w_hh, rest) = rest.split_at_mut(4 * nh * nh);
    let (b_ih, b_hh) = rest.split_at_mut(4 * nh);
    CellGrads { w_ih, w_hh, b_ih, b_hh }
}

/// Backpropagates `dh_out` (T × H, loss gradient w.r.t. each step's hidden
/// output) through one scan direction.
fn bptt(
    cell: &LstmCellParams<'_>,
    cache: &DirCache,
    xs: &[f64],
    dh_out: &[f64],
    steps: usize,
    reverse: bool,
    g: CellGrads<'_>,
) {
    let (ni, nh) = (cell.input, cell.hidden);
    let mut dh_next = vec![0.0; nh];
    let mut dc_next = vec![0.0; nh];
    let mut dpre = vec![0.0; 4 * nh];
    // walk the scan order backwards
    for n in (0..steps).rev() {
        let t = if reverse { steps - 1 - n } else { n };
        let prev = match (reverse, n) {
            (_, 0) => None,
            (false, _) => Some(t - 1),
            (true, _) => Some(t + 1),
        };
        let gates = &cache.gates[t * 4 * nh..(t + 1) * 4 * nh];
        let tanh_c = &cache.tanh_c[t * nh..(t + 1) * nh];
        for k in 0..nh {
            let (i, f, gg, o) = (gates[k], gates[nh + k], gates[2 * nh + k], gates[3 * nh + k]);
            let c_prev = prev.map_or(0.0, |p| cache.c[p * nh + k]);
            let dh = dh_out[t * nh + k] + dh_next[k];
            let tc = tanh_c[k];
            let d_o = dh * tc;
            let dc = dc_next[k] + dh * o * (1.0 - tc * tc);
            dpre[k] = dc * gg * i * (1.0 - i);
            dpre[nh + k] = dc * c_prev * f * (1.0 - f);
            dpre[2 * nh + k] = dc * i * (1.0 - gg * gg);
            dpre[3 * nh + k] = d_o * o * (1.0 - o);
            dc_next[k] = dc * f;
        }
        let x = &xs[t * ni..(t + 1) * ni];
        for r in 0..4 * nh {
            let d = dpre[r];
            g.b_ih[r] += d;
            g.b_hh[r] += d;
            axpy(d, x, &mut g.w_ih[r * ni..(r + 1) * ni]);
        }
        dh_next.fill(0.0);
        if let Some(p) = prev {
            let h_prev = &cache.h[p * nh..(p + 1) * nh];
            for r in 0..4 * nh {
                let d = dpre[r];
                axpy(d, h_prev, &mut g.w_hh[r * nh..(r + 1) * nh]);
                axpy(d, &cell.w_hh[r * nh..(r + 1) * nh], &mut dh_next);
            }
        }
    }
}

pub(crate) fn gradient_from_cache(
    params: &NetworkParams,
    sequence: &[f64],
    target: &[f64],
    mask: &[bool],
    cache: &ForwardCache,
) -> Result<(LossValue, Vec<f64>)> {
    let dims = params.dims();
    let (nh, nd, no) = (dims.hidden, dims.dense, dims.output);
    let steps = cache.steps;
    if target.len() != steps * no || mask.len() != steps * no {
        return Err(Error::dims(format!(
            "target/mask need {} entries ({steps} steps × {no}), got {} / {}",
            steps * no,
            target.len(),
            mask.len()
        )));
    }
    let loss = half_mse_loss(&cache.output, target, mask, no)?;

    let layout = params.layout();
    let mut grad = vec![0.0; params.len()];
    let dirs = params.arch().directions();
    let width = dirs * nh;
    let w1 = params.block(ParamBlock::DenseW).unwrap();
    let w2 = params.block(ParamBlock::OutW).unwrap();
    let r_w1 = layout.range(ParamBlock::DenseW).unwrap();
    let r_b1 = layout.range(ParamBlock::DenseB).unwrap();
    let r_w2 = layout.range(ParamBlock::OutW).unwrap();
    let r_b2 = layout.range(ParamBlock::OutB).unwrap();

    let inv_t = 1.0 / steps as f64;
    let mut dh_fwd = vec![0.0; steps * nh];
    let mut dh_bwd = vec![0.0; if dirs == 2 { steps * nh } else { 0 }];
    let mut hcat = vec![0.0; width];
    let mut dropped = vec![0.0; nd];
    let mut dd = vec![0.0; nd];
    let mut dhcat = vec![0.0; width];
    for t in 0..steps {
        let dy: Vec<f64> = (0..no)
            .map(|j| {
                let idx = t * no + j;
                if mask[idx] {
                    (cache.output[idx] - target[idx]) * inv_t
                } else {
                    0.0
                }
            })
            .collect();
        if dy.iter().all(|&d| d == 0.0) {
            continue;
        }
        let act = &cache.dense_act[t * nd..(t + 1) * nd];
        let scale = cache.drop_scale.as_ref().map(|s| &s[t * nd..(t + 1) * nd]);
        match scale {
            Some(s) => {
                for k in 0..nd {
                    dropped[k] = act[k] * s[k];
                }
            }
            None => dropped.copy_from_slice(act),
        }
        dd.fill(0.0);
        for (j, &d) in dy.iter().enumerate() {
            grad[r_b2.start + j] += d;
            axpy(d, &dropped, &mut grad[r_w2.start + j * nd..r_w2.start + (j + 1) * nd]);
            axpy(d, &w2[j * nd..(j + 1) * nd], &mut dd);
        }
        cache.hidden_concat(t, nh, &mut hcat);
        dhcat.fill(0.0);
        for k in 0..nd {
            let da = match scale {
                Some(s) => dd[k] * s[k],
                None => dd[k],
            };
            let dz = da * act[k] * (1.0 - act[k]);
            if dz == 0.0 {
                continue;
            }
            grad[r_b1.start + k] += dz;
            axpy(
                dz,
                &hcat,
                &mut grad[r_w1.start + k * width..r_w1.start + (k + 1) * width],
            );
            axpy(dz, &w1[k * width..(k + 1) * width], &mut dhcat);
        }
        dh_fwd[t * nh..(t + 1) * nh].copy_from_slice(&dhcat[..nh]);
        if dirs == 2 {
            dh_bwd[t * nh..(t + 1) * nh].copy_from_slice(&dhcat[nh..]);
        }
    }

    bptt(
        &params.forward_cell(),
        &cache.fwd,
        sequence,
        &dh_fwd,
        steps,
        false,
        cell_grads(params, &mut grad, ParamBlock::FwdWih, ParamBlock::FwdBhh),
    );
    if let (Some(cell), Some(bcache)) = (params.backward_cell(), cache.bwd.as_ref()) {
        bptt(
            &cell,
            bcache,
            sequence,
            &dh_bwd,
            steps,
            true,
            cell_grads(params, &mut grad, ParamBlock::BwdWih, ParamBlock::BwdBhh),
        );
    }
    Ok((loss, grad))
}

/// Loss and its gradient with respect to every parameter (flat, same
/// indexing as [`NetworkParams::values`]). `sequence` is T × input,
/// `target`/`mask` are T × output. When `training` is set the dropout mask is
/// drawn from `rng`, so a fixed seed pins it.
pub fn backward<R: Rng + ?Sized>(
    params: &NetworkParams,
    sequence: &[f64],
    target: &[f64],
    mask: &[bool],
    training: bool,
    rng: &mut R,
) -> Result<(LossValue, Vec<f64>)> {
    let cache = forward_cached(params, sequence, training, rng)?;
    gradient_from_cache(params, sequence, target, mask, &cache)
}
