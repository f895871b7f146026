//! (Bi)LSTM sequence regressor.
//!
//! Per time step the network computes
//!
//! ```text
//! h_fwd[t]  = LSTM_fwd(x[t], state[t-1])        (scan t = 0..T)
//! h_bwd[t]  = LSTM_bwd(x[t], state[t+1])        (scan t = T-1..0, BiLSTM only)
//! a[t]      = sigmoid(W1 [h_fwd[t]; h_bwd[t]] + b1)
//! y[t]      = W2 dropout(a[t]) + b2
//! ```
//!
//! All parameters live in one flat `Vec<f64>`; [`ParamBlock`] names the
//! slices. Gate rows are ordered input, forget, cell, output.

mod checkpoint;
pub(crate) mod math;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, Checkpoint};

use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use math::{dot, sigmoid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Arch {
    /// Forward cell only.
    Lstm,
    /// Forward and backward cells.
    BiLstm,
}

impl Arch {
    pub fn directions(self) -> usize {
        match self {
            Arch::Lstm => 1,
            Arch::BiLstm => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Arch::Lstm => "lstm",
            Arch::BiLstm => "bilstm",
        }
    }
}

impl std::str::FromStr for Arch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lstm" => Ok(Arch::Lstm),
            "bilstm" => Ok(Arch::BiLstm),
            other => Err(Error::param(format!("unknown architecture {other:?}"))),
        }
    }
}

impl std::fmt::Display for Arch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Layer widths.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub input: usize,
    pub hidden: usize,
    pub dense: usize,
    pub output: usize,
}

impl Dims {
    pub fn new(input: usize, hidden: usize, dense: usize, output: usize) -> Self {
        Self {
            input,
            hidden,
            dense,
            output,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParamBlock {
    FwdWih,
    FwdWhh,
    FwdBih,
    FwdBhh,
    BwdWih,
    BwdWhh,
    BwdBih,
    BwdBhh,
    DenseW,
    DenseB,
    OutW,
    OutB,
}

impl ParamBlock {
    pub const ALL: [ParamBlock; 12] = [
        ParamBlock::FwdWih,
        ParamBlock::FwdWhh,
        ParamBlock::FwdBih,
        ParamBlock::FwdBhh,
        ParamBlock::BwdWih,
        ParamBlock::BwdWhh,
        ParamBlock::BwdBih,
        ParamBlock::BwdBhh,
        ParamBlock::DenseW,
        ParamBlock::DenseB,
        ParamBlock::OutW,
        ParamBlock::OutB,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ParamBlock::FwdWih => "forward.w_ih",
            ParamBlock::FwdWhh => "forward.w_hh",
            ParamBlock::FwdBih => "forward.b_ih",
            ParamBlock::FwdBhh => "forward.b_hh",
            ParamBlock::BwdWih => "backward.w_ih",
            ParamBlock::BwdWhh => "backward.w_hh",
            ParamBlock::BwdBih => "backward.b_ih",
            ParamBlock::BwdBhh => "backward.b_hh",
            ParamBlock::DenseW => "dense.w",
            ParamBlock::DenseB => "dense.b",
            ParamBlock::OutW => "out.w",
            ParamBlock::OutB => "out.b",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|b| b.name() == name)
    }

    fn is_backward(self) -> bool {
        matches!(
            self,
            ParamBlock::BwdWih | ParamBlock::BwdWhh | ParamBlock::BwdBih | ParamBlock::BwdBhh
        )
    }

    /// (rows, cols) of the block; biases are `rows × 1`.
    pub fn shape(self, arch: Arch, dims: Dims) -> (usize, usize) {
        let gates = 4 * dims.hidden;
        match self {
            ParamBlock::FwdWih | ParamBlock::BwdWih => (gates, dims.input),
            ParamBlock::FwdWhh | ParamBlock::BwdWhh => (gates, dims.hidden),
            ParamBlock::FwdBih | ParamBlock::FwdBhh | ParamBlock::BwdBih | ParamBlock::BwdBhh => (gates, 1),
            ParamBlock::DenseW => (dims.dense, arch.directions() * dims.hidden),
            ParamBlock::DenseB => (dims.dense, 1),
            ParamBlock::OutW => (dims.output, dims.dense),
            ParamBlock::OutB => (dims.output, 1),
        }
    }

    /// Uniform init bound `1/sqrt(fan_in)` for weights, `None` for biases.
    fn init_bound(self, arch: Arch, dims: Dims) -> Option<f64> {
        match self {
            ParamBlock::FwdWih
            | ParamBlock::BwdWih
            | ParamBlock::FwdWhh
            | ParamBlock::BwdWhh
            | ParamBlock::DenseW
            | ParamBlock::OutW => Some(1.0 / (self.shape(arch, dims).1 as f64).sqrt()),
            _ => None,
        }
    }
}

/// Offsets of every block present for an architecture.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    blocks: Vec<(ParamBlock, Range<usize>)>,
    total: usize,
}

impl Layout {
    pub fn new(arch: Arch, dims: Dims) -> Self {
        let mut blocks = Vec::new();
        let mut offset = 0;
        for b in ParamBlock::ALL {
            if b.is_backward() && arch == Arch::Lstm {
                continue;
            }
            let (r, c) = b.shape(arch, dims);
            blocks.push((b, offset..offset + r * c));
            offset += r * c;
        }
        Self { blocks, total: offset }
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn blocks(&self) -> &[(ParamBlock, Range<usize>)] {
        &self.blocks
    }

    pub fn range(&self, block: ParamBlock) -> Option<Range<usize>> {
        self.blocks.iter().find(|(b, _)| *b == block).map(|(_, r)| r.clone())
    }

    /// Block containing a flat index.
    pub fn block_of(&self, index: usize) -> Option<ParamBlock> {
        self.blocks.iter().find(|(_, r)| r.contains(&index)).map(|(b, _)| *b)
    }
}

/// Borrowed view of one LSTM cell's parameters.
#[derive(Debug, Clone, Copy)]
pub struct LstmCellParams<'a> {
    pub w_ih: &'a [f64],
    pub w_hh: &'a [f64],
    pub b_ih: &'a [f64],
    pub b_hh: &'a [f64],
    pub input: usize,
    pub hidden: usize,
}

/// Hidden and cell vectors of one LSTM.
#[derive(Debug, Clone, PartialEq)]
pub struct CellState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl CellState {
    pub fn zeros(hidden: usize) -> Self {
        Self {
            h: vec![0.0; hidden],
            c: vec![0.0; hidden],
        }
    }
}

/// Every weight and bias of the regressor.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    arch: Arch,
    dims: Dims,
    dropout_p: f64,
    layout: Layout,
    values: Vec<f64>,
}

impl NetworkParams {
    /// All-zero parameters.
    pub fn zeros(arch: Arch, dims: Dims, dropout_p: f64) -> Result<Self> {
        if dims.input == 0 || dims.hidden == 0 || dims.dense == 0 || dims.output == 0 {
            return Err(Error::param(format!("layer sizes must be positive: {dims:?}")));
        }
        if !(0.0..1.0).contains(&dropout_p) {
            return Err(Error::param(format!("dropout probability {dropout_p} outside [0, 1)")));
        }
        let layout = Layout::new(arch, dims);
        let values = vec![0.0; layout.total()];
        Ok(Self {
            arch,
            dims,
            dropout_p,
            layout,
            values,
        })
    }

    pub fn from_values(arch: Arch, dims: Dims, dropout_p: f64, values: Vec<f64>) -> Result<Self> {
        let mut p = Self::zeros(arch, dims, dropout_p)?;
        if values.len() != p.values.len() {
            return Err(Error::dims(format!(
                "{arch} {dims:?} has {} parameters, got {}",
                p.values.len(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("parameters must be finite"));
        }
        p.values = values;
        Ok(p)
    }

    pub fn arch(&self) -> Arch {
        self.arch
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn dropout_p(&self) -> f64 {
        self.dropout_p
    }

    pub fn set_dropout_p(&mut self, p: f64) -> Result<()> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::param(format!("dropout probability {p} outside [0, 1)")));
        }
        self.dropout_p = p;
        Ok(())
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Flat parameter vector; every parameter appears exactly once.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn block(&self, block: ParamBlock) -> Option<&[f64]> {
        self.layout.range(block).map(|r| &self.values[r])
    }

    pub fn block_mut(&mut self, block: ParamBlock) -> Option<&mut [f64]> {
        self.layout.range(block).map(move |r| &mut self.values[r])
    }

    fn cell(&self, blocks: [ParamBlock; 4]) -> Option<LstmCellParams<'_>> {
        Some(LstmCellParams {
            w_ih: self.block(blocks[0])?,
            w_hh: self.block(blocks[1])?,
            b_ih: self.block(blocks[2])?,
            b_hh: self.block(blocks[3])?,
            input: self.dims.input,
            hidden: self.dims.hidden,
        })
    }

    pub fn forward_cell(&self) -> LstmCellParams<'_> {
        self.cell([
            ParamBlock::FwdWih,
            ParamBlock::FwdWhh,
            ParamBlock::FwdBih,
            ParamBlock::FwdBhh,
        ])
        .expect("forward cell always present")
    }

    /// `None` for [`Arch::Lstm`].
    pub fn backward_cell(&self) -> Option<LstmCellParams<'_>> {
        self.cell([
            ParamBlock::BwdWih,
            ParamBlock::BwdWhh,
            ParamBlock::BwdBih,
            ParamBlock::BwdBhh,
        ])
    }

    fn dense(&self) -> (&[f64], &[f64], &[f64], &[f64]) {
        (
            self.block(ParamBlock::DenseW).unwrap(),
            self.block(ParamBlock::DenseB).unwrap(),
            self.block(ParamBlock::OutW).unwrap(),
            self.block(ParamBlock::OutB).unwrap(),
        )
    }
}

/// Deterministic initialization: weights uniform in ±1/√fan_in, biases zero
/// except the forget-gate input bias, which starts at 1.
///
/// Each block draws from its own ChaCha stream, so the forward cell (and the
/// output layer) are identical for [`Arch::Lstm`] and [`Arch::BiLstm`] under
/// the same seed.
pub fn init_params(seed: u64, arch: Arch, dims: Dims, dropout_p: f64) -> Result<NetworkParams> {
    let mut p = NetworkParams::zeros(arch, dims, dropout_p)?;
    let h = dims.hidden;
    for (k, block) in ParamBlock::ALL.into_iter().enumerate() {
        let Some(range) = p.layout.range(block) else {
            continue;
        };
        let slice = &mut p.values[range];
        match block.init_bound(arch, dims) {
            Some(bound) => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(k as u64 + 1);
                for v in slice.iter_mut() {
                    *v = rng.random_range(-bound..=bound);
                }
            }
            None => {
                if matches!(block, ParamBlock::FwdBih | ParamBlock::BwdBih) {
                    slice[h..2 * h].fill(1.0);
                }
            }
        }
    }
    Ok(p)
}

/// One LSTM step into caller-provided buffers: `gates` (4H, activated),
/// `c`, `tanh_c`, `h` (H each).
#[allow(clippy::too_many_arguments)]
pub(crate) fn cell_step(
    cell: &LstmCellParams<'_>,
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
    gates: &mut [f64],
    c: &mut [f64],
    tanh_c: &mut [f64],
    h: &mut [f64],
) {
    let (ni, nh) = (cell.input, cell.hidden);
    for r in 0..4 * nh {
        gates[r] = cell.b_ih[r]
            + cell.b_hh[r]
            + dot(&cell.w_ih[r * ni..(r + 1) * ni], x)
            + dot(&cell.w_hh[r * nh..(r + 1) * nh], h_prev);
    }
    for k in 0..nh {
        let i = sigmoid(gates[k]);
        let f = sigmoid(gates[nh + k]);
        let g = gates[2 * nh + k].tanh();
        let o = sigmoid(gates[3 * nh + k]);
        gates[k] = i;
        gates[nh + k] = f;
        gates[2 * nh + k] = g;
        gates[3 * nh + k] = o;
        c[k] = f * c_prev[k] + i * g;
        tanh_c[k] = c[k].tanh();
        h[k] = o * tanh_c[k];
    }
}

/// One step of the LSTM recurrence.
pub fn lstm_cell_forward(x: &[f64], state: &CellState, cell: &LstmCellParams<'_>) -> Result<CellState> {
    let nh = cell.hidden;
    if x.len() != cell.input {
        return Err(Error::dims(format!(
            "input has {} features, cell expects {}",
            x.len(),
            cell.input
        )));
    }
    if state.h.len() != nh || state.c.len() != nh {
        return Err(Error::dims(format!(
            "state width {} / {}, cell hidden {nh}",
            state.h.len(),
            state.c.len()
        )));
    }
    let mut gates = vec![0.0; 4 * nh];
    let mut next = CellState::zeros(nh);
    let mut tanh_c = vec![0.0; nh];
    cell_step(
        cell,
        x,
        &state.h,
        &state.c,
        &mut gates,
        &mut next.c,
        &mut tanh_c,
        &mut next.h,
    );
    Ok(next)
}

/// Activations of one scan direction, indexed by time step (not scan order).
#[derive(Debug, Clone)]
pub(crate) struct DirCache {
    pub gates: Vec<f64>,
    pub c: Vec<f64>,
    pub tanh_c: Vec<f64>,
    pub h: Vec<f64>,
}

impl DirCache {
    fn run(cell: &LstmCellParams<'_>, xs: &[f64], steps: usize, reverse: bool) -> Self {
        let (ni, nh) = (cell.input, cell.hidden);
        let mut cache = DirCache {
            gates: vec![0.0; steps * 4 * nh],
            c: vec![0.0; steps * nh],
            tanh_c: vec![0.0; steps * nh],
            h: vec![0.0; steps * nh],
        };
        let zeros = vec![0.0; nh];
        let mut prev: Option<usize> = None;
        for n in 0..steps {
            let t = if reverse { steps - 1 - n } else { n };
            let (h_prev, c_prev) = match prev {
                Some(p) => (
                    cache.h[p * nh..(p + 1) * nh].to_vec(),
                    cache.c[p * nh..(p + 1) * nh].to_vec(),
                ),
                None => (zeros.clone(), zeros.clone()),
            };
            let hs = t * nh..(t + 1) * nh;
            cell_step(
                cell,
                &xs[t * ni..(t + 1) * ni],
                &h_prev,
                &c_prev,
                &mut cache.gates[t * 4 * nh..(t + 1) * 4 * nh],
                &mut cache.c[hs.clone()],
                &mut cache.tanh_c[hs.clone()],
                &mut cache.h[hs],
            );
            prev = Some(t);
        }
        cache
    }
}

/// Everything the backward pass needs from one forward evaluation.
#[derive(Debug, Clone)]
pub(crate) struct ForwardCache {
    pub steps: usize,
    pub fwd: DirCache,
    pub bwd: Option<DirCache>,
    /// Dense-layer activations (T × dense).
    pub dense_act: Vec<f64>,
    /// Dropout multipliers (0 or 1/(1-p)), `None` when dropout was inert.
    pub drop_scale: Option<Vec<f64>>,
    /// Predictions (T × output).
    pub output: Vec<f64>,
}

impl ForwardCache {
    /// Concatenated hidden state `[h_fwd[t]; h_bwd[t]]` into `buf`.
    pub fn hidden_concat(&self, t: usize, nh: usize, buf: &mut [f64]) {
        buf[..nh].copy_from_slice(&self.fwd.h[t * nh..(t + 1) * nh]);
        if let Some(b) = &self.bwd {
            buf[nh..2 * nh].copy_from_slice(&b.h[t * nh..(t + 1) * nh]);
        }
    }
}

pub(crate) fn check_sequence(params: &NetworkParams, sequence: &[f64]) -> Result<usize> {
    let ni = params.dims.input;
    if sequence.is_empty() {
        return Err(Error::dims("empty sequence"));
    }
    if !sequence.len().is_multiple_of(ni) {
        return Err(Error::dims(format!(
            "sequence of {} values is not a multiple of the input width {ni}",
            sequence.len()
        )));
    }
    Ok(sequence.len() / ni)
}

/// Full forward pass. `sequence` is T × input, row-major. Dropout is only
/// sampled when `training` is set and the rate is non-zero.
pub(crate) fn forward_cached<R: Rng + ?Sized>(
    params: &NetworkParams,
    sequence: &[f64],
    training: bool,
    rng: &mut R,
) -> Result<ForwardCache> {
    let steps = check_sequence(params, sequence)?;
    if sequence.iter().any(|v| !v.is_finite()) {
        return Err(Error::param("sequence contains non-finite values"));
    }
    let Dims {
        hidden: nh,
        dense: nd,
        output: no,
        ..
    } = params.dims;
    let dirs = params.arch.directions();
    let fwd = DirCache::run(&params.forward_cell(), sequence, steps, false);
    let bwd = params
        .backward_cell()
        .map(|cell| DirCache::run(&cell, sequence, steps, true));

    let (w1, b1, w2, b2) = params.dense();
    let width = dirs * nh;
    let p = params.dropout_p;
    let use_dropout = training && p > 0.0;
    let keep_scale = 1.0 / (1.0 - p);

    let mut cache = ForwardCache {
        steps,
        fwd,
        bwd,
        dense_act: vec![0.0; steps * nd],
        drop_scale: use_dropout.then(|| vec![0.0; steps * nd]),
        output: vec![0.0; steps * no],
    };
    let mut hcat = vec![0.0; width];
    let mut dropped = vec![0.0; nd];
    for t in 0..steps {
        cache.hidden_concat(t, nh, &mut hcat);
        let act = &mut cache.dense_act[t * nd..(t + 1) * nd];
        for k in 0..nd {
            act[k] = sigmoid(b1[k] + dot(&w1[k * width..(k + 1) * width], &hcat));
        }
        match cache.drop_scale.as_mut() {
            Some(scale) => {
                for k in 0..nd {
                    let s = if rng.random::<f64>() < p { 0.0 } else { keep_scale };
                    scale[t * nd + k] = s;
                    dropped[k] = act[k] * s;
                }
            }
            None => dropped.copy_from_slice(act),
        }
        for j in 0..no {
            cache.output[t * no + j] = b2[j] + dot(&w2[j * nd..(j + 1) * nd], &dropped);
        }
    }
    Ok(cache)
}

/// Predictions (T × output) for either architecture.
pub fn forward<R: Rng + ?Sized>(
    params: &NetworkParams,
    sequence: &[f64],
    training: bool,
    rng: &mut R,
) -> Result<Vec<f64>> {
    Ok(forward_cached(params, sequence, training, rng)?.output)
}

/// Inference-mode predictions (dropout inert).
pub fn predict(params: &NetworkParams, sequence: &[f64]) -> Result<Vec<f64>> {
    let mut unused = ChaCha8Rng::seed_from_u64(0);
    forward(params, sequence, false, &mut unused)
}

/// Bidirectional forward pass; errors on unidirectional parameters.
pub fn bilstm_forward<R: Rng + ?Sized>(
    sequence: &[f64],
    params: &NetworkParams,
    training: bool,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if params.arch != Arch::BiLstm {
        return Err(Error::param("bilstm_forward needs bidirectional parameters"));
    }
    forward(params, sequence, training, rng)
}

/// Unidirectional forward pass; errors on bidirectional parameters.
pub fn lstm_forward<R: Rng + ?Sized>(
    sequence: &[f64],
    params: &NetworkParams,
    training: bool,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if params.arch != Arch::Lstm {
        return Err(Error::param("lstm_forward needs unidirectional parameters"));
    }
    forward(params, sequence, training, rng)
}
